# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel for the relativistic diffusion.

Twin of godelsim._kernel_py: same function signatures, same state layout,
and the same floating-point operation sequence (libm scalar calls), so both
backends produce bit-identical paths from identical noise streams.

State layout (float64[10]):
    [a, zdot, b, gamma, Y, t, z, gamma_integral, frac, level]

Record layout (float64[12]):
    [s, t, x, y, z, a, b, xdot, zdot, gamma, gamma_integral, Y]

Status codes returned by run_path: 0 done, 1 noise exhausted, 2 aborted.
"""

from libc.math cimport atan2, cos, exp, fabs, floor, ldexp, log, sin, sqrt
from libc.stdint cimport int64_t

BACKEND_NAME = "c"

STATUS_DONE = 0
STATUS_NEED_NOISE = 1
STATUS_ABORT = 2

cdef double _SQRT2 = sqrt(2.0)
cdef double _TWOPI = 2.0 * 3.14159265358979323846
cdef double _EPS_DEG = 1e-10
cdef long _MAX_HALVINGS = 20
cdef long _BASE_UNITS = 1 << 20


cpdef double shell_scale(double h, double g, double rho2):
    """Root mu of the shell quadratic nearest 1, or -1.0 if none is admissible.

    Scaling (xdot, zdot, h) by mu and setting a = (mu h + g)/2 restores
    1 + xdot^2 + zdot^2 + h^2/2 = a^2. Admissible roots have mu > 0 and
    keep sign(a) = sign(g).
    """
    cdef double A2 = 0.25 * h * h + rho2
    cdef double A1 = 0.5 * h * g
    cdef double A0 = 0.25 * g * g - 1.0
    cdef double disc, r, mu1, mu2, best, bestd, an
    if A2 == 0.0:
        return 1.0 if fabs(A0) < 1e-12 else -1.0
    disc = A1 * A1 + 4.0 * A2 * A0
    if disc < 0.0:
        return -1.0
    r = sqrt(disc)
    if A1 >= 0.0:
        mu1 = (A1 + r) / (2.0 * A2)
    else:
        mu1 = (A1 - r) / (2.0 * A2)
    if mu1 == 0.0:
        mu2 = 0.0
    else:
        mu2 = -A0 / (A2 * mu1)
    best = -1.0
    bestd = 1e300
    an = 0.5 * (mu1 * h + g)
    if mu1 > 0.0 and an * g > 0.0:
        best = mu1
        bestd = fabs(mu1 - 1.0)
    an = 0.5 * (mu2 * h + g)
    if mu2 > 0.0 and an * g > 0.0 and fabs(mu2 - 1.0) < bestd:
        best = mu2
    return best


cpdef record_state(double[::1] state, double omega, double[::1] out):
    """Fill one record row from the kernel state (s is written by the caller)."""
    cdef double a = state[0]
    cdef double zd = state[1]
    cdef double b = state[2]
    cdef double gam = state[3]
    cdef double Y = state[4]
    cdef double m2 = a * a - zd * zd - 1.0
    cdef double absa, A, sing, cosg, u, xd, x, y
    if m2 < 0.0:
        m2 = 0.0
    absa = fabs(a)
    A = sqrt(m2) / absa
    sing = sin(gam)
    cosg = cos(gam)
    u = 2.0 - _SQRT2 * A * sing
    xd = a * A * cosg
    x = log(b / (a * u)) / (_SQRT2 * omega)
    y = Y - _SQRT2 * xd / (omega * b)
    out[1] = state[5]
    out[2] = x
    out[3] = y
    out[4] = state[6]
    out[5] = a
    out[6] = b
    out[7] = xd
    out[8] = zd
    out[9] = gam
    out[10] = state[7]
    out[11] = Y


def run_path(double[::1] state, double[:, ::1] rec, double[:, ::1] noise,
             int64_t[::1] counters, double ds, long stride, long n_steps,
             long i_start, long noise_start, double omega, double sigma):
    """Advance the diffusion from base step i_start toward n_steps.

    Consumes one noise row (3 standard normals) per attempt, rejected or
    not. Writes a record row at every stride-th completed base step (row
    index i // stride). counters accumulates [rejections, chart-2 steps].

    Returns (completed_base_steps, next_noise_index, status).
    """
    cdef double a = state[0]
    cdef double zd = state[1]
    cdef double b = state[2]
    cdef double gam = state[3]
    cdef double Y = state[4]
    cdef double t = state[5]
    cdef double z = state[6]
    cdef double Ig = state[7]
    cdef long frac = <long> state[8]
    cdef long level = <long> state[9]

    cdef double sig2 = sigma * sigma
    cdef long i = i_start
    cdef long idx = noise_start
    cdef long n_noise = noise.shape[0]
    cdef int status = STATUS_DONE

    cdef double h, n1, n2, n3, sq, ha, q, m2, absa, sa
    cdef double m, A, sing, cosg, u, au, gmid, aum
    cdef double da, dzd, db, dgam, dY, a_n, zd_n, b_n
    cdef double xd, hsh, m22, E, x, mm, q2x, qq, dxd, x_n, xd_n
    cdef double g, hh, mu, xd_p, zd_p, h_p, a_p, m2_p, gam_pred, gp
    cdef int ok
    cdef long row

    while i < n_steps:
        while frac < _BASE_UNITS:
            if idx >= n_noise:
                status = STATUS_NEED_NOISE
                break
            h = ldexp(ds, -<int> level)
            n1 = noise[idx, 0]
            n2 = noise[idx, 1]
            n3 = noise[idx, 2]
            idx += 1

            sq = sigma * sqrt(h)
            ha = 1.5 * sig2 * h
            q = sqrt(zd * zd + 1.0)
            m2 = a * a - zd * zd - 1.0
            absa = fabs(a)
            sa = 1.0 if a > 0.0 else -1.0
            ok = 0

            if m2 >= _EPS_DEG * (a * a):
                # regular branch: step the angular coordinates directly;
                # drift quadratures of gamma, t, Igamma use a midpoint
                # evaluation (noise coefficients stay at the left point)
                m = sqrt(m2)
                A = m / absa
                sing = sin(gam)
                cosg = cos(gam)
                u = 2.0 - _SQRT2 * A * sing
                au = a * u
                gmid = gam + 0.5 * omega * au * h
                aum = a * (2.0 - _SQRT2 * A * sin(gmid))

                da = ha * a + sq * ((a * zd / q) * n1 + (m / q) * n2)
                dzd = ha * zd + sq * (q * n1)
                db = ha * b + sq * (
                    (b * zd / q) * n1
                    + (sa * b * (2.0 * A - _SQRT2 * sing) / (u * q)) * n2
                    + (_SQRT2 * b * cosg / (u * absa)) * n3
                )
                dgam = omega * aum * h - sq * (n3 / m)
                dY = (-2.0 * _SQRT2 * sig2 * A * cosg / (omega * au * u * b)) * h + sq * (
                    (2.0 * _SQRT2 * q * cosg / (omega * b * absa * u)) * n2
                    + (_SQRT2 * sa / (omega * b)) * (sing - _SQRT2 * A * cosg * cosg / u) * n3
                )

                a_n = a + da
                zd_n = zd + dzd
                b_n = b + db
                if (fabs(a_n) > 1.0
                        and a_n * b_n > 0.0
                        and a_n * a_n - zd_n * zd_n - 1.0 > 0.0):
                    t += (aum - a) * h
                    z += zd * h
                    Ig += omega * aum * h
                    gam += dgam
                    Y += dY
                    a = a_n
                    zd = zd_n
                    b = b_n
                    ok = 1
            else:
                # near-degenerate branch: one step in original coordinates
                # with the xdot-conditioned noise chart, then project back
                m = sqrt(m2) if m2 > 0.0 else 0.0
                A = m / absa
                sing = sin(gam)
                cosg = cos(gam)
                u = 2.0 - _SQRT2 * A * sing
                au = a * u
                xd = a * A * cosg
                hsh = _SQRT2 * a * A * sing
                m22 = zd * zd + 0.5 * hsh * hsh
                if m22 > 0.0:
                    counters[1] += 1
                    E = b / au
                    x = log(E) / (_SQRT2 * omega)
                    mm = sqrt(m22)
                    q2x = xd * xd + 1.0
                    qq = sqrt(q2x)

                    da = ha * a + sq * ((a * xd / qq) * n1 + (mm / qq) * n2)
                    db = ha * b + sq * (
                        (b * xd / qq) * n1
                        + ((a * b - 2.0 * E * q2x) / (qq * mm)) * n2
                        + (_SQRT2 * E * zd / mm) * n3
                    )
                    dxd = ((omega / _SQRT2) * a * a * u * (u - 2.0)) * h + ha * xd + sq * (qq * n1)
                    dzd = ha * zd + sq * (
                        (zd * xd / qq) * n1
                        + (a * zd / (qq * mm)) * n2
                        + (hsh / (_SQRT2 * mm)) * n3
                    )
                    dY = (-2.0 * _SQRT2 * sig2 * E * E * xd / (omega * b * b * b)) * h + sq * (
                        (_SQRT2 / (omega * b * qq)) * n1
                        - (_SQRT2 * xd * (a * b - 2.0 * E * q2x) / (omega * b * b * qq * mm)) * n2
                        - (2.0 * E * zd * xd / (omega * b * b * mm)) * n3
                    )

                    x_n = x + xd * h
                    a_n = a + da
                    b_n = b + db
                    xd_n = xd + dxd
                    zd_n = zd + dzd
                    g = b_n * exp(-_SQRT2 * omega * x_n)
                    hh = 2.0 * a_n - g
                    mu = shell_scale(hh, g, xd_n * xd_n + zd_n * zd_n)
                    if mu > 0.0:
                        xd_p = mu * xd_n
                        zd_p = mu * zd_n
                        h_p = mu * hh
                        a_p = 0.5 * (h_p + g)
                        m2_p = xd_p * xd_p + 0.5 * h_p * h_p
                        if fabs(a_p) > 1.0 and a_p * b_n > 0.0 and m2_p > 0.0:
                            gam_pred = gam + omega * au * h
                            gp = atan2(h_p / (_SQRT2 * a_p), xd_p / a_p)
                            gam = gp + _TWOPI * floor((gam_pred - gp) / _TWOPI + 0.5)
                            t += (au - a) * h
                            z += zd * h
                            Ig += omega * au * h
                            Y += dY
                            a = a_p
                            zd = zd_p
                            b = b_n
                            ok = 1

            if ok == 1:
                frac += _BASE_UNITS >> level
            else:
                counters[0] += 1
                level += 1
                if level > _MAX_HALVINGS:
                    status = STATUS_ABORT
                    break

        if status != STATUS_DONE:
            break
        frac = 0
        level = 0
        i += 1
        if i % stride == 0:
            row = i // stride
            rec[row, 0] = i * ds
            state[0] = a
            state[1] = zd
            state[2] = b
            state[3] = gam
            state[4] = Y
            state[5] = t
            state[6] = z
            state[7] = Ig
            record_state(state, omega, rec[row])

    state[0] = a
    state[1] = zd
    state[2] = b
    state[3] = gam
    state[4] = Y
    state[5] = t
    state[6] = z
    state[7] = Ig
    state[8] = <double> frac
    state[9] = <double> level
    return i, idx, status
