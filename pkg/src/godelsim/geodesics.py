"""Exact geodesics of the rotating universe and the light-ray boundary map.

Timelike and lightlike geodesics integrate in closed form. A geodesic is
identified by its conserved quantities

    a = tdot + e^{sqrt2 w x} ydot
    b = e^{sqrt2 w x} (2 tdot + e^{sqrt2 w x} ydot)
    c = zdot
    Y = sqrt2 xdot / (w b) + y

plus a phase offset and two affine constants. The radial relation

    xdot^2 + (1/2)(2a - b e^{-sqrt2 w x})^2 = a^2 - c^2 - (1 for timelike)

confines (x, y) to a circle-like orbit of modulus k = sqrt(a^2 - c^2 - 1)
/ (sqrt2 |a|) (timelike) or kappa = sqrt((1 - c^2/a^2)/2) (lightlike), both
in [0, 1/sqrt2]. The evaluator below parameterizes that orbit by a phase
psi with a strictly positive denominator, so no formula here has a pole on
the admissible range, and the time coordinate is unwound continuously
across orbit periods.

An independent fixed-step RK4 integrator of the second-order geodesic
system serves as the oracle for the closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from godelsim.geometry import SQRT2, ModelParams, pseudo_norm

__all__ = [
    "PhaseState",
    "GeodesicParams",
    "ImpactParameter",
    "conserved_from_state",
    "params_from_constants",
    "timelike_eval",
    "lightlike_eval",
    "lightlike_params",
    "geodesic_path",
    "ode_integrate",
    "OdePath",
    "impact_parameter",
    "ray_convergence_residuals",
    "xy_period",
    "recurrence_time_gap",
    "relation8_residual",
    "ray_direction_slope",
    "measured_ray_slope",
    "path_table",
    "PATH_COLUMNS",
]

# Shell classification tolerance for inferring timelike vs lightlike states.
_KIND_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PhaseState:
    """A point of the tangent bundle: spacetime point and coordinate velocity."""

    point: np.ndarray
    velocity: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.point.shape != (4,) or self.velocity.shape != (4,):
            raise ValueError("PhaseState needs 4-component point and velocity")

    def pseudo_norm(self, mp: ModelParams) -> float:
        return pseudo_norm(self.point, self.velocity, mp)


class ImpactParameter(NamedTuple):
    """Asymptotic identity of a light ray: slope ell, scale rho, offset Y."""

    ell: float
    rho: float
    Y: float


@dataclass(frozen=True)
class GeodesicParams:
    """Conserved quantities plus phase and affine constants of one geodesic.

    kind is "timelike" or "lightlike". s0 fixes the orbit phase (psi = 0 at
    proper time s0), T0 and Z0 fix t and z. The orbit modulus k is derived,
    not stored; sign(a) carries the time orientation.
    """

    a: float
    b: float
    c: float
    Y: float
    kind: str
    s0: float = 0.0
    T0: float = 0.0
    Z0: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("timelike", "lightlike"):
            raise ValueError(f"kind must be timelike or lightlike, got {self.kind!r}")
        if self.b == 0.0:
            raise ValueError("degenerate trajectory: b = 0")
        if self.a == 0.0:
            raise ValueError("degenerate trajectory: a = 0")
        if self.a * self.b <= 0.0:
            raise ValueError(f"a and b must have the same sign, got a={self.a}, b={self.b}")
        if self._k_squared() < 0.0:
            bound = "a^2 >= 1 + c^2" if self.kind == "timelike" else "a^2 >= c^2"
            raise ValueError(f"inadmissible constants: {bound} violated")

    def _k_squared(self) -> float:
        rest = 1.0 if self.kind == "timelike" else 0.0
        k2 = (self.a**2 - rest - self.c**2) / (2.0 * self.a**2)
        # forgive roundoff at the k = 0 edge
        return 0.0 if -1e-12 < k2 < 0.0 else k2

    @property
    def k(self) -> float:
        """Orbit modulus in [0, 1/sqrt2]; 0 means constant (x, y)."""
        return math.sqrt(self._k_squared())

    @property
    def time_orientation(self) -> int:
        return 1 if self.a > 0 else -1


# ---------------------------------------------------------------------------
# closed-form evaluation
# ---------------------------------------------------------------------------


def _unwound_angle(psi, k: float, zeta: float):
    """Continuous antiderivative chi with chi'(psi) = zeta / D(psi), chi(0) = atan(k).

    On (-pi/2, pi/2) it equals atan(zeta tan(psi) + k); each half-period
    adds pi. Works on scalars or arrays.
    """
    n = np.floor(psi / math.pi + 0.5)
    rest = psi - n * math.pi
    return np.arctan2(zeta * np.sin(rest) + k * np.cos(rest), np.cos(rest)) + n * math.pi


def geodesic_path(gp: GeodesicParams, s, mp: ModelParams):
    """Evaluate a geodesic at proper times s (scalar or array).

    Returns (points, velocities) with shape (n, 4) each, rows ordered like s.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    w = mp.omega
    a, b, c, Y = gp.a, gp.b, gp.c, gp.Y
    k = gp.k
    zeta = math.sqrt(1.0 - k * k)

    psi = a * zeta * w * (s - gp.s0)
    cos2 = np.cos(2.0 * psi)
    sin2 = np.sin(2.0 * psi)
    # D is bounded in [1 - k, 1 + k], hence >= 1 - 1/sqrt2 > 0: no poles.
    D = 1.0 + k * k * cos2 + k * zeta * sin2
    exp_neg = (2.0 * a / b) * (1.0 - k * k) / D  # e^{-sqrt2 w x}
    sin_phi = (zeta * sin2 + k * (1.0 + cos2)) / D
    cos_phi = ((1.0 - k * k) * cos2 - k * zeta * sin2) / D

    x = -np.log(exp_neg) / (SQRT2 * w)
    y = Y - (2.0 * a * k / (w * b)) * cos_phi
    t = gp.T0 - a * (s - gp.s0) + (2.0 / w) * _unwound_angle(psi, k, zeta)
    z = gp.Z0 + c * (s - gp.s0)

    tdot = b * exp_neg - a
    xdot = SQRT2 * a * k * cos_phi
    ydot = exp_neg * (2.0 * a - b * exp_neg)
    zdot = np.full_like(s, c)

    points = np.stack([t, x, y, z], axis=1)
    velocities = np.stack([tdot, xdot, ydot, zdot], axis=1)
    return points, velocities


def timelike_eval(gp: GeodesicParams, s: float, mp: ModelParams) -> PhaseState:
    """Exact timelike geodesic state at proper time s."""
    if gp.kind != "timelike":
        raise ValueError("timelike_eval needs timelike parameters")
    points, velocities = geodesic_path(gp, s, mp)
    return PhaseState(points[0], velocities[0])


def lightlike_params(
    B: ImpactParameter, T0: float, Z0: float, mp: ModelParams
) -> GeodesicParams:
    """The affinely normalized (a = 1) representative geodesic of ray B.

    T0 and Z0 are the values of t and z at tau = 0; the orbit phase there
    is psi = 0 (the point where tan(w phi / 2) = kappa).
    """
    ell, rho, Y = float(B[0]), float(B[1]), float(B[2])
    if not -1.0 <= ell <= 1.0:
        raise ValueError(f"ray slope ell must lie in [-1, 1], got {ell}")
    if not rho > 0.0:
        raise ValueError(f"ray scale rho must be positive, got {rho}")
    kappa = math.sqrt(0.5 * (1.0 - ell * ell))
    # t(0) = T0_field + (2/w) chi(0) with chi(0) = atan(kappa)
    return GeodesicParams(
        a=1.0, b=rho, c=ell, Y=Y, kind="lightlike",
        s0=0.0, T0=float(T0) - (2.0 / mp.omega) * math.atan(kappa), Z0=float(Z0),
    )


def lightlike_eval(
    B: ImpactParameter, T0: float, Z0: float, tau: float, mp: ModelParams
) -> PhaseState:
    """Exact lightlike geodesic of ray B at affine time tau, with t(0) = T0, z(0) = Z0."""
    gp = lightlike_params(B, T0, Z0, mp)
    points, velocities = geodesic_path(gp, tau, mp)
    return PhaseState(points[0], velocities[0])


# ---------------------------------------------------------------------------
# constructors from states
# ---------------------------------------------------------------------------


def conserved_from_state(state: PhaseState, mp: ModelParams, kind: str | None = None) -> GeodesicParams:
    """Conserved quantities and phase constants of the geodesic through a state.

    The state is taken at proper time s = 0. kind is inferred from the
    pseudo-norm (1 timelike, 0 lightlike) unless given explicitly.
    """
    t0, x0, y0, z0 = state.point
    tdot, xdot, ydot, zdot = state.velocity
    w = mp.omega
    E = math.exp(SQRT2 * w * x0)

    a = tdot + E * ydot
    b = E * (2.0 * tdot + E * ydot)
    c = zdot
    if b == 0.0:
        raise ValueError("degenerate trajectory: b = 0")
    if a == 0.0:
        raise ValueError("degenerate trajectory: a = 0")
    Y = SQRT2 * xdot / (w * b) + y0

    if kind is None:
        pn = state.pseudo_norm(mp)
        if abs(pn - 1.0) < _KIND_TOL:
            kind = "timelike"
        elif abs(pn) < _KIND_TOL:
            kind = "lightlike"
        else:
            raise ValueError(
                f"state is neither unit timelike nor lightlike (pseudo-norm {pn})"
            )

    probe = GeodesicParams(a=a, b=b, c=c, Y=Y, kind=kind)
    k = probe.k
    zeta = math.sqrt(1.0 - k * k)

    # invert the orbit phase: h = 2ak sin(w phi), xdot = sqrt2 ak cos(w phi)
    h = 2.0 * a - b / E
    sgn = 1.0 if a > 0 else -1.0
    phi_angle = math.atan2(sgn * h, sgn * SQRT2 * xdot)  # = w * phi at s = 0
    half = 0.5 * phi_angle
    psi0 = math.atan2(math.sin(half) - k * math.cos(half), zeta * math.cos(half))

    s0 = -psi0 / (a * zeta * w)
    chi0 = float(_unwound_angle(psi0, k, zeta))
    T0 = t0 - a * s0 - (2.0 / w) * chi0
    Z0 = z0 + c * s0
    return GeodesicParams(a=a, b=b, c=c, Y=Y, kind=kind, s0=s0, T0=T0, Z0=Z0)


def params_from_constants(
    a: float,
    b: float,
    c: float,
    Y: float,
    kind: str,
    mp: ModelParams,
    t0: float = 0.0,
    z0: float = 0.0,
) -> GeodesicParams:
    """Geodesic from raw conserved quantities, started at phase psi = 0, t(0) = t0, z(0) = z0."""
    probe = GeodesicParams(a=a, b=b, c=c, Y=Y, kind=kind)
    chi0 = math.atan(probe.k)
    return GeodesicParams(
        a=a, b=b, c=c, Y=Y, kind=kind,
        s0=0.0, T0=t0 - (2.0 / mp.omega) * chi0, Z0=z0,
    )


def impact_parameter(gp: GeodesicParams) -> ImpactParameter:
    """The ray identity (c/a, b/a, Y) of a lightlike geodesic."""
    if gp.kind != "lightlike":
        raise ValueError("timelike geodesics do not converge to a light ray")
    return ImpactParameter(ell=gp.c / gp.a, rho=gp.b / gp.a, Y=gp.Y)


# ---------------------------------------------------------------------------
# orbit structure helpers
# ---------------------------------------------------------------------------


def xy_period(gp: GeodesicParams, mp: ModelParams) -> float:
    """Period of the (x, y) projection in proper time: pi / (|a| w sqrt(1-k^2))."""
    zeta = math.sqrt(1.0 - gp.k**2)
    return math.pi / (abs(gp.a) * mp.omega * zeta)


def recurrence_time_gap(gp: GeodesicParams, mp: ModelParams, n: int = 1) -> float:
    """|t(s + n periods) - t(s)|: the coordinate-time gap at x-return times.

    Equals (n pi / w) |2 - 1/sqrt(1-k^2)|, independent of s.
    """
    zeta = math.sqrt(1.0 - gp.k**2)
    return abs(n) * math.pi / mp.omega * abs(2.0 - 1.0 / zeta)


def relation8_residual(gp: GeodesicParams, s, mp: ModelParams):
    """Residual of the orbit-circle identity

    [b/(2a) e^{-sqrt2 w x} - 1]^2 + [w b/(2a) (y - Y)]^2 - k^2,

    which vanishes identically along the geodesic.
    """
    points, _ = geodesic_path(gp, s, mp)
    x = points[:, 1]
    y = points[:, 2]
    w = mp.omega
    r = gp.b / (2.0 * gp.a)
    return (r * np.exp(-SQRT2 * w * x) - 1.0) ** 2 + (w * r * (y - gp.Y)) ** 2 - gp.k**2


def ray_direction_slope(ell: float) -> float:
    """Asymptotic (t, z) slope dz/dt of a ray with slope parameter ell."""
    return ell / (math.sqrt(2.0 * (1.0 + ell * ell)) - 1.0)


def measured_ray_slope(B: ImpactParameter, tau: float, mp: ModelParams) -> float:
    """Chord slope (z(tau*) - z(0)) / (t(tau*) - t(0)) of the ray near affine time tau.

    tau* is tau rounded to a whole number of orbit periods so the periodic
    part of t cancels; for |ell| = 1 the orbit is a point and tau* = tau.
    """
    gp = lightlike_params(B, 0.0, 0.0, mp)
    kappa = gp.k
    if kappa > 0.0:
        zeta = math.sqrt(1.0 - kappa * kappa)
        half_periods = max(1.0, round(zeta * mp.omega * tau / math.pi))
        tau = half_periods * math.pi / (zeta * mp.omega)
    p, _ = geodesic_path(gp, [0.0, tau], mp)
    return (p[1, 3] - p[0, 3]) / (p[1, 0] - p[0, 0])


# ---------------------------------------------------------------------------
# independent RK4 oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OdePath:
    """Fixed-step integration output: samples plus conserved-quantity drift."""

    s: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    max_drift: dict

    def state(self, index: int) -> PhaseState:
        return PhaseState(self.points[index], self.velocities[index])


def _geodesic_rhs(st, w: float):
    # second-order geodesic system in (t, x, y, z); plain floats for speed
    td, xd, yd, zd = st[4], st[5], st[6], st[7]
    E = math.exp(SQRT2 * w * st[1])
    tdd = -2.0 * SQRT2 * w * td * xd - SQRT2 * w * E * xd * yd
    xdd = -SQRT2 * w * E * td * yd - (w / SQRT2) * E * E * yd * yd
    ydd = 2.0 * SQRT2 * w * td * xd / E
    return (td, xd, yd, zd, tdd, xdd, ydd, 0.0)


def ode_integrate(
    state: PhaseState,
    s_max: float,
    step: float,
    mp: ModelParams,
    stride: int = 1,
) -> OdePath:
    """Classical RK4 on the geodesic equations, recording every stride-th step.

    max_drift reports the largest deviation of (a, b, c, Y, pseudo_norm)
    from their initial values over the recorded samples.
    """
    if step <= 0.0 or s_max <= 0.0:
        raise ValueError("step and s_max must be positive")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    w = mp.omega
    n_steps = max(1, int(round(s_max / step)))
    st = tuple(float(v) for v in (*state.point, *state.velocity))

    rec_s = [0.0]
    rec = [st]
    for i in range(1, n_steps + 1):
        k1 = _geodesic_rhs(st, w)
        mid1 = tuple(st[j] + 0.5 * step * k1[j] for j in range(8))
        k2 = _geodesic_rhs(mid1, w)
        mid2 = tuple(st[j] + 0.5 * step * k2[j] for j in range(8))
        k3 = _geodesic_rhs(mid2, w)
        end = tuple(st[j] + step * k3[j] for j in range(8))
        k4 = _geodesic_rhs(end, w)
        st = tuple(
            st[j] + (step / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            for j in range(8)
        )
        if i % stride == 0 or i == n_steps:
            rec_s.append(i * step)
            rec.append(st)

    arr = np.asarray(rec)
    points = arr[:, :4]
    velocities = arr[:, 4:]
    drift = _conserved_drift(points, velocities, mp)
    return OdePath(
        s=np.asarray(rec_s), points=points, velocities=velocities, max_drift=drift
    )


def _conserved_series(points: np.ndarray, velocities: np.ndarray, mp: ModelParams):
    w = mp.omega
    E = np.exp(SQRT2 * w * points[:, 1])
    td, xd, yd, zd = velocities.T
    a = td + E * yd
    b = E * (2.0 * td + E * yd)
    c = zd
    Y = SQRT2 * xd / (w * b) + points[:, 2]
    pn = td**2 - xd**2 + 0.5 * (E * yd) ** 2 + 2.0 * E * td * yd - zd**2
    return a, b, c, Y, pn


def _conserved_drift(points, velocities, mp) -> dict:
    a, b, c, Y, pn = _conserved_series(points, velocities, mp)
    return {
        "a": float(np.max(np.abs(a - a[0]))),
        "b": float(np.max(np.abs(b - b[0]))),
        "c": float(np.max(np.abs(c - c[0]))),
        "Y": float(np.max(np.abs(Y - Y[0]))),
        "pseudo_norm": float(np.max(np.abs(pn - pn[0]))),
    }


# ---------------------------------------------------------------------------
# ray residuals and path tables
# ---------------------------------------------------------------------------


def ray_convergence_residuals(points, velocities, B: ImpactParameter, mp: ModelParams) -> dict:
    """Residual series measuring convergence of a sampled path to ray B.

    Keys: "ell" (zdot/a - ell), "rho" (b/a - rho), "Y" (Y_s - Y) and
    "cylinder" (distance of (x, y) from the ray's cylinder surface, as the
    quadratic form minus (1 - ell^2)/2). All four vanish identically on the
    ray's own geodesics.
    """
    points = np.asarray(points, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    a, b, _, Ys, _ = _conserved_series(points, velocities, mp)
    w = mp.omega
    x = points[:, 1]
    y = points[:, 2]
    cyl = (
        (0.5 * B.rho * np.exp(-SQRT2 * w * x) - 1.0) ** 2
        + (0.5 * w * B.rho * (y - B.Y)) ** 2
        - 0.5 * (1.0 - B.ell**2)
    )
    return {
        "ell": velocities[:, 3] / a - B.ell,
        "rho": b / a - B.rho,
        "Y": Ys - B.Y,
        "cylinder": cyl,
    }


PATH_COLUMNS = (
    "s", "t", "x", "y", "z",
    "tdot", "xdot", "ydot", "zdot",
    "a", "b", "c", "Y", "pseudo_norm",
)


def path_table(s, points, velocities, mp: ModelParams) -> dict:
    """Column dict (PATH_COLUMNS order) for CSV dumps of a sampled path."""
    s = np.asarray(s, dtype=float)
    points = np.asarray(points, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    a, b, c, Y, pn = _conserved_series(points, velocities, mp)
    return {
        "s": s,
        "t": points[:, 0], "x": points[:, 1], "y": points[:, 2], "z": points[:, 3],
        "tdot": velocities[:, 0], "xdot": velocities[:, 1],
        "ydot": velocities[:, 2], "zdot": velocities[:, 3],
        "a": a, "b": b, "c": c, "Y": Y, "pseudo_norm": pn,
    }
