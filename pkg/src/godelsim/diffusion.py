"""Relativistic diffusion on the pseudo-unit tangent bundle, in reduced coordinates.

The process perturbs the timelike geodesic flow: positions follow the current
velocity while (a, b, xdot, zdot) pick up a drift proportional to sigma**2
plus a rank-3 noise tangent to the shell

    1 + xdot**2 + zdot**2 + (2a - exp(-sqrt(2) omega x) b)**2 / 2 = a**2.

Path simulation is delegated to a kernel (compiled when available, pure
Python otherwise) that steps the shell parameterization (a, zdot, gamma)
directly, so the constraint holds exactly at every recorded sample.  The
operations in this module expose the same dynamics one Euler-Maruyama
update at a time, for tests and cross-checks against the kernel.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .geodesics import PhaseState
from .geometry import SQRT2, ModelParams

__all__ = [
    "SHELL_BAND",
    "EPS_DEGENERATE",
    "CSV_COLUMNS",
    "StepRejected",
    "PathAborted",
    "ReducedState",
    "PolarState",
    "PathRecord",
    "reduce_state",
    "full_state",
    "shell_state",
    "shell_residual",
    "generator_drift",
    "covariation_matrix",
    "noise_factorization",
    "step",
    "project_to_shell",
    "to_polar",
    "simulate_path",
    "simulate_subdiffusion",
]

# Off-shell rejection band for inputs, relative to a**2 (the natural scale of
# the constraint, which grows like exp(2 sigma**2 s) along a path).
SHELL_BAND = 1e-6

# Below this relative size of a**2 - zdot**2 - 1 the standard noise chart is
# singular and the stepper switches to the xdot-conditioned one.
EPS_DEGENERATE = 1e-10

CSV_COLUMNS = (
    "s", "t", "x", "y", "z", "tdot", "xdot", "ydot", "zdot",
    "a", "b", "c", "Y", "pseudo_norm",
    "A", "lambda", "gamma", "gamma_integral", "shell_residual",
)


class StepRejected(RuntimeError):
    """A single update left the admissible region; retry with a smaller step."""


class PathAborted(RuntimeError):
    """Repeated step rejections exhausted the retry budget.

    The partial path up to the last completed sample is attached as `record`.
    """

    def __init__(self, message: str, record: "PathRecord | None" = None):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class ReducedState:
    """One tangent vector in reduced form: position plus (a, b, xdot, zdot).

    a = tdot + E ydot and b = E (2 tdot + E ydot), with E = exp(sqrt(2)
    omega x), determine (tdot, ydot) at given x, so these eight numbers and
    the proper time s carry the full state.  On the shell |a| >= 1, ab > 0,
    and exp(-sqrt(2) omega x) b / a stays in [2 - sqrt(2), 2 + sqrt(2)].
    """

    s: float
    t: float
    x: float
    y: float
    z: float
    a: float
    b: float
    xdot: float
    zdot: float

    def validate(self, mp: ModelParams) -> None:
        if abs(self.a) <= 1.0:
            raise ValueError(f"|a| must exceed 1 for a timelike state, got a={self.a}")
        if self.a * self.b <= 0.0:
            raise ValueError("a and b must carry the same sign")
        res = shell_residual(self, mp)
        if abs(res) > SHELL_BAND:
            raise ValueError(f"state is off the unit shell: relative residual {res:.3e}")


@dataclass(frozen=True)
class PolarState:
    """Shell angles at one sample: A = |sh(lam) / a| in [0, 1), the unwound
    phase gamma with (cos gamma, sin gamma) proportional to (xdot,
    (2a - exp(-sqrt(2) omega x) b) / sqrt(2)), and lam = asinh of the
    hyperbolic radius sqrt(a**2 - zdot**2 - 1).
    """

    A: float
    gamma: float
    lam: float


def _exp_factor(x: float, mp: ModelParams) -> float:
    return math.exp(SQRT2 * mp.omega * x)


def shell_residual(state: ReducedState, mp: ModelParams) -> float:
    """Relative defect of the constraint: (a**2 - 1 - |velocity|**2) / a**2."""
    g = state.b / _exp_factor(state.x, mp)
    h = 2.0 * state.a - g
    excess = state.a * state.a - 1.0 - state.xdot ** 2 - state.zdot ** 2 - 0.5 * h * h
    return excess / (state.a * state.a)


def reduce_state(state: PhaseState, mp: ModelParams, s: float = 0.0) -> ReducedState:
    t, x, y, z = state.point
    td, xd, yd, zd = state.velocity
    E = _exp_factor(x, mp)
    a = td + E * yd
    b = E * (2.0 * td + E * yd)
    return ReducedState(s=s, t=t, x=x, y=y, z=z, a=a, b=b, xdot=xd, zdot=zd)


def full_state(state: ReducedState, mp: ModelParams) -> PhaseState:
    g = state.b / _exp_factor(state.x, mp)
    tdot = g - state.a
    ydot = (2.0 * state.a - g) / _exp_factor(state.x, mp)
    point = np.array([state.t, state.x, state.y, state.z])
    velocity = np.array([tdot, state.xdot, ydot, state.zdot])
    return PhaseState(point=point, velocity=velocity)


def shell_state(
    t: float,
    x: float,
    y: float,
    z: float,
    a: float,
    zdot: float,
    gamma: float,
    mp: ModelParams,
    s: float = 0.0,
) -> ReducedState:
    """Build an exactly on-shell state from (a, zdot) and the phase gamma.

    xdot = a A cos(gamma) and exp(-sqrt(2) omega x) b = a (2 - sqrt(2) A
    sin(gamma)) with A = sqrt(a**2 - zdot**2 - 1) / |a|, which satisfies the
    constraint identically.
    """
    if abs(a) < 1.0:
        raise ValueError(f"|a| must be at least 1, got {a}")
    m2 = a * a - zdot * zdot - 1.0
    if m2 < 0.0:
        raise ValueError("no shell point with |zdot| >= sqrt(a**2 - 1)")
    A = math.sqrt(m2) / abs(a)
    xdot = a * A * math.cos(gamma)
    b = a * (2.0 - SQRT2 * A * math.sin(gamma)) * _exp_factor(x, mp)
    return ReducedState(s=s, t=t, x=x, y=y, z=z, a=a, b=b, xdot=xdot, zdot=zdot)


def generator_drift(state: ReducedState, mp: ModelParams) -> np.ndarray:
    """Deterministic drift of (t, x, y, z, a, b, xdot, zdot) at `state`.

    Positions move with the reconstructed velocities; a, b, zdot drift as
    (3 sigma**2 / 2) times themselves; xdot adds the geodesic force, which
    vanishes exactly where exp(-sqrt(2) omega x) b = 2a.
    """
    res = shell_residual(state, mp)
    if abs(res) > SHELL_BAND:
        raise ValueError(f"drift requested off the shell: relative residual {res:.3e}")
    w = mp.omega
    g = state.b / _exp_factor(state.x, mp)
    tdot = g - state.a
    ydot = (2.0 * state.a - g) / _exp_factor(state.x, mp)
    half3s2 = 1.5 * mp.sigma ** 2
    force = (w / SQRT2) * g * g - SQRT2 * w * g * state.a
    return np.array(
        [
            tdot,
            state.xdot,
            ydot,
            state.zdot,
            half3s2 * state.a,
            half3s2 * state.b,
            force + half3s2 * state.xdot,
            half3s2 * state.zdot,
        ]
    )


def covariation_matrix(state: ReducedState, mp: ModelParams) -> np.ndarray:
    """Quadratic covariation of the martingales (M^a, M^b, M^x, M^z).

    Symmetric, positive semidefinite, rank 3: the shell constraint removes
    one direction.  The sigma prefactor of the noise is not included.
    """
    E = _exp_factor(state.x, mp)
    a, b, xd, zd = state.a, state.b, state.xdot, state.zdot
    return np.array(
        [
            [a * a - 1.0, a * b - 2.0 * E, a * xd, a * zd],
            [a * b - 2.0 * E, b * b - 2.0 * E * E, b * xd, b * zd],
            [a * xd, b * xd, xd * xd + 1.0, xd * zd],
            [a * zd, b * zd, xd * zd, zd * zd + 1.0],
        ]
    )


def noise_factorization(state: ReducedState, mp: ModelParams) -> np.ndarray:
    """4x3 matrix Sigma with Sigma Sigma^T = covariation_matrix, rows (a, b, x, z).

    The three columns drive independent Brownian motions; the physical noise
    is sigma times Sigma dW.  The standard chart conditions on zdot and is
    singular where a**2 - zdot**2 - 1 = 0; near that set the factorization
    switches to the mirror chart conditioned on xdot.  Both are exact
    Cholesky-type factorizations on the shell.
    """
    res = shell_residual(state, mp)
    if abs(res) > SHELL_BAND:
        raise ValueError(f"factorization requested off the shell: relative residual {res:.3e}")
    E = _exp_factor(state.x, mp)
    a, b, xd, zd = state.a, state.b, state.xdot, state.zdot
    h = 2.0 * a - b / E
    m2 = a * a - zd * zd - 1.0
    if m2 > EPS_DEGENERATE * a * a:
        q = math.sqrt(zd * zd + 1.0)
        m = math.sqrt(m2)
        return np.array(
            [
                [a * zd / q, m / q, 0.0],
                [b * zd / q, (a * b - 2.0 * E * q * q) / (q * m), SQRT2 * E * xd / m],
                [xd * zd / q, a * xd / (q * m), h / (SQRT2 * m)],
                [q, 0.0, 0.0],
            ]
        )
    m2x = a * a - xd * xd - 1.0
    if m2x <= EPS_DEGENERATE * a * a:
        raise ValueError("state is degenerate in both noise charts (|a| at 1)")
    q = math.sqrt(xd * xd + 1.0)
    m = math.sqrt(m2x)
    return np.array(
        [
            [a * xd / q, m / q, 0.0],
            [b * xd / q, (a * b - 2.0 * E * q * q) / (q * m), SQRT2 * E * zd / m],
            [q, 0.0, 0.0],
            [zd * xd / q, a * zd / (q * m), h / (SQRT2 * m)],
        ]
    )


def project_to_shell(state: ReducedState, mp: ModelParams) -> ReducedState:
    """Rescale (xdot, zdot, 2a - exp(-sqrt(2) omega x) b) to restore the shell.

    Holds the position and b fixed, scales the velocity triple by a common
    mu > 0 and resets a = (mu h + g) / 2, which preserves the direction of
    the spatial velocity.  mu solves a quadratic; the root nearest 1 is
    polished to machine precision, with safeguarded bisection as fallback
    if the polish stalls.  Idempotent: on-shell input is returned unchanged.
    """
    if abs(shell_residual(state, mp)) <= 1e-14:
        return state
    g = state.b / _exp_factor(state.x, mp)
    h = 2.0 * state.a - g
    rho2 = state.xdot ** 2 + state.zdot ** 2
    scale = 1.0 + g * g + h * h + rho2

    def defect(mu: float) -> float:
        a_mu = 0.5 * (mu * h + g)
        return a_mu * a_mu - 1.0 - mu * mu * (rho2 + 0.5 * h * h)

    def slope(mu: float) -> float:
        return 0.5 * (mu * h + g) * h - 2.0 * mu * (rho2 + 0.5 * h * h)

    mu = _backend.get_backend("python").shell_scale(h, g, rho2)
    if mu <= 0.0 or (mu * h + g) * g <= 0.0:
        raise StepRejected("no admissible rescaling restores the shell")
    for _ in range(4):
        f = defect(mu)
        if abs(f) <= 1e-15 * scale:
            break
        fp = slope(mu)
        if fp == 0.0:
            break
        mu -= f / fp
    if abs(defect(mu)) > 1e-13 * scale:
        width = 1e-9 * max(1.0, mu)
        lo, hi = max(mu - width, 0.0), mu + width
        flo, fhi = defect(lo), defect(hi)
        for _ in range(60):
            if flo == 0.0 or fhi == 0.0 or flo * fhi < 0.0:
                break
            width *= 4.0
            lo = max(mu - width, 0.0)
            hi = mu + width
            flo, fhi = defect(lo), defect(hi)
        if flo * fhi < 0.0:
            while hi - lo > 4e-16 * max(1.0, mu):
                mid = 0.5 * (lo + hi)
                fmid = defect(mid)
                if fmid == 0.0:
                    lo = hi = mid
                    break
                if flo * fmid < 0.0:
                    hi, fhi = mid, fmid
                else:
                    lo, flo = mid, fmid
            mu = 0.5 * (lo + hi)
    a_new = 0.5 * (mu * h + g)
    return replace(
        state,
        a=a_new,
        xdot=mu * state.xdot,
        zdot=mu * state.zdot,
    )


def step(state: ReducedState, ds: float, noise, mp: ModelParams) -> ReducedState:
    """One Euler-Maruyama update followed by the shell projection.

    `noise` holds three standard normal draws; they are scaled by sqrt(ds)
    here.  Positions advance with the pre-step velocities.  Raises
    StepRejected when the update leaves the admissible region (|a| <= 1,
    sign flip of ab, or no shell projection); callers retry with ds / 2.
    """
    if ds <= 0.0:
        raise ValueError("ds must be positive")
    n = np.asarray(noise, dtype=float)
    if n.shape != (3,):
        raise ValueError("noise must supply exactly three standard normal draws")
    drift = generator_drift(state, mp)
    sigma_dW = mp.sigma * math.sqrt(ds) * (noise_factorization(state, mp) @ n)
    candidate = ReducedState(
        s=state.s + ds,
        t=state.t + drift[0] * ds,
        x=state.x + drift[1] * ds,
        y=state.y + drift[2] * ds,
        z=state.z + drift[3] * ds,
        a=state.a + drift[4] * ds + sigma_dW[0],
        b=state.b + drift[5] * ds + sigma_dW[1],
        xdot=state.xdot + drift[6] * ds + sigma_dW[2],
        zdot=state.zdot + drift[7] * ds + sigma_dW[3],
    )
    projected = project_to_shell(candidate, mp)
    if abs(projected.a) <= 1.0:
        raise StepRejected("update drove |a| to 1")
    if projected.a * projected.b <= 0.0:
        raise StepRejected("update flipped the sign of b against a")
    return projected


def to_polar(state: ReducedState, prev_gamma: float, mp: ModelParams) -> PolarState:
    """Shell angles at `state`, with gamma unwound continuously from prev_gamma."""
    m2 = state.a ** 2 - state.zdot ** 2 - 1.0
    if m2 <= 0.0:
        raise ValueError("polar angle undefined where a**2 - zdot**2 - 1 <= 0")
    m = math.sqrt(m2)
    A = m / abs(state.a)
    h = 2.0 * state.a - state.b / _exp_factor(state.x, mp)
    principal = math.atan2(h / (SQRT2 * state.a), state.xdot / state.a)
    turns = math.floor((prev_gamma - principal) / (2.0 * math.pi) + 0.5)
    return PolarState(A=A, gamma=principal + 2.0 * math.pi * turns, lam=math.asinh(m))


@dataclass(frozen=True)
class PathRecord:
    """Sampled diffusion path plus run metadata.

    `data` has one row per sample and the kernel's twelve columns
    (s, t, x, y, z, a, b, xdot, zdot, gamma, gamma_integral, Y); everything
    else (tdot, ydot, shell residual, polar series) is derived on demand.
    Samples are post-projection, so the shell holds at every row.
    """

    data: np.ndarray
    mp: ModelParams
    ds: float
    stride: int
    seed: int | None
    backend: str
    n_rejections: int
    n_chart2_steps: int
    aborted: bool = False

    def __post_init__(self):
        self.data.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def s(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 1]

    @property
    def x(self) -> np.ndarray:
        return self.data[:, 2]

    @property
    def y(self) -> np.ndarray:
        return self.data[:, 3]

    @property
    def z(self) -> np.ndarray:
        return self.data[:, 4]

    @property
    def a(self) -> np.ndarray:
        return self.data[:, 5]

    @property
    def b(self) -> np.ndarray:
        return self.data[:, 6]

    @property
    def xdot(self) -> np.ndarray:
        return self.data[:, 7]

    @property
    def zdot(self) -> np.ndarray:
        return self.data[:, 8]

    @property
    def gamma(self) -> np.ndarray:
        return self.data[:, 9]

    @property
    def gamma_integral(self) -> np.ndarray:
        return self.data[:, 10]

    @property
    def Y(self) -> np.ndarray:
        return self.data[:, 11]

    def _g(self) -> np.ndarray:
        return self.b * np.exp(-SQRT2 * self.mp.omega * self.x)

    @property
    def tdot(self) -> np.ndarray:
        return self._g() - self.a

    @property
    def ydot(self) -> np.ndarray:
        return (2.0 * self.a - self._g()) * np.exp(-SQRT2 * self.mp.omega * self.x)

    @property
    def pseudo_norm(self) -> np.ndarray:
        h = 2.0 * self.a - self._g()
        return self.a ** 2 - self.xdot ** 2 - self.zdot ** 2 - 0.5 * h ** 2

    @property
    def shell_res(self) -> np.ndarray:
        return (self.pseudo_norm - 1.0) / self.a ** 2

    @property
    def A(self) -> np.ndarray:
        m2 = np.maximum(self.a ** 2 - self.zdot ** 2 - 1.0, 0.0)
        return np.sqrt(m2) / np.abs(self.a)

    @property
    def lam(self) -> np.ndarray:
        m2 = np.maximum(self.a ** 2 - self.zdot ** 2 - 1.0, 0.0)
        return np.arcsinh(np.sqrt(m2))

    @property
    def ell_series(self) -> np.ndarray:
        return self.zdot / self.a

    @property
    def rho_series(self) -> np.ndarray:
        return self.b / self.a

    def state_at(self, row: int) -> ReducedState:
        r = self.data[row]
        return ReducedState(
            s=r[0], t=r[1], x=r[2], y=r[3], z=r[4],
            a=r[5], b=r[6], xdot=r[7], zdot=r[8],
        )

    def table(self) -> np.ndarray:
        """Dense table in CSV_COLUMNS order."""
        cols = [
            self.s, self.t, self.x, self.y, self.z,
            self.tdot, self.xdot, self.ydot, self.zdot,
            self.a, self.b, self.zdot, self.Y, self.pseudo_norm,
            self.A, self.lam, self.gamma, self.gamma_integral, self.shell_res,
        ]
        return np.column_stack(cols)

    def to_csv(self, target) -> None:
        """Write the table to a path or text stream."""
        header = ",".join(CSV_COLUMNS)
        if hasattr(target, "write"):
            np.savetxt(target, self.table(), delimiter=",", header=header,
                       comments="", fmt="%.17g")
        else:
            with open(target, "w", encoding="utf-8") as fh:
                np.savetxt(fh, self.table(), delimiter=",", header=header,
                           comments="", fmt="%.17g")

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _resolve_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.BitGenerator):
        return np.random.Generator(seed)
    return np.random.Generator(np.random.Philox(key=int(seed)))


def simulate_path(
    initial: ReducedState,
    s_max: float,
    ds: float,
    seed,
    mp: ModelParams,
    stride: int = 10,
    backend: str | None = None,
) -> PathRecord:
    """Integrate the diffusion from `initial` and record every stride-th step.

    The step count rounds s_max up to a whole number of recorded strides.
    `seed` is an integer (fed to a counter-based generator) or a numpy
    Generator/BitGenerator; a given seed reproduces the path bit for bit on
    both kernel backends.  Raises PathAborted, with the partial record
    attached, if repeated halvings cannot complete a step.
    """
    if s_max <= 0.0 or ds <= 0.0:
        raise ValueError("s_max and ds must be positive")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    initial.validate(mp)
    m2 = initial.a ** 2 - initial.zdot ** 2 - 1.0
    if m2 <= 0.0:
        raise ValueError("initial state sits on the degenerate set (A = 0)")

    kb = _backend.get_backend(backend)
    n_steps = max(1, math.ceil(s_max / ds - 1e-9))
    n_steps = ((n_steps + stride - 1) // stride) * stride
    rows = n_steps // stride + 1

    pol = to_polar(initial, 0.0, mp)
    Y0 = initial.y + SQRT2 * initial.xdot / (mp.omega * initial.b)
    state = np.array(
        [
            initial.a, initial.zdot, initial.b, pol.gamma, Y0,
            initial.t, initial.z, 0.0, 0.0, 0.0,
        ]
    )
    rec = np.empty((rows, 12))
    rec[0, 0] = 0.0
    kb.record_state(state, mp.omega, rec[0])
    counters = np.zeros(2, dtype=np.int64)

    rng = _resolve_rng(seed)
    seed_label = int(seed) if isinstance(seed, (int, np.integer)) else None
    i_done = 0
    chunk = n_steps + 256
    while True:
        block = np.ascontiguousarray(rng.standard_normal((chunk, 3)))
        i_done, _, status = kb.run_path(
            state, rec, block, counters, ds, stride, n_steps, i_done, 0,
            mp.omega, mp.sigma,
        )
        if status != kb.STATUS_NEED_NOISE:
            break
        chunk = max(256, n_steps - i_done + 256)

    if status == kb.STATUS_ABORT:
        done_rows = i_done // stride + 1
        partial = rec[:done_rows].copy()
        partial[:, 0] += initial.s
        record = PathRecord(
            data=partial, mp=mp, ds=ds, stride=stride, seed=seed_label,
            backend=kb.BACKEND_NAME, n_rejections=int(counters[0]),
            n_chart2_steps=int(counters[1]), aborted=True,
        )
        raise PathAborted(
            f"step retries exhausted near s = {initial.s + i_done * ds:.6g}",
            record=record,
        )
    if initial.s != 0.0:
        rec[:, 0] += initial.s
    return PathRecord(
        data=rec, mp=mp, ds=ds, stride=stride, seed=seed_label,
        backend=kb.BACKEND_NAME, n_rejections=int(counters[0]),
        n_chart2_steps=int(counters[1]),
    )


_SUBDIFFUSION_KINDS = ("a", "zdot", "a_zdot", "x_xdot_a_b")


def simulate_subdiffusion(
    kind: str,
    initial,
    n_paths: int,
    s_max: float,
    ds: float,
    seed,
    mp: ModelParams,
) -> np.ndarray:
    """Simulate one of the closed marginal diffusions, vectorized over paths.

    Kinds and their state columns:
      "a"          -> (a,)
      "zdot"       -> (zdot,)
      "a_zdot"     -> (zdot, a)
      "x_xdot_a_b" -> (x, xdot, a, b)
    Returns the terminal states, shape (n_paths, dim).  These are
    independent Euler-Maruyama integrations of the marginal equations,
    written without reference to the path kernel, for comparisons in law.
    """
    if kind not in _SUBDIFFUSION_KINDS:
        raise ValueError(f"unknown sub-diffusion {kind!r}; expected one of {_SUBDIFFUSION_KINDS}")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if s_max <= 0.0 or ds <= 0.0:
        raise ValueError("s_max and ds must be positive")
    rng = _resolve_rng(seed)
    n_steps = max(1, math.ceil(s_max / ds - 1e-9))
    w, sig = mp.omega, mp.sigma
    grow = 1.5 * sig * sig * ds
    sq = sig * math.sqrt(ds)

    init = np.atleast_1d(np.asarray(initial, dtype=float))
    if kind == "a":
        av = np.full(n_paths, init[0])
        for _ in range(n_steps):
            n1 = rng.standard_normal(n_paths)
            av = av + grow * av + sq * np.sqrt(np.maximum(av * av - 1.0, 0.0)) * n1
        return av[:, None]
    if kind == "zdot":
        zv = np.full(n_paths, init[0])
        for _ in range(n_steps):
            n1 = rng.standard_normal(n_paths)
            zv = zv + grow * zv + sq * np.sqrt(zv * zv + 1.0) * n1
        return zv[:, None]
    if kind == "a_zdot":
        zv = np.full(n_paths, init[0])
        av = np.full(n_paths, init[1])
        for _ in range(n_steps):
            n1 = rng.standard_normal(n_paths)
            n2 = rng.standard_normal(n_paths)
            q = np.sqrt(zv * zv + 1.0)
            m = np.sqrt(np.maximum(av * av - zv * zv - 1.0, 0.0))
            zn = zv + grow * zv + sq * q * n1
            an = av + grow * av + sq * (av * zv / q * n1 + m / q * n2)
            zv, av = zn, an
        return np.column_stack([zv, av])

    # (x, xdot, a, b): the xdot-conditioned chart closes on these four
    # coordinates; |zdot| enters the b row through the shell.  The rows
    # carry 1/sqrt(a**2 - xdot**2 - 1) factors, so a step that would leave
    # the admissible region is redone at half the sub-step with fresh
    # draws, mirroring the path kernel; a path that exhausts the retry
    # budget comes back as a NaN row.
    if len(init) != 4:
        raise ValueError("x_xdot_a_b needs a 4-component initial state")
    xs = np.full(n_paths, init[0])
    xds = np.full(n_paths, init[1])
    avs = np.full(n_paths, init[2])
    bvs = np.full(n_paths, init[3])
    if init[2] ** 2 - init[1] ** 2 - 1.0 <= 0.0:
        raise ValueError("initial state violates a**2 - xdot**2 - 1 > 0")
    alive = np.ones(n_paths, dtype=bool)
    base_units = 1 << 20
    for _ in range(n_steps):
        done = np.where(alive, 0, base_units)
        lev = np.zeros(n_paths, dtype=np.int64)
        while True:
            act = np.flatnonzero(done < base_units)
            if act.size == 0:
                break
            h = np.ldexp(ds, -lev[act])
            sqh = sig * np.sqrt(h)
            n1 = rng.standard_normal(act.size)
            n2 = rng.standard_normal(act.size)
            n3 = rng.standard_normal(act.size)
            x0, xd0, a0, b0 = xs[act], xds[act], avs[act], bvs[act]
            E = np.exp(SQRT2 * w * x0)
            g = b0 / E
            hh = 2.0 * a0 - g
            q2 = xd0 * xd0 + 1.0
            q = np.sqrt(q2)
            m2 = a0 * a0 - xd0 * xd0 - 1.0
            m = np.sqrt(m2)
            zabs = np.sqrt(np.maximum(m2 - 0.5 * hh * hh, 0.0))
            force = -(w / SQRT2) * g * hh
            gr = 1.5 * sig * sig * h
            xn = x0 + xd0 * h
            xdn = xd0 + force * h + gr * xd0 + sqh * q * n1
            an = a0 + gr * a0 + sqh * (a0 * xd0 / q * n1 + m / q * n2)
            bn = b0 + gr * b0 + sqh * (
                b0 * xd0 / q * n1
                + (a0 * b0 - 2.0 * E * q2) / (q * m) * n2
                + SQRT2 * E * zabs / m * n3
            )
            gn = bn * np.exp(-SQRT2 * w * xn)
            m2n = an * an - xdn * xdn - 1.0
            ok = (
                (np.abs(an) > 1.0)
                & (an * bn > 0.0)
                & (m2n > 0.0)
                & (m2n - 0.5 * (2.0 * an - gn) ** 2 >= 0.0)
            )
            acc = act[ok]
            xs[acc], xds[acc] = xn[ok], xdn[ok]
            avs[acc], bvs[acc] = an[ok], bn[ok]
            done[acc] += base_units >> lev[acc]
            rej = act[~ok]
            lev[rej] += 1
            dead = rej[lev[rej] > 20]
            if dead.size:
                alive[dead] = False
                done[dead] = base_units
    out = np.column_stack([xs, xds, avs, bvs])
    out[~alive] = np.nan
    return out
