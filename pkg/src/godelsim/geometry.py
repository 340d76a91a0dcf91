"""Geometry of Godel's rotating universe.

Cartesian-type coordinates are ordered (t, x, y, z) = indices (0, 1, 2, 3).
The line element is

    ds^2 = dt^2 - dx^2 + (1/2) e^{2 sqrt2 w x} dy^2 + 2 e^{sqrt2 w x} dt dy - dz^2

with w > 0 the rotation rate, signature (+, -, -, -). Everything here is
exact closed-form tensor algebra: metric, curvature, the dust stress tensor,
the rotational coordinate chart, and the isometry actions on points, tangent
vectors and asymptotic light-ray parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)

__all__ = [
    "SQRT2",
    "ModelParams",
    "metric_at",
    "inverse_metric_at",
    "christoffel_at",
    "ricci_at",
    "scalar_curvature",
    "einstein_residual",
    "dust_velocity",
    "pseudo_norm",
    "energy",
    "RotationalPoint",
    "to_rotational",
    "from_rotational",
    "rotational_metric_at",
    "IsometryElement",
    "translation",
    "dilatation",
    "rotation",
    "apply_isometry_point",
    "apply_isometry_state",
    "apply_isometry_boundary",
    "isometry_jacobian",
    "boundary_rotation_center",
]


@dataclass(frozen=True)
class ModelParams:
    """Model constants: rotation rate omega and noise intensity sigma."""

    omega: float = 1.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not (self.omega > 0.0) or not math.isfinite(self.omega):
            raise ValueError(f"omega must be positive and finite, got {self.omega}")
        if self.sigma < 0.0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be nonnegative and finite, got {self.sigma}")


def _point(p) -> np.ndarray:
    q = np.asarray(p, dtype=float)
    if q.shape != (4,):
        raise ValueError(f"spacetime point must have 4 components, got shape {q.shape}")
    return q


def metric_at(point, mp: ModelParams) -> np.ndarray:
    """Metric tensor g_ij at a point. Depends on the point through x only."""
    x = _point(point)[1]
    e = math.exp(SQRT2 * mp.omega * x)
    g = np.zeros((4, 4))
    g[0, 0] = 1.0
    g[1, 1] = -1.0
    g[2, 2] = 0.5 * e * e
    g[0, 2] = g[2, 0] = e
    g[3, 3] = -1.0
    return g


def inverse_metric_at(point, mp: ModelParams) -> np.ndarray:
    """Inverse metric g^ij at a point."""
    x = _point(point)[1]
    em = math.exp(-SQRT2 * mp.omega * x)
    gi = np.zeros((4, 4))
    gi[0, 0] = -1.0
    gi[1, 1] = -1.0
    gi[0, 2] = gi[2, 0] = 2.0 * em
    gi[2, 2] = -2.0 * em * em
    gi[3, 3] = -1.0
    return gi


def christoffel_at(point, mp: ModelParams) -> np.ndarray:
    """Christoffel symbols of the Levi-Civita connection, G[k, i, j] = Gamma^k_ij."""
    x = _point(point)[1]
    w = mp.omega
    e = math.exp(SQRT2 * w * x)
    G = np.zeros((4, 4, 4))
    G[0, 0, 1] = G[0, 1, 0] = SQRT2 * w
    G[0, 1, 2] = G[0, 2, 1] = (w / SQRT2) * e
    G[1, 0, 2] = G[1, 2, 0] = (w / SQRT2) * e
    G[1, 2, 2] = (w / SQRT2) * e * e
    G[2, 0, 1] = G[2, 1, 0] = -SQRT2 * w / e
    return G


def _christoffel_x_derivative(point, mp: ModelParams) -> np.ndarray:
    """d/dx of the Christoffel symbols (the only coordinate they depend on)."""
    x = _point(point)[1]
    w = mp.omega
    e = math.exp(SQRT2 * w * x)
    w2 = w * w
    dG = np.zeros((4, 4, 4))
    dG[0, 1, 2] = dG[0, 2, 1] = w2 * e
    dG[1, 0, 2] = dG[1, 2, 0] = w2 * e
    dG[1, 2, 2] = 2.0 * w2 * e * e
    dG[2, 0, 1] = dG[2, 1, 0] = 2.0 * w2 / e
    return dG


def ricci_at(point, mp: ModelParams) -> np.ndarray:
    """Ricci tensor R_ij, contracted from the connection and its x-derivative.

    R_ij = d_k Gamma^k_ij - d_j Gamma^k_ki
           + Gamma^k_kl Gamma^l_ij - Gamma^k_jl Gamma^l_ik
    """
    G = christoffel_at(point, mp)
    dG = _christoffel_x_derivative(point, mp)
    # Only x-derivatives are nonzero, so d_k Gamma^k_ij picks k = 1 and the
    # trace term d_j Gamma^k_ki needs only its x-derivative (which vanishes:
    # the trace Gamma^k_ki = (0, sqrt2 w, 0, 0) is constant).
    term1 = dG[1]
    trace = np.einsum("kki->i", G)
    term3 = np.einsum("l,lij->ij", trace, G)
    term4 = np.einsum("kjl,lik->ij", G, G)
    return term1 + term3 - term4


def scalar_curvature(point, mp: ModelParams) -> float:
    """Scalar curvature R = g^ij R_ij (equals 2 omega^2 everywhere)."""
    gi = inverse_metric_at(point, mp)
    ric = ricci_at(point, mp)
    return float(np.einsum("ij,ij->", gi, ric))


def dust_velocity(point, mp: ModelParams) -> np.ndarray:
    """Covector u_i of the rotating dust, u = sqrt2 w (dt + e^{sqrt2 w x} dy)."""
    x = _point(point)[1]
    w = mp.omega
    return np.array([SQRT2 * w, 0.0, SQRT2 * w * math.exp(SQRT2 * w * x), 0.0])


def einstein_residual(point, mp: ModelParams) -> np.ndarray:
    """Residual of the field equation R_ij - R/2 g_ij + L g_ij - u_i u_j.

    With the cosmological constant L = omega^2 and the dust covector u the
    residual vanishes identically; the return value is the numerical matrix.
    """
    g = metric_at(point, mp)
    ric = ricci_at(point, mp)
    R = scalar_curvature(point, mp)
    u = dust_velocity(point, mp)
    lam = mp.omega**2
    return ric - 0.5 * R * g + lam * g - np.outer(u, u)


def pseudo_norm(point, velocity, mp: ModelParams) -> float:
    """g_ij v^i v^j for a tangent vector v at a point.

    Equals 1 on unit timelike tangents and 0 on lightlike ones.
    """
    v = np.asarray(velocity, dtype=float)
    if v.shape != (4,):
        raise ValueError(f"velocity must have 4 components, got shape {v.shape}")
    x = _point(point)[1]
    e = math.exp(SQRT2 * mp.omega * x)
    td, xd, yd, zd = v
    return float(td * td - xd * xd + 0.5 * (e * yd) ** 2 + 2.0 * e * td * yd - zd * zd)


def energy(point, velocity, mp: ModelParams) -> float:
    """Dust energy T_ij v^i v^j = (u_i v^i)^2 along a tangent vector."""
    u = dust_velocity(point, mp)
    v = np.asarray(velocity, dtype=float)
    return float(np.dot(u, v) ** 2)


# ---------------------------------------------------------------------------
# rotational coordinates (u, r, phi, z)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RotationalPoint:
    """Point in the rotational chart (u, r, phi, z), r >= 0, phi mod 2 pi / omega."""

    u: float
    r: float
    phi: float
    z: float


def to_rotational(point, mp: ModelParams) -> RotationalPoint:
    """Map a Cartesian-type point into the rotational chart.

    The branch is fixed so that u is continuous, u = t on the axis r = 0,
    and |t - u| < pi / omega.
    """
    t, x, y, z = _point(point)
    w = mp.omega
    e = math.exp(SQRT2 * w * x)
    s = w * y * e
    # ch(2r) solves e^2 - 2 e ch(2r) + 1 + s^2 = 0.
    ch2r = (e * e + s * s + 1.0) / (2.0 * e)
    r = 0.5 * math.acosh(max(ch2r, 1.0))
    sh2r = math.sqrt(max(ch2r * ch2r - 1.0, 0.0))
    if sh2r == 0.0:
        return RotationalPoint(u=t, r=0.0, phi=0.0, z=z)
    theta = math.atan2(s, e - ch2r)  # theta = omega * phi in (-pi, pi]
    u = t + (theta - 2.0 * _halfangle_atan(math.exp(-2.0 * r), theta)) / w
    return RotationalPoint(u=u, r=r, phi=theta / w, z=z)


def _halfangle_atan(factor: float, theta: float) -> float:
    """arctan(factor * tan(theta/2)) on the branch continuous in theta in (-pi, pi]."""
    half = 0.5 * theta
    c = math.cos(half)
    if c == 0.0:
        return math.copysign(math.pi / 2.0, math.sin(half))
    return math.atan2(factor * math.sin(half), c)


def from_rotational(rp: RotationalPoint, mp: ModelParams) -> np.ndarray:
    """Inverse of to_rotational. phi is taken modulo 2 pi / omega."""
    if rp.r < 0.0:
        raise ValueError(f"rotational radius must be nonnegative, got {rp.r}")
    w = mp.omega
    theta = math.remainder(w * rp.phi, 2.0 * math.pi)  # in (-pi, pi]
    ch2r = math.cosh(2.0 * rp.r)
    sh2r = math.sinh(2.0 * rp.r)
    e = ch2r + sh2r * math.cos(theta)
    x = math.log(e) / (SQRT2 * w)
    y = sh2r * math.sin(theta) / (w * e)
    t = rp.u - (theta - 2.0 * _halfangle_atan(math.exp(-2.0 * rp.r), theta)) / w
    return np.array([t, x, y, rp.z])


def rotational_metric_at(rp: RotationalPoint, mp: ModelParams) -> np.ndarray:
    """Metric in rotational coordinates, ordered (u, r, phi, z):

    ds^2 = [du + 2 sh^2(r) dphi]^2 - 2 w^{-2} dr^2 - (1/2) sh^2(2r) dphi^2 - dz^2
    """
    w = mp.omega
    sh_r2 = math.sinh(rp.r) ** 2
    sh_2r = math.sinh(2.0 * rp.r)
    g = np.zeros((4, 4))
    g[0, 0] = 1.0
    g[0, 2] = g[2, 0] = 2.0 * sh_r2
    g[2, 2] = 4.0 * sh_r2 * sh_r2 - 0.5 * sh_2r * sh_2r
    g[1, 1] = -2.0 / (w * w)
    g[3, 3] = -1.0
    return g


# ---------------------------------------------------------------------------
# isometries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IsometryElement:
    """One generator of the isometry group.

    kind is "translation" (params t0, y0, z0), "dilatation" (param x0) or
    "rotation" (param phi0, an angle increment in the rotational chart).
    """

    kind: str
    params: tuple

    def inverse(self) -> "IsometryElement":
        return IsometryElement(self.kind, tuple(-p for p in self.params))


def translation(t0: float = 0.0, y0: float = 0.0, z0: float = 0.0) -> IsometryElement:
    return IsometryElement("translation", (float(t0), float(y0), float(z0)))


def dilatation(x0: float) -> IsometryElement:
    return IsometryElement("dilatation", (float(x0),))


def rotation(phi0: float) -> IsometryElement:
    return IsometryElement("rotation", (float(phi0),))


def apply_isometry_point(iso: IsometryElement, point, mp: ModelParams) -> np.ndarray:
    """Act on a point. Rotations go through the rotational chart."""
    t, x, y, z = _point(point)
    if iso.kind == "translation":
        t0, y0, z0 = iso.params
        return np.array([t + t0, x, y + y0, z + z0])
    if iso.kind == "dilatation":
        (x0,) = iso.params
        return np.array([t, x + x0, y * math.exp(-SQRT2 * mp.omega * x0), z])
    if iso.kind == "rotation":
        (phi0,) = iso.params
        rp = to_rotational(point, mp)
        return from_rotational(
            RotationalPoint(rp.u, rp.r, rp.phi + phi0, rp.z), mp
        )
    raise ValueError(f"unknown isometry kind {iso.kind!r}")


def isometry_jacobian(iso: IsometryElement, point, mp: ModelParams, step: float = 1e-6) -> np.ndarray:
    """Differential of the point action, by central differences."""
    p = _point(point)
    J = np.zeros((4, 4))
    for j in range(4):
        dp = np.zeros(4)
        dp[j] = step
        plus = apply_isometry_point(iso, p + dp, mp)
        minus = apply_isometry_point(iso, p - dp, mp)
        J[:, j] = (plus - minus) / (2.0 * step)
    return J


def apply_isometry_state(iso: IsometryElement, point, velocity, mp: ModelParams):
    """Act on a point and push the tangent vector forward.

    Translations and dilatations push forward in closed form; rotations use
    the central-difference Jacobian of the chart action.
    """
    p = _point(point)
    v = np.asarray(velocity, dtype=float)
    q = apply_isometry_point(iso, p, mp)
    if iso.kind == "translation":
        return q, v.copy()
    if iso.kind == "dilatation":
        (x0,) = iso.params
        pushed = v.copy()
        pushed[2] = v[2] * math.exp(-SQRT2 * mp.omega * x0)
        return q, pushed
    J = isometry_jacobian(iso, p, mp)
    return q, J @ v


# ---------------------------------------------------------------------------
# action on the light-ray boundary (ell, rho, Y)
# ---------------------------------------------------------------------------


def _boundary(boundary):
    ell, rho, Y = (float(v) for v in boundary)
    if not -1.0 <= ell <= 1.0:
        raise ValueError(f"boundary slope ell must lie in [-1, 1], got {ell}")
    if not rho > 0.0:
        raise ValueError(f"boundary scale rho must be positive, got {rho}")
    return ell, rho, Y


def boundary_rotation_center(boundary, mp: ModelParams) -> float:
    """The combination alpha = rho/2 (1 + w^2 Y^2) + (1 + ell^2)/rho.

    Rotations move the pair (rho, w rho Y) on a circle centered at
    (alpha, 0), so alpha is invariant under them.
    """
    ell, rho, Y = _boundary(boundary)
    w = mp.omega
    return 0.5 * rho * (1.0 + (w * Y) ** 2) + (1.0 + ell * ell) / rho


def apply_isometry_boundary(iso: IsometryElement, boundary, mp: ModelParams):
    """Induced action on asymptotic light-ray parameters (ell, rho, Y)."""
    ell, rho, Y = _boundary(boundary)
    w = mp.omega
    if iso.kind == "translation":
        _, y0, _ = iso.params
        return (ell, rho, Y + y0)
    if iso.kind == "dilatation":
        (x0,) = iso.params
        f = math.exp(SQRT2 * w * x0)
        return (ell, rho * f, Y / f)
    if iso.kind == "rotation":
        (phi0,) = iso.params
        theta = w * phi0
        alpha = boundary_rotation_center(boundary, mp)
        c, s = math.cos(theta), math.sin(theta)
        # rotate (rho - alpha, w rho Y) about the origin
        u1 = rho - alpha
        u2 = w * rho * Y
        rho_new = alpha + u1 * c - u2 * s
        Z_new = u2 * c + u1 * s
        return (ell, rho_new, Z_new / (w * rho_new))
    raise ValueError(f"unknown isometry kind {iso.kind!r}")
