"""Lorentz-model primitives for hyperbolic space of curvature ``-c``.

Points are stored as ambient vectors ``[space..., time]`` (time coordinate
last) satisfying ``|space|^2 - time^2 = -1/c``.  All functions accept a
single vector of shape ``(n+1,)`` or a batch ``(..., n+1)``; the curvature
is a positive scalar shared by the whole batch.

Every differentiable operation ``f`` has a companion ``f_vjp`` that returns
vector-Jacobian products with respect to each real input (including the
curvature), treating point coordinates as free ambient variables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateGeometryError, NumericDomainError

C_MIN_DEFAULT = 1e-4
APERTURE_K = 0.1
MEMBERSHIP_TOL = 1e-8
SERIES_EPS = 1e-8  # switch to the sinh(x)/x -> 1 limit below this
DOMAIN_TOL = 1e-6  # arcosh / sqrt arguments this far outside the domain are errors
ANGLE_EPS = 1e-12


def check_curvature(c, c_min=C_MIN_DEFAULT):
    """Validate a curvature magnitude and return it as a float."""
    try:
        c = float(c)
    except (TypeError, ValueError):
        raise ContractViolation(f"curvature must be a real number, got {c!r}") from None
    if not np.isfinite(c) or c <= 0.0:
        raise ContractViolation(f"curvature must be positive and finite, got {c}")
    if c < c_min:
        raise ContractViolation(f"curvature {c} is below the floor c_min={c_min}")
    return c


def _arr(x, name="x"):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        raise ContractViolation(f"{name} must be a vector, got a scalar")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    return a


def _same_dim(x, y):
    if x.shape[-1] != y.shape[-1]:
        raise ContractViolation(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")


def _minkowski(u):
    """Multiply the time coordinate by -1 (the metric diag(1, ..., 1, -1))."""
    out = np.array(u, dtype=np.float64, copy=True)
    out[..., -1] *= -1.0
    return out


def _sinhc(t):
    """sinh(t)/t, with the series limit near zero."""
    t = np.asarray(t, dtype=np.float64)
    small = np.abs(t) < SERIES_EPS
    safe = np.where(small, 1.0, t)
    return np.where(small, 1.0 + t * t / 6.0, np.sinh(safe) / safe)


def _dsinhc(t):
    """Derivative of sinh(t)/t."""
    t = np.asarray(t, dtype=np.float64)
    small = np.abs(t) < 1e-4
    safe = np.where(small, 1.0, t)
    direct = (safe * np.cosh(safe) - np.sinh(safe)) / (safe * safe)
    return np.where(small, t / 3.0 + t**3 / 30.0, direct)


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LorentzPoint:
    """A point (or batch of points) on the hyperboloid of curvature ``-c``."""

    coords: np.ndarray
    c: float

    def __post_init__(self):
        c = check_curvature(self.c, c_min=0.0)
        coords = _arr(self.coords, "coords")
        if coords.shape[-1] < 2:
            raise ContractViolation("a Lorentz point needs at least one space coordinate")
        if np.any(coords[..., -1] <= 0):
            raise ContractViolation("time coordinate must be positive")
        resid = hyperboloid_residual(coords, c)
        scale = np.maximum(1.0, coords[..., -1] ** 2)
        if np.any(np.abs(resid) > MEMBERSHIP_TOL * scale):
            raise ContractViolation(f"point is off the hyperboloid (residual {np.max(np.abs(resid)):.3g})")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_space(cls, space, c):
        space = _arr(space, "space")
        c = check_curvature(c, c_min=0.0)
        time = np.sqrt(1.0 / c + np.sum(space * space, axis=-1))
        return cls(np.concatenate([space, time[..., None]], axis=-1), c)

    @property
    def space(self):
        return self.coords[..., :-1]

    @property
    def time(self):
        return self.coords[..., -1]

    @property
    def dim(self):
        return self.coords.shape[-1] - 1


@dataclass(frozen=True)
class TangentVector:
    """An ambient vector tangent to the hyperboloid at ``base``."""

    ambient: np.ndarray
    base: LorentzPoint

    def __post_init__(self):
        amb = _arr(self.ambient, "ambient")
        _same_dim(amb, self.base.coords)
        ip = lorentz_inner(self.base.coords, amb)
        scale = np.maximum(1.0, np.abs(self.base.coords).max(axis=-1) * np.abs(amb).max(axis=-1))
        if np.any(np.abs(ip) > MEMBERSHIP_TOL * scale):
            raise ContractViolation(f"vector is not tangent at its base point (<x,v>_L = {np.max(np.abs(ip)):.3g})")
        object.__setattr__(self, "ambient", amb)


def _unpack_point(x, c):
    if isinstance(x, LorentzPoint):
        if c is not None and float(c) != x.c:
            raise ContractViolation(f"curvature mismatch: {x.c} vs {c}")
        return x.coords, x.c
    if c is None:
        raise ContractViolation("curvature is required for raw coordinate arrays")
    return _arr(x), check_curvature(c, c_min=0.0)


def _unpack_pair(x, y, c):
    cx = x.c if isinstance(x, LorentzPoint) else None
    cy = y.c if isinstance(y, LorentzPoint) else None
    if cx is not None and cy is not None and cx != cy:
        raise ContractViolation(f"curvature mismatch: {cx} vs {cy}")
    c = c if c is not None else (cx if cx is not None else cy)
    xa, c = _unpack_point(x, c)
    ya, c = _unpack_point(y, c)
    _same_dim(xa, ya)
    return xa, ya, c


def origin(n, c):
    """The hyperboloid origin ``[0, ..., 0, 1/sqrt(c)]`` in dimension ``n``."""
    c = check_curvature(c, c_min=0.0)
    o = np.zeros(n + 1)
    o[-1] = 1.0 / np.sqrt(c)
    return o


def hyperboloid_residual(x, c):
    """``<x, x>_L + 1/c``, zero on the hyperboloid."""
    x = np.asarray(x, dtype=np.float64)
    return np.sum(x[..., :-1] ** 2, axis=-1) - x[..., -1] ** 2 + 1.0 / c


# ---------------------------------------------------------------------------
# inner product and distance
# ---------------------------------------------------------------------------


def lorentz_inner(x, y):
    """Lorentzian inner product ``<x_space, y_space> - x_time * y_time``."""
    if isinstance(x, LorentzPoint):
        x = x.coords
    if isinstance(y, LorentzPoint):
        y = y.coords
    x = _arr(x)
    y = _arr(y, "y")
    _same_dim(x, y)
    return np.sum(x[..., :-1] * y[..., :-1], axis=-1) - x[..., -1] * y[..., -1]


def lorentz_inner_vjp(x, y, g=1.0):
    g = np.asarray(g, dtype=np.float64)[..., None]
    return g * _minkowski(y), g * _minkowski(x)


def _acosh_arg(x, y, c):
    a = -c * lorentz_inner(x, y)
    if np.any(a < 1.0 - DOMAIN_TOL):
        raise NumericDomainError(f"arcosh argument {np.min(a):.9g} is below 1")
    return np.maximum(a, 1.0)


def distance(x, y, c=None):
    """Geodesic distance ``arcosh(-c <x,y>_L) / sqrt(c)``."""
    x, y, c = _unpack_pair(x, y, c)
    return np.arccosh(_acosh_arg(x, y, c)) / np.sqrt(c)


def distance_vjp(x, y, c, g=1.0):
    """Gradients of ``distance`` w.r.t. ``x``, ``y`` and ``c``.

    Undefined at coincident points (the arcosh branch point); there the
    gradient is reported as zero.
    """
    x, y, c = _unpack_pair(x, y, c)
    g = np.asarray(g, dtype=np.float64)
    s = lorentz_inner(x, y)
    a = np.maximum(-c * s, 1.0)
    root = np.sqrt(a * a - 1.0)
    inv = np.where(root > 0, 1.0 / np.where(root > 0, root, 1.0), 0.0)
    sc = np.sqrt(c)
    dd_da = inv / sc
    gx = (g * dd_da * -c)[..., None] * _minkowski(y)
    gy = (g * dd_da * -c)[..., None] * _minkowski(x)
    dd_dc = -0.5 * np.arccosh(a) / (c * sc) + dd_da * -s
    return gx, gy, np.sum(g * dd_dc)


# ---------------------------------------------------------------------------
# tangent projection, exponential and logarithmic maps
# ---------------------------------------------------------------------------


def proj_tangent(x, u, c=None):
    """Project an ambient vector onto the tangent space at ``x``."""
    x, c = _unpack_point(x, c)
    u = _arr(u, "u")
    _same_dim(x, u)
    return u + c * x * lorentz_inner(x, u)[..., None]


def proj_tangent_vjp(x, u, c, g):
    x = _arr(x)
    u = _arr(u, "u")
    g = _arr(g, "g")
    s = lorentz_inner(x, u)
    gx_dot = np.sum(g * x, axis=-1)
    gx = c * s[..., None] * g + c * gx_dot[..., None] * _minkowski(u)
    gu = g + c * gx_dot[..., None] * _minkowski(x)
    gc = np.sum(gx_dot * s)
    return gx, gu, gc


def lorentz_norm(v):
    """``sqrt(|<v, v>_L|)``."""
    v = _arr(v, "v")
    return np.sqrt(np.abs(lorentz_inner(v, v)))


def expm(x, v, c=None):
    """Exponential map at ``x`` applied to the tangent vector ``v``."""
    if isinstance(v, TangentVector):
        if isinstance(x, LorentzPoint) and (x is not v.base and not np.array_equal(x.coords, v.base.coords)):
            raise ContractViolation("tangent vector is based at a different point")
        v = v.ambient
    x, c = _unpack_point(x, c)
    v = _arr(v, "v")
    _same_dim(x, v)
    theta = np.sqrt(c) * lorentz_norm(v)
    return np.cosh(theta)[..., None] * x + _sinhc(theta)[..., None] * v


def expm_vjp(x, v, c, g):
    x = _arr(x)
    v = _arr(v, "v")
    g = _arr(g, "g")
    sc = np.sqrt(c)
    q = lorentz_inner(v, v)
    n = np.sqrt(np.abs(q))
    theta = sc * n
    gdx = np.sum(g * x, axis=-1)
    gdv = np.sum(g * v, axis=-1)
    dtheta = np.sinh(theta) * gdx + _dsinhc(theta) * gdv
    # d theta / d v = sqrt(c) * sign(q) * J v / n
    safe_n = np.where(n > 0, n, 1.0)
    dn_dv = np.where((n > 0)[..., None], (np.sign(q) / safe_n)[..., None] * _minkowski(v), 0.0)
    gx = np.cosh(theta)[..., None] * g
    gv = _sinhc(theta)[..., None] * g + (dtheta * sc)[..., None] * dn_dv
    gc = np.sum(dtheta * n * 0.5 / sc)
    return gx, gv, gc


def _log_coef(a):
    """arcosh(a) / sqrt(a^2 - 1) for a >= 1, with its series near a = 1."""
    z = a - 1.0
    small = z < 1e-7
    zz = np.where(small, 1.0, z)
    # written in z = a - 1 so that a^2 - 1 = z (2 + z) does not cancel
    root = np.sqrt(zz * (2.0 + zz))
    direct = np.log1p(zz + root) / root
    return np.where(small, 1.0 - z / 3.0, direct)


def _dlog_coef(a):
    z = a - 1.0
    small = z < 1e-5
    aa = np.where(small, 2.0, a)
    root = np.sqrt(aa * aa - 1.0)
    direct = (1.0 - aa * np.arccosh(aa) / root) / (aa * aa - 1.0)
    return np.where(small, -1.0 / 3.0 + 4.0 * z / 15.0, direct)


def _log_arg(y, x, c):
    s = lorentz_inner(y, x)
    disc = (c * s) ** 2 - 1.0
    if np.any(disc < -DOMAIN_TOL):
        raise NumericDomainError(f"(c<y,x>_L)^2 - 1 = {np.min(disc):.3g} is negative")
    return s, np.maximum(-c * s, 1.0)


def logm(y, x, c=None):
    """Logarithmic map at ``y``: the tangent vector at ``y`` pointing to ``x``."""
    y, x, c = _unpack_pair(y, x, c)
    s, a = _log_arg(y, x, c)
    w = x + c * y * s[..., None]
    return _log_coef(a)[..., None] * w


def logm_vjp(y, x, c, g):
    y = _arr(y)
    x = _arr(x)
    g = _arr(g, "g")
    s, a = _log_arg(y, x, c)
    w = x + c * y * s[..., None]
    k = _log_coef(a)
    dk = _dlog_coef(a)
    gw = k[..., None] * g
    ga = dk * np.sum(g * w, axis=-1)
    # a = -c s ; w = x + c y s
    gy_w, gx_w, gc_w = proj_tangent_vjp(y, x, c, gw)
    gy = gy_w + (ga * -c)[..., None] * _minkowski(x)
    gx = gx_w + (ga * -c)[..., None] * _minkowski(y)
    gc = gc_w + np.sum(ga * -s)
    return gy, gx, gc


def expm_origin(v_space, c):
    """Lift a Euclidean feature (tangent at the origin, zero time part) onto the hyperboloid."""
    v = _arr(v_space, "v_space")
    c = check_curvature(c, c_min=0.0)
    sc = np.sqrt(c)
    n = np.linalg.norm(v, axis=-1)
    space = _sinhc(sc * n)[..., None] * v
    time = np.sqrt(1.0 / c + np.sum(space * space, axis=-1))
    return np.concatenate([space, time[..., None]], axis=-1)


def expm_origin_vjp(v_space, c, g, out=None):
    """Gradients of :func:`expm_origin` w.r.t. the feature and the curvature."""
    v = _arr(v_space, "v_space")
    g = _arr(g, "g")
    if out is None:
        out = expm_origin(v, c)
    space = out[..., :-1]
    time = out[..., -1]
    sc = np.sqrt(c)
    gt = g[..., -1]
    gs = g[..., :-1] + (gt / time)[..., None] * space
    gc = np.sum(gt * (-0.5 / (c * c)) / time)
    n = np.linalg.norm(v, axis=-1)
    theta = sc * n
    dot = np.sum(gs * v, axis=-1)
    dsh = _dsinhc(theta) * dot
    safe_n = np.where(n > 0, n, 1.0)
    gv = _sinhc(theta)[..., None] * gs + np.where((n > 0)[..., None], (dsh * sc / safe_n)[..., None] * v, 0.0)
    gc = gc + np.sum(dsh * n * 0.5 / sc)
    return gv, gc


# ---------------------------------------------------------------------------
# entailment-cone geometry
# ---------------------------------------------------------------------------


def half_aperture(x, c=None, k=APERTURE_K):
    """Half-aperture ``arcsin(min(1, 2k / (sqrt(c) |x_space|)))`` of the cone at ``x``."""
    x, c = _unpack_point(x, c)
    rho = np.linalg.norm(x[..., :-1], axis=-1)
    if np.any(rho == 0.0):
        raise DegenerateGeometryError("the origin has no entailment cone")
    return np.arcsin(np.minimum(1.0, 2.0 * k / (np.sqrt(c) * rho)))


def half_aperture_vjp(x, c, g=1.0, k=APERTURE_K):
    x = _arr(x)
    g = np.asarray(g, dtype=np.float64)
    xs = x[..., :-1]
    rho = np.linalg.norm(xs, axis=-1)
    if np.any(rho == 0.0):
        raise DegenerateGeometryError("the origin has no entailment cone")
    q = 2.0 * k / (np.sqrt(c) * rho)
    active = q < 1.0
    dq = np.where(active, 1.0 / np.sqrt(np.where(active, 1.0 - q * q, 1.0)), 0.0) * g
    gx = np.zeros_like(x)
    gx[..., :-1] = (dq * -q / (rho * rho))[..., None] * xs
    gc = np.sum(dq * -q / (2.0 * c))
    return gx, gc


def _angle_parts(v, t, c):
    s = lorentz_inner(t, v)
    a = c * s
    disc = a * a - 1.0
    rho = np.linalg.norm(t[..., :-1], axis=-1)
    if np.any(rho == 0.0):
        raise DegenerateGeometryError("exterior angle is undefined at the origin")
    if np.any(disc <= ANGLE_EPS):
        raise DegenerateGeometryError("exterior angle is undefined for coincident points")
    num = v[..., -1] + t[..., -1] * a
    den = rho * np.sqrt(disc)
    return s, a, disc, rho, num, den


def exterior_angle(v, t, c=None):
    """Angle at ``t`` between the ray away from the origin and the geodesic toward ``v``."""
    v, t, c = _unpack_pair(v, t, c)
    *_, num, den = _angle_parts(v, t, c)
    return np.arccos(np.clip(num / den, -1.0, 1.0))


def exterior_angle_vjp(v, t, c, g=1.0):
    """Gradients of :func:`exterior_angle` w.r.t. ``v``, ``t`` and ``c``.

    At the clip boundary (|cos| >= 1) the gradient is zero.
    """
    v = _arr(v, "v")
    t = _arr(t, "t")
    g = np.asarray(g, dtype=np.float64)
    s, a, disc, rho, num, den = _angle_parts(v, t, c)
    z = num / den
    inside = np.abs(z) < 1.0
    dz = np.where(inside, -1.0 / np.sqrt(np.where(inside, 1.0 - z * z, 1.0)), 0.0) * g
    root = np.sqrt(disc)
    # z = num / den; num = v_t + t_t a; den = rho sqrt(a^2 - 1)
    dz_dnum = dz / den
    dz_dden = -dz * num / (den * den)
    da = dz_dnum * t[..., -1] + dz_dden * rho * a / root
    gv = (da * c)[..., None] * _minkowski(t)
    gv[..., -1] += dz_dnum
    gt = (da * c)[..., None] * _minkowski(v)
    gt[..., -1] += dz_dnum * a
    gt[..., :-1] += (dz_dden * root / rho)[..., None] * t[..., :-1]
    gc = np.sum(da * s)
    return gv, gt, gc
