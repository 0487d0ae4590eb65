"""Distance between hyperbolic manifolds of different curvature.

``manifold_distance(c_a, c_b, r)`` is the closed-form KL-derived
dissimilarity between the manifolds of curvature ``-c_a`` (reference) and
``-c_b`` (candidate).  ``solve_intermediate`` finds the curvature ``c3*``
minimising the summed distance to two manifolds and differentiates the
minimiser through the implicit function theorem.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    ContractViolation,
    MagnitudeOverflowError,
    NumericError,
    RootBracketError,
    SingularHessianError,
)
from .lorentz import C_MIN_DEFAULT, check_curvature

COSH_ARG_MAX = 700.0
HESSIAN_RTOL = 1e-10
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class UncertifiedRadiusWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RadiusParameter:
    """Norm of the tangent-space feature midpoint that enters the distance."""

    r: float
    source: str = "fixed"
    clamped: bool = False

    def __post_init__(self):
        r = float(self.r)
        if not math.isfinite(r) or r < 0.0:
            raise ContractViolation(f"radius must be finite and non-negative, got {self.r}")
        if self.source not in ("fixed", "batch-computed"):
            raise ContractViolation(f"unknown radius source {self.source!r}")
        object.__setattr__(self, "r", r)

    def clamp_to(self, r_min):
        if self.r >= r_min:
            return self
        return RadiusParameter(r_min, self.source, clamped=True)


@dataclass(frozen=True)
class ConvexityCertificate:
    r_min_star: float
    binding_term: str
    terms: dict = field(default_factory=dict)
    dropped: tuple = ()
    r: float | None = None

    @property
    def satisfied(self):
        return self.r is not None and self.r >= self.r_min_star


@dataclass(frozen=True)
class IntermediateSolution:
    c3_star: float
    dc3_dc1: float
    dc3_dc2: float
    objective_value: float
    bracket: tuple
    iterations: int
    certified: bool = True
    stationarity: float = 0.0

    def to_dict(self):
        return {
            "c3_star": self.c3_star,
            "dc3_dc1": self.dc3_dc1,
            "dc3_dc2": self.dc3_dc2,
            "objective_value": self.objective_value,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "certified": self.certified,
            "stationarity": self.stationarity,
        }


def _radius(r):
    if isinstance(r, RadiusParameter):
        return r.r
    return RadiusParameter(r).r


def _check_overflow(c_a, c_b, r):
    arg = np.abs(np.sqrt(c_b) - np.sqrt(c_a)) * r
    if np.any(arg > COSH_ARG_MAX):
        raise MagnitudeOverflowError(f"cosh argument {np.max(arg):.4g} exceeds {COSH_ARG_MAX}")


def manifold_distance(c_a, c_b, r):
    """``(-sqrt(c_a) + 2 sqrt(c_b) cosh((sqrt(c_b) - sqrt(c_a)) r)) / (2 sqrt(c_a) c_b)``.

    Asymmetric: ``c_a`` is the reference manifold, ``c_b`` the candidate.
    ``c_b`` may be an array (evaluated elementwise).
    """
    c_a = check_curvature(c_a, c_min=0.0)
    r = _radius(r)
    c_b = np.asarray(c_b, dtype=np.float64)
    if np.any(~np.isfinite(c_b)) or np.any(c_b <= 0):
        raise ContractViolation("candidate curvature must be positive and finite")
    _check_overflow(c_a, c_b, r)
    sa = math.sqrt(c_a)
    sb = np.sqrt(c_b)
    out = (-sa + 2.0 * sb * np.cosh((sb - sa) * r)) / (2.0 * sa * c_b)
    return float(out) if out.ndim == 0 else out


def objective_jc(c3, c1, c2, r):
    """Summed distance from the two source manifolds to the candidate ``c3``."""
    return manifold_distance(c1, c3, r) + manifold_distance(c2, c3, r)


def _distance_partials(p, q, r):
    """Partials of D = -1/(2 q^2) + cosh(r (q - p)) / (p q) in (p, q) = sqrt curvatures."""
    u = r * (q - p)
    e = math.cosh(u)
    s = math.sinh(u)
    f_q = 1.0 / q**3 + r * s / (p * q) - e / (p * q * q)
    f_qq = -3.0 / q**4 + r * r * e / (p * q) - 2.0 * r * s / (p * q * q) + 2.0 * e / (p * q**3)
    f_qp = -r * r * e / (p * q) - r * s / (p * p * q) + r * s / (p * q * q) + e / (p * p * q * q)
    return f_q, f_qq, f_qp


def distance_c3_derivatives(c_ref, c3, r):
    """(dD/dc3, d2D/dc3^2, d2D/dc3 dc_ref) for D = manifold_distance(c_ref, c3, r)."""
    _check_overflow(c_ref, c3, r)
    p = math.sqrt(c_ref)
    q = math.sqrt(c3)
    f_q, f_qq, f_qp = _distance_partials(p, q, r)
    d1 = f_q / (2.0 * q)
    d2 = (q * f_qq - f_q) / (4.0 * q**3)
    dm = f_qp / (4.0 * p * q)
    return d1, d2, dm


def jc_derivatives(c3, c1, c2, r):
    """Closed-form ``(dJ/dc3, d2J/dc3^2, d2J/dc3dc1, d2J/dc3dc2)``."""
    c1 = check_curvature(c1, c_min=0.0)
    c2 = check_curvature(c2, c_min=0.0)
    c3 = check_curvature(c3, c_min=0.0)
    r = _radius(r)
    a1, a2, m1 = distance_c3_derivatives(c1, c3, r)
    b1, b2, m2 = distance_c3_derivatives(c2, c3, r)
    return a1 + b1, a2 + b2, m1, m2


def golden_section_minimize(f, low, high, tol=1e-8):
    """Golden-section search for the minimiser of a unimodal ``f`` on ``[low, high]``.

    Runs exactly ``ceil(log((high - low) / tol) / log(1 / INV_PHI))`` interval
    reductions and returns ``(x_star, f_star, iterations)`` where ``x_star`` is
    the midpoint of the final bracket.
    """
    low = float(low)
    high = float(high)
    if not low < high:
        raise ContractViolation(f"need low < high, got [{low}, {high}]")
    if not tol > 0:
        raise ContractViolation("tol must be positive")
    h = high - low
    n = max(0, math.ceil(math.log(h / tol) / math.log(1.0 / INV_PHI)))
    a, b = low, high
    x1 = b - INV_PHI * h
    x2 = a + INV_PHI * h
    f1, f2 = f(x1), f(x2)
    for _ in range(n):
        if not (math.isfinite(f1) and math.isfinite(f2)):
            raise NumericError("objective returned a non-finite value")
        h *= INV_PHI
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * h
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * h
            f2 = f(x2)
    x = 0.5 * (a + b)
    return x, f(x), n


def _newton_polish(c3, c1, c2, r, low, high, max_iter=30):
    """Refine a golden-section estimate to floating-point stationarity."""
    best = c3
    best_g = abs(jc_derivatives(c3, c1, c2, r)[0])
    x = c3
    for _ in range(max_iter):
        g, h, _, _ = jc_derivatives(x, c1, c2, r)
        if g == 0.0 or h <= 0.0:
            break
        nxt = min(max(x - g / h, low), high)
        if nxt == x:
            break
        x = nxt
        gx = abs(jc_derivatives(x, c1, c2, r)[0])
        if gx < best_g:
            best, best_g = x, gx
        elif gx > 10 * best_g:
            break
    return best


def solve_intermediate(c1, c2, r, tol=1e-8, c_min=C_MIN_DEFAULT):
    """Minimise ``J_c`` over ``[min(c1, c2), max(c1, c2)]`` and differentiate the minimiser.

    An uncertified radius (below the convexity threshold) still runs but the
    result carries ``certified=False`` and an :class:`UncertifiedRadiusWarning`
    is emitted.
    """
    c1 = check_curvature(c1, c_min)
    c2 = check_curvature(c2, c_min)
    r = _radius(r)
    cert = r_min_threshold(c1, c2, c_min, r=r)
    if not cert.satisfied:
        warnings.warn(
            f"radius {r:.4g} is below the convexity threshold {cert.r_min_star:.4g}",
            UncertifiedRadiusWarning,
            stacklevel=2,
        )
    low, high = min(c1, c2), max(c1, c2)
    _check_overflow(low, high, r)
    if low == high:
        c3, iters = low, 0
    else:
        c3, _, iters = kernels.golden_jc(c1, c2, r, low, high, tol)
        c3 = _newton_polish(c3, c1, c2, r, low, high)
    d1, d2, m1, m2 = jc_derivatives(c3, c1, c2, r)
    # curvature of J_c on its natural scale |J| / c3^2; below this the
    # minimiser is not isolated and the implicit partials are meaningless
    if d2 <= HESSIAN_RTOL * max(1.0, abs(objective_jc(c3, c1, c2, r))) / (c3 * c3):
        raise SingularHessianError(f"d2J/dc3^2 = {d2:.3g} at c3* = {c3:.6g} is not positive")
    return IntermediateSolution(
        c3_star=c3,
        dc3_dc1=-m1 / d2,
        dc3_dc2=-m2 / d2,
        objective_value=objective_jc(c3, c1, c2, r),
        bracket=(low, high),
        iterations=iters,
        certified=cert.satisfied,
        stationarity=d1,
    )


def _a_term(y):
    ac = math.acosh(y)
    return ac * ac - 2.0 * ac * y / math.sqrt(y * y - 1.0)


def _b_term(y):
    return 2.0 * math.acosh(y) / math.sqrt(y * y - 1.0)


def y1_residual(y):
    """``A(y) + B(y)/2``: vanishes at the Taylor anchor of the distance derivation."""
    return _a_term(y) + 0.5 * _b_term(y)


def solve_y1_star(low=1.0 + 1e-6, high=10.0, tol=1e-10):
    """Bisection root of :func:`y1_residual`; returns ``(y, B(y))``."""
    flo, fhi = y1_residual(low), y1_residual(high)
    if flo * fhi > 0:
        raise RootBracketError(f"no sign change on [{low}, {high}]")
    while high - low > tol:
        mid = 0.5 * (low + high)
        fm = y1_residual(mid)
        if fm == 0.0:
            low = high = mid
            break
        if (fm < 0) == (flo < 0):
            low, flo = mid, fm
        else:
            high = mid
    y = 0.5 * (low + high)
    return y, _b_term(y)


def _log_threshold(c, gap, c_min):
    return math.log(12.0 * math.sqrt(c) / (c_min**1.5 * gap * gap)) / gap


def r_min_threshold(c1, c2, c_min=C_MIN_DEFAULT, r=None):
    """Sufficient radius for strict convexity of ``J_c`` over the curvature bracket.

    Terms whose gap vanishes (``c_lo == c_min`` or ``c1 == c2``) are dropped and
    listed in ``dropped``.
    """
    c_min = float(c_min)
    if not c_min > 0:
        raise ContractViolation("c_min must be positive")
    c1 = check_curvature(c1, c_min)
    c2 = check_curvature(c2, c_min)
    lo, hi = min(c1, c2), max(c1, c2)
    terms = {"inv_sqrt_c1": 1.0 / math.sqrt(lo)}
    dropped = []
    gap_lo = math.sqrt(lo) - math.sqrt(c_min)
    if gap_lo > 0:
        terms["two_over_L"] = 2.0 / gap_lo
        terms["log_L"] = _log_threshold(lo, gap_lo, c_min)
    else:
        dropped += ["two_over_L", "log_L"]
    if hi != lo:
        gap_hi = math.sqrt(hi) - math.sqrt(c_min)
        terms["inv_sqrt_c2"] = 1.0 / math.sqrt(hi)
        terms["two_over_Mmin"] = 2.0 / gap_hi
        terms["log_Mmin"] = _log_threshold(hi, gap_hi, c_min)
        terms["four_over_M"] = 4.0 / (math.sqrt(hi) - math.sqrt(lo))
        terms["three_over_sqrt_c2"] = 3.0 / math.sqrt(hi)
    else:
        dropped += ["inv_sqrt_c2", "two_over_Mmin", "log_Mmin", "four_over_M", "three_over_sqrt_c2"]
    binding = max(terms, key=terms.get)
    return ConvexityCertificate(
        r_min_star=terms[binding],
        binding_term=binding,
        terms=terms,
        dropped=tuple(dropped),
        r=None if r is None else _radius(r),
    )


def compute_r(tangent_features):
    """Norm of the arithmetic mean of a batch of tangent-space features."""
    feats = np.asarray(tangent_features, dtype=np.float64)
    if feats.size == 0:
        raise ContractViolation("compute_r needs at least one feature")
    feats = feats.reshape(-1, feats.shape[-1])
    return RadiusParameter(float(np.linalg.norm(feats.mean(axis=0))), source="batch-computed")
