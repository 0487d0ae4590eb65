import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import numeric_deriv, numeric_grad, random_point, random_tangent, rel_err
from hypalign.errors import ContractViolation, DegenerateGeometryError, NumericDomainError
from hypalign.lorentz import (
    LorentzPoint,
    TangentVector,
    check_curvature,
    distance,
    distance_vjp,
    expm,
    expm_origin,
    expm_origin_vjp,
    expm_vjp,
    exterior_angle,
    exterior_angle_vjp,
    half_aperture,
    half_aperture_vjp,
    hyperboloid_residual,
    logm,
    logm_vjp,
    lorentz_inner,
    lorentz_inner_vjp,
    lorentz_norm,
    origin,
    proj_tangent,
    proj_tangent_vjp,
)

curv = st.floats(0.01, 2.0)
dims = st.integers(2, 16)
seeds = st.integers(0, 2**32 - 1)


# -- curvature and point types ---------------------------------------------


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf"), "x"])
def test_curvature_rejects_invalid(bad):
    with pytest.raises(ContractViolation):
        check_curvature(bad)


def test_curvature_floor():
    with pytest.raises(ContractViolation):
        check_curvature(1e-5)
    assert check_curvature(1e-5, c_min=1e-6) == 1e-5


def test_point_membership_enforced():
    LorentzPoint(np.array([0.0, 0.0, 1.0]), 1.0)
    with pytest.raises(ContractViolation):
        LorentzPoint(np.array([0.0, 0.0, 1.1]), 1.0)
    p = LorentzPoint.from_space([0.3, -0.4], 0.5)
    assert p.dim == 2
    assert abs(hyperboloid_residual(p.coords, 0.5)) < 1e-12


def test_tangent_vector_checks_tangency():
    x = LorentzPoint(origin(2, 1.0), 1.0)
    TangentVector(np.array([0.3, 0.7, 0.0]), x)
    with pytest.raises(ContractViolation):
        TangentVector(np.array([0.3, 0.7, 1.0]), x)


# -- inner product ------------------------------------------------------------


def test_inner_examples():
    o = origin(2, 1.0)
    assert lorentz_inner(o, o) == -1.0
    x = np.array([1.0, 0.0, math.sqrt(2)])
    y = np.array([0.0, 1.0, math.sqrt(2)])
    assert lorentz_inner(x, y) == pytest.approx(-2.0, abs=1e-15)
    o4 = np.array([0.0, 0.0, 2.0])
    assert lorentz_inner(o4, o4) == -4.0


def test_inner_dimension_mismatch():
    with pytest.raises(ContractViolation):
        distance(np.zeros(3), np.zeros(4), 1.0)


# -- distance -----------------------------------------------------------------


def test_distance_self_zero(rng):
    for _ in range(20):
        c = rng.uniform(0.05, 2)
        x = random_point(rng, 5, c)
        assert distance(x, x, c) == pytest.approx(0.0, abs=1e-6)


def test_distance_from_origin_unit_speed():
    x = expm_origin(np.array([0.5, 0.0, 0.0]), 1.0)
    assert distance(origin(3, 1.0), x, 1.0) == pytest.approx(0.5, abs=1e-12)


def test_distance_symmetric(rng):
    for _ in range(100):
        c = rng.uniform(0.01, 2)
        x = random_point(rng, 4, c)
        y = random_point(rng, 4, c)
        assert abs(distance(x, y, c) - distance(y, x, c)) <= 1e-10


def test_distance_curvature_mismatch():
    a = LorentzPoint(origin(2, 1.0), 1.0)
    b = LorentzPoint(origin(2, 0.5), 0.5)
    with pytest.raises(ContractViolation):
        distance(a, b)


def test_distance_domain_error():
    # -c<x,y> well below 1 cannot come from two hyperboloid points
    with pytest.raises(NumericDomainError):
        distance(np.array([0.0, 0.5]), np.array([0.0, 0.5]), 1.0)


# -- tangent projection ------------------------------------------------------


def test_proj_origin_example():
    out = proj_tangent(origin(2, 1.0), np.array([0.3, 0.7, 1.2]), 1.0)
    np.testing.assert_allclose(out, [0.3, 0.7, 0.0], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=seeds, c=curv, n=dims)
def test_proj_idempotent_and_tangent(seed, c, n):
    rng = np.random.default_rng(seed)
    x = random_point(rng, n, c)
    u = rng.normal(size=n + 1)
    p = proj_tangent(x, u, c)
    np.testing.assert_allclose(proj_tangent(x, p, c), p, atol=1e-9 * max(1, np.abs(p).max()))
    assert abs(lorentz_inner(x, p)) <= 1e-8 * max(1.0, np.abs(x).max() * np.abs(p).max())


# -- exp / log ----------------------------------------------------------------


def test_expm_zero_is_identity(rng):
    x = random_point(rng, 3, 0.7)
    np.testing.assert_array_equal(expm(x, np.zeros(4), 0.7), x)


def test_expm_origin_values():
    out = expm(origin(2, 1.0), np.array([1.0, 0.0, 0.0]), 1.0)
    assert out[-1] == pytest.approx(1.5430806, abs=1e-7)
    assert out[0] == pytest.approx(1.1752012, abs=1e-7)


def test_expm_rejects_foreign_base(rng):
    a = LorentzPoint(random_point(rng, 2, 1.0), 1.0)
    b = LorentzPoint(random_point(rng, 2, 1.0), 1.0)
    v = TangentVector(random_tangent(rng, b.coords, 1.0), b)
    with pytest.raises(ContractViolation):
        expm(a, v)


def test_logm_self_zero(rng):
    x = random_point(rng, 3, 0.3)
    np.testing.assert_allclose(logm(x, x, 0.3), 0.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, c=curv, n=dims)
def test_exp_log_round_trip(seed, c, n):
    rng = np.random.default_rng(seed)
    x = random_point(rng, n, c)
    v = random_tangent(rng, x, c)
    nv = lorentz_norm(v)
    if nv > 3:
        v = v * (3 / nv)
    y = expm(x, v, c)
    assert abs(hyperboloid_residual(y, c)) <= 1e-8 * max(1.0, y[-1] ** 2)
    np.testing.assert_allclose(logm(x, y, c), v, atol=1e-7 * max(1.0, np.abs(v).max()))


@settings(max_examples=60, deadline=None)
@given(seed=seeds, c=curv, n=dims)
def test_log_norm_equals_distance_and_inverse(seed, c, n):
    # feature-scale points; with |x_space| ~ 100 the cosh/sinh terms cancel
    # down to ~|y|^2 ulp and the absolute round-trip error grows accordingly
    rng = np.random.default_rng(seed)
    y = random_point(rng, n, c, scale=0.5)
    x = random_point(rng, n, c, scale=0.5)
    lv = logm(y, x, c)
    d = distance(y, x, c)
    assert abs(lorentz_norm(lv) - d) <= 1e-8 * max(1.0, d)
    np.testing.assert_allclose(expm(y, lv, c), x, atol=1e-7 * max(1.0, np.abs(x).max()))


def test_expm_origin_examples():
    np.testing.assert_array_equal(expm_origin(np.zeros(3), 0.25), [0, 0, 0, 2.0])
    out = expm_origin(np.array([1.0, 0.0]), 1.0)
    np.testing.assert_allclose(out, [1.1752012, 0.0, 1.5430806], atol=1e-7)


@settings(max_examples=80, deadline=None)
@given(seed=seeds, c=curv, n=dims, scale=st.floats(0.0, 3.0))
def test_expm_origin_on_hyperboloid(seed, c, n, scale):
    v = np.random.default_rng(seed).normal(size=n) * scale
    x = expm_origin(v, c)
    assert abs(hyperboloid_residual(x, c)) <= 1e-9 * max(1.0, x[-1] ** 2)


def test_expm_origin_agrees_with_general_expm(rng):
    v = rng.normal(size=4)
    c = 0.6
    amb = np.append(v, 0.0)
    np.testing.assert_allclose(expm_origin(v, c), expm(origin(4, c), amb, c), rtol=1e-12)


# -- aperture and exterior angle ---------------------------------------------


def test_half_aperture_examples():
    x = LorentzPoint.from_space([0.2, 0.0], 1.0)
    assert half_aperture(x) == pytest.approx(math.pi / 2)
    y = LorentzPoint.from_space([0.4, 0.0], 1.0)
    assert half_aperture(y) == pytest.approx(math.pi / 6, abs=1e-14)
    with pytest.raises(DegenerateGeometryError):
        half_aperture(origin(2, 1.0), 1.0)


def test_half_aperture_decreasing():
    rhos = np.linspace(0.21, 5.0, 200)
    ap = [half_aperture(LorentzPoint.from_space([r, 0.0], 1.0)) for r in rhos]
    assert np.all(np.diff(ap) < 0)


def test_exterior_angle_radial():
    c = 0.8
    u = np.array([0.6, -0.8, 0.0])
    t = expm_origin(1.0 * u, c)
    beyond = expm_origin(1.7 * u, c)
    before = expm_origin(0.4 * u, c)
    assert exterior_angle(beyond, t, c) == pytest.approx(0.0, abs=1e-6)
    assert exterior_angle(before, t, c) == pytest.approx(math.pi, abs=1e-6)


def test_exterior_angle_range_and_degenerate(rng):
    c = 1.0
    for _ in range(50):
        t = random_point(rng, 3, c)
        v = t + rng.normal(size=4) * 1e-5
        v = expm_origin(v[:-1], c)  # project back onto the hyperboloid
        try:
            a = exterior_angle(v, t, c)
        except DegenerateGeometryError:
            continue
        assert 0.0 <= a <= math.pi
    t = random_point(rng, 3, c)
    with pytest.raises(DegenerateGeometryError):
        exterior_angle(t, t, c)
    with pytest.raises(DegenerateGeometryError):
        exterior_angle(t, origin(3, c), c)


def test_angle_rotation_invariant(rng):
    c = 0.5
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    for _ in range(10):
        t = rng.normal(size=3)
        v = rng.normal(size=3)
        a = exterior_angle(expm_origin(v, c), expm_origin(t, c), c)
        b = exterior_angle(expm_origin(q @ v, c), expm_origin(q @ t, c), c)
        assert a == pytest.approx(b, abs=1e-10)


# -- gradients against central differences -----------------------------------


def _check(analytic, numeric, tol=1e-4):
    assert rel_err(analytic, numeric) <= tol, (analytic, numeric)


def test_inner_vjp(rng):
    x, y = rng.normal(size=(2, 5))
    gx, gy = lorentz_inner_vjp(x, y, 1.3)
    _check(gx, numeric_grad(lambda a: 1.3 * lorentz_inner(a, y), x))
    _check(gy, numeric_grad(lambda a: 1.3 * lorentz_inner(x, a), y))


@pytest.mark.parametrize("seed", range(5))
def test_distance_vjp(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 2)
    x = random_point(rng, 4, c)
    y = random_point(rng, 4, c)
    gx, gy, gc = distance_vjp(x, y, c, 0.7)
    _check(gx, numeric_grad(lambda a: 0.7 * distance(a, y, c), x, h=1e-5))
    _check(gy, numeric_grad(lambda a: 0.7 * distance(x, a, c), y, h=1e-5))
    _check(gc, numeric_deriv(lambda cc: 0.7 * distance(x, y, cc), c, h=1e-5))


@pytest.mark.parametrize("seed", range(5))
def test_proj_vjp(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 2)
    x = random_point(rng, 3, c)
    u = rng.normal(size=4)
    g = rng.normal(size=4)
    gx, gu, gc = proj_tangent_vjp(x, u, c, g)
    f = lambda a, b, cc: float(np.sum(g * proj_tangent(a, b, cc)))  # noqa: E731
    _check(gx, numeric_grad(lambda a: f(a, u, c), x))
    _check(gu, numeric_grad(lambda b: f(x, b, c), u))
    _check(gc, numeric_deriv(lambda cc: f(x, u, cc), c))


@pytest.mark.parametrize("seed", range(5))
def test_expm_vjp(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 2)
    x = random_point(rng, 3, c)
    v = random_tangent(rng, x, c, 0.8)
    g = rng.normal(size=4)
    gx, gv, gc = expm_vjp(x, v, c, g)
    f = lambda a, b, cc: float(np.sum(g * expm(a, b, cc)))  # noqa: E731
    _check(gx, numeric_grad(lambda a: f(a, v, c), x))
    _check(gv, numeric_grad(lambda b: f(x, b, c), v))
    _check(gc, numeric_deriv(lambda cc: f(x, v, cc), c))


@pytest.mark.parametrize("seed", range(5))
def test_logm_vjp(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 2)
    y = random_point(rng, 3, c)
    x = random_point(rng, 3, c)
    g = rng.normal(size=4)
    gy, gx, gc = logm_vjp(y, x, c, g)
    f = lambda a, b, cc: float(np.sum(g * logm(a, b, cc)))  # noqa: E731
    _check(gy, numeric_grad(lambda a: f(a, x, c), y, h=1e-5))
    _check(gx, numeric_grad(lambda b: f(y, b, c), x, h=1e-5))
    _check(gc, numeric_deriv(lambda cc: f(y, x, cc), c, h=1e-5))


@pytest.mark.parametrize("seed", range(5))
def test_expm_origin_vjp(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 2)
    v = rng.normal(size=(2, 3))
    g = rng.normal(size=(2, 4))
    gv, gc = expm_origin_vjp(v, c, g)
    f = lambda a, cc: float(np.sum(g * expm_origin(a, cc)))  # noqa: E731
    _check(gv, numeric_grad(lambda a: f(a, c), v))
    _check(gc, numeric_deriv(lambda cc: f(v, cc), c))


@pytest.mark.parametrize("seed", range(5))
def test_half_aperture_vjp(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 2)
    x = expm_origin(rng.normal(size=3) * 2 + 1, c)
    gx, gc = half_aperture_vjp(x, c, 1.0)
    _check(gx, numeric_grad(lambda a: half_aperture(a, c), x))
    _check(gc, numeric_deriv(lambda cc: half_aperture(x, cc), c))


@pytest.mark.parametrize("seed", range(8))
def test_exterior_angle_vjp(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 2)
    t = expm_origin(rng.normal(size=3), c)
    v = expm_origin(rng.normal(size=3), c)
    gv, gt, gc = exterior_angle_vjp(v, t, c, 1.0)
    _check(gv, numeric_grad(lambda a: exterior_angle(a, t, c), v))
    _check(gt, numeric_grad(lambda a: exterior_angle(v, a, c), t))
    _check(gc, numeric_deriv(lambda cc: exterior_angle(v, t, cc), c))


def test_log_coefficient_series_matches_sympy():
    import mpmath
    import sympy as sp

    from hypalign.lorentz import _dlog_coef, _log_coef

    z = sp.symbols("z", positive=True)
    a = 1 + z
    coef = sp.acosh(a) / sp.sqrt(a**2 - 1)
    ser = sp.series(coef, z, 0, 2).removeO()
    assert sp.simplify(ser - (1 - z / 3)) == 0
    dser = sp.series(sp.diff(coef, z), z, 0, 2).removeO()
    assert sp.simplify(dser - (sp.Rational(-1, 3) + 4 * z / 15)) == 0
    # both branches agree near the switch-over
    f = sp.lambdify(z, coef, "mpmath")
    df = sp.lambdify(z, sp.diff(coef, z), "mpmath")
    with mpmath.workdps(50):
        for zz in (5e-8, 2e-7, 1e-6):
            a_float = 1.0 + zz
            exact_z = mpmath.mpf(a_float) - 1  # the z the float actually encodes
            assert _log_coef(np.array(a_float)) == pytest.approx(float(f(exact_z)), rel=1e-12)
            assert _dlog_coef(np.array(a_float)) == pytest.approx(float(df(exact_z)), rel=1e-6)
