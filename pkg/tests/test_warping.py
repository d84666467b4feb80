import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from grwlab.errors import (ConstraintError, DomainError, InvalidFamilyError,
                           InvalidWarpingError)
from grwlab.warping import (Interval, WarpingFunction, cosh_warping, einstein_residuals,
                            make_einstein_family, positivity_interval, primitive_G,
                            standard_einstein_row)

T = sp.Symbol("t", real=True)


def symbolic(family, p):
    if family == "constant":
        return sp.Float(p[0]) + 0 * T
    if family == "exponential":
        return p[0] * sp.exp(p[1] * T)
    if family == "cosh-type":
        return p[0] * sp.exp(p[1] * T) + p[2] * sp.exp(-p[1] * T)
    if family == "affine":
        return p[0] * T + p[1]
    return p[0] * sp.cos(p[2] * T) + p[1] * sp.sin(p[2] * T)


CASES = [
    ("constant", (2.5,), 0.3),
    ("exponential", (1.5, -0.7), 0.4),
    ("cosh-type", (0.5, 1.0, 0.5), -0.8),
    ("cosh-type", (1.0, 2.0, -0.2), 0.9),
    ("affine", (0.4, 2.0), 0.5),
    ("trigonometric", (1.0, 0.3, 1.2), 0.2),
]


@pytest.mark.parametrize("family,params,t", CASES)
def test_derivatives_match_symbolic(family, params, t):
    expr = symbolic(family, params)
    f = WarpingFunction(family, params, positivity_interval(family, params))
    want = [float(expr.subs(T, t)), float(sp.diff(expr, T).subs(T, t)),
            float(sp.diff(expr, T, 2).subs(T, t)),
            float(sp.diff(sp.log(expr), T, 2).subs(T, t))]
    np.testing.assert_allclose(f.eval(t), want, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("family,params,t", CASES)
def test_primitive_matches_symbolic(family, params, t):
    expr = symbolic(family, params)
    f = WarpingFunction(family, params, positivity_interval(family, params), ref_point=0.1)
    want = float(sp.integrate(expr, (T, 0.1, t)))
    assert primitive_G(f, t) == pytest.approx(want, rel=1e-11, abs=1e-13)


def test_constant_family_values():
    f = WarpingFunction("constant", (3.0,))
    assert tuple(map(float, f.eval(7.0))) == (3.0, 0.0, 0.0, 0.0)
    assert f.G(2.0) == pytest.approx(6.0)


def test_exponential_log_second_vanishes():
    f = WarpingFunction("exponential", (2.0, 0.7))
    ts = np.linspace(-3, 3, 31)
    assert np.max(np.abs(f.eval(ts)[3])) < 1e-13


def test_cosh_at_zero():
    f = cosh_warping()
    np.testing.assert_allclose(f.eval(0.0), (1.0, 0.0, 1.0, 1.0), atol=1e-15)
    assert f.G(1.0) == pytest.approx(math.sinh(1.0), rel=1e-12)
    assert f.G(1.0) == pytest.approx(1.1752011936, abs=1e-10)


def test_exp_primitive():
    f = WarpingFunction("exponential", (1.0, 1.0))
    assert f.G(1.0) == pytest.approx(math.e - 1.0, rel=1e-14)


def test_custom_family_uses_quadrature():
    f = WarpingFunction("custom-analytic", (), callbacks=(np.cosh, np.sinh, np.cosh))
    assert f.G(1.0) == pytest.approx(math.sinh(1.0), rel=1e-10)


def test_custom_bad_callbacks_rejected():
    with pytest.raises(InvalidWarpingError):
        WarpingFunction("custom-analytic", (), callbacks=(np.cosh, np.cosh, np.cosh))


def test_domain_and_positivity_errors():
    f = WarpingFunction("affine", (1.0, 1.0), Interval(-1.0, 5.0))
    with pytest.raises(DomainError):
        f.eval(-2.0)
    with pytest.raises(InvalidWarpingError):
        WarpingFunction("affine", (1.0, 1.0))  # crosses zero at t = -1
    with pytest.raises(InvalidWarpingError):
        WarpingFunction("exponential", (1.0,))


@pytest.mark.parametrize("family,params", [("cosh-type", (1.0, 1.0, -0.5)),
                                           ("affine", (-2.0, 1.0)),
                                           ("trigonometric", (0.6, 0.8, 2.0))])
def test_positivity_interval_endpoints_are_roots(family, params):
    dom = positivity_interval(family, params)
    expr = symbolic(family, params)
    for end in (dom.lo, dom.hi):
        if math.isfinite(end):
            assert abs(float(expr.subs(T, end))) < 1e-12
    mid = dom.window(0.0 if dom.contains(0.0) else (dom.lo if math.isfinite(dom.lo) else dom.hi), 1.0)
    assert float(expr.subs(T, 0.5 * (mid[0] + mid[1]))) > 0


def test_einstein_case4_is_constant():
    f = make_einstein_family(4, 2, 0.0, 0.0, {"a": 3.0})
    assert f.family == "constant" and f.params == (3.0,)


def test_einstein_case2_exponential():
    f = make_einstein_family(2, 3, 3.0, 0.0, {"a": 1.0, "eps": 1.0})
    assert f(0.7) == pytest.approx(math.exp(0.7), rel=1e-14)


def test_einstein_case6_amplitude_constraint():
    f = make_einstein_family(6, 2, -2.0, -1.0, {"a1": 1.0, "a2": 0.0})
    assert f(0.3) == pytest.approx(math.cos(0.3))
    with pytest.raises(ConstraintError) as exc:
        make_einstein_family(6, 2, -2.0, -1.0, {"a1": 2.0, "a2": 0.0})
    assert exc.value.residual == pytest.approx(3.0)


def test_einstein_sign_pattern():
    with pytest.raises(InvalidFamilyError):
        make_einstein_family(1, 2, 2.0, -1.0, {"a": 1.0})


def test_de_sitter_values_solve_einstein_system():
    r1, r2 = einstein_residuals(cosh_warping(), 2, 2.0, 1.0, np.linspace(-3, 3, 100))
    assert max(r1, r2) < 1e-10


def test_non_einstein_has_residual():
    f = WarpingFunction("custom-analytic", (), Interval(-1, 1),
                        callbacks=(lambda t: t * t + 2, lambda t: 2 * t, lambda t: 2 + 0 * t))
    r1, _ = einstein_residuals(f, 2, 0.0, 0.0, [0.0])
    assert r1 == pytest.approx(1.0)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("case", range(1, 7))
def test_standard_rows_solve_system(case, n):
    row = standard_einstein_row(case, n)
    f = make_einstein_family(case, n, row["c_bar"], row["c"], row["params"])
    ts = f.domain.sample(100, f.ref_point, 2.0)
    assert max(einstein_residuals(f, n, row["c_bar"], row["c"], ts)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.1, 5.0), b=st.floats(-2.0, 2.0), t=st.floats(-2.0, 2.0))
def test_exponential_primitive_derivative_is_f(a, b, t):
    f = WarpingFunction("exponential", (a, b))
    h = 1e-5
    fd = (f.G(t + h) - f.G(t - h)) / (2 * h)
    assert fd == pytest.approx(float(f(t)), rel=1e-7)
