import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbmsde.errors import CapabilityError, DivergenceError, DomainError
from fbmsde.fields import (QuadraticSigmaSquared, affine, cos_bounded, linear, parse_field, sin_bounded,
                           tanh_bounded)
from fbmsde.flow import (FlowMap, VectorField, doss_map, doss_map_with_derivative, doss_map_y_derivative,
                         expansion_coefficients, flow, flow_inverse, flow_many)
from fbmsde.sde import cn_step

SIN = sin_bounded()
small = st.floats(-2, 2)


def riccati():
    return VectorField(lambda x: 1 + x * x, (lambda x: 2 * x, lambda x: 2.0 + 0 * x, lambda x: 0 * x,
                                             lambda x: 0 * x), name="1+x^2")


def test_flow_examples():
    assert flow(1.0, 1.0, linear()) == pytest.approx(math.e, abs=1e-9)
    assert flow(0.3, 2.5, affine(1.7)) == pytest.approx(0.3 + 1.7 * 2.5, abs=1e-12)
    assert flow(0.0, 1.0, riccati()) == pytest.approx(math.tan(1.0), abs=1e-8)
    assert flow(0.7, 0.0, SIN) == 0.7


def test_blow_up_reports_escape_time():
    with pytest.raises(DivergenceError) as info:
        flow(0.0, 2.0, riccati())
    # tan blows up at pi/2
    assert info.value.escape_time == pytest.approx(math.pi / 2, abs=1e-3)


@given(small, small, small)
def test_semigroup(x, s, t):
    tol = 1e-10
    lhs = flow(flow(x, t, SIN, tol), s, SIN, tol)
    assert abs(lhs - flow(x, t + s, SIN, tol)) <= 10 * tol * max(1.0, abs(lhs))


def test_flow_many_matches_pointwise_and_is_monotone():
    ts = np.array([0.5, -1.0, 0.0, 2.0, 0.5, -0.2])
    many = flow_many(0.4, ts, SIN)
    for t, v in zip(ts, many):
        assert v == pytest.approx(flow(0.4, t, SIN), abs=1e-9)
    grid = np.linspace(-2, 2, 41)
    assert np.all(np.diff(flow_many(0.4, grid, SIN)) > 0)


def test_time_derivative_is_sigma():
    h = 1e-5
    for x, t in ((0.0, 0.3), (1.2, -0.7)):
        fd = (flow(x, t + h, SIN) - flow(x, t - h, SIN)) / (2 * h)
        assert fd == pytest.approx(float(SIN(flow(x, t, SIN))), abs=1e-5)


def test_flow_map_object():
    fm = FlowMap(linear(), tol=1e-11)
    assert fm(2.0, 0.5) == pytest.approx(2 * math.exp(0.5), rel=1e-9)
    assert fm.inverse(2.0, 2 * math.e) == pytest.approx(1.0, abs=1e-8)


def test_inverse_examples():
    assert flow_inverse(0.3, 0.3, SIN) == 0.0
    assert flow_inverse(1.0, math.e, linear()) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        flow_inverse(-1.0, 1.0, linear())


@given(small, small)
def test_inverse_round_trip(x, t):
    assert flow_inverse(x, flow(x, t, SIN), SIN) == pytest.approx(t, abs=1e-7)


def test_doss_map():
    assert doss_map(0.0, 1.3, SIN) == 1.3
    assert doss_map(0.8, 1.5, linear()) == pytest.approx(1.5 * math.exp(0.8), abs=1e-8)
    h = 1e-5
    x, a = 0.6, -0.4
    du_dx = (doss_map(x + h, a, SIN) - doss_map(x - h, a, SIN)) / (2 * h)
    assert du_dx == pytest.approx(float(SIN(doss_map(x, a, SIN))), abs=1e-5)


def test_doss_a_derivative():
    assert doss_map_y_derivative(0.0, 0.2, SIN) == 1.0
    assert doss_map_y_derivative(1.1, -3.0, affine(2.0)) == pytest.approx(1.0, abs=1e-12)
    assert doss_map_y_derivative(0.9, 1.0, linear()) == pytest.approx(math.exp(0.9), abs=1e-8)
    # against a central difference in a, and against exp of the integrated sigma'
    x, a, h = 0.7, 0.3, 1e-5
    v = doss_map_y_derivative(x, a, SIN)
    fd = (doss_map(x, a + h, SIN) - doss_map(x, a - h, SIN)) / (2 * h)
    assert v == pytest.approx(fd, abs=1e-5)
    s = np.linspace(0, x, 2001)
    u = flow_many(a, s, SIN)
    integrand = np.cos(u)
    assert v == pytest.approx(math.exp(np.trapezoid(integrand, s)), abs=1e-5)
    assert v > 0
    u2, v2 = doss_map_with_derivative(x, a, SIN)
    assert u2 == pytest.approx(doss_map(x, a, SIN), abs=1e-9) and v2 == v


def test_expansion_coefficients_linear_and_constant():
    assert expansion_coefficients(linear(), 0.37) == pytest.approx((1 / 12, 0.0, 1 / 80), abs=1e-15)
    assert expansion_coefficients(affine(3.0), 1.0) == (0.0, 0.0, 0.0)


def test_f3_equals_second_derivative_of_square_over_24():
    x, h = 0.3, 1e-3
    sq = lambda u: float(SIN(u)) ** 2
    d2 = (sq(x + h) - 2 * sq(x) + sq(x - h)) / h**2
    assert expansion_coefficients(SIN, x)[0] == pytest.approx(d2 / 24, abs=1e-7)


def test_log_ratio_expansion_of_linear_field():
    # ln((1+d/2)/(1-d/2)) = d + d^3/12 + d^5/80 + O(d^7)
    for d in (1e-1, 3e-2):
        assert math.log((1 + d / 2) / (1 - d / 2)) == pytest.approx(d + d**3 / 12 + d**5 / 80, abs=d**7)


def test_expansion_requires_exact_derivatives():
    crude = VectorField(lambda x: 2 + np.sin(x), name="crude")
    assert crude.approximate == (1, 2, 3, 4)
    with pytest.raises(CapabilityError):
        expansion_coefficients(crude, 0.0)


@pytest.mark.parametrize("field", [sin_bounded(), cos_bounded(), tanh_bounded()], ids=lambda f: f.name)
def test_one_step_expansion_order(field):
    x = 0.3
    f3, f4, f5 = expansion_coefficients(field, x)
    ds = np.logspace(-1, -2, 8)
    res = []
    for d in ds:
        tau = flow_inverse(x, cn_step(field, x, d, 1e-16), field, 1e-15)
        res.append(abs(tau - d - (f3 * d**3 + f4 * d**4 + f5 * d**5)))
    slope = np.polyfit(np.log(ds), np.log(res), 1)[0]
    assert slope >= 5.7


def test_supplied_derivatives_are_checked():
    with pytest.raises(DomainError, match="finite differences"):
        VectorField(np.sin, (np.sin,), name="wrong")


def test_finite_difference_fallback_accuracy():
    crude = VectorField(lambda x: 2 + np.sin(x))
    for k, exact in enumerate((np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin), start=1):
        assert crude.d(k, 0.4) == pytest.approx(exact(0.4), abs=10 ** (-7 + k))


def test_negated_field_flow_identity():
    neg = SIN.negated()
    for t in (-1.3, 0.4, 2.0):
        assert flow(0.2, t, neg) == pytest.approx(flow(0.2, -t, SIN), abs=1e-9)


def test_quadratic_sigma_squared():
    q = QuadraticSigmaSquared(1.0, 0.5, 2.0)
    assert q.check(np.linspace(-3, 3, 25)) <= 1e-12
    f = q.field()
    assert f.approximate == ()
    with pytest.raises(DomainError):
        QuadraticSigmaSquared(-1.0, 0.0, 0.5).field(probe=(0.0,))(2.0)


@pytest.mark.parametrize("spec,x,expected", [
    ("linear", 2.0, 2.0), ("affine 1", 5.0, 1.0), ("affine(0.5, 2)", 2.0, 3.0), ("sin-bounded", 0.0, 2.0),
    ("cos-bounded", 0.0, 3.0), ("quadratic-ss 1 0 4", 0.0, 2.0), ("zero", 3.0, 0.0), ("monomial 3", 2.0, 8.0),
])
def test_parse_field(spec, x, expected):
    assert float(parse_field(spec)(x)) == pytest.approx(expected)


@pytest.mark.parametrize("spec", ["nope", "affine", "linear 1 2 3", "affine(x)", ""])
def test_parse_field_errors(spec):
    from fbmsde.errors import ConfigError
    with pytest.raises(ConfigError):
        parse_field(spec)
