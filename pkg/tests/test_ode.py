import math

import pytest

from fbmsde.errors import DivergenceError
from fbmsde.ode import integrate_scalar, integrate_vector


def test_scalar_lands_on_every_output_time():
    ts = [0.1, 0.5, 0.5000001, 2.0]
    ys = integrate_scalar(lambda t, y: y, 0.0, 1.0, ts, tol=1e-12)
    for t, y in zip(ts, ys):
        assert y == pytest.approx(math.exp(t), rel=1e-10)


def test_backward_integration_and_step_reuse():
    info = {}
    y = integrate_scalar(lambda t, y: -2 * y, 0.0, 1.0, [-1.0], tol=1e-12, info=info)[0]
    assert y == pytest.approx(math.exp(2.0), rel=1e-10)
    assert info["steps"] > 0 and info["h"] > 0


def test_vector_rotation_preserves_radius():
    (x, y), = integrate_vector(lambda t, s: (-s[1], s[0]), 0.0, (1.0, 0.0), [2 * math.pi], tol=1e-12)
    assert x == pytest.approx(1.0, abs=1e-9) and y == pytest.approx(0.0, abs=1e-9)


def test_bound_violation():
    with pytest.raises(DivergenceError) as info:
        integrate_scalar(lambda t, y: y * y, 0.0, 1.0, [2.0], bound=1e6)
    assert info.value.escape_time == pytest.approx(1.0, abs=1e-3)


def test_tiny_span():
    assert integrate_scalar(lambda t, y: 1.0, 0.0, 0.0, [1e-300])[0] == pytest.approx(1e-300)
