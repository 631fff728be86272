"""Flows of autonomous scalar vector fields.

``flow(x, t)`` is the solution at time t of y' = sigma(y), y(0) = x.  The
two-parameter Doss map u(x, a) = flow(a, x) solves du/dx = sigma(u) with
u(0, a) = a, and its a-derivative solves the variational equation
v' = sigma'(u) v, v(0) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import ode
from .errors import CapabilityError, DomainError, SearchError

DEFAULT_TOL = ode.DEFAULT_TOL
_EPS = np.finfo(float).eps

# central-difference stencils for the k-th derivative, offsets -k..k
_FD_STENCILS = {
    1: (np.array([-1.0, 0.0, 1.0]) / 2, 1),
    2: (np.array([1.0, -2.0, 1.0]), 1),
    3: (np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / 2, 2),
    4: (np.array([1.0, -4.0, 6.0, -4.0, 1.0]), 2),
}


def _fd_derivative(f, k):
    coefs, half = _FD_STENCILS[k]
    offsets = np.arange(-half, half + 1)
    expo = 1.0 / (k + 2)

    def d(x):
        x = np.asarray(x, dtype=float)
        h = _EPS**expo * np.maximum(1.0, np.abs(x))
        acc = sum(c * np.asarray(f(x + o * h), dtype=float) for c, o in zip(coefs, offsets) if c)
        out = acc / h**k
        return float(out) if out.ndim == 0 else out

    return d


@dataclass(frozen=True)
class VectorField:
    """Scalar coefficient function with derivatives up to order four.

    Missing derivatives fall back to central finite differences; the orders
    affected are listed in ``approximate``.  Supplied derivatives are checked
    against finite differences of the previous order on ``probe`` points.
    """

    f: Callable
    derivatives: Sequence[Optional[Callable]] = ()
    name: str = "custom"
    lipschitz_hint: Optional[float] = None
    antiderivative: Optional[Callable] = None
    probe: Sequence[float] = (-1.0, -0.5, 0.0, 0.5, 1.0)
    approximate: tuple = field(init=False, default=())
    linear_coefficient: Optional[float] = None
    check: bool = True

    def __post_init__(self):
        derivs = list(self.derivatives) + [None] * (4 - len(self.derivatives))
        if len(derivs) > 4:
            raise DomainError("at most four derivatives are supported")
        approx = []
        filled = []
        prev = self.f
        for k, d in enumerate(derivs, start=1):
            if d is None:
                approx.append(k)
                d = _fd_derivative(self.f, k)
            elif self.check:
                _check_against_fd(prev, d, k, self.probe, self.name)
            filled.append(d)
            prev = d
        object.__setattr__(self, "derivatives", tuple(filled))
        object.__setattr__(self, "approximate", tuple(approx))

    def __call__(self, x):
        return self.f(x)

    def d(self, k: int, x):
        if k == 0:
            return self.f(x)
        return self.derivatives[k - 1](x)

    def d1(self, x):
        return self.derivatives[0](x)

    def has_exact(self, k: int) -> bool:
        return all(j not in self.approximate for j in range(1, k + 1))

    def negated(self) -> "VectorField":
        """x -> -sigma(x)."""
        ds = [None if k + 1 in self.approximate else (lambda x, g=g: -g(x))
              for k, g in enumerate(self.derivatives)]
        anti = None if self.antiderivative is None else (lambda x, F=self.antiderivative: -F(x))
        lin = None if self.linear_coefficient is None else -self.linear_coefficient
        return VectorField(lambda x, g=self.f: -g(x), ds, f"-{self.name}", self.lipschitz_hint,
                           anti, self.probe, lin, check=False)


def _check_against_fd(prev, d, k, probe, name):
    h = 1e-4
    for x in probe:
        fd = (float(prev(x + h)) - float(prev(x - h))) / (2 * h)
        got = float(d(x))
        if abs(got - fd) > 1e-5 * max(1.0, abs(got)):
            raise DomainError(
                f"derivative {k} of field {name!r} disagrees with finite differences at x={x}: "
                f"{got!r} vs {fd!r}"
            )


@dataclass(frozen=True)
class FlowMap:
    field: VectorField
    tol: float = DEFAULT_TOL
    max_step: float = math.inf
    bound: float = ode.DEFAULT_BOUND

    def __call__(self, x, t):
        return flow(x, t, self.field, self.tol, max_step=self.max_step, bound=self.bound)

    def inverse(self, x, y):
        return flow_inverse(x, y, self.field, self.tol)

    def many(self, x, times):
        return flow_many(x, times, self.field, self.tol, bound=self.bound)


def _rhs(field):
    f = field.f
    return lambda t, y: float(f(y))


def flow(x: float, t: float, field: VectorField, tol: float = DEFAULT_TOL, *,
         max_step: float = math.inf, bound: float = ode.DEFAULT_BOUND) -> float:
    """phi(x, t) by adaptive Dormand-Prince with rtol = atol = ``tol``."""
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    x, t = float(x), float(t)
    if t == 0.0:
        return x
    return ode.integrate_scalar(_rhs(field), 0.0, x, [t], tol=tol, bound=bound, max_step=max_step)[0]


def flow_many(x: float, times, field: VectorField, tol: float = DEFAULT_TOL, *,
              bound: float = ode.DEFAULT_BOUND) -> np.ndarray:
    """phi(x, t) for every t in ``times`` from one forward and one backward sweep."""
    times = np.asarray(times, dtype=float)
    out = np.empty_like(times)
    rhs = _rhs(field)
    out[times == 0.0] = float(x)
    for sign in (1.0, -1.0):
        mask = times * sign > 0
        if not mask.any():
            continue
        idx = np.nonzero(mask)[0]
        order = idx[np.argsort(times[idx] * sign, kind="stable")]
        targets = times[order]
        # collapse duplicates so the integrator sees a strictly monotone list
        uniq, inv = np.unique(targets * sign, return_inverse=True)
        vals = ode.integrate_scalar(rhs, 0.0, float(x), list(uniq * sign), tol=tol, bound=bound)
        out[order] = np.asarray(vals)[inv]
    return out


def _sign_change_or_zero(field, x, y, samples=65):
    pts = np.linspace(x, y, samples)
    vals = np.array([float(field(p)) for p in pts])
    if np.any(vals == 0.0) or np.any(np.sign(vals) != np.sign(vals[0])):
        return True
    return False


def flow_inverse(x: float, y: float, field: VectorField, tol: float = DEFAULT_TOL,
                 max_iter: int = 100, check_domain: bool = True) -> float:
    """The time t with phi(x, t) = y.

    Safeguarded Newton on t (derivative sigma(phi(x, t))) inside a bracket
    grown geometrically from t = 0.  ``check_domain=False`` skips the scan
    for zeros of sigma between x and y (callers that already know).
    """
    x, y = float(x), float(y)
    if y == x:
        return 0.0
    if check_domain and _sign_change_or_zero(field, x, y):
        raise DomainError(f"sigma vanishes between {x} and {y}; the flow cannot reach y")
    s0 = float(field(x))
    guess = (y - x) / s0
    direction = 1.0 if guess > 0 else -1.0

    def g(t):
        return flow(x, t, field, tol) - y

    # g is increasing in t when sigma > 0 and decreasing when sigma < 0
    mono = 1.0 if s0 > 0 else -1.0
    lo, hi = 0.0, guess
    g_hi = g(hi)
    grow = 0
    while g_hi * mono * direction < 0:
        lo = hi
        grow += 1
        if grow > 40:
            raise SearchError(f"no bracket for flow_inverse({x}, {y}) up to t={hi}")
        hi = guess * 2.0**grow
        try:
            g_hi = g(hi)
        except ArithmeticError:
            # overshoot into blow-up: the root lies before hi, shrink
            hi = 0.5 * (lo + hi)
            g_hi = g(hi)
    a, b = (lo, hi) if lo < hi else (hi, lo)
    t = hi
    gt = g_hi
    for _ in range(max_iter):
        if abs(gt) <= tol:
            return t
        slope = float(field(gt + y))
        step = gt / slope if slope else math.inf
        t_new = t - step
        if not (a < t_new < b):
            t_new = 0.5 * (a + b)
        g_new = g(t_new)
        # keep the bracket: the root separates points of opposite sign
        if g_new * mono > 0:
            b = t_new
        else:
            a = t_new
        if t_new == t:
            return t
        t, gt = t_new, g_new
        if b - a <= 4 * _EPS * max(1.0, abs(t)):
            return t
    raise SearchError(f"flow_inverse did not converge for x={x}, y={y}")


def doss_map(x: float, a: float, field: VectorField, tol: float = DEFAULT_TOL) -> float:
    """u(x, a) = phi(a, x)."""
    return flow(a, x, field, tol)


def doss_map_with_derivative(x: float, a: float, field: VectorField, tol: float = DEFAULT_TOL):
    """(u(x, a), du/da(x, a)) from the joint flow/variational system."""
    x, a = float(x), float(a)
    if x == 0.0:
        return a, 1.0
    f, d1 = field.f, field.derivatives[0]

    def rhs(_, s):
        u, v = s
        return (float(f(u)), float(d1(u)) * v)

    u, v = ode.integrate_vector(rhs, 0.0, (a, 1.0), [x], tol=tol)[0]
    return u, v


def doss_map_y_derivative(x: float, a: float, field: VectorField, tol: float = DEFAULT_TOL) -> float:
    """du/da(x, a): v' = sigma'(u) v, v(0) = 1, integrated alongside u."""
    return doss_map_with_derivative(x, a, field, tol)[1]


def expansion_coefficients(field: VectorField, x: float, allow_approximate: bool = False):
    """(f3, f4, f5) at x for the one-step Crank-Nicholson expansion in Delta.

    f3 = (s'^2 + s s'')/12, f4 = s (s^2)'''/48 with (s^2)''' = 2(3 s' s'' + s s'''),
    f5 = s'^4/80 + s^2 s' s'''/15 + 3 s s'^2 s''/40 + s^2 s''^2/20 + s^3 s''''/80.
    """
    if not allow_approximate and not field.has_exact(4):
        raise CapabilityError(
            f"field {field.name!r} lacks analytic derivatives {field.approximate}; "
            "expansion coefficients need orders 1..4"
        )
    s, s1, s2, s3, s4 = (float(field.d(k, x)) for k in range(5))
    f3 = (s1 * s1 + s * s2) / 12.0
    f4 = s * 2.0 * (3.0 * s1 * s2 + s * s3) / 48.0
    f5 = (s1**4 / 80.0 + s * s * s1 * s3 / 15.0 + 3.0 * s * s1 * s1 * s2 / 40.0
          + s * s * s2 * s2 / 20.0 + s**3 * s4 / 80.0)
    return f3, f4, f5
