"""Discrete symmetric (Russo-Vallois) integrals and Newton-Cotes functionals.

All estimators evaluate the regularised integrals with the regularisation
step equal to the grid mesh, so that the inner du-average collapses to a
Riemann sum.  This makes ``symmetric_integral(X, X)`` telescope exactly.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError
from .fbm import as_hurst

MAX_ORDER = 6


@dataclass(frozen=True)
class NewtonCotesMeasure:
    order: int
    nodes: np.ndarray
    weights: np.ndarray
    exact_weights: tuple = field(repr=False, default=())

    def integrate(self, q: int) -> float:
        return float(np.dot(self.weights, self.nodes**q))


@dataclass(frozen=True)
class SampledPath:
    """Values on the uniform grid kT/n, k = 0..n."""

    values: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise DomainError("a sampled path needs at least two grid values")
        if not self.T > 0:
            raise DomainError("horizon must be positive")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    def reversed(self) -> "SampledPath":
        return SampledPath(self.values[::-1].copy(), self.T)


def as_sampled(obj) -> SampledPath:
    """Accept SampledPath, FbmPath, SolutionPath or a bare array (T=1)."""
    if isinstance(obj, SampledPath):
        return obj
    if hasattr(obj, "values") and hasattr(obj, "T"):
        return SampledPath(obj.values, obj.T)
    return SampledPath(np.asarray(obj, dtype=float), 1.0)


def _lagrange_weight(j: int, N: int) -> Fraction:
    # integral over [0,1] of prod_{k != j} (N u - k) / (j - k), exact
    poly = [Fraction(1)]  # coefficients in u, lowest first
    denom = Fraction(1)
    for k in range(N + 1):
        if k == j:
            continue
        new = [Fraction(0)] * (len(poly) + 1)
        for i, c in enumerate(poly):
            new[i] += c * (-k)
            new[i + 1] += c * N
        poly = new
        denom *= j - k
    return sum(c / (i + 1) for i, c in enumerate(poly)) / denom


def _unit_sum(w):
    # absorb the rounding of the other weights into the last one, so the
    # left-to-right float sum is exactly 1.0 and constant integrands
    # reproduce increments bit for bit (1 - partial is exact for partial in [1/2, 2])
    w = w.copy()
    partial = 0.0
    for v in w[:-1]:
        partial += v
    w[-1] = 1.0 - partial
    return w


@functools.lru_cache(maxsize=None)
def newton_cotes_measure(m: int) -> NewtonCotesMeasure:
    """Nodes j/(2m-2) and exact Lagrange weights of the order-m measure."""
    if int(m) != m or not 1 <= m <= MAX_ORDER:
        raise DomainError(f"Newton-Cotes order must be an integer in 1..{MAX_ORDER}, got {m!r}")
    m = int(m)
    if m == 1:
        exact = (Fraction(1, 2), Fraction(1, 2))
        nodes = np.array([0.0, 1.0])
    else:
        N = 2 * (m - 1)
        exact = tuple(_lagrange_weight(j, N) for j in range(N + 1))
        nodes = np.array([j / N for j in range(N + 1)])
    weights = _unit_sum(np.array([float(w) for w in exact]))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return NewtonCotesMeasure(m, nodes, weights, exact)


def _check_grids(Y: SampledPath, X: SampledPath):
    if Y.n != X.n or Y.T != X.T:
        raise DomainError(f"grid mismatch: ({Y.n} steps, T={Y.T}) vs ({X.n} steps, T={X.T})")


def symmetric_integral(Y, X) -> float:
    """sum_k (Y_{k+1} + Y_k)/2 (X_{k+1} - X_k)."""
    Y, X = as_sampled(Y), as_sampled(X)
    _check_grids(Y, X)
    y, x = Y.values, X.values
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def _evaluate(f, u):
    out = f(u)
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(u))


def nc_increments(f, Y, X, m: int) -> np.ndarray:
    """Per-step terms of the order-m Newton-Cotes functional."""
    Y, X = as_sampled(Y), as_sampled(X)
    _check_grids(Y, X)
    nu = newton_cotes_measure(m)
    y = Y.values
    y0, dy = y[:-1], np.diff(y)
    avg = np.zeros_like(y0)
    for beta, w in zip(nu.nodes, nu.weights):
        avg += w * _evaluate(f, y0 + beta * dy)
    return avg * np.diff(X.values)


def nc_functional(f, Y, X, m: int) -> float:
    """sum_k [int f(Y_k + beta (Y_{k+1}-Y_k)) nu_m(d beta)] (X_{k+1} - X_k).

    ``f`` is any vectorised callable (a ``VectorField`` qualifies).
    """
    return float(np.sum(nc_increments(f, Y, X, m)))


def n_threshold(H) -> int:
    """Smallest n >= 1 with H > 1/(4n+2)."""
    h = as_hurst(H).value
    n = 1
    while not h > 1.0 / (4 * n + 2):
        n += 1
    return n


def m_threshold(H) -> int:
    """Smallest m >= 1 with H > 1/(2m+1)."""
    h = as_hurst(H).value
    m = 1
    while not h > 1.0 / (2 * m + 1):
        m += 1
    return m


def power_sum(path, p: int) -> float:
    """sum_k (Delta_k)^p over the grid increments."""
    if int(p) != p or p < 1:
        raise DomainError(f"power must be an integer >= 1, got {p!r}")
    values = path.values if hasattr(path, "values") else np.asarray(path, dtype=float)
    d = np.diff(values)
    if p == 1:
        return float(values[-1] - values[0])
    return float(np.sum(d ** int(p)))
