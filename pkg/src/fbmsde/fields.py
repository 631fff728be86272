"""Named coefficient fields with exact derivatives.

Presets are referred to by a short spec string such as ``linear``,
``affine 1``, ``affine(0.5, 2)``, ``sin-bounded`` or ``quadratic-ss 1 0 4``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .flow import VectorField


def _const(c):
    return lambda x: np.zeros_like(np.asarray(x, dtype=float)) + c if np.ndim(x) else float(c)


ZERO = _const(0.0)


def _dual(npf, mf):
    # math.* on plain floats is an order of magnitude faster than numpy scalars
    return lambda x: mf(x) if type(x) is float else npf(x)


SIN = _dual(np.sin, math.sin)
COS = _dual(np.cos, math.cos)
TANH = _dual(np.tanh, math.tanh)


def linear(k: float = 1.0) -> VectorField:
    """x -> k x."""
    k = float(k)
    return VectorField(lambda x: k * x, (_const(k), ZERO, ZERO, ZERO), name="linear" if k == 1 else f"linear({k:g})",
                       lipschitz_hint=abs(k), antiderivative=lambda x: 0.5 * k * x * x,
                       linear_coefficient=k)


def affine(*args: float) -> VectorField:
    """``affine(c)`` is the constant field c; ``affine(a, c)`` is x -> a x + c."""
    if len(args) == 1:
        a, c = 0.0, float(args[0])
    elif len(args) == 2:
        a, c = float(args[0]), float(args[1])
    else:
        raise ConfigError("affine takes one or two parameters")
    name = f"affine({c:g})" if a == 0 else f"affine({a:g},{c:g})"
    return VectorField(lambda x: a * x + c, (_const(a), ZERO, ZERO, ZERO), name=name, lipschitz_hint=abs(a),
                       antiderivative=lambda x: 0.5 * a * x * x + c * x,
                       linear_coefficient=a if c == 0 else None)


def zero() -> VectorField:
    return affine(0.0)


def sin_bounded(level: float = 2.0) -> VectorField:
    """x -> level + sin x."""
    return VectorField(lambda x: level + SIN(x),
                       (COS, lambda x: -SIN(x), lambda x: -COS(x), SIN),
                       name="sin-bounded", lipschitz_hint=1.0,
                       antiderivative=lambda x: level * x - np.cos(x))


def cos_bounded(level: float = 2.0) -> VectorField:
    """x -> level + cos x."""
    return VectorField(lambda x: level + COS(x),
                       (lambda x: -SIN(x), lambda x: -COS(x), SIN, COS),
                       name="cos-bounded", lipschitz_hint=1.0,
                       antiderivative=lambda x: level * x + np.sin(x))


def tanh_bounded(level: float = 1.5) -> VectorField:
    """x -> level + tanh x."""
    def d1(x):
        return 1.0 - TANH(x) ** 2

    def d2(x):
        t = TANH(x)
        return -2.0 * t * (1.0 - t * t)

    def d3(x):
        t = TANH(x)
        return (1.0 - t * t) * (6.0 * t * t - 2.0)

    def d4(x):
        t = TANH(x)
        return (1.0 - t * t) * (16.0 * t - 24.0 * t**3)

    return VectorField(lambda x: level + TANH(x), (d1, d2, d3, d4), name="tanh-bounded",
                       lipschitz_hint=1.0, antiderivative=lambda x: level * x + np.log(np.cosh(x)))


def monomial(p: int) -> VectorField:
    """x -> x^p, with antiderivative x^(p+1)/(p+1)."""
    p = int(p)
    if p < 0:
        raise ConfigError("monomial power must be >= 0")

    def dk(k):
        if k > p:
            return ZERO
        c = math.perm(p, k)
        e = p - k
        return lambda x: c * np.asarray(x, dtype=float) ** e if np.ndim(x) else c * float(x) ** e

    return VectorField(dk(0), tuple(dk(k) for k in range(1, 5)), name=f"monomial({p})",
                       antiderivative=lambda x: np.asarray(x, dtype=float) ** (p + 1) / (p + 1))


def cosine() -> VectorField:
    return VectorField(COS, (lambda x: -SIN(x), lambda x: -COS(x), SIN, COS),
                       name="cos", lipschitz_hint=1.0, antiderivative=np.sin)


@dataclass(frozen=True)
class QuadraticSigmaSquared:
    """sigma(x) = sqrt(alpha x^2 + beta x + gamma)."""

    alpha: float
    beta: float
    gamma: float

    def q(self, x):
        return self.alpha * x * x + self.beta * x + self.gamma

    def _s(self, x):
        q = self.q(x)
        if np.any(np.asarray(q) < 0):
            raise DomainError(f"alpha x^2 + beta x + gamma is negative at x={x}")
        return np.sqrt(q)

    def field(self, probe=None) -> VectorField:
        a, b = self.alpha, self.beta
        s = self._s

        # derivatives from s^2 = q differentiated repeatedly
        def d1(x):
            return (2 * a * x + b) / (2 * s(x))

        def d2(x):
            return (a - d1(x) ** 2) / s(x)

        def d3(x):
            return -3.0 * d1(x) * d2(x) / s(x)

        def d4(x):
            return -(4.0 * d1(x) * d3(x) + 3.0 * d2(x) ** 2) / s(x)

        if probe is None:
            probe = tuple(p for p in (-1.0, -0.5, 0.0, 0.5, 1.0, 2.0) if self.q(p) > 1e-3)
        return VectorField(s, (d1, d2, d3, d4), name=f"quadratic-ss({a:g},{b:g},{self.gamma:g})",
                           probe=probe)

    def check(self, probe) -> float:
        """max |sigma(x)^2 - q(x)| on ``probe``."""
        f = self.field(probe=probe)
        pts = np.asarray(probe, dtype=float)
        return float(np.max(np.abs(f(pts) ** 2 - self.q(pts))))


def quadratic_ss(alpha, beta, gamma) -> VectorField:
    return QuadraticSigmaSquared(float(alpha), float(beta), float(gamma)).field()


PRESETS = {
    "linear": (linear, (0, 1)),
    "affine": (affine, (1, 2)),
    "zero": (zero, (0, 0)),
    "sin-bounded": (sin_bounded, (0, 1)),
    "cos-bounded": (cos_bounded, (0, 1)),
    "tanh-bounded": (tanh_bounded, (0, 1)),
    "monomial": (monomial, (1, 1)),
    "cos": (cosine, (0, 0)),
    "quadratic-ss": (quadratic_ss, (3, 3)),
}

_SPEC_RE = re.compile(r"^\s*([a-z][a-z\-]*)\s*(?:\((.*)\)|(.*))\s*$")


def parse_field(spec: str) -> VectorField:
    """Build a preset from ``name``, ``name a b`` or ``name(a, b)``."""
    m = _SPEC_RE.match(spec or "")
    if not m:
        raise ConfigError(f"cannot parse field spec {spec!r}")
    name = m.group(1)
    raw = m.group(2) if m.group(2) is not None else (m.group(3) or "")
    if name not in PRESETS:
        raise ConfigError(f"unknown field preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    factory, (lo, hi) = PRESETS[name]
    try:
        args = [float(tok) for tok in re.split(r"[\s,]+", raw.strip()) if tok]
    except ValueError as exc:
        raise ConfigError(f"bad parameters in field spec {spec!r}") from exc
    if not lo <= len(args) <= hi:
        raise ConfigError(f"preset {name!r} takes {lo}..{hi} parameters, got {len(args)}")
    return factory(*args)
