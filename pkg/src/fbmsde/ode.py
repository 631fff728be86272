"""Dormand-Prince 5(4) embedded Runge-Kutta integrator.

Two entry points: ``integrate_scalar`` works on plain floats (fast path for
one-dimensional flows) and ``integrate_vector`` on small tuples of floats.
Both stop exactly at every requested output time.
"""

from __future__ import annotations

import math

from .errors import DivergenceError, NumericalError

# Butcher tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# error coefficients: b - b_hat
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

DEFAULT_TOL = 1e-10
MAX_STEPS = 1_000_000
DEFAULT_BOUND = 1e12


def _initial_step(f0, y0, span, tol):
    scale = tol + tol * abs(y0)
    d0 = abs(y0) / scale
    d1 = abs(f0) / scale
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    return min(h, span)


def integrate_scalar(rhs, t0, y0, t_out, tol=DEFAULT_TOL, max_steps=MAX_STEPS,
                     bound=DEFAULT_BOUND, max_step=math.inf, h0=None, info=None):
    """Integrate y' = rhs(t, y) from (t0, y0), returning y at each time in ``t_out``.

    ``t_out`` must be monotone in the direction of integration away from ``t0``.
    ``h0`` seeds the step size; if ``info`` is a dict it receives the last
    proposed step ``h`` and the step count.
    """
    out = []
    t, y = float(t0), float(y0)
    if not t_out:
        return out
    direction = 1.0 if t_out[-1] >= t else -1.0
    k1 = rhs(t, y)
    h = h0
    steps = 0
    for target in t_out:
        target = float(target)
        while (target - t) * direction > 0:
            span = abs(target - t)
            if h is None:
                h = _initial_step(k1, y, span, tol)
            h = min(h, max_step)
            if h >= span:
                # remember the unclipped proposal for the caller's next call
                h_free = h
                h = span
            else:
                h_free = None
            last = h >= span
            hs = h * direction
            k2 = rhs(t + C2 * hs, y + hs * A21 * k1)
            k3 = rhs(t + C3 * hs, y + hs * (A31 * k1 + A32 * k2))
            k4 = rhs(t + C4 * hs, y + hs * (A41 * k1 + A42 * k2 + A43 * k3))
            k5 = rhs(t + C5 * hs, y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
            k6 = rhs(t + hs, y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
            y_new = y + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
            k7 = rhs(t + hs, y_new)
            err = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
            scale = tol + tol * max(abs(y), abs(y_new))
            ratio = abs(err) / scale
            steps += 1
            if steps > max_steps:
                raise NumericalError(f"integrator exceeded {max_steps} steps at t={t}")
            if not math.isfinite(ratio):
                ratio = math.inf
            if ratio <= 1.0:
                t = target if last else t + hs
                y = y_new
                k1 = k7
                if abs(y) > bound:
                    raise DivergenceError(f"state |y|={abs(y):.3e} exceeded bound {bound:.1e} at t={t}",
                                          escape_time=t)
                fac = 5.0 if ratio == 0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
            else:
                fac = max(0.2, 0.9 * ratio ** -0.2)
            h = h * fac
            if ratio > 1.0 and h < 1e-15 * max(1.0, abs(t)):
                raise DivergenceError(f"step size underflow at t={t}", escape_time=t)
            if h_free is not None and ratio <= 1.0:
                h = max(h, min(h_free, 5.0 * span))
        out.append(y)
    if info is not None:
        info["h"] = h
        info["steps"] = steps
    return out


def integrate_vector(rhs, t0, y0, t_out, tol=DEFAULT_TOL, max_steps=MAX_STEPS,
                     bound=DEFAULT_BOUND):
    """Same as ``integrate_scalar`` for a tuple state; ``rhs`` returns a tuple."""
    out = []
    t = float(t0)
    y = tuple(float(v) for v in y0)
    if not t_out:
        return out
    dim = len(y)
    direction = 1.0 if t_out[-1] >= t else -1.0
    k1 = rhs(t, y)
    h = None
    steps = 0

    def comb(coefs, ks, hs):
        return tuple(y[i] + hs * sum(c * k[i] for c, k in zip(coefs, ks)) for i in range(dim))

    for target in t_out:
        target = float(target)
        while (target - t) * direction > 0:
            span = abs(target - t)
            if h is None:
                h = min(_initial_step(max(map(abs, k1)), max(map(abs, y)), span, tol), span)
            h = min(h, span)
            last = h >= span
            hs = h * direction
            k2 = rhs(t + C2 * hs, comb((A21,), (k1,), hs))
            k3 = rhs(t + C3 * hs, comb((A31, A32), (k1, k2), hs))
            k4 = rhs(t + C4 * hs, comb((A41, A42, A43), (k1, k2, k3), hs))
            k5 = rhs(t + C5 * hs, comb((A51, A52, A53, A54), (k1, k2, k3, k4), hs))
            k6 = rhs(t + hs, comb((A61, A62, A63, A64, A65), (k1, k2, k3, k4, k5), hs))
            y_new = comb((B1, 0.0, B3, B4, B5, B6), (k1, k2, k3, k4, k5, k6), hs)
            k7 = rhs(t + hs, y_new)
            ratio = 0.0
            for i in range(dim):
                e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                ratio = max(ratio, abs(e) / (tol + tol * max(abs(y[i]), abs(y_new[i]))))
            steps += 1
            if steps > max_steps:
                raise NumericalError(f"integrator exceeded {max_steps} steps at t={t}")
            if not math.isfinite(ratio):
                ratio = math.inf
            if ratio <= 1.0:
                t = target if last else t + hs
                y = y_new
                k1 = k7
                if max(map(abs, y)) > bound:
                    raise DivergenceError(f"state exceeded bound {bound:.1e} at t={t}", escape_time=t)
                fac = 5.0 if ratio == 0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
            else:
                fac = max(0.2, 0.9 * ratio ** -0.2)
            h = h * fac
            if ratio > 1.0 and h < 1e-15 * max(1.0, abs(t)):
                raise DivergenceError(f"step size underflow at t={t}", escape_time=t)
        out.append(y)
    return out
