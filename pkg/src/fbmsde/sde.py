"""Solvers for dX = sigma(X) dB + b(X) dt driven by a sampled fBm path.

Exact solutions come from ODE flows (zero drift) and from the Doss-Sussmann
representation X = u(B, x0 + A) with a C^1 drift-absorbing process A.  The
discrete schemes are the explicit Euler recursion and the implicit
Crank-Nicholson (trapezoidal-in-sigma) recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ode
from .errors import (DivergenceError, DomainError, ModelError, NumericalError, PoleError,
                     SingularityError, StepSolveError)
from .fbm import FbmPath, HurstIndex, as_hurst, write_path_csv
from .flow import (DEFAULT_TOL, VectorField, doss_map_with_derivative, flow, flow_inverse,
                   flow_many)
from .rvint import nc_increments

CLOSED_FLOW = "closed_flow"
DOSS_SUSSMANN = "doss_sussmann"
EULER = "euler"
CRANK_NICHOLSON = "crank_nicholson"

# the flow range S(R) is probed on B-values in [-PROBE_RADIUS, PROBE_RADIUS]
PROBE_RADIUS = 4.0
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SdeProblem:
    sigma: VectorField
    drift: VectorField
    x0: float
    T: float = 1.0
    hurst: HurstIndex = HurstIndex(0.5)

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"horizon must be positive, got {self.T!r}")
        object.__setattr__(self, "hurst", as_hurst(self.hurst))
        object.__setattr__(self, "x0", float(self.x0))


@dataclass(frozen=True)
class SolutionPath:
    T: float
    values: np.ndarray = field(repr=False)
    method_tag: str
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    def to_csv(self, fh) -> None:
        write_path_csv(fh, self.times, self.values, header=("t", "x"))


def _check_path(problem: SdeProblem, path: FbmPath):
    if abs(path.T - problem.T) > 1e-12 * problem.T:
        raise DomainError(f"path horizon {path.T} does not match problem horizon {problem.T}")


def drift_is_zero(drift: VectorField, points) -> bool:
    vals = np.array([float(drift(p)) for p in points])
    return bool(np.all(np.abs(vals) <= ZERO_TOL))


def check_zero_drift(problem: SdeProblem, extra_points=()) -> None:
    """Reject drifts that do not vanish on the range of the zero-drift flow S."""
    s0 = float(problem.sigma(problem.x0))
    if s0 == 0.0:
        if abs(float(problem.drift(problem.x0))) > ZERO_TOL:
            raise ModelError("sigma(x0) = 0 makes the flow constant, so the drift must vanish at x0; "
                             f"b(x0) = {float(problem.drift(problem.x0))!r}")
        return
    zs = np.concatenate([np.linspace(-PROBE_RADIUS, PROBE_RADIUS, 33), np.asarray(extra_points, float)])
    pts = flow_many(problem.x0, zs, problem.sigma)
    if not drift_is_zero(problem.drift, pts):
        bad = max(pts, key=lambda p: abs(float(problem.drift(p))))
        raise ModelError("a solution of the form X = S(B) exists only if b vanishes on S(R), the range of "
                         f"the flow S' = sigma(S), S(0) = x0; here b({bad:.6g}) = {float(problem.drift(bad)):.3e}")


def solve_zero_drift(problem: SdeProblem, path: FbmPath, tol: float = DEFAULT_TOL) -> SolutionPath:
    """X_k = S(B_k) with S' = sigma(S), S(0) = x0."""
    _check_path(problem, path)
    check_zero_drift(problem, extra_points=(path.values.min(), path.values.max()))
    x = flow_many(problem.x0, path.values, problem.sigma, tol)
    x[0] = problem.x0
    return SolutionPath(path.T, x, CLOSED_FLOW, {"ode_tol": tol})


class _DossEvaluator:
    """u(B(t), x0 + A) and du/da along one grid interval.

    Anchored at the interval start (a_k, X_k = u(B_k, a_k)): for nearby a,
    u(x, a) = phi(X_k, s + x - B_k) with s the flow time from a_k to a, and
    du/da = sigma(u) / sigma(a).  Without a usable anchor the joint
    flow/variational system is integrated from scratch.
    """

    def __init__(self, sigma: VectorField, tol: float):
        self.sigma = sigma
        self.tol = tol
        self.a_k = None
        self.x_k = None
        self.b_k = None

    def anchor(self, b_k, a_k, x_k):
        self.b_k, self.a_k, self.x_k = b_k, a_k, x_k

    def __call__(self, x, a):
        sig = self.sigma
        sa = float(sig(a))
        sk = float(sig(self.a_k))
        if sa != 0.0 and sk != 0.0 and (sa > 0) == (sk > 0) and abs(a - self.a_k) < 0.25 * abs(sk):
            s = 0.0 if a == self.a_k else flow_inverse(self.a_k, a, sig, self.tol, check_domain=False)
            u = flow(self.x_k, s + (x - self.b_k), sig, self.tol)
            return u, float(sig(u)) / sa
        return doss_map_with_derivative(x, a, sig, self.tol)


def _drift_route_general(problem, values, times, tol):
    """Integrate A' = b(u(B, x0+A)) / u'_a(B, x0+A), A_0 = 0, along piecewise-linear B."""
    sigma, b, x0 = problem.sigma, problem.drift, problem.x0
    n = len(values) - 1
    A = np.zeros(n + 1)
    X = np.empty(n + 1)
    X[0] = x0
    ev = _DossEvaluator(sigma, tol)
    info = {}
    h = None
    a_cur = 0.0
    for k in range(n):
        t0, t1 = times[k], times[k + 1]
        b0 = values[k]
        beta = (values[k + 1] - b0) / (t1 - t0)
        ev.anchor(b0, x0 + a_cur, X[k])

        def rhs(t, a_val):
            u, v = ev(b0 + beta * (t - t0), x0 + a_val)
            if abs(v) <= 1e-300:
                raise SingularityError(f"du/da underflow at t={t}")
            return float(b(u)) / v

        a_cur = ode.integrate_scalar(rhs, t0, a_cur, [t1], tol=tol, h0=h, info=info)[0]
        h = info["h"]
        A[k + 1] = a_cur
        X[k + 1] = ev(values[k + 1], x0 + a_cur)[0]
    return A, X


def _drift_route_flow(problem, values, times, tol):
    """X = S(B + A~) with A~' = (b o S / sigma o S)(B + A~), A~_0 = 0."""
    sigma, b, x0 = problem.sigma, problem.drift, problem.x0
    n = len(values) - 1
    At = np.zeros(n + 1)
    X = np.empty(n + 1)
    X[0] = x0
    info = {}
    h = None
    a_cur = 0.0
    for k in range(n):
        t0, t1 = times[k], times[k + 1]
        b0 = values[k]
        beta = (values[k + 1] - b0) / (t1 - t0)
        z_k, x_k = b0 + a_cur, X[k]

        def rhs(t, a_val):
            s = flow(x_k, (b0 + beta * (t - t0) + a_val) - z_k, sigma, tol)
            sv = float(sigma(s))
            if sv == 0.0:
                raise SingularityError(f"sigma vanishes on the flow range at t={t}")
            return float(b(s)) / sv

        a_cur = ode.integrate_scalar(rhs, t0, a_cur, [t1], tol=tol, h0=h, info=info)[0]
        h = info["h"]
        At[k + 1] = a_cur
        X[k + 1] = flow(x_k, (values[k + 1] + a_cur) - z_k, sigma, tol)
    return At, X


def solve_doss_sussmann(problem: SdeProblem, path: FbmPath, ode_tol: float = DEFAULT_TOL,
                        cross_check: Optional[bool] = None, agree_tol: float = 1e-6) -> SolutionPath:
    """Doss-Sussmann solution X_k = u(B_k, x0 + A_k).

    When sigma stays away from zero on the solution (or ``cross_check`` is
    forced), the representation X = S(B + A~) is computed independently and
    the two must agree within ``agree_tol``; the discrepancy is reported in
    the diagnostics.
    """
    _check_path(problem, path)
    values = path.values
    times = path.times
    probe = np.linspace(-PROBE_RADIUS, PROBE_RADIUS, 17) + problem.x0
    if drift_is_zero(problem.drift, probe) and drift_is_zero(problem.drift, [problem.x0]):
        try:
            zero = solve_zero_drift(problem, path, ode_tol)
        except ModelError:
            zero = None
        if zero is not None:
            diag = {"ode_tol": ode_tol, "A": np.zeros(len(values)), "zero_drift": True}
            return SolutionPath(path.T, zero.values, DOSS_SUSSMANN, diag)
    A, X = _drift_route_general(problem, values, times, ode_tol)
    diag = {"ode_tol": ode_tol, "A": A}
    if cross_check is None:
        sig_min = float(np.min(np.abs([float(problem.sigma(v)) for v in X])))
        cross_check = sig_min > 1e-8
    if cross_check:
        At, X2 = _drift_route_flow(problem, values, times, ode_tol)
        gap = float(np.max(np.abs(X - X2)))
        diag.update({"A_flow": At, "X_flow": X2, "form_gap": gap})
        if gap > agree_tol:
            raise NumericalError(f"Doss-Sussmann forms disagree by {gap:.3e} > {agree_tol:.1e}")
    return SolutionPath(path.T, X, DOSS_SUSSMANN, diag)


def euler_scheme(problem: SdeProblem, path: FbmPath, bound: float = 1e150) -> SolutionPath:
    """X_{k+1} = X_k + sigma(X_k) Delta_k + b(X_k) T/n."""
    _check_path(problem, path)
    sig, b = problem.sigma.f, problem.drift.f
    deltas = np.diff(path.values).tolist()
    dt = path.T / path.n
    out = [problem.x0]
    x = problem.x0
    for k, d in enumerate(deltas):
        x = x + float(sig(x)) * d + float(b(x)) * dt
        if not abs(x) <= bound:
            raise DivergenceError(f"Euler iterate overflowed at step {k}", step=k)
        out.append(x)
    return SolutionPath(path.T, np.array(out), EULER, {})


def _cn_step(sig, dsig, x, d, tol, max_iter=50):
    """Root of y - x - (sigma(x) + sigma(y)) d / 2 nearest the Euler predictor."""
    sx = float(sig(x))
    y = x + sx * d
    half = 0.5 * d
    c = x + half * sx
    iters = 0
    for iters in range(1, max_iter + 1):
        g = y - c - half * float(sig(y))
        gp = 1.0 - half * float(dsig(y))
        if gp == 0.0:
            break
        step = g / gp
        y -= step
        if not math.isfinite(y):
            break
        if abs(step) <= tol * max(1.0, abs(y)):
            return y, iters
    # bisection fallback on a bracket around the predictor
    width = 2.0 * abs(sx * d) + 1.0
    lo, hi = x - width, x + width

    def g_of(v):
        return v - c - half * float(sig(v))

    glo, ghi = g_of(lo), g_of(hi)
    if glo * ghi > 0:
        return None, iters
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g_of(mid)
        iters += 1
        if gm == 0.0 or hi - lo <= tol * max(1.0, abs(mid)):
            return mid, iters
        if (gm > 0) == (ghi > 0):
            hi, ghi = mid, gm
        else:
            lo, glo = mid, gm
    return 0.5 * (lo + hi), iters


def crank_nicholson_scheme(problem: SdeProblem, path: FbmPath, solve_tol: float = 1e-12) -> SolutionPath:
    """X_{k+1} = X_k + (sigma(X_k) + sigma(X_{k+1})) Delta_k / 2, drift-free.

    For sigma(x) = c x the implicit equation is solved in closed form,
    X_{k+1} = X_k (1 + c Delta/2) / (1 - c Delta/2).
    """
    _check_path(problem, path)
    probe = np.linspace(-PROBE_RADIUS, PROBE_RADIUS, 17) + problem.x0
    if not drift_is_zero(problem.drift, probe):
        raise ModelError("the Crank-Nicholson scheme is defined for b = 0 only")
    deltas = np.diff(path.values)
    c = problem.sigma.linear_coefficient
    if c is not None:
        half = 0.5 * c * deltas
        bad = np.nonzero(np.abs(half) >= 1.0)[0]
        if len(bad):
            k = int(bad[0])
            raise PoleError(f"|c Delta_k| = {abs(2 * half[k]):.3f} >= 2 at step {k}: ratio update has a pole",
                            step=k)
        x = problem.x0 * np.concatenate([[1.0], np.cumprod((1.0 + half) / (1.0 - half))])
        return SolutionPath(path.T, x, CRANK_NICHOLSON,
                            {"iterations": np.zeros(len(deltas), dtype=int), "closed_form": True})
    sig, dsig = problem.sigma.f, problem.sigma.derivatives[0]
    out = np.empty(len(deltas) + 1)
    out[0] = x = problem.x0
    iters = np.zeros(len(deltas), dtype=int)
    for k, d in enumerate(deltas.tolist()):
        y, it = _cn_step(sig, dsig, x, d, solve_tol)
        if y is None:
            raise StepSolveError(f"implicit Crank-Nicholson equation has no bracketed root at step {k}", step=k)
        iters[k] = it
        out[k + 1] = x = y
    return SolutionPath(path.T, out, CRANK_NICHOLSON, {"iterations": iters, "closed_form": False})


def cn_step(sigma: VectorField, x: float, delta: float, solve_tol: float = 1e-12) -> float:
    """One Crank-Nicholson step from x with driving increment ``delta``."""
    c = sigma.linear_coefficient
    if c is not None:
        if abs(c * delta) >= 2.0:
            raise PoleError(f"|c Delta| = {abs(c * delta)} >= 2: ratio update has a pole")
        return x * ((1.0 + 0.5 * c * delta) / (1.0 - 0.5 * c * delta))
    y, _ = _cn_step(sigma.f, sigma.derivatives[0], float(x), float(delta), solve_tol)
    if y is None:
        raise StepSolveError("implicit Crank-Nicholson equation has no bracketed root")
    return y


def iteration_histogram(solution: SolutionPath) -> dict:
    it = solution.diagnostics.get("iterations")
    if it is None:
        return {}
    vals, counts = np.unique(np.asarray(it), return_counts=True)
    return {int(v): int(c) for v, c in zip(vals, counts)}


def residual_curve(problem: SdeProblem, solution: SolutionPath, path: FbmPath, m: int = 1) -> np.ndarray:
    """X_t - x0 - NC_m(sigma, X, B)|_0^t - trapezoid(b(X))|_0^t on every grid time."""
    if solution.n != path.n or abs(solution.T - path.T) > 1e-12 * path.T:
        raise DomainError("solution and path must share the grid")
    x = np.asarray(solution.values, dtype=float)
    nc = nc_increments(problem.sigma, x, path.values, m)
    bx = np.broadcast_to(np.asarray(problem.drift(x), dtype=float), x.shape)
    trap = 0.5 * (bx[1:] + bx[:-1]) * (path.T / path.n)
    r = np.empty_like(x)
    r[0] = x[0] - problem.x0
    r[1:] = (x[1:] - problem.x0) - np.cumsum(nc + trap)
    return r


def residual_check(problem: SdeProblem, solution: SolutionPath, path: FbmPath, m: int = 1) -> float:
    """Max over grid times of the discrete integral-equation residual."""
    return float(np.max(np.abs(residual_curve(problem, solution, path, m))))
