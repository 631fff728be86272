"""Monte Carlo experiments: L2 error curves, rate fits and barrier studies.

Every experiment draws path i from ``path_seed(base_seed, i)``.  Coarse
grids are restrictions of one fine master path, so errors at different n
are coupled.  Per-path work may run on a thread pool; results are gathered
in path-index order, so the numbers never depend on the worker count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, ExperimentError, StepSolveError
from .fbm import as_hurst, generate_path, path_seed
from .fields import QuadraticSigmaSquared, linear
from .flow import VectorField, flow, flow_many
from .rvint import nc_increments, power_sum
from .sde import (CLOSED_FLOW, CRANK_NICHOLSON, DOSS_SUSSMANN, EULER, SdeProblem, check_zero_drift,
                  crank_nicholson_scheme, euler_scheme, solve_doss_sussmann)

SCHEMA_VERSION = 1
FINEST_GRID = "finest_grid"
SCHEMES = (EULER, CRANK_NICHOLSON, CLOSED_FLOW, DOSS_SUSSMANN)
REFERENCES = (CLOSED_FLOW, DOSS_SUSSMANN, FINEST_GRID)
MAX_DISCARD_FRACTION = 0.01
THREADS_ENV = "FBMSDE_THREADS"

CONVERGES_TO_ZERO = "converges_to_zero"
CONVERGES_TO_CONSTANT = "converges_to_constant"
DIVERGES = "diverges"
INCONCLUSIVE = "inconclusive"
CONVERGES = "converges"
NON_CONVERGENT = "non-convergent"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def map_paths(fn: Callable[[int], object], count: int, threads: Optional[int] = None) -> list:
    """[fn(0), ..., fn(count-1)] in index order, possibly computed concurrently."""
    threads = worker_count() if threads is None else threads
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _check_grid(n_grid: Sequence[int], paths: int):
    n_grid = [int(n) for n in n_grid]
    if not n_grid:
        raise DomainError("n_grid must not be empty")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise DomainError(f"n_grid must be strictly increasing, got {n_grid}")
    if any(n < 1 for n in n_grid):
        raise DomainError("grid sizes must be positive")
    if paths < 2:
        raise DomainError("at least two paths per grid are needed")
    return n_grid


def _lcm_multiple(n_grid, factor):
    top = max(n_grid)
    base = math.lcm(*n_grid)
    m = base
    while m < factor * top:
        m += base
    return m


@dataclass(frozen=True)
class ExperimentConfig:
    problem: SdeProblem
    n_grid: tuple
    paths_per_n: int
    base_seed: int
    scheme: str = EULER
    reference: str = CLOSED_FLOW

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(_check_grid(self.n_grid, self.paths_per_n)))
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.reference not in REFERENCES:
            raise DomainError(f"unknown reference {self.reference!r}")

    @property
    def master_steps(self) -> int:
        factor = 4 if self.reference == FINEST_GRID else 2
        return _lcm_multiple(self.n_grid, factor)

    def master_path(self, i: int):
        p = self.problem
        return generate_path(self.master_steps, p.T, p.hurst, path_seed(self.base_seed, i))


@dataclass
class RateEstimate:
    per_n_errors: dict
    slope: float
    slope_halfwidth: float
    discard_fraction: float
    degenerate: bool = False
    discards: dict = field(default_factory=dict)
    fit_ns: tuple = ()
    self_referential: bool = False

    def table(self):
        return [(n, e, s, self.discards.get(n, 0)) for n, (e, s) in sorted(self.per_n_errors.items())]


@dataclass
class PowerSumStudy:
    p: int
    per_n: dict
    verdict: str
    limit_estimate: float
    hurst: float = 0.0
    paths: int = 0
    base_seed: int = 0


def verdict_from_stats(means, variances, count: int) -> str:
    """Convergence proxy from per-n sample means and variances (ordered by n).

    converges_to_zero: last three means within 3 standard errors of 0 and
    variances non-increasing over them.  converges_to_constant: the last three
    means pairwise within 3 pooled standard errors, variances non-increasing.
    diverges: variance at the largest n exceeds twice that at the smallest.
    """
    m = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    if len(m) < 3:
        raise DomainError("the decision rule needs at least three grid sizes")
    se = np.sqrt(v / count)
    tail_m, tail_v, tail_se = m[-3:], v[-3:], se[-3:]
    var_ok = bool(tail_v[0] >= tail_v[1] >= tail_v[2])
    if var_ok and np.all(np.abs(tail_m) <= 3 * tail_se):
        return CONVERGES_TO_ZERO
    pair_ok = all(
        abs(tail_m[i] - tail_m[j]) <= 3 * math.hypot(tail_se[i], tail_se[j])
        for i in range(3) for j in range(i + 1, 3)
    )
    if var_ok and pair_ok:
        return CONVERGES_TO_CONSTANT
    if v[-1] > 2 * v[0]:
        return DIVERGES
    return INCONCLUSIVE


def fit_rate(ns, errors, std_errors):
    """Weighted least squares of log2(error) on log2(n); returns (slope, 95% half-width)."""
    ns = np.asarray(ns, dtype=float)
    e = np.asarray(errors, dtype=float)
    se = np.asarray(std_errors, dtype=float)
    x = np.log2(ns)
    y = np.log2(e)
    sy = se / (e * math.log(2.0))
    w = 1.0 / np.maximum(sy, 1e-300) ** 2
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    slope = float((w * (x - xm) * (y - ym)).sum() / sxx)
    k = len(ns)
    if k <= 2:
        return slope, math.inf
    resid = y - (ym + slope * (x - xm))
    scale = (w * resid**2).sum() / (k - 2)
    se_slope = math.sqrt(scale / sxx)
    return slope, float(stats.t.ppf(0.975, k - 2) * se_slope)


def _reference_terminal(config: ExperimentConfig, path):
    prob = config.problem
    if config.reference == CLOSED_FLOW:
        return flow(prob.x0, path.values[-1], prob.sigma)
    if config.reference == DOSS_SUSSMANN:
        return solve_doss_sussmann(prob, path, cross_check=False).values[-1]
    return crank_nicholson_scheme(prob, path).values[-1]


def _scheme_terminal(config: ExperimentConfig, path):
    prob = config.problem
    if config.scheme == EULER:
        return euler_scheme(prob, path).values[-1]
    if config.scheme == CRANK_NICHOLSON:
        return crank_nicholson_scheme(prob, path).values[-1]
    if config.scheme == CLOSED_FLOW:
        return flow(prob.x0, path.values[-1], prob.sigma)
    return solve_doss_sussmann(prob, path, cross_check=False).values[-1]


def _l2_stats(err):
    e2 = err**2
    mse = float(e2.mean())
    l2 = math.sqrt(mse)
    se_mse = float(e2.std(ddof=1) / math.sqrt(len(e2))) if len(e2) > 1 else math.inf
    se = se_mse / (2 * l2) if l2 > 0 else 0.0
    return l2, se


def l2_error_curve(config: ExperimentConfig, threads: Optional[int] = None) -> RateEstimate:
    """L2 distance at time T between scheme and reference, coupled on one master path per sample."""
    prob = config.problem
    if config.reference == CLOSED_FLOW or config.scheme == CLOSED_FLOW:
        check_zero_drift(prob)

    def one(i):
        master = config.master_path(i)
        ref = _reference_terminal(config, master)
        row = []
        for n in config.n_grid:
            try:
                row.append(_scheme_terminal(config, master.restrict(n)) - ref)
            except StepSolveError:
                row.append(math.nan)
        return row

    rows = np.array(map_paths(one, config.paths_per_n, threads), dtype=float)
    per_n, discards = {}, {}
    for j, n in enumerate(config.n_grid):
        col = rows[:, j]
        ok = col[np.isfinite(col)]
        discards[n] = int(len(col) - len(ok))
        per_n[n] = _l2_stats(ok) if len(ok) >= 2 else (math.nan, math.nan)
    total = sum(discards.values())
    frac = total / rows.size
    if frac > MAX_DISCARD_FRACTION:
        raise ExperimentError(f"discarded {total} of {rows.size} path/grid pairs ({frac:.2%} > 1%)")
    fit_ns = config.n_grid[1:] if len(config.n_grid) > 2 else config.n_grid
    errs = [per_n[n][0] for n in fit_ns]
    ses = [per_n[n][1] for n in fit_ns]
    degenerate = len(fit_ns) < 2 or any(not (e > 0) for e in errs)
    if degenerate:
        slope, hw = math.nan, math.nan
    else:
        slope, hw = fit_rate(fit_ns, errs, ses)
    return RateEstimate(per_n, slope, hw, frac, degenerate, discards, tuple(fit_ns),
                        config.reference == FINEST_GRID)


def euler_limit_report(config: ExperimentConfig, threads: Optional[int] = None) -> dict:
    """Scaled Euler error n^(2H-1)(Xbar_T - X_T) against its predicted limit, per n.

    With zero drift X = S(B) so the Malliavin derivative is D_s X_1 = sigma(X_1)
    and the limit is -sigma(X_1)/2 times the integral of sigma'(X_s) ds.
    """
    prob = config.problem
    H = prob.hurst.value
    if not H > 0.5:
        raise DomainError(f"the Euler limit needs H > 1/2, got {H}")
    if prob.T != 1.0:
        raise DomainError("the Euler limit is stated at time 1; use T = 1")
    check_zero_drift(prob)
    top = max(config.n_grid)
    d1 = prob.sigma.derivatives[0]

    def one(i):
        master = config.master_path(i)
        fine = master.restrict(top)
        x = flow_many(prob.x0, fine.values, prob.sigma)
        x[0] = prob.x0
        x1 = x[-1]
        out = []
        for n in config.n_grid:
            xs = x[:: top // n]
            ds = np.broadcast_to(np.asarray(d1(xs), dtype=float), xs.shape)
            pred = -0.5 * float(prob.sigma(x1)) * (ds.sum() - 0.5 * (ds[0] + ds[-1])) / n
            xbar = euler_scheme(prob, master.restrict(n)).values[-1]
            out.append((n ** (2 * H - 1) * (xbar - x1), pred))
        return out

    rows = np.array(map_paths(one, config.paths_per_n, threads), dtype=float)
    per_n = {}
    for j, n in enumerate(config.n_grid):
        scaled, pred = rows[:, j, 0], rows[:, j, 1]
        dist = float(np.sqrt(np.mean((scaled - pred) ** 2)))
        norm = float(np.sqrt(np.mean(pred**2)))
        per_n[n] = {"distance": dist, "prediction_norm": norm,
                    "relative": dist / norm if norm > 0 else (0.0 if dist == 0 else math.inf)}
    return per_n


def euler_limit_check(config: ExperimentConfig, n: Optional[int] = None, threads: Optional[int] = None) -> float:
    """L2 distance between scaled Euler error and predicted limit at ``n`` (default: largest)."""
    report = euler_limit_report(config, threads)
    return report[max(config.n_grid) if n is None else n]["distance"]


def power_sum_study(H, p: int, n_grid, paths: int, seed: int, T: float = 1.0,
                    threads: Optional[int] = None) -> PowerSumStudy:
    """Mean and variance of sum_k (Delta_k)^p per n, with a convergence verdict."""
    if int(p) != p or p < 2:
        raise DomainError("power must be an integer >= 2")
    hurst = as_hurst(H)
    n_grid = _check_grid(n_grid, paths)
    master_n = math.lcm(*n_grid)

    def one(i):
        master = generate_path(master_n, T, hurst, path_seed(seed, i))
        return [power_sum(master.restrict(n), int(p)) for n in n_grid]

    rows = np.array(map_paths(one, paths, threads), dtype=float)
    means = rows.mean(axis=0)
    variances = rows.var(axis=0, ddof=1)
    per_n = {n: (float(m), float(v)) for n, m, v in zip(n_grid, means, variances)}
    verdict = verdict_from_stats(means, variances, paths)
    return PowerSumStudy(int(p), per_n, verdict, float(means[-1]), hurst.value, paths, seed)


def decreasing_tail(ns, values, from_n: int) -> bool:
    tail = [v for n, v in zip(ns, values) if n >= from_n]
    if len(tail) < 2:
        return False
    return all(b < a for a, b in zip(tail, tail[1:]))


def cn_barrier_study(x0: float, H_list, n_grid, paths: int, seed: int, from_n: int = 256,
                     threads: Optional[int] = None) -> dict:
    """Crank-Nicholson with sigma(x) = x against x0 exp(B_1), for each H.

    Converges when the L2 distances decrease at every doubling from ``from_n``
    on and no grid there loses more than 1% of its paths to the ratio pole.
    """
    H_list = list(H_list)
    if not H_list:
        raise DomainError("H list must not be empty")
    n_grid = _check_grid(n_grid, paths)
    sigma = linear()
    master_n = math.lcm(*n_grid)
    results = []
    for h in H_list:
        hurst = as_hurst(h)
        prob = SdeProblem(sigma, linear(0.0), x0, 1.0, hurst)

        def one(i):
            master = generate_path(master_n, 1.0, hurst, path_seed(seed, i))
            ref = x0 * math.exp(master.values[-1])
            row = []
            for n in n_grid:
                try:
                    row.append(crank_nicholson_scheme(prob, master.restrict(n)).values[-1] - ref)
                except StepSolveError:
                    row.append(math.nan)
            return row

        rows = np.array(map_paths(one, paths, threads), dtype=float)
        dists, ses, discards = [], [], []
        for j in range(len(n_grid)):
            col = rows[:, j]
            ok = col[np.isfinite(col)]
            discards.append(int(len(col) - len(ok)))
            l2, se = _l2_stats(ok) if len(ok) >= 2 else (math.nan, math.nan)
            dists.append(l2)
            ses.append(se)
        clean = all(d / paths <= MAX_DISCARD_FRACTION for n, d in zip(n_grid, discards) if n >= from_n)
        ok = clean and decreasing_tail(n_grid, dists, from_n)
        results.append({
            "hurst": hurst.value,
            "verdict": CONVERGES if ok else NON_CONVERGENT,
            "n": n_grid,
            "l2_distance": dists,
            "std_error": ses,
            "discards": discards,
        })
    return {"schema_version": SCHEMA_VERSION, "experiment": "cn-barrier", "x0": x0, "base_seed": seed,
            "n_grid": n_grid, "paths_per_n": paths, "from_n": from_n, "results": results}


def ito_formula_study(f: VectorField, H, m: int, n_grid, paths: int, seed: int, T: float = 1.0,
                      threads: Optional[int] = None) -> dict:
    """Residual NC_m(f, B, B) - (F(B_T) - F(0)) per n with a convergence verdict."""
    if not 1 <= int(m) <= 4:
        raise DomainError("order m must lie in 1..4")
    if f.antiderivative is None:
        raise DomainError(f"field {f.name!r} has no antiderivative")
    hurst = as_hurst(H)
    n_grid = _check_grid(n_grid, paths)
    master_n = math.lcm(*n_grid)
    F = f.antiderivative

    def one(i):
        master = generate_path(master_n, T, hurst, path_seed(seed, i))
        row = []
        for n in n_grid:
            b = master.restrict(n)
            # step-wise differences so that exact identities (f constant) telescope to 0
            jumps = np.diff(np.asarray(F(b.values), dtype=float))
            row.append(float(np.sum(nc_increments(f, b, b, m) - jumps)))
        return row

    rows = np.array(map_paths(one, paths, threads), dtype=float)
    means = rows.mean(axis=0)
    variances = rows.var(axis=0, ddof=1)
    l2 = np.sqrt((rows**2).mean(axis=0))
    rule = verdict_from_stats(means, variances, paths)
    return {
        "schema_version": SCHEMA_VERSION, "experiment": "ito-formula", "field": f.name,
        "hurst": hurst.value, "m": int(m), "base_seed": seed, "n_grid": n_grid, "paths_per_n": paths,
        "l2_residual": l2.tolist(), "mean": means.tolist(), "variance": variances.tolist(),
        "rule_verdict": rule, "verdict": CONVERGES if rule == CONVERGES_TO_ZERO else NON_CONVERGENT,
    }


def cn_asymptotic_law_study(alpha: float, H, n: int, paths: int, seed: int, beta: float = 0.0,
                            gamma: float = 0.0, x0: float = 1.0, threads: Optional[int] = None) -> dict:
    """Distribution of n^(3H-1/2)(Xhat_1 - X_1) / ((alpha/12) sigma(X_1)) for sigma^2 quadratic.

    Reports skewness, excess kurtosis, a KS p-value against the fitted normal,
    the empirical variance and corr(|scaled error|, X_1).  alpha = 0 is
    degenerate (the limit vanishes) and only the unnormalised spread is given.
    """
    hurst = as_hurst(H)
    if alpha == 1.0 and beta == 0.0 and gamma == 0.0:
        if x0 <= 0:
            raise DomainError("sigma(x) = x representative needs x0 > 0")
        sigma = linear()
    else:
        sigma = QuadraticSigmaSquared(alpha, beta, gamma).field(probe=(x0,))
    prob = SdeProblem(sigma, linear(0.0), x0, 1.0, hurst)
    rate = 3 * hurst.value - 0.5

    def one(i):
        path = generate_path(int(n), 1.0, hurst, path_seed(seed, i))
        x1 = flow(x0, path.values[-1], sigma)
        try:
            xh = crank_nicholson_scheme(prob, path).values[-1]
        except StepSolveError:
            return (math.nan, x1)
        return (n**rate * (xh - x1), x1)

    rows = np.array(map_paths(one, paths, threads), dtype=float)
    ok = np.isfinite(rows[:, 0])
    raw, x1 = rows[ok, 0], rows[ok, 1]
    report = {"schema_version": SCHEMA_VERSION, "experiment": "cn-law", "alpha": alpha, "beta": beta,
              "gamma": gamma, "hurst": hurst.value, "n": int(n), "paths": paths, "base_seed": seed,
              "discards": int((~ok).sum()), "raw_scaled_std": float(raw.std(ddof=1))}
    if alpha == 0:
        report.update({"degenerate": True})
        return report
    z = raw / ((alpha / 12.0) * np.asarray(sigma(x1), dtype=float))
    mu, sd = float(z.mean()), float(z.std(ddof=1))
    report.update({
        "degenerate": False,
        "mean": mu,
        "variance": sd**2,
        "skewness": float(stats.skew(z)),
        "excess_kurtosis": float(stats.kurtosis(z)),
        "ks_pvalue": float(stats.kstest(z, "norm", args=(mu, sd)).pvalue),
        "abs_corr_with_x1": float(np.corrcoef(np.abs(z), x1)[0, 1]),
    })
    return report


# -- serialisation -----------------------------------------------------------

TABLE_HEADER = ("n", "l2_error", "std_error", "discards")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj, fh) -> None:
    json.dump(_clean(obj), fh, indent=2, allow_nan=False)
    fh.write("\n")


def write_table(fh, rows, header=TABLE_HEADER) -> None:
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.17g}"


def problem_summary(problem: SdeProblem) -> dict:
    return {"sigma": problem.sigma.name, "drift": problem.drift.name, "x0": problem.x0,
            "T": problem.T, "hurst": problem.hurst.value}


def rate_report(config: ExperimentConfig, est: RateEstimate, experiment: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "problem": problem_summary(config.problem),
        "scheme": config.scheme,
        "reference": config.reference,
        "self_referential": est.self_referential,
        "base_seed": config.base_seed,
        "n_grid": list(config.n_grid),
        "paths_per_n": config.paths_per_n,
        "master_steps": config.master_steps,
        "reduction": "index-ordered",
        "per_n": [{"n": n, "l2_error": e, "std_error": s, "discards": d} for n, e, s, d in est.table()],
        "fit_n": list(est.fit_ns),
        "slope": est.slope,
        "slope_halfwidth": est.slope_halfwidth,
        "degenerate": est.degenerate,
        "discard_fraction": est.discard_fraction,
    }


def power_sum_report(study: PowerSumStudy) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": "power-sum",
        "p": study.p,
        "hurst": study.hurst,
        "base_seed": study.base_seed,
        "n_grid": sorted(study.per_n),
        "paths_per_n": study.paths,
        "reduction": "index-ordered",
        "per_n": [{"n": n, "mean": m, "variance": v} for n, (m, v) in sorted(study.per_n.items())],
        "verdict": study.verdict,
        "limit_estimate": study.limit_estimate,
    }
