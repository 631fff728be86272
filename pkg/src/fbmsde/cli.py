"""Command-line front end.

    fbmsde generate --hurst 0.3 --steps 1024 --horizon 1 --seed 42 --out p.csv
    fbmsde solve --scheme flow --sigma linear --x0 1 --hurst 0.5 --steps 4096 --seed 7 --out x.csv
    fbmsde experiment cn-barrier --config barrier.cfg --out-dir results/
    fbmsde replay results/cn-barrier.manifest.json --out-dir replay/

Every command writes a ``<output>.manifest.json`` next to its main output.
Exit codes: 0 ok, 2 usage/validation, 3 model precondition, 4 numerical.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import __version__, harness
from .errors import ConfigError, FbmSdeError
from .fbm import CIRCULANT, GENERATORS, HurstIndex, generate_path
from .fields import parse_field
from .sde import (SdeProblem, crank_nicholson_scheme, euler_scheme, iteration_histogram, residual_check,
                  solve_doss_sussmann, solve_zero_drift)

MANIFEST_SUFFIX = ".manifest.json"


# -- config files --------------------------------------------------------------

def _parse_list(cast):
    def parse(raw):
        toks = [t for t in raw.replace(",", " ").split() if t]
        return [cast(t) for t in toks]
    return parse


def _parse_bool(raw):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


INT_LIST = _parse_list(int)
FLOAT_LIST = _parse_list(float)


@dataclass(frozen=True)
class Key:
    cast: Callable
    default: object = None
    required: bool = False


_RATE_KEYS = {
    "sigma": Key(str, "linear"),
    "drift": Key(str, "zero"),
    "x0": Key(float, 1.0),
    "T": Key(float, 1.0),
    "hurst": Key(float, required=True),
    "n_grid": Key(INT_LIST, required=True),
    "paths": Key(int, 500),
    "seed": Key(int, required=True),
    "reference": Key(str, harness.CLOSED_FLOW),
}

SCHEMAS = {
    "euler-rate": {**_RATE_KEYS, "limit_check": Key(_parse_bool, False)},
    "cn-rate": dict(_RATE_KEYS),
    "cn-barrier": {
        "x0": Key(float, 1.0),
        "hurst": Key(FLOAT_LIST, required=True),
        "n_grid": Key(INT_LIST, required=True),
        "paths": Key(int, 500),
        "seed": Key(int, required=True),
        "from_n": Key(int, 256),
    },
    "power-sum": {
        "hurst": Key(float, required=True),
        "p": Key(int, required=True),
        "n_grid": Key(INT_LIST, required=True),
        "paths": Key(int, 500),
        "seed": Key(int, required=True),
        "T": Key(float, 1.0),
    },
    "ito-formula": {
        "f": Key(str, required=True),
        "hurst": Key(float, required=True),
        "m": Key(int, 1),
        "n_grid": Key(INT_LIST, required=True),
        "paths": Key(int, 500),
        "seed": Key(int, required=True),
        "T": Key(float, 1.0),
    },
    "cn-law": {
        "alpha": Key(float, required=True),
        "beta": Key(float, 0.0),
        "gamma": Key(float, 0.0),
        "x0": Key(float, 1.0),
        "hurst": Key(float, required=True),
        "n": Key(int, required=True),
        "paths": Key(int, 2000),
        "seed": Key(int, required=True),
    },
}

EXPECT_PREFIX = "expect."


def read_config(text: str, experiment: str):
    """Parse a flat ``key = value`` file into (typed config, expectations).

    ``#`` starts a comment.  Keys ``expect.<summary field>`` form the
    expectations block and are checked against the run summary.
    """
    schema = SCHEMAS[experiment]
    raw, expect = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith(EXPECT_PREFIX):
            expect[key[len(EXPECT_PREFIX):]] = value
            continue
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r} for {experiment}; "
                              f"known keys: {', '.join(sorted(schema))}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    cfg = {}
    for key, spec in schema.items():
        if key not in raw:
            if spec.required:
                raise ConfigError(f"missing required key {key!r} for {experiment}")
            cfg[key] = spec.default
            continue
        try:
            cfg[key] = spec.cast(raw[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({exc})") from None
        if isinstance(cfg[key], list) and not cfg[key]:
            raise ConfigError(f"key {key!r} must not be empty")
    return cfg, expect


def check_expectation(actual, spec: str) -> bool:
    """``spec`` is ``v +- tol``, ``< v``, ``> v``, ``lo..hi`` or a literal."""
    spec = spec.strip()
    if actual is None:
        return False
    if "+-" in spec:
        centre, tol = (float(s) for s in spec.split("+-", 1))
        return abs(float(actual) - centre) <= tol
    if spec.startswith("<"):
        return float(actual) < float(spec[1:])
    if spec.startswith(">"):
        return float(actual) > float(spec[1:])
    if ".." in spec:
        lo, hi = (float(s) for s in spec.split("..", 1))
        return lo <= float(actual) <= hi
    if isinstance(actual, bool):
        return actual == _parse_bool(spec)
    if isinstance(actual, (int, float)):
        return float(actual) == float(spec)
    return str(actual) == spec


# -- experiments -----------------------------------------------------------------

def _rate_config(cfg, scheme):
    problem = SdeProblem(parse_field(cfg["sigma"]), parse_field(cfg["drift"]), cfg["x0"], cfg["T"],
                         HurstIndex(cfg["hurst"]))
    return harness.ExperimentConfig(problem, tuple(cfg["n_grid"]), cfg["paths"], cfg["seed"], scheme,
                                    cfg["reference"])


def _run_rate(cfg, name):
    scheme = harness.EULER if name == "euler-rate" else harness.CRANK_NICHOLSON
    config = _rate_config(cfg, scheme)
    est = harness.l2_error_curve(config)
    report = harness.rate_report(config, est, name)
    summary = {"slope": est.slope, "slope_halfwidth": est.slope_halfwidth, "degenerate": est.degenerate,
               "discard_fraction": est.discard_fraction}
    if cfg.get("limit_check"):
        limit = harness.euler_limit_report(config)
        report["euler_limit"] = [{"n": n, **v} for n, v in sorted(limit.items())]
        top = max(limit)
        summary["limit_relative"] = limit[top]["relative"]
        rel = [limit[n]["distance"] for n in sorted(limit)]
        summary["limit_decreasing"] = all(b < a for a, b in zip(rel, rel[1:]))
    return report, est.table(), harness.TABLE_HEADER, summary


def _run_barrier(cfg, _):
    report = harness.cn_barrier_study(cfg["x0"], cfg["hurst"], cfg["n_grid"], cfg["paths"], cfg["seed"],
                                      cfg["from_n"])
    report["reduction"] = "index-ordered"
    rows, summary = [], {}
    for res in report["results"]:
        summary[f"verdict@{res['hurst']:g}"] = res["verdict"]
        for n, d, s, k in zip(res["n"], res["l2_distance"], res["std_error"], res["discards"]):
            rows.append((n, d, s, k, res["hurst"]))
    return report, rows, harness.TABLE_HEADER + ("hurst",), summary


def _stat_rows(n_grid, means, variances, second, paths):
    # l2_error is the root mean square of the statistic; std_error is that of its mean
    return [(n, math.sqrt(s2), math.sqrt(v / paths), 0, m, v)
            for n, m, v, s2 in zip(n_grid, means, variances, second)]


def _run_power_sum(cfg, _):
    study = harness.power_sum_study(cfg["hurst"], cfg["p"], cfg["n_grid"], cfg["paths"], cfg["seed"], cfg["T"])
    report = harness.power_sum_report(study)
    ns = sorted(study.per_n)
    means = [study.per_n[n][0] for n in ns]
    variances = [study.per_n[n][1] for n in ns]
    second = [v * (study.paths - 1) / study.paths + m * m for m, v in zip(means, variances)]
    rows = _stat_rows(ns, means, variances, second, study.paths)
    summary = {"verdict": study.verdict, "limit_estimate": study.limit_estimate}
    return report, rows, harness.TABLE_HEADER + ("mean", "variance"), summary


def _run_ito(cfg, _):
    report = harness.ito_formula_study(parse_field(cfg["f"]), cfg["hurst"], cfg["m"], cfg["n_grid"],
                                       cfg["paths"], cfg["seed"], cfg["T"])
    report["reduction"] = "index-ordered"
    second = [x * x for x in report["l2_residual"]]
    rows = _stat_rows(report["n_grid"], report["mean"], report["variance"], second, cfg["paths"])
    summary = {"verdict": report["verdict"], "rule_verdict": report["rule_verdict"]}
    return report, rows, harness.TABLE_HEADER + ("mean", "variance"), summary


def _run_law(cfg, _):
    report = harness.cn_asymptotic_law_study(cfg["alpha"], cfg["hurst"], cfg["n"], cfg["paths"], cfg["seed"],
                                             cfg["beta"], cfg["gamma"], cfg["x0"])
    report["reduction"] = "index-ordered"
    rate = 3 * report["hurst"] - 0.5
    std = report["raw_scaled_std"] / cfg["n"] ** rate
    rows = [(cfg["n"], std, std / math.sqrt(max(1, cfg["paths"] - report["discards"])), report["discards"])]
    keys = ("degenerate", "skewness", "excess_kurtosis", "ks_pvalue", "variance", "abs_corr_with_x1")
    summary = {k: report[k] for k in keys if k in report}
    return report, rows, harness.TABLE_HEADER, summary


RUNNERS = {
    "euler-rate": _run_rate,
    "cn-rate": _run_rate,
    "cn-barrier": _run_barrier,
    "power-sum": _run_power_sum,
    "ito-formula": _run_ito,
    "cn-law": _run_law,
}


# -- manifests -------------------------------------------------------------------

def write_manifest(path: Path, command: str, config: dict, base_seed, outputs, started: float) -> None:
    manifest = {
        "schema_version": harness.SCHEMA_VERSION,
        "command": command,
        "config": config,
        "base_seed": base_seed,
        "version": __version__,
        "outputs": [str(o) for o in outputs],
        "duration_s": round(time.perf_counter() - started, 3),
    }
    with open(path, "w") as fh:
        harness.dump_json(manifest, fh)


def _manifest_for(out: Path) -> Path:
    return out.with_name(out.name + MANIFEST_SUFFIX)


def _open_out(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


def cmd_generate(args) -> int:
    started = time.perf_counter()
    hurst = HurstIndex(args.hurst)
    if args.steps < 1:
        raise ConfigError("--steps must be a positive integer")
    if not args.horizon > 0:
        raise ConfigError("--horizon must be positive")
    path = generate_path(args.steps, args.horizon, hurst, args.seed, args.method)
    out = Path(args.out)
    with _open_out(out) as fh:
        path.to_csv(fh)
    config = {"hurst": hurst.value, "steps": args.steps, "horizon": args.horizon, "seed": args.seed,
              "method": args.method, "out": str(out)}
    write_manifest(_manifest_for(out), "generate", config, args.seed, [out], started)
    return 0


SOLVERS = {
    "flow": lambda pr, p: solve_zero_drift(pr, p),
    "doss": lambda pr, p: solve_doss_sussmann(pr, p),
    "euler": euler_scheme,
    "cn": crank_nicholson_scheme,
}


def cmd_solve(args) -> int:
    started = time.perf_counter()
    hurst = HurstIndex(args.hurst)
    if args.steps < 1:
        raise ConfigError("--steps must be a positive integer")
    problem = SdeProblem(parse_field(args.sigma), parse_field(args.drift), args.x0, args.horizon, hurst)
    path = generate_path(args.steps, args.horizon, hurst, args.seed)
    solution = SOLVERS[args.scheme](problem, path)
    residual = residual_check(problem, solution, path, args.m)
    out = Path(args.out)
    with _open_out(out) as fh:
        solution.to_csv(fh)
    config = {"scheme": args.scheme, "sigma": args.sigma, "drift": args.drift, "x0": args.x0,
              "hurst": hurst.value, "steps": args.steps, "horizon": args.horizon, "seed": args.seed,
              "m": args.m, "out": str(out), "residual": residual}
    if "iterations" in solution.diagnostics:
        config["iteration_histogram"] = iteration_histogram(solution)
    write_manifest(_manifest_for(out), "solve", config, args.seed, [out], started)
    return 0


def cmd_experiment(args) -> int:
    started = time.perf_counter()
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config!r}: {exc.strerror}") from None
    cfg, expect = read_config(text, args.name)
    return _run_experiment(args.name, cfg, expect, Path(args.out_dir), started)


def _run_experiment(name, cfg, expect, out_dir: Path, started) -> int:
    report, rows, header, summary = RUNNERS[name](cfg, name)
    unknown = sorted(set(expect) - set(summary))
    if unknown:
        raise ConfigError(f"expectations name unknown summary fields {unknown}; available: {sorted(summary)}")
    checks = {k: {"expected": v, "actual": summary[k], "ok": check_expectation(summary[k], v)}
              for k, v in expect.items()}
    report["summary"] = summary
    if checks:
        report["expectations"] = checks
    json_out, csv_out = out_dir / f"{name}.json", out_dir / f"{name}.csv"
    with _open_out(json_out) as fh:
        harness.dump_json(report, fh)
    with _open_out(csv_out) as fh:
        harness.write_table(fh, rows, header)
    config = {"experiment": name, **cfg, "expect": expect}
    write_manifest(out_dir / f"{name}{MANIFEST_SUFFIX}", "experiment", config, cfg.get("seed"),
                   [json_out, csv_out], started)
    for key, c in checks.items():
        status = "ok" if c["ok"] else "MISMATCH"
        print(f"{status}: {key} = {c['actual']!r} (expected {c['expected']})")
    return 0 if all(c["ok"] for c in checks.values()) else 1


def cmd_replay(args) -> int:
    """Re-run the command recorded in a manifest, optionally into another directory."""
    manifest = json.loads(Path(args.manifest).read_text())
    cfg = dict(manifest["config"])
    out_dir = Path(args.out_dir) if args.out_dir else None
    command = manifest["command"]
    if command == "experiment":
        name = cfg.pop("experiment")
        expect = cfg.pop("expect", {})
        target = out_dir or Path(manifest["outputs"][0]).parent
        return _run_experiment(name, cfg, expect, target, time.perf_counter())
    out = Path(cfg["out"])
    if out_dir is not None:
        out = out_dir / out.name
    if command == "generate":
        ns = argparse.Namespace(hurst=cfg["hurst"], steps=cfg["steps"], horizon=cfg["horizon"], seed=cfg["seed"],
                                method=cfg["method"], out=str(out))
        return cmd_generate(ns)
    if command == "solve":
        ns = argparse.Namespace(scheme=cfg["scheme"], sigma=cfg["sigma"], drift=cfg["drift"], x0=cfg["x0"],
                                hurst=cfg["hurst"], steps=cfg["steps"], horizon=cfg["horizon"], seed=cfg["seed"],
                                m=cfg["m"], out=str(out))
        return cmd_solve(ns)
    raise ConfigError(f"manifest records unknown command {command!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbmsde", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample an fBm path to CSV")
    g.add_argument("--hurst", type=float, required=True, help="Hurst index in the open interval (0,1)")
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--horizon", type=float, default=1.0)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--method", choices=GENERATORS, default=CIRCULANT)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve an SDE on one sampled path")
    s.add_argument("--scheme", choices=sorted(SOLVERS), required=True)
    s.add_argument("--sigma", required=True, help="field preset, e.g. 'linear' or 'sin-bounded'")
    s.add_argument("--drift", default="zero")
    s.add_argument("--x0", type=float, required=True)
    s.add_argument("--hurst", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--m", type=int, default=1, help="Newton-Cotes order of the residual check")
    s.add_argument("--out", default="solution.csv")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run a named Monte Carlo experiment")
    e.add_argument("name", choices=sorted(SCHEMAS))
    e.add_argument("--config", required=True)
    e.add_argument("--out-dir", default=".")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("replay", help="re-run a manifest")
    r.add_argument("manifest")
    r.add_argument("--out-dir", default=None)
    r.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FbmSdeError as exc:
        kind = type(exc).__name__
        print(f"fbmsde {args.command}: {kind}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
