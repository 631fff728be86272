"""Run every configs/*.cfg through the CLI and collect the outputs under results/.

    python scripts/run_experiments.py [--only cn-barrier power-sum] [--out results]
"""

import argparse
import sys
from pathlib import Path

from fbmsde.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def run(names, out):
    failures = []
    for cfg in sorted((ROOT / "configs").glob("*.cfg")):
        name = cfg.stem
        if names and name not in names:
            continue
        print(f"== {name}")
        code = cli_main(["experiment", name, "--config", str(cfg), "--out-dir", str(out)])
        if code:
            failures.append((name, code))
    return failures


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--only", nargs="*", default=[])
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()
    bad = run(set(args.only), Path(args.out))
    for name, code in bad:
        print(f"{name}: exit {code}", file=sys.stderr)
    sys.exit(1 if bad else 0)
