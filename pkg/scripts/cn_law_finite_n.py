"""Finite-n structure of the normalised Crank-Nicholson error for sigma(x) = x.

For this field log(Xhat_1 / X_1) = sum_k [log((1 + D/2)/(1 - D/2)) - D] exactly, so
the normalised error z = 12 n^(3H-1/2) (Xhat_1 - X_1) / X_1 is cheap to sample.
Conditioning the increments on B_1 leaves a term close to 3 n^(H-1/2) B_1 in
z; it vanishes as n grows, but only like n^(H-1/2).  This script prints the
regression slope of z on B_1 next to that prediction, and the correlation
between |z| and X_1, for several n and seeds.

    python scripts/cn_law_finite_n.py --hurst 0.4 --paths 2000
"""

import argparse
import math

import numpy as np

from fbmsde.fbm import generate_path, path_seed


def sample(n, H, paths, seed):
    z, b1 = np.empty(paths), np.empty(paths)
    for i in range(paths):
        b = generate_path(n, 1.0, H, path_seed(seed, i))
        d = np.diff(b.values)
        log_ratio = float(np.sum(np.log((1 + d / 2) / (1 - d / 2)) - d))
        z[i] = 12 * n ** (3 * H - 0.5) * math.expm1(log_ratio)
        b1[i] = b.values[-1]
    return z, b1


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--hurst", type=float, default=0.4)
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--seeds", type=int, nargs="*", default=[2024, 1, 7])
    ap.add_argument("--log2n", type=int, nargs="*", default=[10, 12, 14])
    args = ap.parse_args()
    H = args.hurst
    print("n, seed, slope(z on B1), 3 n^(H-1/2), corr(|z|, X1)")
    for k in args.log2n:
        n = 2**k
        for seed in args.seeds:
            z, b1 = sample(n, H, args.paths, seed)
            slope = np.polyfit(b1, z, 1)[0]
            corr = np.corrcoef(np.abs(z), np.exp(b1))[0, 1]
            print(f"{n}, {seed}, {slope:.3f}, {3 * n ** (H - 0.5):.3f}, {corr:.3f}")


if __name__ == "__main__":
    main()
