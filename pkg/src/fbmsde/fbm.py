"""Exact sampling of fractional Brownian motion on a uniform grid.

The default sampler embeds the fractional Gaussian noise autocovariance in a
circulant matrix (Davies-Harte), which is exact and O(n log n).  A Cholesky
factorisation of the full covariance is kept as fallback and cross-check.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError, GenerationError

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

CIRCULANT = "circulant"
CHOLESKY = "cholesky"
GENERATORS = (CIRCULANT, CHOLESKY)

# min eigenvalue below -tol * max eigenvalue triggers the Cholesky fallback
EIGEN_TOL = 1e-9


@dataclass(frozen=True)
class HurstIndex:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0) or math.isnan(v):
            raise DomainError(f"Hurst index must lie in the open interval (0,1), got {self.value!r}")
        object.__setattr__(self, "value", v)

    def __float__(self):
        return self.value


HurstLike = Union[HurstIndex, float]


def as_hurst(H: HurstLike) -> HurstIndex:
    return H if isinstance(H, HurstIndex) else HurstIndex(H)


def splitmix64(x: int) -> int:
    """One splitmix64 output step applied to ``x``."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def path_seed(base_seed: int, index: int) -> int:
    """Per-path seed: base seed mixed with the path index.

    Depends only on ``(base_seed, index)``, so parallel runs are reproducible
    regardless of how paths are distributed over workers.
    """
    return splitmix64((int(base_seed) & MASK64) ^ splitmix64(int(index) & MASK64))


@dataclass(frozen=True)
class IncrementView:
    deltas: np.ndarray

    def sup_pow(self, p: float) -> float:
        """max_k |delta_k|^p."""
        return float(np.max(np.abs(self.deltas) ** p))

    def __len__(self):
        return len(self.deltas)


@dataclass(frozen=True)
class FbmPath:
    """Samples of B at times kT/n, k = 0..n."""

    hurst: HurstIndex
    T: float
    n: int
    values: np.ndarray = field(repr=False)
    seed: int = 0
    generator_tag: str = CIRCULANT

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.n + 1,):
            raise DomainError(f"expected {self.n + 1} values, got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @property
    def dt(self) -> float:
        return self.T / self.n

    def increments(self) -> IncrementView:
        return increments(self)

    def restrict(self, n: int) -> "FbmPath":
        """Subsample onto the coarser grid of ``n`` steps (``n`` must divide ``self.n``)."""
        if n < 1 or self.n % n:
            raise DomainError(f"cannot restrict a {self.n}-step path to {n} steps")
        stride = self.n // n
        return FbmPath(self.hurst, self.T, n, self.values[::stride], self.seed, self.generator_tag)

    def to_csv(self, fh) -> None:
        write_path_csv(fh, self.times, self.values, header=("t", "value"))


def fbm_covariance(s: float, t: float, H: HurstLike) -> float:
    """Cov(B_s, B_t) = (s^2H + t^2H - |t-s|^2H) / 2."""
    h2 = 2.0 * as_hurst(H).value
    if s < 0 or t < 0:
        raise DomainError(f"times must be non-negative, got s={s}, t={t}")
    return 0.5 * (s**h2 + t**h2 - abs(t - s) ** h2)


def covariance_matrix(times: np.ndarray, H: HurstLike) -> np.ndarray:
    h2 = 2.0 * as_hurst(H).value
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise DomainError("times must be non-negative")
    s, u = t[:, None], t[None, :]
    return 0.5 * (s**h2 + u**h2 - np.abs(s - u) ** h2)


def fgn_autocovariance(n: int, H: float, dt: float) -> np.ndarray:
    """gamma(k) = dt^2H (|k+1|^2H - 2|k|^2H + |k-1|^2H) / 2 for k = 0..n."""
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * H
    return 0.5 * dt**h2 * (np.abs(k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)


@functools.lru_cache(maxsize=64)
def _circulant_sqrt_eigs(n: int, H: float, T: float):
    """sqrt(eigenvalues / 2n) of the circulant embedding, or None if not PSD."""
    gamma = fgn_autocovariance(n, H, T / n)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -EIGEN_TOL * lam.max():
        return None
    lam = np.clip(lam, 0.0, None)
    out = np.sqrt(lam / len(row))
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=16)
def _cholesky_factor(n: int, H: float, T: float) -> np.ndarray:
    times = np.linspace(0.0, T, n + 1)[1:]
    cov = covariance_matrix(times, H)
    scale = np.trace(cov) / n
    for jitter in (0.0, 1e-12 * scale, 1e-10 * scale, 1e-8 * scale):
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(n))
            L.setflags(write=False)
            return L
        except np.linalg.LinAlgError:
            pass
    eig = np.linalg.eigvalsh(cov)
    raise GenerationError(
        f"Cholesky failed for n={n}, H={H}, T={T}: min eigenvalue {eig.min():.3e}, "
        f"last jitter {jitter:.3e}"
    )


def _circulant_sample(n: int, H: float, T: float, rng: np.random.Generator):
    sq = _circulant_sqrt_eigs(n, H, T)
    if sq is None:
        return None
    m = len(sq)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(sq * z)[:n].real


def generate_path(n: int, T: float, H: HurstLike, seed: int, method: str = CIRCULANT) -> FbmPath:
    """Draw one fBm path on the grid kT/n.

    ``method="circulant"`` falls back to Cholesky when the embedding is not
    positive semidefinite; the tag on the returned path records what was used.
    """
    hurst = as_hurst(H)
    if int(n) != n or n < 1:
        raise DomainError(f"number of steps must be an integer >= 1, got {n!r}")
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T!r}")
    if method not in GENERATORS:
        raise DomainError(f"unknown generator {method!r}")
    n = int(n)
    T = float(T)
    rng = np.random.default_rng(int(seed) & MASK64)
    incs = None
    tag = method
    if method == CIRCULANT:
        incs = _circulant_sample(n, hurst.value, T, rng)
    if incs is None:
        tag = CHOLESKY
        L = _cholesky_factor(n, hurst.value, T)
        vals = np.concatenate([[0.0], L @ rng.standard_normal(n)])
    else:
        vals = np.concatenate([[0.0], np.cumsum(incs)])
    return FbmPath(hurst, T, n, vals, int(seed), tag)


def generate_paths(n, T, H, base_seed, count, method=CIRCULANT, start=0):
    """Paths ``start .. start+count-1`` of the family identified by ``base_seed``."""
    return [generate_path(n, T, H, path_seed(base_seed, i), method) for i in range(start, start + count)]


def increments(path) -> IncrementView:
    values = path.values if hasattr(path, "values") else np.asarray(path, dtype=float)
    return IncrementView(np.diff(values))


def write_path_csv(fh, times, values, header=("t", "value")) -> None:
    fh.write(",".join(header) + "\n")
    for t, v in zip(times, values):
        fh.write(f"{t:.17g},{v:.17g}\n")
