import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fbmsde.errors import DomainError
from fbmsde.fbm import (CHOLESKY, CIRCULANT, FbmPath, HurstIndex, covariance_matrix, fbm_covariance,
                        fgn_autocovariance, generate_path, generate_paths, increments, path_seed, splitmix64)

hursts = st.floats(0.02, 0.98)


def test_hurst_rejects_boundary_and_outside():
    for bad in (0.0, 1.0, -0.1, 1.2, float("nan")):
        with pytest.raises(DomainError, match=r"\(0,1\)"):
            HurstIndex(bad)
    assert HurstIndex(0.3).value == 0.3


def test_covariance_examples():
    assert fbm_covariance(1, 1, 0.3) == pytest.approx(1.0)
    assert fbm_covariance(0, 5, 0.3) == 0.0
    # H = 1/2 reduces to min(s, t)
    assert fbm_covariance(0.5, 1, 0.5) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        fbm_covariance(-1, 1, 0.5)


@given(st.floats(0, 3), st.floats(0, 3), hursts)
def test_covariance_symmetric(s, t, h):
    assert fbm_covariance(s, t, h) == pytest.approx(fbm_covariance(t, s, h), abs=1e-15)


@given(st.lists(st.floats(0.0, 4.0), min_size=2, max_size=64), hursts)
def test_covariance_matrix_psd(times, h):
    c = covariance_matrix(np.array(times), h)
    assert np.allclose(c, c.T)
    assert np.linalg.eigvalsh(c).min() >= -1e-10 * max(np.trace(c), 1e-300)


def test_fgn_autocovariance_matches_differenced_covariance():
    n, h, dt = 8, 0.3, 0.25
    r = fgn_autocovariance(n, h, dt)
    k = 3
    direct = (fbm_covariance((k + 1) * dt, dt, h) - fbm_covariance(k * dt, dt, h)
              - fbm_covariance((k + 1) * dt, 0, h) + fbm_covariance(k * dt, 0, h))
    assert r[k] == pytest.approx(direct, abs=1e-14)
    assert r[0] == pytest.approx(dt ** (2 * h))


def test_single_step_is_standard_normal_draw():
    p = generate_path(1, 1.0, 0.5, seed=11)
    assert p.values[0] == 0.0 and len(p.values) == 2
    draws = np.array([generate_path(1, 1.0, 0.5, s).values[1] for s in range(3000)])
    assert stats.kstest(draws, "norm").pvalue > 0.01


@pytest.mark.parametrize("method", [CIRCULANT, CHOLESKY])
def test_path_shape_and_reproducibility(method):
    a = generate_path(64, 2.0, 0.35, 123, method)
    b = generate_path(64, 2.0, 0.35, 123, method)
    assert a.values[0] == 0.0
    assert len(a.values) == 65 and a.n == 64
    assert a.generator_tag == method
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, generate_path(64, 2.0, 0.35, 124, method).values)
    with pytest.raises(ValueError):
        a.values[1] = 0.0


def test_terminal_variance_and_covariance():
    ends = np.array([generate_path(16, 1.0, 0.3, s).values[-1] for s in range(10_000)])
    assert ends.var() == pytest.approx(1.0, abs=0.05)
    pts = np.array([generate_path(2, 1.0, 0.7, s).values[1:] for s in range(10_000)])
    emp = np.cov(pts.T)[0, 1]
    assert emp == pytest.approx(fbm_covariance(0.5, 1.0, 0.7), abs=0.05)


def test_self_similarity():
    paths = np.array([generate_path(4, 1.0, 0.35, path_seed(5, i)).values for i in range(8000)])
    for k, t in ((1, 0.25), (2, 0.5), (4, 1.0)):
        assert paths[:, k].var() == pytest.approx(t ** 0.7, rel=0.06)


def test_circulant_and_cholesky_agree_in_distribution():
    a = [generate_path(32, 1.0, 0.3, path_seed(1, i), CIRCULANT).values[-1] for i in range(2000)]
    b = [generate_path(32, 1.0, 0.3, path_seed(2, i), CHOLESKY).values[-1] for i in range(2000)]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_increments_examples():
    p = FbmPath(HurstIndex(0.5), 1.0, 2, np.array([0.0, 1.0, 3.0]), 0, CIRCULANT)
    inc = increments(p)
    assert list(inc.deltas) == [1.0, 2.0]
    assert inc.sup_pow(2) == 4.0
    assert inc.deltas.sum() == p.values[-1]


@given(st.integers(0, 2**63), st.integers(1, 6))
def test_increments_telescope(seed, k):
    p = generate_path(2**k, 1.0, 0.4, seed)
    assert math.isclose(increments(p).deltas.sum(), p.values[-1] - p.values[0], abs_tol=1e-12)


def test_restriction_coupling_is_exact():
    master = generate_path(64, 1.0, 0.3, 9)
    half = master.restrict(32)
    quarter = master.restrict(16)
    assert np.array_equal(half.values[::2], quarter.values)
    assert np.array_equal(master.values[::4], quarter.values)
    with pytest.raises(DomainError):
        master.restrict(24)


def test_seed_mixing_is_deterministic_and_distinct():
    assert splitmix64(0) == 0xE220A8397B1DCDAF  # reference splitmix64 output for state 0
    seeds = {path_seed(42, i) for i in range(1000)}
    assert len(seeds) == 1000
    batch = generate_paths(8, 1.0, 0.4, 42, 3)
    assert np.array_equal(batch[2].values, generate_path(8, 1.0, 0.4, path_seed(42, 2)).values)


def test_csv_dump():
    p = generate_path(4, 1.0, 0.4, 3)
    buf = io.StringIO()
    p.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,value" and len(lines) == 6
    assert float(lines[-1].split(",")[1]) == p.values[-1]
