"""The numba kernels against their numpy twins."""
import numpy as np
import pytest

from sdmeq import _jit, kernels


def lms_inputs(seed, d=2, s=2, M=5, n=3000):
    rng = np.random.default_rng(seed)
    r = (rng.standard_normal((n * s, d)) + 1j * rng.standard_normal((n * s, d))) / 2
    x = (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))) / 2
    W = np.zeros((d, d * M * s), dtype=complex)
    mu = np.full(n, 1e-3)
    return r, x, W, mu


@pytest.mark.skipif(not _jit.HAS_NUMBA, reason="numba disabled")
@pytest.mark.parametrize("s,M,i0", [(1, 3, 0), (2, 5, 7), (2, 1, 1)])
def test_lms_jit_matches_numpy(s, M, i0):
    r, x, W, mu = lms_inputs(s * 10 + M, s=s, M=M)
    W1, W2 = W.copy(), W.copy()
    e1 = np.empty_like(x)
    e2 = np.empty_like(x)
    k1 = kernels._lms_jit(r, x, W1, mu, i0, s, M, 2, e1, 10.0, 1000)
    k2 = kernels.lms_numpy(r, x, W2, mu, i0, s, M, 2, e2, 10.0, 1000)
    assert k1 == k2 == -1
    np.testing.assert_allclose(e1, e2, atol=1e-12)
    np.testing.assert_allclose(W1, W2, atol=1e-12)


@pytest.mark.parametrize("fn", [kernels.lms_numpy, kernels.lms])
def test_lms_reports_divergence(fn):
    r, x, W, mu = lms_inputs(1, n=4000)
    mu[:] = 50.0
    with np.errstate(all="ignore"):
        k = fn(r, x, W, mu, 0, 2, 5, 2, np.empty_like(x), 10.0, 100)
    assert 0 <= k < 4000


def test_fixed_filter_matches_loop():
    rng = np.random.default_rng(2)
    d, s, M, n = 2, 2, 4, 300
    r = rng.standard_normal((n * s, d)) + 1j * rng.standard_normal((n * s, d))
    W = rng.standard_normal((d, d * M * s)) + 0j
    out = kernels.fixed_filter(r, W, 3, s, M, n, chunk=64)
    for k in (0, 1, 150, n - 1):
        Y = np.concatenate([r[(k * s + 3 - j * s + p) % (n * s)]
                            for j in range(M) for p in range(s)])
        np.testing.assert_allclose(out[k], W @ Y, atol=1e-12)
