import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sdmeq import channel as ch
from sdmeq.errors import InvalidDimensionError, InvalidSpecError, NumericalDomainError

from conftest import random_link


def unitarity_error(U):
    return np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()


# haar_unitary -----------------------------------------------------------------


def test_haar_scalar_is_unit_modulus(rng):
    U = ch.haar_unitary(rng, 1)
    assert U.shape == (1, 1)
    assert abs(abs(U[0, 0]) - 1.0) < 1e-12


def test_haar_8x8_unitary(rng):
    assert unitarity_error(ch.haar_unitary(rng, 8)) < 1e-12


def test_haar_zero_dimension_rejected(rng):
    with pytest.raises(InvalidDimensionError):
        ch.haar_unitary(rng, 0)


def test_haar_eigenphases_uniform(rng):
    # eigenvalue phases of a Haar unitary are marginally uniform on (-pi, pi]
    phases = np.concatenate([np.angle(np.linalg.eigvals(ch.haar_unitary(rng, 4)))
                             for _ in range(10_000)])
    p = stats.kstest(phases, stats.uniform(loc=-np.pi, scale=2 * np.pi).cdf).pvalue
    assert p > 0.01


def test_haar_left_invariance(rng):
    # the distribution of |U_00|^2 is Beta(1, n-1), also after a fixed rotation
    Q = ch.haar_unitary(np.random.default_rng(7), 4)
    a = np.array([abs(ch.haar_unitary(rng, 4)[0, 0]) ** 2 for _ in range(4000)])
    b = np.array([abs((Q @ ch.haar_unitary(rng, 4))[0, 0]) ** 2 for _ in range(4000)])
    beta = stats.beta(1, 3).cdf
    assert stats.kstest(a, beta).pvalue > 0.01
    assert stats.kstest(b, beta).pvalue > 0.01


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_haar_unitary_property(n, seed):
    assert unitarity_error(ch.haar_unitary(np.random.default_rng(seed), n)) < 1e-12


# draw_section -----------------------------------------------------------------


def test_section_zero_variance(rng):
    sec = ch.draw_section(rng, random_link(2, 0.0, dmd=0.0))
    assert np.all(sec.g == 0) and np.all(sec.tau == 0)


def test_section_gain_spread(rng):
    link = random_link(4, 0.7)
    g = np.array([ch.draw_section(rng, link).g for _ in range(10_000)])
    target = 0.7 * math.log(10) / 10 * math.sqrt(7 / 8)  # centering removes 1/2N
    assert np.all(np.abs(g.std(axis=0) / target - 1) < 0.05)
    assert np.abs(g.sum(axis=1)).max() < 1e-12


def test_dmd_per_section_conversion():
    assert ch.LinkSpec.dmd_per_section(11.1, 10.0) * 1e12 == pytest.approx(35.1, abs=0.05)


@settings(max_examples=30, deadline=None)
@given(n_modes=st.integers(1, 6), mdl=st.floats(0, 6), dmd_ps=st.floats(0, 100),
       seed=st.integers(0, 2**32 - 1))
def test_section_invariants(n_modes, mdl, dmd_ps, seed):
    sec = ch.draw_section(np.random.default_rng(seed), random_link(n_modes, mdl,
                                                                   dmd=dmd_ps * 1e-12))
    assert abs(sec.g.sum()) < 1e-12
    assert abs(sec.tau.sum()) < 1e-12
    assert unitarity_error(sec.U) < 1e-12
    assert unitarity_error(sec.V) < 1e-12


def test_link_spec_validation():
    with pytest.raises(InvalidSpecError):
        ch.LinkSpec(n_modes=2, K=0)
    with pytest.raises(InvalidSpecError):
        ch.LinkSpec(n_modes=2, sigma_mdl=-1.0)


# section_response -------------------------------------------------------------


def test_section_lossless_is_VUh(rng):
    sec = ch.draw_section(rng, random_link(2, 0.0, dmd=0.0))
    M = ch.section_response(sec, 3e9)
    np.testing.assert_allclose(M, sec.V @ sec.U.conj().T, atol=1e-14)
    assert unitarity_error(M) < 1e-12


def test_section_diagonal_case():
    sec = ch.SectionParams(g=np.array([0.2, -0.2]), tau=np.zeros(2), U=np.eye(2), V=np.eye(2))
    np.testing.assert_allclose(ch.section_response(sec, 0.0),
                               np.diag([math.exp(0.1), math.exp(-0.1)]), atol=1e-15)


def test_section_frobenius_norm(rng):
    sec = ch.draw_section(rng, random_link(4, 3.8))
    M = ch.section_response(sec, 5e9)
    assert np.sum(np.abs(M) ** 2) == pytest.approx(np.sum(np.exp(sec.g)), rel=1e-10)


# link_response ----------------------------------------------------------------


def test_link_single_section(rng):
    grid = ch.FreqGrid.centered(60e9, 16)
    sec = ch.draw_section(rng, random_link(2, 1.0))
    H = ch.link_response([sec], grid)
    for f, m in zip(grid.freqs, H.matrices):
        np.testing.assert_allclose(m, ch.section_response(sec, f), atol=1e-14)


def test_link_lossless_unitary(rng):
    grid = ch.FreqGrid.centered(60e9, 64)
    secs = ch.draw_link(rng, random_link(3, 0.0, K=20))
    H = ch.link_response(secs, grid)
    eye = np.eye(6)
    assert np.abs(H.matrices.conj().transpose(0, 2, 1) @ H.matrices - eye).max() < 1e-10


def test_link_phase_slope_sums_delays():
    grid = ch.FreqGrid.centered(20e9, 200)
    t1 = np.array([10e-12, -10e-12])
    t2 = np.array([-3e-12, 3e-12])
    secs = [ch.SectionParams(np.zeros(2), t, np.eye(2), np.eye(2)) for t in (t1, t2)]
    H = ch.link_response(secs, grid)
    for n in range(2):
        ph = np.unwrap(np.angle(H.matrices[:, n, n]))
        slope = np.polyfit(grid.freqs, ph, 1)[0]
        assert slope == pytest.approx(-2 * np.pi * (t1[n] + t2[n]), rel=1e-9)


def test_link_dimension_mismatch(rng):
    grid = ch.FreqGrid.centered(60e9, 8)
    a = ch.draw_section(rng, random_link(1, 0.0))
    b = ch.draw_section(rng, random_link(2, 0.0))
    with pytest.raises(InvalidDimensionError):
        ch.link_response([a, b], grid)


# supergaussian_gain -----------------------------------------------------------


def test_supergaussian_values():
    flt = ch.FilterSpec(order=2, b3db=15e9, center=1e9)
    assert ch.supergaussian_gain(flt, 1e9) == pytest.approx(1.0)
    for f in (1e9 + 7.5e9, 1e9 - 7.5e9):
        assert abs(ch.supergaussian_gain(flt, f) ** 2 - 0.5) < 1e-12
    assert ch.supergaussian_gain(flt, 16e9) ** 2 == pytest.approx(2.0 ** -16, rel=1e-12)


def test_filter_spec_validation():
    with pytest.raises(InvalidSpecError):
        ch.FilterSpec(order=0.5)
    with pytest.raises(InvalidSpecError):
        ch.FilterSpec(b3db=0.0)


# path_response ----------------------------------------------------------------

GRID = ch.FreqGrid.centered(60e9, 100)
FLT = ch.FilterSpec(order=2, b3db=15e9)


def test_path_single_link(rng):
    link = random_link(2, 1.0, K=5)
    path = ch.PathSpec(links=[link])
    secs = ch.draw_path(np.random.default_rng(3), path)
    H, down = ch.path_response(path, None, GRID, sections=secs)
    np.testing.assert_allclose(H.matrices, ch.link_response(secs[0], GRID).matrices)
    assert len(down) == 1
    np.testing.assert_allclose(down[0].matrices, ch.FreqResponse.identity(GRID, 4).matrices)


def test_path_rx_filters_scale_amplitude():
    links = [random_link(2, 1.0, K=3)] * 4
    bare = ch.PathSpec(links=links)
    secs = ch.draw_path(np.random.default_rng(5), bare)
    H0, _ = ch.path_response(bare, None, GRID, sections=secs)
    filt = ch.PathSpec(links=links, filters=[(ch.RX, FLT)] * 4)
    H1, _ = ch.path_response(filt, None, GRID, sections=secs)
    g4 = ch.supergaussian_gain(FLT, GRID.freqs) ** 4
    np.testing.assert_allclose(H1.matrices, H0.matrices * g4[:, None, None], atol=1e-12)


def test_path_distributed_filter_count():
    # filters at the end of every link: noise from link l sees L - l filters
    links = [random_link(1, 0.0, K=1, dmd=0.0)] * 4
    filters = [(i, FLT) for i in range(1, 4)] + [(ch.RX, FLT)]
    path = ch.PathSpec(links=links, filters=filters)
    secs = ch.draw_path(np.random.default_rng(0), path)
    _, down = ch.path_response(path, None, GRID, sections=secs)
    g = ch.supergaussian_gain(FLT, GRID.freqs)
    for l, D in enumerate(down):
        # lossless links: |det D| = |G|^(2 (4 - l)) for a 2x2 cascade
        det = np.abs(np.linalg.det(D.matrices))
        np.testing.assert_allclose(det, g ** (2 * (4 - l)), rtol=1e-9, atol=1e-300)


def test_path_invalid_placement():
    with pytest.raises(InvalidSpecError):
        ch.PathSpec(links=[random_link(1, 0.0)], filters=[(1, FLT)])
    with pytest.raises(InvalidSpecError):
        ch.PathSpec(links=[random_link(1, 0.0)], noise_injections=[(0, 0.5)])


@settings(max_examples=15, deadline=None)
@given(K=st.integers(1, 10), n_modes=st.integers(1, 4), dmd_ps=st.floats(0, 80),
       seed=st.integers(0, 2**32 - 1))
def test_lossless_limit(K, n_modes, dmd_ps, seed):
    path = ch.PathSpec(links=[random_link(n_modes, 0.0, K=K, dmd=dmd_ps * 1e-12)])
    H, _ = ch.path_response(path, np.random.default_rng(seed), GRID)
    m = H.matrices
    assert np.abs(m.conj().transpose(0, 2, 1) @ m - np.eye(2 * n_modes)).max() < 1e-9


def test_path_determinism():
    path = ch.PathSpec(links=[random_link(2, 3.8, K=10)])
    a, _ = ch.path_response(path, np.random.default_rng(99), GRID)
    b, _ = ch.path_response(path, np.random.default_rng(99), GRID)
    assert a.matrices.tobytes() == b.matrices.tobytes()
    assert a.checksum() == b.checksum()


# noise covariance and whitening ----------------------------------------------


def test_noise_single_rx_injection_white():
    Wn = ch.noise_covariance([ch.FreqResponse.identity(GRID, 4)], [1.0], 0.1)
    np.testing.assert_allclose(Wn.matrices, 0.1 * np.broadcast_to(np.eye(4), (100, 4, 4)))


def test_noise_tx_filters_do_not_color():
    links = [random_link(2, 2.0, K=3)] * 4
    secs = ch.draw_path(np.random.default_rng(1), ch.PathSpec(links=links))
    Ws = []
    for filters in ([], [(ch.TX, FLT)] * 4):
        path = ch.PathSpec(links=links, filters=filters)
        _, down = ch.path_response(path, None, GRID, sections=secs)
        Ws.append(ch.path_noise_covariance(path, down, 0.1).matrices)
    np.testing.assert_allclose(Ws[0], Ws[1], atol=1e-14)


def test_noise_through_one_filter():
    g = ch.supergaussian_gain(FLT, GRID.freqs)
    D = ch.FreqResponse.identity(GRID, 2).scaled(g)
    Wn = ch.noise_covariance([D], [1.0], 0.1)
    np.testing.assert_allclose(Wn.matrices, 0.1 * (g ** 2)[:, None, None] * np.eye(2))


def test_noise_empty_injection_list():
    with pytest.raises(InvalidSpecError):
        ch.noise_covariance([], [], 0.1)


def test_whiten_white_noise_identity(rng):
    H = ch.FreqResponse(GRID, rng.standard_normal((100, 2, 2)) + 0j)
    Wn = ch.noise_covariance([ch.FreqResponse.identity(GRID, 2)], [1.0], 0.1)
    assert np.array_equal(ch.whiten(H, Wn, 0.1).matrices, H.matrices)


def whitening_residual(Wn, n0_half):
    C = Wn.matrices / n0_half
    lam, Q = np.linalg.eigh(C)
    lam = np.maximum(lam, 1e-12 * lam.max())
    T = (Q / np.sqrt(lam)[:, None, :]) @ Q.conj().transpose(0, 2, 1)
    out = T @ Wn.matrices @ T.conj().transpose(0, 2, 1)
    return np.abs(out - n0_half * np.eye(Wn.dim)).max()


def test_whiten_identity_general():
    links = [random_link(2, 3.8, K=12)] * 4
    path = ch.PathSpec(links=links, filters=[(i, FLT) for i in range(1, 4)] + [(ch.RX, FLT)])
    H, down = ch.path_response(path, np.random.default_rng(4), ch.FreqGrid.centered(30e9, 50))
    Wn = ch.path_noise_covariance(path, down, 0.1)
    assert whitening_residual(Wn, 0.1) < 1e-10
    # same check through whiten itself: with S = Wn^(1/2), T S (T S)^H = T Wn T^H
    lam, Q = np.linalg.eigh(Wn.matrices)
    sq = (Q * np.sqrt(np.maximum(lam, 0))[:, None, :]) @ Q.conj().transpose(0, 2, 1)
    TS = ch.whiten(ch.FreqResponse(Wn.grid, sq), Wn, 0.1).matrices
    assert np.abs(TS @ TS.conj().transpose(0, 2, 1) - 0.1 * np.eye(4)).max() < 1e-10


def test_whiten_scalar_filter_with_floor():
    g = ch.supergaussian_gain(ch.FilterSpec(order=2, b3db=15e9), GRID.freqs)
    H = ch.FreqResponse(GRID, np.broadcast_to(np.eye(2) + 0j, (100, 2, 2)).copy()).scaled(g)
    Wn = ch.noise_covariance([ch.FreqResponse.identity(GRID, 2).scaled(g)], [1.0], 0.1)
    out = ch.whiten(H, Wn, 0.1).matrices[:, 0, 0].real
    floor = np.sqrt(np.maximum(g ** 2, 1e-12 * (g ** 2).max()))
    np.testing.assert_allclose(out, g / floor, rtol=1e-12)
    assert out[np.argmax(g)] == pytest.approx(1.0)
    assert out.min() < 1.0  # floor active at the band edges


def test_whiten_rejects_non_psd():
    bad = np.broadcast_to(np.diag([1.0, -1.0]) + 0j, (100, 2, 2)).copy()
    bad[:, 0, 1] = 0.5
    bad[:, 1, 0] = 0.5
    H = ch.FreqResponse.identity(GRID, 2)
    with pytest.raises(NumericalDomainError):
        ch.whiten(H, ch.FreqResponse(GRID, bad), 0.1)
