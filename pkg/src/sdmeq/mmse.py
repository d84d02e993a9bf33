"""Finite-length MMSE MIMO equalizer: taps, error covariance and output SNR.

With the block channel ``P`` of size ``(2N M s) x (2N (M + nu))`` and white
noise of variance ``s N0/2`` per sample::

    W   = Z_d P^H (P P^H + s N0/2 I)^-1
    Ree = s N0/2 Z_d (P^H P + s N0/2 I)^-1 Z_d^H
    SNR_i = 1 / Ree[i, i] - 1

``Z_d`` selects the ``d``-th 2N-block (the decision delay). ``P^H P`` is
block-banded, so long filters are handled with a banded Cholesky factor;
one block solve per candidate delay gives the matching diagonal block.
"""
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.linalg as sla

from . import toeplitz
from .errors import DegenerateModeError, InvalidSpecError, NumericalDomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EqualizerDesign:
    M: int
    n0_half: float
    delta: object = "auto"

    def __post_init__(self):
        if self.M < 1:
            raise InvalidSpecError("M must be >= 1")
        if not self.n0_half > 0:
            raise InvalidSpecError("N0/2 must be positive")
        if self.delta != "auto" and (not isinstance(self.delta, (int, np.integer))
                                     or self.delta < 0):
            raise InvalidSpecError("delta must be 'auto' or a non-negative integer")


@dataclass
class EqualizerSolution:
    W: np.ndarray
    Ree: np.ndarray
    snr: np.ndarray
    delta_used: int
    harmonic_snr: float
    M: int = 0
    s: int = 0
    delta_profile: np.ndarray = field(default=None, repr=False)

    @property
    def snr_db(self):
        return to_db(self.snr)

    @property
    def harmonic_snr_db(self):
        return float(to_db(self.harmonic_snr))


def to_db(x):
    return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


# ----------------------------------------------------------------------------
# dense operators on an explicit block matrix
# ----------------------------------------------------------------------------


def assemble_block_channel(dc, M):
    """Banded block-Toeplitz ``P``: block-row r holds P_0..P_nu from block-column r."""
    if M < 1:
        raise InvalidSpecError("M must be >= 1")
    nu = dc.nu
    rows, d = dc.taps.shape[1], dc.taps.shape[2]
    P = np.zeros((M * rows, (M + nu) * d), dtype=np.complex128)
    band = np.concatenate(list(dc.taps), axis=1)  # rows x (nu+1) d
    for r in range(M):
        P[r * rows:(r + 1) * rows, r * d:(r + nu + 1) * d] = band
    return P


def _check_delta(delta, nblocks):
    if not 0 <= delta < nblocks:
        raise InvalidSpecError(f"delta={delta} outside [0, {nblocks - 1}]")


def _gram_factor(P, n0_half, s):
    A = P.conj().T @ P
    A[np.diag_indices_from(A)] += s * n0_half
    try:
        return sla.cho_factor(A, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericalDomainError(f"P^H P + s N0/2 I is not positive definite: {exc}")


def error_covariance(P, n0_half, s, delta, dim):
    """``Ree`` at one delay from the Gram factorization; ``dim`` is 2N."""
    nblocks = P.shape[1] // dim
    _check_delta(delta, nblocks)
    cf = _gram_factor(P, n0_half, s)
    rhs = np.zeros((P.shape[1], dim), dtype=np.complex128)
    rhs[delta * dim:(delta + 1) * dim] = np.eye(dim)
    X = sla.cho_solve(cf, rhs, check_finite=False)
    Ree = s * n0_half * X[delta * dim:(delta + 1) * dim]
    return _hermitize(Ree)


def error_covariance_all_delays(P, n0_half, s, dim):
    """``[(delta, Ree_delta)]`` for every delay, from one factorization."""
    c, lower = _gram_factor(P, n0_half, s)
    inv, info = sla.lapack.zpotri(c, lower=1)
    if info != 0:
        raise NumericalDomainError(f"zpotri failed with info={info}")
    nblocks = P.shape[1] // dim
    out = []
    for k in range(nblocks):
        blk = inv[k * dim:(k + 1) * dim, k * dim:(k + 1) * dim]
        # zpotri fills the lower triangle only
        blk = np.tril(blk) + np.tril(blk, -1).conj().T
        out.append((k, s * n0_half * blk))
    return out


def equalizer_taps(P, n0_half, s, delta, dim):
    """``W = R_xy R_yy^-1`` with ``R_xy = Z_d P^H`` and ``R_yy = P P^H + s N0/2 I``."""
    nblocks = P.shape[1] // dim
    _check_delta(delta, nblocks)
    Ryy = P @ P.conj().T
    Ryy[np.diag_indices_from(Ryy)] += s * n0_half
    Rxy = P[:, delta * dim:(delta + 1) * dim].conj().T
    try:
        cf = sla.cho_factor(Ryy, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericalDomainError(f"R_yy is not positive definite: {exc}")
    # W = Rxy Ryy^-1  <=>  Ryy W^H = Rxy^H
    return sla.cho_solve(cf, Rxy.conj().T, check_finite=False).conj().T


def cross_correlation(P, delta, dim):
    return P[:, delta * dim:(delta + 1) * dim].conj().T


def snr_per_mode(Ree):
    d = np.real(np.diagonal(Ree))
    if np.any(d >= 1.0):
        bad = np.nonzero(d >= 1.0)[0].tolist()
        raise DegenerateModeError(f"outputs {bad} have error variance >= 1")
    if np.any(d <= 0.0):
        raise NumericalDomainError("non-positive error variance")
    return 1.0 / d - 1.0


def harmonic_snr(snr):
    snr = np.asarray(snr, dtype=float)
    if snr.size == 0 or np.any(snr <= 0):
        raise InvalidSpecError("harmonic SNR needs strictly positive entries")
    return float(snr.size / np.sum(1.0 / snr))


def _hermitize(A):
    return 0.5 * (A + A.conj().T)


def _harmonic_from_ree(Ree):
    d = np.real(np.diagonal(Ree))
    if np.any(d >= 1.0) or np.any(d <= 0.0):
        return -np.inf
    return harmonic_snr(1.0 / d - 1.0)


# ----------------------------------------------------------------------------
# structured path: banded Gram straight from the taps
# ----------------------------------------------------------------------------


def gram_blocks(dc, M):
    """Lower block band ``G[d, v] = (P^H P)_{v+d, v}`` for d = 0..nu.

    Sums are formed from prefix or suffix partial sums so that no large
    partial sums are subtracted.
    """
    taps = dc.taps
    nu = dc.nu
    dim = dc.dim
    nb = M + nu
    G = np.zeros((nu + 1, nb, dim, dim), dtype=np.complex128)
    v = np.arange(nb)
    for d in range(nu + 1):
        Q = np.einsum("mij,mik->mjk", taps[d:].conj(), taps[:nu + 1 - d])  # m = 0..nu-d
        pre = np.concatenate([np.zeros((1, dim, dim), complex), np.cumsum(Q, axis=0)])
        suf = np.concatenate([np.cumsum(Q[::-1], axis=0)[::-1], np.zeros((1, dim, dim), complex)])
        lo = np.maximum(0, v - M + 1)
        hi = np.minimum(v, nu - d)
        valid = (lo <= hi) & (v + d < nb)
        use_pre = valid & (lo == 0)
        use_suf = valid & (lo > 0) & (hi == nu - d)
        G[d, use_pre] = pre[hi[use_pre] + 1]
        G[d, use_suf] = suf[lo[use_suf]]
        for vv in np.nonzero(valid & ~use_pre & ~use_suf)[0]:
            G[d, vv] = Q[lo[vv]:hi[vv] + 1].sum(axis=0)
    return G


def _lower_band(G, sigma):
    """Scalar lower band storage ``ab[t, c] = A[c + t, c]`` of ``G + sigma I``."""
    nu1, nb, dim, _ = G.shape
    n = nb * dim
    b = nu1 * dim - 1
    ab = np.zeros((b + 1, n), dtype=np.complex128)
    for d in range(nu1):
        for a in range(dim):  # row within block
            for j in range(dim):  # column within block
                t = d * dim + a - j
                if t < 0:
                    continue
                cols = np.arange(nb - d) * dim + j
                ab[t, cols] = G[d, :nb - d, a, j]
    ab[0] += sigma
    return ab


class BandedGram:
    """Banded Cholesky factor of ``P^H P + s N0/2 I`` for a given channel and M."""

    def __init__(self, dc, M, n0_half):
        self.dc = dc
        self.M = M
        self.n0_half = n0_half
        self.sigma = dc.s * n0_half
        self.dim = dc.dim
        self.nblocks = M + dc.nu
        ab = _lower_band(gram_blocks(dc, M), self.sigma)
        try:
            self.cb = sla.cholesky_banded(ab, lower=True, check_finite=False)
        except sla.LinAlgError as exc:
            raise NumericalDomainError(f"banded Gram is not positive definite: {exc}")

    def solve(self, rhs):
        return sla.cho_solve_banded((self.cb, True), rhs, check_finite=False)

    def delta_rhs(self, delta):
        rhs = np.zeros((self.nblocks * self.dim, self.dim), dtype=np.complex128)
        rhs[delta * self.dim:(delta + 1) * self.dim] = np.eye(self.dim)
        return rhs

    def covariances(self, deltas):
        """``Ree`` at each delay: ``s N0/2`` times diagonal block ``delta`` of the inverse."""
        d = self.dim
        deltas = np.asarray(deltas)
        rhs = np.zeros((self.nblocks, d, deltas.size, d), dtype=np.complex128)
        rhs[deltas, :, np.arange(deltas.size), :] = np.eye(d)
        X = self.solve(rhs.reshape(self.nblocks * d, deltas.size * d))
        X = X.reshape(self.nblocks, d, deltas.size, d)
        return self.sigma * X[deltas, :, np.arange(deltas.size), :]

    def taps(self, delta):
        X = self.solve(self.delta_rhs(delta))
        return _apply_block_channel(self.dc, self.M, X).conj().T


def _apply_block_channel(dc, M, X):
    """``P X`` for X of shape ((M+nu) 2N, k) without forming P."""
    dim = dc.dim
    k = X.shape[1]
    Xb = X.reshape(M + dc.nu, dim, k)
    out = np.zeros((M, dc.taps.shape[1], k), dtype=np.complex128)
    for m in range(dc.nu + 1):
        out += np.einsum("ij,rjk->rik", dc.taps[m], Xb[m:m + M])
    return out.reshape(M * dc.taps.shape[1], k)


# ----------------------------------------------------------------------------
# correlation path: R_yy from tap autocorrelations, cost independent of nu
# ----------------------------------------------------------------------------


def tap_autocorrelation(dc, max_lag):
    """``r[l, p, q] = sum_m P_m[p] P_{m-l}[q]^H`` for ``0 <= l < max_lag`` and the
    negative lags stored at the end (index ``n - l``), from one FFT pass."""
    s, d = dc.s, dc.dim
    n = _fft_size(dc.nu + max_lag)
    F = np.fft.fft(dc.taps, n=n, axis=0)  # (n, s d, d)
    r = np.fft.ifft(F @ F.conj().transpose(0, 2, 1), axis=0)  # (n, s d, s d)
    return r.reshape(n, s, d, s, d).transpose(0, 1, 3, 2, 4)


def _fft_size(n):
    return 1 << int(np.ceil(np.log2(max(int(n), 2))))


def autocorrelation_matrix(dc, M, n0_half):
    """``R_yy = P P^H + s N0/2 I`` assembled block by block (never forms P)."""
    s, d = dc.s, dc.dim
    r = tap_autocorrelation(dc, M)
    n = r.shape[0]
    j = np.arange(M)
    lag = (j[None, :] - j[:, None]) % n  # block (j, j') holds r(j' - j)
    R = r[lag].transpose(0, 2, 4, 1, 3, 5).reshape(M * s * d, M * s * d)
    R[np.diag_indices_from(R)] += s * n0_half
    return R


def cross_blocks(dc, M, deltas):
    """Columns ``Rxy_delta^H`` (block j = P_{delta-j}) for each delta, side by side."""
    s, d = dc.s, dc.dim
    deltas = np.asarray(deltas)
    blocks = dc.taps.reshape(dc.nu + 1, s, d, d)
    X = np.zeros((M, deltas.size, s, d, d), dtype=np.complex128)
    for j in range(M):
        m = deltas - j
        ok = (m >= 0) & (m <= dc.nu)
        X[j, ok] = blocks[m[ok]]
    # rows (j, p, a), columns (delta, c)
    return X.transpose(0, 2, 3, 1, 4).reshape(M * s * d, deltas.size * d)


def _support(dc, tail=1e-12):
    """Symbol-offset window holding all but ``tail`` of the tap energy."""
    e = np.sum(np.abs(dc.taps) ** 2, axis=(1, 2))
    c = np.cumsum(e) / e.sum()
    lo = int(np.searchsorted(c, 0.5 * tail))
    hi = int(np.searchsorted(c, 1.0 - 0.5 * tail))
    return lo, min(hi, dc.nu)


SCHUR_MIN_DIM = 3000  # above this the block Schur factorization beats LAPACK


class CorrelationSolver:
    """``W = R_xy R_yy^-1`` and ``Ree = I - R_xy R_yy^-1 R_xy^H`` for one (channel, M).

    ``R_yy = U^H U`` is factored densely or, for large systems, by the block
    Schur algorithm that exploits its block-Toeplitz structure.
    """

    def __init__(self, dc, M, n0_half, factor="auto"):
        self.dc = dc
        self.M = M
        self.dim = dc.dim
        R = autocorrelation_matrix(dc, M, n0_half)
        if factor == "auto":
            factor = "schur" if R.shape[0] >= SCHUR_MIN_DIM else "dense"
        self.factor = factor
        if factor == "schur":
            b = dc.s * dc.dim
            T = R[:b].reshape(b, M, b).transpose(1, 0, 2)
            del R
            self.U = toeplitz.schur_cholesky(T)
        elif factor == "dense":
            try:
                self.U = sla.cholesky(R, lower=False, overwrite_a=True, check_finite=False)
            except sla.LinAlgError as exc:
                raise NumericalDomainError(f"R_yy is not positive definite: {exc}")
        else:
            raise InvalidSpecError(f"unknown factorization {factor!r}")

    def whitened_cross(self, deltas):
        X = cross_blocks(self.dc, self.M, deltas)
        return sla.solve_triangular(self.U, X, lower=False, trans="C", check_finite=False)

    def covariances(self, deltas):
        d = self.dim
        G = self.whitened_cross(deltas).reshape(-1, len(deltas), d)
        return np.eye(d)[None] - np.einsum("kia,kib->iab", G.conj(), G)

    def taps(self, delta):
        G = self.whitened_cross([delta])
        Wh = sla.solve_triangular(self.U, G, lower=False, check_finite=False)
        return Wh.conj().T


def _profile(blocks):
    return np.array([_harmonic_from_ree(_hermitize(B)) for B in blocks])


def _search_delta(solver, dc, M, coarse=16):
    """Maximize harmonic SNR over delta.

    A coarse scan across the channel support is followed by a bisection-style
    refinement around the coarse winner (the profile is a single broad
    plateau), ending with both neighbours of the final choice.
    """
    lo, hi = _support(dc)
    nb = M + dc.nu
    cand = np.arange(lo, min(hi + M, nb))
    profile = np.full(nb, -np.inf)

    def evaluate(ds):
        ds = np.array([d for d in np.unique(np.clip(ds, 0, nb - 1)) if d not in evaluated])
        if ds.size:
            profile[ds] = _profile(solver.covariances(ds))
            evaluated.update(ds.tolist())

    evaluated = set()
    stride = max(1, int(np.ceil(cand.size / coarse)))
    evaluate(cand[::stride])
    h = stride
    while True:
        best = int(np.argmax(profile))
        h = max(1, h // 2)
        evaluate(np.array([best - h, best + h]))
        if h == 1 and int(np.argmax(profile)) == best:
            break
    if not np.isfinite(profile).any():
        raise DegenerateModeError("no delay yields a usable equalizer")
    return int(np.argmax(profile)), profile


# ----------------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------------


def _all_delay_covariances(dc, M, n0_half):
    P = assemble_block_channel(dc, M)
    return np.stack([R for _, R in error_covariance_all_delays(P, n0_half, dc.s, dc.dim)])


def method_costs(dc, M):
    """Rough flop counts of the three solvers (used by ``method="auto"``)."""
    d, s, nu = dc.dim, dc.s, dc.nu
    n = (M + nu) * d
    b = (nu + 1) * d
    D = M * s * d
    lo, hi = _support(dc)
    n_delta = min(hi - lo + M, 32 + 2 * int(np.ceil((hi - lo + M) / 32)))
    return {
        "dense": float(n) ** 3,
        "banded": 2.0 * n * b * b,
        "correlation": float(D) ** 3 / 3 + float(D) ** 2 * d * n_delta,
    }


def _pick_method(dc, M, method):
    if method != "auto":
        if method not in ("dense", "banded", "correlation"):
            raise InvalidSpecError(f"unknown solver {method!r}")
        return method
    costs = method_costs(dc, M)
    return min(costs, key=costs.get)


def solve(dc, design, method="auto", want_taps=True):
    """Design the MMSE equalizer of length ``design.M`` for channel ``dc``.

    ``delta="auto"`` picks the delay maximizing the harmonic SNR: over every
    delay on the dense and banded paths, by a coarse-then-fine scan on the
    correlation path.
    """
    M = design.M
    n0_half = design.n0_half
    s = dc.s
    dim = dc.dim
    nblocks = M + dc.nu
    sigma = s * n0_half
    method = _pick_method(dc, M, method)
    if design.delta != "auto":
        _check_delta(int(design.delta), nblocks)

    if method == "dense":
        P = assemble_block_channel(dc, M)
        profile = None
        if design.delta == "auto":
            profile = _profile(_all_delay_covariances(dc, M, n0_half))
            if not np.isfinite(profile).any():
                raise DegenerateModeError("no delay yields a usable equalizer")
            delta = int(np.argmax(profile))
        else:
            delta = int(design.delta)
        cf = _gram_factor(P, n0_half, s)
        rhs = np.zeros((nblocks * dim, dim), dtype=np.complex128)
        rhs[delta * dim:(delta + 1) * dim] = np.eye(dim)
        X = sla.cho_solve(cf, rhs, check_finite=False)
        W = (P @ X).conj().T if want_taps else None
        Ree = _hermitize(sigma * X[delta * dim:(delta + 1) * dim])
    else:
        solver = CorrelationSolver(dc, M, n0_half) if method == "correlation" \
            else BandedGram(dc, M, n0_half)
        if design.delta == "auto":
            delta, profile = _search_delta(solver, dc, M)
        else:
            delta, profile = int(design.delta), None
        Ree = _hermitize(solver.covariances([delta])[0])
        W = solver.taps(delta) if want_taps else None

    snr = snr_per_mode(Ree)
    return EqualizerSolution(W=W, Ree=Ree, snr=snr, delta_used=delta,
                             harmonic_snr=harmonic_snr(snr), M=M, s=s,
                             delta_profile=profile)


def harmonic_vs_delay(dc, M, n0_half, method="dense"):
    """Harmonic SNR for every delay ``0 .. M + nu - 1`` (exhaustive)."""
    method = _pick_method(dc, M, method)
    if method == "dense":
        return _profile(_all_delay_covariances(dc, M, n0_half))
    solver = CorrelationSolver(dc, M, n0_half) if method == "correlation" \
        else BandedGram(dc, M, n0_half)
    return _profile(solver.covariances(np.arange(M + dc.nu)))


def iir_limit(dc, n0_half, M_big=1024, tol_db=0.02, M_max=8192, return_M=False):
    """Harmonic SNR of a very long FIR equalizer, the stand-in for the IIR bound.

    ``M`` starts at ``M_big`` and doubles until two successive values differ
    by less than ``tol_db``.
    """
    M = int(M_big)
    prev = None
    while True:
        try:
            cur = solve(dc, EqualizerDesign(M=M, n0_half=n0_half), want_taps=False).harmonic_snr
        except MemoryError:
            if M <= 64:
                raise
            warnings.warn(f"out of memory at M={M}; retrying with M={M // 2}")
            M //= 2
            if prev is not None:
                break
            continue
        if prev is not None and abs(to_db(cur) - to_db(prev)) < tol_db:
            prev = cur
            break
        prev = cur
        if 2 * M > M_max:
            warnings.warn(f"IIR limit not converged to {tol_db} dB at M={M}")
            break
        M *= 2
    return (prev, M) if return_M else prev


def iir_frequency_domain(dc, n0_half, n_freq=4096):
    """Unbiased harmonic SNR of the infinite-length linear MMSE equalizer.

    Independent route: ``Ree = int_0^1 (I + S(f) / (s N0/2))^-1 df`` where
    ``S(f) = sum_p Pf_p(f)^H Pf_p(f)`` folds the ``s`` polyphase components of
    the symbol-rate DTFT of the taps.
    """
    s = dc.s
    dim = dc.dim
    taps = dc.taps  # (nu+1, s dim, dim)
    F = np.fft.fft(taps, n=n_freq, axis=0)  # per-phase DTFT at symbol rate
    S = np.einsum("fij,fik->fjk", F.conj(), F)
    A = np.eye(dim)[None] + S / (s * n0_half)
    Ree = np.mean(np.linalg.inv(A), axis=0)
    return harmonic_snr(snr_per_mode(_hermitize(Ree)))
