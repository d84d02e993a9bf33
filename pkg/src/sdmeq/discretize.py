"""From a whitened frequency response to the fractionally spaced tap sequence.

The end-to-end response ``E(f) = G_rx(f) Hw(f) G_tx(f)`` is evaluated on an
FFT grid spanning the equalizer sample rate ``s / T``; its inverse DFT gives
samples every ``T / s``, which are grouped per symbol offset into
``P_m`` blocks of shape ``(2N s, 2N)`` (phase-major rows).

Time is normalized to the symbol period inside this module.
"""
from dataclasses import dataclass

import numpy as np

from .channel import FreqGrid, FreqResponse
from .errors import AliasingError, ChannelTooLongError, InvalidSpecError

DEFAULT_ENERGY_KEEP = 1.0 - 1e-6
MIN_NFFT = 4096


@dataclass(frozen=True)
class PulseSpec:
    rolloff: float = 0.1
    symbol_rate: float = 30e9
    kind: str = "rrc"

    def __post_init__(self):
        if self.kind != "rrc":
            raise InvalidSpecError(f"unsupported pulse kind {self.kind!r}")
        if not 0.0 <= self.rolloff <= 1.0:
            raise InvalidSpecError("rolloff must lie in [0, 1]")
        if not self.symbol_rate > 0:
            raise InvalidSpecError("symbol_rate must be positive")

    @property
    def T(self):
        return 1.0 / self.symbol_rate

    @property
    def occupied_bandwidth(self):
        """Two-sided occupied bandwidth in Hz."""
        return (1.0 + self.rolloff) * self.symbol_rate


def rrc_amplitude(f_norm, rolloff):
    """Root-raised-cosine amplitude at frequencies normalized to the symbol rate.

    Unity in the flat band, so the pulse has energy ``T``.
    """
    af = np.abs(np.asarray(f_norm, dtype=float))
    out = np.zeros_like(af)
    f1 = 0.5 * (1.0 - rolloff)
    f2 = 0.5 * (1.0 + rolloff)
    out[af <= f1] = 1.0
    if rolloff > 0:
        m = (af > f1) & (af < f2)
        out[m] = np.sqrt(0.5 * (1.0 + np.cos(np.pi / rolloff * (af[m] - f1))))
    return out


@dataclass
class RawTaps:
    """Circular impulse response sampled every ``T/s``: ``samples[i]`` is (2N, 2N)."""

    samples: np.ndarray
    s: int
    T: float

    @property
    def n(self):
        return self.samples.shape[0]

    def sample_energy(self):
        return np.sum(np.abs(self.samples) ** 2, axis=(1, 2))

    def centroid(self):
        """Circular energy centroid, in samples, within ``[0, n)``."""
        e = self.sample_energy()
        n = self.n
        z = np.sum(e * np.exp(2j * np.pi * np.arange(n) / n))
        return (np.angle(z) * n / (2 * np.pi)) % n


@dataclass
class DiscreteChannel:
    """Matrix taps ``P_0 .. P_nu``, each ``(2N s, 2N)``.

    ``taps[m][p*2N:(p+1)*2N]`` is the response at ``(sample_offset + m s + p) T/s``
    to a symbol launched at time 0.
    """

    taps: np.ndarray
    s: int
    T: float
    sample_offset: int = 0
    scale: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=np.complex128)
        if t.ndim != 3:
            raise InvalidSpecError(f"taps must be (nu+1, 2Ns, 2N), got {t.shape}")
        if t.shape[1] != self.s * t.shape[2]:
            raise InvalidSpecError(
                f"tap blocks of shape {t.shape[1:]} do not match s={self.s}")
        self.taps = t

    @property
    def nu(self):
        return self.taps.shape[0] - 1

    @property
    def dim(self):
        """2N, the number of tributaries."""
        return self.taps.shape[2]

    def gram(self):
        """``sum_m P_m^H P_m``."""
        return np.einsum("mij,mik->jk", self.taps.conj(), self.taps)

    def energy(self):
        return float(np.sum(np.abs(self.taps) ** 2))


def next_pow2(n):
    return 1 << int(np.ceil(np.log2(max(int(n), 1))))


def _interp_ratio(src_grid, bandwidth):
    r = bandwidth / src_grid.bandwidth
    ri = int(round(r))
    if ri >= 1 and abs(r - ri) < 1e-9 * r:
        return ri
    return None


def trig_taps(H):
    """Impulse response behind the trigonometric interpolant of ``H``.

    Returns ``(n, h)`` with ``H(f) = sum_n h[n] exp(-2j pi n f / B)`` for
    every ``f`` inside the grid band ``B``; tap ``n`` sits at time ``n / B``.
    For an even bin count the Nyquist term is split between ``+-N/2`` so the
    interpolant stays symmetric.
    """
    src = H.grid
    N = src.n_bins
    B = src.bandwidth
    h = np.fft.ifft(H.matrices, axis=0)
    n = np.fft.fftfreq(N, 1.0 / N).astype(np.int64)
    h = h * np.exp(2j * np.pi * n * src.f_start / B)[:, None, None]
    if N % 2 == 0:
        ny = np.where(n == -N // 2)[0][0]
        h = np.concatenate([h, 0.5 * h[ny:ny + 1]], axis=0)
        h[ny] *= 0.5
        n = np.concatenate([n, [N // 2]])
    return n, h


def resample_response(H, grid, method="trig"):
    """Map ``H`` onto another uniform grid.

    ``"nearest"`` replicates each source bin onto the target bins closest to
    it. ``"trig"`` evaluates the band-limited (trigonometric) interpolant of
    the source samples, i.e. the response of the periodic impulse response
    the source grid implies; it is exact when that response fits in
    ``1 / f_step`` seconds.
    """
    src = H.grid
    f_t = grid.freqs
    d = H.dim
    if method == "nearest":
        idx = np.rint((f_t - src.f_start) / src.f_step).astype(np.int64)
        np.clip(idx, 0, src.n_bins - 1, out=idx)
        return FreqResponse(grid, H.matrices[idx])
    if method != "trig":
        raise InvalidSpecError(f"unknown interpolation {method!r}")

    N = src.n_bins
    B = src.bandwidth
    n, h = trig_taps(H)

    r = _interp_ratio(src, grid.f_step * grid.n_bins)
    L = grid.n_bins
    if r is not None and L >= r * N:
        phase = np.exp(-2j * np.pi * n * grid.f_start / B)
        buf = np.zeros((L, d, d), dtype=np.complex128)
        np.add.at(buf, (n * r) % L, h * phase[:, None, None])
        out = np.fft.fft(buf, axis=0)
        # fft index k is frequency f_start + k f_step once the phase is applied
        return FreqResponse(grid, out)

    out = np.empty((L, d, d), dtype=np.complex128)
    hf = h.reshape(h.shape[0], d * d)
    step = 2048
    for a in range(0, L, step):
        fk = f_t[a:a + step]
        E = np.exp(-2j * np.pi * np.outer(fk, n) / B)
        out[a:a + step] = (E @ hf).reshape(-1, d, d)
    return FreqResponse(grid, out)


def _rx_mode(rx, s):
    if rx == "auto":
        return "matched" if s == 1 else "whitened"
    if rx not in ("matched", "whitened"):
        raise InvalidSpecError(f"unknown receiver model {rx!r}")
    return rx


def pulse_spectrum(pulse, f_hz, s, rx="auto"):
    """``G_rx(f) G_tx(f)`` for the chosen receiver model."""
    g = rrc_amplitude(np.asarray(f_hz) / pulse.symbol_rate, pulse.rolloff)
    if _rx_mode(rx, s) == "matched":
        return g * g
    return g


def default_nfft(Hw, pulse, s):
    ratio = _interp_ratio(Hw.grid, s * pulse.symbol_rate) or 1
    return max(MIN_NFFT, next_pow2(Hw.grid.n_bins * ratio))


def fft_grid(pulse, s, n_fft):
    return FreqGrid.centered(s * pulse.symbol_rate, n_fft)


def end_to_end_response(Hw, pulse, s, n_fft=None, rx="auto", interp="trig", fold=1):
    """``G_rx Hw G_tx`` on an ``n_fft``-bin grid spanning ``[-s/2T, s/2T)``.

    ``rx="matched"`` applies the RRC receive filter. ``rx="whitened"`` models a
    receive filter followed by whitening of the noise it colors, which leaves
    only the transmit RRC; ``"auto"`` picks matched for ``s == 1`` (where the
    matched output is already white at the symbol rate) and whitened
    otherwise, so the equalizer input noise is white with variance
    ``s N0/2`` in both cases.

    ``fold > 1`` widens the grid to ``fold s / T`` with ``fold n_fft`` bins,
    ready for decimation back to ``s`` samples per symbol.
    """
    if n_fft is None:
        n_fft = default_nfft(Hw, pulse, s)
    mode = _rx_mode(rx, s)
    span = fold * s * pulse.symbol_rate
    lo, hi = Hw.grid.f_start, Hw.grid.f_start + Hw.grid.bandwidth
    tol = 1e-9 * span
    if lo > -0.5 * span + tol or hi < 0.5 * span - tol:
        raise InvalidSpecError(
            f"channel grid [{lo:.4g}, {hi:.4g}) Hz does not cover +-{0.5 * span:.4g} Hz")
    grid = fft_grid(pulse, fold * s, fold * n_fft)
    Hf = resample_response(Hw, grid, method=interp)
    return Hf.scaled(pulse_spectrum(pulse, grid.freqs, s, mode))


def impulse_response(E, s, T=1.0, guard=1.0 / 8, alias_tol=1e-6):
    """Inverse DFT of a centered-grid response into ``T/s``-spaced samples.

    Raises :class:`AliasingError` when more than ``alias_tol`` of the energy
    sits in the ``guard`` fraction of the window opposite the centroid.
    """
    spec = np.fft.ifftshift(E.matrices, axes=0)
    samples = np.fft.ifft(spec, axis=0)
    raw = RawTaps(samples=samples, s=int(s), T=T)
    e = raw.sample_energy()
    total = e.sum()
    if total > 0 and guard > 0:
        n = raw.n
        c = raw.centroid()
        dist = np.abs(((np.arange(n) - c + n / 2) % n) - n / 2)
        far = dist > (0.5 - 0.5 * guard) * n
        if e[far].sum() > alias_tol * total:
            raise AliasingError(
                f"{e[far].sum() / total:.2e} of the impulse energy lies in the guard window")
    return raw


def _smallest_window(e, keep):
    """Shortest ``[lo, hi]`` with ``sum(e[lo:hi+1]) >= keep * sum(e)``."""
    total = e.sum()
    target = keep * total
    if keep >= 1.0:
        nz = np.nonzero(e)[0]
        if nz.size == 0:
            return 0, 0
        return int(nz[0]), int(nz[-1])
    csum = np.concatenate([[0.0], np.cumsum(e)])
    best = (0, len(e) - 1)
    lo = 0
    for hi in range(len(e)):
        while lo < hi and csum[hi + 1] - csum[lo + 1] >= target:
            lo += 1
        if csum[hi + 1] - csum[lo] >= target and hi - lo < best[1] - best[0]:
            best = (lo, hi)
    return best


def truncate_memory(raw, energy_keep=DEFAULT_ENERGY_KEEP, scale=1.0):
    """Keep the shortest symbol window holding ``energy_keep`` of the energy.

    ``energy_keep == 1`` keeps the full period of the circular response,
    rotated so that its energy centroid sits in the middle.
    """
    if not 0.9 < energy_keep <= 1.0:
        raise InvalidSpecError("energy_keep must lie in (0.9, 1]")
    s = raw.s
    n = raw.n
    if n % s:
        raise InvalidSpecError(f"window of {n} samples is not a multiple of s={s}")
    n_sym = n // s
    c = raw.centroid()
    if c >= n / 2:
        c -= n  # signed, so the offset is a true delay
    i0 = int(np.floor(c + 0.5)) - s * (n_sym // 2)
    idx = (i0 + np.arange(n)) % n
    rolled = raw.samples[idx]
    d = rolled.shape[1]
    blocks = rolled.reshape(n_sym, s, d, d)
    e = np.sum(np.abs(blocks) ** 2, axis=(1, 2, 3))
    if energy_keep == 1.0:
        # no truncation: the whole period, centred on the centroid
        lo, hi = 0, n_sym - 1
    else:
        lo, hi = _smallest_window(e, energy_keep)
    if energy_keep < 1.0 and hi - lo + 1 > n_sym // 2:
        raise ChannelTooLongError(
            f"{hi - lo + 1} symbols needed, window holds {n_sym} (use a larger n_fft)")
    taps = blocks[lo:hi + 1].reshape(hi - lo + 1, s * d, d) * scale
    return DiscreteChannel(taps=taps, s=s, T=raw.T, sample_offset=i0 + lo * s, scale=scale)


def fold_factor(pulse, s, rx="auto"):
    """Integer ``q`` such that rate ``q s / T`` holds the whole pulse spectrum.

    Sampling at ``s / T`` aliases whatever lies beyond ``+-s/2T``; the
    response is built at ``q s / T`` and decimated by ``q``, which folds it.
    The whitened receiver band-limits to ``+-s/2T`` itself, so nothing folds.
    """
    if _rx_mode(rx, s) == "whitened":
        return 1
    return max(1, int(np.ceil((1.0 + pulse.rolloff) / s - 1e-12)))


def _decimate(raw, q, s):
    if q == 1:
        return raw
    return RawTaps(samples=raw.samples[::q], s=s, T=raw.T)


def calibration_scale(pulse, s, n_fft, rx="auto"):
    """Global factor that makes the ideal back-to-back Gram equal ``s I``."""
    mode = _rx_mode(rx, s)
    q = fold_factor(pulse, s, mode)
    grid = fft_grid(pulse, s * q, n_fft * q)
    g = pulse_spectrum(pulse, grid.freqs, s, mode)
    h = np.fft.ifft(np.fft.ifftshift(g))[::q]
    energy = np.sum(np.abs(h) ** 2)
    return float(np.sqrt(s / energy))


def discretize(Hw, pulse, s, n_fft=None, rx="auto", energy_keep=DEFAULT_ENERGY_KEEP,
               interp="trig"):
    """Whitened channel response to a calibrated :class:`DiscreteChannel`."""
    if n_fft is None:
        n_fft = default_nfft(Hw, pulse, s)
    mode = _rx_mode(rx, s)
    q = fold_factor(pulse, s, mode)
    E = end_to_end_response(Hw, pulse, s, n_fft=n_fft, rx=mode, interp=interp, fold=q)
    raw = _decimate(impulse_response(E, s * q, T=pulse.T), q, s)
    scale = calibration_scale(pulse, s, n_fft, mode)
    return truncate_memory(raw, energy_keep=energy_keep, scale=scale)


def ideal_channel(pulse, s, dim, n_fft=MIN_NFFT, rx="auto", energy_keep=DEFAULT_ENERGY_KEEP):
    """Back-to-back channel: ``Hw = I`` over the sampled band."""
    q = fold_factor(pulse, s, rx)
    grid = FreqGrid.centered(q * s * pulse.symbol_rate, n_fft)
    return discretize(FreqResponse.identity(grid, dim), pulse, s, n_fft=n_fft, rx=rx,
                      energy_keep=energy_keep)
