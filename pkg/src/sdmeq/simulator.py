"""Monte Carlo waveform simulation with a supervised LMS or fixed-tap receiver.

Waveforms are periodic: every filter (pulse shaping, channel, receive
front end) is a circular convolution over the whole signal, so there are no
edge transients to trim and a symbol launched at ``k T`` peaks at sample
``k * samples_per_symbol``. Time is normalized to the symbol period.

Scaling follows the discrete model of the theory: a shaped waveform has unit
power per sample (pulse energy ``T``), white noise of two-sided level N0/2
has variance ``N0/2 * sample_rate / symbol_rate`` per sample, and after the
receive front end the samples at ``s`` per symbol carry a back-to-back pulse
of energy ``s`` in white noise of variance ``s N0/2``.
"""
from dataclasses import dataclass, field
import time

import numpy as np

from . import kernels
from .discretize import rrc_amplitude, trig_taps
from .errors import (AliasingError, DivergenceError, InvalidDimensionError,
                     InvalidSpecError)

SNR_CAP_DB = 60.0
# normalized step sizes: the input is scaled to unit power and mu is divided
# by the number of taps per output (see lms_equalize)
DEFAULT_MU_GRID = (0.5, 1.0, 2.0)
DEFAULT_SCHEDULE = ("relative", 4.0)


@dataclass
class Waveform:
    """``samples[t, i]`` is stream ``i`` at time ``t / sample_rate``."""

    sample_rate: float
    samples: np.ndarray
    symbol_rate: float = None

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim != 2:
            raise InvalidDimensionError("samples must be (n_samples, n_streams)")
        self.samples = x.astype(np.complex128, copy=False)

    @property
    def channels(self):
        """Streams as rows, ``(n_streams, n_samples)``."""
        return self.samples.T

    @property
    def n_streams(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]

    @property
    def sps(self):
        """Samples per symbol."""
        r = self.sample_rate / self.symbol_rate
        ri = int(round(r))
        if abs(r - ri) > 1e-9 * r:
            raise InvalidSpecError("sample rate is not an integer multiple of the symbol rate")
        return ri

    def with_samples(self, samples, sample_rate=None):
        return Waveform(self.sample_rate if sample_rate is None else sample_rate,
                        samples, self.symbol_rate)


@dataclass
class MCResult:
    snr_per_mode: np.ndarray
    harmonic_snr: float
    mse_trajectory: np.ndarray
    mu_used: float = None
    delta_used: int = None
    wall_time: float = 0.0
    diverged: list = field(default_factory=list)

    @property
    def harmonic_snr_db(self):
        return snr_to_db(self.harmonic_snr)

    @property
    def snr_per_mode_db(self):
        return snr_to_db(self.snr_per_mode)


def snr_to_db(snr, cap=SNR_CAP_DB):
    """dB with +inf capped at ``cap`` and non-positive values at ``-cap``."""
    snr = np.asarray(snr, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.where(snr > 0, snr, 0.0))
    out = np.clip(out, -cap, cap)
    return float(out) if out.ndim == 0 else out


def harmonic_snr(snr):
    """``n / sum(1/snr)``; any output with no information makes it 0."""
    snr = np.asarray(snr, dtype=float)
    if np.any(snr <= 0):
        return 0.0
    return float(snr.size / np.sum(1.0 / snr))


# ----------------------------------------------------------------------------
# transmitter
# ----------------------------------------------------------------------------


def gen_qpsk(rng, n_syms, n_streams):
    """I.i.d. QPSK symbols ``(+-1 +-1j)/sqrt(2)``, shape ``(n_syms, n_streams)``."""
    if n_syms < 1 or n_streams < 1:
        raise InvalidDimensionError("n_syms and n_streams must be >= 1")
    bits = rng.integers(0, 2, size=(2, n_syms, n_streams))
    return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2.0)


def _spectrum_freqs(n, sample_rate):
    return np.fft.fftfreq(n, 1.0 / sample_rate)


def rrc_shape(symbols, pulse, s_sim=4):
    """Upsample by ``s_sim`` and apply the RRC amplitude response (circularly).

    A single unit symbol yields one RRC pulse of energy 1, energy being
    ``sum |w|^2 / s_sim`` (the sample spacing is ``T / s_sim``).
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.ndim == 1:
        symbols = symbols[:, None]
    if s_sim < 2 or s_sim < 1.0 + pulse.rolloff:
        raise AliasingError(f"s_sim={s_sim} cannot hold a signal of bandwidth "
                            f"{1 + pulse.rolloff:.2f}/T")
    n_sym, d = symbols.shape
    n = n_sym * s_sim
    up = np.zeros((n, d), dtype=np.complex128)
    up[::s_sim] = symbols
    fs = s_sim * pulse.symbol_rate
    g = rrc_amplitude(_spectrum_freqs(n, fs) / pulse.symbol_rate, pulse.rolloff)
    w = np.fft.ifft(np.fft.fft(up, axis=0) * (s_sim * g)[:, None], axis=0)
    return Waveform(fs, w, pulse.symbol_rate)


# ----------------------------------------------------------------------------
# channel and noise
# ----------------------------------------------------------------------------


def _check_coverage(w, H, occupied):
    lo = H.grid.f_start
    hi = lo + H.grid.bandwidth
    tol = 1e-9 * H.grid.bandwidth
    if occupied is not None and (-0.5 * occupied < lo - tol or 0.5 * occupied > hi + tol):
        raise InvalidSpecError(
            f"channel grid [{lo:.4g}, {hi:.4g}) Hz does not cover the signal band "
            f"+-{0.5 * occupied:.4g} Hz")
    if H.grid.bandwidth > w.sample_rate * (1 + 1e-9):
        raise InvalidSpecError("channel grid is wider than the sample rate")


def _in_band(f, grid):
    return (f >= grid.f_start - 1e-9 * grid.f_step) & (
        f < grid.f_start + grid.bandwidth - 1e-9 * grid.f_step)


def _trig_fir(H, sample_rate):
    """Channel as a sparse FIR at ``sample_rate``: ``(sample lags, taps)``."""
    r = sample_rate / H.grid.bandwidth
    ri = int(round(r))
    if ri < 1 or abs(r - ri) > 1e-9 * r:
        raise InvalidSpecError("sample rate must be an integer multiple of the channel grid span")
    n, h = trig_taps(H)
    return n * ri, h


def apply_channel_freq(w, H, interp="trig", block=None, occupied=None):
    """Filter every stream by the matrix response ``H``; bins outside ``H``'s grid get 0.

    ``interp="nearest"`` replicates each channel matrix onto the closest
    simulation bins; ``"trig"`` uses the band-limited interpolant. The whole
    signal is processed as one circular convolution unless ``block`` (an FFT
    size) is given, in which case overlap-save is used (``"trig"`` only); that
    path applies the interpolated FIR as is and expects an in-band input.
    """
    if H.dim != w.n_streams:
        raise InvalidDimensionError(f"channel is {H.dim}x{H.dim}, waveform has "
                                    f"{w.n_streams} streams")
    _check_coverage(w, H, occupied)
    x = w.samples
    n, d = x.shape
    if block is not None:
        if interp != "trig":
            raise InvalidSpecError("overlap-save needs the trig channel model")
        return w.with_samples(_overlap_save(x, H, w.sample_rate, int(block)))

    f = _spectrum_freqs(n, w.sample_rate)
    mask = _in_band(f, H.grid)
    X = np.fft.fft(x, axis=0)
    Y = np.zeros_like(X)
    if interp == "nearest":
        idx = np.rint((f - H.grid.f_start) / H.grid.f_step).astype(np.int64)
        np.clip(idx, 0, H.grid.n_bins - 1, out=idx)
        Hm = H.matrices[idx[mask]]
        Y[mask] = np.einsum("kab,kb->ka", Hm, X[mask])
    elif interp == "trig":
        lags, h = _trig_fir(H, w.sample_rate)
        if n < lags.max() - lags.min() + 1:
            raise InvalidSpecError("signal is shorter than the channel impulse response")
        buf = np.zeros(n, dtype=np.complex128)
        for a in range(d):
            acc = np.zeros(n, dtype=np.complex128)
            for b in range(d):
                buf[:] = 0
                np.add.at(buf, lags % n, h[:, a, b])
                acc += np.fft.fft(buf) * X[:, b]
            Y[:, a] = acc * mask
    else:
        raise InvalidSpecError(f"unknown interpolation {interp!r}")
    return w.with_samples(np.fft.ifft(Y, axis=0))


def _overlap_save(x, H, sample_rate, nfft):
    lags, h = _trig_fir(H, sample_rate)
    n, d = x.shape
    lo, hi = int(lags.min()), int(lags.max())
    span = hi - lo
    step = nfft - span
    if step <= 0:
        raise InvalidSpecError(f"block {nfft} is shorter than the channel ({span + 1} samples)")
    # no band mask here: it would turn the FIR into an nfft-periodic filter and
    # wrap its tails; shaped signals already lie inside the grid
    # causal FIR: tap at lag l moved to l - lo
    fir = np.zeros((nfft, d, d), dtype=np.complex128)
    np.add.at(fir, lags - lo, h)
    Hf = np.fft.fft(fir, axis=0)
    out = np.empty((n, d), dtype=np.complex128)
    # y[t] = sum_l h[l] x[t - l]; output block [t0, t0+step) needs x[t0-hi .. t0+step-1-lo]
    for t0 in range(0, n, step):
        m = min(step, n - t0)
        idx = (t0 - hi + np.arange(nfft)) % n
        Y = np.einsum("kab,kb->ka", Hf, np.fft.fft(x[idx], axis=0))
        y = np.fft.ifft(Y, axis=0)
        out[t0:t0 + m] = y[span:span + m]
    return out


def add_awgn(rng, w, n0_half, symbol_rate=None):
    """Circular complex Gaussian noise of variance ``N0/2 * sample_rate / symbol_rate``."""
    if n0_half < 0:
        raise InvalidSpecError("N0/2 must be non-negative")
    if n0_half == 0:
        return w.with_samples(w.samples.copy())
    rs = symbol_rate if symbol_rate is not None else w.symbol_rate
    var = n0_half * w.sample_rate / rs
    z = rng.standard_normal(w.samples.shape) + 1j * rng.standard_normal(w.samples.shape)
    return w.with_samples(w.samples + np.sqrt(0.5 * var) * z)


# ----------------------------------------------------------------------------
# receiver
# ----------------------------------------------------------------------------


def rx_frontend(w, pulse, s=2, rx="auto"):
    """Receive filter, then decimation to ``s`` samples per symbol on the symbol grid.

    ``rx="matched"`` applies the RRC receive filter. ``rx="antialias"``
    applies an ideal low-pass at ``+-s/2T``, which keeps the noise white at
    the equalizer input. ``"auto"`` is matched for ``s == 1`` and
    anti-aliasing otherwise, mirroring the receiver assumed by the theory.
    """
    sps = w.sps
    if sps % s:
        raise InvalidSpecError(f"cannot decimate {sps} samples/symbol to {s}")
    mode = rx
    if rx == "auto":
        mode = "matched" if s == 1 else "antialias"
    n = len(w)
    f = _spectrum_freqs(n, w.sample_rate) / w.symbol_rate
    if mode == "matched":
        g = rrc_amplitude(f, pulse.rolloff)
    elif mode in ("antialias", "bandlimit"):
        edge = 0.5 * s if mode == "antialias" else 0.5 * (1.0 + pulse.rolloff)
        g = (np.abs(f) < edge).astype(float)
        g[np.isclose(np.abs(f), edge)] = 0.5
    else:
        raise InvalidSpecError(f"unknown receiver {rx!r}")
    y = np.fft.ifft(np.fft.fft(w.samples, axis=0) * g[:, None], axis=0)
    q = sps // s
    return Waveform(w.sample_rate / q, y[::q], w.symbol_rate)


def _check_reference(rx, symbols, s):
    symbols = np.asarray(symbols)
    if len(rx) != s * symbols.shape[0]:
        raise InvalidDimensionError(
            f"{len(rx)} samples do not match {symbols.shape[0]} symbols at s={s}")
    if rx.n_streams != symbols.shape[1]:
        raise InvalidDimensionError("stream count differs between samples and symbols")
    return symbols.astype(np.complex128)


def identity_spike(d, M, s):
    """Centered single-spike taps: block ``M // 2``, phase 0, equal to ``I``."""
    W = np.zeros((d, d * M * s), dtype=np.complex128)
    j = M // 2
    W[:, j * s * d:j * s * d + d] = np.eye(d)
    return W


def mu_schedule(mu, n_sym, schedule=None, n_taps=1):
    """Per-symbol step sizes.

    ``schedule`` is None (constant), ``("decay", k0)`` for
    ``mu / (1 + k / k0)``, or ``("relative", c)`` which sets
    ``k0 = c * n_taps / mu``, i.e. ``c`` time constants of an average
    eigenmode under a normalized step.
    """
    if schedule is None or schedule == "constant":
        return np.full(n_sym, float(mu))
    kind, c = schedule
    if kind == "relative":
        k0 = c * n_taps / mu
    elif kind == "decay":
        k0 = c
    else:
        raise InvalidSpecError(f"unknown schedule {schedule!r}")
    if not k0 > 0:
        raise InvalidSpecError("decay constant must be positive")
    return mu / (1.0 + np.arange(n_sym) / float(k0))


def lms_equalize(rx, symbols, M, delta, mu, schedule=None, sample_offset=0, W0=None,
                 div_level=10.0, div_run=1000, normalize=True):
    """Fully supervised fractionally spaced LMS.

    Output ``k`` uses ``Y_k = [y_k; ...; y_{k-M+1}]`` with
    ``y_k[p] = r[k s + sample_offset + p]`` and is compared with
    ``x[k - delta]``. With ``normalize`` the input is scaled to unit mean power
    per sample and ``mu`` is divided by the tap count per output, so it is
    dimensionless. Returns ``(outputs, errors, W)``; raises
    :class:`DivergenceError`.
    """
    s = rx.sps
    x = _check_reference(rx, symbols, s)
    n_sym, d = x.shape
    r = rx.samples
    gain = 1.0
    if normalize:
        gain = 1.0 / np.sqrt(np.mean(np.abs(r) ** 2))
        r = r * gain
    D = d * M * s
    W = identity_spike(d, M, s) if W0 is None else np.array(W0, dtype=np.complex128)
    if W.shape != (d, D):
        raise InvalidDimensionError(f"initial taps must be {(d, D)}")
    mu_k = mu_schedule(mu, n_sym, schedule, D) / (D if normalize else 1.0)
    err = np.empty((n_sym, d), dtype=np.complex128)
    k_div = kernels.lms(np.ascontiguousarray(r), x, W, mu_k, int(sample_offset) % len(r), s,
                        M, int(delta), err, div_level, div_run)
    if k_div >= 0 or not np.all(np.isfinite(W)):
        raise DivergenceError(mu, k_div if k_div >= 0 else n_sym - 1)
    ref = np.roll(x, delta, axis=0)
    return ref - err, err, W * gain


def static_equalize(rx, symbols, W, delta, sample_offset=0):
    """Apply a fixed tap bank ``W`` (no adaptation); returns ``(outputs, errors)``."""
    s = rx.sps
    x = _check_reference(rx, symbols, s)
    n_sym, d = x.shape
    W = np.asarray(W, dtype=np.complex128)
    if W.shape[0] != d or W.shape[1] % (d * s):
        raise InvalidDimensionError(f"taps of shape {W.shape} do not fit {d} streams at s={s}")
    M = W.shape[1] // (d * s)
    out = kernels.fixed_filter(rx.samples, W, int(sample_offset) % len(rx), s, M, n_sym)
    return out, np.roll(x, delta, axis=0) - out


def estimate_snr(errors, discard=0.5, min_symbols=10_000):
    """Per-stream ``1 / MSE - 1`` over the last ``1 - discard`` of the symbols.

    ``inf`` marks an error-free stream.
    """
    e = np.asarray(errors)
    if e.ndim == 1:
        e = e[:, None]
    if not 0.0 <= discard < 1.0:
        raise InvalidSpecError("discard must lie in [0, 1)")
    start = int(np.floor(discard * e.shape[0]))
    kept = e[start:]
    if kept.shape[0] < min_symbols:
        raise InvalidSpecError(f"{kept.shape[0]} symbols retained, need >= {min_symbols}")
    mse = np.mean(np.abs(kept) ** 2, axis=0)
    with np.errstate(divide="ignore"):
        return np.where(mse > 0, 1.0 / np.where(mse > 0, mse, 1.0) - 1.0, np.inf)


def mse_trajectory(errors, block=1000):
    """Mean squared error per block of ``block`` symbols, averaged over streams."""
    e2 = np.mean(np.abs(np.asarray(errors)) ** 2, axis=1)
    nb = len(e2) // block
    if nb == 0:
        return np.array([e2.mean()])
    return e2[:nb * block].reshape(nb, block).mean(axis=1)


def _result(errors, discard, min_symbols, **kw):
    snr = estimate_snr(errors, discard, min_symbols)
    return MCResult(snr_per_mode=snr, harmonic_snr=harmonic_snr(snr),
                    mse_trajectory=mse_trajectory(errors), **kw)


def run_lms(rx, symbols, M, delta, mu_grid=DEFAULT_MU_GRID, schedule=DEFAULT_SCHEDULE,
            sample_offset=0, discard=0.5, min_symbols=10_000, normalize=True):
    """LMS over a grid of step sizes; keeps the best harmonic SNR.

    Step sizes that diverge are recorded in ``diverged``; if all diverge the
    last :class:`DivergenceError` is raised.
    """
    t0 = time.perf_counter()
    best = None
    diverged = []
    last_exc = None
    for mu in mu_grid:
        try:
            _, err, _ = lms_equalize(rx, symbols, M, delta, mu, schedule=schedule,
                                     sample_offset=sample_offset, normalize=normalize)
        except DivergenceError as exc:
            diverged.append(mu)
            last_exc = exc
            continue
        res = _result(err, discard, min_symbols, mu_used=mu, delta_used=delta)
        if best is None or res.harmonic_snr > best.harmonic_snr:
            best = res
    if best is None:
        raise last_exc
    best.diverged = diverged
    best.wall_time = time.perf_counter() - t0
    return best


def run_static(rx, symbols, W, delta, sample_offset=0, discard=0.5, min_symbols=10_000):
    t0 = time.perf_counter()
    _, err = static_equalize(rx, symbols, W, delta, sample_offset)
    res = _result(err, discard, min_symbols, delta_used=delta)
    res.wall_time = time.perf_counter() - t0
    return res


def transmit(rng, H, pulse, n_syms, n0_half, s=2, s_sim=4, interp="trig", block=None,
             rx="auto"):
    """Symbols through shaping, channel, white noise and the receive front end.

    Returns ``(symbols, received)`` with ``received`` at ``s`` samples per
    symbol. ``rx=None`` skips the front end and returns the waveform at
    ``s_sim`` samples per symbol, so several front ends can share one draw.
    """
    x = gen_qpsk(rng, n_syms, H.dim)
    w = rrc_shape(x, pulse, s_sim)
    w = apply_channel_freq(w, H, interp=interp, block=block,
                           occupied=pulse.occupied_bandwidth)
    w = add_awgn(rng, w, n0_half)
    if rx is None:
        return x, w
    return x, rx_frontend(w, pulse, s, rx)
