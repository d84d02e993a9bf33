"""Experiment drivers: scenario sweeps, the filter-placement study and the speed benchmark.

Seeding: realization ``r`` owns the streams
``SeedSequence(entropy=seed, spawn_key=(r, purpose, ...))``, one per purpose
(channel draw, Monte Carlo waveform per noise level). Enabling or disabling
an engine therefore never changes the channel a realization sees, and
realizations can run in any order.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import statistics
import time

import numpy as np

from . import _jit
from . import channel as ch
from . import discretize as dz
from . import mmse
from . import simulator as sim
from .channel import RX, TX
from .errors import ConfigError, SdmeqError

log = logging.getLogger(__name__)

CHANNEL, MONTE_CARLO, BENCH = 0, 1, 2
REFERENCE_SYMBOLS = 380_000


def stream(seed, *key):
    """Independent generator for ``(seed, key)``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class ResultRow:
    scenario: str
    realization: int
    engine: str
    M: int
    n0_half: float
    snr_db: list = None
    harmonic_snr_db: float = None
    delta: int = None
    wall_time_s: float = None
    checksum: str = ""
    mu: float = None
    placement: str = ""
    error: str = ""

    def as_dict(self, timing=True):
        d = {"scenario": self.scenario, "realization": self.realization,
             "engine": self.engine, "placement": self.placement, "M": self.M,
             "n0_half": self.n0_half, "n0_half_db": float(mmse.to_db(self.n0_half)),
             "harmonic_snr_db": self.harmonic_snr_db, "snr_db": self.snr_db,
             "delta": self.delta, "mu": self.mu, "checksum": self.checksum,
             "error": self.error}
        if timing:
            d["wall_time_s"] = self.wall_time_s
        return d


_ENGINE_ORDER = {"theory": 0, "iir": 1, "static": 2, "lms": 3}


def _sort_key(row):
    return (row.scenario, row.realization, row.placement, _ENGINE_ORDER[row.engine],
            row.n0_half, row.M)


@dataclass
class Realization:
    """One channel draw with its whitened response and per-stage timings."""

    index: int
    H: ch.FreqResponse
    Hw: ch.FreqResponse
    white: bool
    checksum: str
    timings: dict = field(default_factory=dict)


def draw_realization(cfg, r, path=None):
    t0 = time.perf_counter()
    path = cfg.path_spec() if path is None else path
    real = ch.realize_path(path, stream(cfg.seed, r, CHANNEL), cfg.freq_grid())
    # whitening only depends on the shape of the noise covariance, not on N0
    Wn = ch.path_noise_covariance(path, real.downstream, 1.0)
    white = _is_white(Wn)
    Hw = real.H if white else ch.whiten(real.H, Wn, 1.0)
    return Realization(index=r, H=real.H, Hw=Hw, white=white, checksum=real.H.checksum(),
                       timings={"channel_s": time.perf_counter() - t0})


def _is_white(Wn):
    m = Wn.matrices
    return bool(np.allclose(m, np.eye(m.shape[1])[None], rtol=0, atol=1e-12))


def discretize_theory(cfg, Hw, energy_keep=None):
    keep = cfg.theory.energy_keep if energy_keep is None else energy_keep
    return dz.discretize(Hw, cfg.pulse(), cfg.signal.s, n_fft=cfg.theory.n_fft,
                         energy_keep=keep)


def _design(cfg, M, n0):
    return mmse.EqualizerDesign(M=M, n0_half=n0, delta=cfg.equalizer.delta)


def _fail(rows, base, engine, M, n0, exc):
    log.error("%s failed (realization %d, M=%s, N0/2=%g): %s", engine, base.realization,
              M, n0, exc)
    rows.append(ResultRow(engine=engine, M=M, n0_half=n0, error=f"{type(exc).__name__}: {exc}",
                          **{k: getattr(base, k) for k in ("scenario", "realization",
                                                           "checksum")}))


def _snr_fields(snr_db, hdb):
    return [float(v) for v in np.atleast_1d(snr_db)], float(hdb)


def run_realization(cfg, r):
    """All enabled engines for realization ``r``; returns (rows, timings)."""
    engines = set(cfg.engines)
    mc = engines & {"lms", "static"}
    real = draw_realization(cfg, r)
    if mc and not real.white:
        raise ConfigError("engines", "Monte Carlo engines need white noise at the receiver; "
                          "this path colors it (filters downstream of an ASE injection)")
    base = ResultRow(scenario=cfg.name, realization=r, engine="", M=0, n0_half=0.0,
                     checksum=real.checksum)
    rows = []
    timings = dict(real.timings)
    levels = cfg.n0_levels()
    taps = cfg.equalizer.taps
    sols = {}

    if engines & {"theory", "lms", "static"}:
        t0 = time.perf_counter()
        dc = discretize_theory(cfg, real.Hw)
        timings["discretize_s"] = time.perf_counter() - t0
        t_solve = 0.0
        for n0 in levels:
            for M in taps:
                t0 = time.perf_counter()
                try:
                    sol = mmse.solve(dc, _design(cfg, M, n0), method=cfg.theory.method,
                                     want_taps="static" in engines)
                except SdmeqError as exc:
                    if "theory" in engines:
                        _fail(rows, base, "theory", M, n0, exc)
                    continue
                dt = time.perf_counter() - t0
                t_solve += dt
                sols[(n0, M)] = sol
                if "theory" in engines:
                    snr_db, hdb = _snr_fields(sol.snr_db, sol.harmonic_snr_db)
                    rows.append(ResultRow(engine="theory", M=M, n0_half=n0, snr_db=snr_db,
                                          harmonic_snr_db=hdb, delta=sol.delta_used,
                                          wall_time_s=dt, scenario=cfg.name, realization=r,
                                          checksum=real.checksum))
        timings["solve_s"] = t_solve

    if "iir" in engines:
        t0 = time.perf_counter()
        dc_iir = discretize_theory(cfg, real.Hw, cfg.iir.energy_keep)
        for n0 in levels:
            t1 = time.perf_counter()
            try:
                val, M_used = mmse.iir_limit(dc_iir, n0, M_big=cfg.iir.M_big,
                                             tol_db=cfg.iir.tol_db, return_M=True)
            except SdmeqError as exc:
                _fail(rows, base, "iir", cfg.iir.M_big, n0, exc)
                continue
            rows.append(ResultRow(engine="iir", M=M_used, n0_half=n0, snr_db=[],
                                  harmonic_snr_db=float(mmse.to_db(val)),
                                  wall_time_s=time.perf_counter() - t1, scenario=cfg.name,
                                  realization=r, checksum=real.checksum))
        timings["iir_s"] = time.perf_counter() - t0

    if mc:
        pulse = cfg.pulse()
        s = cfg.signal.s
        for i, n0 in enumerate(levels):
            t0 = time.perf_counter()
            x, w = sim.transmit(stream(cfg.seed, r, MONTE_CARLO, i), real.H, pulse,
                                cfg.mc.n_syms, n0, s=s, s_sim=cfg.mc.s_sim, rx=None)
            rx_lms = sim.rx_frontend(w, pulse, s, cfg.mc.rx) if "lms" in engines else None
            rx_static = sim.rx_frontend(w, pulse, s, "auto") if "static" in engines else None
            del w
            timings["synthesis_s"] = timings.get("synthesis_s", 0.0) + time.perf_counter() - t0
            for M in taps:
                sol = sols.get((n0, M))
                for engine in ("static", "lms"):
                    if engine not in engines:
                        continue
                    if sol is None:
                        _fail(rows, base, engine, M, n0,
                              SdmeqError("no theory solution to align the delay"))
                        continue
                    try:
                        if engine == "lms":
                            res = sim.run_lms(rx_lms, x, M, sol.delta_used,
                                              mu_grid=cfg.mc.mu_grid, schedule=cfg.mc.schedule,
                                              sample_offset=dc.sample_offset,
                                              discard=cfg.mc.discard,
                                              normalize=cfg.mc.normalize)
                        else:
                            res = sim.run_static(rx_static, x, sol.W, sol.delta_used,
                                                 sample_offset=dc.sample_offset,
                                                 discard=cfg.mc.discard)
                    except SdmeqError as exc:
                        _fail(rows, base, engine, M, n0, exc)
                        continue
                    key = f"{engine}_s"
                    timings[key] = timings.get(key, 0.0) + res.wall_time
                    snr_db, hdb = _snr_fields(res.snr_per_mode_db, res.harmonic_snr_db)
                    rows.append(ResultRow(engine=engine, M=M, n0_half=n0, snr_db=snr_db,
                                          harmonic_snr_db=hdb, delta=res.delta_used,
                                          mu=res.mu_used, wall_time_s=res.wall_time,
                                          scenario=cfg.name, realization=r,
                                          checksum=real.checksum))
    return rows, timings


def _pool_map(fn, items, threads):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_scenario(cfg, threads=1):
    """Rows for every realization and enabled engine, in a fixed order.

    Returns ``(rows, timings)`` where ``timings[r]`` holds per-stage seconds.
    """
    out = _pool_map(lambda r: run_realization(cfg, r), list(range(cfg.realizations)), threads)
    rows = sorted((row for rs, _ in out for row in rs), key=_sort_key)
    return rows, [t for _, t in out]


# ----------------------------------------------------------------------------
# filter placement study
# ----------------------------------------------------------------------------


def placement_path(path, placement, flt):
    """``path`` with one copy of ``flt`` per link at the given placement.

    ``"distributed"`` puts a filter at the end of every link: at each node
    between links and at the receiver after the last one.
    """
    L = len(path.links)
    if placement == "none":
        filters = []
    elif placement == "TX":
        filters = [(TX, flt)] * L
    elif placement == "RX":
        filters = [(RX, flt)] * L
    elif placement == "distributed":
        filters = [(i, flt) for i in range(1, L)] + [(RX, flt)]
    else:
        raise ConfigError("filter_study.placements", f"unknown placement {placement!r}")
    return ch.PathSpec(links=path.links, filters=filters,
                       noise_injections=list(path.noise_injections))


def run_filter_study(cfg):
    """Theory harmonic SNR over placements x N0 x taps for one fixed realization."""
    fs = cfg.filter_study
    base_path = cfg.path_spec()
    grid = cfg.freq_grid()
    r = fs.realization
    sections = ch.draw_path(stream(cfg.seed, r, CHANNEL), base_path)
    flt = fs.filter.spec()
    levels = [10.0 ** (v / 10.0) for v in fs.n0_half_db]
    rows = []
    for placement in fs.placements:
        path = placement_path(base_path, placement, flt)
        H, downstream = ch.path_response(path, None, grid, sections=sections)
        Wn = ch.path_noise_covariance(path, downstream, 1.0)
        Hw = ch.whiten(H, Wn, 1.0)
        checksum = H.checksum()
        dc = discretize_theory(cfg, Hw)
        for n0 in levels:
            for M in cfg.equalizer.taps:
                t0 = time.perf_counter()
                row = ResultRow(scenario=cfg.name, realization=r, engine="theory", M=M,
                                n0_half=n0, checksum=checksum, placement=placement)
                try:
                    sol = mmse.solve(dc, _design(cfg, M, n0), method=cfg.theory.method,
                                     want_taps=False)
                except SdmeqError as exc:
                    row.error = f"{type(exc).__name__}: {exc}"
                else:
                    row.snr_db, row.harmonic_snr_db = _snr_fields(sol.snr_db,
                                                                  sol.harmonic_snr_db)
                    row.delta = sol.delta_used
                row.wall_time_s = time.perf_counter() - t0
                rows.append(row)
    order = {p: i for i, p in enumerate(fs.placements)}
    rows.sort(key=lambda row: (order[row.placement], row.n0_half, row.M))
    return rows


def noise_is_colored(path, grid, rng=None, sections=None):
    """True if the ASE covariance of ``path`` differs from a scaled identity on some bin."""
    _, downstream = ch.path_response(path, rng, grid, sections=sections)
    m = ch.path_noise_covariance(path, downstream, 1.0).matrices
    d = m.shape[1]
    diag = np.real(np.diagonal(m, axis1=1, axis2=2))
    off = np.abs(m - diag[:, :, None] * np.eye(d)[None]).max()
    spread = np.abs(diag - diag.mean(axis=1, keepdims=True)).max()
    return bool(off > 1e-12 or spread > 1e-12)


# ----------------------------------------------------------------------------
# benchmark
# ----------------------------------------------------------------------------


def _median_time(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), times, out


def bench(cfg):
    """Wall-clock comparison of the theory and Monte Carlo engines.

    Per tap count, with medians over ``bench.repeats`` runs:

    * ``theory_s``: discretization plus the MMSE solve (with the delay search);
    * ``mc_run_s``: waveform synthesis plus one LMS run at the first step size;
    * ``mc_sweep_s``: synthesis plus LMS at every step size of the grid, the
      cost of one Monte Carlo data point as the harness produces it.

    Ratios are reported per run and sweep-inclusive, plus both extrapolated
    linearly to the reference 380,000-symbol run.
    """
    engines = set(cfg.engines)
    if not {"theory", "lms"} <= engines:
        raise ConfigError("engines", "bench needs both the theory and lms engines")
    b = cfg.bench
    reps = b.repeats
    pulse = cfg.pulse()
    s = cfg.signal.s
    n0 = cfg.n0_levels()[0]

    t_channel, _, real = _median_time(lambda: draw_realization(cfg, 0), reps)
    if not real.white:
        raise ConfigError("path", "bench needs a path with white receiver noise")
    t_disc, _, dc = _median_time(lambda: discretize_theory(cfg, real.Hw), reps)

    def synth():
        x, w = sim.transmit(stream(cfg.seed, 0, BENCH), real.H, pulse, b.n_syms, n0, s=s,
                            s_sim=cfg.mc.s_sim, rx=None)
        return x, sim.rx_frontend(w, pulse, s, cfg.mc.rx)

    t_synth, _, (x, rxw) = _median_time(synth, reps)
    points = []
    for M in b.taps:
        design = _design(cfg, M, n0)
        t_solve, solve_times, sol = _median_time(
            lambda: mmse.solve(dc, design, method=cfg.theory.method, want_taps=False), reps)

        def lms_once(mu):
            return sim.run_lms(rxw, x, M, sol.delta_used, mu_grid=[mu],
                               schedule=cfg.mc.schedule, sample_offset=dc.sample_offset,
                               discard=cfg.mc.discard, normalize=cfg.mc.normalize)

        per_mu = []
        for mu in cfg.mc.mu_grid:
            t_mu, _, _ = _median_time(lambda: lms_once(mu), reps)
            per_mu.append(t_mu)
        t_theory = t_disc + t_solve
        t_run = t_synth + per_mu[0]
        t_sweep = t_synth + sum(per_mu)
        scale = REFERENCE_SYMBOLS / b.n_syms
        points.append({
            "M": M, "n_modes": cfg.path.n_modes, "n_syms": b.n_syms, "repeats": reps,
            "channel_s": t_channel, "discretize_s": t_disc, "solve_s": t_solve,
            "solve_times_s": solve_times, "theory_s": t_theory,
            "synthesis_s": t_synth, "lms_per_mu_s": per_mu,
            "mc_run_s": t_run, "mc_sweep_s": t_sweep,
            "ratio_run": t_run / t_theory, "ratio_sweep": t_sweep / t_theory,
            "extrapolated_380k_run_s": t_run * scale,
            "extrapolated_380k_sweep_s": t_sweep * scale,
            "ratio_380k_run": t_run * scale / t_theory,
            "ratio_380k_sweep": t_sweep * scale / t_theory,
            "harmonic_snr_db": sol.harmonic_snr_db,
        })
    agg = {
        "median_ratio_run": statistics.median(p["ratio_run"] for p in points),
        "median_ratio_sweep": statistics.median(p["ratio_sweep"] for p in points),
        "median_ratio_380k_sweep": statistics.median(p["ratio_380k_sweep"] for p in points),
    }
    return {"scenario": cfg.name, "backend": _jit.backend(), "points": points,
            "aggregate": agg}
