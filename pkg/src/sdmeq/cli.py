"""Command line entry point.

::

    sdmeq run configs/fig2_n4_low_mdl.json --out results/
    sdmeq filter-study configs/fig4_filters.json --out results/
    sdmeq bench configs/bench_n4.json --out results/

Every verb writes ``<name>.csv`` and ``<name>.jsonl`` (one JSON record per
row) into ``--out``; ``run`` and ``filter-study`` also write the figure data
files ``<name>_by_realization.csv``, ``<name>_by_taps.csv`` and
``<name>_by_noise.csv``. The exit code is 1 if any engine reported an error
and 2 for configuration errors.
"""
import argparse
import csv
import io
import json
import logging
import math
import os
import sys

from . import config as cfgmod
from . import runner
from .errors import ConfigError, SdmeqError

log = logging.getLogger("sdmeq")

CSV_FIELDS = ["scenario", "realization", "engine", "placement", "M", "n0_half", "n0_half_db",
              "harmonic_snr_db", "delta", "mu", "checksum", "error", "snr_db"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 10))
    if isinstance(v, list):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def rows_to_csv(rows, timing=True):
    cols = CSV_FIELDS + (["wall_time_s"] if timing else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        d = row.as_dict(timing)
        w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def rows_to_jsonl(rows, timing=True):
    return "".join(json.dumps(r.as_dict(timing), sort_keys=True) + "\n" for r in rows)


def _pivot(rows, key, cols):
    """Harmonic SNR (dB) table: one line per ``key(row)``, one column per engine."""
    table = {}
    for r in rows:
        if r.error:
            continue
        table.setdefault(key(r), {})[r.engine] = r.harmonic_snr_db
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(cols) + sorted({e for v in table.values() for e in v}))
    engines = sorted({e for v in table.values() for e in v})
    for k in sorted(table, key=lambda t: tuple(str(x) if isinstance(x, str) else x
                                                for x in t)):
        w.writerow(list(k) + [_fmt(table[k].get(e)) for e in engines])
    return buf.getvalue()


def figure_tables(rows):
    """Data behind SNR-vs-realization, SNR-vs-taps and SNR-vs-noise plots."""
    return {
        "by_realization": _pivot(rows, lambda r: (r.placement, r.n0_half, r.M, r.realization),
                                 ["placement", "n0_half", "M", "realization"]),
        "by_taps": _pivot(rows, lambda r: (r.placement, r.n0_half, r.realization, r.M),
                          ["placement", "n0_half", "realization", "M"]),
        "by_noise": _pivot(rows, lambda r: (r.placement, r.M, r.realization, r.n0_half),
                           ["placement", "M", "realization", "n0_half"]),
    }


def _write(out, name, text):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _emit_rows(args, cfg, rows):
    timing = not args.no_timing
    _write(args.out, f"{cfg.name}.csv", rows_to_csv(rows, timing))
    _write(args.out, f"{cfg.name}.jsonl", rows_to_jsonl(rows, timing))
    for suffix, text in figure_tables(rows).items():
        _write(args.out, f"{cfg.name}_{suffix}.csv", text)
    summary(rows, sys.stdout)
    errors = [r for r in rows if r.error]
    for r in errors:
        log.error("realization %d %s M=%d: %s", r.realization, r.engine, r.M, r.error)
    return 1 if errors else 0


def summary(rows, fh):
    fh.write(f"{'real':>4} {'engine':>7} {'place':>11} {'M':>5} {'N0/2 dB':>8} "
             f"{'SNR dB':>8} {'delta':>6}\n")
    for r in rows:
        snr = "error" if r.error else f"{r.harmonic_snr_db:8.3f}"
        delta = "" if r.delta is None else str(r.delta)
        n0db = 10.0 * math.log10(r.n0_half)
        fh.write(f"{r.realization:>4} {r.engine:>7} {r.placement or '-':>11} {r.M:>5} "
                 f"{n0db:>8.2f} {snr:>8} {delta:>6}\n")


def _load(args):
    cfg = cfgmod.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.engines is not None:
        changes["engines"] = [e.strip() for e in args.engines.split(",") if e.strip()]
    return cfg.replace(**changes) if changes else cfg


def cmd_run(args):
    cfg = _load(args)
    rows, timings = runner.run_scenario(cfg, threads=args.threads)
    if not args.no_timing:
        _write(args.out, f"{cfg.name}_timings.json", json.dumps(timings, indent=2) + "\n")
    return _emit_rows(args, cfg, rows)


def cmd_filter_study(args):
    cfg = _load(args)
    rows = runner.run_filter_study(cfg)
    return _emit_rows(args, cfg, rows)


def format_bench(report):
    lines = [f"backend: {report['backend']}"]
    for p in report["points"]:
        lines += [
            f"{p['n_modes']} modes, M={p['M']}, {p['n_syms']} symbols, "
            f"median of {p['repeats']} runs",
            f"  channel synthesis   {p['channel_s']:9.3f} s",
            f"  discretize          {p['discretize_s']:9.3f} s",
            f"  MMSE solve          {p['solve_s']:9.3f} s",
            f"  theory total        {p['theory_s']:9.3f} s",
            f"  waveform synthesis  {p['synthesis_s']:9.3f} s",
            "  LMS per step size   " + ", ".join(f"{t:.3f}" for t in p["lms_per_mu_s"]) + " s",
            f"  MC one run          {p['mc_run_s']:9.3f} s   ratio {p['ratio_run']:8.1f}",
            f"  MC step-size sweep  {p['mc_sweep_s']:9.3f} s   ratio {p['ratio_sweep']:8.1f}",
            f"  380k symbols, run   {p['extrapolated_380k_run_s']:9.3f} s   "
            f"ratio {p['ratio_380k_run']:8.1f}",
            f"  380k symbols, sweep {p['extrapolated_380k_sweep_s']:9.3f} s   "
            f"ratio {p['ratio_380k_sweep']:8.1f}",
        ]
    agg = report["aggregate"]
    lines.append(f"aggregate: run ratio {agg['median_ratio_run']:.1f}, "
                 f"sweep ratio {agg['median_ratio_sweep']:.1f}, "
                 f"380k sweep ratio {agg['median_ratio_380k_sweep']:.1f}")
    return "\n".join(lines) + "\n"


def cmd_bench(args):
    cfg = _load(args)
    report = runner.bench(cfg)
    text = format_bench(report)
    sys.stdout.write(text)
    _write(args.out, f"{cfg.name}_bench.json", json.dumps(report, indent=2) + "\n")
    _write(args.out, f"{cfg.name}_bench.txt", text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="sdmeq", description=(
        "Finite-length MMSE MIMO equalizer SNR for SDM links, with a Monte Carlo check."))
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, fn, text in (("run", cmd_run, "run a scenario sweep"),
                           ("filter-study", cmd_filter_study, "filter placement study"),
                           ("bench", cmd_bench, "theory vs Monte Carlo timing")):
        sp = sub.add_parser(verb, help=text)
        sp.add_argument("config", help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("--engines", default=None,
                        help="comma separated subset of theory,lms,static,iir")
        sp.add_argument("--no-timing", action="store_true",
                        help="omit wall times so output is byte-reproducible")
        sp.add_argument("--threads", type=int, default=1,
                        help="realizations evaluated concurrently")
        sp.add_argument("-v", "--verbose", action="store_true")
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except SdmeqError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
