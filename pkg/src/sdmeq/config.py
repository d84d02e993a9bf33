"""Scenario configuration: one JSON document per experiment.

Every field has a default matching the reference system (30 GBd, roll-off
0.1, one 50-section link of 10 km sections, 1000 channel bins over ``s/T``,
``s = 2``, N0/2 = -10 dB). Unknown keys and bad values raise
:class:`~sdmeq.errors.ConfigError` naming the offending field, e.g.
``path.links[0].K``.

Schema (units in the key names)::

    {
      "name": str,
      "seed": int (0 <= seed < 2**64),
      "realizations": int >= 1,
      "engines": ["theory", "lms", "static", "iir"],
      "path": {
        "n_modes": int,
        "links": [{"K", "section_length_km", "sigma_mdl_db",
                   "sigma_dmd_ps" | "dmd_ps_per_sqrt_km"}],
        "filters": [{"placement": "TX" | "RX" | int, "order", "b3db_ghz", "center_ghz"}],
        "noise_injections": [{"after_link": int, "fraction": float}] | null
      },
      "grid": {"n_bins": int, "bandwidth_ghz": float | null},
      "signal": {"symbol_rate_gbd", "rolloff", "s"},
      "equalizer": {"taps": [int], "delta": "auto" | int},
      "noise": {"n0_half_db": [float]}  or  {"n0_half": [float]},
      "theory": {"energy_keep", "method", "n_fft"},
      "iir": {"M_big", "tol_db", "energy_keep"},
      "mc": {"n_syms", "mu_grid", "schedule", "discard", "s_sim", "rx", "normalize"},
      "filter_study": {"placements", "n0_half_db", "realization", "filter"},
      "bench": {"repeats", "taps", "n_syms"}
    }
"""
from dataclasses import dataclass, field, fields, asdict
import json
import math

from .channel import FilterSpec, FreqGrid, LinkSpec, PathSpec, RX, TX
from .discretize import PulseSpec
from .errors import ConfigError, SdmeqError

ENGINES = ("theory", "lms", "static", "iir")
PLACEMENTS = ("none", "TX", "RX", "distributed")


def _num(value, name, lo=None, hi=None, integer=False, lo_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(name, "must be finite")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(name, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(name, f"must be <= {hi}, got {value}")
    return int(value) if integer else float(value)


def _section(cls, raw, name):
    """Build dataclass ``cls`` from dict ``raw``, rejecting unknown keys."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown field")
    obj = cls(**raw)
    obj.validate(name)
    return obj


@dataclass
class LinkConfig:
    K: int = 50
    section_length_km: float = 10.0
    sigma_mdl_db: float = 0.7
    sigma_dmd_ps: float = None
    dmd_ps_per_sqrt_km: float = 11.1

    def validate(self, name):
        self.K = _num(self.K, f"{name}.K", lo=1, integer=True)
        self.section_length_km = _num(self.section_length_km, f"{name}.section_length_km",
                                      lo=0, lo_open=True)
        self.sigma_mdl_db = _num(self.sigma_mdl_db, f"{name}.sigma_mdl_db", lo=0)
        if self.sigma_dmd_ps is not None:
            self.sigma_dmd_ps = _num(self.sigma_dmd_ps, f"{name}.sigma_dmd_ps", lo=0)
        self.dmd_ps_per_sqrt_km = _num(self.dmd_ps_per_sqrt_km, f"{name}.dmd_ps_per_sqrt_km",
                                       lo=0)

    def sigma_dmd(self):
        """Section DMD std in seconds; an explicit ``sigma_dmd_ps`` wins."""
        if self.sigma_dmd_ps is not None:
            return self.sigma_dmd_ps * 1e-12
        return LinkSpec.dmd_per_section(self.dmd_ps_per_sqrt_km, self.section_length_km)

    def spec(self, n_modes):
        return LinkSpec(n_modes=n_modes, K=self.K, section_length=self.section_length_km,
                        sigma_mdl=self.sigma_mdl_db, sigma_dmd=self.sigma_dmd())


@dataclass
class FilterConfig:
    placement: object = "RX"
    order: float = 2.0
    b3db_ghz: float = 15.0
    center_ghz: float = 0.0

    def validate(self, name):
        if self.placement not in (TX, RX):
            self.placement = _num(self.placement, f"{name}.placement", lo=1, integer=True)
        self.order = _num(self.order, f"{name}.order", lo=1)
        self.b3db_ghz = _num(self.b3db_ghz, f"{name}.b3db_ghz", lo=0, lo_open=True)
        self.center_ghz = _num(self.center_ghz, f"{name}.center_ghz")

    def spec(self):
        return FilterSpec(order=self.order, b3db=self.b3db_ghz * 1e9,
                          center=self.center_ghz * 1e9)


@dataclass
class PathConfig:
    n_modes: int = 4
    links: list = field(default_factory=lambda: [{}])
    filters: list = field(default_factory=list)
    noise_injections: list = None

    def validate(self, name):
        self.n_modes = _num(self.n_modes, f"{name}.n_modes", lo=1, integer=True)
        if not isinstance(self.links, list) or not self.links:
            raise ConfigError(f"{name}.links", "expected a non-empty list")
        self.links = [l if isinstance(l, LinkConfig)
                      else _section(LinkConfig, l, f"{name}.links[{i}]")
                      for i, l in enumerate(self.links)]
        if not isinstance(self.filters, list):
            raise ConfigError(f"{name}.filters", "expected a list")
        self.filters = [f if isinstance(f, FilterConfig)
                        else _section(FilterConfig, f, f"{name}.filters[{i}]")
                        for i, f in enumerate(self.filters)]
        if self.noise_injections is not None:
            if not isinstance(self.noise_injections, list) or not self.noise_injections:
                raise ConfigError(f"{name}.noise_injections", "expected a non-empty list or null")
            inj = []
            for i, item in enumerate(self.noise_injections):
                key = f"{name}.noise_injections[{i}]"
                if isinstance(item, (list, tuple)):
                    item = {"after_link": item[0], "fraction": item[1]}
                if not isinstance(item, dict) or set(item) != {"after_link", "fraction"}:
                    raise ConfigError(key, "expected {after_link, fraction}")
                inj.append((_num(item["after_link"], f"{key}.after_link", lo=0, integer=True),
                            _num(item["fraction"], f"{key}.fraction", lo=0)))
            self.noise_injections = inj
        try:
            self.spec()
        except SdmeqError as exc:
            raise ConfigError(name, str(exc)) from None

    def spec(self):
        links = [l.spec(self.n_modes) for l in self.links]
        filters = [(f.placement, f.spec()) for f in self.filters]
        return PathSpec(links=links, filters=filters,
                        noise_injections=None if self.noise_injections is None
                        else list(self.noise_injections))


@dataclass
class GridConfig:
    n_bins: int = 1000
    bandwidth_ghz: float = None  # default s / T

    def validate(self, name):
        self.n_bins = _num(self.n_bins, f"{name}.n_bins", lo=2, integer=True)
        if self.bandwidth_ghz is not None:
            self.bandwidth_ghz = _num(self.bandwidth_ghz, f"{name}.bandwidth_ghz",
                                      lo=0, lo_open=True)


@dataclass
class SignalConfig:
    symbol_rate_gbd: float = 30.0
    rolloff: float = 0.1
    s: int = 2

    def validate(self, name):
        self.symbol_rate_gbd = _num(self.symbol_rate_gbd, f"{name}.symbol_rate_gbd",
                                    lo=0, lo_open=True)
        self.rolloff = _num(self.rolloff, f"{name}.rolloff", lo=0, hi=1)
        self.s = _num(self.s, f"{name}.s", lo=1, integer=True)

    def pulse(self):
        return PulseSpec(rolloff=self.rolloff, symbol_rate=self.symbol_rate_gbd * 1e9)


@dataclass
class EqualizerConfig:
    taps: list = field(default_factory=lambda: [40, 60, 100])
    delta: object = "auto"

    def validate(self, name):
        if not isinstance(self.taps, list) or not self.taps:
            raise ConfigError(f"{name}.taps", "expected a non-empty list")
        self.taps = [_num(m, f"{name}.taps[{i}]", lo=1, integer=True)
                     for i, m in enumerate(self.taps)]
        if self.delta != "auto":
            self.delta = _num(self.delta, f"{name}.delta", lo=0, integer=True)


@dataclass
class NoiseConfig:
    n0_half_db: list = None
    n0_half: list = None

    def validate(self, name):
        if self.n0_half_db is not None and self.n0_half is not None:
            raise ConfigError(name, "give n0_half_db or n0_half, not both")
        if self.n0_half is not None:
            vals = self.n0_half
            key = "n0_half"
        else:
            vals = [-10.0] if self.n0_half_db is None else self.n0_half_db
            key = "n0_half_db"
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{name}.{key}", "expected a non-empty list")
        if key == "n0_half":
            self.n0_half = [_num(v, f"{name}.n0_half[{i}]", lo=0, lo_open=True)
                            for i, v in enumerate(vals)]
        else:
            self.n0_half_db = [_num(v, f"{name}.n0_half_db[{i}]") for i, v in enumerate(vals)]

    def levels(self):
        """Linear N0/2 values."""
        if self.n0_half is not None:
            return list(self.n0_half)
        return [10.0 ** (v / 10.0) for v in self.n0_half_db]


@dataclass
class TheoryConfig:
    energy_keep: float = 1.0
    method: str = "auto"
    n_fft: int = None

    def validate(self, name):
        self.energy_keep = _num(self.energy_keep, f"{name}.energy_keep", lo=0.9, hi=1,
                                lo_open=True)
        if self.method not in ("auto", "dense", "banded", "correlation"):
            raise ConfigError(f"{name}.method", f"unknown solver {self.method!r}")
        if self.n_fft is not None:
            self.n_fft = _num(self.n_fft, f"{name}.n_fft", lo=16, integer=True)


@dataclass
class IIRConfig:
    M_big: int = 1024
    tol_db: float = 0.02
    energy_keep: float = 1.0 - 1e-6

    def validate(self, name):
        self.M_big = _num(self.M_big, f"{name}.M_big", lo=1, integer=True)
        self.tol_db = _num(self.tol_db, f"{name}.tol_db", lo=0, lo_open=True)
        self.energy_keep = _num(self.energy_keep, f"{name}.energy_keep", lo=0.9, hi=1,
                                lo_open=True)


@dataclass
class MCConfig:
    n_syms: int = 380_000
    mu_grid: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    schedule: object = field(default_factory=lambda: ["relative", 4.0])
    discard: float = 0.5
    s_sim: int = 4
    rx: str = "bandlimit"
    normalize: bool = True

    def validate(self, name):
        self.n_syms = _num(self.n_syms, f"{name}.n_syms", lo=1, integer=True)
        if not isinstance(self.mu_grid, list) or not self.mu_grid:
            raise ConfigError(f"{name}.mu_grid", "expected a non-empty list")
        self.mu_grid = [_num(m, f"{name}.mu_grid[{i}]", lo=0, lo_open=True)
                        for i, m in enumerate(self.mu_grid)]
        if self.schedule not in (None, "constant"):
            if (not isinstance(self.schedule, (list, tuple)) or len(self.schedule) != 2
                    or self.schedule[0] not in ("relative", "decay")):
                raise ConfigError(f"{name}.schedule",
                                  "expected null, 'constant', ['relative', c] or ['decay', k0]")
            self.schedule = (self.schedule[0],
                             _num(self.schedule[1], f"{name}.schedule[1]", lo=0, lo_open=True))
        self.discard = _num(self.discard, f"{name}.discard", lo=0, hi=0.99)
        self.s_sim = _num(self.s_sim, f"{name}.s_sim", lo=2, integer=True)
        if self.rx not in ("auto", "matched", "antialias", "bandlimit"):
            raise ConfigError(f"{name}.rx", f"unknown receiver {self.rx!r}")
        if not isinstance(self.normalize, bool):
            raise ConfigError(f"{name}.normalize", "expected true or false")


@dataclass
class FilterStudyConfig:
    placements: list = field(default_factory=lambda: list(PLACEMENTS))
    n0_half_db: list = field(default_factory=lambda: [-16.0, -14.0, -12.0, -10.0, -8.0,
                                                      -6.0, -4.0])
    realization: int = 0
    filter: dict = field(default_factory=dict)

    def validate(self, name):
        if not isinstance(self.placements, list) or not self.placements:
            raise ConfigError(f"{name}.placements", "expected a non-empty list")
        for i, p in enumerate(self.placements):
            if p not in PLACEMENTS:
                raise ConfigError(f"{name}.placements[{i}]",
                                  f"expected one of {PLACEMENTS}, got {p!r}")
        if not isinstance(self.n0_half_db, list) or not self.n0_half_db:
            raise ConfigError(f"{name}.n0_half_db", "expected a non-empty list")
        self.n0_half_db = [_num(v, f"{name}.n0_half_db[{i}]")
                           for i, v in enumerate(self.n0_half_db)]
        self.realization = _num(self.realization, f"{name}.realization", lo=0, integer=True)
        if not isinstance(self.filter, FilterConfig):
            raw = dict(self.filter or {})
            raw.pop("placement", None)
            self.filter = _section(FilterConfig, raw, f"{name}.filter")


@dataclass
class BenchConfig:
    repeats: int = 3
    taps: list = field(default_factory=lambda: [100])
    n_syms: int = 380_000

    def validate(self, name):
        self.repeats = _num(self.repeats, f"{name}.repeats", lo=3, integer=True)
        if not isinstance(self.taps, list) or not self.taps:
            raise ConfigError(f"{name}.taps", "expected a non-empty list")
        self.taps = [_num(m, f"{name}.taps[{i}]", lo=1, integer=True)
                     for i, m in enumerate(self.taps)]
        self.n_syms = _num(self.n_syms, f"{name}.n_syms", lo=1, integer=True)


_SECTIONS = {"path": PathConfig, "grid": GridConfig, "signal": SignalConfig,
             "equalizer": EqualizerConfig, "noise": NoiseConfig, "theory": TheoryConfig,
             "iir": IIRConfig, "mc": MCConfig, "filter_study": FilterStudyConfig,
             "bench": BenchConfig}


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    realizations: int = 1
    engines: list = field(default_factory=lambda: ["theory"])
    path: PathConfig = None
    grid: GridConfig = None
    signal: SignalConfig = None
    equalizer: EqualizerConfig = None
    noise: NoiseConfig = None
    theory: TheoryConfig = None
    iir: IIRConfig = None
    mc: MCConfig = None
    filter_study: FilterStudyConfig = None
    bench: BenchConfig = None

    def __post_init__(self):
        for key, cls in _SECTIONS.items():
            val = getattr(self, key)
            if not isinstance(val, cls):
                setattr(self, key, _section(cls, val, key))
        self.validate()

    def validate(self):
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError("name", "expected a non-empty string")
        self.seed = _num(self.seed, "seed", lo=0, hi=2 ** 64 - 1, integer=True)
        self.realizations = _num(self.realizations, "realizations", lo=1, integer=True)
        if not isinstance(self.engines, (list, tuple)) or not self.engines:
            raise ConfigError("engines", "at least one engine must be enabled")
        for i, e in enumerate(self.engines):
            if e not in ENGINES:
                raise ConfigError(f"engines[{i}]", f"unknown engine {e!r}; expected {ENGINES}")
        if len(set(self.engines)) != len(self.engines):
            raise ConfigError("engines", "duplicate engine")
        # keep a canonical order so output does not depend on how engines were listed
        self.engines = [e for e in ENGINES if e in self.engines]

    # derived objects -------------------------------------------------------

    def pulse(self):
        return self.signal.pulse()

    def path_spec(self):
        return self.path.spec()

    def freq_grid(self):
        bw = self.grid.bandwidth_ghz
        if bw is None:
            bw = self.signal.s * self.signal.symbol_rate_gbd
        return FreqGrid.centered(bw * 1e9, self.grid.n_bins)

    def n0_levels(self):
        return self.noise.levels()

    def to_dict(self):
        out = asdict(self)
        if self.mc.schedule is not None and not isinstance(self.mc.schedule, str):
            out["mc"]["schedule"] = list(self.mc.schedule)
        inj = self.path.noise_injections
        if inj is not None:
            out["path"]["noise_injections"] = [{"after_link": a, "fraction": f}
                                               for a, f in inj]
        return out

    def replace(self, **changes):
        """Copy with top-level fields replaced (sections given as dicts or objects)."""
        d = self.to_dict()
        for k, v in changes.items():
            d[k] = asdict(v) if hasattr(v, "__dataclass_fields__") else v
        return from_dict(d)


def from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {f.name for f in fields(ScenarioConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown field")
    return ScenarioConfig(**raw)


def loads(text):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return from_dict(raw)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
