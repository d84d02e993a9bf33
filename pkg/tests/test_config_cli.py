import json

import pytest

from sdmeq import cli, config
from sdmeq.errors import ConfigError


def tiny(**over):
    raw = {
        "name": "tiny",
        "seed": 7,
        "realizations": 2,
        "engines": ["theory", "iir"],
        "path": {"n_modes": 1, "links": [{"K": 10, "section_length_km": 10.0,
                                          "sigma_mdl_db": 0.7}]},
        "equalizer": {"taps": [8, 16]},
        "noise": {"n0_half_db": [-10.0, -6.0]},
        "iir": {"M_big": 64, "tol_db": 0.05},
        "mc": {"n_syms": 20000},
        "filter_study": {"placements": ["none", "RX"], "n0_half_db": [-12.0, -8.0],
                         "filter": {"order": 2.0, "b3db_ghz": 15.0}},
    }
    raw.update(over)
    return raw


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


# config ---------------------------------------------------------------------------


def test_defaults_and_roundtrip():
    cfg = config.from_dict(tiny())
    assert cfg.engines == ["theory", "iir"]
    assert cfg.n0_levels() == pytest.approx([0.1, 10 ** -0.6])
    assert cfg.freq_grid().bandwidth == pytest.approx(60e9)
    again = config.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_engine_order_is_canonical():
    cfg = config.from_dict(tiny(engines=["iir", "theory"]))
    assert cfg.engines == ["theory", "iir"]


@pytest.mark.parametrize("patch,field", [
    ({"engines": []}, "engines"),
    ({"engines": ["theory", "magic"]}, "engines[1]"),
    ({"seed": -1}, "seed"),
    ({"realizations": 0}, "realizations"),
    ({"equalizer": {"taps": [0]}}, "equalizer.taps[0]"),
    ({"signal": {"s": 0}}, "signal.s"),
    ({"mc": {"rx": "optical"}}, "mc.rx"),
    ({"bogus": 1}, "bogus"),
    ({"noise": {"n0_half_db": [-10], "n0_half": [0.1]}}, "noise"),
    ({"path": {"n_modes": 1, "links": []}}, "path.links"),
])
def test_field_level_errors(patch, field):
    with pytest.raises(ConfigError) as info:
        config.from_dict(tiny(**patch))
    assert info.value.field == field


def test_invalid_json():
    with pytest.raises(ConfigError):
        config.loads("{not json")


def test_shipped_configs_load():
    import glob
    paths = sorted(glob.glob("configs/*.json"))
    assert paths
    for p in paths:
        config.load(p)


# cli --------------------------------------------------------------------------------


def run_cli(tmp_path, verb, cfg_path, *extra, out="out"):
    return cli.main([verb, cfg_path, "--out", str(tmp_path / out), *extra])


def test_run_writes_outputs(tmp_path, capsys):
    p = write(tmp_path, tiny())
    assert run_cli(tmp_path, "run", p) == 0
    out = tmp_path / "out"
    for name in ("tiny.csv", "tiny.jsonl", "tiny_by_realization.csv", "tiny_by_taps.csv",
                 "tiny_by_noise.csv", "tiny_timings.json"):
        assert (out / name).exists(), name
    rows = [json.loads(line) for line in (out / "tiny.jsonl").read_text().splitlines()]
    # 2 realizations x 2 noise levels x (2 theory tap counts + 1 iir)
    assert len(rows) == 2 * 2 * 3
    theory = [r for r in rows if r["engine"] == "theory"]
    for r in theory:
        assert not r["error"] and len(r["snr_db"]) == 2
    assert "SNR dB" in capsys.readouterr().out


def test_run_is_reproducible_without_timing(tmp_path):
    p = write(tmp_path, tiny(engines=["theory"]))
    assert run_cli(tmp_path, "run", p, "--no-timing", out="a") == 0
    assert run_cli(tmp_path, "run", p, "--no-timing", "--threads", "2", out="b") == 0
    for name in ("tiny.csv", "tiny.jsonl", "tiny_by_taps.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert not (tmp_path / "a" / "tiny_timings.json").exists()
    assert "wall_time_s" not in (tmp_path / "a" / "tiny.csv").read_text()


def test_seed_override_changes_channel(tmp_path):
    p = write(tmp_path, tiny(engines=["theory"], realizations=1))
    run_cli(tmp_path, "run", p, "--no-timing", out="a")
    run_cli(tmp_path, "run", p, "--no-timing", "--seed", "8", out="b")
    a = json.loads((tmp_path / "a" / "tiny.jsonl").read_text().splitlines()[0])
    b = json.loads((tmp_path / "b" / "tiny.jsonl").read_text().splitlines()[0])
    assert a["checksum"] != b["checksum"]


def test_engine_override_and_mc(tmp_path):
    p = write(tmp_path, tiny(realizations=1, equalizer={"taps": [8]},
                             noise={"n0_half_db": [-10.0]}))
    assert run_cli(tmp_path, "run", p, "--engines", "theory,static", "--no-timing") == 0
    rows = [json.loads(x) for x in (tmp_path / "out" / "tiny.jsonl").read_text().splitlines()]
    assert sorted(r["engine"] for r in rows) == ["static", "theory"]
    th, st = sorted(rows, key=lambda r: r["engine"] != "theory")
    assert abs(th["harmonic_snr_db"] - st["harmonic_snr_db"]) < 0.3


def test_config_error_exit_code(tmp_path):
    p = write(tmp_path, tiny(engines=[]))
    assert run_cli(tmp_path, "run", p) == 2
    p = write(tmp_path, tiny())
    assert run_cli(tmp_path, "run", p, "--engines", "") == 2


def test_engine_error_exit_code(tmp_path):
    # more taps than the delay range allows cannot fail, so force a bad fixed delay
    p = write(tmp_path, tiny(engines=["theory"], realizations=1,
                             equalizer={"taps": [8], "delta": 10_000}))
    assert run_cli(tmp_path, "run", p, "--no-timing") == 1
    rows = [json.loads(x) for x in (tmp_path / "out" / "tiny.jsonl").read_text().splitlines()]
    assert rows[0]["error"]


def test_filter_study(tmp_path):
    p = write(tmp_path, tiny(equalizer={"taps": [16]}))
    assert run_cli(tmp_path, "filter-study", p, "--no-timing") == 0
    rows = [json.loads(x) for x in (tmp_path / "out" / "tiny.jsonl").read_text().splitlines()]
    assert [r["placement"] for r in rows] == ["none", "none", "RX", "RX"]
    for placement in ("none", "RX"):
        snr = [r["harmonic_snr_db"] for r in rows if r["placement"] == placement]
        assert snr[0] > snr[1]
