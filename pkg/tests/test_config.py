import math

import pytest

from qdswap.config import ConfigError, bundled_config_path, bundled_configs, load_config, parse_quantity


@pytest.mark.parametrize("text,dim,value", [
    ("25 ps", "time", 25.0), ("0.2 ns", "time", 200.0), ("1.5 meV", "energy", 1500.0),
    ("3 μeV", "energy", 3.0), ("-9.3 kV/cm", "field", -9.3), ("1 GHz", "rate", 1000.0),
    ("inf", "time", math.inf), ("1e2 ps", "time", 100.0),
])
def test_parse_quantity(text, dim, value):
    assert parse_quantity(text, dim, "x") == pytest.approx(value)


@pytest.mark.parametrize("text,dim", [
    ("25", "time"), ("25 furlongs", "time"), ("25 ueV", "time"), (25.0, "time"), ("ps", "time"), ("inf", "energy"),
])
def test_parse_quantity_rejects(text, dim):
    with pytest.raises(ConfigError) as exc:
        parse_quantity(text, dim, "source.qd1.x_lifetime")
    assert exc.value.field == "source.qd1.x_lifetime"


def _write(tmp_path, body, name="c.toml"):
    p = tmp_path / name
    p.write_text(f'extends = "{bundled_config_path()}"\n' + body, encoding="utf-8")
    return p


def test_bad_unit_names_field(tmp_path):
    p = _write(tmp_path, '[source.qd2]\nx_lifetime = "25 ueV"\n')
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert exc.value.field == "source.qd2.x_lifetime"


@pytest.mark.parametrize("body,field", [
    ('[source.qd1]\ncolour = "red"\n', "source.qd1.colour"),
    ('[station]\nbs_reflectivity = "0.5"\n', "station.bs_reflectivity"),
    ('bogus = 1\n', "bogus"),
    ('windows = ["20 ps", "10 ps"]\n', "windows"),
    ('scenario = "teleport"\n', "scenario"),
    ('seed = -1\n', "seed"),
    ('[hom]\nbin = "2 ps"\n', "hom.bin"),
])
def test_invalid_fields(tmp_path, body, field):
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, body))
    assert exc.value.field == field


def test_missing_file_and_syntax(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("schema = \n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_extends_overrides_nested(tmp_path):
    cfg = load_config(_write(tmp_path, '[source.qd2]\nfss = "3 ueV"\n'))
    assert cfg.source2.fss == 3.0
    assert cfg.source1.fss == 1.0
    assert cfg.source2.x_lifetime == 25.0


def test_calibrated_values(cal_cfg):
    assert cal_cfg.scenario == "swap-XX" and cal_cfg.bsm_photon == "X"
    assert cal_cfg.station.bs_reflectivity == 0.52
    assert cal_cfg.rep_rate == 160.0
    assert cal_cfg.windows[-1] == math.inf
    assert cal_cfg.resonance_field() == pytest.approx(-9.3, abs=0.05)


@pytest.mark.parametrize("path", bundled_configs(), ids=lambda p: p.name)
def test_bundled_configs_load(path):
    cfg = load_config(path)
    assert cfg.swap_scenario().source1.name == "qd1"


def test_bundled_set():
    names = {p.name for p in bundled_configs()}
    assert names >= {"calibrated.toml", "calibrated-swap-x.toml", "ideal.toml", "detuned.toml"}
