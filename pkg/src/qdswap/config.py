"""TOML scenario configs with unit-checked values."""
from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass
from dataclasses import field as dc_field
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .interference import BsmStation
from .source import QDSource, find_resonance_field
from .swap import SwapScenario

SCHEMA = "qdswap-config/1"
SCENARIOS = ("swap-XX", "swap-X", "hom-X", "hom-XX", "tomo-source", "match", "rates")

# unit -> (dimension, factor to the internal unit)
UNITS = {
    "ps": ("time", 1.0), "ns": ("time", 1e3),
    "ueV": ("energy", 1.0), "μeV": ("energy", 1.0), "µeV": ("energy", 1.0), "meV": ("energy", 1e3),
    "kV/cm": ("field", 1.0),
    "ueV/(kV/cm)": ("slope", 1.0), "μeV/(kV/cm)": ("slope", 1.0), "µeV/(kV/cm)": ("slope", 1.0),
    "MHz": ("rate", 1.0), "GHz": ("rate", 1e3),
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:inf|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))\s*(\S.*?)?\s*$")


class ConfigError(ValueError):
    """Invalid config; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def parse_quantity(text: Any, dimension: str, where: str) -> float:
    """Value of a string such as ``"25 ps"`` in internal units.

    ``"inf"`` without a unit is accepted for times (an unlimited window).
    """
    if isinstance(text, bool) or not isinstance(text, str):
        raise ConfigError(where, f"expected a quantity string with a {dimension} unit, got {text!r}")
    m = _QUANTITY.match(text)
    if not m:
        raise ConfigError(where, f"cannot parse quantity {text!r}")
    number, unit = m.groups()
    value = float(number)
    if unit is None:
        if math.isinf(value) and dimension == "time":
            return value
        raise ConfigError(where, f"missing unit in {text!r} (expected a {dimension} unit)")
    if unit not in UNITS:
        raise ConfigError(where, f"unknown unit {unit!r} in {text!r}")
    dim, factor = UNITS[unit]
    if dim != dimension:
        raise ConfigError(where, f"unit {unit!r} is a {dim}, expected a {dimension}")
    return value * factor


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a plain number, got {value!r}")
    return float(value)


def _table(data: dict, key: str, where: str) -> dict:
    if key not in data:
        raise ConfigError(f"{where}{key}", "missing block")
    if not isinstance(data[key], dict):
        raise ConfigError(f"{where}{key}", "expected a table")
    return data[key]


_SOURCE_FIELDS = {
    "x_energy": "energy", "xx_energy": "energy", "slope_x": "slope", "slope_xx": "slope",
    "x_lifetime": "time", "xx_lifetime": "time", "fss": "energy",
    "purcell_x": None, "purcell_xx": None, "g2_zero": None, "blinking_on_fraction": None,
    "efficiency_x": None, "efficiency_xx": None, "noise_floor": None,
    "dephasing_x": "time", "dephasing_xx": "time",
}


def parse_source(name: str, block: dict) -> QDSource:
    where = f"source.{name}"
    kwargs: dict[str, Any] = {"name": name}
    for key, value in block.items():
        path = f"{where}.{key}"
        if key == "field_range":
            if not isinstance(value, list) or len(value) != 2:
                raise ConfigError(path, "expected [min, max]")
            kwargs[key] = tuple(parse_quantity(v, "field", path) for v in value)
        elif key == "timing_correlated":
            if not isinstance(value, bool):
                raise ConfigError(path, "expected true or false")
            kwargs[key] = value
        elif key in _SOURCE_FIELDS:
            dim = _SOURCE_FIELDS[key]
            kwargs[key] = _number(value, path) if dim is None else parse_quantity(value, dim, path)
        else:
            raise ConfigError(path, "unknown key")
    try:
        return QDSource(**kwargs)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def parse_station(block: dict) -> BsmStation:
    kwargs: dict[str, Any] = {}
    for key, value in block.items():
        path = f"station.{key}"
        if key in ("bs_reflectivity", "pbs_extinction"):
            kwargs[key] = _number(value, path)
        elif key == "detector_jitter_fwhm":
            kwargs[key] = parse_quantity(value, "time", path)
        elif key == "ports":
            ports = []
            for det, spec in value.items():
                parts = str(spec).split()
                if len(parts) != 2 or parts[0] not in ("c", "d") or parts[1] not in ("H", "V"):
                    raise ConfigError(f"{path}.{det}", f"expected '<c|d> <H|V>', got {spec!r}")
                ports.append((det, parts[0], parts[1]))
            kwargs[key] = tuple(ports)
        elif key == "heralds":
            kwargs["herald_map"] = tuple((k, str(v)) for k, v in value.items())
        else:
            raise ConfigError(path, "unknown key")
    try:
        return BsmStation(**kwargs)
    except (ValueError, KeyError) as exc:
        raise ConfigError("station", str(exc)) from None


@dataclass
class ScenarioConfig:
    source1: QDSource
    source2: QDSource
    station: BsmStation
    scenario: str = "swap-XX"
    windows: tuple[float, ...] = (math.inf,)
    rep_rate: float = 160.0
    field: float | None = None  # None: tune to resonance
    resonance_tolerance: float = 1.0
    seed: int = 0
    hom: dict = dc_field(default_factory=dict)
    tomo: dict = dc_field(default_factory=dict)
    rates: dict = dc_field(default_factory=dict)
    match: dict = dc_field(default_factory=dict)
    montecarlo: dict = dc_field(default_factory=dict)
    path: Path | None = None
    allow_detuned: bool = False

    @property
    def bsm_photon(self) -> str:
        """Interfering transition; the other one carries the swapped state."""
        return {"swap-XX": "X", "swap-X": "XX", "hom-X": "X", "hom-XX": "XX"}.get(self.scenario, "X")

    def resonance_field(self, transition: str | None = None) -> float:
        transition = transition or self.bsm_photon
        return find_resonance_field(self.source1, self.source2, transition)

    def swap_scenario(self, bsm_photon: str | None = None, field: float | None = None) -> SwapScenario:
        bsm = bsm_photon or self.bsm_photon
        if field is None:
            field = self.field if self.field is not None else self.resonance_field(bsm)
        return SwapScenario(self.source1, self.source2, bsm, self.station, field,
                            tuple(self.windows), self.rep_rate, self.resonance_tolerance)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _read(path: Path, depth: int = 0) -> dict:
    if depth > 4:
        raise ConfigError("extends", "too many nested extends")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML syntax error in {path}: {exc}") from None
    parent = data.pop("extends", None)
    if parent is not None:
        data = _merge(_read((path.parent / parent).resolve(), depth + 1), data)
    return data


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(_read(path), path)


def parse_config(data: dict, path: Path | None = None) -> ScenarioConfig:
    schema = data.get("schema")
    if schema != SCHEMA:
        raise ConfigError("schema", f"expected {SCHEMA!r}, got {schema!r}")
    scenario = data.get("scenario", "swap-XX")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {', '.join(SCENARIOS)}")
    sources = _table(data, "source", "")
    if set(sources) != {"qd1", "qd2"}:
        raise ConfigError("source", "exactly the blocks source.qd1 and source.qd2 are required")
    s1 = parse_source("qd1", sources["qd1"])
    s2 = parse_source("qd2", sources["qd2"])
    station = parse_station(_table(data, "station", ""))
    windows = data.get("windows", ["inf"])
    if not isinstance(windows, list) or not windows:
        raise ConfigError("windows", "expected a non-empty list")
    windows = tuple(parse_quantity(w, "time", f"windows[{i}]") for i, w in enumerate(windows))
    if any(w <= 0 for w in windows) or list(windows) != sorted(windows):
        raise ConfigError("windows", "windows must be positive and ascending")
    field_value = data.get("field", "auto")
    fld = None if field_value == "auto" else parse_quantity(field_value, "field", "field")
    allow_detuned = data.get("allow_detuned", False)
    if not isinstance(allow_detuned, bool):
        raise ConfigError("allow_detuned", "expected true or false")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "expected a non-negative integer")

    def section(name: str, spec: dict) -> dict:
        block = data.get(name, {})
        if not isinstance(block, dict):
            raise ConfigError(name, "expected a table")
        out = {}
        for key, value in block.items():
            if key not in spec:
                raise ConfigError(f"{name}.{key}", "unknown key")
            kind = spec[key]
            path_ = f"{name}.{key}"
            if kind == "number":
                out[key] = _number(value, path_)
            elif kind == "str":
                out[key] = str(value)
            elif kind == "int":
                if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value) or value < 0:
                    raise ConfigError(path_, "expected a non-negative integer")
                out[key] = int(value)
            elif kind == "windows":
                out[key] = tuple(parse_quantity(w, "time", f"{path_}[{i}]") for i, w in enumerate(value))
            else:
                out[key] = parse_quantity(value, kind, path_)
        return out

    cfg = ScenarioConfig(
        s1, s2, station, scenario, windows,
        parse_quantity(data.get("rep_rate", "160 MHz"), "rate", "rep_rate"),
        fld,
        parse_quantity(data.get("resonance_tolerance", "1 ueV"), "energy", "resonance_tolerance"),
        seed,
        section("hom", {"windows": "windows", "bin_width": "time", "max_delay": "time", "total": "number"}),
        section("tomo", {"herald": "str", "window": "time", "flux": "number", "bootstrap": "int"}),
        section("rates", {"pair_generation": "number", "setup_transmission": "number",
                          "detector_efficiency": "number", "improved_pair_generation": "number",
                          "improved_extraction": "number"}),
        section("match", {"spread": "energy", "spread_kind": "str", "tuning_range": "energy", "samples": "int"}),
        section("montecarlo", {"shots": "int"}),
        path,
        allow_detuned,
    )
    known = {"schema", "scenario", "source", "station", "windows", "rep_rate", "field",
             "resonance_tolerance", "seed", "allow_detuned", "hom", "tomo", "rates", "match", "montecarlo"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown key")
    return cfg


def bundled_config_path(name: str = "calibrated.toml") -> Path:
    return Path(str(resources.files("qdswap") / "data" / name))


def bundled_configs() -> list[Path]:
    folder = Path(str(resources.files("qdswap") / "data"))
    return sorted(folder.glob("*.toml"))
