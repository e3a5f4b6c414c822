"""Declarative run configuration: YAML schema, validation, presets.

A run is fully described by one nested mapping.  Unknown keys are rejected
with the YAML line number; every command writes its resolved configuration
next to its outputs so reruns are reproducible from the artifact directory
alone.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np
import yaml

from .constants import ANGSTROM


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _posnum(x) -> bool:
    return _num(x) and x > 0


def _nonneg(x) -> bool:
    return _num(x) and x >= 0


def _intp(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x > 0


def _numlist(x) -> bool:
    return isinstance(x, list) and len(x) > 0 and all(_num(v) for v in x)


def _vec3(x) -> bool:
    return isinstance(x, list) and len(x) == 3 and all(_num(v) for v in x)


def _pair(x) -> bool:
    return (isinstance(x, list) and len(x) == 2
            and all(isinstance(v, int) and not isinstance(v, bool) for v in x)
            and 0 <= x[0] < x[1] <= 15)


def _intlist(x) -> bool:
    return isinstance(x, list) and len(x) > 0 and all(_intp(v) for v in x)


def _choice(*opts):
    return lambda x: x in opts


_BOOL = lambda x: isinstance(x, bool)  # noqa: E731

# section -> key -> predicate
SCHEMA = {
    "model": {
        "gamma_e_hz_per_t": _posnum,
        "gamma_n_hz_per_t": _num,
        "hyperfine_a_hz": _num,
        "nuclear_zeeman_sign": _choice(1.0, -1.0, 1, -1),
    },
    "scan": {
        "axis": _vec3,
        "b_min_mt": _posnum,
        "b_max_mt": _posnum,
        "b_step_mt": _posnum,
        "significance_threshold": _nonneg,
    },
    "noise": {
        "t2_ref_s": _posnum,
        "b_ref_mt": _posnum,
        "t2_cap_s": _posnum,
    },
    "angular": {
        "enabled": _BOOL,
        "n_directions": _intp,
        "b_mt": _posnum,
        "pair": _pair,
    },
    "bath": {
        "lattice_constant_a": _posnum,
        "o17_abundance": _nonneg,
        "concentration_er": _nonneg,
        "temperature_k": _posnum,
        "r_bath_a": _posnum,
        "r_bath_electron_a": lambda x: x is None or _posnum(x),
        "electron_target_count": _posnum,
    },
    "cce": {
        "order": _intp,
        "electron_order": _intp,
        "r_dipole_a": _posnum,
        "r_dipole_electron_fraction": _posnum,
        "two_level": _BOOL,
        "bath_state": _choice("sampled", "mixed"),
        "subcluster_floor": _posnum,
        "clamp_electron_contributions": _BOOL,
        "dim_budget": _intp,
        "cluster_budget": _intp,
        "time_min_s": _posnum,
        "time_max_s": _posnum,
        "time_points": _intp,
    },
    "sequence": {
        "kind": _choice("ramsey", "hahn", "cpmg"),
        "n_pulses": lambda x: isinstance(x, int) and x >= 0,
    },
    "run": {
        "n_configs": _intp,
        "master_seed": lambda x: isinstance(x, int) and 0 <= x < 2 ** 64,
        "workers": _intp,
    },
    "coherence": {
        "fields_mt": _numlist,
        "pair": _pair,
        "bath_kind": _choice("nuclear", "electron", "combined"),
        "ensemble_statistic": _choice("mean-of-fits", "fit-of-mean"),
    },
    "sweep": {
        "temperatures_k": _numlist,
        "concentrations": _numlist,
        "field_mt": _posnum,
        "pair": _pair,
    },
    "cpmg": {
        "n_pulses_list": _intlist,
        "field_mt": _posnum,
        "pair": _pair,
        "cases": lambda x: (isinstance(x, list) and len(x) >= 1 and all(
            isinstance(c, dict) and set(c) <= {"label", "temperature_k", "concentration_er"}
            and isinstance(c.get("label", ""), str)
            and _posnum(c.get("temperature_k", 1.0))
            and _nonneg(c.get("concentration_er", 0.0)) for c in x)),
    },
    "converge": {
        "field_mt": _posnum,
        "pair": _pair,
        "orders": _intlist,
        "orders_r_dipole_a": _posnum,
        "r_dipole_list_a": _numlist,
        "r_dipole_order": _intp,
        "r_bath_list_a": _numlist,
        "r_bath_order": _intp,
    },
    "output": {
        "directory": lambda x: isinstance(x, str) and len(x) > 0,
    },
}

DEFAULTS = {
    "model": {
        "gamma_e_hz_per_t": 95.3e9,
        "gamma_n_hz_per_t": 1.23e6,
        "hyperfine_a_hz": 687.0e6,
        "nuclear_zeeman_sign": 1.0,
    },
    "scan": {
        "axis": [0.0, 0.0, 1.0],
        "b_min_mt": 0.1,
        "b_max_mt": 50.0,
        "b_step_mt": 0.05,
        "significance_threshold": 0.05,
    },
    "noise": {
        "t2_ref_s": 0.039,
        "b_ref_mt": 25.0,
        "t2_cap_s": 10.0,
    },
    "angular": {
        "enabled": False,
        "n_directions": 326,
        "b_mt": 18.5,
        "pair": [6, 9],
    },
    "bath": {
        "lattice_constant_a": 5.411,
        "o17_abundance": 3.8e-4,
        "concentration_er": 0.0,
        "temperature_k": 0.01,
        "r_bath_a": 200.0,
        "r_bath_electron_a": None,
        "electron_target_count": 50.0,
    },
    "cce": {
        "order": 2,
        "electron_order": 4,
        "r_dipole_a": 40.0,
        "r_dipole_electron_fraction": 0.5,
        "two_level": True,
        "bath_state": "sampled",
        "subcluster_floor": 1.0e-4,
        "clamp_electron_contributions": True,
        "dim_budget": 6000,
        "cluster_budget": 500000,
        "time_min_s": 1.0e-4,
        "time_max_s": 5.0,
        "time_points": 48,
    },
    "sequence": {"kind": "hahn", "n_pulses": 1},
    "run": {"n_configs": 10, "master_seed": 20240917, "workers": 1},
    "coherence": {
        "fields_mt": [2.65, 3.65, 4.65],
        "pair": [4, 11],
        "bath_kind": "nuclear",
        "ensemble_statistic": "mean-of-fits",
    },
    "sweep": {
        "temperatures_k": [0.01, 10.0],
        "concentrations": [1.0e-8, 1.0e-4],
        "field_mt": 25.0,
        "pair": [6, 9],
    },
    "cpmg": {
        "n_pulses_list": [1, 2, 4, 8],
        "field_mt": 19.0,
        "pair": [6, 9],
        "cases": [
            {"label": "polarized-10mK", "temperature_k": 0.01, "concentration_er": 1.0e-5},
            {"label": "weak-2K", "temperature_k": 2.0, "concentration_er": 1.0e-5},
        ],
    },
    "converge": {
        "field_mt": 25.0,
        "pair": [6, 9],
        "orders": [1, 2, 3, 4],
        "orders_r_dipole_a": 25.0,
        "r_dipole_list_a": [30.0, 40.0, 50.0],
        "r_dipole_order": 3,
        "r_bath_list_a": [60.0, 80.0, 100.0],
        "r_bath_order": 2,
    },
    "output": {"directory": "out"},
}

# the "desk" preset is the acceptance-suite scale; "paper" restores the
# publication-scale ensemble sizes and bath extents
PRESETS = {
    "desk": {
        "run": {"n_configs": 10},
        "bath": {"r_bath_a": 200.0},
    },
    "paper": {
        "run": {"n_configs": 150},
        "bath": {"r_bath_a": 200.0},
        "cce": {"order": 3, "time_points": 64},
    },
}


def _coerce_numbers(obj):
    """Convert numeric-looking strings to floats.

    PyYAML's 1.1 resolver reads `9.5e10` (no exponent sign) as a string;
    accept those spellings anyway.
    """
    if isinstance(obj, dict):
        return {k: _coerce_numbers(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_coerce_numbers(v) for v in obj]
    if isinstance(obj, str):
        try:
            return float(obj)
        except ValueError:
            return obj
    return obj


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _validate(data: dict, marks: dict) -> None:
    for section, content in data.items():
        if section not in SCHEMA:
            raise ConfigError(_located(f"unknown section {section!r}", marks.get((section,))))
        if not isinstance(content, dict):
            raise ConfigError(_located(f"section {section!r} must be a mapping",
                                       marks.get((section,))))
        for key, value in content.items():
            if key not in SCHEMA[section]:
                raise ConfigError(_located(f"unknown key {section}.{key}",
                                           marks.get((section, key))))
            if not SCHEMA[section][key](value):
                raise ConfigError(_located(
                    f"invalid value for {section}.{key}: {value!r}",
                    marks.get((section, key))))


def _located(msg: str, line: int | None) -> str:
    return f"line {line}: {msg}" if line is not None else msg


def _collect_marks(path: Path) -> tuple[dict, dict]:
    """Parse YAML and record the line number of every (section[, key])."""
    text = Path(path).read_text()
    node = yaml.compose(text, Loader=yaml.SafeLoader)
    data = yaml.safe_load(text) or {}
    marks: dict = {}
    if node is not None and hasattr(node, "value"):
        for sec_key, sec_val in node.value:
            marks[(sec_key.value,)] = sec_key.start_mark.line + 1
            if hasattr(sec_val, "value") and isinstance(sec_val.value, list):
                for item in sec_val.value:
                    if isinstance(item, tuple) and len(item) == 2:
                        k, _ = item
                        marks[(sec_key.value, k.value)] = k.start_mark.line + 1
    return data, marks


@dataclass
class RunConfig:
    """Resolved, validated configuration for one command invocation."""

    data: dict = dfield(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, config_path: str | None = None, preset: str | None = None,
             overrides: dict | None = None) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            data = _merge(data, PRESETS[preset])
        if config_path is not None:
            user, marks = _collect_marks(Path(config_path))
            if not isinstance(user, dict):
                raise ConfigError(f"{config_path}: top level must be a mapping")
            user = _coerce_numbers(user)
            _validate(user, marks)
            data = _merge(data, user)
        if overrides:
            data = _merge(data, overrides)
        _validate(data, {})
        return cls(data=data)

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def dump(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.data, sort_keys=True))

    # -- typed accessors ------------------------------------------------

    def model(self):
        from .spincore import CentralSpinModel
        m = self.data["model"]
        return CentralSpinModel(gamma_e=m["gamma_e_hz_per_t"],
                                gamma_n=m["gamma_n_hz_per_t"],
                                hyperfine_a=m["hyperfine_a_hz"],
                                nuclear_zeeman_sign=float(m["nuclear_zeeman_sign"]))

    def cell(self):
        from .lattice import CrystalCell
        return CrystalCell(lattice_constant=self.data["bath"]["lattice_constant_a"] * ANGSTROM)

    def time_grid(self) -> np.ndarray:
        from .cce import log_time_grid
        c = self.data["cce"]
        return log_time_grid(c["time_max_s"], n=c["time_points"], t_min=c["time_min_s"])

    def sequence(self):
        from .cce import PulseSequence
        s = self.data["sequence"]
        return PulseSequence(s["kind"], s["n_pulses"])

    def nuclear_cce(self, time_grid=None):
        from .cce import CCEConfig
        c = self.data["cce"]
        return CCEConfig(order=c["order"],
                         r_bath=self.data["bath"]["r_bath_a"] * ANGSTROM,
                         r_dipole=c["r_dipole_a"] * ANGSTROM,
                         time_grid=self.time_grid() if time_grid is None else time_grid,
                         subcluster_floor=c["subcluster_floor"],
                         two_level=c["two_level"],
                         bath_state=c["bath_state"],
                         dim_budget=c["dim_budget"],
                         cluster_budget=c["cluster_budget"])

    def electron_cce(self, r_bath_electron: float, time_grid=None):
        from .cce import CCEConfig
        c = self.data["cce"]
        return CCEConfig(order=c["electron_order"],
                         r_bath=r_bath_electron,
                         r_dipole=r_bath_electron * c["r_dipole_electron_fraction"],
                         time_grid=self.time_grid() if time_grid is None else time_grid,
                         subcluster_floor=c["subcluster_floor"],
                         two_level=c["two_level"],
                         bath_state="sampled",
                         clamp_contributions=c["clamp_electron_contributions"],
                         dim_budget=c["dim_budget"],
                         cluster_budget=c["cluster_budget"])
