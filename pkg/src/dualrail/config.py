"""Experiment configuration files: YAML with a published JSON schema.

Every run is driven by one config naming exactly one experiment, a
mandatory seed, and a device (a named preset or an inline description
in plain Hz). Frequencies in config files are linear (Hz); the loader
converts to angular units internally.
"""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import yaml

from .device import DeviceParams, paper_device

EXPERIMENT_TYPES = [
    "spectroscopy", "ramsey", "echo", "cpmg", "t1_logical", "rb",
    "erasure_metrics", "check_dephasing_sweep", "operating_point_sweep",
    "budget_report",
]


class ConfigError(ValueError):
    """Schema violation or unreadable config, with a field-level message."""


_NUMBER = {"type": "number"}
_POS_NUMBER = {"type": "number", "exclusiveMinimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}

_TRANSMON_SCHEMA = {
    "type": "object",
    "required": ["freq_min", "freq_max", "freq_idle", "anharmonicity",
                 "t1", "t2_star", "p_equil"],
    "properties": {
        "freq_min": _POS_NUMBER, "freq_max": _POS_NUMBER, "freq_idle": _POS_NUMBER,
        "anharmonicity": _POS_NUMBER, "t1": _POS_NUMBER, "t2_star": _POS_NUMBER,
        "p_equil": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
    },
    "additionalProperties": False,
}

_DEVICE_INLINE_SCHEMA = {
    "type": "object",
    "required": ["transmons", "couplings", "readout", "flux_line"],
    "properties": {
        "transmons": {"type": "array", "minItems": 3, "maxItems": 3,
                      "items": _TRANSMON_SCHEMA},
        "couplings": {
            "type": "object",
            "required": ["g12", "g13", "g23"],
            "properties": {"g12": _NUMBER, "g13": _NUMBER, "g23": _NUMBER},
            "additionalProperties": False,
        },
        "readout": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "items": {
                "type": "object",
                "required": ["freq_ro", "chi_ro", "kappa_ro"],
                "properties": {"freq_ro": _POS_NUMBER, "chi_ro": _POS_NUMBER,
                               "kappa_ro": _POS_NUMBER},
                "additionalProperties": False,
            },
        },
        "flux_line": {
            "type": "object",
            "required": ["mutual_inductance_h", "impedance_ohm", "temperature_k"],
            "properties": {"mutual_inductance_h": _POS_NUMBER,
                           "impedance_ohm": _POS_NUMBER,
                           "temperature_k": _POS_NUMBER},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_CHECK_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "pulse_duration": _POS_NUMBER,
        "readout_duration": _POS_NUMBER,
        "p_false_positive_pole": _PROB,
        "p_false_positive_equator": _PROB,
        "p_false_negative": _PROB,
        "deterministic_phase": _NUMBER,
        "p_dephase": _PROB,
        "p_mist_reexcite": _PROB,
    },
    "additionalProperties": False,
}

_READOUT_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "p_read1_given0_q1": _PROB, "p_read0_given1_q1": _PROB,
        "p_read1_given0_q2": _PROB, "p_read0_given1_q2": _PROB,
        "duration": _POS_NUMBER,
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "dualrail experiment configuration",
    "type": "object",
    "required": ["seed", "experiment", "device"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "experiment": {"enum": EXPERIMENT_TYPES},
        "device": {
            "type": "object",
            "properties": {
                "preset": {"type": "string"},
                "inline": _DEVICE_INLINE_SCHEMA,
            },
            "oneOf": [{"required": ["preset"]}, {"required": ["inline"]}],
            "additionalProperties": False,
        },
        "params": {"type": "object"},
        "noise": {"type": "object"},
        "execution": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["channel", "trajectory"]},
                "calibration": {"enum": ["analytic", "full"]},
            },
            "additionalProperties": False,
        },
        "check_model": _CHECK_MODEL_SCHEMA,
        "readout_model": _READOUT_MODEL_SCHEMA,
        "output_dir": {"type": "string"},
        "force": {"type": "boolean"},
    },
    "additionalProperties": False,
}

PRESETS = {
    "paper-device": ("Table-style three-transmon device used throughout",
                     paper_device),
}


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {path!r}: {exc.message}") from exc
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    try:
        cfg = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {p} is not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {p} must hold a mapping")
    return validate_config(cfg)


def device_from_config(cfg: dict) -> DeviceParams:
    dev = cfg["device"]
    if "preset" in dev:
        name = dev["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown device preset {name!r}; "
                              f"available: {sorted(PRESETS)}")
        return PRESETS[name][1]()
    return DeviceParams.from_dict(dev["inline"])


def schema_json() -> str:
    return json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True)
