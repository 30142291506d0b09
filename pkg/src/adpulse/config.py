"""Experiment configuration: TOML files with explicit physical units.

Every dimensional value is a string with a unit suffix, e.g. ``"4.12 MHz"``,
``"1 ns"``, ``"23.4 mT"``. Frequencies are Hz-type and converted to rad/s;
times to s; fields to T. Unknown sections or keys are errors.

Environment variables ``ADPULSE_<SECTION>__<KEY>=<toml value>`` override file
values (nested tables join with further ``__``), e.g.
``ADPULSE_RUN__SEED=7`` or ``ADPULSE_PULSEPOL__TAU='"190 ns"'``.
"""

from __future__ import annotations

import copy
import math
import os
import re
from typing import Any, Mapping

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

ENV_PREFIX = "ADPULSE_"


class ConfigError(ValueError):
    """Schema or unit violation in an experiment config."""


# units -------------------------------------------------------------------------------

_FREQ = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6, "ns": 1e-9, "ps": 1e-12}
_FIELD = {"T": 1.0, "mT": 1e-3, "uT": 1e-6, "µT": 1e-6, "G": 1e-4}
_UNITS = {"frequency": _FREQ, "time": _TIME, "field": _FIELD}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*?)\s*$")


def parse_quantity(text: Any, kind: str) -> float:
    """Parse ``"<number> <unit>"`` into SI (frequencies become rad/s)."""
    if not isinstance(text, str):
        raise ConfigError(f"expected a {kind} with unit suffix, got {text!r}")
    m = _QUANTITY.match(text)
    if not m:
        raise ConfigError(f"cannot parse {kind} {text!r}; expected e.g. '1.5 MHz'")
    value, unit = float(m.group(1)), m.group(2)
    table = _UNITS[kind]
    if unit not in table:
        raise ConfigError(f"unit {unit!r} is not a {kind} unit (allowed: {', '.join(table)})")
    v = value * table[unit]
    if kind == "frequency":
        v *= 2 * math.pi
    if not math.isfinite(v):
        raise ConfigError(f"non-finite {kind} {text!r}")
    return v


# schema ------------------------------------------------------------------------------
# field spec: (kind, default); kind is a unit kind, "int", "float", "bool", "str:<a|b>",
# "list:<kind>", "pulse", "table:<name>" or "tables:<name>"; default REQUIRED marks required keys.

REQUIRED = object()

_NUCLEUS = {"a_x": ("frequency", REQUIRED), "a_z": ("frequency", REQUIRED), "gamma_hz_per_t": ("float", 10.7084e6)}
_NITROGEN = {"a_parallel": ("frequency", "2.16 MHz"), "initial_state": ("str:-1|0|+1|mixed", "mixed")}
_PULSE = {"shape": ("str:instantaneous|gaussian", "instantaneous"), "duration": ("time", "16 ns"), "slices": ("int", 32), "truncation": ("float", 2.0)}
_STATE = {"electron": ("str:0|1|mixed", "0"), "nuclear": ("str:up|down|mixed|dressed_up|dressed_down", "mixed")}

SCHEMA: dict[str, dict] = {
    "system": {
        "b0": ("field", REQUIRED),
        "frame": ("str:nv|symmetric", "nv"),
        "nuclei": ("tables:nucleus", []),
        "nitrogen": ("table:nitrogen", None),
    },
    "run": {
        "seed": ("int", 0),
        "workers": ("int", 1),
        "trace_granularity": ("str:period|step", "period"),
    },
    "spectroscopy": {
        "protocol": ("str:pulsepol|xy8", "pulsepol"),
        "k": ("int", 3),
        "window": ("float", 0.05),  # relative half-width about the analytic resonance
        "points": ("int", 201),
        "tau_min": ("time", None),
        "tau_max": ("time", None),
        "pulse": ("table:pulse", {}),
    },
    "sweep": {
        "k": ("int", 3),
        "tau_0": ("time", None),
        "tau_f": ("time", None),
        "span": ("time", None),  # symmetric about the resonance when tau_0/tau_f are absent
        "start_offset": ("time", None),  # tau_0 = tau_r + start_offset, with tau_f from span
        "delta_tau": ("list:time", REQUIRED),
        "n_p": ("int", 1),
        "pulse": ("table:pulse", {}),
        "initial": ("table:state", {}),
    },
    "pulsepol": {
        "k": ("int", 3),
        "tau": ("time", None),  # default: analytic resonance of the first nucleus
        "tau_offset": ("time", "0 ns"),
        "n_cycles": ("int", 16),
        "pulse": ("table:pulse", {}),
        "initial": ("table:state", {}),
    },
    "scan": {
        "k": ("int", 3),
        "a_x_min": ("frequency", REQUIRED),
        "a_x_max": ("frequency", REQUIRED),
        "a_x_points": ("int", 6),
        "a_z_min": ("frequency", REQUIRED),
        "a_z_max": ("frequency", REQUIRED),
        "a_z_points": ("int", 6),
        "span_fraction": ("float", 0.2),
        "step_counts": ("list:int", [25, 50, 100, 200, 400, 800, 1600]),
        "max_periods": ("int", 200),
        "protocols": ("list:str", ["adpulse", "pulsepol"]),
        "pulse": ("table:pulse", {}),
    },
    "hyperpol": {
        "protocol": ("str:adpulse|pulsepol", "adpulse"),
        "k": ("int", 3),
        "reinit": ("int", 10),
        "reinit_overhead": ("time", "6 us"),
        "tau": ("time", None),
        "n_p": ("int", 4),
        "span": ("time", None),
        "delta_tau": ("time", None),
        "pulse": ("table:pulse", {}),
    },
    "ensemble": {
        "n_clusters": ("int", 30),
        "cluster_size": ("int", 3),
        "band_min": ("frequency", "10 kHz"),
        "band_max": ("frequency", "60 kHz"),
        "signed_az": ("bool", True),
        "tau_r": ("time", "1497 ns"),
        "budget": ("time", "15 ms"),
        "reinit_overhead": ("time", "6 us"),
        "adpulse_span": ("time", "250 ns"),
        "adpulse_delta_tau": ("time", "5 ns"),
        "adpulse_n_p": ("int", 2),
        "pulsepol_n_p": ("int", 4),
        "k": ("int", 3),
        "include_nitrogen": ("bool", False),
        "keep_traces": ("bool", False),
        "histogram_bins": ("int", 40),
        "pulse": ("table:pulse", {}),
    },
    "fid": {
        "polarization": ("list:float", [0.0]),
        "delay_step": ("time", "10 ns"),
        "points": ("int", 4000),
        "detuning": ("frequency", None),
        "window": ("str:hann|hamming|blackman|rect", "hann"),
        "zero_padding": ("int", 8),
        "noise_std": ("float", 0.0),
        "exclude_ambiguous": ("bool", False),
    },
}

_TABLES = {"nucleus": _NUCLEUS, "nitrogen": _NITROGEN, "pulse": _PULSE, "state": _STATE}

# sections that are meaningful for no command are still accepted; each command reads its own
COMMAND_SECTIONS = {
    "spectroscopy": "spectroscopy",
    "sweep": "sweep",
    "pulsepol": "pulsepol",
    "scan": "scan",
    "hyperpol": "hyperpol",
    "ensemble": "ensemble",
    "fid": "fid",
}


def _coerce(kind: str, value: Any, where: str) -> Any:
    if value is None:
        return None
    if kind in _UNITS:
        try:
            return parse_quantity(value, kind)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if kind.startswith("str:"):
        allowed = kind[4:].split("|")
        if value not in allowed:
            raise ConfigError(f"{where}: {value!r} not in {allowed}")
        return value
    if kind.startswith("list:"):
        inner = kind[5:]
        items = value if isinstance(value, list) else [value]
        return [_coerce(inner, v, f"{where}[{i}]") for i, v in enumerate(items)]
    if kind.startswith("table:"):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{where}: expected a table")
        return _validate_table(value, _TABLES[kind[6:]], where)
    if kind.startswith("tables:"):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected an array of tables")
        return [_coerce("table:" + kind[7:], v, f"{where}[{i}]") for i, v in enumerate(value)]
    raise ConfigError(f"{where}: unknown schema kind {kind}")  # pragma: no cover


def _validate_table(raw: Mapping, schema: Mapping, where: str) -> dict:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    out = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            out[key] = _coerce(kind, raw[key], f"{where}.{key}")
        elif default is REQUIRED:
            raise ConfigError(f"{where}: missing required key {key!r}")
        else:
            out[key] = _coerce(kind, copy.deepcopy(default), f"{where}.{key}") if default is not None else None
    return out


def apply_env_overrides(raw: dict, environ: Mapping[str, str] | None = None) -> dict:
    """Merge ``ADPULSE_SECTION__KEY`` variables into a raw (unvalidated) config."""
    environ = os.environ if environ is None else environ
    raw = copy.deepcopy(raw)
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX) :].split("__")]
        text = environ[name]
        try:
            value = tomllib.loads(f"v = {text}")["v"]
        except tomllib.TOMLDecodeError:
            value = text
        node = raw
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{name}: cannot override inside a non-table value")
        node[path[-1]] = value
    return raw


def validate(raw: Mapping) -> dict:
    """Check a raw config against the schema and normalize units to SI."""
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    if "system" not in raw:
        raise ConfigError("missing [system] section")
    cfg = {}
    for section, schema in SCHEMA.items():
        if section in raw:
            if not isinstance(raw[section], Mapping):
                raise ConfigError(f"[{section}] must be a table")
            cfg[section] = _validate_table(raw[section], schema, section)
        else:
            # an absent section takes its defaults, or None when it has required keys
            try:
                cfg[section] = _validate_table({}, schema, section)
            except ConfigError:
                cfg[section] = None
    if cfg["run"]["workers"] < 1:
        raise ConfigError("run.workers must be at least 1")
    if cfg["run"]["seed"] < 0 or cfg["run"]["seed"] >= 2**64:
        raise ConfigError("run.seed must be an unsigned 64-bit integer")
    return cfg


def load_config(path, environ: Mapping[str, str] | None = None) -> tuple[dict, dict]:
    """Read, override and validate a config file; returns ``(raw, normalized)``."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    raw = apply_env_overrides(raw, environ)
    return raw, validate(raw)
