"""Configuration documents for the command-line tools.

A configuration is a JSON object; every field has a default, so `{}` is a
complete document. User files are deep-merged over the defaults and then
validated in one pass that reports EVERY failing field, not just the first.
The machine-readable shape ships as `config_schema.json` next to this file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

from .detector_model import DetectorParams
from .mc_engine import SourceConfig
from .qkd_budget import QkdLinkConfig

__all__ = [
    "ConfigError",
    "FullConfig",
    "default_config",
    "deep_merge",
    "validate_config",
    "load_config",
    "grid_values",
    "schema_text",
]


class ConfigError(ValueError):
    """Invalid configuration; `errors` lists every failed field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(
            "invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors)
        )


def default_config() -> dict:
    """The complete defaults document (the headline operating point)."""
    return {
        "run": {
            "master_seed": 20260816,
            "holdoff_gates": 10,
            "holdoff_anchor": "accepted",
        },
        "detector": DetectorParams().to_json_dict(),
        "source": {
            "kind": "pulsed-trigger",
            "trigger_rate_hz": 31.25e6,
            "mean_photons": 0.1,
            "laser_fwhm_ps": 30.0,
            "alignment_delay_ps": 0.0,
            "extinction_db": 25.0,
        },
        "qkd": {
            "mu_source": 0.3,
            "fiber_loss_db": 0.0,
            "bit_rate_hz": 625e6,
            "timebin_width_ps": 400.0,
            "extinction_db": 25.0,
            "holdoff_time_ns": 8.0,
            "ec_efficiency": 1.2,
            "dead_time_model": "nonparalyzable",
            "pa_fraction": 0.5,
            "qber_floor": None,
            "laser_fwhm_ps": 30.0,
            "mc_check_bits": 1000000,
        },
        "chain": {
            "dt_ps": 25.0,
            "duration_ns": 64.0,
            "amplitude_pp_v": 8.0,
            "coupling_gain": 0.1,
            "stages": 2,
            "n_avalanches": 3,
            "threshold_mv": -4.0,
            "refractory_ns": 5.0,
            "delay_ps": 0.0,
        },
        "tcspc": {
            "n_pulses": 500000,
            "bin_width_ps": 4.0,
            "max_lag_gates": 400,
        },
        "sweeps": {
            "bias_v": {"start": 51.0, "stop": 54.5, "step": 0.05},
            "delay_ps": {"start": -400.0, "stop": 400.0, "step": 10.0},
            "fiber_loss_db": {"start": 0.0, "stop": 16.0, "step": 0.5},
            "temperatures_c": None,
        },
        "stability": {
            "n_segments": 8,
            "bits_per_segment": 1000000,
        },
    }


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; scalars and lists in `override` replace wholesale."""
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


# ---------------------------------------------------------------------------
# Leaf validators: each returns an error string or None.

def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _number(v):
    return None if _is_number(v) else "must be a finite number"


def _positive(v):
    return None if _is_number(v) and v > 0 else "must be a number > 0"


def _non_negative(v):
    return None if _is_number(v) and v >= 0 else "must be a number >= 0"


def _probability(v):
    return None if _is_number(v) and 0 <= v <= 1 else "must be a number in [0, 1]"


def _fraction_below_one(v):
    return None if _is_number(v) and 0 <= v < 1 else "must be a number in [0, 1)"


def _integer(pred, what):
    def check(v):
        ok = isinstance(v, int) and not isinstance(v, bool) and pred(v)
        return None if ok else what

    return check


_positive_int = _integer(lambda v: v >= 1, "must be an integer >= 1")
_non_negative_int = _integer(lambda v: v >= 0, "must be an integer >= 0")
_seed = _integer(lambda v: 0 <= v < 2**64, "must be an integer in [0, 2**64)")


def _boolean(v):
    return None if isinstance(v, bool) else "must be true or false"


def _enum(*options):
    def check(v):
        return None if v in options else f"must be one of {options}"

    return check


def _nullable(inner):
    def check(v):
        return None if v is None else inner(v)

    return check


def _dark_table(v):
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        return "must be null or a non-empty list of [temperature_c, probability] pairs"
    last_t = None
    for row in v:
        if not (isinstance(row, list) and len(row) == 2 and _is_number(row[0]) and _is_number(row[1])):
            return "each row must be a [temperature_c, probability] number pair"
        if not (0 < row[1] < 1):
            return "probabilities must be in (0, 1)"
        if last_t is not None and row[0] <= last_t:
            return "temperatures must be strictly increasing"
        last_t = row[0]
    return None


def _temperature_list(v):
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        return "must be null or a non-empty list of temperatures"
    if not all(_is_number(t) for t in v):
        return "temperatures must be finite numbers"
    return None


_GRID = {"start": _number, "stop": _number, "step": _positive}

_SPEC_TREE = {
    "run": {
        "master_seed": _seed,
        "holdoff_gates": _non_negative_int,
        "holdoff_anchor": _enum("accepted", "any"),
    },
    "detector": {
        "gate": {
            "gate_frequency_hz": _positive,
            "gate_fwhm_ps": _positive,
            "delay_step_ps": _positive,
            "peak_efficiency": _probability,
        },
        "bias_law": {
            "anchor_bias_v": _number,
            "anchor_efficiency": _probability,
            "slope_per_v": _positive,
            "breakdown_bias_v": _number,
        },
        "dark_table_c_prob": _dark_table,
        "jitter": {
            "sigma_ps": _non_negative,
            "tail_fraction": _fraction_below_one,
            "tail_span_gates": _positive_int,
        },
        "afterpulse": {
            "trap_fill_per_detection": _non_negative,
            "release_lifetime_ns": _positive,
            "trigger_prob_per_gate": _probability,
            "enabled": _boolean,
        },
        "operating": {
            "bias_v": _number,
            "temperature_c": _number,
        },
    },
    "source": {
        "kind": _enum("pulsed-trigger", "cw-dark-only", "cow-ppm"),
        "trigger_rate_hz": _positive,
        "mean_photons": _non_negative,
        "laser_fwhm_ps": _non_negative,
        "alignment_delay_ps": _number,
        "extinction_db": _positive,
    },
    "qkd": {
        "mu_source": _non_negative,
        "fiber_loss_db": _non_negative,
        "bit_rate_hz": _positive,
        "timebin_width_ps": _positive,
        "extinction_db": _positive,
        "holdoff_time_ns": _non_negative,
        "ec_efficiency": _positive,
        "dead_time_model": _enum("nonparalyzable", "paralyzable"),
        "pa_fraction": _probability,
        "qber_floor": _nullable(_fraction_below_one),
        "laser_fwhm_ps": _non_negative,
        "mc_check_bits": _non_negative_int,
    },
    "chain": {
        "dt_ps": _positive,
        "duration_ns": _positive,
        "amplitude_pp_v": _non_negative,
        "coupling_gain": _non_negative,
        "stages": _positive_int,
        "n_avalanches": _non_negative_int,
        "threshold_mv": _number,
        "refractory_ns": _non_negative,
        "delay_ps": _number,
    },
    "tcspc": {
        "n_pulses": _positive_int,
        "bin_width_ps": _positive,
        "max_lag_gates": _positive_int,
    },
    "sweeps": {
        "bias_v": _GRID,
        "delay_ps": _GRID,
        "fiber_loss_db": _GRID,
        "temperatures_c": _temperature_list,
    },
    "stability": {
        "n_segments": _positive_int,
        "bits_per_segment": _positive_int,
    },
}


def _walk(spec, doc, path, errors):
    if callable(spec):
        msg = spec(doc)
        if msg is not None:
            errors.append(f"{path}: {msg}")
        return
    if not isinstance(doc, dict):
        errors.append(f"{path}: must be an object")
        return
    for key in doc:
        if key not in spec:
            prefix = f"{path}.{key}" if path else key
            errors.append(f"{prefix}: unknown key")
    for key, sub in spec.items():
        sub_path = f"{path}.{key}" if path else key
        if key not in doc:
            errors.append(f"{sub_path}: missing")
            continue
        _walk(sub, doc[key], sub_path, errors)


def validate_config(doc: dict) -> list[str]:
    """Structural and cross-field validation; returns ALL error messages."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        return ["configuration root must be a JSON object"]
    _walk(_SPEC_TREE, doc, "", errors)
    if errors:
        return errors
    # cross-field constraints on a structurally sound document
    gate = doc["detector"]["gate"]
    period_ps = 1e12 / gate["gate_frequency_hz"]
    if not (gate["gate_fwhm_ps"] < period_ps):
        errors.append("detector.gate.gate_fwhm_ps: must be below one gate period")
    table = doc["detector"]["dark_table_c_prob"]
    t_op = doc["detector"]["operating"]["temperature_c"]
    if table is not None and not (table[0][0] <= t_op <= table[-1][0]):
        errors.append(
            "detector.operating.temperature_c: outside the dark table range "
            f"[{table[0][0]}, {table[-1][0]}]"
        )
    ratio = gate["gate_frequency_hz"] / doc["qkd"]["bit_rate_hz"]
    if abs(ratio - 2.0) > 1e-9:
        errors.append(
            "qkd.bit_rate_hz: gate clock / bit rate must equal 2 "
            f"(two time bins per bit), got {ratio}"
        )
    bit_period_ps = 1e12 / doc["qkd"]["bit_rate_hz"]
    if doc["qkd"]["timebin_width_ps"] > bit_period_ps / 2.0:
        errors.append("qkd.timebin_width_ps: must be at most half the bit period")
    ratio_src = gate["gate_frequency_hz"] / doc["source"]["trigger_rate_hz"]
    if doc["source"]["kind"] != "cw-dark-only":
        m = round(ratio_src)
        if m < 1 or abs(ratio_src - m) > 1e-9 * max(1.0, ratio_src):
            errors.append(
                "source.trigger_rate_hz: must divide the gate clock "
                f"(gate/trigger = {ratio_src})"
            )
        if doc["source"]["kind"] == "cow-ppm" and m != 2:
            errors.append("source.trigger_rate_hz: cow-ppm needs exactly 2 gates per bit")
    for name in ("bias_v", "delay_ps", "fiber_loss_db"):
        g = doc["sweeps"][name]
        if g["stop"] < g["start"]:
            errors.append(f"sweeps.{name}.stop: must be >= start")
    dt_ps = doc["chain"]["dt_ps"]
    if dt_ps > 1e12 / (8.0 * gate["gate_frequency_hz"]):
        errors.append("chain.dt_ps: must sample the gate frequency at least 8x")
    return errors


@dataclass(frozen=True)
class FullConfig:
    """Validated configuration with the model objects already constructed."""

    detector: DetectorParams
    source: SourceConfig
    qkd: QkdLinkConfig
    run: dict
    chain: dict
    tcspc: dict
    sweeps: dict
    stability: dict
    merged: dict


def _build(doc: dict) -> FullConfig:
    errors: list[str] = []
    detector = None
    try:
        detector = DetectorParams.from_json_dict(doc["detector"])
    except ValueError as exc:
        errors.append(f"detector: {exc}")
    src = doc["source"]
    source = None
    try:
        source = SourceConfig(
            kind=src["kind"],
            trigger_rate=float(src["trigger_rate_hz"]),
            mean_photons=float(src["mean_photons"]),
            laser_fwhm=float(src["laser_fwhm_ps"]) / 1e12,
            alignment_delay=float(src["alignment_delay_ps"]) / 1e12,
            extinction_db=float(src["extinction_db"]),
        )
    except ValueError as exc:
        errors.append(f"source: {exc}")
    qkd = None
    if detector is not None:
        q = doc["qkd"]
        try:
            qkd = QkdLinkConfig(
                mu_source=float(q["mu_source"]),
                fiber_loss_db=float(q["fiber_loss_db"]),
                bit_rate=float(q["bit_rate_hz"]),
                timebin_width=float(q["timebin_width_ps"]) / 1e12,
                extinction_db=float(q["extinction_db"]),
                detector=detector,
                holdoff_time=float(q["holdoff_time_ns"]) / 1e9,
                ec_efficiency=float(q["ec_efficiency"]),
                dead_time_model=q["dead_time_model"],
                pa_fraction=float(q["pa_fraction"]),
                qber_floor=None if q["qber_floor"] is None else float(q["qber_floor"]),
                laser_fwhm=float(q["laser_fwhm_ps"]) / 1e12,
            )
        except ValueError as exc:
            errors.append(f"qkd: {exc}")
    if errors:
        raise ConfigError(errors)
    return FullConfig(
        detector=detector,
        source=source,
        qkd=qkd,
        run=doc["run"],
        chain=doc["chain"],
        tcspc=doc["tcspc"],
        sweeps=doc["sweeps"],
        stability=doc["stability"],
        merged=doc,
    )


def load_config(path=None) -> FullConfig:
    """Read, merge over defaults, validate (all errors at once), and build.

    `path=None` yields the pure defaults. File problems raise ConfigError
    naming the path; validation problems raise ConfigError listing every
    failed field.
    """
    override = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                override = json.load(fh)
        except FileNotFoundError:
            raise ConfigError([f"config file not found: {path}"]) from None
        except OSError as exc:
            raise ConfigError([f"config file unreadable: {path} ({exc})"]) from None
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config file is not valid JSON: {path} ({exc})"]) from None
        if not isinstance(override, dict):
            raise ConfigError([f"config root must be a JSON object: {path}"])
    merged = deep_merge(default_config(), override)
    errors = validate_config(merged)
    if errors:
        raise ConfigError(errors)
    return _build(merged)


def grid_values(grid: dict) -> list[float]:
    """Inclusive arithmetic grid; endpoint kept when step divides the span."""
    start, stop, step = grid["start"], grid["stop"], grid["step"]
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(max(1, n))]


def schema_text() -> str:
    """The JSON Schema document shipped with the package."""
    return (
        resources.files("sinegate").joinpath("config_schema.json").read_text("utf-8")
    )
