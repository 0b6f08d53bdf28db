"""Statistical model of a sine-gated InGaAs avalanche photodiode.

Calibrated laws, each usable on its own:

* `GateConfig` / `gate_profile`: Gaussian temporal sensitivity window,
  periodic with the gate clock (default: 130 ps FWHM every 800 ps, peak
  detection efficiency 0.10).
* `BiasEfficiencyLaw`: linear peak-efficiency vs. bias anchored at
  0.10 @ 53.5 V, zero at/below breakdown.
* `TemperatureDarkLaw`: per-gate dark-avalanche probability vs. temperature,
  log-linear between table anchors.
* `JitterModel`: Gaussian timing core (sigma ~ 29.7 ps, i.e. 70 ps FWHM) plus
  a small probability that the discriminated time slips uniformly into one
  of the next few gates (the "tail").
* `AfterpulseModel`: expected-value carrier trapping; every avalanche fills
  `trap_fill_per_detection` traps which release exponentially and can
  retrigger later gates.

`DetectorParams` bundles the laws with the operating point (bias voltage,
temperature) and serializes to/from JSON with units in the field names.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ModelRangeError",
    "GateConfig",
    "BiasEfficiencyLaw",
    "TemperatureDarkLaw",
    "JitterModel",
    "AfterpulseModel",
    "DetectorParams",
    "gate_profile",
    "efficiency_at_bias",
    "dark_prob",
    "sample_detection_time",
    "sample_detection_times",
    "afterpulse_prob",
    "FWHM_TO_SIGMA",
    "DEFAULT_DARK_TABLE",
]

# FWHM = 2*sqrt(2*ln 2) * sigma for a Gaussian.
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class ModelRangeError(ValueError):
    """An input lies outside the calibrated range of a model law."""


@dataclass(frozen=True)
class GateConfig:
    """Periodic Gaussian sensitivity window of the gated diode."""

    gate_frequency: float = 1.25e9
    gate_fwhm: float = 130e-12
    delay_step: float = 10e-12
    peak_efficiency: float = 0.10

    def __post_init__(self) -> None:
        if not (np.isfinite(self.gate_frequency) and self.gate_frequency > 0):
            raise ValueError("gate_frequency must be positive")
        period = 1.0 / self.gate_frequency
        if not (np.isfinite(self.gate_fwhm) and 0 < self.gate_fwhm < period):
            raise ValueError(
                f"gate_fwhm must be in (0, {period}) for a {self.gate_frequency} Hz gate"
            )
        if not (np.isfinite(self.delay_step) and self.delay_step > 0):
            raise ValueError("delay_step must be positive")
        if not (0.0 <= self.peak_efficiency <= 1.0):
            raise ValueError("peak_efficiency must be in [0, 1]")

    @property
    def gate_period(self) -> float:
        return 1.0 / self.gate_frequency


def gate_profile(cfg: GateConfig, delay) -> np.ndarray | float:
    """Detection efficiency at a photon-vs-gate delay, periodic in the gate clock.

    Gaussian with the configured FWHM, maximum `peak_efficiency` at zero
    delay (and every whole gate period). Accepts scalars or arrays.
    """
    delay = np.asarray(delay, dtype=float)
    if not np.all(np.isfinite(delay)):
        raise ValueError("delay must be finite")
    period = cfg.gate_period
    wrapped = delay - period * np.round(delay / period)
    value = cfg.peak_efficiency * np.exp(
        -4.0 * math.log(2.0) * (wrapped / cfg.gate_fwhm) ** 2
    )
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class BiasEfficiencyLaw:
    """Linear peak-efficiency law above breakdown, clamped to [0, 1]."""

    anchor_bias: float = 53.5
    anchor_efficiency: float = 0.10
    slope_per_volt: float = 0.05
    breakdown_bias: float = 51.5

    def __post_init__(self) -> None:
        if not (np.isfinite(self.anchor_bias) and np.isfinite(self.breakdown_bias)):
            raise ValueError("bias anchors must be finite")
        if not (0.0 <= self.anchor_efficiency <= 1.0):
            raise ValueError("anchor_efficiency must be in [0, 1]")
        if not (np.isfinite(self.slope_per_volt) and self.slope_per_volt > 0):
            raise ValueError("slope_per_volt must be positive")
        if self.breakdown_bias >= self.anchor_bias and self.anchor_efficiency > 0:
            raise ValueError("breakdown_bias must lie below the anchor bias")


def efficiency_at_bias(law: BiasEfficiencyLaw, bias: float) -> float:
    """Peak efficiency at a bias voltage: 0 at/below breakdown, else linear, clamped."""
    if not np.isfinite(bias):
        raise ValueError("bias must be finite")
    if bias <= law.breakdown_bias:
        return 0.0
    value = law.anchor_efficiency + law.slope_per_volt * (bias - law.anchor_bias)
    return float(min(1.0, max(0.0, value)))


# Anchors: quoted operating points at -43 C (6e-7), -35 C (7e-7) and +20 C
# (1.5e-5); held flat below -43 C. Intermediate points are implementer-digitized
# (non-normative) and only shape the interpolation between the quoted anchors.
DEFAULT_DARK_TABLE: tuple[tuple[float, float], ...] = (
    (-45.0, 6e-7),
    (-43.0, 6e-7),
    (-35.0, 7e-7),
    (-25.0, 1.2e-6),
    (-15.0, 2.1e-6),
    (-5.0, 3.8e-6),
    (5.0, 6.6e-6),
    (15.0, 1.1e-5),
    (20.0, 1.5e-5),
)


@dataclass(frozen=True)
class TemperatureDarkLaw:
    """Dark-avalanche probability per gate vs. temperature (log-linear between anchors)."""

    table: tuple[tuple[float, float], ...] = DEFAULT_DARK_TABLE

    def __post_init__(self) -> None:
        table = tuple((float(t), float(p)) for t, p in self.table)
        if len(table) < 2:
            raise ValueError("dark table needs at least two anchors")
        temps = [t for t, _ in table]
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise ValueError("dark table temperatures must be strictly increasing")
        if any(not (0.0 < p < 1.0) for _, p in table):
            raise ValueError("dark table probabilities must be in (0, 1)")
        if temps[0] > -45.0 or temps[-1] < 20.0:
            raise ValueError("dark table must cover [-45, +20] C")
        object.__setattr__(self, "table", table)

    @property
    def temperatures(self) -> np.ndarray:
        return np.asarray([t for t, _ in self.table])

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray([p for _, p in self.table])


def dark_prob(law: TemperatureDarkLaw, temperature_c: float) -> float:
    """Per-gate dark probability at a temperature inside the table range.

    Interpolation is linear in log(probability) vs. temperature, so table
    anchors reproduce exactly. Extrapolation is refused.
    """
    if not np.isfinite(temperature_c):
        raise ValueError("temperature must be finite")
    temps = law.temperatures
    if temperature_c < temps[0] or temperature_c > temps[-1]:
        raise ModelRangeError(
            f"temperature {temperature_c} C outside calibrated range "
            f"[{temps[0]}, {temps[-1]}] C"
        )
    hit = np.nonzero(temps == temperature_c)[0]
    if hit.size:  # anchors reproduce bit-exactly, not through log round-trip
        return float(law.probabilities[hit[0]])
    log_p = np.interp(temperature_c, temps, np.log(law.probabilities))
    return float(np.exp(log_p))


@dataclass(frozen=True)
class JitterModel:
    """Discriminated-time statistics around the gate center.

    With probability 1-tail_fraction the time is gate center + N(0, sigma);
    with probability tail_fraction the detection slips into one of the next
    `tail_span_gates` gates (uniformly chosen), with the same Gaussian spread
    around that gate's center.
    """

    sigma: float = 70e-12 * FWHM_TO_SIGMA
    tail_fraction: float = 0.024
    tail_span_gates: int = 3

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError("sigma must be >= 0")
        if not (0.0 <= self.tail_fraction < 1.0):
            raise ValueError("tail_fraction must be in [0, 1)")
        if not (isinstance(self.tail_span_gates, int) and self.tail_span_gates >= 1):
            raise ValueError("tail_span_gates must be a positive integer")

    @property
    def fwhm(self) -> float:
        return self.sigma / FWHM_TO_SIGMA


def sample_detection_times(
    j: JitterModel,
    gate_indices: np.ndarray,
    gate_period: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Vector version of `sample_detection_time`; returns (times, in_tail).

    Draw protocol is fixed (tail uniforms, Gaussian offsets, tail gate
    choices, in that order) so a given generator state maps to one output.
    """
    gate_indices = np.asarray(gate_indices)
    if not (np.isfinite(gate_period) and gate_period > 0):
        raise ValueError("gate_period must be positive")
    n = gate_indices.size
    u = rng.random(n)
    z = rng.standard_normal(n)
    k = rng.integers(1, j.tail_span_gates + 1, size=n)
    in_tail = u < j.tail_fraction
    offset_gates = np.where(in_tail, k, 0)
    times = (gate_indices + offset_gates) * gate_period + j.sigma * z
    return times, in_tail


def sample_detection_time(
    j: JitterModel,
    gate_index: int,
    gate_period: float,
    rng: np.random.Generator,
) -> tuple[float, bool]:
    """Discriminated time for one avalanche in gate `gate_index`."""
    times, in_tail = sample_detection_times(j, np.asarray([gate_index]), gate_period, rng)
    return float(times[0]), bool(in_tail[0])


@dataclass(frozen=True)
class AfterpulseModel:
    """Expected-value trap population model for afterpulsing.

    Not calibrated to any measured device: defaults exist to make the
    correlation-based diagnostics exercisable. With the default 0.8 ns gate
    period the default (fill, lifetime, trigger) combination is strongly
    self-sustaining; pick a shorter lifetime or smaller trigger probability
    for realistic chains. Disabled unless `enabled` is set.
    """

    trap_fill_per_detection: float = 0.1
    release_lifetime: float = 1e-6
    trigger_prob_per_gate: float = 1e-2
    enabled: bool = False

    def __post_init__(self) -> None:
        if not (np.isfinite(self.trap_fill_per_detection) and self.trap_fill_per_detection >= 0):
            raise ValueError("trap_fill_per_detection must be >= 0")
        if not (np.isfinite(self.release_lifetime) and self.release_lifetime > 0):
            raise ValueError("release_lifetime must be positive")
        if not (0.0 <= self.trigger_prob_per_gate <= 1.0):
            raise ValueError("trigger_prob_per_gate must be in [0, 1]")


def afterpulse_prob(m: AfterpulseModel, trap_population: float, dt_since_fill: float) -> float:
    """Afterpulse probability for one gate, `dt_since_fill` after the last fill."""
    if not (np.isfinite(trap_population) and trap_population >= 0):
        raise ValueError("trap_population must be >= 0")
    if not (np.isfinite(dt_since_fill) and dt_since_fill >= 0):
        raise ValueError("dt_since_fill must be >= 0")
    p = m.trigger_prob_per_gate * trap_population * math.exp(
        -dt_since_fill / m.release_lifetime
    )
    return float(min(1.0, max(0.0, p)))


@dataclass(frozen=True)
class DetectorParams:
    """Calibrated device model plus operating point.

    `dark_law=None` switches the dark channel off entirely (useful for
    photon-only studies); otherwise the per-gate dark probability comes from
    the temperature law at `temperature_c`.
    """

    gate: GateConfig = field(default_factory=GateConfig)
    bias_law: BiasEfficiencyLaw = field(default_factory=BiasEfficiencyLaw)
    dark_law: TemperatureDarkLaw | None = field(default_factory=TemperatureDarkLaw)
    jitter: JitterModel = field(default_factory=JitterModel)
    afterpulse: AfterpulseModel = field(default_factory=AfterpulseModel)
    bias: float = 53.5
    temperature_c: float = -43.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.bias):
            raise ValueError("bias must be finite")
        if not np.isfinite(self.temperature_c):
            raise ValueError("temperature_c must be finite")

    def peak_efficiency_at_bias(self) -> float:
        return efficiency_at_bias(self.bias_law, self.bias)

    def effective_efficiency(self, alignment_delay: float = 0.0) -> float:
        """Gate profile at the alignment delay, rescaled by the bias law.

        The bias law sets the profile peak: at the anchor bias the peak is
        `gate.peak_efficiency`, other biases scale the whole profile.
        """
        profile = gate_profile(self.gate, alignment_delay)
        if self.gate.peak_efficiency == 0.0:
            return 0.0
        return float(profile * self.peak_efficiency_at_bias() / self.gate.peak_efficiency)

    def dark_prob_per_gate(self) -> float:
        if self.dark_law is None:
            return 0.0
        return dark_prob(self.dark_law, self.temperature_c)

    def with_operating_point(self, *, bias=None, temperature_c=None) -> "DetectorParams":
        changes = {}
        if bias is not None:
            changes["bias"] = float(bias)
        if temperature_c is not None:
            changes["temperature_c"] = float(temperature_c)
        return replace(self, **changes)

    # JSON round trip. Field names carry explicit units.
    def to_json_dict(self) -> dict:
        return {
            "gate": {
                "gate_frequency_hz": self.gate.gate_frequency,
                "gate_fwhm_ps": self.gate.gate_fwhm * 1e12,
                "delay_step_ps": self.gate.delay_step * 1e12,
                "peak_efficiency": self.gate.peak_efficiency,
            },
            "bias_law": {
                "anchor_bias_v": self.bias_law.anchor_bias,
                "anchor_efficiency": self.bias_law.anchor_efficiency,
                "slope_per_v": self.bias_law.slope_per_volt,
                "breakdown_bias_v": self.bias_law.breakdown_bias,
            },
            "dark_table_c_prob": None
            if self.dark_law is None
            else [[t, p] for t, p in self.dark_law.table],
            "jitter": {
                "sigma_ps": self.jitter.sigma * 1e12,
                "tail_fraction": self.jitter.tail_fraction,
                "tail_span_gates": self.jitter.tail_span_gates,
            },
            "afterpulse": {
                "trap_fill_per_detection": self.afterpulse.trap_fill_per_detection,
                "release_lifetime_ns": self.afterpulse.release_lifetime * 1e9,
                "trigger_prob_per_gate": self.afterpulse.trigger_prob_per_gate,
                "enabled": self.afterpulse.enabled,
            },
            "operating": {
                "bias_v": self.bias,
                "temperature_c": self.temperature_c,
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DetectorParams":
        gate = doc["gate"]
        bias_law = doc["bias_law"]
        jitter = doc["jitter"]
        ap = doc["afterpulse"]
        operating = doc["operating"]
        dark_table = doc["dark_table_c_prob"]
        return cls(
            gate=GateConfig(
                gate_frequency=float(gate["gate_frequency_hz"]),
                gate_fwhm=float(gate["gate_fwhm_ps"]) / 1e12,
                delay_step=float(gate["delay_step_ps"]) / 1e12,
                peak_efficiency=float(gate["peak_efficiency"]),
            ),
            bias_law=BiasEfficiencyLaw(
                anchor_bias=float(bias_law["anchor_bias_v"]),
                anchor_efficiency=float(bias_law["anchor_efficiency"]),
                slope_per_volt=float(bias_law["slope_per_v"]),
                breakdown_bias=float(bias_law["breakdown_bias_v"]),
            ),
            dark_law=None
            if dark_table is None
            else TemperatureDarkLaw(tuple((float(t), float(p)) for t, p in dark_table)),
            jitter=JitterModel(
                sigma=float(jitter["sigma_ps"]) / 1e12,
                tail_fraction=float(jitter["tail_fraction"]),
                tail_span_gates=int(jitter["tail_span_gates"]),
            ),
            afterpulse=AfterpulseModel(
                trap_fill_per_detection=float(ap["trap_fill_per_detection"]),
                release_lifetime=float(ap["release_lifetime_ns"]) / 1e9,
                trigger_prob_per_gate=float(ap["trigger_prob_per_gate"]),
                enabled=bool(ap["enabled"]),
            ),
            bias=float(operating["bias_v"]),
            temperature_c=float(operating["temperature_c"]),
        )

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "DetectorParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))
