"""Analog front end of a sine-gated avalanche photodiode receiver.

The processing chain modeled here: a large sinusoidal gate drives the diode;
capacitive coupling leaks a differentiated copy of the gate (the feedthrough)
into the readout; avalanche pulses ride on top of that feedthrough; a cascade
of identical low-pass filters removes the gate tone and its harmonics; a
level discriminator on the filtered trace timestamps the surviving avalanche
pulses.

Everything works on uniformly sampled voltage traces (`SampledWaveform`).
Filtering is done with a zero-phase Butterworth-magnitude mask in the FFT
domain, so applying one k-stage filter equals applying k one-stage filters
exactly (up to FFT round-off) and linearity is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "SampledWaveform",
    "AvalanchePulseShape",
    "FilterResponseSpec",
    "FilterContractReport",
    "DiscriminatorConfig",
    "synthesize_gate_train",
    "synthesize_feedthrough",
    "synthesize_avalanche",
    "apply_filter",
    "lowpass_design",
    "measured_filter_response",
    "verify_filter_contract",
    "power_spectrum",
    "discriminate",
    "SPECTRUM_FLOOR_DB",
]

# Default sampling grid for self tests: 25 ps = 40 GS/s, 16 samples per 2.5 GHz,
# enough to represent content up to the 4 GHz verification edge with margin.
DEFAULT_DT = 25e-12

# Bins with no power are clamped here instead of -inf.
SPECTRUM_FLOOR_DB = -200.0


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """A uniformly sampled voltage trace.

    Parameters
    ----------
    samples : ndarray
        Voltage samples in volts. Must be 1-D, non-empty, finite.
    dt : float
        Sample spacing in seconds, > 0.
    t0 : float
        Absolute time of the first sample in seconds.
    """

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not np.isfinite(self.t0):
            raise ValueError(f"t0 must be finite, got {self.t0}")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return int(self.samples.size)

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    @property
    def duration(self) -> float:
        return self.n * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def _check_same_grid(self, other: "SampledWaveform") -> None:
        if self.n != other.n or self.dt != other.dt or self.t0 != other.t0:
            raise ValueError("waveforms are on different sampling grids")

    def __add__(self, other: "SampledWaveform") -> "SampledWaveform":
        self._check_same_grid(other)
        return SampledWaveform(self.samples + other.samples, self.dt, self.t0)

    def __sub__(self, other: "SampledWaveform") -> "SampledWaveform":
        self._check_same_grid(other)
        return SampledWaveform(self.samples - other.samples, self.dt, self.t0)

    def __mul__(self, scale: float) -> "SampledWaveform":
        return SampledWaveform(self.samples * float(scale), self.dt, self.t0)

    __rmul__ = __mul__

    def shifted(self, offset: float) -> "SampledWaveform":
        """Same samples, time axis moved by `offset` seconds."""
        return SampledWaveform(self.samples, self.dt, self.t0 + offset)

    def to_csv(self, path) -> None:
        """Write `time_s,volts` rows with a `# dt=<sec> n=<count>` header line."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# dt={float(self.dt)!r} n={self.n}\n")
            fh.write("time_s,volts\n")
            for t, v in zip(self.times, self.samples):
                fh.write(f"{float(t)!r},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "SampledWaveform":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("#"):
                raise ValueError("missing waveform header line")
            fields = dict(
                item.split("=", 1) for item in header.lstrip("#").split() if "=" in item
            )
            try:
                dt = float(fields["dt"])
                n = int(fields["n"])
            except (KeyError, ValueError) as exc:
                raise ValueError(f"bad waveform header {header!r}") from exc
            columns = fh.readline().strip()
            if columns != "time_s,volts":
                raise ValueError(f"bad column header {columns!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.shape[0] != n:
            raise ValueError(f"header says n={n} but file has {data.shape[0]} rows")
        return cls(data[:, 1], dt, t0=float(data[0, 0]))


@dataclass(frozen=True)
class AvalanchePulseShape:
    """Shape of a discriminator-bound avalanche pulse after the analog chain.

    The pulse is negative going: an instantaneous drop to `peak_amplitude`
    followed by a single-exponential recovery whose 10-90 % fall time is
    `fall_time` (time constant fall_time/ln 9). Amplitude varies from pulse
    to pulse with a truncated normal (never crossing zero); the recovery
    time constant varies with a log-normal factor of median 1.
    """

    peak_amplitude: float = -32e-3
    fall_time: float = 1.8e-9
    amplitude_jitter: float = 0.2
    width_jitter: float = 0.15

    def __post_init__(self) -> None:
        if not (np.isfinite(self.peak_amplitude) and self.peak_amplitude < 0):
            raise ValueError("peak_amplitude must be negative (negative-going pulse)")
        if not (np.isfinite(self.fall_time) and self.fall_time > 0):
            raise ValueError("fall_time must be positive")
        if not (0 <= self.amplitude_jitter < 1):
            raise ValueError("amplitude_jitter must be in [0, 1)")
        if not (0 <= self.width_jitter < 1):
            raise ValueError("width_jitter must be in [0, 1)")

    @property
    def fall_tau(self) -> float:
        """Exponential time constant giving the configured 10-90 % fall."""
        return self.fall_time / math.log(9.0)


@dataclass(frozen=True)
class FilterResponseSpec:
    """Response contract for one low-pass stage of the extraction cascade.

    All rejections are positive attenuation magnitudes in dB. The passband
    (DC to `passband_edge`) must stay within +-`passband_ripple_db` of unity;
    the gate tone must be suppressed by at least `rejection_at_gate_db`, by
    `rejection_band_floor_db` everywhere within `rejection_band_halfwidth`
    of the gate frequency, and by `rejection_to_4ghz_db` from the gate
    frequency up to 4 GHz.
    """

    gate_frequency: float = 1.25e9
    passband_edge: float = 600e6
    passband_ripple_db: float = 1.0
    rejection_at_gate_db: float = 54.0
    rejection_band_floor_db: float = 50.0
    rejection_band_halfwidth: float = 50e6
    rejection_to_4ghz_db: float = 40.0

    def __post_init__(self) -> None:
        for name in (
            "gate_frequency",
            "passband_edge",
            "passband_ripple_db",
            "rejection_at_gate_db",
            "rejection_band_floor_db",
            "rejection_band_halfwidth",
            "rejection_to_4ghz_db",
        ):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if self.passband_edge >= self.gate_frequency:
            raise ValueError("passband_edge must lie below the gate frequency")
        if self.rejection_band_halfwidth >= self.gate_frequency - self.passband_edge:
            raise ValueError("rejection band overlaps the passband")


def _butterworth_attenuation_db(f: np.ndarray | float, fc: float, order: int):
    return 10.0 * np.log10(1.0 + (np.asarray(f, dtype=float) / fc) ** (2 * order))


@lru_cache(maxsize=32)
def _design_lowpass(spec: FilterResponseSpec) -> tuple[int, float]:
    """Pick the smallest Butterworth order meeting `spec`, return (order, fc).

    fc is placed so the magnitude is exactly -passband_ripple_db at the
    passband edge; the response is monotone, so only the passband edge and
    the lower edge of the rejection band need checking.
    """
    band_lo = spec.gate_frequency - spec.rejection_band_halfwidth
    for order in range(2, 41):
        # |H(edge)| = -ripple  =>  (edge/fc)^(2n) = 10^(ripple/10) - 1
        fc = spec.passband_edge / (10 ** (spec.passband_ripple_db / 10.0) - 1.0) ** (
            1.0 / (2 * order)
        )
        ok = (
            _butterworth_attenuation_db(band_lo, fc, order) >= spec.rejection_band_floor_db
            and _butterworth_attenuation_db(spec.gate_frequency, fc, order)
            >= spec.rejection_at_gate_db
            and _butterworth_attenuation_db(spec.gate_frequency, fc, order)
            >= spec.rejection_to_4ghz_db
        )
        if ok:
            return order, fc
    raise ValueError(f"no Butterworth order up to 40 satisfies {spec}")


def lowpass_design(spec: FilterResponseSpec) -> tuple[int, float]:
    """(Butterworth order, cutoff Hz) realizing `spec`; see apply_filter."""
    return _design_lowpass(spec)


def synthesize_gate_train(
    freq: float,
    amplitude_pp: float,
    duration: float,
    dt: float = DEFAULT_DT,
    delay: float = 0.0,
) -> SampledWaveform:
    """Sinusoidal gate train: 0.5*amplitude_pp*sin(2*pi*freq*(t + delay)).

    `delay` advances the phase by 2*pi*freq*delay, so a delay of one full
    period reproduces the undelayed train. Requires dt <= 1/(8*freq) so the
    sine is comfortably oversampled, and at least one full period.
    """
    if not (np.isfinite(freq) and freq > 0):
        raise ValueError(f"freq must be positive, got {freq}")
    if not (np.isfinite(amplitude_pp) and amplitude_pp >= 0):
        raise ValueError(f"amplitude_pp must be >= 0, got {amplitude_pp}")
    if not (np.isfinite(duration) and duration > 0):
        raise ValueError(f"duration must be positive, got {duration}")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive, got {dt}")
    if not np.isfinite(delay):
        raise ValueError("delay must be finite")
    if dt > 1.0 / (8.0 * freq):
        raise ValueError(
            f"dt={dt} undersamples a {freq} Hz gate; need dt <= {1.0 / (8.0 * freq)}"
        )
    if duration < 1.0 / freq:
        raise ValueError("duration must cover at least one gate period")
    n = int(round(duration / dt))
    t = dt * np.arange(n)
    samples = 0.5 * amplitude_pp * np.sin(2.0 * np.pi * freq * (t + delay))
    return SampledWaveform(samples, dt)


def _dominant_frequency(w: SampledWaveform) -> float | None:
    """Frequency of the strongest non-DC FFT bin, or None for a silent trace."""
    spectrum = np.fft.rfft(w.samples)
    mag = np.abs(spectrum)
    if mag.size < 2:
        return None
    mag[0] = 0.0
    k = int(np.argmax(mag))
    if mag[k] == 0.0:
        return None
    return k / (w.n * w.dt)


def synthesize_feedthrough(
    gate: SampledWaveform, coupling_gain: float = 0.1
) -> SampledWaveform:
    """Capacitively coupled copy of the gate: d/dt, unity gain at the gate tone.

    The derivative is taken in the FFT domain and normalized by the dominant
    frequency of the input, so a pure sine maps to a same-amplitude cosine
    (+90 degrees) times `coupling_gain`. A silent input maps to a silent
    output. Default gain 0.1 makes the unfiltered feedthrough of an 8 Vpp
    gate (400 mV amplitude) exceed the nominal 32 mV avalanche peak by more
    than an order of magnitude.
    """
    if not (np.isfinite(coupling_gain) and coupling_gain >= 0):
        raise ValueError(f"coupling_gain must be >= 0, got {coupling_gain}")
    f0 = _dominant_frequency(gate)
    if f0 is None or coupling_gain == 0.0:
        return SampledWaveform(np.zeros(gate.n), gate.dt, gate.t0)
    freqs = np.fft.rfftfreq(gate.n, gate.dt)
    response = 1j * freqs / f0
    samples = np.fft.irfft(np.fft.rfft(gate.samples) * response, n=gate.n)
    return SampledWaveform(coupling_gain * samples, gate.dt, gate.t0)


def synthesize_avalanche(
    shape: AvalanchePulseShape,
    grid: SampledWaveform,
    t_event: float,
    rng: np.random.Generator,
) -> SampledWaveform:
    """One avalanche pulse on the time base of `grid` (samples of `grid` ignored).

    Draw order is fixed (amplitude, then width factor) so a given generator
    state always produces the same pulse. The amplitude is redrawn until
    negative, which truncates the normal at zero. t_event must lie within
    the grid span; a pulse at the very start is simply truncated.
    """
    if not (grid.t0 <= t_event <= grid.t0 + grid.duration):
        raise ValueError(
            f"t_event={t_event} outside waveform span "
            f"[{grid.t0}, {grid.t0 + grid.duration}]"
        )
    if shape.amplitude_jitter > 0:
        sigma = abs(shape.peak_amplitude) * shape.amplitude_jitter
        amplitude = rng.normal(shape.peak_amplitude, sigma)
        while amplitude >= 0.0:
            amplitude = rng.normal(shape.peak_amplitude, sigma)
    else:
        amplitude = shape.peak_amplitude
    width_factor = math.exp(rng.normal(0.0, shape.width_jitter)) if shape.width_jitter > 0 else 1.0
    tau = shape.fall_tau * width_factor
    dt_from_event = grid.times - t_event
    decay = np.exp(-np.maximum(dt_from_event, 0.0) / tau)
    samples = np.where(dt_from_event >= 0.0, amplitude * decay, 0.0)
    return SampledWaveform(samples, grid.dt, grid.t0)


def apply_filter(
    w: SampledWaveform, spec: FilterResponseSpec, stages: int = 1
) -> SampledWaveform:
    """Run `w` through `stages` identical low-pass stages meeting `spec`.

    Zero-phase FFT-domain mask; k stages raise the stage magnitude to the
    k-th power, so cascading is exact. The sample rate must be able to
    represent the gate frequency.
    """
    if stages < 1:
        raise ValueError(f"stages must be >= 1, got {stages}")
    if w.sample_rate < 2.0 * spec.gate_frequency:
        raise ValueError(
            f"sample rate {w.sample_rate:.3g} Hz cannot represent the "
            f"{spec.gate_frequency:.3g} Hz gate"
        )
    order, fc = _design_lowpass(spec)
    freqs = np.fft.rfftfreq(w.n, w.dt)
    magnitude = (1.0 + (freqs / fc) ** (2 * order)) ** -0.5
    filtered = np.fft.irfft(np.fft.rfft(w.samples) * magnitude**stages, n=w.n)
    return SampledWaveform(filtered, w.dt, w.t0)


def measured_filter_response(
    spec: FilterResponseSpec,
    freqs,
    dt: float = DEFAULT_DT,
    stages: int = 1,
    n_samples: int = 1 << 16,
) -> np.ndarray:
    """Swept-sine gain measurement through `apply_filter`.

    Each requested frequency is snapped to an FFT bin (no leakage), a
    unit-amplitude tone is synthesized, filtered, and the RMS gain is
    converted to dB. Returns an array of (frequency_hz, gain_db) rows.
    This measures the behavior of the filtering path itself rather than
    evaluating the design formula.
    """
    df = 1.0 / (n_samples * dt)
    rows = []
    for f in np.asarray(freqs, dtype=float):
        k = max(1, int(round(f / df)))
        f_snapped = k * df
        tone = SampledWaveform(np.sin(2.0 * np.pi * f_snapped * dt * np.arange(n_samples)), dt)
        out = apply_filter(tone, spec, stages=stages)
        gain = np.sqrt(np.mean(out.samples**2) / np.mean(tone.samples**2))
        rows.append((f_snapped, 20.0 * np.log10(max(gain, 1e-30))))
    return np.asarray(rows)


@dataclass(frozen=True)
class FilterContractReport:
    """Outcome of the built-in swept-sine verification of one filter stage."""

    response: np.ndarray  # (frequency_hz, gain_db) rows
    passband_ok: bool
    gate_ok: bool
    band_ok: bool
    wideband_ok: bool
    worst_passband_gain_db: float
    gate_attenuation_db: float
    worst_band_attenuation_db: float
    worst_wideband_attenuation_db: float

    @property
    def ok(self) -> bool:
        return self.passband_ok and self.gate_ok and self.band_ok and self.wideband_ok


def verify_filter_contract(
    spec: FilterResponseSpec,
    dt: float = DEFAULT_DT,
    n_samples: int = 1 << 16,
) -> FilterContractReport:
    """Sweep one stage from 100 MHz below the passband up to 4 GHz and check `spec`.

    Grid: a dozen passband tones up to the edge, 5 MHz steps across the
    rejection band, 50 MHz steps from the gate frequency to 4 GHz.
    """
    if dt > 1.0 / 8e9:
        raise ValueError("need at least 8 GS/s to verify the response up to 4 GHz")
    df = 1.0 / (n_samples * dt)

    def snap_down(f):
        return max(1, math.floor(f / df)) * df

    def snap_up(f):
        return math.ceil(f / df) * df

    passband = [snap_down(f) for f in np.linspace(0.05 * spec.passband_edge, spec.passband_edge, 12)]
    band_lo = spec.gate_frequency - spec.rejection_band_halfwidth
    band_hi = spec.gate_frequency + spec.rejection_band_halfwidth
    band = [min(snap_up(f), math.floor(band_hi / df) * df)
            for f in np.arange(band_lo, band_hi + 2.5e6, 5e6)]
    wideband = [snap_up(f) for f in np.arange(spec.gate_frequency, 4e9 + 1.0, 50e6)]
    gate = [snap_up(spec.gate_frequency)]

    all_freqs = sorted(set(passband + band + wideband + gate))
    response = measured_filter_response(spec, all_freqs, dt=dt, stages=1, n_samples=n_samples)
    gains = dict(zip(response[:, 0], response[:, 1]))

    worst_pass = min(gains[f] for f in set(passband))
    passband_ok = all(abs(gains[f]) <= spec.passband_ripple_db for f in set(passband))
    gate_att = -gains[gate[0]]
    gate_ok = gate_att >= spec.rejection_at_gate_db
    worst_band = min(-gains[f] for f in set(band))
    band_ok = worst_band >= spec.rejection_band_floor_db
    worst_wide = min(-gains[f] for f in set(wideband))
    wideband_ok = worst_wide >= spec.rejection_to_4ghz_db

    return FilterContractReport(
        response=response,
        passband_ok=passband_ok,
        gate_ok=gate_ok,
        band_ok=band_ok,
        wideband_ok=wideband_ok,
        worst_passband_gain_db=worst_pass,
        gate_attenuation_db=gate_att,
        worst_band_attenuation_db=worst_band,
        worst_wideband_attenuation_db=worst_wide,
    )


def power_spectrum(w: SampledWaveform) -> tuple[np.ndarray, np.ndarray]:
    """One-sided power spectrum in dB, DC to Nyquist.

    Normalized so a unit DC level reports 0 dB and a unit-amplitude sine
    reports -3.01 dB; the linear bin powers sum to the mean square of the
    samples (Parseval). Empty bins are clamped at SPECTRUM_FLOOR_DB.
    """
    if w.n < 2:
        raise ValueError("power_spectrum needs at least 2 samples")
    spectrum = np.fft.rfft(w.samples) / w.n
    power = np.abs(spectrum) ** 2
    power[1:] *= 2.0
    if w.n % 2 == 0:
        power[-1] /= 2.0  # Nyquist bin is not duplicated
    freqs = np.fft.rfftfreq(w.n, w.dt)
    floor = 10.0 ** (SPECTRUM_FLOOR_DB / 10.0)
    power_db = 10.0 * np.log10(np.maximum(power, floor))
    return freqs, power_db


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Level discriminator: threshold volts, polarity, dead time after a hit."""

    threshold: float
    polarity: str = "negative-going"
    refractory_time: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        normalized = {"negative": "negative-going", "positive": "positive-going"}.get(
            self.polarity, self.polarity
        )
        if normalized not in ("negative-going", "positive-going"):
            raise ValueError(f"unknown polarity {self.polarity!r}")
        object.__setattr__(self, "polarity", normalized)
        if not (np.isfinite(self.refractory_time) and self.refractory_time >= 0):
            raise ValueError("refractory_time must be >= 0")


def discriminate(w: SampledWaveform, cfg: DiscriminatorConfig) -> np.ndarray:
    """Interpolated threshold-crossing times, refractory-filtered.

    A negative-going crossing is sample[i-1] > threshold >= sample[i]; the
    crossing instant is found by linear interpolation between the two
    samples. Crossings closer than `refractory_time` to the last reported
    one are swallowed. Times are absolute (t0-referenced), so shifting the
    waveform in time shifts the output by the same amount.
    """
    s = w.samples if cfg.polarity == "negative-going" else -w.samples
    thr = cfg.threshold if cfg.polarity == "negative-going" else -cfg.threshold
    above = s > thr
    idx = np.nonzero(above[:-1] & ~above[1:])[0] + 1
    if idx.size == 0:
        return np.empty(0)
    frac = (thr - s[idx - 1]) / (s[idx] - s[idx - 1])
    times = w.t0 + (idx - 1 + frac) * w.dt
    if cfg.refractory_time == 0.0:
        return times
    kept = [times[0]]
    for t in times[1:]:
        if t - kept[-1] > cfg.refractory_time:
            kept.append(t)
    return np.asarray(kept)
