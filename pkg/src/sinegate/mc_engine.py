"""Gate-clocked Monte Carlo engine for a sine-gated avalanche photodiode.

The simulation advances gate by gate (no waveforms): each gate can host at
most one avalanche, drawn from three independent per-gate processes:

* photon click with probability 1 - exp(-eta_eff * mu_gate),
* afterpulse click per the expected-value trap state,
* dark click with the per-gate dark probability.

When several fire in one gate the record is labeled by priority
photon > afterpulse > dark (the discriminator cannot resolve two avalanches
within one gate). Discriminated times come from the jitter model; a record
whose time slipped into a subsequent gate is labeled "tail". A hold-off of
`holdoff_gates` is applied afterwards: by default a record is accepted iff
its gate index exceeds the last accepted record's by more than the hold-off.

Determinism
-----------
Gates are processed in absolute chunks of 2**20. Chunk ``i`` draws all its
photon/dark candidates and their detection times from
``SeedSequence((master_seed, 1, i))``, so the candidate stream is identical
no matter how many workers produce it or in which order. Afterpulse chains
(which couple gates across chunk boundaries) and their detection times are
generated in a single sequential pass from ``SeedSequence((master_seed, 2))``.
Per-chunk draw order is fixed: (cow bits), photon uniforms, dark binomial
count, dark positions, tail uniforms, Gaussian offsets, tail gate choices,
laser offsets. Identical RunConfig therefore yields identical records,
independent of the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from .detector_model import (
    FWHM_TO_SIGMA,
    DetectorParams,
    sample_detection_times,
)

__all__ = [
    "SourceConfig",
    "RunConfig",
    "RunResult",
    "DetectionRecord",
    "Histogram",
    "RECORD_DTYPE",
    "ORIGIN_NAMES",
    "run_simulation",
    "apply_holdoff",
    "tcspc_histogram",
    "estimate_fwhm",
    "deconvolve_jitter",
    "inter_detection_correlation",
    "subsequent_gate_fraction",
    "geometric_lag_gof",
    "short_lag_excess_pvalue",
    "records_to_csv",
]

CHUNK_GATES = 1 << 20

ORIGIN_PHOTON, ORIGIN_DARK, ORIGIN_AFTERPULSE, ORIGIN_TAIL = 0, 1, 2, 3
ORIGIN_NAMES = ("photon", "dark", "afterpulse", "tail")

RECORD_DTYPE = np.dtype(
    [
        ("gate_index", np.int64),
        ("time", np.float64),
        ("origin", np.uint8),
        ("accepted", np.bool_),
    ]
)


@dataclass(frozen=True)
class DetectionRecord:
    """One discriminated avalanche; `time` is seconds from the gate-0 center."""

    gate_index: int
    time: float
    origin: str
    accepted: bool = False

    def __post_init__(self) -> None:
        if self.origin not in ORIGIN_NAMES:
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.gate_index < 0:
            raise ValueError("gate_index must be >= 0")


@dataclass(frozen=True)
class SourceConfig:
    """What illuminates the detector.

    kind:
      * "pulsed-trigger": one optical pulse (mean `mean_photons`) every
        gate_frequency/trigger_rate gates, e.g. 31.25 MHz -> every 40th gate.
      * "cw-dark-only":   no light at all.
      * "cow-ppm":        one pulse per bit in one of two consecutive gates
        (time bins); `trigger_rate` is the bit rate (two gates per bit) and
        `extinction_db` sets the residual intensity in the empty bin.
    `mean_photons` is per pulse (pulsed) or per bit (cow), at the detector.
    """

    kind: str
    trigger_rate: float = 31.25e6
    mean_photons: float = 0.1
    laser_fwhm: float = 30e-12
    alignment_delay: float = 0.0
    extinction_db: float = 25.0

    def __post_init__(self) -> None:
        if self.kind not in ("pulsed-trigger", "cw-dark-only", "cow-ppm"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not (np.isfinite(self.trigger_rate) and self.trigger_rate > 0):
            raise ValueError("trigger_rate must be positive")
        if not (np.isfinite(self.mean_photons) and self.mean_photons >= 0):
            raise ValueError("mean_photons must be >= 0")
        if not (np.isfinite(self.laser_fwhm) and self.laser_fwhm >= 0):
            raise ValueError("laser_fwhm must be >= 0")
        if not np.isfinite(self.alignment_delay):
            raise ValueError("alignment_delay must be finite")
        if not (np.isfinite(self.extinction_db) and self.extinction_db > 0):
            raise ValueError("extinction_db must be positive")

    @classmethod
    def pulsed(cls, mean_photons: float = 0.1, trigger_rate: float = 31.25e6,
               laser_fwhm: float = 30e-12, alignment_delay: float = 0.0) -> "SourceConfig":
        return cls("pulsed-trigger", trigger_rate=trigger_rate, mean_photons=mean_photons,
                   laser_fwhm=laser_fwhm, alignment_delay=alignment_delay)

    @classmethod
    def dark_only(cls) -> "SourceConfig":
        return cls("cw-dark-only", mean_photons=0.0)

    @classmethod
    def cow(cls, mean_photons_per_bit: float, bit_rate: float = 625e6,
            extinction_db: float = 25.0, laser_fwhm: float = 30e-12) -> "SourceConfig":
        return cls("cow-ppm", trigger_rate=bit_rate, mean_photons=mean_photons_per_bit,
                   laser_fwhm=laser_fwhm, extinction_db=extinction_db)


@dataclass(frozen=True)
class RunConfig:
    """One simulation run: how many gates, with what detector and source."""

    n_gates: int
    master_seed: int
    detector: DetectorParams = field(default_factory=DetectorParams)
    source: SourceConfig = field(default_factory=SourceConfig.dark_only)
    holdoff_gates: int = 10
    holdoff_anchor: str = "accepted"

    def __post_init__(self) -> None:
        if not (isinstance(self.n_gates, int) and self.n_gates >= 1):
            raise ValueError("n_gates must be a positive integer")
        if not (isinstance(self.master_seed, int) and 0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not (isinstance(self.holdoff_gates, int) and self.holdoff_gates >= 0):
            raise ValueError("holdoff_gates must be a non-negative integer")
        if self.holdoff_anchor not in ("accepted", "any"):
            raise ValueError("holdoff_anchor must be 'accepted' or 'any'")


@dataclass
class RunResult:
    """Records (sorted by gate index), summary counters, and cow bit values."""

    config: RunConfig
    records: np.ndarray
    counters: dict
    bits: np.ndarray | None = None

    @property
    def accepted(self) -> np.ndarray:
        return self.records[self.records["accepted"]]

    def to_detection_records(self) -> list[DetectionRecord]:
        return [
            DetectionRecord(int(r["gate_index"]), float(r["time"]),
                            ORIGIN_NAMES[int(r["origin"])], bool(r["accepted"]))
            for r in self.records
        ]


def _gates_per_trigger(cfg: RunConfig) -> int:
    """Integer number of gates per trigger/bit period; validates divisibility."""
    f_gate = cfg.detector.gate.gate_frequency
    ratio = f_gate / cfg.source.trigger_rate
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise ValueError(
            f"trigger rate {cfg.source.trigger_rate} Hz must divide the "
            f"{f_gate} Hz gate clock (got ratio {ratio})"
        )
    if cfg.source.kind == "cow-ppm" and m != 2:
        raise ValueError("cow-ppm needs exactly two gates (time bins) per bit")
    return m


def _unique_positions(rng: np.random.Generator, n_range: int, k: int) -> np.ndarray:
    """k distinct uniform gate offsets in [0, n_range); exact without-replacement law."""
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    pos = np.unique(rng.integers(0, n_range, size=k, dtype=np.int64))
    while pos.size < k:
        extra = rng.integers(0, n_range, size=k - pos.size, dtype=np.int64)
        pos = np.unique(np.concatenate([pos, extra]))
    return pos


def _simulate_chunk(cfg: RunConfig, chunk_index: int):
    """Photon/dark candidates for gates [chunk*C, min((chunk+1)*C, n)).

    Returns (gates, phys_origin, times, in_tail, bits_or_None); afterpulsing
    and hold-off are applied later in the sequential merge.
    """
    g0 = chunk_index * CHUNK_GATES
    n_local = min(CHUNK_GATES, cfg.n_gates - g0)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.master_seed, 1, chunk_index)))
    det = cfg.detector
    src = cfg.source
    period = det.gate.gate_period
    eta = det.effective_efficiency(src.alignment_delay)

    bits = None
    if src.kind == "pulsed-trigger":
        m = _gates_per_trigger(cfg)
        start = ((g0 + m - 1) // m) * m
        illuminated = np.arange(start, g0 + n_local, m, dtype=np.int64)
        p_click = 1.0 - math.exp(-eta * src.mean_photons)
        u = rng.random(illuminated.size)
        photon_gates = illuminated[u < p_click]
    elif src.kind == "cow-ppm":
        _gates_per_trigger(cfg)
        n_bits = (n_local + 1) // 2  # chunk starts are even, so bits align
        bits = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
        eps = 10.0 ** (-src.extinction_db / 10.0)
        p_pulse = 1.0 - math.exp(-eta * src.mean_photons / (1.0 + eps))
        p_empty = 1.0 - math.exp(-eta * src.mean_photons * eps / (1.0 + eps))
        local = np.arange(n_local, dtype=np.int64)
        is_pulse_gate = bits[local >> 1] == (local & 1)
        p_gate = np.where(is_pulse_gate, p_pulse, p_empty)
        u = rng.random(n_local)
        photon_gates = g0 + local[u < p_gate]
    else:  # cw-dark-only
        photon_gates = np.empty(0, dtype=np.int64)

    p_dark = det.dark_prob_per_gate()
    if p_dark > 0.0:
        n_dark = int(rng.binomial(n_local, p_dark))
        dark_gates = g0 + _unique_positions(rng, n_local, n_dark)
    else:
        dark_gates = np.empty(0, dtype=np.int64)

    # photon wins a shared gate; the avalanche is single either way
    dark_gates = np.setdiff1d(dark_gates, photon_gates, assume_unique=True)
    gates = np.concatenate([photon_gates, dark_gates])
    phys = np.concatenate(
        [
            np.full(photon_gates.size, ORIGIN_PHOTON, dtype=np.uint8),
            np.full(dark_gates.size, ORIGIN_DARK, dtype=np.uint8),
        ]
    )
    order = np.argsort(gates, kind="stable")
    gates = gates[order]
    phys = phys[order]

    times, in_tail = sample_detection_times(det.jitter, gates, period, rng)
    laser_sigma = src.laser_fwhm * FWHM_TO_SIGMA
    z_laser = rng.standard_normal(gates.size)
    is_photon = phys == ORIGIN_PHOTON
    times = times + is_photon * (src.alignment_delay + laser_sigma * z_laser)
    return gates, phys, times, in_tail, bits


# Afterpulse hazard below this residual expected count is numerically silent.
_AP_RESIDUAL_CUTOFF = 1e-12
_AP_BLOCK = 4096


def _afterpulse_pass(cfg: RunConfig, gates, phys, times, in_tail):
    """Sequential afterpulse generation over the merged candidate stream.

    Walks intrinsic avalanches in gate order, carrying the expected trap
    population N (decays exp(-dt/lifetime), +fill per avalanche). Between
    avalanches each gate fires an afterpulse with probability
    min(1, trigger*N*exp(-dt/lifetime)); a fire is itself an avalanche and
    refills the traps (chains allowed). A fire in a gate that already holds
    a dark candidate relabels it (photon outranks afterpulse outranks dark).
    """
    ap_model = cfg.detector.afterpulse
    period = cfg.detector.gate.gate_period
    r = math.exp(-period / ap_model.release_lifetime)
    trigger = ap_model.trigger_prob_per_gate
    fill = ap_model.trap_fill_per_detection
    rng = np.random.default_rng(np.random.SeedSequence((cfg.master_seed, 2)))

    ap_gates: list[int] = []
    relabel: list[int] = []
    n_state = 0.0
    g_fill = -1

    def scan(first: int, last: int) -> None:
        """Generate afterpulse events in gates [first, last] (no intrinsic there)."""
        nonlocal n_state, g_fill
        g_lo = first
        block_size = 16  # grows on misses so dense chains stay ~16 draws/event
        while g_lo <= last and n_state > 0.0 and trigger > 0.0:
            c_lo = trigger * n_state * r ** (g_lo - g_fill)
            if c_lo / max(1.0 - r, 1e-300) < _AP_RESIDUAL_CUTOFF:
                return
            block = min(last - g_lo + 1, block_size)
            p = np.minimum(1.0, c_lo * r ** np.arange(block))
            u = rng.random(block)
            hit = np.nonzero(u < p)[0]
            if hit.size:
                g_ap = g_lo + int(hit[0])
                ap_gates.append(g_ap)
                n_state = n_state * r ** (g_ap - g_fill) + fill
                g_fill = g_ap
                g_lo = g_ap + 1
                block_size = 16
            else:
                g_lo += block
                block_size = min(block_size * 2, _AP_BLOCK)

    for i, g in enumerate(gates.tolist()):
        if n_state > 0.0:
            scan(g_fill + 1, g - 1)
            # does an afterpulse also fire in the intrinsic gate? (label only)
            if n_state > 0.0 and trigger > 0.0:
                p_here = min(1.0, trigger * n_state * r ** (g - g_fill))
                if p_here > 0.0 and rng.random() < p_here and phys[i] == ORIGIN_DARK:
                    relabel.append(i)
        n_state = (n_state * r ** (g - g_fill) if g_fill >= 0 else 0.0) + fill
        g_fill = g
    if g_fill >= 0:
        scan(g_fill + 1, cfg.n_gates - 1)

    if relabel:
        phys[np.asarray(relabel, dtype=np.intp)] = ORIGIN_AFTERPULSE

    if ap_gates:
        ap_gates_arr = np.asarray(ap_gates, dtype=np.int64)
        ap_times, ap_tail = sample_detection_times(
            cfg.detector.jitter, ap_gates_arr, period, rng
        )
        gates = np.concatenate([gates, ap_gates_arr])
        phys = np.concatenate(
            [phys, np.full(ap_gates_arr.size, ORIGIN_AFTERPULSE, dtype=np.uint8)]
        )
        times = np.concatenate([times, ap_times])
        in_tail = np.concatenate([in_tail, ap_tail])
        order = np.argsort(gates, kind="stable")
        gates, phys, times, in_tail = gates[order], phys[order], times[order], in_tail[order]
    return gates, phys, times, in_tail


def _holdoff_flags(gate_indices: np.ndarray, holdoff_gates: int, anchor: str) -> np.ndarray:
    if gate_indices.size == 0:
        return np.zeros(0, dtype=bool)
    gaps = np.diff(gate_indices)
    if np.any(gaps < 0):
        raise ValueError("records must be sorted by gate_index")
    if anchor == "any":
        accepted = np.empty(gate_indices.size, dtype=bool)
        accepted[0] = True
        accepted[1:] = gaps > holdoff_gates
        return accepted
    if gaps.size == 0 or gaps.min() > holdoff_gates:
        return np.ones(gate_indices.size, dtype=bool)  # nothing close enough to block
    accepted = np.zeros(gate_indices.size, dtype=bool)
    last = None
    for i, g in enumerate(gate_indices.tolist()):
        if last is None or g - last > holdoff_gates:
            accepted[i] = True
            last = g
    return accepted


def apply_holdoff(records, holdoff_gates: int, anchor: str = "accepted"):
    """Mark records accepted per the FPGA-style hold-off.

    Default ("accepted" anchoring): a record is accepted iff its gate index
    exceeds the last ACCEPTED record's by more than `holdoff_gates`; records
    inside the window do not restart it. "any" anchoring restarts the window
    on every record. The input must be sorted by gate index. Accepts either
    a structured record array or a sequence of DetectionRecord; returns the
    same kind with fresh accepted flags.
    """
    if holdoff_gates < 0:
        raise ValueError("holdoff_gates must be >= 0")
    if anchor not in ("accepted", "any"):
        raise ValueError("anchor must be 'accepted' or 'any'")
    if isinstance(records, np.ndarray):
        out = records.copy()
        out["accepted"] = _holdoff_flags(out["gate_index"], holdoff_gates, anchor)
        return out
    gate_indices = np.asarray([r.gate_index for r in records], dtype=np.int64)
    flags = _holdoff_flags(gate_indices, holdoff_gates, anchor)
    return [
        DetectionRecord(r.gate_index, r.time, r.origin, bool(f))
        for r, f in zip(records, flags)
    ]


def run_simulation(cfg: RunConfig, workers: int = 1) -> RunResult:
    """Simulate `cfg.n_gates` gates; see the module docstring for semantics.

    `workers` parallelizes candidate generation over gate chunks; results
    are byte-identical for any worker count.
    """
    _ = cfg.detector.dark_prob_per_gate()  # fail fast on out-of-range temperature
    if cfg.source.kind != "cw-dark-only":
        _gates_per_trigger(cfg)
    n_chunks = (cfg.n_gates + CHUNK_GATES - 1) // CHUNK_GATES
    indices = range(n_chunks)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk_results = list(
                pool.map(partial(_simulate_chunk, cfg), indices,
                         chunksize=max(1, n_chunks // (4 * workers)))
            )
    else:
        chunk_results = [_simulate_chunk(cfg, i) for i in indices]

    gates = np.concatenate([c[0] for c in chunk_results])
    phys = np.concatenate([c[1] for c in chunk_results])
    times = np.concatenate([c[2] for c in chunk_results])
    in_tail = np.concatenate([c[3] for c in chunk_results])
    bits = None
    if cfg.source.kind == "cow-ppm":
        bits = np.concatenate([c[4] for c in chunk_results])

    if cfg.detector.afterpulse.enabled:
        gates, phys, times, in_tail = _afterpulse_pass(cfg, gates, phys, times, in_tail)

    origin = np.where(in_tail, np.uint8(ORIGIN_TAIL), phys)
    records = np.empty(gates.size, dtype=RECORD_DTYPE)
    records["gate_index"] = gates
    records["time"] = times
    records["origin"] = origin
    records["accepted"] = _holdoff_flags(gates, cfg.holdoff_gates, cfg.holdoff_anchor)

    period = cfg.detector.gate.gate_period
    counters = {
        "n_gates": cfg.n_gates,
        "duration_s": cfg.n_gates * period,
        "generated_total": int(records.size),
        "accepted_total": int(np.count_nonzero(records["accepted"])),
    }
    for code, name in enumerate(ORIGIN_NAMES):
        mask = records["origin"] == code
        counters[f"generated_{name}"] = int(np.count_nonzero(mask))
        counters[f"accepted_{name}"] = int(np.count_nonzero(mask & records["accepted"]))
    return RunResult(config=cfg, records=records, counters=counters, bits=bits)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Uniform-bin count histogram; bin k covers [origin + k*w, origin + (k+1)*w)."""

    bin_width: float
    origin: float
    counts: np.ndarray

    def __post_init__(self) -> None:
        if not (np.isfinite(self.bin_width) and self.bin_width > 0):
            raise ValueError("bin_width must be positive")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValueError("counts must be 1-D")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bin_starts(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.n_bins)

    @property
    def bin_centers(self) -> np.ndarray:
        return self.bin_starts + 0.5 * self.bin_width

    def merge(self, other: "Histogram") -> "Histogram":
        """Elementwise sum; binning must match exactly."""
        if (
            self.bin_width != other.bin_width
            or self.origin != other.origin
            or self.n_bins != other.n_bins
        ):
            raise ValueError("histograms have different binning")
        return Histogram(self.bin_width, self.origin, self.counts + other.counts)

    @classmethod
    def from_times(cls, times, bin_width: float, origin: float, n_bins: int) -> "Histogram":
        times = np.asarray(times, dtype=float)
        idx = np.floor((times - origin) / bin_width).astype(np.int64)
        idx = idx[(idx >= 0) & (idx < n_bins)]
        return cls(bin_width, origin, np.bincount(idx, minlength=n_bins))

    def to_csv(self, path) -> None:
        """`bin_start_ps,count` rows."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("bin_start_ps,count\n")
            for start, count in zip(self.bin_starts, self.counts):
                fh.write(f"{float(start) * 1e12!r},{int(count)}\n")


def tcspc_histogram(
    records: np.ndarray,
    trigger_rate: float,
    bin_width: float,
    phase_origin: float = 0.0,
) -> Histogram:
    """Histogram of detection times modulo the trigger period.

    Mirrors a TCSPC module: only the FIRST detection of each trigger cycle
    is registered. Pass whichever records the instrument would see (usually
    all generated records; hold-off belongs to the counting path, not here).
    `phase_origin` is the sync delay: phases are (time - phase_origin) mod
    period, so a peak sitting at phase 0 can be moved off the wrap-around
    (e.g. phase_origin = -period/2 centers it). Merging histograms of
    partitioned runs is exact when the partitions respect trigger-cycle
    boundaries.
    """
    if not (np.isfinite(trigger_rate) and trigger_rate > 0):
        raise ValueError("trigger_rate must be positive")
    period = 1.0 / trigger_rate
    if not (0 < bin_width < period):
        raise ValueError("bin_width must be positive and below the trigger period")
    if not np.isfinite(phase_origin):
        raise ValueError("phase_origin must be finite")
    shifted = np.sort(np.asarray(records["time"], dtype=float), kind="stable") - phase_origin
    cycles = np.floor(shifted / period).astype(np.int64)
    _, first_idx = np.unique(cycles, return_index=True)
    phase = shifted[first_idx] - cycles[first_idx] * period
    n_bins = max(1, int(round(period / bin_width)))
    return Histogram.from_times(phase, bin_width, 0.0, n_bins)


def estimate_fwhm(h: Histogram) -> float:
    """Full width at half maximum via linear interpolation around the peak.

    Walks outwards from the global maximum to the first bins below half
    maximum and interpolates the two crossings. A single-bin spike yields
    one bin width. Empty or flat histograms are refused.
    """
    counts = h.counts.astype(float)
    if h.n_bins == 0 or counts.max() <= 0:
        raise ValueError("histogram is empty")
    if np.all(counts == counts[0]):
        raise ValueError("histogram is flat; no peak to measure")
    centers = h.bin_centers
    p = int(np.argmax(counts))
    half = counts[p] / 2.0

    def crossing(direction: int) -> float:
        i = p
        while 0 <= i + direction < h.n_bins and counts[i + direction] >= half:
            i += direction
        j = i + direction
        if 0 <= j < h.n_bins:
            c_out, y_out = centers[j], counts[j]
        else:  # edge bin: interpolate against a virtual empty neighbor
            c_out, y_out = centers[i] + direction * h.bin_width, 0.0
        c_in, y_in = centers[i], counts[i]
        return c_in + (half - y_in) * (c_out - c_in) / (y_out - y_in)

    return float(crossing(+1) - crossing(-1))


def deconvolve_jitter(measured_fwhm: float, source_fwhm: float) -> float:
    """Remove a Gaussian source width from a measured width in quadrature."""
    if not (np.isfinite(measured_fwhm) and measured_fwhm >= 0):
        raise ValueError("measured_fwhm must be >= 0")
    if not (np.isfinite(source_fwhm) and source_fwhm >= 0):
        raise ValueError("source_fwhm must be >= 0")
    if measured_fwhm < source_fwhm:
        raise ValueError(
            f"measured width {measured_fwhm} below source width {source_fwhm}: "
            "nothing physical to deconvolve"
        )
    return math.sqrt(measured_fwhm**2 - source_fwhm**2)


def inter_detection_correlation(
    records: np.ndarray, max_lag_gates: int, gate_period: float
) -> Histogram:
    """Histogram of gate-index gaps between consecutive ACCEPTED detections.

    Bin for lag k starts at k*gate_period; lags above `max_lag_gates` are
    dropped. Afterpulsing shows up as an excess at short lags; pure jitter
    tails do not shift gate indices and leave this flat.
    """
    if max_lag_gates < 1:
        raise ValueError("max_lag_gates must be >= 1")
    gates = np.asarray(records["gate_index"][records["accepted"]], dtype=np.int64)
    lags = np.diff(gates)
    lags = lags[(lags >= 1) & (lags <= max_lag_gates)]
    counts = np.bincount(lags - 1, minlength=max_lag_gates)
    return Histogram(gate_period, gate_period, counts)


def subsequent_gate_fraction(
    h: Histogram, gate_period: float, span_gates: int, peak_time: float | None = None
) -> float:
    """Fraction of histogram counts in windows around the `span_gates` gates after the peak.

    Windows are one gate period wide, centered at peak + k*gate_period for
    k = 1..span_gates. The peak defaults to the center of the maximal bin.
    """
    if h.total == 0:
        raise ValueError("histogram is empty")
    centers = h.bin_centers
    if peak_time is None:
        peak_time = float(centers[int(np.argmax(h.counts))])
    in_windows = np.zeros(h.n_bins, dtype=bool)
    for k in range(1, span_gates + 1):
        target = peak_time + k * gate_period
        in_windows |= np.abs(centers - target) <= gate_period / 2.0
    return float(h.counts[in_windows].sum() / h.total)


def geometric_lag_gof(
    lags, holdoff_gates: int, p_per_gate: float, min_expected: float = 5.0
) -> tuple[float, int, float]:
    """Chi-square goodness of fit of accepted lags against the renewal law.

    After an accepted detection with per-gate click probability p and a
    hold-off of H gates, the lag L satisfies P(L = H+1+k) = p*(1-p)^k.
    Bins are grown until each expects at least `min_expected` counts, with
    one open tail bin. Returns (chi2, dof, p_value).
    """
    lags = np.asarray(lags, dtype=np.int64)
    if lags.size < 10:
        raise ValueError("need at least 10 lags for a goodness-of-fit test")
    if np.any(lags <= holdoff_gates):
        raise ValueError("lags at or below the hold-off are impossible post-acceptance")
    if not (0.0 < p_per_gate < 1.0):
        raise ValueError("p_per_gate must be in (0, 1)")
    k = lags - (holdoff_gates + 1)
    n = k.size
    edges = []  # bin = [lo, hi)
    lo = 0
    while True:
        # grow bin until expected mass n*(cdf(hi)-cdf(lo)) >= min_expected
        mass = 0.0
        hi = lo
        while mass * n < min_expected:
            mass += p_per_gate * (1.0 - p_per_gate) ** hi
            hi += 1
            if mass >= 1.0 - (1.0 - p_per_gate) ** lo:
                break
        tail_mass = (1.0 - p_per_gate) ** hi
        if tail_mass * n < min_expected:
            edges.append((lo, None))  # open tail bin
            break
        edges.append((lo, hi))
        lo = hi
    observed = []
    expected = []
    for lo, hi in edges:
        if hi is None:
            observed.append(int(np.count_nonzero(k >= lo)))
            expected.append(n * (1.0 - p_per_gate) ** lo)
        else:
            observed.append(int(np.count_nonzero((k >= lo) & (k < hi))))
            expected.append(
                n * ((1.0 - p_per_gate) ** lo - (1.0 - p_per_gate) ** hi)
            )
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    dof = max(1, len(edges) - 1)
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


def short_lag_excess_pvalue(
    lags_test,
    lags_baseline,
    holdoff_gates: int,
    short_window_gates: int,
) -> float:
    """Two-sample chi-square: is the short-lag share larger than the baseline's?

    Splits each lag sample at holdoff + short_window_gates and tests the 2x2
    contingency table. Small p-value = the test run has a short-lag excess
    (afterpulsing signature) relative to the baseline.
    """
    cut = holdoff_gates + short_window_gates
    table = np.asarray(
        [
            [np.count_nonzero(np.asarray(lags_test) <= cut),
             np.count_nonzero(np.asarray(lags_test) > cut)],
            [np.count_nonzero(np.asarray(lags_baseline) <= cut),
             np.count_nonzero(np.asarray(lags_baseline) > cut)],
        ],
        dtype=float,
    )
    if np.any(table.sum(axis=1) == 0) or np.any(table.sum(axis=0) == 0):
        return 1.0  # degenerate table carries no evidence
    _, p_value, _, _ = stats.chi2_contingency(table, correction=False)
    return float(p_value)


def records_to_csv(records: np.ndarray, path) -> None:
    """`gate_index,time_ps,origin,accepted` rows (times in picoseconds)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gate_index,time_ps,origin,accepted\n")
        for r in records:
            fh.write(
                f"{int(r['gate_index'])},{float(r['time']) * 1e12!r},"
                f"{ORIGIN_NAMES[int(r['origin'])]},{'true' if r['accepted'] else 'false'}\n"
            )
