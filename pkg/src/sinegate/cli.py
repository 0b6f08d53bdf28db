"""Command-line front end: seeded runs emitting CSV/JSON tables plus a manifest.

Every subcommand reads one JSON configuration (defaults fill everything),
runs deterministically from a single master seed, writes its outputs into
`--out`, and finishes with a `manifest.json` listing SHA-256 digests of the
emitted files. Reruns with the same configuration and seed are
byte-identical, independent of `--workers`.

Exit codes: 0 success, 1 configuration/usage problem, 2 model range error
(e.g. a temperature outside the calibrated dark-count table).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import signal_chain as sc
from . import qkd_budget as qb
from .config import ConfigError, FullConfig, grid_values, load_config
from .detector_model import ModelRangeError, dark_prob, efficiency_at_bias, gate_profile
from .mc_engine import (
    RunConfig,
    ORIGIN_NAMES,
    estimate_fwhm,
    deconvolve_jitter,
    inter_detection_correlation,
    run_simulation,
    subsequent_gate_fraction,
    tcspc_histogram,
)

__all__ = ["main", "console_main"]


class _CliError(Exception):
    """Usage or configuration problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep our own codes
        raise _CliError(f"{self.prog}: error: {message}\n{self.format_usage()}")


_EXP_PAD = re.compile(r"e([+-])0(\d)$")


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        # repr round-trips exactly; drop exponent zero padding (7e-07 -> 7e-7)
        return _EXP_PAD.sub(r"e\1\2", repr(float(v)))
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


class Emitter:
    """Writes artifacts into the output directory and tracks their digests."""

    def __init__(self, out_dir: Path, fmt: str):
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.files: list[dict] = []

    def _write(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        (self.out_dir / name).write_bytes(data)
        self.files.append(
            {"name": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        )

    def emit_table(self, base: str, header: list[str], rows: list[list]) -> None:
        if self.fmt == "json":
            doc = {"header": list(header), "rows": [[_jsonable(c) for c in r] for r in rows]}
            self._write(f"{base}.json", json.dumps(doc, indent=2, sort_keys=True,
                                                   allow_nan=False) + "\n")
            return
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(c) for c in row])
        self._write(f"{base}.csv", buf.getvalue())

    def emit_json(self, base: str, obj) -> None:
        self._write(f"{base}.json", json.dumps(obj, indent=2, sort_keys=True,
                                               allow_nan=False) + "\n")

    def emit_waveform(self, base: str, wf: sc.SampledWaveform) -> None:
        if self.fmt == "json":
            doc = {
                "dt_s": wf.dt,
                "t0_s": wf.t0,
                "samples_v": [float(v) for v in wf.samples],
            }
            self._write(f"{base}.json", json.dumps(doc, indent=2, sort_keys=True,
                                                   allow_nan=False) + "\n")
            return
        lines = [f"# dt={float(wf.dt)!r} n={wf.n}", "time_s,volts"]
        lines.extend(f"{float(t)!r},{float(v)!r}" for t, v in zip(wf.times, wf.samples))
        self._write(f"{base}.csv", "\n".join(lines) + "\n")

    def emit_histogram(self, base: str, hist) -> None:
        rows = [[float(s * 1e12), int(c)] for s, c in zip(hist.bin_starts, hist.counts)]
        self.emit_table(base, ["bin_start_ps", "count"], rows)

    def write_manifest(self, info: dict) -> None:
        doc = dict(info)
        doc["emitted_files"] = self.files
        (self.out_dir / "manifest.json").write_bytes(
            (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")
        )


# ---------------------------------------------------------------------------
# Subcommand handlers. Each gets (cfg, emitter, seed, workers).

def _cmd_chain_demo(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    ch = cfg.chain
    gate_cfg = cfg.detector.gate
    dt = ch["dt_ps"] / 1e12
    duration = ch["duration_ns"] / 1e9
    spec = sc.FilterResponseSpec(gate_frequency=gate_cfg.gate_frequency)
    gate = sc.synthesize_gate_train(
        gate_cfg.gate_frequency, ch["amplitude_pp_v"], duration,
        dt=dt, delay=ch["delay_ps"] / 1e12,
    )
    feedthrough = sc.synthesize_feedthrough(gate, ch["coupling_gain"])

    rng = np.random.default_rng(seed)
    shape = sc.AvalanchePulseShape()
    margin = 5e-9
    n_av = ch["n_avalanches"]
    diode = feedthrough
    event_times = []
    if n_av and duration > 2 * margin:
        seg = (duration - 2 * margin) / n_av  # spaced out so each one resolves
        for i in range(n_av):
            t_ev = margin + (i + float(rng.uniform(0.25, 0.75))) * seg
            event_times.append(t_ev)
            diode = diode + sc.synthesize_avalanche(shape, gate, t_ev, rng)

    filtered = sc.apply_filter(diode, spec, stages=ch["stages"])
    residual = sc.apply_filter(feedthrough, spec, stages=ch["stages"])
    disc = sc.DiscriminatorConfig(
        threshold=ch["threshold_mv"] / 1e3,
        polarity="negative-going",
        refractory_time=ch["refractory_ns"] / 1e9,
    )
    crossings = sc.discriminate(filtered, disc)
    contract = sc.verify_filter_contract(spec)
    order, cutoff = sc.lowpass_design(spec)

    em.emit_waveform("gate_waveform", gate)
    em.emit_waveform("diode_waveform", diode)
    em.emit_waveform("filtered_waveform", filtered)
    for base, wf in (("spectrum_diode", diode), ("spectrum_filtered", filtered)):
        freqs, power_db = sc.power_spectrum(wf)
        em.emit_table(base, ["frequency_hz", "power_db"],
                      [[float(f), float(p)] for f, p in zip(freqs, power_db)])
    em.emit_table("filter_response", ["frequency_hz", "gain_db"],
                  [[float(f), float(g)] for f, g in contract.response])
    em.emit_table(
        "filter_contract",
        ["check", "measured_db", "required_db", "ok"],
        [
            ["passband_ripple", contract.worst_passband_gain_db,
             -spec.passband_ripple_db, contract.passband_ok],
            ["rejection_at_gate", contract.gate_attenuation_db,
             spec.rejection_at_gate_db, contract.gate_ok],
            ["rejection_band", contract.worst_band_attenuation_db,
             spec.rejection_band_floor_db, contract.band_ok],
            ["rejection_to_4ghz", contract.worst_wideband_attenuation_db,
             spec.rejection_to_4ghz_db, contract.wideband_ok],
        ],
    )
    em.emit_table("crossings", ["index", "time_ps"],
                  [[i, float(t * 1e12)] for i, t in enumerate(crossings)])
    em.emit_table(
        "summary",
        ["key", "value"],
        [
            ["filter_order", order],
            ["filter_cutoff_hz", float(cutoff)],
            ["filter_contract_ok", bool(contract.ok)],
            ["n_avalanches", n_av],
            ["n_crossings", len(crossings)],
            ["avalanche_times_ps", ";".join(repr(t * 1e12) for t in event_times)],
            ["filtered_min_v", float(filtered.samples.min())],
            ["feedthrough_residual_max_v", float(np.abs(residual.samples).max())],
        ],
    )


def _cmd_sweep_bias(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    law = cfg.detector.bias_law
    rows = [[float(b), float(efficiency_at_bias(law, b))]
            for b in grid_values(cfg.sweeps["bias_v"])]
    em.emit_table("bias_efficiency", ["bias_v", "efficiency"], rows)


def _cmd_sweep_delay(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    gate = cfg.detector.gate
    rows = [[float(d), float(gate_profile(gate, d / 1e12))]
            for d in grid_values(cfg.sweeps["delay_ps"])]
    em.emit_table("gate_profile", ["delay_ps", "efficiency"], rows)


def _sweep_temperatures(cfg: FullConfig) -> list[float]:
    explicit = cfg.sweeps["temperatures_c"]
    if explicit is not None:
        return [float(t) for t in explicit]
    if cfg.detector.dark_law is None:
        raise _CliError("sweep needs sweeps.temperatures_c when the dark table is null")
    return [float(t) for t in cfg.detector.dark_law.temperatures]


def _cmd_sweep_temp(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    if cfg.detector.dark_law is None:
        raise _CliError("sweep-temp needs a dark table (detector.dark_table_c_prob)")
    rows = [[float(t), float(dark_prob(cfg.detector.dark_law, t))]
            for t in _sweep_temperatures(cfg)]
    em.emit_table("dark_counts", ["temperature_c", "dark_prob_per_gate"], rows)


def _cmd_tcspc(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    src = cfg.source
    if src.kind != "pulsed-trigger":
        raise _CliError("tcspc needs source.kind = pulsed-trigger")
    gate_freq = cfg.detector.gate.gate_frequency
    gates_per_pulse = int(round(gate_freq / src.trigger_rate))
    n_gates = cfg.tcspc["n_pulses"] * gates_per_pulse
    run_cfg = RunConfig(
        n_gates=n_gates,
        master_seed=seed,
        detector=cfg.detector,
        source=src,
        holdoff_gates=cfg.run["holdoff_gates"],
        holdoff_anchor=cfg.run["holdoff_anchor"],
    )
    result = run_simulation(run_cfg, workers=workers)
    records = result.records
    trigger_period = 1.0 / src.trigger_rate
    # sync offset of half a cycle keeps the peak away from the phase wrap
    hist = tcspc_histogram(records, src.trigger_rate, cfg.tcspc["bin_width_ps"] / 1e12,
                           phase_origin=-trigger_period / 2.0)
    gate_period = cfg.detector.gate.gate_period
    corr = inter_detection_correlation(records, cfg.tcspc["max_lag_gates"], gate_period)

    summary_rows = [["n_pulses", cfg.tcspc["n_pulses"]],
                    ["n_records", int(records.size)],
                    ["n_accepted", int(result.counters["accepted_total"])]]
    for name in ORIGIN_NAMES:
        summary_rows.append([f"n_{name}", result.counters[f"generated_{name}"]])
    summary_rows.append(["histogram_total", hist.total])
    if hist.total > 0 and records.size > 0:
        fwhm = estimate_fwhm(hist)
        summary_rows.append(["fwhm_ps", float(fwhm * 1e12)])
        if fwhm >= src.laser_fwhm:
            summary_rows.append(
                ["jitter_fwhm_ps", float(deconvolve_jitter(fwhm, src.laser_fwhm) * 1e12)]
            )
        summary_rows.append(
            ["subsequent_gate_fraction",
             float(subsequent_gate_fraction(hist, gate_period,
                                            cfg.detector.jitter.tail_span_gates))]
        )

    em.emit_histogram("tcspc_histogram", hist)
    em.emit_histogram("correlation", corr)
    em.emit_table(
        "records",
        ["gate_index", "time_ps", "origin", "accepted"],
        [[int(r["gate_index"]), float(r["time"] * 1e12),
          ORIGIN_NAMES[int(r["origin"])], bool(r["accepted"])] for r in records],
    )
    em.emit_table("summary", ["key", "value"], summary_rows)


_QKD_HEADER = ["axis_value", "mu_detector", "raw_rate_hz", "qber", "qber_dark",
               "qber_ext", "qber_tail", "rate_after_ec_hz", "secret_rate_hz"]


def _qkd_rows(axis_values, reports) -> list[list]:
    return [
        [float(v), float(r.mu_detector), float(r.raw_rate), float(r.qber_total),
         float(r.qber_dark), float(r.qber_extinction), float(r.qber_timing_tail),
         float(r.rate_after_ec), float(r.secret_rate)]
        for v, r in zip(axis_values, reports)
    ]


def _cmd_qkd(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    grid = grid_values(cfg.sweeps["fiber_loss_db"])
    reports = qb.sweep(cfg.qkd, "fiber_loss_db", grid)
    em.emit_table("qkd_vs_loss", _QKD_HEADER, _qkd_rows(grid, reports))
    em.emit_json("qkd_notes", reports[0].notes)
    n_bits = cfg.merged["qkd"]["mc_check_bits"]
    if n_bits > 0:
        mc = qb.mc_link_run(cfg.qkd, n_bits, seed, workers=workers)
        em.emit_table("qkd_mc_check", ["metric", "value"],
                      [[k, _jsonable(v)] for k, v in mc.items()])


def _cmd_qkd_temp(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    temps = _sweep_temperatures(cfg)
    reports = qb.sweep(cfg.qkd, "temperature", temps)
    em.emit_table("qkd_vs_temperature", _QKD_HEADER, _qkd_rows(temps, reports))
    em.emit_json("qkd_notes", reports[0].notes)


def _cmd_stability(cfg: FullConfig, em: Emitter, seed: int, workers: int) -> None:
    segments = qb.stability_run(
        cfg.qkd, cfg.stability["n_segments"], cfg.stability["bits_per_segment"],
        seed, workers=workers,
    )
    rows = [
        [s["segment_index"], s["n_bits"], s["accepted_total"], s["accepted_in_windows"],
         s["wrong_bin"], float(s["raw_rate_hz"]), float(s["qber"])]
        for s in segments
    ]
    em.emit_table(
        "stability_segments",
        ["segment_index", "n_bits", "accepted_total", "accepted_in_windows",
         "wrong_bin", "raw_rate_hz", "qber"],
        rows,
    )
    counts = np.array([s["accepted_total"] for s in segments], dtype=float)
    mean = float(counts.mean())
    std = float(counts.std(ddof=1)) if counts.size > 1 else 0.0
    max_z = float(np.abs(counts - mean).max() / np.sqrt(mean)) if mean > 0 else 0.0
    em.emit_table(
        "stability_summary",
        ["key", "value"],
        [
            ["n_segments", int(counts.size)],
            ["mean_accepted", mean],
            ["std_accepted", std],
            ["relative_std", std / mean if mean > 0 else 0.0],
            ["max_abs_poisson_z", max_z],
        ],
    )


_HANDLERS = {
    "chain-demo": _cmd_chain_demo,
    "sweep-bias": _cmd_sweep_bias,
    "sweep-delay": _cmd_sweep_delay,
    "sweep-temp": _cmd_sweep_temp,
    "tcspc": _cmd_tcspc,
    "qkd": _cmd_qkd,
    "qkd-temp": _cmd_qkd_temp,
    "stability": _cmd_stability,
}

_DESCRIPTIONS = {
    "chain-demo": "gate, feedthrough, avalanche, filtering, spectra, discrimination",
    "sweep-bias": "detection efficiency versus dc bias",
    "sweep-delay": "gate temporal profile versus laser delay",
    "sweep-temp": "dark count probability versus temperature",
    "tcspc": "pulsed-source timing histogram, jitter, and correlation analysis",
    "qkd": "link budget versus fiber loss, with a Monte Carlo cross-check",
    "qkd-temp": "link budget versus detector temperature",
    "stability": "segmented constant-parameter Monte Carlo rate stability",
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="sinegate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name, handler in _HANDLERS.items():
        p = sub.add_parser(name, help=_DESCRIPTIONS[name])
        p.add_argument("--config", default=None, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides run.master_seed)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="table format (default: csv)")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel workers for Monte Carlo chunks")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except _CliError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError(["--seed must be in [0, 2**64)"])
        if args.workers < 1:
            raise ConfigError(["--workers must be >= 1"])
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else cfg.run["master_seed"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    emitter = Emitter(out_dir, args.format)
    try:
        args.handler(cfg, emitter, seed, args.workers)
    except _CliError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ModelRangeError as exc:
        print(f"model range error: {exc}", file=sys.stderr)
        return 2
    emitter.write_manifest(
        {
            "subcommand": args.command,
            "config_path": args.config,
            "master_seed": seed,
            "output_dir": str(args.out),
            "format": args.format,
        }
    )
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
