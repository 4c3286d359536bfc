"""Command-line front end: ``sense-lab <subcommand> [flags]``.

Every run writes its outputs plus a ``manifest.json`` holding the resolved
configuration, so ``sense-lab replay --manifest dir/manifest.json`` rebuilds
the same files.  Flags are lower_snake_case and mirror the keys of the JSON
file accepted by ``--config``; precedence is flag > config file > default.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Callable

import numpy as np

from . import ambiguity as amb
from . import csi_codec as cc
from . import estimation as est
from .channel import load_scenario, realize_channel, trace_rays, write_pdp_csv
from .errors import ConfigurationError, SenseLabError
from .io import write_csv, write_json
from .rng import stream
from .waveform import (
    DMG_CHIP_RATE,
    build_ce_sequence,
    build_sync_subfield,
    generate_golay_pair,
    write_sequence_constants,
)

SEED_ENV = "SENSE_LAB_SEED"
MANIFEST = "manifest.json"

DEFAULTS: dict[str, dict] = {
    "sequences": {"sample_rate": DMG_CHIP_RATE},
    "ambiguity": {
        "a": "CE0",
        "b": "CE0",
        "sample_rate": DMG_CHIP_RATE,
        "max_delay_samples": 128,
        "max_doppler": 1000.0,
        "doppler_points": amb.DEFAULT_DOPPLER_POINTS,
        "zone_delay_samples": 64,
        "zone_doppler": 1000.0,
    },
    "quant-bench": {"count": 1000, "n_subcarriers": 64, "n_b": 8, "alpha_set_size": 16},
    "simulate": {
        "scenario": "living_room",
        "snr": 20.0,
        "t0": 0.5,
        "n_exchanges": 16,
        "intra_interval": 0.25e-3,
        "n_range_bins": 64,
        "pfa": 1e-3,
    },
    "sweep": {
        "scenario": "living_room",
        "snr": "0,10,20,30",
        "trials": 100,
        "kind": "range",
        "n_exchanges": 16,
        "intra_interval": 0.25e-3,
        "n_range_bins": 64,
        "pfa": 1e-3,
    },
    "hist": {
        "scenario": "living_room",
        "snr": 20.0,
        "trials": 10,
        "kind": "range",
        "hist_samples": 8,
        "hist_bins": 21,
        "n_exchanges": 16,
        "intra_interval": 0.25e-3,
        "n_range_bins": 64,
        "pfa": 1e-3,
    },
}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0"


def parse_snr_list(text) -> list[float]:
    """``"0,10,inf"`` -> ``[0.0, 10.0, inf]``."""
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse SNR list {text!r}") from exc


def _named_sequence(name: str, sample_rate: float):
    key = name.upper()
    if key in ("CE0", "CE1"):
        return build_ce_sequence(key, sample_rate)
    if key.startswith("SYNC") and key[4:].isdigit():
        return build_sync_subfield(int(key[4:]), sample_rate)
    if key in ("GA128", "GB128"):
        pair = generate_golay_pair(7, 7, sample_rate)
        return pair.a if key == "GA128" else pair.b
    raise ConfigurationError(f"unknown sequence {name!r}; use CE0, CE1, SYNC1..SYNC8, GA128 or GB128")


def _eval_config(cfg: dict) -> est.EvalConfig:
    return est.EvalConfig(
        n_exchanges=int(cfg["n_exchanges"]),
        intra_interval=float(cfg["intra_interval"]),
        n_range_bins=int(cfg["n_range_bins"]),
        pfa=float(cfg["pfa"]),
        kind=cfg.get("kind", "range"),
        hist_samples=int(cfg.get("hist_samples", 8)),
        hist_bins=int(cfg.get("hist_bins", 21)),
    )


# --------------------------------------------------------------------------
# Subcommands: each takes the resolved config and output dir, returns the
# written file names relative to that dir.
# --------------------------------------------------------------------------


def cmd_sequences(cfg: dict, out: Path) -> list[str]:
    fs = float(cfg["sample_rate"])
    seqs = {"CE0": build_ce_sequence("CE0", fs).samples, "CE1": build_ce_sequence("CE1", fs).samples}
    for r in range(1, 9):
        seqs[f"SYNC{r}"] = build_sync_subfield(r, fs).samples
    write_sequence_constants(out / "sequences.csv", seqs)
    header = ["sequence"] + [f"SYNC{c}" for c in range(1, 9)]
    files = ["sequences.csv"]
    for method, name in (("block", "correlation_matrix.csv"), ("aperiodic", "correlation_matrix_aperiodic.csv")):
        mat = amb.sync_correlation_matrix(method, fs)
        rows = [[f"SYNC{r + 1}"] + [int(round(v)) for v in mat[r]] for r in range(8)]
        write_csv(out / name, header, rows)
        files.append(name)
    return files


def cmd_ambiguity(cfg: dict, out: Path) -> list[str]:
    fs = float(cfg["sample_rate"])
    a, b = _named_sequence(cfg["a"], fs), _named_sequence(cfg["b"], fs)
    grid = np.linspace(-float(cfg["max_doppler"]), float(cfg["max_doppler"]), int(cfg["doppler_points"]))
    amap = amb.ambiguity_map(a, b, int(cfg["max_delay_samples"]) / fs, doppler_grid=grid)
    is_auto = str(cfg["a"]).upper() == str(cfg["b"]).upper()
    laz = amb.laz_metrics(amap, int(cfg["zone_delay_samples"]) / fs, float(cfg["zone_doppler"]), is_auto)
    name = "aaf.csv" if is_auto else "caf.csv"
    amb.write_map_csv(out / name, amap)
    write_csv(
        out / "laz.csv",
        ("peak", "max_sidelobe", "peak_to_sidelobe_db", "zone_delay_s", "zone_doppler_hz"),
        [(laz.peak, laz.max_sidelobe, "" if laz.peak_to_sidelobe_db is None else laz.peak_to_sidelobe_db, laz.zone[0], laz.zone[1])],
    )
    return [name, "laz.csv"]


def cmd_quant_bench(cfg: dict, out: Path) -> list[str]:
    n_b = int(cfg["n_b"])
    ens = cc.random_csi_ensemble(int(cfg["count"]), int(cfg["n_subcarriers"]), seed=int(cfg["seed"]))
    alphas = tuple(range(1, int(cfg["alpha_set_size"]) + 1))
    rows = []
    for scheme in cc.SCHEMES:
        q = cc.QuantConfig(scheme, n_b=n_b, alpha_set=alphas if scheme == "fractional" else None)
        rows.append((scheme, n_b, len(alphas) if scheme == "fractional" else "", cc.ensemble_error(ens, q)))
    write_csv(out / "quant_bench.csv", ("scheme", "n_b", "alpha_set_size", "mean_abs_error"), rows)
    return ["quant_bench.csv"]


def cmd_simulate(cfg: dict, out: Path) -> list[str]:
    s = load_scenario(cfg["scenario"])
    ecfg = _eval_config(cfg)
    snr = float(cfg["snr"])
    seed = int(cfg["seed"])
    ref = build_ce_sequence("CE0", s.sample_rate)
    t0 = float(cfg["t0"])
    rmap, recs = est.run_burst(s, t0, snr, stream(seed, "noise", "simulate"), ecfg, ref, stream(seed, "clutter", "simulate"))
    trace = recs[0].trace.__class__()
    for r in recs:
        trace.extend(r.trace)
    trace.write_jsonl(out / "trace.jsonl")
    n_taps = max(s.default_n_taps, ecfg.n_range_bins)
    reals = [realize_channel(trace_rays(s, r.measurements[0].time), s.sample_rate, n_taps, s.carrier, r.measurements[0].time) for r in recs]
    write_pdp_csv(out / "pdp.csv", reals)
    est.write_rda_csv(out / "rda_map.csv", rmap)
    dets = sorted(est.cfar_detect(rmap, ecfg.guard_cells, ecfg.train_cells, pfa=ecfg.pfa), key=lambda d: -d.magnitude)
    write_csv(
        out / "detections.csv",
        ("range_m", "doppler_hz", "velocity_mps", "magnitude", "snr_estimate_db"),
        [(d.range, d.doppler, d.velocity, d.magnitude, d.snr_estimate) for d in dets],
    )
    files = ["trace.jsonl", "pdp.csv", "rda_map.csv", "detections.csv"]
    if s.target is not None:
        truth = est.target_truth(s, t0 + ecfg.intra_interval * ecfg.n_exchanges / 2)
        write_json(out / "truth.json", {k: (list(map(float, v)) if k == "position" else float(v)) for k, v in truth.items()})
        files.append("truth.json")
    return files


def cmd_sweep(cfg: dict, out: Path) -> list[str]:
    curve = est.evaluate(cfg["scenario"], parse_snr_list(cfg["snr"]), int(cfg["trials"]), "curve", int(cfg["seed"]), _eval_config(cfg))
    est.write_curve_csv(out / "curve.csv", curve)
    return ["curve.csv"]


def cmd_hist(cfg: dict, out: Path) -> list[str]:
    hist = est.evaluate(cfg["scenario"], parse_snr_list(cfg["snr"]), int(cfg["trials"]), "histogram", int(cfg["seed"]), _eval_config(cfg))
    est.write_histogram_csv(out / "histogram.csv", hist)
    write_json(out / "histogram_summary.json", {"samples": hist.samples, "misses": hist.misses, "kind": hist.kind})
    return ["histogram.csv", "histogram_summary.json"]


COMMANDS: dict[str, Callable[[dict, Path], list[str]]] = {
    "sequences": cmd_sequences,
    "ambiguity": cmd_ambiguity,
    "quant-bench": cmd_quant_bench,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "hist": cmd_hist,
}

_HELP = {
    "sequences": "write CE/Sync sequences and the 8x8 Sync correlation matrices",
    "ambiguity": "write an ambiguity map and its low-ambiguity-zone metrics",
    "quant-bench": "mean absolute I/Q error of the four CSI quantizers",
    "simulate": "run one DMG monostatic/bistatic burst through a scenario",
    "sweep": "accuracy-vs-SNR curve",
    "hist": "accuracy histogram along the target trajectory",
}


# --------------------------------------------------------------------------
# Argument handling
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sense-lab", description="WLAN sensing link-level toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, defaults in DEFAULTS.items():
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="JSON file whose keys mirror these flags")
        sp.add_argument("--seed", type=int, help=f"RNG seed (default: ${SEED_ENV}, then the scenario seed, then 0)")
        for key, val in defaults.items():
            kind = str if key in ("snr", "scenario") or isinstance(val, str) else type(val)
            sp.add_argument(f"--{key}", type=kind, default=None, help=f"default: {val}")
    rp = sub.add_parser("replay", help="rerun a command from its manifest")
    rp.add_argument("--manifest", required=True)
    rp.add_argument("--out", help="output directory (default: the manifest's directory)")
    return p


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {args.config} is not valid JSON: {exc}") from exc
        unknown = sorted(set(doc) - set(cfg) - {"seed"})
        if unknown:
            raise ConfigurationError(f"unknown config keys for {command}: {unknown}")
        cfg.update(doc)
    for key in DEFAULTS[command]:
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    scenario = None
    if "scenario" in cfg:
        scenario = load_scenario(cfg["scenario"])
        cfg["scenario"] = scenario.document
    if args.seed is not None:
        cfg["seed"] = args.seed
    elif "seed" not in cfg:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                cfg["seed"] = int(env)
            except ValueError as exc:
                raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
        else:
            cfg["seed"] = scenario.seed if scenario is not None else 0
    if "snr" in cfg:
        cfg["snr"] = ",".join("inf" if math.isinf(v) else repr(v) for v in parse_snr_list(cfg["snr"]))
    return cfg


def execute(command: str, cfg: dict, out: Path) -> dict:
    """Run ``command`` and write its manifest; returns the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files = COMMANDS[command](cfg, out)
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "outputs": files,
        "version": _version(),
        "duration_s": round(time.perf_counter() - start, 3),
    }
    write_json(out / MANIFEST, manifest)
    return manifest


def run_command(argv: list[str] | None = None) -> tuple[int, dict | None]:
    """Parse ``argv`` and run it; returns ``(exit status, manifest)``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), None
    try:
        if args.command == "replay":
            try:
                man = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            except (FileNotFoundError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read manifest {args.manifest}: {exc}") from exc
            if man.get("command") not in COMMANDS:
                raise ConfigurationError(f"manifest names unknown command {man.get('command')!r}")
            out = Path(args.out) if args.out else Path(args.manifest).parent
            return 0, execute(man["command"], man["config"], out)
        cfg = resolve_config(args.command, args)
        return 0, execute(args.command, cfg, Path(args.out))
    except (SenseLabError, OSError) as exc:
        print(f"sense-lab {args.command}: error: {exc}", file=sys.stderr)
        return 1, None


def main(argv: list[str] | None = None) -> int:
    return run_command(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
