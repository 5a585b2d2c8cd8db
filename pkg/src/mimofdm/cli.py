"""Command-line front end.

Every subcommand reads a config file (or bundled preset name), writes CSV
and JSON artifacts into ``--out`` and finishes with ``manifest.json``.
Exit status: 0 success, 2 configuration error, 3 runtime or detector error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate
from .complexity import relative_complexity
from .config import (
    ConfigError,
    ExperimentConfig,
    parse_config,
    parse_config_text,
    scenario_label,
    with_overrides,
)
from .fading import generate_jakes_waveforms, write_waveform_csv
from .harness import (
    analytic_ber_rayleigh,
    cp_study,
    kappa_between,
    run_monte_carlo,
    write_curves_csv,
)
from .validation import jakes_statistics

COMMANDS = ("jakes-validate", "ofdm-ber", "cp-study", "mimo-ber", "calibrate", "complexity", "sensibility")
EXPECTED_KIND = {
    "jakes-validate": "jakes",
    "ofdm-ber": "link",
    "cp-study": "link",
    "mimo-ber": "link",
    "calibrate": "link",
    "complexity": "complexity",
    "sensibility": "link",
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def run_jakes(cfg: ExperimentConfig, out: Path, workers: int) -> list:
    js = cfg.jakes()
    jc = js.jakes_config()
    report = jakes_statistics(jc, js.num_samples, cfg.seed)
    files = []
    d = report.to_dict()
    d.pop("runtime_s")  # keep the report byte-stable; timing lives in the manifest
    _write_json(out / "jakes_report.json", d)
    files.append("jakes_report.json")
    for w in generate_jakes_waveforms(jc, js.num_samples, cfg.seed):
        name = f"waveform_{w.waveform_index}.csv"
        write_waveform_csv(out / name, w)
        files.append(name)
    return files


def _reference_csv(path: Path, curves) -> None:
    seen = set()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["order", "overhead", "ebn0_db", "analytic_ber"])
        for c in curves:
            cfg = c.config
            key = (cfg.order, cfg.ofdm.overhead)
            if key in seen:
                continue
            seen.add(key)
            for e in cfg.ebn0_db:
                wr.writerow([cfg.order, repr(cfg.ofdm.overhead), repr(e),
                             repr(analytic_ber_rayleigh(cfg.order, e, cfg.ofdm.overhead))])


def run_link(cfg: ExperimentConfig, out: Path, workers: int, reference: bool) -> list:
    curves = [run_monte_carlo(s, workers) for s in cfg.scenarios()]
    write_curves_csv(out / "ber.csv", curves)
    files = ["ber.csv"]
    if reference:
        _reference_csv(out / "reference.csv", curves)
        files.append("reference.csv")
    return files


def run_cp(cfg: ExperimentConfig, out: Path, workers: int) -> list:
    fractions = cfg.get("ofdm", "cp_fraction")
    curves, flags = [], []
    base = {}
    for s in cfg.scenarios():
        key = (s.ofdm.num_subcarriers, s.nt, s.nr, s.array_kind, s.rho, s.detector)
        base.setdefault(key, s)
    for s in base.values():
        for frac, c in cp_study(s, fractions, workers).items():
            cc = c.config
            c.config = cc.replace(scenario_id=scenario_label(cfg.name, cc.ofdm, cc.nt, cc.nr, cc.array_kind, cc.rho,
                                                             cc.detector))
            curves.append(c)
            flags.append((c.config.scenario_id, frac, c.metadata["floor"]))
    write_curves_csv(out / "ber.csv", curves)
    _reference_csv(out / "reference.csv", curves)
    with open(out / "floor.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario_id", "cp_fraction", "floor"])
        for sid, frac, fl in flags:
            wr.writerow([sid, repr(frac), int(fl)])
    return ["ber.csv", "reference.csv", "floor.csv"]


def run_calibrate(cfg: ExperimentConfig, out: Path, workers: int) -> list:
    det = cfg.get("calibration", "detector")
    grid = cfg.calibration_grid()
    if not grid:
        raise ConfigError("calibration section lists no parameter ranges")
    scen = [s for s in cfg.scenarios() if s.detector == det]
    if not scen:
        raise ConfigError(f"link.detectors must include {det!r} for calibration")
    res = calibrate(grid, scen[0], cfg.get("calibration", "trials"))
    res.write_csv(out / "calibration.csv")
    _write_json(out / "best.json", dict(detector=det, best=res.best))
    return ["calibration.csv", "best.json"]


def run_complexity(cfg: ExperimentConfig, out: Path, workers: int) -> list:
    c = cfg.values["complexity"]
    rep = relative_complexity(c["nt"], c["population_per_dim"], c["iterations"], c["modulation_order"])
    rep.write_csv(out / "flops.csv")
    return ["flops.csv"]


def run_sensibility(cfg: ExperimentConfig, out: Path, workers: int) -> list:
    e = cfg.get("sensibility", "ebn0_db")
    curves = [run_monte_carlo(s, workers) for s in cfg.scenarios(ebn0_db=(e,))]
    write_curves_csv(out / "ber.csv", curves)
    pts = {}
    for c in curves:
        s = c.config
        pts[(s.ofdm.num_subcarriers, s.ofdm.cp_fraction, s.nt, s.nr, s.array_kind, s.rho, s.detector)] = c.points[0]
    rows = []
    for (n, cp, nt, nr, arr, rho, det), p in sorted(pts.items()):
        ref = pts.get((n, cp, nt, nr, arr, 0.0, det))
        if ref is not None and rho != 0.0:
            k = kappa_between(p, ref)
            rows.append((det, arr, f"{nt}x{nr}", rho, "rho0", k))
        ml = pts.get((n, cp, nt, nr, arr, rho, "ml"))
        if ml is not None and det != "ml":
            k = kappa_between(p, ml)
            rows.append((det, arr, f"{nt}x{nr}", rho, "ml", k))
    with open(out / "kappa.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["detector", "array", "antennas", "rho", "reference", "ebn0_db", "kappa", "bound",
                     "errors_scn", "errors_ref"])
        for det, arr, ant, rho, ref, k in rows:
            wr.writerow([det, arr, ant, repr(rho), ref, repr(e), repr(k.value), k.bound, k.errors_scn, k.errors_ref])
    return ["ber.csv", "kappa.csv"]


def dispatch(command: str, cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    """Run ``command`` and write its outputs plus ``manifest.json``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown subcommand {command!r}")
    want = EXPECTED_KIND[command]
    if cfg.kind != want:
        raise ConfigError(f"{command} needs an experiment of kind {want!r}, got {cfg.kind!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if command == "jakes-validate":
        files = run_jakes(cfg, out, workers)
    elif command in ("ofdm-ber", "mimo-ber"):
        files = run_link(cfg, out, workers, reference=command == "ofdm-ber")
    elif command == "cp-study":
        files = run_cp(cfg, out, workers)
    elif command == "calibrate":
        files = run_calibrate(cfg, out, workers)
    elif command == "complexity":
        files = run_complexity(cfg, out, workers)
    else:
        files = run_sensibility(cfg, out, workers)
    manifest = dict(
        command=command,
        config=cfg.to_ini(),
        seed=cfg.seed,
        version=__version__,
        outputs={f: _sha256(out / f) for f in files},
        duration_s=time.perf_counter() - t0,
    )
    _write_json(out / "manifest.json", manifest)
    return manifest


def load_config(path: str, strict: bool) -> ExperimentConfig:
    """Config file, preset name, or a previous run's manifest.json."""
    p = Path(path)
    if p.suffix == ".json" and p.is_file():
        try:
            text = json.loads(p.read_text())["config"]
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{p}: not a run manifest ({exc})") from exc
        return parse_config_text(text, strict, str(p))
    return parse_config(path, strict)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mimofdm", description="MIMO-OFDM link simulator")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config file, preset name or manifest.json")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--strict", action="store_true", help="reject unknown config keys")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.strict)
        for w in cfg.warnings:
            print(f"warning: {w}", file=sys.stderr)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = with_overrides(cfg, experiment__seed=args.seed)
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = dispatch(args.command, cfg, Path(args.out), args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(dict(command=args.command, outputs=manifest["outputs"]), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
