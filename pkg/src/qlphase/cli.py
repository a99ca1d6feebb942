"""Command line entry point: ``python -m qlphase <command> [--config FILE] ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .bounds import fisher
from .designs import holographic_design, random_group_design
from .estimate import holographic_estimate, reconstruct
from .field import mse, random_field
from .forward import simulate
from .io import load_bundle, save_bundle, write_counts_binary, write_trace_csv


def _design_from(cfg: harness.ExperimentConfig, x=None):
    n = cfg.n_list[0]
    if cfg.holography_rho_factor:
        amp = 1.0 if x is None else float(np.max(np.abs(x.values)))
        return holographic_design(n, cfg.holography_rho_factor * amp)
    L = cfg.L_list[0]
    return random_group_design(n, L, cfg.q_for(L), seed=cfg.seed)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def cmd_design(cfg, args):
    _emit(_design_from(cfg).to_json(), cfg.output_path)


def cmd_simulate(cfg, args):
    if cfg.output_path is None:
        raise ValueError("simulate needs --out")
    x = random_field(cfg.n_list[0], cfg.photons_per_mode, cfg.seed + 1)
    design = _design_from(cfg, x)
    rec = simulate(design, x, cfg.seed + 2)
    save_bundle(cfg.output_path, design, x, rec)
    if args.counts_bin:
        write_counts_binary(args.counts_bin, rec.counts)


def cmd_reconstruct(cfg, args):
    if args.input is None:
        raise ValueError("reconstruct needs --input (a bundle written by simulate)")
    b = load_bundle(args.input)
    design, rec = b["design"], b["record"]
    report = {}
    if design.reference is not None and design.q_rows == 4 and design.l_cols == 1:
        est = holographic_estimate(design, rec.counts)
        gauge = "fixed"
    else:
        out = reconstruct(design, rec.counts, cfg.optimizer, seed=cfg.seed)
        est, gauge = out.field, "aligned"
        report.update(iters=out.iters, final_loss=out.final_loss)
        if args.trace:
            write_trace_csv(args.trace, out.loss_trace)
    report["estimate"] = json.loads(est.to_json())
    if "field" in b:
        report["mse_per_mode"] = mse(est, b["field"], gauge).mse_per_mode
    _emit(json.dumps(report), cfg.output_path)


def cmd_bound(cfg, args):
    if args.input is not None:
        b = load_bundle(args.input)
        design, x = b["design"], b["field"]
    else:
        x = random_field(cfg.n_list[0], cfg.photons_per_mode, cfg.seed + 1)
        design = _design_from(cfg, x)
    _emit(fisher(design, x).to_json(), cfg.output_path)


def cmd_sweep(cfg, args):
    rows = harness.run_sweep(cfg)
    if cfg.output_path is None:
        sys.stdout.write(harness._write_csv(rows, harness.SWEEP_COLUMNS, None))


def cmd_multiscale(cfg, args):
    rows = harness.run_multiscale(cfg)
    if cfg.output_path is None:
        sys.stdout.write(harness._write_csv(rows, harness.MULTISCALE_COLUMNS, None))


COMMANDS = {
    "design": cmd_design,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "multiscale": cmd_multiscale,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlphase", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--out", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--trials", type=int)
        s.add_argument("--threads", type=int)
        if name in ("reconstruct", "bound"):
            s.add_argument("--input", type=Path, help="bundle written by 'simulate'")
        if name == "reconstruct":
            s.add_argument("--trace", type=Path, help="write the loss trace as CSV")
        if name == "simulate":
            s.add_argument("--counts-bin", type=Path, help="also write counts in the binary format")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = harness.load_config(args.config, mode=args.command, seed=args.seed, trials=args.trials,
                                  threads=args.threads,
                                  output_path=None if args.out is None else str(args.out))
        COMMANDS[args.command](cfg, args)
    except Exception as exc:  # every failure becomes one JSON line on stderr
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": args.command}) + "\n")
        return 1
    return 0
