"""Experiment driver: configuration, parameter sweeps and CSV tables.

Every trial derives all of its random streams from ``(n, L, seed)`` alone, so
any CSV row can be replayed on its own with :func:`run_trial`.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .bounds import fisher, fisher_composite
from .designs import holographic_design, random_group_design
from .estimate import OptimizerConfig, holographic_estimate, reconstruct
from .field import mse, random_field
from .forward import intensities, sample_counts, simulate
from .multiscale import build_plan, simulate_plan, stitch

MODES = ("design", "simulate", "reconstruct", "bound", "sweep", "multiscale")
Q_POLICIES = ("three_for_pairs", "q_equals_l", "explicit")

SWEEP_COLUMNS = ["n", "L", "Q", "trial", "seed", "mse_per_mode", "crlb_per_mode", "time_per_mode_us",
                 "iters", "final_loss", "crlb_mode0_per_mode"]
MULTISCALE_COLUMNS = ["n", "q", "trial", "seed", "mse_per_mode_stitched", "mse_per_mode_refined",
                      "mse_per_mode_global", "penalty_db", "penalty_refined_db", "crlb_floor_db"]


@dataclass
class ExperimentConfig:
    mode: str = "sweep"
    n_list: list = field(default_factory=lambda: [64])
    L_list: list = field(default_factory=lambda: [2])
    Q_policy: str = "three_for_pairs"
    Q_explicit: int | None = None
    photons_per_mode: float = 1e4
    trials: int = 1
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    holography_rho_factor: float | None = None
    output_path: str | None = None
    q_list: list = field(default_factory=lambda: [5])
    cross_energy_fraction: float = 0.05
    bound_max_n: int = 2**10
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.Q_policy not in Q_POLICIES:
            raise ValueError(f"Q_policy must be one of {Q_POLICIES}")
        if self.Q_policy == "explicit" and not self.Q_explicit:
            raise ValueError("Q_policy 'explicit' needs Q_explicit")
        if any(int(n) < 2 for n in self.n_list) or any(int(L) < 2 for L in self.L_list):
            raise ValueError("n_list and L_list entries must be >= 2")
        if self.trials < 1 or self.threads < 1:
            raise ValueError("trials and threads must be >= 1")
        if not self.photons_per_mode > 0:
            raise ValueError("photons_per_mode must be positive")
        self.n_list = [int(n) for n in self.n_list]
        self.L_list = [int(L) for L in self.L_list]
        self.q_list = [int(q) for q in self.q_list]

    def q_for(self, L: int) -> int:
        if self.Q_policy == "explicit":
            return int(self.Q_explicit)
        if self.Q_policy == "q_equals_l":
            return L
        return 3 if L == 2 else L

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["optimizer"] = self.optimizer.to_dict()
        return d


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a YAML config; keyword overrides that are not None win."""
    data = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
    unknown = set(data) - {f.name for f in fields(ExperimentConfig)}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)


def trial_seed(base: int, n: int, L: int, trial: int) -> int:
    return int(np.random.SeedSequence([base, n, L, trial]).generate_state(1)[0])


def _streams(n: int, L: int, seed: int):
    ss = np.random.SeedSequence([seed, n, L])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(4)]


def run_trial(n: int, L: int, Q: int, seed: int, photons_per_mode: float, opt: OptimizerConfig,
              bound_max_n: int = 2**10) -> dict:
    """One random-design phase-retrieval trial; the row is a function of its arguments only."""
    s_design, s_field, s_counts, s_recon = _streams(n, L, seed)
    design = random_group_design(n, L, Q, seed=s_design)
    x = random_field(n, photons_per_mode, s_field)
    rec = simulate(design, x, s_counts)
    t0 = time.perf_counter()
    out = reconstruct(design, rec.counts, opt, seed=s_recon)
    elapsed = time.perf_counter() - t0
    crlb = crlb0 = float("nan")
    if n <= bound_max_n:
        fb = fisher(design, x)
        crlb, crlb0 = fb.crlb_trace_aligned / n, fb.crlb_trace_gauge_reduced / n
    return {
        "n": n, "L": L, "Q": Q, "seed": seed,
        "mse_per_mode": mse(out.field, x).mse_per_mode,
        "crlb_per_mode": crlb,
        "time_per_mode_us": 1e6 * elapsed / n,
        "iters": out.iters,
        "final_loss": out.final_loss,
        "crlb_mode0_per_mode": crlb0,
    }


def run_holography_trial(n: int, seed: int, photons_per_mode: float, rho_factor: float) -> dict:
    """Quadrature holography with reference ``rho_factor * max|x|`` and the linear estimator."""
    s_field, s_counts = _streams(n, 1, seed)[:2]
    x = random_field(n, photons_per_mode, s_field)
    rho = rho_factor * float(np.max(np.abs(x.values)))
    design = holographic_design(n, rho)
    rec = simulate(design, x, s_counts)
    t0 = time.perf_counter()
    est = holographic_estimate(design, rec.counts)
    elapsed = time.perf_counter() - t0
    return {
        "n": n, "L": 1, "Q": 4, "seed": seed,
        "mse_per_mode": mse(est, x, gauge="fixed").mse_per_mode,
        "crlb_per_mode": fisher(design, x).crlb_trace_full / n if n <= 2**10 else float("nan"),
        "time_per_mode_us": 1e6 * elapsed / n,
        "iters": 0,
        "final_loss": float("nan"),
        "crlb_mode0_per_mode": float("nan"),
    }


def _check_writable(path) -> None:
    if path is None:
        return
    p = Path(path)
    try:
        with open(p, "a"):
            pass
    except OSError as exc:
        raise OSError(f"cannot write output {p}: {exc}") from exc


def _run_tasks(fn, tasks, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def _write_csv(rows: list[dict], columns: list[str], path) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    """All (n, L, trial) combinations, plus holography rows when configured.

    Holography rows carry ``L = 1, Q = 4``. Rows are sorted before writing so
    the CSV does not depend on worker completion order.
    """
    _check_writable(cfg.output_path)
    tasks, holo = [], []
    for n in cfg.n_list:
        for L in cfg.L_list:
            for t in range(cfg.trials):
                s = trial_seed(cfg.seed, n, L, t)
                tasks.append((n, L, cfg.q_for(L), s, cfg.photons_per_mode, cfg.optimizer, cfg.bound_max_n))
        if cfg.holography_rho_factor:
            for t in range(cfg.trials):
                holo.append((n, trial_seed(cfg.seed, n, 1, t), cfg.photons_per_mode, cfg.holography_rho_factor))
    rows = _run_tasks(run_trial, tasks, cfg.threads) + _run_tasks(run_holography_trial, holo, cfg.threads)
    trials = [t for n in cfg.n_list for L in cfg.L_list for t in range(cfg.trials)]
    trials += [t for n in cfg.n_list for t in range(cfg.trials)] if holo else []
    for r, t in zip(rows, trials):
        r["trial"] = t
    rows.sort(key=lambda r: (r["n"], r["L"], r["trial"]))
    _write_csv(rows, SWEEP_COLUMNS, cfg.output_path)
    return rows


def run_multiscale_trial(n: int, q: int, seed: int, photons_per_mode: float, cross_energy_fraction: float,
                         opt: OptimizerConfig, bound_max_n: int = 2**10) -> dict:
    """Stitched block reconstruction against a single global pair design on the same field.

    With a single block (``q = log2 n``) the global run uses the very same
    design, counts and optimizer seed, so the penalty is exactly 0 dB.
    """
    s_plan, s_field, s_counts, s_recon = _streams(n, q, seed)
    x = random_field(n, photons_per_mode, s_field)
    plan = build_plan(n, q, s_plan, cross_energy_fraction)
    intra, cross = simulate_plan(plan, x, s_counts)
    ests = [reconstruct(d, c, opt, seed=s_recon + b).field
            for b, (d, c) in enumerate(zip(plan.intra_designs, intra))]
    tree = stitch(plan, ests, cross)
    refined = stitch(plan, ests, cross, refine=True)

    g = random_group_design(n, 2, 3, seed=s_plan)
    # the first spawned stream is the one block 0 uses in simulate_plan
    g_seed = int(np.random.SeedSequence(s_counts).spawn(1)[0].generate_state(1)[0])
    g_counts = sample_counts(intensities(g, x), g_seed).counts
    g_est = reconstruct(g, g_counts, opt, seed=s_recon).field

    m_tree = mse(tree.field, x).mse_per_mode
    m_ref = mse(refined.field, x).mse_per_mode
    m_glob = mse(g_est, x).mse_per_mode
    floor = float("nan")
    if n <= bound_max_n and plan.n_levels:
        parts = [(d, np.arange(a, b)) for d, (a, b) in zip(plan.intra_designs, plan.blocks)]
        for c in plan.cross_links:
            (a0, a1), (b0, b1) = plan.blocks[c.block_a], plan.blocks[c.block_b]
            parts.append((c.design, np.r_[a0:a1, b0:b1]))
        ms_bound = fisher_composite(parts, x).crlb_trace_aligned
        g_bound = fisher(g, x).crlb_trace_aligned
        floor = 10 * math.log10(ms_bound / g_bound)
    elif not plan.n_levels:
        floor = 0.0
    return {
        "n": n, "q": q, "seed": seed,
        "mse_per_mode_stitched": m_tree,
        "mse_per_mode_refined": m_ref,
        "mse_per_mode_global": m_glob,
        "penalty_db": 10 * math.log10(m_tree / m_glob),
        "penalty_refined_db": 10 * math.log10(m_ref / m_glob),
        "crlb_floor_db": floor,
    }


def run_multiscale(cfg: ExperimentConfig) -> list[dict]:
    """Rows per (n, q, trial): stitched, refined and global MSE and the dB penalties."""
    _check_writable(cfg.output_path)
    tasks, idx = [], []
    for n in cfg.n_list:
        k = int(round(math.log2(n)))
        if 2**k != n:
            raise ValueError(f"multiscale needs powers of two, got n={n}")
        for q in cfg.q_list:
            if q > k:
                raise ValueError(f"q={q} exceeds log2(n)={k}")
            for t in range(cfg.trials):
                tasks.append((n, q, trial_seed(cfg.seed, n, q, t), cfg.photons_per_mode,
                              cfg.cross_energy_fraction, cfg.optimizer, cfg.bound_max_n))
                idx.append(t)
    rows = _run_tasks(run_multiscale_trial, tasks, cfg.threads)
    for r, t in zip(rows, idx):
        r["trial"] = t
    rows.sort(key=lambda r: (r["n"], r["q"], r["trial"]))
    _write_csv(rows, MULTISCALE_COLUMNS, cfg.output_path)
    return rows


def median(rows: list[dict], key: str, **where) -> float:
    vals = [r[key] for r in rows if all(r[k] == v for k, v in where.items())]
    return float(np.median(vals))
