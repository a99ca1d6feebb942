"""Block-based phase retrieval with hierarchical relative-phase stitching.

The field is split into contiguous rank-0 blocks of ``2**q`` modes. Each block
is measured by its own random pair design; every tree level ``k`` adds
cross-block pairs linking rank-0 block ``b`` in a left sibling to block
``b + 2**(k-1)`` in the right sibling. Blocks are reconstructed independently
and then rotated into a common gauge bottom-up.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .designs import MeasurementDesign, dft_code, random_group_design
from .field import ComplexField, as_values
from .forward import intensities, sample_counts
from .estimate import OptimizerConfig, reconstruct


class UnreliablePhaseError(RuntimeError):
    def __init__(self, message, blocks=None):
        super().__init__(message)
        self.blocks = blocks


@dataclass(frozen=True)
class CrossLink:
    level: int
    block_a: int
    block_b: int
    design: MeasurementDesign  # over the 2*block_size modes [block_a, block_b]


@dataclass(frozen=True, eq=False)
class MultiscalePlan:
    n_modes: int
    q: int
    seed: int
    blocks: list[tuple[int, int]]
    intra_designs: list[MeasurementDesign]
    cross_links: list[CrossLink]
    cross_energy_fraction: float

    @property
    def block_size(self) -> int:
        return 2**self.q

    @property
    def n_levels(self) -> int:
        return int(round(math.log2(len(self.blocks))))

    def links_at(self, level: int) -> list[CrossLink]:
        return [c for c in self.cross_links if c.level == level]

    def sibling_pairs(self, level: int) -> list[tuple[list[int], list[int]]]:
        """Left/right rank-0 block lists of each merge at ``level`` (1-based)."""
        half = 2 ** (level - 1)
        out = []
        for start in range(0, len(self.blocks), 2 * half):
            out.append((list(range(start, start + half)), list(range(start + half, start + 2 * half))))
        return out

    def to_dict(self) -> dict:
        return {
            "n": self.n_modes,
            "q": self.q,
            "seed": self.seed,
            "cross_energy_fraction": self.cross_energy_fraction,
            "blocks": [list(b) for b in self.blocks],
            "intra_designs": [d.to_dict() for d in self.intra_designs],
            "cross_links": [
                {"level": c.level, "block_a": c.block_a, "block_b": c.block_b, "design": c.design.to_dict()}
                for c in self.cross_links
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _cross_design(block_size: int, energy: float) -> MeasurementDesign:
    # mode i of block A pairs with modes i and i+1 (mod size) of block B
    i = np.arange(block_size)
    members = np.concatenate([
        np.stack([i, block_size + i], axis=1),
        np.stack([i, block_size + (i + 1) % block_size], axis=1),
    ])
    if block_size == 1:
        members = members[:1]
    deg = np.bincount(members.ravel(), minlength=2 * block_size)
    scale = np.sqrt(energy / deg)
    return MeasurementDesign(2 * block_size, members, dft_code(3, 2).entries, scale,
                             meta={"kind": "cross"})


def build_plan(n: int, q: int, seed: int = 0, cross_energy_fraction: float = 0.05) -> MultiscalePlan:
    """Block designs plus per-level cross links for ``n = 2**k`` modes.

    Intra-block designs get ``1 - cross_energy_fraction`` of each mode's
    intensity and the cross links share the rest evenly across levels. With a
    single block there are no cross links and the block gets everything.
    """
    k = int(round(math.log2(n))) if n >= 1 else -1
    if n < 2 or 2**k != n:
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    if not 1 <= q <= k:
        raise ValueError(f"need 1 <= q <= log2(n) = {k}, got q={q}")
    if not 0 < cross_energy_fraction < 1:
        raise ValueError("cross_energy_fraction must lie in (0, 1)")
    size = 2**q
    n_blocks = n // size
    levels = k - q
    intra_energy = 1.0 if levels == 0 else 1.0 - cross_energy_fraction
    blocks = [(b * size, (b + 1) * size) for b in range(n_blocks)]
    intra = [random_group_design(size, 2, 3, seed=seed + b).scaled(math.sqrt(intra_energy))
             for b in range(n_blocks)]
    links = []
    for level in range(1, levels + 1):
        half = 2 ** (level - 1)
        design = _cross_design(size, cross_energy_fraction / levels)
        for start in range(0, n_blocks, 2 * half):
            for b in range(start, start + half):
                links.append(CrossLink(level, b, b + half, design))
    return MultiscalePlan(n, q, seed, blocks, intra, links,
                          cross_energy_fraction if levels else 0.0)


def plan_intensities(plan: MultiscalePlan, x) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Expected intensities of every intra design and every cross link."""
    v = as_values(x)
    intra = [intensities(d, v[a:b]) for d, (a, b) in zip(plan.intra_designs, plan.blocks)]
    cross = []
    for c in plan.cross_links:
        (a0, a1), (b0, b1) = plan.blocks[c.block_a], plan.blocks[c.block_b]
        cross.append(intensities(c.design, np.concatenate([v[a0:a1], v[b0:b1]])))
    return intra, cross


def simulate_plan(plan: MultiscalePlan, x, seed: int):
    """Poisson counts for every intra design and cross link, one stream each."""
    intra_I, cross_I = plan_intensities(plan, x)
    seeds = np.random.SeedSequence(seed).spawn(len(intra_I) + len(cross_I))
    draw = lambda I, ss: sample_counts(I, int(ss.generate_state(1)[0])).counts
    intra = [draw(I, ss) for I, ss in zip(intra_I, seeds)]
    cross = [draw(I, ss) for I, ss in zip(cross_I, seeds[len(intra_I):])]
    return intra, cross


WEIGHTINGS = ("inverse_variance", "unit")


def _pair_phasors(block_a_estimate, block_b_estimate, cross_counts, cross_design: MeasurementDesign,
                  weighting: str, min_signal: float):
    ua, ub = as_values(block_a_estimate), as_values(block_b_estimate)
    u = np.concatenate([ua, ub])
    if u.size != cross_design.n_modes:
        raise ValueError("block estimates do not match the cross design")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    d = np.asarray(cross_counts, dtype=float).reshape(cross_design.n_groups, cross_design.q_rows)
    mem = cross_design.members
    s = cross_design.column_scale
    alpha = cross_design.code[None, :, 0] * s[mem[:, 0]][:, None]
    beta = cross_design.code[None, :, 1] * s[mem[:, 1]][:, None]
    # project the Q intensities on the interference term: z ~ conj(x_a) x_b
    c = alpha.conj() * beta
    z = np.sum(d * c.conj(), axis=1) / np.sum(np.abs(c) ** 2, axis=1)
    xa, xb = u[mem[:, 0]], u[mem[:, 1]]
    p = z * xa * xb.conj()
    mag = np.abs(p)
    ok = mag > min_signal
    if not np.any(ok):
        raise UnreliablePhaseError("no cross pair carries usable interference")
    unit = p[ok] / mag[ok]
    if weighting == "unit":
        return unit
    ia, ib = np.abs(xa[ok]) ** 2, np.abs(xb[ok]) ** 2
    # phase variance of one pair scales as (|x_a|^2 + |x_b|^2) / (|x_a|^2 |x_b|^2)
    return unit * (ia * ib / (ia + ib))


def relative_phase(block_a_estimate, block_b_estimate, cross_counts, cross_design: MeasurementDesign,
                   weighting: str = "inverse_variance", min_signal: float = 1e-9) -> float:
    """Phase ``phi`` such that ``exp(1j*phi) * block_b_estimate`` shares block A's gauge.

    Each cross pair's ``Q`` intensities give ``conj(x_a) x_b`` by projecting on
    the interference term, and the two local estimates turn that into a pair
    phasor. The result is the circular mean of the pair phasors, either plain
    (``weighting="unit"``) or weighted by each pair's inverse phase variance.
    """
    ph = _pair_phasors(block_a_estimate, block_b_estimate, cross_counts, cross_design, weighting, min_signal)
    return float(np.angle(np.sum(ph)))


@dataclass
class StitchResult:
    field: ComplexField
    log: list[dict] = field(default_factory=list)

    def log_csv(self) -> str:
        lines = ["level,block_pair,phase,n_connections"]
        for row in self.log:
            lines.append(f"{row['level']},{row['block_pair']},{row['phase']!r},{row['n_connections']}")
        return "\n".join(lines) + "\n"


def _refine_block_phases(n_blocks: int, links: list[tuple[int, int, float, float]], theta: np.ndarray,
                         sweeps: int = 5) -> np.ndarray:
    """Weighted least-squares phase synchronisation over all rank-0 links.

    ``links`` holds ``(a, b, phi_ab, weight)`` with ``theta_b - theta_a ~ phi_ab``;
    ``theta[0]`` stays fixed. Residuals are wrapped so the linear solve is a
    Gauss-Newton step on the circle.
    """
    a = np.array([l[0] for l in links])
    b = np.array([l[1] for l in links])
    phi = np.array([l[2] for l in links])
    w = np.array([l[3] for l in links])
    B = np.zeros((len(links), n_blocks))
    B[np.arange(len(links)), b] = 1.0
    B[np.arange(len(links)), a] -= 1.0
    lap = (B.T * w) @ B
    theta = theta.copy()
    for _ in range(sweeps):
        r = np.angle(np.exp(1j * (phi - (theta[b] - theta[a]))))
        rhs = B.T @ (w * r)
        delta = np.zeros(n_blocks)
        delta[1:] = np.linalg.solve(lap[1:, 1:], rhs[1:])
        theta += delta
        if np.max(np.abs(delta)) < 1e-12:
            break
    return theta


def stitch(plan: MultiscalePlan, intra_estimates, cross_counts,
           weighting: str = "inverse_variance", refine: bool = False) -> StitchResult:
    """Merge block estimates bottom-up over the pairing tree.

    ``intra_estimates`` maps (or lists) block index to that block's estimate;
    ``cross_counts`` lists counts aligned with ``plan.cross_links`` or maps
    ``(level, block_a, block_b)`` to counts. At every merge the rank-0
    relative phases of all linked block pairs are averaged on the circle and
    the right subtree is rotated by the result. With inverse-variance
    weighting each rank-0 phase enters with its total pair weight; with unit
    weighting every rank-0 pair counts equally.

    ``refine=True`` follows the tree pass with a least-squares phase
    synchronisation of the rank-0 blocks over every cross link at once, which
    also uses the loops the higher-level links close; the intra-block
    estimates are still only rotated.
    """
    if isinstance(intra_estimates, dict):
        est = {int(b): as_values(v).copy() for b, v in intra_estimates.items()}
    else:
        est = {b: as_values(v).copy() for b, v in enumerate(intra_estimates)}
    if sorted(est) != list(range(len(plan.blocks))):
        raise ValueError("need one estimate per block")
    if isinstance(cross_counts, dict):
        counts = {k: np.asarray(v) for k, v in cross_counts.items()}
    else:
        counts = {(c.level, c.block_a, c.block_b): np.asarray(v) for c, v in zip(plan.cross_links, cross_counts)}
    original = {b: v.copy() for b, v in est.items()}
    rank0_links = []
    log = []
    for level in range(1, plan.n_levels + 1):
        links = {(c.block_a, c.block_b): c for c in plan.links_at(level)}
        for left, right in plan.sibling_pairs(level):
            phasors = []
            n_conn = 0
            for a, b in zip(left, right):
                link = links[(a, b)]
                try:
                    ph = _pair_phasors(est[a], est[b], counts[(level, a, b)], link.design, weighting, 1e-9)
                except UnreliablePhaseError as exc:
                    raise UnreliablePhaseError(f"level {level}, blocks {a}-{b}: {exc}", (level, a, b)) from exc
                total = np.sum(ph)
                phasors.append(total / abs(total) if weighting == "unit" else total)
                if refine:
                    raw = _pair_phasors(original[a], original[b], counts[(level, a, b)], link.design,
                                        weighting, 1e-9).sum()
                    rank0_links.append((a, b, float(np.angle(raw)),
                                        1.0 if weighting == "unit" else float(abs(raw))))
                n_conn += link.design.n_groups
            phi = float(np.angle(np.sum(phasors)))
            rot = np.exp(1j * phi)
            for b in right:
                est[b] = est[b] * rot
            log.append({"level": level, "block_pair": f"{left[0]}-{right[0]}", "phase": phi,
                        "n_connections": n_conn})
    if refine and rank0_links:
        n_blocks = len(plan.blocks)
        theta = np.array([np.angle(np.vdot(original[b], est[b])) for b in range(n_blocks)])
        theta = _refine_block_phases(n_blocks, rank0_links, theta - theta[0])
        est = {b: original[b] * np.exp(1j * theta[b]) for b in range(n_blocks)}
    full = np.concatenate([est[b] for b in range(len(plan.blocks))])
    return StitchResult(ComplexField(full), log)


def reconstruct_multiscale(plan: MultiscalePlan, intra_counts, cross_counts,
                           cfg: OptimizerConfig | None = None, seed: int = 0,
                           weighting: str = "inverse_variance", refine: bool = False) -> StitchResult:
    """Independent block reconstructions followed by :func:`stitch`."""
    ests = [reconstruct(d, c, cfg, seed=seed + b).field
            for b, (d, c) in enumerate(zip(plan.intra_designs, intra_counts))]
    return stitch(plan, ests, cross_counts, weighting, refine)
