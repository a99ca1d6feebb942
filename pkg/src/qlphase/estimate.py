"""Field reconstruction from photon counts.

Phase retrieval is solved by Adam on the real and imaginary parts of the
field. Phase-quadrature holography has a closed-form linear estimator.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, asdict

import numpy as np

from .designs import MeasurementDesign
from .field import ComplexField
from .forward import adjoint, amplitudes

log = logging.getLogger(__name__)

EPS_RATE = 1e-9
LOSSES = ("poisson_nll", "intensity_lsq")


class OptimizationError(RuntimeError):
    """Every restart of the optimizer diverged."""


@dataclass(frozen=True)
class OptimizerConfig:
    # step sizes are in units of the rms mode amplitude sqrt(sum(d) / N)
    step_size: float = 0.05
    final_step_fraction: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iters: int = 1500
    tol: float = 1e-12
    loss: str = "poisson_nll"
    # basin-finding phase run before ``loss``; LSQ has far fewer spurious minima
    warmup_loss: str = "intensity_lsq"
    warmup_iters: int = 500
    init: str = "random_gaussian"
    restarts: int = 3

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.final_step_fraction <= 1:
            raise ValueError("final_step_fraction must lie in (0, 1]")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0 or not self.tol > 0:
            raise ValueError("epsilon and tol must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if self.loss not in LOSSES or self.warmup_loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")
        if self.init not in ("random_gaussian",):
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Reconstruction:
    field: ComplexField
    loss_trace: np.ndarray
    final_loss: float
    iters: int
    restart: int
    step_size: float

    @property
    def smoothed_trace(self) -> np.ndarray:
        return np.minimum.accumulate(self.loss_trace)


def loss_and_gradient(design: MeasurementDesign, counts, x, loss: str = "poisson_nll"):
    """Loss and its gradient ``dF/dr + 1j*dF/di`` at field ``x``.

    ``poisson_nll`` is ``sum(I - d*log I)`` with rates floored at ``EPS_RATE``;
    ``intensity_lsq`` is ``sum((I - d)**2)``.  For ``I = |y|^2`` with
    ``y = rho + A x`` the gradient is ``2 A^H (w * y)`` where ``w = dF/dI``.
    """
    d = np.asarray(counts, dtype=float).ravel()
    y = amplitudes(design, x)
    I = y.real**2 + y.imag**2
    if d.size != I.size:
        raise ValueError(f"expected {I.size} counts, got {d.size}")
    if loss == "poisson_nll":
        Ic = np.maximum(I, EPS_RATE)
        value = float(np.sum(Ic - d * np.log(Ic)))
        w = 1.0 - d / Ic
    elif loss == "intensity_lsq":
        r = I - d
        value = float(np.sum(r * r))
        w = 2.0 * r
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, 2.0 * adjoint(design, w * y)


def _signal_energy(design: MeasurementDesign, d: np.ndarray) -> float:
    total = float(d.sum())
    if design.reference is not None:
        total -= float(np.sum(design.reference**2))
    return max(total, 0.0)


def _adam(design, d, z0, scale, cfg: OptimizerConfig, step: float, loss: str, max_iters: int):
    """Run Adam on the stacked real vector ``[Re z, Im z]`` with cosine step decay."""
    n = z0.size
    theta = np.concatenate([z0.real, z0.imag])
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace = np.empty(max_iters)
    b1, b2 = cfg.beta1, cfg.beta2
    floor = cfg.final_step_fraction
    window = 100
    it = 0
    for it in range(1, max_iters + 1):
        x = (theta[:n] + 1j * theta[n:]) * scale
        f, g = loss_and_gradient(design, d, x, loss)
        trace[it - 1] = f
        if not math.isfinite(f):
            return None, trace[:it], it
        g = g * scale
        grad = np.concatenate([g.real, g.imag])
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        frac = (it - 1) / max(max_iters - 1, 1)
        lr = step * (floor + (1 - floor) * 0.5 * (1 + math.cos(math.pi * frac)))
        mhat = m / (1 - b1**it)
        vhat = v / (1 - b2**it)
        theta = theta - lr * mhat / (np.sqrt(vhat) + cfg.epsilon)
        if it > 2 * window and it % window == 0:
            old, new = trace[it - 2 * window:it - window].min(), trace[it - window:it].min()
            if old - new <= cfg.tol * max(abs(new), 1.0) and frac > 0.5:
                break
    z = theta[:n] + 1j * theta[n:]
    return z, trace[:it], it


def reconstruct(design: MeasurementDesign, counts, cfg: OptimizerConfig | None = None,
                seed: int = 0) -> Reconstruction:
    """Estimate the field from photon counts by Adam, keeping the best of several restarts.

    Each restart starts from a complex Gaussian whose energy equals the
    measured signal energy. A restart whose loss becomes non-finite is retried
    with half the step size.
    """
    cfg = cfg or OptimizerConfig()
    d = np.asarray(counts, dtype=float).ravel()
    if d.size != design.m_rows:
        raise ValueError(f"expected {design.m_rows} counts, got {d.size}")
    n = design.n_modes
    scale = math.sqrt(max(_signal_energy(design, d), 1e-12) / n)
    rng = np.random.default_rng(seed)
    best = None
    for r in range(cfg.restarts):
        z0 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        z0 *= math.sqrt(n) / max(np.linalg.norm(z0), 1e-300)
        step = cfg.step_size
        for _ in range(6):
            z, trace, iters = z0, np.empty(0), 0
            if cfg.warmup_iters:
                z, trace, iters = _adam(design, d, z, scale, cfg, step, cfg.warmup_loss, cfg.warmup_iters)
            if z is not None:
                z, trace2, iters2 = _adam(design, d, z, scale, cfg, step, cfg.loss, cfg.max_iters)
                trace, iters = trace2, iters + iters2
            if z is not None and np.all(np.isfinite(z)):
                x = z * scale
                break
            log.warning("restart %d diverged at step %.3g; halving", r, step)
            step /= 2
        else:
            continue
        final, _ = loss_and_gradient(design, d, x, cfg.loss)
        if best is None or final < best.final_loss:
            best = Reconstruction(ComplexField(x), trace, final, iters, r, step)
    if best is None:
        raise OptimizationError("all restarts diverged")
    return best


def holographic_estimate(design: MeasurementDesign, counts) -> ComplexField:
    """Linear quadrature estimate ``x = ((d0 - d2) + 1j*(d3 - d1)) / (2 rho)``.

    Rows of each mode carry codes ``(1, j, -1, -j)/2`` against reference rho,
    so ``|rho + c x/2|^2`` differences cancel the ``|x|^2/4`` term exactly.
    """
    if design.l_cols != 1 or design.q_rows != 4 or design.reference is None:
        raise ValueError("design is not a quadrature holography design")
    rho = design.reference.reshape(-1, 4)
    if np.any(rho <= 0):
        raise ValueError("holographic estimate needs a positive reference")
    d = np.asarray(counts, dtype=float).reshape(-1, 4)
    s = design.column_scale[design.members[:, 0]]
    per_group = ((d[:, 0] - d[:, 2]) / (2 * rho[:, 0]) + 1j * (d[:, 3] - d[:, 1]) / (2 * rho[:, 1])) / s
    out = np.zeros(design.n_modes, dtype=complex)
    np.add.at(out, design.members[:, 0], per_group)
    return ComplexField(out / np.bincount(design.members[:, 0], minlength=design.n_modes))
