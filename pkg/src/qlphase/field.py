"""Complex mode-amplitude vectors, global-phase alignment and error metrics.

Fields are stored in sqrt(photon) units so that ``|x_n|**2`` is directly the
expected photon count carried by mode ``n``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class DegenerateGaugeWarning(UserWarning):
    """Raised (as a warning) when the estimate/truth inner product vanishes."""


@dataclass(frozen=True)
class ComplexField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size == 0:
            raise ValueError("field must have at least one mode")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_modes(self) -> int:
        return self.values.size

    @property
    def intensity(self) -> float:
        return float(np.vdot(self.values, self.values).real)

    def __len__(self):
        return self.n_modes

    def rotated(self, phase: float) -> "ComplexField":
        return ComplexField(self.values * np.exp(1j * phase))

    def to_json(self) -> str:
        return json.dumps([[float(z.real), float(z.imag)] for z in self.values])

    @classmethod
    def from_json(cls, text: str) -> "ComplexField":
        pairs = np.asarray(json.loads(text), dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0] + 1j * pairs[:, 1])


@dataclass(frozen=True)
class ErrorReport:
    mse_total: float
    mse_per_mode: float
    gauge_phase: float
    degenerate: bool = False


def as_values(x) -> np.ndarray:
    if isinstance(x, ComplexField):
        return x.values
    return np.asarray(x, dtype=complex).ravel()


def random_field(n: int, photons_per_mode: float, seed: int) -> ComplexField:
    """Draw ``n`` i.i.d. circular complex Gaussian modes with ``E|x|^2 = photons_per_mode``."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not photons_per_mode > 0:
        raise ValueError(f"photons_per_mode must be positive, got {photons_per_mode}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return ComplexField(z * np.sqrt(photons_per_mode / 2.0))


def gauge_align(estimate, truth) -> tuple[ComplexField, float, bool]:
    """Rotate ``estimate`` by the unit phase that maximizes Re<estimate, truth>.

    Returns ``(aligned, gauge_phase, degenerate)``. The phase applied is
    ``-arg(sum conj(truth) * estimate)``; when that inner product is zero the
    phase is taken as 0 and ``degenerate`` is True.
    """
    est, tru = as_values(estimate), as_values(truth)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.size} vs {tru.size}")
    inner = np.vdot(tru, est)
    scale = max(np.linalg.norm(est) * np.linalg.norm(tru), np.finfo(float).tiny)
    if abs(inner) <= 1e-14 * scale:
        return ComplexField(est), 0.0, True
    phase = -float(np.angle(inner))
    if phase <= -np.pi:
        phase += 2 * np.pi
    return ComplexField(est * np.exp(1j * phase)), phase, False


def mse(estimate, truth, gauge: str = "aligned") -> ErrorReport:
    """Squared error summed over modes.

    ``gauge`` selects how the unobservable global phase is handled: ``fixed``
    compares as is, ``aligned`` applies :func:`gauge_align` first, ``mode0``
    rotates the estimate so that mode 0 has the true phase.
    """
    est, tru = as_values(estimate), as_values(truth)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.size} vs {tru.size}")
    phase, degenerate = 0.0, False
    if gauge == "aligned":
        aligned, phase, degenerate = gauge_align(est, tru)
        est = aligned.values
    elif gauge == "mode0":
        if est[0] != 0:
            phase = float(np.angle(tru[0]) - np.angle(est[0]))
            est = est * np.exp(1j * phase)
        else:
            degenerate = True
    elif gauge != "fixed":
        raise ValueError(f"gauge must be 'fixed', 'aligned' or 'mode0', got {gauge!r}")
    total = float(np.sum(np.abs(est - tru) ** 2))
    return ErrorReport(total, total / tru.size, phase, degenerate)
