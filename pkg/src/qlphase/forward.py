"""Semiclassical forward model: field amplitudes, intensities and photon counts."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .designs import MeasurementDesign
from .field import as_values


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    counts: np.ndarray
    expected_intensity: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.counts.shape != self.expected_intensity.shape:
            raise ValueError("counts and expected_intensity must have equal length")

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "counts": self.counts.tolist(),
            "expected_intensity": self.expected_intensity.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "DetectionRecord":
        d = json.loads(text)
        return cls(np.asarray(d["counts"], dtype=np.int64),
                   np.asarray(d["expected_intensity"], dtype=float), d.get("seed"))


def _check(design: MeasurementDesign, x) -> np.ndarray:
    v = as_values(x)
    if v.size != design.n_modes:
        raise ValueError(f"field has {v.size} modes, design expects {design.n_modes}")
    return v


def apply(design: MeasurementDesign, x) -> np.ndarray:
    """``A @ x`` computed group by group, shape ``(M,)``."""
    v = _check(design, x) * design.column_scale
    return (v[design.members] @ design.code.T).ravel()


def adjoint(design: MeasurementDesign, r) -> np.ndarray:
    """``A^H @ r`` for a length-``M`` vector ``r``."""
    r = np.asarray(r, dtype=complex).reshape(design.n_groups, design.q_rows)
    per_slot = r @ design.code.conj()
    idx = design.members.ravel()
    flat = per_slot.ravel()
    n = design.n_modes
    out = np.bincount(idx, flat.real, minlength=n) + 1j * np.bincount(idx, flat.imag, minlength=n)
    return out * design.column_scale


def amplitudes(design: MeasurementDesign, x) -> np.ndarray:
    """Detector-plane field ``y = reference + A @ x``."""
    y = apply(design, x)
    if design.reference is not None:
        y = y + design.reference
    return y


def intensities(design: MeasurementDesign, x) -> np.ndarray:
    """Expected photon count ``|y_m|^2`` on every detector."""
    y = amplitudes(design, x)
    return y.real**2 + y.imag**2


def sample_counts(intensity, seed: int) -> DetectionRecord:
    """Independent Poisson photon counts with the given rates."""
    lam = np.asarray(intensity, dtype=float).ravel()
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("intensities must be finite and non-negative")
    rng = np.random.default_rng(seed)
    return DetectionRecord(rng.poisson(lam).astype(np.int64), lam.copy(), seed)


def simulate(design: MeasurementDesign, x, seed: int) -> DetectionRecord:
    return sample_counts(intensities(design, x), seed)
