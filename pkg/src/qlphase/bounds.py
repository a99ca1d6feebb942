"""Poisson Fisher information and Cramér–Rao bounds for intensity measurements.

With ``y = rho + A x`` and ``a_m = conj(A[m, :])``, the Fisher information
for the stacked real parameters ``[Re x, Im x]`` is

    J = 2 [[Re P, -Im P], [Im P, Re P]] + [[C_R, C_I], [C_I, -C_R]]

where ``P = sum_m a_m a_m^H`` (the identity for an orthonormal design) and
``C = sum_m a_m a_m^T y_m^2 / |y_m|^2`` with ``C_R = 2 Re C``, ``C_I = 2 Im C``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .designs import MeasurementDesign
from .forward import amplitudes

MAX_BOUND_MODES = 2**12


class UndefinedInformationError(ValueError):
    """No detector receives light, so the Fisher information is empty."""


@dataclass(frozen=True, eq=False)
class FisherBundle:
    c_matrix: np.ndarray
    j_matrix: np.ndarray
    eigenvalues: np.ndarray
    crlb_trace_full: float
    crlb_trace_gauge_reduced: float
    singular: bool
    crlb_trace_aligned: float = np.nan

    @property
    def n_modes(self) -> int:
        return self.c_matrix.shape[0]

    def summary(self) -> dict:
        off = self.c_matrix - np.diag(np.diag(self.c_matrix))
        return {
            "n_modes": self.n_modes,
            "crlb_trace_full": _jsonable(self.crlb_trace_full),
            "crlb_trace_gauge_reduced": _jsonable(self.crlb_trace_gauge_reduced),
            "crlb_per_mode_gauge_reduced": _jsonable(self.crlb_trace_gauge_reduced / self.n_modes),
            "crlb_trace_aligned": _jsonable(self.crlb_trace_aligned),
            "crlb_per_mode_aligned": _jsonable(self.crlb_trace_aligned / self.n_modes),
            "singular": self.singular,
            "eigenvalue_min": float(self.eigenvalues[0]),
            "eigenvalue_max": float(self.eigenvalues[-1]),
            "c_diag_abs_median": float(np.median(np.abs(np.diag(self.c_matrix)))),
            "c_diag_abs_max": float(np.max(np.abs(np.diag(self.c_matrix)))),
            "c_offdiag_abs_max": float(np.max(np.abs(off))) if self.n_modes > 1 else 0.0,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary())


def _jsonable(v: float):
    return v if np.isfinite(v) else "inf"


def _accumulate(design: MeasurementDesign, x, cols, C: np.ndarray, P: np.ndarray) -> int:
    """Add one design's ``C`` and ``P`` terms into the global matrices, group by group."""
    y = amplitudes(design, x).reshape(design.n_groups, design.q_rows)
    mag = np.abs(y)
    live = mag > 0
    ph2 = np.where(live, y / np.where(live, mag, 1.0), 0.0) ** 2
    # a_m = conj(row of A); rows within a group share the code block
    a = design.code.conj()[None, :, :] * design.column_scale[design.members][:, None, :]
    a = a * live[:, :, None]
    cblk = np.einsum("gql,gqk,gq->glk", a, a, ph2)
    pblk = np.einsum("gql,gqk->glk", a, a.conj())
    mem = np.asarray(cols)[design.members]
    idx = (mem[:, :, None], mem[:, None, :])
    np.add.at(C, idx, cblk)
    np.add.at(P, idx, pblk)
    return int(live.sum())


def _c_and_p(parts, x, n: int):
    if n > MAX_BOUND_MODES:
        raise ValueError(f"dense bounds limited to {MAX_BOUND_MODES} modes")
    xv = np.asarray(getattr(x, "values", x), dtype=complex)
    C = np.zeros((n, n), dtype=complex)
    P = np.zeros((n, n), dtype=complex)
    n_live = 0
    for design, cols in parts:
        n_live += _accumulate(design, xv[cols], cols, C, P)
    if n_live == 0:
        raise UndefinedInformationError("every detector has zero intensity")
    return C, P


def c_matrix(design: MeasurementDesign, x) -> np.ndarray:
    """``C = sum_m a_m a_m^T (y_m/|y_m|)^2`` over rows with nonzero intensity."""
    return _c_and_p([(design, np.arange(design.n_modes))], x, design.n_modes)[0]


def _assemble(C: np.ndarray, P: np.ndarray) -> np.ndarray:
    CR, CI = 2 * C.real, 2 * C.imag
    PR, PI = 2 * P.real, 2 * P.imag
    return np.block([[PR + CR, CI - PI], [CI + PI, PR - CR]])


def _trace_inverse(J: np.ndarray, rtol: float = 1e-10) -> tuple[float, np.ndarray, bool]:
    lam = np.linalg.eigvalsh(J)
    if lam[0] <= rtol * max(lam[-1], 1.0):
        return np.inf, lam, True
    return float(np.sum(1.0 / lam)), lam, False


def _phase_rotation(N: int, phi: float) -> np.ndarray:
    """Real-representation matrix of multiplication by ``exp(1j*phi)``."""
    c, s = np.cos(phi), np.sin(phi)
    eye = np.eye(N)
    return np.block([[c * eye, -s * eye], [s * eye, c * eye]])


def _pinv_trace(J: np.ndarray, rtol: float = 1e-10) -> float:
    lam = np.linalg.eigvalsh(J)
    keep = lam > rtol * max(lam[-1], 1.0)
    return float(np.sum(1.0 / lam[keep]))


def fisher_from_c(C: np.ndarray, P: np.ndarray | None = None, pin_phase: float = 0.0) -> FisherBundle:
    """Bundle for a given ``C`` (and ``P``, identity by default).

    The gauge-reduced trace drops ``Im x_0`` after rotating the parameters by
    ``-pin_phase``, i.e. in the frame where mode 0 has phase ``pin_phase``
    removed.
    """
    C = np.asarray(C, dtype=complex)
    N = C.shape[0]
    P = np.eye(N) if P is None else P
    J = _assemble(C, P)
    J = 0.5 * (J + J.T)
    full, lam, singular = _trace_inverse(J)
    Jg = J
    if pin_phase:
        R = _phase_rotation(N, -pin_phase)
        Jg = R @ J @ R.T
    keep = np.r_[0:N, N + 1:2 * N]
    reduced, _, _ = _trace_inverse(Jg[np.ix_(keep, keep)])
    aligned = _pinv_trace(J) if singular else full
    return FisherBundle(C, J, lam, full, reduced, singular, aligned)


def fisher(design: MeasurementDesign, x) -> FisherBundle:
    """Exact Fisher information, its spectrum and CRLB traces.

    Without a reference the full matrix is singular (global phase) and
    ``crlb_trace_full`` is ``inf``. ``crlb_trace_gauge_reduced`` then pins the
    global phase by declaring mode 0 real, i.e. drops ``Im x_0`` in the frame
    rotated by ``-arg x_0``; it bounds errors measured with
    ``mse(..., gauge="mode0")``. ``crlb_trace_aligned`` is the trace of the
    pseudo-inverse, the bound matching inner-product alignment
    (``gauge="aligned"``).
    """
    return fisher_composite([(design, np.arange(design.n_modes))], x)


def fisher_composite(parts, x) -> FisherBundle:
    """Fisher bundle of several designs measured on (subsets of) one field.

    ``parts`` is a sequence of ``(design, cols)``; ``design`` acts on the
    modes ``x[cols]``. Counts of different designs are independent, so their
    information adds.
    """
    xv = np.asarray(getattr(x, "values", x), dtype=complex)
    C, P = _c_and_p(parts, xv, xv.size)
    has_ref = any(d.reference is not None and np.any(d.reference) for d, _ in parts)
    pin = 0.0 if has_ref else float(np.angle(xv[0]))
    return fisher_from_c(C, P, pin_phase=pin)


def fisher_finite_difference(design: MeasurementDesign, x, h: float = 1e-6) -> np.ndarray:
    """Fisher information straight from its definition, with derivatives by central differences.

    ``J = sum_m grad(I_m) grad(I_m)^T / I_m`` over the real parameters
    ``[Re x, Im x]``; independent of the closed-form block assembly.
    """
    from .forward import intensities

    x = np.asarray(x, dtype=complex)
    N = x.size
    I0 = intensities(design, x)
    grads = np.empty((2 * N, I0.size))
    for k in range(2 * N):
        e = np.zeros(N, dtype=complex)
        e[k % N] = h if k < N else 1j * h
        grads[k] = (intensities(design, x + e) - intensities(design, x - e)) / (2 * h)
    live = I0 > 0
    g = grads[:, live]
    return (g / I0[live]) @ g.T


def diagonal_crlb_approx(c_diag) -> float:
    """Gauge-reduced CRLB trace when ``C`` is diagonal.

    ``1/(2 + u_0) + sum_{n>=1} 4/(4 - u_n^2 - v_n^2)`` with ``u = 2 Re C_nn``,
    ``v = 2 Im C_nn``. Returns ``inf`` when some mode has ``u^2 + v^2 >= 4``.
    """
    c = np.asarray(c_diag, dtype=complex).ravel()
    if c.size < 1:
        raise ValueError("need at least one mode")
    u, v = 2 * c.real, 2 * c.imag
    denom = 4 - u[1:] ** 2 - v[1:] ** 2
    if 2 + u[0] <= 0 or np.any(denom <= 0):
        return np.inf
    return float(1 / (2 + u[0]) + np.sum(4 / denom))
