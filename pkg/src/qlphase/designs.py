"""Measurement designs built from small interferometer groups.

A design stores the sparse structure of an orthonormal ``M x N`` matrix ``A``:
``G`` groups of ``L`` member modes, each group measured through the same
``Q x L`` code block ``W``.  Row ``m = g*Q + q`` of ``A`` has entry
``W[q, l] * column_scale[n]`` at column ``n = members[g, l]`` and zeros
elsewhere, so that the measured field is ``y = reference + A @ x``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class DesignError(ValueError):
    """Invalid or unconstructible measurement design."""


MAX_DENSE_ENTRIES = 2**24
CONNECT_RETRIES = 32

HOLOGRAPHIC_CODE = 0.5 * np.array([[1.0], [1j], [-1.0], [-1j]])


@dataclass(frozen=True)
class CodeBlock:
    entries: np.ndarray

    def __post_init__(self):
        w = np.array(self.entries, dtype=complex, ndmin=2)
        w.setflags(write=False)
        object.__setattr__(self, "entries", w)

    @property
    def q_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def l_cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class Group:
    member_modes: tuple[int, ...]
    code: CodeBlock


@dataclass(frozen=True, eq=False)
class MeasurementDesign:
    n_modes: int
    members: np.ndarray
    code: np.ndarray
    column_scale: np.ndarray
    reference: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        members = np.array(self.members, dtype=np.int64, ndmin=2)
        code = np.array(self.code, dtype=complex, ndmin=2)
        scale = np.array(self.column_scale, dtype=float).ravel()
        if members.size and members.shape[1] != code.shape[1]:
            raise DesignError(f"groups have {members.shape[1]} members but code has {code.shape[1]} columns")
        if scale.size != self.n_modes:
            raise DesignError("column_scale length must equal n_modes")
        if members.size and (members.min() < 0 or members.max() >= self.n_modes):
            raise DesignError("member index out of range")
        for row in members:
            if len(set(row.tolist())) != len(row):
                raise DesignError(f"group {row.tolist()} repeats a mode")
        ref = None
        if self.reference is not None:
            ref = np.array(self.reference, dtype=float).ravel()
            if ref.size != members.shape[0] * code.shape[0]:
                raise DesignError("reference length must equal the number of rows")
            if np.any(ref < 0):
                raise DesignError("reference amplitudes must be non-negative")
            ref.setflags(write=False)
        for a in (members, code, scale):
            a.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "code", code)
        object.__setattr__(self, "column_scale", scale)
        object.__setattr__(self, "reference", ref)

    @property
    def n_groups(self) -> int:
        return self.members.shape[0]

    @property
    def q_rows(self) -> int:
        return self.code.shape[0]

    @property
    def l_cols(self) -> int:
        return self.code.shape[1]

    @property
    def m_rows(self) -> int:
        return self.n_groups * self.q_rows

    @property
    def groups(self) -> list[Group]:
        block = CodeBlock(self.code)
        return [Group(tuple(int(i) for i in row), block) for row in self.members]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.members.ravel(), minlength=self.n_modes)

    def with_reference(self, reference) -> "MeasurementDesign":
        ref = np.broadcast_to(np.asarray(reference, dtype=float), (self.m_rows,))
        return MeasurementDesign(self.n_modes, self.members, self.code, self.column_scale,
                                 ref, self.seed, dict(self.meta))

    def scaled(self, factor: float) -> "MeasurementDesign":
        """Multiply every column by ``factor`` (energy fraction ``factor**2``)."""
        return MeasurementDesign(self.n_modes, self.members, self.code, self.column_scale * factor,
                                 self.reference, self.seed, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "n": int(self.n_modes),
            "L": int(self.l_cols),
            "Q": int(self.q_rows),
            "seed": self.seed,
            "groups": self.members.tolist(),
            "column_scale": [float(s) for s in self.column_scale],
            "reference": None if self.reference is None else [float(r) for r in self.reference],
            "code": [[[float(w.real), float(w.imag)] for w in row] for row in self.code],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementDesign":
        if d.get("code") is not None:
            c = np.asarray(d["code"], dtype=float)
            code = c[..., 0] + 1j * c[..., 1]
        else:
            code = dft_code(d["Q"], d["L"]).entries
        members = np.asarray(d["groups"], dtype=np.int64).reshape(-1, d["L"])
        return cls(d["n"], members, code, d["column_scale"], d.get("reference"), d.get("seed"))

    @classmethod
    def from_json(cls, text: str) -> "MeasurementDesign":
        return cls.from_dict(json.loads(text))


def dft_code(Q: int, L: int) -> CodeBlock:
    """First ``L`` columns of the unitary ``Q``-point DFT, ``W[q,l] = exp(2j*pi*q*l/Q)/sqrt(Q)``."""
    if not 1 <= L <= Q:
        raise DesignError(f"need 1 <= L <= Q, got L={L}, Q={Q}")
    q = np.arange(Q)[:, None]
    l = np.arange(L)[None, :]
    return CodeBlock(np.exp(2j * np.pi * q * l / Q) / np.sqrt(Q))


def normalize_columns(design: MeasurementDesign) -> MeasurementDesign:
    """Set ``column_scale[n] = 1/sqrt(deg_n)`` so that ``A^H A = I``."""
    deg = design.degrees()
    if np.any(deg == 0):
        raise DesignError(f"isolated modes: {np.flatnonzero(deg == 0).tolist()}")
    return MeasurementDesign(design.n_modes, design.members, design.code, 1.0 / np.sqrt(deg),
                             design.reference, design.seed, dict(design.meta))


def is_connected(design: MeasurementDesign) -> bool:
    """True when the group hypergraph has one component spanning every mode."""
    n = design.n_modes
    if n == 1:
        return design.n_groups > 0
    mem = design.members
    if mem.size == 0:
        return False
    # star expansion: each group linked to its first member
    rows = np.repeat(mem[:, 0], mem.shape[1])
    cols = mem.ravel()
    g = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    n_comp, _ = connected_components(g, directed=False)
    return n_comp == 1


def _components(n: int, members: np.ndarray) -> np.ndarray:
    rows = np.repeat(members[:, 0], members.shape[1])
    g = coo_matrix((np.ones(rows.size), (rows, members.ravel())), shape=(n, n))
    return connected_components(g, directed=False)[1]


def _slot_counts(n: int, total: int, rng: np.random.Generator) -> np.ndarray:
    base, extra = divmod(total, n)
    counts = np.full(n, base, dtype=np.int64)
    counts[rng.choice(n, size=extra, replace=False)] += 1
    return counts


def _repair_duplicates(groups: np.ndarray, rng: np.random.Generator, max_sweeps: int = 200) -> bool:
    """Swap slots between groups until no group repeats a mode. In place."""
    G, L = groups.shape
    for _ in range(max_sweeps):
        srt = np.sort(groups, axis=1)
        bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        if bad.size == 0:
            return True
        for g in bad:
            row = groups[g]
            vals, counts = np.unique(row, return_counts=True)
            for v in vals[counts > 1]:
                pos = np.flatnonzero(groups[g] == v)[1:]
                for p in pos:
                    for h in rng.permutation(G)[: min(G, 64)]:
                        if h == g:
                            continue
                        k = rng.integers(L)
                        u = groups[h, k]
                        if u in groups[g] or v in groups[h]:
                            continue
                        groups[g, p], groups[h, k] = u, v
                        break
    srt = np.sort(groups, axis=1)
    return not np.any(srt[:, 1:] == srt[:, :-1])


def _sample_groups(n: int, L: int, n_groups: int, rng: np.random.Generator) -> np.ndarray | None:
    counts = _slot_counts(n, n_groups * L, rng)
    slots = rng.permutation(np.repeat(np.arange(n), counts))
    groups = slots.reshape(n_groups, L)
    if not _repair_duplicates(groups, rng):
        return None
    return groups


def _bridge(n: int, L: int, groups: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Append groups that chain every connected component into one."""
    labels = _components(n, groups)
    reps = [rng.choice(np.flatnonzero(labels == c)) for c in range(labels.max() + 1)]
    extra = []
    for a, b in zip(reps[:-1], reps[1:]):
        row = [a, b]
        pool = [i for i in rng.permutation(n) if i not in row]
        row += pool[: L - 2]
        extra.append(row)
    return np.vstack([groups, np.asarray(extra, dtype=np.int64)])


def random_group_design(n: int, L: int, Q: int | None = None, seed: int = 0) -> MeasurementDesign:
    """Random near-regular group design with ``~n log2 n`` groups of ``L`` modes.

    For ``L == 2`` there are ``n * ceil(log2 n)`` pairs so each mode has degree
    ``2 ceil(log2 n)``; for ``L >= 3`` there are ``ceil(n log2 n)`` groups.
    ``Q`` defaults to 3 for pairs and ``L`` otherwise.
    """
    if Q is None:
        Q = 3 if L == 2 else L
    if L < 2 or n < L:
        raise DesignError(f"need n >= L >= 2, got n={n}, L={L}")
    if Q < L:
        raise DesignError(f"need Q >= L, got Q={Q}, L={L}")
    if L == 2:
        n_groups = n * math.ceil(math.log2(n))
    else:
        n_groups = math.ceil(n * math.log2(n))
    rng = np.random.default_rng(seed)
    groups = None
    for _ in range(CONNECT_RETRIES):
        cand = _sample_groups(n, L, n_groups, rng)
        if cand is None:
            continue
        groups = cand
        if _components(n, cand).max() == 0:
            break
    if groups is None:
        raise DesignError(f"could not build a duplicate-free design for n={n}, L={L}")
    if _components(n, groups).max() > 0:
        groups = _bridge(n, L, groups, rng)
    code = dft_code(Q, L).entries
    d = MeasurementDesign(n, groups, code, np.ones(n), None, seed, {"kind": "random", "L": L, "Q": Q})
    return normalize_columns(d)


def holographic_design(n: int, rho: float) -> MeasurementDesign:
    """Four-phase quadrature holography: each mode alone against reference ``rho``."""
    if n < 1:
        raise DesignError("n must be positive")
    if rho < 0:
        raise DesignError("rho must be non-negative")
    members = np.arange(n)[:, None]
    return MeasurementDesign(n, members, HOLOGRAPHIC_CODE, np.ones(n), np.full(4 * n, float(rho)),
                             None, {"kind": "holographic"})


def materialize_rows(design: MeasurementDesign, max_entries: int = MAX_DENSE_ENTRIES) -> np.ndarray:
    """Dense ``M x N`` matrix ``A`` (``y = reference + A @ x``). For oracles only."""
    if design.n_groups == 0:
        raise DesignError("empty design")
    M, N = design.m_rows, design.n_modes
    if M * N > max_entries:
        raise DesignError(f"dense A would have {M * N} entries (limit {max_entries})")
    A = np.zeros((M, N), dtype=complex)
    rows = np.arange(M).reshape(design.n_groups, design.q_rows)
    for l in range(design.l_cols):
        cols = design.members[:, l]
        A[rows, cols[:, None]] += design.code[:, l][None, :] * design.column_scale[cols][:, None]
    return A


def sparse_rows(design: MeasurementDesign):
    """``A`` as a scipy CSR matrix."""
    from scipy.sparse import csr_matrix

    G, Q, L = design.n_groups, design.q_rows, design.l_cols
    rows = np.broadcast_to(np.arange(G * Q).reshape(G, Q, 1), (G, Q, L))
    cols = np.broadcast_to(design.members[:, None, :], (G, Q, L))
    vals = design.code[None, :, :] * design.column_scale[design.members][:, None, :]
    return csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(G * Q, design.n_modes))


def orthonormality_error(design: MeasurementDesign, max_modes: int = 2**12, n_sample: int = 256,
                         seed: int = 0) -> float:
    """``max |A^H A - I|``, over all columns up to ``max_modes`` and sampled columns above."""
    A = sparse_rows(design)
    n = design.n_modes
    if n <= max_modes:
        cols = np.arange(n)
    else:
        cols = np.sort(np.random.default_rng(seed).choice(n, n_sample, replace=False))
    G = (A.conj().T @ A[:, cols]).toarray()
    G[cols, np.arange(cols.size)] -= 1.0
    return float(np.max(np.abs(G)))


def stack_designs(designs: list[MeasurementDesign]) -> np.ndarray:
    """Dense vertical concatenation of several designs over the same modes."""
    return np.vstack([materialize_rows(d) for d in designs])
