"""File formats: JSON bundles, compact binary counts and CSV traces."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .designs import MeasurementDesign
from .field import ComplexField
from .forward import DetectionRecord

COUNTS_MAGIC = b"QLPC"
COUNTS_VERSION = 1
_DTYPES = {1: "<u4", 2: "<u8"}


def write_counts_binary(path, counts) -> None:
    """Write counts as ``QLPC | version:u8 | dtype:u8 | length:u64 | data``."""
    c = np.asarray(counts)
    if c.size and (c.min() < 0):
        raise ValueError("counts must be non-negative")
    code = 1 if (c.size == 0 or c.max() < 2**32) else 2
    header = COUNTS_MAGIC + struct.pack("<BBQ", COUNTS_VERSION, code, c.size)
    Path(path).write_bytes(header + c.astype(_DTYPES[code]).tobytes())


def read_counts_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != COUNTS_MAGIC:
        raise ValueError("not a counts file")
    version, code, n = struct.unpack("<BBQ", raw[4:14])
    if version != COUNTS_VERSION or code not in _DTYPES:
        raise ValueError(f"unsupported counts file (version {version}, dtype {code})")
    data = np.frombuffer(raw[14:], dtype=_DTYPES[code])
    if data.size != n:
        raise ValueError(f"truncated counts file: header says {n}, found {data.size}")
    return data.astype(np.int64)


def write_trace_csv(path, trace) -> None:
    lines = ["iter,loss"] + [f"{i},{float(v)!r}" for i, v in enumerate(trace)]
    Path(path).write_text("\n".join(lines) + "\n")


def save_bundle(path, design: MeasurementDesign, field: ComplexField | None = None,
                record: DetectionRecord | None = None, **extra) -> None:
    """One JSON document holding a design and optionally a field and counts."""
    doc = {"design": design.to_dict()}
    if field is not None:
        doc["field"] = json.loads(field.to_json())
    if record is not None:
        doc["record"] = json.loads(record.to_json())
    doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_bundle(path) -> dict:
    doc = json.loads(Path(path).read_text())
    out = {"design": MeasurementDesign.from_dict(doc["design"])}
    if "field" in doc:
        out["field"] = ComplexField.from_json(json.dumps(doc["field"]))
    if "record" in doc:
        out["record"] = DetectionRecord.from_json(json.dumps(doc["record"]))
    for k, v in doc.items():
        out.setdefault(k, v)
    return out
