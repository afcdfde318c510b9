"""Binary field files and deterministic CSV/JSON tables.

Field file layout (little-endian)::

    4 bytes   magic b"QNKF"
    1 byte    format version (1)
    1 byte    dtype code (1 = float64)
    2 bytes   uint16 number of dimensions
    8*ndim    uint64 dimension sizes
    payload   row-major float64 values
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"QNKF"
VERSION = 1
DTYPE_F64 = 1


class FieldFileError(ValueError):
    pass


def write_field(path, data: np.ndarray) -> None:
    data = np.ascontiguousarray(data, dtype="<f8")
    header = MAGIC + struct.pack("<BBH", VERSION, DTYPE_F64, data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    Path(path).write_bytes(header + data.tobytes())


def read_field(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FieldFileError(f"{path}: not a field file (bad magic)")
    version, dtype, ndim = struct.unpack_from("<BBH", raw, 4)
    if version != VERSION or dtype != DTYPE_F64:
        raise FieldFileError(f"{path}: unsupported version {version} / dtype {dtype}")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 8)
    offset = 8 + 8 * ndim
    count = int(np.prod(dims)) if dims else 1
    if len(raw) - offset != 8 * count:
        raise FieldFileError(f"{path}: payload size does not match header dims {dims}")
    return np.frombuffer(raw, dtype="<f8", offset=offset).reshape(dims).astype(np.float64)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(rows: list[dict], config: dict | None = None, columns=None, summary: dict | None = None) -> str:
    buf = io.StringIO()
    if config is not None:
        buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    if rows:
        columns = list(columns or rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])
    if summary:
        buf.write("# summary: " + ",".join(f"{k}={fmt(v)}" for k, v in summary.items()) + "\n")
    return buf.getvalue()


def json_text(rows: list[dict], config: dict | None = None, summary: dict | None = None) -> str:
    def clean(v):
        if isinstance(v, (np.floating, np.integer, np.bool_)):
            return v.item()
        if isinstance(v, tuple):
            return list(v)
        return v

    doc = {"config": config or {}, "rows": [{k: clean(v) for k, v in r.items()} for r in rows]}
    if summary:
        doc["summary"] = {k: clean(v) for k, v in summary.items()}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def read_csv_table(text_or_path) -> tuple[dict, list[dict], dict]:
    """Parse a table written by :func:`csv_text`.

    Returns ``(config, rows, summary)`` with numeric cells converted.
    """
    text = text_or_path
    if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and "\n" not in text_or_path):
        text = Path(text_or_path).read_text()
    config, summary = {}, {}
    body = []
    for line in text.splitlines():
        if line.startswith("# config: "):
            config = json.loads(line[len("# config: ") :])
        elif line.startswith("# summary: "):
            for item in line[len("# summary: ") :].split(","):
                k, _, v = item.partition("=")
                summary[k] = _parse(v)
        elif line.startswith("#") or not line.strip():
            continue
        else:
            body.append(line)
    rows = []
    for rec in csv.DictReader(body):
        rows.append({k: _parse(v) for k, v in rec.items()})
    return config, rows, summary


def _parse(v: str):
    if v in ("true", "false"):
        return v == "true"
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v
