"""File formats: sample ingestion, trial CSV tables and JSON summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..exceptions import BadHeader, NonFiniteValue, RowLengthMismatch
from ..samplers import BINARY_HEADER, BINARY_MAGIC

CSV_COLUMNS = ["trial_seed", "n", "sin2F", "tanF", "tan2", "scrTqF", "flags"]


class CsvIngest:
    """Single-pass reader over a headerless CSV of d-dimensional rows."""

    def __init__(self, path, d: int):
        self.path = Path(path)
        self.d = int(d)
        self.position = 0
        self._fh = open(self.path, newline="")
        self._reader = csv.reader(self._fh)

    def take(self, k: int) -> np.ndarray:
        rows = []
        for row in self._reader:
            line = self._reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != self.d:
                raise RowLengthMismatch(line, self.d, len(row))
            try:
                vals = [float(f) for f in row]
            except ValueError:
                raise NonFiniteValue(line) from None
            if not all(math.isfinite(v) for v in vals):
                raise NonFiniteValue(line)
            rows.append(vals)
            if len(rows) == k:
                break
        self.position += len(rows)
        if not rows:
            self._fh.close()
            return np.empty((0, self.d))
        return np.array(rows, dtype=float)

    def __iter__(self):
        while True:
            block = self.take(1024)
            if block.shape[0] == 0:
                return
            yield from block


class BinaryIngest:
    """Single-pass reader over the ``OJAS`` little-endian float64 format."""

    def __init__(self, path, d: int | None = None):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        head = self._fh.read(BINARY_HEADER.size)
        if len(head) != BINARY_HEADER.size:
            raise BadHeader(f"{path}: truncated header")
        magic, file_d, _reserved = BINARY_HEADER.unpack(head)
        if magic != BINARY_MAGIC:
            raise BadHeader(f"{path}: bad magic {magic!r}")
        if file_d < 1 or (d is not None and file_d != d):
            raise BadHeader(f"{path}: header declares d={file_d}, expected {d}")
        self.d = int(file_d)
        payload = self.path.stat().st_size - BINARY_HEADER.size
        row_bytes = 8 * self.d
        if payload % row_bytes:
            # the last row is incomplete; report it as a short row (1-based)
            raise RowLengthMismatch(payload // row_bytes + 1, self.d, (payload % row_bytes) // 8)
        self.n = payload // row_bytes
        self.position = 0

    def take(self, k: int) -> np.ndarray:
        k = min(k, self.n - self.position)
        if k <= 0:
            self._fh.close()
            return np.empty((0, self.d))
        buf = self._fh.read(8 * self.d * k)
        X = np.frombuffer(buf, dtype="<f8").reshape(k, self.d).astype(np.float64)
        bad = ~np.all(np.isfinite(X), axis=1)
        if bad.any():
            raise NonFiniteValue(self.position + int(np.argmax(bad)) + 1)
        self.position += k
        return X

    def __iter__(self):
        while True:
            block = self.take(1024)
            if block.shape[0] == 0:
                return
            yield from block


def ingest_stream(path, d: int | None = None, fmt: str | None = None):
    """Open ``path`` as a sample source; format inferred from the extension if not given.

    ``.csv``/``.txt`` files are headerless CSV (``d`` required); anything else
    is read as the binary format, whose header carries ``d``.
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"
    if fmt == "csv":
        if d is None:
            raise ValueError("CSV ingestion needs the dimension d")
        return CsvIngest(path, d)
    if fmt == "binary":
        return BinaryIngest(path, d)
    raise ValueError(f"unknown format {fmt!r}")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def records_to_csv(records) -> str:
    """Render trial records with the fixed column set (RFC 4180, CRLF line ends)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(
            [_cell(r.seed), _cell(r.n), _cell(r.sin2F), _cell(r.tanF), _cell(r.tan2),
             _cell(r.scrTqF), r.flags]
        )
    return buf.getvalue()


def write_records_csv(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))
    return path


def read_records_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def jsonable(obj):
    """Replace non-finite floats with None and numpy scalars/arrays with Python types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(payload, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True, allow_nan=False))
    return path
