"""On-disk formats: similarity matrices (CSV and "SIMM" binary) and PPM images."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError

MAGIC = b"SIMM"
_HEADER = struct.Struct("<4sII")


def format_for(path, fmt: str | None = None) -> str:
    if fmt:
        if fmt not in ("csv", "bin"):
            raise DataError(f"unknown matrix format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".bin":
        return "bin"
    if suffix == ".csv":
        return "csv"
    p = Path(path)
    if p.exists():
        with open(p, "rb") as fh:
            return "bin" if fh.read(4) == MAGIC else "csv"
    return "csv"


def save_matrix(m, path, fmt: str | None = None) -> None:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"matrix must be 2-d, got shape {m.shape}")
    if format_for(path, fmt) == "bin":
        payload = _HEADER.pack(MAGIC, m.shape[0], m.shape[1]) + m.astype("<f8").tobytes(order="C")
        Path(path).write_bytes(payload)
    else:
        Path(path).write_text(matrix_to_csv(m), encoding="utf-8")


def matrix_to_csv(m) -> str:
    rows, cols = m.shape
    lines = [f"# {rows} {cols}"]
    lines += [",".join(f"{v:.17g}" for v in row) for row in m]
    return "\n".join(lines) + "\n"


def load_matrix(path, fmt: str | None = None) -> np.ndarray:
    if format_for(path, fmt) == "bin":
        return _load_bin(Path(path).read_bytes(), str(path))
    return _load_csv(Path(path).read_text(encoding="utf-8"), str(path))


def _load_bin(data: bytes, where: str) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ParseError(f"{where}: expected at least {_HEADER.size} header bytes, got {len(data)}")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"{where}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise ParseError(f"{where}: expected {expected} bytes for a {rows}x{cols} matrix, got {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)


def _load_csv(text: str, where: str) -> np.ndarray:
    declared = None
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if rows or declared is not None:
                raise ParseError(f"{where}:{lineno}: header must be the first line")
            parts = stripped[1:].split()
            try:
                declared = tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError(f"{where}:{lineno}: header must be '# rows cols', got {stripped!r}") from None
            if len(declared) != 2:
                raise ParseError(f"{where}:{lineno}: header must be '# rows cols', got {stripped!r}")
            continue
        cells = stripped.split(",")
        row = []
        for col, cell in enumerate(cells, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ParseError(f"{where}:{lineno}:{col}: non-numeric cell {cell.strip()!r}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"{where}:{lineno}: ragged row with {len(row)} cells, expected {width}")
        rows.append(row)
    if not rows:
        raise ParseError(f"{where}: no matrix rows")
    m = np.array(rows, dtype=np.float64)
    if declared is not None and declared != m.shape:
        raise ParseError(f"{where}: header declares {declared[0]}x{declared[1]}, found {m.shape[0]}x{m.shape[1]}")
    return m


def _ppm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ParseError("PPM: truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1  # one whitespace byte ends the header


def read_ppm(path) -> np.ndarray:
    """Load a binary (P6) PPM as an ``H x W x 3`` float array scaled to [0, 1]."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _ppm_tokens(data, 4)
    if magic != b"P6":
        raise ParseError(f"{path}: not a P6 PPM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ParseError(f"{path}: malformed PPM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ParseError(f"{path}: invalid PPM size {w}x{h} or maxval {maxval}")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    need = w * h * 3 * dtype.itemsize
    body = data[offset:offset + need]
    if len(body) != need:
        raise ParseError(f"{path}: expected {need} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(h, w, 3).astype(np.float64) / maxval


def write_ppm(image, path, maxval: int = 255) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    h, w, _ = img.shape
    dtype = "u1" if maxval < 256 else ">u2"
    pix = np.round(img * maxval).astype(dtype)
    Path(path).write_bytes(f"P6\n{w} {h}\n{maxval}\n".encode("ascii") + pix.tobytes())
