"""On-disk formats: 16-bit PGM images, annotation/detection CSVs, JSON manifests, raw maps."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

MAP_MAGIC = b"PRPSMAP0"


class FormatError(ValueError):
    pass


def write_pgm16(path, image: np.ndarray) -> None:
    """Binary P5, maxval 65535, big-endian samples, value = round(65535 * v)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got {img.shape}")
    q = np.rint(np.clip(img, 0.0, 1.0) * 65535.0).astype(">u2")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + q.tobytes())


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 65535:
        raise FormatError(f"{path}: expected maxval 65535, got {maxval}")
    raw = data[pos:pos + 2 * w * h]
    if len(raw) != 2 * w * h:
        raise FormatError(f"{path}: truncated PGM data")
    return np.frombuffer(raw, dtype=">u2").reshape(h, w).astype(np.float64) / 65535.0


def write_points_csv(path, rows, with_score: bool = False) -> None:
    """Rows of ``(image_id, x, y[, score])`` with 6-decimal fixed point."""
    header = "image_id,x,y,score" if with_score else "image_id,x,y"
    lines = [header]
    for row in rows:
        vals = ",".join(f"{v:.6f}" for v in row[1:])
        lines.append(f"{row[0]},{vals}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_points_csv(path) -> dict[str, list[tuple[float, ...]]]:
    """Image id -> list of ``(x, y[, score])`` in file order."""
    out: dict[str, list[tuple[float, ...]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["image_id", "x", "y"]:
            raise FormatError(f"{path}: expected header image_id,x,y[,score], got {header}")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                vals = tuple(float(v) for v in row[1:])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            out.setdefault(row[0], []).append(vals)
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_map_raw(path, grid: np.ndarray) -> None:
    """``PRPSMAP0`` + H, W (u32 LE) + float32 LE samples."""
    g = np.asarray(grid)
    h, w = g.shape
    Path(path).write_bytes(MAP_MAGIC + struct.pack("<II", h, w) + g.astype("<f4").tobytes())


def read_map_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAP_MAGIC:
        raise FormatError(f"{path}: not a raw response map")
    h, w = struct.unpack_from("<II", data, 8)
    if len(data) != 16 + 4 * h * w:
        raise FormatError(f"{path}: size does not match {h}x{w} header")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w).copy()
