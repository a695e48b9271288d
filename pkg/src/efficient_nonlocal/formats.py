"""File writers for CLI artifacts (JSON, CSV, PGM)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__

CSV_FIELDS = [
    "variant",
    "H",
    "W",
    "C",
    "C_theta",
    "C_g",
    "C_l",
    "flops",
    "peak_bytes",
    "wall_time_s",
    "status",
    "n_samples",
]


def metadata(seed: int | None = None, **extra) -> dict:
    meta = {"version": __version__, "seed": seed}
    meta.update(extra)
    return meta


def _meta_comment(meta: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items())


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, default=_default) + "\n")


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_report_csv(path, rows: list[dict], meta: dict) -> None:
    """One row per report. The first line is a ``#`` metadata comment."""
    with open(path, "w", newline="") as fh:
        fh.write(_meta_comment(meta) + "\n")
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in CSV_FIELDS})


def read_report_csv(path) -> tuple[str, list[dict]]:
    with open(path, newline="") as fh:
        comment = fh.readline().rstrip("\n")
        return comment, list(csv.DictReader(fh))


def write_grid_csv(path, grid: np.ndarray, meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_meta_comment(meta) + "\n")
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([repr(float(v)) for v in row])


def to_pgm_bytes(grid: np.ndarray, comment: str | None = None) -> bytes:
    """8-bit binary PGM (P5), min-max normalised to 0..255."""
    grid = np.asarray(grid, dtype=np.float64)
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        pixels = np.round((grid - lo) / (hi - lo) * 255.0)
    else:
        pixels = np.zeros_like(grid)
    h, w = grid.shape
    header = "P5\n"
    if comment:
        header += f"# {comment}\n"
    header += f"{w} {h}\n255\n"
    return header.encode("ascii") + pixels.astype(np.uint8).tobytes()


def write_pgm(path, grid: np.ndarray, comment: str | None = None) -> None:
    Path(path).write_bytes(to_pgm_bytes(grid, comment))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != "P5" or maxval != 255:
        raise ValueError(f"unsupported PGM header {tokens}")
    pixels = np.frombuffer(data[pos + 1 : pos + 1 + w * h], dtype=np.uint8)
    return pixels.reshape(h, w)
