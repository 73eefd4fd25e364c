"""Visitation heatmaps as portable graymaps."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .env_grid import GridMap


def heatmap_pixels(counts: np.ndarray, grid: GridMap) -> np.ndarray:
    """(height, width) uint8 image: log(1 + count) scaled to [0, 255]; walls 0."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (grid.n_states,):
        raise ValueError(f"counts must have length {grid.n_states}, got shape {counts.shape}")
    img = np.zeros((grid.height, grid.width), dtype=np.uint8)
    logc = np.log1p(np.maximum(counts, 0))
    top = logc.max()
    if top > 0:
        vals = np.rint(255.0 * logc / top).astype(np.uint8)
        rows, cols = zip(*grid.cells)
        img[list(rows), list(cols)] = vals
    return img


def write_pgm(img: np.ndarray, path: str | Path, binary: bool = False) -> None:
    h, w = img.shape
    if binary:
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode())
            f.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())
        return
    with open(path, "w") as f:
        f.write(f"P2\n{w} {h}\n255\n")
        for row in img:
            f.write(" ".join(str(int(v)) for v in row) + "\n")


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic == b"P2":
        tok = data.decode().split()
        w, h = int(tok[1]), int(tok[2])
        return np.array(tok[4:4 + w * h], dtype=np.uint8).reshape(h, w)
    if magic == b"P5":
        head = data.split(b"\n", 3)
        w, h = (int(x) for x in head[1].split())
        return np.frombuffer(head[3], dtype=np.uint8, count=w * h).reshape(h, w)
    raise ValueError(f"{path}: not a PGM file")


def render_heatmap(counts: np.ndarray, grid: GridMap, path: str | Path, binary: bool = False) -> np.ndarray:
    img = heatmap_pixels(counts, grid)
    write_pgm(img, path, binary=binary)
    return img


def neighbourhood_mass(counts: np.ndarray, dist: np.ndarray, centres: list[int], radius: int = 2) -> float:
    """Fraction of visitation mass within ``radius`` steps of any centre state.

    ``dist`` is an all-pairs shortest-path matrix.
    """
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return 0.0
    d = dist[centres]
    near = ((d >= 0) & (d <= radius)).any(axis=0)
    return float(counts[near].sum() / total)
