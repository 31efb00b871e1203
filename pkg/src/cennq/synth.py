"""Synthetic binary image tasks standing in for external datasets.

Images use the cell convention: +1 is black (object), -1 is white.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import save_grid, write_manifest

KINDS = ("noise", "edge", "detect")
DEFAULT_PATTERN = {"noise": "isotropic", "edge": "isotropic", "detect": "obstacle"}


def random_shapes(size: int, rng, n_shapes: int | None = None) -> np.ndarray:
    """Rectangles and discs on a white background."""
    img = -np.ones((size, size))
    if n_shapes is None:
        n_shapes = int(rng.integers(2, 5))
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(n_shapes):
        if rng.random() < 0.5:
            h, w = rng.integers(size // 8 + 1, size // 3 + 2, size=2)
            r0 = rng.integers(0, size - h + 1)
            c0 = rng.integers(0, size - w + 1)
            img[r0:r0 + h, c0:c0 + w] = 1.0
        else:
            rad = rng.uniform(size / 10, size / 5)
            cy, cx = rng.uniform(rad, size - rad, size=2)
            img[(yy - cy) ** 2 + (xx - cx) ** 2 <= rad ** 2] = 1.0
    return img


def flip_pixels(img: np.ndarray, level: float, rng) -> np.ndarray:
    """Salt-and-pepper: invert exactly ``round(level * area)`` distinct pixels."""
    if not 0.0 <= level <= 1.0:
        raise ValueError("noise level must lie in [0, 1]")
    out = img.copy()
    n = int(round(level * img.size))
    if n:
        idx = rng.choice(img.size, size=n, replace=False)
        flat = out.reshape(-1)
        flat[idx] = -flat[idx]
    return out


def edge_map(img: np.ndarray) -> np.ndarray:
    """Object pixels with at least one 4-neighbour in the background."""
    obj = img > 0
    pad = np.pad(obj, 1, constant_values=False)
    interior = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return np.where(obj & ~interior, 1.0, -1.0)


def make_pair(kind: str, size: int, noise_level: float, rng) -> tuple[np.ndarray, np.ndarray]:
    if kind not in KINDS:
        raise ValueError(f"unknown task kind {kind!r}")
    if size < 8:
        raise ValueError("image size must be at least 8")
    shapes = random_shapes(size, rng)
    if kind == "noise":
        return flip_pixels(shapes, noise_level, rng), shapes
    if kind == "edge":
        return flip_pixels(shapes, noise_level, rng), edge_map(shapes)
    yy, xx = np.mgrid[0:size, 0:size]
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    background = -1.0 + 0.8 * ramp
    inp = np.where(shapes > 0, 1.0, background)
    return flip_pixels(inp, noise_level, rng), shapes


def generate_pairs(kind: str, size: int = 32, count: int = 2, noise_level: float = 0.1,
                   seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [make_pair(kind, size, noise_level, rng) for _ in range(count)]


def write_dataset(out_dir, kind: str, size: int = 32, count: int = 2, noise_level: float = 0.1,
                  seed: int = 0, iterations: int = 10, dt: float = 0.5) -> Path:
    """Write PGM pairs plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = []
    for n, (u, y) in enumerate(generate_pairs(kind, size, count, noise_level, seed)):
        pin = out / f"{kind}_{n:03d}_input.pgm"
        pid = out / f"{kind}_{n:03d}_ideal.pgm"
        save_grid(pin, u)
        save_grid(pid, y)
        pairs.append((pin, pid))
    manifest = out / "manifest.json"
    write_manifest(manifest, pairs, DEFAULT_PATTERN[kind], iterations, dt, kind=kind,
                   size=size, noise_level=noise_level, seed=seed)
    return manifest
