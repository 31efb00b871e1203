"""PGM images, template JSON documents and training manifests.

Pixels map to cell values as ``u = 1 - 2 * pixel / maxval``: black is +1
and white is -1.  :func:`grid_to_pixels` inverts it (with rounding).
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .core import SymmetryPattern, TemplateSet, get_pattern


class PgmError(ValueError):
    pass


def _tokens(data: bytes):
    """Yield (token, end_offset) pairs from a PNM header, skipping comments."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Return ``(pixels, maxval)`` for a P2 or P5 file; pixels are ``int`` rows x cols."""
    data = Path(path).read_bytes()
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        width = int(next(toks)[0])
        height = int(next(toks)[0])
        maxval_tok, end = next(toks)
        maxval = int(maxval_tok)
    except (StopIteration, ValueError) as exc:
        raise PgmError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise PgmError(f"{path}: bad dimensions or maxval")
    if magic == b"P5":
        raster = data[end + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = width * height * dtype.itemsize
        if len(raster) < need:
            raise PgmError(f"{path}: truncated raster")
        pixels = np.frombuffer(raster[:need], dtype=dtype).astype(np.int64)
    elif magic == b"P2":
        vals = [int(t) for t, _ in toks]
        if len(vals) < width * height:
            raise PgmError(f"{path}: truncated raster")
        pixels = np.array(vals[:width * height], dtype=np.int64)
    else:
        raise PgmError(f"{path}: unsupported magic {magic!r}")
    if pixels.size and (pixels.min() < 0 or pixels.max() > maxval):
        raise PgmError(f"{path}: pixel outside [0, maxval]")
    return pixels.reshape(height, width), maxval


def write_pgm(path, pixels, maxval: int = 255, binary: bool = True) -> None:
    px = np.asarray(pixels)
    if px.ndim != 2:
        raise ValueError("pixels must be 2-D")
    if px.min() < 0 or px.max() > maxval:
        raise ValueError("pixel outside [0, maxval]")
    h, w = px.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(px.astype(dtype).tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n{maxval}\n".encode())
            for row in px:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode())


def pixels_to_grid(pixels, maxval: int = 255) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(pixels, dtype=np.float64) / maxval


def grid_to_pixels(grid, maxval: int = 255) -> np.ndarray:
    g = np.clip(np.asarray(grid, dtype=np.float64), -1.0, 1.0)
    return np.rint((1.0 - g) * maxval / 2.0).astype(np.int64)


def load_grid(path) -> np.ndarray:
    pixels, maxval = read_pgm(path)
    return pixels_to_grid(pixels, maxval)


def save_grid(path, grid, maxval: int = 255, binary: bool = True) -> None:
    write_pgm(path, grid_to_pixels(grid, maxval), maxval, binary)


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

def template_to_json(template: TemplateSet, shift_form: bool = False) -> dict:
    """JSON document with fields ``a``, ``b``, ``i``, ``dt``, ``pattern``.

    With ``shift_form`` every coefficient is written as ``{"sign", "p"}``
    (sign 0 for zero) and the bias stays real.
    """
    doc = template.to_dict()
    if shift_form:
        from .hwsim import coeff_matrix
        doc["a"] = [[c.to_dict() for c in row] for row in coeff_matrix(template.a)]
        doc["b"] = [[c.to_dict() for c in row] for row in coeff_matrix(template.b)]
        doc["format"] = "shift"
    return doc


def _decode_matrix(rows):
    out = []
    for row in rows:
        r = []
        for v in row:
            if isinstance(v, dict):
                r.append(0.0 if int(v["sign"]) == 0 else int(v["sign"]) * 2.0 ** int(v["p"]))
            else:
                r.append(float(v))
        out.append(r)
    return out


def template_from_json(doc: dict) -> TemplateSet:
    doc = dict(doc)
    doc["a"] = _decode_matrix(doc["a"])
    doc["b"] = _decode_matrix(doc["b"])
    return TemplateSet.from_dict(doc)


def save_template(path, template: TemplateSet, shift_form: bool = False) -> None:
    Path(path).write_text(json.dumps(template_to_json(template, shift_form), indent=2) + "\n")


def load_template(path) -> TemplateSet:
    return template_from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def write_manifest(path, pairs, pattern="isotropic", iterations=10, dt=0.5, **extra) -> None:
    """``pairs`` is a list of ``(input_path, ideal_path)``, stored relative to the manifest."""
    base = Path(path).resolve().parent
    rel = lambda p: os.path.relpath(Path(p).resolve(), base)  # noqa: E731
    pat = pattern.to_dict() if isinstance(pattern, SymmetryPattern) else pattern
    doc = {"pairs": [{"input": rel(i), "ideal": rel(o)} for i, o in pairs],
           "pattern": pat, "iterations": iterations, "dt": dt}
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path) -> dict:
    """Parse a manifest; resolves image paths and loads the grids."""
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.resolve().parent
    pairs = []
    for entry in doc["pairs"]:
        u = load_grid(base / entry["input"])
        y = load_grid(base / entry["ideal"])
        pairs.append((u, y))
    pat = doc.get("pattern", "isotropic")
    pattern = get_pattern(pat) if isinstance(pat, str) else SymmetryPattern.from_dict(pat)
    return {"pairs": pairs, "pattern": pattern, "iterations": int(doc.get("iterations", 10)),
            "dt": float(doc.get("dt", 0.5)), "raw": doc}
