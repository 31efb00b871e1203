"""Discrete-time cellular neural network engine.

Grids are plain 2-D ``float64`` numpy arrays (rows x columns).  A cell's
state evolves by forward Euler::

    x' = x + dt * (-x + I + sum_kl A[k,l] f(x[i+k, j+l]) + sum_kl B[k,l] u[i+k, j+l])

with the piecewise-linear output ``f(x) = 0.5 (|x + 1| - |x - 1|)`` and a
3x3 neighbourhood.  All neighbour reads use the previous state (Jacobi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

BOUNDARIES = {"zero": kernels.BOUNDARY_ZERO, "replicate": kernels.BOUNDARY_REPLICATE}
INIT_POLICIES = ("input", "zero")

DT_MIN_EXP = -7
DT_MAX_EXP = 0


class DivergenceError(FloatingPointError):
    """Raised when a state update produces non-finite values."""


def activation(x):
    """Saturating output function ``0.5 (|x+1| - |x-1|)``; accepts scalars or arrays.

    Evaluated as a clip to [-1, 1], which is the same function without the
    rounding error of the two absolute values.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("activation input must be finite")
    out = np.clip(arr, -1.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def as_grid(values, name="grid") -> np.ndarray:
    g = np.asarray(values, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {g.shape}")
    return g


def dt_exponent(dt: float) -> int:
    """Exponent ``s`` with ``dt == 2**s`` and -7 <= s <= 0, else ValueError."""
    mant, e = math.frexp(dt)
    if dt <= 0 or mant != 0.5:
        raise ValueError(f"dt={dt!r} is not a power of two")
    s = e - 1
    if not DT_MIN_EXP <= s <= DT_MAX_EXP:
        raise ValueError(f"dt=2^{s} outside the supported range [2^{DT_MIN_EXP}, 1]")
    return s


@dataclass(frozen=True)
class SymmetryPattern:
    """Maps free parameters onto the 18 positions of the A and B templates."""

    a_layout: tuple
    b_layout: tuple
    free_count: int
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.a_layout, dtype=int)
        b = np.asarray(self.b_layout, dtype=int)
        if a.shape != (3, 3) or b.shape != (3, 3):
            raise ValueError("pattern layouts must be 3x3")
        object.__setattr__(self, "a_layout", tuple(map(tuple, a.tolist())))
        object.__setattr__(self, "b_layout", tuple(map(tuple, b.tolist())))
        idx = np.concatenate([a.ravel(), b.ravel()])
        if idx.min() < 0 or idx.max() >= self.free_count:
            raise ValueError("pattern index outside [0, free_count)")
        if len(set(idx.tolist())) != self.free_count:
            raise ValueError("every free parameter must appear in a layout")

    @property
    def a_index(self) -> np.ndarray:
        return np.asarray(self.a_layout, dtype=int)

    @property
    def b_index(self) -> np.ndarray:
        return np.asarray(self.b_layout, dtype=int)

    def repetition(self) -> np.ndarray:
        """Number of template cells occupied by each free parameter."""
        idx = np.concatenate([self.a_index.ravel(), self.b_index.ravel()])
        return np.bincount(idx, minlength=self.free_count)

    def expand(self, params) -> tuple[np.ndarray, np.ndarray]:
        p = np.asarray(params, dtype=np.float64)
        if p.shape != (self.free_count,):
            raise ValueError(f"expected {self.free_count} parameters, got {p.shape}")
        return p[self.a_index], p[self.b_index]

    def extract(self, a, b) -> np.ndarray:
        """Inverse of :meth:`expand`; rejects matrices that break the coupling."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        params = np.empty(self.free_count)
        seen = np.zeros(self.free_count, dtype=bool)
        for layout, mat in ((self.a_index, a), (self.b_index, b)):
            for pos in np.ndindex(3, 3):
                i = layout[pos]
                if seen[i] and params[i] != mat[pos]:
                    raise ValueError(f"template violates pattern {self.name!r} at parameter {i}")
                params[i] = mat[pos]
                seen[i] = True
        return params

    def to_dict(self) -> dict:
        return {"name": self.name, "a": [list(r) for r in self.a_layout],
                "b": [list(r) for r in self.b_layout], "free_count": self.free_count}

    @classmethod
    def from_dict(cls, d) -> "SymmetryPattern":
        if isinstance(d, str):
            return get_pattern(d)
        return cls(d["a"], d["b"], int(d["free_count"]), d.get("name", ""))


PATTERNS = {
    # medical image segmentation
    "segmentation": SymmetryPattern(
        ((0, 1, 2), (3, 4, 3), (2, 1, 0)), ((5, 6, 7), (8, 9, 8), (7, 6, 5)), 10, "segmentation"),
    # obstacle detection
    "obstacle": SymmetryPattern(
        ((0, 0, 0), (0, 1, 0), (0, 0, 0)), ((2, 2, 2), (2, 3, 2), (2, 2, 2)), 4, "obstacle"),
    # rotation/reflection invariant: corners, edges, centre
    "isotropic": SymmetryPattern(
        ((0, 1, 0), (1, 2, 1), (0, 1, 0)), ((3, 4, 3), (4, 5, 4), (3, 4, 3)), 6, "isotropic"),
    "full": SymmetryPattern(
        tuple(tuple(range(r * 3, r * 3 + 3)) for r in range(3)),
        tuple(tuple(range(9 + r * 3, 9 + r * 3 + 3)) for r in range(3)), 18, "full"),
}


def get_pattern(name: str) -> SymmetryPattern:
    try:
        return PATTERNS[name]
    except KeyError:
        raise ValueError(f"unknown pattern {name!r}; choose from {sorted(PATTERNS)}") from None


@dataclass(eq=False)
class TemplateSet:
    a: np.ndarray
    b: np.ndarray
    bias: float = 0.0
    dt: float = 1.0
    pattern: SymmetryPattern | None = field(default=None, compare=False)

    def __post_init__(self):
        self.a = np.array(self.a, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64)
        if self.a.shape != (3, 3) or self.b.shape != (3, 3):
            raise ValueError("templates must be 3x3")
        self.bias = float(self.bias)
        self.dt = float(self.dt)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.pattern is not None:
            # raises if the matrices do not follow the pattern
            self.pattern.extract(self.a, self.b)

    def __eq__(self, other):
        if not isinstance(other, TemplateSet):
            return NotImplemented
        return (np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
                and self.bias == other.bias and self.dt == other.dt)

    @classmethod
    def from_params(cls, pattern: SymmetryPattern, params, bias=0.0, dt=1.0) -> "TemplateSet":
        a, b = pattern.expand(params)
        return cls(a, b, bias, dt, pattern)

    def params(self) -> np.ndarray:
        if self.pattern is None:
            raise ValueError("template has no symmetry pattern")
        return self.pattern.extract(self.a, self.b)

    def check_hardware(self) -> int:
        """Validate the Euler step for the shift datapath; returns its exponent."""
        return dt_exponent(self.dt)

    def to_dict(self) -> dict:
        d = {"a": self.a.tolist(), "b": self.b.tolist(), "i": self.bias, "dt": self.dt,
             "pattern": None if self.pattern is None else self.pattern.to_dict()}
        return d

    @classmethod
    def from_dict(cls, d) -> "TemplateSet":
        pat = d.get("pattern")
        pattern = None if pat is None else SymmetryPattern.from_dict(pat)
        return cls(d["a"], d["b"], d.get("i", 0.0), d.get("dt", 1.0), pattern)


def expand_pattern(pattern: SymmetryPattern, params, bias=0.0, dt=1.0) -> TemplateSet:
    return TemplateSet.from_params(pattern, params, bias, dt)


def _schedule(template):
    if isinstance(template, TemplateSet):
        template = [template]
    sched = list(template)
    if not sched:
        raise ValueError("empty template schedule")
    a = np.stack([t.a for t in sched])
    b = np.stack([t.b for t in sched])
    bias = np.array([t.bias for t in sched])
    dt = np.array([t.dt for t in sched])
    return a, b, bias, dt


def _boundary_code(boundary) -> int:
    try:
        return BOUNDARIES[boundary]
    except KeyError:
        raise ValueError(f"unknown boundary policy {boundary!r}") from None


def step(state, inp, template: TemplateSet, boundary="zero") -> np.ndarray:
    """One Euler update; returns a new array and never mutates ``state``."""
    x = as_grid(state, "state")
    u = as_grid(inp, "input")
    if x.shape != u.shape:
        raise ValueError(f"state {x.shape} and input {u.shape} differ in shape")
    a, b, bias, dt = _schedule(template)
    xn, _ = kernels.float_run(x, u, a[:1], b[:1], bias[:1], dt[:1], 1, _boundary_code(boundary))
    if not np.all(np.isfinite(xn)):
        raise DivergenceError("non-finite state after update")
    return xn


def run(inp, template, iterations: int, init="input", boundary="zero", tol=None,
        return_state=False):
    """Iterate the network and return the output ``f(x)``.

    ``template`` is a :class:`TemplateSet` or a sequence of them used as a
    per-iteration schedule (entry ``n % len`` at iteration ``n``).  ``tol``
    enables early stopping once the largest state change drops below it.
    """
    u = as_grid(inp, "input")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if init == "input":
        x0 = u
    elif init == "zero":
        x0 = np.zeros_like(u)
    else:
        raise ValueError(f"unknown init policy {init!r}")
    a, b, bias, dt = _schedule(template)
    x, _ = kernels.float_run(x0, u, a, b, bias, dt, iterations, _boundary_code(boundary),
                             0.0 if tol is None else float(tol))
    if not np.all(np.isfinite(x)):
        raise DivergenceError("non-finite state during run")
    y = np.clip(x, -1.0, 1.0)
    return (y, x) if return_state else y


def op_count(width: int, height: int, iterations: int, template_size: int = 3) -> int:
    """Arithmetic operations for a full run: per cell and iteration,
    ``2 s^2 + 1`` multiplications and ``2 s^2 + 2`` additions (39 for 3x3)."""
    for v in (width, height, iterations, template_size):
        if int(v) != v or v < 1:
            raise ValueError("op_count arguments must be positive integers")
    per_cell = 4 * template_size * template_size + 3
    return int(width) * int(height) * per_cell * int(iterations)
