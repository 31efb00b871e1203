"""Particle swarm template learning.

A candidate is the vector ``[p_0, ..., p_{F-1}, bias]`` where ``p`` are the
free parameters of the task's symmetry pattern.  Entries listed in
``TrainingTask.frozen`` are injected verbatim into every candidate and are
never searched; the swarm only moves the remaining dimensions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import BOUNDARIES, SymmetryPattern, TemplateSet, as_grid

log = logging.getLogger(__name__)


@dataclass
class PsoConfig:
    swarm_size: int = 10
    inertia: float = 0.8
    accel_personal: float = 1.4
    accel_global: float = 1.2
    iterations: int = 500
    bound_low: float | np.ndarray = -4.0
    bound_high: float | np.ndarray = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if np.any(np.asarray(self.bound_low) > np.asarray(self.bound_high)):
            raise ValueError("bound_low exceeds bound_high")

    @classmethod
    def for_range(cls, m: int, **kw) -> "PsoConfig":
        """Search box [-2^m, 2^m] on every dimension."""
        return cls(bound_low=-(2.0 ** m), bound_high=2.0 ** m, **kw)

    def bounds(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.bound_low, dtype=np.float64), (dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.bound_high, dtype=np.float64), (dim,)).copy()
        return lo, hi

    def to_dict(self) -> dict:
        conv = lambda v: v.tolist() if isinstance(v, np.ndarray) else v  # noqa: E731
        return {"swarm_size": self.swarm_size, "inertia": self.inertia,
                "accel_personal": self.accel_personal, "accel_global": self.accel_global,
                "iterations": self.iterations, "bound_low": conv(self.bound_low),
                "bound_high": conv(self.bound_high), "seed": self.seed}


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_value: float = np.inf


@dataclass
class TrainingTask:
    pairs: list
    pattern: SymmetryPattern
    iterations_per_eval: int = 10
    frozen: dict = field(default_factory=dict)
    dt: float = 0.5
    init: str = "input"
    boundary: str = "zero"

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("training task needs at least one pair")
        pairs = []
        for u, ideal in self.pairs:
            u = as_grid(u, "input")
            ideal = as_grid(ideal, "ideal")
            if u.shape != ideal.shape:
                raise ValueError("input and ideal output differ in shape")
            pairs.append((u, ideal))
        if len({p[0].shape for p in pairs}) != 1:
            raise ValueError("all training pairs must share dimensions")
        self.pairs = pairs
        if self.init not in ("input", "zero"):
            raise ValueError(f"unknown init policy {self.init!r}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary policy {self.boundary!r}")
        for i in self.frozen:
            if not 0 <= i < self.dim:
                raise ValueError(f"frozen index {i} outside [0, {self.dim})")

    @property
    def dim(self) -> int:
        """Full candidate length: pattern parameters plus the bias."""
        return self.pattern.free_count + 1

    @property
    def bias_index(self) -> int:
        return self.pattern.free_count

    def search_indices(self) -> np.ndarray:
        return np.array([i for i in range(self.dim) if i not in self.frozen], dtype=int)

    def with_frozen(self, frozen: dict) -> "TrainingTask":
        return TrainingTask(self.pairs, self.pattern, self.iterations_per_eval, dict(frozen),
                            self.dt, self.init, self.boundary)

    def with_ideals(self, ideals) -> "TrainingTask":
        pairs = [(u, y) for (u, _), y in zip(self.pairs, ideals)]
        return TrainingTask(pairs, self.pattern, self.iterations_per_eval, dict(self.frozen),
                            self.dt, self.init, self.boundary)

    def template(self, theta) -> TemplateSet:
        theta = np.asarray(theta, dtype=np.float64)
        return TemplateSet.from_params(self.pattern, theta[:-1], theta[-1], self.dt)

    def outputs(self, theta) -> list:
        theta = np.asarray(theta, dtype=np.float64)
        a, b = self.pattern.expand(theta[:-1])
        a = a[None]
        b = b[None]
        bias = np.array([theta[-1]])
        dt = np.array([self.dt])
        code = BOUNDARIES[self.boundary]
        outs = []
        for u, _ in self.pairs:
            x0 = u if self.init == "input" else np.zeros_like(u)
            x, _ = kernels.float_run(x0, u, a, b, bias, dt, self.iterations_per_eval, code)
            outs.append(np.clip(x, -1.0, 1.0))
        return outs

    def evaluate(self, theta) -> float:
        """Summed per-pair objective of a full candidate vector."""
        total = 0.0
        for out, (_, ideal) in zip(self.outputs(theta), self.pairs):
            total += objective(out, ideal)
        return total


def objective(output, ideal) -> float:
    """Mean absolute difference between an output image and its ideal."""
    o = as_grid(output, "output")
    t = as_grid(ideal, "ideal")
    if o.shape != t.shape:
        raise ValueError(f"shape mismatch {o.shape} vs {t.shape}")
    return float(np.abs(o - t).sum() / o.size)


def accuracy_percent(obj: float, n_pairs: int = 1) -> float:
    """Map a summed objective to a percentage; per-pixel error spans [0, 2]."""
    return 100.0 * (1.0 - obj / (2.0 * n_pairs))


def update_particle(p: Particle, global_best, cfg: PsoConfig, rng, low=None, high=None) -> Particle:
    """Velocity/position update with fresh per-dimension r1, r2 draws.

    Positions are clamped into the box; velocities are left as computed.
    """
    pos = np.asarray(p.position, dtype=np.float64)
    gb = np.asarray(global_best, dtype=np.float64)
    if pos.shape != gb.shape or pos.shape != np.shape(p.velocity) or pos.shape != np.shape(p.best_position):
        raise ValueError("particle and global best dimensions disagree")
    if low is None or high is None:
        low, high = cfg.bounds(pos.size)
    r1 = rng.random(pos.size)
    r2 = rng.random(pos.size)
    vel = (cfg.inertia * p.velocity
           + cfg.accel_personal * r1 * (p.best_position - pos)
           + cfg.accel_global * r2 * (gb - pos))
    new_pos = np.clip(pos + vel, low, high)
    return Particle(new_pos, vel, np.array(p.best_position, dtype=np.float64), p.best_value)


@dataclass
class TrainResult:
    params: np.ndarray
    objective: float
    history: list
    evaluations: int

    @property
    def bias(self) -> float:
        return float(self.params[-1])


def _assemble(task: TrainingTask, idx, sub) -> np.ndarray:
    theta = np.empty(task.dim)
    for i, v in task.frozen.items():
        theta[i] = v
    theta[idx] = sub
    return theta


def train(task: TrainingTask, cfg: PsoConfig, init=None, objective_fn=None) -> TrainResult:
    """Minimise the task objective over the unfrozen dimensions.

    ``init`` optionally seeds particle 0 with a full candidate (clamped), so
    the search always contains the incumbent.  ``objective_fn`` overrides
    ``task.evaluate`` (used for planted test problems).
    """
    evaluate = objective_fn or task.evaluate
    idx = task.search_indices()
    dim = idx.size
    if dim == 0:
        theta = _assemble(task, idx, np.empty(0))
        val = evaluate(theta)
        return TrainResult(theta, val, [val], 1)

    full_lo, full_hi = cfg.bounds(task.dim)
    lo, hi = full_lo[idx], full_hi[idx]
    span = hi - lo
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.swarm_size)]

    swarm = []
    for n, rng in enumerate(rngs):
        pos = lo + rng.random(dim) * span
        vel = (rng.random(dim) - 0.5) * span
        if n == 0 and init is not None:
            pos = np.clip(np.asarray(init, dtype=np.float64)[idx], lo, hi)
        swarm.append(Particle(pos, vel, pos.copy(), np.inf))

    gbest = swarm[0].position.copy()
    gval = np.inf
    history = []
    evals = 0
    for _ in range(cfg.iterations):
        for n, p in enumerate(swarm):
            val = evaluate(_assemble(task, idx, p.position))
            evals += 1
            if not np.isfinite(val):
                log.warning("non-finite objective for particle %d; re-initialising", n)
                p.position = lo + rngs[n].random(dim) * span
                continue
            if val < p.best_value:
                p.best_value = val
                p.best_position = p.position.copy()
            if val < gval:
                gval = val
                gbest = p.position.copy()
        history.append(gval)
        swarm = [update_particle(p, gbest, cfg, rngs[n], lo, hi) for n, p in enumerate(swarm)]
    return TrainResult(_assemble(task, idx, gbest), float(gval), history, evals)


def retrain_bias(task: TrainingTask, cfg: PsoConfig, template: TemplateSet) -> TrainResult:
    """One-dimensional search over the bias with every A/B parameter frozen."""
    params = template.params() if template.pattern is not None else task.pattern.extract(template.a, template.b)
    frozen = {i: float(v) for i, v in enumerate(params)}
    sub = task.with_frozen(frozen)
    init = np.append(params, template.bias)
    return train(sub, cfg, init=init)
