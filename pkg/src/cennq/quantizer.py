"""Incremental powers-of-two quantization of CeNN templates.

Each round picks a batch of still-floating parameters, snaps them to
``{0, +-2^k, ..., +-2^m}``, freezes them and lets the particle swarm
re-optimise everything that is left (including the bias, which is never
quantized).  Once all template parameters are fixed a final bias-only
search is run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import TemplateSet
from .pso import PsoConfig, TrainingTask, retrain_bias, train

STRATEGIES = ("RAN", "PI", "WPI", "NN", "WNN")
BATCH_MODES = ("C", "L")


@dataclass(frozen=True)
class QuantSet:
    k: int
    m: int

    def __post_init__(self):
        if int(self.k) != self.k or int(self.m) != self.m:
            raise ValueError("k and m must be integers")
        if self.k > self.m:
            raise ValueError(f"k={self.k} exceeds m={self.m}")

    @classmethod
    def symmetric(cls, m: int) -> "QuantSet":
        return cls(-m, m)

    def __contains__(self, v) -> bool:
        if v == 0:
            return True
        mant, e = math.frexp(abs(v))
        return mant == 0.5 and self.k <= e - 1 <= self.m


def quant_values(qs: QuantSet) -> list:
    pos = [2.0 ** p for p in range(qs.k, qs.m + 1)]
    return [-v for v in reversed(pos)] + [0.0] + pos


def bit_width(qs: QuantSet) -> int:
    levels = 2 * (qs.m - qs.k + 1) + 1
    # ceil(log2(levels)) in exact integer arithmetic
    return (levels - 1).bit_length() + 1


def quantize_value(v: float, qs: QuantSet, zero_rule: str = "nearest") -> float:
    """Snap ``v`` to the quantization set.

    Values in ``[3*2^(p-2), 3*2^(p-1))`` map to ``2^p``, magnitudes at or
    above ``2^m`` saturate, and magnitudes below the zero threshold are
    pruned.  ``zero_rule="nearest"`` prunes below ``2^(k-1)`` (so the result
    is always the nearest element, ties to the larger magnitude);
    ``zero_rule="legacy"`` keeps the older ``2^(-k-1)`` threshold for
    compatibility with templates produced under that rule.
    """
    if not math.isfinite(v):
        raise ValueError("cannot quantize a non-finite value")
    a = abs(v)
    if zero_rule == "nearest":
        zero_below = math.ldexp(1.0, qs.k - 1)
    elif zero_rule == "legacy":
        zero_below = math.ldexp(1.0, -qs.k - 1)
    else:
        raise ValueError(f"unknown zero rule {zero_rule!r}")
    if a < zero_below or a == 0.0:
        return 0.0
    if a >= math.ldexp(1.0, qs.m):
        return math.copysign(math.ldexp(1.0, qs.m), v)
    mant, e = math.frexp(a)  # a = mant * 2^e, 0.5 <= mant < 1
    p = e if mant >= 0.75 else e - 1
    p = min(max(p, qs.k), qs.m)
    return math.copysign(math.ldexp(1.0, p), v)


def quantize_array(values, qs: QuantSet, zero_rule: str = "nearest") -> np.ndarray:
    """Vectorised :func:`quantize_value`."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    a = np.abs(v)
    zero_exp = qs.k - 1 if zero_rule == "nearest" else -qs.k - 1
    mant, e = np.frexp(a)
    p = np.where(mant >= 0.75, e, e - 1)
    p = np.clip(p, qs.k, qs.m)
    out = np.ldexp(1.0, p)
    out = np.where(a >= np.ldexp(1.0, qs.m), np.ldexp(1.0, qs.m), out)
    out = np.where((a < np.ldexp(1.0, zero_exp)) | (a == 0.0), 0.0, out)
    return np.where(out == 0.0, 0.0, np.copysign(out, v))


def nn_distance(v: float) -> float:
    """Distance from ``|v|`` to its nearest power of two.

    The midpoint between the bracketing powers decides the side; zero is
    already representable and has distance 0.
    """
    a = abs(v)
    if a == 0.0:
        return 0.0
    mant, e = math.frexp(a)
    lower = math.ldexp(1.0, e - 1)
    upper = math.ldexp(1.0, e)
    md = (lower + upper) / 2
    if md > a:
        return a - lower
    return upper - a


def batch_size(mode: str, fraction: float, total: int, remaining: int) -> int:
    """Parameters to quantize this round.

    Constant (``"C"``) takes ``ceil(fraction * total)``; log-scale (``"L"``)
    takes ``fraction * remaining`` rounded half up, at least one.
    """
    if remaining < 1:
        raise ValueError("no parameters left to quantize")
    f = Fraction(fraction).limit_denominator(10 ** 6)
    if mode == "C":
        n = math.ceil(f * total)
    elif mode == "L":
        n = math.floor(f * remaining + Fraction(1, 2))
    else:
        raise ValueError(f"unknown batch mode {mode!r}")
    return min(max(n, 1), remaining)


def priority_order(params, rq, unquantized, strategy: str, rng=None) -> list:
    """Indices of ``unquantized`` in quantization priority order."""
    U = sorted(int(i) for i in unquantized)
    if strategy == "RAN":
        if rng is None:
            raise ValueError("RAN strategy needs an rng")
        return [U[i] for i in rng.permutation(len(U))]
    p = np.asarray(params, dtype=np.float64)
    w = np.asarray(rq, dtype=np.float64)
    if strategy == "PI":
        key = lambda i: (-abs(p[i]), i)  # noqa: E731
    elif strategy == "WPI":
        key = lambda i: (-abs(p[i]) * w[i], i)  # noqa: E731
    elif strategy == "NN":
        key = lambda i: (nn_distance(p[i]), i)  # noqa: E731
    elif strategy == "WNN":
        key = lambda i: (nn_distance(p[i]) / w[i], i)  # noqa: E731
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return sorted(U, key=key)


@dataclass
class RoundRecord:
    selected: list
    values: list
    objective: float


@dataclass
class QuantizationState:
    params: np.ndarray
    rq: np.ndarray
    strategy: str = "WNN"
    batch_mode: str = "C"
    fraction: float = 0.2
    quantized_mask: np.ndarray = None
    bias: float = 0.0
    round_log: list = field(default_factory=list)

    def __post_init__(self):
        self.params = np.array(self.params, dtype=np.float64)
        self.rq = np.asarray(self.rq, dtype=int)
        if self.quantized_mask is None:
            self.quantized_mask = np.zeros(self.params.size, dtype=bool)
        if self.params.shape != self.rq.shape:
            raise ValueError("params and repetition counts differ in length")
        if np.any(self.rq < 1):
            raise ValueError("repetition quantities must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.batch_mode not in BATCH_MODES:
            raise ValueError(f"unknown batch mode {self.batch_mode!r}")

    @property
    def unquantized(self) -> list:
        return [int(i) for i in np.flatnonzero(~self.quantized_mask)]

    @property
    def quantized(self) -> list:
        return [int(i) for i in np.flatnonzero(self.quantized_mask)]


def select_batch(state: QuantizationState, rng=None) -> list:
    U = state.unquantized
    if not U:
        raise ValueError("all parameters are already quantized")
    n = batch_size(state.batch_mode, state.fraction, state.params.size, len(U))
    return priority_order(state.params, state.rq, U, state.strategy, rng)[:n]


@dataclass
class QuantizeResult:
    template: TemplateSet
    objective: float
    state: QuantizationState
    initial_objective: float


def incremental_quantize(template: TemplateSet, task: TrainingTask, qs: QuantSet,
                         strategy: str = "WNN", batch_mode: str = "C", fraction: float | None = None,
                         pso_cfg: PsoConfig | None = None, seed: int = 0,
                         zero_rule: str = "nearest") -> QuantizeResult:
    """Partition, quantize and re-train until every template parameter is fixed.

    The default batch fraction is 20% of all parameters for constant
    batches and half of the remaining ones for log-scale batches.  No round
    is ever rolled back; regressions stay visible in ``state.round_log``.
    """
    pattern = task.pattern
    if template.pattern is not None and template.pattern != pattern:
        raise ValueError("template and task use different symmetry patterns")
    if fraction is None:
        fraction = 0.2 if batch_mode == "C" else 0.5
    if pso_cfg is None:
        pso_cfg = PsoConfig.for_range(qs.m, seed=seed)
    state = QuantizationState(pattern.extract(template.a, template.b), pattern.repetition(),
                              strategy, batch_mode, fraction, bias=template.bias)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51A7]))
    theta = np.append(state.params, state.bias)
    initial = task.evaluate(theta)

    rnd = 0
    while state.unquantized:
        sel = select_batch(state, rng)
        for i in sel:
            state.params[i] = quantize_value(state.params[i], qs, zero_rule)
            state.quantized_mask[i] = True
        theta = np.append(state.params, state.bias)
        if state.unquantized:
            frozen = {i: float(state.params[i]) for i in state.quantized}
            cfg = _round_cfg(pso_cfg, seed, rnd)
            res = train(task.with_frozen(frozen), cfg, init=theta)
            state.params[state.unquantized] = res.params[state.unquantized]
            state.bias = res.bias
            obj = res.objective
        else:
            obj = task.evaluate(theta)
        state.round_log.append(RoundRecord(list(sel), [float(state.params[i]) for i in sel], obj))
        rnd += 1

    current = TemplateSet.from_params(pattern, state.params, state.bias, task.dt)
    res = retrain_bias(task, _round_cfg(pso_cfg, seed, rnd), current)
    state.bias = res.bias
    state.round_log.append(RoundRecord([], [], res.objective))
    final = TemplateSet.from_params(pattern, state.params, state.bias, task.dt)
    return QuantizeResult(final, res.objective, state, initial)


def _round_cfg(cfg: PsoConfig, seed: int, rnd: int) -> PsoConfig:
    return PsoConfig(cfg.swarm_size, cfg.inertia, cfg.accel_personal, cfg.accel_global,
                     cfg.iterations, cfg.bound_low, cfg.bound_high,
                     int(np.random.SeedSequence([seed, rnd]).generate_state(1)[0]))


def is_closed(template: TemplateSet, qs: QuantSet) -> bool:
    """True when every A/B coefficient is an element of the quantization set."""
    return all(float(v) in qs for v in np.concatenate([template.a.ravel(), template.b.ravel()]))
