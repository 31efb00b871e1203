"""Shift-based fixed-point CeNN datapath and the data-scheduler cycle model.

Words are 18-bit two's complement with ``frac_bits`` fractional bits
(Q5.12 by default).  Template products are arithmetic shifts; the Euler
step size ``dt = 2^s`` is one more shift.  Products are summed in a wide
accumulator that carries ``GUARD_BITS`` extra fractional bits, so any
grouping of the terms yields the same sum; only the write-back rounds and
saturates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import BOUNDARIES, TemplateSet, as_grid, dt_exponent

WORD_BITS = 18
DEFAULT_FRAC_BITS = 12
GUARD_BITS = 16
ACC_BITS = 48
RAW_MAX = (1 << (WORD_BITS - 1)) - 1
RAW_MIN = -(1 << (WORD_BITS - 1))


@dataclass(frozen=True)
class FixedWord:
    raw: int
    frac_bits: int = DEFAULT_FRAC_BITS
    saturated: bool = False

    def __post_init__(self):
        if not RAW_MIN <= self.raw <= RAW_MAX:
            raise ValueError(f"raw value {self.raw} does not fit in {WORD_BITS} bits")

    @property
    def value(self) -> float:
        return from_fixed(self)


def _saturate(raw: int) -> tuple[int, bool]:
    if raw > RAW_MAX:
        return RAW_MAX, True
    if raw < RAW_MIN:
        return RAW_MIN, True
    return raw, False


def to_fixed(v: float, frac_bits: int = DEFAULT_FRAC_BITS) -> FixedWord:
    """Encode with round-half-to-even; out-of-range values saturate and are flagged."""
    if math.isnan(v):
        raise ValueError("cannot encode NaN")
    if math.isinf(v):
        raw, sat = (RAW_MAX if v > 0 else RAW_MIN), True
    else:
        raw, sat = _saturate(round(v * (1 << frac_bits)))
    return FixedWord(raw, frac_bits, sat)


def from_fixed(w: FixedWord) -> float:
    return w.raw / (1 << w.frac_bits)


def to_fixed_array(values, frac_bits: int = DEFAULT_FRAC_BITS) -> tuple[np.ndarray, int]:
    """Vectorised :func:`to_fixed`; returns ``(raw int64 array, saturation count)``."""
    v = np.asarray(values, dtype=np.float64)
    scaled = np.rint(np.ldexp(v, frac_bits))
    sat = int(np.count_nonzero((scaled > RAW_MAX) | (scaled < RAW_MIN)))
    return np.clip(scaled, RAW_MIN, RAW_MAX).astype(np.int64), sat


def from_fixed_array(raw, frac_bits: int = DEFAULT_FRAC_BITS) -> np.ndarray:
    return np.ldexp(np.asarray(raw, dtype=np.float64), -frac_bits)


@dataclass(frozen=True)
class ShiftCoeff:
    """Zero (``sign == 0``) or ``sign * 2**exponent``."""

    sign: int = 0
    exponent: int = 0

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or 1")
        if self.sign == 0 and self.exponent != 0:
            object.__setattr__(self, "exponent", 0)

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    @property
    def value(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * math.ldexp(1.0, self.exponent)

    @classmethod
    def from_value(cls, v: float) -> "ShiftCoeff":
        if v == 0:
            return ZERO
        mant, e = math.frexp(abs(v))
        if mant != 0.5:
            raise ValueError(f"{v!r} is not zero or a power of two")
        return cls(1 if v > 0 else -1, e - 1)

    def to_dict(self) -> dict:
        return {"sign": self.sign, "p": self.exponent}

    @classmethod
    def from_dict(cls, d) -> "ShiftCoeff":
        return cls(int(d["sign"]), int(d.get("p", 0)))


ZERO = ShiftCoeff()


def shift_mul(x: FixedWord, c: ShiftCoeff) -> FixedWord:
    """Multiply by ``c`` with shifts only.

    Left shifts saturate; right shifts round toward negative infinity like
    an arithmetic shift.  The sign is applied after shifting.
    """
    if c.is_zero:
        return FixedWord(0, x.frac_bits)
    r = x.raw << c.exponent if c.exponent >= 0 else x.raw >> -c.exponent
    r, sat = _saturate(r)
    if c.sign < 0:
        r, sat2 = _saturate(-r)
        sat = sat or sat2
    return FixedWord(r, x.frac_bits, sat)


def coeff_matrix(mat) -> list:
    """3x3 real matrix -> nested list of :class:`ShiftCoeff`."""
    m = np.asarray(mat, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError("template must be 3x3")
    return [[ShiftCoeff.from_value(float(m[r, c])) for c in range(3)] for r in range(3)]


def _sign_exp(coeffs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(coeffs, np.ndarray) and coeffs.dtype != object:
        coeffs = coeff_matrix(coeffs)
    sign = np.array([[c.sign for c in row] for row in coeffs], dtype=np.int64)
    exp = np.array([[c.exponent for c in row] for row in coeffs], dtype=np.int64)
    if sign.shape != (3, 3):
        raise ValueError("template must be 3x3")
    return sign, exp


def fixed_step(state_raw, input_raw, a_coeffs, b_coeffs, bias: FixedWord, dt: ShiftCoeff,
               boundary="zero", frac_bits: int = DEFAULT_FRAC_BITS) -> np.ndarray:
    """One shift-based Euler update on raw words; returns the new raw state."""
    x = np.asarray(state_raw, dtype=np.int64)
    u = np.asarray(input_raw, dtype=np.int64)
    if x.shape != u.shape or x.ndim != 2:
        raise ValueError("state and input must be 2-D arrays of equal shape")
    if dt.sign != 1 or not -7 <= dt.exponent <= 0:
        raise ValueError("dt must be +2^s with -7 <= s <= 0")
    a_sign, a_exp = _sign_exp(a_coeffs)
    b_sign, b_exp = _sign_exp(b_coeffs)
    out, _ = kernels.fixed_run(x, u, a_sign, a_exp, b_sign, b_exp, bias.raw, dt.exponent,
                               frac_bits, GUARD_BITS, WORD_BITS, 1, BOUNDARIES[boundary])
    return out


@dataclass
class FixedRunResult:
    output: np.ndarray
    state_raw: np.ndarray
    saturations: int


def fixed_run(inp, template: TemplateSet, iterations: int, frac_bits: int = DEFAULT_FRAC_BITS,
              init: str = "input", boundary: str = "zero") -> FixedRunResult:
    """Run an L-stage pipeline (L = ``iterations``) on a float image.

    ``template`` must already be quantized: every coefficient zero or a
    power of two and ``dt`` a power of two in [2^-7, 1].
    """
    u = as_grid(inp, "input")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    s = dt_exponent(template.dt)
    a_sign, a_exp = _sign_exp(coeff_matrix(template.a))
    b_sign, b_exp = _sign_exp(coeff_matrix(template.b))
    u_raw, sat_u = to_fixed_array(u, frac_bits)
    bias = to_fixed(template.bias, frac_bits)
    if init == "input":
        x0 = u_raw
    elif init == "zero":
        x0 = np.zeros_like(u_raw)
    else:
        raise ValueError(f"unknown init policy {init!r}")
    x, sat = kernels.fixed_run(x0, u_raw, a_sign, a_exp, b_sign, b_exp, bias.raw, s, frac_bits,
                               GUARD_BITS, WORD_BITS, iterations, BOUNDARIES[boundary])
    one = 1 << frac_bits
    y = from_fixed_array(np.clip(x, -one, one), frac_bits)
    return FixedRunResult(y, x, sat + sat_u + int(bias.saturated))


# ---------------------------------------------------------------------------
# template statistics and scheduling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TemplateStats:
    zero_count: int
    nonzero_count: int
    distinct_nonzero_count: int
    max_repetition: int


def analyze_template(t) -> TemplateStats:
    m = np.asarray(t, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError("template must be 3x3")
    nz = m[m != 0]
    if nz.size:
        _, counts = np.unique(nz, return_counts=True)
        distinct, max_rep = int(counts.size), int(counts.max())
    else:
        distinct, max_rep = 0, 0
    return TemplateStats(int(9 - nz.size), int(nz.size), distinct, max_rep)


@dataclass
class ScheduleGroup:
    coefficient: ShiftCoeff
    operand_indices: list
    presummed: bool = False


@dataclass
class SchedulePlan:
    groups: list
    skipped_zero_count: int
    shifter_count: int
    cycles: int
    adder_cycles: int = 0
    zero_multiplies: int = 0

    def to_dict(self) -> dict:
        return {
            "groups": [{"coefficient": g.coefficient.to_dict(), "operands": list(g.operand_indices),
                        "presummed": g.presummed} for g in self.groups],
            "skipped_zero_count": self.skipped_zero_count,
            "zero_multiplies": self.zero_multiplies,
            "shifter_count": self.shifter_count,
            "adder_cycles": self.adder_cycles,
            "cycles": self.cycles,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [f"shifters={self.shifter_count} cycles={self.cycles} "
                 f"skipped_zeros={self.skipped_zero_count} adder_cycles={self.adder_cycles}"]
        for g in self.groups:
            c = g.coefficient
            coef = f"{'+' if c.sign > 0 else '-'}2^{c.exponent}"
            ops = ",".join(f"({i // 3},{i % 3})" for i in g.operand_indices)
            tag = " presum" if g.presummed else ""
            lines.append(f"  {coef:>7} x [{ops}]{tag}")
        return "\n".join(lines)


SHIFTER_COUNTS = (1, 3, 9)


def _makespan(releases, shifters: int) -> int:
    """Unit tasks on ``shifters`` identical units; a task with release ``r``
    may run in cycle ``r + 1`` or later."""
    if not releases:
        return 0
    cycle = 0
    busy = 0
    for r in sorted(releases):
        if cycle <= r:
            cycle, busy = r + 1, 0
        if busy == shifters:
            cycle, busy = cycle + 1, 0
        busy += 1
    return cycle


def build_schedule(coeffs, shifters: int = 1, sparsity_opt: bool = False,
                   repetition_opt: bool = False) -> SchedulePlan:
    """Multiply-cycle plan for one 3x3 template convolution.

    One shifter is paired with a two-input adder that pre-sums operands
    sharing a coefficient: a group of ``g`` operands takes ``g - 1`` adder
    cycles and its sum is registered for one cycle before it can be
    shifted.  Pre-summing is applied to the largest groups first and only
    as far as it shortens the schedule.  With more than one shifter the
    repetition optimization is not used.
    """
    if shifters not in SHIFTER_COUNTS:
        raise ValueError(f"shifter count must be one of {SHIFTER_COUNTS}")
    if isinstance(coeffs, np.ndarray) and coeffs.dtype != object:
        coeffs = coeff_matrix(coeffs)
    flat = [coeffs[r][c] for r in range(3) for c in range(3)]
    nonzero = [i for i, c in enumerate(flat) if not c.is_zero]
    zeros = 9 - len(nonzero)
    zero_work = 0 if sparsity_opt else zeros

    buckets: dict = {}
    for i in nonzero:
        buckets.setdefault(flat[i], []).append(i)
    multi = sorted((ops for ops in buckets.values() if len(ops) > 1), key=lambda ops: (-len(ops), ops[0]))

    best = None
    n_presum_options = range(len(multi) + 1) if (repetition_opt and shifters == 1) else (0,)
    for n_pre in n_presum_options:
        pre = multi[:n_pre]
        releases = [0] * (zero_work + len(nonzero) - sum(len(g) for g in pre))
        t = 0
        for ops in pre:
            t += len(ops) - 1
            releases.append(t + 1)
        cyc = _makespan(releases, shifters)
        if best is None or cyc <= best[0]:
            best = (cyc, n_pre, t)
    cycles, n_pre, adder = best

    presummed = {ops[0] for ops in multi[:n_pre]}
    groups = []
    for coef, ops in buckets.items():
        if ops[0] in presummed:
            groups.append(ScheduleGroup(coef, list(ops), True))
        else:
            groups.extend(ScheduleGroup(coef, [i]) for i in ops)
    groups.sort(key=lambda g: g.operand_indices[0])
    return SchedulePlan(groups, zeros if sparsity_opt else 0, shifters, cycles, adder, zero_work)


def build_stage_schedule(a, b, shifters: int = 1, sparsity_opt: bool = False,
                         repetition_opt: bool = False) -> tuple[SchedulePlan, SchedulePlan]:
    return (build_schedule(a, shifters, sparsity_opt, repetition_opt),
            build_schedule(b, shifters, sparsity_opt, repetition_opt))


def execute_schedule(plan: SchedulePlan, operands_raw, guard: int = GUARD_BITS) -> int:
    """Accumulate ``sum_i c_i * operand_i`` following the plan's grouping.

    Operands are widened by ``guard`` bits; the result is in that widened
    format.
    """
    ops = [int(v) << guard for v in np.asarray(operands_raw, dtype=np.int64).ravel()]
    if len(ops) != 9:
        raise ValueError("expected 9 operands")
    acc = 0
    for g in plan.groups:
        c = g.coefficient
        if g.presummed:
            acc += kernels._shift_py(sum(ops[i] for i in g.operand_indices), c.sign, c.exponent)
        else:
            for i in g.operand_indices:
                acc += kernels._shift_py(ops[i], c.sign, c.exponent)
    return acc


def naive_sum(coeffs, operands_raw, guard: int = GUARD_BITS) -> int:
    """Reference nine-term evaluation for :func:`execute_schedule`."""
    if isinstance(coeffs, np.ndarray) and coeffs.dtype != object:
        coeffs = coeff_matrix(coeffs)
    flat = [coeffs[r][c] for r in range(3) for c in range(3)]
    ops = np.asarray(operands_raw, dtype=np.int64).ravel()
    return sum(kernels._shift_py(int(v) << guard, c.sign, c.exponent) for c, v in zip(flat, ops))


def cycles_per_pixel(plan_a: SchedulePlan, plan_b: SchedulePlan, overhead: int = 2,
                     shared_pool: bool = False) -> int:
    """Stage throughput in cycles per pixel.

    The A and B convolutions run on separate units by default, so the slower
    one dominates.  A fixed pipeline ``overhead`` is added unless the
    convolution finishes in a single cycle, in which case the stage is
    fully pipelined at one pixel per cycle.
    """
    if plan_a.shifter_count != plan_b.shifter_count:
        raise ValueError("plans were built for different shifter counts")
    mult = plan_a.cycles + plan_b.cycles if shared_pool else max(plan_a.cycles, plan_b.cycles)
    if mult <= 1:
        return 1
    return mult + overhead
