"""FPGA stage-count and speedup projection.

Stages are packed greedily: embedded multipliers first, then shifter
modules built from logic elements, until the LE or register utilization
cap would be exceeded.  Per-stage costs are calibration constants read
from ``data/hardware.json``; each carries a note on the build it was
derived from.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

DEFAULT_CAP = 0.80


@lru_cache(maxsize=None)
def load_hardware_data() -> dict:
    with resources.files("cennq").joinpath("data/hardware.json").open() as fh:
        return json.load(fh)


@dataclass
class ResourceCosts:
    s1: dict
    s2: dict
    multiplier: tuple = (676, 486)
    adder_le: int = 10

    def __post_init__(self):
        for table in (self.s1, self.s2):
            for le, reg in table.values():
                if le <= 0 or reg <= 0:
                    raise ValueError("resource costs must be positive")

    @classmethod
    def default(cls) -> "ResourceCosts":
        d = load_hardware_data()["resource_costs"]
        conv = lambda t: {int(k): tuple(v) for k, v in t.items()}  # noqa: E731
        return cls(conv(d["s1"]), conv(d["s2"]), tuple(d["multiplier"]), d["adder_le"])

    def shifter(self, m: int) -> tuple:
        try:
            return self.s1[m]
        except KeyError:
            raise ValueError(f"no S1 cost for m={m}; known: {sorted(self.s1)}") from None

    def dt_shifter(self, s_range: int = 7) -> tuple:
        return self.s2[s_range]


@dataclass
class FpgaBudget:
    name: str
    total_le: int
    total_registers: int
    embedded_multipliers: int
    le_utilization_cap: float = DEFAULT_CAP

    def __post_init__(self):
        if self.total_le < 0 or self.total_registers < 0 or self.embedded_multipliers < 0:
            raise ValueError("capacities must be non-negative")
        if not 0 < self.le_utilization_cap <= 1:
            raise ValueError("utilization cap must lie in (0, 1]")

    @classmethod
    def device(cls, name: str, cap: float = DEFAULT_CAP) -> "FpgaBudget":
        devices = load_hardware_data()["devices"]
        if name not in devices:
            raise ValueError(f"unknown device {name!r}; known: {sorted(devices)}")
        d = devices[name]
        return cls(name, d["total_le"], d["total_registers"], d["embedded_multipliers"], cap)


@dataclass(frozen=True)
class StageConfig:
    """Per-stage cost model for one convolution width (1, 3 or 9 units)."""

    multiplications: int
    mult_stage_le: int
    mult_stage_reg: int
    shift_base_le: int
    shift_base_reg: int
    shifter_m: int = 5
    repetition_le: int = 0
    repetition_reg: int = 0

    @classmethod
    def calibrated(cls, width: int, shifter_m: int = 5) -> "StageConfig":
        cfgs = load_hardware_data()["stage_configs"]
        if str(width) not in cfgs:
            raise ValueError(f"no calibration for {width}-wide convolution")
        c = cfgs[str(width)]
        rep = c.get("repetition_extra", {"le": 0, "reg": 0})
        return cls(c["multiplications_per_stage"], c["mult_stage"]["le"], c["mult_stage"]["reg"],
                   c["shift_stage_base"]["le"], c["shift_stage_base"]["reg"], shifter_m,
                   rep["le"], rep["reg"])

    def stage_cost(self, n_mult: int, costs: ResourceCosts, repetition: bool = False) -> tuple:
        """(LE, registers) of a stage that uses ``n_mult`` embedded multipliers.

        ``repetition`` adds the pre-sum adders and operand routing needed by
        the repetition-aware schedule.
        """
        n_shift = self.multiplications - n_mult
        extra_le, extra_reg = (self.repetition_le, self.repetition_reg) if repetition else (0, 0)
        if n_shift == 0:
            return self.mult_stage_le + extra_le, self.mult_stage_reg + extra_reg
        s1_le, s1_reg = costs.shifter(self.shifter_m)
        s2_le, s2_reg = costs.dt_shifter()
        return (self.shift_base_le + n_shift * s1_le + s2_le + extra_le,
                self.shift_base_reg + n_shift * s1_reg + s2_reg + extra_reg)


@dataclass
class StagePlan:
    stage_count: int
    mults_used: int = 0
    shifters_used: int = 0
    le_used: int = 0
    reg_used: int = 0
    clock_mhz: float = 1.0
    cycles_per_pixel: int = 1
    flags: list = field(default_factory=list)

    def utilization(self, budget: FpgaBudget) -> dict:
        frac = lambda used, total: used / total if total else 0.0  # noqa: E731
        return {"le": frac(self.le_used, budget.total_le),
                "registers": frac(self.reg_used, budget.total_registers),
                "multipliers": frac(self.mults_used, budget.embedded_multipliers)}


def max_stages(budget: FpgaBudget, costs: ResourceCosts, config: StageConfig,
               allow_shifters: bool = True, clock_mhz: float = 1.0,
               cycles_per_pixel: int = 1, repetition: bool = False) -> StagePlan:
    """Place as many stages as fit.

    Each stage needs ``config.multiplications`` products.  They are taken
    from the remaining embedded multipliers first; the shortfall is built
    from S1 shifters (plus one S2 shifter for the step size) when
    ``allow_shifters`` is set.  Packing stops at the first stage that would
    push LE or register use past the utilization cap.
    """
    le_cap = budget.le_utilization_cap * budget.total_le
    reg_cap = budget.le_utilization_cap * budget.total_registers
    plan = StagePlan(0, clock_mhz=clock_mhz, cycles_per_pixel=cycles_per_pixel)
    mults_left = budget.embedded_multipliers
    while True:
        n_mult = min(mults_left, config.multiplications)
        n_shift = config.multiplications - n_mult
        if n_shift and not allow_shifters:
            break
        le, reg = config.stage_cost(n_mult, costs, repetition)
        if plan.le_used + le > le_cap or plan.reg_used + reg > reg_cap:
            break
        plan.stage_count += 1
        plan.mults_used += n_mult
        plan.shifters_used += n_shift
        plan.le_used += le
        plan.reg_used += reg
        mults_left -= n_mult
    if plan.stage_count == 0:
        plan.flags.append("stage cost exceeds the device budget")
    return plan


def equivalent_capacity(plan: StagePlan) -> float:
    """Stages x clock / cycles-per-pixel (pixels per microsecond for MHz clocks)."""
    if plan.cycles_per_pixel <= 0:
        raise ValueError("cycles_per_pixel must be positive")
    return plan.stage_count * plan.clock_mhz / plan.cycles_per_pixel


def speedup(ours: StagePlan, baseline: StagePlan, ignore_clock: bool = False) -> float:
    """Ratio of equivalent capacities; ``ignore_clock`` treats both clocks as equal."""
    if ignore_clock:
        if baseline.stage_count == 0:
            raise ValueError("baseline has zero capacity")
        if ours.cycles_per_pixel <= 0 or baseline.cycles_per_pixel <= 0:
            raise ValueError("cycles_per_pixel must be positive")
        return (ours.stage_count / ours.cycles_per_pixel) / (baseline.stage_count / baseline.cycles_per_pixel)
    base = equivalent_capacity(baseline)
    if base == 0:
        raise ValueError("baseline has zero capacity")
    return equivalent_capacity(ours) / base


class BaselineUnavailable(LookupError):
    """The reference baseline stage counts needed for a ratio are missing."""


def high_end_speedup(device: str, baseline_stages: int | None = None,
                     ours_stages: int | None = None) -> float:
    """Ratio for a high-end device projection (nine-wide convolution).

    Only the shifter-based stage counts of these projections are reported;
    the baseline counts are not, so the reported speedups cannot be
    re-derived.  Pass ``baseline_stages`` to compute the ratio for a baseline
    of your own; without it :class:`BaselineUnavailable` is raised.
    Cycles per pixel and clocks are equal on both sides.
    """
    reported = load_hardware_data()["reference_results"]["high_end"]
    if ours_stages is None:
        if device not in reported:
            raise ValueError(f"no reference projection for {device!r}")
        ours_stages = reported[device]["stages"]
    if baseline_stages is None:
        raise BaselineUnavailable(
            f"baseline stage count for {device} is not available; supply baseline_stages")
    return speedup(StagePlan(ours_stages), StagePlan(baseline_stages), ignore_clock=True)


def reference_configuration_rows(m: int = 5, overhead: int = 2) -> list:
    """Projected rows in the layout of the XC4LX25 comparison tables.

    Stage counts come from :func:`max_stages`; cycles per pixel from the
    scheduler applied to the reference templates; clocks are the measured
    reference ones (clock is never predicted).
    """
    import numpy as np

    from .hwsim import build_stage_schedule, cycles_per_pixel

    data = load_hardware_data()
    pub = data["reference_results"]
    ref = data["reference_templates"]
    a = np.array(ref["a"], dtype=float)
    b = np.array(ref["b"], dtype=float)
    costs = ResourceCosts.default()
    budget = FpgaBudget.device("XC4LX25")

    def cpp(width, sparsity=False, repetition=False):
        pa, pb = build_stage_schedule(a, b, width, sparsity, repetition)
        return cycles_per_pixel(pa, pb, overhead)

    specs = [
        ("baseline (1 mult)", 1, False, cpp(1), pub["single_unit"]["baseline"]),
        ("ours (1 shift)", 1, True, cpp(1), pub["single_unit"]["ours"]),
        ("ours (1 shift + sparsity)", 1, True, cpp(1, True), pub["single_unit"]["ours_sparsity"]),
        ("ours (1 shift + repetition)", 1, True, cpp(1, True, True), pub["single_unit"]["ours_repetition"]),
        ("baseline (3 mult)", 3, False, cpp(3), pub["wide_units"]["baseline3"]),
        ("ours (3 shift)", 3, True, cpp(3), pub["wide_units"]["ours3"]),
        ("baseline (9 mult)", 9, False, cpp(9), pub["wide_units"]["baseline9"]),
        ("ours (9 shift)", 9, True, cpp(9), pub["wide_units"]["ours9"]),
    ]
    rows = []
    baselines = {}
    for label, width, shifters, cycles, ref_row in specs:
        cfg = StageConfig.calibrated(width, m)
        plan = max_stages(budget, costs, cfg, allow_shifters=shifters,
                          clock_mhz=ref_row["clock_mhz"], cycles_per_pixel=cycles,
                          repetition="repetition" in label)
        if not shifters:
            baselines[width] = plan
        base = baselines[width]
        util = plan.utilization(budget)
        rows.append({
            "configuration": label,
            "stages": plan.stage_count,
            "le": plan.le_used,
            "le_pct": round(100 * util["le"], 1),
            "registers": plan.reg_used,
            "reg_pct": round(100 * util["registers"], 1),
            "multipliers": plan.mults_used,
            "clock_mhz": plan.clock_mhz,
            "cycles_per_pixel": plan.cycles_per_pixel,
            "speedup": round(speedup(plan, base, ignore_clock=True), 3),
            "speedup_with_clock": round(speedup(plan, base), 3),
            "reference_stages": ref_row["stages"],
            "reference_speedup": ref_row.get("speedup", 1.0),
        })
    return rows


def device_projection_rows(m: int = 5, baselines: dict | None = None) -> list:
    """Nine-wide projections for the high-end devices in the catalog."""
    data = load_hardware_data()
    costs = ResourceCosts.default()
    cfg = StageConfig.calibrated(9, m)
    rows = []
    for name, pub in data["reference_results"]["high_end"].items():
        budget = FpgaBudget.device(name)
        ours = max_stages(budget, costs, cfg, allow_shifters=True)
        base = max_stages(budget, costs, cfg, allow_shifters=False)
        util = ours.utilization(budget)
        row = {
            "device": name,
            "stages": ours.stage_count,
            "le_pct": round(100 * util["le"], 1),
            "reg_pct": round(100 * util["registers"], 1),
            "multipliers": ours.mults_used,
            "model_baseline_stages": base.stage_count,
            "model_speedup": round(speedup(ours, base, ignore_clock=True), 3) if base.stage_count else None,
            "reference_stages": pub["stages"],
            "reference_speedup": pub["speedup"],
        }
        if baselines and name in baselines:
            row["user_baseline_speedup"] = round(high_end_speedup(name, baselines[name]), 3)
        rows.append(row)
    return rows
