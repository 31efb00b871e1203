import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cennq.hwproject import (BaselineUnavailable, FpgaBudget, ResourceCosts, StageConfig, StagePlan,
                             device_projection_rows, equivalent_capacity, high_end_speedup,
                             load_hardware_data, max_stages, reference_configuration_rows, speedup)

INVARIANT = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
COSTS = ResourceCosts.default()


def xc4():
    return FpgaBudget.device("XC4LX25")


class TestCosts:
    def test_default_costs(self):
        assert COSTS.s1 == {0: (39, 39), 1: (44, 42), 2: (50, 45), 3: (80, 47), 4: (109, 50), 5: (105, 52)}
        assert COSTS.s2 == {7: (80, 75)}
        assert COSTS.multiplier == (676, 486) and COSTS.adder_le == 10

    def test_shifter_saves_les(self):
        for m in range(6):
            assert COSTS.multiplier[0] - COSTS.shifter(m)[0] >= 567

    def test_unknown_shifter(self):
        with pytest.raises(ValueError):
            COSTS.shifter(9)

    def test_positive(self):
        with pytest.raises(ValueError):
            ResourceCosts({0: (0, 1)}, {7: (1, 1)})


class TestBudget:
    def test_validation(self):
        with pytest.raises(ValueError):
            FpgaBudget("x", -1, 1, 1)
        with pytest.raises(ValueError):
            FpgaBudget("x", 1, 1, 1, le_utilization_cap=0.0)
        with pytest.raises(ValueError):
            FpgaBudget.device("nope")


class TestMaxStages:
    def test_baseline_one_multiplier(self):
        plan = max_stages(xc4(), COSTS, StageConfig.calibrated(1), allow_shifters=False)
        assert plan.stage_count == 24 and plan.mults_used == 48
        assert plan.utilization(xc4())["multipliers"] == 1.0

    def test_shifter_augmented(self):
        plan = max_stages(xc4(), COSTS, StageConfig.calibrated(1))
        assert plan.stage_count == 28
        assert round(100 * plan.utilization(xc4())["le"]) == 77

    def test_repetition_column(self):
        plan = max_stages(xc4(), COSTS, StageConfig.calibrated(1), repetition=True)
        assert plan.stage_count == 24
        assert round(100 * plan.utilization(xc4())["le"]) == 76

    @pytest.mark.parametrize("width, base, ours", [(3, 6, 16), (9, 2, 7)])
    def test_wider_configs(self, width, base, ours):
        cfg = StageConfig.calibrated(width)
        assert max_stages(xc4(), COSTS, cfg, allow_shifters=False).stage_count == base
        assert max_stages(xc4(), COSTS, cfg).stage_count == ours

    def test_zero_budget_flagged(self):
        plan = max_stages(FpgaBudget("empty", 0, 0, 0), COSTS, StageConfig.calibrated(1))
        assert plan.stage_count == 0 and plan.flags

    def test_unknown_width(self):
        with pytest.raises(ValueError):
            StageConfig.calibrated(4)


class TestSpeedup:
    def test_capacity(self):
        assert equivalent_capacity(StagePlan(24, clock_mhz=353, cycles_per_pixel=11)) == pytest.approx(770.18, abs=0.01)
        assert equivalent_capacity(StagePlan(7, clock_mhz=343, cycles_per_pixel=1)) == 2401

    def test_capacity_linear(self):
        p = StagePlan(5, clock_mhz=300, cycles_per_pixel=3)
        assert equivalent_capacity(StagePlan(10, clock_mhz=300, cycles_per_pixel=3)) == 2 * equivalent_capacity(p)

    def test_zero_cycles(self):
        with pytest.raises(ValueError):
            equivalent_capacity(StagePlan(1, cycles_per_pixel=0))

    @pytest.mark.parametrize("ours, base, ratio", [((28, 11), (24, 11), 1.1667), ((24, 8), (24, 11), 1.375),
                                                   ((7, 1), (2, 1), 3.5), ((16, 5), (6, 5), 2.6667)])
    def test_ratios(self, ours, base, ratio):
        r = speedup(StagePlan(ours[0], clock_mhz=300, cycles_per_pixel=ours[1]),
                    StagePlan(base[0], clock_mhz=350, cycles_per_pixel=base[1]), ignore_clock=True)
        assert r == pytest.approx(ratio, abs=1e-4)

    def test_clock_counts_when_not_ignored(self):
        r = speedup(StagePlan(28, clock_mhz=331, cycles_per_pixel=11), StagePlan(24, clock_mhz=353, cycles_per_pixel=11))
        assert r == pytest.approx(28 * 331 / (24 * 353))

    def test_zero_baseline(self):
        with pytest.raises(ValueError):
            speedup(StagePlan(1), StagePlan(0))
        with pytest.raises(ValueError):
            speedup(StagePlan(1), StagePlan(0), ignore_clock=True)


class TestProjections:
    def test_table_rows(self):
        rows = {r["configuration"]: r for r in reference_configuration_rows()}
        for r in rows.values():
            assert r["stages"] == r["reference_stages"]
            assert abs(r["speedup"] - r["reference_speedup"]) <= 0.15

    def test_high_end_baseline_unavailable(self):
        """The high-end projections publish only our stage counts, not the baselines'."""
        pub = load_hardware_data()["reference_results"]["high_end"]
        for device in pub:
            assert "baseline_stages" not in pub[device]
            with pytest.raises(BaselineUnavailable):
                high_end_speedup(device)

    def test_high_end_with_user_baseline(self):
        assert high_end_speedup("VC7VX980T", baseline_stages=176) == pytest.approx(2.0)
        rows = device_projection_rows(baselines={"StratixVE": 30})
        row = next(r for r in rows if r["device"] == "StratixVE")
        assert row["user_baseline_speedup"] == pytest.approx(233 / 30, abs=1e-3)


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------

budgets = st.builds(FpgaBudget, st.just("random"), st.integers(0, 200_000), st.integers(0, 200_000),
                    st.integers(0, 500), st.floats(0.05, 1.0))
widths = st.sampled_from([1, 3, 9])


@INVARIANT
@given(budgets, widths, st.sampled_from(["le", "reg", "mult", "cap"]), st.integers(1, 50_000),
       st.booleans())
def test_enlarging_budget_never_loses_stages(budget, width, dim, extra, repetition):
    cfg = StageConfig.calibrated(width)
    bigger = FpgaBudget(budget.name,
                        budget.total_le + (extra if dim == "le" else 0),
                        budget.total_registers + (extra if dim == "reg" else 0),
                        budget.embedded_multipliers + (extra % 200 if dim == "mult" else 0),
                        min(1.0, budget.le_utilization_cap + (extra / 1e5 if dim == "cap" else 0)))
    for shifters in (False, True):
        small = max_stages(budget, COSTS, cfg, shifters, repetition=repetition).stage_count
        large = max_stages(bigger, COSTS, cfg, shifters, repetition=repetition).stage_count
        assert large >= small


@INVARIANT
@given(budgets, widths, st.booleans())
def test_cap_respected(budget, width, shifters):
    plan = max_stages(budget, COSTS, StageConfig.calibrated(width), shifters)
    assert plan.le_used <= budget.le_utilization_cap * budget.total_le
    assert plan.reg_used <= budget.le_utilization_cap * budget.total_registers
    assert plan.mults_used <= budget.embedded_multipliers


@INVARIANT
@given(st.integers(1, 1000), st.floats(1, 1000), st.integers(1, 20), st.booleans())
def test_self_speedup_is_one(stages, clock, cycles, ignore):
    p = StagePlan(stages, clock_mhz=clock, cycles_per_pixel=cycles)
    assert speedup(p, p, ignore_clock=ignore) == 1.0


@INVARIANT
@given(st.integers(1, 1000), st.integers(1, 1000), st.integers(1, 20), st.integers(1, 20))
def test_speedup_reciprocal(s1, s2, c1, c2):
    a, b = StagePlan(s1, cycles_per_pixel=c1), StagePlan(s2, cycles_per_pixel=c2)
    assert speedup(a, b, True) * speedup(b, a, True) == pytest.approx(1.0)
