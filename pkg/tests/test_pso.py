import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cennq.core import TemplateSet, get_pattern
from cennq.pso import (Particle, PsoConfig, TrainingTask, accuracy_percent, objective,
                       retrain_bias, train, update_particle)

INVARIANT = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
ZERO3 = np.zeros((3, 3))


class HalfRng:
    def random(self, size):
        return np.full(size, 0.5)


def tiny_task(**kw):
    u = np.zeros((4, 4))
    return TrainingTask([(u, np.full((4, 4), 0.5))], get_pattern("obstacle"), 1, dt=1.0,
                        init="zero", **kw)


class TestConfig:
    def test_defaults(self):
        c = PsoConfig()
        assert (c.swarm_size, c.inertia, c.accel_personal, c.accel_global, c.iterations) == \
            (10, 0.8, 1.4, 1.2, 500)

    @pytest.mark.parametrize("kw", [{"swarm_size": 0}, {"iterations": 0},
                                    {"bound_low": 1.0, "bound_high": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PsoConfig(**kw)

    def test_for_range(self):
        lo, hi = PsoConfig.for_range(2).bounds(3)
        np.testing.assert_array_equal(lo, [-4, -4, -4])
        np.testing.assert_array_equal(hi, [4, 4, 4])


class TestObjective:
    def test_identical(self):
        g = np.random.default_rng(0).uniform(-1, 1, (5, 5))
        assert objective(g, g) == 0.0

    def test_single_cell(self):
        assert objective(np.array([[1.0, 0], [0, 0]]), np.array([[-1.0, 0], [0, 0]])) == 0.5

    def test_opposite(self):
        assert objective(np.ones((4, 4)), -np.ones((4, 4))) == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            objective(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_accuracy(self):
        assert accuracy_percent(0.0) == 100.0
        assert accuracy_percent(2.0) == 0.0
        assert accuracy_percent(0.2, n_pairs=2) == pytest.approx(95.0)


class TestUpdate:
    def test_pure_momentum(self):
        cfg = PsoConfig(inertia=1.0, accel_personal=0.0, accel_global=0.0)
        p = Particle(np.array([0.5, -1.0]), np.array([0.25, 0.5]), np.zeros(2), 1.0)
        q = update_particle(p, np.zeros(2), cfg, HalfRng())
        np.testing.assert_array_equal(q.position, [0.75, -0.5])

    def test_attraction_vanishes(self):
        cfg = PsoConfig()
        pos = np.array([1.0, 2.0])
        p = Particle(pos, np.array([1.0, -1.0]), pos.copy(), 0.0)
        q = update_particle(p, pos.copy(), cfg, np.random.default_rng(0))
        np.testing.assert_allclose(q.velocity, [0.8, -0.8])

    def test_hand_computed(self):
        cfg = PsoConfig(bound_low=-10, bound_high=10)
        p = Particle(np.array([0.0]), np.array([1.0]), np.array([2.0]), 0.0)
        q = update_particle(p, np.array([4.0]), cfg, HalfRng())
        assert q.velocity[0] == pytest.approx(4.6)
        assert q.position[0] == pytest.approx(4.6)

    def test_hand_computed_clamped(self):
        cfg = PsoConfig(bound_low=-4, bound_high=4)
        p = Particle(np.array([0.0]), np.array([1.0]), np.array([2.0]), 0.0)
        q = update_particle(p, np.array([4.0]), cfg, HalfRng())
        assert q.position[0] == 4.0
        assert q.velocity[0] == pytest.approx(4.6)

    def test_dimension_mismatch(self):
        p = Particle(np.zeros(2), np.zeros(2), np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            update_particle(p, np.zeros(3), PsoConfig(), HalfRng())


class TestTask:
    def test_dims(self):
        t = tiny_task(frozen={0: 1.0, 4: 0.0})
        assert t.dim == 5 and t.bias_index == 4
        assert t.search_indices().tolist() == [1, 2, 3]

    def test_frozen_out_of_range(self):
        with pytest.raises(ValueError):
            tiny_task(frozen={5: 0.0})

    def test_mismatched_pairs(self):
        with pytest.raises(ValueError):
            TrainingTask([(np.zeros((3, 3)), np.zeros((3, 4)))], get_pattern("obstacle"))
        with pytest.raises(ValueError):
            TrainingTask([(np.zeros((3, 3)),) * 2, (np.zeros((4, 4)),) * 2], get_pattern("obstacle"))

    def test_empty(self):
        with pytest.raises(ValueError):
            TrainingTask([], get_pattern("obstacle"))


class TestTrain:
    def test_all_frozen(self):
        task = tiny_task(frozen={0: 0.0, 1: 0.0, 2: 0.0, 3: 0.0, 4: 0.25})
        res = train(task, PsoConfig(iterations=5))
        assert res.evaluations == 1
        assert res.objective == pytest.approx(0.25)
        assert res.history == [res.objective]

    def test_planted_quadratic(self):
        task = tiny_task(frozen={0: 0.0, 1: 0.0, 2: 0.0, 3: 0.0})
        res = train(task, PsoConfig(seed=3), objective_fn=lambda th: (th[4] - 1.3) ** 2)
        assert abs(res.params[4] - 1.3) <= 1e-3

    def test_planted_quadratic_multi_dim(self):
        target = np.array([0.5, -1.5, 2.0, 0.25, -3.0])
        res = train(tiny_task(), PsoConfig(seed=1), objective_fn=lambda th: float(np.sum((th - target) ** 2)))
        assert np.max(np.abs(res.params - target)) <= 1e-3

    def test_same_seed_same_history(self):
        task = tiny_task()
        cfg = PsoConfig(iterations=20, seed=9)
        r1, r2 = train(task, cfg), train(task, cfg)
        assert r1.history == r2.history
        np.testing.assert_array_equal(r1.params, r2.params)

    def test_non_finite_objective_reinitialises(self, caplog):
        calls = []

        def fn(th):
            calls.append(th.copy())
            return np.nan if len(calls) == 1 else float(np.sum(th ** 2))

        res = train(tiny_task(), PsoConfig(iterations=3, swarm_size=2), objective_fn=fn)
        assert np.isfinite(res.objective)
        assert "non-finite" in caplog.text

    def test_init_seeds_incumbent(self):
        target = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
        res = train(tiny_task(), PsoConfig(iterations=1, swarm_size=3), init=target,
                    objective_fn=lambda th: float(np.sum((th - target) ** 2)))
        assert res.objective == 0.0


class TestRetrainBias:
    def test_planted_bias(self):
        template = TemplateSet.from_params(get_pattern("obstacle"), [0, 0, 0, 0], bias=-1.0, dt=1.0)
        res = retrain_bias(tiny_task(), PsoConfig(seed=5), template)
        assert res.bias == pytest.approx(0.5, abs=1e-2)
        np.testing.assert_array_equal(res.params[:4], 0.0)

    def test_bias_independent_objective(self):
        # B drives every cell far into saturation, so no bias in [-4, 4] matters
        u = np.ones((4, 4))
        task = TrainingTask([(u, u)], get_pattern("obstacle"), 1, dt=1.0, init="zero")
        template = TemplateSet.from_params(get_pattern("obstacle"), [0, 0, 4, 4], bias=0.0, dt=1.0)
        res = retrain_bias(task, PsoConfig(iterations=30), template)
        assert -4.0 <= res.bias <= 4.0
        assert res.objective == 0.0
        assert all(h == 0.0 for h in res.history)

    def test_never_worse_than_incumbent(self, rng):
        u = rng.choice([-1.0, 1.0], (8, 8))
        task = TrainingTask([(u, -u)], get_pattern("obstacle"), 5, dt=0.5)
        template = TemplateSet.from_params(get_pattern("obstacle"), [0.5, 2, -1, 0.25], bias=0.3, dt=0.5)
        before = task.evaluate(np.append(template.params(), template.bias))
        res = retrain_bias(task, PsoConfig(iterations=20), template)
        assert res.objective <= before


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------

finite = st.floats(-50, 50, allow_nan=False)


@INVARIANT
@given(st.integers(1, 6).flatmap(lambda d: st.tuples(
    st.lists(finite, min_size=d, max_size=d), st.lists(finite, min_size=d, max_size=d),
    st.lists(finite, min_size=d, max_size=d), st.lists(finite, min_size=d, max_size=d))),
    st.floats(0.1, 20), st.integers(0, 2 ** 32 - 1))
def test_position_stays_in_bounds(vectors, half_width, seed):
    pos, vel, pb, gb = (np.array(v) for v in vectors)
    cfg = PsoConfig(bound_low=-half_width, bound_high=half_width)
    p = Particle(np.clip(pos, -half_width, half_width), vel, pb, 0.0)
    q = update_particle(p, gb, cfg, np.random.default_rng(seed))
    assert np.all(q.position >= -half_width) and np.all(q.position <= half_width)


@INVARIANT
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4), st.integers(1, 15),
       st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_history_monotone_and_personal_best(seed, swarm, iters, centre):
    c = np.array(centre)
    seen = []

    def fn(th):
        v = float(np.sum(np.abs(th - c)) + np.sin(7 * th).sum())
        seen.append(v)
        return v

    res = train(tiny_task(), PsoConfig(swarm_size=swarm, iterations=iters, seed=seed), objective_fn=fn)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert res.objective == min(seen)
    assert res.evaluations == swarm * iters


@INVARIANT
@given(st.integers(0, 2 ** 32 - 1),
       st.dictionaries(st.integers(0, 4), st.floats(-4, 4), max_size=4))
def test_frozen_values_reach_every_evaluation(seed, frozen):
    task = tiny_task(frozen=frozen)

    def fn(th):
        for i, v in frozen.items():
            assert th[i] == v
        return float(np.sum(th ** 2))

    res = train(task, PsoConfig(swarm_size=3, iterations=4, seed=seed), objective_fn=fn)
    for i, v in frozen.items():
        assert res.params[i] == v


@INVARIANT
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_seed_determinism(seed, iters):
    fn = lambda th: float(np.sum(np.cos(3 * th) + th ** 2))  # noqa: E731
    cfg = PsoConfig(swarm_size=4, iterations=iters, seed=seed)
    r1 = train(tiny_task(), cfg, objective_fn=fn)
    r2 = train(tiny_task(), cfg, objective_fn=fn)
    assert r1.history == r2.history
    assert np.array_equal(r1.params, r2.params)


@INVARIANT
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_objective_symmetric_and_non_negative(h, w, seed):
    r = np.random.default_rng(seed)
    a = r.uniform(-1, 1, (h, w))
    b = r.uniform(-1, 1, (h, w)) if seed % 3 else a.copy()
    assert objective(a, b) == objective(b, a)
    assert objective(a, b) >= 0
    assert (objective(a, b) == 0) == np.array_equal(a, b)
