import math

import numpy as np
import pytest

from cgpso.local import Bounds, FitnessProblem, MissingGradient
from cgpso.pso import (NoProgress, PsoConfig, SwarmState, inertia,
                       position_update, run_gradient, run_hybrid,
                       run_multistart, run_standard, update_bests,
                       velocity_update)


def sphere_problem(dim=6, half_width=5.0):
    return FitnessProblem(lambda x: float(x @ x),
                          Bounds.cube(-half_width, half_width, dim),
                          gradient=lambda x: 2.0 * x)


def rastrigin_problem(dim=2):
    def f(x):
        return float(10.0 * dim
                     + np.sum(x ** 2 - 10.0 * np.cos(2.0 * np.pi * x)))

    def g(x):
        return 2.0 * x + 20.0 * np.pi * np.sin(2.0 * np.pi * x)

    return FitnessProblem(f, Bounds.cube(-5.12, 5.12, dim), gradient=g)


class TestInertia:
    def test_endpoints(self):
        cfg = PsoConfig(max_iters=100, omega_start=0.4, omega_end=0.9,
                        decay=0.8)
        assert inertia(0, cfg) == pytest.approx(0.4, abs=1e-15)
        want = 0.9 + (0.4 - 0.9) * math.exp(-0.8)
        assert inertia(100, cfg) == pytest.approx(want, rel=1e-15)

    def test_monotone_increase_for_defaults(self):
        """The default schedule moves from exploitation toward exploration."""
        cfg = PsoConfig(max_iters=50)
        vals = [inertia(t, cfg) for t in range(51)]
        assert np.all(np.diff(vals) > 0)
        assert vals[0] < vals[-1] < cfg.omega_end


class TestSwarmOps:
    def test_velocity_hand_example(self):
        """v=0, pbest-x=2, gbest-x=-1, c1=c2=1.5, lambdas=1 gives 1.5."""
        v = velocity_update(np.zeros((1, 1)), np.zeros((1, 1)),
                            np.full((1, 1), 2.0), np.full((1, 1), -1.0),
                            omega=0.5, c1=1.5, c2=1.5,
                            lam1=np.ones((1, 1)), lam2=np.ones((1, 1)))
        np.testing.assert_allclose(v, [[1.5]])

    def test_inertia_term(self):
        v = velocity_update(np.full((1, 1), 2.0), np.zeros((1, 1)),
                            np.zeros((1, 1)), np.zeros((1, 1)),
                            omega=0.7, c1=1.5, c2=1.5,
                            lam1=np.zeros((1, 1)), lam2=np.zeros((1, 1)))
        np.testing.assert_allclose(v, [[1.4]])

    def test_position_clamp_zeroes_velocity(self):
        bounds = Bounds(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        x = np.array([[0.9, 0.5]])
        v = np.array([[0.5, 0.2]])
        x2, v2 = position_update(x, v, bounds)
        np.testing.assert_allclose(x2, [[1.0, 0.7]])
        np.testing.assert_allclose(v2, [[0.0, 0.2]])

    def _state(self):
        return SwarmState(
            positions=np.array([[1.0], [2.0]]),
            velocities=np.zeros((2, 1)),
            pbest_positions=np.array([[10.0], [20.0]]),
            pbest_values=np.array([1.0, 2.0]),
            gbest_position=np.array([0.5]),
            gbest_value=0.5)

    def test_personal_best_replaced_on_tie(self):
        state = self._state()
        update_bests(state, np.array([1.0, 3.0]))
        np.testing.assert_array_equal(state.pbest_positions,
                                      [[1.0], [20.0]])
        np.testing.assert_array_equal(state.pbest_values, [1.0, 2.0])

    def test_global_best_needs_strict_improvement(self):
        state = self._state()
        update_bests(state, np.array([0.5, 3.0]))
        assert state.gbest_value == 0.5
        np.testing.assert_array_equal(state.gbest_position, [0.5])
        update_bests(state, np.array([0.4, 3.0]))
        assert state.gbest_value == 0.4
        np.testing.assert_array_equal(state.gbest_position, [1.0])


class TestRunBasics:
    def test_sphere_reaches_good_minimum(self):
        vals = []
        for seed in range(10):
            cfg = PsoConfig(n_particles=20, max_iters=200, seed=seed)
            vals.append(run_standard(sphere_problem(), cfg).fun)
        assert np.median(vals) < 1e-6

    def test_eval_bookkeeping(self):
        cfg = PsoConfig(n_particles=7, max_iters=30, seed=1)
        res = run_standard(sphere_problem(dim=3), cfg)
        assert res.n_evals == 7 * 31
        assert res.n_grad_evals == 0
        assert res.stopped == "max_iters"
        assert len(res.trace.points) == 31

    def test_restart_iterations_cost_one_swarm_evaluation(self):
        """A restarted iteration evaluates the fresh swarm, so total
        evaluations match a plain run of the same length."""
        cfg = PsoConfig(n_particles=6, max_iters=40, seed=2,
                        stagnation_patience=5)
        flat = FitnessProblem(lambda x: 1.0, Bounds.cube(0.0, 1.0, 2))
        res = run_multistart(flat, cfg)
        assert res.n_evals == 6 * 41

    def test_trace_is_monotone(self):
        for seed in range(5):
            cfg = PsoConfig(n_particles=10, max_iters=80, seed=seed,
                            stagnation_patience=8)
            for runner in (run_standard, run_multistart, run_gradient,
                           run_hybrid):
                res = runner(rastrigin_problem(), cfg)
                assert np.all(np.diff(res.trace.gbest_values()) <= 0.0)

    def test_seeded_runs_replay_exactly(self):
        cfg = PsoConfig(n_particles=12, max_iters=60, seed=9,
                        stagnation_patience=6)
        a = run_hybrid(rastrigin_problem(), cfg)
        b = run_hybrid(rastrigin_problem(), cfg)
        np.testing.assert_array_equal(a.x, b.x)
        assert a.fun == b.fun
        assert a.n_evals == b.n_evals
        assert [p.event for p in a.trace.points] == \
            [p.event for p in b.trace.points]
        np.testing.assert_array_equal(a.trace.gbest_values(),
                                      b.trace.gbest_values())

    def test_target_fitness_stops_early(self):
        cfg = PsoConfig(n_particles=20, max_iters=500, seed=3,
                        target_fitness=1e-3)
        res = run_standard(sphere_problem(), cfg)
        assert res.stopped == "target"
        assert res.fun <= 1e-3
        assert len(res.trace.points) < 501

    def test_all_infinite_objective_raises(self):
        cfg = PsoConfig(n_particles=5, max_iters=10, seed=0)
        bad = FitnessProblem(lambda x: float("nan"),
                             Bounds.cube(0.0, 1.0, 2))
        with pytest.raises(NoProgress):
            run_standard(bad, cfg)

    def test_gradient_variants_need_a_gradient(self):
        cfg = PsoConfig(n_particles=5, max_iters=10, seed=0)
        plain = FitnessProblem(lambda x: float(x @ x),
                               Bounds.cube(-1.0, 1.0, 2))
        with pytest.raises(MissingGradient):
            run_gradient(plain, cfg)
        with pytest.raises(MissingGradient):
            run_hybrid(plain, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PsoConfig(n_particles=0).validate()
        with pytest.raises(ValueError):
            PsoConfig(switch_fraction=1.5).validate()


class TestStagnationHandling:
    def test_restart_cadence_on_flat_objective(self):
        """A flat objective stalls immediately, so restarts fire every
        patience+1 iterations."""
        patience = 5
        cfg = PsoConfig(n_particles=4, max_iters=23, seed=0,
                        stagnation_patience=patience)
        flat = FitnessProblem(lambda x: 1.0, Bounds.cube(0.0, 1.0, 2))
        res = run_multistart(flat, cfg)
        ts = [p.t for p in res.trace.points if p.event == "restart"]
        assert ts[0] == patience + 1
        assert all(b - a == patience + 1 for a, b in zip(ts, ts[1:]))
        assert len(ts) == 3

    def test_standard_never_restarts(self):
        cfg = PsoConfig(n_particles=4, max_iters=40, seed=0,
                        stagnation_patience=3)
        flat = FitnessProblem(lambda x: 1.0, Bounds.cube(0.0, 1.0, 2))
        res = run_standard(flat, cfg)
        assert all(p.event == "none" for p in res.trace.points)

    def test_refine_counts_gradient_evals(self):
        cfg = PsoConfig(n_particles=8, max_iters=60, seed=4,
                        stagnation_patience=5)
        res = run_gradient(rastrigin_problem(), cfg)
        events = [p.event for p in res.trace.points]
        assert "refine" in events
        assert res.n_grad_evals > 0

    def test_refine_with_broken_gradient_never_hurts(self):
        """Refinement is accept-only: a bogus ascent gradient leaves the
        global best untouched."""
        problem = FitnessProblem(lambda x: float(x @ x),
                                 Bounds.cube(-2.0, 2.0, 3),
                                 gradient=lambda x: -2.0 * x)
        cfg = PsoConfig(n_particles=6, max_iters=50, seed=5,
                        stagnation_patience=4)
        res = run_gradient(problem, cfg)
        vals = res.trace.gbest_values()
        assert np.all(np.diff(vals) <= 0.0)
        assert np.isfinite(res.fun)


class TestVariantEquivalences:
    def _cfg(self, seed, **kw):
        base = dict(n_particles=10, max_iters=40, seed=seed,
                    stagnation_patience=5)
        base.update(kw)
        return PsoConfig(**base)

    def _same(self, a, b):
        np.testing.assert_array_equal(a.trace.gbest_values(),
                                      b.trace.gbest_values())
        np.testing.assert_array_equal(a.x, b.x)
        assert a.fun == b.fun and a.n_evals == b.n_evals

    def test_hybrid_with_full_switch_is_multistart(self):
        for seed in range(3):
            problem = rastrigin_problem()
            a = run_hybrid(problem, self._cfg(seed, switch_fraction=1.0))
            b = run_multistart(problem, self._cfg(seed))
            self._same(a, b)
            assert all(p.event != "refine" for p in a.trace.points)

    def test_hybrid_with_zero_switch_is_gradient(self):
        for seed in range(3):
            problem = rastrigin_problem()
            a = run_hybrid(problem, self._cfg(seed, switch_fraction=0.0))
            b = run_gradient(problem, self._cfg(seed))
            self._same(a, b)
            assert all(p.event != "restart" for p in a.trace.points)

    def test_endless_patience_is_standard(self):
        for seed in range(3):
            problem = rastrigin_problem()
            lazy = self._cfg(seed, stagnation_patience=10_000)
            a = run_multistart(problem, lazy)
            b = run_gradient(problem, lazy)
            c = run_standard(problem, self._cfg(seed))
            self._same(a, c)
            self._same(b, c)


class TestVariantQuality:
    def test_restarts_help_on_multimodal_objective(self):
        """Across seeds, restarting variants are no worse than plain PSO on
        a rugged landscape."""
        std, multi, hyb = [], [], []
        for seed in range(20):
            cfg = dict(n_particles=10, max_iters=150, seed=seed,
                       stagnation_patience=10)
            problem = rastrigin_problem()
            std.append(run_standard(problem, PsoConfig(**cfg)).fun)
            multi.append(run_multistart(problem, PsoConfig(**cfg)).fun)
            hyb.append(run_hybrid(problem, PsoConfig(**cfg)).fun)
        assert np.median(multi) <= np.median(std)
        assert np.median(hyb) <= np.median(std)
