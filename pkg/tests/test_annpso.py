import numpy as np
import pytest

from wdncal.annpso.method import (AnnPsoConfig, annpso_run, gen_training_set, perturb_demands,
                                  pso_calibrate, scenario_objective)
from wdncal.annpso.pso import AFTER, BEFORE, PsoConfig
from wdncal.annpso.surrogate import SurrogateHyperparams
from wdncal.dataprep import Scenario
from wdncal.errors import RetryBudgetExhausted
from wdncal.hydraulics import SolverConfig, solve_steady
from wdncal.network import ROUGHNESS_BOUNDS
from wdncal.synthetic import tree_network

from conftest import chain, daily, hydrant

FAST = AnnPsoConfig(training_size=60, surrogate=SurrogateHyperparams(epochs=80),
                    pso=PsoConfig(particles=16, max_iterations=30))


class TestTrainingSet:
    def test_demand_total_preserved(self, dma50):
        sc = hydrant(dma50, dma50.sensor_nodes[2], 9.9)
        samples = gen_training_set(dma50, sc, ROUGHNESS_BOUNDS, 100, seed=1)
        assert len(samples) == 100
        for s in samples:
            assert abs(s.demands.sum() - sc.total_demand) <= 1e-9
            assert np.all((s.roughness >= 0.01) & (s.roughness <= 10))

    def test_trial_discharge_stays_at_its_node(self, dma50, rng):
        node = dma50.sensor_nodes[0]
        sc = hydrant(dma50, node, 10.0)
        d = perturb_demands(dma50, sc, rng)
        assert d[dma50.demand_nodes.index(node)] >= 10.0

    def test_zero_demand_hydrostatic(self, dma50):
        sc = Scenario("z", 305.6, np.zeros(dma50.q))
        (s,) = gen_training_set(dma50, sc, size=1, seed=4)
        assert np.allclose(s.target, 305.6 - dma50.elevations[: dma50.n - 1], atol=1e-9)

    def test_deterministic(self, dma50):
        a = gen_training_set(dma50, daily(dma50), size=5, seed=9)
        b = gen_training_set(dma50, daily(dma50), size=5, seed=9)
        assert all(np.array_equal(x.inputs, y.inputs) and np.array_equal(x.roughness, y.roughness)
                   for x, y in zip(a, b))

    def test_retry_budget(self, dma50):
        with pytest.raises(RetryBudgetExhausted):
            gen_training_set(dma50, daily(dma50, 20.0), size=3, solver=SolverConfig(max_iterations=1))

    def test_range_checked(self, dma50):
        with pytest.raises(ValueError):
            gen_training_set(dma50, daily(dma50), r_range=(0.0, 20.0), size=1)


class TestPsoCalibrate:
    def test_two_pipe_recovery(self):
        g = chain(2, sensors=("J1", "J2"))
        r_star = np.array([2.5, 0.7])
        sc = [daily(g, 30.0)]
        targets = [solve_steady(g, sc[0], r_star).pressure_head[:2]]
        res = pso_calibrate(targets, g, np.full(2, 5.0), sc, PsoConfig(seed=2))
        obj = scenario_objective(g, sc, targets, np.arange(2))
        assert obj(res.roughness) <= obj(r_star) + 1e-6

    def test_after_mode_ranks_candidates(self):
        g = chain(3)
        scs = [daily(g, 20.0, "A"), daily(g, 35.0, "B")]
        r_star = np.array([1.0, 3.0, 6.0])
        targets = [solve_steady(g, s, r_star).pressure_head[:3] for s in scs]
        res = pso_calibrate(targets, g, np.full(3, 5.0), scs, PsoConfig(mode=AFTER, max_iterations=30),
                            references=targets)
        assert res.mode == AFTER and len(res.candidates) == 2
        assert res.value == min(res.candidate_scores)
        assert np.array_equal(res.roughness, res.candidates[int(np.argmin(res.candidate_scores))])

    def test_after_needs_references(self):
        g = chain(2)
        with pytest.raises(ValueError):
            pso_calibrate([np.zeros(2)], g, np.ones(2), [daily(g)], PsoConfig(mode=AFTER))


class TestAnnPsoRun:
    def test_self_generated_targets_not_worse(self):
        g = chain(4, roughness=5.0, sensors=("J2", "J4"))
        sc = [daily(g, 25.0)]
        refs = [solve_steady(g, sc[0]).pressure_head[g.sensor_index]]
        res = annpso_run(g, g.roughness, sc, refs, config=FAST)
        # the swarm minimises the MAE against the surrogate targets over O, seeded at r0
        obj = scenario_objective(g, sc, res.targets, g.indices(res.output_nodes))
        assert obj(res.roughness) <= obj(g.roughness)
        assert res.calibration.value == obj(res.roughness)

    def test_hydrant_scenarios_monotone_best(self, dma50):
        r_true = np.random.default_rng(0).uniform(0.5, 4.0, dma50.l)
        scs = [hydrant(dma50, n, 10.0, f"H{k}") for k, n in enumerate(dma50.sensor_nodes[:3])]
        refs = [solve_steady(dma50, s, r_true).pressure_head[dma50.sensor_index] for s in scs]
        res = annpso_run(dma50, np.full(dma50.l, 5.0), scs, refs, config=FAST)
        hist = res.calibration.runs[0].history
        assert hist[-1] < hist[0]
        assert all(b <= a for a, b in zip(hist, hist[1:]))

    def test_before_and_after_both_valid(self):
        g = tree_network(12, seed=1, sensor_count=5)
        r_true = np.random.default_rng(1).uniform(0.5, 6.0, g.l)
        leaf = g.sensor_nodes[-1]
        d = g.base_demands.copy()
        d[g.demand_nodes.index(leaf)] += 5.0
        scs = [Scenario("S0", 300.0, g.base_demands), Scenario("S1", 300.0, d)]
        refs = [solve_steady(g, s, r_true).pressure_head[g.sensor_index] for s in scs]
        out = {}
        for mode in (BEFORE, AFTER):
            cfg = AnnPsoConfig(training_size=60, surrogate=FAST.surrogate,
                               pso=PsoConfig(particles=16, max_iterations=30, mode=mode))
            r = annpso_run(g, g.roughness, scs, refs, config=cfg).roughness
            assert np.all((r >= 0.01) & (r <= 10.0))
            out[mode] = scenario_objective(g, scs, refs, g.sensor_index)(r)
        assert all(np.isfinite(v) for v in out.values())

    def test_stage_named_on_failure(self, dma50):
        from wdncal.errors import CalibrationError
        cfg = AnnPsoConfig(training_size=3, solver=SolverConfig(max_iterations=1))
        sc = daily(dma50, 20.0)
        with pytest.raises(CalibrationError, match="training-data:D0"):
            annpso_run(dma50, dma50.roughness, [sc], [np.zeros(dma50.m)], config=cfg)


class TestInference:
    def test_estimates_match_solver_within_validation_error(self, dma50):
        from wdncal.annpso.surrogate import infer_full_pressure, train_surrogate
        sc = hydrant(dma50, dma50.sensor_nodes[4], 10.0)
        samples = gen_training_set(dma50, sc, size=100, seed=11)
        O = dma50.junction_ids
        net = train_surrogate(samples, SurrogateHyperparams(epochs=200), input_nodes=dma50.sensor_nodes,
                              output_nodes=O, scenario_id=sc.id)
        r_true = np.random.default_rng(5).uniform(0.5, 5.0, dma50.l)
        truth = solve_steady(dma50, sc, r_true).pressure_head
        est = infer_full_pressure(net, sc, truth[dma50.sensor_index])
        free = [k for k, nid in enumerate(O) if nid not in dma50.sensor_nodes]
        err = np.abs(est[free] - truth[free])
        assert err.mean() <= 3 * net.validation_rmse[free].mean()
