import numpy as np
import pytest
from scipy.optimize import brentq

from wdncal.cobyla.method import CobylaConfig
from wdncal.dataprep import ReferencePressures
from wdncal.errors import FoldCoverageError, WdnCalError
from wdncal.evaluation.crossval import (COBYLA, CalibrationConfig, FoldResult, FoldSpec, lo_sensor_run,
                                        loso_run, test_stage as stage, z_vectors)
from wdncal.hydraulics import solve_steady

from conftest import chain, daily, hydrant


def refs_for(graph, scenarios, r):
    return [ReferencePressures(s.id, solve_steady(graph, s, r).pressure_head[graph.sensor_index],
                               graph.sensor_nodes) for s in scenarios]


def pools(graph, r_true):
    hyd = [hydrant(graph, graph.junctions[k % len(graph.junctions)].id, 8.0 + k, f"H{k}") for k in range(4)]
    day = [daily(graph, 0.5 + 0.2 * k, f"D{k}") for k in range(4)]
    return (hyd, refs_for(graph, hyd, r_true)), (day, refs_for(graph, day, r_true))


class Recorder:
    """Calibrator stand-in that records what each fold was given."""

    def __init__(self, value=None, fail_on=None):
        self.calls = []
        self.value = value
        self.fail_on = fail_on

    def __call__(self, graph, scenarios, references, r0, J, method, config):
        ids = tuple(s.id for s in scenarios)
        self.calls.append((ids, tuple(r.scenario_id for r in references), tuple(J)))
        if self.fail_on and self.fail_on in ids:
            raise WdnCalError("calibration failed on purpose")
        return r0.copy() if self.value is None else np.full(graph.l, self.value)


class TestStage:
    def test_no_change_gives_zero(self):
        g = chain(3)
        sc = daily(g)
        ref = refs_for(g, [sc], np.full(3, 2.0))[0]
        res = stage(g, sc, ref, g.roughness, g.roughness)
        assert np.array_equal(res.delta_e, np.zeros(3))

    def test_hand_values(self):
        # pick r so the simulated pressure drops by 0.015 m, then place the
        # measurement 0.033 m below p0: e0 = 0.033, e = 0.018, delta_e = -0.015
        g = chain(1)
        sc = hydrant(g, "J1")
        r0 = np.array([1.0])
        head = lambda r: solve_steady(g, sc, np.array([r])).pressure_head[g.sensor_index][0]
        p0 = head(1.0)
        r = brentq(lambda x: p0 - head(x) - 0.015, 1.0, 10.0, xtol=1e-14)
        res = stage(g, sc, ReferencePressures("D0", np.array([p0 - 0.033])), r0, np.array([r]))
        assert res.e0[0] == pytest.approx(0.033, abs=1e-12)
        assert res.e[0] == pytest.approx(0.018, abs=1e-9)
        assert res.delta_e[0] == pytest.approx(-0.015, abs=1e-9)

    def test_perfect_calibration(self):
        g = chain(3)
        sc = hydrant(g, "J3")
        truth = np.array([2.0, 4.0, 6.0])
        ref = refs_for(g, [sc], truth)[0]
        res = stage(g, sc, ref, g.roughness, truth)
        assert np.allclose(res.e, 0, atol=1e-9)
        assert np.allclose(res.delta_e, -res.e0, atol=1e-9)

    def test_sensor_subset(self):
        g = chain(3)
        sc = daily(g)
        ref = refs_for(g, [sc], g.roughness)[0]
        res = stage(g, sc, ref, g.roughness, g.roughness, ("J2",))
        assert res.sensors == ("J2",) and res.e.shape == (1,)
        with pytest.raises(ValueError):
            stage(g, sc, ref, g.roughness, g.roughness, ("R1",))


class TestLoso:
    def test_hh_folds_train_on_the_other_three(self):
        g = chain(3)
        hh, _ = pools(g, np.full(3, 2.0))
        rec = Recorder()
        res = loso_run(g, hh, hh, COBYLA, calibrator=rec)
        assert [r.scenario_id for r in res] == ["H0", "H1", "H2", "H3"]
        assert len(rec.calls) == 4
        for (ids, ref_ids, J), fold in zip(rec.calls, res):
            assert len(ids) == 3 and fold.scenario_id not in ids
            assert ids == ref_ids
            assert J == g.sensor_nodes
            assert fold.spec.setup == "HH"

    def test_dh_trains_once_on_all_daily(self):
        g = chain(3)
        hh, dd = pools(g, np.full(3, 2.0))
        rec = Recorder()
        res = loso_run(g, dd, hh, COBYLA, calibrator=rec)
        assert rec.calls == [(("D0", "D1", "D2", "D3"), ("D0", "D1", "D2", "D3"), g.sensor_nodes)]
        assert [r.spec.setup for r in res] == ["DH"] * 4
        assert all(r.spec.train_ids == ("D0", "D1", "D2", "D3") for r in res)

    def test_dd_identity_gives_zero(self):
        g = chain(3)
        _, dd = pools(g, g.roughness)
        res = loso_run(g, dd, dd, COBYLA, config=CalibrationConfig(cobyla=CobylaConfig(clusters=1, maxfun=30)))
        for fold in res:
            assert fold.ok
            assert np.allclose(fold.e0, 0, atol=1e-9)
            assert np.allclose(fold.delta_e, 0, atol=1e-6)

    def test_failed_fold_is_isolated(self):
        g = chain(3)
        hh, _ = pools(g, np.full(3, 2.0))
        # a fold fails whenever H1 is in its training set, i.e. every fold except the H1 fold
        res = loso_run(g, hh, hh, COBYLA, calibrator=Recorder(fail_on="H1"))
        assert [r.ok for r in res] == [False, True, False, False]
        assert "on purpose" in res[0].error

    def test_calibration_changes_nothing_outside_fold(self):
        g = chain(3)
        hh, _ = pools(g, np.full(3, 2.0))
        before = g.roughness.copy()
        loso_run(g, hh, hh, COBYLA, calibrator=Recorder(value=2.0))
        assert np.array_equal(g.roughness, before)

    def test_leak_rejected(self):
        with pytest.raises(ValueError):
            FoldSpec(("H0", "H1"), "H1", COBYLA, "HH", ("J1",), ("J1",))

    def test_hydrant_recovery_improves(self):
        g = chain(3)
        truth = np.array([3.0, 3.0, 3.0])
        hh, _ = pools(g, truth)
        cfg = CalibrationConfig(cobyla=CobylaConfig(clusters=1))
        res = loso_run(g, hh, hh, COBYLA, config=cfg)
        for fold in res:
            assert fold.ok and np.all(fold.delta_e < 0)


class TrackedReference:
    """Reference whose pressure reads are logged."""

    def __init__(self, ref, log):
        self.scenario_id = ref.scenario_id
        self.sensor_nodes = ref.sensor_nodes
        self._values = ref.values
        self._log = log

    @property
    def values(self):
        self._log.append(self.scenario_id)
        return self._values


class TestIsolation:
    def test_held_out_reference_unread_during_training(self):
        g = chain(3)
        (hyd, refs), _ = pools(g, np.full(3, 2.0))
        log = []
        tracked = [TrackedReference(r, log) for r in refs]

        def calibrator(graph, scenarios, references, r0, J, method, config):
            held_out = ({s.id for s in hyd} - {s.id for s in scenarios}).pop()
            log.append(("train", held_out))
            for r in references:
                r.values  # a real calibrator reads every training reference
            log.append(("test", held_out))
            return r0.copy()

        loso_run(g, (hyd, tracked), (hyd, tracked), COBYLA, calibrator=calibrator)
        # split the read log into phases: each fold trains, then tests
        phase, reads = None, {}
        for item in log:
            if isinstance(item, tuple):
                phase = item
            else:
                reads.setdefault(phase, []).append(item)
        for sid in ("H0", "H1", "H2", "H3"):
            assert sid not in reads[("train", sid)] and len(reads[("train", sid)]) == 3
            assert reads[("test", sid)] == [sid]

    def test_delta_audit(self):
        g = chain(3)
        hh, _ = pools(g, np.full(3, 2.5))
        res = loso_run(g, hh, hh, COBYLA, calibrator=Recorder(value=2.0))
        for f in res:
            assert np.array_equal(f.delta_e, np.abs(f.p - f.p_measured) - np.abs(f.p0 - f.p_measured))


class TestLoSensor:
    def test_fold_structure(self):
        g = chain(2)
        sc = hydrant(g, "J2")
        ref = refs_for(g, [sc], np.full(2, 2.0))[0]
        rec = Recorder()
        res = lo_sensor_run(g, sc, ref, COBYLA, calibrator=rec)
        assert len(res) == 2
        assert [c[2] for c in rec.calls] == [("J2",), ("J1",)]
        assert [r.sensors for r in res] == [("J1",), ("J2",)]

    def test_recovery_reduces_error(self):
        g = chain(3)
        sc = hydrant(g, "J3")
        ref = refs_for(g, [sc], np.full(3, 3.0))[0]
        cfg = CalibrationConfig(cobyla=CobylaConfig(clusters=1))
        res = lo_sensor_run(g, sc, ref, COBYLA, config=cfg)
        assert all(f.ok and f.delta_e[0] < 0 for f in res)

    def test_needs_two_sensors(self):
        g = chain(2, sensors=("J1",))
        sc = daily(g)
        with pytest.raises(ValueError):
            lo_sensor_run(g, sc, refs_for(g, [sc], g.roughness)[0], COBYLA, calibrator=Recorder())


def fold(sid, sensors, e):
    e = np.asarray(e, dtype=float)
    z = np.zeros_like(e)
    return FoldResult(sid, tuple(sensors), z, e, e, z, z, z)


class TestZ:
    def test_identical_inputs(self):
        folds = [fold(f"H{k}", ["A", "B"], [0.01 * k, 0.02]) for k in range(4)]
        rep = z_vectors(folds, folds)
        assert np.array_equal(rep.z, np.zeros((4, 2)))
        assert rep.mean == 0.0
        assert rep.test.test is None  # no non-zero values to test

    def test_sign(self):
        rep = z_vectors([fold("H0", ["A"], [0.020])], [fold("H0", ["A"], [0.005])])
        assert rep.z[0, 0] == pytest.approx(0.015, abs=1e-15)
        assert rep.to_document()["z"] == [[rep.z[0, 0]]]

    def test_matched_by_key_not_order(self):
        dh = [fold("H1", ["B", "A"], [0.3, 0.1]), fold("H0", ["A", "B"], [0.5, 0.7])]
        hh = [fold("H0", ["A", "B"], [0.0, 0.0]), fold("H1", ["A", "B"], [0.0, 0.0])]
        rep = z_vectors(dh, hh)
        assert rep.scenario_ids == ("H0", "H1") and rep.sensors == ("A", "B")
        assert np.allclose(rep.z, [[0.5, 0.7], [0.1, 0.3]])

    def test_coverage_mismatch(self):
        with pytest.raises(FoldCoverageError):
            z_vectors([fold("H0", ["A"], [0.1])], [fold("H1", ["A"], [0.1])])

    def test_failed_fold_rejected(self):
        bad = fold("H0", ["A"], [0.1])
        bad.error = "boom"
        with pytest.raises(FoldCoverageError):
            z_vectors([bad], [fold("H0", ["A"], [0.1])])

    def test_duplicate_rejected(self):
        f = fold("H0", ["A"], [0.1])
        with pytest.raises(FoldCoverageError):
            z_vectors([f, f], [f, f])

    def test_mean_brute_force(self, rng):
        dh = [fold(f"H{k}", ["A", "B", "C"], rng.uniform(0, 0.1, 3)) for k in range(4)]
        hh = [fold(f.scenario_id, f.sensors, rng.uniform(0, 0.1, 3)) for f in dh]
        total = sum(a - b for x, y in zip(dh, hh) for a, b in zip(x.e, y.e))
        assert z_vectors(dh, hh).mean == pytest.approx(total / 12, abs=1e-15)

    def test_significance_attached(self, rng):
        dh = [fold(f"H{k}", [f"S{i}" for i in range(11)], rng.uniform(0.01, 0.03, 11)) for k in range(4)]
        hh = [fold(f.scenario_id, f.sensors, f.e - rng.uniform(0.001, 0.01, 11)) for f in dh]
        rep = z_vectors(dh, hh)
        assert rep.mean > 0
        assert rep.test.p_value < 1e-6
