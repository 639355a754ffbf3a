import numpy as np
import pytest

from wdncal.annpso.pso import PsoConfig, particle_swarm
from wdncal.errors import CalibrationError

LO, HI = np.full(10, -5.0), np.full(10, 5.0)


def sphere(x):
    return float(np.sum(x ** 2))


def standard_config(seed, **kw):
    return PsoConfig(inertia=0.1, cognitive=1.0, social=1.0, particles=32, max_iterations=100,
                     bounds=(-5.0, 5.0), seed=seed, **kw)


class TestSphere:
    def test_mean_best_below_threshold(self):
        best = [particle_swarm(sphere, LO, HI, standard_config(s)).value for s in range(10)]
        assert np.mean(best) < 1e-2

    def test_history_monotone(self):
        for s in range(3):
            res = particle_swarm(sphere, LO, HI, standard_config(s))
            assert len(res.history) == 101
            assert all(b <= a for a, b in zip(res.history, res.history[1:]))
            assert res.value == res.history[-1] == sphere(res.position)

    def test_plain_gbest_stagnates(self):
        # the reason the guaranteed-convergence update is on by default
        best = [particle_swarm(sphere, LO, HI, standard_config(s, guaranteed_convergence=False)).value
                for s in range(10)]
        assert np.mean(best) > 0.1

    def test_deterministic(self):
        a = particle_swarm(sphere, LO, HI, standard_config(7))
        b = particle_swarm(sphere, LO, HI, standard_config(7))
        assert np.array_equal(a.position, b.position) and a.history == b.history


class TestSwarmMechanics:
    def test_frozen_swarm_stays_at_start(self):
        start = np.array([0.3, -1.2, 2.0])
        cfg = PsoConfig(inertia=0.0, cognitive=0.0, social=0.0, particles=1, max_iterations=20,
                        bounds=(-5.0, 5.0), guaranteed_convergence=False)
        res = particle_swarm(lambda x: float(np.sum((x - 1) ** 2)), np.full(3, -5.0), np.full(3, 5.0), cfg,
                             start=start)
        assert np.array_equal(res.position, start)

    def test_optimal_start_is_kept(self):
        start = np.array([1.0, 1.0])
        cfg = PsoConfig(particles=1, max_iterations=30, bounds=(-5.0, 5.0))
        res = particle_swarm(lambda x: float(np.sum((x - 1) ** 2)), np.full(2, -5.0), np.full(2, 5.0), cfg,
                             start=start)
        assert np.array_equal(res.position, start) and res.value == 0.0

    def test_out_of_bounds_never_evaluated(self):
        lo, hi = np.zeros(4), np.ones(4)

        def guarded(x):
            assert np.all((x >= lo) & (x <= hi)), "objective called outside the box"
            return float(np.sum((x - 0.9) ** 2))

        states = []
        cfg = PsoConfig(particles=16, max_iterations=40, bounds=(0.0, 1.0), velocity_clamp=1.0, seed=3)
        res = particle_swarm(guarded, lo, hi, cfg, callback=lambda s: states.append(s.values.copy()))
        assert np.all((res.position >= lo) & (res.position <= hi))
        # at least some particles flew out and were skipped
        assert any(np.isinf(v).any() for v in states)

    def test_velocity_clamp(self):
        seen = []
        cfg = PsoConfig(particles=8, max_iterations=10, bounds=(0.0, 10.0), velocity_clamp=0.1, seed=1,
                        inertia=0.9, cognitive=2.0, social=2.0)
        particle_swarm(sphere, np.zeros(3), np.full(3, 10.0), cfg,
                       callback=lambda s: seen.append(np.abs(s.velocities).max()))
        assert max(seen) <= 1.0 + 1e-12

    def test_non_finite_counts_as_failure(self):
        cfg = PsoConfig(particles=4, max_iterations=5, bounds=(0.0, 1.0))
        with pytest.raises(CalibrationError, match="pso"):
            particle_swarm(lambda x: float("nan"), np.zeros(2), np.ones(2), cfg)

    def test_start_replaces_first_particle(self):
        states = []
        start = np.array([0.25, 0.75])
        cfg = PsoConfig(particles=4, max_iterations=0, bounds=(0.0, 1.0))
        particle_swarm(sphere, np.zeros(2), np.ones(2), cfg, start=start,
                       callback=lambda s: states.append(s.positions.copy()))
        assert np.array_equal(states[0][0], start)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PsoConfig(particles=0)
        with pytest.raises(ValueError):
            PsoConfig(mode="sideways")
