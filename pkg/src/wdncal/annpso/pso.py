"""Global-best particle swarm with Bratton-Kennedy boundary handling.

Particles that leave the box keep flying but are not evaluated, so they
can never become personal or global bests.  Velocities are clamped to a
fraction of the box width.

With the low inertia used for calibration (w=0.1) a plain global-best swarm
collapses onto its best particle within a few dozen iterations.  By default
the best particle therefore follows the guaranteed-convergence rule of van
den Bergh and Engelbrecht: it performs a random search of radius ``rho``
around the global best, with ``rho`` doubled after repeated improvements
and halved after repeated failures.  All other particles use the usual
update with the configured w, c1, c2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import CalibrationError
from ..network import ROUGHNESS_BOUNDS
from ..util import parallel_map

BEFORE = "before"
AFTER = "after"


@dataclass(frozen=True)
class PsoConfig:
    inertia: float = 0.1
    cognitive: float = 1.0
    social: float = 1.0
    particles: int = 32
    max_iterations: int = 100
    bounds: tuple[float, float] = ROUGHNESS_BOUNDS
    seed: int = 0
    mode: str = BEFORE
    # |v| <= velocity_clamp * (high - low)
    velocity_clamp: float = 0.5
    guaranteed_convergence: bool = True
    # initial search radius of the best particle, as a fraction of box width
    gc_radius: float = 0.1
    gc_success: int = 15
    gc_failure: int = 5

    def __post_init__(self):
        if self.particles <= 0:
            raise ValueError("particles must be > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not self.bounds[0] < self.bounds[1]:
            raise ValueError("bounds must satisfy low < high")
        if self.mode not in (BEFORE, AFTER):
            raise ValueError(f"mode must be {BEFORE!r} or {AFTER!r}")


@dataclass(eq=False)
class SwarmState:
    positions: np.ndarray
    velocities: np.ndarray
    values: np.ndarray          # +inf where the particle was not evaluated
    personal_best: np.ndarray
    personal_value: np.ndarray
    global_best: np.ndarray
    best_value: float
    iteration: int = 0


@dataclass(eq=False)
class PsoResult:
    position: np.ndarray
    value: float
    # global-best value after initialisation and after each iteration
    history: list[float] = field(default_factory=list)
    evaluations: int = 0
    state: SwarmState | None = None


def _evaluate(objective, positions, lower, upper, jobs) -> tuple[np.ndarray, int]:
    inside = np.all((positions >= lower) & (positions <= upper), axis=1)
    values = np.full(positions.shape[0], np.inf)
    idx = np.flatnonzero(inside)
    results = parallel_map(lambda i: objective(positions[i]), idx, jobs)
    for i, v in zip(idx, results):
        v = float(v)
        values[i] = v if np.isfinite(v) else np.inf
    return values, idx.size


def particle_swarm(objective: Callable[[np.ndarray], float], lower, upper, config: PsoConfig,
                   start=None, jobs: int = 1,
                   callback: Callable[[SwarmState], None] | None = None) -> PsoResult:
    """Minimise ``objective`` over the box ``[lower, upper]``.

    ``start`` (if given) replaces the first particle's initial position.
    Non-finite objective values count as failures and are treated like
    out-of-bounds positions.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1 or not np.all(lower < upper):
        raise ValueError("invalid bounds")
    dim = lower.size
    width = upper - lower
    vmax = config.velocity_clamp * width
    rng = np.random.default_rng(config.seed)

    x = rng.uniform(lower, upper, size=(config.particles, dim))
    if start is not None:
        x[0] = np.clip(np.asarray(start, dtype=float), lower, upper)
    v = np.clip((rng.uniform(lower, upper, size=x.shape) - x) / 2.0, -vmax, vmax)
    values, n_eval = _evaluate(objective, x, lower, upper, jobs)
    pbest, pval = x.copy(), values.copy()
    g = int(np.argmin(pval))
    state = SwarmState(x, v, values, pbest, pval, pbest[g].copy(), float(pval[g]))
    history = [state.best_value]
    if callback:
        callback(state)

    rho = config.gc_radius * width
    successes = failures = 0
    for it in range(1, config.max_iterations + 1):
        g = int(np.argmin(pval))
        r1 = rng.random(x.shape)
        r2 = rng.random(x.shape)
        v = (config.inertia * v + config.cognitive * r1 * (pbest - x)
             + config.social * r2 * (state.global_best - x))
        if config.guaranteed_convergence:
            # v[g] was overwritten above, so recompute from the old velocity
            v[g] = (state.global_best - x[g] + config.inertia * state.velocities[g]
                    + rho * (1.0 - 2.0 * rng.random(dim)))
        v = np.clip(v, -vmax, vmax)
        x = x + v
        values, n = _evaluate(objective, x, lower, upper, jobs)
        n_eval += n
        better = values < pval
        pbest[better] = x[better]
        pval[better] = values[better]
        # reduction in particle-index order keeps ties deterministic
        g = int(np.argmin(pval))
        if pval[g] < state.best_value:
            state.global_best = pbest[g].copy()
            state.best_value = float(pval[g])
            successes, failures = successes + 1, 0
        else:
            successes, failures = 0, failures + 1
        if successes > config.gc_success:
            rho = rho * 2.0
        elif failures > config.gc_failure:
            rho = rho * 0.5
        state.positions, state.velocities, state.values = x, v, values
        state.iteration = it
        history.append(state.best_value)
        if callback:
            callback(state)

    if not np.isfinite(state.best_value):
        raise CalibrationError("no particle could be evaluated during the whole run", stage="pso")
    return PsoResult(state.global_best.copy(), state.best_value, history, n_eval, state)
