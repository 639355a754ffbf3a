"""ANN-PSO calibration: per-scenario surrogate expansion, then swarm fitting.

For every training scenario a surrogate maps sensor pressures to pressures
over the node set O.  Its training data come from solver runs with random
roughness and randomly reallocated demands.  The measured pressures are
pushed through the surrogate, and the swarm fits roughness to the expanded
vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import CalibrationError, RetryBudgetExhausted, WdnCalError
from ..hydraulics import SolverConfig, solve_steady
from ..network import ROUGHNESS_BOUNDS, NetworkGraph
from ..util import derive_seed, mae, parallel_map
from .pso import AFTER, BEFORE, PsoConfig, PsoResult, particle_swarm
from .surrogate import (SurrogateHyperparams, SurrogateNet, TrainingSample, infer_full_pressure,
                        train_surrogate)


def _metered(scenario, graph: NetworkGraph) -> np.ndarray:
    """Demands over Q with any hydrant discharge removed."""
    d = np.array(scenario.demands, dtype=float)
    if getattr(scenario, "trial_node", None) and scenario.trial_flow:
        pos = graph.demand_nodes.index(scenario.trial_node)
        d[pos] = max(d[pos] - scenario.trial_flow, 0.0)
    return d


def perturb_demands(graph: NetworkGraph, scenario, rng: np.random.Generator) -> np.ndarray:
    """Reallocate metered consumption by a flat Dirichlet draw; the trial flow stays put."""
    metered = _metered(scenario, graph)
    total = float(metered.sum())
    d = rng.dirichlet(np.ones(graph.q)) * total if graph.q and total > 0 else np.zeros(graph.q)
    return d + (np.asarray(scenario.demands, dtype=float) - metered)


def gen_training_set(graph: NetworkGraph, scenario, r_range: tuple[float, float] = ROUGHNESS_BOUNDS,
                     size: int = 100, seed: int = 0, output_nodes: Sequence[str] | None = None,
                     solver: SolverConfig | None = None, max_retries: int | None = None
                     ) -> list[TrainingSample]:
    """Simulated (sensor pressures, pressures over O) pairs for one scenario."""
    if size < 1:
        raise ValueError("size must be >= 1")
    lo, hi = r_range
    if not (ROUGHNESS_BOUNDS[0] <= lo < hi <= ROUGHNESS_BOUNDS[1]):
        raise ValueError(f"r_range {r_range} must lie within {ROUGHNESS_BOUNDS}")
    if not graph.sensor_nodes:
        raise ValueError("graph has no sensor nodes")
    out_idx = graph.indices(output_nodes if output_nodes is not None else graph.junction_ids)
    budget = size if max_retries is None else max_retries
    rng = np.random.default_rng(seed)
    samples: list[TrainingSample] = []
    failures = 0
    while len(samples) < size:
        r = rng.uniform(lo, hi, size=graph.l)
        d = perturb_demands(graph, scenario, rng)
        try:
            state = solve_steady(graph, _Snapshot(scenario.reservoir_head, d), r, solver)
            ok = state.converged
        except WdnCalError:
            ok = False
        if not ok:
            failures += 1
            if failures > budget:
                raise RetryBudgetExhausted(f"{failures} failed solves while generating training data")
            continue
        p = state.pressure_head
        samples.append(TrainingSample(p[graph.sensor_index].copy(), p[out_idx].copy(), r, d))
    return samples


@dataclass(frozen=True)
class _Snapshot:
    reservoir_head: float
    demands: np.ndarray


def _pressures(graph, scenario, r, idx, solver) -> np.ndarray | None:
    try:
        state = solve_steady(graph, scenario, r, solver)
    except WdnCalError:
        return None
    if not state.converged:
        return None
    return state.pressure_head[idx]


def scenario_objective(graph: NetworkGraph, scenarios, targets, node_idx, solver=None,
                       weights=None):
    """r -> mean over scenarios of the MAE at ``node_idx``; +inf if any solve fails."""
    def objective(r) -> float:
        total = 0.0
        for sc, t in zip(scenarios, targets):
            p = _pressures(graph, sc, r, node_idx, solver)
            if p is None:
                return float("inf")
            total += mae(p, t, weights)
        return total / len(scenarios)
    return objective


@dataclass(eq=False)
class PsoCalibration:
    roughness: np.ndarray
    value: float
    mode: str
    runs: list[PsoResult] = field(default_factory=list)
    # After mode: candidate r_i and their mean MAE against measured pressures
    candidates: list[np.ndarray] = field(default_factory=list)
    candidate_scores: list[float] = field(default_factory=list)


def pso_calibrate(targets: Sequence[np.ndarray], graph: NetworkGraph, r0, scenarios,
                  config: PsoConfig | None = None, output_nodes: Sequence[str] | None = None,
                  references: Sequence[np.ndarray] | None = None, J: Sequence[str] | None = None,
                  weights=None, solver: SolverConfig | None = None, jobs: int = 1) -> PsoCalibration:
    """Fit roughness to target pressures over O (one swarm, or one per scenario in After mode).

    ``references`` holds the measured pressures over J per scenario; After
    mode uses them to pick among the per-scenario solutions.
    """
    config = config or PsoConfig()
    if len(targets) != len(scenarios) or not scenarios:
        raise ValueError("need one target vector per scenario, and at least one scenario")
    o_idx = graph.indices(output_nodes if output_nodes is not None else graph.junction_ids)
    lower = np.full(graph.l, config.bounds[0])
    upper = np.full(graph.l, config.bounds[1])
    r0 = np.asarray(r0, dtype=float)

    if config.mode == BEFORE:
        obj = scenario_objective(graph, scenarios, targets, o_idx, solver, weights)
        res = particle_swarm(obj, lower, upper, config, start=r0, jobs=jobs)
        return PsoCalibration(res.position, res.value, BEFORE, [res])

    if references is None:
        raise ValueError("After mode ranks candidates against measured pressures; references required")
    j_idx = graph.indices(J if J is not None else graph.sensor_nodes)
    runs = []
    for i, (sc, t) in enumerate(zip(scenarios, targets)):
        obj = scenario_objective(graph, [sc], [t], o_idx, solver, weights)
        cfg = replace(config, seed=derive_seed(config.seed, "after", i))
        runs.append(particle_swarm(obj, lower, upper, cfg, start=r0, jobs=jobs))
    ranking = scenario_objective(graph, scenarios, references, j_idx, solver)
    scores = parallel_map(lambda res: ranking(res.position), runs, jobs)
    best = int(np.argmin(scores))
    return PsoCalibration(runs[best].position, float(scores[best]), AFTER, runs,
                          [r.position for r in runs], [float(s) for s in scores])


@dataclass(frozen=True)
class AnnPsoConfig:
    training_size: int = 100
    r_range: tuple[float, float] = ROUGHNESS_BOUNDS
    surrogate: SurrogateHyperparams = SurrogateHyperparams()
    pso: PsoConfig = PsoConfig()
    seed: int = 0
    jobs: int = 1
    solver: SolverConfig | None = None


@dataclass(eq=False)
class AnnPsoResult:
    roughness: np.ndarray
    calibration: PsoCalibration
    surrogates: list[SurrogateNet]
    targets: list[np.ndarray]
    output_nodes: tuple[str, ...]
    input_nodes: tuple[str, ...]


def annpso_run(graph: NetworkGraph, r0, scenarios, references, J: Sequence[str] | None = None,
               O: Sequence[str] | None = None, config: AnnPsoConfig | None = None) -> AnnPsoResult:
    """Train, infer and optimise.  ``references[i]`` holds pressures over M for ``scenarios[i]``.

    Errors from any stage are re-raised as ``CalibrationError`` naming the stage.
    """
    config = config or AnnPsoConfig()
    J = tuple(J) if J is not None else tuple(graph.sensor_nodes)
    O = tuple(O) if O is not None else tuple(graph.junction_ids)
    if len(references) != len(scenarios) or not scenarios:
        raise ValueError("need one reference vector per scenario, and at least one scenario")
    m_pos = {nid: i for i, nid in enumerate(graph.sensor_nodes)}
    missing = [nid for nid in J if nid not in m_pos]
    if missing:
        raise ValueError(f"J must be a subset of the sensor nodes; not sensors: {missing}")
    cols = [m_pos[nid] for nid in J]
    measured = [np.asarray(getattr(ref, "values", ref), dtype=float) for ref in references]

    def expand(i):
        sc = scenarios[i]
        try:
            samples = gen_training_set(graph, sc, config.r_range, config.training_size,
                                       derive_seed(config.seed, "train", sc.id), O, config.solver)
        except (WdnCalError, ValueError) as exc:
            raise CalibrationError(str(exc), stage=f"training-data:{sc.id}") from exc
        hp = replace(config.surrogate, seed=derive_seed(config.seed, "surrogate", sc.id))
        try:
            net = train_surrogate(samples, hp, cols, input_nodes=J, output_nodes=O, scenario_id=sc.id)
        except (WdnCalError, ValueError) as exc:
            raise CalibrationError(str(exc), stage=f"ann-training:{sc.id}") from exc
        try:
            return net, infer_full_pressure(net, sc, measured[i][cols])
        except (WdnCalError, ValueError) as exc:
            raise CalibrationError(str(exc), stage=f"ann-inference:{sc.id}") from exc

    expanded = parallel_map(expand, range(len(scenarios)), config.jobs)
    nets = [e[0] for e in expanded]
    targets = [e[1] for e in expanded]
    try:
        pso = replace(config.pso, seed=derive_seed(config.seed, "pso"))
        cal = pso_calibrate(targets, graph, r0, scenarios, pso, O,
                            [m[cols] for m in measured], J, solver=config.solver, jobs=config.jobs)
    except (WdnCalError, ValueError) as exc:
        raise CalibrationError(str(exc), stage="pso") from exc
    return AnnPsoResult(cal.roughness, cal, nets, targets, O, J)
