"""Clustering-COBYLA calibration.

Pipes are grouped by k-means on standardised (roughness, mean |flow|)
features computed once under the initial roughness.  COBYLA then tunes one
roughness value per cluster to minimise the mean sensor MAE over the
training scenarios, with the roughness bounds imposed as inequality
constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import CalibrationError, WdnCalError
from ..hydraulics import SolverConfig, solve_steady
from ..network import ROUGHNESS_BOUNDS, NetworkGraph
from ..util import mae, parallel_map
from .kmeans import kmeans
from .optimizer import CobylaResult, minimize

# objective value (m) returned for probes where the solver fails
FAILED_PROBE_PENALTY = 1e3


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray          # cluster index per pipe
    k: int
    centroids: np.ndarray       # standardised feature space
    pipe_ids: tuple[str, ...] = ()

    def __post_init__(self):
        counts = np.bincount(self.labels, minlength=self.k)
        if counts.size != self.k or np.any(counts == 0):
            raise ValueError("every cluster must be non-empty and labels must lie in [0, k)")


@dataclass(frozen=True)
class CobylaConfig:
    clusters: int = 10
    bounds: tuple[float, float] = ROUGHNESS_BOUNDS
    # initial trust-region radius; default is half the bound width
    rhobeg: float | None = None
    rhoend: float = 1e-4
    maxfun: int = 300
    seed: int = 0
    jobs: int = 1
    max_failure_fraction: float = 0.5
    solver: SolverConfig | None = None


@dataclass(eq=False)
class CobylaCalibration:
    roughness: np.ndarray
    reduced: np.ndarray
    assignment: ClusterAssignment
    objective_start: float
    objective_final: float
    result: CobylaResult
    failures: int = 0
    trace: list[float] = field(default_factory=list)


def _standardise(col: np.ndarray) -> np.ndarray:
    std = col.std()
    if std == 0:
        return np.zeros_like(col)
    return (col - col.mean()) / std


def pipe_features(graph: NetworkGraph, r0, scenarios, solver: SolverConfig | None = None,
                  jobs: int = 1) -> np.ndarray:
    """Standardised (initial roughness, mean |flow| under r0) per pipe, shape (l, 2)."""
    r0 = np.asarray(r0, dtype=float)

    def flows(sc):
        try:
            state = solve_steady(graph, sc, r0, solver)
        except WdnCalError:
            return None
        return np.abs(state.flow) if state.converged else None

    solved = [f for f in parallel_map(flows, scenarios, jobs) if f is not None]
    if not solved:
        raise CalibrationError("no training scenario could be solved under the initial roughness",
                               stage="features")
    mean_flow = np.mean(solved, axis=0)
    return np.column_stack([_standardise(r0), _standardise(mean_flow)])


def cluster_pipes(features, k: int, seed: int = 0, pipe_ids: Sequence[str] = ()) -> ClusterAssignment:
    res = kmeans(features, k, seed)
    return ClusterAssignment(res.labels.astype(int), k, res.centroids, tuple(pipe_ids))


def expand_roughness(reduced, assignment: ClusterAssignment) -> np.ndarray:
    reduced = np.asarray(reduced, dtype=float)
    if reduced.shape != (assignment.k,):
        raise ValueError(f"reduced vector has shape {reduced.shape}, expected ({assignment.k},)")
    return reduced[assignment.labels]


def collapse_roughness(r, assignment: ClusterAssignment) -> np.ndarray:
    """Per-cluster mean of a full roughness vector."""
    r = np.asarray(r, dtype=float)
    sums = np.bincount(assignment.labels, weights=r, minlength=assignment.k)
    return sums / np.bincount(assignment.labels, minlength=assignment.k)


def sensor_mae_objective(graph: NetworkGraph, scenarios, references, j_idx, solver=None, jobs: int = 1):
    """r -> mean over scenarios of the MAE at sensor positions ``j_idx``; None if a solve fails."""
    pos = graph.sensor_index[j_idx]
    refs = [np.asarray(getattr(ref, "values", ref), dtype=float)[j_idx] for ref in references]

    def one(args):
        sc, ref, r = args
        try:
            state = solve_steady(graph, sc, r, solver)
        except WdnCalError:
            return None
        return mae(state.pressure_head[pos], ref) if state.converged else None

    def objective(r):
        vals = parallel_map(one, [(sc, ref, r) for sc, ref in zip(scenarios, refs)], jobs)
        if any(v is None for v in vals):
            return None
        return float(sum(vals) / len(vals))
    return objective


def cobyla_calibrate(graph: NetworkGraph, scenarios, references, r0, K: int | None = None,
                     config: CobylaConfig | None = None, J: Sequence[str] | None = None
                     ) -> CobylaCalibration:
    """Fit one roughness per pipe cluster to the sensor pressures at J (default: all sensors)."""
    config = config or CobylaConfig()
    K = config.clusters if K is None else K
    if len(references) != len(scenarios) or not scenarios:
        raise ValueError("need one reference vector per scenario, and at least one scenario")
    for ref in references:
        if np.asarray(getattr(ref, "values", ref)).shape != (graph.m,):
            raise ValueError(f"reference vectors must have one value per sensor ({graph.m})")
    r0 = np.asarray(r0, dtype=float)
    m_pos = {nid: i for i, nid in enumerate(graph.sensor_nodes)}
    J = tuple(J) if J is not None else tuple(graph.sensor_nodes)
    j_idx = np.array([m_pos[nid] for nid in J], dtype=int)

    features = pipe_features(graph, r0, scenarios, config.solver, config.jobs)
    try:
        assignment = cluster_pipes(features, min(K, graph.l), config.seed, graph.pipe_ids)
    except WdnCalError as exc:
        raise CalibrationError(str(exc), stage="clustering") from exc
    lo, hi = config.bounds
    x0 = np.clip(collapse_roughness(r0, assignment), lo, hi)
    rhobeg = config.rhobeg if config.rhobeg is not None else 0.5 * (hi - lo)
    objective = sensor_mae_objective(graph, scenarios, references, j_idx, config.solver, config.jobs)

    probes = 0
    failures = 0
    trace: list[float] = []

    def fun(x):
        nonlocal probes, failures
        probes += 1
        value = objective(expand_roughness(np.maximum(x, 0.0), assignment))
        if value is None:
            failures += 1
            if probes >= 4 and failures > config.max_failure_fraction * probes:
                raise CalibrationError(f"solver failed at {failures} of {probes} probe points "
                                       f"(last probe {np.array2string(x, precision=4)})", stage="cobyla")
            value = FAILED_PROBE_PENALTY
        trace.append(value)
        return value

    def cons(x):
        return np.concatenate([x - lo, hi - x])

    res = minimize(fun, x0, cons, rhobeg=min(rhobeg, 0.5 * (hi - lo)), rhoend=config.rhoend,
                   maxfun=config.maxfun)
    # the first evaluation is always the start point
    start_value = res.history[0][0]
    best = np.clip(res.x, lo, hi) if res.fun <= start_value else x0
    final = min(res.fun, start_value)
    return CobylaCalibration(expand_roughness(best, assignment), best, assignment, start_value, final,
                             res, failures, trace)
