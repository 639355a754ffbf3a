"""Leave-one-scenario-out and leave-one-sensor-out experiments.

Sign conventions used throughout the outputs:

* ``delta_e = e - e0``: negative values mean calibration reduced the error.
* ``z = e_DH - e_HH``: positive values mean calibrating on hydrant trials
  gave the lower error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..annpso.method import AnnPsoConfig, annpso_run
from ..cobyla.method import CobylaConfig, cobyla_calibrate
from ..dataprep import DAILY, HYDRANT, ReferencePressures
from ..errors import FoldCoverageError, WdnCalError
from ..hydraulics import SolverConfig, solve_steady
from ..network import NetworkGraph
from ..util import parallel_map
from .stats import SignificanceReport, significance

ANNPSO = "AP"
COBYLA = "C"
SETUPS = ("HH", "DH", "HD", "DD")
_POOL = {"H": HYDRANT, "D": DAILY}


@dataclass(frozen=True)
class CalibrationConfig:
    cobyla: CobylaConfig = CobylaConfig()
    annpso: AnnPsoConfig = AnnPsoConfig()
    jobs: int = 1
    solver: SolverConfig | None = None


@dataclass(frozen=True)
class FoldSpec:
    train_ids: tuple[str, ...]
    test_unit: str              # scenario id, or the held-out sensor id
    method: str
    setup: str                  # HH | DH | HD | DD | LOSENSOR
    J: tuple[str, ...]
    J_test: tuple[str, ...]
    test_scenario: str = ""

    def __post_init__(self):
        if self.method not in (ANNPSO, COBYLA):
            raise ValueError(f"method must be {ANNPSO!r} or {COBYLA!r}")
        if self.setup in SETUPS and self.test_unit in self.train_ids:
            raise ValueError("the test scenario must not be part of the training set")
        if self.setup == "LOSENSOR" and self.test_unit in self.J:
            raise ValueError("the held-out sensor must not be part of J")


@dataclass(eq=False)
class FoldResult:
    scenario_id: str
    sensors: tuple[str, ...]        # J'
    e0: np.ndarray
    e: np.ndarray
    delta_e: np.ndarray
    p0: np.ndarray
    p: np.ndarray
    p_measured: np.ndarray
    roughness: np.ndarray | None = None
    spec: FoldSpec | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def rows(self) -> list[dict]:
        setup = self.spec.setup if self.spec else ""
        method = self.spec.method if self.spec else ""
        return [{"scenario": self.scenario_id, "sensor": s, "e0": float(a), "e": float(b),
                 "delta_e": float(c), "setup": setup, "method": method}
                for s, a, b, c in zip(self.sensors, self.e0, self.e, self.delta_e)]


def _values(ref) -> np.ndarray:
    return np.asarray(getattr(ref, "values", ref), dtype=float)


def _simulate(graph, scenario, r, idx, solver):
    state = solve_steady(graph, scenario, r, solver)
    if not state.converged:
        raise WdnCalError(f"solver did not converge on scenario {scenario.id}")
    return state.pressure_head[idx]


def test_stage(graph: NetworkGraph, test_scenario, p_M, r0, r, J_test: Sequence[str] | None = None,
               spec: FoldSpec | None = None, solver: SolverConfig | None = None) -> FoldResult:
    """Errors before (r0) and after (r) calibration at the sensors J'."""
    J_test = tuple(J_test) if J_test is not None else tuple(graph.sensor_nodes)
    m_pos = {nid: i for i, nid in enumerate(graph.sensor_nodes)}
    missing = [x for x in J_test if x not in m_pos]
    if missing:
        raise ValueError(f"J' must be a subset of the sensor nodes; not sensors: {missing}")
    sel = np.array([m_pos[x] for x in J_test], dtype=int)
    idx = graph.sensor_index[sel]
    measured = _values(p_M)[sel]
    p0 = _simulate(graph, test_scenario, np.asarray(r0, dtype=float), idx, solver)
    p = _simulate(graph, test_scenario, np.asarray(r, dtype=float), idx, solver)
    e0 = np.abs(p0 - measured)
    e = np.abs(p - measured)
    return FoldResult(test_scenario.id, J_test, e0, e, e - e0, p0, p, measured,
                      np.asarray(r, dtype=float), spec)


Calibrator = Callable[[NetworkGraph, list, list, np.ndarray, Sequence[str], str, CalibrationConfig], np.ndarray]


def calibrate(graph: NetworkGraph, scenarios, references, r0, J: Sequence[str], method: str,
              config: CalibrationConfig) -> np.ndarray:
    """Dispatch to either calibration method; returns the full roughness vector."""
    if method == COBYLA:
        return cobyla_calibrate(graph, scenarios, references, r0, config=config.cobyla, J=J).roughness
    if method == ANNPSO:
        return annpso_run(graph, r0, scenarios, references, J=J, config=config.annpso).roughness
    raise ValueError(f"unknown method {method!r}")


def _failed(spec: FoldSpec, exc: Exception) -> FoldResult:
    empty = np.zeros(0)
    return FoldResult(spec.test_scenario or spec.test_unit, spec.J_test, empty, empty, empty, empty, empty,
                      empty, None, spec, f"{type(exc).__name__}: {exc}")


def loso_run(graph: NetworkGraph, train_pool, test_pool, method: str, config: CalibrationConfig | None = None,
             setup: str | None = None, r0=None, calibrator: Calibrator = calibrate) -> list[FoldResult]:
    """Leave-one-scenario-out over the test pool.

    Pools are ``(scenarios, references)`` pairs.  When both pools are the
    same set of scenarios every fold trains on the rest of the pool;
    otherwise one calibration on the whole training pool serves all folds.
    A failing fold is recorded with ``error`` set and does not stop the others.
    """
    config = config or CalibrationConfig()
    r0 = graph.roughness if r0 is None else np.asarray(r0, dtype=float)
    tr_sc, tr_ref = list(train_pool[0]), list(train_pool[1])
    te_sc, te_ref = list(test_pool[0]), list(test_pool[1])
    if not tr_sc or not te_sc:
        raise ValueError("training and test pools must be non-empty")
    same_pool = [s.id for s in tr_sc] == [s.id for s in te_sc]
    if setup is None:
        setup = "".join("H" if pool[0].label == HYDRANT else "D" for pool in (tr_sc, te_sc))
    M = tuple(graph.sensor_nodes)

    def fold_specs():
        for sc in te_sc:
            train = [s.id for s in tr_sc if not (same_pool and s.id == sc.id)]
            yield FoldSpec(tuple(train), sc.id, method, setup, M, M, sc.id)

    specs = list(fold_specs())
    shared: dict = {}

    def run(i):
        spec = specs[i]
        try:
            if same_pool:
                keep = [k for k, s in enumerate(tr_sc) if s.id != spec.test_unit]
                r = calibrator(graph, [tr_sc[k] for k in keep], [tr_ref[k] for k in keep], r0, M, method, config)
            else:
                r = shared["r"]
            return test_stage(graph, te_sc[i], te_ref[i], r0, r, M, spec, config.solver)
        except (WdnCalError, ValueError, ArithmeticError) as exc:
            return _failed(spec, exc)

    if not same_pool:
        # calibrate once up front so parallel folds do not race on it
        try:
            shared["r"] = calibrator(graph, tr_sc, tr_ref, r0, M, method, config)
        except (WdnCalError, ValueError, ArithmeticError) as exc:
            return [_failed(s, exc) for s in specs]
    return parallel_map(run, range(len(specs)), config.jobs)


def lo_sensor_run(graph: NetworkGraph, scenario, reference, method: str, config: CalibrationConfig | None = None,
                  r0=None, calibrator: Calibrator = calibrate) -> list[FoldResult]:
    """One fold per sensor x: calibrate on M minus x, test at x on the same scenario."""
    config = config or CalibrationConfig()
    r0 = graph.roughness if r0 is None else np.asarray(r0, dtype=float)
    M = tuple(graph.sensor_nodes)
    if len(M) < 2:
        raise ValueError("leave-one-sensor-out needs at least two sensors")

    def run(x):
        J = tuple(s for s in M if s != x)
        spec = FoldSpec((scenario.id,), x, method, "LOSENSOR", J, (x,), scenario.id)
        try:
            r = calibrator(graph, [scenario], [reference], r0, J, method, config)
            return test_stage(graph, scenario, reference, r0, r, (x,), spec, config.solver)
        except (WdnCalError, ValueError, ArithmeticError) as exc:
            return _failed(spec, exc)

    return parallel_map(run, M, config.jobs)


@dataclass(eq=False)
class ZReport:
    scenario_ids: tuple[str, ...]
    sensors: tuple[str, ...]
    z: np.ndarray                   # (k, m): e_DH - e_HH
    mean: float
    std: float
    method: str = ""
    test: SignificanceReport | None = None
    extra: dict = field(default_factory=dict)

    def to_document(self) -> dict:
        return {"format": "wdncal-zreport", "method": self.method,
                "sign_convention": "z = e_DH - e_HH (positive: hydrant-trial calibration has lower error)",
                "scenarios": list(self.scenario_ids), "sensors": list(self.sensors),
                "z": self.z.tolist(), "z_mean": self.mean, "z_std": self.std,
                "test": self.test.to_document() if self.test else None}


def _error_table(results: Sequence[FoldResult]) -> dict[tuple[str, str], float]:
    table = {}
    for res in results:
        if not res.ok:
            raise FoldCoverageError(f"fold for {res.scenario_id} failed: {res.error}")
        for s, e in zip(res.sensors, res.e):
            key = (res.scenario_id, s)
            if key in table:
                raise FoldCoverageError(f"duplicate entry for scenario {key[0]}, sensor {key[1]}")
            table[key] = float(e)
    return table


def z_vectors(dh_results: Sequence[FoldResult], hh_results: Sequence[FoldResult],
              alpha: float = 0.05, method: str = "") -> ZReport:
    """Entry-wise ``e_DH - e_HH`` matched by (scenario, sensor), with a significance test."""
    dh = _error_table(dh_results)
    hh = _error_table(hh_results)
    if set(dh) != set(hh):
        diff = sorted(set(dh) ^ set(hh))
        raise FoldCoverageError(f"DH and HH results cover different (scenario, sensor) pairs: {diff[:5]}")
    if not dh:
        raise FoldCoverageError("no results to compare")
    scen = tuple(dict.fromkeys(k[0] for k in sorted(dh, key=lambda k: k[0])))
    sens = tuple(dict.fromkeys(s for res in hh_results for s in res.sensors))
    if len(scen) * len(sens) != len(dh):
        raise FoldCoverageError("results do not form a full scenario x sensor grid")
    z = np.array([[dh[sc, s] - hh[sc, s] for s in sens] for sc in scen])
    flat = z.ravel()
    std = float(flat.std(ddof=1)) if flat.size > 1 else 0.0
    try:
        test = significance(flat, alpha)
    except WdnCalError as exc:
        test = SignificanceReport(gate=None, test=None, statistic=None, p_value=None, note=str(exc))
    return ZReport(scen, sens, z, float(flat.mean()), std, method, test)
