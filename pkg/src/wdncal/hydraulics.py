"""Demand-driven steady-state solver (global gradient / Todini-Pilati).

Head loss follows Darcy-Weisbach with the Swamee-Jain friction factor,
laminar ``64/Re`` below Re=2000 and a linear blend over [2000, 4000].
Demands enter in m3/h and are converted to m3/s internally.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import SingularSystemError
from .network import NetworkGraph, Pipe, _unreachable_junctions

G = 9.81  # m/s2
NU = 1.004e-6  # kinematic viscosity of water at 20 C, m2/s
RE_LAMINAR = 2000.0
RE_TURBULENT = 4000.0
_LN10 = np.log(10.0)
_DENSE_LIMIT = 150


@dataclass(frozen=True)
class SolverConfig:
    head_tolerance: float = 1e-6
    max_iterations: int = 200
    flow_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.head_tolerance > 0:
            raise ValueError("head_tolerance must be > 0")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be > 0")


@dataclass(frozen=True)
class HydraulicState:
    """Solution of one steady-state snapshot.

    ``pressure_head`` and ``head`` follow ``graph.node_ids`` (junctions then
    reservoirs); ``flow`` follows ``graph.pipes`` in m3/s, positive from
    start to end node.  ``residual`` is the largest energy-equation residual
    in metres.
    """

    pressure_head: np.ndarray
    head: np.ndarray
    flow: np.ndarray
    converged: bool
    iterations: int
    residual: float


def _swamee_jain(re, rel_rough):
    u = rel_rough / 3.7 + 5.74 * re ** -0.9
    lg = np.log10(u)
    f = 0.25 / lg ** 2
    # Re * df/dRe
    re_df = 0.5 * 0.9 * 5.74 * re ** -0.9 / (u * _LN10 * lg ** 3)
    return f, re_df


def friction_factor(re, rel_rough):
    """Darcy friction factor and its logarithmic derivative ``Re * df/dRe``."""
    re = np.asarray(re, dtype=float)
    rel_rough = np.broadcast_to(np.asarray(rel_rough, dtype=float), re.shape)
    f = np.empty_like(re)
    re_df = np.empty_like(re)

    lam = re < RE_LAMINAR
    f[lam] = 64.0 / re[lam]
    re_df[lam] = -f[lam]

    turb = re > RE_TURBULENT
    f[turb], re_df[turb] = _swamee_jain(re[turb], rel_rough[turb])

    mid = ~(lam | turb)
    if mid.any():
        f4000, _ = _swamee_jain(RE_TURBULENT, rel_rough[mid])
        f2000 = 64.0 / RE_LAMINAR
        slope = (f4000 - f2000) / (RE_TURBULENT - RE_LAMINAR)
        f[mid] = f2000 + slope * (re[mid] - RE_LAMINAR)
        re_df[mid] = slope * re[mid]
    return f, re_df


def _loss_and_gradient(flow, length, diameter, roughness_mm, eps):
    """Signed head loss (m) and d(loss)/d(flow) for vectors of pipes."""
    q_abs = np.maximum(np.abs(flow), eps)
    area = np.pi * diameter ** 2 / 4.0
    re = q_abs * diameter / (area * NU)
    f, re_df = friction_factor(re, np.maximum(roughness_mm, 0.0) / 1000.0 / diameter)
    k = length / (diameter * 2.0 * G * area ** 2)
    loss = k * f * np.abs(flow) * flow
    grad = k * q_abs * (2.0 * f + re_df)
    return loss, grad


def headloss(flow: float, pipe: Pipe, roughness: float | None = None) -> float:
    """Darcy-Weisbach head loss (m) for ``flow`` in m3/s; sign follows flow."""
    if flow == 0:
        return 0.0
    r = pipe.roughness if roughness is None else roughness
    loss, _ = _loss_and_gradient(np.array([flow], dtype=float), pipe.length, pipe.diameter,
                                 np.array([r], dtype=float), 0.0)
    return float(loss[0])


class _Topology:
    """Incidence data shared by all solves on one graph."""

    def __init__(self, graph: NetworkGraph):
        nj = len(graph.junctions)
        idx = graph.node_index
        start = np.array([idx[p.start] for p in graph.pipes], dtype=int)
        end = np.array([idx[p.end] for p in graph.pipes], dtype=int)
        self.nj = nj
        self.start, self.end = start, end
        self.length = graph.lengths
        self.diameter = graph.diameters
        # energy: hl(Q) = H[start] - H[end]; junction columns of that incidence
        rows = np.arange(graph.l)
        ej = sp.coo_matrix(
            (np.concatenate([np.ones(graph.l), -np.ones(graph.l)]),
             (np.concatenate([rows, rows]), np.concatenate([start, end]))),
            shape=(graph.l, graph.n)).tocsc()
        self.e_junc = ej[:, :nj].tocsr()
        self.e_res = ej[:, nj:].tocsr()
        self.e_junc_t = self.e_junc.T.tocsr()
        # Schur-complement assembly pattern
        sj, ej_ = start < nj, end < nj
        both = sj & ej_
        pipe_ids = np.arange(graph.l)
        self.rows = np.concatenate([start[sj], end[ej_], start[both], end[both]])
        self.cols = np.concatenate([start[sj], end[ej_], end[both], start[both]])
        self.pipe_of = np.concatenate([pipe_ids[sj], pipe_ids[ej_], pipe_ids[both], pipe_ids[both]])
        self.sign = np.concatenate([np.ones(sj.sum() + ej_.sum()), -np.ones(2 * both.sum())])
        self.dense = nj <= _DENSE_LIMIT
        self.demand_pos = graph.indices(graph.demand_nodes)
        self.unreachable = _unreachable_junctions(graph) if graph.n else []

    def assemble(self, inv_grad):
        data = self.sign * inv_grad[self.pipe_of]
        if self.dense:
            mat = np.zeros((self.nj, self.nj))
            np.add.at(mat, (self.rows, self.cols), data)
            return mat
        return sp.csc_matrix((data, (self.rows, self.cols)), shape=(self.nj, self.nj))

    def solve(self, mat, rhs):
        if self.dense:
            return np.linalg.solve(mat, rhs)
        return spsolve(mat, rhs)


def _topology(graph: NetworkGraph) -> _Topology:
    # graphs are immutable, so the topology is memoised on the instance
    topo = graph.__dict__.get("_hydraulic_topology")
    if topo is None:
        topo = graph.__dict__.setdefault("_hydraulic_topology", _Topology(graph))
    return topo


def solve_steady(graph: NetworkGraph, scenario, roughness=None,
                 config: SolverConfig | None = None) -> HydraulicState:
    """Solve S(h^R, d, r) for all nodal pressure heads and pipe flows.

    ``scenario`` needs ``reservoir_head`` (m) and ``demands`` (m3/h over
    ``graph.demand_nodes``).  Non-convergence is reported through
    ``converged=False`` rather than raised.
    """
    config = config or SolverConfig()
    roughness = graph.roughness if roughness is None else np.asarray(roughness, dtype=float)
    demands = np.asarray(scenario.demands, dtype=float)
    if roughness.shape != (graph.l,):
        raise ValueError(f"roughness has shape {roughness.shape}, expected ({graph.l},)")
    if demands.shape != (graph.q,):
        raise ValueError(f"demand vector has shape {demands.shape}, expected ({graph.q},)")
    h_res = float(scenario.reservoir_head)
    if not np.isfinite(h_res):
        raise ValueError("reservoir head must be finite")

    topo = _topology(graph)
    if topo.unreachable:
        raise SingularSystemError(f"junctions not connected to a reservoir: {topo.unreachable[:5]}")
    nj = topo.nj
    d = np.zeros(nj)
    np.add.at(d, topo.demand_pos, demands / 3600.0)
    h_fixed = np.full(graph.n - nj, h_res)
    res_term = topo.e_res @ h_fixed

    q = 0.3 * np.pi * topo.diameter ** 2 / 4.0
    heads = np.full(nj, h_res)
    residual = np.inf
    converged = False
    it = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, config.max_iterations + 1):
            loss, grad = _loss_and_gradient(q, topo.length, topo.diameter, roughness, config.flow_epsilon)
            inv = 1.0 / grad
            mat = topo.assemble(inv)
            rhs = -d - topo.e_junc_t @ (q - inv * (loss - res_term))
            try:
                heads = topo.solve(mat, rhs)
            except np.linalg.LinAlgError as exc:
                raise SingularSystemError(str(exc)) from exc
            if not np.all(np.isfinite(heads)):
                break
            q = q - inv * (loss - topo.e_junc @ heads - res_term)
            loss, _ = _loss_and_gradient(q, topo.length, topo.diameter, roughness, config.flow_epsilon)
            residual = float(np.max(np.abs(loss - topo.e_junc @ heads - res_term), initial=0.0))
            if residual <= config.head_tolerance:
                converged = True
                break

    all_heads = np.concatenate([heads, h_fixed])
    return HydraulicState(pressure_head=all_heads - graph.elevations, head=all_heads, flow=q,
                          converged=converged, iterations=it, residual=residual)


def simulate_sensors(graph: NetworkGraph, scenario, roughness=None,
                     config: SolverConfig | None = None) -> np.ndarray:
    """Pressure heads at ``graph.sensor_nodes`` in their declared order."""
    if not graph.sensor_nodes:
        raise ValueError("graph has no sensor nodes")
    state = solve_steady(graph, scenario, roughness, config)
    return state.pressure_head[graph.sensor_index]


def mass_balance_residual(graph: NetworkGraph, scenario, state: HydraulicState) -> np.ndarray:
    """Inflow minus outflow minus demand (m3/s) at every junction."""
    topo = _topology(graph)
    d = np.zeros(topo.nj)
    np.add.at(d, topo.demand_pos, np.asarray(scenario.demands, dtype=float) / 3600.0)
    net_in = np.zeros(graph.n)
    np.add.at(net_in, topo.end, state.flow)
    np.subtract.at(net_in, topo.start, state.flow)
    return net_in[:topo.nj] - d
