"""Synthetic calibration bundles with a hidden ground-truth roughness.

A bundle holds a synthetic DMA, four daily-usage and four hydrant-trial
scenarios, and sensor pressures simulated under the hidden roughness
(optionally with Gaussian noise).  The graph itself carries the uniform
initial roughness r0 that calibration starts from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataprep import DAILY, HYDRANT, ReferencePressures, Scenario, TrialMeta
from .hydraulics import solve_steady
from .network import ROUGHNESS_BOUNDS, Junction, NetworkGraph, Pipe, Reservoir, SynthConfig, path_distances, synth_dma
from .util import derive_seed

TRIAL_FLOW_RANGE = (9.615, 10.56)   # m3/h
TRIAL_DURATION = 240.0              # s
STUDY_HEAD = 305.6                  # m


@dataclass(frozen=True)
class BundleConfig:
    network: SynthConfig = SynthConfig()
    initial_roughness: float = 5.0
    # log-normal hidden roughness: median (mm) and log-space spread
    truth_median: float = 1.5
    truth_sigma: float = 0.7
    # fraction of peak demand for the four daily hours
    daily_scalings: tuple[float, ...] = (0.55, 0.8, 1.0, 0.7)
    daily_hours: tuple[int, ...] = (7, 12, 18, 21)
    # night demand level during hydrant trials (minimum night flow)
    night_scaling: float = 0.2
    trial_hours: tuple[int, ...] = (1, 2, 3, 4)
    trial_flow_range: tuple[float, float] = TRIAL_FLOW_RANGE
    reservoir_head: float = STUDY_HEAD
    head_jitter: float = 0.2
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if len(self.daily_scalings) != len(self.daily_hours):
            raise ValueError("one hour per daily scaling required")
        if len(self.trial_hours) != 4:
            raise ValueError("four trial hours required (two far, two close trials)")


@dataclass(eq=False)
class Bundle:
    graph: NetworkGraph
    scenarios: list[Scenario]
    references: list[ReferencePressures]
    truth: np.ndarray
    trials: list[TrialMeta] = field(default_factory=list)

    @property
    def r0(self) -> np.ndarray:
        return self.graph.roughness

    def pool(self, label: str) -> tuple[list[Scenario], list[ReferencePressures]]:
        pairs = [(s, r) for s, r in zip(self.scenarios, self.references) if s.label == label]
        return [p[0] for p in pairs], [p[1] for p in pairs]


def hidden_roughness(graph: NetworkGraph, median: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    lo, hi = ROUGHNESS_BOUNDS
    return np.clip(np.exp(rng.normal(np.log(median), sigma, size=graph.l)), lo * 5, hi * 0.95)


def pick_trial_nodes(graph: NetworkGraph) -> tuple[list[str], list[str]]:
    """Two far hydrants (largest pipe distance from the inflow) and two close ones."""
    dist = path_distances(graph)
    order = sorted((j.id for j in graph.junctions), key=lambda j: (-dist[j], j))
    q = len(order)
    # close trials sit about a quarter of the way into the distance ranking
    return order[:2], [order[int(0.75 * q)], order[int(0.7 * q)]]


def make_bundle(config: BundleConfig | None = None) -> Bundle:
    config = config or BundleConfig()
    base = synth_dma(config.network)
    graph = base.with_roughness(np.full(base.l, config.initial_roughness))
    truth = hidden_roughness(graph, config.truth_median, config.truth_sigma,
                             np.random.default_rng(derive_seed(config.seed, "truth")))
    rng = np.random.default_rng(derive_seed(config.seed, "scenarios"))
    noise_rng = np.random.default_rng(derive_seed(config.seed, "noise"))
    peak = graph.base_demands

    def head():
        return config.reservoir_head + rng.uniform(-config.head_jitter, config.head_jitter)

    scenarios: list[Scenario] = []
    for i, (scale, hour) in enumerate(zip(config.daily_scalings, config.daily_hours)):
        scenarios.append(Scenario(f"D{i}", head(), peak * scale, DAILY, hour * 3600.0))
    far, close = pick_trial_nodes(graph)
    trials = []
    for i, (node, cls) in enumerate(zip(far + close, ["far", "far", "close", "close"])):
        flow = float(rng.uniform(*config.trial_flow_range))
        start = config.trial_hours[i] * 3600.0 + 600.0
        trials.append(TrialMeta(f"H{i}", flow, TRIAL_DURATION, node, cls, start))
        d = peak * config.night_scaling
        d[graph.demand_nodes.index(node)] += flow
        scenarios.append(Scenario(f"H{i}", head(), d, HYDRANT, start, node, flow, cls))

    references = []
    for sc in scenarios:
        state = solve_steady(graph, sc, truth)
        if not state.converged:
            raise RuntimeError(f"ground-truth solve for {sc.id} did not converge")
        p = state.pressure_head[graph.sensor_index]
        if config.noise > 0:
            p = p + noise_rng.normal(0.0, config.noise, size=p.size)
        references.append(ReferencePressures(sc.id, p, graph.sensor_nodes))
    return Bundle(graph, scenarios, references, truth, trials)


def tree_network(pipe_count: int = 30, seed: int = 0, sensor_count: int = 11,
                 roughness: float = 5.0) -> NetworkGraph:
    """Random tree fed by one reservoir; every junction carries demand."""
    rng = np.random.default_rng(seed)
    coords = {"R1": (0.0, 0.0)}
    junctions, pipes = [], []
    parents = ["R1"]
    for k in range(1, pipe_count + 1):
        # bias attachment toward recent nodes so the tree has some depth
        parent = parents[max(0, len(parents) - 1 - int(rng.integers(min(len(parents), 4))))]
        px, py = coords[parent]
        length = float(rng.uniform(80.0, 200.0))
        angle = float(rng.uniform(-1.2, 1.2))
        nid = f"J{k}"
        coords[nid] = (round(px + length * np.cos(angle), 2), round(py + length * np.sin(angle), 2))
        depth = np.hypot(*coords[nid])
        junctions.append(Junction(nid, round(250.0 - 0.004 * depth + rng.normal(0, 0.5), 2),
                                  round(float(rng.uniform(0.05, 0.4)), 4)))
        diameter = 0.15 if parent == "R1" else float(rng.choice([0.08, 0.1, 0.125]))
        pipes.append(Pipe(f"P{k}", parent, nid, round(length, 2), diameter, roughness))
        parents.append(nid)
    graph = NetworkGraph(tuple(junctions), (Reservoir("R1", 300.0),), tuple(pipes), (),
                         tuple(j.id for j in junctions), coords, f"tree seed={seed}")
    # leaves first: their pressures see the whole path
    children = {p.start for p in pipes}
    leaves = [j.id for j in junctions if j.id not in children]
    inner = [j.id for j in junctions if j.id in children]
    chosen = (leaves + inner[::-1])[:min(sensor_count, len(junctions))]
    order = {j.id: i for i, j in enumerate(junctions)}
    return graph.replace(sensor_nodes=tuple(sorted(chosen, key=order.__getitem__)))
