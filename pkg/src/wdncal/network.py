"""Hydraulic graph data model with EPANET INP subset I/O.

Also provides validation checks and a synthetic district-metered-area generator.

Units: elevations/heads/lengths in m, diameters in m (mm in INP files),
roughness in mm (Darcy-Weisbach absolute roughness), demands in m3/h.
"""

from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InfeasibleConfigError, InpSyntaxError, NetworkError, UnsupportedElementError

ROUGHNESS_BOUNDS = (0.01, 10.0)

# Reference statistics of the low-gradient study zone.
STUDY_RATIO = 13.55
STUDY_JUNCTIONS = 1071
STUDY_HOUSEHOLDS = 300


class InpWarning(UserWarning):
    """Non-fatal INP content (unknown sections, ignored columns)."""


@dataclass(frozen=True)
class Junction:
    id: str
    elevation: float
    base_demand: float = 0.0


@dataclass(frozen=True)
class Reservoir:
    id: str
    elevation_head: float


@dataclass(frozen=True)
class Pipe:
    id: str
    start: str
    end: str
    length: float
    diameter: float
    roughness: float


@dataclass(frozen=True)
class NetworkGraph:
    junctions: tuple[Junction, ...]
    reservoirs: tuple[Reservoir, ...]
    pipes: tuple[Pipe, ...]
    sensor_nodes: tuple[str, ...] = ()
    demand_nodes: tuple[str, ...] = ()
    coordinates: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    title: str = ""

    def __post_init__(self):
        for name in ("junctions", "reservoirs", "pipes", "sensor_nodes", "demand_nodes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "coordinates", dict(self.coordinates))

    # sizes -----------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.junctions) + len(self.reservoirs)

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.pipes)

    @property
    def m(self) -> int:
        return len(self.sensor_nodes)

    @property
    def q(self) -> int:
        return len(self.demand_nodes)

    # lookups ---------------------------------------------------------------
    @cached_property
    def node_ids(self) -> tuple[str, ...]:
        """All node ids: junctions first, then reservoirs."""
        return tuple(j.id for j in self.junctions) + tuple(r.id for r in self.reservoirs)

    @cached_property
    def junction_ids(self) -> tuple[str, ...]:
        return tuple(j.id for j in self.junctions)

    @cached_property
    def pipe_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.pipes)

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {nid: i for i, nid in enumerate(self.node_ids)}

    @property
    def reservoir(self) -> Reservoir:
        if len(self.reservoirs) != 1:
            raise NetworkError(f"expected exactly one reservoir, found {len(self.reservoirs)}")
        return self.reservoirs[0]

    @cached_property
    def elevations(self) -> np.ndarray:
        """Elevation per node in `node_ids` order (reservoirs use e^R)."""
        return np.array([j.elevation for j in self.junctions]
                        + [r.elevation_head for r in self.reservoirs], dtype=float)

    @cached_property
    def base_demands(self) -> np.ndarray:
        """Base demand (m3/h) per demand node, in `demand_nodes` order."""
        by_id = {j.id: j.base_demand for j in self.junctions}
        return np.array([by_id[nid] for nid in self.demand_nodes], dtype=float)

    @cached_property
    def roughness(self) -> np.ndarray:
        return np.array([p.roughness for p in self.pipes], dtype=float)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([p.length for p in self.pipes], dtype=float)

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.array([p.diameter for p in self.pipes], dtype=float)

    @cached_property
    def sensor_index(self) -> np.ndarray:
        return np.array([self.node_index[s] for s in self.sensor_nodes], dtype=int)

    def indices(self, node_ids: Iterable[str]) -> np.ndarray:
        return np.array([self.node_index[s] for s in node_ids], dtype=int)

    def with_roughness(self, roughness) -> "NetworkGraph":
        roughness = np.asarray(roughness, dtype=float)
        if roughness.shape != (self.l,):
            raise ValueError(f"roughness must have length {self.l}")
        pipes = tuple(Pipe(p.id, p.start, p.end, p.length, p.diameter, float(r))
                      for p, r in zip(self.pipes, roughness))
        return self.replace(pipes=pipes)

    def replace(self, **changes) -> "NetworkGraph":
        fields = dict(junctions=self.junctions, reservoirs=self.reservoirs, pipes=self.pipes,
                      sensor_nodes=self.sensor_nodes, demand_nodes=self.demand_nodes,
                      coordinates=self.coordinates, title=self.title)
        fields.update(changes)
        return NetworkGraph(**fields)

    def __repr__(self) -> str:
        return (f"NetworkGraph(n={self.n}, l={self.l}, m={self.m}, q={self.q}"
                f"{', title=' + repr(self.title) if self.title else ''})")


def diameter_demand_ratio(graph: NetworkGraph) -> float:
    """Sum of pipe diameters (m) over total base demand (m3/h)."""
    total = sum(j.base_demand for j in graph.junctions)
    if total <= 0:
        raise ValueError("network has no demand")
    return float(graph.diameters.sum() / total)


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Diagnostic:
    code: str
    element: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.element}: {self.message}"


def validate(graph: NetworkGraph, bounds: tuple[float, float] = ROUGHNESS_BOUNDS) -> list[Diagnostic]:
    """Check every graph invariant; an empty list means the graph is valid."""
    diags: list[Diagnostic] = []
    seen: set[str] = set()
    for nid in graph.node_ids:
        if nid in seen:
            diags.append(Diagnostic("duplicate-id", nid, "node id is not unique"))
        seen.add(nid)
    pipe_seen: set[str] = set()
    for p in graph.pipes:
        if p.id in pipe_seen:
            diags.append(Diagnostic("duplicate-id", p.id, "pipe id is not unique"))
        pipe_seen.add(p.id)

    if len(graph.reservoirs) != 1:
        diags.append(Diagnostic("reservoir-count", ",".join(r.id for r in graph.reservoirs) or "-",
                                f"exactly one reservoir required, found {len(graph.reservoirs)}"))

    for j in graph.junctions:
        if not math.isfinite(j.elevation):
            diags.append(Diagnostic("elevation", j.id, "elevation is not finite"))
        if not (j.base_demand >= 0):
            diags.append(Diagnostic("demand", j.id, f"negative base demand {j.base_demand}"))

    lo, hi = bounds
    dangling = False
    for p in graph.pipes:
        for end in (p.start, p.end):
            if end not in seen:
                dangling = True
                diags.append(Diagnostic("dangling-endpoint", p.id, f"endpoint {end!r} does not exist"))
        if not p.length > 0:
            diags.append(Diagnostic("length", p.id, f"length must be > 0, got {p.length}"))
        if not p.diameter > 0:
            diags.append(Diagnostic("diameter", p.id, f"diameter must be > 0, got {p.diameter}"))
        if not lo <= p.roughness <= hi:
            diags.append(Diagnostic("roughness-bounds", p.id,
                                    f"roughness {p.roughness} outside bounds ({lo}, {hi})"))

    junction_set = set(graph.junction_ids)
    for label, subset in (("sensor", graph.sensor_nodes), ("demand", graph.demand_nodes)):
        if len(set(subset)) != len(subset):
            diags.append(Diagnostic(f"{label}-duplicate", label, f"{label} subset contains duplicates"))
        for nid in subset:
            if nid not in junction_set:
                diags.append(Diagnostic(f"{label}-membership", nid, f"{label} node is not a junction"))

    if not dangling and graph.n > 0:
        for nid in _unreachable_junctions(graph):
            diags.append(Diagnostic("connectivity", nid, "junction is not reachable from a reservoir"))
    return diags


def _unreachable_junctions(graph: NetworkGraph) -> list[str]:
    idx = graph.node_index
    rows = [idx[p.start] for p in graph.pipes]
    cols = [idx[p.end] for p in graph.pipes]
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(graph.n, graph.n))
    _, labels = connected_components(adj, directed=False)
    source_labels = {labels[idx[r.id]] for r in graph.reservoirs}
    return [j.id for j in graph.junctions if labels[idx[j.id]] not in source_labels]


def _check_structure(graph: NetworkGraph) -> None:
    seen: set[str] = set()
    for nid in graph.node_ids:
        if nid in seen:
            raise NetworkError(f"duplicate node id {nid!r}")
        seen.add(nid)
    pipe_seen: set[str] = set()
    for p in graph.pipes:
        if p.id in pipe_seen:
            raise NetworkError(f"duplicate pipe id {p.id!r}")
        pipe_seen.add(p.id)
        for end in (p.start, p.end):
            if end not in seen:
                raise NetworkError(f"pipe {p.id!r} references missing node {end!r}")


# ---------------------------------------------------------------------------
# INP subset

_SUPPORTED = {"[TITLE]", "[JUNCTIONS]", "[RESERVOIRS]", "[PIPES]", "[DEMANDS]",
              "[COORDINATES]", "[TAGS]", "[OPTIONS]", "[END]"}
_REJECTED = {"[PUMPS]", "[VALVES]", "[TANKS]"}


def _num(token: str, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise InpSyntaxError(f"{what}: {token!r} is not a number", lineno) from None
    if not math.isfinite(value):
        raise InpSyntaxError(f"{what}: {token!r} is not finite", lineno)
    return value


def _mm_to_m(token: str, lineno: int) -> float:
    _num(token, lineno, "diameter")
    with localcontext() as ctx:
        ctx.prec = 60
        return float(Decimal(token) / 1000)


def _m_to_mm(value: float) -> str:
    # shortest decimal string that parses back to the identical float
    for digits in range(1, 18):
        text = f"{value * 1000:.{digits}g}"
        if float(Decimal(text) / 1000) == value:
            return text
    with localcontext() as ctx:
        ctx.prec = 800
        return str(Decimal(value) * 1000)


def parse_inp(text: str | io.TextIOBase) -> NetworkGraph:
    """Parse the supported EPANET INP subset into a NetworkGraph.

    Sensor and demand subsets are read from ``[TAGS]`` lines of the form
    ``NODE <id> SENSOR`` / ``NODE <id> DEMAND``; without DEMAND tags the
    demand subset defaults to junctions with nonzero demand.
    """
    if not isinstance(text, str):
        text = text.read()
    section = None
    title_lines: list[str] = []
    junctions: dict[str, list] = {}
    reservoirs: dict[str, Reservoir] = {}
    pipes: dict[str, Pipe] = {}
    demand_overrides: dict[str, float] = {}
    coords: dict[str, tuple[float, float]] = {}
    sensors: list[str] = []
    demand_tags: list[str] = []
    warned: set[str] = set()

    def dup(kind, nid, lineno):
        raise NetworkError(f"line {lineno}: duplicate {kind} id {nid!r}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise InpSyntaxError(f"malformed section header {line!r}", lineno)
            section = line.upper()
            if section == "[END]":
                break
            if section not in _SUPPORTED and section not in _REJECTED and section not in warned:
                warnings.warn(f"skipping unknown section {section} (line {lineno})", InpWarning, stacklevel=2)
                warned.add(section)
            continue
        if section is None:
            raise InpSyntaxError("data outside of any section", lineno)
        if section in _REJECTED:
            raise UnsupportedElementError(section, lineno)
        tok = line.split()
        if section == "[TITLE]":
            title_lines.append(raw.strip())
        elif section == "[JUNCTIONS]":
            if len(tok) < 2:
                raise InpSyntaxError("junction needs id and elevation", lineno)
            nid = tok[0]
            if nid in junctions or nid in reservoirs:
                dup("node", nid, lineno)
            elev = _num(tok[1], lineno, "elevation")
            demand = _num(tok[2], lineno, "demand") if len(tok) > 2 else 0.0
            junctions[nid] = [elev, demand]
        elif section == "[RESERVOIRS]":
            if len(tok) < 2:
                raise InpSyntaxError("reservoir needs id and head", lineno)
            nid = tok[0]
            if nid in junctions or nid in reservoirs:
                dup("node", nid, lineno)
            if len(tok) > 2:
                raise UnsupportedElementError("[RESERVOIRS] head pattern", lineno)
            reservoirs[nid] = Reservoir(nid, _num(tok[1], lineno, "head"))
        elif section == "[PIPES]":
            if len(tok) < 6:
                raise InpSyntaxError("pipe needs id, node1, node2, length, diameter, roughness", lineno)
            pid = tok[0]
            if pid in pipes:
                dup("pipe", pid, lineno)
            if len(tok) > 6 and _num(tok[6], lineno, "minor loss") != 0.0:
                warnings.warn(f"line {lineno}: minor loss ignored for pipe {pid}", InpWarning, stacklevel=2)
            if len(tok) > 7 and tok[7].upper() != "OPEN":
                raise UnsupportedElementError(f"[PIPES] status {tok[7].upper()}", lineno)
            pipes[pid] = Pipe(pid, tok[1], tok[2], _num(tok[3], lineno, "length"),
                              _mm_to_m(tok[4], lineno), _num(tok[5], lineno, "roughness"))
        elif section == "[DEMANDS]":
            if len(tok) < 2:
                raise InpSyntaxError("demand needs junction id and value", lineno)
            demand_overrides[tok[0]] = demand_overrides.get(tok[0], 0.0) + _num(tok[1], lineno, "demand")
        elif section == "[COORDINATES]":
            if len(tok) < 3:
                raise InpSyntaxError("coordinate needs id, x, y", lineno)
            coords[tok[0]] = (_num(tok[1], lineno, "x"), _num(tok[2], lineno, "y"))
        elif section == "[TAGS]":
            if len(tok) < 3:
                raise InpSyntaxError("tag needs object type, id, tag", lineno)
            if tok[0].upper() == "NODE" and tok[2].upper() == "SENSOR":
                sensors.append(tok[1])
            elif tok[0].upper() == "NODE" and tok[2].upper() == "DEMAND":
                demand_tags.append(tok[1])
        elif section == "[OPTIONS]":
            key = tok[0].upper()
            value = " ".join(tok[1:]).upper()
            if key == "UNITS" and value != "CMH":
                raise UnsupportedElementError(f"[OPTIONS] UNITS {value}", lineno)
            if key == "HEADLOSS" and value != "D-W":
                raise UnsupportedElementError(f"[OPTIONS] HEADLOSS {value}", lineno)

    for nid, value in demand_overrides.items():
        if nid not in junctions:
            raise NetworkError(f"[DEMANDS] references missing junction {nid!r}")
        junctions[nid][1] = value
    junction_objs = tuple(Junction(nid, e, d) for nid, (e, d) in junctions.items())
    if demand_tags:
        demand_nodes = tuple(demand_tags)
    else:
        demand_nodes = tuple(j.id for j in junction_objs if j.base_demand > 0)
    graph = NetworkGraph(junction_objs, tuple(reservoirs.values()), tuple(pipes.values()),
                         tuple(sensors), demand_nodes, coords, "\n".join(title_lines))
    _check_structure(graph)
    return graph


def serialize_inp(graph: NetworkGraph) -> str:
    out = io.StringIO()
    w = out.write
    w("[TITLE]\n")
    if graph.title:
        w(graph.title + "\n")
    w("\n[JUNCTIONS]\n;ID  Elevation  Demand\n")
    for j in graph.junctions:
        w(f" {j.id}  {j.elevation!r}  {j.base_demand!r}\n")
    w("\n[RESERVOIRS]\n;ID  Head\n")
    for r in graph.reservoirs:
        w(f" {r.id}  {r.elevation_head!r}\n")
    w("\n[PIPES]\n;ID  Node1  Node2  Length  Diameter  Roughness  MinorLoss  Status\n")
    for p in graph.pipes:
        w(f" {p.id}  {p.start}  {p.end}  {p.length!r}  {_m_to_mm(p.diameter)}  {p.roughness!r}  0  Open\n")
    if graph.coordinates:
        w("\n[COORDINATES]\n;Node  X  Y\n")
        for nid, (x, y) in graph.coordinates.items():
            w(f" {nid}  {x!r}  {y!r}\n")
    w("\n[TAGS]\n")
    for nid in graph.sensor_nodes:
        w(f" NODE  {nid}  SENSOR\n")
    for nid in graph.demand_nodes:
        w(f" NODE  {nid}  DEMAND\n")
    w("\n[OPTIONS]\n Units  CMH\n Headloss  D-W\n\n[END]\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# native document

def to_document(graph: NetworkGraph) -> dict:
    return {
        "format": "wdncal-network",
        "version": 1,
        "title": graph.title,
        "junctions": [{"id": j.id, "elevation": j.elevation, "base_demand": j.base_demand}
                      for j in graph.junctions],
        "reservoirs": [{"id": r.id, "elevation_head": r.elevation_head} for r in graph.reservoirs],
        "pipes": [{"id": p.id, "start": p.start, "end": p.end, "length": p.length,
                   "diameter": p.diameter, "roughness": p.roughness} for p in graph.pipes],
        "sensor_nodes": list(graph.sensor_nodes),
        "demand_nodes": list(graph.demand_nodes),
        "coordinates": {nid: list(xy) for nid, xy in graph.coordinates.items()},
    }


def from_document(doc: Mapping) -> NetworkGraph:
    if doc.get("format") != "wdncal-network":
        raise NetworkError("not a wdncal network document")
    graph = NetworkGraph(
        tuple(Junction(d["id"], float(d["elevation"]), float(d["base_demand"])) for d in doc["junctions"]),
        tuple(Reservoir(d["id"], float(d["elevation_head"])) for d in doc["reservoirs"]),
        tuple(Pipe(d["id"], d["start"], d["end"], float(d["length"]), float(d["diameter"]),
                   float(d["roughness"])) for d in doc["pipes"]),
        tuple(doc.get("sensor_nodes", ())),
        tuple(doc.get("demand_nodes", ())),
        {k: (float(v[0]), float(v[1])) for k, v in doc.get("coordinates", {}).items()},
        doc.get("title", ""),
    )
    _check_structure(graph)
    return graph


def dumps(graph: NetworkGraph) -> str:
    return json.dumps(to_document(graph), indent=2) + "\n"


def loads(text: str) -> NetworkGraph:
    return from_document(json.loads(text))


def load(path) -> NetworkGraph:
    """Load a network from an INP file or a native JSON document."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return loads(text)
    return parse_inp(text)


# ---------------------------------------------------------------------------
# synthetic DMA

@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    When ``peak_inflow`` is None the demand level is derived from the
    nominal pipe sizes so that the target ratio is met exactly; when it is
    given, diameters are scaled instead and must stay within
    ``diameter_limits``.  ``active_households`` defaults to the study-area
    household density.
    """

    junction_count: int = 50
    target_diameter_demand_ratio: float = STUDY_RATIO
    peak_inflow: float | None = None
    active_households: int | None = None
    seed: int = 0
    sensor_count: int = 11
    reservoir_elevation_head: float = 300.0
    initial_roughness: float = 1.0
    diameter_limits: tuple[float, float] = (0.02, 1.5)

    def __post_init__(self):
        if self.junction_count < 3:
            raise InfeasibleConfigError("junction_count must be >= 3")
        if not self.target_diameter_demand_ratio > 0:
            raise InfeasibleConfigError("target_diameter_demand_ratio must be > 0")
        if self.peak_inflow is not None and not self.peak_inflow > 0:
            raise InfeasibleConfigError("peak_inflow must be > 0")
        if self.active_households is not None and self.active_households <= 0:
            raise InfeasibleConfigError("active_households must be > 0")
        if self.sensor_count < 0:
            raise InfeasibleConfigError("sensor_count must be >= 0")

    @property
    def households(self) -> int:
        if self.active_households is not None:
            return self.active_households
        return max(1, round(STUDY_HOUSEHOLDS * self.junction_count / STUDY_JUNCTIONS))


_NOMINAL_DIAMETER = {"trunk": 0.25, "grid": 0.15, "branch": 0.10}


def synth_dma(config: SynthConfig) -> NetworkGraph:
    """Generate a single-reservoir looped-grid DMA with tree branches.

    Layout: reservoir -> inflow trunk -> looped grid -> branches growing
    away from the reservoir.  Deterministic for a fixed config.
    """
    rng = np.random.default_rng(config.seed)
    n = config.junction_count
    n_trunk = max(1, round(0.08 * n))
    rest = n - n_trunk
    n_grid = max(2, round(0.55 * rest)) if rest >= 2 else rest
    n_branch = rest - n_grid

    coords: dict[str, tuple[float, float]] = {"R1": (0.0, 0.0)}
    edges: list[tuple[str, str, str]] = []  # (start, end, kind)
    jid = iter(f"J{i}" for i in range(1, n + 1))
    trunk_ids, grid_ids, branch_ids = [], [], []

    x = 0.0
    prev = "R1"
    for _ in range(n_trunk):
        x += rng.uniform(120.0, 180.0)
        nid = next(jid)
        coords[nid] = (x, rng.uniform(-10.0, 10.0))
        edges.append((prev, nid, "trunk"))
        trunk_ids.append(nid)
        prev = nid

    if n_grid:
        cols = math.ceil(math.sqrt(n_grid))
        rows = math.ceil(n_grid / cols)
        spacing = 100.0
        x0 = x + rng.uniform(80.0, 120.0)
        cell: dict[tuple[int, int], str] = {}
        for k in range(n_grid):
            r, c = divmod(k, cols)
            nid = next(jid)
            cell[r, c] = nid
            coords[nid] = (x0 + c * spacing + rng.uniform(-15, 15),
                           (r - (rows - 1) / 2) * spacing + rng.uniform(-15, 15))
            grid_ids.append(nid)
            if c > 0:
                edges.append((cell[r, c - 1], nid, "grid"))
            if r > 0 and (r - 1, c) in cell:
                edges.append((cell[r - 1, c], nid, "grid"))
        entry = cell.get(((rows - 1) // 2, 0), grid_ids[0])
        edges.append((prev, entry, "trunk"))

    attach_pool = list(grid_ids) or list(trunk_ids)
    for _ in range(n_branch):
        parent = attach_pool[int(rng.integers(len(attach_pool)))]
        px, py = coords[parent]
        outward = math.atan2(py, px)
        angle = outward + rng.uniform(-1.0, 1.0)
        length = rng.uniform(60.0, 150.0)
        nid = next(jid)
        coords[nid] = (px + length * math.cos(angle), py + length * math.sin(angle))
        edges.append((parent, nid, "branch"))
        branch_ids.append(nid)
        attach_pool.append(nid)

    nominal = np.array([_NOMINAL_DIAMETER[kind] for _, _, kind in edges])
    if config.peak_inflow is None:
        diameters = nominal
        peak = float(nominal.sum() / config.target_diameter_demand_ratio)
    else:
        peak = float(config.peak_inflow)
        diameters = nominal * (config.target_diameter_demand_ratio * peak / nominal.sum())
        lo, hi = config.diameter_limits
        if diameters.min() < lo or diameters.max() > hi:
            raise InfeasibleConfigError(
                f"ratio {config.target_diameter_demand_ratio} with peak inflow {peak} m3/h needs "
                f"diameters in [{diameters.min():.4g}, {diameters.max():.4g}] m, outside {config.diameter_limits}")

    # households on non-trunk junctions; demand proportional to household count
    consumers = grid_ids + branch_ids or trunk_ids
    counts = rng.multinomial(config.households, np.full(len(consumers), 1.0 / len(consumers)))
    share = dict(zip(consumers, counts / counts.sum()))

    r_x, r_y = coords["R1"]
    junctions = []
    for nid in trunk_ids + grid_ids + branch_ids:
        cx, cy = coords[nid]
        dist = math.hypot(cx - r_x, cy - r_y)
        elevation = (252.0 - 20.0 * (1.0 - math.exp(-dist / 1500.0))
                     + 4.0 * math.sin(cx / 230.0) * math.cos(cy / 170.0) + rng.normal(0, 0.8))
        junctions.append(Junction(nid, round(elevation, 2), peak * float(share.get(nid, 0.0))))
    coords = {k: (round(v[0], 2), round(v[1], 2)) for k, v in coords.items()}

    pipes = []
    for k, ((a, b, _), diameter) in enumerate(zip(edges, diameters), start=1):
        (ax, ay), (bx, by) = coords[a], coords[b]
        pipes.append(Pipe(f"P{k}", a, b, round(max(math.hypot(ax - bx, ay - by), 1.0), 2),
                          float(diameter), config.initial_roughness))

    graph = NetworkGraph(tuple(junctions), (Reservoir("R1", config.reservoir_elevation_head),),
                         tuple(pipes), (), tuple(j.id for j in junctions), coords,
                         f"synthetic DMA seed={config.seed}")
    candidates = grid_ids + branch_ids or trunk_ids
    sensors = _spread_sensors(graph, candidates, min(config.sensor_count, len(candidates)))
    return graph.replace(sensor_nodes=sensors)


def _spread_sensors(graph: NetworkGraph, candidates: list[str], count: int) -> tuple[str, ...]:
    """Farthest-point selection, seeded at the candidate farthest from the origin."""
    if count == 0:
        return ()
    xy = np.array([graph.coordinates[c] for c in candidates])
    dist = np.hypot(xy[:, 0], xy[:, 1])
    chosen = [int(np.argmax(dist))]
    mind = np.hypot(*(xy - xy[chosen[0]]).T)
    while len(chosen) < count:
        k = int(np.argmax(mind))
        chosen.append(k)
        mind = np.minimum(mind, np.hypot(*(xy - xy[k]).T))
    return tuple(candidates[k] for k in sorted(chosen))


def path_distances(graph: NetworkGraph) -> dict[str, float]:
    """Shortest pipe-length distance from the reservoir to every node."""
    from scipy.sparse.csgraph import dijkstra

    idx = graph.node_index
    rows = [idx[p.start] for p in graph.pipes]
    cols = [idx[p.end] for p in graph.pipes]
    adj = coo_matrix((graph.lengths, (rows, cols)), shape=(graph.n, graph.n)).tocsr()
    dist = dijkstra(adj, directed=False, indices=idx[graph.reservoir.id])
    return {nid: float(dist[i]) for nid, i in idx.items()}
