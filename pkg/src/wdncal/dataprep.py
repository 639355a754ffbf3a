"""Turn 1 s sensor traces and hourly consumption into calibration scenarios.

A hydrant trial is reduced to one steady snapshot: the pressure-stabilised
part of the trial is located per sensor and its mean is held constant over
the containing hour.  The measured trial discharge is added as demand at
the hydrant junction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NoStableWindowError, PreprocessError
from .network import NetworkGraph

HYDRANT = "hydrant-trial"
DAILY = "daily-usage"
FLOW_TRACE = "flow"


@dataclass(frozen=True, eq=False)
class TimeSeries:
    sensor_id: str
    timestamps: np.ndarray
    values: np.ndarray
    nominal_step: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("timestamps and values must be 1-D and equally long")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError(f"timestamps of {self.sensor_id!r} are not strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"values of {self.sensor_id!r} contain non-finite entries")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.timestamps.size

    @property
    def gaps(self) -> list[tuple[float, float]]:
        """(before, after) timestamp pairs spaced wider than 1.5 nominal steps."""
        dt = np.diff(self.timestamps)
        where = np.flatnonzero(dt > 1.5 * self.nominal_step)
        return [(float(self.timestamps[i]), float(self.timestamps[i + 1])) for i in where]


@dataclass(frozen=True)
class TrialMeta:
    trial_id: str
    flow: float
    duration: float
    node: str
    classification: str
    start: float | None = None

    def __post_init__(self):
        if not self.flow > 0:
            raise ValueError("trial flow must be > 0")
        if not self.duration > 0:
            raise ValueError("trial duration must be > 0")
        if self.classification not in ("far", "close"):
            raise ValueError("classification must be 'far' or 'close'")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Boundary conditions of one snapshot: reservoir head and demands over Q (m3/h)."""

    id: str
    reservoir_head: float
    demands: np.ndarray
    label: str = DAILY
    timestamp: float = 0.0
    trial_node: str | None = None
    trial_flow: float = 0.0
    trial_class: str | None = None

    def __post_init__(self):
        d = np.asarray(self.demands, dtype=float)
        if np.any(d < 0):
            raise ValueError(f"scenario {self.id!r} has negative demands")
        if not math.isfinite(self.reservoir_head):
            raise ValueError("reservoir head must be finite")
        if self.label not in (HYDRANT, DAILY):
            raise ValueError(f"unknown scenario label {self.label!r}")
        object.__setattr__(self, "demands", d)

    @property
    def total_demand(self) -> float:
        return float(self.demands.sum())

    def to_document(self) -> dict:
        return {"format": "wdncal-scenario", "id": self.id, "label": self.label,
                "timestamp": self.timestamp, "reservoir_head": self.reservoir_head,
                "demands": self.demands.tolist(), "trial_node": self.trial_node,
                "trial_flow": self.trial_flow, "trial_class": self.trial_class}

    @classmethod
    def from_document(cls, doc: Mapping) -> "Scenario":
        return cls(doc["id"], float(doc["reservoir_head"]), np.array(doc["demands"], dtype=float),
                   doc["label"], float(doc.get("timestamp", 0.0)), doc.get("trial_node"),
                   float(doc.get("trial_flow", 0.0)), doc.get("trial_class"))


@dataclass(frozen=True, eq=False)
class ReferencePressures:
    """Measured pressure heads (m) over the sensor subset M."""

    scenario_id: str
    values: np.ndarray
    sensor_nodes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("reference pressures must be finite")
        if self.sensor_nodes and len(self.sensor_nodes) != v.size:
            raise ValueError("one value per sensor node required")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sensor_nodes", tuple(self.sensor_nodes))

    def to_document(self) -> dict:
        return {"format": "wdncal-reference", "scenario_id": self.scenario_id,
                "sensor_nodes": list(self.sensor_nodes), "values": self.values.tolist()}

    @classmethod
    def from_document(cls, doc: Mapping) -> "ReferencePressures":
        return cls(doc["scenario_id"], np.array(doc["values"], dtype=float),
                   tuple(doc.get("sensor_nodes", ())))


@dataclass(frozen=True)
class StabilityParams:
    window_seconds: float = 10.0
    sigma_max: float = 0.02
    min_length: float = 60.0


def detect_stable_window(pressure: TimeSeries, meta: TrialMeta,
                         params: StabilityParams | None = None) -> tuple[float, float]:
    """Longest run inside the trial where the trailing rolling std stays below threshold.

    A sample at time t is stable when the samples in [t - w, t] (all inside
    the trial interval) have standard deviation <= ``sigma_max``.
    """
    params = params or StabilityParams()
    start = pressure.timestamps[0] if meta.start is None else meta.start
    end = start + meta.duration
    inside = (pressure.timestamps >= start) & (pressure.timestamps <= end)
    t = pressure.timestamps[inside]
    v = pressure.values[inside]
    if t.size < 30:
        raise PreprocessError(f"{pressure.sensor_id}: trial interval holds {t.size} samples, need >= 30")

    w = params.window_seconds
    lo = np.searchsorted(t, t - w, side="left")
    stable = np.zeros(t.size, dtype=bool)
    for i in range(t.size):
        if t[i] - w < start or i - lo[i] < 1:
            continue
        stable[i] = np.std(v[lo[i]:i + 1], ddof=1) <= params.sigma_max

    # runs of consecutive stable samples, broken by sampling gaps
    breaks = np.diff(t) > 1.5 * pressure.nominal_step
    best, best_len = None, -1.0
    i = 0
    while i < t.size:
        if not stable[i]:
            i += 1
            continue
        j = i
        while j + 1 < t.size and stable[j + 1] and not breaks[j]:
            j += 1
        if t[j] - t[i] > best_len:
            best, best_len = (float(t[i]), float(t[j])), t[j] - t[i]
        i = j + 1
    if best is None or best_len < params.min_length:
        raise NoStableWindowError(
            f"{pressure.sensor_id}: no stable window of >= {params.min_length} s in trial {meta.trial_id}")
    return best


def average_window(series: TimeSeries, window: tuple[float, float]) -> float:
    t0, t1 = window
    mask = (series.timestamps >= t0) & (series.timestamps <= t1)
    if not mask.any():
        raise PreprocessError(f"{series.sensor_id}: no samples in window [{t0}, {t1}]")
    return float(np.mean(series.values[mask]))


def reservoir_head(p_r: float, e_r: float) -> float:
    """Hydraulic head of the reservoir from its pressure head and elevation."""
    if not (math.isfinite(p_r) and math.isfinite(e_r)):
        raise ValueError("reservoir pressure and elevation must be finite")
    return p_r + e_r


def _hour_window(t: float) -> tuple[int, tuple[float, float]]:
    hour = int(t // 3600)
    return hour, (hour * 3600.0, float(np.nextafter(hour * 3600.0 + 3600.0, -np.inf)))


def build_scenario(graph: NetworkGraph, sensor_traces: Iterable[TimeSeries] | Mapping[str, TimeSeries],
                   reservoir_trace: TimeSeries, hourly_demands: Mapping[int, Sequence[float]],
                   meta: TrialMeta | None = None, flow_trace: TimeSeries | None = None,
                   params: StabilityParams | None = None,
                   scenario_id: str | None = None) -> tuple[Scenario, ReferencePressures]:
    """Reduce traces for one hour (optionally containing a hydrant trial) to a snapshot.

    ``hourly_demands`` maps an hour index (epoch seconds // 3600) to metered
    demands over ``graph.demand_nodes``.  Without ``flow_trace`` the trial's
    nominal flow is used as the discharge.
    """
    traces = dict(sensor_traces) if isinstance(sensor_traces, Mapping) else {s.sensor_id: s for s in sensor_traces}
    missing = [s for s in graph.sensor_nodes if s not in traces]
    if missing:
        raise PreprocessError(f"missing sensor trace(s): {', '.join(missing)}")
    ordered = [traces[s] for s in graph.sensor_nodes]

    if meta is not None:
        windows = [detect_stable_window(tr, meta, params) for tr in ordered]
        window = (max(w[0] for w in windows), min(w[1] for w in windows))
        if window[0] > window[1]:
            raise PreprocessError(f"stable windows of trial {meta.trial_id} do not overlap")
        hour = int(window[0] // 3600)
    else:
        first = min(tr.timestamps[0] for tr in ordered)
        hour, window = _hour_window(first)

    if hour not in hourly_demands:
        raise PreprocessError(f"no metered demands for hour {hour}")
    demands = np.array(hourly_demands[hour], dtype=float)
    if demands.shape != (graph.q,):
        raise PreprocessError(f"hourly demand vector has {demands.size} entries, expected {graph.q}")

    pressures = np.array([average_window(tr, window) for tr in ordered])
    h_r = reservoir_head(average_window(reservoir_trace, window), graph.reservoir.elevation_head)

    sid = scenario_id or (meta.trial_id if meta else f"D{hour}")
    if meta is None:
        scenario = Scenario(sid, h_r, demands, DAILY, hour * 3600.0)
    else:
        try:
            pos = graph.demand_nodes.index(meta.node)
        except ValueError:
            raise PreprocessError(f"trial node {meta.node!r} is not a demand node") from None
        flow = average_window(flow_trace, window) if flow_trace is not None else meta.flow
        demands[pos] += flow
        scenario = Scenario(sid, h_r, demands, HYDRANT, hour * 3600.0, meta.node, flow, meta.classification)
    return scenario, ReferencePressures(sid, pressures, graph.sensor_nodes)


# ---------------------------------------------------------------------------
# file formats

def _epoch(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def read_traces_csv(path) -> dict[str, TimeSeries]:
    """Read ``timestamp,sensor_id,value`` rows into one series per sensor."""
    rows: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["sensor_id"], []).append((_epoch(rec["timestamp"]), float(rec["value"])))
    out = {}
    for sid, pts in rows.items():
        pts.sort()
        t, v = zip(*pts)
        out[sid] = TimeSeries(sid, np.array(t), np.array(v))
    return out


def write_traces_csv(path, series: Iterable[TimeSeries]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "sensor_id", "value"])
        for s in series:
            for t, v in zip(s.timestamps, s.values):
                iso = datetime.fromtimestamp(float(t), tz=timezone.utc).isoformat()
                w.writerow([iso, s.sensor_id, repr(float(v))])


def read_scenario_traces(path, graph: NetworkGraph) -> tuple[dict[str, TimeSeries], TimeSeries, TimeSeries | None]:
    """One scenario's trace file: sensor series, the reservoir series and an optional trial flow.

    The reservoir pressure is stored under the reservoir's node id and the
    hydrant discharge (m3/h) under the id ``flow``.
    """
    traces = read_traces_csv(path)
    reservoir = traces.pop(graph.reservoir.id, None)
    if reservoir is None:
        raise PreprocessError(f"{path}: no trace for reservoir {graph.reservoir.id!r}")
    flow = traces.pop(FLOW_TRACE, None)
    return traces, reservoir, flow


def read_demands_csv(path, graph: NetworkGraph) -> dict[int, np.ndarray]:
    """Read ``hour,node_id,demand_m3h`` rows; nodes absent in an hour get zero."""
    pos = {nid: i for i, nid in enumerate(graph.demand_nodes)}
    out: dict[int, np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            node = rec["node_id"]
            if node not in pos:
                raise PreprocessError(f"demand row for unknown demand node {node!r}")
            hour = int(_epoch(rec["hour"]) // 3600)
            out.setdefault(hour, np.zeros(graph.q))[pos[node]] += float(rec["demand_m3h"])
    return out


def read_trial_meta(path) -> list[TrialMeta]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    items = doc["trials"] if isinstance(doc, dict) else doc
    out = []
    for d in items:
        start = d.get("start")
        if isinstance(start, str):
            start = _epoch(start)
        out.append(TrialMeta(d["trial_id"], float(d["flow"]), float(d["duration"]), d["node"],
                             d["classification"], start))
    return out
