"""Shared small networks for the test suite."""

import numpy as np
import pytest

from wdncal.dataprep import DAILY, HYDRANT, Scenario
from wdncal.network import Junction, NetworkGraph, Pipe, Reservoir, SynthConfig, synth_dma

MINIMAL_INP = """\
[TITLE]
minimal
[JUNCTIONS]
 J1  10  1.0
 J2  12  2.0
[RESERVOIRS]
 R1  60
[PIPES]
 P1  R1  J1  100  100  0.5
 P2  J1  J2  150  80  0.5
[TAGS]
 NODE J2 SENSOR
[END]
"""


def one_pipe(length=100.0, diameter=0.1, roughness=0.5, elevation=10.0, head=60.0):
    graph = NetworkGraph((Junction("J1", elevation, 0.0),), (Reservoir("R1", head),),
                         (Pipe("P1", "R1", "J1", length, diameter, roughness),), ("J1",), ("J1",))
    return graph


def chain(pipe_count=3, roughness=1.0, sensors=None, diameter=0.1):
    """Reservoir followed by a straight line of junctions."""
    junctions = tuple(Junction(f"J{k}", 10.0 - k, 1.0) for k in range(1, pipe_count + 1))
    nodes = ["R1"] + [j.id for j in junctions]
    pipes = tuple(Pipe(f"P{k}", nodes[k - 1], nodes[k], 120.0, diameter, roughness)
                  for k in range(1, pipe_count + 1))
    ids = tuple(j.id for j in junctions)
    return NetworkGraph(junctions, (Reservoir("R1", 60.0),), pipes,
                        tuple(sensors) if sensors is not None else ids, ids)


def daily(graph, scale=1.0, sid="D0", head=None):
    h = graph.reservoir.elevation_head if head is None else head
    return Scenario(sid, h, graph.base_demands * scale, DAILY)


def hydrant(graph, node, flow=10.0, sid="H0", scale=0.2, cls="far"):
    d = graph.base_demands * scale
    d[graph.demand_nodes.index(node)] += flow
    return Scenario(sid, graph.reservoir.elevation_head, d, HYDRANT, 0.0, node, flow, cls)


@pytest.fixture(scope="session")
def dma50():
    return synth_dma(SynthConfig(junction_count=50, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def plateau_traces(graph, base, trial, start, duration=240.0, ramp=15.0, lead=300.0, tail=300.0,
                   noise=0.0, flow_noise=0.0, seed=0):
    """1 Hz sensor, reservoir and flow traces around one trial, built from two steady solves.

    ``base`` is the snapshot without the hydrant, ``trial`` the snapshot with
    it; sensor pressures ramp linearly between the two over ``ramp`` seconds
    and stay exactly on the trial solution for the rest of the trial.
    """
    from wdncal.dataprep import TimeSeries
    from wdncal.hydraulics import solve_steady

    r = np.random.default_rng(seed)
    t = np.arange(start - lead, start + duration + tail + 1.0)
    p0 = solve_steady(graph, base).pressure_head[graph.sensor_index]
    p1 = solve_steady(graph, trial).pressure_head[graph.sensor_index]
    frac = np.clip((t - start) / ramp, 0.0, 1.0)
    frac[t > start + duration] = 0.0
    sensors = []
    for k, nid in enumerate(graph.sensor_nodes):
        v = p0[k] + frac * (p1[k] - p0[k])
        if noise:
            v = v + r.normal(0, noise, t.size) * (frac < 1.0)
        sensors.append(TimeSeries(nid, t, v))
    res = graph.reservoir
    reservoir = TimeSeries(res.id, t, np.full(t.size, trial.reservoir_head - res.elevation_head))
    q = np.where((t >= start) & (t <= start + duration), trial.trial_flow, 0.0)
    if flow_noise:
        q = q + r.normal(0, flow_noise, t.size) * (q > 0)
    flow = TimeSeries("flow", t, q)
    return sensors, reservoir, flow
