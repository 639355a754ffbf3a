"""Command-line interface.

Every subcommand writes its outputs and a ``manifest.json`` into one output
directory: ``--output-dir``, else ``$WDNCAL_OUTPUT_DIR``, else
``./wdncal-out``.  ``wdncal verify DIR`` re-runs the command recorded in
``DIR/manifest.json`` and compares the outputs byte for byte.

A bundle directory holds ``network.json``, ``scenarios/<id>.json`` and
``references/<id>.json`` (``synth`` adds ``ground_truth.json``).

Exit codes: 0 success, 2 validation failure, 64 usage error, 70 internal
(solver or optimizer) failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import network as netmod
from .annpso.method import AnnPsoConfig, annpso_run
from .annpso.pso import AFTER, BEFORE
from .cobyla.method import CobylaConfig, cobyla_calibrate, sensor_mae_objective
from .dataprep import (DAILY, HYDRANT, ReferencePressures, Scenario, StabilityParams, build_scenario,
                       read_demands_csv, read_scenario_traces, read_trial_meta)
from .errors import (CalibrationError, ClusteringError, FoldCoverageError, InfeasibleConfigError,
                     InpSyntaxError, NetworkError, NoStableWindowError, PreprocessError, RetryBudgetExhausted,
                     SingularSystemError, StatisticsError, SurrogateDivergenceError, UnsupportedElementError)
from .evaluation.crossval import ANNPSO, COBYLA, SETUPS, CalibrationConfig, FoldResult, loso_run, z_vectors
from .hydraulics import SolverConfig, solve_steady
from .synthetic import BundleConfig, make_bundle
from .util import derive_seed

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70

OUTPUT_ENV = "WDNCAL_OUTPUT_DIR"
DEFAULT_OUTPUT = "wdncal-out"
MANIFEST = "manifest.json"

_VALIDATION_ERRORS = (InpSyntaxError, UnsupportedElementError, NetworkError, InfeasibleConfigError,
                      PreprocessError, NoStableWindowError, FoldCoverageError, StatisticsError,
                      ValueError, KeyError, OSError)
_INTERNAL_ERRORS = (SingularSystemError, CalibrationError, SurrogateDivergenceError, RetryBudgetExhausted,
                    ClusteringError)
# module config blocks may not set what the command line owns
_RESERVED_KEYS = {"seed", "jobs", "solver"}


class CommandFailure(Exception):
    """Raised by a command to exit with a specific code after reporting."""

    def __init__(self, message: str, code: int):
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# run bookkeeping

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Output directory, written files and provenance of one command."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT).resolve()
        self.inputs: dict[str, str] = {}
        self.seeds: dict[str, int] = {}
        self.config: dict = {}
        self.outputs: list[str] = []

    def add_input(self, path) -> Path:
        path = Path(path).resolve()
        if path.is_dir():
            for p in sorted(path.rglob("*")):
                if p.is_file():
                    self.inputs[str(p)] = sha256_file(p)
        else:
            self.inputs[str(path)] = sha256_file(path)
        return path

    def path(self, rel: str) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.outputs:
            self.outputs.append(rel)
        return p

    def write_json(self, rel: str, doc) -> Path:
        p = self.path(rel)
        p.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        p.write_text(text, encoding="utf-8")
        return p

    def write_csv(self, rel: str, header: list[str], rows) -> Path:
        p = self.path(rel)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return p

    def manifest(self) -> dict:
        args = {k: v for k, v in vars(self.args).items() if k not in ("func", "output_dir")}
        return {"format": "wdncal-manifest", "tool": "wdncal", "version": __version__,
                "command": self.command, "args": args, "inputs": self.inputs, "seeds": self.seeds,
                "config": self.config, "output_dir": str(self.out),
                "outputs": {rel: sha256_file(self.out / rel) for rel in self.outputs}}


# ---------------------------------------------------------------------------
# configuration

def _coerce(value, default):
    if dataclasses.is_dataclass(default) and isinstance(value, dict):
        return build_config(type(default), value, type(default).__name__, default)
    if isinstance(value, list):
        return tuple(value)
    return value


def build_config(cls, block: dict | None, where: str, base=None):
    """Dataclass instance from a JSON block; unknown or reserved keys are rejected."""
    base = base if base is not None else cls()
    if block is None:
        return base
    if not isinstance(block, dict):
        raise ValueError(f"config block {where!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    bad = sorted(set(block) - names)
    if bad:
        raise ValueError(f"unknown key(s) in config block {where!r}: {', '.join(bad)}")
    reserved = sorted(set(block) & _RESERVED_KEYS)
    if reserved:
        raise ValueError(f"key(s) {', '.join(reserved)} in {where!r} are set on the command line")
    kw = {k: _coerce(v, getattr(base, k)) for k, v in block.items()}
    return dataclasses.replace(base, **kw)


def load_config(run: Run) -> dict:
    if not getattr(run.args, "config", None):
        return {}
    path = run.add_input(run.args.config)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    known = {"synth", "network", "cobyla", "annpso", "solver", "preprocess"}
    bad = sorted(set(doc) - known)
    if bad:
        raise ValueError(f"unknown config block(s): {', '.join(bad)}")
    return doc


def _solver(doc: dict) -> SolverConfig | None:
    return build_config(SolverConfig, doc["solver"], "solver") if "solver" in doc else None


def _calibration_config(run: Run, doc: dict) -> CalibrationConfig:
    root = run.args.seed
    jobs = run.args.jobs
    solver = _solver(doc)
    cob = build_config(CobylaConfig, doc.get("cobyla"), "cobyla")
    if getattr(run.args, "clusters", None):
        cob = dataclasses.replace(cob, clusters=run.args.clusters)
    cob = dataclasses.replace(cob, seed=derive_seed(root, "cobyla"), jobs=jobs, solver=solver)
    ap = build_config(AnnPsoConfig, doc.get("annpso"), "annpso")
    mode = getattr(run.args, "mode", None) or ap.pso.mode
    ap = dataclasses.replace(ap, pso=dataclasses.replace(ap.pso, mode=mode),
                             seed=derive_seed(root, "annpso"), jobs=jobs, solver=solver)
    run.seeds.update(root=root, cobyla=cob.seed, annpso=ap.seed)
    run.config.update(cobyla=dataclasses.asdict(cob), annpso=dataclasses.asdict(ap),
                      solver=dataclasses.asdict(solver) if solver else None)
    return CalibrationConfig(cob, ap, jobs, solver)


# ---------------------------------------------------------------------------
# bundle input

def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def load_network(run: Run, path) -> netmod.NetworkGraph:
    return netmod.load(run.add_input(path))


def load_bundle(run: Run, bundle, network=None, need_references: bool = True):
    """Load a bundle directory: the network plus scenario and reference lists aligned by id."""
    bundle = Path(bundle).resolve()
    graph = load_network(run, network or bundle / "network.json")
    sc_dir = bundle / "scenarios"
    if not sc_dir.is_dir():
        raise PreprocessError(f"{bundle} has no scenarios/ directory")
    scenarios = [Scenario.from_document(_read_json(run.add_input(p))) for p in sorted(sc_dir.glob("*.json"))]
    if not scenarios:
        raise PreprocessError(f"no scenario files in {sc_dir}")
    for sc in scenarios:
        if sc.demands.shape != (graph.q,):
            raise PreprocessError(f"scenario {sc.id} has {sc.demands.size} demands, network has {graph.q}")
    if not need_references:
        return graph, scenarios, []
    references = []
    for sc in scenarios:
        path = bundle / "references" / f"{sc.id}.json"
        if not path.is_file():
            raise PreprocessError(f"missing reference file for scenario {sc.id}: {path}")
        ref = ReferencePressures.from_document(_read_json(run.add_input(path)))
        if ref.values.shape != (graph.m,):
            raise PreprocessError(f"reference {sc.id} has {ref.values.size} values, network has {graph.m} sensors")
        if ref.sensor_nodes and ref.sensor_nodes != graph.sensor_nodes:
            raise PreprocessError(f"reference {sc.id} lists sensors in a different order than the network")
        references.append(ref)
    return graph, scenarios, references


def load_roughness(run: Run, path, graph: netmod.NetworkGraph) -> np.ndarray:
    doc = _read_json(run.add_input(path))
    ids = tuple(doc.get("pipe_ids", ()))
    r = np.asarray(doc["roughness"], dtype=float)
    if ids and ids != graph.pipe_ids:
        raise ValueError("roughness document lists different pipes than the network")
    if r.shape != (graph.l,):
        raise ValueError(f"roughness vector has {r.size} entries, network has {graph.l} pipes")
    return r


def write_bundle(run: Run, graph, scenarios, references) -> None:
    run.write_text("network.json", netmod.dumps(graph))
    for sc in scenarios:
        run.write_json(f"scenarios/{sc.id}.json", sc.to_document())
    for ref in references:
        run.write_json(f"references/{ref.scenario_id}.json", ref.to_document())


def _roughness_document(graph, r, **extra) -> dict:
    return {"format": "wdncal-roughness", "pipe_ids": list(graph.pipe_ids),
            "roughness": np.asarray(r, dtype=float).tolist(), **extra}


# ---------------------------------------------------------------------------
# commands

def cmd_parse(run: Run) -> int:
    graph = load_network(run, run.args.network)
    diags = netmod.validate(graph)
    run.write_text("network.json", netmod.dumps(graph))
    run.write_json("diagnostics.json", [dataclasses.asdict(d) for d in diags])
    for d in diags:
        print(d, file=sys.stderr)
    print(f"{graph!r}: {len(diags)} diagnostic(s)")
    return EXIT_VALIDATION if diags else EXIT_OK


def cmd_synth(run: Run) -> int:
    doc = load_config(run)
    base = build_config(BundleConfig, doc.get("synth"), "synth")
    net = build_config(netmod.SynthConfig, doc.get("network"), "network", base.network)
    seed = run.args.seed
    cfg = dataclasses.replace(base, network=dataclasses.replace(net, seed=seed), seed=seed)
    if run.args.noise is not None:
        cfg = dataclasses.replace(cfg, noise=run.args.noise)
    run.seeds.update(root=seed, network=seed, truth=derive_seed(seed, "truth"),
                     scenarios=derive_seed(seed, "scenarios"), noise=derive_seed(seed, "noise"))
    run.config.update(synth=dataclasses.asdict(cfg))
    bundle = make_bundle(cfg)
    write_bundle(run, bundle.graph, bundle.scenarios, bundle.references)
    run.write_text("network.inp", netmod.serialize_inp(bundle.graph))
    run.write_json("ground_truth.json", _roughness_document(
        bundle.graph, bundle.truth, trials=[dataclasses.asdict(t) for t in bundle.trials]))
    print(f"{bundle.graph!r}: {len(bundle.scenarios)} scenarios written to {run.out}")
    return EXIT_OK


def cmd_preprocess(run: Run) -> int:
    doc = load_config(run)
    params = build_config(StabilityParams, doc.get("preprocess"), "preprocess")
    run.config.update(preprocess=dataclasses.asdict(params))
    graph = load_network(run, run.args.network)
    hourly = read_demands_csv(run.add_input(run.args.demands), graph)
    metas = {m.trial_id: m for m in read_trial_meta(run.add_input(run.args.meta))}
    trace_dir = run.add_input(run.args.traces)
    files = sorted(trace_dir.glob("*.csv"))
    if not files:
        raise PreprocessError(f"no trace files in {trace_dir}")
    scenarios, references = [], []
    for path in files:
        traces, reservoir, flow = read_scenario_traces(path, graph)
        sc, ref = build_scenario(graph, traces, reservoir, hourly, metas.get(path.stem), flow, params,
                                 scenario_id=path.stem)
        scenarios.append(sc)
        references.append(ref)
    write_bundle(run, graph, scenarios, references)
    print(f"{len(scenarios)} scenario(s) written to {run.out}")
    return EXIT_OK


def cmd_simulate(run: Run) -> int:
    doc = load_config(run)
    solver = _solver(doc)
    graph, scenarios, _ = load_bundle(run, run.args.bundle, run.args.network, need_references=False)
    r = load_roughness(run, run.args.roughness, graph) if run.args.roughness else graph.roughness
    p_rows, q_rows = [], []
    failed = []
    for sc in scenarios:
        state = solve_steady(graph, sc, r, solver)
        if not state.converged:
            failed.append(sc.id)
        p_rows += [(sc.id, nid, repr(float(p))) for nid, p in zip(graph.node_ids, state.pressure_head)]
        q_rows += [(sc.id, pid, repr(float(q))) for pid, q in zip(graph.pipe_ids, state.flow)]
    run.write_csv("pressures.csv", ["scenario", "node", "pressure_head"], p_rows)
    run.write_csv("flows.csv", ["scenario", "pipe", "flow_m3s"], q_rows)
    if failed:
        raise CommandFailure(f"solver did not converge on: {', '.join(failed)}", EXIT_INTERNAL)
    return EXIT_OK


def cmd_calibrate(run: Run) -> int:
    doc = load_config(run)
    cfg = _calibration_config(run, doc)
    graph, scenarios, references = load_bundle(run, run.args.bundle, run.args.network)
    if run.args.label:
        keep = [i for i, sc in enumerate(scenarios) if sc.label == run.args.label]
        if not keep:
            raise ValueError(f"bundle has no {run.args.label} scenarios")
        scenarios = [scenarios[i] for i in keep]
        references = [references[i] for i in keep]
    r0 = graph.roughness
    j_idx = np.arange(graph.m)
    objective = sensor_mae_objective(graph, scenarios, references, j_idx, cfg.solver, cfg.jobs)
    extra: dict = {}
    if run.args.method == "cobyla":
        res = cobyla_calibrate(graph, scenarios, references, r0, config=cfg.cobyla)
        r = res.roughness
        extra.update(clusters=res.assignment.k, labels=res.assignment.labels.tolist(),
                     evaluations=res.result.nfev, failed_probes=res.failures)
    else:
        res = annpso_run(graph, r0, scenarios, references, config=cfg.annpso)
        r = res.roughness
        cal = res.calibration
        extra.update(mode=cal.mode, surrogate_objective=cal.value)
        if cal.mode == AFTER:
            best = int(np.argmin(cal.candidate_scores))
            rows = [(sc.id, repr(float(s)), int(i == best)) for i, (sc, s) in
                    enumerate(zip(scenarios, cal.candidate_scores))]
            run.write_csv("after_candidates.csv", ["scenario", "mae", "selected"], rows)
            extra.update(candidates={sc.id: c.tolist() for sc, c in zip(scenarios, cal.candidates)},
                         selected=scenarios[best].id)
    before, after = objective(r0), objective(r)
    if before is None or after is None:
        raise CommandFailure("solver failed while scoring the calibrated roughness", EXIT_INTERNAL)
    run.write_json("roughness.json", _roughness_document(
        graph, r, method=run.args.method, scenarios=[sc.id for sc in scenarios],
        mae_initial=before, mae_final=after, improvement=before - after, **extra))
    print(f"{run.args.method}: sensor MAE {before:.6f} -> {after:.6f} m (improvement {before - after:.6f} m)")
    return EXIT_OK


def _fold_document(res: FoldResult) -> dict:
    spec = res.spec
    return {"scenario": res.scenario_id, "sensors": list(res.sensors), "e0": res.e0.tolist(),
            "e": res.e.tolist(), "delta_e": res.delta_e.tolist(), "p0": res.p0.tolist(),
            "p": res.p.tolist(), "p_measured": res.p_measured.tolist(),
            "train_ids": list(spec.train_ids) if spec else [],
            "roughness": res.roughness.tolist() if res.roughness is not None else None,
            "error": res.error}


def _fold_from_document(doc: dict) -> FoldResult:
    arr = {k: np.asarray(doc.get(k, []), dtype=float) for k in ("e0", "e", "delta_e", "p0", "p", "p_measured")}
    return FoldResult(doc["scenario"], tuple(doc["sensors"]), arr["e0"], arr["e"], arr["delta_e"],
                      arr["p0"], arr["p"], arr["p_measured"], None, None, doc.get("error"))


def cmd_crossval(run: Run) -> int:
    doc = load_config(run)
    cfg = _calibration_config(run, doc)
    graph, scenarios, references = load_bundle(run, run.args.bundle, run.args.network)
    pools = {}
    for letter, label in (("H", HYDRANT), ("D", DAILY)):
        keep = [i for i, sc in enumerate(scenarios) if sc.label == label]
        pools[letter] = ([scenarios[i] for i in keep], [references[i] for i in keep])
    setup = run.args.setup
    train, test = pools[setup[0]], pools[setup[1]]
    for letter in set(setup):
        if not pools[letter][0]:
            raise ValueError(f"setup {setup} needs {'hydrant-trial' if letter == 'H' else 'daily-usage'} scenarios")
    results = loso_run(graph, train, test, run.args.method, cfg, setup)
    rows = [(r["scenario"], r["sensor"], repr(r["e0"]), repr(r["e"]), repr(r["delta_e"]), r["setup"], r["method"])
            for res in results for r in res.rows()]
    run.write_csv("crossval.csv", ["scenario", "sensor", "e0", "e", "delta_e", "setup", "method"], rows)
    run.write_json("crossval.json", {"format": "wdncal-crossval", "setup": setup, "method": run.args.method,
                                     "sign_convention": "delta_e = e - e0 (negative: error reduced)",
                                     "folds": [_fold_document(r) for r in results]})
    failed = [r.scenario_id for r in results if not r.ok]
    if failed:
        raise CommandFailure(f"fold(s) failed: {', '.join(failed)}", EXIT_INTERNAL)
    mean = float(np.mean([d for res in results for d in res.delta_e]))
    print(f"{setup}-{run.args.method}: {len(results)} folds, mean delta_e {mean:.6f} m")
    return EXIT_OK


def _crossval_doc(run: Run, path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "crossval.json"
    doc = _read_json(run.add_input(path))
    if doc.get("format") != "wdncal-crossval":
        raise ValueError(f"{path} is not a crossval report")
    return doc


def cmd_stats(run: Run) -> int:
    dh = _crossval_doc(run, run.args.dh)
    hh = _crossval_doc(run, run.args.hh)
    if dh["method"] != hh["method"]:
        raise ValueError(f"DH and HH reports use different methods ({dh['method']} vs {hh['method']})")
    report = z_vectors([_fold_from_document(d) for d in dh["folds"]],
                       [_fold_from_document(d) for d in hh["folds"]], run.args.alpha, dh["method"])
    run.write_json("zreport.json", report.to_document())
    run.write_csv("z.csv", ["scenario", "sensor", "z"],
                  [(sc, s, repr(float(report.z[i, j]))) for i, sc in enumerate(report.scenario_ids)
                   for j, s in enumerate(report.sensors)])
    test = report.test
    p = "n/a" if test is None or test.p_value is None else f"{test.p_value:.3g}"
    print(f"z-bar = {report.mean:.6f} +/- {report.std:.6f} m, {test.test if test else 'no test'} p = {p}")
    return EXIT_OK


def cmd_verify(run: Run) -> int:
    src = Path(run.args.directory).resolve()
    manifest = _read_json(src / MANIFEST)
    if manifest.get("format") != "wdncal-manifest":
        raise ValueError(f"{src / MANIFEST} is not a wdncal manifest")
    changed = [p for p, h in manifest["inputs"].items() if not Path(p).is_file() or sha256_file(p) != h]
    if changed:
        raise CommandFailure(f"input(s) changed since the run: {', '.join(changed)}", EXIT_VALIDATION)
    with tempfile.TemporaryDirectory() as tmp:
        args = argparse.Namespace(**manifest["args"], output_dir=tmp)
        code = COMMANDS[manifest["command"]][0](Run(manifest["command"], args))
        expected = manifest["outputs"]
        ok = True
        for rel, digest in expected.items():
            fresh = Path(tmp) / rel
            same = fresh.is_file() and sha256_file(fresh) == digest
            ok &= same
            print(f"{'OK  ' if same else 'DIFF'} {rel}")
    if code != manifest.get("exit_code", EXIT_OK):
        print(f"exit code {code} differs from the recorded run", file=sys.stderr)
        ok = False
    print("outputs identical" if ok else "outputs differ")
    return EXIT_OK if ok else EXIT_VALIDATION


COMMANDS = {
    "parse": (cmd_parse, "parse and validate an INP or JSON network"),
    "synth": (cmd_synth, "generate a synthetic DMA bundle with hidden roughness"),
    "preprocess": (cmd_preprocess, "reduce sensor traces to scenarios and reference pressures"),
    "simulate": (cmd_simulate, "solve every scenario of a bundle"),
    "calibrate": (cmd_calibrate, "calibrate pipe roughness on a bundle"),
    "crossval": (cmd_crossval, "leave-one-scenario-out experiment for one setup"),
    "stats": (cmd_stats, "z statistics and significance from DH and HH reports"),
    "verify": (cmd_verify, "re-run a recorded command and compare outputs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wdncal", description="Water network roughness calibration.")
    parser.add_argument("--version", action="version", version=f"wdncal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = _Parser(add_help=False)
    common.add_argument("--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    common.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="concurrent solver evaluations (default 1)")
    common.add_argument("--config", help="JSON file with per-module configuration blocks")

    def add(name):
        return sub.add_parser(name, parents=[common], help=COMMANDS[name][1], description=COMMANDS[name][1])

    p = add("parse")
    p.add_argument("network")
    p = add("synth")
    p.add_argument("--noise", type=float, help="sensor noise standard deviation (m)")
    p = add("preprocess")
    p.add_argument("--network", required=True)
    p.add_argument("--traces", required=True, help="directory with one <scenario_id>.csv per scenario")
    p.add_argument("--demands", required=True, help="CSV with hour,node_id,demand_m3h")
    p.add_argument("--meta", required=True, help="JSON list of hydrant-trial metadata")
    p = add("simulate")
    p.add_argument("--bundle", required=True)
    p.add_argument("--network", help="network file (default: BUNDLE/network.json)")
    p.add_argument("--roughness", help="roughness document to simulate with (default: network roughness)")
    p = add("calibrate")
    p.add_argument("--bundle", required=True)
    p.add_argument("--network")
    p.add_argument("--method", required=True, choices=["cobyla", "annpso"])
    p.add_argument("--mode", choices=[BEFORE, AFTER], help="ANN-PSO aggregation mode")
    p.add_argument("--clusters", type=int, help="number of pipe clusters for COBYLA")
    p.add_argument("--label", choices=[HYDRANT, DAILY], help="calibrate on one scenario type only")
    p = add("crossval")
    p.add_argument("--bundle", required=True)
    p.add_argument("--network")
    p.add_argument("--setup", required=True, choices=SETUPS)
    p.add_argument("--method", required=True, choices=[COBYLA, ANNPSO])
    p.add_argument("--mode", choices=[BEFORE, AFTER], help="ANN-PSO aggregation mode")
    p.add_argument("--clusters", type=int)
    p = add("stats")
    p.add_argument("--dh", required=True, help="DH crossval output directory or crossval.json")
    p.add_argument("--hh", required=True, help="HH crossval output directory or crossval.json")
    p.add_argument("--alpha", type=float, default=0.05)
    p = add("verify")
    p.add_argument("directory", help="output directory containing manifest.json")
    return parser


def _absolute_paths(args: argparse.Namespace) -> None:
    for key in ("network", "bundle", "traces", "demands", "meta", "roughness", "config", "dh", "hh", "directory"):
        value = getattr(args, key, None)
        if value:
            setattr(args, key, str(Path(value).resolve()))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.jobs < 1:
        print("wdncal: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    _absolute_paths(args)
    run = Run(args.command, args)
    try:
        code = COMMANDS[args.command][0](run)
    except CommandFailure as exc:
        print(f"wdncal {args.command}: {exc}", file=sys.stderr)
        code = exc.code
    except _INTERNAL_ERRORS as exc:
        print(f"wdncal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_INTERNAL
    except _VALIDATION_ERRORS as exc:
        print(f"wdncal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal exit code
        print(f"wdncal {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_INTERNAL
    if args.command != "verify":
        doc = run.manifest()
        doc["exit_code"] = code
        run.out.mkdir(parents=True, exist_ok=True)
        (run.out / MANIFEST).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return code


if __name__ == "__main__":
    sys.exit(main())
