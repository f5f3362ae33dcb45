"""JSON scenario documents: parsing, validation, built-in examples.

Edges in a document are 1-based ``[source, target]`` pairs (``target``
receives from ``source``); the Python API is 0-based throughout.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .graph import DirectedGraph, random_geometric_graph, ring
from .node import Mode
from .plant import NoiseSignal, PlantModel
from .sim import IntegratorSettings, NodeParams, Scenario
from .synthesis.design import GainSet, SynthesisWeights, design_gains
from .synthesis.flows import run_distributed_design

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema_version", "name", "graph", "plant", "synthesis", "nodes", "integrator", "outputs"}
_GRAPH_KEYS = {"n_nodes", "edges", "generator"}
_GENERATOR_KEYS = {"kind", "radius", "side", "seed", "coords"}
_PLANT_KEYS = {"A", "B", "C", "x0", "process_noise", "measurement_noise"}
_SYNTH_KEYS = {"method", "T1", "T1_per_node", "T2", "kappa", "K", "F"}
_NODE_KEYS = {"mode", "mu", "epsilon", "gamma0", "x_hat0", "y_hat0"}
_INTEGRATOR_KEYS = {"dt", "t_final", "method", "record_every"}
_OUTPUT_KEYS = {"directory", "formats"}
_SINUSOID_KEYS = {"type", "function", "amplitude", "frequency", "phase"}
_RANDOM_KEYS = {"type", "dim", "bound", "seed", "n_terms", "max_frequency"}
SYNTHESIS_METHODS = ("distributed", "centralized", "explicit")
OUTPUT_FORMATS = ("csv", "gnuplot")


def _require(cond, field, msg):
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def _check_keys(section: dict, allowed: set, field: str, required=()):
    _require(isinstance(section, dict), field, "must be an object")
    unknown = sorted(set(section) - allowed)
    _require(not unknown, field, f"unknown key(s) {unknown}")
    for key in required:
        _require(key in section, field, f"missing required key {key!r}")


def _number(v, field, positive=False, nonneg=False):
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v), field,
             "must be a finite number")
    if positive:
        _require(v > 0, field, "must be positive")
    if nonneg:
        _require(v >= 0, field, "must be nonnegative")
    return float(v)


def _matrix(v, field, rows=None, cols=None):
    try:
        m = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: not a numeric matrix") from None
    _require(m.ndim == 2, field, f"must be a 2-D matrix, got {m.ndim} dimension(s)")
    _require(np.all(np.isfinite(m)), field, "contains non-finite entries")
    if rows is not None:
        _require(m.shape[0] == rows, field, f"has {m.shape[0]} rows, expected {rows}")
    if cols is not None:
        _require(m.shape[1] == cols, field, f"has {m.shape[1]} columns, expected {cols}")
    return m


def _weight(v, n, field):
    """A scalar means ``v * I``; otherwise an n x n matrix."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return _number(v, field, positive=True) * np.eye(n)
    return _matrix(v, field, n, n)


def _vector(v, n, field):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: not numeric") from None
    _require(a.shape == (n,), field, f"must be a length-{n} vector, got shape {a.shape}")
    return a


def _noise(spec, dim, field):
    if spec is None:
        return None
    _require(isinstance(spec, dict) and "type" in spec, field, "noise spec needs a 'type'")
    kind = spec["type"]
    if kind == "sinusoid":
        _check_keys(spec, _SINUSOID_KEYS, field, required=("amplitude", "frequency"))
        fn = spec.get("function", "sin")
        _require(fn in ("sin", "cos"), f"{field}.function", "must be 'sin' or 'cos'")
        amp = _vector(spec["amplitude"], dim, f"{field}.amplitude")
        freq = _vector(spec["frequency"], dim, f"{field}.frequency")
        phase = _vector(spec.get("phase", [0.0] * dim), dim, f"{field}.phase")
        return NoiseSignal.sinusoid(amp, freq, phase, fn)
    if kind == "bounded-random":
        _check_keys(spec, _RANDOM_KEYS, field, required=("bound", "seed"))
        if "dim" in spec:
            _require(spec["dim"] == dim, f"{field}.dim", f"must equal {dim}")
        return NoiseSignal.bounded_random(dim, _number(spec["bound"], f"{field}.bound", nonneg=True),
                                          int(spec["seed"]), int(spec.get("n_terms", 8)),
                                          _number(spec.get("max_frequency", 1.0), f"{field}.max_frequency",
                                                  positive=True))
    raise ConfigError(f"{field}.type: unknown noise type {kind!r}")


@dataclass(frozen=True)
class ParsedConfig:
    graph: DirectedGraph
    plant: PlantModel
    x0: np.ndarray
    params: NodeParams
    integrator: IntegratorSettings


class ScenarioConfig:
    """A validated scenario document.

    Construction validates everything except the gain synthesis itself;
    :meth:`build` runs the synthesis and returns a :class:`~distcoop.sim.Scenario`.
    """

    def __init__(self, doc: dict):
        self.doc = copy.deepcopy(doc)
        try:
            self.parsed = self._validate(self.doc)
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.to_json() == other.to_json()

    def __repr__(self):
        return f"ScenarioConfig(name={self.doc.get('name')!r})"

    # ---------------------------------------------------------- (de)serialization

    @classmethod
    def from_json(cls, text: str, source: str = "<string>") -> "ScenarioConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls(doc)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        return cls.from_json(text, str(path))

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"

    def with_overrides(self, **integrator) -> "ScenarioConfig":
        doc = copy.deepcopy(self.doc)
        for k, v in integrator.items():
            if v is not None:
                doc["integrator"][k] = v
        return ScenarioConfig(doc)

    @property
    def name(self) -> str:
        return self.doc.get("name", "scenario")

    @property
    def output_directory(self):
        return self.doc.get("outputs", {}).get("directory")

    @property
    def formats(self) -> list:
        return list(self.doc.get("outputs", {}).get("formats", OUTPUT_FORMATS))

    # ---------------------------------------------------------- validation

    @staticmethod
    def _validate(doc) -> ParsedConfig:
        _check_keys(doc, _TOP_KEYS, "<root>", required=("schema_version", "graph", "plant", "synthesis",
                                                        "nodes", "integrator"))
        _require(doc["schema_version"] == SCHEMA_VERSION, "schema_version",
                 f"unsupported version {doc['schema_version']!r} (expected {SCHEMA_VERSION})")
        if "name" in doc:
            _require(isinstance(doc["name"], str), "name", "must be a string")

        gd = doc["graph"]
        _check_keys(gd, _GRAPH_KEYS, "graph", required=("n_nodes", "edges"))
        N = gd["n_nodes"]
        _require(isinstance(N, int) and not isinstance(N, bool) and N >= 1, "graph.n_nodes",
                 "must be a positive integer")
        _require(isinstance(gd["edges"], list), "graph.edges", "must be a list of [source, target] pairs")
        edges = []
        for k, e in enumerate(gd["edges"]):
            f = f"graph.edges[{k}]"
            _require(isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e), f,
                     "must be a [source, target] pair of integers")
            _require(all(1 <= v <= N for v in e), f, f"node ids must lie in 1..{N}")
            _require(e[0] != e[1], f, "self-loops are not allowed")
            edges.append((e[0] - 1, e[1] - 1))
        if "generator" in gd:
            _check_keys(gd["generator"], _GENERATOR_KEYS, "graph.generator")
        graph = DirectedGraph.from_edges(N, edges)

        pd = doc["plant"]
        _check_keys(pd, _PLANT_KEYS, "plant", required=("A", "C", "x0"))
        A = _matrix(pd["A"], "plant.A")
        n = A.shape[0]
        _require(A.shape == (n, n), "plant.A", f"must be square, got {A.shape}")
        _require(isinstance(pd["C"], list) and len(pd["C"]) == N, "plant.C",
                 f"must list one matrix per node ({N})")
        C = [_matrix(c, f"plant.C[{i}]", cols=n) for i, c in enumerate(pd["C"])]
        B = pd.get("B")
        if B is not None:
            _require(isinstance(B, list) and len(B) == N, "plant.B", f"must list one matrix per node ({N})")
            B = [_matrix(b, f"plant.B[{i}]", rows=n) for i, b in enumerate(B)]
        x0 = _vector(pd["x0"], n, "plant.x0")
        w = _noise(pd.get("process_noise"), n, "plant.process_noise")
        meas = pd.get("measurement_noise")
        if meas is not None:
            _require(isinstance(meas, list) and len(meas) == N, "plant.measurement_noise",
                     f"must list one entry (or null) per node ({N})")
            meas = tuple(_noise(s, C[i].shape[0], f"plant.measurement_noise[{i}]") for i, s in enumerate(meas))
        plant = PlantModel(A, B, C, w, meas)

        nd = doc["nodes"]
        _check_keys(nd, _NODE_KEYS, "nodes", required=("mode", "mu"))
        try:
            mode = Mode(nd["mode"])
        except ValueError:
            raise ConfigError(f"nodes.mode: unknown mode {nd['mode']!r}; choose from "
                              f"{[m.value for m in Mode]}") from None
        mu = _number(nd["mu"], "nodes.mu", positive=True)
        eps = _number(nd.get("epsilon", 0.01), "nodes.epsilon", positive=mode.robust, nonneg=True)
        gamma0 = nd.get("gamma0")
        if gamma0 is not None:
            if isinstance(gamma0, list):
                gamma0 = _vector(gamma0, N, "nodes.gamma0")
            else:
                gamma0 = np.array(_number(gamma0, "nodes.gamma0"))
            if mode.robust:
                _require(np.all(gamma0 > 1.0), "nodes.gamma0",
                         "robust modes require the initial adaptive gain to be greater than 1")
            _require(np.all(gamma0 >= 0.0), "nodes.gamma0", "must be nonnegative")
        x_hat0 = nd.get("x_hat0")
        if x_hat0 is not None:
            x_hat0 = _matrix(x_hat0, "nodes.x_hat0", N, n)
        y_hat0 = nd.get("y_hat0")
        if y_hat0 is not None:
            y_hat0 = _matrix(y_hat0, "nodes.y_hat0", N, sum(plant.output_dims))
        params = NodeParams(mode, mu, eps, gamma0, x_hat0, y_hat0)

        sd = doc["synthesis"]
        _check_keys(sd, _SYNTH_KEYS, "synthesis", required=("method",))
        method = sd["method"]
        _require(method in SYNTHESIS_METHODS, "synthesis.method", f"must be one of {SYNTHESIS_METHODS}")
        needs_k = not mode.observer_only and sum(plant.input_dims) > 0
        if method == "explicit":
            _require("F" in sd, "synthesis", "explicit gains need 'F'")
            _require(isinstance(sd["F"], list) and len(sd["F"]) == N, "synthesis.F", f"needs {N} matrices")
            for i, f in enumerate(sd["F"]):
                _matrix(f, f"synthesis.F[{i}]", n, plant.output_dims[i])
            if needs_k:
                _require("K" in sd, "synthesis", "explicit gains need 'K' for a controlled plant")
            if "K" in sd:
                _require(isinstance(sd["K"], list) and len(sd["K"]) == N, "synthesis.K", f"needs {N} matrices")
                for i, k in enumerate(sd["K"]):
                    _matrix(k, f"synthesis.K[{i}]", plant.input_dims[i], n)
        else:
            _require("T2" in sd, "synthesis", "missing required key 'T2'")
            _weight(sd["T2"], n, "synthesis.T2")
            if needs_k:
                if method == "distributed":
                    _require("T1_per_node" in sd or "T1" in sd, "synthesis", "needs 'T1' or 'T1_per_node'")
                else:
                    _require("T1" in sd, "synthesis", "centralized synthesis needs 'T1'")
            if "T1" in sd:
                _weight(sd["T1"], n, "synthesis.T1")
            if "T1_per_node" in sd:
                _require(isinstance(sd["T1_per_node"], list) and len(sd["T1_per_node"]) == N,
                         "synthesis.T1_per_node", f"needs {N} entries")
                for i, t in enumerate(sd["T1_per_node"]):
                    _weight(t, n, f"synthesis.T1_per_node[{i}]")
            if sd.get("kappa") is not None:
                _number(sd["kappa"], "synthesis.kappa", positive=True)

        idoc = doc["integrator"]
        _check_keys(idoc, _INTEGRATOR_KEYS, "integrator", required=("dt", "t_final"))
        dt = _number(idoc["dt"], "integrator.dt", positive=True)
        tf = _number(idoc["t_final"], "integrator.t_final", positive=True)
        _require(tf >= dt, "integrator.t_final", "must be at least dt")
        im = idoc.get("method", "rk4")
        _require(im in ("rk4", "euler"), "integrator.method", "must be 'rk4' or 'euler'")
        re = idoc.get("record_every", 100)
        _require(isinstance(re, int) and re >= 1, "integrator.record_every", "must be a positive integer")
        settings = IntegratorSettings(dt, tf, im, re)

        if "outputs" in doc:
            od = doc["outputs"]
            _check_keys(od, _OUTPUT_KEYS, "outputs")
            if od.get("directory") is not None:
                _require(isinstance(od["directory"], str), "outputs.directory", "must be a string")
            for fmt in od.get("formats", []):
                _require(fmt in OUTPUT_FORMATS, "outputs.formats", f"unknown format {fmt!r}")
        return ParsedConfig(graph, plant, x0, params, settings)

    # ---------------------------------------------------------- building

    def synthesize(self) -> GainSet:
        """Run the configured gain design (or load explicit gains)."""
        sd = self.doc["synthesis"]
        p = self.parsed
        plant, n, N = p.plant, p.plant.n, p.graph.n_nodes
        method = sd["method"]
        observer_plant = p.params.mode.observer_only or sum(plant.input_dims) == 0
        if observer_plant and sum(plant.input_dims) > 0:
            # gains of a pure observer ignore the actuators
            plant = PlantModel(plant.A, None, plant.outputs)
        if method == "explicit":
            F = tuple(np.array(f, dtype=float) for f in sd["F"])
            if "K" in sd:
                K = tuple(np.array(k, dtype=float) for k in sd["K"])
            else:
                K = tuple(np.zeros((pdim, n)) for pdim in plant.input_dims)
            return GainSet(K, F)
        T2 = _weight(sd["T2"], n, "synthesis.T2")
        kappa = sd.get("kappa")
        if method == "centralized" or observer_plant:
            T1 = _weight(sd.get("T1", 1.0), n, "synthesis.T1")
            gains = design_gains(plant, SynthesisWeights(T1, T2, kappa))
        else:
            if "T1_per_node" in sd:
                t1s = [_weight(t, n, "synthesis.T1_per_node") for t in sd["T1_per_node"]]
            else:
                t1s = [_weight(sd["T1"], n, "synthesis.T1")] * N
            gains = run_distributed_design(p.graph, plant, t1s, T2, kappa=kappa).gains
        if observer_plant and sum(p.plant.input_dims) > 0:
            gains = GainSet(tuple(np.zeros((pdim, n)) for pdim in p.plant.input_dims), gains.estimator_gains,
                            gains.P1, gains.Q1, gains.T1, gains.T2, gains.kappa1, gains.certificate)
        return gains

    def build(self, gains: GainSet | None = None) -> Scenario:
        p = self.parsed
        if gains is None:
            gains = self.synthesize()
        return Scenario(p.graph, p.plant, gains, p.params, p.x0, p.integrator)


# ---------------------------------------------------------------- built-in examples

EXAMPLE1_ANGLES = (math.pi / 3, 3 * math.pi / 4, 4 * math.pi / 3, 3 * math.pi / 2, 7 * math.pi / 4, 2 * math.pi)
EXAMPLE1_MASS = 5.0
EXAMPLE1_P_INI = (30.0, 40.0)
EXAMPLE1_P_DES = (230.0, 200.0)


def _edges_1based(g: DirectedGraph) -> list:
    return [[int(s) + 1, int(t) + 1] for s, t in g.edges()]


def example1(noisy: bool = True, t_final: float = 300.0, dt: float = 1e-3, record_every: int = 100) -> ScenarioConfig:
    """Six robots on a directed ring carrying one object in the plane.

    ``x = [p - p_des, v]``; robots 1 and 3 measure position, the others
    carry no sensor.
    """
    N = 6
    A = np.zeros((4, 4))
    A[0, 2] = A[1, 3] = 1.0
    B = [[[0.0], [0.0], [math.cos(a) / EXAMPLE1_MASS], [math.sin(a) / EXAMPLE1_MASS]] for a in EXAMPLE1_ANGLES]
    sensor = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]
    blind = [[0.0] * 4, [0.0] * 4]
    C = [sensor if i in (0, 2) else blind for i in range(N)]
    x0 = [EXAMPLE1_P_INI[0] - EXAMPLE1_P_DES[0], EXAMPLE1_P_INI[1] - EXAMPLE1_P_DES[1], 0.0, 0.0]
    plant = {"A": A.tolist(), "B": B, "C": C, "x0": x0}
    if noisy:
        plant["process_noise"] = {"type": "sinusoid", "function": "sin", "amplitude": [0.02] * 4,
                                  "frequency": [1.0, 2.0, 3.0, 4.0], "phase": [0.0] * 4}
        meas = {"type": "sinusoid", "function": "cos", "amplitude": [0.02, 0.02],
                "frequency": [1.0, 2.0], "phase": [0.0, 0.0]}
        plant["measurement_noise"] = [meas if i in (0, 2) else None for i in range(N)]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": "example1" if noisy else "example1-noise-free",
        "graph": {"n_nodes": N, "edges": _edges_1based(ring(N))},
        "plant": plant,
        "synthesis": {"method": "distributed", "T1_per_node": [1.0 + 0.1 * (i + 1) for i in range(N)],
                      "T2": 10.0},
        "nodes": {"mode": "robust", "mu": 0.003, "epsilon": 0.01, "gamma0": 1.01},
        "integrator": {"dt": dt, "t_final": t_final, "method": "rk4", "record_every": record_every},
        "outputs": {"formats": list(OUTPUT_FORMATS)},
    }
    return ScenarioConfig(doc)


EXAMPLE2_FULL = 100
EXAMPLE2_SCALED = 20
EXAMPLE2_RADIUS = 60.0
EXAMPLE2_SIDE = 300.0


def example2(scale: int | None = None, full_scale: bool = False, seed: int = 0, noisy: bool = False,
             t_final: float = 200.0, dt: float = 1e-3, record_every: int = 100,
             x0_rule=None) -> ScenarioConfig:
    """Sensor network observing a chain of integrators (pure observer).

    ``scale`` sets ``N = n``; default 20, or 100 with ``full_scale``.  The
    square side shrinks with ``sqrt(N / 100)`` so the radius-60 graph keeps
    the node density of the full-size layout.  ``x0_rule(h)`` overrides the
    initial plant state (default ``1 + 0.01 h``, 1-based ``h``).
    """
    N = EXAMPLE2_FULL if full_scale else (scale or EXAMPLE2_SCALED)
    if N < 2:
        raise ConfigError("example2: scale must be at least 2")
    n = N
    side = EXAMPLE2_SIDE * math.sqrt(N / EXAMPLE2_FULL)
    g, coords, seed_used = random_geometric_graph(N, EXAMPLE2_RADIUS, side, seed)
    A = np.diag(np.full(n - 1, 0.01), 1)
    C = [np.eye(n)[i:i + 1].tolist() for i in range(N)]
    rule = x0_rule or (lambda h: 1.0 + 0.01 * h)
    x0 = [float(rule(h)) for h in range(1, n + 1)]
    x_hat0 = [[float(i)] * n for i in range(1, N + 1)]
    plant = {"A": A.tolist(), "C": C, "x0": x0}
    mode = "pure-observer"
    if noisy:
        mode = "pure-observer-robust"
        plant["process_noise"] = {"type": "sinusoid", "function": "sin", "amplitude": [0.2] * n,
                                  "frequency": [0.01] * n, "phase": [0.0] * n}
        plant["measurement_noise"] = [{"type": "sinusoid", "function": "cos", "amplitude": [0.2],
                                       "frequency": [0.01], "phase": [0.0]} for _ in range(N)]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": f"example2-N{N}" + ("-noisy" if noisy else ""),
        "graph": {"n_nodes": N, "edges": _edges_1based(g),
                  "generator": {"kind": "geometric", "radius": EXAMPLE2_RADIUS, "side": side,
                                "seed": int(seed_used), "coords": np.asarray(coords).tolist()}},
        "plant": plant,
        "synthesis": {"method": "centralized", "T2": 1.0},
        "nodes": {"mode": mode, "mu": 0.01, "epsilon": 0.01, "gamma0": 1.01, "x_hat0": x_hat0},
        "integrator": {"dt": dt, "t_final": t_final, "method": "rk4", "record_every": record_every},
        "outputs": {"formats": list(OUTPUT_FORMATS)},
    }
    return ScenarioConfig(doc)
