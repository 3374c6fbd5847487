"""Experiment scenarios: TOML parsing, validation, presets and acceptance gates."""

from __future__ import annotations

import importlib
import logging
import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .costs import CostModel, CustomCost, QuadSinSq, ShiftedQuadratic
from .dynamics import EsConfig, GrowthError, GrowthFn, SwarmState
from .graph import DEFAULT_GRAPH, Digraph, GraphError, is_strongly_connected, is_weight_balanced, preset
from .integrate import StepPolicy
from .metrics import RunReport, tail_rate

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Bad scenario configuration. ``where`` names the offending key or line."""

    def __init__(self, message: str, where: Optional[str] = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


# --- schema -----------------------------------------------------------------------

_TOP = {"name", "description", "graph", "cost", "es", "sim", "init", "analysis", "gates", "lmi"}
_GRAPH = {"preset", "n", "edges"}
_COST = {"family", "params"}
_COST_PARAMS = {
    "quad_sin_sq": {"centers", "dim"},
    "shifted_quadratic": {"a", "b", "dim"},
    "custom": {"n_agents", "dim", "value", "grad", "hessian"},
}
_ES = {
    "alpha", "k", "gamma", "omega", "omega_h", "omega_hat", "growth", "beta", "v", "lam",
    "T", "varrho", "t0", "clamp_time", "q", "chirpy",
}
_GROWTH_PARAMS = {
    "classical": set(),
    "asymptotic": {"beta", "v"},
    "exponential": {"lam"},
    "prescribed": {"T", "varrho"},
}
_SIM = {"t_end", "samples_per_period", "h_max", "h_min", "record_stride"}
_INIT = {"x", "eta", "z"}
_ANALYSIS = {"tail_fraction", "growth_exponent", "envelope_window"}
_LMI = {"p11", "p22", "delta", "P2", "P3", "box", "budget"}
_GATE = {"metric", "op", "value", "t", "t_from", "t_to"}

ES_DEFAULTS = {"alpha": 1.0, "k": 1.0, "gamma": 1.0, "omega": 10.0, "omega_h": 8.0, "q": 2.0, "t0": 0.0}
SIM_DEFAULTS = {"samples_per_period": 40, "h_max": 0.1, "h_min": 1e-7, "record_stride": 1}
GATE_METRICS = {
    "final_error", "rate_sup", "invariant_drift", "consensus_spread", "tail_min_error",
    "error_at", "max_error_between", "tail_slope", "tail_r2",
}
GATE_OPS = {"<", "<=", ">", ">=", "in"}


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {extra}; allowed: {sorted(allowed)}", where)


def _table(raw: dict, key: str, where: str) -> dict:
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError("expected a table", f"{where}{key}")
    return val


def _num(table: dict, key: str, where: str, default=None, positive=False) -> Optional[float]:
    if key not in table:
        if default is not None:
            log.info("default %s%s = %r", where, key, default)
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", f"{where}{key}")
    if positive and not val > 0:
        raise ConfigError(f"must be positive, got {val!r}", f"{where}{key}")
    return float(val)


# --- scenario -----------------------------------------------------------------------


@dataclass(frozen=True)
class Gate:
    metric: str
    op: str
    value: Any
    params: dict = field(default_factory=dict)

    def describe(self) -> str:
        extra = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        target = f"[{self.value[0]:g}, {self.value[1]:g}]" if self.op == "in" else f"{self.value:g}"
        head = f"{self.metric}({extra})" if extra else self.metric
        return f"{head} {self.op} {target}"

    def compare(self, measured: float) -> bool:
        if not math.isfinite(measured):
            return False
        if self.op == "in":
            lo, hi = self.value
            return lo <= measured <= hi
        return {
            "<": measured < self.value,
            "<=": measured <= self.value,
            ">": measured > self.value,
            ">=": measured >= self.value,
        }[self.op]


@dataclass(frozen=True)
class GateResult:
    gate: Gate
    measured: float
    passed: bool

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.gate.describe()}  (measured {self.measured:.6g})"


@dataclass
class Scenario:
    name: str
    description: str
    graph: Digraph
    cost: CostModel
    es: EsConfig
    t_end: float
    policy: StepPolicy
    initial: SwarmState
    gates: list[Gate]
    tail_fraction: float = 0.5
    growth_exponent: Optional[float] = None
    envelope_window: Optional[float] = None
    lmi: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)

    @property
    def window(self) -> float:
        """Block length used to strip probing oscillation: one slowest probe period."""
        if self.envelope_window is not None:
            return self.envelope_window
        return 2.0 * math.pi / float(np.min(self.es.omegas))

    def with_overrides(self, t_end: Optional[float] = None, omega: Optional[float] = None) -> Scenario:
        s = self
        if t_end is not None:
            if not t_end > s.initial.t:
                raise ConfigError("t_end must be after the initial time", "sim.t_end")
            s = replace(s, t_end=float(t_end))
        if omega is not None:
            if not omega > 0:
                raise ConfigError("omega must be positive", "es.omega")
            s = replace(s, es=s.es.with_omega(float(omega)))
        return s


# --- builders -----------------------------------------------------------------------


def build_graph(raw: dict) -> Digraph:
    _reject_unknown(raw, _GRAPH, "graph")
    try:
        if "edges" in raw:
            if "preset" in raw:
                raise ConfigError("give either preset or edges, not both", "graph")
            if "n" not in raw:
                raise ConfigError("edge lists need the node count n", "graph.n")
            g = Digraph.from_edges(int(raw["n"]), raw["edges"])
        else:
            name = raw.get("preset", DEFAULT_GRAPH)
            if "preset" not in raw:
                log.info("default graph.preset = %r", name)
            g = preset(name)
    except GraphError as exc:
        raise ConfigError(f"invalid graph: {exc}", "graph") from exc
    if not is_weight_balanced(g):
        log.warning("graph is not weight-balanced; the z-sum invariant is not guaranteed")
    if not is_strongly_connected(g):
        log.warning("graph is not strongly connected")
    return g


def _import_callable(path: str, where: str):
    mod, _, attr = path.partition(":")
    if not mod or not attr:
        raise ConfigError(f"expected 'module:function', got {path!r}", where)
    try:
        return getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import {path!r}: {exc}", where) from exc


def build_cost(raw: dict, n_nodes: int) -> CostModel:
    _reject_unknown(raw, _COST, "cost")
    family = raw.get("family")
    if family not in _COST_PARAMS:
        raise ConfigError(f"expected one of {sorted(_COST_PARAMS)}, got {family!r}", "cost.family")
    params = _table(raw, "params", "cost.")
    _reject_unknown(params, _COST_PARAMS[family], "cost.params")
    dim = int(params.get("dim", 1))
    if family == "quad_sin_sq":
        cost = QuadSinSq(tuple(params.get("centers", range(1, n_nodes + 1))), dim=dim)
    elif family == "shifted_quadratic":
        if "a" not in params or "b" not in params:
            raise ConfigError("needs per-agent arrays a and b", "cost.params")
        cost = ShiftedQuadratic(tuple(params["a"]), tuple(params["b"]), dim=dim)
    else:
        if "value" not in params:
            raise ConfigError("custom costs need a value function 'module:function'", "cost.params.value")
        fns = {
            key: _import_callable(params[key], f"cost.params.{key}")
            for key in ("value", "grad", "hessian")
            if key in params
        }
        cost = CustomCost(int(params.get("n_agents", n_nodes)), dim, **fns)
    if cost.n_agents != n_nodes:
        raise ConfigError(f"cost has {cost.n_agents} agents but the graph has {n_nodes} nodes", "cost.params")
    return cost


def build_es(raw: dict, dim: int) -> EsConfig:
    _reject_unknown(raw, _ES, "es")
    kind = raw.get("growth", "classical")
    if "growth" not in raw:
        log.info("default es.growth = 'classical'")
    if kind not in _GROWTH_PARAMS:
        raise ConfigError(f"unknown growth kind {kind!r}", "es.growth")
    stray = {"beta", "v", "lam", "T", "varrho"} & set(raw) - _GROWTH_PARAMS[kind]
    if stray and kind != "classical":
        raise ConfigError(f"parameter(s) {sorted(stray)} do not apply to {kind} growth", "es")
    if kind == "classical" and (set(raw) & {"lam", "T", "varrho"}):
        raise ConfigError("classical growth takes no growth parameters", "es")
    gkw: dict[str, Any] = {"kind": kind, "t0": _num(raw, "t0", "es.", ES_DEFAULTS["t0"])}
    for key in _GROWTH_PARAMS[kind]:
        if key not in raw:
            raise ConfigError(f"{kind} growth requires es.{key}", f"es.{key}")
        gkw[key] = _num(raw, key, "es.", positive=True)
    if kind == "asymptotic" and "v" in raw and raw["v"] < 2:
        log.warning("es.v = %g < 2 violates the certificate side condition v >= 2", raw["v"])
    clamp = raw.get("clamp_time")
    if clamp == "none":
        clamp = None
    elif clamp is not None:
        clamp = _num(raw, "clamp_time", "es.")
    elif kind == "prescribed":
        clamp = gkw["t0"] + 0.9 * gkw["T"]
        log.info("default es.clamp_time = %r (t0 + 0.9 T)", clamp)
    gkw["clamp_time"] = clamp
    try:
        growth = GrowthFn(**gkw)
    except GrowthError as exc:
        raise ConfigError(str(exc), "es") from exc
    omega_hat = raw.get("omega_hat")
    if omega_hat is None:
        omega_hat = tuple(range(1, dim + 1))
        log.info("default es.omega_hat = %r", omega_hat)
    if len(omega_hat) != dim:
        raise ConfigError(f"needs {dim} entries (one per decision dimension)", "es.omega_hat")
    chirpy = raw.get("chirpy", False)
    if not isinstance(chirpy, bool):
        raise ConfigError("expected true or false", "es.chirpy")
    kw = {key: _num(raw, key, "es.", ES_DEFAULTS[key], positive=True) for key in ("alpha", "k", "gamma", "omega", "omega_h", "q")}
    try:
        return EsConfig(omega_hat=tuple(omega_hat), growth=growth, chirpy=chirpy, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), "es") from exc


def build_initial(raw: dict, n: int, d: int, t0: float) -> SwarmState:
    _reject_unknown(raw, _INIT, "init")

    def arr(key, shape):
        if key not in raw:
            log.info("default init.%s = zeros", key)
            return np.zeros(shape)
        a = np.asarray(raw[key], dtype=float)
        if a.size != int(np.prod(shape)):
            raise ConfigError(f"expected {int(np.prod(shape))} values, got {a.size}", f"init.{key}")
        if not np.all(np.isfinite(a)):
            raise ConfigError("values must be finite", f"init.{key}")
        return a.reshape(shape)

    x, eta, z = arr("x", (n, d)), arr("eta", (n,)), arr("z", (n, d))
    if np.abs(z.sum(axis=0)).max() > 1e-12:
        log.warning("initial z does not sum to zero; the run starts outside the invariant set")
    return SwarmState(x, eta, z, t0)


def build_gate(raw: dict, i: int) -> Gate:
    where = f"gates[{i}]"
    if not isinstance(raw, dict):
        raise ConfigError("expected a table", where)
    _reject_unknown(raw, _GATE, where)
    metric, op = raw.get("metric"), raw.get("op")
    if metric not in GATE_METRICS:
        raise ConfigError(f"unknown metric {metric!r}; choose from {sorted(GATE_METRICS)}", f"{where}.metric")
    if op not in GATE_OPS:
        raise ConfigError(f"unknown op {op!r}; choose from {sorted(GATE_OPS)}", f"{where}.op")
    value = raw.get("value")
    if op == "in":
        if not (isinstance(value, list) and len(value) == 2):
            raise ConfigError("'in' needs a [lo, hi] pair", f"{where}.value")
        value = (float(value[0]), float(value[1]))
    elif isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", f"{where}.value")
    need = {"error_at": {"t"}, "max_error_between": {"t_from", "t_to"}}.get(metric, set())
    have = set(raw) & {"t", "t_from", "t_to"}
    if have != need:
        raise ConfigError(f"{metric} takes parameters {sorted(need) or 'none'}", where)
    return Gate(metric, op, value, {k: float(raw[k]) for k in sorted(need)})


def scenario_from_dict(raw: dict, source: str = "<config>") -> Scenario:
    _reject_unknown(raw, _TOP, source)
    graph = build_graph(_table(raw, "graph", ""))
    cost = build_cost(_table(raw, "cost", ""), graph.n)
    es = build_es(_table(raw, "es", ""), cost.dim)
    sim = _table(raw, "sim", "")
    _reject_unknown(sim, _SIM, "sim")
    if "t_end" not in sim:
        raise ConfigError("required", "sim.t_end")
    t_end = _num(sim, "t_end", "sim.", positive=True)
    try:
        policy = StepPolicy(
            samples_per_period=int(_num(sim, "samples_per_period", "sim.", SIM_DEFAULTS["samples_per_period"])),
            h_max=_num(sim, "h_max", "sim.", SIM_DEFAULTS["h_max"], positive=True),
            h_min=_num(sim, "h_min", "sim.", SIM_DEFAULTS["h_min"], positive=True),
            record_stride=int(_num(sim, "record_stride", "sim.", SIM_DEFAULTS["record_stride"])),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "sim") from exc
    initial = build_initial(_table(raw, "init", ""), graph.n, cost.dim, es.growth.t0)
    if not t_end > initial.t:
        raise ConfigError("must be after t0", "sim.t_end")
    analysis = _table(raw, "analysis", "")
    _reject_unknown(analysis, _ANALYSIS, "analysis")
    tail = _num(analysis, "tail_fraction", "analysis.", 0.5)
    if not 0 < tail <= 1:
        raise ConfigError("must be in (0, 1]", "analysis.tail_fraction")
    lmi = _table(raw, "lmi", "")
    _reject_unknown(lmi, _LMI, "lmi")
    gates_raw = raw.get("gates", [])
    if not isinstance(gates_raw, list):
        raise ConfigError("expected an array of tables [[gates]]", "gates")
    return Scenario(
        name=str(raw.get("name", Path(source).stem)),
        description=str(raw.get("description", "")),
        graph=graph,
        cost=cost,
        es=es,
        t_end=t_end,
        policy=policy,
        initial=initial,
        gates=[build_gate(g, i) for i, g in enumerate(gates_raw)],
        tail_fraction=tail,
        growth_exponent=_num(analysis, "growth_exponent", "analysis."),
        envelope_window=_num(analysis, "envelope_window", "analysis.", positive=True),
        lmi=lmi,
        source=raw,
    )


_LINE_RE = re.compile(r"line (\d+)")


def parse_text(text: str, source: str = "<config>") -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LINE_RE.search(str(exc))
        where = f"{source}:{m.group(1)}" if m else source
        raise ConfigError(f"parse error: {exc}", where) from exc
    return scenario_from_dict(raw, source)


def parse_config(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("no such file", str(path))
    return parse_text(path.read_text(encoding="utf-8"), str(path))


# --- presets -------------------------------------------------------------------------


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("ues.presets").iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise ConfigError(f"unknown preset; available: {preset_names()}", name)
    return resources.files("ues.presets").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def load_preset(name: str) -> Scenario:
    return parse_text(preset_text(name), f"{name}.toml")


def load(ref: str) -> Scenario:
    """A path to a TOML file, or a preset name."""
    if Path(ref).is_file():
        return parse_config(ref)
    if ref in preset_names():
        return load_preset(ref)
    raise ConfigError("neither a config file nor a preset name", ref)


# --- gates ---------------------------------------------------------------------------


def measure(gate: Gate, report: RunReport, scenario: Scenario) -> float:
    m = gate.metric
    if m in ("final_error", "rate_sup", "invariant_drift", "consensus_spread"):
        return float(getattr(report, m))
    if m == "tail_min_error":
        n = len(report.times)
        return float(report.max_error[int(n * (1 - scenario.tail_fraction)) :].min())
    if m == "error_at":
        return report.error_at(gate.params["t"])
    if m == "max_error_between":
        sel = (report.times >= gate.params["t_from"] - 1e-12) & (report.times <= gate.params["t_to"] + 1e-12)
        return float(report.max_error[sel].max()) if np.any(sel) else math.nan
    fit = tail_rate(report, scenario.window, scenario.tail_fraction)
    return fit.slope if m == "tail_slope" else fit.r2


def evaluate_gates(scenario: Scenario, report: RunReport) -> list[GateResult]:
    out = []
    for g in scenario.gates:
        try:
            val = measure(g, report, scenario)
        except ValueError as exc:
            log.warning("gate %s could not be measured: %s", g.describe(), exc)
            val = math.nan
        out.append(GateResult(g, val, g.compare(val)))
    return out
