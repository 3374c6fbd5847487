"""Turns a Scenario into a simulation, an analysis and a set of artifacts."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .costs import ConvexityBounds
from .dynamics import make_rhs
from .graph import laplacian
from .integrate import Trajectory, simulate
from .lmi import FeasibilityReport, LmiCertificate, Rates, SearchResult, SideConditions, check_certificate, search_certificate
from .metrics import RunReport, analyze, optimum_series
from .output import write_csv, write_plot, write_report, write_summary
from .scenario import ConfigError, GateResult, Scenario, evaluate_gates

log = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    scenario: Scenario
    trajectory: Trajectory
    report: RunReport
    gates: list[GateResult]
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def summary(self) -> dict:
        s = self.scenario
        return {
            "scenario": s.name,
            "description": s.description,
            "t_end": s.t_end,
            "omega": s.es.omega,
            "steps": self.trajectory.steps,
            "samples": len(self.trajectory),
            "elapsed_s": round(self.elapsed, 3),
            "report": self.report.as_dict(),
            "gates": [
                {"gate": g.gate.describe(), "measured": g.measured, "passed": g.passed} for g in self.gates
            ],
            "passed": self.passed,
        }

    def report_lines(self) -> list[str]:
        s, r = self.scenario, self.report
        lines = [
            f"scenario        : {s.name}",
            f"description     : {s.description}",
            f"growth          : {s.es.growth.kind}{' (chirpy)' if s.es.chirpy else ''}",
            f"t_end           : {s.t_end:g}   omega: {s.es.omega:g}   steps: {self.trajectory.steps}",
            f"final_error     : {r.final_error:.6g}",
            f"rate_sup        : {r.rate_sup:.6g}",
            f"invariant_drift : {r.invariant_drift:.3g}",
            f"consensus_spread: {r.consensus_spread:.6g}",
        ]
        if r.growth_bound_ratio is not None:
            lines.append(f"growth monitor  : max |x*'|/phi^c = {r.growth_bound_ratio:.6g} (c = {s.growth_exponent:g})")
        lines.append("gates:")
        lines += ["  " + g.line() for g in self.gates] or ["  (none)"]
        lines.append(f"result          : {'PASS' if self.passed else 'FAIL'}")
        return lines


def simulate_scenario(s: Scenario) -> Trajectory:
    L = laplacian(s.graph).L
    return simulate(make_rhs(s.es, s.cost, L), s.initial, s.t_end, s.policy, cfg=s.es)


def run_scenario(s: Scenario, out_dir: Optional[Path] = None) -> RunOutcome:
    start = time.perf_counter()
    traj = simulate_scenario(s)
    report = analyze(traj, s.cost, s.es.growth, s.tail_fraction, s.growth_exponent)
    gates = evaluate_gates(s, report)
    outcome = RunOutcome(s, traj, report, gates, time.perf_counter() - start)
    if out_dir is not None:
        write_artifacts(outcome, Path(out_dir))
    return outcome


def write_artifacts(outcome: RunOutcome, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    traj = outcome.trajectory
    xstar = optimum_series(traj.times, outcome.scenario.cost)
    write_csv(out / "trajectory.csv", traj, xstar, outcome.report.agent_errors)
    write_report(out / "report.txt", outcome.report_lines())
    write_summary(out / "summary.json", outcome.summary())
    write_plot(out / "plot.svg", traj, xstar, f"{outcome.scenario.name}: agent estimates and optimum")


# --- certificate ---------------------------------------------------------------------


def rates_for(s: Scenario) -> Rates:
    return Rates(s.es.decay, s.es.alpha, s.es.k, s.es.gamma)


def side_conditions_for(s: Scenario) -> SideConditions:
    c = s.growth_exponent if s.growth_exponent is not None else math.inf
    g = s.es.growth
    if s.es.chirpy:
        return SideConditions(True, c, p=s.es.p)
    return SideConditions(False, c, v=g.v if g.kind == "asymptotic" else None)


def bounds_for(s: Scenario) -> ConvexityBounds:
    """Curvature bounds over [lmi].box, else a box spanning x(0) and x*(t0) padded by 1."""
    box = s.lmi.get("box")
    if box is None:
        xs = s.cost.optimum(s.initial.t)
        lo = np.minimum(s.initial.x.min(axis=0), xs) - 1.0
        hi = np.maximum(s.initial.x.max(axis=0), xs) + 1.0
        box = [[float(a), float(b)] for a, b in zip(lo, hi)]
        log.info("default lmi.box = %r", box)
    elif len(box) == 2 and all(isinstance(v, (int, float)) for v in box):
        box = [list(map(float, box))] * s.cost.dim
    return s.cost.convexity_bounds(box)


def certificate_from(s: Scenario) -> LmiCertificate:
    cfg = s.lmi
    missing = [k for k in ("p11", "p22", "delta", "P2", "P3") if k not in cfg]
    if missing:
        raise ConfigError(f"lmi check needs {missing}", "lmi")
    k = s.graph.n - 1

    def block(key):
        v = cfg[key]
        return float(v) * np.eye(k) if isinstance(v, (int, float)) else np.asarray(v, dtype=float)

    try:
        return LmiCertificate(float(cfg["p11"]), float(cfg["p22"]), float(cfg["delta"]), block("P2"), block("P3"))
    except ValueError as exc:
        raise ConfigError(str(exc), "lmi") from exc


def lmi_check(s: Scenario) -> FeasibilityReport:
    g = laplacian(s.graph)
    rep = check_certificate(g, bounds_for(s), certificate_from(s), rates_for(s), side_conditions_for(s))
    return rep


def lmi_search(s: Scenario, budget: Optional[int] = None) -> tuple[SearchResult, ConvexityBounds]:
    g = laplacian(s.graph)
    b = bounds_for(s)
    res = search_certificate(g, b, rates_for(s), budget=int(budget or s.lmi.get("budget", 6561)))
    if res.report is not None:
        res.report.side_conditions = side_conditions_for(s).check()
    return res, b
