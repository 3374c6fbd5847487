"""Post-hoc analysis of simulated trajectories."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .costs import CostModel
from .dynamics import (
    EsConfig,
    GrowthFn,
    OptimumPath,
    SwarmState,
    make_averaged_rhs,
    make_rhs,
    to_averaged,
)
from .integrate import StepPolicy, Trajectory, simulate, step_cap

log = logging.getLogger(__name__)


@dataclass
class RunReport:
    final_error: float
    rate_sup: float
    invariant_drift: float
    consensus_spread: float
    times: np.ndarray = field(repr=False)
    agent_errors: np.ndarray = field(repr=False)  # (samples, N)
    growth_bound_ratio: Optional[float] = None

    @property
    def max_error(self) -> np.ndarray:
        return self.agent_errors.max(axis=1)

    def error_at(self, t: float) -> float:
        """Max-agent error at the recorded sample closest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        return float(self.max_error[i])

    def as_dict(self) -> dict:
        out = {
            "final_error": self.final_error,
            "rate_sup": self.rate_sup,
            "invariant_drift": self.invariant_drift,
            "consensus_spread": self.consensus_spread,
        }
        if self.growth_bound_ratio is not None:
            out["growth_bound_ratio"] = self.growth_bound_ratio
        return out


def optimum_series(times: np.ndarray, cost: CostModel) -> np.ndarray:
    return np.array([cost.optimum(float(t)) for t in times])


def agent_errors(traj: Trajectory, cost: CostModel) -> np.ndarray:
    xs = optimum_series(traj.times, cost)
    return np.linalg.norm(traj.x - xs[:, None, :], axis=2)


def tail_slice(n: int, tail_fraction: float) -> slice:
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must be in (0, 1]")
    return slice(min(n - 1, int(math.floor(n * (1.0 - tail_fraction)))), n)


def growth_series(g: GrowthFn, times: np.ndarray) -> np.ndarray:
    return np.array([g.value(float(t)) for t in times])


def growth_bound_ratio(
    cost: CostModel, g: GrowthFn, times: np.ndarray, c: float, stride: int = 1
) -> float:
    """max over samples of |x*'(t)| / phi(t)^c, with x*' from central differences.

    Only a monitor: the bound functions behind the growth assumption are never
    estimated, the exponent ``c`` is declared by the scenario.
    """
    worst = 0.0
    for t in times[::stride]:
        t = float(t)
        e = 1e-4 * max(1.0, abs(t))
        lo = max(t - e, g.t0)
        rate = np.linalg.norm(cost.optimum(t + e) - cost.optimum(lo)) / (t + e - lo)
        if rate > 0.0:
            worst = max(worst, float(rate / g.value(t) ** c))
    return worst


def analyze(
    traj: Trajectory,
    cost: CostModel,
    g: GrowthFn,
    tail_fraction: float = 0.5,
    growth_exponent: Optional[float] = None,
) -> RunReport:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    errs = agent_errors(traj, cost)
    emax = errs.max(axis=1)
    tail = tail_slice(len(traj), tail_fraction)
    phi = growth_series(g, traj.times)
    Z = traj.z
    drift = float(np.abs(Z.sum(axis=1) - Z[0].sum(axis=0)).max())
    X = traj.x[tail]
    spread = float(np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=3).max())
    ratio = None
    if growth_exponent is not None:
        stride = max(1, len(traj) // 500)
        ratio = growth_bound_ratio(cost, g, traj.times, growth_exponent, stride)
        log.info("growth bound monitor: max |x*'|/phi^c = %.3g (c=%g)", ratio, growth_exponent)
    return RunReport(
        final_error=float(emax[-1]),
        rate_sup=float((phi[tail] * emax[tail]).max()),
        invariant_drift=drift,
        consensus_spread=spread,
        times=traj.times,
        agent_errors=errs,
        growth_bound_ratio=ratio,
    )


def envelope(times: np.ndarray, values: np.ndarray, window: float) -> tuple[np.ndarray, np.ndarray]:
    """Block maxima over consecutive windows of length ``window``.

    Returns the right edge of each complete block and the block maximum. Used
    to strip the probing oscillation before fitting a decay rate.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t0 = times[0]
    idx = np.floor((times - t0) / window + 1e-12).astype(int)
    n_full = int(np.floor((times[-1] - t0) / window + 1e-12))
    edges, maxima = [], []
    for b in range(n_full):
        sel = idx == b
        if np.any(sel):
            edges.append(t0 + (b + 1) * window)
            maxima.append(values[sel].max())
    return np.array(edges), np.array(maxima)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n: int


def fit_log_rate(times: np.ndarray, values: np.ndarray) -> RateFit:
    """Least-squares line through (t, log value)."""
    t = np.asarray(times, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    if len(t) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return RateFit(float(slope), float(intercept), r2, len(t))


def tail_rate(report: RunReport, window: float, tail_fraction: float = 0.5) -> RateFit:
    edges, env = envelope(report.times, report.max_error, window)
    start = report.times[0] + (1.0 - tail_fraction) * (report.times[-1] - report.times[0])
    keep = edges > start
    return fit_log_rate(edges[keep], env[keep])


# --- averaged system ------------------------------------------------------------


def averaged_step(cfg: EsConfig, L: np.ndarray, curvature: float, policy: StepPolicy):
    """Step function for the averaged system.

    Keeps h * s(t) * lam below 1, where lam bounds the fastest averaged mode
    (gradient drift, graph coupling and the filter), and never exceeds the
    probed system's cap so both runs share a time grid when possible.
    """
    lam = 0.5 * cfg.alpha * cfg.k * curvature + float(np.abs(L).sum(axis=1).max()) + cfg.omega_h

    def step(t: float) -> float:
        h = min(step_cap(cfg, t, policy), 1.0 / (cfg.time_scale(t) * lam))
        return max(h, policy.h_min)

    return step


def averaged_run(
    cfg: EsConfig,
    cost: CostModel,
    L: np.ndarray,
    s0: SwarmState,
    t_end: float,
    policy: StepPolicy,
    curvature: float,
) -> Trajectory:
    """Simulate the averaged dynamics from the image of the full state ``s0``."""
    a0 = to_averaged(s0, cfg, cost)
    return simulate(
        make_averaged_rhs(cfg, cost, L),
        a0,
        t_end,
        policy,
        cfg=cfg,
        step=averaged_step(cfg, L, curvature, policy),
    )


def averaged_x(traj: Trajectory, cfg: EsConfig, cost: CostModel) -> np.ndarray:
    """x = x_f / phi + 1 (x) x* along an averaged trajectory, (samples, N, d)."""
    phi = growth_series(cfg.growth, traj.times)
    xs = optimum_series(traj.times, cost)
    return traj.x / phi[:, None, None] + xs[:, None, :]


def averaged_invariant_drift(traj: Trajectory) -> float:
    Z = traj.z
    return float(np.abs(Z.sum(axis=1) - Z[0].sum(axis=0)).max())


def averaging_gap(
    cfg: EsConfig,
    cost: CostModel,
    L: np.ndarray,
    s0: SwarmState,
    t_end: float,
    omegas: Sequence[float],
    policy: StepPolicy = StepPolicy(),
) -> list[float]:
    """sup over recorded times of max_i |x_i(t) - x_avg,i(t)| for each base frequency.

    The averaged system does not depend on the probing frequency; the full
    system is rerun per frequency and compared on a shared time grid.
    """
    if t_end <= s0.t:
        return [0.0 for _ in omegas]
    policy = dataclasses.replace(policy, record_stride=1)
    gaps = []
    for w in omegas:
        c = cfg.with_omega(float(w))
        full = simulate(make_rhs(c, cost, L), s0, t_end, policy, cfg=c)
        avg = simulate(
            make_averaged_rhs(c, cost, L),
            to_averaged(s0, c, cost),
            t_end,
            policy,
            cfg=c,
            step=_grid_step(full.times),
        )
        xa = averaged_x(avg, c, cost)
        gaps.append(float(np.linalg.norm(full.x - xa, axis=2).max()))
    return gaps


def _grid_step(times: np.ndarray):
    """Replays a recorded grid so a second run lands on the same sample times."""
    times = np.asarray(times, dtype=float)

    def step(t: float) -> float:
        i = int(np.searchsorted(times, t))
        if i < len(times) and i > 0 and (times[i] - t) > (t - times[i - 1]):
            i -= 1
        i = min(i, len(times) - 2)
        return float(times[i + 1] - t)

    return step


def consensus_spread(X: np.ndarray) -> float:
    return float(np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=3).max())


__all__ = [
    "OptimumPath",
    "RateFit",
    "RunReport",
    "analyze",
    "averaged_run",
    "averaged_invariant_drift",
    "averaged_x",
    "averaging_gap",
    "consensus_spread",
    "envelope",
    "fit_log_rate",
    "growth_bound_ratio",
    "tail_rate",
]
