"""Fixed-step classic Runge-Kutta integration with a probe-aware step cap."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import EsConfig, SwarmState

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t:.17g}")
        self.t = t


@dataclass(frozen=True)
class StepPolicy:
    samples_per_period: int = 40
    h_max: float = 0.1
    h_min: float = 1e-7
    record_stride: int = 1

    def __post_init__(self) -> None:
        if self.samples_per_period < 8:
            raise ValueError("samples_per_period must be >= 8")
        if not 0 < self.h_min <= self.h_max:
            raise ValueError("need 0 < h_min <= h_max")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


def step_cap(cfg: EsConfig, t: float, policy: StepPolicy) -> float:
    """Largest step resolving the fastest instantaneous probe frequency."""
    w = float(np.max(cfg.omegas)) * cfg.time_scale(t)
    h = min(policy.h_max, 2.0 * math.pi / (w * policy.samples_per_period))
    if h < policy.h_min:
        log.warning("step cap %.3g below h_min at t=%.6g; using h_min", h, t)
        h = policy.h_min
    return h


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # one flat state per row
    n_agents: int
    dim: int
    config: dict = field(default_factory=dict)
    steps: int = 0

    def __len__(self) -> int:
        return len(self.times)

    @property
    def x(self) -> np.ndarray:
        """(samples, N, d)"""
        nd = self.n_agents * self.dim
        return self.states[:, :nd].reshape(-1, self.n_agents, self.dim)

    @property
    def eta(self) -> np.ndarray:
        nd = self.n_agents * self.dim
        return self.states[:, nd : nd + self.n_agents]

    @property
    def z(self) -> np.ndarray:
        nd = self.n_agents * self.dim
        return self.states[:, nd + self.n_agents :].reshape(-1, self.n_agents, self.dim)

    def state(self, i: int) -> SwarmState:
        return SwarmState.from_flat(self.states[i], self.n_agents, self.dim, float(self.times[i]))


def check_horizon(cfg: EsConfig, t_end: float) -> None:
    g = cfg.growth
    if g.kind == "prescribed" and g.clamp_time is None and t_end >= g.t0 + g.T:
        raise ValueError(
            f"prescribed-time run without clamp cannot reach t_end={t_end} >= t0 + T = {g.t0 + g.T}"
        )


def simulate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    s0: SwarmState,
    t_end: float,
    policy: StepPolicy,
    cfg: Optional[EsConfig] = None,
    step: Optional[Callable[[float], float]] = None,
) -> Trajectory:
    """Integrate ``rhs`` from ``s0`` to exactly ``t_end`` with RK4.

    The step is ``step(t)`` when given, else ``step_cap(cfg, t, policy)`` when a
    config is given, else ``policy.h_max``.
    """
    t = float(s0.t)
    if not t_end > t:
        raise ValueError("t_end must be after the initial time")
    if cfg is not None:
        check_horizon(cfg, t_end)
    if step is None:
        if cfg is not None:
            step = lambda tt: step_cap(cfg, tt, policy)  # noqa: E731
        else:
            step = lambda tt: policy.h_max  # noqa: E731

    y = s0.flat()
    times = [t]
    states = [y.copy()]
    stride = policy.record_stride
    n_steps = 0
    while t < t_end:
        h = step(t)
        remaining = t_end - t
        if remaining <= h * (1.0 + 1e-9):
            h = remaining
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        t = t_end if h == remaining else t + h
        n_steps += 1
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state", t)
        if n_steps % stride == 0 or t == t_end:
            times.append(t)
            states.append(y.copy())
    return Trajectory(np.array(times), np.array(states), s0.n_agents, s0.dim, steps=n_steps)
