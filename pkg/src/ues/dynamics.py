"""Right-hand sides of the probed swarm dynamics and of their averaged system.

Two algorithms share one state layout (x, eta, z):

* constant-frequency probing, gains scaled by a growth function xi(t);
* chirpy probing, where the probe phase runs on the dilated clock
  tau(t) = t0 + rho * (phi(t)**q - 1) so that d tau / dt = phi(t)**(p + 1).

The algorithm right-hand sides only see cost *values*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .costs import CostModel, Measurements, OracleError

GROWTH_KINDS = ("classical", "asymptotic", "exponential", "prescribed")
FD_STEP = 1e-4


class GrowthError(ValueError):
    pass


@dataclass(frozen=True)
class GrowthFn:
    """Scaling function phi(t) with phi(t0) = 1, optionally frozen after ``clamp_time``."""

    kind: str = "classical"
    beta: float = 1.0
    v: float = 2.0
    lam: float = 0.03
    T: float = 5.0
    varrho: float = 1.0
    t0: float = 0.0
    clamp_time: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in GROWTH_KINDS:
            raise GrowthError(f"unknown growth kind {self.kind!r}; expected one of {GROWTH_KINDS}")
        if self.kind == "asymptotic" and not (self.beta > 0 and self.v > 0):
            raise GrowthError("asymptotic growth needs beta > 0 and v > 0")
        if self.kind == "exponential" and not self.lam > 0:
            raise GrowthError("exponential growth needs lambda > 0")
        if self.kind == "prescribed":
            if not (self.T > 0 and self.varrho > 0):
                raise GrowthError("prescribed-time growth needs T > 0 and varrho > 0")
            if self.clamp_time is not None and self.clamp_time >= self.t0 + self.T:
                raise GrowthError("prescribed-time clamp must come before t0 + T")
        if self.clamp_time is not None and self.clamp_time < self.t0:
            raise GrowthError("clamp_time must not precede t0")

    def _raw(self, t: float) -> float:
        s = t - self.t0
        if self.kind == "classical":
            return 1.0
        if self.kind == "asymptotic":
            return (1.0 + self.beta * s) ** (1.0 / self.v)
        if self.kind == "exponential":
            return math.exp(self.lam * s)
        if s >= self.T:
            raise GrowthError(f"prescribed-time gain is singular at t={t} >= t0 + T")
        return (self.T / (self.T - s)) ** (1.0 / self.varrho)

    def _raw_rate(self, phi: float) -> float:
        """d phi / dt expressed through phi itself."""
        if self.kind == "classical":
            return 0.0
        if self.kind == "asymptotic":
            return self.beta / self.v * phi ** (1.0 - self.v)
        if self.kind == "exponential":
            return self.lam * phi
        return phi ** (1.0 + self.varrho) / (self.varrho * self.T)

    def clamped(self, t: float) -> bool:
        return self.clamp_time is not None and t > self.clamp_time

    def value(self, t: float) -> float:
        if t < self.t0:
            raise GrowthError(f"growth evaluated before t0 (t={t})")
        if self.clamped(t):
            t = self.clamp_time
        return self._raw(t)

    def rate(self, t: float) -> float:
        """Time derivative of phi; zero once clamped."""
        if self.clamped(t):
            return 0.0
        return self._raw_rate(self.value(t))

    def log_rate(self, t: float) -> float:
        """phi'/phi."""
        return self.rate(t) / self.value(t)


def growth_value(g: GrowthFn, t: float) -> float:
    return g.value(t)


@dataclass(frozen=True)
class EsConfig:
    alpha: float = 1.0
    k: float = 1.0
    gamma: float = 1.0
    omega: float = 10.0
    omega_h: float = 8.0
    omega_hat: tuple[int, ...] = (1,)
    growth: GrowthFn = field(default_factory=GrowthFn)
    q: float = 2.0
    chirpy: bool = False

    def __post_init__(self) -> None:
        for name in ("alpha", "k", "gamma", "omega", "omega_h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"es.{name} must be positive")
        hats = tuple(self.omega_hat)
        if any(int(w) != w or w < 1 for w in hats) or len(set(hats)) != len(hats):
            raise ValueError("omega_hat entries must be pairwise distinct positive integers")
        object.__setattr__(self, "omega_hat", tuple(int(w) for w in hats))
        if self.chirpy:
            if self.growth.kind == "classical":
                raise ValueError("chirpy probing needs an asymptotic, exponential or prescribed growth")
            if self.q < 2:
                raise ValueError("chirpy probing needs q >= 2")
        elif self.growth.kind not in ("classical", "asymptotic"):
            raise ValueError("constant-frequency probing supports classical or asymptotic growth only")

    @property
    def dim(self) -> int:
        return len(self.omega_hat)

    @property
    def omegas(self) -> np.ndarray:
        return self.omega * np.asarray(self.omega_hat, dtype=float)

    @property
    def p(self) -> float:
        """Gain exponent. Constant-frequency probing behaves like p = -1."""
        if not self.chirpy:
            return -1.0
        g = self.growth
        if g.kind == "asymptotic":
            return self.q - g.v - 1.0
        if g.kind == "exponential":
            return self.q - 1.0
        return self.q + g.varrho - 1.0

    @property
    def rho(self) -> float:
        if not self.chirpy:
            raise ValueError("rho is only defined for chirpy probing")
        g = self.growth
        if g.kind == "asymptotic":
            return g.v / (g.beta * self.q)
        if g.kind == "exponential":
            return 1.0 / (g.lam * self.q)
        return g.varrho * g.T / self.q

    @property
    def decay(self) -> float:
        """The rate entering the certificate: beta/v, or 1/(q rho) when chirpy."""
        if self.chirpy:
            return 1.0 / (self.q * self.rho)
        if self.growth.kind == "classical":
            return 0.0
        return self.growth.beta / self.growth.v

    def time_scale(self, t: float) -> float:
        """d tau / dt: phi**(p+1) when chirpy, 1 otherwise."""
        if not self.chirpy:
            return 1.0
        return self.growth.value(t) ** (self.p + 1.0)

    def with_omega(self, omega: float) -> EsConfig:
        return replace(self, omega=omega)


def dilated_time(cfg: EsConfig, t: float) -> float:
    """tau(t) = t0 + rho (phi^q - 1); continued with constant slope past the clamp."""
    g = cfg.growth
    if g.clamped(t):
        tc = g.clamp_time
        return dilated_time(cfg, tc) + cfg.time_scale(tc) * (t - tc)
    return g.t0 + cfg.rho * (g.value(t) ** cfg.q - 1.0)


def chirp_phase(cfg: EsConfig, i: int, t: float) -> float:
    return float(cfg.omegas[i]) * dilated_time(cfg, t)


@dataclass
class SwarmState:
    """Network state: ``x`` and ``z`` are (N, d), ``eta`` is (N,)."""

    x: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        n, d = self.x.shape
        self.eta = np.asarray(self.eta, dtype=float).reshape(n)
        self.z = np.asarray(self.z, dtype=float).reshape(n, d)

    @property
    def n_agents(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.eta, self.z.ravel()])

    @classmethod
    def from_flat(cls, y: np.ndarray, n: int, d: int, t: float = 0.0) -> SwarmState:
        nd = n * d
        return cls(y[:nd].reshape(n, d).copy(), y[nd : nd + n].copy(), y[nd + n :].reshape(n, d).copy(), t)

    @classmethod
    def zeros(cls, n: int, d: int = 1, t: float = 0.0) -> SwarmState:
        return cls(np.zeros((n, d)), np.zeros(n), np.zeros((n, d)), t)


FlatRhs = Callable[[float, np.ndarray], np.ndarray]


def _check_dims(cfg: EsConfig, meas, L: np.ndarray) -> tuple[int, int]:
    n, d = meas.n_agents, meas.dim
    if cfg.dim != d:
        raise ValueError(f"config probes {cfg.dim} dimensions but the cost has dim {d}")
    if L.shape != (n, n):
        raise ValueError(f"Laplacian shape {L.shape} does not match {n} agents")
    return n, d


def _as_measurements(c) -> Measurements:
    return c.measurements() if isinstance(c, CostModel) else c


def make_rhs(cfg: EsConfig, c, L: np.ndarray) -> FlatRhs:
    """Flat-vector right-hand side of the probed algorithm selected by ``cfg.chirpy``.

    ``L`` is the N x N Laplacian; in the agent-major layout L @ X equals (L kron I_d) x.
    """
    meas = _as_measurements(c)
    n, d = _check_dims(cfg, meas, L)
    nd = n * d
    omegas = cfg.omegas
    amp = np.sqrt(cfg.alpha * omegas)
    growth, k, gamma, wh = cfg.growth, cfg.k, cfg.gamma, cfg.omega_h
    values = meas.values

    if not cfg.chirpy:

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            X = y[:nd].reshape(n, d)
            eta = y[nd : nd + n]
            Z = y[nd + n :].reshape(n, d)
            h = values(X, t)
            xi = growth.value(t)
            LX = L @ X
            phase = np.add.outer(k * xi * (h - eta), omegas * t)
            xdot = (amp / xi) * np.cos(phase) - LX - Z / xi
            etadot = wh * (h - eta)
            zdot = (gamma * xi) * LX
            return np.concatenate([xdot.ravel(), etadot, zdot.ravel()])

        return rhs

    p = cfg.p

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        X = y[:nd].reshape(n, d)
        eta = y[nd : nd + n]
        Z = y[nd + n :].reshape(n, d)
        h = values(X, t)
        phi = growth.value(t)
        php = phi**p
        LX = L @ X
        phase = np.add.outer(k * phi * (h - eta), omegas * dilated_time(cfg, t))
        xdot = (php * amp) * np.cos(phase) - (php * phi) * LX - php * Z
        etadot = (wh * php * phi) * (h - eta)
        zdot = (gamma * php * phi * phi) * LX
        return np.concatenate([xdot.ravel(), etadot, zdot.ravel()])

    return rhs


def _state_rhs(rhs: FlatRhs, s: SwarmState) -> SwarmState:
    dy = rhs(s.t, s.flat())
    return SwarmState.from_flat(dy, s.n_agents, s.dim, s.t)


def rhs_constant_freq(s: SwarmState, cfg: EsConfig, c, L: np.ndarray) -> SwarmState:
    if cfg.chirpy:
        raise ValueError("rhs_constant_freq called with a chirpy configuration")
    return _state_rhs(make_rhs(cfg, c, L), s)


def rhs_chirpy(s: SwarmState, cfg: EsConfig, c, L: np.ndarray) -> SwarmState:
    if not cfg.chirpy:
        raise ValueError("rhs_chirpy called with a constant-frequency configuration")
    return _state_rhs(make_rhs(cfg, c, L), s)


# --- averaged system (validation only) ---------------------------------------


class OptimumPath:
    """x*(t), z*(t) and their central-difference time derivatives."""

    def __init__(self, cfg: EsConfig, cost: CostModel):
        if not cost.has_gradient:
            raise OracleError("averaged system needs a cost with a gradient oracle")
        self.cost = cost
        self.scale = 0.5 * cfg.alpha * cfg.k

    def xstar(self, t: float) -> np.ndarray:
        return self.cost.optimum(t)

    def zstar(self, t: float) -> np.ndarray:
        X = np.tile(self.xstar(t), (self.cost.n_agents, 1))
        return -self.scale * self.cost.grads(X, t)

    def hstar(self, t: float) -> np.ndarray:
        X = np.tile(self.xstar(t), (self.cost.n_agents, 1))
        return self.cost.values(X, t)

    @staticmethod
    def _step(t: float) -> float:
        return FD_STEP * max(1.0, abs(t))

    def xstar_dot(self, t: float) -> np.ndarray:
        e = self._step(t)
        return (self.xstar(t + e) - self.xstar(t - e)) / (2 * e)

    def zstar_dot(self, t: float) -> np.ndarray:
        e = self._step(t)
        return (self.zstar(t + e) - self.zstar(t - e)) / (2 * e)

    def hstar_dot(self, t: float) -> np.ndarray:
        e = self._step(t)
        return (self.hstar(t + e) - self.hstar(t - e)) / (2 * e)


def make_averaged_rhs(cfg: EsConfig, cost: CostModel, L: np.ndarray) -> FlatRhs:
    """Lie-bracket averaged dynamics in the scaled error coordinates
    (x_f, eta_f, z_f), written on the original clock t.

    With s(t) = d tau/dt (1 for constant frequency):

        x_f' = (phi'/phi) x_f + s [-(a k / 2) dG(x_bar) - L x_f - z_f - z*] - phi 1 (x) x*'
        eta_f' = (phi'/phi - w_h s) eta_f + w_h s phi h_f - phi h*'
        z_f' = gamma s L x_f - z*'

    where x_bar = x_f / phi + 1 (x) x*.
    """
    n, d = _check_dims(cfg, cost, L)
    nd = n * d
    path = OptimumPath(cfg, cost)
    growth = cfg.growth
    half_ak, gamma, wh = path.scale, cfg.gamma, cfg.omega_h

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        Xf = y[:nd].reshape(n, d)
        ef = y[nd : nd + n]
        Zf = y[nd + n :].reshape(n, d)
        phi = growth.value(t)
        lr = growth.log_rate(t)
        s = cfg.time_scale(t)
        xs = path.xstar(t)
        Xs = np.tile(xs, (n, 1))
        Xbar = Xf / phi + Xs
        LXf = L @ Xf
        drift = -half_ak * cost.grads(Xbar, t)
        xdot = lr * Xf + s * (drift - LXf - Zf - path.zstar(t)) - phi * path.xstar_dot(t)
        hf = cost.values(Xbar, t) - cost.values(Xs, t)
        edot = (lr - wh * s) * ef + (wh * s * phi) * hf - phi * path.hstar_dot(t)
        zdot = (gamma * s) * LXf - path.zstar_dot(t)
        return np.concatenate([xdot.ravel(), edot, zdot.ravel()])

    return rhs


def rhs_averaged(s: SwarmState, cfg: EsConfig, c: CostModel, L: np.ndarray, t: float) -> SwarmState:
    """``s`` holds (x_f, eta_f, z_f) in the x/eta/z slots."""
    dy = make_averaged_rhs(cfg, c, L)(t, s.flat())
    return SwarmState.from_flat(dy, s.n_agents, s.dim, t)


def to_averaged(s: SwarmState, cfg: EsConfig, cost: CostModel) -> SwarmState:
    """Map a full state into the averaged coordinates at time ``s.t``."""
    path = OptimumPath(cfg, cost)
    phi = cfg.growth.value(s.t)
    xs = path.xstar(s.t)
    return SwarmState(
        phi * (s.x - xs), phi * (s.eta - path.hstar(s.t)), s.z - path.zstar(s.t), s.t
    )


def from_averaged_x(xf: np.ndarray, t: float, cfg: EsConfig, cost: CostModel) -> np.ndarray:
    """Reconstruct x = x_f / phi + 1 (x) x*."""
    return np.asarray(xf) / cfg.growth.value(t) + cost.optimum(t)


def error_coords(s: SwarmState, c: CostModel, g: GrowthFn) -> tuple[np.ndarray, np.ndarray]:
    phi = g.value(s.t)
    xs = c.optimum(s.t)
    Xs = np.tile(xs, (s.n_agents, 1))
    return phi * (s.x - xs), phi * (s.eta - c.values(Xs, s.t))
