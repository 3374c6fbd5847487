"""Per-agent time-varying cost models.

The simulation only ever sees a :class:`Measurements` view (values). Gradient,
Hessian and optimum oracles exist for validation and metrics.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

OPTIMUM_TOL = 1e-10
NEWTON_MAX_ITER = 100


class OracleError(RuntimeError):
    """Raised when a cost model cannot provide the requested oracle."""


@dataclass(frozen=True)
class ConvexityBounds:
    m: float
    M: float
    m_agents: tuple[float, ...] = ()
    M_agents: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not (0.0 <= self.m <= self.M):
            raise ValueError(f"need 0 <= m <= M, got m={self.m}, M={self.M}")


class CostModel:
    """Base class. Subclasses implement ``values`` (vectorized over agents)
    and optionally ``grads``/``hessians``.

    Arrays are agent-major: ``X`` has shape (n_agents, dim).
    """

    family = "custom"
    has_gradient = True
    has_hessian = True

    def __init__(self, n_agents: int, dim: int = 1):
        if n_agents < 1 or dim < 1:
            raise ValueError("n_agents and dim must be positive")
        self.n_agents = n_agents
        self.dim = dim
        self._optimum_cached = functools.lru_cache(maxsize=64)(self._optimum)

    # --- measurement side -------------------------------------------------
    def values(self, X: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def value(self, agent: int, x, t: float) -> float:
        self._check_agent(agent)
        X = np.zeros((self.n_agents, self.dim))
        X[agent] = np.asarray(x, dtype=float).reshape(self.dim)
        return float(self.values(X, t)[agent])

    def measurements(self) -> Measurements:
        return Measurements(self)

    # --- validation side --------------------------------------------------
    def grads(self, X: np.ndarray, t: float) -> np.ndarray:
        raise OracleError(f"{self.family} cost provides no gradient oracle")

    def hessians(self, X: np.ndarray, t: float) -> np.ndarray:
        """Per-agent Hessians, shape (n_agents, dim, dim)."""
        if not self.has_gradient:
            raise OracleError(f"{self.family} cost provides no gradient oracle")
        # central differences of the gradient
        X = np.asarray(X, dtype=float)
        H = np.empty((self.n_agents, self.dim, self.dim))
        for j in range(self.dim):
            step = 1e-5 * np.maximum(1.0, np.abs(X[:, j]))
            Xp, Xm = X.copy(), X.copy()
            Xp[:, j] += step
            Xm[:, j] -= step
            H[:, :, j] = (self.grads(Xp, t) - self.grads(Xm, t)) / (2 * step[:, None])
        return 0.5 * (H + H.transpose(0, 2, 1))

    def grad(self, agent: int, x, t: float) -> np.ndarray:
        self._check_agent(agent)
        X = np.tile(np.asarray(x, dtype=float).reshape(1, self.dim), (self.n_agents, 1))
        return self.grads(X, t)[agent]

    def hessian(self, agent: int, x, t: float) -> np.ndarray:
        self._check_agent(agent)
        X = np.tile(np.asarray(x, dtype=float).reshape(1, self.dim), (self.n_agents, 1))
        return self.hessians(X, t)[agent]

    def total_grad(self, x, t: float) -> np.ndarray:
        X = np.tile(np.asarray(x, dtype=float).reshape(1, self.dim), (self.n_agents, 1))
        return self.grads(X, t).sum(axis=0)

    def total_value(self, x, t: float) -> float:
        X = np.tile(np.asarray(x, dtype=float).reshape(1, self.dim), (self.n_agents, 1))
        return float(self.values(X, t).sum())

    def optimum(self, t: float) -> np.ndarray:
        """Minimizer of the summed cost at time ``t``."""
        return self._optimum_cached(float(t)).copy()

    def _optimum(self, t: float) -> np.ndarray:
        if not self.has_gradient:
            raise OracleError(f"{self.family} cost provides no gradient oracle")
        x = self.optimum_guess(t)
        for _ in range(NEWTON_MAX_ITER):
            g = self.total_grad(x, t)
            gnorm = np.linalg.norm(g)
            if gnorm <= OPTIMUM_TOL:
                return self._polish(x, t)
            X = np.tile(x, (self.n_agents, 1))
            H = self.hessians(X, t).sum(axis=0)
            try:
                dx = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(dx)) or g @ dx >= 0:
                break
            step = 1.0
            while step > 1e-8:
                trial = x + step * dx
                if np.linalg.norm(self.total_grad(trial, t)) < gnorm:
                    break
                step *= 0.5
            else:
                break
            x = trial
        if self.dim == 1:
            return self._polish(self._bisect(t), t)
        raise OracleError(
            f"optimum did not converge at t={t}; summed cost may not be strictly convex"
        )

    def _polish(self, x: np.ndarray, t: float) -> np.ndarray:
        # a few extra Newton steps once inside the tolerance; keep the best
        best, best_norm = x, np.linalg.norm(self.total_grad(x, t))
        for _ in range(3):
            X = np.tile(best, (self.n_agents, 1))
            H = self.hessians(X, t).sum(axis=0)
            try:
                trial = best - np.linalg.solve(H, self.total_grad(best, t))
            except np.linalg.LinAlgError:
                break
            n = np.linalg.norm(self.total_grad(trial, t))
            if not n < best_norm:
                break
            best, best_norm = trial, n
        return best

    def _bisect(self, t: float) -> np.ndarray:
        g = lambda u: float(self.total_grad(np.array([u]), t)[0])  # noqa: E731
        lo, hi = -1.0, 1.0
        for _ in range(200):
            if g(lo) < 0 < g(hi):
                break
            lo, hi = 2 * lo, 2 * hi
        else:
            raise OracleError(f"could not bracket the optimum at t={t}")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if abs(gm) <= OPTIMUM_TOL or hi - lo < 1e-15 * max(1.0, abs(mid)):
                return np.array([mid])
            if gm < 0:
                lo = mid
            else:
                hi = mid
        return np.array([0.5 * (lo + hi)])

    def optimum_guess(self, t: float) -> np.ndarray:
        return np.zeros(self.dim)

    def convexity_bounds(self, box) -> ConvexityBounds:
        """Bounds on per-agent Hessian eigenvalues over ``box``.

        Generic fallback: sample a grid with 101 points per dimension and take
        the extreme eigenvalues. Heuristic; can miss narrow extrema.
        """
        lo, hi = _box(box, self.dim)
        axes = [np.linspace(lo[j], hi[j], 101) for j in range(self.dim)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        m_i = np.full(self.n_agents, np.inf)
        M_i = np.zeros(self.n_agents)
        for x in grid:
            X = np.tile(x, (self.n_agents, 1))
            eig = np.linalg.eigvalsh(self.hessians(X, 0.0))
            m_i = np.minimum(m_i, eig[:, 0])
            M_i = np.maximum(M_i, eig[:, -1])
        m_i = np.maximum(m_i, 0.0)
        return ConvexityBounds(float(m_i.min()), float(M_i.max()), tuple(m_i), tuple(M_i))

    def _check_agent(self, agent: int) -> None:
        if not 0 <= agent < self.n_agents:
            raise IndexError(f"agent {agent} out of range for {self.n_agents} agents")


class Measurements:
    """Value-only view handed to the algorithms."""

    __slots__ = ("_values", "n_agents", "dim")

    def __init__(self, cost: CostModel):
        self._values = cost.values
        self.n_agents = cost.n_agents
        self.dim = cost.dim

    def values(self, X: np.ndarray, t: float) -> np.ndarray:
        return self._values(X, t)


def _box(box, dim: int) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(box, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2) or not np.all(np.isfinite(arr)) or np.any(arr[:, 0] > arr[:, 1]):
        raise ValueError(f"box must be finite [lo, hi] per dimension, got {box!r}")
    return arr[:, 0], arr[:, 1]


class QuadSinSq(CostModel):
    """f_i(x) = sum_j (x_j - c_i)^2 + sin^2(x_j - c_i), time-invariant."""

    family = "quad_sin_sq"

    def __init__(self, centers=(1, 2, 3, 4, 5), dim: int = 1):
        self.centers = np.asarray(centers, dtype=float)
        super().__init__(len(self.centers), dim)

    def values(self, X, t):
        U = X - self.centers[:, None]
        return np.sum(U * U + np.sin(U) ** 2, axis=1)

    def grads(self, X, t):
        U = np.asarray(X, dtype=float) - self.centers[:, None]
        return 2 * U + np.sin(2 * U)

    def hessians(self, X, t):
        U = np.asarray(X, dtype=float) - self.centers[:, None]
        diag = 2 + 2 * np.cos(2 * U)
        return diag[:, :, None] * np.eye(self.dim)

    def optimum_guess(self, t):
        return np.full(self.dim, self.centers.mean())

    def convexity_bounds(self, box):
        lo, hi = _box(box, self.dim)
        m_i = []
        for c in self.centers:
            # f'' = 2 + 2cos(2u) vanishes at u = pi/2 + k*pi
            per_dim = []
            for a, b in zip(lo - c, hi - c):
                k = math.ceil((a - math.pi / 2) / math.pi)
                if math.pi / 2 + k * math.pi <= b:
                    per_dim.append(0.0)
                else:
                    per_dim.append(min(2 + 2 * math.cos(2 * a), 2 + 2 * math.cos(2 * b)))
            m_i.append(max(0.0, min(per_dim)))
        M_i = [4.0] * self.n_agents
        return ConvexityBounds(min(m_i), 4.0, tuple(m_i), tuple(M_i))


class ShiftedQuadratic(CostModel):
    """f_i(x, t) = ||x - a_i sin(b_i t)||^2."""

    family = "shifted_quadratic"

    def __init__(self, a=(0.1, 0.3, 0.5, 0.4, 0.5), b=(0.1, 0.2, 0.3, 0.1, 0.4), dim: int = 1):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape[0] != b.shape[0]:
            raise ValueError("a and b need one entry per agent")
        super().__init__(a.shape[0], dim)
        self.a = np.broadcast_to(a.reshape(a.shape[0], -1), (self.n_agents, dim)).copy()
        self.b = np.broadcast_to(b.reshape(b.shape[0], -1), (self.n_agents, dim)).copy()

    def centers(self, t: float) -> np.ndarray:
        return self.a * np.sin(self.b * t)

    def values(self, X, t):
        U = X - self.centers(t)
        return np.sum(U * U, axis=1)

    def grads(self, X, t):
        return 2 * (np.asarray(X, dtype=float) - self.centers(t))

    def hessians(self, X, t):
        return np.broadcast_to(2 * np.eye(self.dim), (self.n_agents, self.dim, self.dim)).copy()

    def convexity_bounds(self, box):
        _box(box, self.dim)
        n = self.n_agents
        return ConvexityBounds(2.0, 2.0, (2.0,) * n, (2.0,) * n)


AgentFn = Callable[[int, np.ndarray, float], object]


class CustomCost(CostModel):
    """User-supplied per-agent callables ``fn(agent, x, t)``.

    Only ``value`` is required. Without ``grad`` the model still drives the
    algorithms but validation oracles (optimum, averaged system) are disabled.
    """

    family = "custom"

    def __init__(
        self,
        n_agents: int,
        dim: int,
        value: AgentFn,
        grad: Optional[AgentFn] = None,
        hessian: Optional[AgentFn] = None,
    ):
        super().__init__(n_agents, dim)
        self._value = value
        self._grad = grad
        self._hessian = hessian
        self.has_gradient = grad is not None
        self.has_hessian = hessian is not None

    def values(self, X, t):
        return np.array([float(self._value(i, X[i], t)) for i in range(self.n_agents)])

    def value(self, agent, x, t):
        self._check_agent(agent)
        return float(self._value(agent, np.asarray(x, dtype=float).reshape(self.dim), t))

    def grads(self, X, t):
        if self._grad is None:
            raise OracleError("custom cost was built without a gradient")
        return np.array(
            [np.asarray(self._grad(i, X[i], t), dtype=float).reshape(self.dim) for i in range(self.n_agents)]
        )

    def hessians(self, X, t):
        if self._hessian is None:
            return super().hessians(X, t)
        return np.array(
            [
                np.asarray(self._hessian(i, X[i], t), dtype=float).reshape(self.dim, self.dim)
                for i in range(self.n_agents)
            ]
        )


def quadratic_form(Q, n_agents: int = 1) -> CustomCost:
    """Every agent gets 0.5 x^T Q x; handy for checking convexity bounds."""
    Q = np.asarray(Q, dtype=float)
    d = Q.shape[0]
    return CustomCost(
        n_agents,
        d,
        value=lambda i, x, t: 0.5 * x @ Q @ x,
        grad=lambda i, x, t: Q @ x,
        hessian=lambda i, x, t: Q,
    )
