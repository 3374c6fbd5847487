"""Stability certificate for the averaged dynamics.

A certificate is (p11, p22, P2, P3, delta). It is feasible when

    [[p22 I, P2], [P2^T, P3]] > 0,   Phi1 < 0,   Phi2 < 0,

with Phi1, Phi2 assembled from the graph (through R^T L R), the curvature
bounds (m, M) and the gains. Definiteness is decided with a cyclic Jacobi
eigensolver; strict inequalities need a margin of ``MARGIN``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .costs import ConvexityBounds
from .graph import LaplacianPair

MARGIN = 1e-8
JACOBI_TOL = 1e-12


# --- symmetric eigenvalues ---------------------------------------------------


def jacobi_eig(A, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Rotates until the off-diagonal Frobenius norm is at most ``tol * ||A||_F``.
    Returns ascending eigenvalues and the matching eigenvectors as columns.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"sym_eig needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = np.linalg.norm(A)
    if n and np.linalg.norm(A - A.T) > 1e-9 * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n < 2 or scale == 0.0:
        w = np.diag(A).copy()
        order = np.argsort(w)
        return w[order], V[:, order]
    target = tol * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                diff = A[q, q] - A[p, p]
                if abs(apq) <= 1e-18 * abs(diff):
                    # rotation would be a no-op in floating point
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def sym_eig(A, tol: float = JACOBI_TOL) -> np.ndarray:
    return jacobi_eig(A, tol)[0]


# --- certificate ---------------------------------------------------------------


@dataclass(frozen=True)
class LmiCertificate:
    p11: float
    p22: float
    delta: float
    P2: np.ndarray
    P3: np.ndarray

    def __post_init__(self) -> None:
        P2 = np.atleast_2d(np.asarray(self.P2, dtype=float))
        P3 = np.atleast_2d(np.asarray(self.P3, dtype=float))
        if P2.shape != P3.shape or P2.shape[0] != P2.shape[1]:
            raise ValueError("P2 and P3 must be square and of equal size")
        if not (self.p11 > 0 and self.p22 > 0 and self.delta > 0):
            raise ValueError("p11, p22 and delta must be positive")
        if not np.allclose(P3, P3.T, rtol=0, atol=1e-12 * max(1.0, np.abs(P3).max())):
            raise ValueError("P3 must be symmetric")
        object.__setattr__(self, "P2", P2)
        object.__setattr__(self, "P3", 0.5 * (P3 + P3.T))

    @classmethod
    def scalar(cls, p11, p22, delta, s, p3, n: int) -> LmiCertificate:
        """P2 = s I and P3 = p3 I of size n - 1."""
        I = np.eye(n - 1)
        return cls(p11, p22, delta, s * I, p3 * I)

    def lyapunov_matrix(self) -> np.ndarray:
        """P = blockdiag(p11, [[p22 I, P2], [P2^T, P3]])."""
        k = self.P2.shape[0]
        P = np.zeros((2 * k + 1, 2 * k + 1))
        P[0, 0] = self.p11
        P[1 : k + 1, 1 : k + 1] = self.p22 * np.eye(k)
        P[1 : k + 1, k + 1 :] = self.P2
        P[k + 1 :, 1 : k + 1] = self.P2.T
        P[k + 1 :, k + 1 :] = self.P3
        return P

    def as_dict(self) -> dict:
        return {
            "p11": self.p11,
            "p22": self.p22,
            "delta": self.delta,
            "P2": self.P2.tolist(),
            "P3": self.P3.tolist(),
        }


@dataclass(frozen=True)
class Rates:
    """decay is beta/v for constant-frequency probing and 1/(q rho) for chirpy."""

    decay: float
    alpha: float
    k: float
    gamma: float


@dataclass(frozen=True)
class SideConditions:
    """Exponent conditions that accompany the matrix inequalities."""

    chirpy: bool
    c: float
    v: Optional[float] = None
    p: Optional[float] = None

    def check(self) -> dict[str, bool]:
        if self.chirpy:
            return {"p >= 2": self.p >= 2, "c - p < -2": self.c - self.p < -2}
        out = {"c < -3": self.c < -3}
        if self.v is not None:
            out["v >= 2"] = self.v >= 2
        return out


@dataclass
class FeasibilityReport:
    lmi1_min_eig: float
    phi1_max_eig: float
    phi2_max_eig: float
    feasible: bool
    margins: dict = field(default_factory=dict)
    side_conditions: dict = field(default_factory=dict)

    def summary(self) -> str:
        lines = [
            f"feasible         : {self.feasible}",
            f"min eig [p22 I, P2; P2^T, P3] : {self.lmi1_min_eig:.6g}  (need > {MARGIN:g})",
            f"max eig Phi1     : {self.phi1_max_eig:.6g}  (need < {-MARGIN:g})",
            f"max eig Phi2     : {self.phi2_max_eig:.6g}  (need < {-MARGIN:g})",
        ]
        for name, ok in self.side_conditions.items():
            lines.append(f"side condition {name}: {'holds' if ok else 'violated'}")
        return "\n".join(lines)


def _mirror(block_upper: np.ndarray, sizes: list[int], blocks: dict) -> np.ndarray:
    offs = np.concatenate([[0], np.cumsum(sizes)])
    for (i, j), B in blocks.items():
        block_upper[offs[i] : offs[i + 1], offs[j] : offs[j + 1]] = B
        if i != j:
            block_upper[offs[j] : offs[j + 1], offs[i] : offs[i + 1]] = B.T
    return block_upper


def build_phi(g: LaplacianPair, b: ConvexityBounds, cert: LmiCertificate, rates: Rates):
    """Assemble Phi1 ((2N-1) square) and Phi2 (3(N-1) square).

    Lower triangles mirror the upper blocks, so both are symmetric whenever the
    diagonal blocks are.
    """
    A = g.reduced
    At = A.T
    k = A.shape[0]
    if cert.P2.shape != (k, k):
        raise ValueError(f"certificate blocks are {cert.P2.shape}, graph needs ({k}, {k})")
    I = np.eye(k)
    d, alpha, kk, gamma = rates.decay, rates.alpha, rates.k, rates.gamma
    ak = alpha * kk
    p11, p22, delta, P2, P3 = cert.p11, cert.p22, cert.delta, cert.P2, cert.P3
    m, M = b.m, b.M

    phi11 = 2 * d * p11 - m * p11 * ak + delta * M**2
    phi12 = (2 * d * p22 - m * p11 * ak + delta * M**2) * I
    sym_P2 = 0.5 * (P2 + P2.T)
    Phi1 = _mirror(
        np.zeros((2 * k + 1, 2 * k + 1)),
        [1, k, k],
        {(0, 0): np.array([[phi11]]), (1, 1): phi12, (1, 2): d * P2, (2, 2): -sym_P2},
    )

    phi21 = -p22 * A - p22 * At + gamma * P2 @ A + gamma * At @ P2.T
    phi22 = -p22 * I + 0.5 * gamma * A @ P3.T + 0.5 * gamma * P3 @ At + 0.5 * alpha * A @ P2 + 0.5 * alpha * P2.T @ At
    Phi2 = _mirror(
        np.zeros((3 * k, 3 * k)),
        [k, k, k],
        {
            (0, 0): 0.5 * (phi21 + phi21.T),
            (0, 1): phi22,
            (0, 2): 0.5 * (p22 - p11) * ak * I,
            (1, 1): -sym_P2,
            (1, 2): -0.5 * ak * P2.T,
            (2, 2): -delta * I,
        },
    )
    return Phi1, Phi2


def check_certificate(
    g: LaplacianPair,
    b: ConvexityBounds,
    cert: LmiCertificate,
    rates: Rates,
    side: Optional[SideConditions] = None,
    tol: float = JACOBI_TOL,
) -> FeasibilityReport:
    k = cert.P2.shape[0]
    top = np.block([[cert.p22 * np.eye(k), cert.P2], [cert.P2.T, cert.P3]])
    Phi1, Phi2 = build_phi(g, b, cert, rates)
    lmi1 = float(sym_eig(top, tol)[0])
    phi1 = float(sym_eig(Phi1, tol)[-1])
    phi2 = float(sym_eig(Phi2, tol)[-1])
    margins = {"lmi1": lmi1 - MARGIN, "phi1": -MARGIN - phi1, "phi2": -MARGIN - phi2}
    feasible = all(v > 0 for v in margins.values())
    return FeasibilityReport(
        lmi1, phi1, phi2, feasible, margins, side.check() if side is not None else {}
    )


@dataclass
class SearchResult:
    certificate: Optional[LmiCertificate]
    report: Optional[FeasibilityReport]
    evaluated: int


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def search_certificate(
    g: LaplacianPair,
    b: ConvexityBounds,
    rates: Rates,
    budget: int = 6561,
    span: tuple[float, float] = (1e-4, 1e4),
) -> SearchResult:
    """Grid scan over the scalar family P2 = s I, P3 = p3 I with p22 fixed at 1.

    The inequalities are homogeneous in (p11, p22, delta, P2, P3), so fixing
    p22 loses nothing. Scan order is deterministic: p11, delta, s, p3, each on
    a log grid with floor(budget ** (1/4)) points. Returns the first certificate
    that clears every margin; otherwise the candidate with the best worst-margin.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n = g.L.shape[0]
    per_axis = max(1, int(math.floor(budget ** 0.25 + 1e-9)))
    grid = log_grid(*span, per_axis) if per_axis > 1 else np.array([1.0])
    best: tuple[float, Optional[FeasibilityReport], Optional[LmiCertificate]] = (-np.inf, None, None)
    count = 0
    for p11, delta, s, p3 in itertools.product(grid, repeat=4):
        if count >= budget:
            break
        count += 1
        cert = LmiCertificate.scalar(p11, 1.0, delta, s, p3, n)
        rep = check_certificate(g, b, cert, rates)
        if rep.feasible:
            return SearchResult(cert, rep, count)
        worst = min(rep.margins.values())
        if worst > best[0]:
            best = (worst, rep, cert)
    return SearchResult(None, best[1], count)


# --- Lyapunov monitor ----------------------------------------------------------


def lyapunov_value(xf: np.ndarray, zf: np.ndarray, g: LaplacianPair, cert: LmiCertificate) -> float:
    """V = zeta1^T (P kron I_d) zeta1 with zeta1 = (u_1, u_{2:N}, w_{2:N}),
    u = T^T x_f, w = T^T z_f and T = [r, R].

    ``xf`` and ``zf`` are (N, d) arrays of the averaged coordinates.
    """
    xf = np.asarray(xf, dtype=float)
    zf = np.asarray(zf, dtype=float)
    if xf.ndim == 1:
        xf, zf = xf[:, None], zf.reshape(-1, 1)
    T = np.column_stack([g.r, g.R])
    u = T.T @ xf
    w = T.T @ zf
    zeta = np.concatenate([u, w[1:]], axis=0)  # (2N-1, d)
    P = cert.lyapunov_matrix()
    return float(np.einsum("id,ij,jd->", zeta, P, zeta))
