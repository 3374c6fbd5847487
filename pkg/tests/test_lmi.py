import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ues.costs import ConvexityBounds, QuadSinSq, ShiftedQuadratic
from ues.dynamics import EsConfig, GrowthFn, SwarmState
from ues.graph import Digraph, laplacian
from ues.lmi import (
    LmiCertificate,
    Rates,
    SideConditions,
    build_phi,
    check_certificate,
    jacobi_eig,
    lyapunov_value,
    search_certificate,
    sym_eig,
)
from ues.integrate import StepPolicy
from ues.metrics import averaged_run

# Certificate found by the grid search on circulant5 with m = M = 2 and unit gains.
FROZEN = dict(p11=1.0, p22=1.0, delta=0.1, s=0.1, p3=0.1)
FROZEN_RATES = Rates(decay=0.5, alpha=1.0, k=1.0, gamma=1.0)
STRONG = ConvexityBounds(2.0, 2.0)

# Structured certificate for the directed 5-ring, same bounds and gains. The
# scalar family holds nothing feasible on this graph; these blocks came from an
# offline semidefinite solve, rounded to three decimals.
RING_CERT = LmiCertificate(
    1.972,
    1.0,
    0.448,
    np.array(
        [
            [0.238, -0.012, 0.014, -0.007],
            [0.003, 0.236, -0.009, 0.014],
            [-0.007, -0.003, 0.237, -0.016],
            [0.018, -0.011, 0.008, 0.242],
        ]
    ),
    np.array(
        [
            [0.585, 0.19, -0.135, -0.233],
            [0.19, 0.683, 0.243, -0.06],
            [-0.135, 0.243, 0.634, 0.17],
            [-0.233, -0.06, 0.17, 0.437],
        ]
    ),
)


def frozen_cert(n=5):
    return LmiCertificate.scalar(n=n, **FROZEN)


# --- eigenvalues --------------------------------------------------------------------


def eig2_closed(a, b, c):
    mid, rad = 0.5 * (a + c), math.hypot(0.5 * (a - c), b)
    return np.array([mid - rad, mid + rad])


def eig3_closed(A):
    # trigonometric roots of the characteristic cubic
    q = np.trace(A) / 3
    p1 = A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2
    p2 = (A[0, 0] - q) ** 2 + (A[1, 1] - q) ** 2 + (A[2, 2] - q) ** 2 + 2 * p1
    p = math.sqrt(p2 / 6)
    B = (A - q * np.eye(3)) / p
    r = max(-1.0, min(1.0, np.linalg.det(B) / 2))
    phi = math.acos(r) / 3
    e1 = q + 2 * p * math.cos(phi)
    e3 = q + 2 * p * math.cos(phi + 2 * math.pi / 3)
    return np.sort([e1, 3 * q - e1 - e3, e3])


def test_diagonal_eigenvalues():
    assert sym_eig(np.diag([3.0, 1.0, 2.0])).tolist() == [1.0, 2.0, 3.0]


def test_two_by_two_example():
    assert np.allclose(sym_eig([[2.0, 1.0], [1.0, 2.0]]), [1.0, 3.0], atol=1e-14, rtol=0)


def test_rejects_asymmetric_and_non_square():
    with pytest.raises(ValueError):
        sym_eig([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        sym_eig(np.zeros((2, 3)))


def test_trivial_sizes():
    assert sym_eig([[4.0]]).tolist() == [4.0]
    assert sym_eig(np.zeros((3, 3))).tolist() == [0.0, 0.0, 0.0]


sym_entries = st.floats(min_value=-10, max_value=10, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(sym_entries, sym_entries, sym_entries)
def test_matches_two_by_two_closed_form(a, b, c):
    w = sym_eig([[a, b], [b, c]])
    assert np.abs(w - eig2_closed(a, b, c)).max() <= 1e-10 * max(1.0, abs(a), abs(b), abs(c))


@settings(max_examples=100, deadline=None)
@given(st.lists(sym_entries, min_size=6, max_size=6))
def test_matches_three_by_three_closed_form(v):
    A = np.array([[v[0], v[1], v[2]], [v[1], v[3], v[4]], [v[2], v[4], v[5]]])
    scale = max(1.0, np.abs(A).max())
    assume(not v[1] == v[2] == v[4] == 0)
    ref = eig3_closed(A)
    # acos is ill-conditioned near a double root, so the oracle needs a spectral gap
    assume(np.diff(ref).min() > 1e-3 * scale)
    assert np.abs(sym_eig(A) - ref).max() <= 1e-10 * scale


def test_random_six_by_six_invariants(rng):
    for _ in range(10):
        B = rng.normal(size=(6, 6))
        A = B + B.T
        w, V = jacobi_eig(A)
        assert abs(w.sum() - np.trace(A)) <= 1e-10 * np.linalg.norm(A)
        assert abs(np.prod(w) - np.linalg.det(A)) <= 1e-9 * max(1.0, abs(np.linalg.det(A)))
        assert np.abs(V.T @ V - np.eye(6)).max() <= 1e-12
        for j in range(6):
            assert np.linalg.norm(A @ V[:, j] - w[j] * V[:, j]) <= 1e-9 * np.linalg.norm(A)


def test_ill_conditioned_matrix_converges():
    A = np.diag([1e12, 1.0, 1e-12])
    A[0, 1] = A[1, 0] = 1e-3
    w = sym_eig(A)
    assert w[-1] == pytest.approx(1e12) and np.all(np.isfinite(w))


# --- assembly -----------------------------------------------------------------------


def hand_assembled(A, b, cert, rates):
    """Both matrices written out block by block with np.block."""
    k = A.shape[0]
    I = np.eye(k)
    d, al, kk, ga = rates.decay, rates.alpha, rates.k, rates.gamma
    p11, p22, de, P2, P3 = cert.p11, cert.p22, cert.delta, cert.P2, cert.P3
    m, M = b.m, b.M
    zc = np.zeros((k, 1))
    a11 = 2 * d * p11 - m * p11 * al * kk + de * M * M
    a22 = (2 * d * p22 - m * p11 * al * kk + de * M * M) * I
    S = (P2 + P2.T) / 2
    Phi1 = np.block([[np.array([[a11]]), zc.T, zc.T], [zc, a22, d * P2], [zc, d * P2.T, -S]])
    f21 = -p22 * (A + A.T) + ga * (P2 @ A + A.T @ P2.T)
    f22 = -p22 * I + ga / 2 * (A @ P3.T + P3 @ A.T) + al / 2 * (A @ P2 + P2.T @ A.T)
    f23 = (p22 - p11) * al * kk / 2 * I
    Phi2 = np.block(
        [
            [(f21 + f21.T) / 2, f22, f23],
            [f22.T, -S, -al * kk / 2 * P2.T],
            [f23.T, -al * kk / 2 * P2, -de * I],
        ]
    )
    return Phi1, Phi2


def test_matches_hand_assembly_on_three_agents(rng):
    g = laplacian(Digraph(np.array([[0, 1.0, 0.5], [0.5, 0, 1.0], [1.0, 0.5, 0]])))
    P2 = rng.normal(size=(2, 2))
    B = rng.normal(size=(2, 2))
    cert = LmiCertificate(0.7, 1.3, 0.2, P2, B @ B.T + np.eye(2))
    rates = Rates(0.4, 2.0, 3.0, 1.5)
    b = ConvexityBounds(0.5, 3.0)
    got = build_phi(g, b, cert, rates)
    want = hand_assembled(g.reduced, b, cert, rates)
    for x, y in zip(got, want):
        assert np.abs(x - y).max() <= 1e-12


def test_phi_shapes_and_symmetry(circ, rng):
    cert = LmiCertificate(1.0, 1.0, 0.3, rng.normal(size=(4, 4)), np.eye(4))
    Phi1, Phi2 = build_phi(circ, STRONG, cert, FROZEN_RATES)
    assert Phi1.shape == (9, 9) and Phi2.shape == (12, 12)
    assert np.abs(Phi1 - Phi1.T).max() <= 1e-14
    assert np.abs(Phi2 - Phi2.T).max() <= 1e-14


def test_zero_rates_and_curvature_leave_delta_terms(circ):
    cert = frozen_cert()
    Phi1, _ = build_phi(circ, ConvexityBounds(0.0, 0.0), cert, Rates(0.0, 1.0, 1.0, 1.0))
    assert Phi1[0, 0] == 0.0
    assert np.array_equal(np.diag(Phi1)[1:5], np.zeros(4))
    assert np.array_equal(Phi1[5:, 5:], -0.1 * np.eye(4))


def test_size_mismatch_is_reported(circ):
    with pytest.raises(ValueError, match="graph needs"):
        build_phi(circ, STRONG, frozen_cert(n=4), FROZEN_RATES)


# --- certificate checks -------------------------------------------------------------


def test_certificate_validation():
    with pytest.raises(ValueError):
        LmiCertificate(0.0, 1.0, 1.0, np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        LmiCertificate(1.0, 1.0, 1.0, np.eye(2), np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        LmiCertificate(1.0, 1.0, 1.0, np.eye(2), np.eye(3))


def test_frozen_certificate_is_feasible(circ):
    rep = check_certificate(circ, STRONG, frozen_cert(), FROZEN_RATES)
    assert rep.feasible
    tight = check_certificate(circ, STRONG, frozen_cert(), FROZEN_RATES, tol=1e-13)
    assert tight.feasible
    assert tight.phi2_max_eig == pytest.approx(rep.phi2_max_eig, abs=1e-10)


def test_structured_ring_certificate_is_feasible(ring_pair):
    rep = check_certificate(ring_pair, STRONG, RING_CERT, FROZEN_RATES)
    assert rep.feasible and min(rep.margins.values()) > 0.1
    assert check_certificate(ring_pair, STRONG, RING_CERT, FROZEN_RATES, tol=1e-13).feasible


def test_scalar_family_misses_ring(ring_pair):
    assert search_certificate(ring_pair, STRONG, FROZEN_RATES, budget=256).certificate is None


def test_indefinite_top_block_rejected(circ):
    cert = LmiCertificate.scalar(1.0, 1.0, 0.1, 0.1, -0.5, 5)
    rep = check_certificate(circ, STRONG, cert, FROZEN_RATES)
    assert not rep.feasible and rep.lmi1_min_eig < 0


def test_large_delta_breaks_first_inequality(circ):
    cert = LmiCertificate.scalar(1.0, 1.0, 100.0, 0.1, 0.1, 5)
    rep = check_certificate(circ, STRONG, cert, FROZEN_RATES)
    assert rep.phi1_max_eig > 0 and not rep.feasible


def test_phi1_grows_with_delta(circ):
    tops = [
        check_certificate(circ, STRONG, LmiCertificate.scalar(1, 1, d, 0.1, 0.1, 5), FROZEN_RATES).phi1_max_eig
        for d in (0.01, 0.1, 1.0, 10.0)
    ]
    assert all(a <= b for a, b in zip(tops, tops[1:]))


def test_report_summary_lists_side_conditions(circ):
    side = SideConditions(chirpy=False, c=-math.inf, v=2.0)
    rep = check_certificate(circ, STRONG, frozen_cert(), FROZEN_RATES, side)
    text = rep.summary()
    assert "feasible         : True" in text and "c < -3: holds" in text


def test_side_conditions():
    assert SideConditions(False, -4.0, v=2.0).check() == {"c < -3": True, "v >= 2": True}
    assert SideConditions(False, 0.0).check() == {"c < -3": False}
    assert SideConditions(True, 0.0, p=1.0).check() == {"p >= 2": False, "c - p < -2": False}
    assert SideConditions(True, -1.0, p=2.0).check() == {"p >= 2": True, "c - p < -2": True}


# --- search ---------------------------------------------------------------------------


def test_search_recovers_frozen_certificate(circ):
    res = search_certificate(circ, STRONG, FROZEN_RATES, budget=6561)
    assert res.certificate is not None and res.report.feasible
    c = res.certificate
    got = (c.p11, c.p22, c.delta, c.P2[0, 0], c.P3[0, 0])
    assert got == pytest.approx(tuple(FROZEN.values()), rel=1e-12)
    assert res.evaluated == 3190


def test_search_fails_without_strong_convexity(circ):
    b = QuadSinSq().convexity_bounds([-1, 5])
    res = search_certificate(circ, b, FROZEN_RATES, budget=81)
    assert res.certificate is None and res.evaluated == 81
    assert res.report is not None and not res.report.feasible


def test_search_fails_on_unbalanced_graph():
    g = laplacian(Digraph.from_edges(3, [[1, 2, 1], [2, 3, 1], [3, 1, 1], [1, 3, 5]]))
    res = search_certificate(g, STRONG, FROZEN_RATES, budget=81)
    assert res.certificate is None


def test_search_budget_must_be_positive(circ):
    with pytest.raises(ValueError):
        search_certificate(circ, STRONG, FROZEN_RATES, budget=0)


# --- Lyapunov value -------------------------------------------------------------------


def test_lyapunov_zero_state(circ):
    assert lyapunov_value(np.zeros(5), np.zeros(5), circ, frozen_cert()) == 0.0


def test_lyapunov_identity_weight_is_squared_norm(circ, rng):
    cert = LmiCertificate(1.0, 1.0, 1.0, np.zeros((4, 4)), np.eye(4))
    xf, zf = rng.normal(size=5), rng.normal(size=5)
    w = np.column_stack([circ.r, circ.R]).T @ zf
    expected = xf @ xf + w[1:] @ w[1:]
    assert lyapunov_value(xf, zf, circ, cert) == pytest.approx(expected, rel=1e-12)


def test_lyapunov_positive(circ, rng):
    cert = frozen_cert()
    for _ in range(100):
        assert lyapunov_value(rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), circ, cert) > 0


def test_lyapunov_decreases_along_averaged_run(circ):
    cost = ShiftedQuadratic()
    cfg = EsConfig(growth=GrowthFn("asymptotic", beta=1.0, v=2.0))
    s0 = SwarmState(np.array([-1.0, 0, 1, 4, 5]), np.zeros(5), np.zeros(5))
    tr = averaged_run(cfg, cost, circ.L, s0, 20.0, StepPolicy(record_stride=50), curvature=2.0)
    cert = frozen_cert()
    v0 = lyapunov_value(tr.x[0], tr.z[0], circ, cert)
    v1 = lyapunov_value(tr.x[-1], tr.z[-1], circ, cert)
    assert v1 < v0
