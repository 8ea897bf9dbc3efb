"""Shared oracles for the test suite.

Transform matrices here are assembled by brute-force index loops, not by
the library's ``np.roll`` or FFT code, so they serve as independent checks.
"""

from __future__ import annotations

import numpy as np
import pytest


def brute_correlate(u, coeffs, origin=(0, 0), dilation=1):
    """Periodic ``sum_m q[m] u[k + dilation m]`` by explicit loops."""
    u = np.asarray(u, dtype=float)
    N1, N2 = u.shape
    out = np.zeros_like(u)
    for k1 in range(N1):
        for k2 in range(N2):
            acc = 0.0
            for a in range(coeffs.shape[0]):
                for b in range(coeffs.shape[1]):
                    m1, m2 = a - origin[0], b - origin[1]
                    acc += coeffs[a, b] * u[(k1 + dilation * m1) % N1, (k2 + dilation * m2) % N2]
            out[k1, k2] = acc
    return out


def transform_matrix(bank, N):
    """Dense ``((J+1) N^2, N^2)`` matrix of the single-level transform, low-pass first."""
    rows = []
    for filt in bank.filters:
        M = np.zeros((N * N, N * N))
        for k1 in range(N):
            for k2 in range(N):
                for o1, o2, val in filt.taps():
                    M[k1 * N + k2, ((k1 + o1) % N) * N + (k2 + o2) % N] += val
        rows.append(M)
    return np.vstack(rows)


def operator_matrix(A, N):
    return np.array([A.apply(e.reshape(N, N)).ravel() for e in np.eye(N * N)]).T


def cvx_general(f, A, bank, nu1, nu2, q=1, bank2=None):
    """Optimal value of the general model with high-pass penalties (cvxpy/Clarabel)."""
    import cvxpy as cp

    N = f.shape[0]
    W1 = transform_matrix(bank, N)[N * N :]
    W2 = transform_matrix(bank2 or bank, N)[N * N :]
    J1 = W1.shape[0] // (N * N)
    AM = operator_matrix(A, N)
    u = cp.Variable(N * N)
    v = cp.Variable(J1 * N * N)
    Wv = np.kron(np.eye(J1), W2) @ v
    second = cp.norm1(Wv) if q == 1 else cp.sum_squares(Wv)
    obj = 0.5 * cp.sum_squares(AM @ u - f.ravel()) + nu1 * cp.norm1(W1 @ u - v) + nu2 * second
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value), np.asarray(u.value).reshape(N, N)


def cvx_analysis(f, A, bank, nu1, penalize_lowpass=False):
    import cvxpy as cp

    N = f.shape[0]
    W = transform_matrix(bank, N)
    if not penalize_lowpass:
        W = W[N * N :]
    AM = operator_matrix(A, N)
    u = cp.Variable(N * N)
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(AM @ u - f.ravel()) + nu1 * cp.norm1(W @ u)))
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def cvx_balanced(f, A, bank, nu1, balance):
    import cvxpy as cp

    N = f.shape[0]
    W = transform_matrix(bank, N)
    P = np.eye(W.shape[0]) - W @ W.T
    AM = operator_matrix(A, N)
    v = cp.Variable(W.shape[0])
    obj = balance * cp.sum_squares(P @ v) + nu1 * cp.norm1(v) + 0.5 * cp.sum_squares(AM @ (W.T @ v) - f.ravel())
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def subgradient_general(f, A, bank, nu1, nu2, q=1, iters=20000):
    """Best objective seen by diminishing-step subgradient descent on ``(u, v)``.

    Slow but assumption-free: its value is an upper bound on the optimum.
    """
    N = f.shape[0]
    W1 = transform_matrix(bank, N)[N * N :]
    J1 = W1.shape[0] // (N * N)
    W2 = np.kron(np.eye(J1), W1)
    AM = operator_matrix(A, N)
    fv = f.ravel()

    def obj(u, v):
        r2 = W2 @ v
        s = np.sum(np.abs(r2)) if q == 1 else np.sum(r2**2)
        return 0.5 * np.sum((AM @ u - fv) ** 2) + nu1 * np.sum(np.abs(W1 @ u - v)) + nu2 * s

    u = np.zeros(N * N)
    v = np.zeros(J1 * N * N)
    best = obj(u, v)
    for k in range(iters):
        r1 = W1 @ u - v
        r2 = W2 @ v
        g2 = np.sign(r2) if q == 1 else 2 * r2
        gu = AM.T @ (AM @ u - fv) + nu1 * W1.T @ np.sign(r1)
        gv = -nu1 * np.sign(r1) + nu2 * W2.T @ g2
        step = 0.5 / np.sqrt(k + 1)
        u -= step * gu
        v -= step * gv
        best = min(best, obj(u, v))
    return best


@pytest.fixture(scope="session")
def banks():
    from wfrestore.framelet import build_bank

    return {name: build_bank(name) for name in ("haar", "linear")}
