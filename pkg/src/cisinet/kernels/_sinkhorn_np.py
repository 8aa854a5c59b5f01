"""Pure-numpy lane of the entropic optimal-transport kernel.

Log-domain scaling iterations with uniform marginals and squared-Euclidean
ground cost.  ``sinkhorn_forward`` returns the transport cost <P, C> plus the
per-iteration potential history; ``sinkhorn_backward`` replays the iterations
in reverse to produce exact gradients of the truncated iteration w.r.t. both
point sets.  The compiled twin in ``_sinkhorn.pyx`` mirrors this file
operation for operation.
"""

from __future__ import annotations

import numpy as np


def _cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)
    bb = (b * b).sum(axis=1)
    c = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(c, 0.0, out=c)
    return c


def _lse_rows(x: np.ndarray) -> np.ndarray:
    mx = x.max(axis=1)
    return mx + np.log(np.exp(x - mx[:, None]).sum(axis=1))


def _lse_cols(x: np.ndarray) -> np.ndarray:
    mx = x.max(axis=0)
    return mx + np.log(np.exp(x - mx[None, :]).sum(axis=0))


def sinkhorn_forward(a: np.ndarray, b: np.ndarray, eps: float, iters: int):
    """Run ``iters`` scaling iterations; return (cost, u_hist, v_hist).

    Potentials are stored per iteration (row s holds the state after
    iteration s; row 0 is the all-zero start) for the backward replay.
    """
    n, m = a.shape[0], b.shape[0]
    c = _cost_matrix(a, b)
    mat = -c / eps
    log_mu = -np.log(n)
    log_nu = -np.log(m)
    u = np.zeros(n)
    v = np.zeros(m)
    u_hist = np.zeros((iters + 1, n))
    v_hist = np.zeros((iters + 1, m))
    for s in range(1, iters + 1):
        u = log_mu - _lse_rows(mat + v[None, :])
        v = log_nu - _lse_cols(mat + u[:, None])
        u_hist[s] = u
        v_hist[s] = v
    plan = np.exp(mat + u[:, None] + v[None, :])
    cost = float((plan * c).sum())
    return cost, u_hist, v_hist


def sinkhorn_backward(a: np.ndarray, b: np.ndarray, eps: float,
                      u_hist: np.ndarray, v_hist: np.ndarray, gbar: float):
    """Gradient of ``gbar * cost`` w.r.t. the two point sets."""
    n, m = a.shape[0], b.shape[0]
    iters = u_hist.shape[0] - 1
    c = _cost_matrix(a, b)
    mat = -c / eps
    log_mu = -np.log(n)
    log_nu = -np.log(m)

    u = u_hist[iters]
    v = v_hist[iters]
    plan = np.exp(mat + u[:, None] + v[None, :])
    pc = plan * c
    mat_bar = pc.copy()
    u_bar = pc.sum(axis=1)
    v_bar = pc.sum(axis=0)
    c_bar = plan.copy()

    for s in range(iters, 0, -1):
        u_s = u_hist[s]
        # v_s = log_nu - lse_cols(mat + u_s); softmax over columns
        q = np.exp(mat + u_s[:, None] + v_hist[s][None, :] - log_nu)
        g2 = -q * v_bar[None, :]
        mat_bar += g2
        u_bar = u_bar + g2.sum(axis=1)
        # u_s = log_mu - lse_rows(mat + v_{s-1}); softmax over rows
        r = np.exp(mat + v_hist[s - 1][None, :] + u_s[:, None] - log_mu)
        g1 = -r * u_bar[:, None]
        mat_bar += g1
        v_bar = g1.sum(axis=0)
        u_bar = np.zeros(n)

    c_bar -= mat_bar / eps
    row_sum = c_bar.sum(axis=1)
    col_sum = c_bar.sum(axis=0)
    ga = 2.0 * gbar * (row_sum[:, None] * a - c_bar @ b)
    gb = 2.0 * gbar * (col_sum[:, None] * b - c_bar.T @ a)
    return ga, gb
