"""Independent reference computations used to cross-check the exact solvers.

None of these share code with the routines they check.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np


def transport_bruteforce(cost: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    """Minimum transport cost by enumerating every vertex of the transportation polytope.

    Vertices are basic feasible solutions with n + m - 1 basic cells; every subset of that
    size is tried. Only meant for supports of at most 4 points per side.
    """
    p, q, cost = np.asarray(p, float), np.asarray(q, float), np.asarray(cost, float)
    n, m = len(p), len(q)
    if n * m > 16:
        raise ValueError("brute force limited to 4 x 4 problems")
    cells = [(i, j) for i in range(n) for j in range(m)]
    # marginal constraints, last column constraint dropped (implied by the others)
    rows = n + m - 1
    full = np.zeros((rows, n * m))
    for k, (i, j) in enumerate(cells):
        full[i, k] = 1.0
        if j < m - 1:
            full[n + j, k] = 1.0
    rhs = np.concatenate([p, q[:-1]])
    subsets = np.array(list(combinations(range(n * m), rows)))
    mats = full[:, subsets].transpose(1, 0, 2)
    ok = np.abs(np.linalg.det(mats)) > 1e-9
    sol = np.linalg.solve(mats[ok], np.broadcast_to(rhs, (int(ok.sum()), rows))[..., None])[..., 0]
    feasible = np.all(sol >= -1e-12, axis=1)
    costs = (sol * cost.ravel()[subsets[ok]]).sum(axis=1)
    return float(costs[feasible].min())


def wasserstein_line(coords, p, q) -> float:
    """1-D Wasserstein distance as the integral of |F_p - F_q| between sorted coordinates."""
    x = np.asarray(coords, float)
    order = np.argsort(x)
    x = x[order]
    cdf_gap = np.cumsum(np.asarray(p, float)[order] - np.asarray(q, float)[order])[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(x)))


def series_horizon(gamma: float, tol: float = 1e-8) -> int:
    if gamma == 0:
        return 1
    return math.ceil(math.log(tol * (1.0 - gamma)) / math.log(gamma))


def discounted_distribution_series(kernel: np.ndarray, mu: np.ndarray, gamma: float, horizon: int) -> np.ndarray:
    """(1 - gamma) sum_{t <= horizon} gamma^t mu P^t"""
    total = np.zeros_like(mu, dtype=float)
    row = np.asarray(mu, float)
    for t in range(horizon + 1):
        total += gamma**t * row
        row = row @ kernel
    return (1.0 - gamma) * total


def values_series(kernel: np.ndarray, reward_per_state: np.ndarray, gamma: float, horizon: int) -> np.ndarray:
    """sum_{t <= horizon} gamma^t P^t r"""
    total = np.zeros_like(reward_per_state, dtype=float)
    term = np.asarray(reward_per_state, float)
    for t in range(horizon + 1):
        total += gamma**t * term
        term = kernel @ term
    return total


def rollout_return(policy: np.ndarray, config: np.ndarray, reward: np.ndarray, mu, gamma: float, horizon: int) -> float:
    """Expected discounted return by propagating the state distribution step by step."""
    state = np.asarray(mu, float)
    total = 0.0
    for t in range(horizon + 1):
        joint = state[:, None, None] * policy[:, :, None] * config  # P(s_t, a_t, s_{t+1})
        total += gamma**t * float((joint * reward).sum())
        state = joint.sum(axis=(0, 1))
    return total
