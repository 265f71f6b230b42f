"""Finite metric spaces, exact 1-Wasserstein distances and Lipschitz semi-norms."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    AsymmetricMetric,
    DimensionMismatch,
    InvalidDistribution,
    NegativeDistance,
    TriangleViolation,
    ZeroDistanceDistinctPoints,
)

# POT probes every array backend on import; only numpy is used here.
for _key in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_key}", "1")
import ot  # noqa: E402

MASS_TOL = 1e-12
METRIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """A finite point set with a validated distance matrix.

    Build instances through :func:`validate_metric`; the constructor trusts its input.
    """

    dist: np.ndarray

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @classmethod
    def discrete(cls, n: int) -> "MetricSpace":
        return cls(_readonly(1.0 - np.eye(n)))

    @classmethod
    def line(cls, coords) -> "MetricSpace":
        x = np.asarray(coords, dtype=float)
        return validate_metric(np.abs(x[:, None] - x[None, :]))

    def scaled(self, factor: float) -> "MetricSpace":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return MetricSpace(_readonly(self.dist * factor))


@dataclass(frozen=True, eq=False)
class TransportResult:
    distance: float
    plan: np.ndarray


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def validate_metric(dist) -> MetricSpace:
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
        raise DimensionMismatch(f"distance matrix must be square and non-empty, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix has non-finite entries")
    n = d.shape[0]

    neg = np.argwhere(d < 0)
    if len(neg):
        i, j = neg[0]
        raise NegativeDistance(f"dist[{i}][{j}] = {d[i, j]} < 0")
    diag = np.flatnonzero(np.diag(d) != 0)
    if len(diag):
        i = diag[0]
        raise NegativeDistance(f"dist[{i}][{i}] = {d[i, i]} must be 0")
    asym = np.argwhere(np.abs(d - d.T) > METRIC_TOL * max(1.0, float(d.max())))
    if len(asym):
        i, j = asym[0]
        raise AsymmetricMetric(f"dist[{i}][{j}] = {d[i, j]} but dist[{j}][{i}] = {d[j, i]}")
    off = ~np.eye(n, dtype=bool)
    zero = np.argwhere((d <= 0) & off)
    if len(zero):
        i, j = zero[0]
        raise ZeroDistanceDistinctPoints(f"points {i} and {j} are at distance 0")

    tol = METRIC_TOL * max(1.0, float(d.max()))
    for j in range(n):
        # dist[i][k] <= dist[i][j] + dist[j][k] for every i, k through pivot j
        gap = d - (d[:, j][:, None] + d[j, :][None, :])
        bad = np.argwhere(gap > tol)
        if len(bad):
            i, k = bad[0]
            raise TriangleViolation(
                f"dist[{i}][{k}] = {d[i, k]} > dist[{i}][{j}] + dist[{j}][{k}] = {d[i, j] + d[j, k]}"
            )
    return MetricSpace(_readonly(d))


def product_space(*spaces: MetricSpace) -> MetricSpace:
    """Sum metric on the Cartesian product, points flattened in C order."""
    dist = np.zeros((1, 1))
    for space in spaces:
        m, k = dist.shape[0], space.n
        dist = (dist[:, None, :, None] + space.dist[None, :, None, :]).reshape(m * k, m * k)
    return MetricSpace(_readonly(dist))


def check_distribution(mass, n: int | None = None, name: str = "distribution") -> np.ndarray:
    p = np.asarray(mass, dtype=float)
    if p.ndim != 1:
        raise InvalidDistribution(f"{name} must be a 1-d array, got shape {p.shape}")
    if n is not None and p.shape[0] != n:
        raise DimensionMismatch(f"{name} has {p.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidDistribution(f"{name} has negative or non-finite mass")
    if abs(p.sum() - 1.0) > MASS_TOL:
        raise InvalidDistribution(f"{name} sums to {p.sum()!r}, not 1")
    return p


def check_stochastic(probs, shape: tuple[int, ...], name: str) -> np.ndarray:
    """Validate an array whose last axis holds distributions."""
    a = np.asarray(probs, dtype=float)
    if a.shape != shape:
        raise DimensionMismatch(f"{name} has shape {a.shape}, expected {shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise InvalidDistribution(f"{name} has negative or non-finite entries")
    err = np.abs(a.sum(axis=-1) - 1.0)
    if np.any(err > MASS_TOL):
        idx = np.unravel_index(int(np.argmax(err)), err.shape)
        raise InvalidDistribution(f"{name}{list(idx)} sums to {a[idx].sum()!r}, not 1")
    return a


def transport(dist: np.ndarray, p: np.ndarray, q: np.ndarray) -> TransportResult:
    """Exact optimal transport between p and q under the cost matrix dist (no validation)."""
    n = len(p)
    support = np.flatnonzero((p > 0) | (q > 0))
    plan = np.zeros((n, n))
    if np.array_equal(p, q):
        plan[np.arange(n), np.arange(n)] = p
        return TransportResult(0.0, plan)
    a = p[support]
    b = q[support] * (a.sum() / q[support].sum())
    cost = np.ascontiguousarray(dist[np.ix_(support, support)])
    sub, log = ot.emd(a, b, cost, numItermax=1_000_000, log=True)
    if log["warning"] is not None:
        raise ArithmeticError(f"network simplex did not reach optimality: {log['warning']}")
    plan[np.ix_(support, support)] = sub
    return TransportResult(float(np.sum(sub * cost)), plan)


def wasserstein_distance(dist: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    return transport(dist, p, q).distance


def wasserstein(space: MetricSpace, p, q) -> TransportResult:
    p = check_distribution(p, name="p")
    q = check_distribution(q, name="q")
    if len(p) != space.n or len(q) != space.n:
        raise DimensionMismatch(f"space has {space.n} points, p has {len(p)}, q has {len(q)}")
    return transport(space.dist, p, q)


def tv_divergence(p, q) -> float:
    """Total variation with the 1/2 normalisation (equals W under the 0/1 metric)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"lengths differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def seminorm(dist: np.ndarray, f: np.ndarray) -> float:
    f = np.asarray(f, dtype=float).ravel()
    if len(f) < 2:
        return 0.0
    best = 0.0
    for start in range(0, len(f), 512):
        rows = slice(start, start + 512)
        block = dist[rows]
        ratio = np.abs(f[rows, None] - f[None, :]) / np.where(block > 0, block, np.inf)
        best = max(best, float(ratio.max()))
    return best


def lipschitz_seminorm(space: MetricSpace, f) -> float:
    f = np.asarray(f, dtype=float).ravel()
    if len(f) != space.n:
        raise DimensionMismatch(f"function has {len(f)} values, space has {space.n} points")
    return seminorm(space.dist, f)


def kernel_lipschitz(domain: MetricSpace, range_: MetricSpace, kernel) -> float:
    """Smallest L with W(kernel[x], kernel[y]) <= L d(x, y) over all domain pairs.

    ``kernel`` has one row per domain point (flattened in C order for product domains).
    """
    rows = np.asarray(kernel, dtype=float).reshape(domain.n, -1)
    if rows.shape[1] != range_.n:
        raise DimensionMismatch(f"kernel rows have {rows.shape[1]} entries, range has {range_.n} points")
    n = domain.n
    if n < 2:
        return 0.0
    diam = float(range_.dist.max())
    iu, ju = np.triu_indices(n, k=1)
    d = domain.dist[iu, ju]
    # W <= diam * TV gives a cheap ceiling; pairs whose ceiling cannot beat the running max are skipped
    ceiling = diam * 0.5 * np.abs(rows[iu] - rows[ju]).sum(axis=1) / d
    best = 0.0
    for k in np.argsort(-ceiling, kind="stable"):
        if ceiling[k] <= best:
            break
        best = max(best, float(wasserstein_distance(range_.dist, rows[iu[k]], rows[ju[k]]) / d[k]))
    return best


def random_lipschitz_function(space: MetricSpace, rng: np.random.Generator, constant: float = 1.0) -> np.ndarray:
    """Random function with Lipschitz semi-norm at most ``constant``.

    Random anchor values are smoothed by the inf-convolution f(x) = min_y g(y) + L d(x, y),
    which is L-Lipschitz whenever d satisfies the triangle inequality.
    """
    spread = constant * float(space.dist.max()) if space.n > 1 else 1.0
    g = rng.uniform(-spread, spread, size=space.n)
    return (g[None, :] + constant * space.dist).min(axis=1)
