"""Tabular Conf-MDPs: value functions, discounted state distributions and returns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyFailure, DimensionMismatch, ShapeMismatch, SingularSystem
from .metric import MetricSpace, check_distribution, check_stochastic

RETURN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConfMDP:
    states: MetricSpace
    actions: MetricSpace
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        shape = (self.states.n, self.actions.n, self.states.n)
        r = np.asarray(self.reward, dtype=float)
        if r.shape != shape:
            raise DimensionMismatch(f"reward has shape {r.shape}, expected {shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("reward entries must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "reward", r)

    @property
    def n_states(self) -> int:
        return self.states.n

    @property
    def n_actions(self) -> int:
        return self.actions.n


@dataclass(frozen=True, eq=False)
class Policy:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise DimensionMismatch(f"policy must be S x A, got shape {p.shape}")
        object.__setattr__(self, "probs", check_stochastic(p, p.shape, "policy"))

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "Policy":
        return cls(np.eye(n_actions)[np.asarray(actions)])

    def mix(self, other: "Policy", weight: float) -> "Policy":
        """weight * other + (1 - weight) * self"""
        return Policy(weight * other.probs + (1.0 - weight) * self.probs)


@dataclass(frozen=True, eq=False)
class Configuration:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise DimensionMismatch(f"configuration must be S x A x S, got shape {p.shape}")
        object.__setattr__(self, "probs", check_stochastic(p, p.shape, "configuration"))

    def mix(self, other: "Configuration", weight: float) -> "Configuration":
        return Configuration(weight * other.probs + (1.0 - weight) * self.probs)


@dataclass(frozen=True, eq=False)
class ValueBundle:
    v: np.ndarray
    q: np.ndarray
    u: np.ndarray


@dataclass(frozen=True, eq=False)
class DiscountedDistribution:
    mass: np.ndarray
    gamma: float
    initial: np.ndarray


def _check_pair(c: ConfMDP | None, pi: Policy, p: Configuration) -> None:
    s, a = pi.probs.shape
    if p.probs.shape != (s, a, s):
        raise ShapeMismatch(f"policy {pi.probs.shape} and configuration {p.probs.shape} disagree")
    if c is not None and (s, a) != (c.n_states, c.n_actions):
        raise ShapeMismatch(f"pair is {s}x{a} but the Conf-MDP is {c.n_states}x{c.n_actions}")


def state_kernel(pi: Policy, p: Configuration) -> np.ndarray:
    _check_pair(None, pi, p)
    return np.einsum("sa,sat->st", pi.probs, p.probs)


def expected_reward(c: ConfMDP, pi: Policy, p: Configuration) -> np.ndarray:
    """r_pi(s) = sum_{a,s'} pi(a|s) p(s'|s,a) r(s,a,s')"""
    return np.einsum("sa,sat,sat->s", pi.probs, p.probs, c.reward)


def _solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("linear solve produced non-finite values")
    return x


def solve_values(c: ConfMDP, pi: Policy, p: Configuration) -> ValueBundle:
    _check_pair(c, pi, p)
    kernel = state_kernel(pi, p)
    v = _solve(np.eye(c.n_states) - c.gamma * kernel, expected_reward(c, pi, p))
    u = c.reward + c.gamma * v[None, None, :]
    q = np.einsum("sat,sat->sa", p.probs, u)
    return ValueBundle(v=v, q=q, u=u)


def bellman_residual(c: ConfMDP, pi: Policy, p: Configuration, values: ValueBundle) -> float:
    rv = np.abs(values.v - np.einsum("sa,sa->s", pi.probs, values.q)).max()
    rq = np.abs(values.q - np.einsum("sat,sat->sa", p.probs, values.u)).max()
    ru = np.abs(values.u - c.reward - c.gamma * values.v[None, None, :]).max()
    return float(max(rv, rq, ru))


def discounted_distribution(c: ConfMDP, pi: Policy, p: Configuration, mu) -> DiscountedDistribution:
    _check_pair(c, pi, p)
    mu = check_distribution(mu, c.n_states, "initial distribution")
    kernel = state_kernel(pi, p)
    # row vector d solves d (I - gamma P) = (1 - gamma) mu
    d = _solve((np.eye(c.n_states) - c.gamma * kernel).T, (1.0 - c.gamma) * mu)
    if np.any(d < -1e-12):
        raise SingularSystem(f"discounted distribution has negative mass {d.min()}")
    d = np.clip(d, 0.0, None)
    return DiscountedDistribution(mass=d, gamma=c.gamma, initial=mu)


def expected_return(c: ConfMDP, pi: Policy, p: Configuration, mu) -> float:
    """mu-average of V, cross-checked against the d-weighted one-step reward."""
    mu = check_distribution(mu, c.n_states, "initial distribution")
    values = solve_values(c, pi, p)
    d = discounted_distribution(c, pi, p, mu)
    via_values = float(mu @ values.v)
    via_distribution = float(d.mass @ expected_reward(c, pi, p)) / (1.0 - c.gamma)
    if abs(via_values - via_distribution) > RETURN_TOL * max(1.0, abs(via_values)):
        raise ConsistencyFailure(f"expected return {via_values!r} (values) vs {via_distribution!r} (distribution)")
    return via_values
