"""Seeded random Lipschitz Conf-MDP instances and two small benchmark environments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractionUnreachable
from .lipschitz import config_lipschitz, contraction, policy_lipschitz, reward_lipschitz
from .mdp import ConfMDP, Configuration, Policy
from .metric import MetricSpace, validate_metric

METRIC_KINDS = ("discrete", "line", "random_embedded")
MAX_SMOOTHING_ROUNDS = 5


@dataclass(frozen=True)
class GeneratorSpec:
    n_states: int
    n_actions: int
    gamma: float = 0.9
    smoothing: float = 0.5
    metric_kind: str = "line"
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ValueError("n_states and n_actions must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.smoothing <= 1.0:
            raise ValueError(f"smoothing must lie in [0, 1], got {self.smoothing}")
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(f"metric_kind must be one of {METRIC_KINDS}, got {self.metric_kind!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def make_metric(kind: str, n: int, rng: np.random.Generator) -> MetricSpace:
    if kind == "discrete":
        return MetricSpace.discrete(n)
    if kind == "line":
        return MetricSpace.line(np.arange(n, dtype=float))
    # jittered grid keeps distinct points at least 0.4 apart
    side = math.ceil(math.sqrt(n))
    cells = rng.permutation(side * side)[:n]
    points = np.stack([cells % side, cells // side], axis=1) + rng.uniform(-0.3, 0.3, size=(n, 2))
    return validate_metric(np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1))


def smooth_kernel(rows: np.ndarray, weight: float) -> np.ndarray:
    """Mix every distribution on the last axis with the uniform one."""
    return (1.0 - weight) * rows + weight / rows.shape[-1]


def _smoothed_pair(c: ConfMDP, pi_raw, p_raw, smoothing: float) -> tuple[Policy, Configuration]:
    pi_rows = smooth_kernel(pi_raw, smoothing)
    p_rows = smooth_kernel(p_raw, smoothing)
    for _ in range(MAX_SMOOTHING_ROUNDS + 1):
        pi, p = Policy(pi_rows), Configuration(p_rows)
        k = contraction(c.gamma, config_lipschitz(c, p), policy_lipschitz(c.states, c.actions, pi))
        if k < 1.0:
            return pi, p
        pi_rows = smooth_kernel(pi_rows, smoothing)
        p_rows = smooth_kernel(p_rows, smoothing)
    raise ContractionUnreachable(
        f"gamma L_p (1 + L_pi) = {k:.6g} >= 1 after {MAX_SMOOTHING_ROUNDS} smoothing rounds "
        f"(smoothing={smoothing})"
    )


def _raw_pair(rng: np.random.Generator, n_states: int, n_actions: int):
    pi = rng.dirichlet(np.ones(n_actions), size=n_states)
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    return pi, p


def _draw(spec: GeneratorSpec):
    rng = np.random.default_rng(spec.seed)
    states = make_metric(spec.metric_kind, spec.n_states, rng)
    actions = make_metric(spec.metric_kind, spec.n_actions, rng)
    reward = rng.normal(size=(spec.n_states, spec.n_actions, spec.n_states))
    c = ConfMDP(states, actions, reward, spec.gamma)
    l_r = reward_lipschitz(c)
    if l_r > 0:
        c = ConfMDP(states, actions, reward / l_r, spec.gamma)
    pi_raw, p_raw = _raw_pair(rng, spec.n_states, spec.n_actions)
    mu = rng.dirichlet(np.ones(spec.n_states))
    return c, pi_raw, p_raw, mu


def random_instance(spec: GeneratorSpec) -> tuple[ConfMDP, Policy, Configuration, np.ndarray]:
    c, pi_raw, p_raw, mu = _draw(spec)
    pi, p = _smoothed_pair(c, pi_raw, p_raw, spec.smoothing)
    return c, pi, p, mu


def random_second_pair(c: ConfMDP, spec: GeneratorSpec) -> tuple[Policy, Configuration]:
    """A second contractive pair: the first pair's raw draw blended with a fresh one."""
    _, pi_raw, p_raw, _ = _draw(spec)
    rng = np.random.default_rng([spec.seed, 1])
    pi_fresh, p_fresh = _raw_pair(rng, spec.n_states, spec.n_actions)
    eta_pi, eta_p = rng.uniform(size=2)
    return _smoothed_pair(
        c, eta_pi * pi_fresh + (1 - eta_pi) * pi_raw, eta_p * p_fresh + (1 - eta_p) * p_raw, spec.smoothing
    )


def random_comparison(spec: GeneratorSpec):
    """(c, pi, p, pi_new, p_new, mu) with both pairs contractive."""
    c, pi, p, mu = random_instance(spec)
    pi_new, p_new = random_second_pair(c, spec)
    return c, pi, p, pi_new, p_new, mu


def _clip(i: int, n: int) -> int:
    return min(max(i, 0), n - 1)


def chain_env(n: int, slip: float, gamma: float) -> tuple[ConfMDP, Configuration]:
    """Line of n states, actions left/right; with probability `slip` the move goes to a
    uniformly chosen neighbour instead. Reward 1 on arriving at the rightmost state."""
    if n < 2:
        raise ValueError("chain needs at least 2 states")
    if not 0.0 <= slip <= 1.0:
        raise ValueError("slip must lie in [0, 1]")
    p = np.zeros((n, 2, n))
    for s in range(n):
        left, right = _clip(s - 1, n), _clip(s + 1, n)
        for a, target in enumerate((left, right)):
            p[s, a, target] += 1.0 - slip
            p[s, a, left] += slip / 2
            p[s, a, right] += slip / 2
    reward = np.zeros((n, 2, n))
    reward[:, :, n - 1] = 1.0
    c = ConfMDP(MetricSpace.line(np.arange(n)), MetricSpace.discrete(2), reward, gamma)
    return c, Configuration(p)


GRID_MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))  # up, down, left, right


def gridworld_env(width: int, height: int, wind: float, gamma: float) -> tuple[ConfMDP, Configuration]:
    """Grid with Manhattan metric; with probability `wind` the agent is blown one cell
    towards the bottom border instead of moving. Reward 1 on arriving at the top-right corner."""
    if width < 2 or height < 2:
        raise ValueError("grid must be at least 2 x 2")
    if not 0.0 <= wind <= 1.0:
        raise ValueError("wind must lie in [0, 1]")
    n = width * height
    xy = np.array([(s % width, s // width) for s in range(n)], dtype=float)
    states = validate_metric(np.abs(xy[:, None, :] - xy[None, :, :]).sum(axis=-1))

    def index(x, y):
        return _clip(y, height) * width + _clip(x, width)

    p = np.zeros((n, 4, n))
    for s in range(n):
        x, y = s % width, s // width
        for a, (dx, dy) in enumerate(GRID_MOVES):
            p[s, a, index(x + dx, y + dy)] += 1.0 - wind
            p[s, a, index(x, y - 1)] += wind
    reward = np.zeros((n, 4, n))
    reward[:, :, n - 1] = 1.0
    c = ConfMDP(states, MetricSpace.discrete(4), reward, gamma)
    return c, Configuration(p)
