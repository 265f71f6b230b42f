"""Exact Lipschitz constants of Conf-MDP ingredients and closed-form value bounds."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .mdp import ConfMDP, Configuration, Policy, ValueBundle
from .metric import MetricSpace, kernel_lipschitz, product_space, seminorm

NEAR_SINGULAR_BAND = 1e-9


class ValueBounds(NamedTuple):
    q: float
    v: float
    u: float


@dataclass(frozen=True)
class LipschitzProfile:
    l_r: float
    l_pi: float
    l_p: float
    contraction: float
    exact_v: float
    exact_q: float
    exact_u: float
    bound_v: float | None = None
    bound_q: float | None = None
    bound_u: float | None = None
    near_singular: bool = False

    @property
    def applicable(self) -> bool:
        return self.contraction < 1.0

    def dominance_slack(self) -> dict[str, float] | None:
        """bound - exact for V, Q, U; None when the bounds do not apply."""
        if self.bound_q is None:
            return None
        return {
            "v": self.bound_v - self.exact_v,
            "q": self.bound_q - self.exact_q,
            "u": self.bound_u - self.exact_u,
        }


@lru_cache(maxsize=16)
def state_action_space(c: ConfMDP) -> MetricSpace:
    return product_space(c.states, c.actions)


@lru_cache(maxsize=4)
def transition_space(c: ConfMDP) -> MetricSpace:
    return product_space(c.states, c.actions, c.states)


def contraction(gamma: float, l_p: float, l_pi: float) -> float:
    return gamma * l_p * (1.0 + l_pi)


def is_near_singular(value: float) -> bool:
    return 1.0 - NEAR_SINGULAR_BAND <= value < 1.0


def reward_lipschitz(c: ConfMDP) -> float:
    return seminorm(transition_space(c).dist, c.reward.ravel())


def policy_lipschitz(states: MetricSpace, actions: MetricSpace, pi: Policy) -> float:
    return kernel_lipschitz(states, actions, pi.probs)


def config_lipschitz(c: ConfMDP, p: Configuration) -> float:
    return kernel_lipschitz(state_action_space(c), c.states, p.probs.reshape(-1, c.n_states))


def theoretical_value_bounds(l_r: float, l_pi: float, l_p: float, gamma: float) -> ValueBounds | None:
    """Closed-form semi-norm bounds for Q, V and U, or None when gamma L_p (1 + L_pi) >= 1."""
    k = contraction(gamma, l_p, l_pi)
    if k >= 1.0:
        return None
    bound_q = l_r / (1.0 - k)
    return ValueBounds(
        q=bound_q,
        v=bound_q * (1.0 + l_pi),
        u=l_r * (2.0 + l_pi - k) / (1.0 - k),
    )


def value_seminorms(c: ConfMDP, values: ValueBundle) -> tuple[float, float, float]:
    """Exact semi-norms of V, Q and U under d_S, d_S + d_A and d_S + d_A + d_S."""
    return (
        seminorm(c.states.dist, values.v),
        seminorm(state_action_space(c).dist, values.q.ravel()),
        seminorm(transition_space(c).dist, values.u.ravel()),
    )


def profile(c: ConfMDP, pi: Policy, p: Configuration, values: ValueBundle) -> LipschitzProfile:
    l_r = reward_lipschitz(c)
    l_pi = policy_lipschitz(c.states, c.actions, pi)
    l_p = config_lipschitz(c, p)
    k = contraction(c.gamma, l_p, l_pi)
    exact_v, exact_q, exact_u = value_seminorms(c, values)
    bounds = theoretical_value_bounds(l_r, l_pi, l_p, c.gamma)
    extra = {} if bounds is None else {"bound_q": bounds.q, "bound_v": bounds.v, "bound_u": bounds.u}
    return LipschitzProfile(
        l_r=l_r,
        l_pi=l_pi,
        l_p=l_p,
        contraction=k,
        exact_v=exact_v,
        exact_q=exact_q,
        exact_u=exact_u,
        near_singular=is_near_singular(k),
        **extra,
    )
