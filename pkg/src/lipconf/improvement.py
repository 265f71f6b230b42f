"""Safe policy-configuration improvement driven by the decoupled lower bound.

Each iteration builds greedy targets, scores mixtures of the current pair with the
targets on an (alpha, beta) lattice, and moves to the lattice point whose certified
improvement is largest, provided it is positive.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import Comparison, per_state_wasserstein
from .errors import NoApplicableCandidate
from .lipschitz import config_lipschitz, policy_lipschitz
from .mdp import (
    ConfMDP,
    Configuration,
    DiscountedDistribution,
    Policy,
    ValueBundle,
    expected_return,
    solve_values,
    state_kernel,
)
from .metric import seminorm

DEFAULT_GRID = 100
DEFAULT_MIN_BOUND = 1e-12
TIE_TOL = 1e-12

BOUNDS = ("decoupled", "coupled")
CONVERGED, MAX_ITERS, NO_POSITIVE_BOUND = "converged", "max_iters", "no_positive_bound"


@dataclass(frozen=True)
class ImprovementStep:
    alpha: float
    beta: float
    predicted_bound: float
    realized_improvement: float
    j_before: float
    j_after: float


@dataclass
class ImprovementTrace:
    steps: list[ImprovementStep]
    terminated_reason: str
    j_initial: float
    final_policy: Policy = field(repr=False)
    final_configuration: Configuration = field(repr=False)

    @property
    def j_final(self) -> float:
        return self.steps[-1].j_after if self.steps else self.j_initial

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "terminated_reason": self.terminated_reason,
            "j_initial": self.j_initial,
            "j_final": self.j_final,
            "steps": [asdict(s) for s in self.steps],
            "final_policy": self.final_policy.probs.tolist(),
            "final_configuration": self.final_configuration.probs.tolist(),
        }


def _first_argmax(values: np.ndarray) -> np.ndarray:
    """Lowest index attaining the max along the last axis, ignoring round-off below TIE_TOL."""
    top = values.max(axis=-1, keepdims=True)
    near = values >= top - TIE_TOL * np.maximum(1.0, np.abs(top))
    return near.argmax(axis=-1)


def greedy_targets(
    c: ConfMDP, pi: Policy, p: Configuration, values: ValueBundle, d: DiscountedDistribution | None = None
) -> tuple[Policy, Configuration]:
    """Dirac policy on argmax_a Q(s, a) and Dirac configuration on argmax_s' U(s, a, s')."""
    best_a = _first_argmax(values.q)
    best_next = _first_argmax(values.u)
    pi_target = Policy(np.eye(c.n_actions)[best_a])
    p_target = Configuration(np.eye(c.n_states)[best_next])
    return pi_target, p_target


def safe_step(
    c: ConfMDP,
    pi: Policy,
    p: Configuration,
    pi_target: Policy,
    p_target: Configuration,
    mu,
    grid: int = DEFAULT_GRID,
    exact_mixture_constants: bool = True,
    bound: str = "decoupled",
) -> ImprovementStep:
    """Best lattice mixture of (pi, p) towards the targets under the chosen lower bound.

    ``bound="decoupled"`` scores candidates with the decoupled improvement bound;
    ``bound="coupled"`` uses the coupled bound with exact advantage semi-norms per candidate.
    """
    if grid < 2:
        raise ValueError("grid must be at least 2")
    if bound not in BOUNDS:
        raise ValueError(f"bound must be one of {BOUNDS}, got {bound!r}")
    g = c.gamma
    cmp = Comparison(c, pi, p, pi_target, p_target, mu)
    weights = np.linspace(0.0, 1.0, grid + 1)

    # W(w q + (1-w) q0, q0) = w W(q, q0) and the relative advantages are linear in the new pair,
    # so only the mixtures' Lipschitz constants need recomputing per lattice point.
    if exact_mixture_constants:
        l_pi = np.array([policy_lipschitz(c.states, c.actions, pi.mix(pi_target, a)) for a in weights])
        l_p = np.array([config_lipschitz(c, p.mix(p_target, b)) for b in weights])
    else:
        l_pi = weights * cmp.l_pi_new + (1 - weights) * cmp.l_pi
        l_p = weights * cmp.l_p_new + (1 - weights) * cmp.l_p

    k = g * l_p[None, :] * (1.0 + l_pi[:, None])
    applicable = k < 1.0
    if not applicable.any():
        raise NoApplicableCandidate(f"gamma L_p (1 + L_pi) >= 1 on all {(grid + 1) ** 2} lattice points")
    if bound == "coupled":
        scores = _coupled_lattice(cmp, weights, np.where(applicable, k, 0.0))
    else:
        scores = _decoupled_lattice(cmp, weights, l_pi, l_p, k, applicable)
    scores = np.where(applicable, scores, -np.inf)

    # ties within round-off go to the lowest (alpha, beta) index
    i, j = np.unravel_index(int(_first_argmax(scores.ravel())), scores.shape)
    a_best, b_best = float(weights[i]), float(weights[j])
    j_before = cmp.j
    j_after = expected_return(c, pi.mix(pi_target, a_best), p.mix(p_target, b_best), cmp.mu)
    return ImprovementStep(
        alpha=a_best,
        beta=b_best,
        predicted_bound=float(scores[i, j]),
        realized_improvement=j_after - j_before,
        j_before=j_before,
        j_after=j_after,
    )


def _decoupled_lattice(cmp: Comparison, weights, l_pi, l_p, k, applicable) -> np.ndarray:
    g = cmp.c.gamma
    alpha, beta = weights[:, None], weights[None, :]
    lp = l_p[None, :]
    shape = (l_pi[:, None] + 1.0) * (lp + 1.0)
    denom = (1.0 - g) * np.where(applicable, 1.0 - k, 1.0)
    u = cmp.u_seminorm
    c1 = u * 2.0 * g * shape / denom
    c2 = u * 2.0 * (1.0 + g * lp) * shape / denom
    advantage = (alpha * cmp.rel.expected_policy + beta * cmp.rel.expected_config) / (1.0 - g)
    return advantage - c1 * beta * cmp.config_w_sum - c2 * alpha * cmp.policy_w_sum


def _coupled_lattice(cmp: Comparison, weights, k) -> np.ndarray:
    c, g = cmp.c, cmp.c.gamma
    coupled_adv = cmp.values.u - cmp.values.v[:, None, None]
    d_pi, d_p = cmp.pi_new.probs - cmp.pi.probs, cmp.p_new.probs - cmp.p.probs
    base_kernel = state_kernel(cmp.pi, cmp.p)
    scores = np.empty((len(weights), len(weights)))
    for i, a in enumerate(weights):
        pi_rows = cmp.pi.probs + a * d_pi
        for j, b in enumerate(weights):
            p_rows = cmp.p.probs + b * d_p
            rel = np.einsum("sa,sat,sat->s", pi_rows, p_rows, coupled_adv)
            kernel = np.einsum("sa,sat->st", pi_rows, p_rows)
            w = cmp.d.mass @ per_state_wasserstein(c.states.dist, kernel, base_kernel)
            penalty = g / ((1.0 - g) * (1.0 - k[i, j])) * seminorm(c.states.dist, rel) * w
            scores[i, j] = (cmp.d.mass @ rel) / (1.0 - g) - penalty
    return scores


def _same_pair(pi: Policy, p: Configuration, pi2: Policy, p2: Configuration) -> bool:
    return np.array_equal(pi.probs, pi2.probs) and np.array_equal(p.probs, p2.probs)


def spci_run(
    c: ConfMDP,
    pi0: Policy,
    p0: Configuration,
    mu,
    max_iters: int = 50,
    grid: int = DEFAULT_GRID,
    min_bound: float = DEFAULT_MIN_BOUND,
    exact_mixture_constants: bool = True,
    bound: str = "decoupled",
) -> ImprovementTrace:
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if min_bound < 0:
        raise ValueError("min_bound must be non-negative")
    pi, p = pi0, p0
    j_initial = expected_return(c, pi, p, mu)
    steps: list[ImprovementStep] = []
    reason = MAX_ITERS
    for _ in range(max_iters):
        pi_t, p_t = greedy_targets(c, pi, p, solve_values(c, pi, p))
        if _same_pair(pi, p, pi_t, p_t):
            reason = CONVERGED if steps else NO_POSITIVE_BOUND
            break
        step = safe_step(c, pi, p, pi_t, p_t, mu, grid, exact_mixture_constants, bound)
        if not step.predicted_bound > min_bound:
            reason = NO_POSITIVE_BOUND
            break
        steps.append(step)
        pi, p = pi.mix(pi_t, step.alpha), p.mix(p_t, step.beta)
    return ImprovementTrace(steps, reason, j_initial, pi, p)
