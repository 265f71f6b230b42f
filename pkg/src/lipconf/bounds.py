"""Evaluators for the distribution bounds, the performance-difference identity,
the two performance-improvement lower bounds and the supporting lemmas.

Every evaluator returns the bound next to the exactly computed quantity it bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import lipschitz as lip
from .advantages import RelativeAdvantages, advantage_bundle, check_decomposition, relative_advantages
from .errors import IdentityViolation
from .mdp import (
    ConfMDP,
    Configuration,
    DiscountedDistribution,
    Policy,
    discounted_distribution,
    expected_return,
    solve_values,
    state_kernel,
)
from .metric import check_distribution, seminorm, transport, wasserstein_distance

BOUND_TOL = 1e-9
IDENTITY_TOL = 1e-9

UPPER, LOWER, IDENTITY = "upper", "lower", "identity"


@dataclass
class BoundReport:
    name: str
    bound_value: float | None
    exact_value: float
    applicable: bool
    kind: str = UPPER
    components: dict[str, float] = field(default_factory=dict)

    @property
    def slack(self) -> float | None:
        if self.bound_value is None:
            return None
        if self.kind == UPPER:
            return self.bound_value - self.exact_value
        if self.kind == LOWER:
            return self.exact_value - self.bound_value
        return -abs(self.bound_value - self.exact_value)

    def holds(self, tol: float = BOUND_TOL) -> bool:
        return not self.applicable or self.slack >= -tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bound_value": self.bound_value,
            "exact_value": self.exact_value,
            "slack": self.slack,
            "applicable": self.applicable,
            "kind": self.kind,
            "components": dict(self.components),
        }


def per_state_wasserstein(space_dist: np.ndarray, rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    flat_a = rows_a.reshape(-1, rows_a.shape[-1])
    flat_b = rows_b.reshape(-1, rows_b.shape[-1])
    w = np.array([wasserstein_distance(space_dist, x, y) for x, y in zip(flat_a, flat_b)])
    return w.reshape(rows_a.shape[:-1])


def kernel_distance_term(
    c: ConfMDP, pi: Policy, p: Configuration, pi_new: Policy, p_new: Configuration, d: DiscountedDistribution
) -> float:
    """sum_s d(s) W(p'_{pi'}(.|s), p_pi(.|s))"""
    w = per_state_wasserstein(c.states.dist, state_kernel(pi_new, p_new), state_kernel(pi, p))
    return float(d.mass @ w)


class Comparison:
    """Exact quantities shared by the bounds comparing (pi, p) against (pi_new, p_new)."""

    def __init__(self, c: ConfMDP, pi: Policy, p: Configuration, pi_new: Policy, p_new: Configuration, mu):
        self.c, self.pi, self.p, self.pi_new, self.p_new = c, pi, p, pi_new, p_new
        self.mu = check_distribution(mu, c.n_states, "initial distribution")

    @cached_property
    def values(self):
        return solve_values(self.c, self.pi, self.p)

    @cached_property
    def d(self) -> DiscountedDistribution:
        return discounted_distribution(self.c, self.pi, self.p, self.mu)

    @cached_property
    def d_new(self) -> DiscountedDistribution:
        return discounted_distribution(self.c, self.pi_new, self.p_new, self.mu)

    @cached_property
    def rel(self) -> RelativeAdvantages:
        bundle = advantage_bundle(self.values, self.pi, self.p)
        return relative_advantages(self.values, bundle, self.pi, self.p, self.pi_new, self.p_new, self.d)

    @cached_property
    def j(self) -> float:
        return expected_return(self.c, self.pi, self.p, self.mu)

    @cached_property
    def j_new(self) -> float:
        return expected_return(self.c, self.pi_new, self.p_new, self.mu)

    @property
    def improvement(self) -> float:
        return self.j_new - self.j

    @cached_property
    def l_r(self) -> float:
        return lip.reward_lipschitz(self.c)

    @cached_property
    def l_pi(self) -> float:
        return lip.policy_lipschitz(self.c.states, self.c.actions, self.pi)

    @cached_property
    def l_p(self) -> float:
        return lip.config_lipschitz(self.c, self.p)

    @cached_property
    def l_pi_new(self) -> float:
        return lip.policy_lipschitz(self.c.states, self.c.actions, self.pi_new)

    @cached_property
    def l_p_new(self) -> float:
        return lip.config_lipschitz(self.c, self.p_new)

    @property
    def contraction_new(self) -> float:
        return lip.contraction(self.c.gamma, self.l_p_new, self.l_pi_new)

    @property
    def contraction(self) -> float:
        return lip.contraction(self.c.gamma, self.l_p, self.l_pi)

    @cached_property
    def kernel_w(self) -> np.ndarray:
        return per_state_wasserstein(
            self.c.states.dist, state_kernel(self.pi_new, self.p_new), state_kernel(self.pi, self.p)
        )

    @cached_property
    def policy_w(self) -> np.ndarray:
        return per_state_wasserstein(self.c.actions.dist, self.pi_new.probs, self.pi.probs)

    @cached_property
    def config_w(self) -> np.ndarray:
        return per_state_wasserstein(self.c.states.dist, self.p_new.probs, self.p.probs)

    @property
    def kernel_distance_term(self) -> float:
        return float(self.d.mass @ self.kernel_w)

    @property
    def policy_w_sum(self) -> float:
        return float(self.d.mass @ self.policy_w)

    @property
    def config_w_sum(self) -> float:
        return float(np.einsum("s,sa,sa->", self.d.mass, self.pi.probs, self.config_w))

    @cached_property
    def value_seminorms(self) -> tuple[float, float, float]:
        return lip.value_seminorms(self.c, self.values)

    @property
    def u_seminorm(self) -> float:
        return self.value_seminorms[2]

    @cached_property
    def coupled_rel_seminorm(self) -> float:
        return seminorm(self.c.states.dist, self.rel.coupled_rel)

    @cached_property
    def policy_rel_seminorm(self) -> float:
        return seminorm(self.c.states.dist, self.rel.policy_rel)

    @cached_property
    def config_rel_seminorm(self) -> float:
        return seminorm(lip.state_action_space(self.c).dist, self.rel.config_rel.ravel())

    def theoretical_u_bound(self) -> float | None:
        bounds = lip.theoretical_value_bounds(self.l_r, self.l_pi, self.l_p, self.c.gamma)
        return None if bounds is None else bounds.u

    # -- distribution bounds -------------------------------------------------

    def distribution_bound_coupled(self) -> BoundReport:
        k = self.contraction_new
        exact = transport(self.c.states.dist, self.d_new.mass, self.d.mass).distance
        components = {"kernel_distance_term": self.kernel_distance_term, "contraction": k,
                      "l_pi_new": self.l_pi_new, "l_p_new": self.l_p_new}
        if k >= 1.0:
            return BoundReport("distribution_coupled", None, exact, False, UPPER, components)
        bound = self.c.gamma / (1.0 - k) * self.kernel_distance_term
        return BoundReport("distribution_coupled", bound, exact, True, UPPER, components)

    def distribution_bound_decoupled(self) -> BoundReport:
        k = self.contraction_new
        exact = transport(self.c.states.dist, self.d_new.mass, self.d.mass).distance
        components = {"config_w_sum": self.config_w_sum, "policy_w_sum": self.policy_w_sum,
                      "contraction": k, "l_pi_new": self.l_pi_new, "l_p_new": self.l_p_new}
        if k >= 1.0:
            return BoundReport("distribution_decoupled", None, exact, False, UPPER, components)
        g = self.c.gamma
        config_term = g / (1.0 - k) * self.config_w_sum
        policy_term = g * self.l_p_new / (1.0 - k) * self.policy_w_sum
        components.update(config_term=config_term, policy_term=policy_term)
        return BoundReport("distribution_decoupled", config_term + policy_term, exact, True, UPPER, components)

    def sup_comparison_bound(self) -> tuple[float, float]:
        return self.policy_w_sum, float(self.policy_w.max())

    # -- performance improvement ----------------------------------------------

    def performance_difference(self) -> tuple[float, float]:
        lhs = self.improvement
        rhs = float(self.d_new.mass @ self.rel.coupled_rel) / (1.0 - self.c.gamma)
        if abs(lhs - rhs) > IDENTITY_TOL * max(1.0, abs(self.j), abs(self.j_new)):
            raise IdentityViolation(f"J' - J = {lhs!r} but the advantage form gives {rhs!r}")
        return lhs, rhs

    def _semi_norm_for(self, mode_theoretical: bool) -> tuple[float | None, dict]:
        if not mode_theoretical:
            return self.u_seminorm, {"u_seminorm": self.u_seminorm}
        u = self.theoretical_u_bound()
        return u, {"u_seminorm": self.u_seminorm, "u_seminorm_bound": u, "contraction_current": self.contraction}

    def pi_bound_coupled(self, use_theoretical_seminorm: bool = False) -> BoundReport:
        g, k = self.c.gamma, self.contraction_new
        components = {"contraction": k, "kernel_distance_term": self.kernel_distance_term,
                      "advantage_term": self.rel.expected_coupled / (1.0 - g)}
        if use_theoretical_seminorm:
            u, extra = self._semi_norm_for(True)
            components.update(extra)
            adv_norm = None if u is None else 2.0 * u * (self.l_pi_new + 1.0) * (self.l_p_new + 1.0)
        else:
            adv_norm = self.coupled_rel_seminorm
        name = "improvement_coupled" + ("_theoretical" if use_theoretical_seminorm else "")
        if k >= 1.0 or adv_norm is None:
            return BoundReport(name, None, self.improvement, False, LOWER, components)
        penalty = g / ((1.0 - g) * (1.0 - k)) * adv_norm * self.kernel_distance_term
        components.update(advantage_seminorm=adv_norm, penalty=penalty)
        return BoundReport(name, components["advantage_term"] - penalty, self.improvement, True, LOWER, components)

    def decoupled_constants(self, u: float) -> tuple[float, float]:
        g, k = self.c.gamma, self.contraction_new
        shape = (self.l_pi_new + 1.0) * (self.l_p_new + 1.0)
        denom = (1.0 - g) * (1.0 - k)
        c1 = u * 2.0 * g * shape / denom
        c2 = u * 2.0 * (1.0 + g * self.l_p_new) * shape / denom
        return c1, c2

    def pi_bound_decoupled(self, use_theoretical_seminorm: bool = False) -> BoundReport:
        g, k = self.c.gamma, self.contraction_new
        u, components = self._semi_norm_for(use_theoretical_seminorm)
        advantage = (self.rel.expected_policy + self.rel.expected_config) / (1.0 - g)
        components.update(contraction=k, advantage_term=advantage,
                          config_w_sum=self.config_w_sum, policy_w_sum=self.policy_w_sum)
        name = "improvement_decoupled" + ("_theoretical" if use_theoretical_seminorm else "")
        if k >= 1.0 or u is None:
            return BoundReport(name, None, self.improvement, False, LOWER, components)
        c1, c2 = self.decoupled_constants(u)
        penalty = c1 * self.config_w_sum + c2 * self.policy_w_sum
        components.update(c1=c1, c2=c2, penalty=penalty)
        return BoundReport(name, advantage - penalty, self.improvement, True, LOWER, components)

    # -- lemma checks ----------------------------------------------------------

    def verify_lipsum(self, f) -> tuple[float, float]:
        return verify_lipsum(self.c, self.pi_new, self.p_new, f, self.l_pi_new, self.l_p_new)

    def verify_decomp_adv(self) -> tuple[float, float]:
        return verify_decomp_adv(self.rel, self.config_rel_seminorm, self.policy_w_sum)

    def verify_lipnorm_adv(self) -> tuple[float, float]:
        rhs = self.policy_rel_seminorm + (self.l_pi_new + 1.0) * self.config_rel_seminorm
        return self.coupled_rel_seminorm, rhs

    def decomposition_residual(self) -> float:
        return check_decomposition(self.rel, self.pi_new)


def verify_lipsum(
    c: ConfMDP, pi_new: Policy, p_new: Configuration, f, l_pi_new: float | None = None, l_p_new: float | None = None
) -> tuple[float, float]:
    """(exact semi-norm of s -> E_{p'_{pi'}(.|s)} f, L_{p'} (1 + L_{pi'})) for a 1-Lipschitz f."""
    if l_pi_new is None:
        l_pi_new = lip.policy_lipschitz(c.states, c.actions, pi_new)
    if l_p_new is None:
        l_p_new = lip.config_lipschitz(c, p_new)
    h = state_kernel(pi_new, p_new) @ np.asarray(f, dtype=float)
    return seminorm(c.states.dist, h), l_p_new * (1.0 + l_pi_new)


def verify_decomp_adv(rel: RelativeAdvantages, config_rel_seminorm: float, policy_w_sum: float) -> tuple[float, float]:
    lhs = abs(rel.expected_coupled - (rel.expected_config + rel.expected_policy))
    return lhs, policy_w_sum * config_rel_seminorm


def verify_lipnorm_adv(c: ConfMDP, rel: RelativeAdvantages, l_pi_new: float) -> tuple[float, float]:
    lhs = seminorm(c.states.dist, rel.coupled_rel)
    rhs = seminorm(c.states.dist, rel.policy_rel) + (l_pi_new + 1.0) * seminorm(
        lip.state_action_space(c).dist, rel.config_rel.ravel()
    )
    return lhs, rhs


# Function forms of the evaluators.

def distribution_bound_coupled(c, pi, p, pi_new, p_new, mu) -> BoundReport:
    return Comparison(c, pi, p, pi_new, p_new, mu).distribution_bound_coupled()


def distribution_bound_decoupled(c, pi, p, pi_new, p_new, mu) -> BoundReport:
    return Comparison(c, pi, p, pi_new, p_new, mu).distribution_bound_decoupled()


def sup_comparison_bound(c, pi, p, pi_new, mu) -> tuple[float, float]:
    return Comparison(c, pi, p, pi_new, p, mu).sup_comparison_bound()


def performance_difference(c, pi, p, pi_new, p_new, mu) -> tuple[float, float]:
    return Comparison(c, pi, p, pi_new, p_new, mu).performance_difference()


def pi_bound_coupled(c, pi, p, pi_new, p_new, mu, use_theoretical_seminorm: bool = False) -> BoundReport:
    return Comparison(c, pi, p, pi_new, p_new, mu).pi_bound_coupled(use_theoretical_seminorm)


def pi_bound_decoupled(c, pi, p, pi_new, p_new, mu, use_theoretical_seminorm: bool = False) -> BoundReport:
    return Comparison(c, pi, p, pi_new, p_new, mu).pi_bound_decoupled(use_theoretical_seminorm)


def all_reports(cmp: Comparison, f, use_theoretical_seminorm: bool = False) -> list[BoundReport]:
    """Every bound, identity and lemma check for one comparison, as report rows."""
    reports = [cmp.distribution_bound_coupled(), cmp.distribution_bound_decoupled()]

    avg, sup = cmp.sup_comparison_bound()
    reports.append(BoundReport("sup_comparison", sup, avg, True, UPPER))

    lhs, rhs = cmp.performance_difference()
    reports.append(BoundReport("performance_difference", rhs, lhs, True, IDENTITY))

    reports.append(cmp.pi_bound_coupled(use_theoretical_seminorm))
    reports.append(cmp.pi_bound_decoupled(use_theoretical_seminorm))

    lhs, rhs = cmp.verify_lipsum(f)
    reports.append(BoundReport("lemma_lipsum", rhs, lhs, True, UPPER))
    lhs, rhs = cmp.verify_decomp_adv()
    reports.append(BoundReport("lemma_decomp_adv", rhs, lhs, True, UPPER))
    lhs, rhs = cmp.verify_lipnorm_adv()
    reports.append(BoundReport("lemma_lipnorm_adv", rhs, lhs, True, UPPER))
    reports.append(BoundReport("advantage_decomposition", 0.0, cmp.decomposition_residual(), True, IDENTITY))

    prof = lip.profile(cmp.c, cmp.pi, cmp.p, cmp.values)
    for key in ("q", "v", "u"):
        bound = getattr(prof, f"bound_{key}")
        reports.append(BoundReport(f"value_seminorm_{key}", bound, getattr(prof, f"exact_{key}"),
                                   prof.applicable, UPPER, {"contraction": prof.contraction}))
    return reports
