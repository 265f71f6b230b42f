"""Policy, configuration and coupled advantages and their relative/expected forms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .mdp import Configuration, DiscountedDistribution, Policy, ValueBundle


@dataclass(frozen=True, eq=False)
class AdvantageBundle:
    policy_adv: np.ndarray  # S x A
    config_adv: np.ndarray  # S x A x S
    coupled_adv: np.ndarray  # S x A x S


@dataclass(frozen=True, eq=False)
class RelativeAdvantages:
    policy_rel: np.ndarray  # S
    config_rel: np.ndarray  # S x A
    coupled_rel: np.ndarray  # S
    expected_policy: float
    expected_config: float
    expected_coupled: float


def _policy_advantage(values: ValueBundle) -> np.ndarray:
    return values.q - values.v[:, None]


def _config_advantage(values: ValueBundle) -> np.ndarray:
    return values.u - values.q[:, :, None]


def _coupled_advantage(values: ValueBundle) -> np.ndarray:
    # straight from U - V so that the decomposition lemma is a real check
    return values.u - values.v[:, None, None]


def advantage_bundle(values: ValueBundle, pi: Policy, p: Configuration) -> AdvantageBundle:
    s, a = pi.probs.shape
    if values.q.shape != (s, a) or p.probs.shape != (s, a, s):
        raise ShapeMismatch(f"values {values.q.shape}, policy {pi.probs.shape}, configuration {p.probs.shape}")
    return AdvantageBundle(
        policy_adv=_policy_advantage(values),
        config_adv=_config_advantage(values),
        coupled_adv=_coupled_advantage(values),
    )


def relative_advantages(
    values: ValueBundle,
    bundle: AdvantageBundle,
    pi: Policy,
    p: Configuration,
    pi_new: Policy,
    p_new: Configuration,
    d: DiscountedDistribution,
) -> RelativeAdvantages:
    """Relative advantages of (pi_new, p_new) over (pi, p), weighted by the current pair's d."""
    shapes = {pi.probs.shape, pi_new.probs.shape, bundle.policy_adv.shape}
    if len(shapes) != 1 or p.probs.shape != p_new.probs.shape or len(d.mass) != pi.probs.shape[0]:
        raise ShapeMismatch("current pair, new pair, advantages and distribution disagree in shape")
    policy_rel = np.einsum("sa,sa->s", pi_new.probs, bundle.policy_adv)
    config_rel = np.einsum("sat,sat->sa", p_new.probs, bundle.config_adv)
    coupled_rel = np.einsum("sa,sat,sat->s", pi_new.probs, p_new.probs, bundle.coupled_adv)
    w = d.mass
    return RelativeAdvantages(
        policy_rel=policy_rel,
        config_rel=config_rel,
        coupled_rel=coupled_rel,
        expected_policy=float(w @ policy_rel),
        expected_config=float(np.einsum("s,sa,sa->", w, pi.probs, config_rel)),
        expected_coupled=float(w @ coupled_rel),
    )


def check_decomposition(rel: RelativeAdvantages, pi_new: Policy) -> float:
    """Largest per-state residual of coupled = policy + E_{pi_new}[config]."""
    recombined = rel.policy_rel + np.einsum("sa,sa->s", pi_new.probs, rel.config_rel)
    return float(np.abs(rel.coupled_rel - recombined).max())
