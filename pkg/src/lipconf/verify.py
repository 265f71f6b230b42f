"""Property suite run over generated instances.

Every property returns a list of slacks; a slack below ``-tol`` is a failure. Properties
run in a fixed order so that the first reported failure points at the most basic
broken identity (the advantage decomposition comes before anything built on it).
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import advantages as adv
from . import lipschitz as lip
from . import oracles
from .bounds import Comparison, all_reports
from .generators import GeneratorSpec, METRIC_KINDS, _draw, random_comparison, smooth_kernel
from .improvement import greedy_targets, spci_run
from .io import Instance, dumps, instance_from_dict, instance_to_dict
from .mdp import ConfMDP, Configuration, Policy, bellman_residual, expected_reward, solve_values, state_kernel
from .metric import MetricSpace, random_lipschitz_function, tv_divergence, validate_metric, wasserstein_distance

GAMMAS = (0.9, 0.5, 0.7, 0.3)
DEFAULT_SIZES = ((2, 2), (3, 2), (4, 3), (5, 2), (6, 3), (8, 4), (10, 3), (12, 5), (16, 4), (20, 5))
N_WITNESSES = 20


def parse_sizes(text: str) -> list[tuple[int, int]]:
    """'2x2,4x3' -> [(2, 2), (4, 3)]"""
    sizes = []
    for item in text.replace(" ", ",").split(","):
        if not item:
            continue
        parts = item.lower().split("x")
        if len(parts) != 2 or not all(p.isdigit() for p in parts) or min(int(p) for p in parts) < 1:
            raise ValueError(f"bad size {item!r}, expected SxA such as 4x2")
        sizes.append((int(parts[0]), int(parts[1])))
    if not sizes:
        raise ValueError("no sizes given")
    return sizes


def trial_spec(index: int, seed: int, sizes: Sequence[tuple[int, int]]) -> GeneratorSpec:
    s, a = sizes[index % len(sizes)]
    return GeneratorSpec(
        n_states=s,
        n_actions=a,
        gamma=GAMMAS[index % len(GAMMAS)],
        smoothing=0.5,
        metric_kind=METRIC_KINDS[index % len(METRIC_KINDS)],
        seed=seed + index,
    )


class Trial:
    """One generated comparison plus lazily computed shared quantities."""

    def __init__(self, spec: GeneratorSpec):
        self.spec = spec
        self.c, self.pi, self.p, self.pi_new, self.p_new, self.mu = random_comparison(spec)
        self.rng = np.random.default_rng([spec.seed, 2])

    @cached_property
    def cmp(self) -> Comparison:
        return Comparison(self.c, self.pi, self.p, self.pi_new, self.p_new, self.mu)

    @cached_property
    def witness(self) -> np.ndarray:
        return random_lipschitz_function(self.c.states, self.rng)

    @cached_property
    def reports(self):
        return all_reports(self.cmp, self.witness) + [
            r for r in all_reports(self.cmp, self.witness, use_theoretical_seminorm=True)
            if r.name.endswith("_theoretical")
        ]


# -- metric_core ---------------------------------------------------------------

def _row_pairs(t: Trial) -> list[tuple[np.ndarray, np.ndarray]]:
    k, k_new = state_kernel(t.pi, t.p), state_kernel(t.pi_new, t.p_new)
    return [(t.cmp.d.mass, t.cmp.d_new.mass)] + [(k[s], k_new[s]) for s in range(min(3, t.c.n_states))]


def prop_w_duality(t: Trial) -> list[float]:
    dist = t.c.states.dist
    out = []
    for p, q in _row_pairs(t):
        w = wasserstein_distance(dist, p, q)
        for _ in range(N_WITNESSES):
            f = random_lipschitz_function(t.c.states, t.rng)
            out.append(w - abs(float((p - q) @ f)))
    return out


def prop_w_axioms(t: Trial) -> list[float]:
    dist = t.c.states.dist
    (p, q), (r, _) = _row_pairs(t)[:2]
    w = lambda a, b: wasserstein_distance(dist, a, b)  # noqa: E731
    return [-abs(w(p, q) - w(q, p)), -w(p, p), w(p, r) + w(r, q) - w(p, q)]


def prop_w_discrete_tv(t: Trial) -> list[float]:
    dist = MetricSpace.discrete(t.c.n_states).dist
    return [-abs(wasserstein_distance(dist, p, q) - tv_divergence(p, q)) for p, q in _row_pairs(t)]


def prop_w_scaling(t: Trial) -> list[float]:
    dist = t.c.states.dist
    return [-abs(wasserstein_distance(2.5 * dist, p, q) - 2.5 * wasserstein_distance(dist, p, q))
            for p, q in _row_pairs(t)]


def prop_w_bruteforce(t: Trial) -> list[float]:
    k = min(4, t.c.n_states)
    sub = t.c.states.dist[:k, :k]
    p, q = t.rng.dirichlet(np.ones(k), size=2)
    return [-abs(wasserstein_distance(sub, p, q) - oracles.transport_bruteforce(sub, p, q))]


# -- confmdp_core --------------------------------------------------------------

def prop_bellman(t: Trial) -> list[float]:
    return [-bellman_residual(t.c, t.pi, t.p, t.cmp.values)]


def prop_return_formulas(t: Trial) -> list[float]:
    from_values = float(t.mu @ t.cmp.values.v)
    from_d = float(t.cmp.d.mass @ expected_reward(t.c, t.pi, t.p)) / (1.0 - t.c.gamma)
    return [-abs(from_values - from_d) / max(1.0, abs(from_values))]


def prop_discounted_series(t: Trial) -> list[float]:
    kernel = state_kernel(t.pi, t.p)
    series = oracles.discounted_distribution_series(kernel, t.mu, t.c.gamma, oracles.series_horizon(t.c.gamma))
    return [-float(np.abs(series - t.cmp.d.mass).max())]


def prop_permutation(t: Trial) -> list[float]:
    perm = t.rng.permutation(t.c.n_states)
    dist = t.c.states.dist[np.ix_(perm, perm)]
    reward = t.c.reward[perm][:, :, perm]
    c = ConfMDP(MetricSpace(dist), t.c.actions, reward, t.c.gamma)
    values = solve_values(c, Policy(t.pi.probs[perm]), Configuration(t.p.probs[perm][:, :, perm]))
    return [-float(np.abs(values.v - t.cmp.values.v[perm]).max()) / max(1.0, float(np.abs(values.v).max()))]


# -- advantages ----------------------------------------------------------------

def _scale(t: Trial) -> float:
    return max(1.0, float(np.abs(t.cmp.values.u).max()))


def prop_check_decomposition(t: Trial) -> list[float]:
    return [-adv.check_decomposition(t.cmp.rel, t.pi_new) / _scale(t)]


def prop_advantage_invariants(t: Trial) -> list[float]:
    b = adv.advantage_bundle(t.cmp.values, t.pi, t.p)
    scale = _scale(t)
    summed = np.abs(b.coupled_adv - (b.config_adv + b.policy_adv[:, :, None])).max()
    own_policy = np.abs((t.pi.probs * b.policy_adv).sum(axis=1)).max()
    own_config = np.abs((t.p.probs * b.config_adv).sum(axis=2)).max()
    return [-float(summed) / scale, -float(own_policy) / scale, -float(own_config) / scale]


def prop_own_pair_nullity(t: Trial) -> list[float]:
    cmp = t.cmp
    b = adv.advantage_bundle(cmp.values, t.pi, t.p)
    rel = adv.relative_advantages(cmp.values, b, t.pi, t.p, t.pi, t.p, cmp.d)
    worst = max(float(np.abs(x).max()) for x in (rel.policy_rel, rel.config_rel, rel.coupled_rel))
    return [-worst / _scale(t)]


def prop_expectation_linearity(t: Trial) -> list[float]:
    rel, d = t.cmp.rel, t.cmp.d.mass
    via_decomposition = float(d @ (rel.policy_rel + (t.pi_new.probs * rel.config_rel).sum(axis=1)))
    return [-abs(rel.expected_coupled - via_decomposition) / _scale(t)]


# -- lipschitz_analysis --------------------------------------------------------

def prop_value_dominance(t: Trial) -> list[float]:
    prof = lip.profile(t.c, t.pi, t.p, t.cmp.values)
    slack = prof.dominance_slack()
    # the Q closed form is not guaranteed for rewards that depend on s'
    return [] if slack is None else [slack["v"], slack["u"]]


def prop_u_intermediate(t: Trial) -> list[float]:
    prof = lip.profile(t.c, t.pi, t.p, t.cmp.values)
    return [prof.l_r + t.c.gamma * prof.exact_v - prof.exact_u]


def prop_reward_scaling(t: Trial) -> list[float]:
    lam = 2.5
    c2 = ConfMDP(t.c.states, t.c.actions, lam * t.c.reward, t.c.gamma)
    base = lip.profile(t.c, t.pi, t.p, t.cmp.values)
    scaled = lip.profile(c2, t.pi, t.p, solve_values(c2, t.pi, t.p))
    return [
        -abs(scaled.l_r - lam * base.l_r),
        -abs(scaled.exact_v - lam * base.exact_v),
        -abs(scaled.exact_q - lam * base.exact_q),
        -abs(scaled.exact_u - lam * base.exact_u),
        -abs(scaled.l_pi - base.l_pi),
        -abs(scaled.l_p - base.l_p),
    ]


# -- bounds --------------------------------------------------------------------

def _report_property(name: str) -> Callable[[Trial], list[float]]:
    def run(t: Trial) -> list[float]:
        return [r.slack for r in t.reports if r.name == name and r.applicable]
    run.__name__ = f"prop_{name}"
    return run


def prop_corollary_ordering(t: Trial) -> list[float]:
    coupled, decoupled = t.cmp.distribution_bound_coupled(), t.cmp.distribution_bound_decoupled()
    if not (coupled.applicable and decoupled.applicable):
        return []
    return [decoupled.bound_value - coupled.bound_value]


def prop_improvement_ordering(t: Trial) -> list[float]:
    coupled, decoupled = t.cmp.pi_bound_coupled(), t.cmp.pi_bound_decoupled()
    if not (coupled.applicable and decoupled.applicable):
        return []
    return [coupled.bound_value - decoupled.bound_value]


def _gamma_zero(t: Trial) -> Comparison:
    c0 = ConfMDP(t.c.states, t.c.actions, t.c.reward, 0.0)
    return Comparison(c0, t.pi, t.p, t.pi_new, t.p_new, t.mu)


def prop_gamma_zero_coupled(t: Trial) -> list[float]:
    cmp = _gamma_zero(t)
    return [-abs(cmp.pi_bound_coupled(m).bound_value - cmp.improvement) for m in (False, True)]


def prop_gamma_zero_decoupled_valid(t: Trial) -> list[float]:
    cmp = _gamma_zero(t)
    return [cmp.pi_bound_decoupled(m).slack for m in (False, True)]


# -- improvement ---------------------------------------------------------------

def prop_greedy_nonnegative(t: Trial) -> list[float]:
    cmp = t.cmp
    pi_t, p_t = greedy_targets(t.c, t.pi, t.p, cmp.values)
    b = adv.advantage_bundle(cmp.values, t.pi, t.p)
    rel = adv.relative_advantages(cmp.values, b, t.pi, t.p, pi_t, p_t, cmp.d)
    return [rel.expected_policy, rel.expected_config]


def prop_spci_safety(t: Trial) -> list[float]:
    out = []
    for bound in ("decoupled", "coupled"):
        out.extend(_trace_slacks(spci_run(t.c, t.pi, t.p, t.mu, max_iters=3, grid=10, bound=bound)))
    return out


def _trace_slacks(trace) -> list[float]:
    out = []
    for k, step in enumerate(trace.steps):
        out.append(step.realized_improvement - step.predicted_bound)
        out.append(step.j_after - step.j_before)
        if k + 1 < len(trace.steps):
            out.append(-abs(trace.steps[k + 1].j_before - step.j_after))
    return out


# -- generators / harness ------------------------------------------------------

def _serialized(spec: GeneratorSpec) -> str:
    c, pi, p, pi_new, p_new, mu = random_comparison(spec)
    return dumps(instance_to_dict(Instance(c, pi, p, mu, pi_new, p_new)))


def prop_seed_determinism(t: Trial) -> list[float]:
    return [0.0 if _serialized(t.spec) == _serialized(t.spec) else -1.0]


def prop_instance_valid(t: Trial) -> list[float]:
    validate_metric(t.c.states.dist)
    validate_metric(t.c.actions.dist)
    for pi, p in ((t.pi, t.p), (t.pi_new, t.p_new)):
        Policy(pi.probs), Configuration(p.probs)
    k = [lip.contraction(t.c.gamma, lip.config_lipschitz(t.c, p), lip.policy_lipschitz(t.c.states, t.c.actions, pi))
         for pi, p in ((t.pi, t.p), (t.pi_new, t.p_new))]
    return [1.0 - x for x in k]


def prop_smoothing_monotone(t: Trial) -> list[float]:
    c, pi_raw, p_raw, _ = _draw(t.spec)
    measured = []
    for w in (0.2, 0.5, 0.8):
        measured.append((
            lip.policy_lipschitz(c.states, c.actions, Policy(smooth_kernel(pi_raw, w))),
            lip.config_lipschitz(c, Configuration(smooth_kernel(p_raw, w))),
        ))
    return [hi - lo for (a, b) in zip(measured, measured[1:]) for lo, hi in zip(b, a)]


def prop_round_trip(t: Trial) -> list[float]:
    inst = Instance(t.c, t.pi, t.p, t.mu, t.pi_new, t.p_new)
    back = instance_from_dict(json.loads(dumps(instance_to_dict(inst))))
    pairs = [
        (t.c.states.dist, back.c.states.dist), (t.c.actions.dist, back.c.actions.dist),
        (t.c.reward, back.c.reward), (t.pi.probs, back.pi.probs), (t.p.probs, back.p.probs),
        (t.mu, back.mu), (t.pi_new.probs, back.pi_new.probs), (t.p_new.probs, back.p_new.probs),
    ]
    same = all(np.array_equal(a, b) for a, b in pairs) and t.c.gamma == back.c.gamma
    return [0.0 if same else -1.0]


@dataclass(frozen=True)
class Property:
    name: str
    module: str
    tol: float
    run: Callable[[Trial], list[float]]


_BOUND_ROWS = (
    "performance_difference", "distribution_coupled", "distribution_decoupled", "sup_comparison",
    "improvement_coupled", "improvement_decoupled", "improvement_coupled_theoretical",
    "improvement_decoupled_theoretical", "lemma_lipsum", "lemma_decomp_adv", "lemma_lipnorm_adv",
)

PROPERTIES: tuple[Property, ...] = (
    Property("check_decomposition", "advantages", 1e-10, prop_check_decomposition),
    Property("advantage_invariants", "advantages", 1e-12, prop_advantage_invariants),
    Property("own_pair_nullity", "advantages", 1e-12, prop_own_pair_nullity),
    Property("expectation_linearity", "advantages", 1e-10, prop_expectation_linearity),
    Property("bellman_residual", "confmdp_core", 1e-9, prop_bellman),
    Property("return_formulas_agree", "confmdp_core", 1e-9, prop_return_formulas),
    Property("discounted_series_oracle", "confmdp_core", 1e-6, prop_discounted_series),
    Property("state_permutation_invariance", "confmdp_core", 1e-9, prop_permutation),
    Property("wasserstein_duality", "metric_core", 1e-9, prop_w_duality),
    Property("wasserstein_axioms", "metric_core", 1e-9, prop_w_axioms),
    Property("wasserstein_discrete_is_tv", "metric_core", 1e-9, prop_w_discrete_tv),
    Property("wasserstein_scaling", "metric_core", 1e-9, prop_w_scaling),
    Property("wasserstein_bruteforce", "metric_core", 1e-9, prop_w_bruteforce),
    Property("value_seminorm_dominance", "lipschitz_analysis", 1e-9, prop_value_dominance),
    Property("u_seminorm_intermediate", "lipschitz_analysis", 1e-9, prop_u_intermediate),
    Property("reward_scaling", "lipschitz_analysis", 1e-9, prop_reward_scaling),
    *(Property(name, "bounds", 1e-9, _report_property(name)) for name in _BOUND_ROWS),
    Property("distribution_bound_ordering", "bounds", 1e-9, prop_corollary_ordering),
    Property("improvement_bound_ordering", "bounds", 1e-9, prop_improvement_ordering),
    Property("gamma_zero_coupled_exact", "bounds", 1e-12, prop_gamma_zero_coupled),
    Property("gamma_zero_decoupled_valid", "bounds", 1e-9, prop_gamma_zero_decoupled_valid),
    Property("greedy_targets_nonnegative", "improvement", 1e-12, prop_greedy_nonnegative),
    Property("spci_safety_monotonicity", "improvement", 1e-9, prop_spci_safety),
    Property("instance_valid", "generators", 0.0, prop_instance_valid),
    Property("seed_determinism", "generators", 0.0, prop_seed_determinism),
    Property("smoothing_monotonicity", "generators", 1e-12, prop_smoothing_monotone),
    Property("round_trip", "harness_cli", 0.0, prop_round_trip),
)


@dataclass
class PropertyResult:
    trial: int
    seed: int
    name: str
    slacks: list[float]
    passed: bool
    error: str | None = None


@dataclass
class TrialResult:
    trial: int
    seed: int
    size: tuple[int, int]
    gamma: float
    metric_kind: str
    results: list[PropertyResult] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(r.passed for r in self.results)


def run_trial(index: int, seed: int, sizes: Sequence[tuple[int, int]],
              properties: Sequence[Property] = PROPERTIES) -> TrialResult:
    spec = trial_spec(index, seed, sizes)
    out = TrialResult(index, spec.seed, (spec.n_states, spec.n_actions), spec.gamma, spec.metric_kind)
    try:
        t = Trial(spec)
    except Exception as exc:  # generation failure is reported, not raised
        out.error = f"{type(exc).__name__}: {exc}"
        return out
    for prop in properties:
        try:
            slacks = [float(s) for s in prop.run(t)]
            ok = all(s >= -prop.tol for s in slacks)
            out.results.append(PropertyResult(index, spec.seed, prop.name, slacks, ok))
        except Exception as exc:  # a raised consistency check is a failure of that property
            out.results.append(PropertyResult(index, spec.seed, prop.name, [], False, f"{type(exc).__name__}: {exc}"))
    return out


def _run_one(args) -> TrialResult:
    return run_trial(*args)


def run_suite(trials: int, seed: int, sizes: Sequence[tuple[int, int]] = DEFAULT_SIZES,
              workers: int = 1) -> list[TrialResult]:
    """Results are ordered by trial index regardless of the number of workers."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    jobs = [(i, seed, tuple(sizes)) for i in range(trials)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def first_failure(results: Sequence[TrialResult]) -> tuple[TrialResult, PropertyResult | None] | None:
    for tr in results:
        if tr.error is not None:
            return tr, None
        for r in tr.results:
            if not r.passed:
                return tr, r
    return None


def summarize(results: Sequence[TrialResult]) -> list[dict]:
    """Per-property slack statistics over all trials, in suite order."""
    rows = []
    for prop in PROPERTIES:
        slacks, failures, errors = [], 0, 0
        for tr in results:
            for r in tr.results:
                if r.name == prop.name:
                    slacks.extend(r.slacks)
                    failures += not r.passed
                    errors += r.error is not None
        finite = [s for s in slacks if math.isfinite(s)]
        rows.append({
            "property": prop.name,
            "module": prop.module,
            "tol": prop.tol,
            "checks": len(slacks),
            "min_slack": min(finite) if finite else None,
            "mean_slack": float(np.mean(finite)) if finite else None,
            "failures": failures,
            "errors": errors,
        })
    return rows
