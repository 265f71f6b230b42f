"""Acceptance criteria at the stated tolerances, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal summary) or
``python tests/test_acceptance.py``.
"""

import itertools
import time
from functools import lru_cache

import numpy as np
import pytest

from lipconf import oracles
from lipconf.bounds import Comparison, all_reports
from lipconf.generators import chain_env, gridworld_env, random_comparison
from lipconf.improvement import spci_run
from lipconf.mdp import ConfMDP, Configuration, Policy, expected_reward, state_kernel
from lipconf.metric import MetricSpace, random_lipschitz_function, tv_divergence, wasserstein
from lipconf.verify import DEFAULT_SIZES, trial_spec

N_INSTANCES = 200
N_GAMMA_ZERO = 20
SEED = 2024
RESULTS: list[str] = []


def record(label: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


@lru_cache(maxsize=None)
def corpus():
    """200 seeded comparisons cycling sizes up to 20 x 5, four discounts and three metric kinds."""
    start = time.perf_counter()
    rows = []
    for i in range(N_INSTANCES):
        spec = trial_spec(i, SEED, DEFAULT_SIZES)
        c, pi, p, pi2, p2, mu = random_comparison(spec)
        cmp = Comparison(c, pi, p, pi2, p2, mu)
        f = random_lipschitz_function(c.states, np.random.default_rng([spec.seed, 3]))
        exact = {r.name: r for r in all_reports(cmp, f)}
        theo = {r.name: r for r in all_reports(cmp, f, use_theoretical_seminorm=True)}
        rows.append((spec, cmp, exact, theo))
    return rows, time.perf_counter() - start


def worst(values):
    values = list(values)
    return min(values) if values else float("inf")


def test_c1_performance_difference():
    rows, _ = corpus()
    res = [abs(e["performance_difference"].bound_value - e["performance_difference"].exact_value)
           for _, _, e, _ in rows]
    ok = max(res) <= 1e-9
    assert record("1 performance-difference identity", ok, f"max |lhs-rhs| = {max(res):.3g} over {len(res)}")


def test_c2_distribution_bound():
    rows, _ = corpus()
    app = [e["distribution_coupled"] for _, _, e, _ in rows if e["distribution_coupled"].applicable]
    slack = worst(r.slack for r in app)
    ok = len(app) > 0 and slack >= -1e-9
    assert record("2 coupled distribution bound", ok, f"min slack {slack:.3g} on {len(app)} applicable")


def test_c3_decoupled_distribution_bound():
    rows, _ = corpus()
    gaps, slacks = [], []
    for _, _, e, _ in rows:
        dec, cou = e["distribution_decoupled"], e["distribution_coupled"]
        if dec.applicable and cou.applicable:
            gaps.append(dec.bound_value - cou.bound_value)
            slacks.append(dec.slack)
    ok = len(gaps) > 0 and worst(gaps) >= -1e-9 and worst(slacks) >= -1e-9
    assert record("3 decoupled distribution bound", ok,
                  f"min(decoupled - coupled) {worst(gaps):.3g}, min slack {worst(slacks):.3g} on {len(gaps)}")


def test_c4_improvement_lower_bounds():
    rows, _ = corpus()
    names = ["improvement_coupled", "improvement_decoupled",
             "improvement_coupled_theoretical", "improvement_decoupled_theoretical"]
    parts, ok = [], True
    for name in names:
        table = 1 if name.endswith("_theoretical") else 0
        reps = [row[2 + table][name] for row in rows]
        app = [r for r in reps if r.applicable]
        s = worst(r.slack for r in app)
        ok &= len(app) > 0 and s >= -1e-9
        parts.append(f"{name} {s:.3g} ({len(app)})")
    assert record("4 improvement lower bounds, both modes", ok, "min slack " + ", ".join(parts))


def test_c5_value_seminorm_bounds():
    rows, _ = corpus()
    parts, ok = [], True
    for key in ("u", "v", "q"):
        app = [e[f"value_seminorm_{key}"] for _, _, e, _ in rows if e[f"value_seminorm_{key}"].applicable]
        s = worst(r.slack for r in app)
        ok &= len(app) > 0 and s >= -1e-9
        parts.append(f"{key}: {s:.3g} ({len(app)})")
    assert record("5 value semi-norm bounds", ok, "min slack " + ", ".join(parts))


def test_c6_lemma_suite():
    rows, _ = corpus()
    parts, ok = [], True
    for name in ("lemma_lipsum", "lemma_decomp_adv", "lemma_lipnorm_adv"):
        s = worst(e[name].slack for _, _, e, _ in rows)
        ok &= s >= -1e-9
        parts.append(f"{name} {s:.3g}")
    residual = max(e["advantage_decomposition"].exact_value for _, _, e, _ in rows)
    ok &= residual <= 1e-10
    assert record("6 technical lemmas", ok, ", ".join(parts) + f", decomposition residual {residual:.3g}")


def test_c7_discrete_metric_is_tv():
    rng = np.random.default_rng(SEED)
    err = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 12))
        p, q = rng.dirichlet(np.ones(n) * rng.uniform(0.2, 2.0), size=2)
        err = max(err, abs(wasserstein(MetricSpace.discrete(n), p, q).distance - tv_divergence(p, q)))
    assert record("7 discrete metric reduces W to TV", err <= 1e-9, f"max |W - TV| = {err:.3g} over 100 pairs")


def test_c8_oracle_equivalence():
    rows, _ = corpus()
    d_err = ret_err = 0.0
    for _, cmp, _, _ in rows:
        for pi, p, d in ((cmp.pi, cmp.p, cmp.d), (cmp.pi_new, cmp.p_new, cmp.d_new)):
            g = cmp.c.gamma
            series = oracles.discounted_distribution_series(state_kernel(pi, p), cmp.mu, g, oracles.series_horizon(g))
            d_err = max(d_err, float(np.abs(series - d.mass).max()))
        j_values = float(cmp.mu @ cmp.values.v)
        j_dist = float(cmp.d.mass @ expected_reward(cmp.c, cmp.pi, cmp.p)) / (1 - cmp.c.gamma)
        ret_err = max(ret_err, abs(j_values - j_dist))
    rng = np.random.default_rng(SEED + 1)
    w_err = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 5))
        x = rng.normal(size=(n, 2))
        space = MetricSpace(np.linalg.norm(x[:, None] - x[None, :], axis=-1))
        p, q = rng.dirichlet(np.ones(n), size=2)
        w_err = max(w_err, abs(wasserstein(space, p, q).distance - oracles.transport_bruteforce(space.dist, p, q)))
    ok = d_err <= 1e-6 and w_err <= 1e-9 and ret_err <= 1e-9
    assert record("8 oracle equivalence", ok,
                  f"d vs series {d_err:.3g}, W vs polytope vertices {w_err:.3g}, return formulas {ret_err:.3g}")


def trace_safety(trace):
    safe = all(s.realized_improvement >= s.predicted_bound - 1e-9 for s in trace.steps)
    js = [trace.j_initial] + [s.j_after for s in trace.steps]
    return safe and all(b >= a for a, b in zip(js, js[1:]))


def best_deterministic(c, mu):
    s, a = c.n_states, c.n_actions
    best = -np.inf
    for acts in itertools.product(range(a), repeat=s):
        pi = Policy.deterministic(list(acts), a)
        for nxt in itertools.product(range(s), repeat=s * a):
            p = Configuration(np.eye(s)[np.array(nxt).reshape(s, a)])
            kernel, r = state_kernel(pi, p), expected_reward(c, pi, p)
            best = max(best, float(mu @ np.linalg.solve(np.eye(s) - c.gamma * kernel, r)))
    return best


SPCI_ENVS = {
    "chain_env(5, 0.3, 0.9)": lambda: chain_env(5, 0.3, 0.9),
    "gridworld_env(3, 3, 0.2, 0.9)": lambda: gridworld_env(3, 3, 0.2, 0.9),
}


@lru_cache(maxsize=None)
def spci_trace(name, bound="decoupled", grid=100):
    c, p = SPCI_ENVS[name]() if name in SPCI_ENVS else chain_env(3, 0.2, 0.5)
    mu = np.full(c.n_states, 1.0 / c.n_states)
    return c, mu, spci_run(c, Policy.uniform(c.n_states, c.n_actions), p, mu, grid=grid, bound=bound)


@pytest.mark.parametrize("name", list(SPCI_ENVS))
def test_c9_spci_safety(name):
    _, _, trace = spci_trace(name)
    ok = trace_safety(trace)
    assert record(f"9 SPCI safety/monotonicity on {name}", ok,
                  f"{len(trace.steps)} accepted steps, J {trace.j_initial:.6g} -> {trace.j_final:.6g} "
                  f"({trace.terminated_reason})")


def test_c9_spci_three_state_optimum():
    c, mu, trace = spci_trace("chain_env(3, 0.2, 0.5)")
    best = best_deterministic(c, mu)
    ok = trace_safety(trace) and abs(trace.j_final - best) <= 1e-9
    assert record("9 SPCI on the 3-state chain reaches the deterministic optimum", ok,
                  f"final J {trace.j_final:.6g} vs optimum {best:.6g}, {len(trace.steps)} accepted steps "
                  f"({trace.terminated_reason})")


def test_c9_diagnostic_coupled_variant():
    """Not a criterion: the same runs scored with the coupled lower bound."""
    parts, ok = [], True
    for name in [*SPCI_ENVS, "chain_env(3, 0.2, 0.5)"]:
        c, mu, trace = spci_trace(name, bound="coupled", grid=20)
        ok &= trace_safety(trace)
        parts.append(f"{name}: J {trace.j_initial:.4g} -> {trace.j_final:.4g} in {len(trace.steps)} steps")
    c, mu, trace = spci_trace("chain_env(3, 0.2, 0.5)", bound="coupled", grid=20)
    ok &= abs(trace.j_final - best_deterministic(c, mu)) <= 1e-9
    assert record("diagnostic (coupled-bound SPCI, grid 20)", ok, "; ".join(parts))


@lru_cache(maxsize=None)
def gamma_zero_gaps():
    coupled, decoupled = [], []
    for i in range(N_GAMMA_ZERO):
        spec = trial_spec(i, SEED + 7, DEFAULT_SIZES)
        c, pi, p, pi2, p2, mu = random_comparison(spec)
        cmp = Comparison(ConfMDP(c.states, c.actions, c.reward, 0.0), pi, p, pi2, p2, mu)
        for mode in (False, True):
            coupled.append(abs(cmp.pi_bound_coupled(mode).bound_value - cmp.improvement))
            decoupled.append(abs(cmp.pi_bound_decoupled(mode).bound_value - cmp.improvement))
    return coupled, decoupled


def test_c10_gamma_zero_coupled():
    coupled, _ = gamma_zero_gaps()
    assert record("10 gamma = 0: coupled improvement bound is exact", max(coupled) <= 1e-12,
                  f"max |bound - improvement| = {max(coupled):.3g} on {N_GAMMA_ZERO} instances, both modes")


def test_c10_gamma_zero_decoupled():
    _, decoupled = gamma_zero_gaps()
    assert record("10 gamma = 0: decoupled improvement bound is exact", max(decoupled) <= 1e-12,
                  f"max |bound - improvement| = {max(decoupled):.3g} on {N_GAMMA_ZERO} instances, both modes")


def test_runtime_budget():
    _, elapsed = corpus()
    assert record("runtime of the 200-instance bound corpus", elapsed < 120.0, f"{elapsed:.1f}s single-threaded")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
