import numpy as np
import pytest

from lipconf.generators import GeneratorSpec, random_comparison
from lipconf.mdp import ConfMDP
from lipconf.metric import MetricSpace, validate_metric


def random_points_space(rng, n, dim=2):
    x = rng.normal(size=(n, dim))
    return validate_metric(np.linalg.norm(x[:, None] - x[None, :], axis=-1))


def small_mdp(rng, n_states, n_actions, gamma=0.9):
    return ConfMDP(
        MetricSpace.line(np.arange(n_states)),
        MetricSpace.discrete(n_actions),
        rng.normal(size=(n_states, n_actions, n_states)),
        gamma,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=[(3, 2, "line", 0), (4, 3, "random_embedded", 1), (5, 2, "discrete", 2)])
def comparison(request):
    s, a, kind, seed = request.param
    return random_comparison(GeneratorSpec(s, a, gamma=0.8, metric_kind=kind, seed=seed))


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
