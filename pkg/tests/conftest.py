import numpy as np
import pytest

from spritesurrogate.envharness import make_env, make_policy, sample_suite
from spritesurrogate.features import assemble_dataset, build_schema
from spritesurrogate.trees import fit_ensemble


def record(game, k_from, k_to, max_steps, sticky=False, seed=0):
    env = make_env(game)
    policy = make_policy("scripted-tracker", game)
    trajs = sample_suite(env, policy, k_from, k_to, sticky=sticky, seed=seed, max_steps=max_steps)
    decs = [d for t in trajs for d in t.decompositions]
    schema = build_schema(decs, sticky, env.n_actions, env.role)
    return policy, assemble_dataset(trajs, schema)


@pytest.fixture(scope="session")
def small_pong():
    """A few short pong trajectories and a 12-tree surrogate."""
    policy, data = record("mini-pong", 0, 4, 250)
    ensemble = fit_ensemble(data, n_trees=12, seed=0)
    return policy, data, ensemble


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
