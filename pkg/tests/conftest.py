import numpy as np
import pytest

from taskmix.pretrain import PretrainSpec, save_prior, train_robust_prior

PRIOR_SEED = 12345


@pytest.fixture(scope="session")
def nav_prior_bundle():
    """Desk-scale navigation prior shared across the whole session."""
    losses = []
    spec = PretrainSpec(domain="navigation2d", num_tasks=8, episodes_per_task=50, seed=PRIOR_SEED)
    agent = train_robust_prior(spec, loss_log=losses)
    return agent, losses


@pytest.fixture(scope="session")
def nav_prior(nav_prior_bundle):
    return nav_prior_bundle[0]


@pytest.fixture(scope="session")
def nav_prior_losses(nav_prior_bundle):
    return nav_prior_bundle[1]


@pytest.fixture(scope="session")
def nav_prior_dir(nav_prior, tmp_path_factory):
    path = tmp_path_factory.mktemp("prior") / "navigation2d"
    save_prior(nav_prior, path)
    return path
