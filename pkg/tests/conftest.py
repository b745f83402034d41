import numpy as np
import pytest
from hypothesis import settings

from ilde.mdp import EpisodicMdp, StochasticPolicy

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_mdp(rng, S=4, A=2, H=3, deterministic=False):
    if deterministic:
        P = np.zeros((H, S, A, S))
        nxt = rng.integers(0, S, size=(H, S, A))
        np.put_along_axis(P, nxt[..., None], 1.0, axis=-1)
    else:
        P = rng.dirichlet(np.ones(S), size=(H, S, A))
    r = rng.uniform(-1, 1, size=(S, A))
    rho = rng.dirichlet(np.ones(S))
    return EpisodicMdp(P, r, rho)


def random_policy(rng, H, S, A):
    return StochasticPolicy(rng.dirichlet(np.ones(A), size=(H, S)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
