import numpy as np
import pytest

from infers.model import GLOBCURRENT, InfersParams
from infers.moments import TAGS


def random_params(rng, u_fraction=None):
    """A random feasible parameter set honouring the variance-matching tie."""
    beta = {t: rng.uniform(0.6, 1.2) for t in GLOBCURRENT}
    lam = {"N": rng.uniform(0.05, 0.9) * beta["N"]}
    lam.update({t: rng.uniform(0.4, 1.0) for t in ("F", "E", "R", "S")})
    s2_i = rng.uniform(0.005, 0.05)
    sigma2 = {"I": s2_i, "N": s2_i * (beta["N"] ** 2 - lam["N"] ** 2)}
    sigma2.update({t: rng.uniform(0.0005, 0.01) for t in ("F", "E", "R", "S")})
    st = rng.uniform(0.005, 0.05)
    f = rng.uniform(0.2, 0.8) if u_fraction is None else u_fraction
    alpha = {t: complex(rng.normal(0, 0.05), rng.normal(0, 0.05)) for t in GLOBCURRENT}
    return InfersParams(st, beta, lam, sigma2, alpha, sigma_t2_u=f * st, sigma_t2_v=(1 - f) * st)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def all_tags():
    return TAGS
