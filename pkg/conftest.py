import copy
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from utils import config_loader, magnus, models, reference  # noqa: E402
from utils.magnus import TwoTermGenerator  # noqa: E402


@pytest.fixture(autouse=True)
def isolated_config():
    """Restore every module CONFIG and drop memoized results after each test"""
    saved = {name: copy.deepcopy(cfg) for name, cfg in config_loader.MODULE_CONFIGS.items()}
    yield
    for name, cfg in config_loader.MODULE_CONFIGS.items():
        cfg.clear()
        cfg.update(saved[name])
    magnus.clear_beta_cache()
    reference.clear_propagator_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def lz():
    """Landau-Zener with sigma_x in slot X: x(t) = 1, y(t) = t"""
    return models.landau_zener(models.Assignment.TERM_A_TO_X)


@pytest.fixture
def lz_swapped():
    return models.landau_zener(models.Assignment.TERM_A_TO_Y)


@pytest.fixture
def constant_generator():
    """x = y = 1 on the Landau-Zener operators"""
    return TwoTermGenerator(
        z1=-1j * models.PAULI["x"],
        z2=-1j * models.PAULI["z"],
        xfn=models.unit,
        yfn=models.unit,
        anti_hermitian=True,
        name="constant",
    )


def random_anti_hermitian(rng, dim):
    h = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return -0.5j * (h + h.conj().T)


@pytest.fixture
def smooth_generator(rng):
    """Random 3x3 anti-Hermitian pair with generic smooth coefficients"""
    return TwoTermGenerator(
        z1=random_anti_hermitian(rng, 3),
        z2=random_anti_hermitian(rng, 3),
        xfn=lambda t: 1.0 + 0.5 * np.sin(t),
        yfn=lambda t: np.exp(0.4 * t),
        anti_hermitian=True,
        name="smooth",
    )
