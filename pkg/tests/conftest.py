import math

import pytest

from mrftid import generate_ufm, soiptd

# Roll channel used throughout: k_M = 0.14, J = 1/1.42, B = 1, so T_d = 1/1.42
# and K = k_M / J.
EQ_K = 0.14 * 1.42
EQ_TP = 0.1
EQ_TD = 1 / 1.42
EQ_TAU = 0.06
REPORTED_HZ = {-0.7: 1.022, -0.4: 0.708}


@pytest.fixture(scope="session")
def drone_plant():
    return soiptd(K=EQ_K, T_p=EQ_TP, T_d=EQ_TD, tau=EQ_TAU)


@pytest.fixture(scope="session")
def manifolds():
    return {b: generate_ufm(b) for b in (-0.4, -0.7)}


def rel(a, b):
    return abs(a - b) / abs(b)


def log_uniform(rng, lo, hi):
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))
