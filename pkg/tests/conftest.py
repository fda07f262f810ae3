from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from advq import serialization as io
from advq.adiaconvert import ConversionInstance
from advq.adversary import AdversaryWitness
from advq.gram_core import GramMatrix

settings.register_profile(
    "advq", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("advq")

SINGLEBIT_GAMMA = np.array([[0, 1], [1, 0]], dtype=complex)
SINGLEBIT_V = np.ones(2, dtype=complex) / np.sqrt(2)


@pytest.fixture(scope="session")
def singlebit():
    return io.load_problem(io.fixture_path("singlebit.json"))


@pytest.fixture(scope="session")
def singlebit_witness():
    return io.load_witness(io.fixture_path("singlebit_witness.json"))


@pytest.fixture(scope="session")
def or2():
    return io.load_problem(io.fixture_path("or2.json"))


@pytest.fixture(scope="session")
def or2_witness():
    return io.load_witness(io.fixture_path("or2_witness.json"))


@pytest.fixture(scope="session")
def oracle_values():
    return io.read_json(io.fixture_path("oracle_values.json"))


def make_instance(problem, witness, eps):
    return ConversionInstance(problem.rho, problem.sigma, witness, eps, problem.alphabet)


@pytest.fixture
def sb_instance(singlebit, singlebit_witness):
    return lambda eps: make_instance(singlebit, singlebit_witness, eps)


@pytest.fixture
def or2_instance(or2, or2_witness):
    return lambda eps: make_instance(or2, or2_witness, eps)


def random_pair(rng: np.random.Generator, k: int, n: int = 3):
    """Random Gram matrices on ``k`` distinct binary strings of length ``n``."""
    from advq.gram_core import random_gram

    strings = [format(i, f"0{n}b") for i in range(2 ** n)]
    labels = sorted(rng.choice(strings, k, replace=False).tolist())
    r1, r2 = (int(r) for r in rng.integers(1, k + 1, 2))
    return (GramMatrix(labels, random_gram(k, r1, rng)), GramMatrix(labels, random_gram(k, r2, rng)))


def singlebit_pair():
    return GramMatrix.ones(["0", "1"]), GramMatrix.identity(["0", "1"])


def unit_witness():
    return AdversaryWitness(("0", "1"), np.ones((2, 1, 1)), np.ones((2, 1, 1)))
