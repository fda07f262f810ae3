from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from advq.adversary import delta_masks
from advq.gram_core import (
    GramError,
    GramMatrix,
    InfeasibleFactorization,
    all_ones,
    fidelity,
    gamma2_lower,
    gamma2_upper,
    gram_factorize,
    hadamard,
    hadamard_distance,
    hadamard_fidelity,
    mask_by,
    matrix_inner_product,
    operator_norm,
    random_gram,
    trace_distance,
    trace_norm,
)

from conftest import random_pair, singlebit_pair

X = np.array([[0, 1], [1, 0]], dtype=complex)
seeds = st.integers(0, 2 ** 32 - 1)


def rand_c(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


# -- inner product / Hadamard / norms ---------------------------------------


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (np.eye(2), np.eye(2), 2),
        (X, X, 2),
        (X * np.outer([1, 1], [1, 1]) / 2, all_ones(2), 1),
    ],
)
def test_inner_product_examples(a, b, expected):
    assert matrix_inner_product(a, b) == pytest.approx(expected, abs=1e-14)


def test_inner_product_shape_mismatch():
    with pytest.raises(ValueError):
        matrix_inner_product(np.eye(2), np.eye(3))


def test_hadamard_examples():
    rng = np.random.default_rng(0)
    a = rand_c(rng, 3, 3)
    np.testing.assert_allclose(hadamard(a, all_ones(3)), a)
    np.testing.assert_array_equal(hadamard(np.eye(2), X), np.zeros((2, 2)))
    off = all_ones(2) - np.eye(2)
    np.testing.assert_array_equal(hadamard(off, off), off)
    with pytest.raises(ValueError):
        hadamard(np.eye(2), np.eye(3))


@pytest.mark.parametrize(
    "a, op, tr",
    [
        (np.eye(3), 1, 3),
        (X, 1, 2),
        (np.outer([1, 0], [0.6, 0.8]), 1, 1),
    ],
)
def test_norm_examples(a, op, tr):
    assert operator_norm(a) == pytest.approx(op)
    assert trace_norm(a) == pytest.approx(tr)


@given(seeds)
def test_hadamard_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 6))
    a, b, c = rand_c(rng, k, k), rand_c(rng, k, k), rand_c(rng, k, k)
    lhs = matrix_inner_product(hadamard(a, c), b)
    rhs = matrix_inner_product(a, hadamard(b, c.conj()))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(seeds)
def test_inner_product_holder(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 6))
    a, b = rand_c(rng, k, k), rand_c(rng, k, k)
    assert abs(matrix_inner_product(a, b)) <= trace_norm(a) * operator_norm(b) + 1e-9


# -- Gram matrices ----------------------------------------------------------


def test_gram_validation():
    with pytest.raises(GramError):
        GramMatrix(("a", "b"), [[1, 2], [2, 1]])  # not PSD
    with pytest.raises(GramError):
        GramMatrix(("a", "b"), [[1, 1j], [1j, 1]])  # not Hermitian
    with pytest.raises(GramError):
        GramMatrix(("a", "b"), [[2, 0], [0, 1]])  # diagonal
    with pytest.raises(GramError):
        GramMatrix(("a", "a"), np.eye(2))
    with pytest.raises(GramError):
        GramMatrix(("a",), [[np.nan]])


def test_gram_matrix_is_read_only():
    g = GramMatrix.identity(["0", "1"])
    with pytest.raises(ValueError):
        g.matrix[0, 1] = 1


def test_factorize_examples(or2):
    j = gram_factorize(GramMatrix.ones(["0", "1"]))
    assert j.dim == 1
    np.testing.assert_allclose(np.abs(j.vectors), [[1], [1]])
    i = gram_factorize(GramMatrix.identity(["0", "1"]))
    assert i.dim == 2
    np.testing.assert_allclose(i.gram(), np.eye(2), atol=1e-12)
    f = gram_factorize(or2.sigma)
    assert f.dim == 2
    assert np.vdot(f.vector("01"), f.vector("10")) == pytest.approx(1)


@given(seeds)
def test_factorize_reproduces_random(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 7))
    g = GramMatrix(tuple(str(i) for i in range(k)), random_gram(k, int(rng.integers(1, k + 1)), rng))
    r = gram_factorize(g)
    assert np.abs(r.gram() - g.matrix).max() <= 1e-9
    assert r.dim <= k


def test_from_function():
    f = GramMatrix.from_function({"00": 0, "01": 1, "10": 1})
    np.testing.assert_array_equal(f.matrix.real, [[1, 0, 0], [0, 1, 1], [0, 1, 1]])


# -- gamma_2 ----------------------------------------------------------------


@pytest.mark.parametrize("i", [0, 1])
def test_gamma2_upper_coordinate_equality(or2, i):
    labels = or2.labels
    a = all_ones(len(labels)) - delta_masks(labels)[i]
    basis = np.eye(2)
    u = np.array([basis[int(x[i])] for x in labels])
    assert gamma2_upper(u, u, a) == pytest.approx(1.0)


def test_gamma2_upper_identity_and_infeasible():
    e = np.eye(4)
    assert gamma2_upper(e, e, np.eye(4)) == 1.0
    with pytest.raises(InfeasibleFactorization) as info:
        gamma2_upper(e, e, 2 * np.eye(4))
    assert info.value.residual == pytest.approx(1.0)


def test_gamma2_lower_antidiagonal():
    assert gamma2_lower(X) >= 1 - 1e-12


@given(seeds)
def test_gamma2_lower_below_upper(seed):
    rng = np.random.default_rng(seed)
    k, d = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    u, v = rand_c(rng, k, d), rand_c(rng, k, d)
    a = u.conj() @ v.T
    assert gamma2_lower(a, samples=4, seed=seed % 1000) <= gamma2_upper(u, v, a) + 1e-8


@given(seeds)
def test_hadamard_multiplier_bound(seed):
    rng = np.random.default_rng(seed)
    k, d = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    u, v = rand_c(rng, k, d), rand_c(rng, k, d)
    a = u.conj() @ v.T
    b = rand_c(rng, k, k)
    assert operator_norm(hadamard(a, b)) <= gamma2_upper(u, v, a) * operator_norm(b) + 1e-9


# -- fidelity / distance ----------------------------------------------------


def test_fidelity_basics():
    assert fidelity(np.diag([1, 0]), np.diag([1, 0])) == pytest.approx(1)
    assert fidelity(np.diag([1, 0]), np.diag([0, 1])) == pytest.approx(0)
    assert trace_distance(np.diag([1, 0]), np.diag([0, 1])) == pytest.approx(1)


def test_hadamard_fidelity_examples():
    rho, sigma = singlebit_pair()
    same = hadamard_fidelity(rho, rho, restarts=4)
    assert same.value == pytest.approx(1, abs=1e-8)
    hb = hadamard_fidelity(rho, sigma)
    assert hb.value == pytest.approx(1 / np.sqrt(2), abs=1e-6)
    assert np.abs(hb.u) == pytest.approx(np.ones(2) / np.sqrt(2), abs=1e-3)


def test_hadamard_distance_examples():
    rho, sigma = singlebit_pair()
    assert hadamard_distance(rho, rho, restarts=4).value == pytest.approx(0, abs=1e-12)
    hb = hadamard_distance(rho, sigma)
    assert hb.value == pytest.approx(0.5, abs=1e-8)
    assert np.abs(hb.u) == pytest.approx(np.ones(2) / np.sqrt(2), abs=1e-4)


@given(seeds)
def test_hadamard_fidelity_in_range(seed):
    rng = np.random.default_rng(seed)
    rho, sigma = random_pair(rng, int(rng.integers(2, 5)))
    hb = hadamard_fidelity(rho, sigma, restarts=3, seed=seed % 1000)
    assert -1e-12 <= hb.value <= 1 + 1e-9
    # the value is attained at the returned u
    assert fidelity(mask_by(rho.matrix, hb.u), mask_by(sigma.matrix, hb.u)) == pytest.approx(hb.value)


@given(seeds)
def test_fuchs_sandwich_per_u(seed):
    rng = np.random.default_rng(seed)
    rho, sigma = random_pair(rng, int(rng.integers(2, 7)))
    u = rand_c(rng, rho.size)
    u /= np.linalg.norm(u)
    r, s = mask_by(rho.matrix, u), mask_by(sigma.matrix, u)
    f, d = fidelity(r, s), trace_distance(r, s)
    assert 1 - d <= f + 1e-9
    assert f <= np.sqrt(max(0.0, 1 - d * d)) + 1e-9


def test_mismatched_labels():
    a = GramMatrix.identity(["0", "1"])
    b = GramMatrix.identity(["1", "0"])
    with pytest.raises(GramError):
        hadamard_fidelity(a, b)
