import math

import numpy as np
import pytest
from conftest import random_hermitian, random_matrix

from purelind.matqm import (
    dagger,
    hermitian_eigh,
    kron,
    matrix_exp,
    numerical_rank,
    partial_trace_ancilla,
    pseudo_inverse,
    range_projector,
    reshape_to_operator,
    reshape_to_state,
    sqrtm_psd,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
E = np.eye(2)


def test_kron_trivial_cases():
    np.testing.assert_array_equal(kron(E, E), np.eye(4))
    np.testing.assert_array_equal(kron(SZ, E), np.diag([1, 1, -1, -1]))


def test_kron_acts_factorwise(rng):
    a, b = random_matrix(rng, 2), random_matrix(rng, 2)
    x, y = random_matrix(rng, 2, 1)[:, 0], random_matrix(rng, 2, 1)[:, 0]
    xy = np.array([x[i] * y[j] for i in range(2) for j in range(2)])
    ax, by = a @ x, b @ y
    expected = np.array([ax[i] * by[j] for i in range(2) for j in range(2)])
    np.testing.assert_allclose(kron(a, b) @ xy, expected, atol=1e-13)


def test_kron_matches_row_major_convention(rng):
    a, b, w = random_matrix(rng, 3), random_matrix(rng, 3), random_matrix(rng, 3)
    np.testing.assert_allclose(kron(a, b) @ reshape_to_state(w), reshape_to_state(a @ w @ b.T), atol=1e-12)


def test_partial_trace_product_and_entangled():
    z1 = np.array([1, 0], dtype=complex)
    np.testing.assert_allclose(partial_trace_ancilla(np.kron(z1, z1)), np.diag([1, 0]))
    bell = (np.kron([1, 0], [1, 0]) + np.kron([0, 1], [0, 1])) / np.sqrt(2)
    np.testing.assert_allclose(partial_trace_ancilla(bell.astype(complex)), E / 2, atol=1e-15)


def test_partial_trace_double_loop(rng):
    n = 3
    w = random_matrix(rng, n)
    psi = reshape_to_state(w)
    rho = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            for a in range(n):
                rho[i, j] += psi[i * n + a] * np.conj(psi[j * n + a])
    np.testing.assert_allclose(partial_trace_ancilla(psi), rho, atol=1e-12)
    np.testing.assert_allclose(partial_trace_ancilla(psi), w @ dagger(w), atol=1e-12)


def test_pseudo_inverse_examples(rng):
    np.testing.assert_allclose(pseudo_inverse(E), E)
    psi = random_matrix(rng, 2, 1)[:, 0]
    psi0 = random_matrix(rng, 2, 1)[:, 0]
    psi, psi0 = psi / np.linalg.norm(psi), psi0 / np.linalg.norm(psi0)
    np.testing.assert_allclose(pseudo_inverse(np.outer(psi, psi0.conj())), np.outer(psi0, psi.conj()), atol=1e-14)
    np.testing.assert_array_equal(pseudo_inverse(np.zeros((3, 3))), np.zeros((3, 3)))


def _svd_oracle_pinv(w, tol=1e-10):
    """Pseudo-inverse from an eigen-solve of ``W^dag W``: ``W^+ = V S^-2 V^dag W^dag``."""
    vals, v = np.linalg.eigh(dagger(w) @ w)
    keep = vals > tol * vals.max()
    vk = v[:, keep]
    return vk @ np.diag(1 / vals[keep]) @ dagger(vk) @ dagger(w)


def test_pseudo_inverse_rank_two_against_eigen_oracle(rng):
    w = random_matrix(rng, 3, 2) @ random_matrix(rng, 2, 3)
    wp = pseudo_inverse(w)
    np.testing.assert_allclose(wp, _svd_oracle_pinv(w), atol=1e-10)
    np.testing.assert_allclose(w @ wp @ w, w, atol=1e-12)
    np.testing.assert_allclose(wp @ w @ wp, wp, atol=1e-12)


def test_projections_hermitian_idempotent(rng):
    for r in (1, 2, 3):
        w = random_matrix(rng, 4, r) @ random_matrix(rng, r, 4)
        wp = pseudo_inverse(w)
        for p in (w @ wp, wp @ w):
            np.testing.assert_allclose(p, dagger(p), atol=1e-10)
            np.testing.assert_allclose(p @ p, p, atol=1e-10)
        np.testing.assert_allclose(range_projector(w), w @ wp, atol=1e-10)


def test_rank_of_w_matches_rank_of_rho(rng):
    for r in (1, 2, 3, 4):
        w = random_matrix(rng, 4, r) @ random_matrix(rng, r, 4)
        rho = w @ dagger(w)
        p = hermitian_eigh(rho).eigenvalues
        assert numerical_rank(w) == int(np.count_nonzero(p > 1e-10 * p[-1])) == r


def test_eigh_reconstruction_and_order(rng):
    m = random_hermitian(rng, 5)
    dec = hermitian_eigh(m)
    assert np.all(np.diff(dec.eigenvalues) >= 0)
    assert np.max(np.abs(dec.reconstruct() - m)) <= 1e-12 * np.max(np.abs(m))
    with pytest.raises(ValueError):
        hermitian_eigh(random_matrix(rng, 3), herm_tol=1e-10)


def _taylor_exp(a, terms=60):
    """Truncated Taylor series with Kahan-compensated summation."""
    total = np.eye(len(a), dtype=complex)
    comp = np.zeros_like(total)
    term = np.eye(len(a), dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def test_matrix_exp_examples(rng):
    np.testing.assert_array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(matrix_exp(1j * math.pi / 2 * SX), 1j * SX, atol=1e-15)
    a = random_matrix(rng, 4)
    a *= 2.0 / np.linalg.norm(a, 2)
    np.testing.assert_allclose(matrix_exp(a), _taylor_exp(a), atol=1e-10)


def test_matrix_exp_inverse(rng):
    a = random_matrix(rng, 4)
    a *= 5.0 / np.linalg.norm(a, 2)
    np.testing.assert_allclose(matrix_exp(a) @ matrix_exp(-a), np.eye(4), atol=1e-10)


def test_reshape_roundtrip_and_inner_product(rng):
    bell = reshape_to_state(E / np.sqrt(2))
    np.testing.assert_allclose(bell, np.array([1, 0, 0, 1]) / np.sqrt(2))
    w = random_matrix(rng, 3)
    assert np.array_equal(reshape_to_operator(reshape_to_state(w)), w)
    z, w = random_matrix(rng, 2), random_matrix(rng, 2)
    hs = sum(np.conj(z[i, a]) * w[i, a] for i in range(2) for a in range(2))
    np.testing.assert_allclose(np.vdot(reshape_to_state(z), reshape_to_state(w)), hs, atol=1e-14)
    np.testing.assert_allclose(np.trace(dagger(z) @ w), hs, atol=1e-14)


def test_reshape_rejects_bad_shapes():
    with pytest.raises(ValueError):
        reshape_to_operator(np.ones(5))
    with pytest.raises(ValueError):
        reshape_to_state(np.ones((2, 3)))


def test_sqrtm_psd(rng):
    a = random_matrix(rng, 3, 2)
    rho = a @ dagger(a)
    s = sqrtm_psd(rho)
    np.testing.assert_allclose(s @ s, rho, atol=1e-12)
    np.testing.assert_allclose(s, dagger(s), atol=1e-14)
    with pytest.raises(ValueError):
        sqrtm_psd(np.diag([1.0, -0.1]))
