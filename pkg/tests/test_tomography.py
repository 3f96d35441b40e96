import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltedps import fock
from tiltedps.fock import Grid2D
from tiltedps.observable import GeneratingOperator, generating_operator, phase_space_density, tilt_map
from tiltedps.tomography import (build_forward_map, fidelity, from_params, hermitian_basis,
                                 reconstruct, to_params, trace_distance)

PI = math.pi
D = 6
PLANE = Grid2D.square(-5, 5, 41)


@pytest.fixture(scope="module")
def husimi_map():
    return build_forward_map(GeneratingOperator(fock.vacuum(D), PI / 2), PLANE, D)


def coherent_truncated(z, d):
    v = fock.coherent_state(z, d, tail_tol=1e-4)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def test_hermitian_basis_orthonormal():
    B = hermitian_basis(4)
    gram = np.einsum("aij,bji->ab", B, B)
    assert np.abs(gram - np.eye(16)).max() < 1e-14
    assert all(np.abs(b - b.conj().T).max() == 0 for b in B)


def test_params_round_trip():
    rho = fock.random_density(5, rank=3, seed=4)
    B = hermitian_basis(5)
    assert np.abs(from_params(to_params(rho, B), B) - rho).max() < 1e-14


def test_forward_map_matches_density(husimi_map):
    rho = fock.random_density(D, rank=2, seed=1)
    g = phase_space_density(rho, GeneratingOperator(fock.vacuum(D), PI / 2), PLANE)
    assert np.abs(husimi_map.apply(rho) - g.values.ravel()).max() < 1e-10


def test_forward_map_tilted_matches_density():
    G = generating_operator(fock.number_state(1, 10), PI / 3, cutoff=40)
    rho = fock.random_density(D, rank=2, seed=2)
    grid = Grid2D.square(-4, 4, 17)
    F = build_forward_map(G, grid, D)
    g = phase_space_density(rho, G, grid)
    assert np.abs(F.apply(rho) - g.values.ravel()).max() < 1e-10


def test_forward_map_full_rank(husimi_map):
    assert husimi_map.rank() == D * D


@given(st.integers(0, 2 ** 16), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=15, deadline=None)
def test_forward_map_linear(husimi_map, seed, a, b):
    r1 = fock.random_density(D, rank=2, seed=seed)
    r2 = fock.random_density(D, rank=3, seed=seed + 1)
    lhs = husimi_map.apply(a * r1 + b * r2)
    rhs = a * husimi_map.apply(r1) + b * husimi_map.apply(r2)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_pure_coherent_round_trip(husimi_map):
    rho = coherent_truncated(0.7, D)
    rec = reconstruct(husimi_map.apply(rho), husimi_map)
    assert fidelity(rho, rec.rho) >= 0.99
    assert rec.residual <= 1e-8


def test_mixed_round_trip(husimi_map):
    rho = fock.random_density(D, rank=2, seed=11)
    rec = reconstruct(husimi_map.apply(rho), husimi_map)
    assert trace_distance(rho, rec.rho) <= 0.01
    assert rec.residual <= 1e-8


def test_output_is_a_state(husimi_map):
    rng = np.random.default_rng(5)
    g = husimi_map.apply(fock.random_density(D, seed=3)) + 1e-3 * rng.standard_normal(PLANE.shape[0] * PLANE.shape[1])
    rec = reconstruct(g, husimi_map)
    assert np.abs(rec.rho - rec.rho.conj().T).max() == 0
    assert np.linalg.eigvalsh(rec.rho).min() >= -1e-12
    assert abs(np.trace(rec.rho).real - 1) < 1e-12


def test_tilted_and_husimi_data_agree(husimi_map):
    # the tilted density sampled at the tilted image of the grid is the
    # rescaled Husimi data, so both reconstructions must coincide
    theta = PI / 4
    Q, P = PLANE.mesh()
    tq, tp = tilt_map(theta, Q.ravel(), P.ravel())
    G = GeneratingOperator(fock.vacuum(D), theta)
    F = build_forward_map(G, np.column_stack([tq, tp]), D)
    rho = fock.random_density(D, rank=2, seed=21)
    a = reconstruct(F.apply(rho), F).rho
    b = reconstruct(husimi_map.apply(rho), husimi_map).rho
    assert trace_distance(a, b) <= 0.02


def test_orthogonal_perturbation_ignored(husimi_map):
    rho = fock.random_density(D, rank=2, seed=8)
    g = husimi_map.apply(rho)
    A = husimi_map.matrix
    u, _, _ = np.linalg.svd(A, full_matrices=False)
    noise = np.random.default_rng(1).standard_normal(g.size)
    noise -= u @ (u.T @ noise)
    a = reconstruct(g, husimi_map).rho
    b = reconstruct(g + 1e-3 * noise, husimi_map).rho
    assert np.abs(a - b).max() < 1e-10


def test_noise_robust(husimi_map):
    rho = fock.random_density(D, rank=1, seed=9)
    g = husimi_map.apply(rho)
    noisy = g + 1e-4 * g.max() * np.random.default_rng(2).standard_normal(g.size)
    assert trace_distance(rho, reconstruct(noisy, husimi_map).rho) < 0.05


def test_underdetermined_warns():
    with pytest.warns(UserWarning):
        build_forward_map(GeneratingOperator(fock.vacuum(D), PI / 2), Grid2D.square(-2, 2, 5), D)


def test_sample_count_checked(husimi_map):
    with pytest.raises(ValueError):
        reconstruct(np.zeros(10), husimi_map)


def test_fidelity_and_distance_basics():
    rho = fock.random_density(4, seed=0)
    assert abs(fidelity(rho, rho) - 1) < 1e-8
    assert trace_distance(rho, rho) < 1e-14
    assert abs(trace_distance(fock.vacuum(4), fock.number_state(1, 4)) - 1) < 1e-14
