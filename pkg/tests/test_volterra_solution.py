import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dshadow.errors import DepthError
from dshadow.finite_delay import ForcingSequence
from dshadow.phase_space import AdjointSegment, HistorySegment, adjoint_norm, gamma_embed, weighted_norm
from dshadow.volterra import (
    VolterraKernel,
    adjoint_step,
    bilinear,
    bilinear_bound,
    char_matrix,
    voc_simulate,
    volterra_step,
)


def direct_pairing(k, psi, phi):
    """Double sum straight from the definition of the bilinear form."""
    J = k.terms.shape[0] - 1
    total = psi[0] @ phi[0]
    for j in range(1, J + 1):
        for zeta in range(j):
            total += psi[zeta + 1] @ k.terms[j] @ phi[zeta - j]
    return complex(total)


def random_pair(rng, k, depth):
    d = k.dim_d
    psi = AdjointSegment(k.gamma_tilde, rng.normal(size=(depth + 1, d)) + 1j * rng.normal(size=(depth + 1, d)))
    phi = HistorySegment(k.gamma, rng.normal(size=(depth + 1, d)) + 1j * rng.normal(size=(depth + 1, d)))
    return psi, phi


def test_step_zero_history():
    k = VolterraKernel.scalar(0.3, 0.2)
    out = volterra_step(k, HistorySegment(1.0, np.zeros((4, 1))))
    assert np.all(out.values == 0)
    assert np.all(adjoint_step(k, AdjointSegment(0.5, np.zeros((4, 1)))).values == 0)


def test_step_unrolled_once():
    k = VolterraKernel.scalar(2.0)
    out = volterra_step(k, gamma_embed(1.0, depth=2, gamma=1.0))
    assert out[0][0] == 2 and out[-1][0] == 1 and out[-2][0] == 0


def test_adjoint_step_unrolled_once():
    k = VolterraKernel.scalar(0.7)
    out = adjoint_step(k, AdjointSegment(0.5, [[1.0], [0.0]]))
    assert out[0][0] == pytest.approx(0.7) and out[1][0] == 1 and out[2][0] == 0


@pytest.mark.parametrize(
    "kernel, lam0",
    [
        (VolterraKernel.scalar(1.0, 1.0), (1 + math.sqrt(5)) / 2),
        (VolterraKernel.geometric(0.5, 0.25, gamma=1.0), 0.75),
    ],
)
def test_eigenfunction_iteration(kernel, lam0):
    H, n = 40, 6
    theta = np.arange(-H, 1)
    phi = HistorySegment(kernel.gamma, (lam0**theta)[:, None])
    x = phi
    for _ in range(n):
        x = volterra_step(kernel, x)
    theta = np.arange(-H - n, 1)
    expect = lam0**n * lam0**theta
    np.testing.assert_allclose(x.values[:, 0], expect, rtol=1e-8)


def test_adjoint_eigen_relation():
    k = VolterraKernel.scalar(1.0, 1.0)
    lam0 = (1 + math.sqrt(5)) / 2
    zeta = np.arange(30)
    psi = AdjointSegment(k.gamma_tilde, (lam0 ** (-zeta))[:, None])
    out = adjoint_step(k, psi)
    # T# psi = lam0 psi on the entries that are not affected by truncation
    np.testing.assert_allclose(out.values[:10, 0], lam0 * lam0 ** (-np.arange(10)), rtol=1e-12)


def test_fixed_depth_step():
    k = VolterraKernel.scalar(0.5, 0.25, 0.125)
    with pytest.raises(DepthError) as info:
        volterra_step(k, HistorySegment(1.0, np.ones((2, 1))), keep_depth=True)
    assert info.value.required_depth == 2
    h = HistorySegment(1.0, np.ones((5, 1)))
    out = volterra_step(k, h, keep_depth=True)
    assert out.depth == 4
    assert out.truncation_error == pytest.approx(math.exp(-5))


def test_bilinear_examples():
    rng = np.random.default_rng(14)
    k0 = VolterraKernel.scalar(0.8)
    psi, phi = random_pair(rng, k0, 5)
    assert bilinear(k0, psi, phi) == pytest.approx(psi[0][0] * phi[0][0])
    b = 1.7
    k1 = VolterraKernel.scalar(0.0, b)
    assert bilinear(k1, psi, phi) == pytest.approx(psi[0][0] * phi[0][0] + psi[1][0] * b * phi[-1][0])
    k3 = VolterraKernel.finite(rng.normal(size=(4, 2, 2)), gamma=1.0)
    psi, _ = random_pair(rng, k3, 6)
    x = rng.normal(size=2)
    assert bilinear(k3, psi, gamma_embed(x, 6, 1.0)) == pytest.approx(psi[0] @ x)


def test_bilinear_depth_checks():
    k = VolterraKernel.scalar(0.1, 0.2, 0.3)
    psi, phi = random_pair(np.random.default_rng(15), k, 1)
    with pytest.raises(DepthError):
        bilinear(k, psi, phi, strict=True)


def test_bilinear_matches_direct_sum():
    rng = np.random.default_rng(16)
    k = VolterraKernel.finite(rng.normal(size=(5, 2, 2)), gamma=1.0)
    psi, phi = random_pair(rng, k, 8)
    assert bilinear(k, psi, phi) == pytest.approx(direct_pairing(k, psi, phi), rel=1e-13)


def test_bilinear_bound_with_extremal_histories():
    for k in (VolterraKernel.scalar(0.5, -0.3, 0.2), VolterraKernel.geometric(0.5, 0.2, gamma=1.0)):
        H = 60
        psi = AdjointSegment(k.gamma_tilde, np.exp(k.gamma_tilde * np.arange(H + 1))[:, None])
        phi = HistorySegment(k.gamma, np.exp(-k.gamma * np.arange(-H, 1))[:, None])
        val = abs(bilinear(k, psi, phi))
        assert val <= bilinear_bound(k) * adjoint_norm(psi) * weighted_norm(phi) * (1 + 1e-12)


def finite_kernels(max_d=3, max_J=5):
    return st.tuples(st.integers(0, 2**31), st.integers(1, max_d), st.integers(0, max_J)).map(
        lambda t: VolterraKernel.finite(np.random.default_rng(t[0]).normal(size=(t[2] + 1, t[1], t[1])), gamma=1.0)
    )


@settings(max_examples=60, deadline=None)
@given(finite_kernels(), st.integers(0, 2**31))
def test_duality(k, seed):
    rng = np.random.default_rng(seed)
    J = k.terms.shape[0] - 1
    psi, phi = random_pair(rng, k, J + 30)
    lhs = bilinear(k, adjoint_step(k, psi), phi)
    rhs = bilinear(k, psi, volterra_step(k, phi))
    assert abs(lhs - rhs) <= 1e-9 * (1 + adjoint_norm(psi) * weighted_norm(phi))


@settings(max_examples=60, deadline=None)
@given(finite_kernels(), st.integers(0, 2**31), st.integers(0, 12))
def test_bilinear_bound(k, seed, depth):
    rng = np.random.default_rng(seed)
    psi, phi = random_pair(rng, k, depth)
    # weight the samples so every lag contributes comparably to the norms
    psi = AdjointSegment(psi.gamma_tilde, psi.values * np.exp(k.gamma_tilde * np.arange(depth + 1))[:, None])
    phi = HistorySegment(phi.gamma, phi.values * np.exp(-k.gamma * np.arange(-depth, 1))[:, None])
    assert abs(bilinear(k, psi, phi)) <= bilinear_bound(k) * adjoint_norm(psi) * weighted_norm(phi) * (1 + 1e-12)


def test_voc_examples():
    impulse = voc_simulate(VolterraKernel.scalar(0.0), gamma_embed(0.0), ForcingSequence([[1.0]]), 6)
    np.testing.assert_array_equal(impulse.heads()[:, 0], [0, 1, 0, 0, 0, 0, 0])
    geo = voc_simulate(VolterraKernel.scalar(2.0), gamma_embed(0.0), ForcingSequence.constant([1.0], 30), 30)
    np.testing.assert_array_equal(geo.heads()[:, 0], 2.0 ** np.arange(31) - 1)
    np.testing.assert_array_equal(geo.voc[-1].values, geo.recursion[-1].values)
    assert geo.cross_residual == 0


def test_voc_without_forcing_is_free_evolution():
    rng = np.random.default_rng(17)
    k = VolterraKernel.finite(rng.normal(size=(3, 2, 2)) * 0.5, gamma=1.0)
    phi = HistorySegment(1.0, rng.normal(size=(5, 2)))
    run = voc_simulate(k, phi, ForcingSequence.zeros(2, 10), 10)
    x = phi
    for _ in range(10):
        x = volterra_step(k, x)
    np.testing.assert_allclose(run.voc[-1].values, x.values, rtol=1e-12)
    assert run.cross_residual <= 1e-10


@settings(max_examples=25, deadline=None)
@given(finite_kernels(max_d=2, max_J=3), st.integers(0, 2**31), st.integers(1, 50))
def test_voc_equals_recursion(k, seed, steps):
    rng = np.random.default_rng(seed)
    d = k.dim_d
    phi = HistorySegment(k.gamma, rng.normal(size=(4, d)))
    p = ForcingSequence(rng.normal(size=(steps, d)))
    assert voc_simulate(k, phi, p, steps).cross_residual <= 1e-9


def test_char_matrix_annihilates_eigenvector():
    k = VolterraKernel.scalar(1.0, 1.0)
    lam0 = (1 + math.sqrt(5)) / 2
    assert abs(char_matrix(k, lam0)[0, 0]) <= 1e-15
