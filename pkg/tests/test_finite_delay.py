import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dshadow.errors import DimensionError, DomainError, ValidationError
from dshadow.finite_delay import (
    FiniteDelaySystem,
    ForcingSequence,
    Orbit,
    apply_functional,
    defect,
    simulate,
    simulate_forced,
    step_segment,
    transition_matrix,
)
from dshadow.phase_space import Segment, lift_operator_norm, segment_norm

FIB = FiniteDelaySystem.scalar(1, 1)


def random_system(rng, d, r, kind="autonomous", count=1):
    phases = rng.normal(size=(count, r + 1, d, d)) + 1j * rng.normal(size=(count, r + 1, d, d))
    phases *= 0.6
    if kind == "autonomous":
        return FiniteDelaySystem.autonomous(phases[0])
    if kind == "periodic":
        return FiniteDelaySystem.periodic(phases)
    return FiniteDelaySystem.tabulated(phases)


def random_segment(rng, r, d):
    return Segment(rng.normal(size=(r + 1, d)) + 1j * rng.normal(size=(r + 1, d)))


def test_apply_functional_examples():
    assert apply_functional(FiniteDelaySystem.scalar(2), 0, Segment([[1.0]]))[0] == 2
    assert apply_functional(FIB, 0, Segment([[1.0], [1.0]]))[0] == 2


def test_apply_functional_matches_direct_sum():
    rng = np.random.default_rng(3)
    sys = random_system(rng, 2, 3)
    phi = random_segment(rng, 3, 2)
    ref = np.zeros(2, dtype=complex)
    for j in range(4):
        ref += sys.coeffs_at(0)[j] @ phi[-j]
    np.testing.assert_allclose(apply_functional(sys, 0, phi), ref, rtol=1e-14)
    assert np.linalg.norm(ref) <= sys.M * segment_norm(phi)


def test_apply_functional_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_functional(FIB, 0, Segment([[1.0]]))


def test_step_segment_fibonacci():
    out = step_segment(FIB, 0, Segment([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.values[:, 0], [1, 2])


def test_transition_matrix_examples():
    np.testing.assert_array_equal(transition_matrix(FIB, 4, 4), np.eye(2))
    assert transition_matrix(FiniteDelaySystem.scalar(2), 7, 2)[0, 0] == 32
    np.testing.assert_array_equal(transition_matrix(FIB, 1, 0), [[1, 1], [1, 0]])
    with pytest.raises(ValueError):
        transition_matrix(FIB, 1, 2)


def test_simulate_examples():
    assert np.all(simulate(FIB, Segment.zeros(1, 1), 20).values == 0)
    orb = simulate(FiniteDelaySystem.scalar(2), Segment([[1.0]]), 10)
    np.testing.assert_array_equal(orb.values[:, 0], 2.0 ** np.arange(11))
    fib = simulate(FIB, Segment([[0.0], [1.0]]), 10)
    assert fib.start == -1
    np.testing.assert_array_equal(fib.values[1:, 0], [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89])


def test_simulate_forced_examples():
    a2 = FiniteDelaySystem.scalar(2)
    z = ForcingSequence.constant([1.0], 30)
    np.testing.assert_array_equal(simulate_forced(a2, Segment([[-1.0]]), z).values[:, 0], -1)
    line = simulate_forced(FiniteDelaySystem.scalar(1), Segment([[0.0]]), z)
    np.testing.assert_array_equal(line.values[:, 0], np.arange(31))
    free = simulate(FIB, Segment([[2.0], [1.0]]), 12)
    np.testing.assert_array_equal(simulate_forced(FIB, Segment([[2.0], [1.0]]), ForcingSequence.zeros(1, 12)).values, free.values)


def test_defect_examples():
    orb = simulate(FIB, Segment([[0.0], [1.0]]), 30)
    assert defect(FIB, orb).defect_bound <= 1e-12
    y = np.zeros(21)
    for n in range(20):
        y[n + 1] = 2 * y[n] + 0.01
    assert defect(FiniteDelaySystem.scalar(2), y[:, None]).defect_bound == pytest.approx(0.01, rel=1e-9)
    with pytest.raises(ValueError):
        defect(FIB, np.zeros((2, 1)))


def test_defect_of_perturbed_orbit():
    rng = np.random.default_rng(4)
    sys = random_system(rng, 2, 2)
    orb = simulate(sys, random_segment(rng, 2, 2), 40)
    eta = 1e-3
    pert = rng.normal(size=orb.values.shape) + 1j * rng.normal(size=orb.values.shape)
    pert *= eta * rng.uniform(size=(len(pert), 1)) / np.linalg.norm(pert, axis=1, keepdims=True)
    pseudo = defect(sys, Orbit(orb.values + pert, orb.start))
    assert 0 < pseudo.defect_bound <= (1 + sys.M) * eta


def test_tabulated_rejects_access_beyond_horizon():
    rng = np.random.default_rng(5)
    sys = random_system(rng, 1, 1, kind="tabulated", count=5)
    assert sys.horizon == 5
    simulate(sys, random_segment(rng, 1, 1), 5)
    with pytest.raises(DomainError):
        simulate(sys, random_segment(rng, 1, 1), 6)


def test_periodic_coefficients_repeat():
    sys = FiniteDelaySystem.periodic([[[[3.0]]], [[[1 / 6]]]])
    assert sys.period == 2
    assert sys.coeff(5, 0)[0, 0] == pytest.approx(1 / 6)
    assert transition_matrix(sys, 2, 0)[0, 0] == pytest.approx(0.5)


def test_bound_k_validation():
    assert FiniteDelaySystem.scalar(0.5).bound_K == 1.0
    assert FiniteDelaySystem.scalar(3).bound_K == 3.0
    with pytest.raises(ValueError):
        FiniteDelaySystem.scalar(3, K=2)
    with pytest.raises(ValueError):
        FiniteDelaySystem.scalar(0.5, K=0.5)
    s = FiniteDelaySystem.scalar(1, 1)
    assert s.M == 2 and s.omega == pytest.approx(np.log(4))


def test_json_round_trip_and_missing_fields():
    rng = np.random.default_rng(6)
    for kind in ("autonomous", "periodic", "tabulated"):
        sys = random_system(rng, 2, 1, kind=kind, count=1 if kind == "autonomous" else 3)
        back = FiniteDelaySystem.from_json(sys.to_json())
        assert back.kind == kind
        np.testing.assert_array_equal(back.coefficients, sys.coefficients)
    doc = FIB.to_json()
    del doc["d"]
    with pytest.raises(ValidationError) as info:
        FiniteDelaySystem.from_json(doc)
    assert ("d", "missing") in info.value.fields


def test_semigroup_and_growth_bound():
    rng = np.random.default_rng(7)
    for _ in range(40):
        d, r = rng.integers(1, 5), rng.integers(0, 4)
        sys = random_system(rng, d, r, kind="periodic", count=int(rng.integers(1, 4)))
        m, k, n = sorted(rng.integers(0, 41, size=3))
        Tnm = transition_matrix(sys, n, m)
        prod = transition_matrix(sys, n, k) @ transition_matrix(sys, k, m)
        assert np.max(np.abs(prod - Tnm)) <= 1e-10 * max(1.0, np.max(np.abs(Tnm)))
        assert lift_operator_norm(Tnm, d) <= np.exp(sys.omega * (n - m)) * (1 + 1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(0, 3), st.integers(1, 25))
def test_simulate_replays_step_segment(seed, d, r, steps):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, d, r, kind="periodic", count=2)
    phi = random_segment(rng, r, d)
    orb = simulate(sys, phi, steps)
    seg = phi
    for n in range(steps):
        seg = step_segment(sys, n, seg)
        np.testing.assert_allclose(orb.segment(n + 1, r).values, seg.values, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(0, 2), st.integers(1, 20))
def test_forced_simulation_is_linear(seed, d, r, steps):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, d, r)
    p1, p2 = random_segment(rng, r, d), random_segment(rng, r, d)
    z1 = ForcingSequence(rng.normal(size=(steps, d)))
    z2 = ForcingSequence(rng.normal(size=(steps, d)))
    lhs = simulate_forced(sys, p1 + p2, ForcingSequence(z1.values + z2.values)).values
    zero = simulate_forced(sys, Segment.zeros(r, d), ForcingSequence.zeros(d, steps)).values
    rhs = simulate_forced(sys, p1, z1).values + simulate_forced(sys, p2, z2).values - zero
    scale = max(1.0, np.max(np.abs(lhs)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale
