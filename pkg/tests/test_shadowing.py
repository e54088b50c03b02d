import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dshadow.dichotomy import detect
from dshadow.errors import ArgumentError, HorizonError, StateError
from dshadow.finite_delay import FiniteDelaySystem, ForcingSequence, Orbit, defect, simulate
from dshadow.oracles import bvp_corrections
from dshadow.phase_space import Segment
from dshadow.rng import generator
from dshadow.shadowing import make_pseudo_orbit, perron_solve, resonance_probe, shadow, shadowing_modulus


def dichotomy_of(sys):
    report, dich = detect(sys)
    assert dich is not None
    return dich


def test_perron_zero_forcing():
    sys = FiniteDelaySystem.scalar(1, 1)
    sol = perron_solve(sys, dichotomy_of(sys), ForcingSequence.zeros(1, 20))
    assert np.all(sol.orbit.values == 0)


def test_perron_unstable_scalar():
    sys = FiniteDelaySystem.scalar(2)
    sol = perron_solve(sys, dichotomy_of(sys), ForcingSequence.constant([1.0], 80), window=30)
    np.testing.assert_allclose(sol.orbit.values[:, 0], -1.0, atol=1e-15)
    assert sol.step_residual <= 1e-15


def test_perron_stable_scalar():
    sys = FiniteDelaySystem.scalar(0.5)
    sol = perron_solve(sys, dichotomy_of(sys), ForcingSequence.constant([1.0], 40))
    n = np.arange(41)
    np.testing.assert_allclose(sol.orbit.values[:, 0], 2 * (1 - 2.0**-n), atol=1e-14)
    assert sol.sup_norm == pytest.approx(2, abs=1e-11)


def test_perron_not_hyperbolic():
    with pytest.raises(StateError):
        perron_solve(FiniteDelaySystem.scalar(1), None, ForcingSequence.zeros(1, 3))


def test_perron_names_required_horizon():
    sys = FiniteDelaySystem.scalar(2)
    z = ForcingSequence.constant([1.0], 200)
    with pytest.raises(HorizonError) as info:
        perron_solve(sys, dichotomy_of(sys), z, horizon=25, window=20, tail_tol=1e-9)
    need = info.value.required_horizon
    assert str(need) in str(info.value)
    assert need > 25
    perron_solve(sys, dichotomy_of(sys), z, horizon=need, window=20, tail_tol=1e-9)


def test_perron_uniqueness_across_horizons():
    rng = np.random.default_rng(10)
    sys = FiniteDelaySystem.autonomous([[[1.5, 0.2], [0.1, 0.3]], [[0.2, 0.0], [0.1, 0.1]]])
    dich = dichotomy_of(sys)
    z = ForcingSequence(rng.normal(size=(400, 2)))
    N, H = 40, 120
    a = perron_solve(sys, dich, z, horizon=H, window=N)
    b = perron_solve(sys, dich, z, horizon=H + 50, window=N)
    gap = np.max(np.linalg.norm(a.orbit.values - b.orbit.values, axis=1))
    bound = dich.D * math.exp(-dich.lam * (H - N)) * z.sup_norm / (1 - math.exp(-dich.lam))
    assert gap <= bound
    assert a.truncation_tail_bound == pytest.approx(bound)


def test_shadow_true_orbit_is_fixed():
    sys = FiniteDelaySystem.scalar(1, 1)
    dich = dichotomy_of(sys)
    GOLD = (1 - math.sqrt(5)) / 2
    y = defect(sys, simulate(sys, Segment([[1.0], [GOLD]]), 30))
    res = shadow(sys, dich, y)
    assert res.sup_error <= 1e-12
    np.testing.assert_allclose(res.true_orbit.values, y.values, atol=1e-12)


def test_shadow_constant_defect_scalar():
    sys = FiniteDelaySystem.scalar(2)
    dich = dichotomy_of(sys)
    y = np.zeros(41)
    for n in range(40):
        y[n + 1] = 2 * y[n] + 0.01
    res = shadow(sys, dich, defect(sys, y[:, None]))
    np.testing.assert_allclose(res.true_orbit.values[:, 0], y + 0.01, rtol=1e-12, atol=1e-15)
    assert res.sup_error == pytest.approx(0.01)
    assert res.within_bound


def test_shadow_diagonal_against_bvp_oracle():
    sys = FiniteDelaySystem.autonomous([np.diag([2.0, 0.5])])
    dich = dichotomy_of(sys)
    y = make_pseudo_orbit(sys, dich, 1e-3, 200, generator(11))
    assert y.defect_bound == pytest.approx(1e-3, rel=1e-12)
    res = shadow(sys, dich, y)
    assert res.sup_error <= dich.K_D * 1e-3
    assert res.step_residual <= 1e-10
    w = bvp_corrections(sys, [y.residuals])[0]
    assert np.max(np.abs(w - res.correction.orbit.values)) <= 1e-8


def test_modulus_zero_and_scalar_bound():
    sys = FiniteDelaySystem.scalar(2)
    dich = dichotomy_of(sys)
    zero = shadowing_modulus(sys, dich, 5, 0.0, horizon=50)
    assert zero["eps_max"] == 0 and zero["ratio"] == 0
    stats = shadowing_modulus(sys, dich, 100, 0.01, horizon=100, seed=3)
    assert stats["eps_max"] <= dich.K_D * 0.01
    assert stats["all_within_bound"]


def test_modulus_ratio_stable_across_delta():
    sys = FiniteDelaySystem.autonomous([np.diag([2.0, 0.5])])
    dich = dichotomy_of(sys)
    ratios = [shadowing_modulus(sys, dich, 20, dl, horizon=100, seed=5)["ratio"] for dl in (1e-2, 1e-3, 1e-4)]
    assert max(ratios) / min(ratios) - 1 <= 0.05


def test_modulus_independent_of_threads(monkeypatch):
    sys = FiniteDelaySystem.autonomous([np.diag([2.0, 0.5])])
    dich = dichotomy_of(sys)
    monkeypatch.setenv("DSHADOW_THREADS", "1")
    one = shadowing_modulus(sys, dich, 12, 1e-3, horizon=60, seed=9)
    monkeypatch.setenv("DSHADOW_THREADS", "4")
    four = shadowing_modulus(sys, dich, 12, 1e-3, horizon=60, seed=9)
    assert one == four


def test_resonance_examples():
    rep = resonance_probe(FiniteDelaySystem.scalar(1), 200)
    np.testing.assert_allclose(np.abs(rep.u), np.arange(201), atol=1e-12)
    assert rep.slope == pytest.approx(1, abs=1e-12) and rep.fit_residual <= 1e-10
    rep = resonance_probe(FiniteDelaySystem.scalar(-1), 200)
    assert rep.lam0 == pytest.approx(-1)
    assert rep.slope == pytest.approx(1, abs=1e-12)
    with pytest.raises(ArgumentError):
        resonance_probe(FiniteDelaySystem.scalar(2), 10)


def test_resonance_with_delay():
    # x(n+1) = x(n-1) has eigenvalues +1 and -1
    rep = resonance_probe(FiniteDelaySystem.scalar(0, 1), 500)
    assert rep.slope >= 0.9 * rep.c_pred > 0


def _hyperbolic_system(rng, d, r):
    for _ in range(200):
        A = rng.normal(size=(r + 1, d, d)) * 0.6
        sys = FiniteDelaySystem.autonomous(A)
        report, dich = detect(sys, horizon=40)
        if dich is not None and report.min_distance_to_unit_circle > 0.1 and dich.complementarity_cond < 1e3:
            return sys, dich
    pytest.skip("no well-conditioned hyperbolic instance drawn")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 2), st.integers(0, 2), st.integers(5, 60))
def test_shadow_properties(seed, d, r, steps):
    rng = np.random.default_rng(seed)
    sys, dich = _hyperbolic_system(rng, d, r)
    delta = 10.0 ** rng.uniform(-6, -1)
    y = make_pseudo_orbit(sys, dich, delta, steps, rng)
    res = shadow(sys, dich, y)
    assert res.step_residual <= 1e-10
    assert res.sup_error <= res.theoretical_bound * (1 + 1e-6)
    w = bvp_corrections(sys, [y.residuals])[0]
    assert np.max(np.abs(w - res.correction.orbit.values)) <= 1e-8
    x = Orbit(res.true_orbit.values, -r)
    assert defect(sys, x).defect_bound <= 1e-10
