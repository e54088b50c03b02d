"""Property suites driven by a single seed.

Each suite runs a family of checks and reports, per invariant, the worst
observed value against its limit. Randomness comes from
:func:`dshadow.rng.generator` keyed by ``(seed, suite id, item)``, so a suite's
output depends only on the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dshadow.dichotomy import detect, verify_dichotomy
from dshadow.errors import ArgumentError
from dshadow.finite_delay import FiniteDelaySystem, ForcingSequence, transition_matrix
from dshadow.oracles import bvp_corrections, companion_roots
from dshadow.phase_space import AdjointSegment, HistorySegment, adjoint_norm, lift_operator_norm, weighted_norm
from dshadow.rng import generator
from dshadow.shadowing import make_pseudo_orbit, resonance_probe, shadow
from dshadow.volterra import (
    VolterraKernel,
    adjoint_step,
    bilinear,
    bilinear_bound,
    coordinate_consistency,
    find_roots,
    project_cu,
    resonate,
    spectral_decomposition,
    voc_simulate,
    volterra_step,
    winding_number,
)

__all__ = ["Check", "SuiteResult", "SUITES", "run_suite", "verify_all", "scripted_hyperbolic_systems"]


@dataclass
class Check:
    """Worst observed ``value`` for one invariant; passes when ``value <= limit``."""

    value: float
    limit: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.limit)

    def to_json(self) -> dict:
        return {"value": float(self.value), "limit": float(self.limit), "passed": self.passed}


@dataclass
class SuiteResult:
    name: str
    checks: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def check(self, key: str, value: float, limit: float):
        old = self.checks.get(key)
        value = float(value)
        if old is None or not (value <= old.value):
            self.checks[key] = Check(value, limit)

    def flag(self, key: str, ok: bool):
        """Record a yes/no invariant as 0 (holds) or 1 (violated)."""
        self.check(key, 0.0 if ok else 1.0, 0.0)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def max_residuals(self) -> dict:
        return {k: c.value for k, c in self.checks.items()}

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "checks": {k: c.to_json() for k, c in sorted(self.checks.items())},
            "info": self.info,
        }


# suite ids used as generator keys
_IDS = {"semigroup": 1, "dichotomy": 2, "shadowing": 3, "resonance": 4, "spectral": 5, "duality": 6, "voc": 7, "coords": 8}


def _random_tabulated(rng, horizon):
    d = int(rng.integers(1, 5))
    r = int(rng.integers(0, 4))
    scale = rng.uniform(0.2, 1.5) / np.sqrt(d)
    A = scale * (rng.standard_normal((horizon, r + 1, d, d)) + 1j * rng.standard_normal((horizon, r + 1, d, d)))
    return FiniteDelaySystem.tabulated(A)


def semigroup_suite(seed: int, count: int = 200, horizon: int = 40) -> SuiteResult:
    """Composition ``T(n,k) T(k,m) = T(n,m)`` and growth ``|T(n,m)| <= e^{omega (n-m)}``."""
    res = SuiteResult("semigroup", info={"systems": count, "horizon": horizon})
    for i in range(count):
        rng = generator(seed, _IDS["semigroup"], i)
        sys = _random_tabulated(rng, horizon)
        d = sys.dim_d
        eye = transition_matrix(sys, 7, 7)
        res.check("identity", np.max(np.abs(eye - np.eye(sys.lift_dim))), 0.0)
        for _ in range(5):
            m, k, n = np.sort(rng.integers(0, horizon + 1, size=3))
            Tnk, Tkm, Tnm = transition_matrix(sys, n, k), transition_matrix(sys, k, m), transition_matrix(sys, n, m)
            scale = np.linalg.norm(Tnk) * np.linalg.norm(Tkm)
            res.check("composition_rel", np.linalg.norm(Tnk @ Tkm - Tnm) / max(scale, 1e-300), 1e-10)
            bound = np.exp(sys.omega * (n - m))
            res.check("growth_excess_rel", lift_operator_norm(Tnm, d) / bound - 1.0, 1e-10)
    return res


def dichotomy_suite(seed: int, horizon: int = 60) -> SuiteResult:
    """Detection on scripted systems and verification of the detected dichotomies."""
    res = SuiteResult("dichotomy", info={"horizon": horizon})
    golden = np.log((1 + np.sqrt(5)) / 2)
    fib = FiniteDelaySystem.scalar(1.0, 1.0)
    rep, dich = detect(fib, horizon=horizon)
    res.flag("fibonacci_hyperbolic", rep.hyperbolic and dich is not None)
    res.flag("fibonacci_counts", rep.stable_count == 1 and rep.unstable_count == 1)
    if dich is not None:
        res.flag("fibonacci_lambda_range", 0.9 * golden <= dich.lam <= golden * (1 + 1e-12))
        res.info["fibonacci_lambda_ratio"] = dich.lam / golden
        res.info["fibonacci_D"] = dich.D
    for name, sys in [("scalar_1", FiniteDelaySystem.scalar(1.0)), ("period2_2_half", FiniteDelaySystem.periodic([[[[2.0]]], [[[0.5]]]]))]:
        rep, dich_n = detect(sys, horizon=horizon)
        res.flag(f"{name}_rejected", (not rep.hyperbolic) and dich_n is None)
    for name, sys in scripted_hyperbolic_systems().items():
        _, dch = detect(sys, horizon=horizon)
        if dch is None:
            res.flag(f"{name}_detected", False)
            continue
        v = verify_dichotomy(sys, dch, horizon=horizon)
        res.check("commutation", v.commutation_residual, 1e-9)
        res.check("stable_estimate", v.stable_residual, 1e-9)
        res.check("unstable_estimate", v.unstable_residual, 1e-9)
        res.check("idempotence", v.idempotence_residual, 1e-10)
    return res


def scripted_hyperbolic_systems() -> dict:
    return {
        "scalar_2": FiniteDelaySystem.scalar(2.0),
        "scalar_half": FiniteDelaySystem.scalar(0.5),
        "diag_2_half": FiniteDelaySystem.autonomous([np.diag([2.0, 0.5])]),
        "fibonacci": FiniteDelaySystem.scalar(1.0, 1.0),
    }


def shadowing_suite(seed: int, trials: int = 100, steps: int = 200, deltas=(1e-2, 1e-3, 1e-4)) -> SuiteResult:
    """Shadowing bound, step residual, oracle agreement and linearity in ``delta``."""
    res = SuiteResult("shadowing", info={"trials": trials, "steps": steps, "deltas": list(deltas)})
    for si, (name, sys) in enumerate(scripted_hyperbolic_systems().items()):
        _, dich = detect(sys)
        ratios = []
        for delta in deltas:
            # the same random shapes at every delta, so the ratio measures linearity
            ys = [make_pseudo_orbit(sys, dich, delta, steps, generator(seed, _IDS["shadowing"], si, t)) for t in range(trials)]
            out = [shadow(sys, dich, y) for y in ys]
            ref = bvp_corrections(sys, [y.residuals for y in ys])
            for o, w in zip(out, ref):
                res.check("step_residual", o.step_residual, 1e-10)
                res.check("bound_excess", o.sup_error - o.theoretical_bound, 0.0)
                res.check("oracle_agreement", np.max(np.abs(o.correction.orbit.values - w)), 1e-8)
            ratios.append(max(o.sup_error for o in out) / delta)
        spread = (max(ratios) - min(ratios)) / np.mean(ratios)
        res.check("ratio_variation", spread, 0.05)
        res.info[name] = {"eps_over_delta": ratios, "K_D": dich.K_D}
    return res


def resonance_suite(seed: int, steps: int = 10_000) -> SuiteResult:
    """Linear growth ``u(n) = lam0^n c n`` for kernels with a root on the unit circle."""
    res = SuiteResult("resonance", info={"steps": steps})
    for name, a in [("A0_plus1", 1.0), ("A0_minus1", -1.0)]:
        _, dec, rep = resonate(VolterraKernel.scalar(a), steps)
        res.check("slope_rel_error", abs(rep.slope - rep.c) / rep.c, 0.01)
        res.check("growth_rel_residual", rep.max_rel_error, 1e-6)
        res.check("c_minus_1", abs(rep.c - 1.0), 1e-12)
        res.info[name] = {"c": rep.c, "slope": rep.slope, "lam0": [rep.lam0.real, rep.lam0.imag]}
    for name, a in [("A0_2", 2.0), ("A0_half", 0.5)]:
        try:
            resonate(VolterraKernel.scalar(a), 10)
            res.flag(f"{name}_rejected", False)
        except ArgumentError:
            res.flag(f"{name}_rejected", True)
    # the finite-delay counterpart uses an eigenvector of the companion lift
    probe = resonance_probe(FiniteDelaySystem.scalar(0.0, 1.0), steps)
    res.check("finite_delay_slope_rel_error", abs(probe.slope - probe.c_pred) / probe.c_pred, 0.01)
    return res


def spectral_suite(seed: int, kernels: int = 20) -> SuiteResult:
    """Roots of a closed-form kernel and of random kernels against the companion oracle."""
    res = SuiteResult("spectral", info={"random_kernels": kernels})
    k = VolterraKernel.geometric(0.5, 0.25, np.log(2))
    spec = find_roots(k)
    res.flag("geometric_single_root", len(spec.roots) == 1 and spec.roots[0][1] == 1)
    if spec.roots:
        res.check("geometric_root_error", abs(spec.roots[0][0] - 0.75), 1e-10)
    res.check("root_residual", spec.max_residual, 1e-10)
    r_in, R = spec.annulus
    cell = (np.log(r_in), np.log(R), 0.1234567 - np.pi, 0.1234567 + np.pi)
    counts = [winding_number(k, cell, n)[0] for n in (64, 128, 256, 512)]
    res.flag("grid_stable_counts", len(set(counts)) == 1 and counts[0] == spec.total_count)
    res.info["geometric_roots"] = [[lam.real, lam.imag, m] for lam, m in spec.roots]
    for i in range(kernels):
        rng = generator(seed, _IDS["spectral"], i)
        d, J = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        kr = VolterraKernel.finite(0.5 * rng.standard_normal((J + 1, d, d)), 1.0)
        sp = find_roots(kr)
        ref = companion_roots(kr, sp.annulus[0])
        found = np.array([lam for lam, m in sp.roots for _ in range(m)])
        res.flag("oracle_root_count", len(found) == len(ref))
        if len(found) == len(ref) and len(ref):
            err = max(np.min(np.abs(found - x)) for x in ref)
            res.check("oracle_root_error", err, 1e-8)
        res.check("root_residual", sp.max_residual, 1e-10)
    return res


def _random_finite_kernel(rng, Jmax=5, dmax=3, gamma=1.0):
    d, J = int(rng.integers(1, dmax + 1)), int(rng.integers(0, Jmax + 1))
    A = rng.standard_normal((J + 1, d, d)) + 1j * rng.standard_normal((J + 1, d, d))
    return VolterraKernel.finite(0.3 * A, gamma)


def duality_suite(seed: int, pairs: int = 500) -> SuiteResult:
    """``<psi, T phi> = <T# psi, phi>`` and the bilinear bound on random data."""
    res = SuiteResult("duality", info={"pairs": pairs})
    for i in range(pairs):
        rng = generator(seed, _IDS["duality"], i)
        k = _random_finite_kernel(rng)
        d, J = k.dim_d, k.reach()
        Hf, Hp = J + 30 + int(rng.integers(0, 10)), J + 30 + int(rng.integers(0, 10))
        phi = HistorySegment(k.gamma, rng.standard_normal((Hf + 1, d)) + 1j * rng.standard_normal((Hf + 1, d)))
        psi = AdjointSegment(k.gamma_tilde, rng.standard_normal((Hp + 1, d)) + 1j * rng.standard_normal((Hp + 1, d)))
        lhs = bilinear(k, psi, volterra_step(k, phi))
        rhs = bilinear(k, adjoint_step(k, psi), phi)
        nprod = adjoint_norm(psi) * weighted_norm(phi)
        res.check("duality", abs(lhs - rhs) / (1 + nprod), 1e-9)
        res.check("bound_ratio", abs(bilinear(k, psi, phi)) / (bilinear_bound(k) * nprod), 1.0 + 1e-12)
    return res


def _voc_cases(seed):
    cases = []
    cases.append(("zero_forcing", VolterraKernel.scalar(0.7, -0.2), None, "zero"))
    cases.append(("impulse", VolterraKernel.scalar(0.0), None, "impulse"))
    cases.append(("geometric_sum", VolterraKernel.scalar(2.0), None, "ones"))
    cases.append(("geometric_kernel", VolterraKernel.geometric([[0.4, 0.1], [0.0, 0.3]], 0.2, 1.0), None, "random"))
    for i in range(6):
        rng = generator(seed, _IDS["voc"], i)
        cases.append((f"random_{i}", _random_finite_kernel(rng, gamma=0.8), rng, "random"))
    return cases


def voc_suite(seed: int, steps: int = 50) -> SuiteResult:
    """Variation-of-constants sum against the forced recursion."""
    res = SuiteResult("voc", info={"steps": steps})
    for name, k, rng, forcing in _voc_cases(seed):
        rng = rng or generator(seed, _IDS["voc"], 100 + len(name))
        d = k.dim_d
        if forcing == "impulse":
            phi0 = HistorySegment(k.gamma, np.zeros((1, d)))
            p = ForcingSequence(np.vstack([np.ones((1, d)), np.zeros((steps - 1, d))]))
        else:
            phi0 = HistorySegment(k.gamma, rng.standard_normal((8, d)))
            if forcing == "ones":
                phi0 = HistorySegment(k.gamma, np.zeros((1, d)))
            vals = {"zero": np.zeros((steps, d)), "ones": np.ones((steps, d))}.get(forcing)
            p = ForcingSequence(vals if vals is not None else rng.standard_normal((steps, d)))
        run = voc_simulate(k, phi0, p, steps)
        res.check("cross_residual", run.cross_residual, 1e-9)
        x = run.heads()[:, 0]
        n = np.arange(steps + 1)
        if forcing == "impulse":
            ref = (n == 1).astype(float)
            res.check("impulse_response", np.max(np.abs(x - ref)), 0.0)
        if forcing == "ones":
            ref = 2.0**n - 1
            res.check("closed_form_rel", np.max(np.abs(x - ref) / np.maximum(ref, 1)), 1e-14)
    return res


def _coord_kernels(seed):
    ks = {
        "A0_2": VolterraKernel.scalar(2.0),
        "A0_1": VolterraKernel.scalar(1.0),
        "fibonacci": VolterraKernel.scalar(1.0, 1.0),
        "geometric": VolterraKernel.geometric(1.5, 0.25, np.log(2)),
    }
    i = 0
    while len(ks) < 8:
        rng = generator(seed, _IDS["coords"], i)
        k = _random_finite_kernel(rng, Jmax=3, dmax=2, gamma=1.0)
        i += 1
        spec = find_roots(k)
        if spec.cu_roots and all(m == 1 for _, m in spec.cu_roots):
            ks[f"random_{i - 1}"] = k
    return ks


def coords_suite(seed: int, steps: int = 50) -> SuiteResult:
    """Reduced coordinate equation against projections of full orbits, plus projection laws."""
    res = SuiteResult("coords", info={"steps": steps})
    for j, (name, k) in enumerate(_coord_kernels(seed).items()):
        rng = generator(seed, _IDS["coords"], 1000 + j)
        spec = find_roots(k)
        dec = spectral_decomposition(k, spec)
        res.check("normalization", dec.normalization_residual, 1e-8)
        d = k.dim_d
        phi0 = HistorySegment(k.gamma, rng.standard_normal((12, d)))
        p = ForcingSequence(rng.standard_normal((steps, d)))
        res.check("consistency", coordinate_consistency(dec, phi0, p, steps), 1e-7)
        c, proj = project_cu(dec, phi0)
        c2, _ = project_cu(dec, proj)
        scale = 1 + np.max(np.abs(c), initial=0)
        res.check("idempotence", np.max(np.abs(c - c2), initial=0) / scale, 1e-8)
        c3, _ = project_cu(dec, volterra_step(k, phi0))
        res.check("commutation", np.max(np.abs(c3 - dec.B @ c), initial=0) / scale, 1e-8)
        res.info[name] = {"s": dec.s}
    return res


SUITES = {
    "semigroup": semigroup_suite,
    "dichotomy": dichotomy_suite,
    "shadowing": shadowing_suite,
    "resonance": resonance_suite,
    "spectral": spectral_suite,
    "duality": duality_suite,
    "voc": voc_suite,
    "coords": coords_suite,
}


def run_suite(name: str, seed: int, **kwargs) -> SuiteResult:
    if name not in SUITES:
        raise ArgumentError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name](seed, **kwargs)


def verify_all(selector: str = "all", seed: int = 42) -> dict:
    """Run the selected suites; ``selector`` is ``"all"``, a suite name or a comma-separated list."""
    names = list(SUITES) if selector in ("all", None, "") else [s.strip() for s in selector.split(",")]
    results = [run_suite(n, seed) for n in names]
    return {
        "seed": int(seed),
        "passed": all(r.passed for r in results),
        "suites": {r.name: r.to_json() for r in results},
    }
