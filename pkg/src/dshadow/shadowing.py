"""Bounded solutions of forced equations and shadowing of pseudo-orbits.

For a system with a dichotomy the bounded solution of
``x(n+1) = L_n(x_n) + z(n)`` whose initial segment lies in the unstable
subspace is given on the lift by the Green's-function sum::

    x_n = sum_{j<n} T(n, j+1) P_{j+1} G z(j) - sum_{j>=n} T(n, j+1) Q_{j+1} G z(j)

with ``G z`` the segment equal to ``z`` at ``theta = 0`` and zero elsewhere.
Both sums are evaluated as recurrences in the dichotomy coordinates: the
stable part runs forward, the unstable part backward from the horizon.

A pseudo-orbit ``y`` is shadowed by ``x = y - w`` where ``w`` is the bounded
solution forced by the defect of ``y``; ``sup_n |x_n - y_n| <= K_D delta``
with ``K_D = D (1 + e^{-lam}) / (1 - e^{-lam})``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from dshadow._io import csv_text, split_complex, vector_columns
from dshadow.dichotomy import DichotomyData
from dshadow.errors import ArgumentError, HorizonError, StateError
from dshadow.finite_delay import (
    FiniteDelaySystem,
    ForcingSequence,
    Orbit,
    PseudoOrbit,
    defect,
    simulate_forced,
)
from dshadow.phase_space import Segment
from dshadow.rng import generator

__all__ = [
    "PerronSolution",
    "ShadowResult",
    "ResonanceReport",
    "perron_solve",
    "shadow",
    "shadowing_modulus",
    "make_pseudo_orbit",
    "resonance_probe",
    "thread_count",
]


@dataclass(frozen=True, eq=False)
class PerronSolution:
    """Bounded solution of a forced equation on the window ``n = -r..N``."""

    orbit: Orbit
    lifts: np.ndarray
    sup_norm: float
    control_ratio: float
    truncation_tail_bound: float
    step_residual: float
    horizon: int

    def segment_sup(self) -> float:
        """``sup_n |x_n|`` over the segments ``n = 0..N``."""
        d = self.orbit.values.shape[1]
        return float(np.max(np.linalg.norm(self.lifts.reshape(len(self.lifts), -1, d), axis=2)))


@dataclass(frozen=True, eq=False)
class ShadowResult:
    """True orbit ``x`` shadowing a pseudo-orbit ``y``."""

    pseudo_orbit: PseudoOrbit
    true_orbit: Orbit
    correction: PerronSolution
    sup_error: float
    pointwise_error: float
    theoretical_bound: float
    step_residual: float

    @property
    def delta(self) -> float:
        return self.pseudo_orbit.defect_bound

    @property
    def within_bound(self) -> bool:
        return self.sup_error <= self.theoretical_bound * (1 + 1e-6)

    def to_csv(self) -> str:
        """Columns ``n``, ``y``, ``x`` and the segment distance ``|x_n - y_n|``."""
        y = self.pseudo_orbit.orbit
        x = self.true_orbit
        d = y.values.shape[1]
        w = self.correction
        dist = np.linalg.norm(w.lifts.reshape(len(w.lifts), -1, d), axis=2).max(axis=1)
        rows = []
        for n in range(y.start, y.end + 1):
            seg = float(dist[n]) if n >= 0 else float("nan")
            rows.append([n] + split_complex(y.at(n)) + split_complex(x.at(n)) + [seg])
        return csv_text(["n"] + vector_columns("y", d) + vector_columns("x", d) + ["|x_n-y_n|"], rows)


def _require(dicho):
    if dicho is None:
        raise StateError("no dichotomy available: the system is not hyperbolic")
    if not dicho.lam > 0:
        raise StateError("dichotomy rate must be positive")


def perron_solve(sys: FiniteDelaySystem, dicho: DichotomyData, z: ForcingSequence,
                 horizon: int | None = None, window: int | None = None,
                 tail_tol: float | None = None) -> PerronSolution:
    """Bounded solution of ``x(n+1) = L_n(x_n) + z(n)`` with ``x_0`` in the unstable subspace.

    Parameters
    ----------
    z
        Forcing; zero beyond its stored range.
    horizon
        Backward sums are cut at ``j < horizon``. Defaults to ``len(z)``, which
        makes them exact.
    window
        Solution is returned for ``n = -r..window``. Defaults to ``len(z)``.
    tail_tol
        If given, raise :class:`HorizonError` when the tail bound exceeds it.
    """
    _require(dicho)
    d, r = sys.dim_d, sys.delay_r
    L = len(z)
    N = L if window is None else int(window)
    H = max(L, N) if horizon is None else int(horizon)
    if H < N:
        raise ValueError(f"horizon {H} is shorter than the window {N}")
    J = min(H, L)
    q = np.exp(-dicho.lam)
    tail = 0.0
    if J < L:
        tail = dicho.D * np.exp(-dicho.lam * (H - N)) * z.sup_norm / (1 - q)
    if tail_tol is not None and tail > tail_tol:
        need = N + int(np.ceil(np.log(dicho.D * z.sup_norm / ((1 - q) * tail_tol)) / dicho.lam))
        raise HorizonError(f"tail bound {tail:.3g} exceeds {tail_tol:.3g}; horizon must be at least {need}", need)

    zv = z.values
    ks, ku = dicho.stable_count, dicho.unstable_count
    a = np.zeros((N + 1, ks), dtype=complex)
    for n in range(N):
        ph1 = dicho.phase(n + 1)
        a[n + 1] = dicho.stable_transport[dicho.phase(n)] @ a[n]
        if n < L:
            a[n + 1] += dicho.stable_coords[ph1][:, :d] @ zv[n]
    b = np.zeros((max(J, N) + 1, ku), dtype=complex)
    if ku:
        for n in range(J - 1, -1, -1):
            rhs = b[n + 1] - dicho.unstable_coords[dicho.phase(n + 1)][:, :d] @ zv[n]
            b[n] = np.linalg.solve(dicho.unstable_transport[dicho.phase(n)], rhs)
    lifts = np.empty((N + 1, sys.lift_dim), dtype=complex)
    for n in range(N + 1):
        ph = dicho.phase(n)
        lifts[n] = dicho.stable_bases[ph] @ a[n] + dicho.unstable_bases[ph] @ b[n]

    x = np.empty((N + r + 1, d), dtype=complex)
    x[: r + 1] = lifts[0].reshape(r + 1, d)[::-1]
    x[r + 1 :] = lifts[1:, :d]
    orbit = Orbit(x, -r)
    zwin = ForcingSequence(zv[:N]) if N <= L else ForcingSequence(np.vstack([zv, np.zeros((N - L, d))]))
    step_res = _forced_residual(sys, orbit, zwin)
    sup = float(np.max(np.linalg.norm(x, axis=1)))
    zs = z.sup_norm
    return PerronSolution(orbit, lifts, sup, sup / zs if zs > 0 else 0.0, float(tail), step_res, H)


def _forced_residual(sys, orbit, z):
    if len(z) == 0:
        return 0.0
    res = defect(sys, orbit).residuals - z.values
    return float(np.max(np.linalg.norm(res, axis=1)))


def shadow(sys: FiniteDelaySystem, dicho: DichotomyData, y: PseudoOrbit, horizon: int | None = None) -> ShadowResult:
    """True orbit near the pseudo-orbit ``y``.

    ``sup_error`` is the segment distance ``sup_n |x_n - y_n|`` over
    ``n = 0..N``; ``pointwise_error`` is ``sup_n |x(n) - y(n)|``.
    """
    _require(dicho)
    z = ForcingSequence(y.residuals) if len(y.residuals) else ForcingSequence.zeros(sys.dim_d, 0)
    N = len(y.residuals)
    w = perron_solve(sys, dicho, z, horizon=horizon, window=N)
    x = Orbit(y.orbit.values - w.orbit.values, y.orbit.start)
    d = sys.dim_d
    seg_err = float(np.max(np.linalg.norm(w.lifts.reshape(N + 1, -1, d), axis=2)))
    pt_err = float(np.max(np.linalg.norm(w.orbit.values, axis=1)))
    res = defect(sys, x).defect_bound
    return ShadowResult(y, x, w, seg_err, pt_err, dicho.K_D * y.defect_bound, res)


def make_pseudo_orbit(sys: FiniteDelaySystem, dicho: DichotomyData, delta: float, steps: int, rng) -> PseudoOrbit:
    """Bounded pseudo-orbit with defect exactly ``delta``.

    A bounded true orbit (started in the stable subspace and carried by the
    dichotomy transports) is perturbed by random unit vectors; the
    perturbation is then scaled so that the sup of the one-step residuals is
    ``delta``.
    """
    d, r = sys.dim_d, sys.delay_r
    base = np.zeros((steps + r + 1, d), dtype=complex)
    if dicho.stable_count:
        a = rng.standard_normal(dicho.stable_count) + 1j * rng.standard_normal(dicho.stable_count)
        v0 = dicho.stable_bases[0] @ a
        a = a / max(np.max(np.abs(v0)), 1e-300)
        base[: r + 1] = (dicho.stable_bases[0] @ a).reshape(r + 1, d)[::-1]
        for n in range(steps):
            a = dicho.stable_transport[dicho.phase(n)] @ a
            base[n + r + 1] = (dicho.stable_bases[dicho.phase(n + 1)] @ a)[:d]
    u = rng.standard_normal((steps + r + 1, d)) + 1j * rng.standard_normal((steps + r + 1, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    raw = defect(sys, Orbit(u, -r)).defect_bound
    eta = delta / raw if raw > 0 else 0.0
    return defect(sys, Orbit(base + eta * u, -r))


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("DSHADOW_THREADS", "1")))
    except ValueError:
        return 1


def shadowing_modulus(sys: FiniteDelaySystem, dicho: DichotomyData, trials: int, delta: float,
                      horizon: int = 200, seed: int = 0) -> dict:
    """Empirical ``eps(delta)``: shadow ``trials`` random pseudo-orbits with defect ``delta``.

    Trial ``i`` draws from a generator keyed by ``(seed, i)`` so results do not
    depend on the number of worker threads (``DSHADOW_THREADS``).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    _require(dicho)

    def one(i):
        y = make_pseudo_orbit(sys, dicho, delta, horizon, generator(seed, i))
        res = shadow(sys, dicho, y)
        return res.sup_error, res.step_residual, res.within_bound

    workers = min(thread_count(), trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, range(trials)))
    else:
        out = [one(i) for i in range(trials)]
    errs = np.array([o[0] for o in out])
    eps_max = float(errs.max())
    return {
        "delta": float(delta),
        "trials": int(trials),
        "eps_max": eps_max,
        "eps_mean": float(errs.mean()),
        "K_D": dicho.K_D,
        "ratio": eps_max / delta if delta > 0 else 0.0,
        "all_within_bound": bool(all(o[2] for o in out)),
        "max_step_residual": float(max(o[1] for o in out)),
    }


@dataclass(frozen=True, eq=False)
class ResonanceReport:
    """Growth of the resonant coordinate ``u(n)`` under unit-circle forcing."""

    lam0: complex
    c_pred: float
    slope: float
    intercept: float
    fit_residual: float
    u: np.ndarray

    def to_csv(self) -> str:
        rows = [[n, float(abs(v)), self.c_pred * n] for n, v in enumerate(self.u)]
        return csv_text(["n", "|u(n)|", "c*n"], rows)

    def to_json(self) -> dict:
        return {"lambda0": self.lam0, "c_pred": self.c_pred, "slope": self.slope,
                "intercept": self.intercept, "fit_residual": self.fit_residual, "steps": len(self.u) - 1}


def resonance_probe(sys: FiniteDelaySystem, steps: int, tol: float = 1e-8) -> ResonanceReport:
    """Force an autonomous system at a unit-circle eigenvalue and measure linear growth.

    With ``l`` a left eigenvector of the lift for ``lam0`` (``|lam0| = 1``) and
    forcing ``p(n) = lam0^{n+1} conj(l_0)``, the coordinate ``u(n) = l x_n`` of
    the solution from zero obeys ``u(n) = lam0^n c n`` with ``c = |l_0|^2``.
    A positive fitted slope of ``|u(n)|`` means no bounded solution exists.
    """
    import scipy.linalg as sla

    if sys.kind != "autonomous":
        raise ArgumentError("resonance_probe needs an autonomous system")
    C = sys.companion(0)
    ev, vl = sla.eig(C, left=True, right=False)
    dist = np.abs(np.abs(ev) - 1.0)
    i = int(np.argmin(dist))
    if dist[i] > tol:
        raise ArgumentError(f"no eigenvalue on the unit circle (closest at distance {dist[i]:.3g})")
    lam0 = complex(ev[i])
    ell = vl[:, i].conj()
    ell = ell / np.linalg.norm(ell)
    d = sys.dim_d
    w = ell[:d].conj()
    c_pred = float(np.vdot(w, w).real)
    n = np.arange(steps)
    p = ForcingSequence((lam0 ** (n + 1))[:, None] * w[None, :])
    orbit = simulate_forced(sys, Segment.zeros(sys.delay_r, d), p)
    u = orbit.segment_lifts(sys.delay_r) @ ell
    nn = np.arange(len(u))
    slope, intercept = np.polyfit(nn, np.abs(u), 1)
    resid = float(np.max(np.abs(np.abs(u) - (intercept + slope * nn))))
    return ResonanceReport(lam0, c_pred, float(slope), float(intercept), resid, u)
