"""Exponential dichotomies on the lifted phase space.

A dichotomy is stored through per-phase bases rather than raw projection
matrices. For each phase ``n`` (``0 <= n < period``) we keep a basis ``S_n``
of the stable subspace, a basis ``U_n`` of the unstable subspace, the
coordinate maps ``C^s_n``, ``C^u_n`` with ``P_n = S_n C^s_n`` and
``Q_n = U_n C^u_n``, and the one-step transports::

    T(n+1, n) S_n = S_{n+1} G_n        T(n+1, n) U_n = U_{n+1} H_n

so that ``T(n, m) P_m = S_n G_{n-1} ... G_m C^s_m`` and the backward map on
the unstable part is ``U_n (H_{m-1} ... H_n)^{-1} C^u_m``. Working in these
coordinates keeps long products accurate: the full transition matrix is
never applied to stable vectors and never inverted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from dshadow.errors import NumericError, StateError, UnsupportedError
from dshadow.finite_delay import FiniteDelaySystem, transition_matrix
from dshadow.phase_space import lift_norm, lift_operator_norm

__all__ = [
    "SpectralGapReport",
    "DichotomyData",
    "VerificationReport",
    "detect",
    "detect_autonomous",
    "detect_periodic",
    "verify_dichotomy",
    "stable_subspace",
    "finite_time_diagnostics",
    "DEFAULT_TOL",
    "DEFAULT_HORIZON",
]

DEFAULT_TOL = 1e-8
DEFAULT_HORIZON = 60

# fractions of the spectral gap tried for lambda, largest first
_LAMBDA_FRACTIONS = (1.0, 1 - 2**-6, 1 - 2**-5, 1 - 2**-4, 1 - 2**-3, 0.75, 0.5, 0.25, 0.125, 0.0625)
_SATURATION_TOL = 1e-6
_GAP_CAP = 20.0


@dataclass(frozen=True)
class SpectralGapReport:
    """Multipliers of the (monodromy of the) lifted system and their position w.r.t. the unit circle."""

    eigenvalues: np.ndarray
    min_distance_to_unit_circle: float
    hyperbolic: bool
    stable_count: int
    unstable_count: int
    tol: float

    def to_json(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues,
            "min_distance_to_unit_circle": self.min_distance_to_unit_circle,
            "hyperbolic": self.hyperbolic,
            "stable_count": self.stable_count,
            "unstable_count": self.unstable_count,
            "tol": self.tol,
        }


@dataclass(frozen=True, eq=False)
class DichotomyData:
    """Candidate or detected dichotomy with constants ``D`` and ``lam``.

    The constants are fitted over ``verified_horizon`` steps; they are never
    a proof.
    """

    dim_d: int
    stable_bases: tuple
    unstable_bases: tuple
    stable_coords: tuple
    unstable_coords: tuple
    stable_transport: tuple
    unstable_transport: tuple
    D: float = 1.0
    lam: float = 1.0
    verified_horizon: int = 0
    invariance_residual: float = 0.0
    complementarity_cond: float = 1.0
    label: str = field(default="candidate")

    @property
    def period(self) -> int:
        return len(self.stable_bases)

    @property
    def lift_dim(self) -> int:
        return self.stable_bases[0].shape[0]

    @property
    def stable_count(self) -> int:
        return self.stable_bases[0].shape[1]

    @property
    def unstable_count(self) -> int:
        return self.unstable_bases[0].shape[1]

    def phase(self, n: int) -> int:
        return n % self.period

    def P(self, n: int) -> np.ndarray:
        k = self.phase(n)
        return self.stable_bases[k] @ self.stable_coords[k]

    def Q(self, n: int) -> np.ndarray:
        k = self.phase(n)
        return self.unstable_bases[k] @ self.unstable_coords[k]

    @property
    def projections(self) -> list:
        return [self.P(n) for n in range(self.period)]

    @property
    def K_D(self) -> float:
        """Green's-function constant ``D (1 + e^{-lam}) / (1 - e^{-lam})``."""
        q = np.exp(-self.lam)
        return self.D * (1 + q) / (1 - q)

    def stable_map(self, n: int, m: int) -> np.ndarray:
        """Coordinate matrix ``G_{n-1} ... G_m`` (stable coordinates at ``m`` to ``n``)."""
        k = self.stable_count
        G = np.eye(k, dtype=complex)
        for t in range(m, n):
            G = self.stable_transport[self.phase(t)] @ G
        return G

    def evolve_stable(self, n: int, m: int) -> np.ndarray:
        """``T(n, m) P_m`` for ``n >= m``."""
        return self.stable_bases[self.phase(n)] @ self.stable_map(n, m) @ self.stable_coords[self.phase(m)]

    def evolve_unstable_backward(self, n: int, m: int) -> np.ndarray:
        """``T(n, m) Q_m`` for ``n <= m`` (inverse of the unstable restriction)."""
        W = np.eye(self.unstable_count, dtype=complex)
        for t in range(n, m):
            W = np.linalg.solve(self.unstable_transport[self.phase(t)].T, W.T).T
        return self.unstable_bases[self.phase(n)] @ W @ self.unstable_coords[self.phase(m)]

    def spectral_gap(self) -> float:
        """Exponential rate separating stable and unstable transports (per step)."""
        p = self.period
        gs, gu = np.inf, np.inf
        if self.stable_count:
            ev = np.linalg.eigvals(self.stable_map(p, 0))
            rho = np.max(np.abs(ev))
            gs = -np.log(rho) / p if rho > 0 else np.inf
        if self.unstable_count:
            Hm = np.eye(self.unstable_count, dtype=complex)
            for t in range(p):
                Hm = self.unstable_transport[t] @ Hm
            mu = np.min(np.abs(np.linalg.eigvals(Hm)))
            gu = np.log(mu) / p
        return float(min(gs, gu))

    def with_constants(self, D: float, lam: float, horizon: int, label: str) -> "DichotomyData":
        fields_ = dict(self.__dict__)
        fields_.update(D=float(D), lam=float(lam), verified_horizon=int(horizon), label=label)
        return DichotomyData(**fields_)

    @classmethod
    def from_bases(cls, sys: FiniteDelaySystem, stable, unstable, D=1.0, lam=1.0) -> "DichotomyData":
        """Build from per-phase bases; transports are least-squares fits and their residual is recorded."""
        stable = [np.asarray(s, dtype=complex).reshape(sys.lift_dim, -1) for s in stable]
        unstable = [np.asarray(u, dtype=complex).reshape(sys.lift_dim, -1) for u in unstable]
        p = len(stable)
        if len(unstable) != p:
            raise ValueError("need one stable and one unstable basis per phase")
        cs, cu, conds = [], [], []
        for S, U in zip(stable, unstable):
            if S.shape[1] + U.shape[1] != sys.lift_dim:
                raise ValueError("stable and unstable dimensions must add up to the lift dimension")
            basis = np.hstack([S, U])
            conds.append(np.linalg.cond(basis))
            inv = np.linalg.inv(basis)
            cs.append(inv[: S.shape[1]])
            cu.append(inv[S.shape[1] :])
        G, H, resid = _transports(sys, stable, unstable)
        return cls(
            sys.dim_d, tuple(stable), tuple(unstable), tuple(cs), tuple(cu), tuple(G), tuple(H),
            float(D), float(lam), 0, resid, float(max(conds)),
        )

    @classmethod
    def from_projection(cls, sys: FiniteDelaySystem, projections, D=1.0, lam=1.0) -> "DichotomyData":
        """Candidate from projection matrices (one per phase; a single matrix for autonomous systems)."""
        if isinstance(projections, np.ndarray) and projections.ndim == 2:
            projections = [projections]
        stable, unstable = [], []
        for P in projections:
            P = np.asarray(P, dtype=complex)
            u, s, vh = np.linalg.svd(P)
            k = int(np.sum(s > 1e-8 * max(1.0, s[0] if s.size else 1.0)))
            stable.append(u[:, :k])
            unstable.append(vh[k:].conj().T)
        return cls.from_bases(sys, stable, unstable, D, lam)

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "D": self.D,
            "lambda": self.lam,
            "K_D": self.K_D,
            "label": self.label,
            "verified_horizon": self.verified_horizon,
            "stable_count": self.stable_count,
            "unstable_count": self.unstable_count,
            "projections": [self.P(n) for n in range(self.period)],
            "stable_bases": list(self.stable_bases),
            "unstable_bases": list(self.unstable_bases),
        }


def _transports(sys, stable, unstable):
    p = len(stable)
    G, H = [], []
    resid = 0.0
    for n in range(p):
        C = sys.companion(n)
        nxt = (n + 1) % p
        for basis, target, out in ((stable[n], stable[nxt], G), (unstable[n], unstable[nxt], H)):
            img = C @ basis
            if basis.shape[1] == 0:
                out.append(np.zeros((0, 0), dtype=complex))
                continue
            X = np.linalg.lstsq(target, img, rcond=None)[0]
            out.append(X)
            scale = max(np.linalg.norm(img), 1e-300)
            resid = max(resid, float(np.linalg.norm(img - target @ X) / scale))
    return G, H, resid


def _ordered_split(M: np.ndarray):
    """Stable/unstable invariant bases of ``M`` from an ordered Schur form.

    Returns ``(eigs, S, U, Cs, Cu)`` where ``S`` spans the invariant subspace
    of eigenvalues inside the unit disk, ``U`` the complementary invariant
    subspace, and ``Cs``, ``Cu`` the coordinate maps of the splitting.
    """
    try:
        R, Z, k = sla.schur(M, output="complex", sort=lambda x: abs(x) < 1.0)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(M)
        raise NumericError(f"Schur decomposition failed ({exc}); condition number {cond:.3g}") from exc
    N = M.shape[0]
    eigs = np.diag(R).copy()
    Zh = Z.conj().T
    if 0 < k < N:
        Y = sla.solve_sylvester(R[:k, :k], -R[k:, k:], -R[:k, k:])
    else:
        Y = np.zeros((k, N - k), dtype=complex)
    S = Z[:, :k]
    U = Z[:, :k] @ Y + Z[:, k:]
    Cs = Zh[:k] - Y @ Zh[k:]
    Cu = Zh[k:]
    return eigs, S, U, Cs, Cu


def _gap_report(eigs, tol) -> SpectralGapReport:
    mod = np.abs(eigs)
    dist = float(np.min(np.abs(mod - 1.0))) if eigs.size else np.inf
    hyperbolic = bool(dist > tol)
    return SpectralGapReport(eigs, dist, hyperbolic, int(np.sum(mod < 1)), int(np.sum(mod >= 1)), tol)


def detect_periodic(sys: FiniteDelaySystem, tol: float = DEFAULT_TOL, horizon: int = DEFAULT_HORIZON):
    """Detect a dichotomy of a periodic system through its monodromy matrices.

    Returns ``(report, dichotomy)``; ``dichotomy`` is ``None`` when a
    multiplier lies within ``tol`` of the unit circle.
    """
    p = sys.period
    if p is None:
        raise UnsupportedError("dichotomy detection needs autonomous or periodic coefficients; "
                               "use finite_time_diagnostics for tabulated systems")
    splits = [_ordered_split(transition_matrix(sys, n + p, n)) for n in range(p)]
    report = _gap_report(splits[0][0], tol)
    if not report.hyperbolic:
        return report, None
    dims = {s[1].shape[1] for s in splits}
    if len(dims) != 1:
        raise NumericError(f"stable dimension varies across phases {sorted(dims)}; tol may be too small")
    G, H, resid = _transports(sys, [s[1] for s in splits], [s[2] for s in splits])
    conds = [np.linalg.cond(np.hstack([s[1], s[2]])) for s in splits]
    for Hn in H:
        if Hn.size and np.linalg.cond(Hn) > 1e13:
            raise NumericError("unstable transport is not invertible; tol too small or degenerate splitting")
    dich = DichotomyData(
        sys.dim_d,
        tuple(s[1] for s in splits), tuple(s[2] for s in splits),
        tuple(s[3] for s in splits), tuple(s[4] for s in splits),
        tuple(G), tuple(H), 1.0, 1.0, 0, resid, float(max(conds)),
    )
    D, lam = fit_constants(dich, horizon)
    return report, dich.with_constants(D, lam, horizon, "verified over horizon")


def detect_autonomous(sys: FiniteDelaySystem, tol: float = DEFAULT_TOL, horizon: int = DEFAULT_HORIZON):
    """Spectral test of an autonomous system; the dichotomy projection is the
    spectral projection onto eigenvalues inside the unit disk."""
    if sys.kind != "autonomous":
        raise ValueError(f"detect_autonomous needs an autonomous system, got kind={sys.kind!r}")
    return detect_periodic(sys, tol, horizon)


def detect(sys: FiniteDelaySystem, tol: float = DEFAULT_TOL, horizon: int = DEFAULT_HORIZON):
    """Dispatch on the system kind."""
    if sys.kind == "tabulated":
        diag = finite_time_diagnostics(sys)
        raise UnsupportedError(
            "no detection algorithm for general nonautonomous coefficients; "
            f"finite-time exponents {np.round(diag['exponents'], 4).tolist()}"
        )
    return detect_periodic(sys, tol, horizon)


def finite_time_diagnostics(sys: FiniteDelaySystem, horizon: int | None = None) -> dict:
    """Finite-time exponents ``log(sigma_i(T(N, 0))) / N`` and their largest gap around zero."""
    N = horizon if horizon is not None else (sys.horizon or DEFAULT_HORIZON)
    T = transition_matrix(sys, N, 0)
    sv = np.linalg.svd(T, compute_uv=False)
    with np.errstate(divide="ignore"):
        expo = np.log(sv) / N
    below = expo[expo < 0]
    above = expo[expo >= 0]
    gap = float(np.min(above) - np.max(below)) if below.size and above.size else np.inf
    return {"horizon": N, "exponents": expo, "gap": gap}


def _norm_tables(dich: DichotomyData, horizon: int):
    """Stable table ``(m, k) -> |T(m+k, m) P_m|`` and unstable ``(n, k) -> |T(n, n+k) Q_{n+k}|``.

    ``m`` and ``n`` run over phases ``< min(period, horizon + 1)``; entries with
    ``m + k > horizon`` are NaN.
    """
    d, p = dich.dim_d, dich.period
    phases = min(p, horizon + 1)
    st = np.full((phases, horizon + 1), np.nan)
    un = np.full((phases, horizon + 1), np.nan)
    for m in range(phases):
        G = np.eye(dich.stable_count, dtype=complex)
        Cs = dich.stable_coords[m]
        for k in range(horizon + 1 - m):
            n = m + k
            st[m, k] = lift_operator_norm(dich.stable_bases[dich.phase(n)] @ G @ Cs, d) if dich.stable_count else 0.0
            G = dich.stable_transport[dich.phase(n)] @ G
    for n in range(phases):
        W = np.eye(dich.unstable_count, dtype=complex)
        Un = dich.unstable_bases[n]
        for k in range(horizon + 1 - n):
            m = n + k
            un[n, k] = lift_operator_norm(Un @ W @ dich.unstable_coords[dich.phase(m)], d) if dich.unstable_count else 0.0
            if dich.unstable_count:
                W = np.linalg.solve(dich.unstable_transport[dich.phase(m)].T, W.T).T
    return st, un


def _D_for(st, un, lam, kmax):
    k = np.arange(st.shape[1])
    w = np.exp(lam * k)
    mask = k <= kmax
    vals = np.concatenate([(st * w)[:, mask].ravel(), (un * w)[:, mask].ravel()])
    return float(np.nanmax(vals))


def fit_constants(dich: DichotomyData, horizon: int, tables=None):
    """Fit ``(D, lam)`` over ``horizon`` steps.

    ``lam`` runs down a grid of fractions of the spectral gap; the first value
    whose ratio ``|T P| e^{lam k}`` has saturated (the maximum over the whole
    horizon is already reached in its first half) is taken, and ``D`` is the
    largest observed ratio at that ``lam``.
    """
    st, un = tables if tables is not None else _norm_tables(dich, horizon)
    gap = min(dich.spectral_gap(), _GAP_CAP)
    if not gap > 0:
        raise StateError("no spectral gap: the candidate splitting is not hyperbolic")
    half = max(horizon // 2, 1)
    best = None
    for f in _LAMBDA_FRACTIONS:
        lam = gap * f
        D_full = _D_for(st, un, lam, horizon)
        D_half = _D_for(st, un, lam, half)
        best = (D_full, lam)
        if D_full <= D_half * (1 + _SATURATION_TOL):
            break
    return max(best[0], 1e-300), best[1]


@dataclass
class VerificationReport:
    """Residuals of the dichotomy properties over ``0 <= m <= n <= horizon``.

    ``commutation_residual`` and ``invariance_residual`` are relative; the
    estimate residuals are absolute excesses over ``D e^{-lam |n-m|}``.
    """

    horizon: int
    D: float
    lam: float
    commutation_residual: float
    stable_residual: float
    unstable_residual: float
    idempotence_residual: float
    invariance_residual: float
    complementarity_cond: float
    projection_sup: float
    fitted_D: float
    fitted_lambda: float
    label: str = "verified over horizon (not certified)"
    full: dict | None = None

    @property
    def max_residual(self) -> float:
        return max(self.commutation_residual, self.stable_residual, self.unstable_residual,
                   self.idempotence_residual, self.invariance_residual)

    def to_json(self, full: bool = False) -> dict:
        doc = {k: v for k, v in self.__dict__.items() if k != "full"}
        if full and self.full is not None:
            doc["full"] = self.full
        return doc


def verify_dichotomy(sys: FiniteDelaySystem, cand: DichotomyData, horizon: int = DEFAULT_HORIZON,
                     full: bool = False) -> VerificationReport:
    """Check a candidate dichotomy on all pairs ``0 <= m <= n <= horizon``."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    d = sys.dim_d
    st, un = _norm_tables(cand, horizon)
    k = np.arange(horizon + 1)
    bound = cand.D * np.exp(-cand.lam * k)
    st_res = np.maximum(0.0, st - bound)
    un_res = np.maximum(0.0, un - bound)

    phases = min(cand.period, horizon + 1)
    comm = np.full((phases, horizon + 1), np.nan)
    for m in range(phases):
        T = np.eye(sys.lift_dim, dtype=complex)
        Pm = cand.P(m)
        for kk in range(horizon + 1 - m):
            n = m + kk
            Pn = cand.P(n)
            scale = lift_operator_norm(T, d) * max(lift_operator_norm(Pn, d), lift_operator_norm(Pm, d), 1.0)
            comm[m, kk] = lift_operator_norm(Pn @ T - T @ Pm, d) / scale
            T = sys.companion(n) @ T

    idem = max(float(np.max(np.abs(P @ P - P))) if P.size else 0.0 for P in cand.projections)
    psup = max(lift_operator_norm(P, d) for P in cand.projections)
    try:
        D_fit, lam_fit = fit_constants(cand, horizon, (st, un))
    except StateError:
        D_fit, lam_fit = np.inf, 0.0
    extra = None
    if full:
        extra = {"stable_norms": st, "unstable_norms": un, "commutation": comm,
                 "stable_residual": st_res, "unstable_residual": un_res}
    return VerificationReport(
        horizon=horizon, D=cand.D, lam=cand.lam,
        commutation_residual=float(np.nanmax(comm)),
        stable_residual=float(np.nanmax(st_res)),
        unstable_residual=float(np.nanmax(un_res)),
        idempotence_residual=idem,
        invariance_residual=cand.invariance_residual,
        complementarity_cond=cand.complementarity_cond,
        projection_sup=psup,
        fitted_D=D_fit, fitted_lambda=lam_fit, full=extra,
    )


def stable_subspace(sys: FiniteDelaySystem, m: int = 0, horizon: int = DEFAULT_HORIZON,
                    tol: float = DEFAULT_TOL) -> np.ndarray:
    """Basis of the stable subspace at time ``m`` (columns in the lift).

    Each basis vector ``v`` is checked to satisfy
    ``|T(n, m) v| <= D |v|`` for ``m <= n <= m + horizon``.
    """
    report, dich = detect(sys, tol, horizon)
    if dich is None:
        raise StateError(f"system is not hyperbolic (distance to unit circle {report.min_distance_to_unit_circle:.3g})")
    S = dich.stable_bases[dich.phase(m)]
    d = sys.dim_d
    for i in range(S.shape[1]):
        v = S[:, i]
        nv = lift_norm(v, d)
        G = np.eye(dich.stable_count, dtype=complex)
        for n in range(m, m + horizon + 1):
            w = dich.stable_bases[dich.phase(n)] @ G[:, i]
            if lift_norm(w, d) > dich.D * nv * (1 + 1e-9):
                raise NumericError(f"stable basis vector {i} grows beyond D at time {n}")
            G = dich.stable_transport[dich.phase(n)] @ G
    return S
