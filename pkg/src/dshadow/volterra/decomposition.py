"""Center-unstable spectral data of a Volterra kernel.

For simple roots ``lam_i`` (``|lam_i| >= 1``) with ``Delta(lam_i) v_i = 0`` and
``w_i Delta(lam_i) = 0`` the eigenfunctions are ``Phi_i(theta) = lam_i^theta v_i``
and ``Psi_i(zeta) = lam_i^{-zeta} w_i``. Their pairing has the closed form

    <Psi_i, Phi_k> = w_i (Delta(lam_i) - Delta(lam_k)) v_k / (lam_i - lam_k)   (i != k)
    <Psi_i, Phi_i> = w_i Delta'(lam_i) v_i

so off-diagonal pairings vanish and each ``w_i`` is scaled by the diagonal
entry. For repeated roots a fallback takes ``Phi`` from an ordered Schur form
of a truncated companion matrix and solves a linear system for ``Psi(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from dshadow._io import csv_text
from dshadow.errors import ArgumentError, NumericError, UnsupportedError
from dshadow.finite_delay import ForcingSequence
from dshadow.phase_space import HistorySegment
from dshadow.volterra.kernel import VolterraKernel, char_derivative, char_matrix
from dshadow.volterra.roots import CIRCLE_TOL, Spectrum, find_roots
from dshadow.volterra.solution import pair_arrays, voc_simulate

__all__ = [
    "SpectralDecomposition",
    "spectral_decomposition",
    "project_cu",
    "coordinate_dynamics",
    "coordinate_consistency",
    "ResonantGrowthReport",
    "resonant_forcing",
    "resonate",
]


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Bases of the center-unstable space and its adjoint.

    ``Phi(theta) = Phi0 B^theta`` (``theta <= 0``) and
    ``Psi(zeta) = B^{-zeta} Psi0`` (``zeta >= 0``).

    Attributes
    ----------
    Phi0 : ndarray, shape (d, s)
    Psi0 : ndarray, shape (s, d)
    B : ndarray, shape (s, s)
    normalization_residual : float
        ``max |<Psi, Phi> - E|``.
    spectral_residual : float
        Distance between the eigenvalues of ``B`` and the center-unstable roots.
    method : str
        ``"simple"`` (closed-form eigenfunctions) or ``"companion"`` (fallback).
    truncation_residual : float
        Weighted kernel mass ignored by the fallback (0 for the simple path).
    """

    kernel: VolterraKernel
    Phi0: np.ndarray
    Psi0: np.ndarray
    B: np.ndarray
    normalization_residual: float
    spectral_residual: float
    method: str = "simple"
    truncation_residual: float = 0.0

    @property
    def s(self) -> int:
        return self.B.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.B) if self.s else np.zeros(0, dtype=complex)

    def phi_lags(self, depth: int) -> np.ndarray:
        """``Phi(0), Phi(-1), ..., Phi(-depth)`` stacked as ``(depth + 1, d, s)``."""
        out = np.empty((depth + 1, self.kernel.dim_d, self.s), dtype=complex)
        cur = self.Phi0.astype(complex)
        for i in range(depth + 1):
            out[i] = cur
            cur = np.linalg.solve(self.B.T, cur.T).T  # cur @ B^{-1}
        return out

    def psi_values(self, depth: int) -> np.ndarray:
        """``Psi(0), ..., Psi(depth)`` stacked as ``(depth + 1, s, d)``."""
        out = np.empty((depth + 1, self.s, self.kernel.dim_d), dtype=complex)
        cur = self.Psi0.astype(complex)
        for z in range(depth + 1):
            out[z] = cur
            cur = np.linalg.solve(self.B, cur)
        return out

    def phi_history(self, col: int, depth: int, gamma=None) -> HistorySegment:
        """Column ``col`` of ``Phi`` as a history truncated at ``depth``."""
        lags = self.phi_lags(depth)[:, :, col]
        return HistorySegment(gamma or self.kernel.gamma, lags[::-1])

    def pair(self, phi_lags: np.ndarray) -> np.ndarray:
        """``<Psi, phi>`` for ``phi`` given in lag order ``(H + 1, d, t)`` (zero-extended)."""
        k = self.kernel
        if self.s == 0:
            return np.zeros((0, phi_lags.shape[2]), dtype=complex)
        if k.kind == "finite":
            J = k.terms.shape[0] - 1
            return pair_arrays(k, self.psi_values(max(J, 0)), phi_lags)
        # sum_zeta rho^zeta B^{-zeta-1} = (B - rho I)^{-1}
        H = phi_lags.shape[0] - 1
        out = self.Psi0 @ phi_lags[0]
        if H == 0:
            return out
        left = np.linalg.solve(self.B - k.rho * np.eye(self.s), self.Psi0) @ k.C
        right = np.einsum("i,idt->dt", k.rho ** np.arange(1, H + 1), phi_lags[1:])
        return out + left @ right

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "B": self.B,
            "Phi0": self.Phi0,
            "Psi0": self.Psi0,
            "eigenvalues": self.eigenvalues,
            "normalization_residual": self.normalization_residual,
            "spectral_residual": self.spectral_residual,
            "method": self.method,
            "truncation_residual": self.truncation_residual,
        }


def _multiset_distance(a, b) -> float:
    a, b = list(a), list(b)
    if len(a) != len(b):
        return float("inf")
    worst = 0.0
    for x in a:
        i = int(np.argmin([abs(x - y) for y in b]))
        worst = max(worst, abs(x - b.pop(i)))
    return worst


def _null_vectors(M):
    U, sv, Vh = np.linalg.svd(M)
    return Vh[-1].conj(), U[:, -1].conj(), sv


def _simple(k: VolterraKernel, cu: list) -> SpectralDecomposition:
    d = k.dim_d
    lams = np.array([lam for lam, _ in cu], dtype=complex)
    s = len(lams)
    V = np.empty((d, s), dtype=complex)
    W = np.empty((s, d), dtype=complex)
    for i, lam in enumerate(lams):
        v, w, sv = _null_vectors(char_matrix(k, lam))
        if d > 1 and sv[-2] <= 1e-8 * max(sv[0], 1.0):
            raise UnsupportedError(f"root {lam} has a null space of dimension > 1 (semisimple multiple root)")
        V[:, i] = v
        W[i] = w
    G = np.empty((s, s), dtype=complex)
    Deltas = char_matrix(k, lams)
    for i in range(s):
        for j in range(s):
            if i == j:
                G[i, i] = W[i] @ char_derivative(k, lams[i]) @ V[:, i]
            else:
                G[i, j] = W[i] @ (Deltas[i] - Deltas[j]) @ V[:, j] / (lams[i] - lams[j])
    diag = np.diag(G)
    if np.any(np.abs(diag) <= 1e-12 * np.linalg.norm(W, axis=1) * np.linalg.norm(V, axis=0)):
        raise NumericError("eigenfunction pairing <Psi_i, Phi_i> vanishes: root pairing failure")
    W = W / diag[:, None]
    dec = SpectralDecomposition(k, V, W, np.diag(lams), 0.0, 0.0, "simple")
    # residual from the summed pairing, independent of the closed form above;
    # Phi is cut at the kernel reach, where the neglected tail is below 1e-17
    Gn = dec.pair(dec.phi_lags(max(k.reach(), 1)))
    res = float(np.max(np.abs(Gn - np.eye(s))))
    return SpectralDecomposition(k, V, W, np.diag(lams), res, 0.0, "simple")


def _companion(k: VolterraKernel, spec: Spectrum, circle_tol: float) -> SpectralDecomposition:
    d = k.dim_d
    Hc = k.reach()
    terms = k.terms_upto(Hc)
    sys = k.as_finite_delay(Hc)
    Cm = sys.companion(0)
    s = spec.cu_dimension
    R, Z, sdim = sla.schur(Cm.astype(complex), output="complex", sort=lambda z: abs(z) >= 1 - circle_tol)
    if sdim != s:
        raise NumericError(f"companion truncation has {sdim} center-unstable eigenvalues, spectrum reports {s}")
    B = R[:s, :s]
    Phi0 = Z[:d, :s]
    # Psi0 X solves X B - ... : B X - sum_j B^{-j} X A(j) = 0, vec column-major
    Binv = np.linalg.inv(B)
    powers = [np.eye(s, dtype=complex)]
    for _ in range(Hc):
        powers.append(powers[-1] @ Binv)
    L = np.kron(np.eye(d), B)
    for j in range(Hc + 1):
        L = L - np.kron(terms[j].T, powers[j])
    _, sv, Vh = np.linalg.svd(L)
    thr = 1e-8 * max(sv[0], 1.0)
    null = Vh[np.sum(sv > thr) :].conj()
    if null.shape[0] < s:
        raise NumericError(f"adjoint null space has dimension {null.shape[0]} < {s}")
    phi_l = np.empty((Hc + 1, d, s), dtype=complex)
    phi_l[0] = Phi0
    for i in range(1, Hc + 1):
        phi_l[i] = phi_l[i - 1] @ Binv
    cut = VolterraKernel.finite(terms, k.gamma)
    Gs = []
    for vec in null:
        X = vec.reshape(d, s).T
        psi = np.empty((Hc + 1, s, d), dtype=complex)
        psi[0] = X
        for z in range(1, Hc + 1):
            psi[z] = Binv @ psi[z - 1]
        Gs.append(pair_arrays(cut, psi, phi_l))
    A = np.array([g.ravel() for g in Gs]).T
    coef, *_ = np.linalg.lstsq(A, np.eye(s).ravel(), rcond=None)
    X = sum(c * vec.reshape(d, s).T for c, vec in zip(coef, null))
    dec = SpectralDecomposition(k, Phi0, X, B, 0.0, 0.0, "companion", k.tail_weighted_sum(Hc))
    G = dec.pair(dec.phi_lags(Hc))
    res = float(np.max(np.abs(G - np.eye(s))))
    roots = [lam for lam, m in spec.cu_roots for _ in range(m)]
    sres = _multiset_distance(np.linalg.eigvals(B), roots)
    return SpectralDecomposition(k, Phi0, X, B, res, sres, "companion", k.tail_weighted_sum(Hc))


def spectral_decomposition(
    k: VolterraKernel, spectrum: Spectrum, allow_multiple: bool = False, circle_tol: float = CIRCLE_TOL
) -> SpectralDecomposition:
    """Normalized bases ``Phi``, ``Psi`` and ``B`` for the center-unstable roots.

    Raises
    ------
    UnsupportedError
        A center-unstable root is repeated and ``allow_multiple`` is off.
    NumericError
        The pairing is singular or the fallback fails its consistency checks.
    """
    cu = spectrum.cu_roots
    d = k.dim_d
    if not cu:
        z = np.zeros((0, 0), dtype=complex)
        return SpectralDecomposition(k, np.zeros((d, 0), dtype=complex), np.zeros((0, d), dtype=complex), z, 0.0, 0.0)
    if all(m == 1 for _, m in cu):
        try:
            return _simple(k, cu)
        except UnsupportedError:
            if not allow_multiple:
                raise
    elif not allow_multiple:
        raise UnsupportedError("repeated center-unstable roots need allow_multiple=True (companion fallback)")
    return _companion(k, spectrum, circle_tol)


def project_cu(dec: SpectralDecomposition, phi: HistorySegment):
    """Coordinates ``<Psi, phi>`` and the projected history ``Phi <Psi, phi>`` at ``phi``'s depth."""
    coords = dec.pair(phi.values[::-1][:, :, None])[:, 0]
    lags = dec.phi_lags(phi.depth) @ coords if dec.s else np.zeros((phi.depth + 1, phi.dim_d), dtype=complex)
    return coords, HistorySegment(phi.gamma, lags[::-1])


def coordinate_dynamics(dec: SpectralDecomposition, p: ForcingSequence, z0, steps: int) -> np.ndarray:
    """Iterate ``z(n+1) = B z(n) + Psi0 p(n)``; returns ``(steps + 1, s)``."""
    z = np.zeros((steps + 1, dec.s), dtype=complex)
    z[0] = np.asarray(z0, dtype=complex).reshape(dec.s)
    for n in range(steps):
        z[n + 1] = dec.B @ z[n] + dec.Psi0 @ p.at(n)
    return z


def coordinate_consistency(dec: SpectralDecomposition, phi0: HistorySegment, p: ForcingSequence, steps: int) -> float:
    """Largest gap between ``z(n)`` from the reduced equation and ``<Psi, x_n>``, relative to ``1 + max |z|``."""
    run = voc_simulate(dec.kernel, phi0, p, steps)
    z0, _ = project_cu(dec, phi0)
    z = coordinate_dynamics(dec, p, z0, steps)
    proj = np.array([project_cu(dec, x)[0] for x in run.recursion])
    if dec.s == 0:
        return 0.0
    return float(np.max(np.abs(z - proj)) / (1.0 + np.max(np.abs(z))))


@dataclass(frozen=True)
class ResonantGrowthReport:
    """Linear growth of the resonant coordinate ``u(n) = v z(n)``.

    ``u`` should equal ``lam0^n c n``; ``max_rel_error`` is the largest
    ``|u(n) - lam0^n c n| / (c n)`` over ``n >= 1``.
    """

    lam0: complex
    c: float
    u: np.ndarray
    slope: float
    intercept: float
    fit_residual: float
    max_rel_error: float

    def to_csv(self) -> str:
        n = np.arange(len(self.u))
        rows = [[int(i), float(abs(u)), float(self.c * i)] for i, u in zip(n, self.u)]
        return csv_text(["n", "|u(n)|", "c*n"], rows)

    def to_json(self) -> dict:
        return {
            "lam0": [self.lam0.real, self.lam0.imag],
            "c": self.c,
            "slope": self.slope,
            "intercept": self.intercept,
            "fit_residual": self.fit_residual,
            "max_rel_error": self.max_rel_error,
            "steps": len(self.u) - 1,
        }


def resonant_forcing(dec: SpectralDecomposition, lam0, steps: int, circle_tol: float = CIRCLE_TOL) -> ResonantGrowthReport:
    """Drive the reduced equation with ``p(n) = lam0^{n+1} (v Psi0)^*`` and measure the growth.

    Raises
    ------
    ArgumentError
        ``lam0`` is not an on-circle eigenvalue of ``B``.
    NumericError
        ``v Psi0`` vanishes.
    """
    lam0 = complex(lam0)
    if steps < 1:
        raise ArgumentError(f"steps must be >= 1, got {steps}")
    if abs(abs(lam0) - 1) > circle_tol:
        raise ArgumentError(f"|lam0| = {abs(lam0):.12g} is not on the unit circle")
    if dec.s == 0:
        raise ArgumentError("kernel has no center-unstable roots (hyperbolic with trivial cu part)")
    evals, vl = sla.eig(dec.B, left=True, right=False)
    i = int(np.argmin(np.abs(evals - lam0)))
    if abs(evals[i] - lam0) > max(1e-8, circle_tol):
        raise ArgumentError(f"lam0 = {lam0} is not an eigenvalue of B")
    v = vl[:, i].conj()  # v B = lam0 v
    v = v / np.linalg.norm(v)
    vpsi = v @ dec.Psi0
    if np.linalg.norm(vpsi) <= 1e-14 * max(np.linalg.norm(dec.Psi0), 1e-300):
        raise NumericError("v Psi(0) vanishes; nondegeneracy of the adjoint basis is violated")
    c = float(np.real(vpsi @ vpsi.conj()))
    n = np.arange(steps + 1)
    p = ForcingSequence(lam0 ** (n[:steps, None] + 1) * vpsi.conj()[None, :])
    z = coordinate_dynamics(dec, p, np.zeros(dec.s), steps)
    u = z @ v
    target = lam0**n * c * n
    rel = np.abs(u[1:] - target[1:]) / (c * n[1:])
    slope, icpt = np.polyfit(n.astype(float), np.abs(u), 1)
    fit = np.abs(np.abs(u) - (slope * n + icpt))
    fit_res = float(np.max(fit[1:] / (c * n[1:])))
    return ResonantGrowthReport(lam0, c, u, float(slope), float(icpt), fit_res, float(np.max(rel)))


def resonate(k: VolterraKernel, steps: int, annulus=None, circle_tol: float = CIRCLE_TOL):
    """Find an on-circle root of ``k`` and run :func:`resonant_forcing` there.

    Returns ``(spectrum, decomposition, report)``.

    Raises
    ------
    ArgumentError
        The kernel has no characteristic root on the unit circle.
    """
    spec = find_roots(k, annulus=annulus, circle_tol=circle_tol)
    if not spec.on_circle:
        raise ArgumentError("no characteristic root on the unit circle: the kernel is hyperbolic")
    dec = spectral_decomposition(k, spec, circle_tol=circle_tol)
    lam0 = spec.on_circle[0][0]
    # snap to the eigenvalue of B so the precondition check uses the same number
    ev = dec.eigenvalues
    lam0 = complex(ev[int(np.argmin(np.abs(ev - lam0)))])
    return spec, dec, resonant_forcing(dec, lam0, steps, circle_tol)
