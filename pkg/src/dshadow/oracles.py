"""Independent reference computations used to cross-check the main solvers.

These deliberately avoid the code paths they check: the boundary-value
oracle builds spectral projections from a plain eigendecomposition and solves
one global linear system instead of running dichotomy recurrences, and the
root oracle reads characteristic roots off the eigenvalues of a companion
matrix instead of using contour counts.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from dshadow.errors import StateError, UnsupportedError
from dshadow.finite_delay import FiniteDelaySystem

__all__ = ["eig_projection_rows", "bvp_corrections", "companion_roots"]


def eig_projection_rows(sys: FiniteDelaySystem, phase: int, tol: float = 1e-8):
    """Rows selecting the stable and unstable coordinates at ``phase``.

    Returns ``(Ls, Lu)`` with ``Ls x = 0`` iff the lift ``x`` lies in the
    unstable subspace and ``Lu x = 0`` iff it lies in the stable one. Built
    from the eigenvectors of the monodromy matrix over one period.
    """
    if sys.period is None:
        raise UnsupportedError("eigen-projections need an autonomous or periodic system")
    p = sys.period
    M = np.eye(sys.lift_dim, dtype=complex)
    for n in range(phase, phase + p):
        M = sys.companion(n) @ M
    w, V = np.linalg.eig(M)
    if np.min(np.abs(np.abs(w) - 1)) <= tol:
        raise StateError("monodromy has an eigenvalue on the unit circle")
    Vinv = np.linalg.inv(V)
    st = np.abs(w) < 1
    return Vinv[st], Vinv[~st]


def bvp_corrections(sys: FiniteDelaySystem, forcings) -> list:
    """Solve the boundary-value problem behind shadowing for many forcings.

    For each forcing ``z(0..N-1)`` find ``w(-r..N)`` with

    * ``w(n+1) - sum_j A_j(n) w(n-j) = z(n)`` for ``n < N``,
    * the lift of ``w_0`` in the unstable subspace,
    * the lift of ``w_N`` in the stable subspace.

    All forcings must have the same length. The square system is factored
    once and solved for every right-hand side.

    Returns
    -------
    list of ndarray
        ``w`` values, shape ``(N + r + 1, d)`` each, ordered ``n = -r..N``.
    """
    Z = [np.asarray(z, dtype=complex).reshape(len(z), -1) for z in forcings]
    if not Z:
        return []
    N = Z[0].shape[0]
    d, r = sys.dim_d, sys.delay_r
    nu = (N + r + 1) * d

    def col(m):  # first unknown index of w(m)
        return (m + r) * d

    A = np.zeros((nu, nu), dtype=complex)
    row = 0
    for n in range(N):
        coeffs = sys.coeffs_at(n)
        A[row : row + d, col(n + 1) : col(n + 1) + d] = np.eye(d)
        for j in range(r + 1):
            A[row : row + d, col(n - j) : col(n - j) + d] -= coeffs[j]
        row += d

    def lift_cols(n):
        # lift of w_n is (w(n), w(n-1), ..., w(n-r))
        return np.concatenate([np.arange(col(n - j), col(n - j) + d) for j in range(r + 1)])

    Ls0, _ = eig_projection_rows(sys, 0)
    _, LuN = eig_projection_rows(sys, N % sys.period)
    A[row : row + len(Ls0), lift_cols(0)] = Ls0
    row += len(Ls0)
    A[row : row + len(LuN), lift_cols(N)] = LuN
    row += len(LuN)
    if row != nu:
        raise StateError(f"boundary conditions give {row} equations for {nu} unknowns")
    lu = sla.lu_factor(A)
    rhs = np.zeros((nu, len(Z)), dtype=complex)
    for i, z in enumerate(Z):
        if z.shape[0] != N:
            raise ValueError("all forcings must have the same length")
        rhs[: N * d, i] = z.ravel()
    sol = sla.lu_solve(lu, rhs)
    return [sol[:, i].reshape(N + r + 1, d) for i in range(len(Z))]


def companion_roots(k, inner: float) -> np.ndarray:
    """Characteristic roots of a finitely supported kernel with ``|lam| > inner``.

    ``det Delta(lam) = 0`` with ``lam != 0`` exactly when ``lam`` is an
    eigenvalue of the companion matrix of ``A(0..J)``.
    """
    if k.kind != "finite":
        raise UnsupportedError("companion roots are exact only for finitely supported kernels")
    ev = np.linalg.eigvals(k.as_finite_delay().companion(0))
    return np.sort_complex(ev[np.abs(ev) > inner])
