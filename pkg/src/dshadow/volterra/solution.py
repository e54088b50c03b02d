"""Solution operator, formal adjoint and their pairing for Volterra kernels.

The forward step maps a history ``phi`` to ``T phi`` with head
``sum_j A(j) phi(-j)`` and everything else shifted one slot into the past. The
adjoint step maps a row history ``psi`` to ``T# psi`` with head
``sum_j psi(j) A(j)`` and everything else shifted one slot forward. The
bilinear form

    <psi, phi> = psi(0) phi(0) + sum_{j>=1} sum_{zeta=0}^{j-1} psi(zeta+1) A(j) phi(zeta-j)

satisfies ``<psi, T phi> = <T# psi, phi>``.

Stored histories are zero-extended, so by default a step grows the stored
depth by one and is exact. With ``keep_depth=True`` the oldest entry is
dropped instead; the dropped weight is added to ``truncation_error``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dshadow.errors import DepthError, DimensionError
from dshadow.finite_delay import ForcingSequence
from dshadow.phase_space import AdjointSegment, HistorySegment, gamma_embed, weighted_norm
from dshadow.volterra.kernel import VolterraKernel

__all__ = [
    "volterra_step",
    "adjoint_step",
    "bilinear",
    "pair_arrays",
    "bilinear_bound",
    "VocResult",
    "voc_simulate",
    "forced_recursion",
]


def _check(k: VolterraKernel, seg):
    if seg.dim_d != k.dim_d:
        raise DimensionError(f"segment dimension {seg.dim_d} does not match kernel dimension {k.dim_d}")


def _head(k: VolterraKernel, lagged: np.ndarray) -> np.ndarray:
    """``sum_j A(j) lagged[j]`` for a stack of ``phi(0), phi(-1), ...``."""
    if k.kind == "finite":
        n = min(len(lagged), k.terms.shape[0])
        return np.einsum("jab,jb->a", k.terms[:n], lagged[:n])
    w = k.rho ** np.arange(len(lagged))
    return k.C @ (w @ lagged)


def volterra_step(k: VolterraKernel, h: HistorySegment, keep_depth: bool = False) -> HistorySegment:
    """One application of the solution operator.

    Parameters
    ----------
    keep_depth : bool
        Drop the oldest stored entry so the depth stays fixed. Requires the
        depth to cover the kernel reach.

    Raises
    ------
    DepthError
        ``keep_depth`` with a depth below the kernel reach.
    """
    _check(k, h)
    if abs(h.gamma - k.gamma) > 1e-12 * k.gamma:
        raise ValueError(f"history gamma {h.gamma} differs from kernel gamma {k.gamma}")
    lagged = h.values[::-1]
    head = _head(k, lagged)
    if not keep_depth:
        return HistorySegment(h.gamma, np.vstack([h.values, head]), h.truncation_error)
    need = k.reach()
    if h.depth < need:
        raise DepthError(f"fixed-depth step needs depth >= {need}, got {h.depth}", required_depth=need)
    dropped = float(np.linalg.norm(h.values[0])) * np.exp(-h.gamma * (h.depth + 1))
    vals = np.vstack([h.values[1:], head])
    return HistorySegment(h.gamma, vals, h.truncation_error + dropped)


def adjoint_step(k: VolterraKernel, psi: AdjointSegment, keep_depth: bool = False) -> AdjointSegment:
    """One application of the formal adjoint operator (mirror of :func:`volterra_step`)."""
    _check(k, psi)
    vals = psi.values
    if k.kind == "finite":
        n = min(len(vals), k.terms.shape[0])
        head = np.einsum("ja,jab->b", vals[:n], k.terms[:n])
    else:
        head = ((k.rho ** np.arange(len(vals))) @ vals) @ k.C
    if not keep_depth:
        return AdjointSegment(psi.gamma_tilde, np.vstack([head, vals]), psi.truncation_error)
    need = k.reach()
    if psi.depth < need:
        raise DepthError(f"fixed-depth adjoint step needs depth >= {need}, got {psi.depth}", required_depth=need)
    dropped = float(np.linalg.norm(vals[-1])) * np.exp(-psi.gamma_tilde * (psi.depth + 1))
    return AdjointSegment(psi.gamma_tilde, np.vstack([head, vals[:-1]]), psi.truncation_error + dropped)


def pair_arrays(k: VolterraKernel, psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Bilinear form on stacked data.

    Parameters
    ----------
    psi : ndarray, shape (Hpsi + 1, s, d)
        ``psi[zeta]`` holds ``s`` row vectors ``psi(zeta)``.
    phi : ndarray, shape (Hphi + 1, d, t)
        ``phi[i]`` holds ``t`` column vectors ``phi(-i)`` (lag order).

    Returns
    -------
    ndarray, shape (s, t)
        Exact under zero extension of both histories.
    """
    Hp, Hf = psi.shape[0] - 1, phi.shape[0] - 1
    out = psi[0] @ phi[0]
    if Hp == 0 or Hf == 0:
        return out
    if k.kind == "geometric":
        a = np.einsum("z,zsd->sd", k.rho ** np.arange(Hp), psi[1:])
        b = np.einsum("i,idt->dt", k.rho ** np.arange(1, Hf + 1), phi[1:])
        return out + a @ k.C @ b
    J = k.terms.shape[0] - 1
    for j in range(1, J + 1):
        # zeta + 1 <= Hp and j - zeta <= Hf
        lo, hi = max(0, j - Hf), min(j - 1, Hp - 1)
        if lo > hi:
            continue
        z = np.arange(lo, hi + 1)
        out = out + np.einsum("zsa,ab,zbt->st", psi[z + 1], k.terms[j], phi[j - z])
    return out


def bilinear(k: VolterraKernel, psi: AdjointSegment, phi: HistorySegment, strict: bool = False) -> complex:
    """``<psi, phi>`` for truncated, zero-extended histories.

    With ``strict=True`` both depths must cover the kernel reach (otherwise
    the zero extension is assumed to be the intended element and the sum is
    still exact for it).
    """
    _check(k, psi)
    _check(k, phi)
    if strict:
        need = k.reach()
        if min(psi.depth, phi.depth) < need:
            raise DepthError(
                f"bilinear form needs depths >= {need}, got psi {psi.depth}, phi {phi.depth}", required_depth=need
            )
    val = pair_arrays(k, psi.values[:, None, :], phi.values[::-1][:, :, None])
    return complex(val[0, 0])


def bilinear_bound(k: VolterraKernel) -> float:
    """Constant ``K_b`` with ``|<psi, phi>| <= K_b |psi| |phi|``.

    ``K_b = 1 + e^{gt} sum_j |A(j)| e^{gamma j} min(j, 1 / (1 - e^{-(gamma - gt)}))``
    with ``gt`` the adjoint weight.
    """
    g, gt = k.gamma, k.gamma_tilde
    Q = 1.0 / (1.0 - np.exp(-(g - gt)))
    if k.kind == "finite":
        j = np.arange(k.terms.shape[0])
        w = np.linalg.norm(k.terms, ord=2, axis=(1, 2)) * np.exp(g * j)
        s = float(np.sum(w * np.minimum(j, Q)))
    else:
        J = k.reach(1e-18)
        j = np.arange(J + 1)
        c = np.linalg.norm(k.C, 2)
        x = k.decay_ratio
        s = float(np.sum(c * x**j * np.minimum(j, Q))) + Q * k.tail_weighted_sum(J)
    return 1.0 + np.exp(gt) * s


@dataclass(frozen=True)
class VocResult:
    """Forced orbit computed twice.

    ``recursion[n]`` comes from stepping ``x_{n+1} = T x_n + Gamma p(n)``;
    ``voc[n]`` from ``T^n phi0 + sum_{j<n} T^{n-1-j} Gamma p(j)``.
    ``cross_residual`` is ``max_n |recursion[n] - voc[n]|`` in the weighted
    norm, relative to ``1 + max_n |recursion[n]|``.
    """

    recursion: list
    voc: list
    cross_residual: float

    def heads(self) -> np.ndarray:
        """``x(n)`` for ``n = 0..steps`` from the recursion."""
        return np.array([h.values[-1] for h in self.recursion])


def forced_recursion(k: VolterraKernel, phi0: HistorySegment, p: ForcingSequence, steps: int) -> list:
    """Segments ``x_0..x_steps`` of ``x(n+1) = sum_j A(j) x(n-j) + p(n)``."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    out = [phi0]
    x = phi0
    for n in range(steps):
        nxt = volterra_step(k, x)
        vals = np.array(nxt.values)
        vals[-1] += p.at(n)
        x = HistorySegment(x.gamma, vals, nxt.truncation_error)
        out.append(x)
    return out


def voc_simulate(k: VolterraKernel, phi0: HistorySegment, p: ForcingSequence, steps: int) -> VocResult:
    """Forced orbit by direct recursion and by the variation-of-constants sum."""
    _check(k, phi0)
    rec = forced_recursion(k, phi0, p, steps)
    free = phi0
    impulses = []  # impulses[j] holds T^{n-1-j} Gamma p(j) at the current n
    voc = [phi0]
    for n in range(1, steps + 1):
        free = volterra_step(k, free)
        impulses = [volterra_step(k, g) for g in impulses]
        impulses.append(gamma_embed(p.at(n - 1), 0, k.gamma))
        total = free
        for g in impulses:
            total = total + g
        voc.append(total)
    scale = 1.0 + max(weighted_norm(x) for x in rec)
    resid = max(weighted_norm(a - b) for a, b in zip(rec, voc)) / scale
    return VocResult(rec, voc, float(resid))
