"""Phase-space elements for delay equations.

Three kinds of segments are used throughout the package:

* :class:`Segment` -- a finite history block ``phi(theta)``, ``-r <= theta <= 0``,
  normed by the maximum of the Euclidean norms of its entries.
* :class:`HistorySegment` -- an infinite history ``phi(theta)``, ``theta <= 0``,
  stored down to a depth ``H`` and extended by zero below it; normed by
  ``sup |phi(theta)| e^{gamma theta}``.
* :class:`AdjointSegment` -- a row-vector valued forward history ``psi(zeta)``,
  ``zeta >= 0``, stored up to ``H`` and zero beyond; normed by
  ``sup |psi(zeta)| e^{-gamma_tilde zeta}``.

All values are stored in increasing index order (``theta = -r..0`` and
``zeta = 0..H``). The *lift* of a :class:`Segment` is the vector in
``C^{d(r+1)}`` made of the blocks ``phi(0), phi(-1), ..., phi(-r)``; this is
the coordinate system in which transition matrices are written.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dshadow._io import complex_from_json, complex_to_json
from dshadow.errors import DimensionError

__all__ = [
    "Segment",
    "HistorySegment",
    "AdjointSegment",
    "segment_norm",
    "weighted_norm",
    "adjoint_norm",
    "gamma_embed",
    "lift_norm",
    "lift_operator_norm",
    "segment_to_json",
    "segment_from_json",
]


def _frozen(values, ndim=2):
    arr = np.array(values, dtype=complex)
    if arr.ndim == 1 and ndim == 2:
        arr = arr[:, None]
    if arr.ndim != ndim:
        raise DimensionError(f"segment values must be a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Segment:
    """Element of the finite-delay phase space.

    Parameters
    ----------
    values
        Array of shape ``(r + 1, d)``; row ``i`` holds ``phi(i - r)``. A 1-d
        array is read as a scalar (``d = 1``) segment.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"segment needs at least one entry of positive dimension, got {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def delay_r(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dim_d(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, theta: int) -> np.ndarray:
        r = self.delay_r
        if not -r <= theta <= 0:
            raise IndexError(f"theta={theta} outside [-{r}, 0]")
        return self.values[theta + r]

    def lift(self) -> np.ndarray:
        """Vector ``(phi(0), phi(-1), ..., phi(-r))`` in ``C^{d(r+1)}``."""
        return self.values[::-1].reshape(-1).copy()

    @classmethod
    def from_lift(cls, vec, r: int, d: int) -> "Segment":
        vec = np.asarray(vec, dtype=complex)
        if vec.shape != (d * (r + 1),):
            raise DimensionError(f"lift vector of shape {vec.shape} does not match r={r}, d={d}")
        return cls(vec.reshape(r + 1, d)[::-1])

    @classmethod
    def zeros(cls, r: int, d: int) -> "Segment":
        return cls(np.zeros((r + 1, d), dtype=complex))

    def __add__(self, other: "Segment") -> "Segment":
        return Segment(self.values + other.values)

    def __sub__(self, other: "Segment") -> "Segment":
        return Segment(self.values - other.values)

    def __mul__(self, alpha) -> "Segment":
        return Segment(alpha * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class HistorySegment:
    """Truncated element of the weighted infinite-history space.

    ``values[i]`` holds ``phi(i - H)`` for ``i = 0..H``; ``phi(theta) = 0`` for
    ``theta < -H`` (zero extension). ``truncation_error`` bounds the weighted
    distance to the untruncated element when the history was produced by
    fixed-depth stepping (0 means exact).
    """

    gamma: float
    values: np.ndarray
    truncation_error: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        arr = _frozen(self.values)
        if arr.shape[0] < 1:
            raise DimensionError("history needs at least the theta=0 entry")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "gamma", float(self.gamma))

    tail_policy = "zero"

    @property
    def depth(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dim_d(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, theta: int) -> np.ndarray:
        if theta > 0:
            raise IndexError(f"theta={theta} > 0")
        if theta < -self.depth:
            return np.zeros(self.dim_d, dtype=complex)
        return self.values[theta + self.depth]

    def lags(self, count: int) -> np.ndarray:
        """Array of ``phi(0), phi(-1), ..., phi(-(count-1))`` (zero-extended)."""
        out = np.zeros((count, self.dim_d), dtype=complex)
        n = min(count, self.depth + 1)
        out[:n] = self.values[::-1][:n]
        return out

    def extended(self, depth: int) -> "HistorySegment":
        """Same element stored to a larger depth (explicit zeros)."""
        if depth <= self.depth:
            return self
        pad = np.zeros((depth - self.depth, self.dim_d), dtype=complex)
        return HistorySegment(self.gamma, np.vstack([pad, self.values]), self.truncation_error)

    def __add__(self, other: "HistorySegment") -> "HistorySegment":
        H = max(self.depth, other.depth)
        return HistorySegment(
            self.gamma,
            self.extended(H).values + other.extended(H).values,
            self.truncation_error + other.truncation_error,
        )

    def __sub__(self, other: "HistorySegment") -> "HistorySegment":
        return self + other * -1.0

    def __mul__(self, alpha) -> "HistorySegment":
        return HistorySegment(self.gamma, alpha * self.values, abs(alpha) * self.truncation_error)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class AdjointSegment:
    """Truncated element of the adjoint space; ``values[z]`` is the row ``psi(z)``."""

    gamma_tilde: float
    values: np.ndarray
    truncation_error: float = 0.0

    def __post_init__(self):
        if not self.gamma_tilde > 0:
            raise ValueError(f"gamma_tilde must be positive, got {self.gamma_tilde}")
        arr = _frozen(self.values)
        if arr.shape[0] < 1:
            raise DimensionError("adjoint history needs at least the zeta=0 entry")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "gamma_tilde", float(self.gamma_tilde))

    tail_policy = "zero"

    @property
    def depth(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dim_d(self) -> int:
        return self.values.shape[1]

    def __getitem__(self, zeta: int) -> np.ndarray:
        if zeta < 0:
            raise IndexError(f"zeta={zeta} < 0")
        if zeta > self.depth:
            return np.zeros(self.dim_d, dtype=complex)
        return self.values[zeta]

    def extended(self, depth: int) -> "AdjointSegment":
        if depth <= self.depth:
            return self
        pad = np.zeros((depth - self.depth, self.dim_d), dtype=complex)
        return AdjointSegment(self.gamma_tilde, np.vstack([self.values, pad]), self.truncation_error)

    def __add__(self, other: "AdjointSegment") -> "AdjointSegment":
        H = max(self.depth, other.depth)
        return AdjointSegment(
            self.gamma_tilde,
            self.extended(H).values + other.extended(H).values,
            self.truncation_error + other.truncation_error,
        )

    def __mul__(self, alpha) -> "AdjointSegment":
        return AdjointSegment(self.gamma_tilde, alpha * self.values, abs(alpha) * self.truncation_error)

    __rmul__ = __mul__


def segment_norm(s: Segment) -> float:
    """``max_theta |phi(theta)|`` with the Euclidean norm on ``C^d``."""
    return float(np.max(np.linalg.norm(s.values, axis=1)))


def weighted_norm(s: HistorySegment) -> float:
    """``sup_theta |phi(theta)| e^{gamma theta}`` over the stored entries."""
    theta = np.arange(-s.depth, 1)
    return float(np.max(np.linalg.norm(s.values, axis=1) * np.exp(s.gamma * theta)))


def adjoint_norm(s: AdjointSegment) -> float:
    """``sup_zeta |psi(zeta)| e^{-gamma_tilde zeta}`` over the stored entries."""
    zeta = np.arange(s.depth + 1)
    return float(np.max(np.linalg.norm(s.values, axis=1) * np.exp(-s.gamma_tilde * zeta)))


def gamma_embed(x, depth: int = 0, gamma: float = 1.0) -> HistorySegment:
    """History equal to ``x`` at ``theta = 0`` and zero for ``theta <= -1``."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    vals = np.zeros((depth + 1, x.size), dtype=complex)
    vals[-1] = x
    return HistorySegment(gamma, vals)


def lift_norm(vec, d: int) -> float:
    """Segment norm of a lifted vector (max over ``d``-blocks of the block 2-norm)."""
    v = np.asarray(vec).reshape(-1, d)
    return float(np.max(np.linalg.norm(v, axis=1)))


def lift_operator_norm(mat, d: int) -> float:
    """Bound on the operator norm of a lifted matrix w.r.t. :func:`lift_norm`.

    Returns ``max_i sum_j |M_ij|_2`` over the ``d x d`` blocks, which is the
    exact induced norm when ``d == 1`` or the lift has a single block, and an
    upper bound otherwise. The bound is submultiplicative.
    """
    m = np.asarray(mat)
    nb_r, nb_c = m.shape[0] // d, m.shape[1] // d
    if nb_r == 0 or nb_c == 0:
        return 0.0
    if d == 1:
        return float(np.max(np.sum(np.abs(m), axis=1)))
    if nb_r == 1 and nb_c == 1:
        return float(np.linalg.norm(m, 2))
    blocks = m.reshape(nb_r, d, nb_c, d).transpose(0, 2, 1, 3)
    bnorm = np.linalg.norm(blocks, ord=2, axis=(2, 3))
    return float(np.max(np.sum(bnorm, axis=1)))


def segment_to_json(s: Segment) -> list:
    """Entries ordered ``theta = -r..0``, each a list of ``[re, im]`` pairs."""
    return complex_to_json(s.values)


def segment_from_json(obj) -> Segment:
    return Segment(complex_from_json(obj, 2))
