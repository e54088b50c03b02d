"""Nonautonomous linear difference equations with finite delay.

The equation ``x(n+1) = sum_{j=0}^r A_j(n) x(n-j)`` is written in functional
form ``x(n+1) = L_n(x_n)`` on segments ``x_n(theta) = x(n+theta)``. On the lift
``C^{d(r+1)}`` (see :mod:`dshadow.phase_space`) one step is the block
companion matrix::

    [A_0(n) A_1(n) ... A_r(n)]
    [  I      0    ...   0   ]
    [  0      I    ...   0   ]
    [           ...          ]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dshadow._io import complex_from_json, complex_to_json, csv_text, split_complex, vector_columns
from dshadow.errors import DimensionError, DomainError, ValidationError
from dshadow.phase_space import Segment, lift_operator_norm

__all__ = [
    "FiniteDelaySystem",
    "ForcingSequence",
    "Orbit",
    "PseudoOrbit",
    "apply_functional",
    "step_segment",
    "transition_matrix",
    "simulate",
    "simulate_forced",
    "defect",
    "KINDS",
]

KINDS = ("autonomous", "periodic", "tabulated")

#: When true, :func:`transition_matrix` checks the growth bound on every call.
VERIFY_GROWTH = False


@dataclass(frozen=True, eq=False)
class FiniteDelaySystem:
    """Coefficients ``A_j(n)`` of a finite-delay system.

    ``coefficients`` has shape ``(P, r + 1, d, d)``. For ``kind="autonomous"``
    ``P == 1``; for ``"periodic"`` ``P`` is the period and ``A_j(n)`` is
    ``coefficients[n % P, j]``; for ``"tabulated"`` ``P`` is the horizon and
    access at ``n >= P`` is rejected.

    ``bound_K`` is the uniform bound ``|A_j(n)| <= K`` (spectral norm). It is
    computed when omitted and checked against the data when given.
    """

    coefficients: np.ndarray
    kind: str = "autonomous"
    bound_K: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        c = np.array(self.coefficients, dtype=complex)
        if c.ndim != 4 or c.shape[2] != c.shape[3] or c.shape[0] < 1 or c.shape[1] < 1:
            raise DimensionError(f"coefficients must have shape (P, r+1, d, d), got {c.shape}")
        if self.kind == "autonomous" and c.shape[0] != 1:
            raise DimensionError("autonomous systems carry exactly one coefficient set")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        observed = float(np.max(np.linalg.norm(c, ord=2, axis=(2, 3))))
        if self.bound_K is None:
            K = max(1.0, observed)
        else:
            K = float(self.bound_K)
            if K < 1:
                raise ValueError(f"K must be >= 1, got {K}")
            if observed > K * (1 + 1e-12):
                raise ValueError(f"coefficient norm {observed:.6g} exceeds declared bound K={K:.6g}")
        object.__setattr__(self, "bound_K", K)

    # -- constructors ---------------------------------------------------------

    @classmethod
    def autonomous(cls, matrices, K=None) -> "FiniteDelaySystem":
        """System with constant coefficients ``matrices = [A_0, ..., A_r]``."""
        m = _as_matrix_stack(matrices)
        return cls(m[None], "autonomous", K)

    @classmethod
    def periodic(cls, phases, K=None) -> "FiniteDelaySystem":
        """``phases[n] = [A_0(n), ..., A_r(n)]`` for ``n = 0..p-1``."""
        m = np.stack([_as_matrix_stack(ph) for ph in phases])
        return cls(m, "periodic", K)

    @classmethod
    def tabulated(cls, table, K=None) -> "FiniteDelaySystem":
        """``table[n] = [A_0(n), ..., A_r(n)]`` for ``n = 0..N_max-1``."""
        m = np.stack([_as_matrix_stack(ph) for ph in table])
        return cls(m, "tabulated", K)

    @classmethod
    def scalar(cls, *coeffs, K=None) -> "FiniteDelaySystem":
        """Autonomous scalar system ``x(n+1) = sum_j a_j x(n-j)``."""
        return cls.autonomous([[[a]] for a in coeffs], K)

    # -- derived quantities ---------------------------------------------------

    @property
    def dim_d(self) -> int:
        return self.coefficients.shape[2]

    @property
    def delay_r(self) -> int:
        return self.coefficients.shape[1] - 1

    @property
    def lift_dim(self) -> int:
        return self.dim_d * (self.delay_r + 1)

    @property
    def period(self) -> int | None:
        """Period of the coefficients (1 when autonomous, None when tabulated)."""
        if self.kind == "tabulated":
            return None
        return self.coefficients.shape[0]

    @property
    def horizon(self) -> int | None:
        return self.coefficients.shape[0] if self.kind == "tabulated" else None

    @property
    def M(self) -> float:
        """Bound ``(r+1) K`` on the norm of the functional ``L_n``."""
        return (self.delay_r + 1) * self.bound_K

    @property
    def omega(self) -> float:
        """Growth exponent ``log(M (1 + r))``."""
        return float(np.log(self.M * (1 + self.delay_r)))

    def coeffs_at(self, n: int) -> np.ndarray:
        """Stack ``[A_0(n), ..., A_r(n)]`` of shape ``(r+1, d, d)``."""
        if n < 0:
            raise DomainError(f"time n={n} is negative")
        P = self.coefficients.shape[0]
        if self.kind == "tabulated":
            if n >= P:
                raise DomainError(f"time n={n} beyond tabulated horizon {P}")
            return self.coefficients[n]
        return self.coefficients[n % P]

    def coeff(self, n: int, j: int) -> np.ndarray:
        if not 0 <= j <= self.delay_r:
            raise IndexError(f"lag j={j} outside [0, {self.delay_r}]")
        return self.coeffs_at(n)[j]

    def companion(self, n: int) -> np.ndarray:
        """One-step lifted matrix ``T(n+1, n)``."""
        d, r = self.dim_d, self.delay_r
        N = self.lift_dim
        C = np.zeros((N, N), dtype=complex)
        C[:d, :] = np.concatenate(list(self.coeffs_at(n)), axis=1)
        if r > 0:
            C[d:, : N - d] = np.eye(N - d)
        return C

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        doc = {"d": self.dim_d, "r": self.delay_r, "kind": self.kind, "K": self.bound_K}
        if self.kind == "autonomous":
            doc["matrices"] = {"A": complex_to_json(self.coefficients[0])}
        else:
            key = "period" if self.kind == "periodic" else "horizon"
            doc["matrices"] = {key: self.coefficients.shape[0], "A": complex_to_json(self.coefficients)}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "FiniteDelaySystem":
        """Build a system from ``{"d", "r", "kind", "matrices": {"A": ...}, "K"}``.

        Raises :class:`ValidationError` listing every missing or inconsistent field.
        """
        problems = []
        if not isinstance(doc, dict):
            raise ValidationError([("system", "must be a JSON object")])
        for key in ("d", "r", "kind", "matrices"):
            if key not in doc:
                problems.append((key, "missing"))
        if problems:
            raise ValidationError(problems)
        d, r, kind = doc["d"], doc["r"], doc["kind"]
        if not isinstance(d, int) or d < 1:
            problems.append(("d", "must be a positive integer"))
        if not isinstance(r, int) or r < 0:
            problems.append(("r", "must be a nonnegative integer"))
        if kind not in KINDS:
            problems.append(("kind", f"must be one of {list(KINDS)}"))
        mats = doc["matrices"]
        if not isinstance(mats, dict) or "A" not in mats:
            problems.append(("matrices.A", "missing"))
        if problems:
            raise ValidationError(problems)
        try:
            if kind == "autonomous":
                A = complex_from_json(mats["A"], 3)[None]
            else:
                A = complex_from_json(mats["A"], 4)
        except ValueError as exc:
            raise ValidationError([("matrices.A", str(exc))]) from None
        if A.shape[1:] != (r + 1, d, d):
            raise ValidationError([("matrices.A", f"shape {A.shape[1:]} does not match (r+1, d, d) = {(r + 1, d, d)}")])
        if kind == "periodic" and mats.get("period", A.shape[0]) != A.shape[0]:
            raise ValidationError([("matrices.period", "does not match the number of phases")])
        try:
            return cls(A, kind, doc.get("K"))
        except ValueError as exc:
            raise ValidationError([("K", str(exc))]) from None


def _as_matrix_stack(mats) -> np.ndarray:
    arrs = [np.atleast_2d(np.asarray(a, dtype=complex)) for a in mats]
    return np.stack(arrs)


@dataclass(frozen=True, eq=False)
class ForcingSequence:
    """Forcing values ``z(n)``, ``n = 0..len-1``; zero beyond the stored range."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise DimensionError(f"forcing must have shape (N, d), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def sup_norm(self) -> float:
        if len(self.values) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim_d(self) -> int:
        return self.values.shape[1]

    def at(self, n: int) -> np.ndarray:
        if 0 <= n < len(self):
            return self.values[n]
        return np.zeros(self.dim_d, dtype=complex)

    @classmethod
    def constant(cls, value, length: int) -> "ForcingSequence":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        return cls(np.tile(value, (length, 1)))

    @classmethod
    def zeros(cls, d: int, length: int) -> "ForcingSequence":
        return cls(np.zeros((length, d), dtype=complex))

    def __add__(self, other: "ForcingSequence") -> "ForcingSequence":
        return ForcingSequence(self.values + other.values)


@dataclass(frozen=True, eq=False)
class Orbit:
    """Sequence ``x(n)`` for ``n = start..start+len-1`` (``start = -r``)."""

    values: np.ndarray
    start: int

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def end(self) -> int:
        """Last time index."""
        return self.start + len(self.values) - 1

    def __len__(self):
        return len(self.values)

    def at(self, n: int) -> np.ndarray:
        i = n - self.start
        if not 0 <= i < len(self.values):
            raise IndexError(f"time {n} outside [{self.start}, {self.end}]")
        return self.values[i]

    def segment(self, n: int, r: int) -> Segment:
        i = n - self.start
        if i - r < 0 or i >= len(self.values):
            raise IndexError(f"segment at time {n} needs x({n - r})..x({n})")
        return Segment(self.values[i - r : i + 1])

    def segment_lifts(self, r: int) -> np.ndarray:
        """Lifted segments ``x_n`` for every ``n`` with a full history, shape ``(K, d(r+1))``."""
        win = np.lib.stride_tricks.sliding_window_view(self.values, r + 1, axis=0)
        # win[k] has shape (d, r+1) with columns x(k..k+r); lift order is newest first
        return win[:, :, ::-1].transpose(0, 2, 1).reshape(win.shape[0], -1)

    def to_csv(self) -> str:
        d = self.values.shape[1]
        rows = [[n] + split_complex(self.values[n - self.start]) for n in range(self.start, self.end + 1)]
        return csv_text(["n"] + vector_columns("x", d), rows)


@dataclass(frozen=True, eq=False)
class PseudoOrbit:
    """A sequence with its one-step residuals against the system."""

    system: FiniteDelaySystem
    orbit: Orbit
    residuals: np.ndarray = field(repr=False)

    @property
    def defect_bound(self) -> float:
        """``sup_n |y(n+1) - L_n(y_n)|``."""
        if len(self.residuals) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.residuals, axis=1)))

    @property
    def values(self) -> np.ndarray:
        return self.orbit.values

    def to_csv(self) -> str:
        return self.orbit.to_csv()


def _check_segment(sys: FiniteDelaySystem, phi: Segment):
    if phi.delay_r != sys.delay_r or phi.dim_d != sys.dim_d:
        raise DimensionError(
            f"segment (r={phi.delay_r}, d={phi.dim_d}) does not match system (r={sys.delay_r}, d={sys.dim_d})"
        )


def apply_functional(sys: FiniteDelaySystem, n: int, phi: Segment) -> np.ndarray:
    """``L_n(phi) = sum_j A_j(n) phi(-j)``."""
    _check_segment(sys, phi)
    lags = phi.values[::-1]
    return np.einsum("jab,jb->a", sys.coeffs_at(n), lags)


def step_segment(sys: FiniteDelaySystem, n: int, phi: Segment) -> Segment:
    """Segment ``x_{n+1}`` of the solution with ``x_n = phi``."""
    head = apply_functional(sys, n, phi)
    return Segment(np.vstack([phi.values[1:], head[None]]))


def transition_matrix(sys: FiniteDelaySystem, n: int, m: int, check_growth: bool | None = None) -> np.ndarray:
    """Lifted matrix of the solution operator ``T(n, m)``, ``n >= m``.

    Built by left-multiplying companion steps without forming them: each step
    computes the new top block row and shifts the others down.
    """
    if n < m:
        raise ValueError(f"transition_matrix needs n >= m, got n={n}, m={m}")
    if m < 0:
        raise DomainError(f"time m={m} is negative")
    d, N = sys.dim_d, sys.lift_dim
    T = np.eye(N, dtype=complex)
    for k in range(m, n):
        T = _companion_apply(sys.coeffs_at(k), T, d)
    if check_growth if check_growth is not None else VERIFY_GROWTH:
        bound = np.exp(sys.omega * (n - m))
        norm = lift_operator_norm(T, d)
        if norm > bound * (1 + 1e-10):
            raise AssertionError(f"|T({n},{m})| = {norm:.6g} exceeds e^(omega(n-m)) = {bound:.6g}")
    return T


def _companion_apply(coeffs: np.ndarray, X: np.ndarray, d: int) -> np.ndarray:
    """``companion @ X`` for a block companion with top row ``coeffs`` (shape (r+1, d, d))."""
    r1 = coeffs.shape[0]
    blocks = X.reshape(r1, d, -1)
    top = np.einsum("jab,jbk->ak", coeffs, blocks)
    return np.concatenate([top, X[: X.shape[0] - d]], axis=0)


def simulate(sys: FiniteDelaySystem, phi0: Segment, steps: int) -> Orbit:
    """Solution ``x(n)``, ``n = -r..steps``, with initial segment ``x_0 = phi0``."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    return _run(sys, phi0, steps, None)


def simulate_forced(sys: FiniteDelaySystem, phi0: Segment, z: ForcingSequence) -> Orbit:
    """Solution of ``x(n+1) = L_n(x_n) + z(n)``, ``n = 0..len(z)-1``."""
    if z.dim_d != sys.dim_d:
        raise DimensionError(f"forcing dimension {z.dim_d} does not match system dimension {sys.dim_d}")
    return _run(sys, phi0, len(z), z.values)


def _run(sys, phi0, steps, forcing):
    _check_segment(sys, phi0)
    r, d = sys.delay_r, sys.dim_d
    x = np.zeros((r + 1 + steps, d), dtype=complex)
    x[: r + 1] = phi0.values
    auto = sys.coeffs_at(0) if sys.kind == "autonomous" else None
    for n in range(steps):
        coeffs = auto if auto is not None else sys.coeffs_at(n)
        i = n + r  # index of x(n)
        lags = x[i - r : i + 1][::-1]
        nxt = np.einsum("jab,jb->a", coeffs, lags)
        if forcing is not None:
            nxt = nxt + forcing[n]
        x[i + 1] = nxt
    return Orbit(x, -r)


def defect(sys: FiniteDelaySystem, y) -> PseudoOrbit:
    """Residuals ``y(n+1) - L_n(y_n)`` of a sequence ``y(n)``, ``n = -r..N``.

    ``y`` is an :class:`Orbit` or an array of shape ``(N + r + 1, d)``.
    """
    r, d = sys.delay_r, sys.dim_d
    orbit = y if isinstance(y, Orbit) else Orbit(np.asarray(y, dtype=complex), -r)
    vals = orbit.values
    if vals.shape[1] != d:
        raise DimensionError(f"sequence dimension {vals.shape[1]} does not match system dimension {d}")
    if orbit.start != -r:
        raise ValueError(f"sequence must start at n=-r={-r}, got {orbit.start}")
    if len(vals) < r + 2:
        raise ValueError(f"sequence needs at least r+2={r + 2} entries, got {len(vals)}")
    N = len(vals) - r - 1
    res = np.empty((N, d), dtype=complex)
    for n in range(N):
        i = n + r
        res[n] = vals[i + 1] - np.einsum("jab,jb->a", sys.coeffs_at(n), vals[i - r : i + 1][::-1])
    res.setflags(write=False)
    return PseudoOrbit(sys, orbit, res)
