"""Convolution kernels with exponential decay and their characteristic function.

A kernel is a matrix sequence ``A(j)``, ``j >= 0``, for the equation

    x(n+1) = sum_{j>=0} A(j) x(n-j).

Two families are supported because for both the weighted sum
``sum_j |A(j)| e^{gamma j}`` can be certified exactly:

* finitely supported kernels ``A(0..J)`` (zero beyond ``J``);
* geometric kernels ``A(j) = C rho^j`` with ``|rho| e^gamma < 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dshadow._io import complex_from_json, complex_to_json
from dshadow.errors import DimensionError, DomainError, ValidationError
from dshadow.finite_delay import FiniteDelaySystem

__all__ = [
    "VolterraKernel",
    "char_matrix",
    "char_derivative",
    "char_det",
    "char_tail_bound",
]


def _ro(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VolterraKernel:
    """Kernel ``A(j)`` with a certified decay rate ``gamma``.

    Use :meth:`finite`, :meth:`geometric` or :meth:`scalar` rather than the
    raw constructor.

    Attributes
    ----------
    gamma : float
        Decay rate; ``sum_j |A(j)| e^{gamma j}`` is finite.
    kind : str
        ``"finite"`` or ``"geometric"``.
    terms : ndarray or None
        ``(J + 1, d, d)`` stack for finite kernels.
    C, rho
        Geometric family parameters (``C`` is ``d x d``).
    gamma_tilde : float
        Adjoint weight, defaults to ``gamma / 2``.
    """

    gamma: float
    kind: str
    terms: np.ndarray | None = None
    C: np.ndarray | None = None
    rho: complex = 0.0
    gamma_tilde: float | None = None
    _wsum: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise DomainError(f"gamma must be a positive finite number, got {self.gamma}")
        object.__setattr__(self, "gamma", float(self.gamma))
        gt = self.gamma / 2 if self.gamma_tilde is None else float(self.gamma_tilde)
        if not 0 < gt < self.gamma:
            raise DomainError(f"gamma_tilde must lie in (0, gamma), got {gt}")
        object.__setattr__(self, "gamma_tilde", gt)
        if self.kind == "finite":
            t = np.array(self.terms, dtype=complex)
            if t.ndim == 1:
                t = t[:, None, None]
            if t.ndim != 3 or t.shape[1] != t.shape[2] or t.shape[0] < 1:
                raise DimensionError(f"finite kernel terms must have shape (J+1, d, d), got {t.shape}")
            if not np.all(np.isfinite(t)):
                raise DomainError("kernel terms must be finite")
            object.__setattr__(self, "terms", _ro(t))
            norms = np.linalg.norm(t, ord=2, axis=(1, 2))
            wsum = float(np.sum(norms * np.exp(self.gamma * np.arange(t.shape[0]))))
        elif self.kind == "geometric":
            C = np.array(self.C, dtype=complex)
            if C.ndim == 0:
                C = C.reshape(1, 1)
            if C.ndim != 2 or C.shape[0] != C.shape[1]:
                raise DimensionError(f"geometric kernel needs a square C, got shape {C.shape}")
            rho = complex(self.rho)
            x = abs(rho) * np.exp(self.gamma)
            if not x < 1:
                raise DomainError(f"|rho| e^gamma = {x:.6g} >= 1: weighted sum diverges")
            object.__setattr__(self, "C", _ro(C))
            object.__setattr__(self, "rho", rho)
            wsum = float(np.linalg.norm(C, 2) / (1 - x))
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        object.__setattr__(self, "_wsum", wsum)

    # -- constructors ----------------------------------------------------
    @classmethod
    def finite(cls, terms, gamma: float, gamma_tilde=None) -> "VolterraKernel":
        return cls(gamma, "finite", terms=terms, gamma_tilde=gamma_tilde)

    @classmethod
    def geometric(cls, C, rho, gamma: float, gamma_tilde=None) -> "VolterraKernel":
        return cls(gamma, "geometric", C=C, rho=rho, gamma_tilde=gamma_tilde)

    @classmethod
    def scalar(cls, *coeffs, gamma: float = 1.0) -> "VolterraKernel":
        """Scalar finite kernel ``A(j) = coeffs[j]``."""
        return cls.finite(np.asarray(coeffs, dtype=complex), gamma)

    # -- basic data --------------------------------------------------------
    @property
    def dim_d(self) -> int:
        return self.terms.shape[1] if self.kind == "finite" else self.C.shape[0]

    @property
    def weighted_sum(self) -> float:
        """``sum_j |A(j)|_2 e^{gamma j}``."""
        return self._wsum

    @property
    def decay_ratio(self) -> float:
        """``|rho| e^gamma`` for geometric kernels, 0 for finite ones."""
        return abs(self.rho) * np.exp(self.gamma) if self.kind == "geometric" else 0.0

    def reach(self, tol: float = 1e-17) -> int:
        """Last index that matters.

        For finite kernels this is ``J``. For geometric kernels it is the
        smallest ``J`` with weighted tail ``sum_{j>J} |A(j)| e^{gamma j}``
        at most ``tol * weighted_sum``.
        """
        if self.kind == "finite":
            return self.terms.shape[0] - 1
        x = self.decay_ratio
        if x == 0 or self._wsum == 0:
            return 0
        # tail after J is wsum * x^{J+1}
        return max(0, int(np.ceil(np.log(tol) / np.log(x))) - 1)

    def tail_weighted_sum(self, J: int) -> float:
        """``sum_{j>J} |A(j)| e^{gamma j}``."""
        if self.kind == "finite":
            t = self.terms[J + 1 :]
            if len(t) == 0:
                return 0.0
            w = np.exp(self.gamma * np.arange(J + 1, self.terms.shape[0]))
            return float(np.sum(np.linalg.norm(t, ord=2, axis=(1, 2)) * w))
        return self._wsum * self.decay_ratio ** (J + 1)

    def term(self, j: int) -> np.ndarray:
        if j < 0:
            raise IndexError(f"kernel index must be >= 0, got {j}")
        if self.kind == "finite":
            if j >= self.terms.shape[0]:
                return np.zeros((self.dim_d, self.dim_d), dtype=complex)
            return self.terms[j]
        return self.C * self.rho**j

    def terms_upto(self, J: int) -> np.ndarray:
        """Stack ``A(0), ..., A(J)`` (zero padded for short finite kernels)."""
        d = self.dim_d
        if self.kind == "finite":
            out = np.zeros((J + 1, d, d), dtype=complex)
            n = min(J + 1, self.terms.shape[0])
            out[:n] = self.terms[:n]
            return out
        return self.C[None, :, :] * (self.rho ** np.arange(J + 1))[:, None, None]

    def as_finite_delay(self, depth: int | None = None) -> FiniteDelaySystem:
        """Finite-delay system keeping ``A(0..depth)`` (default: the reach)."""
        depth = self.reach() if depth is None else depth
        return FiniteDelaySystem.autonomous(self.terms_upto(depth))

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        doc = {"d": self.dim_d, "gamma": self.gamma, "type": self.kind, "gamma_tilde": self.gamma_tilde}
        if self.kind == "finite":
            doc["terms"] = complex_to_json(self.terms)
        else:
            doc["terms"] = {"C": complex_to_json(self.C), "rho": [self.rho.real, self.rho.imag]}
        return doc

    @classmethod
    def from_json(cls, doc) -> "VolterraKernel":
        if not isinstance(doc, dict):
            raise ValidationError([("kernel", "must be an object")])
        missing = [(k, "missing required field") for k in ("d", "gamma", "type", "terms") if k not in doc]
        if missing:
            raise ValidationError(missing)
        kind = doc["type"]
        problems = []
        try:
            if kind == "finite":
                terms = complex_from_json(doc["terms"], 3)
                k = cls.finite(terms, doc["gamma"], doc.get("gamma_tilde"))
            elif kind == "geometric":
                t = doc["terms"]
                if not isinstance(t, dict) or "C" not in t or "rho" not in t:
                    raise ValidationError([("terms", "geometric kernel needs {'C': ..., 'rho': ...}")])
                C = complex_from_json(t["C"], 2)
                rho = complex_from_json(t["rho"], 0)
                k = cls.geometric(C, complex(rho), doc["gamma"], doc.get("gamma_tilde"))
            else:
                raise ValidationError([("type", f"must be 'finite' or 'geometric', got {kind!r}")])
        except ValidationError:
            raise
        except (ValueError, TypeError) as exc:
            problems.append(("terms", str(exc)))
            raise ValidationError(problems) from exc
        if k.dim_d != doc["d"]:
            raise ValidationError([("d", f"declared {doc['d']} but terms have dimension {k.dim_d}")])
        return k


def _check_domain(k: VolterraKernel, lam):
    lam = np.asarray(lam, dtype=complex)
    if np.any(np.abs(lam) <= np.exp(-k.gamma)):
        raise DomainError(f"characteristic function needs |lambda| > e^-gamma = {np.exp(-k.gamma):.6g}")
    return lam


def char_matrix(k: VolterraKernel, lam) -> np.ndarray:
    """``Delta(lam) = lam E - sum_j lam^{-j} A(j)``; broadcasts over an array of ``lam``.

    Geometric kernels use the closed form ``lam E - C lam / (lam - rho)``.
    """
    lam = _check_domain(k, lam)
    d = k.dim_d
    E = np.eye(d)
    lamb = lam[..., None, None]
    if k.kind == "finite":
        J = k.terms.shape[0] - 1
        # Horner in 1/lam
        inv = 1.0 / lamb
        acc = np.broadcast_to(k.terms[J], lam.shape + (d, d)).astype(complex)
        for j in range(J - 1, -1, -1):
            acc = k.terms[j] + inv * acc
        return lamb * E - acc
    return lamb * E - k.C * (lamb / (lamb - k.rho))


def char_derivative(k: VolterraKernel, lam) -> np.ndarray:
    """``Delta'(lam) = E + sum_j j lam^{-j-1} A(j)``."""
    lam = _check_domain(k, lam)
    d = k.dim_d
    E = np.eye(d)
    lamb = lam[..., None, None]
    if k.kind == "finite":
        J = k.terms.shape[0] - 1
        out = np.broadcast_to(E, lam.shape + (d, d)).astype(complex)
        for j in range(1, J + 1):
            out = out + j * lamb ** (-j - 1) * k.terms[j]
        return out
    return E + k.C * (k.rho / (lamb - k.rho) ** 2)


def char_det(k: VolterraKernel, lam) -> np.ndarray:
    """``det Delta(lam)``, broadcasting over ``lam``."""
    return np.linalg.det(char_matrix(k, lam))


def char_tail_bound(k: VolterraKernel, lam, J: int) -> float:
    """Bound on the error of truncating the series for ``Delta(lam)`` after ``A(J)``.

    Returns ``W (q^{J+1}) / (1 - q)`` with ``q = e^{-gamma}/|lam|`` and ``W``
    the weighted sum. The closed-form evaluation in :func:`char_matrix` does
    not truncate; this bound applies to truncated lifts.
    """
    lam = _check_domain(k, lam)
    q = float(np.max(np.exp(-k.gamma) / np.abs(lam)))
    if k.kind == "finite" and J >= k.terms.shape[0] - 1:
        return 0.0
    return k.weighted_sum * q ** (J + 1) / (1 - q)
