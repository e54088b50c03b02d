"""Characteristic roots of a Volterra kernel inside an annulus.

Roots of ``det Delta`` are counted with the argument principle and isolated by
recursive subdivision. Cells are rectangles in log-polar coordinates
``w = log(lam)``, i.e. annular sectors in the ``lam`` plane. The whole
annulus is the cell ``[log r_in, log R] x [alpha - pi, alpha + pi]``. Its two
radial edges coincide as point sets, so their contributions cancel and the
winding number equals the count between the two circles. Isolated cells are
polished by multiplicity-aware Newton steps on ``det Delta``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from dshadow.errors import DomainError, NumericError
from dshadow.volterra.kernel import VolterraKernel, char_derivative, char_det, char_matrix

__all__ = ["Spectrum", "find_roots", "default_annulus", "winding_number"]

CIRCLE_TOL = 1e-8
# irrational-ish offsets keep cell edges away from roots on the real axis
_ANGLE_OFFSET = 0.1234567
_SPLITS = (0.5 + 0.0371, 0.5 - 0.0583, 0.5 + 0.1127, 0.5 - 0.1419)
_SUB_GRID = 2048


@dataclass(frozen=True)
class Spectrum:
    """Roots of ``det Delta`` found in an annulus.

    Attributes
    ----------
    roots : tuple of (complex, int)
        Roots with multiplicities, sorted by decreasing modulus.
    annulus : (float, float)
        Inner and outer radius of the searched annulus.
    residuals : tuple of float
        ``|det Delta(lam)|`` at each root after polishing.
    total_count : int
        Winding number of the whole annulus (equals the sum of multiplicities).
    grid : int
        Boundary sample count at which the full-annulus count stabilised.
    circle_tol : float
        Roots with ``||lam| - 1| <= circle_tol`` are flagged as on the circle.
    """

    roots: tuple
    annulus: tuple
    residuals: tuple
    total_count: int
    grid: int
    circle_tol: float = CIRCLE_TOL

    @property
    def cu_roots(self) -> list:
        """Roots with ``|lam| >= 1`` (on-circle roots included)."""
        return [(lam, m) for lam, m in self.roots if abs(lam) >= 1 - self.circle_tol]

    @property
    def on_circle(self) -> list:
        return [(lam, m) for lam, m in self.roots if abs(abs(lam) - 1) <= self.circle_tol]

    @property
    def hyperbolic(self) -> bool:
        return not self.on_circle

    @property
    def cu_dimension(self) -> int:
        return sum(m for _, m in self.cu_roots)

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)

    def to_json(self) -> dict:
        return {
            "roots": [
                {"re": lam.real, "im": lam.imag, "abs": abs(lam), "multiplicity": m, "on_circle": abs(abs(lam) - 1) <= self.circle_tol}
                for lam, m in self.roots
            ],
            "annulus": list(self.annulus),
            "residuals": list(self.residuals),
            "total_count": self.total_count,
            "grid": self.grid,
            "cu_dimension": self.cu_dimension,
            "hyperbolic": self.hyperbolic,
        }


def default_annulus(k: VolterraKernel) -> tuple:
    """``(r_in, R)`` with ``r_in`` strictly between ``e^-gamma`` and 1 and ``R = 1 + weighted_sum``."""
    eg = np.exp(-k.gamma)
    r_in = max(min(1.05 * eg, 0.5 * (1 + eg)), 1e-3)
    return r_in, 1.0 + k.weighted_sum


def _boundary(u0, u1, v0, v1, n):
    """Closed polygon (counter-clockwise) around the cell, ``n`` points per edge."""
    t = np.arange(n) / n
    bottom = (u0 + (u1 - u0) * t) + 1j * v0
    right = u1 + 1j * (v0 + (v1 - v0) * t)
    top = (u1 - (u1 - u0) * t) + 1j * v1
    left = u0 + 1j * (v1 - (v1 - v0) * t)
    w = np.concatenate([bottom, right, top, left])
    return np.exp(w)


def winding_number(k: VolterraKernel, cell, n: int):
    """Winding number of ``det Delta`` around ``cell`` sampled with ``n`` points per edge.

    Returns ``(count, max_jump, min_abs)`` where ``max_jump`` is the largest
    argument increment between neighbouring samples (a resolution check) and
    ``min_abs`` the smallest ``|det Delta|`` on the boundary.
    """
    lam = _boundary(*cell, n)
    f = char_det(k, lam)
    ratio = np.roll(f, -1) / f
    steps = np.angle(ratio)
    total = np.sum(steps) / (2 * np.pi)
    return int(round(total)), float(np.max(np.abs(steps))), float(np.min(np.abs(f)))


def _stable_count(k, cell, grid, max_grid):
    """Count roots in ``cell``, doubling the sampling until two refinements agree."""
    n = grid
    prev = None
    agree = 0
    while n <= max_grid:
        c, jump, fmin = winding_number(k, cell, n)
        if not np.isfinite(fmin) or fmin == 0.0:
            raise NumericError("det Delta vanishes on a contour; root lies on a cell edge")
        resolved = jump < np.pi / 3
        if resolved and c == prev:
            agree += 1
            if agree >= 2:
                return c, n
        else:
            agree = 0
        prev = c if resolved else None
        n *= 2
    raise NumericError(f"winding count not stable up to {max_grid} samples per edge; use a finer grid")


def _newton(k, lam, mult, tol, maxit=60):
    """Newton iteration ``lam -= m / tr(Delta^{-1} Delta')`` for a root of multiplicity ``m``."""
    floor = np.exp(-k.gamma)
    for _ in range(maxit):
        if abs(lam) <= floor:
            return np.nan
        M = char_matrix(k, lam)
        if np.abs(np.linalg.det(M)) == 0.0:
            return lam
        try:
            t = np.trace(np.linalg.solve(M, char_derivative(k, lam)))
        except np.linalg.LinAlgError:
            return lam
        if t == 0:
            return lam
        step = mult / t
        lam = lam - step
        if abs(step) <= 4e-16 * max(1.0, abs(lam)):
            break
    return lam


def _cell_radius(cell):
    u0, u1, v0, v1 = cell
    r = np.exp(u1)
    return max(r - np.exp(u0), r * (v1 - v0))


def _contains(cell, lam, slack=0.0):
    u0, u1, v0, v1 = cell
    if lam == 0:
        return False
    w = np.log(lam)
    du, dv = (u1 - u0) * slack, (v1 - v0) * slack
    v = w.imag
    # bring the angle into the cell's branch
    while v < v0 - dv:
        v += 2 * np.pi
    while v > v1 + dv:
        v -= 2 * np.pi
    return (u0 - du <= w.real <= u1 + du) and (v0 - dv <= v <= v1 + dv)


def _split(cell, ratio):
    u0, u1, v0, v1 = cell
    r = np.exp(u1)
    radial = r - np.exp(u0)
    angular = r * (v1 - v0)
    if radial >= angular:
        um = u0 + ratio * (u1 - u0)
        return [(u0, um, v0, v1), (um, u1, v0, v1)]
    vm = v0 + ratio * (v1 - v0)
    return [(u0, u1, v0, vm), (u0, u1, vm, v1)]


def _isolate(k, cell, count, grid, max_grid, tol, depth=0, pool=None):
    """Return a list of ``(lam, mult)`` for the ``count`` roots inside ``cell``."""
    if count == 0:
        return []
    size = _cell_radius(cell)
    u0, u1, v0, v1 = cell
    center = np.exp(0.5 * (u0 + u1) + 0.5j * (v0 + v1))
    scale = max(1.0, abs(center))
    if count == 1 or size <= 1e-6 * scale or depth > 200:
        lam = _newton(k, center, count, tol)
        if np.isfinite(lam) and _contains(cell, lam, slack=1e-9) and abs(char_det(k, lam)) <= max(tol, 1e3 * np.finfo(float).eps * scale):
            return [(complex(lam), count)]
        if size <= 1e-12 * scale or depth > 200:
            # cluster that Newton cannot separate: report its centre
            keep = np.isfinite(lam) and _contains(cell, lam, 1e-9)
            return [(complex(lam if keep else center), count)]
    last = None
    for ratio in _SPLITS:
        try:
            parts = _split(cell, ratio)
            # sub-cells fail fast so that a split through a root is retried cheaply
            counts = [_stable_count(k, p, grid, min(max_grid, _SUB_GRID))[0] for p in parts]
        except NumericError as exc:
            last = exc
            continue
        if sum(counts) != count or min(counts) < 0:
            last = NumericError(f"sub-cell counts {counts} do not add up to {count}")
            continue
        jobs = [(p, c) for p, c in zip(parts, counts) if c > 0]
        if pool is not None and len(jobs) > 1:
            found = pool.map(lambda pc: _isolate(k, pc[0], pc[1], grid, max_grid, tol, depth + 1), jobs)
        else:
            found = [_isolate(k, p, c, grid, max_grid, tol, depth + 1) for p, c in jobs]
        return [root for part in found for root in part]
    raise last


def _snap_real(k, lam):
    """Drop a roundoff-level imaginary part when the real point is at least as good."""
    lam = complex(lam)
    if lam.imag != 0 and abs(lam.imag) <= 1e-14 * abs(lam):
        re = complex(lam.real)
        if abs(char_det(k, re)) <= abs(char_det(k, lam)):
            return re
    return lam


def find_roots(
    k: VolterraKernel,
    annulus=None,
    grid: int = 64,
    tol: float = 1e-10,
    circle_tol: float = CIRCLE_TOL,
    max_grid: int = 1 << 14,
    threads: int | None = None,
) -> Spectrum:
    """Locate every root of ``det Delta`` in an annulus.

    Parameters
    ----------
    k : VolterraKernel
    annulus : (float, float), optional
        ``(r_in, R)``; ``r_in`` must exceed ``e^-gamma``. Defaults to
        :func:`default_annulus`.
    grid : int
        Initial samples per cell edge; doubled until the count is stable.
    tol : float
        Target for ``|det Delta|`` at polished roots.
    threads : int, optional
        Worker threads for the two halves of the first subdivision.

    Raises
    ------
    DomainError
        If the inner radius does not exceed ``e^-gamma``.
    NumericError
        If counts are not stable under refinement or do not add up.
    """
    r_in, R = default_annulus(k) if annulus is None else annulus
    if not r_in > np.exp(-k.gamma):
        raise DomainError(f"inner radius {r_in} must exceed e^-gamma = {np.exp(-k.gamma):.6g}")
    if not R > r_in:
        raise DomainError(f"outer radius {R} must exceed inner radius {r_in}")
    alpha = _ANGLE_OFFSET
    whole = (np.log(r_in), np.log(R), alpha - np.pi, alpha + np.pi)
    total, used = _stable_count(k, whole, grid, max_grid)
    if total < 0:
        raise NumericError(f"negative root count {total}: det Delta has poles in the annulus")

    if threads and threads > 1 and total > 1:
        with ThreadPoolExecutor(threads) as pool:
            roots = _isolate(k, whole, total, grid, max_grid, tol, pool=pool)
    else:
        roots = _isolate(k, whole, total, grid, max_grid, tol)
    if sum(m for _, m in roots) != total:
        raise NumericError(f"isolated multiplicities {sum(m for _, m in roots)} != winding count {total}")
    roots = [(_snap_real(k, lam), m) for lam, m in roots]
    roots.sort(key=lambda t: (-abs(t[0]), np.angle(t[0])))
    residuals = tuple(float(abs(char_det(k, lam))) for lam, _ in roots)
    return Spectrum(
        roots=tuple((complex(lam), int(m)) for lam, m in roots),
        annulus=(float(r_in), float(R)),
        residuals=residuals,
        total_count=int(total),
        grid=int(used),
        circle_tol=circle_tol,
    )
