"""Knot vectors, linear-spline (hat) bases and free-knot spline models.

A free-knot spline is stored in nodal form: a strictly increasing knot
vector with pinned endpoints 0 and 1, and one weight per knot.  Evaluation
is exact piecewise-linear interpolation of the weights.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .targets import TargetFunction

__all__ = [
    "GAP_FLOOR",
    "KnotVector",
    "FksModel",
    "TridiagMatrix",
    "DegenerateNormalMatrixError",
    "uniform_knots",
    "basis_eval",
    "fks_eval",
    "interpolating_fks",
    "assemble_mass_matrix",
    "solve_fixed_knot_least_squares",
    "thomas_solve",
    "project_interior_knots",
]

# Smallest admissible distance between neighbouring knots.
GAP_FLOOR = 1e-8


class DegenerateNormalMatrixError(RuntimeError):
    """Raised when a least-squares cell contains no quadrature point."""


@dataclass(frozen=True)
class KnotVector:
    """Strictly increasing knots on [0,1] with k[0]=0 and k[-1]=1."""

    values: np.ndarray
    gap_floor: float = GAP_FLOOR

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a knot vector needs at least two knots")
        if v[0] != 0.0 or v[-1] != 1.0:
            raise ValueError("knot vector endpoints must be exactly 0 and 1")
        gaps = np.diff(v)
        # Tiny relative slack absorbs the rounding of prev + gap_floor when
        # the ordering projector places knots exactly one floor apart.
        if np.any(gaps < self.gap_floor * (1.0 - 1e-6)):
            raise ValueError(
                f"knot gaps fall below the floor {self.gap_floor:g} "
                f"(min gap {gaps.min():g})"
            )

    def __len__(self):
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def gaps(self) -> np.ndarray:
        return np.diff(self.values)


def uniform_knots(n: int) -> KnotVector:
    v = np.linspace(0.0, 1.0, n)
    v[0], v[-1] = 0.0, 1.0
    return KnotVector(v)


def project_interior_knots(interior, gap_floor: float = GAP_FLOOR) -> np.ndarray:
    """Sort and minimally shift interior knots so the full vector is valid.

    Used after unconstrained optimizer steps.  Returns a new array; the
    caller prepends 0 and appends 1.
    """
    k = np.sort(np.asarray(interior, dtype=float))
    m = k.size
    if m == 0:
        return k
    k = np.clip(k, gap_floor, 1.0 - gap_floor)
    prev = 0.0
    for j in range(m):
        if k[j] < prev + gap_floor:
            k[j] = prev + gap_floor
        prev = k[j]
    # Forward pass can pile knots against 1; sweep back if needed.
    if k[-1] > 1.0 - gap_floor:
        nxt = 1.0
        for j in range(m - 1, -1, -1):
            if k[j] > nxt - gap_floor:
                k[j] = nxt - gap_floor
            nxt = k[j]
    return k


@dataclass(frozen=True)
class FksModel:
    """Free-knot spline: knots plus one nodal weight per knot."""

    knots: KnotVector
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.shape != (self.knots.n,):
            raise ValueError("weights length must equal the knot count")

    def __call__(self, x):
        return fks_eval(self, x)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,k,w\n")
        for i, (k, w) in enumerate(zip(self.knots.values, self.weights)):
            buf.write(f"{i},{float(k)!r},{float(w)!r}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "FksModel":
        rows = [ln for ln in text.strip().splitlines()[1:] if ln]
        k = np.array([float(r.split(",")[1]) for r in rows])
        w = np.array([float(r.split(",")[2]) for r in rows])
        return FksModel(KnotVector(k), w)


@dataclass(frozen=True)
class TridiagMatrix:
    """Symmetric-storage tridiagonal matrix (lower, diag, upper bands)."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n = self.diag.size
        if self.lower.size != n - 1 or self.upper.size != n - 1:
            raise ValueError("band lengths inconsistent with dimension")

    @property
    def dim(self) -> int:
        return self.diag.size

    def dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        a += np.diag(self.lower, -1)
        a += np.diag(self.upper, 1)
        return a

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.lower * x[:-1]
        y[:-1] += self.upper * x[1:]
        return y


def thomas_solve(tri: TridiagMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve the tridiagonal system tri @ x = rhs by forward elimination.

    O(n); no pivoting, which is safe for the diagonally dominant systems
    assembled in this package.
    """
    n = tri.dim
    d = tri.diag
    lo = tri.lower
    up = tri.upper
    cp = np.empty(n - 1) if n > 1 else np.empty(0)
    dp = np.empty(n)
    m = d[0]
    if m == 0.0:
        raise np.linalg.LinAlgError("singular tridiagonal system")
    dp[0] = rhs[0] / m
    if n > 1:
        cp[0] = up[0] / m
    for i in range(1, n):
        m = d[i] - lo[i - 1] * cp[i - 1]
        if m == 0.0:
            raise np.linalg.LinAlgError("singular tridiagonal system")
        dp[i] = (rhs[i] - lo[i - 1] * dp[i - 1]) / m
        if i < n - 1:
            cp[i] = up[i] / m
    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def basis_eval(kv: KnotVector, i: int, x) -> np.ndarray:
    """Hat function i: 1 at knot i, 0 at every other knot, linear between."""
    if not 0 <= i < kv.n:
        raise IndexError(f"basis index {i} out of range for {kv.n} knots")
    e = np.zeros(kv.n)
    e[i] = 1.0
    return np.interp(x, kv.values, e)


def fks_eval(model: FksModel, x) -> np.ndarray:
    """Evaluate the spline at x: exact nodal interpolation of the weights."""
    return np.interp(x, model.knots.values, model.weights)


def interpolating_fks(kv: KnotVector, u: TargetFunction) -> FksModel:
    """The interpolant of u on kv: weights are the target values at the knots."""
    return FksModel(kv, np.asarray(u.f(kv.values), dtype=float))


def assemble_mass_matrix(kv: KnotVector) -> TridiagMatrix:
    """Gram matrix <phi_i, phi_j> of the hat basis under the L2 inner product.

    Interior rows have diagonal (k[i+1]-k[i-1])/3 and off-diagonals
    (gap)/6; the two endpoint rows integrate the one-sided hats.
    """
    g = kv.gaps()
    diag = np.empty(kv.n)
    diag[0] = g[0] / 3.0
    diag[-1] = g[-1] / 3.0
    if kv.n > 2:
        diag[1:-1] = (kv.values[2:] - kv.values[:-2]) / 3.0
    off = g / 6.0
    return TridiagMatrix(lower=off.copy(), diag=diag, upper=off.copy())


def _cell_index(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(knots, x, side="right") - 1
    return np.clip(idx, 0, knots.size - 2)


def solve_fixed_knot_least_squares(
    kv: KnotVector,
    u: TargetFunction,
    s: int = 1000,
    points: Optional[np.ndarray] = None,
) -> FksModel:
    """Best weights for fixed knots under the trapezoid-weighted point loss.

    Assembles the tridiagonal normal equations of the discrete squared-error
    loss over ``s`` uniformly spaced quadrature points (hats overlap only
    their neighbours) and solves them with the Thomas algorithm.

    Raises
    ------
    DegenerateNormalMatrixError
        If some knot cell contains no quadrature point; rerun with larger s.
    """
    n = kv.n
    if points is None:
        if s < 4 * n:
            raise ValueError(f"quadrature size s={s} too small; need s >= 4*N = {4*n}")
        x = np.linspace(0.0, 1.0, s)
    else:
        x = np.asarray(points, dtype=float)
    wq = _trapezoid_weights(x)
    idx = _cell_index(kv.values, x)

    counts = np.bincount(idx, minlength=n - 1)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise DegenerateNormalMatrixError(
            f"cell {empty} [{kv.values[empty]:g}, {kv.values[empty+1]:g}] contains "
            f"no quadrature point; increase the quadrature size (s={x.size})"
        )

    gaps = kv.gaps()
    t = (x - kv.values[idx]) / gaps[idx]
    a = 1.0 - t  # hat at the left cell edge
    uq = np.asarray(u.f(x), dtype=float)

    diag = np.bincount(idx, weights=wq * a * a, minlength=n)
    diag += np.bincount(idx + 1, weights=wq * t * t, minlength=n)
    off = np.bincount(idx, weights=wq * a * t, minlength=n - 1)
    rhs = np.bincount(idx, weights=wq * a * uq, minlength=n)
    rhs += np.bincount(idx + 1, weights=wq * t * uq, minlength=n)

    tri = TridiagMatrix(lower=off.copy(), diag=diag, upper=off.copy())
    w = thomas_solve(tri, rhs)
    # One refinement pass keeps the stationarity residual at rounding level.
    w += thomas_solve(tri, rhs - tri.matvec(w))
    return FksModel(kv, w)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w
