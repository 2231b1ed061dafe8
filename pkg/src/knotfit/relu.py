"""Shallow ReLU models in breakpoint form and exact maps to/from splines.

The canonical form keeps ordered breakpoints inside [0,1] (shared with the
spline knot vector), one slope scaling per breakpoint except the last, and
an explicit left-edge term ``left_coef * max(k1 - x, 0) / k1`` carrying the
value at x = 0:

    y(x) = left_coef * max(k1 - x, 0)/k1 + sum_i c_i * max(x - k_i, 0)

With this normalization the spline-to-ReLU coefficient map is a tridiagonal
linear operator in the nodal weights, and its inverse is a Thomas solve.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .splines import GAP_FLOOR, FksModel, KnotVector, TridiagMatrix, thomas_solve

__all__ = [
    "ReluModel",
    "RawShallowNet",
    "breakpoints_of",
    "relu_eval",
    "fks_to_relu",
    "relu_to_fks",
    "from_raw",
    "knot_map_coefficients",
    "t_matrix",
]


@dataclass(frozen=True)
class ReluModel:
    """Canonical shallow ReLU network on [0,1].

    ``scalings`` has one entry per breakpoint k_0 .. k_{N-2}; the final knot
    k_{N-1} = 1 carries no unit because max(x - 1, 0) vanishes on the domain.
    """

    knots: KnotVector
    scalings: np.ndarray
    left_coef: float

    def __post_init__(self):
        c = np.asarray(self.scalings, dtype=float)
        object.__setattr__(self, "scalings", c)
        if c.shape != (self.knots.n - 1,):
            raise ValueError("scalings length must be one less than the knot count")

    def __call__(self, x):
        return relu_eval(self, x)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# left_coef={float(self.left_coef)!r}\n")
        buf.write("i,k,c\n")
        for i, (k, c) in enumerate(zip(self.knots.values[:-1], self.scalings)):
            buf.write(f"{i},{float(k)!r},{float(c)!r}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "ReluModel":
        lines = [ln for ln in text.strip().splitlines() if ln]
        left = float(lines[0].split("=", 1)[1])
        rows = lines[2:]
        k = np.array([float(r.split(",")[1]) for r in rows] + [1.0])
        c = np.array([float(r.split(",")[2]) for r in rows])
        return ReluModel(KnotVector(k), c, left)


@dataclass(frozen=True)
class RawShallowNet:
    """Width-W one-hidden-layer net: sum_i c_out[i]*relu(a[i]*x + b[i]) + bias."""

    a: np.ndarray
    b: np.ndarray
    c_out: np.ndarray
    bias_out: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "c_out"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.a.shape == self.b.shape == self.c_out.shape) or self.a.size < 1:
            raise ValueError("a, b, c_out must share a nonempty shape")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pre = self.a[:, None] * x[None, :] + self.b[:, None]
        return self.c_out @ np.maximum(pre, 0.0) + self.bias_out


def breakpoints_of(raw: RawShallowNet) -> List[Tuple[float, bool]]:
    """Breakpoints -b/a of each unit with nonzero slope, flagged in-domain."""
    out = []
    for ai, bi in zip(raw.a, raw.b):
        if ai == 0.0:
            continue
        k = -bi / ai
        out.append((float(k), bool(0.0 <= k <= 1.0)))
    return out


def relu_eval(model: ReluModel, x) -> np.ndarray:
    """Evaluate the canonical network; piecewise linear and continuous."""
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    xv = np.atleast_1d(arr)
    k = model.knots.values
    c = model.scalings
    # Unit i is active on cells >= i, so within cell j the slope part is
    # x * sum(c[:j+1]) - sum(c[:j+1] * k[:j+1]).
    csum = np.cumsum(c)
    cksum = np.cumsum(c * k[:-1])
    idx = np.clip(np.searchsorted(k, xv, side="right") - 1, 0, k.size - 2)
    y = xv * csum[idx] - cksum[idx]
    k1 = k[1]
    y = y + model.left_coef * np.maximum(k1 - xv, 0.0) / k1
    return float(y[0]) if scalar else y


def knot_map_coefficients(kv: KnotVector):
    """Per-interior-knot coefficients (alpha_i, beta_i, gamma_i), i = 1..N-2.

    alpha_i = 1/(k_i - k_{i-1}), gamma_i = 1/(k_{i+1} - k_i) and
    beta_i = alpha_i + gamma_i; the row identity alpha - beta + gamma = 0
    makes the weight-to-scaling operator nearly singular.
    """
    g = kv.gaps()
    alpha = 1.0 / g[:-1]
    gamma = 1.0 / g[1:]
    return alpha, alpha + gamma, gamma


def t_matrix(kv: KnotVector) -> TridiagMatrix:
    """Tridiagonal operator mapping interior weights to scalings c_1..c_{N-2}."""
    alpha, beta, gamma = knot_map_coefficients(kv)
    off = gamma[:-1].copy()  # gamma_i == alpha_{i+1}: the matrix is symmetric
    return TridiagMatrix(lower=off, diag=-beta, upper=off.copy())


def fks_to_relu(model: FksModel) -> ReluModel:
    """Exact change of representation from nodal weights to ReLU scalings."""
    k = model.knots.values
    w = model.weights
    g = np.diff(k)
    n = k.size
    c = np.empty(n - 1)
    c[0] = w[1] / g[0]
    if n >= 3:
        slopes = np.diff(w) / g
        c[1:] = np.diff(slopes)
        # The hat at knot 0 is the left-edge term, so w_0 does not feed c_1.
        c[1] -= w[0] / g[0]
    return ReluModel(model.knots, c, float(w[0]))


def relu_to_fks(model: ReluModel) -> FksModel:
    """Invert fks_to_relu via a Thomas solve on the interior tridiagonal map.

    The last weight enters the map only through the final scaling, so it is
    treated as the unknown of a one-parameter family: solve for two right
    hand sides, then pin the family using c_0 = w_1/(k_1 - k_0).
    """
    k = model.knots.values
    c = model.scalings
    n = k.size
    g = np.diff(k)
    w = np.empty(n)
    w[0] = model.left_coef
    if n == 2:
        w[1] = c[0] * g[0]
        return FksModel(model.knots, w)

    tri = t_matrix(model.knots)
    gamma_last = 1.0 / g[-1]

    def solve(rhs):
        x = thomas_solve(tri, rhs)
        # One refinement pass: keeps the w<->c roundtrip at the 1e-13 level
        # even for graded meshes at N in the hundreds.
        return x + thomas_solve(tri, rhs - tri.matvec(x))

    p = solve(c[1:])
    e = np.zeros(n - 2)
    e[-1] = gamma_last
    q = solve(e)
    if q[0] == 0.0:
        raise np.linalg.LinAlgError("degenerate knot map: cannot pin the last weight")
    w1 = c[0] * g[0]
    w_last = (p[0] - w1) / q[0]
    w[1:-1] = p - w_last * q
    w[-1] = w_last
    return FksModel(model.knots, w)


def from_raw(raw: RawShallowNet, gap_floor: float = GAP_FLOOR) -> ReluModel:
    """Canonicalize a raw net: exact on [0,1] for any raw parameterization.

    The raw function restricted to [0,1] is piecewise linear with kinks only
    at in-domain breakpoints (out-of-domain units act affinely there), so
    sampling it at {0, in-domain breakpoints, 1} and converting the nodal
    form reproduces it exactly.
    """
    bps = sorted(k for k, inside in breakpoints_of(raw) if inside)
    knots = [0.0]
    for k in bps:
        if k - knots[-1] >= gap_floor and k <= 1.0 - gap_floor:
            knots.append(k)
    knots.append(1.0)
    kv = KnotVector(np.array(knots), gap_floor=gap_floor)
    nodal = FksModel(kv, raw(kv.values))
    return fks_to_relu(nodal)
