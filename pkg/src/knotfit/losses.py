"""Loss functions for spline / ReLU approximants and their analytic gradients.

Three losses are provided: the trapezoid-weighted squared approximation
error over a quadrature grid, the equidistribution loss penalising
variation of the per-cell error density, and their combination

    combined = squared_error + beta * equidistribution.

Gradients are assembled analytically with respect to all free parameters
(nodal weights or ReLU scalings, plus interior knots).  At piecewise-linear
kinks the right-hand derivative is used, with d/dx max(x, 0) = 0 at x = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .relu import ReluModel, relu_eval
from .splines import GAP_FLOOR, FksModel, KnotVector, fks_eval
from .targets import TargetFunction

__all__ = [
    "QuadratureGrid",
    "LossConfig",
    "GradReport",
    "fixed_grid",
    "resampled_grid",
    "trapezoid_weights",
    "model_values",
    "loss_l2",
    "rho_cells",
    "loss_equi",
    "loss_comb",
    "loss_interp_proxy",
    "equi_quality",
    "grad_loss",
    "interpolant_objective",
]

Model = Union[FksModel, ReluModel]


@dataclass(frozen=True)
class QuadratureGrid:
    """Sorted quadrature points on [0,1]."""

    points: np.ndarray
    mode: str = "fixed_uniform"

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", p)
        if p.ndim != 1 or p.size < 2 or np.any(np.diff(p) <= 0):
            raise ValueError("quadrature points must be strictly increasing")
        if self.mode == "fixed_uniform" and (p[0] != 0.0 or p[-1] != 1.0):
            raise ValueError("fixed uniform grids must include both endpoints")

    @property
    def size(self) -> int:
        return self.points.size


def fixed_grid(s: int = 1000) -> QuadratureGrid:
    return QuadratureGrid(np.linspace(0.0, 1.0, s), "fixed_uniform")


def resampled_grid(s: int, rng: np.random.Generator) -> QuadratureGrid:
    pts = np.sort(rng.uniform(0.0, 1.0, s))
    # Strictly increasing with overwhelming probability; nudge ties if any.
    dup = np.flatnonzero(np.diff(pts) <= 0)
    for i in dup:
        pts[i + 1] = np.nextafter(pts[i], 1.0)
    return QuadratureGrid(pts, "resampled_uniform_random")


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.0
    epsilon_sq: float = 0.1
    grid: QuadratureGrid = field(default_factory=fixed_grid)

    def __post_init__(self):
        if self.beta < 0 or self.epsilon_sq < 0:
            raise ValueError("beta and epsilon_sq must be nonnegative")


@dataclass(frozen=True)
class GradReport:
    """Loss value plus gradients for weights/scalings and interior knots."""

    d_weights: np.ndarray
    d_knots: np.ndarray
    loss: float


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Composite-trapezoid weights of a sorted point set."""
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def model_values(model: Model, x) -> np.ndarray:
    if isinstance(model, FksModel):
        return fks_eval(model, x)
    if isinstance(model, ReluModel):
        return relu_eval(model, x)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _knot_array(kv) -> np.ndarray:
    return kv.values if isinstance(kv, KnotVector) else np.asarray(kv, dtype=float)


# ---------------------------------------------------------------------------
# loss values
# ---------------------------------------------------------------------------


def loss_l2(model: Model, u: TargetFunction, grid: QuadratureGrid) -> float:
    """Trapezoid-weighted squared error over the grid; zero iff the model
    matches the target at every grid point."""
    x = grid.points
    e = model_values(model, x) - u.f(x)
    return float(np.sum(trapezoid_weights(x) * e * e))


def _shifted_midpoints(knots: np.ndarray, u: TargetFunction) -> np.ndarray:
    mids = 0.5 * (knots[:-1] + knots[1:])
    for s in u.singular_points:
        hit = np.abs(mids - s) < GAP_FLOOR
        if np.any(hit):
            mids = np.where(hit, s + GAP_FLOOR, mids)
    return mids


def rho_cells(kv, u: TargetFunction, epsilon_sq: float) -> np.ndarray:
    """Per-cell error density rho = gap * (eps^2 + u''(midpoint)^2)^(1/5).

    Midpoints that land on a declared singular point are nudged right by the
    gap floor, so the density is always finite.
    """
    k = _knot_array(kv)
    mids = _shifted_midpoints(k, u)
    d2 = np.asarray(u.d2(mids), dtype=float)
    return np.diff(k) * (epsilon_sq + d2 * d2) ** 0.2


def loss_equi(kv, u: TargetFunction, epsilon_sq: float) -> float:
    """Sum of squared deviations of the cell densities from their mean."""
    rho = rho_cells(kv, u, epsilon_sq)
    return float(np.sum((rho - rho.mean()) ** 2))


def loss_comb(model: Model, u: TargetFunction, cfg: LossConfig) -> float:
    """Squared error plus beta times the equidistribution loss on the model's
    knots; beta = 0 reduces bit-for-bit to the squared error alone."""
    total = loss_l2(model, u, cfg.grid)
    if cfg.beta != 0.0:
        total += cfg.beta * loss_equi(model.knots, u, cfg.epsilon_sq)
    return total


def loss_interp_proxy(kv, u: TargetFunction) -> float:
    """Curvature proxy sum(gap^5 |u''(mid)|^2) / 120 for the interpolant error."""
    k = _knot_array(kv)
    mids = _shifted_midpoints(k, u)
    d2 = np.asarray(u.d2(mids), dtype=float)
    return float(np.sum(np.diff(k) ** 5 * d2 * d2) / 120.0)


def equi_quality(kv, u: TargetFunction, epsilon_sq: float) -> float:
    """max(rho)/mean(rho): 1 for a perfectly equidistributed mesh, else > 1."""
    k = _knot_array(kv)
    if k.size < 3:
        raise ValueError("quality measure needs N >= 3")
    rho = rho_cells(k, u, epsilon_sq)
    return float((k.size - 1) * rho.max() / rho.sum())


# ---------------------------------------------------------------------------
# analytic gradients
# ---------------------------------------------------------------------------


def _d3_central(u: TargetFunction, x: np.ndarray) -> np.ndarray:
    """u''' by central differences of the analytic u''.

    The step shrinks near singular points so the stencil never crosses them.
    """
    h = np.full_like(x, 1e-5)
    for s in u.singular_points:
        h = np.minimum(h, np.maximum(0.49 * np.abs(x - s), 1e-9))
    return (u.d2(x + h) - u.d2(x - h)) / (2.0 * h)


def _equi_value_and_knot_grad(knots: np.ndarray, u: TargetFunction, epsilon_sq: float):
    """Equidistribution loss and its gradient w.r.t. interior knots."""
    gaps = np.diff(knots)
    mids = _shifted_midpoints(knots, u)
    d2 = np.asarray(u.d2(mids), dtype=float)
    base = epsilon_sq + d2 * d2
    fac = base**0.2
    rho = gaps * fac
    dev = rho - rho.mean()
    value = float(np.sum(dev * dev))
    r = 2.0 * dev  # the mean's own derivative cancels against sum(dev) = 0
    safe = base > 0
    dfac = np.zeros_like(fac)
    dfac[safe] = 0.4 * base[safe] ** -0.8 * d2[safe] * _d3_central(u, mids[safe])
    half = 0.5 * gaps * dfac
    full = np.zeros_like(knots)
    full[:-1] += r * (half - fac)  # left edge of each cell
    full[1:] += r * (half + fac)  # right edge
    return value, full[1:-1]


def _fks_l2_grad(knots, weights, u, grid: QuadratureGrid):
    """Squared-error loss and gradients for the nodal representation."""
    x = grid.points
    wq = trapezoid_weights(x)
    n = knots.size
    idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, n - 2)
    gaps = np.diff(knots)
    t = (x - knots[idx]) / gaps[idx]
    a = 1.0 - t
    e = weights[idx] * a + weights[idx + 1] * t - u.f(x)
    loss = float(np.sum(wq * e * e))
    ce = 2.0 * wq * e
    d_w = np.bincount(idx, weights=ce * a, minlength=n)
    d_w += np.bincount(idx + 1, weights=ce * t, minlength=n)
    # Moving knot j reshapes the two adjacent cells: dy/dk_j = -slope * phi_j.
    slopes = np.diff(weights) / gaps
    sum_t = np.bincount(idx, weights=ce * t, minlength=n - 1)
    sum_a = np.bincount(idx, weights=ce * a, minlength=n - 1)
    d_k = np.zeros(n)
    d_k[1:] -= slopes * sum_t
    d_k[:-1] -= slopes * sum_a
    return loss, d_w, d_k[1:-1]


def _relu_l2_grad(knots, scalings, left_coef, u, grid: QuadratureGrid):
    """Squared-error loss and gradients for the breakpoint representation."""
    x = grid.points
    wq = trapezoid_weights(x)
    n = knots.size
    idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, n - 2)
    csum = np.cumsum(scalings)
    cksum = np.cumsum(scalings * knots[:-1])
    k1 = knots[1]
    e = x * csum[idx] - cksum[idx] + left_coef * np.maximum(k1 - x, 0.0) / k1 - u.f(x)
    loss = float(np.sum(wq * e * e))
    ce = 2.0 * wq * e
    # Unit i is active on every cell >= i, so its gradient is a suffix sum.
    p0 = np.bincount(idx, weights=ce, minlength=n - 1)
    p1 = np.bincount(idx, weights=ce * x, minlength=n - 1)
    s0 = np.cumsum(p0[::-1])[::-1]
    s1 = np.cumsum(p1[::-1])[::-1]
    d_c = s1 - knots[:-1] * s0
    in_left = idx == 0
    cel = ce[in_left]
    xl = x[in_left]
    d_left = float(np.sum(cel * (k1 - xl)) / k1)
    d_k = -scalings[1:] * s0[1:]
    if d_k.size:
        d_k[0] += left_coef * float(np.sum(cel * xl)) / (k1 * k1)
    d_weights = np.concatenate([[d_left], d_c])
    return loss, d_weights, d_k


def grad_loss(model: Model, u: TargetFunction, cfg: LossConfig) -> GradReport:
    """Analytic gradient of the combined loss for either representation.

    d_weights covers the nodal weights (spline) or the left-edge coefficient
    followed by the scalings (ReLU); d_knots covers the interior knots.
    """
    knots = model.knots.values
    if isinstance(model, FksModel):
        loss, d_w, d_k = _fks_l2_grad(knots, model.weights, u, cfg.grid)
    elif isinstance(model, ReluModel):
        loss, d_w, d_k = _relu_l2_grad(
            knots, model.scalings, model.left_coef, u, cfg.grid
        )
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    if cfg.beta != 0.0:
        le, d_ke = _equi_value_and_knot_grad(knots, u, cfg.epsilon_sq)
        loss += cfg.beta * le
        d_k = d_k + cfg.beta * d_ke
    return GradReport(d_weights=d_w, d_knots=d_k, loss=loss)


def interpolant_objective(
    u: TargetFunction, cfg: LossConfig
) -> Callable[[np.ndarray], tuple]:
    """Knots-only combined objective for the interpolating spline.

    Returns a callable mapping interior knots to (loss, gradient).  The
    weights track the target values at the knots, so the chain rule adds
    u'(k_j) times the weight gradient to each knot component.
    """

    def objective(interior: np.ndarray):
        knots = np.concatenate([[0.0], interior, [1.0]])
        weights = np.asarray(u.f(knots), dtype=float)
        loss, d_w, d_k = _fks_l2_grad(knots, weights, u, cfg.grid)
        grad = d_k + np.asarray(u.d1(interior), dtype=float) * d_w[1:-1]
        if cfg.beta != 0.0:
            le, d_ke = _equi_value_and_knot_grad(knots, u, cfg.epsilon_sq)
            loss += cfg.beta * le
            grad = grad + cfg.beta * d_ke
        return loss, grad

    return objective
