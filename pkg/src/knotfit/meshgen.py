"""Curvature-equidistributing knot generation.

The optimal knots of an interpolating spline equidistribute the monitor
density m(x) = (eps + u''(x)^2)^(1/5): the mesh map x(xi) from the uniform
computational coordinate satisfies

    dx/dxi = D / m(x),    x(0) = 0,    x(1) = 1,

where the constant D equals the integral of m over [0,1].  The map is
integrated with an embedded Runge-Kutta 5(4) pair and D is found by
bisection on the right boundary condition.  Monitors with a power-law
blow-up at x = 0 (singular curvature) are started from a small offset
using the local closed-form solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .splines import GAP_FLOOR, KnotVector
from .targets import TargetFunction

__all__ = [
    "MonitorFunction",
    "MeshMap",
    "ShootingError",
    "DEFAULT_MONITOR_EPS",
    "optimal_knots_ode",
    "optimal_knots_xalpha",
    "optimal_knots_for",
    "predicted_uniform_rate_xalpha",
]

# Regularizer defaults per builtin target.  The singular target u3 is
# normally served by the closed-form mesh instead (see optimal_knots_for).
DEFAULT_MONITOR_EPS = {"u1": 0.0, "u2": 0.0, "u3": 0.0, "u4": 1.0, "u5": 1.0}

_MONITOR_EXPONENT = 0.2


class ShootingError(RuntimeError):
    """Boundary-condition bisection failed; carries the last bracket."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True)
class MonitorFunction:
    """Mesh density m(x) = (eps + u''(x)^2)^(1/5)."""

    base: TargetFunction
    epsilon: float = 0.0

    def __call__(self, x):
        d2 = np.asarray(self.base.d2(x), dtype=float)
        return (self.epsilon + d2 * d2) ** _MONITOR_EXPONENT


@dataclass(frozen=True)
class MeshMap:
    """Discrete mesh map: physical coordinates over a computational grid."""

    xi_grid: np.ndarray
    x_values: np.ndarray
    integral_D: float

    def __post_init__(self):
        if np.any(np.diff(self.x_values) <= 0):
            raise ValueError("mesh map must be strictly increasing")


# --- Dormand-Prince 5(4) pair ------------------------------------------------

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (
    5179 / 57600,
    0.0,
    7571 / 16695,
    393 / 640,
    -92097 / 339200,
    187 / 2100,
    1 / 40,
)


def _rk45_solve(
    f: Callable[[float, float], float],
    t0: float,
    y0: float,
    t_out: np.ndarray,
    rtol: float = 1e-10,
    atol: float = 1e-13,
    max_steps: int = 200_000,
):
    """Integrate a scalar ODE, landing exactly on each requested output time.

    Classic embedded 5(4) stepping with PI-free step control; steps are
    clamped so output points are hit without dense interpolation.
    """
    t, y = t0, y0
    out = np.empty(t_out.size)
    next_i = 0
    while next_i < t_out.size and t_out[next_i] <= t0:
        out[next_i] = y0
        next_i += 1
    if next_i >= t_out.size:
        return out
    h = min(1e-3, (t_out[-1] - t0) / 10) or 1e-3
    k = np.empty(7)
    for _ in range(max_steps):
        if next_i >= t_out.size:
            return out
        h = min(h, t_out[-1] - t)
        clipped = False
        if t + h >= t_out[next_i]:
            h = t_out[next_i] - t
            clipped = True
        k[0] = f(t, y)
        for stage in range(1, 7):
            ts = t + h * sum(_DP_A[stage]) if stage < 6 else t + h
            ys = y + h * sum(a * k[j] for j, a in enumerate(_DP_A[stage]))
            k[stage] = f(ts, ys)
        y5 = y + h * sum(b * ki for b, ki in zip(_DP_B5, k))
        y4 = y + h * sum(b * ki for b, ki in zip(_DP_B4, k))
        err = abs(y5 - y4)
        scale = atol + rtol * max(abs(y), abs(y5))
        if not math.isfinite(err):
            h *= 0.25
            continue
        if err <= scale:
            t = t + h
            y = y5
            while next_i < t_out.size and t >= t_out[next_i] - 1e-15:
                out[next_i] = y
                next_i += 1
            grow = 2.0 if err == 0 else min(2.0, 0.9 * (scale / err) ** 0.2)
            h = h * grow if not clipped else max(h, 1e-3 * (t_out[-1] - t0)) * grow
        else:
            h *= max(0.2, 0.9 * (scale / err) ** 0.2)
    raise RuntimeError("ODE step budget exhausted")


# --- monitor classification ---------------------------------------------------


def _classify_origin(m: Callable) -> tuple:
    """Detect power-law behaviour m ~ c*x^(-q) near x = 0.

    Returns (q, c); q > 0 means the monitor blows up, q < 0 that it
    vanishes, q = 0 that it is regular at the origin.
    """
    x1, x2 = 1e-8, 1e-7
    m1, m2 = float(m(np.array([x1]))[0]), float(m(np.array([x2]))[0])
    if not (np.isfinite(m1) and m1 > 0 and np.isfinite(m2) and m2 > 0):
        return 1.0, 0.0  # treated as singular with unknown strength
    q = -(math.log(m2) - math.log(m1)) / (math.log(x2) - math.log(x1))
    if abs(q) < 1e-3:
        q = 0.0
    c = m1 * x1**q
    return q, c


def _estimate_integral(m: Callable, x_lo: float) -> float:
    x = np.linspace(max(x_lo, 1e-9), 1.0, 20001)
    v = np.asarray(m(x), dtype=float)
    v = np.where(np.isfinite(v), v, 0.0)
    return float(np.trapezoid(v, x))


def optimal_knots_ode(
    u: TargetFunction,
    eps: float,
    n: int,
    rtol: float = 1e-10,
    bc_tol: float = 1e-8,
    max_bisect: int = 50,
) -> KnotVector:
    """Equidistributing knots for u via the mesh-map ODE.

    The normalizing constant is bisected until |x(1) - 1| < bc_tol; the
    knots are the map values at the uniform computational nodes i/(n-1).
    """
    mesh = _solve_mesh_map(MonitorFunction(u, eps), n, rtol, bc_tol, max_bisect)
    k = mesh.x_values.copy()
    k[0], k[-1] = 0.0, 1.0
    gaps = np.diff(k)
    floor = min(GAP_FLOOR, 0.9 * gaps.min()) if gaps.min() > 0 else GAP_FLOOR
    return KnotVector(k, gap_floor=floor)


def _solve_mesh_map(
    monitor: MonitorFunction, n: int, rtol: float, bc_tol: float, max_bisect: int
) -> MeshMap:
    if n < 2:
        raise ValueError("need at least two knots")
    xi = np.arange(n) / (n - 1)

    q, c_loc = _classify_origin(monitor)
    singular = q >= 1e-3

    # A relative floor keeps dx/dxi finite where the monitor vanishes
    # (e.g. zero curvature at isolated points); the clamped region is
    # vanishingly thin so the mesh is unaffected at reporting precision.
    sample = np.asarray(monitor(np.linspace(1e-6, 1.0, 4097)), dtype=float)
    peak = float(np.max(sample[np.isfinite(sample)], initial=0.0))
    if peak == 0.0:
        return MeshMap(xi_grid=xi, x_values=xi.copy(), integral_D=0.0)
    m_floor = 1e-6 * peak

    def m_eval(x: float) -> float:
        v = float(monitor(np.array([max(x, 1e-300)]))[0])
        if not math.isfinite(v):
            v = 1e300
        return max(v, m_floor)

    if singular:
        delta = 1e-6
        # Local solution for m = c x^(-q):  x(xi) = ((1-q) D xi / c)^(1/(1-q)).
        if q >= 1.0 or c_loc <= 0:
            raise ShootingError(
                f"monitor blow-up x^(-{q:.3g}) at the origin is not integrable"
            )
        f_delta = c_loc * delta ** (1.0 - q) / (1.0 - q)  # integral of m on [0, delta]
        x_start = delta
    else:
        f_delta = 0.0
        x_start = 0.0

    d_est = _estimate_integral(monitor, x_start) + f_delta
    lo, hi = 0.25 * d_est, 2.5 * d_est

    def end_value(d: float) -> tuple:
        xi_start = f_delta / d if singular else 0.0
        targets = xi[xi > xi_start + 1e-15]
        if targets.size == 0:
            targets = np.array([1.0])
        vals = _rk45_solve(
            lambda t, x: d / m_eval(x),
            xi_start,
            x_start,
            targets,
            rtol=rtol,
        )
        return float(vals[-1]), targets, vals, xi_start

    # Expand the bracket until x(1) straddles 1.
    for _ in range(60):
        if end_value(lo)[0] < 1.0:
            break
        lo *= 0.5
    for _ in range(60):
        if end_value(hi)[0] > 1.0:
            break
        hi *= 2.0

    d = d_est
    for _ in range(max_bisect):
        d = 0.5 * (lo + hi)
        x_end, targets, vals, xi_start = end_value(d)
        if abs(x_end - 1.0) < bc_tol:
            break
        if x_end > 1.0:
            hi = d
        else:
            lo = d
    else:
        raise ShootingError(
            f"boundary shooting did not converge in {max_bisect} bisections",
            bracket=(lo, hi),
        )

    x = np.empty(n)
    filled = xi > xi_start + 1e-15
    x[filled] = vals
    if singular:
        # Knots inside the patch region come from the local closed form.
        local = ~filled
        x[local] = ((1.0 - q) * d * xi[local] / c_loc) ** (1.0 / (1.0 - q))
    else:
        x[0] = 0.0
    x[-1] = 1.0
    return MeshMap(xi_grid=xi, x_values=x, integral_D=d)


def optimal_knots_xalpha(alpha: float, n: int) -> tuple:
    """Closed-form equidistributing mesh for the target x^alpha.

    Returns the knot vector k_i = (i/(n-1))^(5/(2 alpha + 1)) together with
    the fifth power of the normalizing constant,
    D^5 = alpha^2 (1-alpha)^2 (5/(2 alpha + 1))^5.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    expo = 5.0 / (2.0 * alpha + 1.0)
    k = (np.arange(n) / (n - 1)) ** expo
    k[0], k[-1] = 0.0, 1.0
    d5 = alpha**2 * (1.0 - alpha) ** 2 * expo**5
    gaps = np.diff(k)
    floor = min(GAP_FLOOR, 0.9 * gaps.min())
    return KnotVector(k, gap_floor=floor), float(d5)


def predicted_uniform_rate_xalpha(alpha: float) -> float:
    """Log-log slope -(1 + 2 alpha) of the uniform-mesh interpolant error."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return -(1.0 + 2.0 * alpha)


def optimal_knots_for(u: TargetFunction, n: int, eps: Optional[float] = None) -> KnotVector:
    """Equidistributing mesh for a builtin target.

    u3 is served by its closed form (the epsilon = 0 monitor is singular at
    the origin); everything else integrates the mesh-map ODE with the
    per-target default regularizer.
    """
    if u.id == "u3" and (eps is None or eps == 0.0):
        kv, _ = optimal_knots_xalpha(2.0 / 3.0, n)
        return kv
    if eps is None:
        eps = DEFAULT_MONITOR_EPS.get(u.id, 1.0)
    return optimal_knots_ode(u, eps, n)
