"""Condition numbers of the weight and scaling linear problems.

Two tridiagonal operators drive the analysis: the hat-basis Gram matrix M
(well conditioned for any admissible knots) and the weight-to-scaling map T
(nearly singular, with condition number growing like N^2).  For uniform
knots both are Toeplitz and their spectra have closed forms; numeric
eigensolves validate the formulas and cover non-uniform knots.

Uniform-knot convention: the N x N form of M used here extends the two
endpoint rows by reflection (row span 2*(k1-k0) instead of the one-sided
hat), which makes the uniform matrix exactly the constant-diagonal
tridiagonal [1, 4, 1]/(6(N-1)) that the closed-form eigenvalues describe.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .relu import t_matrix
from .splines import KnotVector, TridiagMatrix, thomas_solve, uniform_knots

__all__ = [
    "ConditioningReport",
    "toeplitz_eigs_T",
    "toeplitz_eigs_M",
    "extended_mass_matrix",
    "interior_mass_matrix",
    "numeric_condition",
    "gershgorin_bounds_M",
    "predicted_kappa_mtinv",
    "conditioning_report",
    "reports_to_csv",
]

MAX_DENSE_N = 512


@dataclass(frozen=True)
class ConditioningReport:
    n: int
    kappa_M: float
    kappa_T: float
    kappa_MTinv: float
    predicted_kappa_MTinv: float
    gershgorin_bound_M: float
    method: str  # "closed_form_uniform" or "numeric"


def predicted_kappa_mtinv(n: int) -> float:
    """Large-N growth law 12 N^2 / pi^2 for the preconditioned-map condition."""
    return 12.0 * n * n / math.pi**2


def toeplitz_eigs_T(n_knots: int) -> np.ndarray:
    """Closed-form eigenvalues of the uniform-knot scaling map T.

    T = (N-1) * tridiag(1, -2, 1) acting on the M = N-2 interior weights;
    lambda_k = -2(N-1) + 2(N-1) cos(pi k / (M+1)), all negative.
    """
    m = n_knots - 2
    if m < 1:
        raise ValueError("need at least one interior knot (N >= 3)")
    k = np.arange(1, m + 1)
    return -2.0 * (n_knots - 1) + 2.0 * (n_knots - 1) * np.cos(np.pi * k / (m + 1))


def toeplitz_eigs_M(n_knots: int) -> np.ndarray:
    """Closed-form eigenvalues of the uniform-knot N x N mass matrix.

    6(N-1) mu_k = 4 + 2 cos(pi k / (N+1)); the ratio mu_1/mu_N stays below 3.
    """
    if n_knots < 2:
        raise ValueError("need N >= 2")
    k = np.arange(1, n_knots + 1)
    return (4.0 + 2.0 * np.cos(np.pi * k / (n_knots + 1))) / (6.0 * (n_knots - 1))


def _row_spans(kv: KnotVector) -> np.ndarray:
    """Per-row spans k[i+1]-k[i-1], with reflected ghost knots at the ends."""
    v = kv.values
    spans = np.empty(kv.n)
    spans[0] = 2.0 * (v[1] - v[0])
    spans[-1] = 2.0 * (v[-1] - v[-2])
    if kv.n > 2:
        spans[1:-1] = v[2:] - v[:-2]
    return spans


def extended_mass_matrix(kv: KnotVector) -> TridiagMatrix:
    """N x N mass matrix with reflected endpoint rows (see module docstring)."""
    off = kv.gaps() / 6.0
    return TridiagMatrix(lower=off.copy(), diag=_row_spans(kv) / 3.0, upper=off.copy())


def interior_mass_matrix(kv: KnotVector) -> TridiagMatrix:
    """Gram matrix restricted to interior hats (rows/columns 1 .. N-2)."""
    v = kv.values
    if kv.n < 3:
        raise ValueError("no interior knots")
    diag = (v[2:] - v[:-2]) / 3.0
    off = kv.gaps()[1:-1] / 6.0
    return TridiagMatrix(lower=off.copy(), diag=diag, upper=off.copy())


def gershgorin_bounds_M(kv: KnotVector) -> tuple:
    """Eigenvalue enclosure (min span / 6, max span / 2) for the mass matrix.

    Every Gershgorin disc of row i is contained in [span_i/6, span_i/2], so
    the whole spectrum lies inside the returned interval.
    """
    if kv.n < 3:
        raise ValueError("need N >= 3")
    spans = _row_spans(kv)
    return float(spans.min() / 6.0), float(spans.max() / 2.0)


def _is_uniform(kv: KnotVector, tol: float = 1e-12) -> bool:
    h = 1.0 / (kv.n - 1)
    return bool(np.max(np.abs(kv.gaps() - h)) < tol)


def numeric_condition(kv: KnotVector, which: str, force_dense: bool = False) -> float:
    """Spectral condition number of M, T or M T^{-1} for the given knots.

    Dense eigensolves cap at N = 512.  For uniform knots the M T^{-1} case
    uses the shared-eigenvector ratio mu_k / lambda_k on the interior
    problem; ``force_dense`` switches to the generic singular-value route.
    """
    n = kv.n
    if n < 3:
        raise ValueError("need N >= 3")
    if n > MAX_DENSE_N:
        raise ValueError(f"dense conditioning is capped at N = {MAX_DENSE_N}")
    if which == "M":
        eig = np.linalg.eigvalsh(extended_mass_matrix(kv).dense())
        if eig[0] <= 0:
            raise np.linalg.LinAlgError("mass matrix is numerically singular")
        return float(eig[-1] / eig[0])
    if which == "T":
        eig = np.abs(np.linalg.eigvalsh(t_matrix(kv).dense()))
        if eig.min() == 0:
            raise np.linalg.LinAlgError("scaling map is numerically singular")
        return float(eig.max() / eig.min())
    if which == "MTinv":
        if _is_uniform(kv) and not force_dense:
            m = n - 2
            theta = np.pi * np.arange(1, m + 1) / (m + 1)
            mu = (4.0 + 2.0 * np.cos(theta)) / (6.0 * (n - 1))
            lam = (n - 1) * (-2.0 + 2.0 * np.cos(theta))
            nu = np.abs(mu / lam)
            return float(nu.max() / nu.min())
        tri = t_matrix(kv)
        m_int = interior_mass_matrix(kv).dense()
        cols = np.empty((n - 2, n - 2))
        eye = np.eye(n - 2)
        for j in range(n - 2):
            cols[:, j] = thomas_solve(tri, eye[:, j])
        sv = np.linalg.svd(m_int @ cols, compute_uv=False)
        if sv.min() == 0:
            raise np.linalg.LinAlgError("M T^{-1} is numerically singular")
        return float(sv.max() / sv.min())
    raise ValueError(f"unknown matrix selector {which!r}")


def conditioning_report(n: int, kv: KnotVector = None) -> ConditioningReport:
    """Assemble the per-N condition numbers (uniform knots unless given)."""
    if kv is None:
        kv = uniform_knots(n)
    uniform = _is_uniform(kv)
    lo, hi = gershgorin_bounds_M(kv)
    return ConditioningReport(
        n=n,
        kappa_M=numeric_condition(kv, "M"),
        kappa_T=numeric_condition(kv, "T"),
        kappa_MTinv=numeric_condition(kv, "MTinv"),
        predicted_kappa_MTinv=predicted_kappa_mtinv(n),
        gershgorin_bound_M=hi / lo if lo > 0 else float("inf"),
        method="closed_form_uniform" if uniform else "numeric",
    )


def reports_to_csv(reports: Iterable[ConditioningReport]) -> str:
    buf = io.StringIO()
    buf.write("N,kappa_M,kappa_T,kappa_MTinv,predicted\n")
    for r in reports:
        buf.write(
            f"{r.n},{r.kappa_M!r},{r.kappa_T!r},{r.kappa_MTinv!r},"
            f"{r.predicted_kappa_MTinv!r}\n"
        )
    return buf.getvalue()
