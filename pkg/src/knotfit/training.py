"""Adam-based training pipelines for spline and ReLU approximants.

Pipelines
---------
standard        joint first-order minimization of the squared error
combined        joint minimization of the combined loss (small beta)
two_level       stage (i): train knots only through the combined loss with
                large beta, starting from uniform knots; stage (ii): freeze
                the knots and obtain the weights, by default through the
                direct tridiagonal least-squares solve
preconditioned  two-level training of a ReLU model in which stage (ii) is
                performed on the equivalent nodal (spline) form, obtained
                and inverted exactly by tridiagonal solves

All pipelines keep the knots strictly ordered: after every optimizer step
the interior knots are re-sorted and minimally shifted to respect the gap
floor, so knots can never cross or leave [0,1].
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from . import relu as relu_mod
from .losses import (
    LossConfig,
    QuadratureGrid,
    fixed_grid,
    grad_loss,
    interpolant_objective,
    loss_comb,
    loss_l2,
    resampled_grid,
)
from .splines import (
    FksModel,
    KnotVector,
    interpolating_fks,
    project_interior_knots,
    solve_fixed_knot_least_squares,
    uniform_knots,
)
from .targets import TargetFunction

__all__ = [
    "AdamConfig",
    "TrainReport",
    "TrainingAbort",
    "adam_minimize",
    "train_standard",
    "train_combined",
    "train_two_level",
    "train_relu_preconditioned",
    "default_init",
    "random_relu",
    "random_raw_net",
    "default_loss_config",
    "STAGE_EPSILON_SQ",
]

Model = Union[FksModel, relu_mod.ReluModel]

# Per-target regularizer for equidistribution-driven knot training.  The
# singular target needs the raw curvature density (its analytic optimal mesh
# is the epsilon = 0 one); the small-length-scale targets need a strong
# floor so flat regions retain knots.
STAGE_EPSILON_SQ = {"u3": 0.0, "u4": 1.0, "u5": 1.0}


def default_loss_config(
    u: TargetFunction, beta: float = 0.0, s: int = 1000,
    epsilon_sq: Optional[float] = None, grid: Optional[QuadratureGrid] = None,
) -> LossConfig:
    if epsilon_sq is None:
        epsilon_sq = STAGE_EPSILON_SQ.get(u.id, 0.1)
    return LossConfig(beta=beta, epsilon_sq=epsilon_sq, grid=grid or fixed_grid(s))


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 50_000
    seed: int = 0
    log_every: int = 100
    stage1_fraction: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")


class TrainingAbort(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass
class TrainReport:
    pipeline: str
    iters: np.ndarray
    loss_history: np.ndarray
    knot_trajectory: np.ndarray
    final_model: Model
    final_loss: float
    wall_time: float
    stage_boundary: Optional[int] = None
    projection_events: int = 0

    def loss_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,loss\n")
        for it, lo in zip(self.iters, self.loss_history):
            buf.write(f"{int(it)},{float(lo)!r}\n")
        return buf.getvalue()

    def knots_csv(self) -> str:
        n = self.knot_trajectory.shape[1]
        buf = io.StringIO()
        buf.write("iter," + ",".join(f"k_{j}" for j in range(n)) + "\n")
        for it, row in zip(self.iters, self.knot_trajectory):
            buf.write(f"{int(it)}," + ",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def adam_minimize(
    x0: np.ndarray,
    loss_and_grad: Callable[[np.ndarray], tuple],
    cfg: AdamConfig,
    project: Optional[Callable[[np.ndarray], tuple]] = None,
    knots_of: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iters: Optional[int] = None,
):
    """Minimize with Adam, projecting after each step to keep knots ordered.

    ``project`` maps a parameter vector to (projected vector, changed flag);
    ``knots_of`` extracts the full knot vector for the trajectory record.
    Returns (x, iters, losses, knot_rows, projection_events).  Aborts with
    a diagnostic iteration index if the loss or gradient turns non-finite.
    """
    n_iters = cfg.max_iters if max_iters is None else max_iters
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps
    iters, losses, rows = [], [], []
    projections = 0
    for t in range(1, n_iters + 1):
        loss, g = loss_and_grad(x)
        if not (np.isfinite(loss) and np.all(np.isfinite(g))):
            raise TrainingAbort("non-finite loss or gradient", t - 1)
        if (t - 1) % cfg.log_every == 0:
            iters.append(t - 1)
            losses.append(loss)
            if knots_of is not None:
                rows.append(knots_of(x))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
        if project is not None:
            x, changed = project(x)
            if changed:
                projections += 1
    loss, _ = loss_and_grad(x)
    if not np.isfinite(loss):
        raise TrainingAbort("non-finite loss at final parameters", n_iters)
    iters.append(n_iters)
    losses.append(loss)
    if knots_of is not None:
        rows.append(knots_of(x))
    return x, iters, losses, rows, projections


# ---------------------------------------------------------------------------
# parameter packing
# ---------------------------------------------------------------------------


def _pack(model: Model) -> np.ndarray:
    if isinstance(model, FksModel):
        return np.concatenate([model.weights, model.knots.interior])
    return np.concatenate(
        [[model.left_coef], model.scalings, model.knots.interior]
    )


def _unpack(model: Model, x: np.ndarray) -> Model:
    n = model.knots.n
    if isinstance(model, FksModel):
        w, ki = x[:n], x[n:]
        kv = KnotVector(np.concatenate([[0.0], ki, [1.0]]),
                        gap_floor=model.knots.gap_floor)
        return FksModel(kv, w)
    left, c, ki = x[0], x[1:n], x[n:]
    kv = KnotVector(np.concatenate([[0.0], ki, [1.0]]),
                    gap_floor=model.knots.gap_floor)
    return relu_mod.ReluModel(kv, c, float(left))


def _knot_slice(model: Model) -> slice:
    # Both packings put the n weight-like parameters first.
    return slice(model.knots.n, None)


def _make_projector(model: Model):
    sl = _knot_slice(model)
    gap = model.knots.gap_floor

    def project(x: np.ndarray):
        ki = x[sl]
        if ki.size == 0:
            return x, False
        fixed = project_interior_knots(ki, gap)
        if np.array_equal(fixed, ki):
            return x, False
        out = x.copy()
        out[sl] = fixed
        return out, True

    return project


def _knots_of(model: Model):
    sl = _knot_slice(model)

    def extract(x: np.ndarray) -> np.ndarray:
        return np.concatenate([[0.0], x[sl], [1.0]])

    return extract


def _grid_provider(cfg: LossConfig, adam_cfg: AdamConfig):
    """Fixed grids are reused; resampled grids are redrawn per evaluation."""
    if cfg.grid.mode == "fixed_uniform":
        return lambda: cfg.grid
    rng = np.random.default_rng(adam_cfg.seed)
    s = cfg.grid.size
    return lambda: resampled_grid(s, rng)


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def _finish(pipeline, model, loss, t0, iters, losses, rows, projections,
            stage_boundary=None) -> TrainReport:
    return TrainReport(
        pipeline=pipeline,
        iters=np.asarray(iters, dtype=int),
        loss_history=np.asarray(losses, dtype=float),
        knot_trajectory=np.asarray(rows, dtype=float),
        final_model=model,
        final_loss=float(loss),
        wall_time=time.perf_counter() - t0,
        stage_boundary=stage_boundary,
        projection_events=projections,
    )


def _joint_pipeline(name: str, model: Model, u: TargetFunction,
                    loss_cfg: LossConfig, adam_cfg: AdamConfig) -> TrainReport:
    t0 = time.perf_counter()
    grids = _grid_provider(loss_cfg, adam_cfg)

    def f(x):
        mdl = _unpack(model, x)
        rep = grad_loss(mdl, u, replace(loss_cfg, grid=grids()))
        return rep.loss, np.concatenate([rep.d_weights, rep.d_knots])

    x, iters, losses, rows, projections = adam_minimize(
        _pack(model), f, adam_cfg,
        project=_make_projector(model), knots_of=_knots_of(model),
    )
    final = _unpack(model, x)
    # Report the loss on the configured (fixed) grid for reproducibility.
    final_loss = loss_comb(final, u, loss_cfg)
    losses[-1] = final_loss
    return _finish(name, final, final_loss, t0, iters, losses, rows, projections)


def train_standard(model: Model, u: TargetFunction,
                   loss_cfg: LossConfig, adam_cfg: AdamConfig) -> TrainReport:
    """Baseline: joint Adam on the squared-error loss over all parameters."""
    cfg = replace(loss_cfg, beta=0.0)
    return _joint_pipeline("standard", model, u, cfg, adam_cfg)


def train_combined(model: Model, u: TargetFunction,
                   loss_cfg: LossConfig, adam_cfg: AdamConfig) -> TrainReport:
    """Joint Adam on the combined loss.

    The conventional weighting is beta = 0.1 (the CLI default); beta = 0
    degenerates exactly to standard squared-error training.
    """
    return _joint_pipeline("combined", model, u, loss_cfg, adam_cfg)


def _train_knots_stage(u: TargetFunction, n: int, loss_cfg: LossConfig,
                       adam_cfg: AdamConfig, beta: float, iters: int):
    """Stage (i): equidistribution-dominated knot training from uniform."""
    grids = _grid_provider(loss_cfg, adam_cfg)

    def objective(x):
        cfg = LossConfig(beta, loss_cfg.epsilon_sq, grids())
        return interpolant_objective(u, cfg)(x)

    start = uniform_knots(n)

    def project(x):
        fixed = project_interior_knots(x, start.gap_floor)
        if np.array_equal(fixed, x):
            return x, False
        return fixed, True

    def knots_of(x):
        return np.concatenate([[0.0], x, [1.0]])

    x, it, lo, rows, projections = adam_minimize(
        start.interior.copy(), objective, adam_cfg,
        project=project, knots_of=knots_of, max_iters=iters,
    )
    kv = KnotVector(np.concatenate([[0.0], x, [1.0]]), gap_floor=start.gap_floor)
    return kv, it, lo, rows, projections


def _stage2_solve_points(kv: KnotVector, base_s: int) -> int:
    """Quadrature size guaranteeing every cell holds a point."""
    min_gap = float(kv.gaps().min())
    return int(min(max(base_s, 4 * kv.n, np.ceil(2.5 / min_gap) + 1), 400_000))


def train_two_level(model: Model, u: TargetFunction,
                    loss_cfg: LossConfig, adam_cfg: AdamConfig,
                    stage2: str = "direct", beta_stage1: float = 10.0) -> TrainReport:
    """Two-level training: knots by equidistribution, then the weights.

    Stage (ii) defaults to the direct tridiagonal least-squares solve; with
    ``stage2="adam"`` the weights (nodal form) or scalings (ReLU form, the
    ill-conditioned baseline) are trained by Adam at the frozen knots.
    """
    t0 = time.perf_counter()
    n = model.knots.n
    stage1_iters = int(adam_cfg.max_iters * adam_cfg.stage1_fraction)
    kv, iters, losses, rows, projections = _train_knots_stage(
        u, n, loss_cfg, adam_cfg, beta_stage1, stage1_iters
    )
    boundary = len(iters)

    if stage2 == "direct":
        s = _stage2_solve_points(kv, loss_cfg.grid.size)
        solved = solve_fixed_knot_least_squares(kv, u, s=s)
        final: Model = solved
        if isinstance(model, relu_mod.ReluModel):
            final = relu_mod.fks_to_relu(solved)
        final_loss = loss_l2(final, u, loss_cfg.grid)
        iters = iters + [stage1_iters]
        losses = losses + [final_loss]
        rows = rows + [kv.values.copy()]
    elif stage2 == "adam":
        stage2_iters = adam_cfg.max_iters - stage1_iters
        grids = _grid_provider(loss_cfg, adam_cfg)
        if isinstance(model, FksModel):
            init = interpolating_fks(kv, u)

            def f(x):
                rep = grad_loss(FksModel(kv, x), u,
                                LossConfig(0.0, loss_cfg.epsilon_sq, grids()))
                return rep.loss, rep.d_weights

            x0 = init.weights.copy()
            rebuild = lambda x: FksModel(kv, x)
        else:
            init_c = model.scalings.copy()
            left0 = model.left_coef

            def f(x):
                rep = grad_loss(relu_mod.ReluModel(kv, x[1:], float(x[0])), u,
                                LossConfig(0.0, loss_cfg.epsilon_sq, grids()))
                return rep.loss, rep.d_weights

            x0 = np.concatenate([[left0], init_c])
            rebuild = lambda x: relu_mod.ReluModel(kv, x[1:], float(x[0]))

        x, it2, lo2, _, _ = adam_minimize(x0, f, adam_cfg, max_iters=stage2_iters)
        final = rebuild(x)
        final_loss = loss_l2(final, u, loss_cfg.grid)
        iters = iters + [stage1_iters + i for i in it2]
        losses = losses + lo2[:-1] + [final_loss]
        rows = rows + [kv.values.copy() for _ in it2]
    else:
        raise ValueError(f"unknown stage-2 mode {stage2!r}")

    return _finish("two_level", final, final_loss, t0, iters, losses, rows,
                   projections, stage_boundary=boundary)


def train_relu_preconditioned(model: relu_mod.ReluModel, u: TargetFunction,
                              loss_cfg: LossConfig, adam_cfg: AdamConfig,
                              stage2: str = "direct") -> TrainReport:
    """Two-level ReLU training with the scaling problem preconditioned.

    After the knot stage the scalings are converted to nodal weights by the
    tridiagonal solve, stage (ii) runs on the well-conditioned nodal form,
    and the result is converted back.  Both conversions are exact changes
    of representation, so the returned ReLU model carries the nodal-form
    loss to rounding accuracy.
    """
    t0 = time.perf_counter()
    n = model.knots.n
    stage1_iters = int(adam_cfg.max_iters * adam_cfg.stage1_fraction)
    kv, iters, losses, rows, projections = _train_knots_stage(
        u, n, loss_cfg, adam_cfg, 10.0, stage1_iters
    )
    boundary = len(iters)

    if stage2 == "direct":
        s = _stage2_solve_points(kv, loss_cfg.grid.size)
        solved = solve_fixed_knot_least_squares(kv, u, s=s)
        final = relu_mod.fks_to_relu(solved)
        final_loss = loss_l2(final, u, loss_cfg.grid)
        iters = iters + [stage1_iters]
        losses = losses + [final_loss]
        rows = rows + [kv.values.copy()]
    elif stage2 == "adam":
        stage2_iters = adam_cfg.max_iters - stage1_iters
        grids = _grid_provider(loss_cfg, adam_cfg)
        # Precondition: carry the incoming scalings to the trained knots and
        # convert them to nodal weights by the tridiagonal solve.
        carried = relu_mod.ReluModel(kv, model.scalings, model.left_coef)
        nodal = relu_mod.relu_to_fks(carried)

        def f(x):
            rep = grad_loss(FksModel(kv, x), u,
                            LossConfig(0.0, loss_cfg.epsilon_sq, grids()))
            return rep.loss, rep.d_weights

        x, it2, lo2, _, _ = adam_minimize(
            nodal.weights.copy(), f, adam_cfg, max_iters=stage2_iters
        )
        final = relu_mod.fks_to_relu(FksModel(kv, x))
        final_loss = loss_l2(final, u, loss_cfg.grid)
        iters = iters + [stage1_iters + i for i in it2]
        losses = losses + lo2[:-1] + [final_loss]
        rows = rows + [kv.values.copy() for _ in it2]
    else:
        raise ValueError(f"unknown stage-2 mode {stage2!r}")

    return _finish("preconditioned", final, final_loss, t0, iters, losses, rows,
                   projections, stage_boundary=boundary)


# ---------------------------------------------------------------------------
# initializations
# ---------------------------------------------------------------------------


def default_init(u: TargetFunction, n: int, representation: str = "fks") -> Model:
    """Uniform-knot interpolant of the target, in the requested form."""
    nodal = interpolating_fks(uniform_knots(n), u)
    if representation == "fks":
        return nodal
    if representation == "relu":
        return relu_mod.fks_to_relu(nodal)
    raise ValueError(f"unknown representation {representation!r}")


def random_relu(n: int, seed: int, scale: float = 0.1) -> relu_mod.ReluModel:
    """Random canonical ReLU model with all breakpoints inside [0,1].

    The scaling magnitude follows the small fan-in-style initializations of
    common training frameworks; larger scales make joint training of the
    breakpoint form noticeably less reliable.
    """
    rng = np.random.default_rng(seed)
    interior = project_interior_knots(np.sort(rng.uniform(0.0, 1.0, n - 2)))
    kv = KnotVector(np.concatenate([[0.0], interior, [1.0]]))
    return relu_mod.ReluModel(
        kv, scale * rng.standard_normal(n - 1), float(scale * rng.standard_normal())
    )


def random_raw_net(width: int, seed: int) -> relu_mod.RawShallowNet:
    """Width-W raw net with the standard uniform fan-in initialization."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(width)
    return relu_mod.RawShallowNet(
        a=rng.uniform(-1.0, 1.0, width),
        b=rng.uniform(-1.0, 1.0, width),
        c_out=rng.uniform(-bound, bound, width),
        bias_out=float(rng.uniform(-bound, bound)),
    )
