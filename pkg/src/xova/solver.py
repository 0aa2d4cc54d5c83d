"""Truncated conjugate-gradient Newton minimizer for one binary problem.

The objective for one label is

    L(w) = 0.5 * <w, w> + C * sum_i phi(y_i * <w, x_i>)

Each outer iteration recomputes the margins and the set of instances with
nonzero curvature, solves the Newton system H p = -grad approximately with
diagonally preconditioned conjugate gradients (Hessian-vector products only
touch the active rows), and applies a backtracking line search over
w + lambda * p. Because the curvature coefficients of inactive instances
are exactly zero, restricting the Hessian-vector products to the active
rows is exact, not an approximation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses
from .errors import ConfigError, DimensionMismatchError, NumericalError
from .losses import ActiveSet, MarginLoss
from .sparse import DenseVector, SparseMatrix

TERM_CONVERGED = "converged"
TERM_MAX_OUTER = "max_outer"
TERM_LINE_SEARCH = "line_search_failed"
TERM_NUMERICAL = "numerical_failure"


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the Newton-CG solver."""

    eps_outer: float = 0.01  # stop when |grad| <= eps_outer * |grad at zero|
    eps_cg: float = 0.5  # relative preconditioned-residual tolerance
    precond_alpha: float = 0.01  # M = alpha * diag(H) + (1 - alpha) * I
    ls_beta: float = 0.5  # backtracking shrink factor
    ls_eta: float = 0.01  # sufficient-decrease slope fraction
    ls_max_steps: int = 20
    max_outer: int = 100
    max_cg: int = 250

    def __post_init__(self):
        if self.eps_outer <= 0 or self.eps_cg <= 0:
            raise ConfigError("tolerances must be positive")
        if not 0.0 <= self.precond_alpha <= 1.0:
            raise ConfigError("precond_alpha must lie in [0, 1]")
        if not 0.0 < self.ls_beta < 1.0:
            raise ConfigError("ls_beta must lie in (0, 1)")
        if not 0.0 < self.ls_eta < 0.5:
            raise ConfigError("ls_eta must lie in (0, 0.5)")
        if self.ls_max_steps < 1 or self.max_outer < 1 or self.max_cg < 1:
            raise ConfigError("iteration limits must be >= 1")


@dataclass(frozen=True)
class BinaryProblem:
    """One label's view of the shared design matrix: signs plus loss weight."""

    features: SparseMatrix
    signs: np.ndarray  # float64, entries in {-1, +1}
    loss: MarginLoss = MarginLoss.SQUARED_HINGE
    c: float = 1.0

    def __post_init__(self):
        signs = np.ascontiguousarray(self.signs, dtype=np.float64)
        if signs.shape[0] != self.features.n_rows:
            raise DimensionMismatchError(
                f"{signs.shape[0]} signs for {self.features.n_rows} instances"
            )
        if signs.size and not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be +1 or -1")
        object.__setattr__(self, "signs", signs)

    @property
    def n(self) -> int:
        return self.features.n_rows

    @property
    def dim(self) -> int:
        return self.features.n_cols


@dataclass
class TraceRow:
    """Measurements for one accepted outer iteration.

    ``grad_norm``, ``active_count`` and ``active_fraction`` are measured at
    the start of the iteration (before the step); ``loss`` is the objective
    after the accepted update.
    """

    loss: float
    grad_norm: float
    active_count: int
    active_fraction: float
    cg_iters: int
    step_size: float
    wall_ms: float


@dataclass
class SolverTrace:
    """Per-iteration diagnostics plus run totals for one binary solve."""

    initial_loss: float = float("nan")
    grad0_ref: float = float("nan")
    rows: list[TraceRow] = field(default_factory=list)
    termination: str = TERM_MAX_OUTER
    hvp_touches: int = 0  # sum over CG steps of the active-set size
    final_grad_norm: float = float("nan")
    wall_ms: float = 0.0

    @property
    def outer_iters(self) -> int:
        return len(self.rows)

    @property
    def first_step_size(self) -> float | None:
        return self.rows[0].step_size if self.rows else None

    def losses(self) -> list[float]:
        return [self.initial_loss] + [r.loss for r in self.rows]


def margins(problem: BinaryProblem, w: DenseVector) -> np.ndarray:
    """Per-instance margins ``y_i * <w, x_i>``."""
    return problem.signs * problem.features.matvec(w)


def objective(problem: BinaryProblem, w: DenseVector) -> float:
    """``0.5 * |w|^2 + C * sum phi(margin_i)``."""
    m = margins(problem, w)
    return 0.5 * float(np.dot(w, w)) + problem.c * float(np.sum(losses.phi(problem.loss, m)))


def _objective_from_margins(problem: BinaryProblem, w: DenseVector, m: np.ndarray) -> float:
    return 0.5 * float(np.dot(w, w)) + problem.c * float(np.sum(losses.phi(problem.loss, m)))


def gradient(problem: BinaryProblem, w: DenseVector) -> DenseVector:
    """``w + C * sum phi'(margin_i) * y_i * x_i``."""
    m = margins(problem, w)
    coef = problem.c * losses.dphi(problem.loss, m) * problem.signs
    return w + problem.features.rmatvec(coef)


def hessian_vec(
    problem: BinaryProblem, w: DenseVector, d: DenseVector, active: ActiveSet
) -> DenseVector:
    """``d + C * sum_{i in A} phi''(margin_i) * <x_i, d> * x_i``.

    The leading ``d`` is the L2-regularizer block; the label signs square
    away inside the curvature term.
    """
    if d.shape[0] != problem.dim:
        raise DimensionMismatchError(f"direction length {d.shape[0]} != dim {problem.dim}")
    m = margins(problem, w)
    sub = problem.features.submatrix(active.indices)
    dd = problem.c * losses.ddphi(problem.loss, m[active.indices])
    return d + sub.rmatvec(dd * sub.matvec(d))


def cg_solve(
    grad: DenseVector,
    hvp: Callable[[DenseVector], DenseVector],
    cfg: SolverConfig,
    diag: DenseVector,
) -> tuple[DenseVector, int]:
    """Approximately solve ``H p = -grad`` by preconditioned CG.

    ``diag`` is the diagonal of H; the preconditioner is the mixed form
    ``M = precond_alpha * diag(H) + (1 - precond_alpha) * I``. Iteration
    stops once the preconditioned residual norm ``sqrt(r' M^-1 r)`` drops to
    ``eps_cg`` times the preconditioned norm of ``grad``, or at ``max_cg``.
    """
    dim = grad.shape[0]
    p = np.zeros(dim, dtype=np.float64)
    gnorm2 = float(np.dot(grad, grad))
    if gnorm2 == 0.0:
        return p, 0
    m_inv = 1.0 / (cfg.precond_alpha * diag + (1.0 - cfg.precond_alpha))
    r = -grad
    z = m_inv * r
    rz = float(np.dot(r, z))
    ref = np.sqrt(rz)
    if not np.isfinite(ref):
        raise NumericalError("non-finite preconditioned gradient norm in CG")
    d = z.copy()
    iters = 0
    while iters < cfg.max_cg:
        hd = hvp(d)
        dhd = float(np.dot(d, hd))
        if not np.isfinite(dhd):
            raise NumericalError(f"non-finite curvature in CG iteration {iters + 1}")
        if dhd <= 0.0:
            raise NumericalError(
                f"non-positive curvature {dhd:g} in CG iteration {iters + 1}"
            )
        alpha = rz / dhd
        p += alpha * d
        r -= alpha * hd
        iters += 1
        z = m_inv * r
        rz_next = float(np.dot(r, z))
        if not np.isfinite(rz_next):
            raise NumericalError(f"non-finite residual in CG iteration {iters}")
        if np.sqrt(max(rz_next, 0.0)) <= cfg.eps_cg * ref:
            break
        d = z + (rz_next / rz) * d
        rz = rz_next
    return p, iters


def backtracking_search(
    eval_at: Callable[[float], float],
    loss0: float,
    g_dot_dir: float,
    cfg: SolverConfig,
) -> tuple[float, bool]:
    """Largest multiplier in {1, beta, beta^2, ...} meeting sufficient decrease.

    ``eval_at`` maps a multiplier to the objective at ``w + lambda * dir``.
    Returns ``(0.0, False)`` when none of the ``ls_max_steps`` trials
    qualifies.
    """
    lam = 1.0
    for _ in range(cfg.ls_max_steps):
        if eval_at(lam) <= loss0 + cfg.ls_eta * lam * g_dot_dir:
            return lam, True
        lam *= cfg.ls_beta
    return 0.0, False


def line_search(
    problem: BinaryProblem,
    w: DenseVector,
    direction: DenseVector,
    cfg: SolverConfig,
) -> tuple[float, bool]:
    """Backtracking search over ``w + lambda * direction`` for one problem."""
    xw = problem.features.matvec(w)
    xdir = problem.features.matvec(direction)
    loss0 = _objective_from_margins(problem, w, problem.signs * xw)
    g_dot_dir = float(np.dot(gradient(problem, w), direction))

    def eval_at(lam: float) -> float:
        w_trial = w + lam * direction
        m_trial = problem.signs * (xw + lam * xdir)
        return _objective_from_margins(problem, w_trial, m_trial)

    return backtracking_search(eval_at, loss0, g_dot_dir, cfg)


def _compute_active(loss: MarginLoss, m: np.ndarray) -> np.ndarray:
    """Active instance indices for the current margins (monkeypatchable in tests)."""
    return losses.active_set(loss, m).indices


def newton_cg(
    problem: BinaryProblem,
    w0: DenseVector,
    cfg: SolverConfig,
    grad0_ref: float,
    *,
    use_active_set: bool = True,
    collect_trace: bool = True,
) -> tuple[DenseVector, SolverTrace]:
    """Minimize the regularized margin loss starting from ``w0``.

    ``grad0_ref`` is the gradient norm at the zero vector for this problem;
    the outer loop stops once ``|grad| <= eps_outer * grad0_ref``, so every
    initialization strategy targets the same stopping surface.

    ``use_active_set=False`` keeps the full instance range in every
    Hessian-vector product (the curvature coefficients of inactive rows are
    still zero); it exists to check that the implicit mining is exact.
    """
    if w0.shape[0] != problem.dim:
        raise DimensionMismatchError(f"w0 length {w0.shape[0]} != dim {problem.dim}")
    X = problem.features
    y = problem.signs
    c = problem.c
    n = problem.n
    t_start = time.perf_counter()

    w = np.array(w0, dtype=np.float64, copy=True)
    xw = X.matvec(w)
    trace = SolverTrace(grad0_ref=grad0_ref)
    m = y * xw
    loss_val = _objective_from_margins(problem, w, m)
    if not np.isfinite(loss_val):
        raise NumericalError("non-finite objective at the initial point", w_last=w, trace=trace)
    trace.initial_loss = loss_val

    outer = 0
    while True:
        coef = c * losses.dphi(problem.loss, m) * y
        grad = w + X.rmatvec(coef)
        gnorm = float(np.linalg.norm(grad))
        if not np.isfinite(gnorm):
            raise NumericalError("non-finite gradient", w_last=w, trace=trace)
        if gnorm <= cfg.eps_outer * grad0_ref:
            trace.termination = TERM_CONVERGED
            break
        if outer >= cfg.max_outer:
            trace.termination = TERM_MAX_OUTER
            break
        t_iter = time.perf_counter()

        if use_active_set:
            active_idx = _compute_active(problem.loss, m)
        else:
            active_idx = np.arange(n, dtype=np.int64)
        n_active = int(active_idx.shape[0])
        sub = X.submatrix(active_idx)
        dd = c * losses.ddphi(problem.loss, m[active_idx])
        diag = 1.0 + sub.rmatvec_squared(dd)

        def hvp(d, _sub=sub, _dd=dd):
            return d + _sub.rmatvec(_dd * _sub.matvec(d))

        direction, cg_iters = cg_solve(grad, hvp, cfg, diag)
        trace.hvp_touches += cg_iters * n_active
        g_dot_dir = float(np.dot(grad, direction))
        if g_dot_dir >= 0.0:
            raise NumericalError(
                f"CG returned a non-descent direction (g.p = {g_dot_dir:g})",
                w_last=w,
                trace=trace,
            )
        xdir = X.matvec(direction)

        def eval_at(lam, _xdir=xdir):
            m_trial = y * (xw + lam * _xdir)
            w_trial = w + lam * direction
            return _objective_from_margins(problem, w_trial, m_trial)

        lam, accepted = backtracking_search(eval_at, loss_val, g_dot_dir, cfg)
        if not accepted:
            trace.termination = TERM_LINE_SEARCH
            break

        w = w + lam * direction
        xw = xw + lam * xdir
        m = y * xw
        loss_val = _objective_from_margins(problem, w, m)
        if not np.isfinite(loss_val):
            raise NumericalError("non-finite objective after step", w_last=w, trace=trace)
        outer += 1
        if collect_trace:
            trace.rows.append(
                TraceRow(
                    loss=loss_val,
                    grad_norm=gnorm,
                    active_count=n_active,
                    active_fraction=n_active / n if n else 0.0,
                    cg_iters=cg_iters,
                    step_size=lam,
                    wall_ms=(time.perf_counter() - t_iter) * 1e3,
                )
            )

    trace.final_grad_norm = gnorm
    trace.wall_ms = (time.perf_counter() - t_start) * 1e3
    return w, trace
