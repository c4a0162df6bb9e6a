"""
Ground-truth optima for separable data.

The maximum margin comes from the dual problem `min_{q in simplex} ||Z^T q||^2 / 2`,
solved by Frank-Wolfe with away steps and an affine polish on the active set.
The module also provides the dual optimum of general losses, the support
decomposition around the max-margin direction and the minimizer of the
support-vector risk orthogonal to it.
"""

import logging
import math
import typing

import numpy as np

from marginlab.data import Dataset
from marginlab.descent import constant_hat_eta, iterate_gd, logistic_two_phase
from marginlab.exceptions import (
    CertificationError,
    ConvergenceError,
    DomainError,
    NumericError,
)
from marginlab.losses import LossFunction, LossKind
from marginlab.smoothed import DualPoint, perspective, simplex_point
from marginlab.types import ArrayLike, Matrix, Vector

__all__ = [
    "MaxMarginResult",
    "SupportDecomposition",
    "PerpMinimizer",
    "MarginCertificate",
    "PerspectiveGap",
    "max_margin",
    "dual_optimum",
    "support_decomposition",
    "perp_minimizer",
    "certify_margin",
    "perspective_gap",
]

logger = logging.getLogger(__name__)

EPS = float(np.finfo(np.float64).eps)
POLISH_EVERY = 10
RANK_TOL = 1e-10
DEGENERATE_CURVATURE = 1e-12
FEASIBILITY_TOL = 1e-10


@typing.final
class MaxMarginResult(typing.NamedTuple):
    """Solution of the hard-margin problem."""

    gamma: float
    """`||Z^T qbar||`."""
    u_bar: Vector
    """`-Z^T qbar / ||Z^T qbar||`."""
    qbar: Vector
    """Minimizer of `||Z^T q||` over the simplex."""
    duality_gap: float
    """`|gamma - gamma_primal|`."""
    gamma_primal: float
    """`min_i <u_bar, -z_i>`."""
    iterations: int


@typing.final
class SupportDecomposition(typing.NamedTuple):
    support_idx: typing.List[int]
    """0-based indices of the rows attaining the margin."""
    gamma_prime: float
    """Margin surplus of the closest non-support row, `inf` if there is none."""
    S_perp: Matrix
    """Support rows with their component along `u_bar` removed, one per row."""


@typing.final
class PerpMinimizer(typing.NamedTuple):
    v_bar: Vector
    strong_convexity: float
    """Smallest Hessian eigenvalue at `v_bar` within the span, `inf` for a trivial span."""
    rank: int
    grad_norm: float
    iterations: int


@typing.final
class MarginCertificate(typing.NamedTuple):
    """Everything the bound checks need to know about the optimum."""

    gamma: float
    u_bar: Vector
    qbar: DualPoint
    """Dual comparator for the loss in use."""
    f_qbar: float
    duality_gap: float
    gamma_primal: float
    support_idx: typing.List[int]
    gamma_prime: float
    S_perp: Matrix
    v_bar: typing.Optional[Vector]
    """`None` when the support geometry is degenerate."""
    perp_strong_convexity: float
    support_tol: float
    tol: float
    notes: typing.List[str]


@typing.final
class PerspectiveGap(typing.NamedTuple):
    """Numerical view of the perspective form of the max-margin problem."""

    sampled_sup: float
    """Largest `-r psi(Z w / r)` over sampled unit `w` and scales `r`."""
    limit_values: typing.List[typing.Tuple[float, float]]
    """`(r, -r psi(Z u_bar / r))` for decreasing `r`, ending at `r = 0`."""
    limit_error: float
    """`|gamma - value at the smallest positive r|`; `nan` without a limit."""
    monotone: bool
    """Whether the values are nonincreasing in `r`."""


def _margins(ds: Dataset, u: Vector) -> Vector:
    return -(ds.Z @ u)


def _affine_minimizer(rows: Matrix) -> Vector:
    """Minimizer of `||rows^T y||` subject to `sum(y) = 1`."""
    k = rows.shape[0]
    system = np.zeros((k + 1, k + 1))
    system[:k, :k] = rows @ rows.T
    system[:k, k] = 1.0
    system[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    solution = np.linalg.lstsq(system, rhs, rcond=None)[0]
    return typing.cast(Vector, solution[:k])


def _polish(Z: Matrix, q: Vector) -> Vector:
    """
    Move `q` towards the affine minimizer on its active set.

    Coordinates that would turn negative are dropped one at a time and the
    objective never increases.
    """
    q = q.copy()
    for _ in range(q.size):
        active = np.flatnonzero(q > 0.0)
        if active.size <= 1:
            return q
        target = _affine_minimizer(Z[active])
        current = q[active]
        if np.all(target >= 0.0):
            candidate = np.zeros_like(q)
            candidate[active] = target / np.sum(target)
            if _objective(Z, candidate) <= _objective(Z, q):
                return candidate
            return q
        negative = target < 0.0
        step = float(np.min(current[negative] / (current[negative] - target[negative])))
        moved = current + step * (target - current)
        moved[moved < FEASIBILITY_TOL * np.max(current)] = 0.0
        if _objective_rows(Z[active], moved / np.sum(moved)) > _objective(Z, q):
            return q
        q = np.zeros_like(q)
        q[active] = moved / np.sum(moved)
    return q


def _objective(Z: Matrix, q: Vector) -> float:
    x = Z.T @ q
    return 0.5 * float(x @ x)


def _objective_rows(rows: Matrix, weights: Vector) -> float:
    x = rows.T @ weights
    return 0.5 * float(x @ x)


def max_margin(ds: Dataset, tol: float = 1e-9, max_iter: int = 100_000) -> MaxMarginResult:
    """
    Solve `min_{q in simplex} ||Z^T q||^2 / 2` by Frank-Wolfe with away steps.

    Starts at the vertex of the shortest row and stops once the Wolfe gap is
    at most `max(tol^2 / 2, 64 eps ||Z^T q||^2)`. Every few iterations the
    iterate is polished on its active set, which recovers the exact optimum
    once the active set is right.

    :param ds: Dataset
    :param tol: Target accuracy of `gamma`
    :param max_iter: Iteration budget
    :raises DomainError: If the data is not separable at tolerance `tol`.
    :raises ConvergenceError: If the budget is exhausted.
    """
    Z = ds.Z
    n = ds.n
    q = np.zeros(n)
    q[int(np.argmin(ds.row_norms()))] = 1.0

    gap = math.inf
    iteration = 0
    while True:
        x = Z.T @ q
        norm_sq = float(x @ x)
        if math.sqrt(norm_sq) <= tol:
            raise DomainError(
                f"Dataset is not separable at tolerance {tol!r}: ||Z^T q|| = {math.sqrt(norm_sq)!r}"
            )
        grad = Z @ x
        s = int(np.argmin(grad))
        gap = norm_sq - float(grad[s])
        if gap <= max(0.5 * tol * tol, 64.0 * EPS * norm_sq):
            break
        if iteration >= max_iter:
            raise ConvergenceError(
                "Frank-Wolfe did not reach the requested gap", residual=gap, iterations=iteration
            )

        active = np.flatnonzero(q > 0.0)
        a = int(active[np.argmax(grad[active])])
        fw_decrease = gap
        away_decrease = float(grad[a]) - norm_sq
        away = not (fw_decrease >= away_decrease or q[a] >= 1.0)
        if not away:
            direction = -q.copy()
            direction[s] += 1.0
            delta = Z[s] - x
            step_max = 1.0
        else:
            direction = q.copy()
            direction[a] -= 1.0
            delta = x - Z[a]
            step_max = q[a] / (1.0 - q[a])
        curvature = float(delta @ delta)
        step = step_max if curvature == 0.0 else min(step_max, max(0.0, -float(x @ delta) / curvature))
        q = q + step * direction
        q[q < 0.0] = 0.0
        if away and step == step_max:
            q[a] = 0.0
        q /= np.sum(q)
        iteration += 1
        if iteration % POLISH_EVERY == 0:
            q = _polish(Z, q)

    q = _polish(Z, q)
    x = Z.T @ q
    gamma = float(np.linalg.norm(x))
    u_bar = -x / gamma
    gamma_primal = float(np.min(_margins(ds, u_bar)))
    logger.info(
        "Frank-Wolfe converged after %d iterations: gamma=%r, Wolfe gap=%r", iteration, gamma, gap
    )
    return MaxMarginResult(
        gamma=gamma,
        u_bar=u_bar,
        qbar=q,
        duality_gap=abs(gamma - gamma_primal),
        gamma_primal=gamma_primal,
        iterations=iteration,
    )


def dual_optimum(
    ds: Dataset,
    loss: LossFunction,
    tol: float = 1e-3,
    hat_eta: typing.Optional[float] = None,
    max_steps: int = 200_000,
    min_steps: int = 0,
) -> DualPoint:
    """
    Dual comparator `qbar` minimizing `f` over `{psi* <= 0}`.

    For the exponential loss this is the simplex solution of `max_margin`.
    Otherwise gradient descent is run from zero with a constant effective
    step (the two-phase schedule for the logistic loss when `hat_eta` is not
    given) and stopped at the first doubling checkpoint `t >= min_steps`
    where `||Z^T q_t - Z^T q_{t/2}|| <= tol`, `psi(Z w_t) <= 0` and
    `psi*(q_t) <= 1e-10`.

    :raises ConvergenceError: If no checkpoint within `max_steps` qualifies.
    """
    if loss.kind is LossKind.EXP and hat_eta is None:
        return simplex_point(max_margin(ds, tol=min(tol, 1e-9)).qbar)

    if hat_eta is not None:
        policy = constant_hat_eta(hat_eta)
    elif loss.kind is LossKind.LOGISTIC:
        policy = logistic_two_phase()
    else:
        policy = constant_hat_eta(1.0 / loss.beta(ds.n))
    policy.validate(loss, ds.n)

    checkpoint = 16
    previous: typing.Optional[Vector] = None
    residual = math.inf
    for step in iterate_gd(ds, loss, policy):
        if step.t > max_steps:
            break
        if step.t < checkpoint:
            continue
        ztq = ds.Z.T @ step.q
        if previous is not None:
            residual = float(np.linalg.norm(ztq - previous))
            if (
                step.t >= min_steps
                and residual <= tol
                and step.psi_val <= 0.0
                and step.dual.conj_value <= 1e-10
            ):
                logger.info(
                    "Dual optimum for %s accepted at t=%d (residual %r)", loss.name, step.t, residual
                )
                return step.dual
        previous = ztq
        checkpoint *= 2
    raise ConvergenceError(
        f"Dual optimum for {loss.name} did not settle within {max_steps} steps",
        residual=residual,
        iterations=max_steps,
    )


def support_decomposition(
    ds: Dataset,
    gamma: float,
    u_bar: ArrayLike,
    support_tol: typing.Optional[float] = None,
) -> SupportDecomposition:
    """
    Split the rows into support vectors and the rest.

    :param support_tol: Rows with margin at most `gamma + support_tol` are
        support vectors; `1e-6 gamma` by default
    :raises CertificationError: If no row attains the margin.
    """
    u = np.asarray(u_bar, dtype=np.float64)
    tol = 1e-6 * gamma if support_tol is None else support_tol
    margins = _margins(ds, u)
    support = margins <= gamma + tol
    if not np.any(support):
        raise CertificationError(
            f"No row attains the margin {gamma!r}; closest is {float(np.min(margins))!r}"
        )
    others = margins[~support]
    gamma_prime = float(np.min(others)) - gamma if others.size else math.inf
    rows = ds.Z[support]
    S_perp = rows - np.outer(rows @ u, u)
    return SupportDecomposition(
        support_idx=[int(i) for i in np.flatnonzero(support)],
        gamma_prime=gamma_prime,
        S_perp=S_perp,
    )


def perp_minimizer(
    ds: Dataset,
    S_perp: ArrayLike,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> PerpMinimizer:
    """
    Minimize `R_perp(v) = (1/n) sum_{i in S} exp(<v, z_i_perp>)` over `span(S_perp)`.

    Runs damped Newton in an orthonormal basis of the span obtained from the
    singular value decomposition of `S_perp` (rank tolerance 1e-10).

    :raises CertificationError: If the Hessian within the span is degenerate
        at the solution.
    :raises ConvergenceError: If the gradient does not drop below `tol`
        (no minimizer exists, e.g. when the vectors do not positively span).
    """
    vectors = np.atleast_2d(np.asarray(S_perp, dtype=np.float64))
    d = ds.d
    if vectors.size == 0:
        return PerpMinimizer(np.zeros(d), math.inf, 0, 0.0, 0)
    _, singular, vt = np.linalg.svd(vectors, full_matrices=False)
    rank = int(np.sum(singular > RANK_TOL))
    if rank == 0:
        return PerpMinimizer(np.zeros(d), math.inf, 0, 0.0, 0)

    basis = vt[:rank].T
    coords = vectors @ basis
    n = float(ds.n)

    def value(c: Vector) -> float:
        return float(np.sum(np.exp(coords @ c))) / n

    c = np.zeros(rank)
    grad_norm = math.inf
    for iteration in range(max_iter + 1):
        weights = np.exp(coords @ c) / n
        if not np.all(np.isfinite(weights)):
            raise NumericError("Newton iterate of the orthogonal risk overflowed", iteration=iteration)
        grad = coords.T @ weights
        hess = coords.T @ (weights[:, None] * coords)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol * float(np.sum(weights)):
            break
        if iteration == max_iter:
            raise ConvergenceError(
                "Orthogonal risk has no minimizer within the iteration budget",
                residual=grad_norm,
                iterations=max_iter,
            )
        try:
            direction = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            direction = -grad
        current = value(c)
        slope = float(grad @ direction)
        step = 1.0
        while value(c + step * direction) > current + 0.25 * step * slope and step > 1e-12:
            step *= 0.5
        c = c + step * direction

    weights = np.exp(coords @ c) / n
    curvature = float(np.min(np.linalg.eigvalsh(coords.T @ (weights[:, None] * coords))))
    if curvature <= DEGENERATE_CURVATURE:
        raise CertificationError(
            f"degenerate support geometry: smallest curvature {curvature!r} in span(S_perp)"
        )
    return PerpMinimizer(
        v_bar=basis @ c,
        strong_convexity=curvature,
        rank=rank,
        grad_norm=grad_norm,
        iterations=iteration,
    )


def certify_margin(
    ds: Dataset,
    loss: LossFunction,
    tol: float = 1e-9,
    support_tol: typing.Optional[float] = None,
    dual_tol: float = 1e-3,
    dual_min_steps: int = 0,
) -> MarginCertificate:
    """
    Build the margin certificate of `ds`.

    The dual comparator is the simplex optimum for the exponential loss and
    the trajectory limit of `dual_optimum` otherwise. A degenerate support
    geometry leaves `v_bar` unset and is recorded in `notes`.
    """
    result = max_margin(ds, tol=tol)
    s_tol = 1e-6 * result.gamma if support_tol is None else support_tol
    decomposition = support_decomposition(ds, result.gamma, result.u_bar, s_tol)
    notes: typing.List[str] = []
    try:
        perp = perp_minimizer(ds, decomposition.S_perp)
        v_bar: typing.Optional[Vector] = perp.v_bar
        strong_convexity = perp.strong_convexity
    except (CertificationError, ConvergenceError) as exc:
        logger.warning("Orthogonal minimizer unavailable: %s", exc)
        notes.append(f"v_bar unavailable: {exc}")
        v_bar, strong_convexity = None, math.nan

    if loss.kind is LossKind.EXP:
        qbar = simplex_point(result.qbar)
    else:
        qbar = dual_optimum(ds, loss, tol=dual_tol, min_steps=dual_min_steps)
        notes.append(f"qbar approximated by a gradient descent limit at tolerance {dual_tol!r}")
    ztq = ds.Z.T @ qbar.q
    return MarginCertificate(
        gamma=result.gamma,
        u_bar=result.u_bar,
        qbar=qbar,
        f_qbar=0.5 * float(ztq @ ztq),
        duality_gap=result.duality_gap,
        gamma_primal=result.gamma_primal,
        support_idx=decomposition.support_idx,
        gamma_prime=decomposition.gamma_prime,
        S_perp=decomposition.S_perp,
        v_bar=v_bar,
        perp_strong_convexity=strong_convexity,
        support_tol=s_tol,
        tol=tol,
        notes=notes,
    )


def perspective_gap(
    ds: Dataset,
    loss: LossFunction,
    gamma: float,
    u_bar: ArrayLike,
    samples: int = 256,
    seed: int = 0,
    scales: typing.Sequence[float] = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
) -> PerspectiveGap:
    """
    Compare the perspective form of the max-margin problem with `gamma`.

    `-r psi(Z w / r)` never exceeds `gamma` for `||w|| <= 1`, and along
    `u_bar` it increases to `gamma` as `r` decreases to zero. The limit is
    only traced for the exponential and logistic losses.
    """
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((samples, ds.d))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    best = -math.inf
    for w in directions:
        p = ds.Z @ w
        for r in scales:
            best = max(best, -perspective(loss, p, r))

    u = np.asarray(u_bar, dtype=np.float64)
    if loss.kind not in (LossKind.EXP, LossKind.LOGISTIC):
        return PerspectiveGap(best, [], math.nan, True)
    p = ds.Z @ u
    values = [(float(r), -perspective(loss, p, r)) for r in sorted(scales, reverse=True)]
    limit_error = abs(gamma - values[-1][1])
    values.append((0.0, -perspective(loss, p, 0.0)))
    monotone = all(b >= a - 1e-12 for (_, a), (_, b) in zip(values, values[1:]))
    return PerspectiveGap(best, values, limit_error, monotone)
