"""
Dual view of gradient descent.

Along a trajectory the dual variables `q_t` follow mirror descent on
`f(q) = ||Z^T q||^2 / 2` with the generalized Bregman distance of the
smoothed margin. This module evaluates `f` and certifies the mirror-descent
identity and the inequalities of the resulting convergence guarantee on
recorded trajectories.
"""

import logging
import math
import typing

import numpy as np

from marginlab.data import Dataset
from marginlab.descent import PolicyKind, Trajectory, TrajectoryStep
from marginlab.exceptions import DomainError, UsageError
from marginlab.losses import LossFunction
from marginlab.smoothed import DualPoint, bregman, grad_psi
from marginlab.types import ArrayLike

__all__ = [
    "SlackRecord",
    "DualCertificate",
    "SmoothnessCertificate",
    "dual_objective",
    "certify_mirror_step",
    "mirror_tolerance",
    "certify_dual_main",
    "certify_standard_smooth",
]

logger = logging.getLogger(__name__)

REL_TOL = 1e-9
MIRROR_TOL = 1e-9
MONOTONE_TOL = 1e-12


@typing.final
class SlackRecord(typing.NamedTuple):
    """One evaluated inequality. `slack >= 0` means it holds exactly."""

    t: int
    lhs: float
    rhs: float
    slack: float

    def holds(self, rel_tol: float = REL_TOL) -> bool:
        if math.isnan(self.slack):
            return False
        return self.slack >= -rel_tol * max(1.0, abs(self.rhs))


def at_most(t: int, lhs: float, rhs: float) -> SlackRecord:
    """Record `lhs <= rhs`."""
    return SlackRecord(t, lhs, rhs, rhs - lhs)


def at_least(t: int, lhs: float, rhs: float) -> SlackRecord:
    """Record `lhs >= rhs`."""
    return SlackRecord(t, lhs, rhs, lhs - rhs)


@typing.final
class DualCertificate(typing.NamedTuple):
    """Certified dual convergence along one trajectory."""

    applicable: bool
    """Whether `eta_hat <= 1/beta` and nonincreasing held over the certified range."""
    start_t: typing.Optional[int]
    beta: float
    mirror_identity_max_err: float
    """Largest normalized mirror-identity error over consecutive recorded pairs."""
    mirror_pairs: int
    f_monotone: bool
    f_worst_violation: float
    telescoping_slack: typing.List[SlackRecord]
    """`eta_hat (f(q_{t+1}) - f(qbar)) <= D(qbar, q_t) - D(qbar, q_{t+1})`, summed between records."""
    md_step_slack: typing.List[SlackRecord]
    """Single mirror-descent step inequality, consecutive records only."""
    psi_decrease_slack: typing.List[SlackRecord]
    """`psi(p_t) - psi(p_{t+1}) >= eta_hat (f(q_t) + f(q_{t+1}))`, summed between records."""
    psi_telescoped_slack: typing.List[SlackRecord]
    rate_bound: typing.List[SlackRecord]
    """`f(q_t) - f(qbar) <= D(qbar, q_start) / sum eta_hat`."""
    initial_divergence: float
    """`D(qbar, q_start)`."""
    f_qbar: float
    rel_tol: float = REL_TOL

    def all_slack(self) -> typing.Iterator[SlackRecord]:
        yield from self.telescoping_slack
        yield from self.md_step_slack
        yield from self.psi_decrease_slack
        yield from self.psi_telescoped_slack
        yield from self.rate_bound

    @property
    def passed(self) -> bool:
        return (
            self.f_monotone
            and self.mirror_identity_max_err <= MIRROR_TOL
            and all(record.holds(self.rel_tol) for record in self.all_slack())
        )


@typing.final
class SmoothnessCertificate(typing.NamedTuple):
    """Standard smoothness guarantee of the primal and the dual."""

    applicable: bool
    start_t: typing.Optional[int]
    beta: float
    psi_slack: typing.List[SlackRecord]
    """`psi(p_{t+1}) - psi(p_t) <= (-eta_hat + beta eta_hat^2/2) ||Z^T q_t||^2`, summed."""
    bregman_slack: typing.List[SlackRecord]
    """`D(q_{t+1}, q_t) >= ||q_{t+1} - q_t||_1^2 / (2 beta)`, consecutive records."""
    rel_tol: float = REL_TOL

    @property
    def passed(self) -> bool:
        return all(r.holds(self.rel_tol) for r in [*self.psi_slack, *self.bregman_slack])


def dual_objective(ds: Dataset, q: ArrayLike) -> float:
    """
    `f(q) = ||Z^T q||^2 / 2`.

    :raises DomainError: If `q` does not have one entry per example.
    """
    vec = np.asarray(q, dtype=np.float64)
    if vec.shape != (ds.n,):
        raise DomainError(f"Dual vector has shape {vec.shape}, expected ({ds.n},)")
    ztq = ds.Z.T @ vec
    return 0.5 * float(ztq @ ztq)


def mirror_tolerance(step: TrajectoryStep) -> float:
    """Allowed mirror-identity error after `step`: `1e-9 max(1, ||p_t||_inf)`."""
    return MIRROR_TOL * max(1.0, float(np.max(np.abs(step.p))))


def certify_mirror_step(
    ds: Dataset,
    loss: LossFunction,
    step_t: TrajectoryStep,
    step_t1: TrajectoryStep,
) -> float:
    """
    Largest deviation from the mirror-descent form of one gradient step.

    Returns `max(||p_{t+1} - (p_t - eta_hat_t Z Z^T q_t)||_inf,
    ||q_{t+1} - grad psi(p_{t+1})||_inf)`. `Z Z^T` is never formed.

    :raises UsageError: If the steps are not consecutive.
    """
    if step_t1.t != step_t.t + 1:
        raise UsageError(
            f"Mirror step needs consecutive iterates, got t={step_t.t} and t={step_t1.t}"
        )
    Z = ds.Z
    predicted = step_t.p - step_t.eta_hat * (Z @ (Z.T @ step_t.q))
    p_err = float(np.max(np.abs(step_t1.p - predicted)))
    q_err = float(np.max(np.abs(step_t1.q - grad_psi(loss, step_t1.p).q)))
    return max(p_err, q_err)


def _certified_range(
    traj: Trajectory, loss: LossFunction
) -> typing.Tuple[typing.Optional[int], float, typing.List[TrajectoryStep]]:
    start = traj.certified_from
    if traj.policy.kind is PolicyKind.LOGISTIC_TWO_PHASE and loss.beta_sublevel is not None:
        beta = loss.beta_sublevel
    else:
        beta = loss.beta(traj.n)
    steps = [] if start is None else [s for s in traj.steps if s.t >= start]
    return start, beta, steps


def _preconditions(traj: Trajectory, beta: float, start: typing.Optional[int]) -> bool:
    return (
        start is not None
        and traj.hat_nonincreasing
        and traj.max_hat <= (1.0 / beta) * (1.0 + MONOTONE_TOL)
    )


def certify_dual_main(
    traj: Trajectory,
    qbar: DualPoint,
    loss: LossFunction,
    ds: Dataset,
    rel_tol: float = REL_TOL,
) -> DualCertificate:
    """
    Certify dual convergence along a trajectory against the comparator `qbar`.

    Per-iteration inequalities are checked between consecutive recorded
    steps in their summed form, which reduces to the single-step form when
    every iterate is recorded. Under the two-phase schedule the certified
    range starts at the warm start with the sublevel smoothness constant.
    A certificate whose preconditions fail is returned with
    `applicable=False` rather than raising.
    """
    start, beta, steps = _certified_range(traj, loss)
    applicable = _preconditions(traj, beta, start)
    f_bar = dual_objective(ds, qbar.q)

    mirror_err = 0.0
    mirror_pairs = 0
    worst_f = -math.inf
    telescoping: typing.List[SlackRecord] = []
    md_step: typing.List[SlackRecord] = []
    psi_decrease: typing.List[SlackRecord] = []
    psi_telescoped: typing.List[SlackRecord] = []
    rate: typing.List[SlackRecord] = []

    if not steps:
        logger.info("No recorded steps in the certified range; dual certificate is empty")
        return DualCertificate(
            applicable=False,
            start_t=start,
            beta=beta,
            mirror_identity_max_err=0.0,
            mirror_pairs=0,
            f_monotone=True,
            f_worst_violation=-math.inf,
            telescoping_slack=[],
            md_step_slack=[],
            psi_decrease_slack=[],
            psi_telescoped_slack=[],
            rate_bound=[],
            initial_divergence=math.nan,
            f_qbar=f_bar,
            rel_tol=rel_tol,
        )

    first = steps[0]
    divergences = [bregman(loss, qbar, s.dual) for s in steps]
    initial = divergences[0]

    for i, (a, b) in enumerate(zip(steps, steps[1:])):
        d_a, d_b = divergences[i], divergences[i + 1]
        if b.t == a.t + 1:
            err = certify_mirror_step(ds, loss, a, b)
            mirror_err = max(mirror_err, err / max(1.0, float(np.max(np.abs(a.p)))))
            mirror_pairs += 1
            grad_f = ds.Z @ (ds.Z.T @ a.q)
            md_rhs = (
                a.eta_hat * float(grad_f @ (a.q - b.q))
                - bregman(loss, b.dual, a.dual)
                + d_a
                - d_b
            )
            md_step.append(at_most(a.t, a.eta_hat * (a.f_val - f_bar), md_rhs))

        worst_f = max(worst_f, b.f_val - a.f_val)
        hat_span = b.hat_sum - a.hat_sum
        telescoping.append(
            at_most(
                a.t,
                (b.hat_f_next_sum - a.hat_f_next_sum) - hat_span * f_bar,
                d_a - d_b,
            )
        )
        psi_decrease.append(
            at_least(
                a.t,
                a.psi_val - b.psi_val,
                (b.hat_f_sum - a.hat_f_sum) + (b.hat_f_next_sum - a.hat_f_next_sum),
            )
        )

    for s in steps[1:]:
        hat_span = s.hat_sum - first.hat_sum
        psi_telescoped.append(
            at_least(
                s.t,
                first.psi_val - s.psi_val,
                2.0 * (s.hat_f_sum - first.hat_f_sum) - first.eta_hat * first.f_val,
            )
        )
        if hat_span > 0.0:
            rate.append(at_most(s.t, s.f_val - f_bar, initial / hat_span))

    certificate = DualCertificate(
        applicable=applicable,
        start_t=start,
        beta=beta,
        mirror_identity_max_err=mirror_err,
        mirror_pairs=mirror_pairs,
        f_monotone=worst_f <= MONOTONE_TOL,
        f_worst_violation=worst_f,
        telescoping_slack=telescoping,
        md_step_slack=md_step,
        psi_decrease_slack=psi_decrease,
        psi_telescoped_slack=psi_telescoped,
        rate_bound=rate,
        initial_divergence=initial,
        f_qbar=f_bar,
        rel_tol=rel_tol,
    )
    if applicable and not certificate.passed:
        logger.warning("Dual convergence certificate failed for %s", traj.policy.token)
    return certificate


def certify_standard_smooth(
    traj: Trajectory,
    loss: LossFunction,
    ds: Dataset,
    rel_tol: float = REL_TOL,
) -> SmoothnessCertificate:
    """Certify the standard smoothness descent bound and the Bregman lower bound."""
    start, beta, steps = _certified_range(traj, loss)
    applicable = start is not None and traj.max_hat <= (1.0 / beta) * (1.0 + MONOTONE_TOL)
    psi_slack: typing.List[SlackRecord] = []
    bregman_slack: typing.List[SlackRecord] = []
    for a, b in zip(steps, steps[1:]):
        rhs = -2.0 * (b.hat_f_sum - a.hat_f_sum) + beta * (b.hat_sq_f_sum - a.hat_sq_f_sum)
        psi_slack.append(at_most(a.t, b.psi_val - a.psi_val, rhs))
        if b.t == a.t + 1:
            spread = float(np.sum(np.abs(b.q - a.q)))
            bregman_slack.append(
                at_least(a.t, bregman(loss, b.dual, a.dual), spread**2 / (2.0 * beta))
            )
    return SmoothnessCertificate(
        applicable=applicable,
        start_t=start,
        beta=beta,
        psi_slack=psi_slack,
        bregman_slack=bregman_slack,
        rel_tol=rel_tol,
    )
