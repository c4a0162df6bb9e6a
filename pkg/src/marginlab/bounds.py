"""
Rate and bound certification along gradient descent trajectories.

Each check compares trajectory quantities with an explicit bound built from
the margin certificate and returns a `BoundReport` with the slack of every
evaluated inequality. A report is `applicable` when the preconditions of the
bound held on the trajectory; only applicable reports decide pass or fail.
"""

import enum
import logging
import math
import pathlib
import typing

import numpy as np

from marginlab._utils import atomic_write, format_float
from marginlab.data import Dataset, is_lower_bound_dataset
from marginlab.descent import (
    PolicyKind,
    Trajectory,
    TrajectoryStep,
    detect_warm_start,
)
from marginlab.dual import (
    DualCertificate,
    MIRROR_TOL,
    SlackRecord,
    SmoothnessCertificate,
    certify_dual_main,
    certify_standard_smooth,
)
from marginlab.exceptions import ConvergenceError, CertificationError, UsageError
from marginlab.losses import LossFunction, LossKind
from marginlab.oracle import MarginCertificate
from marginlab.smoothed import bregman
from marginlab.types import PathLike, Vector

__all__ = [
    "TheoremId",
    "MarginVariant",
    "TightDirection",
    "BoundCheck",
    "BoundReport",
    "check_dual_main",
    "dual_report",
    "check_standard_smooth",
    "check_bias_main",
    "check_margin_rate",
    "check_tight",
    "check_min_norm_main",
    "check_min_norm_lb",
    "check_norm_and_sum_bounds",
    "check_warm_start",
    "run_bench",
    "write_plot_data",
]

logger = logging.getLogger(__name__)

REL_TOL = 1e-9
HAT_TOL = 1e-12


class TheoremId(str, enum.Enum):
    DUAL_MAIN = "DualMain"
    BIAS_MAIN = "BiasMain"
    MARGIN_T_EXP = "MarginT_Exp"
    MARGIN_T_LOGISTIC = "MarginT_Logistic"
    TIGHT_UPPER = "Tight_Upper"
    TIGHT_LOWER = "Tight_Lower"
    MIN_NORM_MAIN = "MinNormMain"
    MIN_NORM_LB = "MinNormLB"
    WT_NORM = "WtNorm"
    SUM_HETA_LB = "SumHetaLB"
    RISK_RATE = "RiskRate"
    WARM_START2 = "WarmStart2"
    STANDARD_SMOOTH = "StandardSmooth"


class MarginVariant(str, enum.Enum):
    EXP = "exp"
    LOGISTIC_TWO_PHASE = "logistic_two_phase"


class TightDirection(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@typing.final
class BoundCheck(typing.NamedTuple):
    """One inequality `lhs <= rhs` (or `>=`) evaluated at iteration t."""

    label: str
    t: int
    lhs: float
    rhs: float
    slack: float
    """Nonnegative when the inequality holds exactly."""
    passed: bool
    vacuous: bool = False
    """The bound says nothing at this t and is counted as passed."""


@typing.final
class BoundReport(typing.NamedTuple):
    """Outcome of one theorem's checks on one trajectory."""

    theorem_id: TheoremId
    applicable: bool
    preconditions_held: bool
    passed: bool
    checked_at: typing.List[int]
    checks: typing.List[BoundCheck]
    min_slack: float
    rel_tol: float
    notes: typing.List[str]

    @property
    def failed_checks(self) -> typing.List[BoundCheck]:
        return [check for check in self.checks if not check.passed]


def _holds(slack: float, rhs: float, rel_tol: float) -> bool:
    if math.isnan(slack):
        return False
    return slack >= -rel_tol * max(1.0, abs(rhs)) if math.isfinite(rhs) else slack >= 0.0


def _at_most(
    label: str, t: int, lhs: float, rhs: float, rel_tol: float, vacuous: bool = False
) -> BoundCheck:
    slack = rhs - lhs
    return BoundCheck(label, t, lhs, rhs, slack, vacuous or _holds(slack, rhs, rel_tol), vacuous)


def _at_least(
    label: str, t: int, lhs: float, rhs: float, rel_tol: float, vacuous: bool = False
) -> BoundCheck:
    slack = lhs - rhs
    return BoundCheck(label, t, lhs, rhs, slack, vacuous or _holds(slack, rhs, rel_tol), vacuous)


def _from_slack(label: str, record: SlackRecord, rel_tol: float) -> BoundCheck:
    return BoundCheck(
        label,
        record.t,
        record.lhs,
        record.rhs,
        record.slack,
        record.holds(rel_tol),
    )


def _report(
    theorem_id: TheoremId,
    checks: typing.List[BoundCheck],
    *,
    applicable: bool = True,
    preconditions_held: bool = True,
    rel_tol: float = REL_TOL,
    notes: typing.Optional[typing.List[str]] = None,
) -> BoundReport:
    applicable = applicable and preconditions_held
    passed = all(check.passed for check in checks)
    slacks = [check.slack for check in checks if not check.vacuous]
    report = BoundReport(
        theorem_id=theorem_id,
        applicable=applicable,
        preconditions_held=preconditions_held,
        passed=passed,
        checked_at=sorted({check.t for check in checks}),
        checks=checks,
        min_slack=min(slacks) if slacks else math.inf,
        rel_tol=rel_tol,
        notes=list(notes or []),
    )
    if applicable and not passed:
        logger.warning(
            "%s failed at %d check(s); smallest slack %r",
            theorem_id.value,
            len(report.failed_checks),
            report.min_slack,
        )
    return report


def _inapplicable(theorem_id: TheoremId, note: str, rel_tol: float = REL_TOL) -> BoundReport:
    logger.info("%s not applicable: %s", theorem_id.value, note)
    return _report(theorem_id, [], applicable=False, rel_tol=rel_tol, notes=[note])


def _steps_from(traj: Trajectory, start: int) -> typing.List[TrajectoryStep]:
    return [step for step in traj.steps if step.t >= start]


def _perp(w: Vector, u_bar: Vector) -> Vector:
    return w - float(w @ u_bar) * u_bar


def check_dual_main(
    traj: Trajectory,
    cert: MarginCertificate,
    loss: LossFunction,
    ds: Dataset,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    """Report form of `certify_dual_main` against the certificate's comparator."""
    dual = certify_dual_main(traj, cert.qbar, loss, ds, rel_tol=rel_tol)
    return dual_report(dual)


def dual_report(dual: DualCertificate) -> BoundReport:
    rel_tol = dual.rel_tol
    checks = [
        *(_from_slack("telescoping", r, rel_tol) for r in dual.telescoping_slack),
        *(_from_slack("md_step", r, rel_tol) for r in dual.md_step_slack),
        *(_from_slack("psi_decrease", r, rel_tol) for r in dual.psi_decrease_slack),
        *(_from_slack("psi_telescoped", r, rel_tol) for r in dual.psi_telescoped_slack),
        *(_from_slack("rate", r, rel_tol) for r in dual.rate_bound),
    ]
    checks.append(
        BoundCheck(
            "f_monotone",
            dual.start_t or 0,
            dual.f_worst_violation,
            0.0,
            -dual.f_worst_violation,
            dual.f_monotone,
        )
    )
    checks.append(
        BoundCheck(
            "mirror_identity",
            dual.start_t or 0,
            dual.mirror_identity_max_err,
            MIRROR_TOL,
            MIRROR_TOL - dual.mirror_identity_max_err,
            dual.mirror_identity_max_err <= MIRROR_TOL,
        )
    )
    notes = [f"D(qbar, q_start) = {format_float(dual.initial_divergence)}"]
    if not dual.applicable:
        notes.append("effective steps exceeded 1/beta or increased")
    return _report(
        TheoremId.DUAL_MAIN,
        checks,
        preconditions_held=dual.applicable,
        rel_tol=rel_tol,
        notes=notes,
    )


def check_standard_smooth(
    traj: Trajectory,
    loss: LossFunction,
    ds: Dataset,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    smooth: SmoothnessCertificate = certify_standard_smooth(traj, loss, ds, rel_tol=rel_tol)
    checks = [
        *(_from_slack("psi_descent", r, rel_tol) for r in smooth.psi_slack),
        *(_from_slack("bregman_strong_convexity", r, rel_tol) for r in smooth.bregman_slack),
    ]
    return _report(
        TheoremId.STANDARD_SMOOTH,
        checks,
        preconditions_held=smooth.applicable,
        rel_tol=rel_tol,
        notes=[f"beta = {format_float(smooth.beta)}"],
    )


def _dual_preconditions(traj: Trajectory, loss: LossFunction) -> typing.Tuple[bool, float]:
    if traj.policy.kind is PolicyKind.LOGISTIC_TWO_PHASE and loss.beta_sublevel is not None:
        beta = loss.beta_sublevel
    else:
        beta = loss.beta(traj.n)
    held = (
        traj.certified_from is not None
        and traj.hat_nonincreasing
        and traj.max_hat <= (1.0 / beta) * (1.0 + HAT_TOL)
    )
    return held, beta


def check_bias_main(
    traj: Trajectory,
    cert: MarginCertificate,
    loss: LossFunction,
    ds: Dataset,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    """
    Certify the implicit-bias rate.

    For every recorded t with `psi(Z w_t) <= 0`:
    `||Z^T q_t - Z^T qbar||^2 <= 2 D(qbar, q_0) / sum eta_hat` and
    `cos(w_t, -Z^T qbar) >= 1 - delta / sum eta_hat`, with
    `delta = (psi(p_0) + eta_hat_0 f(q_0) + ||w_0|| ||Z^T qbar||) / (2 f(qbar))`.
    Under the two-phase schedule the warm start plays the role of iterate 0.
    """
    held, _ = _dual_preconditions(traj, loss)
    start = traj.certified_from
    if start is None:
        return _inapplicable(TheoremId.BIAS_MAIN, "warm start never reached", rel_tol)
    steps = _steps_from(traj, start)
    if not steps:
        return _inapplicable(TheoremId.BIAS_MAIN, f"nothing recorded from t={start} on", rel_tol)
    first = steps[0]
    ztq_bar = ds.Z.T @ cert.qbar.q
    ztq_bar_norm = float(np.linalg.norm(ztq_bar))
    divergence = bregman(loss, cert.qbar, first.dual)
    delta = (
        first.psi_val + first.eta_hat * first.f_val + first.w_norm * ztq_bar_norm
    ) / (2.0 * cert.f_qbar)

    checks: typing.List[BoundCheck] = []
    for step in steps:
        hat_span = step.hat_sum - first.hat_sum
        if step.psi_val > 0.0 or hat_span <= 0.0 or step.w_norm == 0.0:
            continue
        diff = ds.Z.T @ step.q - ztq_bar
        checks.append(
            _at_most("ztq_distance", step.t, float(diff @ diff), 2.0 * divergence / hat_span, rel_tol)
        )
        cosine = float(step.w @ -ztq_bar) / (step.w_norm * ztq_bar_norm)
        rhs = 1.0 - delta / hat_span
        checks.append(_at_least("cosine", step.t, cosine, rhs, rel_tol, vacuous=rhs <= -1.0))

    if not checks:
        return _inapplicable(TheoremId.BIAS_MAIN, "no recorded t with psi(Z w_t) <= 0", rel_tol)
    notes = [
        f"delta = {format_float(delta)}",
        f"min ||Z^T q_t|| = {format_float(min(step.ztq_norm for step in steps))}",
    ]
    if loss.kind is not LossKind.EXP:
        notes.append("comparator is a gradient descent limit; BiasMain inherits its accuracy")
    return _report(
        TheoremId.BIAS_MAIN, checks, preconditions_held=held, rel_tol=rel_tol, notes=notes
    )


def _margin_checks(
    steps: typing.Iterable[TrajectoryStep],
    bound: typing.Callable[[TrajectoryStep], typing.Optional[typing.Tuple[str, float]]],
    rel_tol: float,
) -> typing.List[BoundCheck]:
    checks: typing.List[BoundCheck] = []
    for step in steps:
        if step.w_norm == 0.0:
            continue
        smoothed = -step.psi_val / step.w_norm
        checks.append(
            _at_least("raw_vs_smoothed", step.t, step.raw_margin / step.w_norm, smoothed, rel_tol)
        )
        evaluated = bound(step)
        if evaluated is None:
            continue
        label, rhs = evaluated
        checks.append(_at_least(label, step.t, smoothed, rhs, rel_tol, vacuous=rhs < 0.0))
    return checks


def check_margin_rate(
    traj: Trajectory,
    cert: MarginCertificate,
    loss: LossFunction,
    variant: MarginVariant,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    """
    Certify the normalized-margin rate.

    Exponential variant: `-psi(Z w_t)/||w_t|| >= gamma - (ln n + 1)/(gamma sum eta_hat)`.
    Logistic variant, for t past the warm start: the closed-form bound
    `gamma - (1 + 512 ln n)/(gamma t - (256 ln n)^2 / gamma)` (vacuous until
    its denominator turns positive) and the bound restarted at the measured
    warm start `t0`,
    `gamma - (psi(p_t0) + eta_hat_t0 f(q_t0) + gamma ||w_t0||)^+ / (gamma sum_{t0 <= j < t} eta_hat_j)`.
    Both variants also check `raw margin >= -psi` after normalization.

    :raises UsageError: If the loss or the schedule does not match `variant`.
    """
    variant = MarginVariant(variant)
    gamma = cert.gamma
    log_n = math.log(traj.n)

    if variant is MarginVariant.EXP:
        if loss.kind is not LossKind.EXP:
            raise UsageError(f"The exponential margin rate needs the exponential loss, not {loss.name}")
        held = traj.w0_is_zero and traj.hat_nonincreasing and traj.max_hat <= 1.0 + HAT_TOL

        def exp_bound(step: TrajectoryStep) -> typing.Optional[typing.Tuple[str, float]]:
            if step.hat_sum <= 0.0:
                return None
            return "rate", gamma - (log_n + 1.0) / (gamma * step.hat_sum)

        checks = _margin_checks(traj.steps, exp_bound, rel_tol)
        return _report(TheoremId.MARGIN_T_EXP, checks, preconditions_held=held, rel_tol=rel_tol)

    if loss.kind is not LossKind.LOGISTIC or traj.policy.kind is not PolicyKind.LOGISTIC_TWO_PHASE:
        raise UsageError(
            "The logistic margin rate needs the logistic loss with the two-phase schedule, "
            f"got {loss.name} with {traj.policy.token}"
        )
    t0 = traj.warm_start_t
    if t0 is None:
        return _inapplicable(TheoremId.MARGIN_T_LOGISTIC, "warm start never reached", rel_tol)
    warm = traj.at(t0)
    restart = max(
        0.0, warm.psi_val + warm.eta_hat * warm.f_val + gamma * warm.w_norm
    )
    burn_in = (256.0 * log_n) ** 2 / gamma

    def logistic_bounds(step: TrajectoryStep) -> typing.Optional[typing.Tuple[str, float]]:
        hat_span = step.hat_sum - warm.hat_sum
        if hat_span <= 0.0:
            return None
        return "restarted", gamma - restart / (gamma * hat_span)

    later = [step for step in traj.steps if step.t > t0]
    checks = _margin_checks(later, logistic_bounds, rel_tol)
    for step in later:
        if step.w_norm == 0.0:
            continue
        denominator = gamma * step.t - burn_in
        rhs = gamma - (1.0 + 512.0 * log_n) / denominator if denominator > 0.0 else -math.inf
        checks.append(
            _at_least("closed_form", step.t, -step.psi_val / step.w_norm, rhs, rel_tol, vacuous=rhs < 0.0)
        )
    held = traj.w0_is_zero and traj.hat_nonincreasing
    return _report(
        TheoremId.MARGIN_T_LOGISTIC,
        checks,
        preconditions_held=held,
        rel_tol=rel_tol,
        notes=[f"measured warm start t0 = {t0}"],
    )


def _perp_distance_checks(
    traj: Trajectory, cert: MarginCertificate, rel_tol: float
) -> typing.Tuple[typing.List[BoundCheck], float]:
    v_bar = typing.cast(Vector, cert.v_bar)
    first = traj.steps[0]
    v0 = _perp(first.w, cert.u_bar)
    surplus = 0.0 if math.isinf(cert.gamma_prime) else 2.0 * math.log(traj.n) / (cert.gamma * cert.gamma_prime)
    rhs = max(float(np.linalg.norm(v0 - v_bar)), 2.0) + surplus + 2.0
    checks = [
        _at_most(
            "perp_distance",
            step.t,
            float(np.linalg.norm(_perp(step.w, cert.u_bar) - v_bar)),
            rhs,
            rel_tol,
        )
        for step in traj.steps
    ]
    return checks, rhs


def _upper_preconditions(traj: Trajectory, cert: MarginCertificate, loss: LossFunction) -> typing.List[str]:
    problems = []
    if loss.kind is not LossKind.EXP:
        problems.append(f"needs the exponential loss, got {loss.name}")
    if not traj.hat_nonincreasing or traj.max_hat > 1.0 + HAT_TOL:
        problems.append("effective steps exceeded 1 or increased")
    if cert.v_bar is None or not cert.perp_strong_convexity > 0.0:
        problems.append("v_bar unavailable")
    return problems


def check_min_norm_main(
    traj: Trajectory,
    cert: MarginCertificate,
    loss: LossFunction,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    """`||v_t - v_bar|| <= max(||v_0 - v_bar||, 2) + 2 ln n / (gamma gamma') + 2`."""
    problems = _upper_preconditions(traj, cert, loss)
    if cert.v_bar is None:
        return _inapplicable(TheoremId.MIN_NORM_MAIN, "; ".join(problems), rel_tol)
    checks, rhs = _perp_distance_checks(traj, cert, rel_tol)
    return _report(
        TheoremId.MIN_NORM_MAIN,
        checks,
        preconditions_held=not problems,
        rel_tol=rel_tol,
        notes=[f"bound = {format_float(rhs)}", *problems],
    )


def check_min_norm_lb(
    traj: Trajectory,
    cert: MarginCertificate,
    ds: Dataset,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    """
    On the lower-bound dataset, `||v_t|| >= ln n - ln 2` for every recorded
    t from the first iterate with `R(w_t) < 2/n` on.

    :raises UsageError: For any other dataset.
    """
    if not is_lower_bound_dataset(ds):
        raise UsageError("The orthogonal lower bound is only defined on the lower-bound dataset")
    tau = _first_below(traj, 2.0 / traj.n)
    if tau is None:
        return _inapplicable(TheoremId.MIN_NORM_LB, "risk never dropped below 2/n", rel_tol)
    floor = math.log(traj.n) - math.log(2.0)
    checks = [
        _at_least("perp_norm", step.t, float(np.linalg.norm(_perp(step.w, cert.u_bar))), floor, rel_tol)
        for step in _steps_from(traj, tau)
    ]
    return _report(
        TheoremId.MIN_NORM_LB,
        checks,
        preconditions_held=traj.w0_is_zero,
        rel_tol=rel_tol,
        notes=[f"tau = {tau}"],
    )


def _first_below(traj: Trajectory, level: float) -> typing.Optional[int]:
    log_level = math.log(level)
    for step in traj.steps:
        if step.log_risk < log_level:
            return step.t
    return None


def check_tight(
    traj: Trajectory,
    cert: MarginCertificate,
    direction: TightDirection,
    loss: typing.Optional[LossFunction] = None,
    ds: typing.Optional[Dataset] = None,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    """
    Certify how fast the normalized iterate approaches `u_bar`.

    Upper: the orthogonal residual bound together with
    `||w_t/||w_t|| - u_bar|| <= sqrt(2) ||v_t|| / ||w_t||` wherever
    `<w_t, u_bar> > 0`. Under a constant primal step `||w_t||` is also
    compared with `ln(t)/gamma` for `t >= 1000`; deviations beyond a factor
    of two are only reported as notes.
    Lower: on the lower-bound dataset, from the first iterate with
    `R(w_t) < 2/n`, `||v_t|| >= ln(n/2)` and
    `||w_t/||w_t|| - u_bar|| >= ln(n/2) / ||w_t||`.

    :raises UsageError: For the lower direction on any other dataset.
    """
    direction = TightDirection(direction)
    loss = loss or traj.loss
    if direction is TightDirection.LOWER:
        if ds is None or not is_lower_bound_dataset(ds):
            raise UsageError("The lower tightness check needs the lower-bound dataset")
        tau = _first_below(traj, 2.0 / traj.n)
        if tau is None:
            return _inapplicable(TheoremId.TIGHT_LOWER, "risk never dropped below 2/n", rel_tol)
        floor = math.log(traj.n) - math.log(2.0)
        checks: typing.List[BoundCheck] = []
        for step in _steps_from(traj, tau):
            v_norm = float(np.linalg.norm(_perp(step.w, cert.u_bar)))
            checks.append(_at_least("perp_norm", step.t, v_norm, floor, rel_tol))
            distance = float(np.linalg.norm(step.w / step.w_norm - cert.u_bar))
            checks.append(_at_least("direction", step.t, distance, floor / step.w_norm, rel_tol))
        return _report(
            TheoremId.TIGHT_LOWER,
            checks,
            preconditions_held=traj.w0_is_zero and loss.kind is LossKind.EXP,
            rel_tol=rel_tol,
            notes=[f"tau = {tau}"],
        )

    problems = _upper_preconditions(traj, cert, loss)
    if cert.v_bar is None:
        return _inapplicable(TheoremId.TIGHT_UPPER, "; ".join(problems), rel_tol)
    checks, _ = _perp_distance_checks(traj, cert, rel_tol)
    notes = list(problems)
    implied: typing.List[float] = []
    for step in traj.steps:
        if step.w_norm == 0.0 or float(step.w @ cert.u_bar) <= 0.0:
            continue
        v_norm = float(np.linalg.norm(_perp(step.w, cert.u_bar)))
        distance = float(np.linalg.norm(step.w / step.w_norm - cert.u_bar))
        checks.append(
            _at_most("direction", step.t, distance, math.sqrt(2.0) * v_norm / step.w_norm, rel_tol)
        )
        if step.hat_sum > 0.0 and traj.n > 1:
            implied.append(distance * step.hat_sum / math.log(traj.n))
    if implied:
        notes.append(f"implied constant of the O(ln n) term: {format_float(max(implied))}")
    if traj.policy.kind is PolicyKind.CONSTANT_ETA:
        for step in traj.steps:
            if step.t < 1000:
                continue
            ratio = cert.gamma * step.w_norm / math.log(step.t)
            if not 0.5 <= ratio <= 2.0:
                logger.warning(
                    "gamma ||w_t|| / ln t = %r at t=%d is outside [1/2, 2]", ratio, step.t
                )
                notes.append(f"norm growth ratio {format_float(ratio)} at t={step.t} outside [1/2, 2]")
    return _report(
        TheoremId.TIGHT_UPPER, checks, preconditions_held=not problems, rel_tol=rel_tol, notes=notes
    )


def check_norm_and_sum_bounds(
    traj: Trajectory,
    cert: MarginCertificate,
    rel_tol: float = REL_TOL,
) -> typing.List[BoundReport]:
    """
    Norm growth, effective-step sum and risk rate, as three reports.

    `WtNorm`: `gamma sum eta_hat <= ||w_t|| <= sum eta_hat` for the
    exponential loss (lower side only for the logistic loss).
    `SumHetaLB`: `sum eta_hat >= ln(1 + eta gamma^2 t / 2)` and `RiskRate`:
    `R(w_t) <= 1 / (1 + eta gamma^2 t / 2)`, both for the exponential loss
    under a constant primal step `eta <= 1`. All need `w_0 = 0`.
    """
    loss = traj.loss
    gamma = cert.gamma
    reports: typing.List[BoundReport] = []

    if not traj.w0_is_zero:
        reports.append(_inapplicable(TheoremId.WT_NORM, "needs w_0 = 0", rel_tol))
    elif loss.kind not in (LossKind.EXP, LossKind.LOGISTIC):
        reports.append(_inapplicable(TheoremId.WT_NORM, f"not defined for {loss.name}", rel_tol))
    else:
        checks: typing.List[BoundCheck] = []
        for step in traj.steps:
            checks.append(_at_least("lower", step.t, step.w_norm, gamma * step.hat_sum, rel_tol))
            if loss.kind is LossKind.EXP:
                checks.append(_at_most("upper", step.t, step.w_norm, step.hat_sum, rel_tol))
        reports.append(_report(TheoremId.WT_NORM, checks, rel_tol=rel_tol))

    constant_step = (
        traj.policy.kind is PolicyKind.CONSTANT_ETA
        and loss.kind is LossKind.EXP
        and typing.cast(float, traj.policy.value) <= 1.0
    )
    if not (constant_step and traj.w0_is_zero):
        note = "needs the exponential loss, a constant step eta <= 1 and w_0 = 0"
        reports.append(_inapplicable(TheoremId.SUM_HETA_LB, note, rel_tol))
        reports.append(_inapplicable(TheoremId.RISK_RATE, note, rel_tol))
        return reports

    eta = typing.cast(float, traj.policy.value)
    sum_checks: typing.List[BoundCheck] = []
    risk_checks: typing.List[BoundCheck] = []
    for step in traj.steps:
        growth = 1.0 + eta * gamma * gamma * step.t / 2.0
        sum_checks.append(_at_least("sum_eta_hat", step.t, step.hat_sum, math.log(growth), rel_tol))
        risk_checks.append(_at_most("risk", step.t, step.risk, 1.0 / growth, rel_tol))
    reports.append(_report(TheoremId.SUM_HETA_LB, sum_checks, rel_tol=rel_tol))
    reports.append(_report(TheoremId.RISK_RATE, risk_checks, rel_tol=rel_tol))
    return reports


def check_warm_start(
    traj: Trajectory,
    cert: MarginCertificate,
    loss: LossFunction,
    rel_tol: float = REL_TOL,
) -> BoundReport:
    """
    Certify the logistic warm start.

    At the first iterate `t0` with `L(Z w_t) <= l(0)/(2 e^2)`: `psi <= 0`,
    `t0 <= (256 ln n / gamma)^2` and `||w_t0|| <= 256 ln n / gamma`. Every
    recorded `t <= t0` also satisfies
    `t/2 + ||w_t||^2 - 2 r <w_t, u_bar> <= 0` with `r = 128 ln n / gamma`.
    The last three need `n >= 2`.

    :raises UsageError: Without the logistic loss and the two-phase schedule.
    """
    if loss.kind is not LossKind.LOGISTIC or traj.policy.kind is not PolicyKind.LOGISTIC_TWO_PHASE:
        raise UsageError("The warm-start check needs the logistic loss with the two-phase schedule")
    try:
        warm = detect_warm_start(traj, loss)
    except ConvergenceError as exc:
        return _inapplicable(TheoremId.WARM_START2, str(exc), rel_tol)
    except CertificationError as exc:
        step = traj.at(traj.warm_start_t) if traj.warm_start_t is not None else traj.steps[-1]
        check = _at_most("psi_nonpositive", step.t, step.psi_val, 0.0, 0.0)
        return _report(TheoremId.WARM_START2, [check], rel_tol=rel_tol, notes=[str(exc)])

    checks = [_at_most("psi_nonpositive", warm.t0, warm.psi_at_t0, 0.0, 0.0)]
    notes = [f"t0 = {warm.t0}"]
    if traj.n >= 2:
        radius = 256.0 * math.log(traj.n) / cert.gamma
        checks.append(_at_most("t0", warm.t0, float(warm.t0), radius**2, rel_tol))
        checks.append(_at_most("w_norm", warm.t0, warm.w_norm_at_t0, radius, rel_tol))
        r = radius / 2.0
        for step in traj.steps:
            if step.t > warm.t0:
                break
            potential = step.t / 2.0 + step.w_norm**2 - 2.0 * r * float(step.w @ cert.u_bar)
            checks.append(_at_most("potential", step.t, potential, 0.0, rel_tol))
    else:
        notes.append("time and norm bounds need n >= 2")
    return _report(
        TheoremId.WARM_START2,
        checks,
        preconditions_held=traj.w0_is_zero,
        rel_tol=rel_tol,
        notes=notes,
    )


def run_bench(
    traj: Trajectory,
    cert: MarginCertificate,
    ds: Dataset,
    rel_tol: float = REL_TOL,
) -> typing.List[BoundReport]:
    """Run every check that fits the trajectory's loss, schedule and dataset."""
    loss = traj.loss
    reports = [
        check_dual_main(traj, cert, loss, ds, rel_tol),
        check_standard_smooth(traj, loss, ds, rel_tol),
        check_bias_main(traj, cert, loss, ds, rel_tol),
    ]
    if loss.kind is LossKind.EXP:
        reports.append(check_margin_rate(traj, cert, loss, MarginVariant.EXP, rel_tol))
        reports.append(check_min_norm_main(traj, cert, loss, rel_tol))
        reports.append(check_tight(traj, cert, TightDirection.UPPER, loss, ds, rel_tol))
        if is_lower_bound_dataset(ds):
            reports.append(check_tight(traj, cert, TightDirection.LOWER, loss, ds, rel_tol))
            reports.append(check_min_norm_lb(traj, cert, ds, rel_tol))
    if traj.policy.kind is PolicyKind.LOGISTIC_TWO_PHASE and loss.kind is LossKind.LOGISTIC:
        reports.append(
            check_margin_rate(traj, cert, loss, MarginVariant.LOGISTIC_TWO_PHASE, rel_tol)
        )
        reports.append(check_warm_start(traj, cert, loss, rel_tol))
    reports.extend(check_norm_and_sum_bounds(traj, cert, rel_tol))
    failed = [r.theorem_id.value for r in reports if r.applicable and not r.passed]
    logger.info(
        "Bound bench: %d report(s), %d applicable, failed: %s",
        len(reports),
        sum(r.applicable for r in reports),
        ", ".join(failed) or "none",
    )
    return reports


def write_plot_data(
    reports: typing.Iterable[BoundReport], directory: PathLike
) -> typing.List[pathlib.Path]:
    """
    Write one CSV with columns `t,lhs,rhs,slack` per theorem and check label.

    Files are named `<theorem>-<label>.csv`.
    """
    target = pathlib.Path(directory)
    written: typing.List[pathlib.Path] = []
    for report in reports:
        series: typing.Dict[str, typing.List[BoundCheck]] = {}
        for check in report.checks:
            series.setdefault(check.label, []).append(check)
        for label, checks in series.items():
            lines = ["t,lhs,rhs,slack"]
            lines.extend(
                ",".join(
                    [str(c.t), format_float(c.lhs), format_float(c.rhs), format_float(c.slack)]
                )
                for c in checks
            )
            path = target / f"{report.theorem_id.value}-{label}.csv"
            written.append(atomic_write(path, "\n".join(lines) + "\n"))
    return written
