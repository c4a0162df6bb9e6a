"""
Gradient descent on the empirical risk with full primal-dual recording.

Every iteration is written as the dual update `w_{t+1} = w_t - eta_hat_t Z^T q_t`,
with `q_t = grad psi(Z w_t)` and the effective step `eta_hat_t = eta_t l'(psi)/n`.
Step sizes are handled in the log domain since `eta_t` grows without bound
under the risk-normalized schedules.
"""

import csv
import enum
import logging
import math
import pathlib
import time
import typing

import numpy as np

from marginlab._utils import atomic_write, format_float
from marginlab.data import Dataset
from marginlab.exceptions import (
    CertificationError,
    ConfigurationError,
    ConvergenceError,
    DatasetLoadError,
    DomainError,
    NumericError,
    UsageError,
)
from marginlab.losses import LossFunction, LossKind, parse_loss
from marginlab.smoothed import DualPoint, grad_psi
from marginlab.types import ArrayLike, PathLike, Vector

__all__ = [
    "PolicyKind",
    "StepSizePolicy",
    "constant_eta",
    "constant_hat_eta",
    "aggressive_risk",
    "inverse_sqrt_hat",
    "logistic_two_phase",
    "parse_policy",
    "TrajectoryStep",
    "Trajectory",
    "WarmStart",
    "risk",
    "grad_risk",
    "iterate_gd",
    "run_gd",
    "warm_start_threshold",
    "detect_warm_start",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

logger = logging.getLogger(__name__)

HAT_TOL = 1e-12


class PolicyKind(str, enum.Enum):
    """Step-size schedules."""

    CONSTANT_ETA = "constant_eta"
    """Fixed `eta_t = eta`."""
    CONSTANT_HAT_ETA = "constant_hat_eta"
    """Fixed effective step `eta_hat_t = c`."""
    AGGRESSIVE_RISK = "aggressive_risk"
    """`eta_t = c / R(w_t)`, exponential loss only."""
    INVERSE_SQRT_HAT = "inverse_sqrt_hat"
    """`eta_hat_t = c / sqrt(t + 1)`."""
    LOGISTIC_TWO_PHASE = "logistic_two_phase"
    """`eta_t = 1/(2 R(w_t))` until the warm start, then `eta_hat_t = 1/2`."""


@typing.final
class StepSizePolicy(typing.NamedTuple):
    """A step-size schedule and its parameter."""

    kind: PolicyKind
    value: typing.Optional[float] = None

    @property
    def token(self) -> str:
        if self.value is None:
            return self.kind.value
        return f"{self.kind.value}:{format_float(self.value)}"

    def validate(self, loss: LossFunction, n: int) -> None:
        """
        Check the schedule against the loss and dataset size.

        :raises ConfigurationError: If the schedule's preconditions fail.
        """
        if self.kind is PolicyKind.LOGISTIC_TWO_PHASE:
            if loss.kind is not LossKind.LOGISTIC:
                raise ConfigurationError(
                    f"The two-phase schedule is defined for the logistic loss, not {loss.name}"
                )
            return
        value = self.value
        if value is None or not math.isfinite(value) or value <= 0.0:
            raise ConfigurationError(
                f"Step-size parameter of {self.kind.value} must be positive, got {value!r}"
            )
        if self.kind is PolicyKind.CONSTANT_HAT_ETA:
            beta = loss.beta(n)
            if value > (1.0 / beta) * (1.0 + HAT_TOL):
                raise ConfigurationError(
                    f"eta_hat = {value!r} exceeds 1/beta = {1.0 / beta!r} for {loss.name} with n={n}"
                )
        elif self.kind is PolicyKind.AGGRESSIVE_RISK:
            if loss.kind is not LossKind.EXP:
                raise ConfigurationError(
                    f"The risk-normalized schedule needs the exponential loss, not {loss.name}"
                )
            if value > 1.0:
                raise ConfigurationError(
                    f"eta_hat = {value!r} exceeds 1 for the risk-normalized schedule"
                )

    def claims_nonincreasing(self, loss: LossFunction) -> bool:
        """Whether the effective steps are nonincreasing over the whole run."""
        if self.kind in (
            PolicyKind.CONSTANT_HAT_ETA,
            PolicyKind.AGGRESSIVE_RISK,
            PolicyKind.INVERSE_SQRT_HAT,
        ):
            return True
        if self.kind is PolicyKind.CONSTANT_ETA:
            # eta_hat = eta R(w_t) and the risk does not increase while eta <= 1
            return loss.kind is LossKind.EXP and typing.cast(float, self.value) <= 1.0
        return False


def constant_eta(eta: float) -> StepSizePolicy:
    return StepSizePolicy(PolicyKind.CONSTANT_ETA, float(eta))


def constant_hat_eta(c: float) -> StepSizePolicy:
    return StepSizePolicy(PolicyKind.CONSTANT_HAT_ETA, float(c))


def aggressive_risk(c: float = 1.0) -> StepSizePolicy:
    return StepSizePolicy(PolicyKind.AGGRESSIVE_RISK, float(c))


def inverse_sqrt_hat(c0: float) -> StepSizePolicy:
    return StepSizePolicy(PolicyKind.INVERSE_SQRT_HAT, float(c0))


def logistic_two_phase() -> StepSizePolicy:
    return StepSizePolicy(PolicyKind.LOGISTIC_TWO_PHASE)


def parse_policy(token: str) -> StepSizePolicy:
    """Inverse of `StepSizePolicy.token`."""
    name, _, raw = token.strip().partition(":")
    try:
        kind = PolicyKind(name)
        value = float(raw) if raw else None
    except ValueError as exc:
        raise ConfigurationError(f"Unknown step-size policy {token!r}") from exc
    return StepSizePolicy(kind, value)


@typing.final
class TrajectoryStep(typing.NamedTuple):
    """Primal-dual state of one gradient descent iterate."""

    t: int
    w: Vector
    p: Vector
    """`Z w`."""
    dual: DualPoint
    """`q_t = grad psi(p)` anchored at `p`."""
    eta: float
    """Primal step size; may be `inf` when only its logarithm is representable."""
    log_eta: float
    eta_hat: float
    """Effective step `eta l'(psi(p))/n` used from this iterate."""
    risk: float
    log_risk: float
    psi_val: float
    f_val: float
    """`||Z^T q||^2 / 2`."""
    raw_margin: float
    """`min_i <-z_i, w>`."""
    w_norm: float
    phase: int = 0
    """1 or 2 under the two-phase schedule, 0 otherwise."""
    hat_sum: float = 0.0
    """`sum_{j<t} eta_hat_j`."""
    hat_f_sum: float = 0.0
    """`sum_{j<t} eta_hat_j f(q_j)`."""
    hat_f_next_sum: float = 0.0
    """`sum_{j<t} eta_hat_j f(q_{j+1})`."""
    hat_sq_f_sum: float = 0.0
    """`sum_{j<t} eta_hat_j^2 f(q_j)`."""
    hat_ztq_sum: float = 0.0
    """`sum_{j<t} eta_hat_j ||Z^T q_j||`."""

    @property
    def q(self) -> Vector:
        return self.dual.q

    @property
    def ztq_norm(self) -> float:
        return math.sqrt(2.0 * self.f_val)


@typing.final
class Trajectory(typing.NamedTuple):
    """Recorded gradient descent run."""

    steps: typing.List[TrajectoryStep]
    loss: LossFunction
    policy: StepSizePolicy
    n: int
    d: int
    T: int
    record_every: int
    warm_start_t: typing.Optional[int] = None
    """First iterate of the second phase of the two-phase schedule."""
    hat_nonincreasing: bool = True
    """Whether the effective steps never increased over the certified range."""
    max_hat: float = 0.0
    """Largest effective step over the certified range."""

    @property
    def certified_from(self) -> typing.Optional[int]:
        """First iteration from which the dual guarantees apply."""
        if self.policy.kind is PolicyKind.LOGISTIC_TWO_PHASE:
            return self.warm_start_t
        return 0

    @property
    def w0_is_zero(self) -> bool:
        return bool(self.steps) and not np.any(self.steps[0].w)

    def at(self, t: int) -> TrajectoryStep:
        """The recorded step with iteration index `t`."""
        for step in self.steps:
            if step.t == t:
                return step
        raise UsageError(f"Iteration {t} was not recorded")


def _check_dims(ds: Dataset, w: Vector) -> None:
    if w.shape != (ds.d,):
        raise DomainError(f"Weight vector has shape {w.shape}, expected ({ds.d},)")


def risk(ds: Dataset, loss: LossFunction, w: ArrayLike) -> float:
    """Empirical risk `R(w) = (1/n) sum_i l(<z_i, w>)`."""
    vec = np.asarray(w, dtype=np.float64)
    _check_dims(ds, vec)
    return float(np.mean(loss.value(ds.Z @ vec)))


def grad_risk(ds: Dataset, loss: LossFunction, w: ArrayLike) -> Vector:
    """Gradient `(1/n) Z^T l'(Z w)` of the empirical risk."""
    vec = np.asarray(w, dtype=np.float64)
    _check_dims(ds, vec)
    return typing.cast(Vector, ds.Z.T @ np.asarray(loss.first(ds.Z @ vec)) / ds.n)


def warm_start_threshold(loss: LossFunction) -> float:
    """`l(0) / (2 e^2)`."""
    return float(loss.value(0.0)) / (2.0 * math.e**2)


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _effective_step(
    policy: StepSizePolicy,
    t: int,
    log_lprime: float,
    log_risk: float,
    log_n: float,
    phase: int,
) -> typing.Tuple[float, float]:
    """Return `(eta_hat, log_eta)` for iterate t."""
    kind = policy.kind
    if kind is PolicyKind.CONSTANT_ETA:
        log_eta = math.log(typing.cast(float, policy.value))
        return _exp(log_eta + log_lprime - log_n), log_eta
    if kind is PolicyKind.CONSTANT_HAT_ETA:
        hat = typing.cast(float, policy.value)
        return hat, math.log(hat) + log_n - log_lprime
    if kind is PolicyKind.AGGRESSIVE_RISK:
        hat = typing.cast(float, policy.value)
        log_eta = math.log(hat) - log_risk
        return _exp(log_eta + log_lprime - log_n), log_eta
    if kind is PolicyKind.INVERSE_SQRT_HAT:
        hat = typing.cast(float, policy.value) / math.sqrt(t + 1.0)
        return hat, math.log(hat) + log_n - log_lprime
    if phase == 1:
        log_eta = -math.log(2.0) - log_risk
        return _exp(log_eta + log_lprime - log_n), log_eta
    return 0.5, -math.log(2.0) + log_n - log_lprime


def iterate_gd(
    ds: Dataset,
    loss: LossFunction,
    policy: StepSizePolicy,
    w0: typing.Optional[ArrayLike] = None,
) -> typing.Iterator[TrajectoryStep]:
    """
    Yield the iterates of gradient descent indefinitely, starting at `t = 0`.

    :raises NumericError: When an iterate becomes non-finite, or when a
        schedule that promises nonincreasing effective steps breaks that
        promise beyond a relative tolerance of 1e-12.
    """
    Z = ds.Z
    w = np.zeros(ds.d) if w0 is None else np.array(w0, dtype=np.float64)
    _check_dims(ds, w)
    log_n = math.log(ds.n)
    strict = policy.claims_nonincreasing(loss)
    log_threshold = math.log(warm_start_threshold(loss))
    phase = 1 if policy.kind is PolicyKind.LOGISTIC_TWO_PHASE else 0

    hat_sum = hat_f_sum = hat_f_next_sum = hat_sq_f_sum = hat_ztq_sum = 0.0
    prev_hat: typing.Optional[float] = None
    t = 0
    while True:
        if not np.all(np.isfinite(w)):
            raise NumericError("Weights became non-finite", iteration=t)
        p = Z @ w
        try:
            dual = grad_psi(loss, p)
        except NumericError as exc:
            raise NumericError(exc.message, iteration=t) from exc
        value = dual.psi_at_anchor
        log_lprime = float(loss.log_first(value))
        log_loss_sum = float(loss.log_value(value))
        log_risk = log_loss_sum - log_n
        ztq = Z.T @ dual.q
        f_val = 0.5 * float(ztq @ ztq)

        if phase == 1 and log_loss_sum <= log_threshold:
            phase = 2
        eta_hat, log_eta = _effective_step(policy, t, log_lprime, log_risk, log_n, phase)
        if not (math.isfinite(eta_hat) and math.isfinite(value)):
            raise NumericError("Effective step or smoothed margin became non-finite", iteration=t)
        if prev_hat is not None:
            hat_f_next_sum += prev_hat * f_val
            if strict and eta_hat > prev_hat * (1.0 + HAT_TOL):
                raise NumericError(
                    f"Effective step increased from {prev_hat!r} to {eta_hat!r}",
                    iteration=t,
                )

        yield TrajectoryStep(
            t=t,
            w=w,
            p=p,
            dual=dual,
            eta=_exp(log_eta),
            log_eta=log_eta,
            eta_hat=eta_hat,
            risk=_exp(log_risk),
            log_risk=log_risk,
            psi_val=value,
            f_val=f_val,
            raw_margin=float(-np.max(p)),
            w_norm=float(np.linalg.norm(w)),
            phase=phase,
            hat_sum=hat_sum,
            hat_f_sum=hat_f_sum,
            hat_f_next_sum=hat_f_next_sum,
            hat_sq_f_sum=hat_sq_f_sum,
            hat_ztq_sum=hat_ztq_sum,
        )

        hat_sum += eta_hat
        hat_f_sum += eta_hat * f_val
        hat_sq_f_sum += eta_hat * eta_hat * f_val
        hat_ztq_sum += eta_hat * math.sqrt(2.0 * f_val)
        prev_hat = eta_hat
        w = w - eta_hat * ztq
        t += 1


def run_gd(
    ds: Dataset,
    loss: LossFunction,
    policy: StepSizePolicy,
    w0: typing.Optional[ArrayLike] = None,
    T: int = 1000,
    record_every: int = 1,
) -> Trajectory:
    """
    Run T steps of gradient descent and record the trajectory.

    Steps with `t % record_every == 0`, the final step and, under the
    two-phase schedule, the first second-phase step are recorded.

    :param ds: Dataset
    :param loss: Loss
    :param policy: Step-size schedule, validated against `loss` and `ds.n`
    :param w0: Initial weights, zero by default
    :param T: Number of steps; the trajectory holds iterates 0..T
    :param record_every: Recording stride
    :raises ConfigurationError: For invalid arguments.
    :raises NumericError: If the run diverges.
    """
    if not isinstance(T, int) or T < 0:
        raise ConfigurationError(f"T must be a nonnegative integer, got {T!r}")
    if not isinstance(record_every, int) or record_every < 1:
        raise ConfigurationError(f"record_every must be a positive integer, got {record_every!r}")
    policy.validate(loss, ds.n)

    logger.info(
        "Running gradient descent: loss=%s policy=%s n=%d d=%d T=%d",
        loss.name,
        policy.token,
        ds.n,
        ds.d,
        T,
    )
    started = time.perf_counter()
    steps: typing.List[TrajectoryStep] = []
    warm_start_t: typing.Optional[int] = None
    hats: typing.List[float] = []
    for step in iterate_gd(ds, loss, policy, w0):
        switched = step.phase == 2 and warm_start_t is None
        if switched:
            warm_start_t = step.t
            logger.info("Warm start reached at t=%d", step.t)
        if step.t % record_every == 0 or step.t == T or switched:
            steps.append(step)
        if warm_start_t is not None or policy.kind is not PolicyKind.LOGISTIC_TWO_PHASE:
            hats.append(step.eta_hat)
        if step.t >= T:
            break

    # the last recorded hat belongs to iterate T, which never takes a step
    taken = np.array(hats[:-1]) if len(hats) > 1 else np.array(hats)
    if taken.size > 1:
        increases = taken[1:] - taken[:-1] * (1.0 + HAT_TOL)
        nonincreasing = bool(np.all(increases <= 0.0))
    else:
        nonincreasing = True
    if policy.kind is PolicyKind.LOGISTIC_TWO_PHASE and warm_start_t is None:
        nonincreasing = False

    logger.info(
        "Gradient descent finished: T=%d, %d steps recorded in %.3fs",
        T,
        len(steps),
        time.perf_counter() - started,
    )
    return Trajectory(
        steps=steps,
        loss=loss,
        policy=policy,
        n=ds.n,
        d=ds.d,
        T=T,
        record_every=record_every,
        warm_start_t=warm_start_t,
        hat_nonincreasing=nonincreasing,
        max_hat=float(np.max(taken)) if taken.size else 0.0,
    )


@typing.final
class WarmStart(typing.NamedTuple):
    """The first iterate inside the logistic warm-start region."""

    t0: int
    w_norm_at_t0: float
    psi_at_t0: float
    loss_sum_at_t0: float


def detect_warm_start(traj: Trajectory, loss: LossFunction) -> WarmStart:
    """
    Find the first recorded t with `L(Z w_t) <= l(0)/(2 e^2)`.

    :raises UsageError: For a loss other than the logistic loss.
    :raises ConvergenceError: If the condition is never reached; the
        residual is the final loss sum.
    :raises CertificationError: If `psi(Z w_t0) > 0` at the detected step.
    """
    if loss.kind is not LossKind.LOGISTIC:
        raise UsageError(f"Warm-start detection needs the logistic loss, not {loss.name}")
    threshold = warm_start_threshold(loss)
    for step in traj.steps:
        loss_sum = math.exp(step.log_risk) * traj.n
        if loss_sum <= threshold:
            if step.psi_val > 0.0:
                raise CertificationError(
                    f"Smoothed margin {step.psi_val!r} is positive at the warm start t={step.t}"
                )
            return WarmStart(step.t, step.w_norm, step.psi_val, loss_sum)
    final = math.exp(traj.steps[-1].log_risk) * traj.n if traj.steps else math.nan
    raise ConvergenceError(
        f"Warm-start condition L <= {threshold!r} not reached within T={traj.T}",
        residual=final,
        iterations=traj.T,
    )


TRAJECTORY_COLUMNS = (
    "t",
    "eta",
    "log_eta",
    "eta_hat",
    "risk",
    "log_risk",
    "psi",
    "f_dual",
    "raw_margin",
    "w_norm",
    "cos_to_ubar",
    "phase",
    "hat_sum",
    "hat_f_sum",
    "hat_f_next_sum",
    "hat_sq_f_sum",
    "hat_ztq_sum",
)


def write_trajectory_csv(
    traj: Trajectory,
    path: PathLike,
    u_bar: typing.Optional[ArrayLike] = None,
    dump_w: bool = True,
) -> pathlib.Path:
    """
    Write a trajectory as CSV.

    `#` header lines carry the loss, the policy and the run shape. With
    `dump_w` every row also holds the full weight vector, which is enough
    to rebuild the trajectory with `read_trajectory_csv`.
    """
    direction = None if u_bar is None else np.asarray(u_bar, dtype=np.float64)
    meta = (
        f"# loss={traj.loss.token}\n"
        f"# policy={traj.policy.token}\n"
        f"# n={traj.n},d={traj.d},T={traj.T},record_every={traj.record_every}\n"
    )
    header = list(TRAJECTORY_COLUMNS)
    if dump_w:
        header += [f"w_{i + 1}" for i in range(traj.d)]
    lines = [",".join(header)]
    for step in traj.steps:
        cos = ""
        if direction is not None and step.w_norm > 0.0:
            cos = format_float(float(step.w @ direction) / step.w_norm)
        row = [
            str(step.t),
            format_float(step.eta),
            format_float(step.log_eta),
            format_float(step.eta_hat),
            format_float(step.risk),
            format_float(step.log_risk),
            format_float(step.psi_val),
            format_float(step.f_val),
            format_float(step.raw_margin),
            format_float(step.w_norm),
            cos,
            str(step.phase),
            format_float(step.hat_sum),
            format_float(step.hat_f_sum),
            format_float(step.hat_f_next_sum),
            format_float(step.hat_sq_f_sum),
            format_float(step.hat_ztq_sum),
        ]
        if dump_w:
            row += [format_float(v) for v in step.w]
        lines.append(",".join(row))
    return atomic_write(path, meta + "\n".join(lines) + "\n")


def _read_meta(lines: typing.List[str]) -> typing.Dict[str, str]:
    meta: typing.Dict[str, str] = {}
    for line in lines:
        for part in line.lstrip("#").strip().split(","):
            key, sep, value = part.partition("=")
            if sep:
                meta[key.strip()] = value.strip()
    return meta


def read_trajectory_csv(path: PathLike, ds: Dataset) -> Trajectory:
    """
    Rebuild a trajectory written with `dump_w=True`.

    Primal and dual points are recomputed from the stored weights; step
    sizes and running sums are taken from the file.

    :raises DatasetLoadError: If the file is malformed.
    :raises UsageError: If it has no weight columns or does not match `ds`.
    """
    source = pathlib.Path(path)
    if not source.is_file():
        raise DatasetLoadError(f"Trajectory file not found: {str(source)!r}", code="file_missing")
    text = source.read_text().splitlines()
    comments = [line for line in text if line.startswith("#")]
    body = [line for line in text if line.strip() and not line.startswith("#")]
    meta = _read_meta(comments)
    try:
        loss = parse_loss(meta["loss"])
        policy = parse_policy(meta["policy"])
        n, d = int(meta["n"]), int(meta["d"])
        T, record_every = int(meta["T"]), int(meta["record_every"])
    except (KeyError, ValueError, ConfigurationError) as exc:
        raise DatasetLoadError.from_exc(
            exc, message="Trajectory header is incomplete", code="bad_header"
        ) from exc
    if (n, d) != (ds.n, ds.d):
        raise UsageError(
            f"Trajectory was recorded on an n={n}, d={d} dataset, got n={ds.n}, d={ds.d}"
        )
    reader = csv.DictReader(body)
    weight_columns = [f"w_{i + 1}" for i in range(d)]
    if reader.fieldnames is None or not set(weight_columns) <= set(reader.fieldnames):
        raise UsageError("Trajectory file has no weight dumps; re-run with dump_w enabled")

    steps: typing.List[TrajectoryStep] = []
    warm_start_t = None
    for row_number, row in enumerate(reader, start=1):
        try:
            w = np.array([float(row[c]) for c in weight_columns])
            p = ds.Z @ w
            dual = grad_psi(loss, p)
            ztq = ds.Z.T @ dual.q
            step = TrajectoryStep(
                t=int(row["t"]),
                w=w,
                p=p,
                dual=dual,
                eta=float(row["eta"]),
                log_eta=float(row["log_eta"]),
                eta_hat=float(row["eta_hat"]),
                risk=float(row["risk"]),
                log_risk=float(row["log_risk"]),
                psi_val=dual.psi_at_anchor,
                f_val=0.5 * float(ztq @ ztq),
                raw_margin=float(-np.max(p)),
                w_norm=float(np.linalg.norm(w)),
                phase=int(row["phase"]),
                hat_sum=float(row["hat_sum"]),
                hat_f_sum=float(row["hat_f_sum"]),
                hat_f_next_sum=float(row["hat_f_next_sum"]),
                hat_sq_f_sum=float(row["hat_sq_f_sum"]),
                hat_ztq_sum=float(row["hat_ztq_sum"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetLoadError.from_exc(
                exc, message=f"row {row_number} is malformed", location=[row_number]
            ) from exc
        if step.phase == 2 and warm_start_t is None:
            warm_start_t = step.t
        steps.append(step)

    if not steps:
        raise DatasetLoadError("Trajectory file has no rows", code="empty")
    start = warm_start_t if policy.kind is PolicyKind.LOGISTIC_TWO_PHASE else 0
    hats = [s.eta_hat for s in steps if start is not None and s.t >= start and s.t < T]
    nonincreasing = start is not None and all(
        b <= a * (1.0 + HAT_TOL) for a, b in zip(hats, hats[1:])
    )
    return Trajectory(
        steps=steps,
        loss=loss,
        policy=policy,
        n=n,
        d=d,
        T=T,
        record_every=record_every,
        warm_start_t=warm_start_t,
        hat_nonincreasing=nonincreasing,
        max_hat=max(hats) if hats else 0.0,
    )
