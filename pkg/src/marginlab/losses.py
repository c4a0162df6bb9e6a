"""
Loss family and the numeric verifier for the structural loss conditions.

Three losses are provided: the exponential loss, the logistic loss and the
polynomially-tailed loss with exponent `k`. Every loss exposes its value,
first and second derivative and inverse in closed form (the polynomial
inverse on its right branch is the one place a Newton solve is needed).
"""

import enum
import logging
import math
import typing

import numpy as np

from marginlab.exceptions import ConfigurationError, DomainError
from marginlab.types import ArrayLike, Vector

__all__ = [
    "LossKind",
    "Order",
    "Loss",
    "LossFunction",
    "ConditionResult",
    "AssumptionReport",
    "exponential",
    "logistic",
    "polynomial",
    "loss_from_spec",
    "parse_loss",
    "eval_loss",
    "default_z_grid",
    "default_b_grid",
    "verify_assumption2",
]

logger = logging.getLogger(__name__)

Scalar = typing.Union[float, Vector]


class LossKind(str, enum.Enum):
    """Supported loss kinds."""

    EXP = "exp"
    LOGISTIC = "logistic"
    POLY = "poly"


class Order(str, enum.Enum):
    """What `eval_loss` evaluates."""

    VALUE = "value"
    FIRST = "first"
    SECOND = "second"
    INVERSE = "inverse"


@typing.runtime_checkable
class Loss(typing.Protocol):
    """
    Protocol for anything the assumption verifier can check.

    `smooth_ratio` is the declared constant `c` with `l'' <= c l'`.
    """

    @property
    def name(self) -> str: ...

    @property
    def smooth_ratio(self) -> float: ...

    def value(self, z: ArrayLike) -> Scalar: ...

    def first(self, z: ArrayLike) -> Scalar: ...

    def second(self, z: ArrayLike) -> Scalar: ...

    def inverse(self, s: ArrayLike) -> Scalar: ...


def _unwrap(arr: Vector, like: ArrayLike) -> Scalar:
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def _log_sigmoid(z: Vector) -> Vector:
    return -np.logaddexp(0.0, -z)


def _log_softplus(z: Vector) -> Vector:
    """`ln ln(1 + e^z)` without underflow for very negative z."""
    tail = np.minimum(z, -30.0)
    head = np.maximum(z, -30.0)
    return np.where(
        z < -30.0,
        tail - 0.5 * np.exp(tail),
        np.log(np.logaddexp(0.0, head)),
    )


def _poly_inverse_right(s: Vector, k: float) -> Vector:
    """Solve 2kz + (1+z)^-k = s for z > 0 (s > 1) by safeguarded Newton."""
    lo = (s - 1.0) / (2.0 * k)
    hi = s / (2.0 * k)
    z = lo.copy()
    for _ in range(100):
        g = 2.0 * k * z + (1.0 + z) ** (-k) - s
        dg = 2.0 * k - k * (1.0 + z) ** (-k - 1.0)
        step = g / dg
        z_next = np.clip(z - step, lo, hi)
        if np.all(np.abs(z_next - z) <= 1e-15 * (1.0 + np.abs(z))):
            return z_next
        z = z_next
    return z


@typing.final
class LossFunction(typing.NamedTuple):
    """
    A differentiable increasing loss.

    Instances are immutable and safe to share between threads.
    """

    kind: LossKind
    """Loss family."""
    k: typing.Optional[float] = None
    """Tail exponent, only for `LossKind.POLY`."""

    @property
    def name(self) -> str:
        if self.kind is LossKind.POLY:
            return f"poly(k={self.k!r})"
        return self.kind.value

    @property
    def token(self) -> str:
        """Compact form accepted by `parse_loss`, e.g. `poly:2.0`."""
        if self.kind is LossKind.POLY:
            return f"poly:{self.k!r}"
        return self.kind.value

    @property
    def smooth_ratio(self) -> float:
        """Constant `c` with `l'' <= c l'` everywhere."""
        if self.kind is LossKind.POLY:
            return float(typing.cast(float, self.k)) + 1.0
        return 1.0

    @property
    def beta_sublevel(self) -> typing.Optional[float]:
        """Smoothness of psi on `{psi <= 0}` when it improves on the global one."""
        if self.kind is LossKind.LOGISTIC:
            return 2.0
        return None

    @property
    def has_closed_form_conjugate(self) -> bool:
        return self.kind is LossKind.EXP

    def beta(self, n: int) -> float:
        """
        Global l-infinity smoothness constant of psi on n coordinates.

        1 for the exponential loss, `c * n` otherwise.
        """
        if self.kind is LossKind.EXP:
            return 1.0
        return self.smooth_ratio * n

    def value(self, z: ArrayLike) -> Scalar:
        x = np.asarray(z, dtype=np.float64)
        if self.kind is LossKind.EXP:
            out = np.exp(x)
        elif self.kind is LossKind.LOGISTIC:
            out = np.logaddexp(0.0, x)
        else:
            k = typing.cast(float, self.k)
            left = np.minimum(x, 0.0)
            right = np.maximum(x, 0.0)
            out = np.where(
                x <= 0.0,
                (1.0 - left) ** (-k),
                2.0 * k * right + (1.0 + right) ** (-k),
            )
        return _unwrap(out, z)

    def first(self, z: ArrayLike) -> Scalar:
        x = np.asarray(z, dtype=np.float64)
        if self.kind is LossKind.EXP:
            out = np.exp(x)
        elif self.kind is LossKind.LOGISTIC:
            out = np.exp(_log_sigmoid(x))
        else:
            k = typing.cast(float, self.k)
            left = np.minimum(x, 0.0)
            right = np.maximum(x, 0.0)
            out = np.where(
                x <= 0.0,
                k * (1.0 - left) ** (-k - 1.0),
                2.0 * k - k * (1.0 + right) ** (-k - 1.0),
            )
        return _unwrap(out, z)

    def log_value(self, z: ArrayLike) -> Scalar:
        """`ln l(z)`, finite wherever `l(z)` would underflow."""
        x = np.asarray(z, dtype=np.float64)
        if self.kind is LossKind.EXP:
            out = x.copy()
        elif self.kind is LossKind.LOGISTIC:
            out = _log_softplus(x)
        else:
            k = typing.cast(float, self.k)
            left = np.minimum(x, 0.0)
            right = np.maximum(x, 0.0)
            out = np.where(
                x <= 0.0,
                -k * np.log1p(-left),
                np.log(2.0 * k * right + (1.0 + right) ** (-k)),
            )
        return _unwrap(out, z)

    def log_first(self, z: ArrayLike) -> Scalar:
        """`ln l'(z)`, finite wherever `l'(z)` would underflow."""
        x = np.asarray(z, dtype=np.float64)
        if self.kind is LossKind.EXP:
            out = x.copy()
        elif self.kind is LossKind.LOGISTIC:
            out = _log_sigmoid(x)
        else:
            k = typing.cast(float, self.k)
            left = np.minimum(x, 0.0)
            right = np.maximum(x, 0.0)
            out = np.where(
                x <= 0.0,
                math.log(k) - (k + 1.0) * np.log1p(-left),
                np.log(2.0 * k - k * (1.0 + right) ** (-k - 1.0)),
            )
        return _unwrap(out, z)

    def second(self, z: ArrayLike) -> Scalar:
        x = np.asarray(z, dtype=np.float64)
        if self.kind is LossKind.EXP:
            out = np.exp(x)
        elif self.kind is LossKind.LOGISTIC:
            out = np.exp(_log_sigmoid(x) + _log_sigmoid(-x))
        else:
            k = typing.cast(float, self.k)
            out = k * (k + 1.0) * (1.0 + np.abs(x)) ** (-k - 2.0)
        return _unwrap(out, z)

    def inverse(self, s: ArrayLike) -> Scalar:
        x = np.asarray(s, dtype=np.float64)
        if np.any(~(x > 0.0)):
            raise DomainError(
                f"Inverse of {self.name} is only defined on (0, inf); "
                f"got minimum {float(np.min(x))!r}"
            )
        if self.kind is LossKind.EXP:
            out = np.log(x)
        elif self.kind is LossKind.LOGISTIC:
            small = np.minimum(x, 1.0)
            large = np.maximum(x, 1.0)
            out = np.where(
                x <= 1.0,
                np.log(np.expm1(small)),
                large + np.log1p(-np.exp(-large)),
            )
        else:
            k = typing.cast(float, self.k)
            flat = np.atleast_1d(x)
            solved = np.empty_like(flat)
            mask = flat <= 1.0
            solved[mask] = 1.0 - flat[mask] ** (-1.0 / k)
            if np.any(~mask):
                solved[~mask] = _poly_inverse_right(flat[~mask], k)
            out = solved.reshape(x.shape)
        return _unwrap(out, s)


def exponential() -> LossFunction:
    """The exponential loss `e^z`."""
    return LossFunction(LossKind.EXP)


def logistic() -> LossFunction:
    """The logistic loss `ln(1 + e^z)`."""
    return LossFunction(LossKind.LOGISTIC)


def polynomial(k: float) -> LossFunction:
    """The polynomially-tailed loss with exponent `k > 0`."""
    if not (isinstance(k, (int, float)) and math.isfinite(k) and k > 0):
        raise ConfigurationError(f"Polynomial tail exponent must be positive, got {k!r}")
    return LossFunction(LossKind.POLY, float(k))


def loss_from_spec(kind: typing.Union[LossKind, str], k: typing.Optional[float] = None) -> LossFunction:
    """
    Build a loss from its kind and, for the polynomial tail, its exponent.

    :raises ConfigurationError: For an unknown kind or a missing exponent.
    """
    try:
        kind = LossKind(kind)
    except ValueError as exc:
        raise ConfigurationError(f"Unknown loss kind {kind!r}") from exc
    if kind is LossKind.POLY:
        if k is None:
            raise ConfigurationError("The polynomial loss needs an exponent k")
        return polynomial(k)
    return LossFunction(kind)


def parse_loss(token: str) -> LossFunction:
    """Inverse of `LossFunction.token`."""
    name, _, raw = token.strip().partition(":")
    try:
        k = float(raw) if raw else None
    except ValueError as exc:
        raise ConfigurationError(f"Bad loss token {token!r}") from exc
    return loss_from_spec(name, k)


def eval_loss(loss: LossFunction, z: float, order: typing.Union[Order, str]) -> float:
    """
    Evaluate the loss, one of its derivatives, or its inverse at a point.

    :raises DomainError: For the inverse of a non-positive argument.
    """
    order = Order(order)
    if order is Order.VALUE:
        return float(loss.value(z))
    if order is Order.FIRST:
        return float(loss.first(z))
    if order is Order.SECOND:
        return float(loss.second(z))
    return float(loss.inverse(z))


@typing.final
class ConditionResult(typing.NamedTuple):
    """Outcome of one grid-checked loss condition."""

    condition_id: str
    """Condition number and sub-check, e.g. `3.derivative_ratio(b=2)`."""
    grid: Vector
    """Evaluated z or s values."""
    worst_violation: float
    """Largest violation found; a value `<= 0` means the check held everywhere."""
    passed: bool
    measured: typing.Optional[float] = None
    """Measured constant where the condition only asserts existence."""


@typing.final
class AssumptionReport(typing.NamedTuple):
    """Grid certificate of the structural loss conditions."""

    loss_kind: str
    condition_results: typing.List[ConditionResult]
    note: str = "grid-certified only"

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.condition_results)

    def failed_conditions(self) -> typing.List[str]:
        return [r.condition_id for r in self.condition_results if not r.passed]


MONOTONE_TOL = 1e-12
TAIL_LIMIT = 1e-8


def default_z_grid(loss: typing.Any) -> Vector:
    """
    Default evaluation grid: 2001 points on [-50, 5] plus a geometric left tail.

    The tail reaches far enough left that `l(z)` and `z l'(z)` fall below
    1e-8, which for a polynomial tail of exponent k needs |z| ~ 1e(8/k).
    """
    core = np.linspace(-50.0, 5.0, 2001)
    k = getattr(loss, "k", None)
    if k is None:
        return core
    decades = 8.0 / float(k) + 2.0
    tail = -np.logspace(math.log10(50.0), decades, 400)
    return np.unique(np.concatenate([tail, core]))


def default_b_grid() -> Vector:
    return np.array([1.0, 1.5, 2.0, 4.0, 10.0, 100.0])


def _monotone_violation(values: Vector) -> float:
    """Largest decrease between adjacent grid values, net of tolerance."""
    if values.size < 2:
        return -math.inf
    drops = values[:-1] - values[1:]
    tol = MONOTONE_TOL * np.maximum(1.0, np.abs(values[:-1]))
    return float(np.max(drops - tol))


def _positivity_violation(values: Vector) -> float:
    lowest = float(np.min(values))
    if lowest > 0.0 and math.isfinite(lowest):
        return -lowest
    return max(-lowest, float(np.finfo(np.float64).tiny))


def _result(
    condition_id: str,
    grid: Vector,
    violation: float,
    measured: typing.Optional[float] = None,
) -> ConditionResult:
    if math.isnan(violation):
        violation = math.inf
    return ConditionResult(
        condition_id=condition_id,
        grid=grid,
        worst_violation=violation,
        passed=violation <= 0.0,
        measured=measured,
    )


def verify_assumption2(
    loss: Loss,
    z_grid: typing.Optional[ArrayLike] = None,
    b_grid: typing.Optional[ArrayLike] = None,
) -> AssumptionReport:
    """
    Check the structural loss conditions on grids.

    Checks, in order: positivity of l, l', l''; vanishing of l(z) and z l'(z)
    at the left end of the grid; monotonicity of z l'(z)/l(z) on z < 0; for
    each b a positive lower bound on l'(l^-1(a))/l'(l^-1(ab)) over the
    induced a-grid; monotonicity of l'^2/(l l'') (convexity criterion for
    psi); and the existence of `c` with `l'' <= c l'`, measured as the grid
    maximum of `l''/l'` (smoothness criterion).

    :param loss: Loss to check
    :param z_grid: Sorted evaluation points spanning at least [-50, 5] with
        at least 1000 points. Defaults to `default_z_grid(loss)`.
    :param b_grid: Values `b >= 1`. Defaults to `default_b_grid()`.
    :raises ConfigurationError: If the grids are too small.
    """
    z = np.sort(np.asarray(default_z_grid(loss) if z_grid is None else z_grid, dtype=np.float64))
    bs = np.asarray(default_b_grid() if b_grid is None else b_grid, dtype=np.float64)
    if z.ndim != 1 or z.size < 1000 or z[0] > -50.0 or z[-1] < 5.0:
        raise ConfigurationError(
            "z_grid must span at least [-50, 5] with at least 1000 points"
        )
    if bs.size == 0:
        raise ConfigurationError("b_grid must not be empty")
    if np.any(bs < 1.0):
        raise ConfigurationError("b_grid values must be >= 1")

    f0 = np.asarray(loss.value(z), dtype=np.float64)
    f1 = np.asarray(loss.first(z), dtype=np.float64)
    f2 = np.asarray(loss.second(z), dtype=np.float64)
    results: typing.List[ConditionResult] = []

    with np.errstate(all="ignore"):
        results.append(_result("1.positive_value", z, _positivity_violation(f0)))
        results.append(_result("1.positive_first", z, _positivity_violation(f1)))
        results.append(_result("1.positive_second", z, _positivity_violation(f2)))

        left = z[:1]
        tail = max(abs(float(f0[0])), abs(float(z[0] * f1[0])))
        results.append(_result("2.left_tail", left, tail - TAIL_LIMIT, measured=tail))

        neg = z < 0.0
        phi = z[neg] * f1[neg] / f0[neg]
        results.append(_result("2.ratio_monotone", z[neg], _monotone_violation(phi)))

        a_grid = f0[f0 > 0.0]
        for b in bs:
            try:
                num = np.asarray(loss.first(loss.inverse(a_grid)), dtype=np.float64)
                den = np.asarray(loss.first(loss.inverse(a_grid * b)), dtype=np.float64)
                ratio = num / den
                finite = np.all(np.isfinite(ratio))
                c_b = float(np.min(ratio)) if finite else math.nan
            except (DomainError, ValueError, FloatingPointError):
                c_b = math.nan
            violation = -c_b if (math.isfinite(c_b) and c_b > 0.0) else math.inf
            results.append(
                _result(f"3.derivative_ratio(b={b:g})", a_grid, violation, measured=c_b)
            )

        convexity = f1**2 / (f0 * f2)
        usable = np.isfinite(convexity)
        results.append(
            _result(
                "4.psi_convexity",
                z[usable],
                _monotone_violation(convexity[usable]),
            )
        )

        smooth = f2 / f1
        finite = np.isfinite(smooth)
        measured = float(np.max(smooth)) if np.all(finite) else math.inf
        violation = -measured if 0.0 < measured < math.inf else math.inf
        results.append(_result("4.psi_smoothness", z, violation, measured=measured))
        declared = float(loss.smooth_ratio)
        if measured > declared * (1.0 + MONOTONE_TOL):
            logger.warning(
                "Loss %s declares l'' <= %r l' but the grid needs c = %r",
                loss.name,
                declared,
                measured,
            )

    report = AssumptionReport(loss_kind=loss.name, condition_results=results)
    if report.passed:
        logger.debug("Loss %s passed all %d grid checks", loss.name, len(results))
    else:
        logger.info(
            "Loss %s failed grid checks: %s",
            loss.name,
            ", ".join(report.failed_conditions()),
        )
    return report
