"""
Smoothed-margin calculus.

`psi` is the smoothed margin `l^-1(sum_i l(xi_i))`, `grad_psi` its gradient
packaged with the primal point it was generated from, and `bregman` the
conjugate-side divergence anchored at that primal point. The conjugate is
never evaluated away from the range of `grad_psi`, except through the
closed forms available for the exponential loss.
"""

import logging
import math
import typing

import numpy as np

from marginlab.exceptions import DomainError, NumericError
from marginlab.losses import Loss, LossFunction, LossKind
from marginlab.types import ArrayLike, Matrix, Vector

__all__ = [
    "DualPoint",
    "psi",
    "grad_psi",
    "simplex_point",
    "bregman",
    "perspective",
    "hess_psi",
    "neg_entropy",
    "kl_divergence",
]

logger = logging.getLogger(__name__)


@typing.final
class DualPoint(typing.NamedTuple):
    """A dual variable `q = grad psi(p)` together with its anchor `p`."""

    q: Vector
    """Dual variable, one entry per example."""
    anchor_p: Vector
    """Primal point the dual variable was generated at."""
    psi_at_anchor: float
    """`psi(anchor_p)`."""
    conj_value: float
    """`psi*(q) = <anchor_p, q> - psi(anchor_p)`."""

    @property
    def l1_mass(self) -> float:
        return float(np.sum(self.q))


def _as_vector(xi: ArrayLike) -> Vector:
    arr = np.asarray(xi, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError(f"Expected a vector, got an array of shape {arr.shape}")
    if arr.size == 0:
        raise DomainError("The smoothed margin of an empty vector is undefined")
    return arr


def _logsumexp(x: Vector) -> float:
    top = float(np.max(x))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(x - top))))


def psi(loss: Loss, xi: ArrayLike) -> float:
    """
    Smoothed margin `l^-1(sum_i l(xi_i))`.

    Exponential and logistic losses are evaluated in the log domain and
    never overflow or underflow; other losses go through the loss values.

    :raises DomainError: For an empty vector.
    :raises NumericError: If the loss sum is not representable.
    """
    x = _as_vector(xi)
    if x.size == 1:
        return float(x[0])
    if isinstance(loss, LossFunction) and loss.kind is LossKind.EXP:
        return _logsumexp(x)
    if isinstance(loss, LossFunction) and loss.kind is LossKind.LOGISTIC:
        log_total = _logsumexp(np.asarray(loss.log_value(x)))
        if log_total > 0.0:
            total = math.exp(log_total)
            return float(loss.inverse(total))
        # l^-1(s) = ln(expm1(s)) = ln s + ln(expm1(s)/s)
        total = math.exp(log_total)
        if total == 0.0:
            return log_total
        return log_total + math.log(math.expm1(total) / total)

    total = float(np.sum(loss.value(x)))
    if not math.isfinite(total) or total <= 0.0:
        raise NumericError(
            f"Loss sum {total!r} of {loss.name} is not representable; "
            "the smoothed margin cannot be evaluated"
        )
    return float(loss.inverse(total))


def _log_q(loss: Loss, x: Vector, value: float) -> Vector:
    if isinstance(loss, LossFunction):
        return np.asarray(loss.log_first(x)) - float(loss.log_first(value))
    return np.log(np.asarray(loss.first(x))) - math.log(float(loss.first(value)))


def _conjugate(q: Vector, p: Vector, value: float) -> float:
    # <p, q> - psi(p), arranged to avoid cancellation for large |p|
    with np.errstate(invalid="ignore"):
        terms = np.where(q > 0.0, q * (p - value), 0.0)
    return float(np.sum(terms) + value * (np.sum(q) - 1.0))


def grad_psi(loss: Loss, xi: ArrayLike) -> DualPoint:
    """
    Gradient `q_i = l'(xi_i) / l'(psi(xi))` of the smoothed margin.

    For the exponential loss this is the softmax of `xi`.
    """
    x = _as_vector(xi)
    value = psi(loss, x)
    q = np.exp(_log_q(loss, x, value))
    if not np.all(np.isfinite(q)):
        raise NumericError(f"Non-finite gradient of the smoothed margin for {loss.name}")
    return DualPoint(
        q=q,
        anchor_p=x.copy(),
        psi_at_anchor=value,
        conj_value=_conjugate(q, x, value),
    )


def simplex_point(q: ArrayLike) -> DualPoint:
    """
    Dual point of the exponential loss for a point on the probability simplex.

    The anchor is `ln q` (with `-inf` on zero coordinates), which makes
    `grad_psi(anchor) = q` and `conj_value` the negative entropy.

    :raises DomainError: If `q` is not on the simplex.
    """
    arr = _as_vector(q)
    if np.any(arr < 0.0) or abs(float(np.sum(arr)) - 1.0) > 1e-9:
        raise DomainError("Expected a point on the probability simplex")
    arr = arr / np.sum(arr)
    with np.errstate(divide="ignore"):
        anchor = np.log(arr)
    return DualPoint(
        q=arr,
        anchor_p=anchor,
        psi_at_anchor=0.0,
        conj_value=neg_entropy(arr),
    )


def bregman(loss: Loss, a: DualPoint, b: DualPoint) -> float:
    """
    Generalized Bregman distance `D(a, b)` anchored at `b.anchor_p`.

    Equals `a.conj_value - b.conj_value - <b.anchor_p, a.q - b.q>`; evaluated
    through the normalized anchors `p - psi(p)` so that large anchors do not
    cancel. For the exponential loss the result is `KL(a.q || b.q)`.

    :raises DomainError: On a dimension mismatch.
    """
    if a.q.shape != b.q.shape:
        raise DomainError(
            f"Dual points of different dimension: {a.q.shape[0]} and {b.q.shape[0]}"
        )
    with np.errstate(invalid="ignore"):
        shift = (a.anchor_p - a.psi_at_anchor) - (b.anchor_p - b.psi_at_anchor)
        terms = np.where(a.q > 0.0, a.q * shift, 0.0)
    mass = float(np.sum(a.q)) - 1.0
    return float(np.sum(terms) + (a.psi_at_anchor - b.psi_at_anchor) * mass)


def perspective(loss: Loss, v: ArrayLike, r: float) -> float:
    """
    Perspective `r * psi(v / r)` of the smoothed margin.

    At `r = 0` the limit `max_i v_i` is returned; it is only defined for the
    exponential and logistic losses and for strictly negative `v`.

    :raises DomainError: If `r < 0`, or `r = 0` outside the cases above.
    """
    x = _as_vector(v)
    if r < 0.0 or math.isnan(r):
        raise DomainError(f"Perspective scale must be nonnegative, got {r!r}")
    if r == 0.0:
        kind = getattr(loss, "kind", None)
        if kind not in (LossKind.EXP, LossKind.LOGISTIC):
            raise DomainError(
                f"The r -> 0 limit of the perspective is not available for {loss.name}"
            )
        if np.any(x >= 0.0):
            raise DomainError("The r -> 0 limit needs every coordinate of v negative")
        return float(np.max(x))
    return r * psi(loss, x / r)


def _curvature(loss: Loss, z: Vector) -> Vector:
    """`l''(z) / l'(z)`."""
    if isinstance(loss, LossFunction):
        if loss.kind is LossKind.EXP:
            return np.ones_like(z)
        if loss.kind is LossKind.LOGISTIC:
            return np.exp(-np.logaddexp(0.0, z))
    return np.asarray(loss.second(z)) / np.asarray(loss.first(z))


def hess_psi(loss: Loss, xi: ArrayLike) -> Matrix:
    """
    Hessian of the smoothed margin.

    `diag(q * l''(xi)/l'(xi)) - (l''(psi)/l'(psi)) q q^T`; for the exponential
    loss `diag(q) - q q^T`. O(n^2) memory, meant for diagnostics.
    """
    x = _as_vector(xi)
    point = grad_psi(loss, x)
    q = point.q
    outer = float(_curvature(loss, np.array([point.psi_at_anchor]))[0])
    return np.diag(q * _curvature(loss, x)) - outer * np.outer(q, q)


def neg_entropy(q: ArrayLike) -> float:
    """`sum_i q_i ln q_i` with `0 ln 0 = 0`."""
    arr = np.asarray(q, dtype=np.float64)
    positive = arr[arr > 0.0]
    return float(np.sum(positive * np.log(positive)))


def kl_divergence(a: ArrayLike, b: ArrayLike) -> float:
    """
    `KL(a || b) = sum_i a_i ln(a_i / b_i)` for points on the simplex.

    Infinite when `a` puts mass where `b` has none.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DomainError(f"Shape mismatch: {x.shape} and {y.shape}")
    support = x > 0.0
    if np.any(y[support] <= 0.0):
        return math.inf
    return float(np.sum(x[support] * (np.log(x[support]) - np.log(y[support]))))
