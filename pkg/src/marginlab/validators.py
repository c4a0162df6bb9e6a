import math
import operator
import pathlib
import typing

from annotated_types import MinLen
from typing_extensions import Annotated, TypeAlias

from marginlab.exceptions import ValidationError
from marginlab.types import Validator

__all__ = [
    "Pipeline",
    "pipe",
    "gt",
    "gte",
    "range_",
    "finite",
    "instance_of",
    "member_of",
    "path",
]

Bound: TypeAlias = typing.Any


@typing.final
class Pipeline(typing.NamedTuple):
    """
    Pipeline of validators.

    Applies a sequence of validators to a value in order, collecting every
    failure into one `ValidationError` unless `fail_fast` is set.
    """

    validators: Annotated[typing.Tuple[Validator[typing.Any], ...], MinLen(2)]
    message: typing.Optional[str] = None
    fail_fast: bool = False

    def __call__(self, value: typing.Any, name: typing.Optional[str] = None, /) -> None:
        msg = self.message or "Validation pipeline failed."
        error = None
        for validator in self.validators:
            try:
                validator(value, name)
            except (ValueError, ValidationError) as exc:
                loc = [name] if not isinstance(exc, ValidationError) else None
                if self.fail_fast:
                    raise ValidationError.from_exc(
                        exc, message=msg, location=loc
                    ) from exc
                if error is None:
                    error = ValidationError.from_exc(exc, message=msg, location=loc)
                else:
                    error.add(exc, message=msg, location=loc)
        if error is not None:
            raise error

    def __repr__(self) -> str:
        return f"pipeline({' -> '.join(repr(v) for v in self.validators)})"


def pipe(
    *validators: Validator[typing.Any],
    message: typing.Optional[str] = None,
    fail_fast: bool = False,
) -> Validator[typing.Any]:
    """
    Build a pipeline of validators.

    :param validators: Validators applied in order
    :param message: Optional message for validation errors
    :param fail_fast: Stop at the first failing validator
    """
    if not validators:
        raise ValueError("At least one validator must be provided.")
    if len(validators) == 1:
        return validators[0]

    aggregate: typing.List[Validator[typing.Any]] = []
    for validator in validators:
        if isinstance(validator, Pipeline):
            aggregate.extend(validator.validators)
        else:
            aggregate.append(validator)
    return Pipeline(tuple(aggregate), message, fail_fast)


def number_validator_factory(
    comparison_func: typing.Callable[[typing.Any, Bound], bool],
    symbol: str,
) -> typing.Callable[..., Validator[typing.Any]]:
    """
    Builds a validator factory for numeric comparisons.

    :param comparison_func: The comparison function to use
    :param symbol: The symbol to use in the error message
    :return: The validator factory function
    """
    if not isinstance(symbol, str) or not symbol:
        raise ValueError("The symbol must be a non-empty string.")

    def validator_factory(
        bound: Bound,
        message: typing.Optional[str] = None,
    ) -> Validator[typing.Any]:
        msg = message or "'{value} {symbol} {bound}' is not True"

        def validator(value: typing.Any, name: typing.Optional[str] = None, /) -> None:
            if comparison_func(value, bound):
                return
            raise ValidationError(
                msg.format_map({"value": value, "symbol": symbol, "bound": bound}),
                location=[name],
                code="value_out_of_bounds",
                context={"symbol": symbol, "bound": bound},
            )

        validator.__name__ = f"number({symbol}{bound})"
        return validator

    validator_factory.__name__ = f"number_validator_factory({symbol})"
    return validator_factory


gte = number_validator_factory(operator.ge, ">=")
"""Validates that the value is greater than or equal to the bound."""
gt = number_validator_factory(operator.gt, ">")
"""Validates that the value is greater than the bound."""


def range_(
    min_val: Bound,
    max_val: Bound,
    message: typing.Optional[str] = None,
    *,
    inclusive: bool = True,
) -> Validator[typing.Any]:
    """
    Number range validator.

    :param min_val: Minimum allowed value
    :param max_val: Maximum allowed value
    :param inclusive: Whether the end points are allowed
    """
    msg = message or "'{name}' must be between {min} and {max}, got {value!r}"

    def validator(value: typing.Any, name: typing.Optional[str] = None, /) -> None:
        inside = (
            min_val <= value <= max_val if inclusive else min_val < value < max_val
        )
        if inside:
            return
        raise ValidationError(
            msg.format(name=name, min=min_val, max=max_val, value=value),
            location=[name],
            code="value_not_in_range",
            context={"min": min_val, "max": max_val, "inclusive": inclusive},
        )

    validator.__name__ = f"range_({min_val},{max_val})"
    return validator


def finite(value: typing.Any, name: typing.Optional[str] = None, /) -> None:
    """Validates that a number is finite."""
    if isinstance(value, (int, float)) and math.isfinite(value):
        return
    raise ValidationError(
        f"Expected a finite number, got {value!r}",
        location=[name],
        code="not_finite",
    )


def instance_of(
    cls: typing.Union[type, typing.Tuple[type, ...]],
    message: typing.Optional[str] = None,
) -> Validator[typing.Any]:
    """
    Type validator.

    Booleans are rejected where numbers are expected.
    """
    types = cls if isinstance(cls, tuple) else (cls,)
    names = " or ".join(t.__name__ for t in types)
    msg = message or "Expected {expected}, got {actual}"

    def validator(value: typing.Any, name: typing.Optional[str] = None, /) -> None:
        ok = isinstance(value, types)
        if ok and isinstance(value, bool) and bool not in types:
            ok = False
        if ok:
            return
        raise ValidationError(
            msg.format(expected=names, actual=type(value).__name__),
            location=[name],
            code="invalid_type",
        )

    validator.__name__ = f"instance_of({names})"
    return validator


def member_of(
    choices: typing.Iterable[typing.Any],
    message: typing.Optional[str] = None,
) -> Validator[typing.Any]:
    """Validates that the value is one of `choices`."""
    allowed = tuple(choices)
    msg = message or "Expected one of {choices}, got {value!r}"

    def validator(value: typing.Any, name: typing.Optional[str] = None, /) -> None:
        if value in allowed:
            return
        raise ValidationError(
            msg.format(choices=", ".join(map(repr, allowed)), value=value),
            location=[name],
            code="invalid_choice",
            context={"choices": list(allowed)},
        )

    validator.__name__ = f"member_of({allowed!r})"
    return validator


def path(*, exists: bool = False, is_file: bool = False) -> Validator[typing.Any]:
    """
    `pathlib.Path` validator factory.

    :param exists: Check if the path exists
    :param is_file: Check if the path is a regular file (implies `exists`)
    """
    if not (exists or is_file):
        raise ValueError("At least one of the path checks must be True.")

    def validator(value: typing.Any, name: typing.Optional[str] = None, /) -> None:
        candidate = pathlib.Path(value)
        if not candidate.exists():
            raise ValidationError(
                f"Path does not exist: {str(candidate)!r}",
                location=[name],
                code="path_missing",
            )
        if is_file and not candidate.is_file():
            raise ValidationError(
                f"Path is not a file: {str(candidate)!r}",
                location=[name],
                code="path_not_file",
            )

    validator.__name__ = "path"
    return validator
