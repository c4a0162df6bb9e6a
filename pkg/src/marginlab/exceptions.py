import typing
from contextlib import contextmanager

from typing_extensions import Self

from marginlab.types import Context

__all__ = [
    "MarginLabException",
    "ConfigurationError",
    "DomainError",
    "NumericError",
    "ConvergenceError",
    "CertificationError",
    "UsageError",
    "ErrorDetail",
    "DetailedError",
    "ValidationError",
    "DatasetLoadError",
    "exit_code_for",
]


class MarginLabException(Exception):
    """Base exception for all marginlab errors."""

    pass


class ConfigurationError(MarginLabException):
    """Raised for invalid grids, generator parameters or run configurations."""

    pass


class DomainError(MarginLabException, ValueError):
    """Raised when an input lies outside the mathematical domain of an operation."""

    pass


class UsageError(MarginLabException):
    """Raised when operations are called with mis-paired inputs."""

    pass


class CertificationError(MarginLabException):
    """Raised when a computed certificate is internally inconsistent."""

    pass


class NumericError(MarginLabException, ArithmeticError):
    """Raised when a run produces non-finite values."""

    def __init__(self, message: str, iteration: typing.Optional[int] = None) -> None:
        super().__init__(message)
        self.message = message
        self.iteration = iteration

    def __str__(self) -> str:
        if self.iteration is None:
            return self.message
        return f"{self.message} (iteration {self.iteration})"


class ConvergenceError(MarginLabException):
    """Raised when an iterative solver exhausts its budget."""

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(message)
        self.message = message
        self.residual = residual
        self.iterations = iterations

    def __str__(self) -> str:
        return (
            f"{self.message} (last residual {self.residual!r} "
            f"after {self.iterations} iterations)"
        )


class ErrorDetail(typing.NamedTuple):
    """Error detail for detailed errors."""

    location: typing.List[typing.Any]
    """Location of the error source, in sequence (config keys, row numbers)."""
    message: str
    """Error message."""
    code: typing.Optional[str] = None
    """Error code for the error detail."""
    context: typing.Optional[Context] = None
    """Context dictionary for additional information."""
    origin: typing.Optional[BaseException] = None
    """Original exception that caused the error, if any."""

    def as_string(self) -> str:
        """Return a string representation of the error detail."""
        loc = "".join(
            f"[{part}]" if isinstance(part, int) else f".{part}"
            for part in self.location
        )
        if loc.startswith("."):
            loc = loc[1:]
        info = []
        if self.code is not None:
            info.append(f"code={self.code!r}")
        if self.origin is not None:
            info.append(f"origin={type(self.origin).__name__}")
        head = f"{loc}\n  " if loc else ""
        return f"{head}{self.message} [{', '.join(info)}]"

    def as_json(self) -> typing.Dict[str, typing.Any]:
        """Return a JSON-serializable representation of the error detail."""
        from marginlab._utils import make_jsonable

        return {
            "location": list(self.location),
            "message": self.message,
            "code": self.code,
            "context": make_jsonable(self.context),
        }


class DetailedError(MarginLabException):
    """Raised for errors carrying one or more located details."""

    default_code = "error"

    def __init__(
        self,
        message: str,
        *,
        parent_name: typing.Optional[str] = None,
        location: typing.Optional[typing.List[typing.Any]] = None,
        code: typing.Optional[str] = None,
        context: typing.Optional[Context] = None,
        origin: typing.Optional[BaseException] = None,
    ) -> None:
        """
        Initialize a `DetailedError`.

        :param message: The error message
        :param parent_name: Optional name for the parent context
        :param location: Optional location(s) of the error. Integers render as
            indices, anything else as keys.
        :param code: Optional error code for the error detail
        :param context: Optional context dictionary for additional information
        """
        super().__init__(message)
        self.parent_name = parent_name
        self.error_list: typing.List[ErrorDetail] = []
        self.add_detail(
            message,
            location=location,
            code=code or self.default_code,
            context=context,
            origin=origin,
        )

    def add_detail(
        self,
        message: str,
        *,
        location: typing.Optional[typing.List[typing.Any]] = None,
        code: typing.Optional[str] = None,
        context: typing.Optional[Context] = None,
        origin: typing.Optional[BaseException] = None,
    ) -> None:
        """Add a new error detail directly to the error list."""
        self.error_list.append(
            ErrorDetail(
                location=[loc for loc in (location or []) if loc is not None],
                message=message,
                code=code,
                context=context,
                origin=origin,
            )
        )

    @classmethod
    def from_exc(
        cls,
        exception: BaseException,
        *,
        message: typing.Optional[str] = None,
        parent_name: typing.Optional[str] = None,
        location: typing.Optional[typing.List[typing.Any]] = None,
        code: typing.Optional[str] = None,
        context: typing.Optional[Context] = None,
    ) -> Self:
        """
        Create a detailed error from any exception type.

        :param exception: The exception to convert
        :param message: Optional message to prefix the exception message with
        :param location: Optional location(s) of the error
        :return: A new instance wrapping the exception
        """
        exception_msg = exception.args[0] if exception.args else None
        try:
            exception_msg = str(exception_msg)
        except Exception:
            exception_msg = f"<unprintable {type(exception_msg).__name__}>"

        msg = f"{message or ''}\n  {exception_msg}".strip()
        new = cls(
            msg,
            parent_name=parent_name,
            location=location,
            code=code or ERROR_CODE_MAPPING.get(type(exception), None),
            context=context,
            origin=exception,
        )
        if isinstance(exception, DetailedError):
            new.error_list.clear()
            new.merge(exception, location=location)
        return new

    def merge(
        self,
        other: "DetailedError",
        location: typing.Optional[typing.List[typing.Any]] = None,
    ) -> None:
        """Merge another `DetailedError` into this one, prefixing `location`."""
        for detail in other.error_list:
            self.add_detail(
                detail.message,
                location=[*(location or []), *detail.location],
                code=detail.code,
                context=detail.context,
                origin=detail.origin or other,
            )

    def add(
        self,
        exception: Exception,
        *,
        message: typing.Optional[str] = None,
        location: typing.Optional[typing.List[typing.Any]] = None,
        code: typing.Optional[str] = None,
    ) -> None:
        """Add an exception as a new error detail."""
        if isinstance(exception, DetailedError):
            self.merge(exception, location=location)
        else:
            self.merge(
                self.from_exc(
                    exception, message=message, location=location, code=code
                )
            )

    @classmethod
    @contextmanager
    def collect(
        cls,
        target: typing.Union[
            typing.Type[Exception], typing.Tuple[typing.Type[Exception], ...]
        ] = Exception,
        /,
        message: str = "Collected errors",
        *,
        parent_name: typing.Optional[str] = None,
        location: typing.Optional[typing.List[typing.Any]] = None,
    ) -> typing.Generator["DetailedError", None, None]:
        """
        Context manager to collect errors raised within a block of code.

        Errors added to the yielded instance, or an exception of the target
        type escaping the block, are merged and raised as one error at the
        end of the block.

        Example:
        ```python
        with ValidationError.collect(location=["tolerances"]) as errors:
            for key, value in tolerances.items():
                try:
                    gt(0.0)(value, key)
                except ValidationError as exc:
                    errors.add(exc)
        ```
        """
        errors = cls(message, parent_name=parent_name, location=location)
        collected = []
        try:
            yield errors
        except target as exc:
            if isinstance(exc, DetailedError):
                collected.append(exc)
            else:
                collected.append(cls.from_exc(exc))

        if collected or len(errors.error_list) > 1:
            for error in collected:
                errors.merge(error, location=location)
            # The seed detail only carries the summary message
            errors.error_list.pop(0)
            raise errors

    def error_messages(self) -> typing.Generator[str, None, None]:
        """Yield error messages as strings."""
        for error_detail in self.error_list:
            yield error_detail.as_string()

    def errors(self) -> typing.Generator[typing.Dict[str, typing.Any], None, None]:
        """Yield error details as JSON-serializable dictionaries."""
        for error_detail in self.error_list:
            yield error_detail.as_json()

    def __str__(self) -> str:
        if self.error_list:
            where = f" in {self.parent_name}" if self.parent_name else ""
            return "\n".join(
                [f"{len(self.error_list)} error(s){where}", *self.error_messages()]
            )
        return super().__str__()


class ValidationError(DetailedError, ConfigurationError):
    """Raised when configuration validation fails."""

    default_code = "validation_failed"


class DatasetLoadError(DetailedError):
    """Raised when a dataset file cannot be loaded. Locations are 1-based rows."""

    default_code = "load_failed"


ERROR_CODE_MAPPING: typing.Dict[typing.Type[BaseException], str] = {
    TypeError: "invalid_type",
    ValueError: "invalid_value",
    KeyError: "missing_key",
    DomainError: "invalid_value",
    ValidationError: "validation_failed",
    DatasetLoadError: "load_failed",
}

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIGURATION = 2
EXIT_NUMERIC = 3


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the command line exit-code contract."""
    if isinstance(exc, (NumericError, ConvergenceError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(
        exc, (ConfigurationError, DatasetLoadError, UsageError, DomainError)
    ):
        return EXIT_CONFIGURATION
    return EXIT_CHECK_FAILED
