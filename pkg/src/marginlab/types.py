import os
import typing

import numpy as np
import numpy.typing as npt
from typing_extensions import TypeAlias

T = typing.TypeVar("T")
T_con = typing.TypeVar("T_con", contravariant=True)

Vector: TypeAlias = npt.NDArray[np.float64]
"""One-dimensional float64 array."""
Matrix: TypeAlias = npt.NDArray[np.float64]
"""Two-dimensional float64 array."""
ArrayLike: TypeAlias = npt.ArrayLike

JSONValue: TypeAlias = typing.Union[int, float, str, bool, None, "JSONDict", "JSONList"]
JSONDict: TypeAlias = typing.Dict[str, "JSONValue"]
JSONList: TypeAlias = typing.List["JSONValue"]

Context: TypeAlias = typing.MutableMapping[str, typing.Any]
DataDict: TypeAlias = typing.Dict[str, typing.Any]
PathLike: TypeAlias = typing.Union[str, "os.PathLike[str]"]


@typing.runtime_checkable
class Validator(typing.Generic[T_con], typing.Protocol):
    """
    Validator protocol.

    A callable that takes a value and the name it was found under, and
    raises `ValidationError` when the value is not acceptable.
    """

    def __call__(
        self,
        value: T_con,
        name: typing.Optional[str] = None,
        /,
    ) -> None: ...
