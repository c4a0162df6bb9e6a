"""Record serialization module."""

import typing

from typing_extensions import TypeAlias

from marginlab._utils import is_namedtuple, make_jsonable
from marginlab.types import DataDict, JSONValue

__all__ = [
    "Option",
    "Options",
    "serialize",
]


@typing.final
class Option:
    """Serialization options for one record type."""

    __slots__ = (
        "target",
        "recurse",
        "include",
        "exclude",
        "field_names",
    )

    def __init__(
        self,
        target: typing.Type[typing.Any],
        recurse: bool = True,
        include: typing.Optional[typing.Set[str]] = None,
        exclude: typing.Optional[typing.Set[str]] = None,
    ) -> None:
        if include and exclude:
            raise ValueError(
                "Cannot specify both 'include' and 'exclude' in the same Option."
            )
        target_fields = getattr(target, "_fields", None)
        if not isinstance(target, type) or not isinstance(target_fields, tuple):
            raise TypeError(
                f"Target must be a NamedTuple record type, got {getattr(target, '__name__', target)!r}"
            )

        self.target = target
        self.recurse = recurse
        self.include = include
        self.exclude = exclude

        known = set(target_fields)
        if include:
            unknown_fields = include - known
            if unknown_fields:
                raise ValueError(
                    f"Some included fields are not present in {target.__name__} - {', '.join(sorted(unknown_fields))}"
                )
            self.field_names = [name for name in target_fields if name in include]
        elif exclude:
            unknown_fields = exclude - known
            if unknown_fields:
                raise ValueError(
                    f"Some excluded fields are not present in {target.__name__} - {', '.join(sorted(unknown_fields))}"
                )
            self.field_names = [name for name in target_fields if name not in exclude]
        else:
            self.field_names = list(target_fields)

    def __repr__(self) -> str:
        return (
            f"Option(target={self.target.__name__}, recurse={self.recurse}, "
            f"include={self.include}, exclude={self.exclude})"
        )


Options: TypeAlias = typing.Mapping[typing.Type[typing.Any], Option]


def _serialize_value(value: typing.Any, options: Options) -> typing.Any:
    if is_namedtuple(value):
        return _asdict(value, options)
    if isinstance(value, typing.Mapping):
        return {str(k): _serialize_value(v, options) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_serialize_value(item, options) for item in value]
    return make_jsonable(value)


def _asdict(record: typing.Any, options: Options) -> DataDict:
    rtype = type(record)
    option = options.get(rtype)
    field_names = option.field_names if option else list(rtype._fields)
    recurse = option.recurse if option else True

    data: DataDict = {}
    for name in field_names:
        value = getattr(record, name)
        if not recurse and is_namedtuple(value):
            data[name] = make_jsonable(value)
        else:
            data[name] = _serialize_value(value, options)
    return data


def serialize(
    record: typing.Any,
    *options: Option,
) -> JSONValue:
    """
    Serialize a record (or a list of records) into JSON-compatible data.

    Named tuple records become mappings of their fields; numpy values and
    non-finite floats are converted by `make_jsonable`.

    :param record: Record, mapping or sequence of records
    :param options: Per record type options, e.g. to drop bulky fields
    :return: JSON-compatible data
    """
    options_map = {option.target: option for option in options}
    return typing.cast(JSONValue, _serialize_value(record, options_map))
