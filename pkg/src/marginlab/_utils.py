import enum
import math
import os
import pathlib
import tempfile
import typing

import numpy as np

from marginlab.types import JSONDict, JSONList, JSONValue, PathLike

try:
    import orjson as json  # type: ignore[import]
except ImportError:
    try:
        import ujson as json  # type: ignore[no-redef, import-untyped]
    except ImportError:
        import json  # type: ignore[no-redef] # Fallback to the standard library json module


__all__ = [
    "make_jsonable",
    "dumps",
    "loads",
    "atomic_write",
    "format_float",
    "is_namedtuple",
]


def is_namedtuple(obj: typing.Any, /) -> bool:
    """Check if an object is a named tuple instance."""
    return isinstance(obj, tuple) and isinstance(
        getattr(type(obj), "_fields", None), tuple
    )


def format_float(value: float) -> str:
    """
    Format a float so that parsing it back yields the identical double.

    Uses `repr`, which is the shortest round-tripping form (at most 17
    significant digits). Non-finite values render as `inf`, `-inf`, `nan`.
    """
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def _jsonable_float(value: float) -> JSONValue:
    if math.isfinite(value):
        return value
    return format_float(value)


def jsonable_mapping(obj: typing.Mapping[typing.Any, typing.Any]) -> JSONDict:
    return {str(key): make_jsonable(value) for key, value in obj.items()}


def jsonable_iterable(obj: typing.Iterable[typing.Any]) -> JSONList:
    return [make_jsonable(item) for item in obj]


def make_jsonable(obj: typing.Any) -> JSONValue:
    """
    Convert an object into a JSON-serializable value.

    Handles numpy scalars and arrays, named tuples (as mappings of their
    fields), enums, paths, and non-finite floats (as strings).

    :param obj: The object to convert
    :return: A JSON-serializable value
    :raises TypeError: If the object cannot be converted
    """
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, np.bool_):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return _jsonable_float(float(obj))
    if isinstance(obj, np.ndarray):
        return jsonable_iterable(obj.tolist())
    if isinstance(obj, enum.Enum):
        return make_jsonable(obj.value)
    if isinstance(obj, pathlib.PurePath):
        return str(obj)
    if is_namedtuple(obj):
        return jsonable_mapping(obj._asdict())
    if isinstance(obj, typing.Mapping):
        return jsonable_mapping(obj)
    if isinstance(obj, (list, tuple, set, frozenset)):
        return jsonable_iterable(sorted(obj) if isinstance(obj, (set, frozenset)) else obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps(obj: typing.Any) -> bytes:
    """Serialize to indented JSON bytes with sorted keys."""
    data = make_jsonable(obj)
    if getattr(json, "__name__", "") == "orjson":
        return json.dumps(  # type: ignore[no-any-return]
            data, option=json.OPT_INDENT_2 | json.OPT_SORT_KEYS  # type: ignore[attr-defined]
        ) + b"\n"
    text = json.dumps(data, indent=2, sort_keys=True)  # type: ignore[call-arg]
    return (text + "\n").encode("utf-8")


def loads(data: typing.Union[str, bytes]) -> typing.Any:
    """Deserialize JSON text or bytes."""
    return json.loads(data)


def atomic_write(path: PathLike, data: typing.Union[str, bytes]) -> pathlib.Path:
    """
    Write `data` to `path` atomically.

    The content goes to a temporary file in the destination directory which
    then replaces the target.
    """
    target = pathlib.Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp_name = tempfile.mkstemp(
        prefix=f".{target.name}.", suffix=".tmp", dir=target.parent
    )
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target
