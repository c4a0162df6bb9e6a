"""Tests for utility functions."""

import enum
import math
import typing
from collections import namedtuple
from pathlib import Path

import numpy as np
import pytest

from marginlab._utils import (
    atomic_write,
    dumps,
    format_float,
    is_namedtuple,
    loads,
    make_jsonable,
)


class Color(enum.Enum):
    RED = "red"


class Point(typing.NamedTuple):
    x: float
    y: float


class TestTypeChecking:
    """Test type checking utilities."""

    def test_is_namedtuple(self):
        """Test is_namedtuple function."""
        Legacy = namedtuple("Legacy", ["a"])
        assert is_namedtuple(Point(1.0, 2.0))
        assert is_namedtuple(Legacy(1))
        assert not is_namedtuple((1.0, 2.0))
        assert not is_namedtuple(Point)


class TestFormatFloat:
    """Test float formatting."""

    @pytest.mark.parametrize("value", [0.1, 1 / 3, 1e-300, 2.0**60, -0.0, 5e-324])
    def test_round_trip(self, value):
        """Test that the formatted value parses back to the same double."""
        assert float(format_float(value)) == value

    def test_non_finite(self):
        """Test the names of non-finite values."""
        assert format_float(math.inf) == "inf"
        assert format_float(-math.inf) == "-inf"
        assert format_float(math.nan) == "nan"

    def test_numpy_scalars(self):
        """Test that numpy scalars are formatted as Python floats."""
        assert format_float(np.float64(0.25)) == "0.25"


class TestMakeJsonable:
    """Test make_jsonable."""

    def test_primitives(self):
        """Test values that are already JSON-compatible."""
        assert make_jsonable(None) is None
        assert make_jsonable("a") == "a"
        assert make_jsonable(True) is True
        assert make_jsonable(3) == 3

    def test_numpy(self):
        """Test numpy scalars and arrays."""
        assert make_jsonable(np.int64(4)) == 4
        assert make_jsonable(np.bool_(True)) is True
        assert make_jsonable(np.array([[1.0, 2.0], [3.0, 4.0]])) == [[1.0, 2.0], [3.0, 4.0]]

    def test_non_finite_floats(self):
        """Test that non-finite floats become strings."""
        assert make_jsonable([math.inf, -math.inf, math.nan, 1.5]) == ["inf", "-inf", "nan", 1.5]

    def test_records(self):
        """Test named tuples, enums and paths."""
        assert make_jsonable(Point(1.0, math.inf)) == {"x": 1.0, "y": "inf"}
        assert make_jsonable(Color.RED) == "red"
        assert make_jsonable(Path("out") / "run") == str(Path("out") / "run")

    def test_collections(self):
        """Test mappings, tuples and sets."""
        assert make_jsonable({1: (1, 2)}) == {"1": [1, 2]}
        assert make_jsonable({3, 1, 2}) == [1, 2, 3]

    def test_unsupported(self):
        """Test that unsupported objects raise TypeError."""
        with pytest.raises(TypeError):
            make_jsonable(object())


class TestJson:
    """Test JSON encoding."""

    def test_dumps_is_sorted_and_indented(self):
        """Test key order, indentation and the trailing newline."""
        data = dumps({"b": 1, "a": [1.0, math.inf]})
        assert data.endswith(b"\n")
        assert data.index(b'"a"') < data.index(b'"b"')
        assert b'\n  "a"' in data
        assert loads(data) == {"a": [1.0, "inf"], "b": 1}

    def test_dumps_is_deterministic(self):
        """Test that equal inputs encode to identical bytes."""
        record = Point(0.1, 0.2)
        assert dumps(record) == dumps(Point(0.1, 0.2))


class TestAtomicWrite:
    """Test atomic file writes."""

    def test_creates_parents(self, tmp_path):
        """Test that missing directories are created."""
        target = atomic_write(tmp_path / "a" / "b" / "file.txt", "content")
        assert target.read_text() == "content"

    def test_replaces_content(self, tmp_path):
        """Test that existing files are replaced and no temporary file remains."""
        target = tmp_path / "file.bin"
        atomic_write(target, b"old")
        atomic_write(target, b"new")
        assert target.read_bytes() == b"new"
        assert [p.name for p in tmp_path.iterdir()] == ["file.bin"]
