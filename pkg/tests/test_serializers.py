import math
import typing

import numpy as np
import pytest

from marginlab.bounds import BoundCheck
from marginlab.serializers import Option, serialize


class Inner(typing.NamedTuple):
    value: float
    vector: np.ndarray


class Outer(typing.NamedTuple):
    name: str
    inner: Inner
    items: typing.List[Inner]


@pytest.fixture
def outer() -> Outer:
    inner = Inner(math.inf, np.array([1.0, 2.0]))
    return Outer("run", inner, [inner, inner])


class TestBasicSerialization:
    """Test basic serialization functionality."""

    def test_serialize_record(self, outer: Outer):
        """Test serializing nested records."""
        result = serialize(outer)
        assert result == {
            "name": "run",
            "inner": {"value": "inf", "vector": [1.0, 2.0]},
            "items": [
                {"value": "inf", "vector": [1.0, 2.0]},
                {"value": "inf", "vector": [1.0, 2.0]},
            ],
        }

    def test_serialize_list_of_records(self):
        """Test serializing a list of bound checks."""
        checks = [BoundCheck("rate", 3, 0.2, 0.1, 0.1, True)]
        result = serialize(checks)
        assert result == [
            {
                "label": "rate",
                "t": 3,
                "lhs": 0.2,
                "rhs": 0.1,
                "slack": 0.1,
                "passed": True,
                "vacuous": False,
            }
        ]


class TestOptions:
    """Test per record type options."""

    def test_exclude(self, outer: Outer):
        """Test dropping bulky fields."""
        result = serialize(outer, Option(Inner, exclude={"vector"}))
        assert result["inner"] == {"value": "inf"}
        assert result["items"][0] == {"value": "inf"}

    def test_include(self, outer: Outer):
        """Test keeping only selected fields, in declaration order."""
        result = serialize(outer, Option(Outer, include={"inner", "name"}))
        assert list(result) == ["name", "inner"]

    def test_include_and_exclude(self):
        """Test that include and exclude cannot be combined."""
        with pytest.raises(ValueError):
            Option(Inner, include={"value"}, exclude={"vector"})

    def test_unknown_fields(self):
        """Test that unknown field names are rejected."""
        with pytest.raises(ValueError, match="not present in Inner"):
            Option(Inner, exclude={"missing"})

    def test_target_must_be_record_type(self):
        """Test that options only target named tuple types."""
        with pytest.raises(TypeError):
            Option(dict)

    def test_repr(self):
        """Test the option repr."""
        assert repr(Option(Inner)).startswith("Option(target=Inner")
