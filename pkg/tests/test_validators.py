"""Tests for validators module."""

import math

import pytest

from marginlab import validators
from marginlab.exceptions import ValidationError


class TestNumberValidators:
    """Test number comparison validators."""

    def test_gt_validator(self):
        """Test gt (greater than) validator."""
        validator = validators.gt(0)
        validator(0.5, "margin")

        with pytest.raises(ValidationError) as exc_info:
            validator(0, "margin")
        detail = exc_info.value.error_list[0]
        assert detail.location == ["margin"]
        assert detail.code == "value_out_of_bounds"
        assert detail.message == "'0 > 0' is not True"

    def test_gte_validator(self):
        """Test gte (greater than or equal) validator."""
        validator = validators.gte(2)
        validator(2, None)
        validator(10, None)

        with pytest.raises(ValidationError):
            validator(1, None)

    def test_custom_message(self):
        """Test a custom message template."""
        validator = validators.gt(0, message="{value} is not above {bound}")
        with pytest.raises(ValidationError, match="-1 is not above 0"):
            validator(-1, None)

    def test_factory_needs_symbol(self):
        """Test that the factory needs a symbol."""
        with pytest.raises(ValueError):
            validators.number_validator_factory(lambda a, b: True, "")


class TestRangeValidator:
    """Test range_ validator."""

    def test_inclusive(self):
        """Test that end points are allowed by default."""
        validator = validators.range_(0.0, 1.0)
        validator(0.0, "margin")
        validator(1.0, "margin")

    def test_exclusive(self):
        """Test the open interval used for margins."""
        validator = validators.range_(0.0, 1.0, inclusive=False)
        validator(0.25, "margin")
        for value in (0.0, 1.0, 1.5):
            with pytest.raises(ValidationError) as exc_info:
                validator(value, "margin")
            assert exc_info.value.error_list[0].code == "value_not_in_range"
            assert exc_info.value.error_list[0].context["inclusive"] is False


class TestTypeValidators:
    """Test type and membership validators."""

    def test_instance_of(self):
        """Test instance_of validator."""
        validator = validators.instance_of((int, float))
        validator(1, "T")
        validator(1.5, "T")
        with pytest.raises(ValidationError, match="Expected int or float, got str"):
            validator("1", "T")

    def test_instance_of_rejects_booleans(self):
        """Test that booleans are not accepted as numbers."""
        with pytest.raises(ValidationError):
            validators.instance_of(int)(True, "T")
        validators.instance_of(bool)(True, "dump_w")

    def test_member_of(self):
        """Test member_of validator."""
        validator = validators.member_of(["exp", "logistic", "poly"])
        validator("exp", "kind")
        with pytest.raises(ValidationError) as exc_info:
            validator("cubic", "kind")
        assert exc_info.value.error_list[0].code == "invalid_choice"
        assert exc_info.value.error_list[0].context == {"choices": ["exp", "logistic", "poly"]}

    @pytest.mark.parametrize("value", [math.inf, -math.inf, math.nan, "1.0", None])
    def test_finite(self, value):
        """Test that non-finite and non-numeric values are rejected."""
        with pytest.raises(ValidationError):
            validators.finite(value, "value")

    def test_finite_accepts_numbers(self):
        """Test finite numbers."""
        validators.finite(1, "value")
        validators.finite(-2.5, "value")


class TestPathValidator:
    """Test path validator."""

    def test_needs_a_check(self):
        """Test that at least one check is required."""
        with pytest.raises(ValueError):
            validators.path()

    def test_is_file(self, tmp_path):
        """Test missing paths, directories and files."""
        validator = validators.path(is_file=True)
        data = tmp_path / "data.csv"
        data.write_text("0.1,0.2\n")
        validator(data, "path")

        with pytest.raises(ValidationError) as exc_info:
            validator(tmp_path / "missing.csv", "path")
        assert exc_info.value.error_list[0].code == "path_missing"

        with pytest.raises(ValidationError) as exc_info:
            validator(tmp_path, "path")
        assert exc_info.value.error_list[0].code == "path_not_file"

    def test_exists(self, tmp_path):
        """Test that a directory satisfies the existence check."""
        validators.path(exists=True)(tmp_path, "output_dir")


class TestPipeline:
    """Test validator pipelines."""

    def test_single_validator_is_returned(self):
        """Test that a one-element pipeline is the validator itself."""
        validator = validators.gt(0)
        assert validators.pipe(validator) is validator

    def test_needs_validators(self):
        """Test that an empty pipeline is rejected."""
        with pytest.raises(ValueError):
            validators.pipe()

    def test_collects_every_failure(self):
        """Test that every failing step is reported."""
        validator = validators.pipe(validators.gt(5), validators.range_(-1.0, 0.0))
        with pytest.raises(ValidationError) as exc_info:
            validator(3, "value")
        assert len(exc_info.value.error_list) == 2

    def test_fail_fast(self):
        """Test that fail_fast stops at the first failure."""
        validator = validators.pipe(validators.instance_of(int), validators.gte(1), fail_fast=True)
        with pytest.raises(ValidationError) as exc_info:
            validator("x", "T")
        assert len(exc_info.value.error_list) == 1
        assert exc_info.value.error_list[0].code == "invalid_type"

    def test_nested_pipelines_are_flattened(self):
        """Test that pipelines of pipelines are flattened."""
        inner = validators.pipe(validators.gt(0), validators.range_(0, 10))
        outer = validators.pipe(inner, validators.finite)
        assert isinstance(outer, validators.Pipeline)
        assert len(outer.validators) == 3
