import copy
import pathlib

import pytest

from marginlab.config import (
    LOG_LEVEL_ENV,
    WORKERS_ENV,
    DatasetKind,
    SweepAxis,
    Tolerances,
    load_run_config,
    load_tolerances,
    parse_run_config,
    parse_sweep_config,
    parse_tolerances_config,
    resolve_log_level,
    resolve_workers,
)
from marginlab.descent import PolicyKind
from marginlab.exceptions import ConfigurationError, UsageError, ValidationError
from marginlab.losses import LossKind

RUN = {
    "dataset": {"kind": "generated", "n": 20, "d": 5, "margin": 0.25},
    "loss": {"kind": "exp"},
    "policy": {"kind": "constant_hat_eta", "value": 1.0},
    "T": 100,
}


def _run(**changes):
    data = copy.deepcopy(RUN)
    data.update(changes)
    return data


def _locations(exc: ValidationError):
    return {tuple(detail.location): detail.code for detail in exc.error_list}


class TestParseRunConfig:
    """Test run configuration parsing."""

    def test_defaults(self, tmp_path):
        """Test a minimal configuration and its defaults."""
        config = parse_run_config(RUN, base_dir=tmp_path)
        assert config.dataset.kind is DatasetKind.GENERATED
        assert (config.dataset.n, config.dataset.d, config.dataset.margin) == (20, 5, 0.25)
        assert config.loss.kind is LossKind.EXP
        assert config.policy.kind is PolicyKind.CONSTANT_HAT_ETA
        assert config.policy.value == 1.0
        assert config.w0 is None
        assert config.T == 100
        assert config.record_every == 1
        assert config.tolerances == Tolerances()
        assert config.output_dir == pathlib.Path("out")
        assert config.seed == 0
        assert config.workers is None
        assert config.dump_w is True

    def test_full(self, tmp_path):
        """Test every optional key."""
        data = _run(
            policy={"kind": "aggressive_risk"},
            w0=[0.0, 0.1, 0.0, 0.0, 0.0],
            record_every=10,
            tolerances={"oracle": 1e-8, "support": 1e-5, "rel": 1e-6},
            output_dir="results",
            seed=7,
            workers=2,
            dump_w=False,
        )
        config = parse_run_config(data, base_dir=tmp_path)
        assert config.policy.value == 1.0
        assert config.w0 == (0.0, 0.1, 0.0, 0.0, 0.0)
        assert config.tolerances == Tolerances(oracle=1e-8, support=1e-5, rel=1e-6)
        assert config.output_dir == pathlib.Path("results")
        assert (config.record_every, config.seed, config.workers, config.dump_w) == (10, 7, 2, False)

    def test_poly_loss(self, tmp_path):
        """Test that the polynomial loss carries its exponent."""
        data = _run(loss={"kind": "poly", "k": 2}, policy={"kind": "constant_eta", "value": 0.5})
        config = parse_run_config(data, base_dir=tmp_path)
        assert config.loss.k == 2.0
        assert config.loss.build().token == "poly:2.0"

    def test_unknown_key(self, tmp_path):
        """Test that unknown keys are rejected."""
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(_run(steps=10), base_dir=tmp_path)
        assert _locations(exc_info.value) == {("steps",): "unknown_key"}
        assert str(exc_info.value).startswith("1 error(s) in RunConfig")

    def test_every_error_is_reported(self, tmp_path):
        """Test that all invalid fields are collected into one error."""
        data = _run(
            dataset={"kind": "generated", "n": 0, "d": 5, "margin": 1.5},
            loss={"kind": "cubic"},
            T=-1,
        )
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(data, base_dir=tmp_path)
        locations = _locations(exc_info.value)
        assert locations[("dataset", "n")] == "value_out_of_bounds"
        assert locations[("dataset", "margin")] == "value_not_in_range"
        assert locations[("loss", "kind")] == "invalid_choice"
        assert locations[("T",)] == "value_out_of_bounds"

    def test_missing_keys(self, tmp_path):
        """Test that required keys are reported as missing."""
        data = _run()
        del data["T"]
        del data["loss"]
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(data, base_dir=tmp_path)
        locations = _locations(exc_info.value)
        assert locations[("T",)] == "missing_key"
        assert locations[("loss",)] == "missing_key"

    def test_is_configuration_error(self, tmp_path):
        """Test that validation errors are configuration errors."""
        with pytest.raises(ConfigurationError):
            parse_run_config(_run(T="many"), base_dir=tmp_path)

    def test_not_an_object(self):
        """Test documents that are not JSON objects."""
        with pytest.raises(ValidationError):
            parse_run_config([1, 2, 3])

    @pytest.mark.parametrize(
        "loss, policy",
        [
            ({"kind": "logistic"}, {"kind": "constant_hat_eta", "value": 0.5}),
            ({"kind": "logistic"}, {"kind": "aggressive_risk", "value": 1.0}),
            ({"kind": "exp"}, {"kind": "constant_hat_eta", "value": 2.0}),
        ],
    )
    def test_step_size_checked_against_loss(self, tmp_path, loss, policy):
        """Test that step sizes above the loss's limit are rejected."""
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(_run(loss=loss, policy=policy), base_dir=tmp_path)
        assert _locations(exc_info.value) == {("policy",): "invalid_step_size"}

    def test_loss_exponent(self, tmp_path):
        """Test that only the polynomial loss takes an exponent."""
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(_run(loss={"kind": "poly"}), base_dir=tmp_path)
        assert _locations(exc_info.value) == {("loss", "k"): "missing_key"}

        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(_run(loss={"kind": "exp", "k": 2}), base_dir=tmp_path)
        assert _locations(exc_info.value) == {("loss", "k"): "unexpected_key"}

    def test_w0(self, tmp_path):
        """Test initial weights of the wrong length or form."""
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(_run(w0=[0.0, 0.0]), base_dir=tmp_path)
        assert _locations(exc_info.value) == {("w0",): "dimension_mismatch"}

        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(_run(w0="ones"), base_dir=tmp_path)
        assert _locations(exc_info.value) == {("w0",): "invalid_value"}

    def test_tolerances(self, tmp_path):
        """Test invalid and unknown tolerances."""
        data = _run(tolerances={"rel": -1.0, "abs": 1.0})
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(data, base_dir=tmp_path)
        locations = _locations(exc_info.value)
        assert locations[("tolerances", "rel")] == "value_out_of_bounds"
        assert locations[("tolerances", "abs")] == "unknown_key"

    def test_lower_bound_dataset(self, tmp_path):
        """Test the lower-bound dataset and its size limit."""
        data = _run(dataset={"kind": "lower_bound", "n": 8})
        config = parse_run_config(data, base_dir=tmp_path)
        assert config.dataset.kind is DatasetKind.LOWER_BOUND

        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(_run(dataset={"kind": "lower_bound", "n": 1}), base_dir=tmp_path)
        assert ("dataset", "n") in _locations(exc_info.value)

    def test_file_dataset_is_relative_to_base(self, tmp_path):
        """Test that dataset paths resolve against the configuration's directory."""
        (tmp_path / "data").mkdir()
        (tmp_path / "data" / "z.csv").write_text("0.1,0.2\n")
        data = _run(dataset={"kind": "file", "path": "data/z.csv"})
        config = parse_run_config(data, base_dir=tmp_path)
        assert config.dataset.path == tmp_path / "data" / "z.csv"

    def test_missing_file_dataset(self, tmp_path):
        """Test that a missing dataset file is reported under its key."""
        data = _run(dataset={"kind": "file", "path": "missing.csv"})
        with pytest.raises(ValidationError) as exc_info:
            parse_run_config(data, base_dir=tmp_path)
        assert _locations(exc_info.value) == {("dataset", "path"): "path_missing"}

    def test_with_overrides(self, tmp_path):
        """Test command line overrides."""
        config = parse_run_config(RUN, base_dir=tmp_path)
        updated = config.with_overrides(output_dir=tmp_path / "x", seed=3)
        assert updated.output_dir == tmp_path / "x"
        assert updated.seed == 3
        assert updated.workers is None
        assert config.with_overrides() == config


class TestLoadRunConfig:
    """Test reading configuration files."""

    def test_load(self, tmp_path):
        """Test that file datasets resolve against the file's directory."""
        (tmp_path / "z.csv").write_text("0.1,0.2\n")
        path = tmp_path / "run.json"
        path.write_text('{"dataset": {"kind": "file", "path": "z.csv"}, "loss": {"kind": "exp"}, '
                        '"policy": {"kind": "constant_eta", "value": 1.0}, "T": 10}')
        config = load_run_config(path)
        assert config.dataset.path == tmp_path / "z.csv"

    def test_invalid_json(self, tmp_path):
        """Test that malformed JSON is a configuration error."""
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError, match="not valid JSON"):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing file is a configuration error."""
        with pytest.raises(ConfigurationError, match="not found"):
            load_run_config(tmp_path / "missing.json")


class TestLoadTolerances:
    """Test reading tolerances for re-certification."""

    def test_tolerances_only(self, tmp_path):
        """Test a document that holds nothing but tolerances."""
        path = tmp_path / "tolerances.json"
        path.write_text('{"tolerances": {"rel": 1e-6}}')
        assert load_tolerances(path) == Tolerances(rel=1e-6)

    def test_empty_document(self):
        """Test that an empty document gives the default tolerances."""
        assert parse_tolerances_config({}) == Tolerances()

    def test_run_configuration(self):
        """Test that a full run configuration is still accepted."""
        data = _run(tolerances={"dual": 1e-4})
        assert parse_tolerances_config(data) == Tolerances(dual=1e-4)

    def test_invalid(self):
        """Test invalid and unknown tolerance keys."""
        with pytest.raises(ValidationError) as exc_info:
            parse_tolerances_config({"tolerances": {"rel": 0.0, "abs": 1.0}})
        locations = _locations(exc_info.value)
        assert locations[("tolerances", "rel")] == "value_out_of_bounds"
        assert locations[("tolerances", "abs")] == "unknown_key"

    def test_partial_run_configuration(self):
        """Test that other keys make the document a run configuration."""
        with pytest.raises(ValidationError) as exc_info:
            parse_tolerances_config({"tolerances": {}, "T": 10})
        assert _locations(exc_info.value)[("dataset",)] == "missing_key"


class TestSweepConfig:
    """Test sweep configurations."""

    def test_expand_n(self, tmp_path):
        """Test one run per dataset size, each in its own directory."""
        sweep = parse_sweep_config({"template": RUN, "axis": "n", "values": [8, 16]}, base_dir=tmp_path)
        assert sweep.axis is SweepAxis.N
        runs = sweep.expand()
        assert [run.dataset.n for run in runs] == [8, 16]
        assert [run.output_dir for run in runs] == [pathlib.Path("out/n=8"), pathlib.Path("out/n=16")]

    def test_expand_policy(self, tmp_path):
        """Test that schedule tokens are parsed and sanitized for directory names."""
        sweep = parse_sweep_config(
            {"template": RUN, "axis": "policy", "values": ["constant_eta:0.5"]}, base_dir=tmp_path
        )
        (run,) = sweep.expand()
        assert run.policy.kind is PolicyKind.CONSTANT_ETA
        assert run.policy.value == 0.5
        assert run.output_dir == pathlib.Path("out/policy=constant_eta_0.5")

    def test_empty_values(self, tmp_path):
        """Test that an empty axis is a usage error."""
        with pytest.raises(UsageError):
            parse_sweep_config({"template": RUN, "axis": "T", "values": []}, base_dir=tmp_path)

    def test_invalid_values(self, tmp_path):
        """Test that each bad value is located by its index."""
        data = {"template": RUN, "axis": "policy", "values": ["constant_eta:0.5", "adam:1"]}
        with pytest.raises(ValidationError) as exc_info:
            parse_sweep_config(data, base_dir=tmp_path)
        assert [detail.location for detail in exc_info.value.error_list] == [["values", 1]]

    def test_invalid_template(self, tmp_path):
        """Test that template errors are located under the template key."""
        data = {"template": _run(T=0), "axis": "T", "values": [10]}
        with pytest.raises(ValidationError) as exc_info:
            parse_sweep_config(data, base_dir=tmp_path)
        assert ("template", "T") in _locations(exc_info.value)

    def test_n_over_file_dataset(self, tmp_path):
        """Test that a file dataset cannot be resized."""
        (tmp_path / "z.csv").write_text("0.1,0.2\n")
        template = _run(dataset={"kind": "file", "path": "z.csv"})
        sweep = parse_sweep_config({"template": template, "axis": "n", "values": [4]}, base_dir=tmp_path)
        with pytest.raises(UsageError):
            sweep.expand()


class TestEnvironment:
    """Test settings read from the environment."""

    def test_workers(self, monkeypatch):
        """Test the flag, environment, configuration order."""
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert resolve_workers() == 1
        assert resolve_workers(configured=2) == 2
        monkeypatch.setenv(WORKERS_ENV, "4")
        assert resolve_workers(configured=2) == 4
        assert resolve_workers(3, configured=2) == 3

    @pytest.mark.parametrize("raw", ["zero", "0", "-2"])
    def test_invalid_workers(self, monkeypatch, raw):
        """Test that the environment value must be a positive integer."""
        monkeypatch.setenv(WORKERS_ENV, raw)
        with pytest.raises(ConfigurationError):
            resolve_workers()

    def test_log_level(self, monkeypatch):
        """Test the flag, environment, default order."""
        monkeypatch.delenv(LOG_LEVEL_ENV, raising=False)
        assert resolve_log_level() == "WARNING"
        monkeypatch.setenv(LOG_LEVEL_ENV, "info")
        assert resolve_log_level() == "INFO"
        assert resolve_log_level("debug") == "DEBUG"

    def test_unknown_log_level(self):
        """Test that unknown level names are rejected."""
        with pytest.raises(ConfigurationError):
            resolve_log_level("verbose")
