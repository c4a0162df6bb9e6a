import pytest
from click.testing import CliRunner

from marginlab._utils import dumps
from marginlab.cli import cli, main
from marginlab.exceptions import EXIT_CONFIGURATION, EXIT_OK


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def _write_config(path, **changes):
    data = {
        "dataset": {"kind": "generated", "n": 8, "d": 3, "margin": 0.3},
        "loss": {"kind": "exp"},
        "policy": {"kind": "constant_hat_eta", "value": 1.0},
        "T": 30,
    }
    data.update(changes)
    path.write_bytes(dumps(data))
    return path


class TestVerifyLoss:
    """Test the verify-loss command."""

    def test_exp(self, runner, tmp_path):
        """Test that the exponential loss passes."""
        result = runner.invoke(cli, ["verify-loss", "exp", "--out", str(tmp_path)])
        assert result.exit_code == EXIT_OK
        assert (tmp_path / "assumption.json").is_file()

    def test_unknown_loss(self, runner):
        """Test that unknown losses are configuration errors."""
        result = runner.invoke(cli, ["verify-loss", "cubic"])
        assert result.exit_code == EXIT_CONFIGURATION


class TestRun:
    """Test the run command."""

    def test_run(self, runner, tmp_path):
        """Test a passing run with an output override."""
        config = _write_config(tmp_path / "run.json")
        out = tmp_path / "out"
        result = runner.invoke(cli, ["run", "--config", str(config), "--out", str(out)])
        assert result.exit_code == EXIT_OK, result.output
        assert (out / "reports.json").is_file()

    def test_invalid_config(self, runner, tmp_path):
        """Test that an invalid configuration exits with the configuration code."""
        config = _write_config(tmp_path / "run.json", T=0)
        result = runner.invoke(cli, ["run", "--config", str(config)])
        assert result.exit_code == EXIT_CONFIGURATION

    def test_missing_config(self, runner, tmp_path):
        """Test that a missing configuration file is a configuration error."""
        result = runner.invoke(cli, ["run", "--config", str(tmp_path / "missing.json")])
        assert result.exit_code == EXIT_CONFIGURATION

    def test_unknown_log_level(self, runner, tmp_path):
        """Test that unknown log levels are rejected before any command runs."""
        result = runner.invoke(cli, ["--log-level", "bogus", "verify-loss", "exp"])
        assert result.exit_code == EXIT_CONFIGURATION


class TestGenDataAndCheck:
    """Test gen-data and check."""

    def test_gen_data(self, runner, tmp_path):
        """Test writing a lower-bound dataset."""
        path = tmp_path / "lb.csv"
        result = runner.invoke(cli, ["gen-data", "--kind", "lower_bound", "-n", "6", "--out", str(path)])
        assert result.exit_code == EXIT_OK
        assert path.read_text().startswith("# schema=folded\n")

    def test_check(self, runner, tmp_path):
        """Test re-certifying the output of a run."""
        config = _write_config(tmp_path / "run.json")
        out = tmp_path / "out"
        assert runner.invoke(cli, ["run", "--config", str(config), "--out", str(out)]).exit_code == EXIT_OK
        result = runner.invoke(
            cli,
            [
                "check",
                str(out / "trajectory.csv"),
                "--dataset",
                str(out / "dataset.csv"),
                "--out",
                str(tmp_path / "check"),
            ],
        )
        assert result.exit_code == EXIT_OK
        assert (tmp_path / "check" / "reports.json").is_file()

    def test_check_with_tolerances_only(self, runner, tmp_path):
        """Test that check reads a configuration holding only tolerances."""
        config = _write_config(tmp_path / "run.json")
        out = tmp_path / "out"
        assert runner.invoke(cli, ["run", "--config", str(config), "--out", str(out)]).exit_code == EXIT_OK
        tolerances = tmp_path / "tolerances.json"
        tolerances.write_bytes(dumps({"tolerances": {"rel": 1e-8}}))
        args = ["check", str(out / "trajectory.csv"), "--dataset", str(out / "dataset.csv")]
        result = runner.invoke(cli, [*args, "--out", str(tmp_path / "check"), "--config", str(tolerances)])
        assert result.exit_code == EXIT_OK, result.output

        tolerances.write_bytes(dumps({"tolerances": {"rel": -1.0}}))
        result = runner.invoke(cli, [*args, "--out", str(tmp_path / "bad"), "--config", str(tolerances)])
        assert result.exit_code == EXIT_CONFIGURATION


class TestMain:
    """Test the console script entry point."""

    def test_returns_exit_codes(self, tmp_path):
        """Test that main returns the exit code instead of exiting."""
        assert main(["verify-loss", "exp"]) == EXIT_OK
        assert main(["verify-loss", "poly:-1"]) == EXIT_CONFIGURATION

    def test_usage_errors(self):
        """Test that click usage errors map to the configuration code."""
        assert main(["run"]) == EXIT_CONFIGURATION
        assert main(["no-such-command"]) == EXIT_CONFIGURATION

    def test_help(self):
        """Test that help exits cleanly."""
        assert main(["--help"]) == EXIT_OK
