"""
Command line interface.

Exit codes: 0 when every applicable check passed, 1 when a check failed,
2 for configuration and usage errors, 3 for numeric failures.
"""

import functools
import logging
import pathlib
import sys
import typing

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from marginlab.bounds import BoundReport
from marginlab.config import (
    DatasetKind,
    DatasetSpec,
    Tolerances,
    load_run_config,
    load_sweep_config,
    load_tolerances,
    resolve_log_level,
    resolve_workers,
)
from marginlab.data import Schema
from marginlab.exceptions import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIGURATION,
    EXIT_OK,
    DetailedError,
    MarginLabException,
    exit_code_for,
)
from marginlab.losses import parse_loss
from marginlab.runner import cmd_check, cmd_gen_data, cmd_run, cmd_sweep, cmd_verify_loss

__all__ = ["main", "configure_logging"]

logger = logging.getLogger(__name__)

console = Console(stderr=True)

F = typing.TypeVar("F", bound=typing.Callable[..., typing.Any])


def configure_logging(level: str) -> None:
    """Attach a rich handler to the package logger."""
    package_logger = logging.getLogger("marginlab")
    for handler in list(package_logger.handlers):
        if isinstance(handler, RichHandler):
            package_logger.removeHandler(handler)
    handler = RichHandler(console=console, show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(level)


def _error_message(exc: BaseException) -> str:
    qualified = f"{type(exc).__module__}.{type(exc).__name__}"
    return f"{qualified}: {exc}"


def handle_errors(func: F) -> F:
    """Turn package errors into a message on stderr and the mapped exit code."""

    @functools.wraps(func)
    def wrapper(*args: typing.Any, **kwargs: typing.Any) -> typing.Any:
        try:
            return func(*args, **kwargs)
        except MarginLabException as exc:
            console.print(f"[bold red]error[/] {_error_message(exc)}", markup=True, highlight=False)
            if isinstance(exc, DetailedError):
                logger.debug("Error details: %s", list(exc.errors()))
            sys.exit(exit_code_for(exc))
        except FloatingPointError as exc:
            console.print(f"[bold red]error[/] {_error_message(exc)}", markup=True, highlight=False)
            sys.exit(exit_code_for(exc))

    return typing.cast(F, wrapper)


def _summary(reports: typing.List[BoundReport]) -> Table:
    table = Table(title="Bound bench")
    table.add_column("theorem")
    table.add_column("applicable")
    table.add_column("passed")
    table.add_column("checks", justify="right")
    table.add_column("min slack", justify="right")
    for report in reports:
        status = "[green]yes[/]" if report.passed else "[red]no[/]"
        table.add_row(
            report.theorem_id.value,
            "yes" if report.applicable else "no",
            status if report.applicable else "-",
            str(len(report.checks)),
            f"{report.min_slack:.3e}",
        )
    return table


@click.group()
@click.option(
    "--log-level",
    default=None,
    help="Logging level; falls back to MARGINLAB_LOG_LEVEL, then WARNING.",
)
@handle_errors
def cli(log_level: typing.Optional[str]) -> None:
    """Primal-dual laboratory for the implicit bias of gradient descent."""
    configure_logging(resolve_log_level(log_level))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "output_dir", default=None, type=click.Path(file_okay=False))
@click.option("--seed", default=None, type=click.IntRange(min=0))
@handle_errors
def run(config_path: str, output_dir: typing.Optional[str], seed: typing.Optional[int]) -> None:
    """Run gradient descent and certify every applicable bound."""
    config = load_run_config(config_path).with_overrides(output_dir=output_dir, seed=seed)
    outcome = cmd_run(config)
    console.print(_summary(outcome.reports))
    sys.exit(outcome.exit_code)


@cli.command("verify-loss")
@click.argument("loss")
@click.option("--out", "output_dir", default=None, type=click.Path(file_okay=False))
@handle_errors
def verify_loss(loss: str, output_dir: typing.Optional[str]) -> None:
    """Grid-check the structural conditions of LOSS (exp, logistic, poly:K)."""
    report = cmd_verify_loss(parse_loss(loss), output_dir)
    for result in report.condition_results:
        mark = "[green]ok[/]" if result.passed else "[red]FAIL[/]"
        console.print(f"{mark} {result.condition_id}", highlight=False)
    sys.exit(EXIT_OK if report.passed else EXIT_CHECK_FAILED)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "output_dir", default=None, type=click.Path(file_okay=False))
@click.option("--workers", default=None, type=click.IntRange(min=1))
@click.option("--seed", default=None, type=click.IntRange(min=0))
@handle_errors
def sweep(
    config_path: str,
    output_dir: typing.Optional[str],
    workers: typing.Optional[int],
    seed: typing.Optional[int],
) -> None:
    """Repeat a run over the values of one axis and write sweep.csv."""
    sweep_config = load_sweep_config(config_path)
    template = sweep_config.template.with_overrides(output_dir=output_dir, seed=seed)
    sweep_config = sweep_config._replace(template=template)
    outcome = cmd_sweep(sweep_config, resolve_workers(workers, template.workers))
    console.print(f"{len(outcome.rows)} row(s) written to {outcome.path}", highlight=False)
    sys.exit(outcome.exit_code)


@cli.command("gen-data")
@click.option(
    "--kind",
    type=click.Choice([DatasetKind.GENERATED.value, DatasetKind.LOWER_BOUND.value]),
    default=DatasetKind.GENERATED.value,
)
@click.option("-n", "n", required=True, type=click.IntRange(min=1))
@click.option("-d", "d", default=2, type=click.IntRange(min=1))
@click.option("--margin", default=0.25, type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True))
@click.option("--schema", type=click.Choice([s.value for s in Schema]), default=Schema.FOLDED.value)
@click.option("--seed", default=0, type=click.IntRange(min=0))
@click.option("--out", "output_path", required=True, type=click.Path(dir_okay=False))
@handle_errors
def gen_data(
    kind: str, n: int, d: int, margin: float, schema: str, seed: int, output_path: str
) -> None:
    """Write a generated or lower-bound dataset as CSV."""
    dataset_kind = DatasetKind(kind)
    if dataset_kind is DatasetKind.LOWER_BOUND:
        spec = DatasetSpec(dataset_kind, n=n)
    else:
        spec = DatasetSpec(dataset_kind, n=n, d=d, margin=margin)
    path = cmd_gen_data(spec, output_path, seed, Schema(schema))
    console.print(f"dataset written to {path}", highlight=False)


@cli.command()
@click.argument("trajectory", type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False))
@handle_errors
def check(
    trajectory: str,
    dataset_path: str,
    output_dir: str,
    config_path: typing.Optional[str],
) -> None:
    """
    Re-certify TRAJECTORY, a trajectory file written with weight vectors.

    --config takes either a run configuration or a document holding only
    `tolerances`.
    """
    tolerances = load_tolerances(config_path) if config_path else Tolerances()
    outcome = cmd_check(pathlib.Path(trajectory), dataset_path, output_dir, tolerances)
    console.print(_summary(outcome.reports))
    sys.exit(outcome.exit_code)


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    """Console script entry point."""
    try:
        # without standalone mode click returns the code of `ctx.exit` instead of raising
        result = cli.main(args=list(argv) if argv is not None else None, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIGURATION
    except click.exceptions.Abort:
        return EXIT_CHECK_FAILED
    except SystemExit as exc:
        return int(exc.code or 0)
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
