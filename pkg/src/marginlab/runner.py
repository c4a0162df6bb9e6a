"""
Experiment orchestration behind the command line.

Every command writes only below its output directory, and identical inputs
produce byte-identical files.
"""

import concurrent.futures
import logging
import math
import pathlib
import typing

import numpy as np

from marginlab._utils import atomic_write, dumps, format_float
from marginlab.bounds import BoundReport, run_bench, write_plot_data
from marginlab.config import (
    DatasetKind,
    DatasetSpec,
    RunConfig,
    SweepAxis,
    SweepConfig,
    Tolerances,
)
from marginlab.data import (
    Dataset,
    Schema,
    gen_separable,
    load_dataset,
    lower_bound_dataset,
    save_dataset,
)
from marginlab.descent import (
    PolicyKind,
    Trajectory,
    read_trajectory_csv,
    run_gd,
    write_trajectory_csv,
)
from marginlab.exceptions import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    MarginLabException,
    exit_code_for,
)
from marginlab.losses import (
    AssumptionReport,
    ConditionResult,
    Loss,
    LossFunction,
    LossKind,
    verify_assumption2,
)
from marginlab.oracle import MarginCertificate, PerspectiveGap, certify_margin, perspective_gap
from marginlab.serializers import Option, serialize
from marginlab.smoothed import DualPoint
from marginlab.types import PathLike

__all__ = [
    "RunOutcome",
    "CheckOutcome",
    "SweepOutcome",
    "build_dataset",
    "cmd_run",
    "cmd_verify_loss",
    "cmd_sweep",
    "cmd_gen_data",
    "cmd_check",
    "SWEEP_COLUMNS",
]

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("axis", "value", "t", "margin_gap", "bias_gap", "bound_rhs", "error")


@typing.final
class RunOutcome(typing.NamedTuple):
    output_dir: pathlib.Path
    certificate: MarginCertificate
    trajectory: Trajectory
    reports: typing.List[BoundReport]
    files: typing.List[pathlib.Path]

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports if report.applicable)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_CHECK_FAILED


@typing.final
class CheckOutcome(typing.NamedTuple):
    reports: typing.List[BoundReport]
    files: typing.List[pathlib.Path]

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports if report.applicable)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_CHECK_FAILED


@typing.final
class SweepOutcome(typing.NamedTuple):
    path: pathlib.Path
    rows: typing.List[typing.Tuple[str, ...]]
    failed_runs: int
    """Runs that raised or had a failing applicable report."""

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.failed_runs == 0 else EXIT_CHECK_FAILED


def build_dataset(spec: DatasetSpec, seed: int = 0) -> Dataset:
    """Generate, construct or load the dataset described by `spec`."""
    if spec.kind is DatasetKind.GENERATED:
        return gen_separable(
            typing.cast(int, spec.n),
            typing.cast(int, spec.d),
            typing.cast(float, spec.margin),
            seed,
        )
    if spec.kind is DatasetKind.LOWER_BOUND:
        return lower_bound_dataset(typing.cast(int, spec.n))
    return load_dataset(typing.cast(pathlib.Path, spec.path))


def _certify(ds: Dataset, loss: LossFunction, tolerances: Tolerances) -> MarginCertificate:
    return certify_margin(
        ds,
        loss,
        tol=tolerances.oracle,
        support_tol=tolerances.support,
        dual_tol=tolerances.dual,
    )


def _write_reports(reports: typing.List[BoundReport], out: pathlib.Path) -> typing.List[pathlib.Path]:
    files = [atomic_write(out / "reports.json", dumps(serialize(reports)))]
    files.extend(write_plot_data(reports, out / "plotdata"))
    return files


def _certificate_document(cert: MarginCertificate, gap: PerspectiveGap) -> typing.Any:
    return {
        "certificate": serialize(cert, Option(DualPoint, include={"q"})),
        "perspective": serialize(gap),
    }


def cmd_run(config: RunConfig) -> RunOutcome:
    """
    Run one experiment and write its artifacts.

    Writes `dataset.csv` (unless the dataset came from a file),
    `trajectory.csv`, `certificate.json`, `reports.json` and
    `plotdata/*.csv` under `config.output_dir`.

    :raises MarginLabException: On any failure of the underlying modules.
    """
    out = pathlib.Path(config.output_dir)
    ds = build_dataset(config.dataset, config.seed)
    loss = config.loss.build()
    policy = config.policy.build()
    logger.info(
        "Run: dataset=%s n=%d d=%d loss=%s policy=%s T=%d",
        config.dataset.kind.value,
        ds.n,
        ds.d,
        loss.name,
        policy.token,
        config.T,
    )

    files: typing.List[pathlib.Path] = []
    if config.dataset.kind is not DatasetKind.FILE:
        files.append(save_dataset(ds, out / "dataset.csv"))

    cert = _certify(ds, loss, config.tolerances)
    w0 = None if config.w0 is None else np.asarray(config.w0, dtype=np.float64)
    traj = run_gd(ds, loss, policy, w0=w0, T=config.T, record_every=config.record_every)
    reports = run_bench(traj, cert, ds, rel_tol=config.tolerances.rel)
    gap = perspective_gap(ds, loss, cert.gamma, cert.u_bar, seed=config.seed)

    files.append(
        write_trajectory_csv(traj, out / "trajectory.csv", u_bar=cert.u_bar, dump_w=config.dump_w)
    )
    files.append(atomic_write(out / "certificate.json", dumps(_certificate_document(cert, gap))))
    files.extend(_write_reports(reports, out))

    outcome = RunOutcome(out, cert, traj, reports, files)
    logger.info("Run finished in %s: %s", out, "passed" if outcome.passed else "FAILED")
    return outcome


def cmd_verify_loss(
    loss: Loss,
    output_dir: typing.Optional[PathLike] = None,
) -> AssumptionReport:
    """
    Grid-check the structural loss conditions and optionally write
    `assumption.json` below `output_dir`.

    Any object satisfying the `Loss` protocol is accepted.
    """
    report = verify_assumption2(loss)
    if output_dir is not None:
        document = serialize(report, Option(ConditionResult, exclude={"grid"}))
        atomic_write(pathlib.Path(output_dir) / "assumption.json", dumps(document))
    if report.passed:
        logger.info("Loss %s satisfies every grid-checked condition", loss.name)
    else:
        logger.warning(
            "Loss %s fails: %s", loss.name, ", ".join(report.failed_conditions())
        )
    return report


def cmd_gen_data(
    spec: DatasetSpec,
    path: PathLike,
    seed: int = 0,
    schema: Schema = Schema.FOLDED,
) -> pathlib.Path:
    """Build a generated or lower-bound dataset and write it as CSV."""
    ds = build_dataset(spec, seed)
    written = save_dataset(ds, path, schema)
    logger.info("Wrote %d x %d dataset to %s", ds.n, ds.d, written)
    return written


def cmd_check(
    trajectory_path: PathLike,
    dataset_path: PathLike,
    output_dir: PathLike,
    tolerances: Tolerances = Tolerances(),
) -> CheckOutcome:
    """
    Re-certify a trajectory file written with full weight vectors.

    The margin certificate is recomputed from the dataset and the bound
    bench is run again; `reports.json` and `plotdata/*.csv` go to
    `output_dir`.
    """
    ds = load_dataset(dataset_path)
    traj = read_trajectory_csv(trajectory_path, ds)
    cert = _certify(ds, traj.loss, tolerances)
    reports = run_bench(traj, cert, ds, rel_tol=tolerances.rel)
    files = _write_reports(reports, pathlib.Path(output_dir))
    return CheckOutcome(reports, files)


def _bound_rhs(traj: Trajectory, gamma: float, t: int, hat_sum: float) -> float:
    """Margin gap guaranteed at iteration t, `inf` while vacuous, `nan` if none applies."""
    log_n = math.log(traj.n)
    if traj.loss.kind is LossKind.EXP:
        return (log_n + 1.0) / (gamma * hat_sum) if hat_sum > 0.0 else math.inf
    if traj.policy.kind is PolicyKind.LOGISTIC_TWO_PHASE:
        denominator = gamma * t - (256.0 * log_n) ** 2 / gamma
        return (1.0 + 512.0 * log_n) / denominator if denominator > 0.0 else math.inf
    return math.nan


def _sweep_rows(
    label: str, value: str, outcome: RunOutcome
) -> typing.List[typing.Tuple[str, ...]]:
    cert = outcome.certificate
    rows = []
    for step in outcome.trajectory.steps:
        if step.w_norm == 0.0:
            continue
        margin_gap = cert.gamma - step.raw_margin / step.w_norm
        bias_gap = float(np.linalg.norm(step.w / step.w_norm - cert.u_bar))
        rhs = _bound_rhs(outcome.trajectory, cert.gamma, step.t, step.hat_sum)
        rows.append(
            (
                label,
                value,
                str(step.t),
                format_float(margin_gap),
                format_float(bias_gap),
                format_float(rhs),
                "",
            )
        )
    return rows


def _sweep_value(config: RunConfig, sweep: SweepConfig) -> str:
    if sweep.axis is SweepAxis.N:
        return str(config.dataset.n)
    if sweep.axis is SweepAxis.T:
        return str(config.T)
    if sweep.axis is SweepAxis.POLICY:
        return config.policy.build().token
    return config.loss.build().token


def _sweep_worker(
    args: typing.Tuple[RunConfig, str, str],
) -> typing.Tuple[typing.List[typing.Tuple[str, ...]], bool]:
    config, label, value = args
    try:
        outcome = cmd_run(config)
    except MarginLabException as exc:
        message = f"{type(exc).__module__}.{type(exc).__name__}: {exc}".replace("\n", " ")
        logger.warning("Sweep run %s=%s failed (exit %d): %s", label, value, exit_code_for(exc), message)
        return [(label, value, "", "", "", "", message)], False
    return _sweep_rows(label, value, outcome), outcome.passed


def cmd_sweep(sweep: SweepConfig, workers: int = 1) -> SweepOutcome:
    """
    Run the template once per axis value and write `sweep.csv`.

    Runs execute concurrently in up to `workers` processes. Rows follow the
    order of the axis values whatever the completion order; a failing run
    contributes a single row carrying its error and the sweep continues.
    """
    runs = sweep.expand()
    label = sweep.axis.value
    jobs = [(config, label, _sweep_value(config, sweep)) for config in runs]
    logger.info("Sweep over %s: %d run(s) on %d worker(s)", label, len(jobs), workers)

    if workers <= 1 or len(jobs) <= 1:
        results = [_sweep_worker(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))

    rows: typing.List[typing.Tuple[str, ...]] = []
    failed = 0
    for index, (run_rows, passed) in enumerate(results, start=1):
        rows.extend(run_rows)
        failed += not passed
        logger.info("Sweep run %d/%d collected (%s)", index, len(results), "ok" if passed else "failed")

    lines = [",".join(SWEEP_COLUMNS)]
    lines.extend(",".join(_csv_field(field) for field in row) for row in rows)
    path = atomic_write(sweep.template.output_dir / "sweep.csv", "\n".join(lines) + "\n")
    return SweepOutcome(path, rows, failed)


def _csv_field(value: str) -> str:
    if any(char in value for char in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value
