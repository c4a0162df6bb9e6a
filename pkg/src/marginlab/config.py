"""
Run and sweep configuration.

A run is described by one JSON document. Parsing is strict: unknown keys are
rejected and every failing field is reported in a single `ValidationError`.

```json
{
  "dataset": {"kind": "generated", "n": 20, "d": 5, "margin": 0.25},
  "loss": {"kind": "exp"},
  "policy": {"kind": "constant_hat_eta", "value": 1.0},
  "w0": "zero",
  "T": 1000,
  "record_every": 1,
  "tolerances": {"oracle": 1e-9, "support": null, "rel": 1e-9, "dual": 1e-3},
  "output_dir": "out",
  "seed": 0,
  "workers": 1
}
```

Dataset kinds are `generated` (`n`, `d`, `margin`), `lower_bound` (`n`) and
`file` (`path`, relative to the configuration file). A sweep document holds
a run document under `template` plus `axis` and `values`.
"""

import enum
import logging
import os
import pathlib
import typing

from marginlab._utils import loads
from marginlab.descent import (
    PolicyKind,
    StepSizePolicy,
    parse_policy,
)
from marginlab.exceptions import ConfigurationError, UsageError, ValidationError
from marginlab.losses import LossFunction, LossKind, loss_from_spec, parse_loss
from marginlab.types import DataDict, PathLike
from marginlab.validators import (
    finite,
    gt,
    gte,
    instance_of,
    member_of,
    path,
    pipe,
    range_,
)

__all__ = [
    "DatasetKind",
    "DatasetSpec",
    "LossSpec",
    "PolicySpec",
    "Tolerances",
    "RunConfig",
    "SweepAxis",
    "SweepConfig",
    "parse_run_config",
    "parse_sweep_config",
    "load_run_config",
    "load_sweep_config",
    "parse_tolerances_config",
    "load_tolerances",
    "resolve_workers",
    "resolve_log_level",
    "WORKERS_ENV",
    "LOG_LEVEL_ENV",
]

logger = logging.getLogger(__name__)

WORKERS_ENV = "MARGINLAB_WORKERS"
LOG_LEVEL_ENV = "MARGINLAB_LOG_LEVEL"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

_MISSING: typing.Any = object()

integer = instance_of(int)
number = pipe(instance_of((int, float)), finite, fail_fast=True)
positive_int = pipe(integer, gte(1), fail_fast=True)
positive_number = pipe(number, gt(0), fail_fast=True)


class DatasetKind(str, enum.Enum):
    GENERATED = "generated"
    LOWER_BOUND = "lower_bound"
    FILE = "file"


@typing.final
class DatasetSpec(typing.NamedTuple):
    kind: DatasetKind
    n: typing.Optional[int] = None
    d: typing.Optional[int] = None
    margin: typing.Optional[float] = None
    path: typing.Optional[pathlib.Path] = None


@typing.final
class LossSpec(typing.NamedTuple):
    kind: LossKind
    k: typing.Optional[float] = None

    def build(self) -> LossFunction:
        return loss_from_spec(self.kind, self.k)


@typing.final
class PolicySpec(typing.NamedTuple):
    kind: PolicyKind
    value: typing.Optional[float] = None

    def build(self) -> StepSizePolicy:
        return StepSizePolicy(self.kind, self.value)


@typing.final
class Tolerances(typing.NamedTuple):
    oracle: float = 1e-9
    """Frank-Wolfe accuracy of the maximum margin."""
    support: typing.Optional[float] = None
    """Support-set tolerance, `1e-6 gamma` when unset."""
    rel: float = 1e-9
    """Relative slack tolerance of every bound check."""
    dual: float = 1e-3
    """Accuracy of the dual comparator for losses other than the exponential."""


@typing.final
class RunConfig(typing.NamedTuple):
    """A validated run configuration."""

    dataset: DatasetSpec
    loss: LossSpec
    policy: PolicySpec
    w0: typing.Optional[typing.Tuple[float, ...]]
    """Initial weights; `None` stands for the zero vector."""
    T: int
    record_every: int = 1
    tolerances: Tolerances = Tolerances()
    output_dir: pathlib.Path = pathlib.Path("out")
    seed: int = 0
    workers: typing.Optional[int] = None
    dump_w: bool = True
    """Write full weight vectors into the trajectory file."""

    def with_overrides(
        self,
        *,
        output_dir: typing.Optional[PathLike] = None,
        seed: typing.Optional[int] = None,
        workers: typing.Optional[int] = None,
    ) -> "RunConfig":
        """Apply command line overrides."""
        updates: DataDict = {}
        if output_dir is not None:
            updates["output_dir"] = pathlib.Path(output_dir)
        if seed is not None:
            updates["seed"] = seed
        if workers is not None:
            updates["workers"] = workers
        return self._replace(**updates)


class SweepAxis(str, enum.Enum):
    N = "n"
    T = "T"
    POLICY = "policy"
    LOSS = "loss"


@typing.final
class SweepConfig(typing.NamedTuple):
    template: RunConfig
    axis: SweepAxis
    values: typing.Tuple[typing.Any, ...]

    def expand(self) -> typing.List[RunConfig]:
        """
        One run configuration per axis value, each writing into
        `<output_dir>/<axis>=<value>`.

        :raises ConfigurationError: If a value does not fit the template.
        """
        runs = []
        for value in self.values:
            updates: DataDict = {}
            if self.axis is SweepAxis.N:
                if self.template.dataset.kind is DatasetKind.FILE:
                    raise UsageError("Cannot sweep n over a dataset loaded from a file")
                updates["dataset"] = self.template.dataset._replace(n=value)
            elif self.axis is SweepAxis.T:
                updates["T"] = value
            elif self.axis is SweepAxis.POLICY:
                policy = parse_policy(value)
                updates["policy"] = PolicySpec(policy.kind, policy.value)
            else:
                loss = parse_loss(value)
                updates["loss"] = LossSpec(loss.kind, loss.k)
            label = f"{self.axis.value}={value}".replace(":", "_")
            updates["output_dir"] = self.template.output_dir / label
            runs.append(self.template._replace(**updates))
        return runs


def _take(
    errors: ValidationError,
    data: typing.Mapping[str, typing.Any],
    key: str,
    validator: typing.Optional[typing.Callable[..., None]] = None,
    *,
    default: typing.Any = _MISSING,
    location: typing.Sequence[typing.Any] = (),
) -> typing.Any:
    if key not in data or data[key] is None and default is not _MISSING:
        if default is _MISSING:
            errors.add_detail(
                f"Missing required key {key!r}",
                location=[*location, key],
                code="missing_key",
            )
        return None if default is _MISSING else default
    value = data[key]
    if validator is not None:
        try:
            validator(value, key)
        except ValidationError as exc:
            errors.merge(exc, location=list(location))
            return None
    return value


def _reject_unknown(
    errors: ValidationError,
    data: typing.Mapping[str, typing.Any],
    allowed: typing.Iterable[str],
    location: typing.Sequence[typing.Any] = (),
) -> None:
    known = set(allowed)
    for key in sorted(set(data) - known):
        errors.add_detail(
            f"Unknown key {key!r}; expected one of {', '.join(sorted(known))}",
            location=[*location, key],
            code="unknown_key",
        )


def _mapping(
    errors: ValidationError, data: typing.Mapping[str, typing.Any], key: str
) -> typing.Optional[typing.Mapping[str, typing.Any]]:
    value = _take(errors, data, key)
    if value is None:
        return None
    if not isinstance(value, typing.Mapping):
        errors.add_detail(
            f"Expected an object, got {type(value).__name__}",
            location=[key],
            code="invalid_type",
        )
        return None
    return value


def _parse_dataset(
    errors: ValidationError,
    data: typing.Mapping[str, typing.Any],
    base_dir: pathlib.Path,
) -> typing.Optional[DatasetSpec]:
    loc = ["dataset"]
    kind = _take(errors, data, "kind", member_of(k.value for k in DatasetKind), location=loc)
    if kind is None:
        return None
    kind = DatasetKind(kind)
    if kind is DatasetKind.GENERATED:
        _reject_unknown(errors, data, ("kind", "n", "d", "margin"), loc)
        return DatasetSpec(
            kind,
            n=_take(errors, data, "n", positive_int, location=loc),
            d=_take(errors, data, "d", positive_int, location=loc),
            margin=_take(
                errors,
                data,
                "margin",
                pipe(number, range_(0.0, 1.0, inclusive=False), fail_fast=True),
                location=loc,
            ),
        )
    if kind is DatasetKind.LOWER_BOUND:
        _reject_unknown(errors, data, ("kind", "n"), loc)
        return DatasetSpec(
            kind, n=_take(errors, data, "n", pipe(integer, gte(2), fail_fast=True), location=loc)
        )

    _reject_unknown(errors, data, ("kind", "path"), loc)
    raw = _take(errors, data, "path", instance_of(str), location=loc)
    if raw is None:
        return None
    resolved = base_dir / raw
    try:
        path(is_file=True)(resolved, "path")
    except ValidationError as exc:
        errors.merge(exc, location=loc)
        return None
    return DatasetSpec(kind, path=resolved)


def _parse_loss(
    errors: ValidationError, data: typing.Mapping[str, typing.Any]
) -> typing.Optional[LossSpec]:
    loc = ["loss"]
    _reject_unknown(errors, data, ("kind", "k"), loc)
    kind = _take(errors, data, "kind", member_of(k.value for k in LossKind), location=loc)
    if kind is None:
        return None
    kind = LossKind(kind)
    if kind is LossKind.POLY:
        k = _take(errors, data, "k", positive_number, location=loc)
        return None if k is None else LossSpec(kind, float(k))
    if "k" in data:
        errors.add_detail(
            f"The {kind.value} loss takes no exponent",
            location=[*loc, "k"],
            code="unexpected_key",
        )
    return LossSpec(kind)


def _parse_policy(
    errors: ValidationError, data: typing.Mapping[str, typing.Any]
) -> typing.Optional[PolicySpec]:
    loc = ["policy"]
    _reject_unknown(errors, data, ("kind", "value"), loc)
    kind = _take(errors, data, "kind", member_of(k.value for k in PolicyKind), location=loc)
    if kind is None:
        return None
    kind = PolicyKind(kind)
    if kind is PolicyKind.LOGISTIC_TWO_PHASE:
        return PolicySpec(kind)
    default = 1.0 if kind is PolicyKind.AGGRESSIVE_RISK else _MISSING
    value = _take(errors, data, "value", positive_number, default=default, location=loc)
    return None if value is None else PolicySpec(kind, float(value))


def _parse_w0(
    errors: ValidationError, raw: typing.Any
) -> typing.Optional[typing.Tuple[float, ...]]:
    if raw == "zero":
        return None
    if isinstance(raw, list) and raw:
        with_errors = False
        for index, item in enumerate(raw):
            try:
                number(item, index)
            except ValidationError as exc:
                errors.merge(exc, location=["w0"])
                with_errors = True
        if not with_errors:
            return tuple(float(item) for item in raw)
        return None
    errors.add_detail(
        f"Expected \"zero\" or a non-empty list of numbers, got {raw!r}",
        location=["w0"],
        code="invalid_value",
    )
    return None


def _parse_tolerances(
    errors: ValidationError, data: typing.Mapping[str, typing.Any]
) -> Tolerances:
    loc = ["tolerances"]
    defaults = Tolerances()
    _reject_unknown(errors, data, Tolerances._fields, loc)
    support = data.get("support")
    if support is not None:
        support = _take(errors, data, "support", positive_number, location=loc)
    return Tolerances(
        oracle=_take(errors, data, "oracle", positive_number, default=defaults.oracle, location=loc),
        support=support,
        rel=_take(errors, data, "rel", positive_number, default=defaults.rel, location=loc),
        dual=_take(errors, data, "dual", positive_number, default=defaults.dual, location=loc),
    )


def _check_step_size(
    errors: ValidationError,
    dataset: typing.Optional[DatasetSpec],
    loss: typing.Optional[LossSpec],
    policy: typing.Optional[PolicySpec],
) -> None:
    # datasets read from files are checked when loaded
    if dataset is None or loss is None or policy is None or dataset.n is None:
        return
    try:
        policy.build().validate(loss.build(), dataset.n)
    except ConfigurationError as exc:
        errors.add_detail(str(exc), location=["policy"], code="invalid_step_size", origin=exc)


RUN_KEYS = (
    "dataset",
    "loss",
    "policy",
    "w0",
    "T",
    "record_every",
    "tolerances",
    "output_dir",
    "seed",
    "workers",
    "dump_w",
)


def parse_run_config(
    data: typing.Any,
    base_dir: typing.Optional[PathLike] = None,
) -> RunConfig:
    """
    Parse and validate a run configuration document.

    :param data: Decoded JSON document
    :param base_dir: Directory that relative dataset paths are resolved
        against, the working directory by default
    :raises ValidationError: Listing every invalid, missing or unknown key.
    """
    base = pathlib.Path(base_dir) if base_dir is not None else pathlib.Path.cwd()
    if not isinstance(data, typing.Mapping):
        raise ValidationError(
            f"A run configuration must be a JSON object, got {type(data).__name__}",
            code="invalid_type",
        )

    with ValidationError.collect(
        message="Invalid run configuration", parent_name="RunConfig"
    ) as errors:
        _reject_unknown(errors, data, RUN_KEYS)
        dataset_data = _mapping(errors, data, "dataset")
        loss_data = _mapping(errors, data, "loss")
        policy_data = _mapping(errors, data, "policy")
        dataset = _parse_dataset(errors, dataset_data, base) if dataset_data is not None else None
        loss = _parse_loss(errors, loss_data) if loss_data is not None else None
        policy = _parse_policy(errors, policy_data) if policy_data is not None else None
        _check_step_size(errors, dataset, loss, policy)

        w0 = _parse_w0(errors, data.get("w0", "zero"))
        if w0 is not None and dataset is not None and dataset.d is not None:
            if len(w0) != dataset.d:
                errors.add_detail(
                    f"w0 has {len(w0)} entries but the dataset has d={dataset.d}",
                    location=["w0"],
                    code="dimension_mismatch",
                )
        if dataset is not None and dataset.kind is DatasetKind.LOWER_BOUND and w0 is not None:
            if len(w0) != 2:
                errors.add_detail(
                    "The lower-bound dataset is two-dimensional",
                    location=["w0"],
                    code="dimension_mismatch",
                )

        tolerances_data = data.get("tolerances") or {}
        if not isinstance(tolerances_data, typing.Mapping):
            errors.add_detail("Expected an object", location=["tolerances"], code="invalid_type")
            tolerances_data = {}

        config = RunConfig(
            dataset=typing.cast(DatasetSpec, dataset),
            loss=typing.cast(LossSpec, loss),
            policy=typing.cast(PolicySpec, policy),
            w0=w0,
            T=_take(errors, data, "T", positive_int),
            record_every=_take(errors, data, "record_every", positive_int, default=1),
            tolerances=_parse_tolerances(errors, tolerances_data),
            output_dir=pathlib.Path(
                _take(errors, data, "output_dir", instance_of(str), default="out") or "out"
            ),
            seed=_take(errors, data, "seed", pipe(integer, gte(0), fail_fast=True), default=0),
            workers=_take(errors, data, "workers", positive_int, default=None),
            dump_w=_take(errors, data, "dump_w", instance_of(bool), default=True),
        )
    return config


def parse_tolerances_config(
    data: typing.Any, base_dir: typing.Optional[PathLike] = None
) -> Tolerances:
    """
    Tolerances from a `{"tolerances": {...}}` document or a full run configuration.

    :raises ValidationError: Listing every invalid or unknown key.
    """
    if isinstance(data, typing.Mapping) and set(data) <= {"tolerances"}:
        with ValidationError.collect(
            message="Invalid tolerances", parent_name="Tolerances"
        ) as errors:
            tolerances_data = data.get("tolerances") or {}
            if not isinstance(tolerances_data, typing.Mapping):
                errors.add_detail("Expected an object", location=["tolerances"], code="invalid_type")
                tolerances_data = {}
            tolerances = _parse_tolerances(errors, tolerances_data)
        return tolerances
    return parse_run_config(data, base_dir=base_dir).tolerances


def parse_sweep_config(
    data: typing.Any,
    base_dir: typing.Optional[PathLike] = None,
) -> SweepConfig:
    """
    Parse a sweep document `{"template": {...}, "axis": ..., "values": [...]}`.

    :raises UsageError: If `values` is empty.
    :raises ValidationError: For an invalid template, axis or value.
    """
    if not isinstance(data, typing.Mapping):
        raise ValidationError(
            f"A sweep configuration must be a JSON object, got {type(data).__name__}",
            code="invalid_type",
        )
    values = data.get("values")
    if isinstance(values, list) and not values:
        raise UsageError("The sweep axis has no values")

    with ValidationError.collect(
        message="Invalid sweep configuration", parent_name="SweepConfig"
    ) as errors:
        _reject_unknown(errors, data, ("template", "axis", "values"))
        axis = _take(errors, data, "axis", member_of(a.value for a in SweepAxis))
        values = _take(errors, data, "values", instance_of(list))
        template = None
        template_data = _take(errors, data, "template")
        if template_data is not None:
            try:
                template = parse_run_config(template_data, base_dir)
            except ValidationError as exc:
                errors.merge(exc, location=["template"])
        if axis is not None and values:
            axis = SweepAxis(axis)
            item_validator = {
                SweepAxis.N: pipe(integer, gte(2), fail_fast=True),
                SweepAxis.T: positive_int,
                SweepAxis.POLICY: instance_of(str),
                SweepAxis.LOSS: instance_of(str),
            }[axis]
            for index, value in enumerate(values):
                try:
                    item_validator(value, "values")
                    if axis is SweepAxis.POLICY:
                        parse_policy(value)
                    elif axis is SweepAxis.LOSS:
                        parse_loss(value)
                except (ValidationError, ConfigurationError) as exc:
                    errors.add(exc, location=["values", index])
        sweep = SweepConfig(
            template=typing.cast(RunConfig, template),
            axis=typing.cast(SweepAxis, axis),
            values=tuple(values or ()),
        )
    return sweep


def _read_json(path: PathLike) -> typing.Any:
    source = pathlib.Path(path)
    try:
        return loads(source.read_bytes())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"Configuration file not found: {str(source)!r}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"Configuration file {str(source)!r} is not valid JSON: {exc}") from exc


def load_run_config(path: PathLike) -> RunConfig:
    """Read and parse a run configuration file."""
    source = pathlib.Path(path)
    config = parse_run_config(_read_json(source), base_dir=source.parent)
    logger.debug("Loaded run configuration from %s", source)
    return config


def load_sweep_config(path: PathLike) -> SweepConfig:
    """Read and parse a sweep configuration file."""
    source = pathlib.Path(path)
    return parse_sweep_config(_read_json(source), base_dir=source.parent)


def load_tolerances(path: PathLike) -> Tolerances:
    """Read the tolerances of a tolerances-only document or a run configuration file."""
    source = pathlib.Path(path)
    return parse_tolerances_config(_read_json(source), base_dir=source.parent)


def resolve_workers(
    flag: typing.Optional[int] = None,
    configured: typing.Optional[int] = None,
) -> int:
    """
    Worker count from the command line flag, then `MARGINLAB_WORKERS`, then
    the configuration, then 1.

    :raises ConfigurationError: If the environment value is not a positive integer.
    """
    if flag is not None:
        return flag
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            workers = int(raw)
        except ValueError:
            workers = 0
        if workers < 1:
            raise ConfigurationError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
        return workers
    return configured or 1


def resolve_log_level(flag: typing.Optional[str] = None) -> str:
    """
    Log level from the command line flag, then `MARGINLAB_LOG_LEVEL`, then
    `WARNING`.

    :raises ConfigurationError: For an unknown level name.
    """
    level = (flag or os.environ.get(LOG_LEVEL_ENV) or "WARNING").upper()
    if level not in LOG_LEVELS:
        raise ConfigurationError(
            f"Unknown log level {level!r}; expected one of {', '.join(LOG_LEVELS)}"
        )
    return level
