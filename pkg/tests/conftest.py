import typing

import numpy as np
import pytest

from marginlab.data import Dataset, gen_separable, lower_bound_dataset, make_dataset
from marginlab.descent import (
    Trajectory,
    aggressive_risk,
    constant_eta,
    constant_hat_eta,
    run_gd,
)
from marginlab.losses import LossFunction, exponential, logistic, polynomial
from marginlab.oracle import MarginCertificate, certify_margin


class SquareLoss:
    """Deliberately broken loss `z^2`, used as a negative control."""

    name = "square"
    smooth_ratio = 1.0

    def value(self, z: typing.Any) -> typing.Any:
        return np.asarray(z, dtype=np.float64) ** 2

    def first(self, z: typing.Any) -> typing.Any:
        return 2.0 * np.asarray(z, dtype=np.float64)

    def second(self, z: typing.Any) -> typing.Any:
        return np.full_like(np.asarray(z, dtype=np.float64), 2.0)

    def inverse(self, s: typing.Any) -> typing.Any:
        return np.sqrt(np.asarray(s, dtype=np.float64))


@pytest.fixture
def square_loss() -> SquareLoss:
    return SquareLoss()


@pytest.fixture(params=["exp", "logistic", "poly"])
def any_loss(request: pytest.FixtureRequest) -> LossFunction:
    return {
        "exp": exponential(),
        "logistic": logistic(),
        "poly": polynomial(2.0),
    }[request.param]


@pytest.fixture
def symmetric_dataset() -> Dataset:
    """Two examples mirrored across the max-margin direction `(1, 0)`; gamma = 0.5."""
    return make_dataset([[-0.5, 0.5], [-0.5, -0.5]])


@pytest.fixture
def square_dataset() -> Dataset:
    """Four examples; the max margin is attained by two of them with gamma' > 0."""
    return make_dataset(
        [
            [-0.6, 0.3],
            [-0.6, -0.3],
            [-0.9, 0.1],
            [-0.8, -0.2],
        ]
    )


@pytest.fixture(scope="session")
def generated_dataset() -> Dataset:
    return gen_separable(20, 5, 0.25, seed=0)


@pytest.fixture(scope="session")
def lower_bound_small() -> Dataset:
    return lower_bound_dataset(8)


@pytest.fixture(scope="session")
def exp_certificate(generated_dataset: Dataset) -> MarginCertificate:
    return certify_margin(generated_dataset, exponential())


@pytest.fixture(scope="session")
def exp_hat_trajectory(generated_dataset: Dataset) -> Trajectory:
    return run_gd(generated_dataset, exponential(), constant_hat_eta(1.0), T=400)


@pytest.fixture(scope="session")
def exp_constant_trajectory(generated_dataset: Dataset) -> Trajectory:
    return run_gd(generated_dataset, exponential(), constant_eta(1.0), T=400)


@pytest.fixture(scope="session")
def exp_aggressive_trajectory(generated_dataset: Dataset) -> Trajectory:
    return run_gd(generated_dataset, exponential(), aggressive_risk(1.0), T=400, record_every=10)


def _central_differences(
    func: typing.Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (func(x + step) - func(x - step)) / (2.0 * h)
    return grad


@pytest.fixture
def finite_difference() -> typing.Callable[..., np.ndarray]:
    """Central differences of a scalar function."""
    return _central_differences
