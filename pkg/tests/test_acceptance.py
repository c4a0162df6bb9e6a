"""Full-size runs; deselect with `-m "not slow"`."""

import math

import numpy as np
import pytest

from marginlab._utils import dumps
from marginlab.bounds import (
    MarginVariant,
    check_margin_rate,
    check_min_norm_lb,
    check_warm_start,
    run_bench,
)
from marginlab.data import gen_separable, lower_bound_dataset
from marginlab.descent import (
    aggressive_risk,
    constant_eta,
    constant_hat_eta,
    logistic_two_phase,
    run_gd,
    write_trajectory_csv,
)
from marginlab.dual import MIRROR_TOL, certify_dual_main
from marginlab.losses import exponential, logistic
from marginlab.oracle import certify_margin
from marginlab.serializers import serialize

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2, 3, 4]


class TestLowerBound:
    """Test the orthogonal lower bound at n = 1024."""

    def test_residual_floor(self):
        """Test that `||v_t|| >= ln n - ln 2` once the risk drops below 2/n."""
        ds = lower_bound_dataset(1024)
        traj = run_gd(ds, exponential(), constant_hat_eta(1.0), T=20_000, record_every=100)
        report = check_min_norm_lb(traj, certify_margin(ds, exponential()), ds)
        assert report.applicable
        assert report.passed
        assert report.min_slack >= -1e-9
        assert all(check.rhs == pytest.approx(math.log(512)) for check in report.checks)


class TestExpRates:
    """Test the exponential-loss rates on seeded datasets."""

    @pytest.mark.parametrize("seed", SEEDS)
    def test_margin_rate(self, seed):
        """Test `gamma - raw margin / ||w_t|| <= (ln n + 1) / (gamma t)` under the risk-normalized step."""
        ds = gen_separable(20, 5, 0.25, seed=seed)
        cert = certify_margin(ds, exponential())
        traj = run_gd(ds, exponential(), aggressive_risk(1.0), T=10_000, record_every=10)
        report = check_margin_rate(traj, cert, exponential(), MarginVariant.EXP)
        assert report.applicable
        assert report.passed
        bound = math.log(ds.n) + 1.0
        for step in traj.steps[1:]:
            gap = cert.gamma - step.raw_margin / step.w_norm
            assert gap <= bound / (cert.gamma * step.t) * (1.0 + 1e-9) + 1e-12

    @pytest.mark.parametrize("seed", SEEDS)
    def test_dual_convergence(self, seed):
        """Test monotone dual objective and the `D(qbar, q_0)/t` rate under a constant effective step."""
        ds = gen_separable(20, 5, 0.25, seed=seed)
        cert = certify_margin(ds, exponential())
        traj = run_gd(ds, exponential(), constant_hat_eta(1.0), T=10_000)
        dual = certify_dual_main(traj, cert.qbar, exponential(), ds)
        assert dual.applicable
        assert dual.passed
        assert dual.f_worst_violation <= 1e-12
        assert dual.initial_divergence <= math.log(ds.n) + 1e-12
        assert dual.mirror_identity_max_err <= MIRROR_TOL
        assert len(dual.rate_bound) == 10_000


class TestLogisticWarmStart:
    """Test the two-phase logistic schedule."""

    def test_warm_start_and_rate(self):
        """Test the warm-start bounds and the margin rate after it."""
        ds = gen_separable(10, 3, 0.3, seed=0)
        cert = certify_margin(ds, exponential())
        traj = run_gd(ds, logistic(), logistic_two_phase(), T=3000)
        assert traj.warm_start_t is not None

        warm = check_warm_start(traj, cert, logistic())
        assert warm.applicable
        assert warm.passed
        radius = 256.0 * math.log(ds.n) / cert.gamma
        assert traj.warm_start_t <= radius**2

        rate = check_margin_rate(traj, cert, logistic(), MarginVariant.LOGISTIC_TWO_PHASE)
        assert rate.applicable
        assert rate.passed


class TestBiasRateSeparation:
    """Test the directional rate under the two primal schedules on a fixed n = 64 dataset."""

    SWEEP = (100, 1_000, 10_000, 100_000)

    @pytest.fixture(scope="class")
    def dataset(self):
        return gen_separable(64, 5, 0.25, seed=0)

    @pytest.fixture(scope="class")
    def u_bar(self, dataset):
        return certify_margin(dataset, exponential()).u_bar

    def _direction_errors(self, dataset, u_bar, policy):
        traj = run_gd(dataset, exponential(), policy, T=self.SWEEP[-1], record_every=100)
        by_t = {step.t: step for step in traj.steps}
        return np.array(
            [np.linalg.norm(by_t[t].w / by_t[t].w_norm - u_bar) for t in self.SWEEP]
        )

    def test_risk_normalized_slope(self, dataset, u_bar):
        """Test that the direction error decays like 1/t under the risk-normalized step."""
        errors = self._direction_errors(dataset, u_bar, aggressive_risk(1.0))
        assert np.all(np.diff(errors) < 0.0)
        # t = 100 is still pre-asymptotic on this dataset
        slope = np.polyfit(np.log(self.SWEEP[1:]), np.log(errors[1:]), 1)[0]
        assert -1.15 <= slope <= -0.85

    def test_constant_step_band(self, dataset, u_bar):
        """Test that the direction error times ln t stays within a factor 3 under a constant step."""
        errors = self._direction_errors(dataset, u_bar, constant_eta(1.0))
        products = errors * np.log(self.SWEEP)
        assert np.max(products) <= 3.0 * np.min(products)


class TestDeterminism:
    """Test byte-identical outputs."""

    def test_identical_runs(self, tmp_path):
        """Test that identical runs write identical trajectory and report bytes."""
        outputs = []
        for name in ("first", "second"):
            ds = gen_separable(20, 5, 0.25, seed=3)
            cert = certify_margin(ds, exponential())
            traj = run_gd(ds, exponential(), aggressive_risk(1.0), T=2000, record_every=10)
            path = write_trajectory_csv(traj, tmp_path / name / "trajectory.csv", u_bar=cert.u_bar)
            outputs.append((path.read_bytes(), dumps(serialize(run_bench(traj, cert, ds)))))
        assert outputs[0] == outputs[1]
