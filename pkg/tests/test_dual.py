import math

import numpy as np
import pytest

from marginlab.data import gen_separable
from marginlab.descent import inverse_sqrt_hat, logistic_two_phase, run_gd
from marginlab.dual import (
    MIRROR_TOL,
    certify_dual_main,
    certify_mirror_step,
    certify_standard_smooth,
    dual_objective,
    mirror_tolerance,
)
from marginlab.exceptions import DomainError, UsageError
from marginlab.losses import exponential, logistic
from marginlab.smoothed import simplex_point


class TestDualObjective:
    """Test the dual objective."""

    def test_value(self, symmetric_dataset):
        """Test `||Z^T q||^2 / 2` on the mirrored dataset."""
        assert dual_objective(symmetric_dataset, [0.5, 0.5]) == pytest.approx(0.125)
        assert dual_objective(symmetric_dataset, [1.0, 0.0]) == pytest.approx(0.25)

    def test_shape(self, symmetric_dataset):
        """Test that the dual vector needs one entry per example."""
        with pytest.raises(DomainError):
            dual_objective(symmetric_dataset, [1.0, 0.0, 0.0])


class TestMirrorStep:
    """Test the mirror-descent form of a gradient step."""

    def test_identity_holds(self, generated_dataset, exp_hat_trajectory):
        """Test that consecutive iterates satisfy the mirror-descent identity."""
        for a, b in zip(exp_hat_trajectory.steps[:20], exp_hat_trajectory.steps[1:21]):
            error = certify_mirror_step(generated_dataset, exponential(), a, b)
            assert error <= mirror_tolerance(a)

    def test_needs_consecutive_steps(self, generated_dataset, exp_aggressive_trajectory):
        """Test that thinned records cannot be checked step by step."""
        first, second = exp_aggressive_trajectory.steps[:2]
        with pytest.raises(UsageError):
            certify_mirror_step(generated_dataset, exponential(), first, second)


class TestCertifyDualMain:
    """Test the dual convergence certificate."""

    def test_constant_effective_step(self, generated_dataset, exp_hat_trajectory, exp_certificate):
        """Test the certificate on a fully recorded run."""
        cert = certify_dual_main(exp_hat_trajectory, exp_certificate.qbar, exponential(), generated_dataset)
        assert cert.applicable
        assert cert.passed
        assert cert.start_t == 0
        assert cert.beta == 1.0
        assert cert.mirror_pairs == 400
        assert cert.mirror_identity_max_err <= MIRROR_TOL
        assert cert.f_monotone
        assert 0.0 <= cert.initial_divergence <= math.log(generated_dataset.n) + 1e-12
        assert cert.f_qbar == pytest.approx(exp_certificate.f_qbar)
        assert len(cert.rate_bound) == 400

    def test_rate_tightens(self, generated_dataset, exp_hat_trajectory, exp_certificate):
        """Test that the suboptimality bound shrinks as effective steps accumulate."""
        cert = certify_dual_main(exp_hat_trajectory, exp_certificate.qbar, exponential(), generated_dataset)
        rhs = [record.rhs for record in cert.rate_bound]
        assert all(b < a for a, b in zip(rhs, rhs[1:]))
        assert cert.rate_bound[-1].lhs >= -1e-12

    def test_constant_step(self, generated_dataset, exp_constant_trajectory, exp_certificate):
        """Test the certificate when the effective step decays with the risk."""
        cert = certify_dual_main(exp_constant_trajectory, exp_certificate.qbar, exponential(), generated_dataset)
        assert cert.applicable
        assert cert.passed

    def test_thinned_records(self, generated_dataset, exp_aggressive_trajectory, exp_certificate):
        """Test that summed inequalities still certify a thinned trajectory."""
        cert = certify_dual_main(exp_aggressive_trajectory, exp_certificate.qbar, exponential(), generated_dataset)
        assert cert.applicable
        assert cert.passed
        assert cert.mirror_pairs == 0
        assert cert.md_step_slack == []
        assert len(cert.telescoping_slack) == 40

    def test_step_too_large(self, generated_dataset, exp_certificate):
        """Test that effective steps above 1/beta make the certificate inapplicable."""
        traj = run_gd(generated_dataset, logistic(), inverse_sqrt_hat(1.0), T=20)
        cert = certify_dual_main(traj, exp_certificate.qbar, logistic(), generated_dataset)
        assert not cert.applicable
        assert cert.beta == generated_dataset.n

    def test_two_phase_range(self):
        """Test that the two-phase schedule is certified from the warm start on."""
        ds = gen_separable(10, 3, 0.5, seed=1)
        traj = run_gd(ds, logistic(), logistic_two_phase(), T=600)
        comparator = simplex_point(np.full(ds.n, 1.0 / ds.n))
        cert = certify_dual_main(traj, comparator, logistic(), ds)
        assert cert.start_t == traj.warm_start_t
        assert cert.beta == 2.0
        assert cert.applicable

    def test_warm_start_not_reached(self):
        """Test the empty certificate of a run that never left the first phase."""
        ds = gen_separable(10, 3, 0.5, seed=1)
        traj = run_gd(ds, logistic(), logistic_two_phase(), T=2)
        comparator = simplex_point(np.full(ds.n, 1.0 / ds.n))
        cert = certify_dual_main(traj, comparator, logistic(), ds)
        assert not cert.applicable
        assert cert.start_t is None
        assert math.isnan(cert.initial_divergence)


class TestCertifyStandardSmooth:
    """Test the standard smoothness certificate."""

    def test_exp(self, generated_dataset, exp_hat_trajectory):
        """Test the descent and Bregman bounds with the exponential loss."""
        cert = certify_standard_smooth(exp_hat_trajectory, exponential(), generated_dataset)
        assert cert.applicable
        assert cert.passed
        assert len(cert.psi_slack) == 400
        assert len(cert.bregman_slack) == 400
