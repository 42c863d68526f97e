import numpy as np

from mier.autodiff import Tensor, reduce_sum
from mier.gradcheck import (
    check_gradients,
    distribution_gradcheck,
    finite_difference_gradient,
    max_relative_error,
    objective_gradcheck,
    run_gradcheck,
)


def test_finite_difference_on_quadratic():
    p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    coeff = np.array([2.0, 3.0, -1.0])

    def f():
        return float((coeff * p.data**2).sum())

    numeric = finite_difference_gradient(f, p)
    np.testing.assert_allclose(numeric, 2 * coeff * p.data, rtol=1e-6)


def test_check_gradients_reports_per_parameter():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)

    def loss_fn():
        return reduce_sum(a * a) + reduce_sum(b * b * b)

    report = check_gradients(loss_fn, {"a": a, "b": b})
    assert set(report) == {"a", "b"}
    assert max(report.values()) < 1e-6


def test_max_relative_error_floors_near_zero():
    # FD noise on true-zero gradients must not register as failure.
    assert max_relative_error(np.zeros(3), np.full(3, 1e-10)) < 1e-4


def test_objective_suite_passes_default_tolerance():
    suite = objective_gradcheck(seed=0)
    assert suite.passes(1e-4)
    assert suite.coordinates > 300


def test_distribution_suite_passes_default_tolerance():
    suite = distribution_gradcheck(seed=1)
    assert suite.passes(1e-4)


def test_run_gradcheck_bundles_suites():
    suites = run_gradcheck(seed=3)
    assert len(suites) == 2
    assert all(s.passes(1e-4) for s in suites)
