"""Tests for the finite-difference checks."""

import numpy as np

from htgnn_ltv.core import tensor as T
from htgnn_ltv.core.gradcheck import check_function, check_primitives, relative_error
from htgnn_ltv.core.tensor import Tensor


def _broken_square(x: Tensor) -> Tensor:
    # adjoint is missing the factor 2
    return T.primitive("broken_square", x.data**2, (x,), lambda g: (g * x.data,))


class TestGradcheck:
    def test_every_primitive_passes(self):
        report = check_primitives(np.random.default_rng(0))
        assert report.passed()
        assert report.max_relative_error <= 1e-4
        assert {"matmul", "softmax_rows", "batch_norm", "embedding_lookup", "where"} <= set(report.groups())

    def test_corrupted_adjoint_is_reported(self, rng):
        x = Tensor(rng.normal(size=(3, 3)) + 3.0, requires_grad=True)
        report = check_function("broken_square", _broken_square, [x], rng)
        assert not report.passed()
        assert report.groups()["broken_square"]["passed"] == 0

    def test_composite_function(self, rng):
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        report = check_function("chain", lambda x, y: T.sigmoid(T.matmul(x, y)), [a, b], rng)
        assert report.passed()
        assert len(report.checks) == 12 + 6

    def test_relative_error_floor(self):
        assert relative_error(0.0, 1e-9) < 1e-3
        assert abs(relative_error(1.0, 1.1) - 0.1 / 1.1) < 1e-12

    def test_report_summary(self, rng):
        x = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        summary = check_function("exp", T.exp, [x], rng).to_dict()
        assert summary["coordinates"] == 4
        assert summary["pass_fraction"] == 1.0
