"""Tests for the loss families and their combination."""

import numpy as np
import pytest

from htgnn_ltv.core.tensor import Tensor
from htgnn_ltv.model.objective import TaskTerms, binary_ce, combine, dynamic_huber, huber_delta, mse
from htgnn_ltv.utils.exceptions import ConfigurationError, ContractError


def _huber(r: np.ndarray, delta: float) -> np.ndarray:
    r = np.abs(r)
    return np.where(r <= delta, 0.5 * r * r, delta * r - 0.5 * delta * delta)


class TestBinaryCE:
    def test_one_half(self):
        assert binary_ce([1.0], Tensor([0.5])).item() == pytest.approx(np.log(2.0), abs=1e-12)

    def test_sums_over_samples(self):
        loss = binary_ce([1.0, 0.0, 1.0], Tensor([0.9, 0.2, 0.6])).item()
        assert loss == pytest.approx(-(np.log(0.9) + np.log(0.8) + np.log(0.6)), abs=1e-12)

    def test_certain_mistake_is_clamped(self):
        assert binary_ce([1.0], Tensor([0.0])).item() == pytest.approx(-np.log(1e-12), rel=1e-9)

    def test_out_of_range_prediction(self):
        with pytest.raises(ContractError):
            binary_ce([1.0], Tensor([1.5]))


class TestDynamicHuber:
    def test_quadratic_region(self):
        loss, delta = dynamic_huber([0.0], Tensor([0.5]), delta=1.0)
        assert loss.item() == pytest.approx(0.125)
        assert delta == 1.0

    def test_linear_region(self):
        loss, _ = dynamic_huber([0.0], Tensor([3.0]), delta=1.0)
        assert loss.item() == pytest.approx(2.5)

    def test_delta_is_95th_percentile(self):
        residuals = np.arange(1.0, 21.0)
        assert huber_delta(residuals, np.zeros(20)) == pytest.approx(19.05, abs=1e-12)
        loss, delta = dynamic_huber(np.zeros(20), Tensor(residuals))
        assert delta == pytest.approx(19.05, abs=1e-12)
        assert loss.item() == pytest.approx(_huber(residuals, 19.05).mean(), abs=1e-12)

    def test_continuous_at_the_knot(self):
        delta = 1.7
        below, _ = dynamic_huber([0.0], Tensor([delta - 1e-12]), delta=delta)
        above, _ = dynamic_huber([0.0], Tensor([delta + 1e-12]), delta=delta)
        assert abs(below.item() - above.item()) < 1e-9

    def test_never_exceeds_half_squared_error(self, rng):
        y, y_hat = rng.normal(size=50) * 5, rng.normal(size=50) * 5
        loss, _ = dynamic_huber(y, Tensor(y_hat))
        assert loss.item() <= 0.5 * mse(y, Tensor(y_hat)).item() + 1e-12

    def test_empty_batch(self):
        with pytest.raises(ContractError):
            dynamic_huber([], Tensor(np.zeros(0)))


class TestCombine:
    def _terms(self) -> dict[str, TaskTerms]:
        return {
            "lt30": TaskTerms(ce=Tensor(2.0), huber=Tensor(0.5), js=Tensor(0.3), mse=Tensor(4.0), delta=1.0, n_labeled=4, n_censored=0),
            "lt180": TaskTerms(ce=Tensor(1.0), huber=Tensor(0.25), js=Tensor(0.1), mse=Tensor(2.0), delta=2.0, n_labeled=2, n_censored=2),
        }

    def test_multi(self):
        total, report = combine(self._terms(), (0.5, 1.0, 2.0), n=4)
        expected = (0.5 * 0.4 + 1.0 * 3.0 + 2.0 * (0.5 + 0.25)) / 4
        assert total.item() == pytest.approx(expected, abs=1e-12)
        assert report.total == pytest.approx(expected, abs=1e-12)
        assert report.tasks["lt30"].huber == pytest.approx(0.5)

    def test_huber_enters_as_labeled_mean(self):
        huber, _ = dynamic_huber([0.0] * 4, Tensor(np.full(4, 0.5)), delta=1.0)
        assert huber.item() == pytest.approx(0.125)
        total, _ = combine({"lt30": TaskTerms(huber=huber, delta=1.0, n_labeled=4)}, (0.0, 0.0, 1.0), n=4)
        assert total.item() == pytest.approx(0.125 / 4, abs=1e-12)

    def test_only_structural_term(self):
        total, _ = combine(self._terms(), (1.0, 0.0, 0.0), n=4)
        assert total.item() == pytest.approx(0.4 / 4, abs=1e-12)

    def test_huber_mode_ignores_betas(self):
        total, _ = combine(self._terms(), (9.0, 9.0, 9.0), n=4, loss_mode="huber")
        assert total.item() == pytest.approx((0.5 + 0.25) / 4, abs=1e-12)

    def test_mse_mode(self):
        total, _ = combine(self._terms(), (1.0, 1.0, 1.0), n=4, loss_mode="mse")
        assert total.item() == pytest.approx((4.0 + 2.0) / 4, abs=1e-12)

    def test_tasks_without_labels_contribute_nothing(self):
        terms = {"lt365": TaskTerms(n_censored=4)}
        total, report = combine(terms, (1.0, 1.0, 1.0), n=4)
        assert total.item() == 0.0
        assert report.tasks["lt365"].n_censored == 4

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            combine(self._terms(), (1.0, 1.0, 1.0), n=4, loss_mode="quantile")

    def test_nonfinite_term_is_named(self):
        terms = self._terms()
        terms["lt180"].huber = Tensor(np.inf)
        _, report = combine(terms, (1.0, 1.0, 1.0), n=4)
        assert report.nonfinite_term() == "lt180.huber"

    def test_finite_report(self):
        _, report = combine(self._terms(), (1.0, 1.0, 1.0), n=4)
        assert report.nonfinite_term() is None
        assert set(report.to_dict()["tasks"]) == {"lt30", "lt180"}
