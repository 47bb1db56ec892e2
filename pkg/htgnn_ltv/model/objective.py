"""Cross-entropy, dynamic Huber and structural losses and their weighted combination."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import tensor as T
from ..core.tensor import Tensor
from ..utils.exceptions import ConfigurationError, ContractError

PROB_EPSILON = 1e-12
HUBER_PERCENTILE = 95.0
LOSS_MODES = ("mse", "huber", "multi")


def binary_ce(c, c_hat: Tensor) -> Tensor:
    """−Σ[c·log ĉ + (1 − c)·log(1 − ĉ)] with ĉ clamped into [1e-12, 1 − 1e-12].

    Raises:
        ContractError: If a prediction lies outside [0, 1]
    """
    c = np.asarray(c, dtype=np.float64)
    if np.any(c_hat.data < 0.0) or np.any(c_hat.data > 1.0):
        raise ContractError("classification predictions must lie in [0, 1]")
    p = T.clamp(c_hat, PROB_EPSILON, 1.0 - PROB_EPSILON)
    positive = T.mul(T.log(p), c)
    negative = T.mul(T.log(T.sub(1.0, p)), 1.0 - c)
    return T.mul(T.tensor_sum(T.add(positive, negative)), -1.0)


def huber_delta(y, y_hat) -> float:
    """95th percentile (linear interpolation) of the absolute residuals."""
    residuals = np.abs(np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64))
    if residuals.size == 0:
        raise ContractError("dynamic Huber needs at least one labeled sample")
    return float(np.percentile(residuals, HUBER_PERCENTILE))


def dynamic_huber(y, y_hat: Tensor, delta: Optional[float] = None) -> tuple[Tensor, float]:
    """Mean Huber loss with δ taken from the batch residuals and held constant.

    Args:
        y: Targets
        y_hat: Predictions
        delta: Fixed δ; computed from the residuals when omitted

    Returns:
        Tuple of (loss, δ used)

    Raises:
        ContractError: On an empty batch
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ContractError("dynamic Huber needs at least one labeled sample")
    if delta is None:
        delta = huber_delta(y, y_hat.data)
    error = T.absolute(T.sub(y_hat, y))
    quadratic = T.mul(T.mul(error, error), 0.5)
    linear = T.sub(T.mul(error, delta), 0.5 * delta * delta)
    return T.tensor_mean(T.where(error.data <= delta, quadratic, linear)), delta


def mse(y, y_hat: Tensor) -> Tensor:
    residual = T.sub(y_hat, np.asarray(y, dtype=np.float64))
    return T.tensor_mean(T.mul(residual, residual))


@dataclass
class TaskTerms:
    """Differentiable loss pieces of one task; a term is None when it has no samples."""

    ce: Optional[Tensor] = None
    huber: Optional[Tensor] = None
    js: Optional[Tensor] = None
    mse: Optional[Tensor] = None
    delta: float = 0.0
    n_labeled: int = 0
    n_censored: int = 0


@dataclass
class TaskReport:
    ce: float
    huber: float
    js: float
    mse: float
    delta: float
    n_labeled: int
    n_censored: int


@dataclass
class LossReport:
    """Scalar summary of one batch loss.

    ``huber`` is the per-task summed Huber loss (batch mean times labeled
    count), the quantity that enters the total.
    """

    tasks: dict[str, TaskReport] = field(default_factory=dict)
    total: float = 0.0
    loss_mode: str = "multi"

    def to_dict(self) -> dict:
        return {"total": self.total, "loss_mode": self.loss_mode, "tasks": {name: vars(report).copy() for name, report in self.tasks.items()}}

    def nonfinite_term(self) -> Optional[str]:
        """Name of the first non-finite component, e.g. ``ltv30.huber``."""
        for name, report in self.tasks.items():
            for term in ("js", "ce", "huber", "mse"):
                if not np.isfinite(getattr(report, term)):
                    return f"{name}.{term}"
        return None if np.isfinite(self.total) else "total"


def _value(term: Optional[Tensor]) -> float:
    return 0.0 if term is None else term.item()


def combine(terms: dict[str, TaskTerms], betas: tuple[float, float, float], n: int, loss_mode: str = "multi") -> tuple[Tensor, LossReport]:
    """Assemble the batch objective.

    ``multi``: (1/n)(β₁·Σ JS + β₂·Σ CE + β₃·Σ Huber), sums taken over tasks, where
    each task's Huber is the labeled-sample mean from ``dynamic_huber``.
    ``huber``: (1/n)·Σ Huber. ``mse``: (1/n)·Σ MSE. Tasks without labeled samples
    contribute nothing.

    Returns:
        Tuple of (total loss tensor, report)
    """
    if loss_mode not in LOSS_MODES:
        raise ConfigurationError(f"unknown loss_mode {loss_mode}; expected one of {', '.join(LOSS_MODES)}")
    beta_js, beta_ce, beta_huber = betas
    parts: list[Tensor] = []
    report = LossReport(loss_mode=loss_mode)
    for name, t in terms.items():
        if loss_mode == "multi":
            for beta, term in ((beta_js, t.js), (beta_ce, t.ce), (beta_huber, t.huber)):
                if term is not None and beta != 0.0:
                    parts.append(T.mul(term, beta))
        elif loss_mode == "huber" and t.huber is not None:
            parts.append(t.huber)
        elif loss_mode == "mse" and t.mse is not None:
            parts.append(t.mse)
        report.tasks[name] = TaskReport(
            ce=_value(t.ce), huber=_value(t.huber), js=_value(t.js), mse=_value(t.mse), delta=t.delta, n_labeled=t.n_labeled, n_censored=t.n_censored
        )
    total = T.mul(T.tensor_sum(T.stack(parts)), 1.0 / n) if parts else Tensor(0.0)
    report.total = total.item()
    return total, report
