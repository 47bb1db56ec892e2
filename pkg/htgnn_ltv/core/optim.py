"""Adam optimiser and global-norm gradient clipping."""

from typing import Sequence

import numpy as np

from ..utils.exceptions import ContractError
from .params import Parameter


class Adam:
    """Adam with bias correction, updating parameters in place."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.state: dict[str, tuple[np.ndarray, np.ndarray]] = {p.name: (np.zeros_like(p.data), np.zeros_like(p.data)) for p in self.params}

    def step(self) -> None:
        """Apply one update using each parameter's current ``grad``.

        Raises:
            ContractError: If a parameter has no gradient
        """
        for param in self.params:
            if param.grad is None:
                raise ContractError(f"Parameter {param.name} has no gradient; call backward before step")

        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for param in self.params:
            grad = param.grad
            assert grad is not None
            m, v = self.state[param.name]
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.state[param.name] = (m, v)
            param.data[...] -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Rescale gradients so their global L2 norm is at most ``max_norm``.

    Returns:
        The norm before clipping
    """
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for param in params:
            if param.grad is not None:
                param.grad[...] *= scale
    return total
