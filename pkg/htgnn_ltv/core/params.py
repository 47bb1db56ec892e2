"""Named parameters, non-trainable buffers and their initialisation."""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..utils.exceptions import CheckpointError, ContractError
from .tensor import BatchNormState, Tensor


@dataclass
class Parameter:
    """A trainable tensor identified by a unique dotted name."""

    name: str
    tensor: Tensor

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.tensor.grad


class ParameterStore:
    """Owns every parameter and buffer of a model, keyed by name.

    Buffers are float arrays that travel with checkpoints but receive no
    gradient (batch-norm running statistics, target scales, feature schema).
    """

    def __init__(self, rng: Optional[np.random.Generator] = None):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._params: dict[str, Parameter] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._bn_states: dict[str, BatchNormState] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name].tensor
        except KeyError:
            raise ContractError(f"Unknown parameter: {name}") from None

    def __len__(self) -> int:
        return len(self._params)

    def create(self, name: str, shape: tuple[int, ...], init: str = "uniform", fan_in: Optional[int] = None) -> Tensor:
        """Register a new parameter.

        Args:
            name: Unique dotted path, e.g. ``hg.layer0.theta``
            shape: Parameter shape
            init: ``uniform`` (±1/sqrt(fan_in)), ``zeros``, ``ones`` or ``identity``
            fan_in: Overrides the fan-in used by ``uniform`` (defaults to shape[0])

        Returns:
            The parameter tensor
        """
        if name in self._params:
            raise ContractError(f"Duplicate parameter name: {name}")
        if init == "uniform":
            bound = 1.0 / np.sqrt(fan_in if fan_in is not None else shape[0])
            data = self.rng.uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "identity":
            data = np.eye(shape[0]) if len(shape) == 2 else np.ones(shape)
        else:
            raise ContractError(f"Unknown initialiser: {init}")
        tensor = Tensor(data, requires_grad=True, name=name)
        self._params[name] = Parameter(name=name, tensor=tensor)
        return tensor

    def batch_norm_state(self, name: str, dim: int) -> BatchNormState:
        """Return (creating on first use) the running statistics for a batch-norm site."""
        if name not in self._bn_states:
            self._bn_states[name] = BatchNormState(dim)
        return self._bn_states[name]

    def set_buffer(self, name: str, values) -> None:
        self._buffers[name] = np.asarray(values, dtype=np.float64)

    def buffer(self, name: str) -> np.ndarray:
        try:
            return self._buffers[name]
        except KeyError:
            raise ContractError(f"Unknown buffer: {name}") from None

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, param in self._params.items():
            yield name, param.tensor

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.tensor.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        """Flatten parameters, batch-norm statistics and buffers into named arrays."""
        state: dict[str, np.ndarray] = {name: p.tensor.data.copy() for name, p in self._params.items()}
        for name, bn in self._bn_states.items():
            state[f"{name}.running_mean"] = bn.running_mean.copy()
            state[f"{name}.running_var"] = bn.running_var.copy()
        for name, values in self._buffers.items():
            state[f"buffer.{name}"] = values.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copy named arrays back into the registered parameters and statistics.

        Raises:
            CheckpointError: If a registered entry is missing or has the wrong shape
        """
        for name, param in self._params.items():
            param.tensor.data[...] = _fetch(state, name, param.tensor.shape)
        for name, bn in self._bn_states.items():
            bn.running_mean = _fetch(state, f"{name}.running_mean", bn.running_mean.shape).copy()
            bn.running_var = _fetch(state, f"{name}.running_var", bn.running_var.shape).copy()
        for key, values in state.items():
            if key.startswith("buffer."):
                self._buffers[key[len("buffer.") :]] = values.copy()


def _fetch(state: dict[str, np.ndarray], name: str, shape: tuple[int, ...]) -> np.ndarray:
    if name not in state:
        raise CheckpointError(f"Checkpoint has no entry for {name}")
    values = state[name]
    if values.shape != shape:
        raise CheckpointError(f"Checkpoint entry {name} has shape {values.shape}, expected {shape}")
    return values
