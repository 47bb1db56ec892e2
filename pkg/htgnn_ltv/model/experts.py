"""Task-adaptive mixture-of-experts layers and mask-conditioned prediction towers."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import tensor as T
from ..core.params import ParameterStore
from ..core.tensor import BatchNormState, Tensor
from ..data.records import TASKS
from ..utils.exceptions import ConfigurationError

HEADS = ("regression", "classification")


@dataclass(frozen=True)
class ExpertConfig:
    """Shape of the expert network.

    ``dynamic_weighting`` off replaces the mask-conditioned gates with static
    learned gates; ``dynamic_tower`` off replaces the generated towers with a
    single learned linear layer.
    """

    input_dim: int
    mask_dim: int = 16
    tasks: tuple[str, ...] = TASKS
    n_task_experts: int = 2
    n_shared_experts: int = 2
    layers: int = 2
    expert_dim: int = 32
    tower_hidden: int = 16
    dynamic_weighting: bool = True
    dynamic_tower: bool = True

    def __post_init__(self):
        if self.n_task_experts < 1 or self.n_shared_experts < 0 or self.layers < 1:
            raise ConfigurationError("n_task_experts and layers must be at least 1 and n_shared_experts non-negative")
        if min(self.input_dim, self.mask_dim, self.expert_dim, self.tower_hidden) < 1:
            raise ConfigurationError("expert dimensions must be positive")

    @property
    def tower_size(self) -> int:
        h = self.tower_hidden
        return self.expert_dim * h + h * h + h

    def layer_input(self, layer: int) -> int:
        return self.input_dim if layer == 0 else self.expert_dim


@dataclass
class TowerWeights:
    W1: Tensor
    W2: Tensor
    W3: Tensor


@dataclass
class ForwardMode:
    training: bool
    update_stats: bool = True


def create_expert_params(store: ParameterStore, cfg: ExpertConfig) -> None:
    for layer in range(cfg.layers):
        fan_in = cfg.layer_input(layer)
        prefixes = [f"moe.layer{layer}.task.{task}.expert{j}" for task in cfg.tasks for j in range(cfg.n_task_experts)]
        prefixes += [f"moe.layer{layer}.shared.expert{j}" for j in range(cfg.n_shared_experts)]
        for prefix in prefixes:
            store.create(f"{prefix}.w", (fan_in, cfg.expert_dim))
            store.create(f"{prefix}.b", (cfg.expert_dim,), init="zeros")
            store.create(f"{prefix}.bn.gamma", (cfg.expert_dim,), init="ones")
            store.create(f"{prefix}.bn.beta", (cfg.expert_dim,), init="zeros")
            store.batch_norm_state(f"{prefix}.bn", cfg.expert_dim)

        gates = {task: cfg.n_task_experts + cfg.n_shared_experts for task in cfg.tasks}
        if layer < cfg.layers - 1:
            gates["shared"] = len(cfg.tasks) * cfg.n_task_experts + cfg.n_shared_experts
        for name, width in gates.items():
            if cfg.dynamic_weighting:
                store.create(f"moe.layer{layer}.gate.{name}.w", (cfg.mask_dim, width))
            store.create(f"moe.layer{layer}.gate.{name}.b", (width,), init="zeros")

    for task in cfg.tasks:
        for head in HEADS:
            prefix = f"tower.{task}.{head}"
            if cfg.dynamic_tower:
                store.create(f"{prefix}.wd", (cfg.mask_dim, cfg.tower_size))
                store.create(f"{prefix}.bd", (cfg.tower_size,), init="zeros")
            else:
                store.create(f"{prefix}.w", (cfg.expert_dim, 1))
                store.create(f"{prefix}.b", (1,), init="zeros")


def expert_forward(x: Tensor, w: Tensor, b: Tensor, gamma: Tensor, beta: Tensor, bn_state: BatchNormState, mode: ForwardMode) -> Tensor:
    """ReLU(BatchNorm(x·W + b))."""
    pre = T.add(T.matmul(x, w), b)
    return T.relu(T.batch_norm(pre, gamma, beta, bn_state, training=mode.training, update_stats=mode.update_stats))


def _expert(params: ParameterStore, prefix: str, x: Tensor, mode: ForwardMode) -> Tensor:
    return expert_forward(
        x,
        params[f"{prefix}.w"],
        params[f"{prefix}.b"],
        params[f"{prefix}.bn.gamma"],
        params[f"{prefix}.bn.beta"],
        params.batch_norm_state(f"{prefix}.bn", params[f"{prefix}.b"].shape[0]),
        mode,
    )


def gate_weights(u_mask: Tensor, task: str, layer: int, params: ParameterStore, dynamic: bool = True) -> Tensor:
    """σ(u_mask·W_g + b_g) for one task (or ``shared``) at one layer; σ(b_g) per row when static."""
    bias = params[f"moe.layer{layer}.gate.{task}.b"]
    if dynamic:
        return T.sigmoid(T.add(T.matmul(u_mask, params[f"moe.layer{layer}.gate.{task}.w"]), bias))
    return T.mul(np.ones((u_mask.shape[0], 1)), T.sigmoid(bias))


def weighted_sum(gates: Tensor, experts: Sequence[Tensor]) -> Tensor:
    """Σ_j gates[:, j] · experts[j], preserving the expert dimension."""
    stacked = T.stack(list(experts), axis=1)
    b, n = gates.shape
    return T.tensor_sum(T.mul(T.reshape(gates, (b, n, 1)), stacked), axis=1)


def shared_expert_outputs(u_s_prev: Tensor, layer: int, params: ParameterStore, cfg: ExpertConfig, mode: ForwardMode) -> list[Tensor]:
    return [_expert(params, f"moe.layer{layer}.shared.expert{j}", u_s_prev, mode) for j in range(cfg.n_shared_experts)]


def task_layer(
    u_t_prev: Tensor,
    u_s_prev: Tensor,
    u_mask: Tensor,
    task: str,
    layer: int,
    params: ParameterStore,
    cfg: ExpertConfig,
    mode: ForwardMode,
    shared_outputs: Optional[list[Tensor]] = None,
) -> tuple[Tensor, list[Tensor]]:
    """Gate-weighted sum over the task's experts on u_t_prev and the shared experts on u_s_prev.

    Returns:
        Tuple of (u_t at this layer, the task experts' outputs)
    """
    own = [_expert(params, f"moe.layer{layer}.task.{task}.expert{j}", u_t_prev, mode) for j in range(cfg.n_task_experts)]
    shared = shared_outputs if shared_outputs is not None else shared_expert_outputs(u_s_prev, layer, params, cfg, mode)
    gates = gate_weights(u_mask, task, layer, params, cfg.dynamic_weighting)
    return weighted_sum(gates, own + shared), own


def shared_layer(all_task_outputs: Sequence[Tensor], shared_outputs: Sequence[Tensor], u_mask: Tensor, layer: int, params: ParameterStore, cfg: ExpertConfig) -> Tensor:
    """Gate-weighted sum over every task expert's output followed by the shared experts' outputs."""
    gates = gate_weights(u_mask, "shared", layer, params, cfg.dynamic_weighting)
    return weighted_sum(gates, list(all_task_outputs) + list(shared_outputs))


def dynamic_tower_weights(u_mask: Tensor, W_d: Tensor, b_d: Tensor, expert_dim: int, hidden: int) -> TowerWeights:
    """Split W_d·u_mask + b_d row-major into W1[d_e×h], W2[h×h], W3[h×1] per user.

    Raises:
        ConfigurationError: If the projection length is not d_e·h + h·h + h
    """
    expected = expert_dim * hidden + hidden * hidden + hidden
    if W_d.shape[-1] != expected:
        raise ConfigurationError(f"tower projection has {W_d.shape[-1]} outputs, expected {expected}")
    b = u_mask.shape[0]
    flat = T.add(T.matmul(u_mask, W_d), b_d)
    first, second = expert_dim * hidden, expert_dim * hidden + hidden * hidden
    return TowerWeights(
        W1=T.reshape(flat[:, :first], (b, expert_dim, hidden)),
        W2=T.reshape(flat[:, first:second], (b, hidden, hidden)),
        W3=T.reshape(flat[:, second:], (b, hidden, 1)),
    )


def tower_forward(u_final: Tensor, tw: TowerWeights, head: str) -> Tensor:
    """Per-user tower: σ(σ(u·W1)·W2)·W3, with a final σ for classification. Returns [b]."""
    b, d = u_final.shape
    h1 = T.sigmoid(T.matmul(T.reshape(u_final, (b, 1, d)), tw.W1))
    h2 = T.sigmoid(T.matmul(h1, tw.W2))
    out = T.reshape(T.matmul(h2, tw.W3), (b,))
    return T.sigmoid(out) if head == "classification" else out


def static_tower_forward(u_final: Tensor, w: Tensor, b: Tensor, head: str) -> Tensor:
    out = T.reshape(T.add(T.matmul(u_final, w), b), (u_final.shape[0],))
    return T.sigmoid(out) if head == "classification" else out


@dataclass
class ExpertOutputs:
    regression: dict[str, Tensor]
    classification: dict[str, Tensor]
    final: dict[str, Tensor]


def experts_forward(u0: Tensor, u_mask: Tensor, params: ParameterStore, cfg: ExpertConfig, mode: ForwardMode) -> ExpertOutputs:
    """K stacked MoE layers followed by one regression and one classification tower per task."""
    u_tasks = {task: u0 for task in cfg.tasks}
    u_shared = u0
    for layer in range(cfg.layers):
        shared = shared_expert_outputs(u_shared, layer, params, cfg, mode)
        all_task_outputs: list[Tensor] = []
        next_tasks = {}
        for task in cfg.tasks:
            next_tasks[task], own = task_layer(u_tasks[task], u_shared, u_mask, task, layer, params, cfg, mode, shared_outputs=shared)
            all_task_outputs.extend(own)
        if layer < cfg.layers - 1:
            u_shared = shared_layer(all_task_outputs, shared, u_mask, layer, params, cfg)
        u_tasks = next_tasks

    outputs = ExpertOutputs(regression={}, classification={}, final=u_tasks)
    for task in cfg.tasks:
        for head in HEADS:
            prefix = f"tower.{task}.{head}"
            if cfg.dynamic_tower:
                towers = dynamic_tower_weights(u_mask, params[f"{prefix}.wd"], params[f"{prefix}.bd"], cfg.expert_dim, cfg.tower_hidden)
                value = tower_forward(u_tasks[task], towers, head)
            else:
                value = static_tower_forward(u_tasks[task], params[f"{prefix}.w"], params[f"{prefix}.b"], head)
            getattr(outputs, head)[task] = value
    return outputs
