"""Run configuration: defaults, flat ``key = value`` files and the config digest.

Resolution priority (highest → lowest):
  1. CLI overrides
  2. Config file
  3. Built-in defaults
"""

import dataclasses
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from .model.objective import LOSS_MODES
from .utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.txt"

# Fields that fix parameter shapes or the forward computation; a checkpoint is
# only loadable under a config that agrees on all of them.
DIGEST_FIELDS = (
    "embed_dim",
    "k_neighbors",
    "hg_layers",
    "seq_types",
    "max_seq_len",
    "heads",
    "model_dim",
    "ffn_hidden",
    "mask_dim",
    "n_task_experts",
    "n_shared_experts",
    "moe_layers",
    "expert_dim",
    "tower_hidden",
    "no_hypergraph",
    "no_dynamic_weighting",
    "no_dynamic_tower",
)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    batch_size: int = 256
    epochs: int = 20
    lr: float = 1e-3
    embed_dim: int = 8
    k_neighbors: int = 8
    hg_layers: int = 2
    seq_types: int = 6
    max_seq_len: int = 32
    heads: int = 4
    model_dim: int = 32
    ffn_hidden: int = 64
    mask_dim: int = 16
    n_task_experts: int = 2
    n_shared_experts: int = 2
    moe_layers: int = 2
    expert_dim: int = 32
    tower_hidden: int = 16
    betas: tuple[float, float, float] = (1.0, 1.0, 1.0)
    no_hypergraph: bool = False
    no_dynamic_weighting: bool = False
    no_dynamic_tower: bool = False
    loss_mode: str = "multi"
    n_categorical: int = 12
    n_statistical: int = 4
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    grad_clip: float = 5.0
    log_every: int = 10

    def __post_init__(self):
        positive = (
            "batch_size",
            "embed_dim",
            "k_neighbors",
            "hg_layers",
            "seq_types",
            "heads",
            "model_dim",
            "ffn_hidden",
            "mask_dim",
            "n_task_experts",
            "moe_layers",
            "expert_dim",
            "tower_hidden",
            "log_every",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0 or self.max_seq_len < 0 or self.n_shared_experts < 0:
            raise ConfigurationError("epochs, max_seq_len and n_shared_experts must be non-negative")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if len(self.betas) != 3 or any(b < 0 for b in self.betas):
            raise ConfigurationError(f"betas must be three non-negative values, got {self.betas}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigurationError(f"loss_mode must be one of {', '.join(LOSS_MODES)}, got {self.loss_mode}")
        if self.model_dim % self.heads:
            raise ConfigurationError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        if not (0 <= self.val_fraction < 1 and 0 <= self.test_fraction < 1):
            raise ConfigurationError("val_fraction and test_fraction must lie in [0, 1)")
        if self.grad_clip < 0:
            raise ConfigurationError("grad_clip must be non-negative (0 disables clipping)")

    @property
    def effective_betas(self) -> tuple[float, float, float]:
        """Betas with β₁ forced to 0 when the hypergraph path is ablated."""
        beta_js, beta_ce, beta_huber = self.betas
        return (0.0 if self.no_hypergraph else beta_js, beta_ce, beta_huber)

    def replace(self, **overrides: Any) -> "RunConfig":
        return apply_overrides(self, overrides)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: Any) -> Any:
    default = _FIELDS[name].default
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {raw!r}")
            return text in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = raw if isinstance(raw, (tuple, list)) else [part for part in str(raw).split(",") if part.strip()]
            return tuple(float(item) for item in items)
        return str(raw).strip()
    except ValueError as e:
        raise ConfigurationError(f"invalid value for {name}: {e}") from None


def apply_overrides(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Return a copy of ``config`` with coerced overrides applied.

    Raises:
        ConfigurationError: On an unknown key or an uncoercible value
    """
    values = {}
    for key, raw in overrides.items():
        if key not in _FIELDS:
            raise ConfigurationError(f"unknown config key: {key}")
        values[key] = _coerce(key, raw)
    return dataclasses.replace(config, **values)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    entries: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigurationError(f"config line {number}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in content.split("=", 1))
        entries[key] = value
    return entries


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional file and CLI overrides.

    Args:
        path: Config file; defaults only when omitted
        overrides: Values that win over the file (None entries are ignored)

    Returns:
        The resolved configuration
    """
    config = RunConfig()
    if path is not None:
        config = apply_overrides(config, parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        config = apply_overrides(config, {k: v for k, v in overrides.items() if v is not None})
    return config


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config: RunConfig) -> str:
    """Materialise every field as ``key = value`` text."""
    return "".join(f"{name} = {_format(getattr(config, name))}\n" for name in _FIELDS)


def write_resolved_config(config: RunConfig, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_CONFIG_NAME
    path.write_text(dump_config(config), encoding="utf-8")
    logger.debug("Wrote resolved config to %s", path)
    return path


def config_digest(config: RunConfig) -> str:
    """SHA-256 over the sorted ``key = value`` text of the digest fields."""
    text = "".join(f"{name} = {_format(getattr(config, name))}\n" for name in sorted(DIGEST_FIELDS))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
