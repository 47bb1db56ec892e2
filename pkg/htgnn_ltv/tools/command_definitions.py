"""Command definitions for the htgnn-ltv CLI."""

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from ..data.synth import DEFAULT_SEGMENTS


@dataclass(frozen=True)
class Argument:
    """One command-line option; ``dest`` doubles as the handler's ``args`` key."""

    dest: str
    help: str
    type: Optional[Callable[[str], Any]] = str
    required: bool = False
    default: Any = None
    flag: bool = False
    choices: Optional[tuple] = None

    @property
    def option(self) -> str:
        return "--" + self.dest.replace("_", "-")


@dataclass(frozen=True)
class Command:
    name: str
    description: str
    arguments: tuple[Argument, ...] = field(default_factory=tuple)


_CONFIG = Argument("config", "Path to a key = value config file")
_DATA = Argument("data", "Path to a dataset file", required=True)
_SEED = Argument("seed", "Override the config seed", type=int)
_EPOCHS = Argument("epochs", "Override the config epoch count", type=int)


def get_all_commands() -> list[Command]:
    """Get all available commands.

    Returns:
        List of Command definitions
    """
    return [
        Command(
            name="gen",
            description="Generate a synthetic user population",
            arguments=(
                Argument("n", "Number of users", type=int, required=True),
                Argument("segments", "Number of segment archetypes", type=int, default=DEFAULT_SEGMENTS),
                _SEED,
                Argument("out", "Destination dataset file", required=True),
                _CONFIG,
            ),
        ),
        Command(
            name="train",
            description="Train a model and write checkpoints and a training log",
            arguments=(_CONFIG, _DATA, Argument("out", "Output directory", required=True), _SEED, _EPOCHS),
        ),
        Command(
            name="eval",
            description="Evaluate a checkpoint under the lifetime-stratified protocol",
            arguments=(
                Argument("checkpoint", "Checkpoint file", required=True),
                _DATA,
                Argument("config", "Config file (default: resolved_config.txt next to the checkpoint)"),
                Argument("split", "Users to score", default="test", choices=("test", "all")),
                Argument("out", "Report file (default: eval_report.jsonl next to the checkpoint)"),
                Argument("full", "Print every task on every stratum", type=None, flag=True),
            ),
        ),
        Command(
            name="ablate",
            description="Seed-replicated comparison of the full model against its ablations",
            arguments=(
                _CONFIG,
                _DATA,
                Argument("seeds", "Number of seed replicates", type=int, default=5),
                Argument("loss_modes", "Sweep loss modes (mse, huber, multi) instead of ablation switches", type=None, flag=True),
                Argument("out", "Directory for the resolved config and per-run log"),
                _SEED,
                _EPOCHS,
            ),
        ),
        Command(
            name="gradcheck",
            description="Compare analytic gradients against central finite differences",
            arguments=(_CONFIG, _SEED, Argument("coordinates", "Sampled model coordinates", type=int, default=500)),
        ),
    ]
