"""Command runner that ties generation, training, evaluation and verification together."""

import logging
from dataclasses import dataclass
from typing import Any, Optional

from .tools.command_definitions import Command, get_all_commands
from .utils.exceptions import EXIT_FAILURE, EXIT_OK, exit_code_for, format_error_response

# Import all handlers
from .handlers import gen_handlers
from .handlers import train_handlers
from .handlers import eval_handlers
from .handlers import ablation_handlers
from .handlers import gradcheck_handlers

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    """Outcome of one command: exit code, JSON payload and an optional printable table."""

    exit_code: int
    payload: dict[str, Any]
    table: Optional[str] = None


class ExperimentRunner:
    """Runs the experiment commands and converts failures into error payloads."""

    def list_commands(self) -> list[Command]:
        """List available commands."""
        return get_all_commands()

    def run_command(self, name: str, arguments: dict[str, Any]) -> CommandResult:
        """Dispatch a command to its handler.

        Args:
            name: Command name
            arguments: Handler arguments keyed by option name

        Returns:
            Result carrying exit code 0 on success, 2 on data errors, 3 on divergence and 1 otherwise
        """
        logger.debug("Running %s with %s", name, arguments)
        try:
            if name == "gen":
                payload = gen_handlers.generate(arguments)
            elif name == "train":
                payload = train_handlers.train(arguments)
            elif name == "eval":
                payload = eval_handlers.evaluate(arguments)
            elif name == "ablate":
                payload = ablation_handlers.ablate(arguments)
            elif name == "gradcheck":
                payload = gradcheck_handlers.gradcheck(arguments)
            else:
                return CommandResult(EXIT_FAILURE, {"error": f"Unknown command: {name}", "type": "unknown_command"})

        except Exception as e:
            return CommandResult(exit_code_for(e), format_error_response(e, name))

        table = payload.pop("table", None)
        if payload.get("passed") is False:
            return CommandResult(EXIT_FAILURE, payload, table)
        return CommandResult(EXIT_OK, payload, table)
