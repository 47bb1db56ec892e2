"""Handlers for end-to-end gradient verification."""

import logging
from typing import Sequence

import numpy as np

from ..config import RunConfig, load_config
from ..core.gradcheck import GradcheckReport, check_parameters, check_primitives
from ..core.params import Parameter
from ..data.synth import GeneratorConfig, sample_population
from ..model.experts import ForwardMode
from ..trainer import build_model

logger = logging.getLogger(__name__)

GRADCHECK_BATCH = 8
GRADCHECK_USERS = 64
GRADCHECK_COORDINATES = 500
REQUIRED_PASS_FRACTION = 0.95


def parameter_group(name: str) -> str:
    """Report group of a parameter: its top-level module prefix (``feat``, ``hg``, ``seq``, ``moe``, ``gate``, ``tower``)."""
    return name.split(".", 1)[0]


def sample_coordinates(params: Sequence[Parameter], count: int, rng: np.random.Generator) -> list[tuple[Parameter, tuple[int, ...]]]:
    """One coordinate from every parameter tensor, the rest drawn uniformly over all entries."""
    coordinates = [(p, np.unravel_index(int(rng.integers(p.data.size)), p.data.shape)) for p in params]
    remaining = count - len(coordinates)
    if remaining > 0:
        sizes = np.array([p.data.size for p in params], dtype=np.float64)
        owners = rng.choice(len(params), size=remaining, p=sizes / sizes.sum())
        for owner in owners:
            p = params[int(owner)]
            coordinates.append((p, np.unravel_index(int(rng.integers(p.data.size)), p.data.shape)))
    return coordinates


def check_model(config: RunConfig, coordinates: int = GRADCHECK_COORDINATES) -> GradcheckReport:
    """Finite-difference check of the full composite loss on one small training batch.

    The hypergraph, Huber thresholds and surrogate labels are computed once
    and frozen, and batch-norm running statistics are left untouched, so the
    loss is a fixed smooth-almost-everywhere function of the parameters.
    """
    generator = GeneratorConfig(n_categorical=config.n_categorical, n_statistical=config.n_statistical, seq_types=config.seq_types, max_seq_len=config.max_seq_len)
    records = sample_population(GRADCHECK_USERS, 4, config.seed, generator)
    model = build_model(config, records)

    rng = np.random.default_rng(config.seed)
    rows = rng.choice(len(records), size=GRADCHECK_BATCH, replace=False)
    batch = model.encode([records[int(i)] for i in rows], train_mode=True, rng=rng)
    mode = ForwardMode(training=True, update_stats=False)
    _, _, trace = model.losses(batch, mode)

    params = model.parameters()
    return check_parameters(
        lambda: model.losses(batch, mode, trace)[0],
        params,
        sample_coordinates(params, coordinates, rng),
        parameter_group,
    )


def gradcheck(args: dict) -> dict:
    """Verify analytic gradients of the primitives and of the full model.

    Args:
        args: Arguments containing an optional config path and seed

    Returns:
        Primitive and model reports with per-group maximum relative error and a pass flag
    """
    config = load_config(args.get("config"), {"seed": args.get("seed")})
    primitives = check_primitives(np.random.default_rng(config.seed))
    logger.info("Primitive checks: %.1f%% of %d coordinates pass", 100 * primitives.pass_fraction, len(primitives.checks))
    composite = check_model(config, args.get("coordinates", GRADCHECK_COORDINATES))
    logger.info("Model checks: %.1f%% of %d coordinates pass", 100 * composite.pass_fraction, len(composite.checks))

    return {
        "primitives": primitives.to_dict(),
        "model": composite.to_dict(),
        "passed": primitives.passed() and composite.passed(REQUIRED_PASS_FRACTION),
    }
