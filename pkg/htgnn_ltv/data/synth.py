"""Synthetic advertising populations.

Users are drawn from segment archetypes. A segment fixes a categorical
profile, a lifetime rate, a log-normal value level and spread, and a zero-inflation
probability, so users that share many categorical values share a segment and
therefore similar labels. Values are log-normal across segments, which gives a
zero-inflated, long-tailed LTV distribution. Behavior sequences follow a
piecewise-constant engagement intensity whose level switches at random
strategy-change points; a switch may end the campaign and cut the sequence short.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from ..utils.exceptions import ContractError
from .records import HORIZONS, TASKS, SequenceObservation, UserRecord

logger = logging.getLogger(__name__)

CATEGORICAL_NAMES = (
    "channel",
    "region",
    "device",
    "os",
    "campaign",
    "creative",
    "placement",
    "age_band",
    "gender",
    "interest",
    "app_category",
    "time_slot",
)
STATISTICAL_NAMES = ("historical_spend", "session_count", "active_ratio", "account_age")
SEQUENCE_TYPES = ("impressions", "clicks", "searches", "dwell_minutes", "conversions", "spend")
SPEND_LINKED = frozenset({"conversions", "spend"})

# Observation-window bands (inclusive day ranges) and their mixture weights.
OBS_BANDS = ((7, 29), (30, 180), (181, 365), (366, 400))

DEFAULT_SEGMENTS = 20


def categorical_names(count: int) -> list[str]:
    return [CATEGORICAL_NAMES[i] if i < len(CATEGORICAL_NAMES) else f"cat_{i:02d}" for i in range(count)]


def statistical_names(count: int) -> list[str]:
    return [STATISTICAL_NAMES[i] if i < len(STATISTICAL_NAMES) else f"stat_{i:02d}" for i in range(count)]


def sequence_type_names(count: int) -> list[str]:
    return [SEQUENCE_TYPES[i] if i < len(SEQUENCE_TYPES) else f"behavior_{i:02d}" for i in range(count)]


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the generative recipe; defaults give the desk-scale population."""

    n_categorical: int = 12
    n_statistical: int = 4
    seq_types: int = 6
    max_seq_len: int = 32
    min_cardinality: int = 8
    max_cardinality: int = 24
    flip_prob: float = 0.15
    payer_fraction: float = 0.55
    payer_zero_prob: tuple[float, float] = (0.02, 0.08)
    nonpayer_zero_prob: tuple[float, float] = (0.85, 0.95)
    zero_inflation: Optional[float] = None
    segment_value_sigma: float = 1.6
    feature_effect_sigma: float = 0.15
    value_sigma: tuple[float, float] = (0.1, 0.35)
    lifetime_rate: tuple[float, float] = (0.1, 0.6)
    user_rate_sigma: float = 0.2
    daily_value_shape: float = 4.0
    stat_noise: float = 0.5
    obs_band_weights: tuple[float, ...] = (0.2, 0.3, 0.25, 0.25)
    switch_rate: float = 0.05
    dropout_prob: float = 0.3
    level_sigma: float = 0.5
    intensity_scale: float = 1.0
    dirichlet_alpha: float = 2.0

    def noiseless(self) -> "GeneratorConfig":
        """Same recipe with every per-user noise source switched off."""
        return replace(self, flip_prob=0.0, stat_noise=0.0, feature_effect_sigma=0.0, value_sigma=(0.0, 0.0), user_rate_sigma=0.0)


@dataclass(frozen=True)
class SegmentArchetype:
    id: int
    profile: tuple[int, ...]
    lifetime_rate: float
    value_mu: float
    value_sigma: float
    zero_inflation: float
    stat_means: tuple[float, ...]

    @property
    def value_scale(self) -> float:
        return float(np.exp(self.value_mu))

    def __post_init__(self):
        if not 0.0 <= self.zero_inflation <= 1.0:
            raise ContractError(f"segment {self.id}: zero-inflation probability {self.zero_inflation} outside [0, 1]")
        if self.value_sigma < 0.0:
            raise ContractError(f"segment {self.id}: negative log-value spread {self.value_sigma}")


@dataclass(frozen=True)
class UserLatent:
    """Hidden per-user state the sequences are simulated from."""

    segment: int
    active: bool
    rate: float
    daily_value: float
    obs_days: int


@dataclass
class Population:
    """Shared generative state: archetypes, segment weights and per-code value effects."""

    config: GeneratorConfig
    archetypes: list[SegmentArchetype]
    weights: np.ndarray
    cardinalities: np.ndarray
    effects: list[np.ndarray] = field(default_factory=list)


def build_population(n_segments: int, seed: int, config: Optional[GeneratorConfig] = None) -> Population:
    """Draw the segment archetypes for a seed."""
    config = config or GeneratorConfig()
    rng = np.random.default_rng([seed, 0])
    cardinalities = rng.integers(config.min_cardinality, config.max_cardinality + 1, size=config.n_categorical)
    n_payers = int(round(config.payer_fraction * n_segments)) if n_segments > 1 else 1
    payer = np.zeros(n_segments, dtype=bool)
    payer[rng.permutation(n_segments)[:n_payers]] = True

    archetypes = []
    for s in range(n_segments):
        low, high = config.payer_zero_prob if payer[s] else config.nonpayer_zero_prob
        zero_prob = config.zero_inflation if config.zero_inflation is not None else float(rng.uniform(low, high))
        archetypes.append(
            SegmentArchetype(
                id=s,
                profile=tuple(int(rng.integers(0, c)) for c in cardinalities),
                lifetime_rate=float(rng.uniform(*config.lifetime_rate)),
                value_mu=float(rng.normal(0.0, config.segment_value_sigma)),
                value_sigma=float(rng.uniform(*config.value_sigma)),
                zero_inflation=zero_prob,
                stat_means=tuple(float(v) for v in rng.normal(0.0, 1.0, size=config.n_statistical)),
            )
        )
    weights = rng.dirichlet(np.full(n_segments, config.dirichlet_alpha))
    effects = [rng.normal(0.0, config.feature_effect_sigma, size=c) if config.feature_effect_sigma > 0 else np.zeros(c) for c in cardinalities]
    return Population(config=config, archetypes=archetypes, weights=weights, cardinalities=cardinalities, effects=effects)


def sample_population(n: int, n_segments: int, seed: int, config: Optional[GeneratorConfig] = None) -> list[UserRecord]:
    """Generate ``n`` users from ``n_segments`` archetypes.

    Each user is generated from its own generator seeded by (seed, user id),
    so users are independent of one another given the shared population.

    Args:
        n: Number of users
        n_segments: Number of segment archetypes
        seed: Master seed
        config: Generator recipe; defaults to ``GeneratorConfig()``

    Returns:
        Records in user-id order

    Raises:
        ContractError: If ``n < n_segments``
    """
    if n_segments < 1 or n < n_segments:
        raise ContractError(f"sample_population needs n >= n_segments >= 1, got n={n}, n_segments={n_segments}")
    population = build_population(n_segments, seed, config)
    records = [_sample_user(population, user_id, np.random.default_rng([seed, 1, user_id])) for user_id in range(n)]
    logger.info("Generated %d users across %d segments (seed %d)", n, n_segments, seed)
    return records


def _sample_user(population: Population, user_id: int, rng: np.random.Generator) -> UserRecord:
    config = population.config
    segment = population.archetypes[int(rng.choice(len(population.archetypes), p=population.weights))]

    codes = np.array(segment.profile)
    flips = rng.random(config.n_categorical) < config.flip_prob
    codes[flips] = [int(rng.integers(0, c)) for c in population.cardinalities[flips]]

    active = bool(rng.random() >= segment.zero_inflation)
    rate = float(np.clip(segment.lifetime_rate * np.exp(rng.normal(0.0, config.user_rate_sigma) if config.user_rate_sigma > 0 else 0.0), 0.01, 0.95))
    log_value = segment.value_mu + sum(float(effect[code]) for effect, code in zip(population.effects, codes))
    if segment.value_sigma > 0:
        log_value += float(rng.normal(0.0, segment.value_sigma))
    daily_value = float(np.exp(log_value))

    band = OBS_BANDS[int(rng.choice(len(OBS_BANDS), p=np.asarray(config.obs_band_weights) / np.sum(config.obs_band_weights)))]
    obs_days = int(rng.integers(band[0], band[1] + 1))

    stats = np.array(segment.stat_means) + (rng.normal(0.0, config.stat_noise, size=config.n_statistical) if config.stat_noise > 0 else 0.0)
    if config.n_statistical > 0:
        stats[0] += 0.5 * (log_value - segment.value_mu) + (0.0 if active else -1.0)
    if config.n_statistical > 1:
        stats[1] += np.log(rate / segment.lifetime_rate)

    lifetimes, values = _sample_labels(active, rate, daily_value, config.daily_value_shape, rng)
    labels: dict[str, Optional[float]] = {}
    for horizon in HORIZONS:
        observed = obs_days >= horizon
        labels[f"lt{horizon}"] = float(lifetimes[horizon]) if observed else None
        labels[f"ltv{horizon}"] = float(values[horizon]) if observed else None

    latent = UserLatent(segment=segment.id, active=active, rate=rate, daily_value=daily_value, obs_days=obs_days)
    return UserRecord(
        user_id=user_id,
        cat={name: int(code) for name, code in zip(categorical_names(config.n_categorical), codes)},
        stat={name: float(v) for name, v in zip(statistical_names(config.n_statistical), stats)},
        seq=simulate_sequences(latent, rng, config),
        labels={task: labels[task] for task in TASKS},
        obs_days=obs_days,
    )


def _sample_labels(active: bool, rate: float, daily_value: float, shape: float, rng: np.random.Generator) -> tuple[dict[int, int], dict[int, float]]:
    """Nested active-day counts and accumulated revenue at every horizon."""
    lifetimes: dict[int, int] = {}
    values: dict[int, float] = {}
    lt, ltv, previous = 0, 0.0, 0
    for horizon in HORIZONS:
        if active:
            days = int(rng.binomial(horizon - previous, rate))
            lt += days
            if days > 0:
                ltv += daily_value * float(rng.gamma(shape * days, 1.0 / shape))
        lifetimes[horizon] = lt
        values[horizon] = ltv
        previous = horizon
    return lifetimes, values


def simulate_sequences(latent: UserLatent, seed: Union[int, np.random.Generator], config: Optional[GeneratorConfig] = None) -> dict[str, SequenceObservation]:
    """Simulate the user's behavior series under switching marketing strategies.

    Daily intensity is constant between strategy-change points, which arrive
    with probability ``switch_rate`` per day (geometric inter-switch times).
    At each change the level is redrawn, or with probability ``dropout_prob``
    the campaign stops and no later day is observed. The observed length is
    uniform on 0..min(obs_days, L), cut at the first stop.

    Args:
        latent: Hidden state of the user
        seed: Integer seed or generator
        config: Generator recipe

    Returns:
        Map of sequence type to observed values and length
    """
    config = config or GeneratorConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    horizon = config.max_seq_len
    window = min(latent.obs_days, horizon)

    switches = rng.random(horizon) < config.switch_rate
    switches[0] = False
    stops = switches & (rng.random(horizon) < config.dropout_prob)
    first_stop = int(np.argmax(stops)) if stops.any() else horizon
    length = min(int(rng.integers(0, window + 1)), first_stop)

    regimes = np.cumsum(switches)
    base = config.intensity_scale * latent.rate * (1.0 if latent.active else 0.1)
    levels = base * np.exp(rng.normal(0.0, config.level_sigma, size=int(regimes[-1]) + 1)) if config.level_sigma > 0 else np.full(int(regimes[-1]) + 1, base)
    intensity = levels[regimes]

    sequences: dict[str, SequenceObservation] = {}
    for name in sequence_type_names(config.seq_types):
        scale = latent.daily_value if name in SPEND_LINKED else 1.0
        daily = intensity[:length] * scale * rng.gamma(2.0, 0.5, size=length)
        sequences[name] = SequenceObservation(values=tuple(float(v) for v in daily), length=length)
    return sequences


def shrinkage_curve(records: Sequence[UserRecord], label: str = "ltv30", n_anchors: int = 300, seed: int = 0) -> dict[int, float]:
    """Mean within-group label standard deviation by number of shared categorical values.

    For each sampled anchor user, the other users are grouped by how many
    categorical values they share with the anchor; the standard deviation of
    the label is taken within every group of at least two users and averaged
    over anchors.

    Args:
        records: Population; users whose label is censored are ignored
        label: Task name, e.g. ``ltv30`` or ``lt30``
        n_anchors: Number of anchor users
        seed: Anchor sampling seed

    Returns:
        Map of shared-value count to mean standard deviation
    """
    codes, y = _labeled_matrix(records, label)
    rng = np.random.default_rng(seed)
    anchors = rng.choice(len(y), size=min(n_anchors, len(y)), replace=False)
    totals: dict[int, list[float]] = {}
    for anchor in anchors:
        shared = (codes == codes[anchor]).sum(axis=1)
        shared[anchor] = -1
        for count in np.unique(shared[shared >= 0]):
            members = y[shared == count]
            if members.size >= 2:
                totals.setdefault(int(count), []).append(float(np.std(members, ddof=1)))
    return {count: float(np.mean(stds)) for count, stds in sorted(totals.items())}


def shrinkage_ratio(records: Sequence[UserRecord], label: str = "ltv30", high: int = 10, low: int = 2, n_anchors: int = 300, seed: int = 0) -> float:
    """Relative reduction of the label std for users sharing >= ``high`` values versus <= ``low``.

    Returns:
        1 - std(shared >= high) / std(shared <= low), both averaged over anchors
    """
    codes, y = _labeled_matrix(records, label)
    rng = np.random.default_rng(seed)
    anchors = rng.choice(len(y), size=min(n_anchors, len(y)), replace=False)
    close, far = [], []
    for anchor in anchors:
        shared = (codes == codes[anchor]).sum(axis=1)
        shared[anchor] = -1
        near_group = y[shared >= high]
        far_group = y[(shared >= 0) & (shared <= low)]
        if near_group.size >= 2 and far_group.size >= 2:
            close.append(np.std(near_group, ddof=1))
            far.append(np.std(far_group, ddof=1))
    if not close:
        raise ContractError(f"no anchor has at least two users sharing >= {high} and <= {low} values")
    return 1.0 - float(np.mean(close)) / float(np.mean(far))


def tail_summary(records: Sequence[UserRecord], label: str = "ltv30") -> dict[str, float]:
    """Zero fraction and top-5% revenue share of an observed label."""
    _, y = _labeled_matrix(records, label)
    total = float(y.sum())
    top = np.sort(y)[::-1][: max(1, int(np.ceil(0.05 * y.size)))]
    return {
        "users": int(y.size),
        "zero_fraction": float(np.mean(y == 0)),
        "top5_share": float(top.sum() / total) if total > 0 else 0.0,
    }


def _labeled_matrix(records: Sequence[UserRecord], label: str) -> tuple[np.ndarray, np.ndarray]:
    kept = [r for r in records if r.labels.get(label) is not None]
    if not kept:
        raise ContractError(f"no record has an observed {label} label")
    names = list(kept[0].cat)
    codes = np.array([[r.cat[name] for name in names] for r in kept], dtype=np.int64)
    y = np.array([r.labels[label] for r in kept], dtype=np.float64)
    return codes, y
