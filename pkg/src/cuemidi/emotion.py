"""Discrete-emotion probabilities -> continuous valence-arousal conditions.

Each of the six basic emotions carries a Gaussian in valence and in arousal
(means/stds from published user studies).  A classifier's probability vector
turns this into a mixture; the pipeline uses the mixture mean by default,
sampling is available as an alternative.  Means can be rescaled so their
maximum absolute value is r, widening or narrowing the reachable range.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import BadDistribution, DegenerateTable, OutOfRange

EMOTIONS = ("anger", "disgust", "fear", "joy", "sadness", "surprise")


@dataclass(frozen=True)
class EmotionTable:
    """Per-emotion Gaussian parameters, aligned with EMOTIONS."""

    valence_mean: tuple
    valence_std: tuple
    arousal_mean: tuple
    arousal_std: tuple

    def __post_init__(self):
        for name in ("valence_mean", "valence_std", "arousal_mean", "arousal_std"):
            if len(getattr(self, name)) != len(EMOTIONS):
                raise ValueError(f"{name} must have {len(EMOTIONS)} entries")
        if any(s <= 0 for s in self.valence_std + self.arousal_std):
            raise ValueError("standard deviations must be positive")

    def row(self, emotion: str):
        i = EMOTIONS.index(emotion)
        return (self.valence_mean[i], self.valence_std[i],
                self.arousal_mean[i], self.arousal_std[i])


# User-study means and standard deviations for the six basic emotions
# (valence mean/std, arousal mean/std per row).
RAW_TABLE = EmotionTable(
    valence_mean=(-0.51, -0.60, -0.64, 0.76, -0.63, 0.40),
    valence_std=(0.20, 0.20, 0.20, 0.22, 0.23, 0.30),
    arousal_mean=(0.59, 0.35, 0.60, 0.48, -0.27, 0.67),
    arousal_std=(0.29, 0.41, 0.32, 0.26, 0.34, 0.27),
)

ABSENT = None


@dataclass(frozen=True)
class EmotionCondition:
    """Optional valence and arousal in [-1, 1]; None encodes "absent"."""

    valence: float | None = None
    arousal: float | None = None

    def __post_init__(self):
        for name, v in (("valence", self.valence), ("arousal", self.arousal)):
            if v is not None and not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [-1, 1]")


def _rescale_axis(means, stds, r):
    mn, mx = min(means), max(means)
    if mx == mn:
        raise DegenerateTable("all means equal on one axis")
    span = mx - mn
    new_means = tuple(2.0 * r * ((m - mn) / span) - r for m in means)
    new_stds = tuple(2.0 * r * s / span for s in stds)
    return new_means, new_stds


def rescale_table(table: EmotionTable, r: float) -> EmotionTable:
    """Affinely map means so they span exactly [-r, r]; scale stds to match.

    Only the spread of the standard deviations changes, not their centering.
    """
    if not 0.0 < r <= 1.0:
        raise ValueError("r must be in (0, 1]")
    v_means, v_stds = _rescale_axis(table.valence_mean, table.valence_std, r)
    a_means, a_stds = _rescale_axis(table.arousal_mean, table.arousal_std, r)
    return EmotionTable(v_means, v_stds, a_means, a_stds)


def _check_probs(probs):
    probs = tuple(float(p) for p in probs)
    if len(probs) != len(EMOTIONS):
        raise BadDistribution(f"expected {len(EMOTIONS)} probabilities, got {len(probs)}")
    if any(p < 0 for p in probs):
        raise BadDistribution("negative probability")
    if abs(sum(probs) - 1.0) > 1e-6:
        raise BadDistribution(f"probabilities sum to {sum(probs)}, not 1")
    return probs


def mixture_mean(probs, table: EmotionTable) -> EmotionCondition:
    """Weighted average of the per-emotion means; both axes always present."""
    probs = _check_probs(probs)
    valence = sum(p * m for p, m in zip(probs, table.valence_mean))
    arousal = sum(p * m for p, m in zip(probs, table.arousal_mean))
    return EmotionCondition(valence, arousal)


def mixture_sample_raw(probs, table: EmotionTable, rng: random.Random) -> tuple[float, float]:
    """Pick an emotion by probability, then sample its Gaussians per axis.

    Returns the unclamped (valence, arousal) pair; the Gaussian tails can
    exceed [-1, 1].
    """
    probs = _check_probs(probs)
    u = rng.random()
    cumulative = 0.0
    index = len(probs) - 1
    for i, p in enumerate(probs):
        cumulative += p
        if u < cumulative:
            index = i
            break
    valence = rng.gauss(table.valence_mean[index], table.valence_std[index])
    arousal = rng.gauss(table.arousal_mean[index], table.arousal_std[index])
    return valence, arousal


def mixture_sample(probs, table: EmotionTable, rng: random.Random) -> EmotionCondition:
    """mixture_sample_raw clamped to [-1, 1], as required by the generator."""
    valence, arousal = mixture_sample_raw(probs, table, rng)
    return EmotionCondition(min(1.0, max(-1.0, valence)),
                            min(1.0, max(-1.0, arousal)))


_BIN_EDGES = (-0.6, -0.2, 0.2, 0.6)


def bin_condition(v: float) -> int:
    """Quantize [-1, 1] into 5 equal bins indexed -2..2, central bin 0.

    Upper bin edges belong to the lower bin, except v == 1 which is bin 2.
    """
    if math.isnan(v) or not -1.0 <= v <= 1.0:
        raise OutOfRange(f"{v} outside [-1, 1]")
    return sum(v > edge for edge in _BIN_EDGES) - 2


def bin_midpoint(bin_index: int) -> float:
    if not -2 <= bin_index <= 2:
        raise OutOfRange(f"bin {bin_index} outside -2..2")
    return bin_index * 0.4


# Interchange format from upstream video classifiers: six "label value" lines.

def parse_probs_file(text: str):
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise BadDistribution(f"expected 'label value', got {line!r}")
        label, value = parts
        if label not in EMOTIONS:
            raise BadDistribution(f"unknown emotion label {label!r}")
        if label in values:
            raise BadDistribution(f"duplicate label {label!r}")
        try:
            values[label] = float(value)
        except ValueError as exc:
            raise BadDistribution(f"bad value for {label!r}: {value!r}") from exc
    missing = [e for e in EMOTIONS if e not in values]
    if missing:
        raise BadDistribution(f"missing labels: {', '.join(missing)}")
    return _check_probs(tuple(values[e] for e in EMOTIONS))


def dump_probs_file(probs) -> str:
    probs = _check_probs(probs)
    return "".join(f"{label} {p}\n" for label, p in zip(EMOTIONS, probs))
