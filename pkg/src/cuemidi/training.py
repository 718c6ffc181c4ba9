"""Toy-scale training: fixed corpora, batch assembly, and a training loop.

Full-scale training is out of reach on a desk machine; these corpora are
small enough that a correct implementation memorizes them in a few hundred
steps, which the tests use as an end-to-end oracle.
"""

from __future__ import annotations

import math
import random

import torch

from .boundaries import BoundaryState, step_inference_offset, training_offsets
from .emotion import RAW_TABLE, mixture_mean, rescale_table
from .model import ConditionalMusicTransformer, ModelConfig, TrainBatch, train_step
from .tokenizer import VOCAB, Vocabulary


def toy_corpus(length: int = 64, seed: int = 7, vocab: Vocabulary = VOCAB) -> list[int]:
    """Fixed pseudo-musical sequence with CHORD and TIME_SHIFT tokens."""
    rng = random.Random(seed)
    ids = [vocab.start, vocab.bar, vocab.more_instruments]
    pitches = [60, 64, 67, 72]
    while len(ids) < length:
        if rng.random() < 0.25:
            ids.append(vocab.chord)
        pitch = rng.choice(pitches)
        instrument = rng.choice(("piano", "guitar", "bass"))
        ids.append(vocab.note_on(instrument, pitch))
        ids.append(vocab.shift(rng.choice((248, 504, 1000))))
        ids.append(vocab.note_off(instrument, pitch))
    return ids[:length]


def loop_corpus(phrases: int = 10, vocab: Vocabulary = VOCAB) -> list[int]:
    """A strict 1.6-second loop: one strong piano chord per phrase.

    A model that memorizes this loop keeps emitting chords every 1.6 s, so
    any boundary list with gaps >= 4 s gets a chord within the 1 s
    sensitivity window of every boundary.
    """
    phrase = [
        vocab.chord,
        vocab.note_on("piano", 60),
        vocab.note_on("piano", 64),
        vocab.note_on("piano", 67),
        vocab.shift(1000),
        vocab.shift(600),
        vocab.note_off("piano", 60),
        vocab.note_off("piano", 64),
        vocab.note_off("piano", 67),
    ]
    return [vocab.start, vocab.bar, vocab.fewer_instruments] + phrase * phrases


def joy_condition() -> tuple[float, float]:
    """The condition the demo pipeline feeds for a one-hot joy input."""
    probs = tuple(1.0 if e == "joy" else 0.0 for e in
                  ("anger", "disgust", "fear", "joy", "sadness", "surprise"))
    cond = mixture_mean(probs, rescale_table(RAW_TABLE, 0.8))
    return cond.valence, cond.arousal


def replay_offsets(ids, boundaries, sensitivity_s: float = 1.0,
                   max_offset_s: float = 8.0, vocab: Vocabulary = VOCAB) -> list[float]:
    """Offsets as the inference loop would produce them for this sequence."""
    state = BoundaryState(tuple(boundaries), sensitivity_s=sensitivity_s,
                          max_offset_s=max_offset_s)
    out = []
    for token_id in ids:
        offset, state = step_inference_offset(state, token_id, vocab)
        out.append(offset)
    return out


def make_batch(ids, cfg: ModelConfig, condition: tuple = (0.5, -0.25),
               boundaries=None, vocab: Vocabulary = VOCAB) -> TrainBatch:
    """Next-token batch from one sequence: inputs ids[:-1], targets ids[1:].

    With boundary conditioning, offsets come from the CHORD grid pass, or
    from an inference-style replay when a boundary list is given (this makes
    the training distribution match what generation will feed the model).
    """
    inputs = list(ids[:-1])
    targets = list(ids[1:])
    offsets = None
    if cfg.boundary_conditioning:
        if boundaries is None:
            values = training_offsets(inputs, cfg.max_offset_s, vocab)
        else:
            values = replay_offsets(inputs, boundaries, max_offset_s=cfg.max_offset_s,
                                    vocab=vocab)
        offsets = torch.tensor([values], dtype=torch.float32)
    valence, arousal = condition
    return TrainBatch(
        tokens=torch.tensor([inputs], dtype=torch.long),
        targets=torch.tensor([targets], dtype=torch.long),
        offsets=offsets,
        valence=None if valence is None else torch.tensor([float(valence)]),
        arousal=None if arousal is None else torch.tensor([float(arousal)]),
    )


def gradcheck_batch(cfg: ModelConfig, length: int = 48,
                    vocab: Vocabulary = VOCAB) -> TrainBatch:
    """Two-row batch for gradient verification: one row carries a condition,
    the other is fully absent, so the NO_VALENCE/NO_AROUSAL embeddings and
    the projection layers both receive gradient."""
    row_a = toy_corpus(length + 1, seed=7, vocab=vocab)
    row_b = toy_corpus(length + 1, seed=8, vocab=vocab)
    batch_a = make_batch(row_a, cfg, condition=(0.5, -0.25), vocab=vocab)
    batch_b = make_batch(row_b, cfg, condition=(None, None), vocab=vocab)
    nan = torch.tensor([math.nan])
    return TrainBatch(
        tokens=torch.cat([batch_a.tokens, batch_b.tokens]),
        targets=torch.cat([batch_a.targets, batch_b.targets]),
        offsets=None if batch_a.offsets is None
        else torch.cat([batch_a.offsets, batch_b.offsets]),
        valence=torch.cat([batch_a.valence, nan]),
        arousal=torch.cat([batch_a.arousal, nan]),
    )


def train_toy(cfg: ModelConfig, batch: TrainBatch | None = None, steps: int = 500,
              lr: float = 3e-3) -> tuple[ConditionalMusicTransformer, list[float]]:
    """Full-batch Adam on one fixed sequence until it is memorized."""
    torch.manual_seed(cfg.seed)
    model = ConditionalMusicTransformer(cfg)
    if batch is None:
        batch = make_batch(toy_corpus(), cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    losses = [train_step(model, optimizer, batch) for _ in range(steps)]
    return model, losses


def pipeline_toy_config(variant: str = "continuous_token",
                        boundary_conditioning: bool = True, seed: int = 0) -> ModelConfig:
    return ModelConfig(variant=variant, boundary_conditioning=boundary_conditioning,
                       seed=seed)


def train_pipeline_toy(cfg: ModelConfig | None = None, steps: int = 900,
                       lr: float = 3e-3) -> tuple[ConditionalMusicTransformer, list[float]]:
    """Train the loop corpus with the demo emotion condition and scene-style
    boundaries, producing a checkpoint the end-to-end pipeline can drive."""
    cfg = cfg or pipeline_toy_config()
    ids = loop_corpus()
    batch = make_batch(ids, cfg, condition=joy_condition(),
                       boundaries=(4.8, 11.2) if cfg.boundary_conditioning else None)
    return train_toy(cfg, batch, steps=steps, lr=lr)
