"""Autoregressive generation: nucleus sampling over a sliding context, with
boundary-offset bookkeeping driven by the inference cursor."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np
import torch

from .boundaries import BoundaryState, step_inference_offset, validate_boundaries
from .emotion import EmotionCondition
from .errors import StallDetected
from .model import ConditionalMusicTransformer
from .tokenizer import VOCAB, Vocabulary


@dataclass(frozen=True)
class SamplingParams:
    nucleus_p: float = 0.7
    temperature: float = 1.2
    min_nucleus_size: int = 3
    temperature_bump: float = 1.05  # one-step multiplier after a small nucleus
    context_window: int = 1216
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.nucleus_p <= 1.0:
            raise ValueError("nucleus_p outside (0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")


@dataclass(frozen=True)
class GenerationRequest:
    duration_s: float
    boundaries: tuple = ()
    condition: EmotionCondition = EmotionCondition()
    primer: tuple | None = None  # default [START, BAR]
    params: SamplingParams = SamplingParams()

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        object.__setattr__(self, "boundaries", validate_boundaries(self.boundaries))


@dataclass(frozen=True)
class GenerationReport:
    token_count: int
    final_cursor_s: float
    boundaries_in: tuple
    boundaries_consumed: tuple
    chord_times_s: tuple
    bumped_steps: int


def nucleus_sample(logits, params: SamplingParams, rng: random.Random,
                   temperature: float | None = None) -> tuple[int, int]:
    """Sample from the smallest prefix of the sorted softmax reaching mass p.

    Returns (token id, nucleus size).  -inf logits are excluded outright;
    with p == 1 the nucleus is every token of nonzero probability.
    """
    if hasattr(logits, "detach"):
        logits = logits.detach().cpu().numpy()
    x = np.asarray(logits, dtype=np.float64)
    t = params.temperature if temperature is None else temperature
    scaled = x / t
    finite = np.isfinite(scaled)
    if not finite.any():
        raise ValueError("no finite logits to sample from")
    probs = np.exp(scaled - scaled[finite].max())
    probs[~finite] = 0.0
    probs /= probs.sum()

    order = np.argsort(-probs, kind="stable")
    sorted_probs = probs[order]
    if params.nucleus_p >= 1.0:
        k = max(1, int((sorted_probs > 0).sum()))
    else:
        cumulative = np.cumsum(sorted_probs)
        k = int(np.searchsorted(cumulative, params.nucleus_p, side="left")) + 1
        k = min(k, len(sorted_probs))
    weights = sorted_probs[:k]
    weights = weights / weights.sum()
    pick = int(np.searchsorted(np.cumsum(weights), rng.random(), side="right"))
    pick = min(pick, k - 1)
    return int(order[pick]), k


def window_slide(seq, offsets, context_window: int):
    """Last context_window entries of both lists, kept aligned."""
    if context_window < 1:
        raise ValueError("context_window must be >= 1")
    return list(seq[-context_window:]), list(offsets[-context_window:])


def generate(model: ConditionalMusicTransformer, req: GenerationRequest,
             sensitivity_s: float = 1.0, stall_limit: int = 512,
             max_offset_s: float | None = None, vocab: Vocabulary = VOCAB):
    """Run the autoregressive loop until the time cursor reaches duration_s.

    Returns (token ids, offsets, GenerationReport).  The offsets list replays
    exactly through step_inference_offset for the same tokens and boundaries.
    PAD is masked out and never sampled.  StallDetected is raised when
    stall_limit consecutive tokens arrive without a TIME_SHIFT.  The offset
    cap defaults to the model's configured max_offset_s.
    """
    cfg = model.cfg
    params = req.params
    rng = random.Random(params.seed)
    model.eval()

    state = BoundaryState(req.boundaries, sensitivity_s=sensitivity_s,
                          max_offset_s=max_offset_s or cfg.max_offset_s)
    seq: list[int] = []
    offsets: list[float] = []
    chord_times: list[float] = []
    for token_id in (req.primer if req.primer is not None else (vocab.start, vocab.bar)):
        offset, state = step_inference_offset(state, token_id, vocab)
        seq.append(token_id)
        offsets.append(offset)
        if token_id == vocab.chord:
            chord_times.append(state.time_cursor_s)

    window = min(params.context_window, cfg.max_tokens)
    bumped = 0
    stalled = 0
    previous_nucleus: int | None = None
    while state.time_cursor_s < req.duration_s:
        window_seq, window_off = window_slide(seq, offsets, window)
        tokens = torch.tensor(window_seq, dtype=torch.long)
        offs = None
        if cfg.boundary_conditioning:
            offs = torch.tensor(window_off, dtype=torch.float32)
        with torch.no_grad():
            logits = model(tokens, offs, req.condition.valence, req.condition.arousal)
        row = logits[-1].numpy().astype(np.float64)
        row[vocab.pad] = -np.inf

        temperature = params.temperature
        if previous_nucleus is not None and previous_nucleus < params.min_nucleus_size:
            temperature *= params.temperature_bump
            bumped += 1
        token_id, previous_nucleus = nucleus_sample(row, params, rng, temperature)

        offset, state = step_inference_offset(state, token_id, vocab)
        seq.append(token_id)
        offsets.append(offset)
        if token_id == vocab.chord:
            chord_times.append(state.time_cursor_s)
        if vocab.shift_value(token_id) is None:
            stalled += 1
            if stalled >= stall_limit:
                raise StallDetected(f"{stall_limit} consecutive tokens without TIME_SHIFT")
        else:
            stalled = 0

    consumed = tuple(b for b, now in zip(req.boundaries, state.boundaries)
                     if math.isinf(now) and not math.isinf(b))
    report = GenerationReport(
        token_count=len(seq),
        final_cursor_s=state.time_cursor_s,
        boundaries_in=req.boundaries,
        boundaries_consumed=consumed,
        chord_times_s=tuple(chord_times),
        bumped_steps=bumped,
    )
    return seq, offsets, report
