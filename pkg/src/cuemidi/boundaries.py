"""Strong-chord detection, CHORD token insertion, and boundary offsets.

Offsets measure the remaining time from a token's implied timestamp to the
next unconsumed boundary, capped at max_offset_s.  Training uses a whole-
sequence grid pass; inference advances a cursor token by token and consumes
boundaries when a CHORD is generated nearby.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace

from .errors import ChordTimeNotFound
from .midi_io import FiveTrackNotes
from .tokenizer import VOCAB, Vocabulary, quantize_ms


@dataclass(frozen=True)
class ChordSpec:
    """What counts as a strong chord."""

    min_simultaneous_notes: int = 3
    min_duration_beats: float = 2.0
    eligible_instruments: frozenset = frozenset({"guitar", "piano"})
    onset_window_ms: float = 10.0

    def __post_init__(self):
        if self.min_simultaneous_notes < 2:
            raise ValueError("min_simultaneous_notes must be >= 2")
        if self.min_duration_beats <= 0:
            raise ValueError("min_duration_beats must be positive")


def validate_boundaries(timestamps) -> tuple:
    out = tuple(float(t) for t in timestamps)
    for a, b in zip(out, out[1:]):
        if b <= a:
            raise ValueError("boundaries must be strictly increasing")
    if out and out[0] < 0:
        raise ValueError("boundaries must be non-negative")
    return out


def detect_strong_chords(notes: FiveTrackNotes, spec: ChordSpec | None = None,
                         beat_s: float = 0.5) -> list[float]:
    """Onsets where enough long notes of one eligible instrument start together.

    A chord group is a run of notes whose onsets all lie within
    onset_window_ms of the group's earliest onset; one timestamp (that
    earliest onset) is reported per group.
    """
    if beat_s <= 0:
        raise ValueError("beat_s must be positive")
    spec = spec or ChordSpec()
    min_duration = spec.min_duration_beats * beat_s
    window_s = spec.onset_window_ms / 1000.0
    found = set()
    for instrument in sorted(spec.eligible_instruments):
        onsets = sorted(n.onset_s for n in notes
                        if n.instrument == instrument and n.duration_s >= min_duration)
        i = 0
        while i < len(onsets):
            j = i
            while j + 1 < len(onsets) and onsets[j + 1] - onsets[i] <= window_s:
                j += 1
            if j - i + 1 >= spec.min_simultaneous_notes:
                found.add(onsets[i])
            i = j + 1
    return sorted(found)


def filter_min_gap(boundaries, min_gap_s: float = 4.0) -> list[float]:
    """Greedy left-to-right pass keeping the earlier of any two close cuts."""
    if min_gap_s < 0:
        raise ValueError("min_gap_s must be non-negative")
    kept: list[float] = []
    for t in boundaries:
        if not kept or t - kept[-1] >= min_gap_s:
            kept.append(t)
    return kept


def insert_chord_tokens(ids, chord_times_s, drop_prob: float = 0.2,
                        rng: random.Random | None = None,
                        vocab: Vocabulary = VOCAB) -> list[int]:
    """Insert a CHORD id before the first NOTE_ON at each retained chord time.

    Each chord is independently dropped with probability drop_prob (decided
    up front in chronological order, so results are reproducible for a fixed
    seed).  A retained chord whose grid time matches no NOTE_ON raises
    ChordTimeNotFound.
    """
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError("drop_prob outside [0, 1]")
    rng = rng or random.Random(0)
    times = sorted(quantize_ms(t) for t in chord_times_s)
    pending = [t for t in times if rng.random() >= drop_prob]

    out = []
    cursor = 0
    k = 0
    for token_id in ids:
        shift = vocab.shift_value(token_id)
        if shift is not None:
            cursor += shift
            if k < len(pending) and pending[k] < cursor:
                raise ChordTimeNotFound(f"no NOTE_ON at {pending[k]} ms")
        ev = vocab.note_event(token_id)
        if ev is not None and ev[2]:  # a NOTE_ON
            while k < len(pending) and pending[k] == cursor:
                out.append(vocab.chord)
                k += 1
        out.append(token_id)
    if k < len(pending):
        raise ChordTimeNotFound(f"no NOTE_ON at {pending[k]} ms")
    return out


def training_offsets(ids, max_offset_s: float = 8.0, vocab: Vocabulary = VOCAB) -> list[float]:
    """Per-token time to the next CHORD token at or after it, capped.

    Tokens after the last CHORD get max_offset_s.  Only future chords count;
    a token exactly at a chord time gets 0.
    """
    from .tokenizer import token_times_ms

    times = token_times_ms(ids, vocab)
    chord_times = [times[i] / 1000.0 for i, t in enumerate(ids) if t == vocab.chord]
    out = []
    k = 0
    for t_ms in times:
        t = t_ms / 1000.0
        while k < len(chord_times) and chord_times[k] < t:
            k += 1
        if k < len(chord_times):
            out.append(min(chord_times[k] - t, max_offset_s))
        else:
            out.append(max_offset_s)
    return out


@dataclass(frozen=True)
class BoundaryState:
    """Algorithm state for inference-time offsets.

    Consumed boundaries are kept in place as +inf.  The cursor only moves on
    TIME_SHIFT tokens; it is advanced in integer milliseconds so replaying a
    token sequence reproduces the grid arithmetic exactly.
    """

    boundaries: tuple = ()
    time_cursor_s: float = 0.0
    sensitivity_s: float = 1.0
    max_offset_s: float = 8.0
    offsets: tuple = ()

    def __post_init__(self):
        if self.sensitivity_s < 0 or self.max_offset_s <= 0:
            raise ValueError("sensitivity_s must be >= 0 and max_offset_s > 0")

    @property
    def consumed_count(self) -> int:
        return sum(1 for b in self.boundaries if math.isinf(b))


def step_inference_offset(state: BoundaryState, token_id: int,
                          vocab: Vocabulary = VOCAB) -> tuple[float, BoundaryState]:
    """Advance the boundary cursor by one generated token.

    TIME_SHIFT moves the cursor; CHORD consumes every boundary strictly
    within sensitivity_s of it.  The appended offset is the distance to the
    nearest remaining future boundary, capped at max_offset_s.
    """
    cursor_ms = round(state.time_cursor_s * 1000)
    shift = vocab.shift_value(token_id)
    if shift is not None:
        cursor_ms += shift
    c = cursor_ms / 1000.0

    bounds = list(state.boundaries)
    if token_id == vocab.chord:
        for i, b in enumerate(bounds):
            if abs(c - b) < state.sensitivity_s:
                bounds[i] = math.inf

    nearest = math.inf
    for b in bounds:
        d = b - c
        if d >= 0 and d < nearest:  # negative distances are ignored (past)
            nearest = d
    offset = min(nearest, state.max_offset_s)

    new_state = replace(state, boundaries=tuple(bounds), time_cursor_s=c,
                        offsets=state.offsets + (offset,))
    return offset, new_state


def boost_chord_velocities(notes: FiveTrackNotes, chord_times_s, boost: int = 24) -> FiveTrackNotes:
    """Raise the velocity of notes whose grid onset matches a chord time."""
    if boost < 0:
        raise ValueError("boost must be non-negative")
    targets = {quantize_ms(t) for t in chord_times_s}
    out = []
    for n in notes:
        if quantize_ms(n.onset_s) in targets:
            n = replace(n, velocity=min(127, n.velocity + boost))
        out.append(n)
    return FiveTrackNotes(tuple(out))


# Plain text interchange format: one decimal seconds value per line.

def dump_boundaries(boundaries) -> str:
    return "".join(f"{t:.6f}\n" for t in boundaries)


def load_boundaries(text: str) -> list[float]:
    values = [float(line.strip()) for line in text.splitlines() if line.strip()]
    return list(validate_boundaries(values))
