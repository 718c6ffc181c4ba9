"""Event-based token alphabet and conversions to and from note content.

Vocabulary layout (1011 ids, dense):

    0..5      PAD, START, BAR, CHORD, FEWER_INSTRUMENTS, MORE_INSTRUMENTS
    6..885    per instrument (bass, drums, guitar, piano, strings):
              88 NOTE_ON ids for pitches 21..108, then 88 NOTE_OFF ids
    886..1010 TIME_SHIFT<8> .. TIME_SHIFT<1000> in 8 ms steps

Velocity is not part of the alphabet; decode assigns a caller-chosen default
and chord emphasis is applied afterwards on the note list.
"""

from __future__ import annotations

import math
import warnings

from .midi_io import INSTRUMENTS, FiveTrackNotes, Note

PITCH_MIN = 21
PITCH_MAX = 108
N_PITCHES = PITCH_MAX - PITCH_MIN + 1  # 88

SHIFT_STEP_MS = 8
SHIFT_MAX_MS = 1000
N_SHIFTS = SHIFT_MAX_MS // SHIFT_STEP_MS  # 125

STRUCTURAL = ("PAD", "START", "BAR", "CHORD", "FEWER_INSTRUMENTS", "MORE_INSTRUMENTS")


def quantize_ms(t_s: float) -> int:
    """Seconds -> nearest 8 ms grid point, ties away from zero."""
    return SHIFT_STEP_MS * int(math.floor(t_s * 1000.0 / SHIFT_STEP_MS + 0.5))


class Vocabulary:
    """Bijection between tokens and dense integer ids."""

    def __init__(self):
        names = list(STRUCTURAL)
        for instrument in INSTRUMENTS:
            prefix = instrument.upper()
            names += [f"{prefix}_ON_{p}" for p in range(PITCH_MIN, PITCH_MAX + 1)]
            names += [f"{prefix}_OFF_{p}" for p in range(PITCH_MIN, PITCH_MAX + 1)]
        names += [f"TIME_SHIFT<{ms}>" for ms in range(SHIFT_STEP_MS, SHIFT_MAX_MS + 1, SHIFT_STEP_MS)]
        self._names = tuple(names)
        self._ids = {name: i for i, name in enumerate(names)}
        self._note_base = len(STRUCTURAL)
        self._shift_base = self._note_base + 2 * N_PITCHES * len(INSTRUMENTS)
        self._inst_index = {inst: i for i, inst in enumerate(INSTRUMENTS)}

        self.pad = self._ids["PAD"]
        self.start = self._ids["START"]
        self.bar = self._ids["BAR"]
        self.chord = self._ids["CHORD"]
        self.fewer_instruments = self._ids["FEWER_INSTRUMENTS"]
        self.more_instruments = self._ids["MORE_INSTRUMENTS"]

    @property
    def size(self) -> int:
        return len(self._names)

    def name(self, token_id: int) -> str:
        return self._names[token_id]

    def id(self, name: str) -> int:
        return self._ids[name]

    def note_on(self, instrument: str, pitch: int) -> int:
        if not PITCH_MIN <= pitch <= PITCH_MAX:
            raise ValueError(f"pitch {pitch} outside {PITCH_MIN}..{PITCH_MAX}")
        return self._note_base + self._inst_index[instrument] * 2 * N_PITCHES + (pitch - PITCH_MIN)

    def note_off(self, instrument: str, pitch: int) -> int:
        return self.note_on(instrument, pitch) + N_PITCHES

    def shift(self, ms: int) -> int:
        if ms % SHIFT_STEP_MS or not SHIFT_STEP_MS <= ms <= SHIFT_MAX_MS:
            raise ValueError(f"invalid shift {ms} ms")
        return self._shift_base + ms // SHIFT_STEP_MS - 1

    def shift_value(self, token_id: int) -> int | None:
        """TIME_SHIFT value in ms, or None for any other token."""
        if self._shift_base <= token_id < self._shift_base + N_SHIFTS:
            return (token_id - self._shift_base + 1) * SHIFT_STEP_MS
        return None

    def note_event(self, token_id: int):
        """(instrument, pitch, is_on) for note tokens, else None."""
        if not self._note_base <= token_id < self._shift_base:
            return None
        rel = token_id - self._note_base
        instrument = INSTRUMENTS[rel // (2 * N_PITCHES)]
        rel %= 2 * N_PITCHES
        return instrument, PITCH_MIN + rel % N_PITCHES, rel < N_PITCHES


VOCAB = Vocabulary()


def _emit_shifts(out: list, gap_ms: int, vocab: Vocabulary):
    full, rem = divmod(gap_ms, SHIFT_MAX_MS)
    out.extend([vocab.shift(SHIFT_MAX_MS)] * full)
    if rem:
        out.append(vocab.shift(rem))


def encode(notes: FiveTrackNotes, drop_velocity: bool = True, beat_s: float | None = None,
           vocab: Vocabulary = VOCAB) -> list[int]:
    """FiveTrackNotes -> token ids.

    Absolute times are quantized to the 8 ms grid; gaps become maximal
    TIME_SHIFT<1000> runs plus a remainder.  Out-of-range pitches are dropped.
    The sequence starts with an instrument-count control token.  When beat_s
    is given, BAR tokens are emitted every four beats.  Velocities never enter
    the alphabet (drop_velocity is accepted for interface compatibility).
    """
    del drop_velocity
    kept = [n for n in notes if PITCH_MIN <= n.pitch <= PITCH_MAX]
    n_instruments = len({n.instrument for n in kept})
    prefix = vocab.fewer_instruments if n_instruments <= 2 else vocab.more_instruments

    # (time_ms, order, instrument index, pitch, id); OFF < BAR < ON at a tick
    events = []
    for n in kept:
        inst = INSTRUMENTS.index(n.instrument)
        events.append((quantize_ms(n.onset_s), 2, inst, n.pitch, vocab.note_on(n.instrument, n.pitch)))
        events.append((quantize_ms(n.offset_s), 0, inst, n.pitch, vocab.note_off(n.instrument, n.pitch)))
    if beat_s is not None and events:
        if beat_s <= 0:
            raise ValueError("beat_s must be positive")
        last_ms = max(t for t, *_ in events)
        bar_s = 4.0 * beat_s
        k = 0
        while True:
            bar_t = quantize_ms(k * bar_s)
            if bar_t > last_ms:
                break
            events.append((bar_t, 1, -1, -1, vocab.bar))
            k += 1
    events.sort()

    out = [prefix]
    cursor = 0
    for t_ms, _order, _inst, _pitch, token_id in events:
        _emit_shifts(out, t_ms - cursor, vocab)
        cursor = t_ms
        out.append(token_id)
    return out


def decode(ids, default_velocity: int = 64, vocab: Vocabulary = VOCAB,
           stats: dict | None = None) -> FiveTrackNotes:
    """Token ids -> FiveTrackNotes.

    NOTE_ON opens a note closed by the next matching NOTE_OFF; unclosed notes
    are closed at sequence end.  Orphan NOTE_OFFs are counted in stats (key
    "orphan_note_offs") and skipped.  Structural tokens produce no notes.
    """
    if not 1 <= default_velocity <= 127:
        raise ValueError("default_velocity outside 1..127")
    cursor = 0
    open_notes: dict = {}
    order: list = []
    notes = []
    orphans = 0

    def close(inst, pitch, onset_ms, end_ms):
        if end_ms <= onset_ms:
            end_ms = onset_ms + SHIFT_STEP_MS
        notes.append(Note(onset_ms / 1000.0, end_ms / 1000.0, pitch, default_velocity, inst))

    for token_id in ids:
        shift = vocab.shift_value(token_id)
        if shift is not None:
            cursor += shift
            continue
        ev = vocab.note_event(token_id)
        if ev is None:
            continue
        inst, pitch, is_on = ev
        key = (inst, pitch)
        if is_on:
            open_notes.setdefault(key, []).append(cursor)
            order.append(key)
        else:
            stack = open_notes.get(key)
            if not stack:
                orphans += 1
                continue
            close(inst, pitch, stack.pop(0), cursor)

    unclosed = 0
    for inst, pitch in order:
        stack = open_notes.get((inst, pitch))
        if stack:
            unclosed += 1
            close(inst, pitch, stack.pop(0), cursor)
    if stats is not None:
        stats["orphan_note_offs"] = orphans
        stats["unclosed_notes"] = unclosed
    if orphans:
        warnings.warn(f"{orphans} orphan NOTE_OFF token(s) ignored", stacklevel=2)
    return FiveTrackNotes(tuple(notes))


def transpose(ids, semitones: int, vocab: Vocabulary = VOCAB) -> list[int]:
    """Shift all non-drum note pitches; drop on/off pairs leaving 21..108."""
    if abs(semitones) > 3:
        raise ValueError("transposition outside [-3, 3]")
    out = []
    for token_id in ids:
        ev = vocab.note_event(token_id)
        if ev is None:
            out.append(token_id)
            continue
        inst, pitch, is_on = ev
        if inst == "drums":
            out.append(token_id)
            continue
        pitch += semitones
        if PITCH_MIN <= pitch <= PITCH_MAX:
            out.append(vocab.note_on(inst, pitch) if is_on else vocab.note_off(inst, pitch))
        # else: dropped; the matching on/off shifts identically, so pairs
        # always leave together and no orphan can appear
    return out


def implied_duration_ms(ids, vocab: Vocabulary = VOCAB) -> int:
    return sum(vocab.shift_value(t) or 0 for t in ids)


def token_times_ms(ids, vocab: Vocabulary = VOCAB) -> list[int]:
    """Per-token implied time: the cursor after processing each token.

    TIME_SHIFT tokens include their own shift, matching the inference cursor.
    """
    out = []
    cursor = 0
    for token_id in ids:
        cursor += vocab.shift_value(token_id) or 0
        out.append(cursor)
    return out


def pad_is_suffix(ids, vocab: Vocabulary = VOCAB) -> bool:
    seen_pad = False
    for token_id in ids:
        if token_id == vocab.pad:
            seen_pad = True
        elif seen_pad:
            return False
    return True


def seq_to_text(ids, vocab: Vocabulary = VOCAB) -> str:
    """One token mnemonic per line; round-trips bit-exactly via text_to_seq."""
    return "\n".join(vocab.name(t) for t in ids) + ("\n" if len(ids) else "")


def text_to_seq(text: str, vocab: Vocabulary = VOCAB) -> list[int]:
    return [vocab.id(line.strip()) for line in text.splitlines() if line.strip()]
