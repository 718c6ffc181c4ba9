"""Low-level MIDI features, label derivation, and dataset records."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import NonPositiveInput, OutOfRange
from .midi_io import INSTRUMENTS, NoteList
from .tokenizer import quantize_ms


@dataclass(frozen=True)
class MidiFeatures:
    note_density: float        # notes per second over the note span
    tempo_bpm: float
    n_instruments: int
    avg_note_density: float    # note_density / n_instruments
    has_drums: bool


def estimate_tempo(tick_scale: float, resolution: int) -> float:
    """BPM from the file metadata: one minute divided by the beat duration."""
    if tick_scale <= 0 or resolution <= 0:
        raise NonPositiveInput("tick_scale and resolution must be positive")
    return 60.0 / (tick_scale * resolution)


def compute_features(nl: NoteList) -> MidiFeatures:
    tempo = estimate_tempo(nl.tick_scale, nl.resolution)
    if not len(nl):
        return MidiFeatures(0.0, tempo, 0, 0.0, False)
    onset = min(n.onset_s for n in nl)
    offset = max(n.offset_s for n in nl)
    span = offset - onset  # robust to leading/trailing silence
    density = len(nl) / span if span > 0 else 0.0
    n_instruments = len({n.instrument for n in nl})
    return MidiFeatures(density, tempo, n_instruments,
                        density / n_instruments, nl.has_drums)


def derive_arousal(f: MidiFeatures, lo: float = 50.0, hi: float = 150.0) -> float | None:
    """Map tempo linearly onto [-1, 1]; needs drums and an in-bounds tempo."""
    if lo >= hi:
        raise ValueError("lo must be less than hi")
    if not f.has_drums or not lo <= f.tempo_bpm <= hi:
        return None
    return 2.0 * (f.tempo_bpm - lo) / (hi - lo) - 1.0


def derive_valence(v01: float) -> float | None:
    """Shift/scale a [0, 1] valence to [-1, 1]; exact 0.0 means "missing"."""
    if not 0.0 <= v01 <= 1.0:
        raise OutOfRange(f"valence {v01} outside [0, 1]")
    if v01 == 0.0:
        return None
    return 2.0 * v01 - 1.0


def content_hash(nl: NoteList) -> str:
    """Digest of the musical content only.

    Canonical form: instruments in alphabetical order; per instrument the
    sorted (onset, offset, pitch) triples on the 8 ms grid.  Velocity and all
    file metadata are excluded, so files that differ only in metadata or
    velocities hash equal.
    """
    h = hashlib.sha256()
    for instrument in INSTRUMENTS:  # already alphabetical
        triples = sorted((quantize_ms(n.onset_s), quantize_ms(n.offset_s), n.pitch)
                         for n in nl if n.instrument == instrument)
        h.update(instrument.encode())
        for onset, offset, pitch in triples:
            h.update(onset.to_bytes(8, "little", signed=False))
            h.update(offset.to_bytes(8, "little", signed=False))
            h.update(pitch.to_bytes(1, "little", signed=False))
    return h.hexdigest()


@dataclass(frozen=True)
class DatasetRecord:
    """One dataset entry in the nested key-value shape used for exchange."""

    record_id: str
    midi_features: MidiFeatures
    matched_features: dict | None = None
    valence: float | None = field(default=None)
    arousal: float | None = field(default=None)

    def to_dict(self) -> dict:
        entry = {
            "midi_features": {
                "note_density": self.midi_features.note_density,
                "tempo": self.midi_features.tempo_bpm,
                "n_instruments": self.midi_features.n_instruments,
            }
        }
        if self.matched_features is not None:
            entry["matched_features"] = self.matched_features
        labels = {}
        if self.valence is not None:
            labels["valence"] = self.valence
        if self.arousal is not None:
            labels["arousal"] = self.arousal
        if labels:
            entry["labels"] = labels
        return {self.record_id: entry}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def build_record(record_id: str, nl: NoteList, matched_features: dict | None = None) -> DatasetRecord:
    """Compute features and derive whatever labels the rules allow.

    Arousal comes from the estimated tempo (drum tracks only); valence from
    the matched audio features when present.
    """
    feats = compute_features(nl)
    arousal = derive_arousal(feats)
    valence = None
    if matched_features:
        v01 = matched_features.get("spotify_audio_features", {}).get("valence")
        if v01 is not None:
            valence = derive_valence(v01)
    return DatasetRecord(record_id, feats, matched_features, valence, arousal)
