import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from cuemidi.midi_io import INSTRUMENTS, FiveTrackNotes, Note
from cuemidi.tokenizer import (VOCAB, decode, encode, implied_duration_ms,
                               pad_is_suffix, quantize_ms, seq_to_text,
                               text_to_seq, token_times_ms, transpose)

from .strategies import grid_notes


class TestVocabulary:
    def test_size_enumeration(self):
        # 5 instruments x 88 pitches x {on, off} + 125 shifts + 6 structural
        assert VOCAB.size == 5 * 88 * 2 + 125 + 6 == 1011

    def test_ids_dense_and_bijective(self):
        seen = set()
        for i in range(VOCAB.size):
            name = VOCAB.name(i)
            assert VOCAB.id(name) == i
            seen.add(name)
        assert len(seen) == VOCAB.size

    def test_token_name_format(self):
        assert VOCAB.name(VOCAB.note_on("piano", 60)) == "PIANO_ON_60"
        assert VOCAB.name(VOCAB.note_off("guitar", 21)) == "GUITAR_OFF_21"
        assert VOCAB.name(VOCAB.shift(640)) == "TIME_SHIFT<640>"

    def test_classifiers(self):
        assert VOCAB.shift_value(VOCAB.shift(8)) == 8
        assert VOCAB.shift_value(VOCAB.shift(1000)) == 1000
        assert VOCAB.shift_value(VOCAB.start) is None
        assert VOCAB.note_event(VOCAB.note_on("bass", 40)) == ("bass", 40, True)
        assert VOCAB.note_event(VOCAB.note_off("drums", 36)) == ("drums", 36, False)
        assert VOCAB.note_event(VOCAB.chord) is None

    def test_pitch_and_shift_bounds(self):
        with pytest.raises(ValueError):
            VOCAB.note_on("piano", 20)
        with pytest.raises(ValueError):
            VOCAB.note_on("piano", 109)
        with pytest.raises(ValueError):
            VOCAB.shift(4)
        with pytest.raises(ValueError):
            VOCAB.shift(1008)
        with pytest.raises(ValueError):
            VOCAB.shift(10)  # not a multiple of 8


class TestQuantize:
    def test_grid_and_ties(self):
        assert quantize_ms(0.0) == 0
        assert quantize_ms(0.640) == 640
        assert quantize_ms(0.003) == 0     # below half step
        assert quantize_ms(0.004) == 8     # tie rounds up (away from zero)
        assert quantize_ms(0.500) == 504   # 500/8 = 62.5 -> 63
        assert quantize_ms(2.500) == 2504  # 2500/8 = 312.5 -> 313


class TestEncode:
    def test_empty(self):
        assert encode(FiveTrackNotes()) == [VOCAB.fewer_instruments]

    def test_event_walkthrough(self):
        # piano C4 lasting 640 ms, a 24 ms silence, then a bass note
        notes = FiveTrackNotes((
            Note(0.0, 0.640, 60, 64, "piano"),
            Note(0.664, 0.800, 53, 64, "bass"),
        ))
        ids = encode(notes)
        expected_prefix = [
            VOCAB.fewer_instruments,
            VOCAB.note_on("piano", 60),
            VOCAB.shift(640),
            VOCAB.note_off("piano", 60),
            VOCAB.shift(24),
            VOCAB.note_on("bass", 53),
        ]
        assert ids[:len(expected_prefix)] == expected_prefix

    def test_long_gap_becomes_maximal_shift_run(self):
        # 2.5 s gap between the piano onset (0.5 s, a tie that rounds up to
        # 504 ms) and its offset at 3.0 s: 3000 - 504 = 2496 ms
        notes = FiveTrackNotes((
            Note(0.5, 3.0, 60, 64, "piano"),
            Note(3.0, 3.5, 53, 64, "bass"),
        ))
        ids = encode(notes)
        assert ids == [
            VOCAB.fewer_instruments,
            VOCAB.shift(504),
            VOCAB.note_on("piano", 60),
            VOCAB.shift(1000),
            VOCAB.shift(1000),
            VOCAB.shift(496),
            VOCAB.note_off("piano", 60),
            VOCAB.note_on("bass", 53),
            VOCAB.shift(504),
            VOCAB.note_off("bass", 53),
        ]

    def test_gap_from_zero_ties_up(self):
        notes = FiveTrackNotes((Note(0.0, 2.5, 60, 64, "piano"),))
        ids = encode(notes)
        shifts = [VOCAB.shift_value(t) for t in ids if VOCAB.shift_value(t)]
        assert shifts == [1000, 1000, 504]

    def test_instrument_count_prefix(self):
        two = FiveTrackNotes((Note(0.0, 0.1, 60, 64, "piano"),
                              Note(0.0, 0.1, 40, 64, "bass")))
        three = FiveTrackNotes(two.notes + (Note(0.0, 0.1, 50, 64, "guitar"),))
        assert encode(two)[0] == VOCAB.fewer_instruments
        assert encode(three)[0] == VOCAB.more_instruments

    def test_out_of_range_pitches_dropped(self):
        notes = FiveTrackNotes((Note(0.0, 0.1, 20, 64, "piano"),
                                Note(0.0, 0.1, 109, 64, "piano")))
        assert encode(notes) == [VOCAB.fewer_instruments]

    def test_simultaneous_off_before_on(self):
        notes = FiveTrackNotes((Note(0.0, 0.5, 60, 64, "piano"),
                                Note(0.5, 1.0, 60, 64, "piano")))
        ids = encode(notes)
        middle = ids.index(VOCAB.shift(504)) + 1
        assert ids[middle] == VOCAB.note_off("piano", 60)
        assert ids[middle + 1] == VOCAB.note_on("piano", 60)

    def test_bar_emission_with_beat(self):
        notes = FiveTrackNotes((Note(0.0, 4.0, 60, 64, "piano"),))
        ids = encode(notes, beat_s=0.5)  # bars every 2 s: 0, 2, 4
        assert ids.count(VOCAB.bar) == 3
        # BAR tokens decode as no-ops
        assert decode(ids) == decode(encode(notes))


class TestDecode:
    def test_simple_note(self):
        ids = [VOCAB.fewer_instruments, VOCAB.note_on("piano", 60),
               VOCAB.shift(96), VOCAB.note_off("piano", 60)]
        notes = decode(ids)
        assert notes.notes == (Note(0.0, 0.096, 60, 64, "piano"),)

    def test_close_at_end(self):
        ids = [VOCAB.note_on("piano", 60), VOCAB.shift(496), VOCAB.shift(8)]
        stats = {}
        notes = decode(ids, stats=stats)
        assert notes.notes == (Note(0.0, 0.504, 60, 64, "piano"),)
        assert stats["unclosed_notes"] == 1

    def test_orphan_note_off_counted(self):
        ids = [VOCAB.note_off("piano", 60), VOCAB.note_on("piano", 62),
               VOCAB.shift(8), VOCAB.note_off("piano", 62)]
        stats = {}
        with pytest.warns(UserWarning, match="orphan"):
            notes = decode(ids, stats=stats)
        assert stats["orphan_note_offs"] == 1
        assert len(notes) == 1

    def test_structural_tokens_produce_no_notes(self):
        ids = [VOCAB.start, VOCAB.bar, VOCAB.chord, VOCAB.more_instruments,
               VOCAB.pad]
        assert len(decode(ids)) == 0

    def test_default_velocity_applied(self):
        ids = [VOCAB.note_on("piano", 60), VOCAB.shift(8),
               VOCAB.note_off("piano", 60)]
        assert decode(ids, default_velocity=99).notes[0].velocity == 99

    @settings(max_examples=150, deadline=None)
    @given(grid_notes())
    def test_round_trip(self, notes):
        assert decode(encode(notes)) == notes

    @settings(max_examples=100, deadline=None)
    @given(grid_notes())
    def test_duration_preservation(self, notes):
        ids = encode(notes)
        implied = implied_duration_ms(ids)
        if len(notes) == 0:
            assert implied == 0
        else:
            last = max(quantize_ms(n.offset_s) for n in notes)
            assert implied == last
            span_ms = (max(n.offset_s for n in notes) - min(n.onset_s for n in notes)) * 1000
            first = min(quantize_ms(n.onset_s) for n in notes)
            assert abs((implied - first) - span_ms) <= 4.0

    def test_token_times_convention(self):
        # a TIME_SHIFT token's implied time includes its own shift
        ids = [VOCAB.start, VOCAB.shift(104), VOCAB.note_on("piano", 60),
               VOCAB.shift(48), VOCAB.shift(48)]
        assert token_times_ms(ids) == [0, 104, 104, 152, 200]


class TestTranspose:
    def test_identity(self):
        ids = encode(FiveTrackNotes((Note(0.0, 0.1, 60, 64, "piano"),)))
        assert transpose(ids, 0) == ids

    def test_shift_up(self):
        assert transpose([VOCAB.note_on("piano", 60)], 3) == [VOCAB.note_on("piano", 63)]

    def test_drums_unchanged(self):
        assert transpose([VOCAB.note_on("drums", 36)], 3) == [VOCAB.note_on("drums", 36)]

    def test_out_of_range_amount(self):
        with pytest.raises(ValueError):
            transpose([], 4)

    def test_pairs_dropped_together(self):
        ids = [VOCAB.note_on("piano", 107), VOCAB.shift(8),
               VOCAB.note_off("piano", 107)]
        out = transpose(ids, 3)
        assert out == [VOCAB.shift(8)]

    @settings(max_examples=80, deadline=None)
    @given(grid_notes(max_notes=20), st.integers(-3, 3))
    def test_invertible_when_nothing_dropped(self, notes, k):
        ids = encode(notes)
        up = transpose(ids, k)
        if len(up) == len(ids):  # nothing fell off the pitch range
            assert transpose(up, -k) == ids

    def test_drums_survive_when_melodics_drop(self):
        ids = [VOCAB.note_on("drums", 108), VOCAB.note_on("piano", 108)]
        assert transpose(ids, 2) == [VOCAB.note_on("drums", 108)]


class TestTextDump:
    def test_round_trip_bit_exact(self):
        notes = FiveTrackNotes((Note(0.0, 0.640, 60, 64, "piano"),
                                Note(0.664, 0.8, 53, 99, "bass")))
        ids = encode(notes)
        assert text_to_seq(seq_to_text(ids)) == ids

    def test_mnemonics(self):
        text = seq_to_text([VOCAB.fewer_instruments, VOCAB.note_on("piano", 60),
                            VOCAB.shift(640)])
        assert text.splitlines() == ["FEWER_INSTRUMENTS", "PIANO_ON_60",
                                     "TIME_SHIFT<640>"]

    def test_empty(self):
        assert seq_to_text([]) == ""
        assert text_to_seq("") == []


class TestPadSuffix:
    def test_pad_suffix_checks(self):
        assert pad_is_suffix([VOCAB.start, VOCAB.pad, VOCAB.pad])
        assert pad_is_suffix([VOCAB.start])
        assert pad_is_suffix([])
        assert not pad_is_suffix([VOCAB.pad, VOCAB.start])
