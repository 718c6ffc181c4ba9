"""Standard MIDI File parsing and writing over five instrument classes.

Reads SMF format 0 and 1, writes format 0.  Every melodic channel is folded
into one of four GM program families (piano, guitar, bass, strings); channel
10 is always drums.  Times are converted to absolute seconds at parse time,
so downstream code never sees ticks or tempo changes.
"""

from __future__ import annotations

import struct
import warnings
from collections import deque
from dataclasses import dataclass, field

from .errors import MalformedHeader, TruncatedTrack

INSTRUMENTS = ("bass", "drums", "guitar", "piano", "strings")

DRUM_CHANNEL = 9  # zero-based channel 10
DEFAULT_RESOLUTION = 480
DEFAULT_TEMPO_US = 500_000  # microseconds per beat == 120 BPM
DEFAULT_TICK_SCALE = DEFAULT_TEMPO_US / 1e6 / DEFAULT_RESOLUTION

# Channel/program assignment used when writing.  Programs are chosen inside
# the family ranges below so that written files parse back to the same class.
_WRITE_CHANNEL = {"piano": 0, "guitar": 1, "bass": 2, "strings": 3, "drums": DRUM_CHANNEL}
_WRITE_PROGRAM = {"piano": 0, "guitar": 24, "bass": 32, "strings": 48, "drums": 0}


def program_to_instrument(program: int) -> str:
    """GM program number -> instrument class (drums are decided by channel)."""
    if 0 <= program <= 7 or 16 <= program <= 23:
        return "piano"
    if 24 <= program <= 31:
        return "guitar"
    if 32 <= program <= 39:
        return "bass"
    return "strings"


def _note_sort_key(note: "Note"):
    return (note.onset_s, note.instrument, note.pitch, note.offset_s, note.velocity)


@dataclass(frozen=True)
class Note:
    """One note with absolute times in seconds."""

    onset_s: float
    offset_s: float
    pitch: int
    velocity: int
    instrument: str

    def __post_init__(self):
        if self.instrument not in INSTRUMENTS:
            raise ValueError(f"unknown instrument {self.instrument!r}")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0..127")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")
        if self.onset_s < 0:
            raise ValueError("negative onset")
        if self.offset_s <= self.onset_s:
            raise ValueError("offset must be greater than onset")

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


@dataclass(frozen=True)
class FiveTrackNotes:
    """Pure note content, canonically sorted by (onset, instrument, pitch)."""

    notes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(sorted(self.notes, key=_note_sort_key)))

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    @property
    def has_drums(self) -> bool:
        return any(n.instrument == "drums" for n in self.notes)

    @property
    def instruments_present(self) -> frozenset:
        return frozenset(n.instrument for n in self.notes)


@dataclass(frozen=True)
class NoteList:
    """FiveTrackNotes plus the tick metadata of the file they came from.

    has_drums is recomputed from the notes so it can never disagree with them.
    """

    notes: tuple = ()
    tick_scale: float = DEFAULT_TICK_SCALE  # seconds per tick
    resolution: int = DEFAULT_RESOLUTION    # ticks per beat
    has_drums: bool = field(default=False)

    def __post_init__(self):
        if self.tick_scale <= 0:
            raise ValueError("tick_scale must be positive")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        ordered = tuple(sorted(self.notes, key=_note_sort_key))
        object.__setattr__(self, "notes", ordered)
        object.__setattr__(self, "has_drums", any(n.instrument == "drums" for n in ordered))

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    @property
    def beat_s(self) -> float:
        return self.tick_scale * self.resolution

    def five_track(self) -> FiveTrackNotes:
        return FiveTrackNotes(self.notes)


# ---------------------------------------------------------------------------
# parsing


def _read_varlen(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise TruncatedTrack("variable-length quantity runs past track end")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise TruncatedTrack("variable-length quantity longer than 4 bytes")


def _data_byte(data: bytes, pos: int) -> tuple[int, int]:
    if pos >= len(data):
        raise TruncatedTrack("event data runs past track end")
    byte = data[pos]
    if byte & 0x80:
        raise TruncatedTrack(f"expected data byte, got 0x{byte:02x}")
    return byte, pos + 1


class _TrackEvents:
    """Raw per-track event lists with absolute ticks."""

    def __init__(self):
        self.notes = []     # (tick, channel, pitch, velocity, is_on)
        self.programs = []  # (tick, channel, program)
        self.tempos = []    # (tick, us_per_beat)
        self.end_tick = 0


def _parse_track(data: bytes) -> _TrackEvents:
    ev = _TrackEvents()
    pos = 0
    tick = 0
    status = None
    while pos < len(data):
        delta, pos = _read_varlen(data, pos)
        tick += delta
        if pos >= len(data):
            raise TruncatedTrack("event missing after delta time")
        byte = data[pos]
        if byte & 0x80:
            pos += 1
            if byte < 0xF0:
                status = byte
        else:
            if status is None or status >= 0xF0:
                raise TruncatedTrack("running status without prior channel status")
            byte = status

        if byte == 0xFF:  # meta event
            if pos >= len(data):
                raise TruncatedTrack("meta event missing type byte")
            meta_type = data[pos]
            pos += 1
            length, pos = _read_varlen(data, pos)
            if pos + length > len(data):
                raise TruncatedTrack("meta event runs past track end")
            payload = data[pos:pos + length]
            pos += length
            if meta_type == 0x51:
                if length != 3:
                    raise TruncatedTrack("set-tempo meta event must carry 3 bytes")
                ev.tempos.append((tick, int.from_bytes(payload, "big")))
            elif meta_type == 0x2F:
                ev.end_tick = max(ev.end_tick, tick)
                break
        elif byte in (0xF0, 0xF7):  # sysex: skip payload
            length, pos = _read_varlen(data, pos)
            if pos + length > len(data):
                raise TruncatedTrack("sysex event runs past track end")
            pos += length
        elif 0x80 <= byte < 0xF0:
            kind = byte & 0xF0
            channel = byte & 0x0F
            if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
                a, pos = _data_byte(data, pos)
                b, pos = _data_byte(data, pos)
                if kind == 0x90:
                    ev.notes.append((tick, channel, a, b, b > 0))
                elif kind == 0x80:
                    ev.notes.append((tick, channel, a, b, False))
            elif kind in (0xC0, 0xD0):
                a, pos = _data_byte(data, pos)
                if kind == 0xC0:
                    ev.programs.append((tick, channel, a))
        else:
            raise TruncatedTrack(f"unexpected status byte 0x{byte:02x}")
        ev.end_tick = max(ev.end_tick, tick)
    return ev


def _tick_to_seconds_fn(tempos: list, resolution: int):
    """Piecewise-linear tick->seconds using the file's tempo map.

    Segments before the first tempo event run at the SMF default of 120 BPM.
    """
    segments = []  # (start_tick, start_s, seconds_per_tick)
    current_us = DEFAULT_TEMPO_US
    start_tick, start_s = 0, 0.0
    for tick, us in sorted(tempos):
        if tick > start_tick:
            start_s += (tick - start_tick) * current_us / 1e6 / resolution
            start_tick = tick
        current_us = us
        segments.append((start_tick, start_s, current_us / 1e6 / resolution))
    if not segments or segments[0][0] > 0:
        segments.insert(0, (0, 0.0, DEFAULT_TEMPO_US / 1e6 / resolution))

    def convert(tick: int) -> float:
        seg = segments[0]
        for candidate in segments:
            if candidate[0] <= tick:
                seg = candidate
            else:
                break
        t0, s0, scale = seg
        return s0 + (tick - t0) * scale

    return convert


def parse_midi(data: bytes) -> NoteList:
    """Parse an SMF byte stream into a NoteList.

    Raises MalformedHeader for header problems and TruncatedTrack for corrupt
    track chunks.  Dangling note-ons are closed at track end with a warning.
    """
    if len(data) < 4 or data[:4] != b"MThd":
        raise MalformedHeader("missing MThd chunk")
    if len(data) < 14:
        raise MalformedHeader("truncated MThd chunk")
    length, fmt, ntrks, division = struct.unpack(">IHHH", data[4:14])
    if length < 6:
        raise MalformedHeader(f"MThd length {length} < 6")
    if fmt not in (0, 1):
        raise MalformedHeader(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise MalformedHeader("SMPTE time division is not supported")
    if division == 0:
        raise MalformedHeader("zero ticks-per-beat division")
    resolution = division

    pos = 14 + (length - 6)  # tolerate oversized headers
    tracks = []
    for _ in range(ntrks):
        if pos + 8 > len(data):
            raise TruncatedTrack("expected MTrk chunk")
        if data[pos:pos + 4] != b"MTrk":
            raise TruncatedTrack("chunk is not MTrk")
        (track_len,) = struct.unpack(">I", data[pos + 4:pos + 8])
        pos += 8
        if pos + track_len > len(data):
            raise TruncatedTrack("MTrk length runs past end of file")
        tracks.append(_parse_track(data[pos:pos + track_len]))
        pos += track_len

    tempos = [t for tr in tracks for t in tr.tempos]
    distinct_tempi = sorted({us for _, us in tempos})
    if len(distinct_tempi) > 1:
        warnings.warn("multiple tempo events; tick_scale uses the first tempo", stacklevel=2)
    if tempos:
        first_us = min(tempos)[1]
    else:
        first_us = DEFAULT_TEMPO_US
    tick_scale = first_us / 1e6 / resolution
    to_seconds = _tick_to_seconds_fn(tempos, resolution)

    # Merge all tracks; program changes apply before note events at the same
    # tick so an instrument switch takes effect for simultaneous note-ons.
    merged = []
    for track_idx, tr in enumerate(tracks):
        for seq, (tick, channel, program) in enumerate(tr.programs):
            merged.append((tick, 0, track_idx, seq, ("program", channel, program)))
        for seq, (tick, channel, pitch, velocity, is_on) in enumerate(tr.notes):
            order = 2 if is_on else 1  # note-offs before note-ons at equal ticks
            merged.append((tick, order, track_idx, seq, ("note", channel, pitch, velocity, is_on)))
    merged.sort(key=lambda item: item[:4])

    channel_program = {}
    open_notes: dict = {}
    notes = []
    dangling = 0

    def close(key, onset_tick, velocity, instrument, off_tick):
        onset = to_seconds(onset_tick)
        offset = to_seconds(off_tick)
        if offset <= onset:
            offset = onset + tick_scale  # zero-length notes get one tick
        notes.append(Note(onset, offset, key[1], velocity, instrument))

    for tick, _order, _tidx, _seq, payload in merged:
        if payload[0] == "program":
            _, channel, program = payload
            channel_program[channel] = program
            continue
        _, channel, pitch, velocity, is_on = payload
        key = (channel, pitch)
        if is_on:
            if channel == DRUM_CHANNEL:
                instrument = "drums"
            else:
                instrument = program_to_instrument(channel_program.get(channel, 0))
            open_notes.setdefault(key, deque()).append((tick, velocity, instrument))
        else:
            stack = open_notes.get(key)
            if not stack:
                continue  # orphan note-off: ignore
            onset_tick, vel, instrument = stack.popleft()
            close(key, onset_tick, vel, instrument, tick)

    end_tick = max((tr.end_tick for tr in tracks), default=0)
    for key, stack in open_notes.items():
        for onset_tick, vel, instrument in stack:
            dangling += 1
            close(key, onset_tick, vel, instrument, max(end_tick, onset_tick))
    if dangling:
        warnings.warn(f"{dangling} dangling note-on(s) closed at track end", stacklevel=2)

    return NoteList(tuple(notes), tick_scale=tick_scale, resolution=resolution)


# ---------------------------------------------------------------------------
# writing


def _encode_varlen(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative delta time")
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def write_midi(nl: NoteList) -> bytes:
    """Serialize a NoteList as a format-0 SMF byte stream.

    Times are rounded to the nearest tick; notes that would collapse to zero
    length are stretched to one tick so they survive a round trip.
    """
    tempo_us = round(nl.tick_scale * nl.resolution * 1e6)
    if not 1 <= tempo_us <= 0xFFFFFF:
        raise ValueError("tick_scale * resolution outside the SMF tempo range")

    events = [(0, 0, 0, 0, b"\xff\x51\x03" + tempo_us.to_bytes(3, "big"))]
    for instrument in sorted({n.instrument for n in nl.notes}):
        channel = _WRITE_CHANNEL[instrument]
        program = _WRITE_PROGRAM[instrument]
        events.append((0, 1, channel, 0, bytes([0xC0 | channel, program])))
    for note in nl.notes:
        channel = _WRITE_CHANNEL[note.instrument]
        on_tick = round(note.onset_s / nl.tick_scale)
        off_tick = round(note.offset_s / nl.tick_scale)
        if off_tick <= on_tick:
            off_tick = on_tick + 1
        events.append((on_tick, 3, channel, note.pitch,
                       bytes([0x90 | channel, note.pitch, note.velocity])))
        events.append((off_tick, 2, channel, note.pitch,
                       bytes([0x80 | channel, note.pitch, 0])))
    events.sort(key=lambda item: item[:4])

    body = bytearray()
    cursor = 0
    for tick, _order, _channel, _pitch, payload in events:
        body += _encode_varlen(tick - cursor)
        body += payload
        cursor = tick
    body += b"\x00\xff\x2f\x00"  # end of track

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, nl.resolution)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
