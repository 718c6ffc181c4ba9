"""Minimal RIFF/WAV I/O plus peak normalization and fade-out.

Supports 16-bit PCM and 32-bit float, mono or stereo.  Samples are handled
as float64 in [-1, 1] internally; the original sample format is preserved on
write.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import UnsupportedFormat

_PCM16 = "pcm16"
_FLOAT32 = "float32"


@dataclass(frozen=True)
class WavData:
    sample_rate: int
    sample_format: str           # "pcm16" or "float32"
    samples: np.ndarray          # float64, shape (frames, channels)

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def frames(self) -> int:
        return self.samples.shape[0]


def read_wav(data: bytes) -> WavData:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormat("not a RIFF/WAVE stream")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if size < 16:
                raise UnsupportedFormat("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise UnsupportedFormat("missing fmt or data chunk")
    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels unsupported")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
        sample_format = _PCM16
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        sample_format = _FLOAT32
    else:
        raise UnsupportedFormat(f"format {audio_format}/{bits}-bit unsupported")
    frames = len(samples) // channels
    samples = samples[:frames * channels].reshape(frames, channels)
    return WavData(sample_rate, sample_format, samples)


def write_wav(w: WavData) -> bytes:
    if w.sample_format == _PCM16:
        scaled = np.clip(np.round(w.samples * 32768.0), -32768, 32767)
        payload = scaled.astype("<i2").tobytes()
        audio_format, bits = 1, 16
    elif w.sample_format == _FLOAT32:
        payload = w.samples.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    else:
        raise UnsupportedFormat(f"unknown sample format {w.sample_format!r}")
    block_align = w.channels * bits // 8
    fmt = struct.pack("<HHIIHH", audio_format, w.channels, w.sample_rate,
                      w.sample_rate * block_align, block_align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def normalize_peak(w: WavData, peak_db: float = -3.0) -> WavData:
    """Scale so the peak sits at peak_db dBFS (capped at 0 dBFS); silence passes."""
    peak = float(np.max(np.abs(w.samples))) if w.frames else 0.0
    if peak == 0.0:
        return w
    target = min(10.0 ** (peak_db / 20.0), 1.0)
    return replace(w, samples=w.samples * (target / peak))


def fade_out(w: WavData, fade_s: float = 3.0) -> WavData:
    """Linear ramp over the final fade_s seconds: gain 1 at the ramp start,
    exactly 0 at the final sample."""
    if fade_s < 0:
        raise ValueError("fade_s must be non-negative")
    n = w.frames
    ramp_len = min(n, round(fade_s * w.sample_rate))
    if ramp_len == 0:
        return w
    samples = w.samples.copy()
    if ramp_len == 1:
        samples[-1] = 0.0
    else:
        gain = np.arange(ramp_len - 1, -1, -1, dtype=np.float64) / (ramp_len - 1)
        samples[n - ramp_len:] *= gain[:, None]
    return replace(w, samples=samples)


def postprocess(w: WavData, fade_s: float = 3.0, peak_db: float = -3.0) -> WavData:
    return fade_out(normalize_peak(w, peak_db), fade_s)


def postprocess_wav_bytes(data: bytes, fade_s: float = 3.0, peak_db: float = -3.0) -> bytes:
    return write_wav(postprocess(read_wav(data), fade_s, peak_db))
