"""End-to-end orchestration: emotion and scene-cut inputs -> conditioned MIDI.

The flow mirrors the generation system this package implements: a discrete
emotion distribution is mapped to a valence-arousal pair (rescaled mixture
mean), scene cuts are thinned to a minimum gap and handed to the sampler as
boundaries, the generated tokens are decoded, chord notes are emphasized, and
the result is written as a MIDI file.  Audio synthesis is an optional
external subprocess followed by peak normalization and fade-out.
"""

from __future__ import annotations

import dataclasses
import json
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from . import audio
from .boundaries import boost_chord_velocities, filter_min_gap, validate_boundaries
from .emotion import (RAW_TABLE, EmotionCondition, mixture_mean, parse_probs_file,
                      rescale_table)
from .errors import BadSeries, InputError
from .midi_io import NoteList, write_midi
from .model import load_checkpoint
from .sampling import GenerationRequest, SamplingParams, generate
from .tokenizer import decode

# Tick grid for written files: 8 ms per tick keeps note times exactly on the
# token grid (125 ticks per beat at 60 BPM).
_OUT_RESOLUTION = 125
_OUT_TICK_SCALE = 0.008


@dataclass(frozen=True)
class SceneCutSeries:
    """Either explicit cut timestamps or a per-frame difference series."""

    timestamps: tuple | None = None
    differences: tuple | None = None
    fps: float | None = None

    def __post_init__(self):
        if (self.timestamps is None) == (self.differences is None):
            raise ValueError("exactly one of timestamps/differences must be given")
        if self.differences is not None and (self.fps is None or self.fps <= 0):
            raise ValueError("difference series needs a positive frame rate")


def parse_scene_file(text: str) -> SceneCutSeries:
    """Scene file: one seconds value per line, or an "fps N" header followed
    by one normalized frame-difference value per line."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    try:
        if lines and lines[0].lower().startswith("fps"):
            fps = float(lines[0].split()[1])
            values = tuple(float(ln) for ln in lines[1:])
            return SceneCutSeries(differences=values, fps=fps)
        return SceneCutSeries(timestamps=tuple(float(ln) for ln in lines))
    except (ValueError, IndexError) as exc:
        raise InputError(f"bad scene file: {exc}") from exc


def cuts_from_series(values, fps: float, threshold: float = 0.27) -> list[float]:
    """Frame index / fps for every difference strictly above the threshold."""
    if fps <= 0:
        raise BadSeries("frame rate must be positive")
    values = [float(v) for v in values]
    if any(v < 0.0 or v > 1.0 for v in values):
        raise BadSeries("difference values must lie in [0, 1]")
    return [i / fps for i, v in enumerate(values) if v > threshold]


def scene_boundaries(series: SceneCutSeries, threshold: float, min_gap_s: float) -> tuple:
    if series.timestamps is not None:
        try:
            cuts = list(validate_boundaries(series.timestamps))
        except ValueError as exc:
            raise InputError(f"bad scene timestamps: {exc}") from exc
    else:
        cuts = cuts_from_series(series.differences, series.fps, threshold)
    return tuple(filter_min_gap(cuts, min_gap_s))


@dataclass(frozen=True)
class PipelineConfig:
    threshold: float = 0.27
    min_gap_s: float = 4.0
    r: float = 0.8
    sensitivity_s: float = 1.0
    max_offset_s: float | None = None  # None: use the checkpoint's value
    sampling: SamplingParams = field(default_factory=SamplingParams)
    checkpoint: str | None = None
    fade_out_s: float = 3.0
    peak_norm_db: float = -3.0
    synth_cmd: str | None = None       # template with {midi} and {wav}
    default_velocity: int = 64
    chord_velocity_boost: int = 24

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold outside (0, 1)")
        if self.fade_out_s < 0:
            raise ValueError("fade_out_s must be non-negative")


# Plain "key = value" config files; unknown keys are rejected.
_CONFIG_FLOAT_KEYS = {"threshold", "min_gap_s", "r", "sensitivity_s", "max_offset_s",
                      "fade_out_s", "peak_norm_db", "nucleus_p", "temperature",
                      "temperature_bump"}
_CONFIG_INT_KEYS = {"default_velocity", "chord_velocity_boost", "min_nucleus_size",
                    "context_window", "seed"}
_CONFIG_STR_KEYS = {"checkpoint", "synth_cmd"}


def parse_config_file(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _CONFIG_FLOAT_KEYS:
            out[key] = float(value)
        elif key in _CONFIG_INT_KEYS:
            out[key] = int(value)
        elif key in _CONFIG_STR_KEYS:
            out[key] = value
        else:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
    return out


def config_from_mapping(values: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    sampling_fields = {f.name for f in dataclasses.fields(SamplingParams)}
    sampling_kv = {k: v for k, v in values.items() if k in sampling_fields}
    config_kv = {k: v for k, v in values.items() if k not in sampling_fields}
    sampling = dataclasses.replace(base.sampling, **sampling_kv)
    return dataclasses.replace(base, sampling=sampling, **config_kv)


@dataclass(frozen=True)
class PipelineReport:
    valence: float | None
    arousal: float | None
    input_boundaries: tuple
    consumed_boundaries: tuple
    token_count: int
    duration_s: float
    chord_times_s: tuple
    orphan_note_offs: int
    unclosed_notes: int
    midi_path: str
    wav_path: str | None = None

    @property
    def n_input_boundaries(self) -> int:
        return len(self.input_boundaries)

    @property
    def n_consumed_boundaries(self) -> int:
        return len(self.consumed_boundaries)

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["n_input_boundaries"] = self.n_input_boundaries
        d["n_consumed_boundaries"] = self.n_consumed_boundaries
        return json.dumps(d, indent=2)

    def summary_lines(self) -> list[str]:
        fmt = lambda v: "absent" if v is None else f"{v:+.4f}"
        lines = [
            f"condition: valence {fmt(self.valence)}, arousal {fmt(self.arousal)}",
            f"boundaries: {self.n_input_boundaries} in, {self.n_consumed_boundaries} consumed",
            f"tokens: {self.token_count}, duration {self.duration_s:.3f} s",
            f"chords: {len(self.chord_times_s)}",
            f"midi: {self.midi_path}",
        ]
        if self.wav_path:
            lines.append(f"wav: {self.wav_path}")
        return lines


def _read_text(path, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {what}: {exc}") from exc


def resolve_condition(cfg: PipelineConfig, emotions_path=None,
                      valence: float | None = None,
                      arousal: float | None = None) -> EmotionCondition:
    """Direct value overrides win; otherwise map the probability file."""
    if valence is not None or arousal is not None:
        try:
            return EmotionCondition(valence, arousal)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    if emotions_path is None:
        return EmotionCondition()
    probs = parse_probs_file(_read_text(emotions_path, "emotion file"))
    return mixture_mean(probs, rescale_table(RAW_TABLE, cfg.r))


def run_pipeline(cfg: PipelineConfig, emotions_path, scenes_path, duration_s: float,
                 out_midi, valence: float | None = None, arousal: float | None = None,
                 seed: int | None = None):
    """Returns (midi path, PipelineReport).  Raises InputError/ModelError."""
    if duration_s is None or duration_s <= 0:
        raise InputError("duration must be positive")
    if cfg.checkpoint is None:
        raise InputError("no checkpoint configured")

    condition = resolve_condition(cfg, emotions_path, valence, arousal)
    boundaries = ()
    if scenes_path is not None:
        series = parse_scene_file(_read_text(scenes_path, "scene file"))
        boundaries = scene_boundaries(series, cfg.threshold, cfg.min_gap_s)

    model = load_checkpoint(cfg.checkpoint)
    params = cfg.sampling if seed is None else dataclasses.replace(cfg.sampling, seed=seed)
    request = GenerationRequest(duration_s=duration_s, boundaries=boundaries,
                                condition=condition, params=params)
    ids, _offsets, gen_report = generate(model, request,
                                         sensitivity_s=cfg.sensitivity_s,
                                         max_offset_s=cfg.max_offset_s)

    stats: dict = {}
    notes = decode(ids, cfg.default_velocity, stats=stats)
    notes = boost_chord_velocities(notes, gen_report.chord_times_s,
                                   cfg.chord_velocity_boost)
    note_list = NoteList(notes.notes, tick_scale=_OUT_TICK_SCALE,
                         resolution=_OUT_RESOLUTION)
    out_midi = Path(out_midi)
    try:
        out_midi.write_bytes(write_midi(note_list))
    except OSError as exc:
        raise InputError(f"cannot write MIDI: {exc}") from exc

    wav_path = None
    if cfg.synth_cmd:
        wav_path = str(out_midi.with_suffix(".wav"))
        _synthesize(cfg, str(out_midi), wav_path)

    report = PipelineReport(
        valence=condition.valence,
        arousal=condition.arousal,
        input_boundaries=boundaries,
        consumed_boundaries=gen_report.boundaries_consumed,
        token_count=gen_report.token_count,
        duration_s=gen_report.final_cursor_s,
        chord_times_s=gen_report.chord_times_s,
        orphan_note_offs=stats.get("orphan_note_offs", 0),
        unclosed_notes=stats.get("unclosed_notes", 0),
        midi_path=str(out_midi),
        wav_path=wav_path,
    )
    return out_midi, report


def _synthesize(cfg: PipelineConfig, midi_path: str, wav_path: str) -> None:
    command = [part.format(midi=midi_path, wav=wav_path)
               for part in shlex.split(cfg.synth_cmd)]
    try:
        subprocess.run(command, check=True, capture_output=True)
    except (OSError, subprocess.CalledProcessError) as exc:
        raise InputError(f"synthesizer command failed: {exc}") from exc
    try:
        data = Path(wav_path).read_bytes()
    except OSError as exc:
        raise InputError(f"synthesizer produced no WAV: {exc}") from exc
    processed = audio.postprocess_wav_bytes(data, cfg.fade_out_s, cfg.peak_norm_db)
    Path(wav_path).write_bytes(processed)
