"""Command-line interface.

Subcommands: generate (the full pipeline), train-toy (toy checkpoint),
tokenize (MIDI <-> token text), features (dataset record JSON), gradcheck
(finite-difference gradient verification).

Exit codes: 0 ok, 2 input error, 3 model error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import InputError, ModelError

CHECKPOINT_DIR_ENV = "CUEMIDI_CHECKPOINT_DIR"


def _resolve_checkpoint(path: str) -> str:
    if os.path.exists(path):
        return path
    env_dir = os.environ.get(CHECKPOINT_DIR_ENV)
    if env_dir and not os.path.isabs(path):
        candidate = os.path.join(env_dir, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _cmd_generate(args) -> int:
    from .pipeline import PipelineConfig, config_from_mapping, parse_config_file, run_pipeline

    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from exc
        values.update(parse_config_file(text))
    if args.r is not None:
        values["r"] = args.r
    if args.synth_cmd is not None:
        values["synth_cmd"] = args.synth_cmd
    cfg = config_from_mapping(values, PipelineConfig())
    checkpoint = args.checkpoint or cfg.checkpoint
    if checkpoint is None:
        raise InputError("--checkpoint is required (or set it in the config file)")
    cfg = config_from_mapping({"checkpoint": _resolve_checkpoint(checkpoint)}, cfg)

    _, report = run_pipeline(cfg, args.emotions, args.scenes, args.duration,
                             args.out, valence=args.valence, arousal=args.arousal,
                             seed=args.seed)
    for line in report.summary_lines():
        print(line)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
    return 0


def _cmd_train_toy(args) -> int:
    from .model import ModelConfig, save_checkpoint
    from .training import joy_condition, loop_corpus, make_batch, toy_corpus, train_toy

    cfg = ModelConfig(variant=args.variant, boundary_conditioning=args.boundary,
                      seed=args.seed)
    if args.corpus == "loop":
        ids = loop_corpus()
        batch = make_batch(ids, cfg, condition=joy_condition(),
                           boundaries=(4.8, 11.2) if cfg.boundary_conditioning else None)
    else:
        batch = make_batch(toy_corpus(), cfg)
    model, losses = train_toy(cfg, batch, steps=args.steps, lr=args.lr)
    save_checkpoint(args.out, model)
    print(f"trained {args.steps} steps; final loss {losses[-1]:.4f}")
    print(f"checkpoint: {args.out}")
    return 0


def _cmd_tokenize(args) -> int:
    from .midi_io import NoteList, parse_midi, write_midi
    from .tokenizer import decode, encode, seq_to_text, text_to_seq

    if (args.midi is None) == (args.tokens is None):
        raise InputError("pass exactly one of --midi (encode) or --tokens (decode)")
    if args.midi:
        try:
            data = Path(args.midi).read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read MIDI: {exc}") from exc
        ids = encode(parse_midi(data).five_track())
        Path(args.out).write_text(seq_to_text(ids))
        print(f"{len(ids)} tokens -> {args.out}")
    else:
        try:
            text = Path(args.tokens).read_text()
        except OSError as exc:
            raise InputError(f"cannot read tokens: {exc}") from exc
        try:
            ids = text_to_seq(text)
        except KeyError as exc:
            raise InputError(f"unknown token mnemonic {exc}") from exc
        notes = decode(ids, args.velocity)
        Path(args.out).write_bytes(write_midi(NoteList(notes.notes, tick_scale=0.008,
                                                       resolution=125)))
        print(f"{len(notes)} notes -> {args.out}")
    return 0


def _cmd_features(args) -> int:
    from .features import build_record
    from .midi_io import parse_midi

    try:
        data = Path(args.midi).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read MIDI: {exc}") from exc
    nl = parse_midi(data)
    matched = None
    if args.valence01 is not None:
        matched = {"spotify_audio_features": {"valence": args.valence01}}
    record = build_record(args.id or Path(args.midi).stem, nl, matched)
    output = record.to_json()
    if args.out:
        Path(args.out).write_text(output + "\n")
    print(output)
    return 0


def _cmd_gradcheck(args) -> int:
    from .model import ModelConfig, gradient_check
    from .training import gradcheck_batch, train_toy

    cfg = ModelConfig(variant=args.variant, boundary_conditioning=args.boundary,
                      seed=args.seed)
    batch = gradcheck_batch(cfg, length=args.length)
    model, _ = train_toy(cfg, batch, steps=args.warmup_steps, lr=1e-3)
    error = gradient_check(model, batch, epsilon=args.epsilon,
                           min_samples=args.samples)
    print(f"max relative gradient error: {error:.3e}")
    if error > args.threshold:
        raise ModelError(f"gradient error {error:.3e} exceeds {args.threshold:.1e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cuemidi",
                                     description="Emotion- and boundary-conditioned MIDI generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run the full generation pipeline")
    p.add_argument("--emotions", help="six 'label value' lines")
    p.add_argument("--scenes", help="scene cut file (timestamps, or fps header + diffs)")
    p.add_argument("--duration", type=float, required=True, help="target seconds")
    p.add_argument("--checkpoint", help=f"checkpoint path (searched in ${CHECKPOINT_DIR_ENV})")
    p.add_argument("--out", required=True, help="output MIDI path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--valence", type=float, default=None, help="override in [-1, 1]")
    p.add_argument("--arousal", type=float, default=None, help="override in [-1, 1]")
    p.add_argument("--synth-cmd", default=None,
                   help="external synthesizer template with {midi} and {wav}")
    p.add_argument("--r", type=float, default=None, help="emotion rescale target")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--report", help="also write the report as JSON here")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train-toy", help="train a toy checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="continuous_token",
                   choices=("vanilla", "discrete_token", "continuous_token", "continuous_concat"))
    p.add_argument("--boundary", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--corpus", choices=("loop", "random"), default="loop")
    p.add_argument("--steps", type=int, default=900)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("tokenize", help="convert MIDI to token text or back")
    p.add_argument("--midi", help="input MIDI to encode")
    p.add_argument("--tokens", help="input token text to decode")
    p.add_argument("--out", required=True)
    p.add_argument("--velocity", type=int, default=64, help="decode velocity")
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("features", help="print a dataset record for a MIDI file")
    p.add_argument("--midi", required=True)
    p.add_argument("--id", default=None)
    p.add_argument("--valence01", type=float, default=None,
                   help="matched audio valence in [0, 1]")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--variant", default="continuous_token",
                   choices=("vanilla", "discrete_token", "continuous_token", "continuous_concat"))
    p.add_argument("--boundary", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--length", type=int, default=48)
    p.add_argument("--warmup-steps", type=int, default=3)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
