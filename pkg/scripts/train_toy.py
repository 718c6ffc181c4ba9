#!/usr/bin/env python3
"""Train a toy checkpoint that the generation pipeline can drive.

The default settings memorize a strict 1.6-second chord loop with the demo
emotion condition and scene-style boundary offsets, which makes boundary
consumption observable on any scene list with gaps >= 4 s.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cuemidi.model import ModelConfig, save_checkpoint
from cuemidi.training import (joy_condition, loop_corpus, make_batch, toy_corpus,
                              train_toy)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="toy.ckpt")
    parser.add_argument("--variant", default="continuous_token",
                        choices=("vanilla", "discrete_token", "continuous_token",
                                 "continuous_concat"))
    parser.add_argument("--boundary", action=argparse.BooleanOptionalAction,
                        default=True)
    parser.add_argument("--corpus", choices=("loop", "random"), default="loop")
    parser.add_argument("--steps", type=int, default=900)
    parser.add_argument("--lr", type=float, default=3e-3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = ModelConfig(variant=args.variant, boundary_conditioning=args.boundary,
                      seed=args.seed)
    if args.corpus == "loop":
        ids = loop_corpus()
        batch = make_batch(ids, cfg, condition=joy_condition(),
                           boundaries=(4.8, 11.2) if args.boundary else None)
    else:
        batch = make_batch(toy_corpus(), cfg)
    model, losses = train_toy(cfg, batch, steps=args.steps, lr=args.lr)
    save_checkpoint(args.out, model)
    print(f"variant={args.variant} boundary={args.boundary} corpus={args.corpus}")
    print(f"loss: {losses[0]:.4f} -> {losses[-1]:.4f} over {args.steps} steps")
    print(f"checkpoint written to {args.out}")


if __name__ == "__main__":
    main()
