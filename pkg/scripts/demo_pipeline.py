#!/usr/bin/env python3
"""End-to-end demo: train a toy checkpoint if needed, fabricate the two input
files (a one-hot joy emotion distribution and three scene cuts), run the full
pipeline for 30 seconds, and print the report."""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cuemidi.model import save_checkpoint
from cuemidi.pipeline import PipelineConfig, run_pipeline
from cuemidi.training import train_pipeline_toy

EMOTIONS_TEXT = "anger 0\ndisgust 0\nfear 0\njoy 1\nsadness 0\nsurprise 0\n"
SCENES_TEXT = "5.0\n12.0\n20.0\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="demo_out")
    parser.add_argument("--duration", type=float, default=30.0)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--synth-cmd", default=None,
                        help="optional synthesizer template with {midi} and {wav}")
    args = parser.parse_args()

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    checkpoint = workdir / "toy.ckpt"
    if not checkpoint.exists():
        print("training toy checkpoint (one-time, ~15 s)...")
        model, losses = train_pipeline_toy()
        save_checkpoint(checkpoint, model)
        print(f"  final training loss {losses[-1]:.4f}")

    emotions = workdir / "emotions.txt"
    emotions.write_text(EMOTIONS_TEXT)
    scenes = workdir / "scenes.txt"
    scenes.write_text(SCENES_TEXT)

    cfg = PipelineConfig(checkpoint=str(checkpoint), synth_cmd=args.synth_cmd)
    out = workdir / "demo.mid"
    _, report = run_pipeline(cfg, emotions, scenes, args.duration, out,
                             seed=args.seed)
    for line in report.summary_lines():
        print(line)
    (workdir / "report.json").write_text(report.to_json() + "\n")
    print(f"report: {workdir / 'report.json'}")


if __name__ == "__main__":
    main()
