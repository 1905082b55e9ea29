#!/usr/bin/env python3
"""Baseline vs tracker without rescoring vs full tracker, at full resolution.

Runs the three modes on the standard corpus for each model preset's
thresholds and prints mAP / P / R / F1 per mode.
"""

import argparse

from mr2track.pipeline import Mode, RunConfig, run_dataset
from mr2track.tracker import THRESHOLD_PRESETS
from mr2track.synth import CORPUS_SEED, generate_synthetic, standard_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sequences", type=int, default=20)
    ap.add_argument("--seed", type=int, default=CORPUS_SEED)
    ap.add_argument("--p", type=int, default=0)
    args = ap.parse_args()

    data = [generate_synthetic(s) for s in standard_corpus(n_sequences=args.sequences, seed=args.seed)]
    print(f"{'model':<16}{'mode':<10}{'mAP':>8}{'P':>8}{'R':>8}{'F1':>8}")
    for model in THRESHOLD_PRESETS:
        base = None
        for mode in (Mode.BASELINE, Mode.NAIVE, Mode.MR2):
            _, m = run_dataset(RunConfig(mode=mode, model=model, p=args.p, workers=4), data)
            base = m.map50 if base is None else base
            print(f"{model:<16}{mode.value:<10}{m.map50:>8.4f}{m.precision:>8.4f}{m.recall:>8.4f}{m.f1:>8.4f}"
                  f"  ({m.map50 - base:+.4f})")


if __name__ == "__main__":
    main()
