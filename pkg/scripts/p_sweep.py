#!/usr/bin/env python3
"""mAP / MAC trade-off over P on the standard synthetic corpus.

Writes sweep.csv and plot_data.csv to --out and prints the comparison table.
Example: python scripts/p_sweep.py --model yolox-nano --max-p 10 --out runs/sweep
"""

import argparse
from pathlib import Path

from mr2track.pipeline import RunConfig, plot_table, run_sweep, sweep_csv
from mr2track.sched import MODEL_PRESETS
from mr2track.synth import CORPUS_SEED, generate_synthetic, standard_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="nanodet-plus", choices=sorted(MODEL_PRESETS))
    ap.add_argument("--max-p", type=int, default=10)
    ap.add_argument("--sequences", type=int, default=20)
    ap.add_argument("--seed", type=int, default=CORPUS_SEED)
    ap.add_argument("--out", default="runs/p_sweep")
    args = ap.parse_args()

    data = [generate_synthetic(s) for s in standard_corpus(n_sequences=args.sequences, seed=args.seed)]
    rows = run_sweep(RunConfig(model=args.model, workers=4), range(args.max_p + 1), data)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(rows))
    (out / "plot_data.csv").write_text(plot_table(rows))

    by_p: dict[int, dict] = {}
    for r in rows:
        by_p.setdefault(r.p, {})[r.mode.value] = r
    print(f"{'P':>3} {'mMAC':>8} {'mAP mr2':>9} {'mAP base':>9} {'delta':>7}")
    for p, m in sorted(by_p.items()):
        print(f"{p:>3} {m['mr2'].mmac:>8.2f} {m['mr2'].map50:>9.4f} {m['baseline'].map50:>9.4f} "
              f"{m['mr2'].map50 - m['baseline'].map50:>+7.4f}")
    print(f"wrote {out / 'sweep.csv'} and {out / 'plot_data.csv'}")


if __name__ == "__main__":
    main()
