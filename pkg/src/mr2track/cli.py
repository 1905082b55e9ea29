"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 input-format error,
4 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

from filelock import FileLock, Timeout

from .io import FormatError, read_ground_truth, read_track_output, write_detection_stream, write_ground_truth, write_manifest, write_track_output
from .kalman import FilterDivergence
from .metrics import SequenceMetrics, match_predictions, summarize
from .pipeline import (
    ConfigError,
    MissingTierError,
    Mode,
    RunConfig,
    load_manifest_dataset,
    load_run_config,
    plot_table,
    run_dataset,
    run_sweep,
    sweep_csv,
)
from .sched import ScheduleConfig
from .synth import bundled_scenario, bundled_scenario_path, generate_synthetic, load_scenario, standard_corpus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4

log = logging.getLogger("mr2track")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _resolve(cfg_path: str, mode: str | None, overrides: Sequence[str], output_dir: str | None) -> RunConfig:
    cfg = load_run_config(cfg_path)
    extra = list(overrides)
    if mode is not None:
        extra.append(f"mode={mode}")
    if output_dir is not None:
        extra.append(f"output_dir={output_dir}")
    return cfg.with_overrides(extra) if extra else cfg


def _snapshot(cfg: RunConfig, out: Path, **extra) -> None:
    doc = {"run": cfg.to_dict(), "tracker_resolved": asdict(cfg.tracker_config()), **extra}
    (out / "resolved_config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _locked(out: Path) -> FileLock:
    out.mkdir(parents=True, exist_ok=True)
    return FileLock(str(out / ".lock"), timeout=0)


def _metrics_table(m: SequenceMetrics, classes: Sequence[str]) -> str:
    rows = [f"{'class':<16}{'AP':>8}{'P':>8}{'R':>8}{'F1':>8}{'GT':>7}"]
    for c, cm in sorted(m.per_class.items()):
        name = classes[c] if c < len(classes) else str(c)
        rows.append(f"{name:<16}{cm.ap:>8.3f}{cm.precision:>8.3f}{cm.recall:>8.3f}{cm.f1:>8.3f}{cm.n_gt:>7d}")
    rows.append(f"{'macro':<16}{m.map50:>8.3f}{m.precision:>8.3f}{m.recall:>8.3f}{m.f1:>8.3f}")
    rows.append(f"mAP50 {m.map50:.3f}")
    return "\n".join(rows)


def cmd_track(args: argparse.Namespace) -> int:
    cfg = _resolve(args.config, args.mode, args.set, args.output_dir)
    manifest, data = load_manifest_dataset(cfg)
    out = Path(cfg.output_dir)
    with _locked(out):
        runs, metrics = run_dataset(cfg, data)
        lines = [f"mode={cfg.mode.value} model={cfg.model} p={cfg.p} sequences={len(runs)}"]
        for run in runs:
            path = out / f"{run.sequence_id}.tracks.jsonl"
            write_track_output(run.results, path, run.sequence_id, manifest.classes)
            n = sum(len(r.emitted) for r in run.results)
            lines.append(f"{run.sequence_id}: frames={len(run.results)} emitted={n}")
        if metrics is not None:
            (out / "metrics.json").write_text(
                json.dumps(metrics.as_dict(manifest.classes), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            lines.append(f"mAP50={metrics.map50:.6f} precision={metrics.precision:.6f} "
                         f"recall={metrics.recall:.6f} f1={metrics.f1:.6f}")
        (out / "run.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
        _snapshot(cfg, out)
    for line in lines:
        log.info(line)
    print(f"wrote {len(runs)} track files to {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    pred = read_track_output(args.pred)
    gt = read_ground_truth(args.gt)
    try:
        led = match_predictions(pred.results, gt)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"{args.pred} vs {args.gt}: {exc}") from None
    m = summarize(led, args.threshold)
    classes = gt.classes or pred.classes
    print(_metrics_table(m, classes))
    report = Path(args.out) if args.out else Path(str(args.pred) + ".metrics.json")
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(json.dumps(m.as_dict(classes), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class_id", "class", "AP", "precision", "recall", "F1", "n_gt", "n_pred"])
            for c, cm in sorted(m.per_class.items()):
                name = classes[c] if c < len(classes) else str(c)
                w.writerow([c, name, f"{cm.ap:.6f}", f"{cm.precision:.6f}", f"{cm.recall:.6f}",
                            f"{cm.f1:.6f}", cm.n_gt, cm.n_pred])
    return EXIT_OK


def _parse_p_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"--p expects comma-separated integers, got {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise ConfigError("--p needs at least one non-negative integer")
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve(args.config, None, args.set, args.output_dir)
    p_list = _parse_p_list(args.p)
    _, data = load_manifest_dataset(cfg)
    out = Path(cfg.output_dir)
    with _locked(out):
        rows = run_sweep(cfg, p_list, data, progress=lambda p, m: log.info("P=%d mode=%s", p, m.value))
        (out / "sweep.csv").write_text(sweep_csv(rows), encoding="utf-8")
        (out / "plot_data.csv").write_text(plot_table(rows), encoding="utf-8")
        _snapshot(cfg, out, p_values=p_list)
    print(sweep_csv(rows), end="")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    if args.scenario == "corpus":
        scenarios = standard_corpus(n_sequences=args.sequences, seed=args.seed if args.seed is not None else 20240601)
    else:
        path = Path(args.scenario)
        if not path.exists() and bundled_scenario_path(args.scenario).exists():
            scenarios = [bundled_scenario(args.scenario)]
        else:
            try:
                scenarios = [load_scenario(path)]
            except FileNotFoundError:
                raise CliError(EXIT_CONFIG, f"scenario file not found: {path}") from None
            except (ValueError, KeyError, TypeError) as exc:
                raise CliError(EXIT_CONFIG, f"{path}: invalid scenario: {exc}") from None
        if args.seed is not None:
            scenarios = [replace(s, seed=args.seed) for s in scenarios]
    sched = None
    if args.p is not None:
        sched = ScheduleConfig.from_preset(args.model, args.p)
    with _locked(out):
        entries = []
        for scn in scenarios:
            try:
                det, gt = generate_synthetic(scn, sched)
            except ValueError as exc:
                raise CliError(EXIT_CONFIG, f"scenario {scn.sequence_id!r}: {exc}") from None
            write_detection_stream(det, out / f"{scn.sequence_id}.det.jsonl")
            write_ground_truth(gt, out / f"{scn.sequence_id}.gt.jsonl")
            entries.append((scn.sequence_id, f"{scn.sequence_id}.det.jsonl", f"{scn.sequence_id}.gt.jsonl"))
            n_det = sum(len(f) for f in det.frames)
            n_gt = sum(len(f) for f in gt.frames)
            print(f"{scn.sequence_id}: frames={scn.frame_count} objects={len(scn.objects)} "
                  f"detections={n_det} ground_truth={n_gt} seed={scn.seed}")
        write_manifest(out / "manifest.json", scenarios[0].classes, scenarios[0].tiers, entries)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.sweep_csv)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise CliError(EXIT_INPUT, f"sweep file not found: {path}") from None
    need = {"P", "mode", "mMAC", "mAP"}
    if not rows or not need <= set(rows[0]):
        raise CliError(EXIT_INPUT, f"{path}: not a sweep CSV (needs columns {sorted(need)})")
    by_p: dict[int, dict[str, dict]] = {}
    for r in rows:
        by_p.setdefault(int(r["P"]), {})[r["mode"]] = r
    full_mac = None
    ref_map = None
    if 0 in by_p:
        full_mac = float(next(iter(by_p[0].values()))["mMAC"])
        if "baseline" in by_p[0]:
            ref_map = float(by_p[0]["baseline"]["mAP"])
    lines = ["| P | mMAC | MAC saving | mAP MR2 | mAP baseline | MR2 - baseline | MR2 vs full-res baseline |",
             "|---|---|---|---|---|---|---|"]
    for p in sorted(by_p):
        modes = by_p[p]
        mmac = float(next(iter(modes.values()))["mMAC"])
        mr2 = float(modes["mr2"]["mAP"]) if "mr2" in modes else float("nan")
        base = float(modes["baseline"]["mAP"]) if "baseline" in modes else float("nan")
        save = f"{100 * (1 - mmac / full_mac):.1f}%" if full_mac else "n/a"
        vs_ref = f"{mr2 - ref_map:+.3f}" if ref_map is not None else "n/a"
        lines.append(f"| {p} | {mmac:.2f} | {save} | {mr2:.3f} | {base:.3f} | {mr2 - base:+.3f} | {vs_ref} |")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mr2track", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="run the tracker over a dataset manifest")
    t.add_argument("config")
    t.add_argument("--mode", choices=[m.value for m in Mode])
    t.add_argument("--output-dir")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score a track output file against ground truth")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--threshold", type=float, default=0.0)
    e.add_argument("--out", help="metrics report path (default: <pred>.metrics.json)")
    e.add_argument("--csv", help="optional per-class CSV")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="mAP / MAC trade-off over interleaving factors")
    s.add_argument("config")
    s.add_argument("--p", default="0,1,2,3,4,5,6,7,8,9,10", help="comma-separated P values")
    s.add_argument("--output-dir")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.set_defaults(func=cmd_sweep)

    y = sub.add_parser("synth", help="generate paired detection / ground-truth streams")
    y.add_argument("scenario", help="scenario JSON, a bundled name (flicker), or 'corpus'")
    y.add_argument("out_dir")
    y.add_argument("--seed", type=int)
    y.add_argument("--sequences", type=int, default=20, help="corpus size")
    y.add_argument("--p", type=int, help="emit only the tier scheduled for this P")
    y.add_argument("--model", default="nanodet-plus")
    y.set_defaults(func=cmd_synth)

    r = sub.add_parser("report", help="comparison table from a sweep CSV")
    r.add_argument("sweep_csv")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"input error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except Timeout as exc:
        print(f"runtime error: output directory is locked by another run ({exc.lock_file})", file=sys.stderr)
        return EXIT_RUNTIME
    except (MissingTierError, FilterDivergence, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
