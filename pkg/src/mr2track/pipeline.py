"""Schedule -> tier selection -> tracker -> evaluator, per sequence and per dataset."""

from __future__ import annotations

import csv
import enum
import io as _stdio
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from .core import TrackerConfig
from .io import DetectionStream, GroundTruthStream, Manifest, read_detection_stream, read_ground_truth, read_manifest
from .metrics import MatchLedger, SequenceMetrics, match_predictions, summarize
from .sched import MODEL_PRESETS, ScheduleConfig, avg_mac_per_frame, tier_for_frame
from .tracker import THRESHOLD_PRESETS, ByteTracker, Emission, FrameResult


class Mode(str, enum.Enum):
    BASELINE = "baseline"
    NAIVE = "naive"
    MR2 = "mr2"


class ConfigError(ValueError):
    pass


class MissingTierError(RuntimeError):
    def __init__(self, sequence_id: str, frame_index: int, tier: str):
        self.frame_index = frame_index
        self.tier = tier
        super().__init__(f"sequence {sequence_id!r}: frame {frame_index} has no {tier!r} detections in the stream")


@dataclass(frozen=True)
class RunConfig:
    manifest: str = ""
    mode: Mode = Mode.MR2
    model: str = "nanodet-plus"
    p: int = 0
    # Unset thresholds fall back to the model's preset.
    tracker: dict[str, Any] = field(default_factory=dict)
    output_dir: str = "runs/out"
    seed: int = 0
    # P/R/F1 are computed over emitted predictions scoring at least this.
    score_threshold: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.model not in MODEL_PRESETS:
            raise ConfigError(f"unknown model preset {self.model!r}; choose from {sorted(MODEL_PRESETS)}")
        if not isinstance(self.p, int) or isinstance(self.p, bool) or self.p < 0:
            raise ConfigError("p must be a non-negative integer")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigError("score_threshold must lie in [0, 1]")
        self.tracker_config()

    @property
    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig.from_preset(self.model, self.p)

    def tracker_config(self) -> TrackerConfig:
        known = {f.name for f in fields(TrackerConfig)}
        unknown = set(self.tracker) - known
        if unknown:
            raise ConfigError(f"unknown tracker keys {sorted(unknown)}")
        high, low = THRESHOLD_PRESETS[self.model]
        kw = {"high_threshold": high, "low_threshold": low, **self.tracker}
        if self.mode is Mode.NAIVE:
            kw["rescore"] = False
        try:
            return TrackerConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid tracker settings: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["tracker"] = dict(sorted(self.tracker.items()))
        return d

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        doc = dict(doc)
        if "mode" in doc:
            try:
                doc["mode"] = Mode(doc["mode"])
            except ValueError:
                raise ConfigError(f"mode must be one of {[m.value for m in Mode]}") from None
        if "tracker" in doc and not isinstance(doc["tracker"], dict):
            raise ConfigError("tracker must be an object")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, overrides: Sequence[str]) -> RunConfig:
        """Apply ``key=value`` strings; ``tracker.<field>=v`` sets a tracker field."""
        doc = self.to_dict()
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep or not key:
                raise ConfigError(f"override {item!r} is not key=value")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            if key.startswith("tracker."):
                doc["tracker"][key[len("tracker."):]] = value
            elif key in doc:
                doc[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return RunConfig.from_dict(doc)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    cfg = RunConfig.from_dict(doc)
    if cfg.manifest and not Path(cfg.manifest).is_absolute():
        cfg = replace(cfg, manifest=str(path.parent / cfg.manifest))
    return cfg


def run_sequence(cfg: RunConfig, seq: DetectionStream) -> list[FrameResult]:
    sched = cfg.schedule
    tcfg = cfg.tracker_config()
    tracker = ByteTracker(tcfg) if cfg.mode is not Mode.BASELINE else None
    out = []
    for f in range(seq.frame_count):
        tier = tier_for_frame(sched, f).name
        if not seq.covers(f, tier):
            raise MissingTierError(seq.sequence_id, f, tier.value)
        dets = seq.detections(f, tier)
        if tracker is None:
            # Strict, like the tracker's spawn rule, so the degenerate tracker
            # reproduces this path exactly.
            emitted = tuple(
                Emission(0, d.bbox, d.cls, d.conf) for d in dets if d.conf > tcfg.high_threshold
            )
            out.append(FrameResult(f, emitted))
        else:
            out.append(tracker.step(f, dets))
    return out


@dataclass
class SequenceRun:
    sequence_id: str
    results: list[FrameResult]
    ledger: MatchLedger | None


def run_dataset(
    cfg: RunConfig,
    sequences: Sequence[tuple[DetectionStream, GroundTruthStream | None]],
) -> tuple[list[SequenceRun], SequenceMetrics | None]:
    """Run every sequence (optionally in threads) and pool metrics in id order."""

    def one(pair: tuple[DetectionStream, GroundTruthStream | None]) -> SequenceRun:
        det, gt = pair
        results = run_sequence(cfg, det)
        led = match_predictions(results, gt) if gt is not None else None
        return SequenceRun(det.sequence_id, results, led)

    ordered = sorted(sequences, key=lambda p: p[0].sequence_id)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            runs = list(ex.map(one, ordered))
    else:
        runs = [one(p) for p in ordered]
    ledgers = [r.ledger for r in runs if r.ledger is not None]
    if not ledgers:
        return runs, None
    pooled = MatchLedger()
    for led in ledgers:
        pooled = pooled.merge(led)
    return runs, summarize(pooled, cfg.score_threshold)


def load_dataset(manifest: Manifest) -> list[tuple[DetectionStream, GroundTruthStream | None]]:
    out = []
    for entry in manifest.sequences:
        det = read_detection_stream(entry.detections)
        gt = read_ground_truth(entry.groundtruth) if entry.groundtruth is not None else None
        out.append((det, gt))
    return out


def load_manifest_dataset(cfg: RunConfig) -> tuple[Manifest, list[tuple[DetectionStream, GroundTruthStream | None]]]:
    if not cfg.manifest:
        raise ConfigError("config does not name a dataset manifest")
    m = read_manifest(cfg.manifest)
    return m, load_dataset(m)


SWEEP_MODES = (Mode.MR2, Mode.BASELINE)
SWEEP_COLUMNS = ("P", "mode", "mMAC", "mAP", "precision", "recall", "F1", "lowres_fraction")


@dataclass(frozen=True)
class SweepRow:
    p: int
    mode: Mode
    mmac: float
    map50: float
    precision: float
    recall: float
    f1: float
    lowres_fraction: float


def run_sweep(
    cfg: RunConfig,
    p_values: Sequence[int],
    sequences: Sequence[tuple[DetectionStream, GroundTruthStream]],
    modes: Sequence[Mode] = SWEEP_MODES,
    progress: Callable[[int, Mode], None] | None = None,
) -> list[SweepRow]:
    if any(gt is None for _, gt in sequences):
        raise ConfigError("a sweep needs ground truth for every sequence")
    rows = []
    n_frames = sum(d.frame_count for d, _ in sequences)
    for p in p_values:
        for mode in modes:
            if progress is not None:
                progress(p, mode)
            run_cfg = replace(cfg, p=p, mode=mode)
            _, m = run_dataset(run_cfg, sequences)
            assert m is not None
            sched = run_cfg.schedule
            low = sum(
                1 for d, _ in sequences for f in range(d.frame_count) if tier_for_frame(sched, f) is sched.low
            )
            rows.append(
                SweepRow(
                    p, mode, avg_mac_per_frame(sched), m.map50, m.precision, m.recall, m.f1,
                    low / n_frames if n_frames else 0.0,
                )
            )
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([
            r.p, r.mode.value, f"{r.mmac:.2f}", f"{r.map50:.6f}", f"{r.precision:.6f}",
            f"{r.recall:.6f}", f"{r.f1:.6f}", f"{r.lowres_fraction:.6f}",
        ])
    return buf.getvalue()


def plot_table(rows: Sequence[SweepRow]) -> str:
    """One line per P: MAC bar plus one mAP bar per mode (GMAC units)."""
    modes = sorted({r.mode for r in rows}, key=lambda m: SWEEP_MODES.index(m) if m in SWEEP_MODES else 9)
    by_p: dict[int, dict[Mode, SweepRow]] = {}
    for r in rows:
        by_p.setdefault(r.p, {})[r.mode] = r
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["P", "GMAC", *[f"mAP_{m.value}" for m in modes]])
    for p in sorted(by_p):
        any_row = next(iter(by_p[p].values()))
        w.writerow([p, f"{any_row.mmac / 1000:.4f}", *[
            f"{by_p[p][m].map50:.6f}" if m in by_p[p] else "" for m in modes
        ]])
    return buf.getvalue()
