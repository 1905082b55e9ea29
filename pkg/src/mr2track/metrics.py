"""Detection metrics at IoU 0.5: per-class AP (all-point), P/R/F1, mAP50."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import iou
from .io import GroundTruthStream
from .tracker import Emission, FrameResult

# (score, is_tp, order_key). order_key = (sequence_id, frame, rank in frame)
# breaks score ties by input order and makes ledger merges commutative.
Entry = tuple[float, bool, tuple]


@dataclass
class MatchLedger:
    entries: dict[int, list[Entry]] = field(default_factory=dict)
    gt_counts: dict[int, int] = field(default_factory=dict)

    def merge(self, other: MatchLedger) -> MatchLedger:
        out = MatchLedger()
        for led in (self, other):
            for c, es in led.entries.items():
                out.entries.setdefault(c, []).extend(es)
            for c, n in led.gt_counts.items():
                out.gt_counts[c] = out.gt_counts.get(c, 0) + n
        for es in out.entries.values():
            es.sort(key=_rank_key)
        return out

    def tp_count(self, cls: int) -> int:
        return sum(1 for _, tp, _ in self.entries.get(cls, ()) if tp)

    def classes(self) -> list[int]:
        return sorted(set(self.entries) | set(self.gt_counts))


def _rank_key(e: Entry) -> tuple:
    return (-e[0], e[2])


def match_predictions(
    preds: Sequence[FrameResult] | Sequence[Sequence[Emission]],
    gt: GroundTruthStream,
    iou_thr: float = 0.5,
    sequence_id: str | None = None,
) -> MatchLedger:
    """Greedy per-frame, per-class matching by descending score.

    Each prediction takes the still-unmatched ground truth of the same class
    with the highest IoU, provided it reaches ``iou_thr``.
    """
    if len(preds) != gt.frame_count:
        raise ValueError(f"prediction stream has {len(preds)} frames, ground truth {gt.frame_count}")
    seq = gt.sequence_id if sequence_id is None else sequence_id
    led = MatchLedger()
    for f, (frame_preds, frame_gt) in enumerate(zip(preds, gt.frames)):
        if isinstance(frame_preds, FrameResult):
            if frame_preds.frame_index != f:
                raise ValueError(f"prediction frame {frame_preds.frame_index} at position {f}")
            frame_preds = frame_preds.emitted
        for g in frame_gt:
            led.gt_counts[g.cls] = led.gt_counts.get(g.cls, 0) + 1
        order = sorted(range(len(frame_preds)), key=lambda k: (-frame_preds[k].conf, k))
        taken = [False] * len(frame_gt)
        for k in order:
            p = frame_preds[k]
            best, best_iou = -1, iou_thr
            for gi, g in enumerate(frame_gt):
                if taken[gi] or g.cls != p.cls:
                    continue
                v = iou(p.bbox, g.bbox)
                if v >= best_iou and (best < 0 or v > best_iou):
                    best, best_iou = gi, v
            if best >= 0:
                taken[best] = True
            led.entries.setdefault(p.cls, []).append((p.conf, best >= 0, (seq, f, k)))
    for es in led.entries.values():
        es.sort(key=_rank_key)
    return led


def average_precision(entries: Iterable[Entry], n_gt: int) -> float:
    """Area under the precision envelope (all-point interpolation)."""
    if n_gt <= 0:
        raise ValueError("AP is undefined without ground truth")
    ranked = sorted(entries, key=_rank_key)
    tp = 0
    recalls, precisions = [], []
    for k, (_, is_tp, _) in enumerate(ranked, start=1):
        tp += is_tp
        recalls.append(tp / n_gt)
        precisions.append(tp / k)
    # Envelope: best precision at any recall >= r.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap, prev_r = 0.0, 0.0
    for r, p in zip(recalls, precisions):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return ap


@dataclass(frozen=True)
class ClassMetrics:
    ap: float
    precision: float
    recall: float
    f1: float
    n_gt: int
    n_pred: int
    tp: int


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class SequenceMetrics:
    per_class: dict[int, ClassMetrics]
    map50: float
    precision: float
    recall: float
    # Harmonic mean of the macro precision and recall.
    f1: float

    def as_dict(self, class_names: Sequence[str] = ()) -> dict:
        def name(c: int) -> str:
            return class_names[c] if c < len(class_names) else str(c)

        return {
            "mAP50": self.map50,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": {
                name(c): {
                    "class_id": c,
                    "ap": m.ap,
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "n_gt": m.n_gt,
                    "n_pred": m.n_pred,
                    "tp": m.tp,
                }
                for c, m in sorted(self.per_class.items())
            },
        }


def summarize(ledger: MatchLedger, operating_threshold: float = 0.0) -> SequenceMetrics:
    per_class = {}
    for c in ledger.classes():
        n_gt = ledger.gt_counts.get(c, 0)
        entries = ledger.entries.get(c, [])
        kept = [e for e in entries if e[0] >= operating_threshold]
        tp = sum(1 for e in kept if e[1])
        precision = tp / len(kept) if kept else 0.0
        recall = tp / n_gt if n_gt else 0.0
        ap = average_precision(entries, n_gt) if n_gt else 0.0
        per_class[c] = ClassMetrics(ap, precision, recall, f1_score(precision, recall), n_gt, len(kept), tp)
    scored = [m for m in per_class.values() if m.n_gt > 0]
    if not scored:
        return SequenceMetrics(per_class, 0.0, 0.0, 0.0, 0.0)
    k = len(scored)
    p = sum(m.precision for m in scored) / k
    r = sum(m.recall for m in scored) / k
    return SequenceMetrics(per_class, sum(m.ap for m in scored) / k, p, r, f1_score(p, r))


def evaluate(
    runs: Iterable[tuple[Sequence[FrameResult], GroundTruthStream]],
    operating_threshold: float = 0.0,
    iou_thr: float = 0.5,
) -> SequenceMetrics:
    """Match every (predictions, ground truth) pair and pool into one summary."""
    led = MatchLedger()
    for preds, gt in runs:
        led = led.merge(match_predictions(preds, gt, iou_thr))
    return summarize(led, operating_threshold)


__all__ = [
    "ClassMetrics",
    "MatchLedger",
    "SequenceMetrics",
    "average_precision",
    "evaluate",
    "f1_score",
    "match_predictions",
    "summarize",
]
