import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mr2track.core import BBox, Detection, TrackerConfig
from mr2track.kalman import kf_initiate
from mr2track.tracker import THRESHOLD_PRESETS, ByteTracker, Track, TrackStatus, preset_config, rescore

BOX = BBox(0.3, 0.3, 0.5, 0.5)


def _track(cls=0, conf_agg=0.5, conf=0.5):
    return Track(1, kf_initiate(BOX), cls, conf, conf_agg, conf_sum=conf, conf_count=1)


def _det(cls, conf, box=BOX, frame=0):
    return Detection(box, cls, conf, frame)


@pytest.mark.parametrize(
    "track_cls, agg, det_cls, ci, eps, want_cls, want_agg",
    [
        (0, 0.5, 0, 0.5, 0.01, 0, 0.75),
        (0, 0.8, 1, 0.5, 0.01, 0, 1 - 0.2 / 0.5),
        (0, 0.4, 1, 0.6, 0.01, 1, 0.6),
        (0, 0.6, 1, 0.55, 0.01, 1, 0.55),
        (0, 0.99, 0, 0.9, 0.01, 0, 0.99),
    ],
)
def test_rescore_examples(track_cls, agg, det_cls, ci, eps, want_cls, want_agg):
    t = rescore(_track(track_cls, agg), _det(det_cls, ci), eps)
    assert t.cls == want_cls
    assert t.conf_agg == pytest.approx(want_agg, abs=1e-12)
    assert t.conf_count == 2 and t.conf_sum == pytest.approx(0.5 + ci)


def test_rescore_replacement_adopts_detection_conf():
    t = rescore(_track(0, 0.6, conf=0.7), _det(1, 0.55), 0.01)
    assert (t.cls, t.conf, t.conf_agg) == (1, 0.55, 0.55)


def test_rescore_decay_floor_is_zero():
    # conf_agg 0.5 vs ci 0.5: 1 - 0.5/0.5 = 0 -> replaced since 0 < 0.5.
    t = rescore(_track(0, 0.5), _det(1, 0.5), 0.01)
    assert t.conf_agg == 0.5 and t.cls == 1
    t = rescore(_track(0, 0.9), _det(1, 0.0), 0.01)
    assert t.conf_agg == pytest.approx(0.9) and t.cls == 0


def test_rescore_zero_conf_same_class_is_noop():
    t = rescore(_track(0, 0.37), _det(0, 0.0), 0.01)
    assert t.conf_agg == pytest.approx(0.37, abs=1e-15)


confs = st.floats(0.0, 0.999)


@given(st.floats(0.0, 0.99), st.lists(st.tuples(st.integers(0, 3), confs), max_size=30))
def test_conf_agg_in_bounds(agg0, seq):
    t = _track(0, agg0)
    for c, ci in seq:
        rescore(t, _det(c, ci), 0.01)
        assert 0.0 <= t.conf_agg <= 0.99
    assert t.conf_count == 1 + len(seq)


@given(st.floats(0.0, 0.99), st.lists(confs, max_size=30))
def test_same_class_never_decreases(agg0, seq):
    t = _track(2, agg0)
    prev = t.conf_agg
    for ci in seq:
        rescore(t, _det(2, ci), 0.01)
        assert t.conf_agg >= prev - 1e-15
        prev = t.conf_agg


def test_presets():
    assert THRESHOLD_PRESETS == {
        "nanodet-plus": (0.35, 0.30),
        "yolox-nano": (0.30, 0.25),
        "efficientdet-d0": (0.40, 0.35),
    }
    cfg = preset_config("yolox-nano")
    assert (cfg.high_threshold, cfg.low_threshold) == (0.30, 0.25)
    assert (cfg.iou_match_threshold, cfg.activation_hits, cfg.max_coast_frames) == (0.3, 2, 5)


def _run(tracker, frames):
    return [tracker.step(f, dets) for f, dets in enumerate(frames)]


def test_empty_tracker():
    tr = ByteTracker(TrackerConfig())
    r = tr.step(0, [])
    assert r.emitted == () and tr.tracks == []


def test_activation_after_two_hits():
    tr = ByteTracker(TrackerConfig(low_threshold=0.3, high_threshold=0.5))
    res = _run(tr, [[_det(0, 0.9, frame=f)] for f in range(3)])
    assert res[0].emitted == ()
    ids = {e.track_id for r in res[1:] for e in r.emitted}
    assert len(ids) == 1
    for r in res[1:]:
        (e,) = r.emitted
        np.testing.assert_allclose(e.bbox.as_tuple(), BOX.as_tuple(), atol=1e-3)


def test_flicker_low_scores_keep_track():
    cfg = TrackerConfig(low_threshold=0.3, high_threshold=0.5)
    tr = ByteTracker(cfg)
    confs = [0.9, 0.9, 0.32, 0.32, 0.32]
    res = _run(tr, [[_det(0, c, frame=f)] for f, c in enumerate(confs)])
    emitted = [len(r.emitted) for r in res]
    naive = [1 if c >= 0.5 else 0 for c in confs]
    assert emitted == [0, 1, 1, 1, 1]
    assert naive == [1, 1, 0, 0, 0]
    assert tr.tracks[0].status is TrackStatus.ACTIVE
    assert res[-1].emitted[0].conf == pytest.approx(sum(confs) / 5)


def test_misclassification_recovered():
    tr = ByteTracker(preset_config("nanodet-plus"))
    frames = [[_det(3, 0.4)]] + [[_det(7, 0.6)] for _ in range(4)]
    res = _run(tr, frames)
    assert [[e.cls for e in r.emitted] for r in res] == [[], [7], [7], [7], [7]]


def test_rescore_disabled_freezes_class():
    tr = ByteTracker(preset_config("nanodet-plus", rescore=False))
    frames = [[_det(3, 0.4)]] + [[_det(7, 0.6)] for _ in range(4)]
    res = _run(tr, frames)
    assert [[e.cls for e in r.emitted] for r in res] == [[], [3], [3], [3], [3]]
    assert tr.tracks[0].conf == 0.4


def test_high_refresh_of_conf():
    tr = ByteTracker(TrackerConfig(low_threshold=0.3, high_threshold=0.5))
    _run(tr, [[_det(0, 0.9)], [_det(0, 0.6)], [_det(0, 0.4)]])
    assert tr.tracks[0].conf == 0.6


def test_tentative_removed_after_one_miss():
    tr = ByteTracker(TrackerConfig(low_threshold=0.3, high_threshold=0.5))
    tr.step(0, [_det(0, 0.9)])
    tr.step(1, [])
    assert tr.tracks == []


def test_active_coasts_then_removed():
    cfg = TrackerConfig(low_threshold=0.3, high_threshold=0.5, max_coast_frames=5)
    tr = ByteTracker(cfg)
    tr.step(0, [_det(0, 0.9)])
    tr.step(1, [_det(0, 0.9)])
    for f in range(2, 7):
        r = tr.step(f, [])
        assert r.emitted == () and len(tr.tracks) == 1
    tr.step(7, [])
    assert tr.tracks == []


def test_coasting_track_reacquired():
    cfg = TrackerConfig(low_threshold=0.3, high_threshold=0.5)
    tr = ByteTracker(cfg)
    tr.step(0, [_det(0, 0.9)])
    tr.step(1, [_det(0, 0.9)])
    tr.step(2, [])
    tr.step(3, [])
    r = tr.step(4, [_det(0, 0.9)])
    assert [e.track_id for e in r.emitted] == [1]


def test_emit_coasting_flag():
    cfg = TrackerConfig(low_threshold=0.3, high_threshold=0.5, emit_coasting=True)
    tr = ByteTracker(cfg)
    tr.step(0, [_det(0, 0.9)])
    tr.step(1, [_det(0, 0.9)])
    assert len(tr.step(2, []).emitted) == 1


def test_low_scores_never_spawn():
    tr = ByteTracker(TrackerConfig(low_threshold=0.3, high_threshold=0.5))
    for f in range(4):
        tr.step(f, [_det(0, 0.45)])
    assert tr.tracks == []


def test_spawn_requires_strictly_above_high():
    tr = ByteTracker(TrackerConfig(low_threshold=0.3, high_threshold=0.5))
    tr.step(0, [_det(0, 0.5)])
    assert tr.tracks == []


def test_non_monotonic_frames_rejected():
    tr = ByteTracker(TrackerConfig())
    tr.step(3, [])
    with pytest.raises(ValueError):
        tr.step(3, [])


def test_degenerate_settings_reproduce_detections():
    cfg = TrackerConfig(low_threshold=0.4, high_threshold=0.4, activation_hits=1, max_coast_frames=0, associate=False)
    rng = np.random.default_rng(0)
    tr = ByteTracker(cfg)
    for f in range(20):
        dets = []
        for _ in range(rng.integers(0, 5)):
            x, y = rng.uniform(0, 0.8, 2)
            conf = 0.4 if rng.random() < 0.2 else float(rng.uniform(0, 0.99))
            dets.append(Detection(BBox(x, y, x + 0.1, y + 0.15), int(rng.integers(0, 3)), conf, f))
        r = tr.step(f, dets)
        want = sorted((round(v, 9) for d in dets if d.conf > 0.4 for v in d.bbox.as_tuple()))
        got = sorted((round(v, 9) for e in r.emitted for v in e.bbox.as_tuple()))
        assert got == want


@st.composite
def detection_sequences(draw):
    n_frames = draw(st.integers(1, 25))
    anchors = [BBox(0.1, 0.1, 0.3, 0.3), BBox(0.5, 0.5, 0.7, 0.8), BBox(0.2, 0.6, 0.4, 0.9)]
    frames = []
    for _ in range(n_frames):
        dets = []
        for a in anchors:
            if draw(st.booleans()):
                dx = draw(st.floats(-0.02, 0.02))
                b = BBox(a.x_min + dx, a.y_min, a.x_max + dx, a.y_max)
                dets.append(Detection(b, draw(st.integers(0, 2)), draw(st.floats(0.0, 0.999))))
        frames.append(dets)
    return frames


@settings(max_examples=60, deadline=None)
@given(detection_sequences())
def test_tracker_invariants(frames):
    cfg = TrackerConfig(low_threshold=0.3, high_threshold=0.5)
    tr = ByteTracker(cfg)
    seen_ids: set[int] = set()
    streak: dict[int, int] = {}
    for f, dets in enumerate(frames):
        r = tr.step(f, dets)
        for t in tr.tracks:
            assert 0.0 <= t.conf_agg <= 1 - cfg.epsilon
            assert t.frames_since_update <= cfg.max_coast_frames
        for e in r.emitted:
            assert 0.0 < e.conf < 1.0
            b = e.bbox
            assert 0 <= b.x_min <= b.x_max <= 1 and 0 <= b.y_min <= b.y_max <= 1
        ids = [e.track_id for e in r.emitted]
        assert len(ids) == len(set(ids))
        new = {t.track_id for t in tr.tracks} - seen_ids
        assert all(i >= (max(seen_ids) if seen_ids else 0) for i in new)
        seen_ids |= {t.track_id for t in tr.tracks}
        for t in tr.tracks:
            streak[t.track_id] = max(streak.get(t.track_id, 0), t.hit_streak)
        for e in r.emitted:
            assert streak[e.track_id] >= cfg.activation_hits


@settings(max_examples=30, deadline=None)
@given(detection_sequences())
def test_tracker_deterministic(frames):
    def run():
        tr = ByteTracker(TrackerConfig(low_threshold=0.3, high_threshold=0.5))
        return [tr.step(f, d) for f, d in enumerate(frames)]

    assert run() == run()
