import random

import numpy as np
import pytest

from vcsim.core import GeoFrame, GpsFix
from vcsim.extract import (
    ExtractStats,
    MissingFix,
    ModeledTimes,
    WorkerNode,
    extract_faces,
    extract_gps,
    extract_plates,
    find_plate_candidates,
)
from vcsim.synthscene import (
    SceneItem,
    SceneSpec,
    compose_frame,
    render_face_marker,
    render_plate_region,
)

FIX = GpsFix(488_566_000, 23_522_000, 5_000)


def frame_with(items, width=220, height=120, background=64, noise=0.0, seed=0):
    return compose_frame(SceneSpec(items=tuple(items), background=background),
                         FIX, 7, width, height, noise_level=noise, rng_seed=seed)


def test_plate_roundtrip_with_bbox():
    frame = frame_with([SceneItem("plate", "AB123CD", 10, 10, 2)])
    arr = np.frombuffer(frame.pixels, dtype=np.uint8).reshape(120, 220)
    cands = find_plate_candidates(arr)
    assert len(cands) == 1
    assert cands[0].bbox == (10, 10, 94, 26)
    assert cands[0].decoded == "AB123CD"
    assert cands[0].min_template_score_margin >= 4
    dets = extract_plates(frame)
    assert [d.value for d in dets] == ["AB123CD"]
    assert dets[0].fix == FIX
    assert dets[0].source_frame == frame.frame_id
    assert dets[0].crop_blob is not None


def test_uniform_frame_empty():
    frame = compose_frame(SceneSpec(background=64), FIX, 1, 100, 60)
    assert extract_plates(frame) == []
    assert extract_faces(frame) == []


def test_two_disjoint_plates():
    frame = frame_with([
        SceneItem("plate", "AAAAAAA", 5, 5, 1),
        SceneItem("plate", "ZZZZZZZ", 5, 40, 2),
    ])
    dets = extract_plates(frame)
    assert sorted(d.value for d in dets) == ["AAAAAAA", "ZZZZZZZ"]


def test_face_roundtrip():
    frame = frame_with([SceneItem("face", 2749, 30, 20, 2)])
    dets = extract_faces(frame)
    assert [d.value for d in dets] == [2749]
    assert dets[0].kind == "face"
    assert dets[0].fix == FIX


def test_face_flipped_cell_fails_parity():
    patch = render_face_marker(2749, 2)
    # cell (0,0) spans an 8x8 block at offset (4,4) at scale 2; invert it
    block = patch[4:12, 4:12]
    patch[4:12, 4:12] = np.where(block > 0, 0, 255)
    frame_arr = np.full((80, 80), 64, dtype=np.uint8)
    frame_arr[10:50, 10:50] = patch
    frame = GeoFrame(vehicle_id=1, fix=FIX, width=80, height=80,
                     pixels=frame_arr.tobytes())
    stats = ExtractStats()
    assert extract_faces(frame, stats=stats) == []
    assert stats.parity_failures == 1


def test_ambiguous_glyph_dropped_and_counted():
    patch = render_plate_region("IAAAAAA", 1)
    # push glyph 'I' exactly halfway toward 'T' (they differ in 4 template
    # cells); two flips leave both templates at Hamming distance 2
    patch[3, 3] = 255   # glyph cell (0,0)
    patch[3, 7] = 255   # glyph cell (0,4)
    frame_arr = np.full((40, 80), 64, dtype=np.uint8)
    frame_arr[5:18, 10:57] = patch
    frame = GeoFrame(vehicle_id=1, fix=FIX, width=80, height=40,
                     pixels=frame_arr.tobytes())
    stats = ExtractStats()
    assert extract_plates(frame, stats=stats) == []
    assert stats.ambiguous_glyphs == 1


def test_extract_gps_copies_fix():
    frame = compose_frame(SceneSpec(), FIX, 3, 32, 32)
    det = extract_gps(frame)
    assert det.kind == "gps"
    assert det.fix == FIX
    assert det.source_frame == frame.frame_id


def test_extract_gps_missing_fix():
    frame = GeoFrame(vehicle_id=1, fix=None, width=2, height=2, pixels=bytes(4))
    with pytest.raises(MissingFix):
        extract_gps(frame)


def test_roundtrip_totality_over_scales_and_positions():
    rng = random.Random(2024)
    alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    for trial in range(60):
        scale = rng.choice([1, 2, 3, 4])
        code = "".join(rng.choice(alphabet) for _ in range(7))
        face = rng.randrange(4096)
        pw, ph = 47 * scale, 13 * scale
        fs = rng.choice([1, 2])
        fw = 20 * fs
        width, height = 330, 160
        x = rng.randint(1, width - pw - 1)
        y = rng.randint(1, height - ph - fw - 4)
        fx = rng.randint(1, width - fw - 1)
        fy = y + ph + 2  # always below the plate: disjoint by construction
        frame = frame_with([SceneItem("plate", code, x, y, scale),
                            SceneItem("face", face, fx, fy, fs)],
                           width=width, height=height)
        plates = extract_plates(frame)
        faces = extract_faces(frame)
        assert [d.value for d in plates] == [code], f"trial {trial}"
        assert [d.value for d in faces] == [face], f"trial {trial}"


def test_no_hallucination_on_item_free_frames():
    for bg in (0, 64, 127):
        for seed in range(8):
            frame = compose_frame(SceneSpec(background=bg), FIX, 1, 177, 93,
                                  noise_level=0.02, rng_seed=seed)
            assert extract_plates(frame) == []
            assert extract_faces(frame) == []


def test_plate_roundtrip_through_light_noise():
    frame = frame_with([SceneItem("plate", "XY987ZW", 20, 15, 2)],
                       width=177, height=93, noise=0.01, seed=7)
    assert [d.value for d in extract_plates(frame)] == ["XY987ZW"]


def test_plate_recovery_under_noise():
    rng = random.Random(7)
    alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    ok = 0
    trials = 40
    for i in range(trials):
        code = "".join(rng.choice(alphabet) for _ in range(7))
        frame = frame_with([SceneItem("plate", code, 12, 8, 2)],
                           width=177, height=93, noise=0.02, seed=1000 + i)
        if [d.value for d in extract_plates(frame)] == [code]:
            ok += 1
    assert ok >= int(trials * 0.9)


def test_worker_modeled_times_parallel_stage_law():
    worker = WorkerNode("w0", modeled_times=ModeledTimes())
    frame = frame_with([SceneItem("plate", "AB123CD", 10, 10, 2),
                        SceneItem("face", 99, 120, 10, 2)])
    actions = worker.process(frame, arrival_ms=2450.0)
    by_stage = {a.stage: a for a in actions}
    assert by_stage["gps"].due_ms == pytest.approx(2450.0 + 10.0)
    assert by_stage["face"].due_ms == pytest.approx(2450.0 + 1080.0)
    assert by_stage["plate"].due_ms == pytest.approx(2450.0 + 3290.0)
    assert by_stage["plate"].completes_frame
    assert not by_stage["face"].completes_frame
    assert max(a.due_ms for a in actions) == pytest.approx(2450.0 + 3290.0)
    for action in actions:
        for det in action.detections:
            assert det.worker_id == "w0"
            assert det.detected_at_ms == action.due_ms


def test_worker_without_model_completes_at_arrival():
    worker = WorkerNode("w1")
    frame = frame_with([SceneItem("face", 5, 10, 10, 1)])
    actions = worker.process(frame, arrival_ms=100.0)
    assert all(a.due_ms == 100.0 for a in actions)
    assert sum(a.completes_frame for a in actions) == 1


def test_worker_commit_uses_stores():
    class FakeStore:
        def __init__(self):
            self.rows = []

        def put_detection(self, det):
            self.rows.append(det)
            return det

    class FakeMatcher:
        def __init__(self):
            self.seen = []

        def on_detection(self, det):
            self.seen.append(det)

    store, matcher = FakeStore(), FakeMatcher()
    worker = WorkerNode("w2", store=store, matcher=matcher)
    frame = frame_with([SceneItem("plate", "ZZ111ZZ", 10, 10, 2)])
    for action in worker.process(frame, arrival_ms=0.0):
        worker.commit(action)
    kinds = sorted(d.kind for d in store.rows)
    assert kinds == ["gps", "plate"]
    assert len(matcher.seen) == 2
