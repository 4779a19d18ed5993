"""Cloud-worker recognition stage: plate, face-marker and GPS extraction.

The three extractors run as independent stages over one frame. Recognition is
exact template matching on the synthetic markers: candidates are white
connected components whose bounding box matches a marker's geometry, decoded
by nearest 5x7 template (plates) or cell sampling with row parity (faces).
Service latency is modeled separately via ModeledTimes so compute correctness
and timing can be tested independently.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from . import synthscene as scene
from .core import PLATE_ALPHABET, Detection, GeoFrame, GpsFix, fnv1a_64
from .netsim import DEFAULT_GPS_S, TABLE1_FACE_S, TABLE1_PLATE_S
from .png import encode_png_gray

THRESHOLD = 128
PLATE_ASPECT_MIN, PLATE_ASPECT_MAX = 3.0, 4.5
FACE_ASPECT_MIN, FACE_ASPECT_MAX = 0.9, 1.1
RING_SOLIDITY_MIN = 0.8

_TEMPLATES = np.stack([scene.glyph_bits(ch) for ch in PLATE_ALPHABET])  # (36, 7, 5)


class MissingFix(ValueError):
    """Frame was captured without a GPS lock (header flag bit 0 clear)."""


@dataclass(frozen=True)
class PlateCandidate:
    bbox: Tuple[int, int, int, int]      # x, y, w, h in frame pixels
    decoded: str
    min_template_score_margin: int       # best-vs-second-best Hamming margin


@dataclass
class ExtractStats:
    ambiguous_glyphs: int = 0
    parity_failures: int = 0


@dataclass(frozen=True)
class ModeledTimes:
    """Per-stage service times in seconds (the measured one-image timings)."""

    face_s: float = TABLE1_FACE_S
    plate_s: float = TABLE1_PLATE_S
    gps_s: float = DEFAULT_GPS_S

    def max_s(self) -> float:
        return max(self.face_s, self.plate_s, self.gps_s)


def _frame_array(frame: GeoFrame) -> np.ndarray:
    return np.frombuffer(frame.pixels, dtype=np.uint8).reshape(frame.height, frame.width)


def _frame_fix(frame: GeoFrame) -> GpsFix:
    return frame.fix if frame.fix is not None else GpsFix(0, 0, 0)


def _trim_bbox(mask: np.ndarray) -> Tuple[int, int, int, int]:
    """Shrink a component's bbox past rows/cols that are mostly background.

    Stray noise pixels 4-connected to a marker's border stretch the raw bbox
    by a pixel or two; rows/cols that are less than half lit cannot be part
    of a solid border, so they are peeled off.
    """
    y0, y1 = 0, mask.shape[0]
    x0, x1 = 0, mask.shape[1]
    while y1 - y0 > 1 and mask[y0, x0:x1].mean() < 0.5:
        y0 += 1
    while y1 - y0 > 1 and mask[y1 - 1, x0:x1].mean() < 0.5:
        y1 -= 1
    while x1 - x0 > 1 and mask[y0:y1, x0].mean() < 0.5:
        x0 += 1
    while x1 - x0 > 1 and mask[y0:y1, x1 - 1].mean() < 0.5:
        x1 -= 1
    return x0, y0, x1 - x0, y1 - y0


def _ring_solidity(binary: np.ndarray, x: int, y: int, w: int, h: int, thickness: int) -> float:
    box = binary[y:y + h, x:x + w]
    total = int(box.sum())
    iw, ih = w - 2 * thickness, h - 2 * thickness
    if iw <= 0 or ih <= 0:
        return 0.0
    inner = int(box[thickness:thickness + ih, thickness:thickness + iw].sum())
    ring_area = w * h - iw * ih
    return (total - inner) / ring_area


def _components(binary: np.ndarray):
    labels, count = ndimage.label(binary)  # default structure = 4-connectivity
    objects = ndimage.find_objects(labels)
    out = []
    for idx, sl in enumerate(objects, start=1):
        if sl is None:
            continue
        mask = labels[sl] == idx
        tx, ty, tw, th = _trim_bbox(mask)
        out.append((sl[1].start + tx, sl[0].start + ty, tw, th))
    # large candidates first so nested spurious boxes can be suppressed
    out.sort(key=lambda b: (-(b[2] * b[3]), b[1], b[0]))
    return out


def _nested(box, accepted) -> bool:
    x, y, w, h = box
    for ax, ay, aw, ah in accepted:
        if x >= ax and y >= ay and x + w <= ax + aw and y + h <= ay + ah:
            return True
    return False


def _majority_downsample(region: np.ndarray, rows: int, cols: int, s: int) -> np.ndarray:
    counts = region[:rows * s, :cols * s].reshape(rows, s, cols, s).sum(axis=(1, 3))
    return counts * 2 >= s * s


def _decode_glyph(cells: np.ndarray) -> Tuple[Optional[str], int]:
    """Nearest-template decode; returns (glyph or None on tie, score margin)."""
    dists = np.count_nonzero(_TEMPLATES != cells[None, :, :], axis=(1, 2))
    order = np.argsort(dists, kind="stable")
    best, second = int(order[0]), int(order[1])
    margin = int(dists[second] - dists[best])
    if margin == 0:
        return None, 0
    return PLATE_ALPHABET[best], margin


def find_plate_candidates(arr: np.ndarray, stats: Optional[ExtractStats] = None,
                          threshold: int = THRESHOLD) -> List[PlateCandidate]:
    binary = arr >= threshold
    frame_h, frame_w = arr.shape
    candidates: List[PlateCandidate] = []
    accepted_geometry: List[Tuple[int, int, int, int]] = []
    for x, y, w, h in _components(binary):
        if h < scene.PLATE_H_UNITS or w < scene.PLATE_W_UNITS:
            continue
        aspect = w / h
        if not PLATE_ASPECT_MIN <= aspect <= PLATE_ASPECT_MAX:
            continue
        s = round(h / scene.PLATE_H_UNITS)
        if s < 1 or abs(h - scene.PLATE_H_UNITS * s) > 1 or abs(w - scene.PLATE_W_UNITS * s) > 2:
            continue
        if w == frame_w and h == frame_h:
            continue
        if _nested((x, y, w, h), accepted_geometry):
            continue
        if _ring_solidity(binary, x, y, w, h, 2 * s) < RING_SOLIDITY_MIN:
            continue
        accepted_geometry.append((x, y, w, h))
        gy = y + 3 * s
        decoded = []
        margin = 64
        ambiguous = False
        for g in range(scene.PLATE_GLYPHS):
            gx = x + 3 * s + g * (scene.GLYPH_W + 1) * s
            region = binary[gy:gy + scene.GLYPH_H * s, gx:gx + scene.GLYPH_W * s]
            if region.shape != (scene.GLYPH_H * s, scene.GLYPH_W * s):
                ambiguous = True
                break
            cells = _majority_downsample(region, scene.GLYPH_H, scene.GLYPH_W, s)
            ch, m = _decode_glyph(cells)
            if ch is None:
                ambiguous = True
                break
            decoded.append(ch)
            margin = min(margin, m)
        if ambiguous:
            if stats is not None:
                stats.ambiguous_glyphs += 1
            continue
        candidates.append(PlateCandidate((x, y, w, h), "".join(decoded), margin))
    return candidates


def extract_plates(frame: GeoFrame, stats: Optional[ExtractStats] = None,
                   blob_sink=None, threshold: int = THRESHOLD) -> List[Detection]:
    """Decode every plate region in a frame; empty list when none are found."""
    arr = _frame_array(frame)
    fix = _frame_fix(frame)
    detections = []
    for cand in find_plate_candidates(arr, stats=stats, threshold=threshold):
        x, y, w, h = cand.bbox
        crop = encode_png_gray(np.ascontiguousarray(arr[y:y + h, x:x + w]))
        digest = blob_sink.put(crop) if blob_sink is not None else fnv1a_64(crop)
        detections.append(Detection(
            detection_id=0, kind="plate", value=cand.decoded, fix=fix,
            source_frame=frame.frame_id, worker_id="", detected_at_ms=0.0,
            crop_blob=digest,
        ))
    return detections


def find_face_codes(arr: np.ndarray, stats: Optional[ExtractStats] = None,
                    threshold: int = THRESHOLD) -> List[Tuple[Tuple[int, int, int, int], int]]:
    binary = arr >= threshold
    frame_h, frame_w = arr.shape
    results = []
    accepted_geometry: List[Tuple[int, int, int, int]] = []
    for x, y, w, h in _components(binary):
        if h < scene.FACE_SIDE_UNITS or w < scene.FACE_SIDE_UNITS:
            continue
        aspect = w / h
        if not FACE_ASPECT_MIN <= aspect <= FACE_ASPECT_MAX:
            continue
        s = round(h / scene.FACE_SIDE_UNITS)
        if s < 1 or abs(h - scene.FACE_SIDE_UNITS * s) > 1 or abs(w - scene.FACE_SIDE_UNITS * s) > 1:
            continue
        if w == frame_w and h == frame_h:
            continue
        if _nested((x, y, w, h), accepted_geometry):
            continue
        if _ring_solidity(binary, x, y, w, h, 2 * s) < RING_SOLIDITY_MIN:
            continue
        accepted_geometry.append((x, y, w, h))
        cell_px = scene.FACE_CELL * s
        centre_off = (cell_px - s) // 2
        bits = np.zeros((4, 4), dtype=bool)
        for r in range(4):
            for c in range(4):
                cy = y + 2 * s + r * cell_px + centre_off
                cx = x + 2 * s + c * cell_px + centre_off
                block = binary[cy:cy + s, cx:cx + s]
                bits[r, c] = int(block.sum()) * 2 >= s * s
        parity_ok = all(bool(bits[r, 0] ^ bits[r, 1] ^ bits[r, 2]) == bool(bits[r, 3])
                        for r in range(4))
        if not parity_ok:
            if stats is not None:
                stats.parity_failures += 1
            continue
        code = 0
        for k in range(12):
            code = (code << 1) | int(bits[k // 3, k % 3])
        results.append(((x, y, w, h), code))
    return results


def extract_faces(frame: GeoFrame, stats: Optional[ExtractStats] = None,
                  blob_sink=None, threshold: int = THRESHOLD) -> List[Detection]:
    """Decode every face marker in a frame; parity failures are dropped."""
    arr = _frame_array(frame)
    fix = _frame_fix(frame)
    detections = []
    for (x, y, w, h), code in find_face_codes(arr, stats=stats, threshold=threshold):
        crop = encode_png_gray(np.ascontiguousarray(arr[y:y + h, x:x + w]))
        digest = blob_sink.put(crop) if blob_sink is not None else fnv1a_64(crop)
        detections.append(Detection(
            detection_id=0, kind="face", value=code, fix=fix,
            source_frame=frame.frame_id, worker_id="", detected_at_ms=0.0,
            crop_blob=digest,
        ))
    return detections


def extract_gps(frame: GeoFrame) -> Detection:
    """Copy the frame's embedded fix into a gps detection."""
    if frame.fix is None:
        raise MissingFix("frame has no GPS fix (flag bit 0 clear)")
    return Detection(detection_id=0, kind="gps", value="", fix=frame.fix,
                     source_frame=frame.frame_id, worker_id="", detected_at_ms=0.0)


@dataclass(frozen=True)
class PersistAction:
    """Deferred persistence of one stage's detections at its completion time."""

    due_ms: float
    stage: str                    # "face" | "plate" | "gps"
    detections: Tuple[Detection, ...]
    frame_id: int
    arrival_ms: float
    completes_frame: bool         # true on the stage that finishes last


class WorkerNode:
    """One cloud compute node running the three extraction stages in parallel.

    Frames are handled in arrival order. ``process`` performs the actual
    recognition immediately and returns persistence actions stamped with each
    stage's completion time; the scenario scheduler (or a direct ``commit``)
    applies them.
    """

    def __init__(self, worker_id: str, store=None, blobs=None, matcher=None,
                 modeled_times: Optional[ModeledTimes] = None,
                 threshold: int = THRESHOLD):
        self.worker_id = worker_id
        self.store = store
        self.blobs = blobs
        self.matcher = matcher
        self.modeled_times = modeled_times
        self.threshold = threshold
        self.stats = ExtractStats()
        self.frames_processed = 0

    def process(self, frame: GeoFrame, arrival_ms: float,
                realtime: bool = False) -> List[PersistAction]:
        t0 = _time.monotonic()
        stage_dets = {
            "face": extract_faces(frame, stats=self.stats, blob_sink=self.blobs,
                                  threshold=self.threshold),
            "plate": extract_plates(frame, stats=self.stats, blob_sink=self.blobs,
                                    threshold=self.threshold),
            "gps": [extract_gps(frame)] if frame.fix is not None else [],
        }
        if self.modeled_times is not None:
            durations = {"face": self.modeled_times.face_s * 1000.0,
                         "plate": self.modeled_times.plate_s * 1000.0,
                         "gps": self.modeled_times.gps_s * 1000.0}
        elif realtime:
            elapsed = (_time.monotonic() - t0) * 1000.0
            durations = {"face": elapsed, "plate": elapsed, "gps": elapsed}
        else:
            durations = {"face": 0.0, "plate": 0.0, "gps": 0.0}
        actions = []
        for stage in ("gps", "face", "plate"):
            due = arrival_ms + durations[stage]
            dets = tuple(
                replace(d, worker_id=self.worker_id, detected_at_ms=due)
                for d in stage_dets[stage]
            )
            actions.append(PersistAction(
                due_ms=due, stage=stage, detections=dets, frame_id=frame.frame_id,
                arrival_ms=arrival_ms, completes_frame=False,
            ))
        self.frames_processed += 1
        # exactly one action closes out the frame
        last = max(range(len(actions)), key=lambda i: actions[i].due_ms)
        actions[last] = replace(actions[last], completes_frame=True)
        return actions

    def commit(self, action: PersistAction) -> List[Detection]:
        """Persist one stage's detections and trigger watchlist matching."""
        persisted = []
        for det in action.detections:
            if self.store is not None:
                det = self.store.put_detection(det)
            persisted.append(det)
            if self.matcher is not None:
                self.matcher.on_detection(det)
        return persisted
