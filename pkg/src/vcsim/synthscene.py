"""Synthetic scene generation: driving traces and exactly-decodable frames.

Frames carry two kinds of machine-readable markers: license-plate regions
(7 glyphs from an embedded 5x7 font inside a white border) and face markers
(a 4x4 cell grid encoding a 12-bit code with per-row parity). Both are
rendered as hard black/white pixels so the extraction stage can be tested
bit-exactly, with optional salt-and-pepper noise on top.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import FACE_CODE_MAX, GeoFrame, GpsFix, PLATE_RE, fnv1a_64

TRACE_FORMAT = "vctrace/1"

# one degree of latitude in meters on the sphere used by core.haversine_m
METERS_PER_DEG_LAT = 111_194.9

PLATE_BORDER = 2   # border thickness in scale units
PLATE_MARGIN = 1   # black gap between border and glyphs, scale units
GLYPH_W, GLYPH_H = 5, 7
PLATE_GLYPHS = 7
PLATE_W_UNITS = (PLATE_GLYPHS * (GLYPH_W + 1) - 1) + 2 * (PLATE_BORDER + PLATE_MARGIN)  # 47
PLATE_H_UNITS = GLYPH_H + 2 * (PLATE_BORDER + PLATE_MARGIN)  # 13

FACE_CELL = 4      # cell edge in scale units
FACE_GRID = 4      # cells per side
FACE_BORDER = 2    # border thickness in scale units
FACE_SIDE_UNITS = FACE_GRID * FACE_CELL + 2 * FACE_BORDER  # 20


class BadCode(ValueError):
    """Plate string or face code outside its domain."""


class ItemOutOfBounds(ValueError):
    """A scene item does not fit inside the frame (or overlaps another)."""


# 5x7 templates for A-Z0-9, row-major, '1' = lit. Shapes are tweaked from the
# classic LCD font so every pair of glyphs differs in at least 4 pixels
# (verified by _check_font at import), which makes nearest-template decoding
# unambiguous under small noise.
FONT_5X7 = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "B": ("11100", "10010", "10010", "11110", "10001", "10001", "11110"),
    "C": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "D": ("11100", "10010", "10001", "10001", "10001", "10010", "11100"),
    "E": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "F": ("11111", "10000", "11110", "10000", "10000", "10000", "10000"),
    "G": ("01110", "10001", "10000", "10111", "10011", "10001", "01111"),
    "H": ("10001", "10001", "10001", "11111", "10001", "10001", "10001"),
    "I": ("01110", "00100", "00100", "00100", "00100", "00100", "01110"),
    "J": ("00111", "00010", "00010", "00010", "00010", "10010", "01100"),
    "K": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "M": ("10001", "11011", "10101", "10001", "10001", "10001", "10001"),
    "N": ("11001", "11001", "10101", "10101", "10011", "10011", "10001"),
    "O": ("11111", "10001", "10001", "10001", "10001", "10001", "11111"),
    "P": ("11110", "10001", "10001", "10001", "11110", "10000", "10000"),
    "Q": ("01110", "10001", "10001", "10001", "10101", "10010", "01101"),
    "R": ("11110", "10001", "10001", "11110", "10100", "10010", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "V": ("10001", "10001", "10001", "10001", "01010", "01010", "00100"),
    "W": ("10001", "10001", "10101", "10101", "10101", "11011", "10001"),
    "X": ("10001", "01010", "00100", "00100", "00100", "01010", "10001"),
    "Y": ("10001", "10001", "01010", "00100", "00100", "00100", "00100"),
    "Z": ("11111", "00001", "00010", "00100", "01000", "10000", "11111"),
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "10100", "00100", "00100", "00100", "11111"),
    "2": ("01110", "10001", "00001", "00110", "01000", "10000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

FONT_MIN_DISTANCE = 4


def glyph_bits(ch: str) -> np.ndarray:
    """5x7 boolean template for one glyph, True = lit."""
    rows = FONT_5X7[ch]
    return np.array([[c == "1" for c in row] for row in rows], dtype=bool)


def _check_font() -> None:
    names = sorted(FONT_5X7)
    if len(names) != 36:
        raise RuntimeError("font must cover exactly A-Z0-9")
    flat = {ch: glyph_bits(ch).ravel() for ch in names}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = int(np.count_nonzero(flat[a] != flat[b]))
            if d < FONT_MIN_DISTANCE:
                raise RuntimeError(f"glyphs {a!r} and {b!r} differ in only {d} pixels")


_check_font()


@dataclass(frozen=True)
class SceneItem:
    kind: str            # "plate" | "face"
    value: object        # plate string or face code
    origin_x: int
    origin_y: int
    scale: int = 1

    def size(self) -> Tuple[int, int]:
        """(width, height) of the rendered patch in pixels."""
        if self.kind == "plate":
            return PLATE_W_UNITS * self.scale, PLATE_H_UNITS * self.scale
        if self.kind == "face":
            return FACE_SIDE_UNITS * self.scale, FACE_SIDE_UNITS * self.scale
        raise BadCode(f"unknown item kind {self.kind!r}")


@dataclass(frozen=True)
class SceneSpec:
    items: Tuple[SceneItem, ...] = ()
    background: int = 64

    def canonical_bytes(self) -> bytes:
        """Stable byte encoding, used to derive per-frame noise seeds."""
        parts = [str(self.background)]
        for it in self.items:
            parts.append(f"{it.kind}:{it.value}:{it.origin_x}:{it.origin_y}:{it.scale}")
        return "|".join(parts).encode()


@dataclass(frozen=True)
class TraceStep:
    t_ms: int
    fix: GpsFix
    spec: SceneSpec


@dataclass(frozen=True)
class Trace:
    vehicle_id: int
    steps: Tuple[TraceStep, ...]

    def __post_init__(self):
        times = [s.t_ms for s in self.steps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trace step times must be strictly increasing")


def render_plate_region(code: str, scale: int) -> np.ndarray:
    """Render a plate patch: white glyphs on black inside a white border.

    The patch is 47*scale wide by 13*scale high; the border is 2*scale thick
    with a 1*scale black margin between it and the glyph area.
    """
    if not isinstance(code, str) or not PLATE_RE.fullmatch(code):
        raise BadCode(f"plate code {code!r} must match [A-Z0-9]{{7}}")
    if scale < 1:
        raise BadCode(f"scale {scale} must be >= 1")
    s = scale
    w, h = PLATE_W_UNITS * s, PLATE_H_UNITS * s
    patch = np.zeros((h, w), dtype=np.uint8)
    b = PLATE_BORDER * s
    patch[:b, :] = 255
    patch[-b:, :] = 255
    patch[:, :b] = 255
    patch[:, -b:] = 255
    y0 = (PLATE_BORDER + PLATE_MARGIN) * s
    for g, ch in enumerate(code):
        x0 = y0 + g * (GLYPH_W + 1) * s
        cells = glyph_bits(ch)
        block = np.kron(cells, np.ones((s, s), dtype=bool))
        region = patch[y0:y0 + GLYPH_H * s, x0:x0 + GLYPH_W * s]
        region[block] = 255
    return patch


def face_cell_bits(face_code: int) -> np.ndarray:
    """4x4 grid of cell values: 3 data cells plus one even-parity cell per row."""
    if not isinstance(face_code, int) or isinstance(face_code, bool):
        raise BadCode(f"face code {face_code!r} must be an integer")
    if not 0 <= face_code < FACE_CODE_MAX:
        raise BadCode(f"face code {face_code} outside [0, {FACE_CODE_MAX})")
    cells = np.zeros((FACE_GRID, FACE_GRID), dtype=bool)
    for k in range(12):
        bit = (face_code >> (11 - k)) & 1
        cells[k // 3, k % 3] = bool(bit)
    for r in range(FACE_GRID):
        cells[r, 3] = bool(cells[r, 0] ^ cells[r, 1] ^ cells[r, 2])
    return cells


def render_face_marker(face_code: int, scale: int) -> np.ndarray:
    """Render a face marker: a bordered 4x4 cell grid encoding a 12-bit code."""
    if scale < 1:
        raise BadCode(f"scale {scale} must be >= 1")
    s = scale
    side = FACE_SIDE_UNITS * s
    patch = np.zeros((side, side), dtype=np.uint8)
    b = FACE_BORDER * s
    patch[:b, :] = 255
    patch[-b:, :] = 255
    patch[:, :b] = 255
    patch[:, -b:] = 255
    cells = face_cell_bits(face_code)
    cell_px = FACE_CELL * s
    block = np.kron(cells, np.ones((cell_px, cell_px), dtype=bool))
    region = patch[b:b + FACE_GRID * cell_px, b:b + FACE_GRID * cell_px]
    region[block] = 255
    return patch


def render_item(item: SceneItem) -> np.ndarray:
    if item.kind == "plate":
        return render_plate_region(item.value, item.scale)
    if item.kind == "face":
        return render_face_marker(item.value, item.scale)
    raise BadCode(f"unknown item kind {item.kind!r}")


def _check_layout(spec: SceneSpec, width: int, height: int) -> None:
    boxes = []
    for it in spec.items:
        w, h = it.size()
        x, y = it.origin_x, it.origin_y
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise ItemOutOfBounds(
                f"{it.kind} at ({x},{y}) size {w}x{h} exceeds {width}x{height}")
        for bx, by, bw, bh in boxes:
            if x < bx + bw and bx < x + w and y < by + bh and by < y + h:
                raise ItemOutOfBounds(f"{it.kind} at ({x},{y}) overlaps another item")
        boxes.append((x, y, w, h))


def compose_frame(spec: SceneSpec, fix: GpsFix, vehicle_id: int, width: int,
                  height: int, noise_level: float = 0.0, rng_seed: int = 0) -> GeoFrame:
    """Blit a scene onto a background and apply seeded salt-and-pepper noise.

    floor(noise_level * width * height) pixel positions are drawn uniformly
    (with replacement) and forced to 0 or 255; the result is a pure function
    of the arguments.
    """
    _check_layout(spec, width, height)
    canvas = np.full((height, width), spec.background, dtype=np.uint8)
    for it in spec.items:
        patch = render_item(it)
        h, w = patch.shape
        canvas[it.origin_y:it.origin_y + h, it.origin_x:it.origin_x + w] = patch
    n = int(noise_level * width * height)
    if n > 0:
        rng = random.Random(rng_seed)
        total = width * height
        flat = canvas.reshape(-1)
        for _ in range(n):
            pos = rng.randrange(total)
            flat[pos] = 255 if rng.randrange(2) else 0
    return GeoFrame(vehicle_id=vehicle_id, fix=fix, width=width, height=height,
                    pixels=canvas.tobytes())


def frame_noise_seed(master_seed: int, vehicle_id: int, fix: GpsFix, spec: SceneSpec) -> int:
    """Noise seed derived from scene content so verbatim repeats re-render identically."""
    key = f"{master_seed}:{vehicle_id}:{fix.lat_e7}:{fix.lon_e7}:".encode()
    return fnv1a_64(key + spec.canonical_bytes())


def _shuffled_cycle(rng: random.Random, pool: Sequence) -> List:
    order = list(pool)
    rng.shuffle(order)
    return order


def _place_items(rng: random.Random, width: int, height: int,
                 plate: str, face: int, scales: Sequence[int]) -> Tuple[SceneItem, ...]:
    ps = rng.choice(list(scales))
    fs = rng.choice(list(scales))
    pw, ph = PLATE_W_UNITS * ps, PLATE_H_UNITS * ps
    fw, fh = FACE_SIDE_UNITS * fs, FACE_SIDE_UNITS * fs
    # items stay 1px off the frame edge and at least 1px apart: flush borders
    # would merge into one connected component and defeat both detectors
    if ph + fh + 3 <= height - 2:
        py = rng.randint(1, height - ph - fh - 3)
        fy = rng.randint(py + ph + 1, height - fh - 1)
        px = rng.randint(1, width - pw - 1)
        fx = rng.randint(1, width - fw - 1)
    elif pw + fw + 3 <= width - 2:
        px = rng.randint(1, width - pw - fw - 3)
        fx = rng.randint(px + pw + 1, width - fw - 1)
        py = rng.randint(1, height - ph - 1)
        fy = rng.randint(1, height - fh - 1)
    else:
        raise ItemOutOfBounds(
            f"plate x{ps} and face x{fs} cannot both fit in {width}x{height}")
    return (SceneItem("plate", plate, px, py, ps), SceneItem("face", face, fx, fy, fs))


def gen_trace(seed: int, n_steps: int, step_ms: int, start_fix: GpsFix,
              speed_mps: float, plate_pool: Sequence[str], face_pool: Sequence[int],
              repeat_prob: float, frame_width: int = 177, frame_height: int = 93,
              scales: Sequence[int] = (1, 2), background: int = 64,
              vehicle_id: int = 1) -> Trace:
    """Generate a straight northward trace with one plate and one face per step.

    With probability ``repeat_prob`` a step reuses the previous step's scene
    and position verbatim (the RSU dedup fodder); timestamps always advance.
    Deterministic for a given seed.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not plate_pool or not face_pool:
        raise ValueError("plate and face pools must be nonempty")
    rng = random.Random(seed)
    plates = _shuffled_cycle(rng, plate_pool)
    faces = _shuffled_cycle(rng, face_pool)
    meters_per_step = speed_mps * step_ms / 1000.0
    steps = []
    prev: Optional[TraceStep] = None
    for i in range(n_steps):
        t = start_fix.timestamp_ms + i * step_ms
        if prev is not None and rng.random() < repeat_prob:
            fix = GpsFix(prev.fix.lat_e7, prev.fix.lon_e7, t)
            step = TraceStep(t, fix, prev.spec)
        else:
            dlat_e7 = round(i * meters_per_step / METERS_PER_DEG_LAT * 1e7)
            fix = GpsFix(start_fix.lat_e7 + dlat_e7, start_fix.lon_e7, t)
            items = _place_items(rng, frame_width, frame_height,
                                 plates[i % len(plates)], faces[i % len(faces)], scales)
            step = TraceStep(t, fix, SceneSpec(items=items, background=background))
        steps.append(step)
        prev = step
    return Trace(vehicle_id=vehicle_id, steps=tuple(steps))


def write_trace(trace: Trace, path: str) -> None:
    """Write a trace as vctrace/1 JSON Lines."""
    background = trace.steps[0].spec.background if trace.steps else 64
    with open(path, "w", encoding="utf-8") as fh:
        header = {"vehicle_id": trace.vehicle_id, "format": TRACE_FORMAT,
                  "background": background}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for step in trace.steps:
            line = {
                "t_ms": step.t_ms,
                "lat_e7": step.fix.lat_e7,
                "lon_e7": step.fix.lon_e7,
                "items": [
                    {"kind": it.kind, "value": it.value, "x": it.origin_x,
                     "y": it.origin_y, "scale": it.scale}
                    for it in step.spec.items
                ],
            }
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def read_trace(path: str) -> Trace:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != TRACE_FORMAT:
            raise ValueError(f"{path}: not a {TRACE_FORMAT} file")
        background = int(header.get("background", 64))
        steps = []
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            d = json.loads(raw)
            items = tuple(
                SceneItem(it["kind"], it["value"], int(it["x"]), int(it["y"]),
                          int(it.get("scale", 1)))
                for it in d.get("items", ())
            )
            fix = GpsFix(int(d["lat_e7"]), int(d["lon_e7"]), int(d["t_ms"]))
            steps.append(TraceStep(int(d["t_ms"]), fix,
                                   SceneSpec(items=items, background=background)))
    return Trace(vehicle_id=int(header["vehicle_id"]), steps=tuple(steps))
