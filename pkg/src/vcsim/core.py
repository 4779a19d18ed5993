"""Shared domain types, the GFRM frame container codec, and spherical distance.

Everything in this module is an immutable value type; instances are safe to
share between concurrently running nodes without coordination.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

EARTH_RADIUS_M = 6_371_000.0

LAT_E7_MAX = 900_000_000
LON_E7_MAX = 1_800_000_000

PLATE_RE = re.compile(r"[A-Z0-9]{7}")
PLATE_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
FACE_CODE_MAX = 4096  # 12-bit codes, exclusive upper bound

KIND_PLATE = "plate"
KIND_FACE = "face"
KIND_GPS = "gps"
DETECTION_KINDS = (KIND_PLATE, KIND_FACE, KIND_GPS)
WATCHABLE_KINDS = (KIND_PLATE, KIND_FACE)

GFRM_MAGIC = b"GFRM"
GFRM_VERSION = 1
GFRM_HEADER_SIZE = 34
FLAG_HAS_GPS = 0x01
_GFRM_HEADER = struct.Struct("<4sBBQQiiHH")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes, seed: int = _FNV_OFFSET) -> int:
    """64-bit FNV-1a digest, the content-addressing hash used everywhere."""
    h = seed
    prime = _FNV_PRIME
    for b in data:
        h = ((h ^ b) * prime) & _U64
    return h


def digest_hex(digest: int) -> str:
    return f"{digest:016x}"


class FrameCodecError(ValueError):
    """Base class for GFRM decode failures."""


class BadMagic(FrameCodecError):
    pass


class BadVersion(FrameCodecError):
    pass


class Truncated(FrameCodecError):
    pass


class OutOfRange(FrameCodecError):
    pass


@dataclass(frozen=True)
class GpsFix:
    """A GPS position in fixed-point degrees (x 1e7) with a capture time."""

    lat_e7: int
    lon_e7: int
    timestamp_ms: int

    def __post_init__(self):
        if abs(self.lat_e7) > LAT_E7_MAX:
            raise OutOfRange(f"lat_e7 {self.lat_e7} outside +/-{LAT_E7_MAX}")
        if abs(self.lon_e7) > LON_E7_MAX:
            raise OutOfRange(f"lon_e7 {self.lon_e7} outside +/-{LON_E7_MAX}")
        if self.timestamp_ms < 0:
            raise OutOfRange(f"timestamp_ms {self.timestamp_ms} negative")

    @property
    def lat_deg(self) -> float:
        return self.lat_e7 / 1e7

    @property
    def lon_deg(self) -> float:
        return self.lon_e7 / 1e7


@dataclass(frozen=True)
class GeoFrame:
    """One captured grayscale image plus its geotag; the pipeline's unit of flow.

    ``pixels`` is row-major, top-left origin, one byte per pixel. ``fix`` may
    be None for frames captured without a GPS lock (header flag bit 0 clear).
    """

    vehicle_id: int
    fix: Optional[GpsFix]
    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if not (1 <= self.width <= 4096 and 1 <= self.height <= 4096):
            raise ValueError(f"frame dimensions {self.width}x{self.height} out of range")
        if len(self.pixels) != self.width * self.height:
            raise ValueError(
                f"pixel buffer is {len(self.pixels)} bytes, expected {self.width * self.height}"
            )
        if not (0 <= self.vehicle_id <= _U64):
            raise ValueError("vehicle_id must fit in 64 bits")

    @cached_property
    def frame_id(self) -> int:
        """Content digest of the encoded frame (derived, never serialized)."""
        return fnv1a_64(encode_frame(self))

    @property
    def encoded_size(self) -> int:
        return GFRM_HEADER_SIZE + self.width * self.height


def encode_frame(frame: GeoFrame) -> bytes:
    """Serialize a frame to the bit-exact GFRM container layout."""
    fix = frame.fix
    flags = FLAG_HAS_GPS if fix is not None else 0
    ts = fix.timestamp_ms if fix is not None else 0
    lat = fix.lat_e7 if fix is not None else 0
    lon = fix.lon_e7 if fix is not None else 0
    header = _GFRM_HEADER.pack(
        GFRM_MAGIC, GFRM_VERSION, flags, frame.vehicle_id, ts, lat, lon,
        frame.width, frame.height,
    )
    return header + frame.pixels


def decode_frame(data: bytes) -> GeoFrame:
    """Parse GFRM bytes back into a GeoFrame, validating every invariant."""
    if len(data) < GFRM_HEADER_SIZE:
        raise Truncated(f"{len(data)} bytes is below the {GFRM_HEADER_SIZE}-byte header")
    magic, version, flags, vehicle_id, ts, lat, lon, width, height = _GFRM_HEADER.unpack_from(data)
    if magic != GFRM_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != GFRM_VERSION:
        raise BadVersion(f"unsupported container version {version}")
    expected = GFRM_HEADER_SIZE + width * height
    if len(data) < expected:
        raise Truncated(f"{len(data)} bytes, header claims {expected}")
    if abs(lat) > LAT_E7_MAX or abs(lon) > LON_E7_MAX:
        raise OutOfRange(f"coordinates ({lat}, {lon}) out of range")
    fix = GpsFix(lat, lon, ts) if flags & FLAG_HAS_GPS else None
    return GeoFrame(
        vehicle_id=vehicle_id, fix=fix, width=width, height=height,
        pixels=bytes(data[GFRM_HEADER_SIZE:expected]),
    )


def haversine_m(a: GpsFix, b: GpsFix) -> float:
    """Great-circle distance in meters on a spherical Earth."""
    lat1 = math.radians(a.lat_deg)
    lat2 = math.radians(b.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    s = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


def validate_value(kind: str, value) -> None:
    """Check a detection/watchlist value against its kind's domain."""
    if kind == KIND_PLATE:
        if not isinstance(value, str) or not PLATE_RE.fullmatch(value):
            raise ValueError(f"plate value {value!r} must match [A-Z0-9]{{7}}")
    elif kind == KIND_FACE:
        if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value < FACE_CODE_MAX:
            raise ValueError(f"face code {value!r} must be an integer in [0, {FACE_CODE_MAX})")
    elif kind == KIND_GPS:
        if value not in ("", None):
            raise ValueError("gps detections carry no value")
    else:
        raise ValueError(f"unknown kind {kind!r}")


@dataclass(frozen=True)
class Detection:
    """An artifact extracted from one frame: a plate, a face code, or a fix."""

    detection_id: int
    kind: str
    value: Union[str, int]
    fix: GpsFix
    source_frame: int
    worker_id: str
    detected_at_ms: float
    crop_blob: Optional[int] = None

    def __post_init__(self):
        if self.kind not in DETECTION_KINDS:
            raise ValueError(f"unknown detection kind {self.kind!r}")
        validate_value(self.kind, self.value if self.kind != KIND_GPS else "")

    def to_dict(self) -> dict:
        return {
            "detection_id": self.detection_id,
            "kind": self.kind,
            "value": self.value,
            "lat_e7": self.fix.lat_e7,
            "lon_e7": self.fix.lon_e7,
            "timestamp_ms": self.fix.timestamp_ms,
            "source_frame": digest_hex(self.source_frame),
            "crop_blob": digest_hex(self.crop_blob) if self.crop_blob is not None else None,
            "worker_id": self.worker_id,
            "detected_at_ms": self.detected_at_ms,
        }

    @staticmethod
    def from_dict(d: dict) -> "Detection":
        crop = d.get("crop_blob")
        return Detection(
            detection_id=int(d.get("detection_id", 0)),
            kind=d["kind"],
            value=d["value"] if d["kind"] != KIND_GPS else "",
            fix=GpsFix(int(d["lat_e7"]), int(d["lon_e7"]), int(d["timestamp_ms"])),
            source_frame=int(d["source_frame"], 16),
            crop_blob=int(crop, 16) if crop else None,
            worker_id=str(d.get("worker_id", "")),
            detected_at_ms=float(d.get("detected_at_ms", 0.0)),
        )


@dataclass(frozen=True)
class WatchlistEntry:
    """An operator-entered search target."""

    entry_id: int
    kind: str
    value: Union[str, int]
    label: str
    created_at_ms: int

    def __post_init__(self):
        if self.kind not in WATCHABLE_KINDS:
            raise ValueError(f"watchlist kind must be one of {WATCHABLE_KINDS}")
        validate_value(self.kind, self.value)

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "kind": self.kind,
            "value": self.value,
            "label": self.label,
            "created_at_ms": self.created_at_ms,
        }

    @staticmethod
    def from_dict(d: dict) -> "WatchlistEntry":
        return WatchlistEntry(
            entry_id=int(d["entry_id"]), kind=d["kind"], value=d["value"],
            label=str(d.get("label", "")), created_at_ms=int(d.get("created_at_ms", 0)),
        )


@dataclass(frozen=True)
class MatchEvent:
    """A watchlist entry joined with a detection at a point in time and space."""

    match_id: int
    entry_id: int
    detection_id: int
    fix: GpsFix
    matched_at_ms: float

    def to_dict(self) -> dict:
        return {
            "match_id": self.match_id,
            "entry_id": self.entry_id,
            "detection_id": self.detection_id,
            "lat_e7": self.fix.lat_e7,
            "lon_e7": self.fix.lon_e7,
            "timestamp_ms": self.fix.timestamp_ms,
            "matched_at_ms": self.matched_at_ms,
        }

    @staticmethod
    def from_dict(d: dict) -> "MatchEvent":
        return MatchEvent(
            match_id=int(d["match_id"]), entry_id=int(d["entry_id"]),
            detection_id=int(d["detection_id"]),
            fix=GpsFix(int(d["lat_e7"]), int(d["lon_e7"]), int(d["timestamp_ms"])),
            matched_at_ms=float(d["matched_at_ms"]),
        )
