import random

import pytest

from vcsim.core import Detection, GpsFix
from vcsim.store import (
    BadFilter,
    BadValue,
    BlobStore,
    DetectionStore,
    DuplicateEntry,
    NotFound,
    QueryFilter,
    UnknownEntry,
    WatchlistStore,
)

PLATES = ["AB123CD", "XY987ZW", "QQ000QQ", "ZZ999ZZ"]


def random_detection(rng, t_range=100_000):
    kind = rng.choice(["plate", "face", "gps"])
    if kind == "plate":
        value = rng.choice(PLATES)
    elif kind == "face":
        value = rng.randrange(16)  # small domain so value filters hit
    else:
        value = ""
    fix = GpsFix(rng.randint(-100_000, 100_000), rng.randint(-100_000, 100_000),
                 rng.randint(0, t_range))
    return Detection(0, kind, value, fix, rng.getrandbits(64), f"w{rng.randrange(3)}",
                     float(rng.randint(0, t_range)))


def random_filter(rng):
    kwargs = {}
    if rng.random() < 0.5:
        kwargs["kind"] = rng.choice(["plate", "face", "gps"])
    if rng.random() < 0.4:
        if kwargs.get("kind") == "face":
            kwargs["value"] = rng.randrange(16)
        elif kwargs.get("kind") == "plate":
            kwargs["value"] = rng.choice(PLATES)
    if rng.random() < 0.5:
        a, b = sorted(rng.randint(0, 100_000) for _ in range(2))
        kwargs["t_from"], kwargs["t_to"] = float(a), float(b)
    if rng.random() < 0.5:
        lat = sorted(rng.randint(-100_000, 100_000) for _ in range(2))
        lon = sorted(rng.randint(-100_000, 100_000) for _ in range(2))
        kwargs["bbox"] = (lat[0], lon[0], lat[1], lon[1])
    return QueryFilter(**kwargs)


def test_put_assigns_monotone_ids():
    store = DetectionStore()
    rng = random.Random(1)
    ids = [store.put_detection(random_detection(rng)).detection_id for _ in range(100)]
    assert ids == list(range(1, 101))


def test_insert_then_query_by_value():
    store = DetectionStore()
    det = store.put_detection(
        Detection(0, "plate", "AB123CD", GpsFix(1, 2, 3), 9, "w0", 50.0))
    hits = store.query_detections(QueryFilter(kind="plate", value="AB123CD"))
    assert hits == [det]
    assert store.query_detections(QueryFilter(kind="plate", value="ZZ999ZZ")) == []


def test_empty_store_any_filter():
    store = DetectionStore()
    assert store.query_detections(QueryFilter()) == []
    assert store.query_detections(QueryFilter(kind="face", value=3)) == []


def test_whole_globe_bbox_returns_everything():
    store = DetectionStore()
    rng = random.Random(2)
    dets = [store.put_detection(random_detection(rng)) for _ in range(50)]
    bbox = (-900_000_000, -1_800_000_000, 900_000_000, 1_800_000_000)
    hits = store.query_detections(QueryFilter(bbox=bbox))
    assert len(hits) == 50
    assert {d.detection_id for d in hits} == {d.detection_id for d in dets}


def test_query_equals_brute_force_scan():
    store = DetectionStore()
    rng = random.Random(42)
    for _ in range(1000):
        store.put_detection(random_detection(rng))
    for _ in range(200):
        flt = random_filter(rng)
        assert store.query_detections(flt) == store.scan(flt)


def test_query_order_is_time_then_id():
    store = DetectionStore()
    fix = GpsFix(0, 0, 0)
    a = store.put_detection(Detection(0, "gps", "", fix, 1, "w0", 30.0))
    b = store.put_detection(Detection(0, "gps", "", fix, 2, "w0", 10.0))
    c = store.put_detection(Detection(0, "gps", "", fix, 3, "w0", 30.0))
    assert [d.detection_id for d in store.query_detections(QueryFilter())] == \
        [b.detection_id, a.detection_id, c.detection_id]


def test_bad_filters_rejected():
    store = DetectionStore()
    with pytest.raises(BadFilter):
        store.query_detections(QueryFilter(t_from=10.0, t_to=1.0))
    with pytest.raises(BadFilter):
        store.query_detections(QueryFilter(bbox=(5, 0, 1, 10)))
    with pytest.raises(BadFilter):
        store.query_detections(QueryFilter(kind="sonar"))


def test_detection_snapshot_roundtrip(tmp_path):
    store = DetectionStore()
    rng = random.Random(3)
    for _ in range(40):
        store.put_detection(random_detection(rng))
    path = tmp_path / "detections.jsonl"
    store.save_jsonl(str(path))
    loaded = DetectionStore()
    loaded.load_jsonl(str(path))
    assert loaded.all() == store.all()


def test_blob_roundtrip_and_idempotence():
    blobs = BlobStore()
    rng = random.Random(4)
    for _ in range(30):
        data = bytes(rng.randrange(256) for _ in range(rng.randint(0, 4096)))
        digest = blobs.put(data)
        assert blobs.put(data) == digest
        assert blobs.get(digest) == data
    with pytest.raises(NotFound):
        blobs.get(0x1234)


def test_blob_roundtrip_large():
    blobs = BlobStore()
    data = random.Random(5).randbytes(1 << 20)
    assert blobs.get(blobs.put(data)) == data


def test_watchlist_add_remove_list():
    wl = WatchlistStore()
    e1 = wl.watchlist_add("plate", "AB123CD", "stolen")
    assert e1.entry_id == 1
    with pytest.raises(DuplicateEntry):
        wl.watchlist_add("plate", "AB123CD", "again")
    e2 = wl.watchlist_add("face", 2749, "suspect")
    assert e2.entry_id == 2
    assert [e.entry_id for e in wl.watchlist_list()] == [1, 2]
    wl.watchlist_remove(1)
    assert [e.entry_id for e in wl.watchlist_list()] == [2]
    with pytest.raises(UnknownEntry):
        wl.watchlist_remove(1)
    # value freed by removal can be re-added under a fresh id
    assert wl.watchlist_add("plate", "AB123CD").entry_id == 3


def test_watchlist_value_domain():
    wl = WatchlistStore()
    with pytest.raises(BadValue):
        wl.watchlist_add("face", 5000)
    with pytest.raises(BadValue):
        wl.watchlist_add("plate", "nope")
    with pytest.raises(BadValue):
        wl.watchlist_add("gps", "")


def test_watchlist_snapshot_roundtrip(tmp_path):
    wl = WatchlistStore()
    wl.watchlist_add("plate", "AB123CD", "stolen", now_ms=5)
    wl.watchlist_add("face", 7, "suspect", now_ms=6)
    path = tmp_path / "watchlist.jsonl"
    wl.save_jsonl(str(path))
    back = WatchlistStore()
    back.load_jsonl(str(path))
    assert back.watchlist_list() == wl.watchlist_list()
    assert back.watchlist_add("plate", "ZZ999ZZ").entry_id == 3
