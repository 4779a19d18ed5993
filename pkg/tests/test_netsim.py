import random

import pytest

from vcsim.netsim import (
    MSG_ACK,
    MSG_FRAME_UPLOAD,
    Link,
    Network,
    UnknownLink,
    VirtualClock,
    calibrate_table1,
    frame_message,
    parse_message,
    transfer_time,
)


def test_wire_framing_roundtrip():
    msg = frame_message(MSG_FRAME_UPLOAD, b"hello")
    assert len(msg) == 5 + 5
    assert msg[:4] == (5).to_bytes(4, "little")
    assert parse_message(msg) == (MSG_FRAME_UPLOAD, b"hello")
    with pytest.raises(ValueError):
        parse_message(msg[:-1])


def test_calibration_bandwidths():
    v2r, r2c = calibrate_table1()
    assert v2r.bandwidth_Bps == pytest.approx(12_890.625, abs=1e-9)
    assert r2c.bandwidth_Bps == pytest.approx(15_420.5607, abs=1e-4)
    assert v2r.base_latency_s == r2c.base_latency_s == 0.05


def test_transfer_time_reproduces_measurements():
    v2r, r2c = calibrate_table1()
    assert transfer_time(16_500, v2r) == pytest.approx(1.33, abs=1e-9)
    assert transfer_time(16_500, r2c) == pytest.approx(1.12, abs=1e-9)


def test_transfer_time_zero_payload_is_latency():
    link = Link("l", "a", "b", base_latency_s=0.2, bandwidth_Bps=1000.0)
    assert transfer_time(0, link) == 0.2


def test_transfer_time_linear():
    v2r, _ = calibrate_table1()
    assert transfer_time(33_000, v2r) == pytest.approx(0.05 + 33_000 / 12_890.625, abs=1e-12)
    assert transfer_time(33_000, v2r) == pytest.approx(2.61, abs=1e-9)


def test_fifo_bandwidth_serialization():
    net = Network()
    v2r, _ = calibrate_table1()
    net.add_link(v2r)
    got = []
    net.add_node("rsu", lambda ev: got.append((ev.due_ms, ev.payload)))
    net.schedule_send(bytes(16_500), v2r.link_id)
    net.schedule_send(bytes(16_500), v2r.link_id)
    net.run_until()
    assert [round(t, 6) for t, _ in got] == [pytest.approx(1330.0), pytest.approx(2610.0)]


def test_fifo_order_preserved_random_sizes():
    rng = random.Random(17)
    net = Network()
    link = Link("l", "a", "b", base_latency_s=0.01, bandwidth_Bps=5_000.0)
    net.add_link(link)
    got = []
    net.add_node("b", lambda ev: got.append(ev.payload))
    sent = []
    for i in range(50):
        msg = bytes([i]) * rng.randint(1, 400)
        sent.append(msg)
        net.schedule_send(msg, "l")
    net.run_until()
    assert got == sent


def test_unknown_link_rejected():
    net = Network()
    with pytest.raises(UnknownLink):
        net.schedule_send(b"x", "nope")


def test_loss_prob_extremes():
    for p, expect_deliveries in ((0.0, 20), (1.0, 0)):
        net = Network(seed=5)
        net.add_link(Link("l", "a", "b", base_latency_s=0.0, bandwidth_Bps=1e6, loss_prob=p))
        got = []
        net.add_node("b", lambda ev: got.append(ev))
        for _ in range(20):
            net.schedule_send(b"payload", "l")
        net.run_until()
        assert len(got) == expect_deliveries
        assert net.drops == 20 - expect_deliveries


def test_run_until_empty_queue_clock_unchanged():
    net = Network()
    assert net.run_until() == []
    assert net.clock.now_ms == 0.0
    assert net.event_log == []


def test_run_until_horizon_leaves_future_events():
    net = Network()
    net.add_node("n", lambda ev: None)
    net.schedule_timer(100.0, "n", "a")
    net.schedule_timer(2000.0, "n", "b")
    processed = net.run_until(500.0)
    assert [e.payload for e in processed] == ["a"]
    assert net.pending() == 1
    assert net.clock.now_ms == 100.0
    net.run_until()
    assert net.clock.now_ms == 2000.0


def test_clock_monotone_and_tiebreak_by_seq():
    net = Network()
    order = []
    net.add_node("n", lambda ev: order.append(ev.payload))
    net.schedule_timer(50.0, "n", "first")
    net.schedule_timer(50.0, "n", "second")
    net.schedule_timer(10.0, "n", "early")
    net.run_until()
    assert order == ["early", "first", "second"]
    times = [e.due_ms for e in net.event_log]
    assert times == sorted(times)


def test_handlers_can_schedule_more_events():
    net = Network()
    v2r, r2c = calibrate_table1()
    v2r = Link("v->r", "vehicle", "rsu", v2r.base_latency_s, v2r.bandwidth_Bps)
    r2c = Link("r->c", "rsu", "cloud", r2c.base_latency_s, r2c.bandwidth_Bps)
    net.add_link(v2r)
    net.add_link(r2c)
    arrivals = []
    net.add_node("rsu", lambda ev: net.schedule_send(ev.payload, "r->c"))
    net.add_node("cloud", lambda ev: arrivals.append(ev.due_ms))
    net.schedule_send(bytes(16_500), "v->r")
    net.run_until()
    assert arrivals == [pytest.approx(2450.0, abs=1e-6)]  # 1.33 s + 1.12 s


def test_event_log_digest_deterministic():
    def run(seed):
        net = Network(seed=seed)
        net.add_link(Link("l", "a", "b", base_latency_s=0.01, bandwidth_Bps=1e4, loss_prob=0.3))
        net.add_node("b", lambda ev: None)
        rng = random.Random(seed)
        for _ in range(40):
            net.schedule_send(bytes(rng.randint(1, 500)), "l")
        net.run_until()
        return net.log_digest()

    assert run(42) == run(42)
    assert run(42) != run(43)


def test_bytes_sent_accounting():
    net = Network()
    net.add_link(Link("l", "a", "b", bandwidth_Bps=1e6))
    net.add_node("b", lambda ev: None)
    net.schedule_send(bytes(100), "l")
    net.schedule_send(bytes(250), "l")
    net.run_until()
    assert net.bytes_sent["l"] == 350


def test_virtual_clock_advance():
    clock = VirtualClock()
    clock.advance_to(10.0)
    clock.advance_to(5.0)
    assert clock.now_ms == 10.0
