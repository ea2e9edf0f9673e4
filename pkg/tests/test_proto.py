import heapq
import itertools

import pytest
from hypothesis import given, settings, strategies as st

from agentnet import proto
from agentnet.proto import (
    ACK, FIN, HEADER_LEN, RELIABLE, CustomHeader, Datagram, Legacy, LlmProtoReceiver, LlmProtoSender,
    decode_header, encode, encode_header, flow_stats,
)

headers = st.builds(
    lambda flags, sid, seq, ts, ack: CustomHeader(flags, sid, seq, ts, ack if flags & ACK else 0),
    st.integers(0, 7), st.integers(0, 0xFFFF), st.integers(0, 2**32 - 1), st.integers(0, 2**64 - 1),
    st.integers(0, 2**32 - 1),
)


@given(headers, st.binary(max_size=64))
@settings(max_examples=10_000)
def test_header_round_trip(h, payload):
    raw = encode(h, payload)
    assert len(encode_header(h)) == HEADER_LEN
    msg = decode_header(raw)
    assert isinstance(msg, Datagram)
    assert msg.header == h and msg.payload == payload


def test_layout_is_big_endian():
    h = CustomHeader(flags=RELIABLE | ACK, stream_id=0x0102, seq=0x03040506, timestamp_us=0x0708090A0B0C0D0E,
                     ack_seq=0x0F101112)
    raw = encode_header(h)
    assert raw[:4] == bytes.fromhex("ABCD1234")
    assert raw[4] == 1 and raw[5] == 0x03
    assert raw[6:8] == bytes.fromhex("0102")
    assert raw[8:12] == bytes.fromhex("03040506")
    assert raw[12:20] == bytes.fromhex("0708090A0B0C0D0E")
    assert raw[20:24] == bytes.fromhex("0F101112")


def test_zero_header_tail_is_zero():
    raw = encode_header(CustomHeader())
    assert raw[:4] == bytes.fromhex("ABCD1234") and raw[8:] == bytes(16)


def test_legacy_and_corruption():
    assert decode_header(b"hello") == Legacy(b"hello")
    good = encode_header(CustomHeader())
    assert decode_header(good) == Datagram(CustomHeader(), b"")
    bad = bytearray(good)
    bad[5] = 0x08
    with pytest.raises(proto.ReservedBitsSet):
        decode_header(bytes(bad))
    with pytest.raises(proto.ReservedBitsSet):
        encode_header(CustomHeader(flags=0x10))


def test_submit_rules():
    s = LlmProtoSender()
    with pytest.raises(proto.PayloadTooLarge):
        s.submit(bytes(1401), True)
    s.submit(bytes(10), False)
    s.on_tick(0)
    assert not s.unacked
    s.close()
    with pytest.raises(proto.StreamClosed):
        s.submit(b"x", True)


class Link:
    """Two-way channel with a fixed delay and scripted drops."""

    def __init__(self, sender, receiver, delay_us=10_000, drop_fwd=(), drop_rev=()):
        self.s, self.r = sender, receiver
        self.delay = delay_us
        self.drop_fwd, self.drop_rev = set(drop_fwd), set(drop_rev)
        self.n_fwd = self.n_rev = 0
        self.events = []
        self.tie = itertools.count()
        self.deliveries = []
        self.emitted = []

    def run(self, limit_us=600_000_000):
        now = 0
        while not self.s.finished:
            wake = self.s.next_wakeup()
            nxt = self.events[0][0] if self.events else None
            cands = [t for t in (wake, nxt) if t is not None]
            if not cands:
                break
            now = max(now, min(cands))
            if now > limit_us:
                raise AssertionError("stream did not finish")
            while self.events and self.events[0][0] <= now:
                _, _, kind, data = heapq.heappop(self.events)
                if kind == "fwd":
                    got, ack = self.r.on_datagram(data, now)
                    self.deliveries += got
                    if ack is not None:
                        self.n_rev += 1
                        if self.n_rev not in self.drop_rev:
                            heapq.heappush(self.events, (now + self.delay, next(self.tie), "rev", ack))
                else:
                    self.s.on_datagram(data, now)
            for data in self.s.on_tick(now):
                self.emitted.append(decode_header(data).header)
                self.n_fwd += 1
                if self.n_fwd not in self.drop_fwd:
                    heapq.heappush(self.events, (now + self.delay, next(self.tie), "fwd", data))
        return now


def _stream(n, reliable_mask, rate=1_000_000):
    s = LlmProtoSender(pacing_rate_bps=rate)
    r = LlmProtoReceiver()
    for i in range(n):
        s.submit(bytes([i]) * 100, bool(reliable_mask >> i & 1))
    s.close()
    return s, r


def test_reliable_completeness_exhaustive_drops():
    # every subset of the first 8 forward and first 4 reverse datagrams
    for fwd in range(1 << 8):
        drop_f = {i + 1 for i in range(8) if fwd >> i & 1}
        for rev in range(1 << 4):
            drop_r = {i + 1 for i in range(4) if rev >> i & 1}
            s, r = _stream(5, 0b11111)
            link = Link(s, r, drop_fwd=drop_f, drop_rev=drop_r)
            link.run()
            assert s.fin_acked
            got = sorted(d.seq for d in link.deliveries if d.reliable)
            assert got == [1, 2, 3, 4, 5], (drop_f, drop_r)


def test_best_effort_once_under_drops():
    for fwd in range(1 << 6):
        drop_f = {i + 1 for i in range(6) if fwd >> i & 1}
        s, r = _stream(5, 0b10101)
        link = Link(s, r, drop_fwd=drop_f)
        link.run()
        be = [h.seq for h in link.emitted if not h.reliable]
        assert sorted(be) == [1, 2]  # emitted exactly once each
        rel = sorted({d.seq for d in link.deliveries if d.reliable})
        assert rel == [1, 2, 3]
        firsts = [h.seq for h in link.emitted if h.reliable]
        originals = [q for i, q in enumerate(firsts) if q not in firsts[:i]]
        assert originals == sorted(originals)  # strictly increasing first sends


def test_single_drop_single_retransmission():
    s, r = _stream(1, 1)
    Link(s, r, drop_fwd={1}).run()
    assert s.retransmissions == 1


def test_zero_loss_no_retransmissions():
    s, r = _stream(50, (1 << 50) - 1 & 0x5555555555555)
    Link(s, r).run()
    assert s.retransmissions == 0
    st_ = flow_stats(r, s)
    assert st_.reliable_ratio == 1.0 and st_.best_effort_ratio == 1.0


def test_drain_time_matches_pacing_arithmetic():
    s = LlmProtoSender(pacing_rate_bps=1_000_000)
    r = LlmProtoReceiver()
    for i in range(10_000):
        s.submit(bytes(1400), i % 2 == 0)
    s.close()
    now, count = 0, 0
    while s.queue:
        for d in s.on_tick(now):
            count += 1
            _, ack = r.on_datagram(d, now)
            if ack is not None:
                s.on_datagram(ack, now)
        now = s._next_send
    # 10000 * 1400 * 8 / 1e6 seconds of payload spacing
    assert count == 10_000
    assert abs(now / 1e6 - 112.0) < 0.02


def test_pacing_window_bound():
    s = LlmProtoSender(pacing_rate_bps=1_000_000)
    for _ in range(2000):
        s.submit(bytes(1400), False)
    s.close()
    sent = []
    now = 0
    while s.queue:
        for d in s.on_tick(now):
            sent.append((now, len(d)))
        now = s._next_send
    horizon = sent[-1][0]
    for t0 in range(0, horizon - 1_000_000, 250_000):
        window = sum(n - HEADER_LEN for t, n in sent if t0 <= t < t0 + 1_000_000)
        assert window <= 1_000_000 / 8 + 1400
    total = sum(n - HEADER_LEN for t, n in sent if t < 10_000_000)
    assert abs(total - 10 * 1_000_000 / 8) <= 1400


def test_srtt_converges():
    s = LlmProtoSender()
    for i in range(60):
        s.submit(b"x", True)
    s.close()
    now = 0
    for i in range(1, 51):
        s.on_tick(now)
        s.on_ack(i, now, now + 40_000)
        now += 50_000
    assert s.srtt_us == pytest.approx(40_000, rel=0.01)
    assert s.rto_us >= s.rto_floor_us


def test_stale_ack_is_ignored():
    s = LlmProtoSender()
    s.submit(b"a", True)
    s.submit(b"b", True)
    s.on_tick(0)
    s.on_tick(s._next_send)
    s.on_ack(1, 0, 10_000)
    before = (dict(s.unacked), s.srtt_us, s.rto_us)
    s.on_ack(1, 0, 20_000)
    assert (dict(s.unacked), s.srtt_us, s.rto_us) == before


def _rel(seq, ts=1):
    return encode(CustomHeader(RELIABLE, 1, seq, ts), b"p")


def test_cumulative_ack_orders():
    r = LlmProtoReceiver()
    assert [decode_header(r.on_datagram(_rel(q), 5)[1]).header.ack_seq for q in (1, 2, 3)] == [1, 2, 3]
    r = LlmProtoReceiver()
    acks = [decode_header(r.on_datagram(_rel(q), 5)[1]).header.ack_seq for q in (1, 3, 2)]
    assert acks == [1, 1, 3]


def test_duplicate_suppressed():
    r = LlmProtoReceiver()
    r.on_datagram(_rel(1), 0)
    r.on_datagram(_rel(2), 0)
    got, _ = r.on_datagram(_rel(2), 0)
    assert got == [] and r.duplicates == 1 and r.delivered[True] == 2


def test_ack_echoes_timestamp_and_carries_sack():
    r = LlmProtoReceiver()
    _, ack = r.on_datagram(_rel(3, ts=777), 0)
    h = decode_header(ack).header
    assert h.is_ack and h.timestamp_us == 777 and h.seq == 3 and h.ack_seq == 0


def test_stream_incomplete():
    s, r = _stream(2, 3)
    with pytest.raises(proto.StreamIncomplete):
        flow_stats(r, s)


def test_retry_limit_aborts():
    s, r = _stream(1, 1)
    link = Link(s, r, drop_fwd=set(range(1, 100)))
    with pytest.raises(proto.RetryLimitExceeded):
        link.run()
    assert s.aborted


def test_fin_flag_on_last():
    s, r = _stream(2, 0b11)
    link = Link(s, r)
    link.run()
    assert link.emitted[-1].flags & FIN
