"""LLM-Proto: selective-reliability messaging carried in UDP payloads.

Wire layout (24 bytes, big-endian)::

    0      4   5   6      8      12               20     24
    +------+---+---+------+------+----------------+------+
    |magic |ver|flg|stream| seq  |  timestamp_us  | ack  |
    +------+---+---+------+------+----------------+------+

Reliable and best-effort messages use separate sequence spaces inside one
stream (the RELIABLE flag selects the space), so the cumulative ack over
reliable sequence numbers is well defined. ACK datagrams echo the
timestamp of the datagram that triggered them and carry that datagram's
sequence number in ``seq`` as a one-entry selective ack.
"""
from __future__ import annotations

import struct
from collections import OrderedDict, deque
from dataclasses import dataclass, field

from .errors import AgentNetError

MAGIC = 0xABCD1234
VERSION = 1
HEADER_LEN = 24
MAX_PAYLOAD = 1400

RELIABLE = 0x01
ACK = 0x02
FIN = 0x04
RESERVED_MASK = 0xF8

_HEADER = struct.Struct(">IBBHIQI")
_MAGIC_BYTES = MAGIC.to_bytes(4, "big")


class ProtoError(AgentNetError):
    pass


class ReservedBitsSet(ProtoError, ValueError):
    pass


class UnsupportedVersion(ProtoError, ValueError):
    pass


class PayloadTooLarge(ProtoError, ValueError):
    pass


class StreamClosed(ProtoError):
    pass


class RetryLimitExceeded(ProtoError):
    """A reliable message exhausted its transmissions; the stream is aborted."""

    def __init__(self, seq: int, attempts: int):
        super().__init__(f"reliable seq {seq} unacknowledged after {attempts} transmissions")
        self.seq = seq
        self.attempts = attempts


class StreamIncomplete(ProtoError):
    pass


@dataclass(frozen=True)
class CustomHeader:
    flags: int = 0
    stream_id: int = 0
    seq: int = 0
    timestamp_us: int = 0
    ack_seq: int = 0
    magic: int = MAGIC
    version: int = VERSION

    @property
    def reliable(self) -> bool:
        return bool(self.flags & RELIABLE)

    @property
    def is_ack(self) -> bool:
        return bool(self.flags & ACK)

    @property
    def fin(self) -> bool:
        return bool(self.flags & FIN)


@dataclass(frozen=True)
class Datagram:
    header: CustomHeader
    payload: bytes = b""


@dataclass(frozen=True)
class Legacy:
    """Traffic without the magic prefix, passed through untouched."""

    payload: bytes


def _check_range(name: str, value: int, bits: int) -> None:
    if not 0 <= value < (1 << bits):
        raise ValueError(f"{name}={value} does not fit in {bits} bits")


def encode_header(h: CustomHeader) -> bytes:
    if h.magic != MAGIC:
        raise ValueError(f"magic must be {MAGIC:#x}")
    if h.version != VERSION:
        raise UnsupportedVersion(f"version {h.version}")
    if h.flags & RESERVED_MASK:
        raise ReservedBitsSet(f"flags {h.flags:#04x} use reserved bits")
    _check_range("flags", h.flags, 8)
    _check_range("stream_id", h.stream_id, 16)
    _check_range("seq", h.seq, 32)
    _check_range("timestamp_us", h.timestamp_us, 64)
    _check_range("ack_seq", h.ack_seq, 32)
    if h.ack_seq and not h.flags & ACK:
        raise ValueError("ack_seq must be 0 unless ACK is set")
    return _HEADER.pack(h.magic, h.version, h.flags, h.stream_id, h.seq, h.timestamp_us, h.ack_seq)


def encode(h: CustomHeader, payload: bytes = b"") -> bytes:
    return encode_header(h) + payload


def decode_header(data: bytes) -> Datagram | Legacy:
    """Classify ``data`` as an LLM-Proto datagram or legacy UDP payload."""
    if len(data) < HEADER_LEN or data[:4] != _MAGIC_BYTES:
        return Legacy(bytes(data))
    magic, version, flags, stream_id, seq, ts, ack_seq = _HEADER.unpack_from(data)
    if flags & RESERVED_MASK:
        raise ReservedBitsSet(f"flags {flags:#04x} use reserved bits")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}")
    header = CustomHeader(flags, stream_id, seq, ts, ack_seq, magic, version)
    return Datagram(header, bytes(data[HEADER_LEN:]))


def _pacing_cost_us(nbytes: int, rate_bps: int) -> int:
    # pacing follows application payload; empty control datagrams pay a header
    nbytes = max(nbytes, HEADER_LEN)
    return -(-(nbytes * 8_000_000) // rate_bps)


@dataclass
class _Unacked:
    payload: bytes
    send_time: int
    retries: int = 0
    fin: bool = False


def _bin_add(series: dict[int, int], now_us: int, nbytes: int) -> None:
    sec = now_us // 1_000_000
    series[sec] = series.get(sec, 0) + nbytes


def _rate_series(series: dict[int, int]) -> list[tuple[int, float]]:
    if not series:
        return []
    lo, hi = min(series), max(series)
    return [(s, series.get(s, 0) * 8.0) for s in range(lo, hi + 1)]


class LlmProtoSender:
    """Paced sender; only RELIABLE messages are buffered for retransmission."""

    def __init__(
        self,
        stream_id: int = 1,
        pacing_rate_bps: int = 1_000_000,
        rto_floor_us: int = 200_000,
        rto_cap_us: int = 8_000_000,
        initial_rto_us: int = 1_000_000,
        retry_limit: int = 10,
    ):
        if pacing_rate_bps <= 0:
            raise ValueError("pacing rate must be positive")
        self.stream_id = stream_id
        self.pacing_rate_bps = int(pacing_rate_bps)
        self.rto_floor_us = rto_floor_us
        self.rto_cap_us = rto_cap_us
        self.retry_limit = retry_limit
        self.next_seq = {True: 1, False: 1}
        self.queue: deque[tuple[int, bytes, bool]] = deque()
        self.unacked: OrderedDict[int, _Unacked] = OrderedDict()
        self._retransmit: deque[int] = deque()
        self.srtt_us: float | None = None
        self.rttvar_us: float = 0.0
        self.rto_us: int = max(initial_rto_us, rto_floor_us)
        self.bytes_sent = 0
        self.offered = {True: 0, False: 0}
        self.transmissions = {True: 0, False: 0}
        self.retransmissions = 0
        self.closed = False
        self.fin_sent = False
        self.fin_acked = False
        self.aborted = False
        self.first_emit_us: int | None = None
        self.reliable_done_us: int | None = None
        self.send_series: dict[int, int] = {}
        self._next_send = 0

    # application side ------------------------------------------------
    def submit(self, payload: bytes, reliable: bool) -> int:
        if self.closed:
            raise StreamClosed(f"stream {self.stream_id} is closed")
        if len(payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"{len(payload)} B exceeds {MAX_PAYLOAD} B")
        reliable = bool(reliable)
        seq = self.next_seq[reliable]
        self.next_seq[reliable] = seq + 1
        self.queue.append((seq, bytes(payload), reliable))
        self.offered[reliable] += 1
        return seq

    def close(self) -> None:
        self.closed = True

    @property
    def finished(self) -> bool:
        return self.fin_acked or self.aborted

    # timers ------------------------------------------------------------
    def _timeout(self, entry: _Unacked) -> int:
        return min(self.rto_us << entry.retries, self.rto_cap_us)

    def _collect_due(self, now: int) -> None:
        pending = set(self._retransmit)
        for seq, entry in self.unacked.items():
            if seq in pending:
                continue
            if now - entry.send_time >= self._timeout(entry):
                if entry.retries + 1 >= self.retry_limit:
                    self.aborted = True
                    raise RetryLimitExceeded(seq, entry.retries + 1)
                self._retransmit.append(seq)

    def _fin_ready(self) -> bool:
        return self.closed and not self.fin_sent and not self.queue and not self.unacked

    def _has_work(self) -> bool:
        return bool(self._retransmit or self.queue or self._fin_ready())

    def next_wakeup(self) -> int | None:
        if self.finished:
            return None
        times = []
        if self._has_work():
            times.append(self._next_send)
        pending = set(self._retransmit)
        for seq, entry in self.unacked.items():
            if seq not in pending:
                times.append(entry.send_time + self._timeout(entry))
        return min(times) if times else None

    def _emit(self, now: int, flags: int, seq: int, payload: bytes) -> bytes:
        data = encode(CustomHeader(flags=flags, stream_id=self.stream_id, seq=seq, timestamp_us=now), payload)
        if self.first_emit_us is None:
            self.first_emit_us = now
        start = self._next_send if self._next_send > now else now
        self._next_send = start + _pacing_cost_us(len(payload), self.pacing_rate_bps)
        self.bytes_sent += len(data)
        _bin_add(self.send_series, now, len(data))
        return data

    def on_tick(self, now: int) -> list[bytes]:
        """Emit whatever pacing allows at ``now``; retransmissions go first."""
        if self.finished:
            return []
        self._collect_due(now)
        out: list[bytes] = []
        while self._next_send <= now:
            if self._retransmit:
                seq = self._retransmit.popleft()
                entry = self.unacked.get(seq)
                if entry is None:
                    continue
                entry.retries += 1
                entry.send_time = now
                self.retransmissions += 1
                flags = RELIABLE | (FIN if entry.fin else 0)
                out.append(self._emit(now, flags, seq, entry.payload))
                self.transmissions[True] += 1
            elif self.queue:
                seq, payload, reliable = self.queue.popleft()
                if reliable:
                    self.unacked[seq] = _Unacked(payload, now)
                out.append(self._emit(now, RELIABLE if reliable else 0, seq, payload))
                self.transmissions[reliable] += 1
            elif self._fin_ready():
                seq = self.next_seq[True]
                self.next_seq[True] = seq + 1
                self.unacked[seq] = _Unacked(b"", now, fin=True)
                self.fin_sent = True
                out.append(self._emit(now, RELIABLE | FIN, seq, b""))
            else:
                break
        return out

    # ack path ------------------------------------------------------------
    def _rtt_sample(self, rtt: float) -> None:
        if self.srtt_us is None:
            self.srtt_us = rtt
            self.rttvar_us = rtt / 2
        else:
            self.rttvar_us = 0.75 * self.rttvar_us + 0.25 * abs(self.srtt_us - rtt)
            self.srtt_us = 0.875 * self.srtt_us + 0.125 * rtt
        self.rto_us = max(self.rto_floor_us, int(self.srtt_us + 4 * self.rttvar_us))

    def on_ack(self, ack_seq: int, echo_ts: int, now: int, sack_seq: int | None = None) -> None:
        removed = [seq for seq in self.unacked if seq <= ack_seq]
        if sack_seq is not None and sack_seq > ack_seq and sack_seq in self.unacked:
            removed.append(sack_seq)
        if not removed:
            return
        for seq in removed:
            entry = self.unacked.pop(seq)
            if entry.fin:
                self.fin_acked = True
        if 0 < echo_ts <= now:
            self._rtt_sample(now - echo_ts)
        if not self.unacked and not self.queue and self.reliable_done_us is None and self.closed:
            self.reliable_done_us = now

    def on_datagram(self, data: bytes, now: int) -> None:
        msg = decode_header(data)
        if isinstance(msg, Datagram) and msg.header.is_ack and msg.header.stream_id == self.stream_id:
            self.on_ack(msg.header.ack_seq, msg.header.timestamp_us, now, sack_seq=msg.header.seq)


@dataclass
class Delivery:
    seq: int
    reliable: bool
    payload: bytes
    time_us: int


class LlmProtoReceiver:
    def __init__(self, stream_id: int = 1, ack_every: int = 1):
        if ack_every < 1:
            raise ValueError("ack_every must be >= 1")
        self.stream_id = stream_id
        self.ack_every = ack_every
        self.ack_seq = 0
        self._ahead: set[int] = set()
        self._best_effort_seen: set[int] = set()
        self.delivered = {True: 0, False: 0}
        self.duplicates = 0
        self.legacy = 0
        self.fin_time_us: int | None = None
        self.first_arrival_us: int | None = None
        self.last_delivery_us: int | None = None
        self.recv_series: dict[int, int] = {}
        self._reliable_arrivals = 0

    def _ack(self, seq: int, ts: int) -> bytes:
        h = CustomHeader(flags=ACK, stream_id=self.stream_id, seq=seq, timestamp_us=ts, ack_seq=self.ack_seq)
        return encode_header(h)

    def on_datagram(self, data: bytes, now: int) -> tuple[list[Delivery], bytes | None]:
        msg = decode_header(data)
        if isinstance(msg, Legacy):
            self.legacy += 1
            return [], None
        h = msg.header
        if h.is_ack or h.stream_id != self.stream_id:
            return [], None
        if self.first_arrival_us is None:
            self.first_arrival_us = now
        _bin_add(self.recv_series, now, len(data))
        if not h.reliable:
            if h.seq in self._best_effort_seen:
                self.duplicates += 1
                return [], None
            self._best_effort_seen.add(h.seq)
            self.delivered[False] += 1
            self.last_delivery_us = now
            return [Delivery(h.seq, False, msg.payload, now)], None

        duplicate = h.seq <= self.ack_seq or h.seq in self._ahead
        deliveries: list[Delivery] = []
        if duplicate:
            self.duplicates += 1
        else:
            self._ahead.add(h.seq)
            while self.ack_seq + 1 in self._ahead:
                self.ack_seq += 1
                self._ahead.discard(self.ack_seq)
            if h.fin:
                self.fin_time_us = now
            else:
                self.delivered[True] += 1
                self.last_delivery_us = now
                deliveries.append(Delivery(h.seq, True, msg.payload, now))
        self._reliable_arrivals += 1
        if duplicate or h.fin or self._reliable_arrivals % self.ack_every == 0:
            return deliveries, self._ack(h.seq, h.timestamp_us)
        return deliveries, None


@dataclass
class FlowStats:
    offered_reliable: int
    offered_best_effort: int
    delivered_reliable: int
    delivered_best_effort: int
    flow_completion_time: float | None
    send_rate: list[tuple[int, float]] = field(default_factory=list)
    recv_rate: list[tuple[int, float]] = field(default_factory=list)
    retransmissions: int = 0
    duplicates: int = 0
    aborted: bool = False

    @property
    def reliable_ratio(self) -> float:
        return self.delivered_reliable / self.offered_reliable if self.offered_reliable else 1.0

    @property
    def best_effort_ratio(self) -> float:
        return self.delivered_best_effort / self.offered_best_effort if self.offered_best_effort else 1.0


def flow_stats(receiver: LlmProtoReceiver, sender: LlmProtoSender) -> FlowStats:
    if not sender.finished:
        raise StreamIncomplete(f"stream {sender.stream_id} has not finished")
    fct = None
    if sender.fin_acked and sender.first_emit_us is not None:
        end = max(sender.reliable_done_us or 0, receiver.fin_time_us or 0)
        fct = (end - sender.first_emit_us) / 1e6
    return FlowStats(
        offered_reliable=sender.offered[True],
        offered_best_effort=sender.offered[False],
        delivered_reliable=receiver.delivered[True],
        delivered_best_effort=receiver.delivered[False],
        flow_completion_time=fct,
        send_rate=_rate_series(sender.send_series),
        recv_rate=_rate_series(receiver.recv_series),
        retransmissions=sender.retransmissions,
        duplicates=receiver.duplicates,
        aborted=sender.aborted,
    )
