"""Endpoints driven by the simulator: UDP-like, LLM-Proto and TCP-like."""
from __future__ import annotations

from .. import proto
from ..cc import Connection
from .network import Network, Packet

IP_UDP_OVERHEAD = 28
TCP_OVERHEAD = 40
TCP_ACK_SIZE = 40
LLM_ACK_SIZE = proto.HEADER_LEN + IP_UDP_OVERHEAD


def is_reliable(index: int, fraction: float) -> bool:
    """Deterministic class pattern: exactly ``round(n * fraction)`` of any
    prefix of length n (up to one) is reliable."""
    return int((index + 1) * fraction + 1e-9) > int(index * fraction + 1e-9)


def tx_gap_us(nbytes: int, rate_bps: float) -> int:
    return -(-(nbytes * 8_000_000) // int(rate_bps))


class FlowRecorder:
    """Per-second bins feeding the CSV trace of one flow."""

    __slots__ = ("name", "bins", "cwnd_samples")

    def __init__(self, name: str):
        self.name = name
        # sec -> [goodput bytes, rtt sum us, rtt n, injected, dropped]
        self.bins: dict[int, list] = {}
        self.cwnd_samples: dict[int, list] = {}

    def _bin(self, now: int) -> list:
        sec = now // 1_000_000
        b = self.bins.get(sec)
        if b is None:
            b = self.bins[sec] = [0, 0.0, 0, 0, 0]
        return b

    def goodput(self, now: int, nbytes: int) -> None:
        self._bin(now)[0] += nbytes

    def rtt(self, now: int, rtt_us: float) -> None:
        b = self._bin(now)
        b[1] += rtt_us
        b[2] += 1

    def injected(self, pkt: Packet, now: int) -> None:
        if pkt.kind == "data":
            self._bin(now)[3] += 1

    def dropped(self, pkt: Packet, reason: str, now: int) -> None:
        if pkt.kind == "data":
            self._bin(now)[4] += 1

    def cwnd(self, now: int, value: float) -> None:
        self.cwnd_samples.setdefault(now // 1_000_000, []).append(value)

    def rows(self, last_sec: int) -> list[tuple]:
        out = []
        for sec in range(0, last_sec + 1):
            good, rsum, rn, inj, drop = self.bins.get(sec, (0, 0.0, 0, 0, 0))
            cw = self.cwnd_samples.get(sec)
            out.append((
                sec,
                good * 8.0,
                rsum / rn / 1000.0 if rn else None,
                100.0 * drop / inj if inj else 0.0,
                sum(cw) / len(cw) if cw else None,
            ))
        return out


class _Flow:
    """Shared bookkeeping for one foreground flow."""

    def __init__(self, net: Network, name: str, path: tuple, recorder: FlowRecorder, on_done=None):
        self.net = net
        self.sim = net.sim
        self.name = name
        self.path = tuple(path)
        self.rpath = tuple(reversed(path))
        self.recorder = recorder
        self.on_done = on_done
        self.done = False
        self.first_emit_us: int | None = None
        self.completion_us: int | None = None

    def _finish(self, now: int) -> None:
        if not self.done:
            self.done = True
            self.completion_us = now
            if self.on_done is not None:
                self.on_done(self)


# -- UDP-like -----------------------------------------------------------------
class UdpLikeFlow(_Flow):
    """Fire-and-forget source paced at the application rate."""

    def __init__(self, net, name, path, recorder, messages=10_000, size=1400, rate_bps=1_000_000,
                 reliable_fraction=0.5, start_us=0, on_done=None, drain_us=2_000_000):
        super().__init__(net, name, path, recorder, on_done)
        self.messages = messages
        self.size = size
        self.gap_us = tx_gap_us(size, rate_bps)
        self.fraction = reliable_fraction
        self.drain_us = drain_us
        self.offered = {True: 0, False: 0}
        self.delivered = {True: 0, False: 0}
        self.bytes_sent = 0
        self.last_emit_us: int | None = None
        self.last_arrival_us: int | None = None
        self._seen: set[int] = set()
        self._next = 0
        net.attach_endpoint(self.path[-1], name, self)
        self.sim.schedule(start_us, self._emit)

    def _emit(self) -> None:
        now = self.sim.now
        i = self._next
        reliable = is_reliable(i, self.fraction)
        pkt = Packet(self.name, "data", self.size + IP_UDP_OVERHEAD, self.path, seq=i + 1, ts=now,
                     reliable=reliable)
        self.offered[reliable] += 1
        self.bytes_sent += self.size
        if self.first_emit_us is None:
            self.first_emit_us = now
        self.last_emit_us = now
        self.net.send(pkt)
        self._next += 1
        if self._next < self.messages:
            self.sim.schedule(now + self.gap_us, self._emit)
        else:
            # nothing acknowledges UDP: declare completion once the path drained
            self.sim.schedule(now + self.drain_us, self._drained)

    def _drained(self) -> None:
        self._finish(self.sim.now)

    def receive(self, pkt: Packet) -> None:
        if pkt.seq in self._seen:
            return
        self._seen.add(pkt.seq)
        now = self.sim.now
        self.delivered[pkt.reliable] += 1
        self.last_arrival_us = now
        self.recorder.goodput(now, self.size)
        self.recorder.rtt(now, 2 * (now - pkt.ts))

    def stats(self) -> proto.FlowStats:
        fct = None
        if self.first_emit_us is not None and self.last_arrival_us is not None:
            fct = (self.last_arrival_us - self.first_emit_us) / 1e6
        return proto.FlowStats(
            offered_reliable=self.offered[True],
            offered_best_effort=self.offered[False],
            delivered_reliable=self.delivered[True],
            delivered_best_effort=self.delivered[False],
            flow_completion_time=fct,
        )

    def mean_send_rate_bps(self) -> float:
        if self.last_emit_us is None or self.last_emit_us == self.first_emit_us:
            return 0.0
        span = self.last_emit_us - self.first_emit_us + self.gap_us
        return self.bytes_sent * 8e6 / span


# -- LLM-Proto ------------------------------------------------------------------
class LlmProtoFlow(_Flow):
    """Sender and receiver state machines from :mod:`agentnet.proto` on a path."""

    def __init__(self, net, name, path, recorder, messages=10_000, size=1400, rate_bps=1_000_000,
                 reliable_fraction=0.5, start_us=0, on_done=None, stream_id=1, **sender_kw):
        super().__init__(net, name, path, recorder, on_done)
        self.sender = proto.LlmProtoSender(stream_id=stream_id, pacing_rate_bps=int(rate_bps), **sender_kw)
        self.receiver = proto.LlmProtoReceiver(stream_id=stream_id)
        self.messages = messages
        self.size = size
        self.fraction = reliable_fraction
        self._payload = bytes(size)
        self._tick_at: int | None = None
        self._token = 0
        net.attach_endpoint(self.path[-1], name, _Side(self._at_receiver))
        net.attach_endpoint(self.path[0], name, _Side(self._at_sender))
        self.sim.schedule(start_us, self._start)

    def _start(self) -> None:
        for i in range(self.messages):
            self.sender.submit(self._payload, is_reliable(i, self.fraction))
        self.sender.close()
        self._tick()

    def _arm(self) -> None:
        at = self.sender.next_wakeup()
        if at is None:
            return
        at = max(at, self.sim.now)
        if self._tick_at is not None and self._tick_at <= at:
            return
        self._token += 1
        self._tick_at = at
        self.sim.schedule(at, self._on_timer, self._token)

    def _on_timer(self, token: int) -> None:
        if token != self._token:
            return
        self._tick_at = None
        self._tick()

    def _tick(self) -> None:
        now = self.sim.now
        try:
            out = self.sender.on_tick(now)
        except proto.RetryLimitExceeded:
            self._finish(now)
            return
        for data in out:
            h = proto.decode_header(data).header
            pkt = Packet(self.name, "data", len(data) + IP_UDP_OVERHEAD, self.path, payload=data,
                         seq=h.seq, ts=now, reliable=h.reliable)
            self.net.send(pkt)
        if self.first_emit_us is None:
            self.first_emit_us = self.sender.first_emit_us
        self._arm()

    def _at_receiver(self, pkt: Packet) -> None:
        now = self.sim.now
        deliveries, ack = self.receiver.on_datagram(pkt.payload, now)
        for d in deliveries:
            self.recorder.goodput(now, len(d.payload))
        if ack is not None:
            self.net.send(Packet(self.name, "ack", len(ack) + IP_UDP_OVERHEAD, self.rpath, payload=ack))

    def _at_sender(self, pkt: Packet) -> None:
        now = self.sim.now
        self.sender.on_datagram(pkt.payload, now)
        if self.sender.srtt_us is not None:
            self.recorder.rtt(now, self.sender.srtt_us)
        if self.sender.finished:
            self._finish(now)
            return
        self._arm()

    def stats(self) -> proto.FlowStats:
        return proto.flow_stats(self.receiver, self.sender)

    def mean_send_rate_bps(self) -> float:
        s = self.sender
        if s.first_emit_us is None or not s.send_series:
            return 0.0
        # the sender stops emitting once the last message is out; measure over that span
        span = max(self.sender._next_send - s.first_emit_us, 1)
        return s.bytes_sent * 8e6 / span


class _Side:
    __slots__ = ("receive",)

    def __init__(self, fn):
        self.receive = fn


# -- TCP-like -----------------------------------------------------------------
class TcpLikeFlow(_Flow):
    """Cumulative-ack reliable transport whose window comes from a cc.Connection.

    Retransmits on three duplicate acks (NewReno partial-ack handling) and on
    RTO with go-back-N; a retransmission later shown spurious by the echoed
    timestamp is undone through the scheme's undo hook.
    """

    def __init__(self, net, name, path, recorder, conn: Connection, messages: int | None = 10_000,
                 size=1400, rate_bps: float | None = 1_000_000, reliable_fraction=0.5, start_us=0,
                 on_done=None, min_rto_us=200_000, max_rto_us=60_000_000, initial_rto_us=1_000_000):
        super().__init__(net, name, path, recorder, on_done)
        self.conn = conn
        self.total = messages
        self.size = size
        self.fraction = reliable_fraction
        self.start_us = start_us
        self.app_gap_us = tx_gap_us(size, rate_bps) if rate_bps else 0
        self.min_rto_us = min_rto_us
        self.max_rto_us = max_rto_us
        self.rto_us = initial_rto_us
        self.srtt_us: float | None = None
        self.rttvar_us = 0.0
        self.snd_una = 1
        self.snd_nxt = 1
        self.high = 0
        self.dupacks = 0
        self.recover = 0
        self.in_fast_recovery = False
        self.retransmissions = 0
        self.timeouts = 0
        self.fast_retransmits = 0
        self.undos = 0
        self.resets = 0
        self._undo_mark: tuple[int, int] | None = None
        self._next_pace = 0
        self._timer_token = 0
        self._timer_at: int | None = None
        self._wake_at: int | None = None
        # receiver
        self.rcv_nxt = 1
        self._ooo: set[int] = set()
        self.delivered = 0
        self.delivered_by_class = {True: 0, False: 0}
        self.last_delivery_us: int | None = None
        net.attach_endpoint(self.path[-1], name, _Side(self._at_receiver))
        net.attach_endpoint(self.path[0], name, _Side(self._at_sender))
        self.sim.schedule(start_us, self._try_send)

    # sender ---------------------------------------------------------------
    def _available(self, now: int) -> int:
        if self.app_gap_us:
            n = (now - self.start_us) // self.app_gap_us + 1
        else:
            n = 1 << 62
        return n if self.total is None else min(n, self.total)

    def _window(self) -> int:
        w = int(self.conn.state.cwnd)
        if self.in_fast_recovery:
            w += self.dupacks
        return max(w, 1)

    def _pacing_gap(self) -> int:
        gain = self.conn.scheme.pacing_gain
        s = self.conn.state
        if not gain or s.srtt_us <= 0:
            return 0
        return int(s.srtt_us / (s.cwnd * gain))

    def _try_send(self) -> None:
        if self.done:
            return
        now = self.sim.now
        avail = self._available(now)
        while self.snd_nxt - self.snd_una < self._window():
            if self.snd_nxt > avail:
                if self.total is None or self.snd_nxt <= self.total:
                    self._wake(self.start_us + (self.snd_nxt - 1) * self.app_gap_us)
                break
            if self._next_pace > now:
                self._wake(self._next_pace)
                break
            self._send(self.snd_nxt)
            self.snd_nxt += 1
            gap = self._pacing_gap()
            if gap:
                self._next_pace = now + gap

    def _wake(self, at: int) -> None:
        if self._wake_at is not None and self.sim.now < self._wake_at <= at:
            return
        self._wake_at = at
        self.sim.schedule(at, self._on_wake, at)

    def _on_wake(self, at: int) -> None:
        if self._wake_at == at:
            self._wake_at = None
        self._try_send()

    def _send(self, seq: int) -> None:
        now = self.sim.now
        if seq <= self.high:
            self.retransmissions += 1
            if self._undo_mark is None:
                self._undo_mark = (seq, now)
        else:
            self.high = seq
        if self.first_emit_us is None:
            self.first_emit_us = now
        pkt = Packet(self.name, "data", self.size + TCP_OVERHEAD, self.path, seq=seq, ts=now,
                     reliable=is_reliable(seq - 1, self.fraction))
        self.net.send(pkt)
        if self._timer_at is None:
            self._arm_timer()

    def _arm_timer(self) -> None:
        self._timer_token += 1
        self._timer_at = self.sim.now + self.rto_us
        self.sim.schedule(self._timer_at, self._on_timeout, self._timer_token)

    def _cancel_timer(self) -> None:
        self._timer_token += 1
        self._timer_at = None

    def _on_timeout(self, token: int) -> None:
        if token != self._timer_token or self.done:
            return
        self._timer_at = None
        now = self.sim.now
        self.timeouts += 1
        self.conn.on_loss(now, timeout=True)
        self.rto_us = min(self.rto_us * 2, self.max_rto_us)
        self.in_fast_recovery = False
        self.dupacks = 0
        self.recover = self.high
        self.snd_nxt = self.snd_una
        self._undo_mark = None
        self._next_pace = 0
        self._send(self.snd_nxt)
        self.snd_nxt += 1
        self._try_send()

    def _rtt_update(self, sample: int) -> None:
        if self.srtt_us is None:
            self.srtt_us = float(sample)
            self.rttvar_us = sample / 2
        else:
            self.rttvar_us = 0.75 * self.rttvar_us + 0.25 * abs(self.srtt_us - sample)
            self.srtt_us = 0.875 * self.srtt_us + 0.125 * sample
        self.rto_us = min(self.max_rto_us, max(self.min_rto_us, int(self.srtt_us + 4 * self.rttvar_us)))

    def _at_sender(self, pkt: Packet) -> None:
        if self.done:
            return
        now = self.sim.now
        ack = pkt.ack
        conn = self.conn
        if ack >= self.snd_una:
            newly = ack - self.snd_una + 1
            sample = now - pkt.echo
            self._rtt_update(sample)
            self.recorder.rtt(now, sample)
            mark = self._undo_mark
            if mark is not None and ack >= mark[0]:
                self._undo_mark = None
                if pkt.echo < mark[1] and conn.state.in_recovery:
                    # the original copy made it: the loss signal was false
                    conn.undo()
                    self.undos += 1
                    self.in_fast_recovery = False
                    self.dupacks = 0
            self.snd_una = ack + 1
            if self.snd_nxt < self.snd_una:
                self.snd_nxt = self.snd_una
            if self.in_fast_recovery:
                conn.on_ack(0, sample, now)
                if ack >= self.recover:
                    self.in_fast_recovery = False
                    self.dupacks = 0
                    conn.exit_recovery()
                else:
                    self.dupacks = max(0, self.dupacks - newly)
                    self._send(self.snd_una)
            else:
                self.dupacks = 0
                if conn.state.in_recovery and ack >= self.recover:
                    conn.exit_recovery()
                conn.on_ack(newly, sample, now)
            if self.total is not None and self.snd_una > self.total:
                self._cancel_timer()
                self._finish(now)
                return
            if self.snd_una <= self.high:
                self._arm_timer()
            else:
                self._cancel_timer()
        elif ack == self.snd_una - 1 and self.snd_una <= self.high:
            self.dupacks += 1
            if not self.in_fast_recovery and self.dupacks == 3 and ack >= self.recover:
                self.fast_retransmits += 1
                conn.on_loss(now)
                self.in_fast_recovery = True
                self.recover = self.high
                self._undo_mark = None
                self._send(self.snd_una)
        self._try_send()

    # receiver -------------------------------------------------------------
    def _at_receiver(self, pkt: Packet) -> None:
        now = self.sim.now
        seq = pkt.seq
        if seq == self.rcv_nxt:
            self._deliver(seq, now)
            while self.rcv_nxt in self._ooo:
                self._ooo.discard(self.rcv_nxt)
                self._deliver(self.rcv_nxt, now)
        elif seq > self.rcv_nxt:
            self._ooo.add(seq)
        self.net.send(Packet(self.name, "ack", TCP_ACK_SIZE, self.rpath, ack=self.rcv_nxt - 1, echo=pkt.ts))

    def _deliver(self, seq: int, now: int) -> None:
        self.rcv_nxt = seq + 1
        self.delivered += 1
        self.delivered_by_class[is_reliable(seq - 1, self.fraction)] += 1
        self.last_delivery_us = now
        self.recorder.goodput(now, self.size)

    def stats(self) -> proto.FlowStats:
        offered = {True: 0, False: 0}
        n = self.total if self.total is not None else self.high
        for i in range(n):
            offered[is_reliable(i, self.fraction)] += 1
        fct = None
        if self.completion_us is not None and self.first_emit_us is not None:
            fct = (self.completion_us - self.first_emit_us) / 1e6
        return proto.FlowStats(
            offered_reliable=offered[True],
            offered_best_effort=offered[False],
            delivered_reliable=self.delivered_by_class[True],
            delivered_best_effort=self.delivered_by_class[False],
            flow_completion_time=fct,
            retransmissions=self.retransmissions,
        )

    def mean_send_rate_bps(self) -> float:
        if self.first_emit_us is None:
            return 0.0
        end = self.completion_us if self.completion_us is not None else self.sim.now
        span = max(end - self.first_emit_us, 1)
        return (self.high + self.retransmissions) * self.size * 8e6 / span


# -- background -----------------------------------------------------------------
class BackgroundSource:
    """Constant-rate or on-off datagram source with a deterministic schedule."""

    def __init__(self, net: Network, name: str, path: tuple, rate_bps: float, size: int = 1000,
                 on_us: int | None = None, off_us: int = 0, start_us: int = 0, stop_us: int | None = None):
        self.net = net
        self.sim = net.sim
        self.name = name
        self.path = tuple(path)
        self.size = size
        self.gap_us = tx_gap_us(size, rate_bps)
        self.on_us = on_us
        self.off_us = off_us
        self.start_us = start_us
        self.stop_us = stop_us
        self.emitted = 0
        self.bytes = 0
        self.sim.schedule(start_us, self._emit, start_us)

    def _emit(self, at: int) -> None:
        now = self.sim.now
        if self.stop_us is not None and now >= self.stop_us:
            return
        if self.on_us:
            period = self.on_us + self.off_us
            phase = (now - self.start_us) % period
            if phase >= self.on_us:
                nxt = now - phase + period
                self.sim.schedule(nxt, self._emit, nxt)
                return
        self.net.send(Packet(self.name, "bg", self.size, self.path))
        self.emitted += 1
        self.bytes += self.size
        self.sim.schedule(now + self.gap_us, self._emit, now + self.gap_us)
