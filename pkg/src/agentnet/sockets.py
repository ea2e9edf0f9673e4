"""LLM-Proto over real UDP sockets (same datagrams as in the simulator)."""
from __future__ import annotations

import select
import socket
import time

from .netsim.transports import is_reliable
from .proto import LlmProtoReceiver, LlmProtoSender


def _now_us() -> int:
    return time.monotonic_ns() // 1000


def run_sender(host: str, port: int, messages: int = 100, size: int = 1400, rate_bps: int = 1_000_000,
               reliable_fraction: float = 0.5, timeout_s: float = 120.0, stream_id: int = 1) -> dict:
    sender = LlmProtoSender(stream_id=stream_id, pacing_rate_bps=rate_bps)
    for i in range(messages):
        body = i.to_bytes(4, "big") + bytes(max(0, size - 4))
        sender.submit(body[:size], is_reliable(i, reliable_fraction))
    sender.close()
    t0 = _now_us()
    deadline = t0 + int(timeout_s * 1e6)
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.connect((host, port))
        sock.setblocking(False)
        while not sender.finished:
            now = _now_us() - t0
            if now + t0 > deadline:
                break
            for dgram in sender.on_tick(now):
                try:
                    sock.send(dgram)
                except (BlockingIOError, ConnectionRefusedError):
                    pass
            wake = sender.next_wakeup()
            wait_s = 0.05 if wake is None else max(0.0, (wake - (_now_us() - t0)) / 1e6)
            ready, _, _ = select.select([sock], [], [], min(wait_s, 0.05))
            while ready:
                try:
                    data = sock.recv(65535)
                except (BlockingIOError, ConnectionRefusedError):
                    break
                sender.on_datagram(data, _now_us() - t0)
    return {"finished": sender.finished, "aborted": sender.aborted, "retransmissions": sender.retransmissions,
           "offered_reliable": sender.offered[True], "offered_best_effort": sender.offered[False],
           "bytes_sent": sender.bytes_sent}


def run_receiver(host: str, port: int, stream_id: int = 1, idle_timeout_s: float = 10.0,
                 linger_s: float = 1.0, bound=None) -> dict:
    """Serve one stream; returns after FIN plus ``linger_s`` or after an idle timeout."""
    rx = LlmProtoReceiver(stream_id=stream_id)
    t0 = _now_us()
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.bind((host, port))
        if bound is not None:
            bound(sock.getsockname())
        last = time.monotonic()
        fin_at = None
        while True:
            limit = linger_s if fin_at is not None else idle_timeout_s
            ref = fin_at if fin_at is not None else last
            left = limit - (time.monotonic() - ref)
            if left <= 0:
                break
            ready, _, _ = select.select([sock], [], [], left)
            if not ready:
                continue
            data, peer = sock.recvfrom(65535)
            last = time.monotonic()
            _, ack = rx.on_datagram(data, _now_us() - t0)
            if ack is not None:
                sock.sendto(ack, peer)
            if rx.fin_time_us is not None and fin_at is None:
                fin_at = time.monotonic()
    return {"delivered_reliable": rx.delivered[True], "delivered_best_effort": rx.delivered[False],
            "duplicates": rx.duplicates, "fin": rx.fin_time_us is not None}


__all__ = ["run_receiver", "run_sender"]
