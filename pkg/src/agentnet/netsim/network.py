"""Packet transport over a :class:`SimTopology` inside a :class:`Simulator`."""
from __future__ import annotations

import random
from typing import NamedTuple

from ..kernels import LinkQueue
from .engine import Simulator
from .topology import LinkSpec, SimTopology, TopologyError


class Packet:
    """A datagram in flight. ``path`` is fixed at the source (source routing)."""

    __slots__ = (
        "flow", "kind", "size", "payload", "path", "hop",
        "seq", "ack", "ts", "echo", "reliable", "sent_at", "trace",
    )

    def __init__(self, flow, kind, size, path, payload=None, seq=0, ack=0, ts=0, echo=0, reliable=False):
        self.flow = flow
        self.kind = kind
        self.size = size
        self.payload = payload
        self.path = path
        self.hop = 0
        self.seq = seq
        self.ack = ack
        self.ts = ts
        self.echo = echo
        self.reliable = reliable
        self.sent_at = 0
        self.trace = None

    def clone(self) -> "Packet":
        p = Packet(self.flow, self.kind, self.size, self.path, self.payload,
                   self.seq, self.ack, self.ts, self.echo, self.reliable)
        p.hop = self.hop
        p.sent_at = self.sent_at
        p.trace = list(self.trace) if self.trace is not None else None
        return p

    @property
    def node(self) -> str:
        return self.path[self.hop]


class Forward(NamedTuple):
    packet: Packet


class Drop(NamedTuple):
    packet: Packet
    reason: str = "nf"


class Emit(NamedTuple):
    packet: Packet


class Wakeup(NamedTuple):
    time_us: int


class DirLink:
    __slots__ = ("a", "b", "spec", "loss", "queue", "delay_us", "offered", "delivered",
                 "dropped_loss", "dropped_queue", "_rngs", "_seed")

    def __init__(self, a: str, b: str, spec: LinkSpec, loss: float, seed: int):
        self.a = a
        self.b = b
        self.spec = spec
        self.loss = loss
        self.delay_us = spec.delay_us
        self.queue = LinkQueue(spec.rate_bps, spec.queue_packets)
        self.offered = 0
        self.delivered = 0
        self.dropped_loss = 0
        self.dropped_queue = 0
        self._rngs: dict = {}
        self._seed = seed

    def lost(self, flow) -> bool:
        rng = self._rngs.get(flow)
        if rng is None:
            # one independent stream per (link, flow): adding traffic elsewhere
            # never perturbs another flow's loss pattern
            rng = self._rngs[flow] = random.Random(f"{self._seed}|{self.a}>{self.b}|{flow}")
        return rng.random() < self.loss

    def in_flight(self) -> int:
        return self.offered - self.delivered - self.dropped_loss - self.dropped_queue


class Network:
    def __init__(self, sim: Simulator, topology: SimTopology, seed: int = 0):
        self.sim = sim
        self.topology = topology
        self.seed = seed
        self.links: dict[tuple[str, str], DirLink] = {}
        for spec in topology.links:
            self.links[(spec.a, spec.b)] = DirLink(spec.a, spec.b, spec, spec.loss, seed)
            back = spec.loss if spec.bidirectional_loss else 0.0
            self.links[(spec.b, spec.a)] = DirLink(spec.b, spec.a, spec, back, seed)
        self.endpoints: dict[tuple[str, object], object] = {}
        self.processors: dict[str, list[tuple[frozenset, object]]] = {}
        # per-flow observers with injected(pkt, now) and dropped(pkt, reason, now)
        self.recorders: dict[object, object] = {}
        self.nf_drops = 0

    # wiring -------------------------------------------------------------
    def attach_endpoint(self, node: str, flow, endpoint) -> None:
        if node not in self.topology.nodes:
            raise TopologyError(f"unknown node {node}")
        self.endpoints[(node, flow)] = endpoint

    def attach_processor(self, node: str, flows, processor) -> None:
        if node not in self.topology.nodes:
            raise TopologyError(f"unknown node {node}")
        self.processors.setdefault(node, []).append((frozenset(flows), processor))

    def link(self, a: str, b: str) -> DirLink:
        return self.links[(a, b)]

    # data path ------------------------------------------------------------
    def send(self, pkt: Packet) -> None:
        """Inject ``pkt`` at ``pkt.path[pkt.hop]``."""
        pkt.sent_at = self.sim.now
        rec = self.recorders.get(pkt.flow)
        if rec is not None:
            rec.injected(pkt, self.sim.now)
        if pkt.hop == len(pkt.path) - 1:
            self._deliver(pkt)
        else:
            self._transmit(pkt)

    def _transmit(self, pkt: Packet) -> None:
        path = pkt.path
        hop = pkt.hop
        link = self.links[(path[hop], path[hop + 1])]
        link.offered += 1
        now = self.sim.now
        finish = link.queue.admit(now, pkt.size)
        if finish < 0:
            link.dropped_queue += 1
            self._dropped(pkt, "queue")
            return
        if link.loss and link.lost(pkt.flow):
            link.dropped_loss += 1
            self._dropped(pkt, "loss")
            return
        self.sim.schedule(finish + link.delay_us, self._arrive, pkt, link)

    def _arrive(self, pkt: Packet, link: DirLink) -> None:
        link.delivered += 1
        pkt.hop += 1
        if pkt.hop == len(pkt.path) - 1:
            self._deliver(pkt)
            return
        procs = self.processors.get(pkt.path[pkt.hop])
        if procs:
            self._process(pkt, procs, 0)
        else:
            self._transmit(pkt)

    def _process(self, pkt: Packet, procs, start: int) -> None:
        for i in range(start, len(procs)):
            flows, proc = procs[i]
            if pkt.flow in flows:
                self._apply(proc.on_packet(pkt, self.sim.now), procs, i)
                return
        self._transmit(pkt)

    def _apply(self, actions, procs, index: int) -> None:
        for action in actions:
            if isinstance(action, Forward):
                self._process(action.packet, procs, index + 1)
            elif isinstance(action, Emit):
                rec = self.recorders.get(action.packet.flow)
                if rec is not None:
                    rec.injected(action.packet, self.sim.now)
                self._process(action.packet, procs, index + 1)
            elif isinstance(action, Drop):
                self.nf_drops += 1
                self._dropped(action.packet, action.reason)
            elif isinstance(action, Wakeup):
                proc = procs[index][1]
                self.sim.schedule(max(action.time_us, self.sim.now), self._wake, proc, procs, index)
            else:
                raise TypeError(f"unknown NF action {action!r}")

    def _wake(self, proc, procs, index: int) -> None:
        self._apply(proc.on_wakeup(self.sim.now), procs, index)

    def _deliver(self, pkt: Packet) -> None:
        endpoint = self.endpoints.get((pkt.path[-1], pkt.flow))
        if endpoint is not None:
            endpoint.receive(pkt)

    def _dropped(self, pkt: Packet, reason: str) -> None:
        rec = self.recorders.get(pkt.flow)
        if rec is not None:
            rec.dropped(pkt, reason, self.sim.now)

    # accounting -------------------------------------------------------------
    def conservation(self) -> dict[tuple[str, str], dict[str, int]]:
        return {
            key: {
                "offered": l.offered,
                "delivered": l.delivered,
                "dropped_loss": l.dropped_loss,
                "dropped_queue": l.dropped_queue,
                "in_flight": l.in_flight(),
            }
            for key, l in self.links.items()
        }
