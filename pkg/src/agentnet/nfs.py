"""Network functions: catalog, in-path processors and chain deployment."""
from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from importlib import resources

import yaml

from . import proto
from .errors import AgentNetError
from .kernels import tx_time_us
from .netsim.network import Drop, Emit, Forward, Network, Packet, Wakeup
from .netsim.topology import SimTopology

FORMATS = ("legacy-udp", "legacy-tcp", "llmproto")
PROTOCOL_FORMAT = {"legacy-udp": "legacy-udp", "legacy-tcp": "legacy-tcp", "custom": "llmproto"}


class NfError(AgentNetError, ValueError):
    pass


class DuplicateName(NfError):
    pass


class MalformedEntry(NfError):
    pass


class UnknownBehavior(NfError):
    pass


class InvalidConfig(NfError):
    pass


class UnknownNf(NfError, KeyError):
    pass


class PlacementOffPath(NfError):
    pass


class ProtocolMismatch(NfError):
    pass


@dataclass(frozen=True)
class NfDescriptor:
    name: str
    role: str
    input_formats: tuple[str, ...]
    output_formats: tuple[str, ...]
    platform: str = "linux-userspace"
    cpu: float = 1.0
    mem_mb: float = 128.0
    behavior: str = "forward"

    def __post_init__(self):
        if not self.name:
            raise MalformedEntry("NF without a name")
        for tag in (*self.input_formats, *self.output_formats):
            if tag not in FORMATS:
                raise MalformedEntry(f"{self.name}: unknown packet format {tag!r}")
        if not self.input_formats or not self.output_formats:
            raise MalformedEntry(f"{self.name}: needs input and output formats")
        if not (self.cpu > 0 and self.mem_mb > 0):
            raise MalformedEntry(f"{self.name}: resource demands must be positive")


_REQUIRED = ("name", "role", "input_formats", "output_formats")


def _descriptor(entry) -> NfDescriptor:
    if not isinstance(entry, dict):
        raise MalformedEntry(f"catalog entry is not a mapping: {entry!r}")
    missing = [k for k in _REQUIRED if k not in entry]
    if missing:
        raise MalformedEntry(f"{entry.get('name', '?')}: missing {', '.join(missing)}")
    known = {"name", "role", "input_formats", "output_formats", "platform", "cpu", "mem_mb", "behavior"}
    extra = set(entry) - known
    if extra:
        raise MalformedEntry(f"{entry['name']}: unknown keys {sorted(extra)}")
    try:
        return NfDescriptor(
            name=str(entry["name"]).strip(),
            role=str(entry["role"]).strip(),
            input_formats=tuple(entry["input_formats"]),
            output_formats=tuple(entry["output_formats"]),
            platform=str(entry.get("platform", "linux-userspace")),
            cpu=float(entry.get("cpu", 1)),
            mem_mb=float(entry.get("mem_mb", 128)),
            behavior=str(entry.get("behavior", "forward")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, MalformedEntry):
            raise
        raise MalformedEntry(f"{entry['name']}: {exc}") from None


class Catalog:
    def __init__(self, descriptors=()):
        self._by_name: dict[str, NfDescriptor] = {}
        for d in descriptors:
            self.add(d)

    def add(self, d: NfDescriptor) -> None:
        if d.name in self._by_name:
            raise DuplicateName(f"NF {d.name!r} appears twice in the catalog")
        self._by_name[d.name] = d

    def get(self, name: str) -> NfDescriptor:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownNf(f"NF {name!r} is not in the catalog") from None

    def names(self) -> list[str]:
        return list(self._by_name)

    def __contains__(self, name) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self._by_name.values())

    def __len__(self) -> int:
        return len(self._by_name)

    def render(self) -> str:
        """Catalog listing for prompts."""
        lines = []
        for d in self:
            lines.append(
                f"- {d.name}: {d.role} in={','.join(d.input_formats)} out={','.join(d.output_formats)} "
                f"platform={d.platform} cpu={d.cpu:g} mem={d.mem_mb:g}MB"
            )
        return "\n".join(lines)


def load_catalog(text: str) -> Catalog:
    try:
        data = yaml.safe_load(text) if text.strip() else None
    except yaml.YAMLError as exc:
        raise MalformedEntry(f"catalog is not valid: {exc}") from None
    if data is None:
        return Catalog()
    if isinstance(data, dict):
        data = data.get("nfs", [])
    if not isinstance(data, list):
        raise MalformedEntry("catalog must be a list of NF blocks")
    return Catalog(_descriptor(e) for e in data)


def default_catalog() -> Catalog:
    text = resources.files("agentnet").joinpath("scenarios/nf_catalog.yaml").read_text()
    return load_catalog(text)


# processors ------------------------------------------------------------------


def _tag(pkt: Packet, name: str) -> None:
    if pkt.kind == "data":
        if pkt.trace is None:
            pkt.trace = [name]
        else:
            pkt.trace.append(name)


def _parse(pkt: Packet):
    if isinstance(pkt.payload, (bytes, bytearray)):
        try:
            return proto.decode_header(pkt.payload)
        except proto.ProtoError:
            return None
    return None


class Processor:
    """Base processor: forward everything. ``name`` tags packet traces."""

    options: dict = {}

    def __init__(self, name: str, **config):
        self.name = name
        self.seen = 0

    def on_packet(self, pkt: Packet, now: int) -> list:
        self.seen += 1
        _tag(pkt, self.name)
        return [Forward(pkt)]

    def on_wakeup(self, now: int) -> list:
        return []


class PacketForwarder(Processor):
    pass


class Passthrough(Processor):
    pass


class _Bucket:
    __slots__ = ("rate", "burst", "tokens", "at")

    def __init__(self, rate_bps: float, burst_bytes: int):
        self.rate = rate_bps / 8e6  # bytes per us
        self.burst = float(burst_bytes)
        self.tokens = float(burst_bytes)
        self.at = 0

    def take(self, now: int, nbytes: int) -> bool:
        self.tokens = min(self.burst, self.tokens + (now - self.at) * self.rate)
        self.at = now
        if self.tokens >= nbytes:
            self.tokens -= nbytes
            return True
        return False


class QosEnforcer(Processor):
    """Strict two-class priority scheduler served at the egress link rate.

    RELIABLE-flagged datagrams form the high class. Each class may be
    policed by a token bucket; the server never idles while a queue holds
    packets.
    """

    options = {"service_rate_bps", "queue_packets", "high_rate_bps", "low_rate_bps", "burst_bytes"}

    def __init__(self, name: str, service_rate_bps: float | None = None, queue_packets: int = 200,
                 high_rate_bps: float | None = None, low_rate_bps: float | None = None,
                 burst_bytes: int = 30_000):
        super().__init__(name)
        if queue_packets <= 0 or (service_rate_bps is not None and service_rate_bps <= 0):
            raise InvalidConfig(f"{name}: queue and service rate must be positive")
        for r in (high_rate_bps, low_rate_bps):
            if r is not None and r <= 0:
                raise InvalidConfig(f"{name}: policing rates must be positive")
        self.service_rate_bps = service_rate_bps
        self.queue_packets = int(queue_packets)
        self.queues = {True: deque(), False: deque()}
        self.police = {
            True: _Bucket(high_rate_bps, burst_bytes) if high_rate_bps else None,
            False: _Bucket(low_rate_bps, burst_bytes) if low_rate_bps else None,
        }
        self.busy_until = 0
        self.policed = 0
        self.overflow = 0
        self.network: Network | None = None
        self.node: str | None = None

    def bind(self, network: Network, node: str) -> None:
        self.network = network
        self.node = node

    @staticmethod
    def classify(pkt: Packet) -> bool:
        msg = _parse(pkt)
        if msg is None:
            return bool(pkt.reliable)
        return isinstance(msg, proto.Datagram) and msg.header.reliable

    def _rate(self, pkt: Packet) -> float:
        if self.service_rate_bps is None:
            if self.network is None:
                raise InvalidConfig(f"{self.name}: unbound processor needs service_rate_bps")
            nxt = pkt.path[pkt.hop + 1]
            self.service_rate_bps = self.network.link(pkt.path[pkt.hop], nxt).spec.rate_bps
        return self.service_rate_bps

    def on_packet(self, pkt: Packet, now: int) -> list:
        self.seen += 1
        if pkt.kind != "data":
            return [Forward(pkt)]
        _tag(pkt, self.name)
        high = self.classify(pkt)
        bucket = self.police[high]
        if bucket is not None and not bucket.take(now, pkt.size):
            self.policed += 1
            return [Drop(pkt, "police")]
        q = self.queues[high]
        if len(q) >= self.queue_packets:
            self.overflow += 1
            return [Drop(pkt, "nf-queue")]
        self._rate(pkt)
        q.append(pkt)
        if now >= self.busy_until:
            return self._serve(now)
        return []

    def _serve(self, now: int) -> list:
        for cls in (True, False):
            q = self.queues[cls]
            if q:
                pkt = q.popleft()
                self.busy_until = now + tx_time_us(pkt.size, self.service_rate_bps)
                return [Forward(pkt), Wakeup(self.busy_until)]
        return []

    def on_wakeup(self, now: int) -> list:
        if now < self.busy_until:
            return []
        return self._serve(now)

    def backlog(self) -> int:
        return len(self.queues[True]) + len(self.queues[False])


@dataclass
class _Cached:
    packet: Packet
    last_sent: int
    reemits: int = 0


class TransportAssistant(Processor):
    """In-network cache for reliable LLM-Proto datagrams.

    Cached copies are evicted when an ACK covers them (cumulative ack_seq
    or the one-entry selective ack). A copy not acknowledged within
    ``timeout_us`` of its last pass is re-emitted downstream, at most
    ``max_reemits`` times.
    """

    options = {"cache_size", "timeout_us", "max_reemits"}

    def __init__(self, name: str, cache_size: int = 1024, timeout_us: int = 30_000, max_reemits: int = 5):
        super().__init__(name)
        if cache_size <= 0 or timeout_us <= 0 or max_reemits < 0:
            raise InvalidConfig(f"{name}: cache_size/timeout_us must be positive, max_reemits >= 0")
        self.cache_size = int(cache_size)
        self.timeout_us = int(timeout_us)
        self.max_reemits = int(max_reemits)
        self.cache: OrderedDict[tuple[int, int], _Cached] = OrderedDict()
        self.reemitted = 0
        self.evicted_lru = 0
        self._wake_at: int | None = None

    def holds(self, seq: int, stream_id: int = 1) -> bool:
        return (stream_id, seq) in self.cache

    def _want_wake(self, at: int) -> list:
        if self._wake_at is not None and self._wake_at <= at:
            return []
        self._wake_at = at
        return [Wakeup(at)]

    def on_packet(self, pkt: Packet, now: int) -> list:
        self.seen += 1
        msg = _parse(pkt)
        if not isinstance(msg, proto.Datagram):
            _tag(pkt, self.name)
            return [Forward(pkt)]
        h = msg.header
        if h.is_ack:
            self._evict(h.stream_id, h.ack_seq, h.seq)
            return [Forward(pkt)]
        _tag(pkt, self.name)
        if not h.reliable:
            return [Forward(pkt)]
        key = (h.stream_id, h.seq)
        entry = self.cache.get(key)
        if entry is not None:
            # sender retransmission: refresh the copy and its clock
            entry.packet = pkt.clone()
            entry.last_sent = now
            self.cache.move_to_end(key)
        else:
            self.cache[key] = _Cached(pkt.clone(), now)
            if len(self.cache) > self.cache_size:
                self.cache.popitem(last=False)
                self.evicted_lru += 1
        return [Forward(pkt), *self._want_wake(now + self.timeout_us)]

    def _evict(self, stream_id: int, ack_seq: int, sack: int) -> None:
        self.cache.pop((stream_id, sack), None)
        if ack_seq:
            stale = [k for k in self.cache if k[0] == stream_id and k[1] <= ack_seq]
            for k in stale:
                del self.cache[k]

    def on_wakeup(self, now: int) -> list:
        if self._wake_at is not None and now < self._wake_at:
            return []
        self._wake_at = None
        out = []
        nxt = None
        for key, entry in list(self.cache.items()):
            if entry.reemits >= self.max_reemits:
                continue
            due = entry.last_sent + self.timeout_us
            if due <= now:
                entry.reemits += 1
                entry.last_sent = now
                self.reemitted += 1
                self.cache.move_to_end(key)
                copy = entry.packet.clone()
                out.append(Emit(copy))
                due = now + self.timeout_us
            if nxt is None or due < nxt:
                nxt = due
        if nxt is not None:
            out.extend(self._want_wake(nxt))
        return out


BEHAVIORS = {
    "forward": PacketForwarder,
    "passthrough": Passthrough,
    "qos": QosEnforcer,
    "transport_assistant": TransportAssistant,
}


def instantiate_nf(descriptor: NfDescriptor, behavior_config: dict | None = None) -> Processor:
    config = dict(behavior_config or {})
    behavior = config.pop("behavior", descriptor.behavior)
    cls = BEHAVIORS.get(behavior)
    if cls is None:
        raise UnknownBehavior(f"{descriptor.name}: behavior {behavior!r} is not one of {sorted(BEHAVIORS)}")
    unknown = set(config) - set(cls.options)
    if unknown:
        raise InvalidConfig(f"{descriptor.name}: unknown options {sorted(unknown)} for {behavior}")
    try:
        return cls(descriptor.name, **config)
    except TypeError as exc:
        raise InvalidConfig(f"{descriptor.name}: {exc}") from None


# plans and deployment ---------------------------------------------------------


@dataclass
class ChainEntry:
    position: int
    name: str
    node: str
    config: dict = field(default_factory=dict)
    new_nf: NfDescriptor | None = None


@dataclass
class SfcPlan:
    chain: list[ChainEntry] = field(default_factory=list)
    protocol: str = "legacy-udp"
    path_index: int | None = None
    notes: str = ""

    @property
    def placement(self) -> dict[int, str]:
        return {e.position: e.node for e in self.chain}

    def ordered(self) -> list[ChainEntry]:
        return sorted(self.chain, key=lambda e: e.position)


@dataclass
class DeployedNf:
    descriptor: NfDescriptor
    processor: Processor
    node: str


@dataclass
class DeployedChain:
    nfs: list[DeployedNf]
    waypoints: tuple[str, ...]
    protocol: str

    def attach(self, network: Network, flows) -> None:
        flows = list(flows)
        for d in self.nfs:
            if hasattr(d.processor, "bind"):
                d.processor.bind(network, d.node)
            network.attach_processor(d.node, flows, d.processor)

    def processor(self, name: str) -> Processor:
        for d in self.nfs:
            if d.descriptor.name == name:
                return d.processor
        raise UnknownNf(name)


def _on_path_in_order(nodes: list[str], path) -> bool:
    idx = 0
    for n in nodes:
        try:
            idx = list(path).index(n, idx)
        except ValueError:
            return False
    return True


def compose_chain(plan: SfcPlan, catalog: Catalog, topology: SimTopology, paths=None) -> DeployedChain:
    """Resolve, check and instantiate ``plan``; ``paths`` are RA candidate paths."""
    fmt = PROTOCOL_FORMAT.get(plan.protocol)
    if fmt is None:
        raise ProtocolMismatch(f"unknown plan protocol {plan.protocol!r}")
    deployed = []
    prev: NfDescriptor | None = None
    for entry in plan.ordered():
        d = entry.new_nf if entry.new_nf is not None else catalog.get(entry.name)
        if fmt not in d.input_formats:
            raise ProtocolMismatch(f"{d.name} does not accept {fmt} ({plan.protocol} plan)")
        if prev is not None and fmt not in prev.output_formats:
            raise ProtocolMismatch(f"{prev.name} cannot hand {fmt} to {d.name}")
        if entry.node not in topology.nodes:
            raise PlacementOffPath(f"{d.name} placed on unknown node {entry.node}")
        deployed.append(DeployedNf(d, instantiate_nf(d, entry.config), entry.node))
        prev = d
    nodes = [d.node for d in deployed]
    waypoints: tuple[str, ...] = tuple(nodes)
    if paths:
        if plan.path_index is not None:
            if not 0 <= plan.path_index < len(paths):
                raise PlacementOffPath(f"path index {plan.path_index} outside {len(paths)} candidates")
            candidates = [paths[plan.path_index]]
        else:
            candidates = list(paths)
        chosen = next((p for p in candidates if _on_path_in_order(nodes, p)), None)
        if chosen is None:
            raise PlacementOffPath(f"placement {nodes} does not follow one candidate path")
        waypoints = tuple(chosen)
    return DeployedChain(deployed, waypoints, plan.protocol)
