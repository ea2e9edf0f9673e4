"""Static topology description and deterministic routing."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from ..errors import AgentNetError

NODE_KINDS = ("host", "nf-node", "switch")


class TopologyError(AgentNetError, ValueError):
    pass


class DisconnectedTopology(TopologyError):
    pass


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    rate_bps: int
    delay_us: int
    loss: float = 0.0
    queue_packets: int = 100
    # when false the b->a direction is loss-free
    bidirectional_loss: bool = True

    def __post_init__(self):
        if self.rate_bps <= 0 or self.delay_us <= 0:
            raise TopologyError(f"link {self.a}-{self.b}: rate and delay must be positive")
        if not 0.0 <= self.loss < 1.0:
            raise TopologyError(f"link {self.a}-{self.b}: loss must lie in [0, 1)")
        if self.queue_packets <= 0:
            raise TopologyError(f"link {self.a}-{self.b}: queue capacity must be positive")


@dataclass
class SimTopology:
    nodes: dict[str, str] = field(default_factory=dict)
    links: list[LinkSpec] = field(default_factory=list)
    # per-node extras carried through (e.g. instance capacity of nf-nodes)
    node_attrs: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        for node, kind in self.nodes.items():
            if kind not in NODE_KINDS:
                raise TopologyError(f"node {node}: unknown kind {kind!r}")
        seen = set()
        for link in self.links:
            for end in (link.a, link.b):
                if end not in self.nodes:
                    raise TopologyError(f"link {link.a}-{link.b} references unknown node {end}")
            key = frozenset((link.a, link.b))
            if key in seen or link.a == link.b:
                raise TopologyError(f"duplicate or self link {link.a}-{link.b}")
            seen.add(key)
        self._adj: dict[str, list[tuple[str, LinkSpec]]] = {n: [] for n in self.nodes}
        for link in self.links:
            self._adj[link.a].append((link.b, link))
            self._adj[link.b].append((link.a, link))
        for n in self._adj:
            self._adj[n].sort(key=lambda item: item[0])
        self._routes: dict[tuple[str, str], tuple[str, ...]] = {}

    @classmethod
    def from_dict(cls, data: dict) -> "SimTopology":
        nodes = {}
        attrs = {}
        for entry in data.get("nodes", []):
            entry = dict(entry)
            node_id = str(entry.pop("id"))
            nodes[node_id] = entry.pop("kind", "switch")
            if entry:
                attrs[node_id] = entry
        links = []
        for entry in data.get("links", []):
            links.append(
                LinkSpec(
                    a=str(entry["a"]),
                    b=str(entry["b"]),
                    rate_bps=int(float(entry["rate_bps"])),
                    delay_us=int(float(entry["delay_us"])),
                    loss=float(entry.get("loss", 0.0)),
                    queue_packets=int(entry.get("queue_packets", 100)),
                    bidirectional_loss=bool(entry.get("bidirectional_loss", True)),
                )
            )
        return cls(nodes=nodes, links=links, node_attrs=attrs)

    def neighbors(self, node: str) -> list[tuple[str, LinkSpec]]:
        return self._adj[node]

    def link_between(self, a: str, b: str) -> LinkSpec:
        for nb, link in self._adj[a]:
            if nb == b:
                return link
        raise TopologyError(f"no link {a}-{b}")

    def route(self, src: str, dst: str) -> tuple[str, ...]:
        """Minimum-delay path, ties broken by the lexicographic node sequence."""
        key = (src, dst)
        cached = self._routes.get(key)
        if cached is not None:
            return cached
        for end in key:
            if end not in self.nodes:
                raise TopologyError(f"unknown node {end}")
        heap = [(0, (src,))]
        done = set()
        while heap:
            dist, path = heapq.heappop(heap)
            node = path[-1]
            if node in done:
                continue
            done.add(node)
            if node == dst:
                self._routes[key] = path
                return path
            for nb, link in self._adj[node]:
                if nb not in done:
                    heapq.heappush(heap, (dist + link.delay_us, path + (nb,)))
        raise DisconnectedTopology(f"no path from {src} to {dst}")

    def route_via(self, src: str, waypoints, dst: str) -> tuple[str, ...]:
        path: tuple[str, ...] = (src,)
        for hop in (*waypoints, dst):
            if hop == path[-1]:
                continue
            path = path + self.route(path[-1], hop)[1:]
        return path
