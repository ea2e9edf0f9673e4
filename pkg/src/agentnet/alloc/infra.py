"""Physical infrastructure for SFC embedding."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

import yaml

from ..errors import AgentNetError


class AllocError(AgentNetError, ValueError):
    pass


class MalformedInfrastructure(AllocError):
    pass


@dataclass
class Node:
    id: str
    capacity: int
    op_cost: float
    green_penalty: float
    price: float
    used: int = 0

    @property
    def free(self) -> int:
        return self.capacity - self.used

    @property
    def utilization(self) -> float:
        return self.used / self.capacity


@dataclass
class Link:
    a: str
    b: str
    bandwidth_bps: float
    latency_ms: float
    used_bps: float = 0.0

    @property
    def free_bps(self) -> float:
        return self.bandwidth_bps - self.used_bps


@dataclass
class Infrastructure:
    nodes: dict[str, Node] = field(default_factory=dict)
    links: dict[frozenset, Link] = field(default_factory=dict)

    def __post_init__(self):
        self._adj: dict[str, list[tuple[str, Link]]] = {n: [] for n in self.nodes}
        for link in self.links.values():
            for end in (link.a, link.b):
                if end not in self.nodes:
                    raise MalformedInfrastructure(f"link {link.a}-{link.b}: unknown node {end}")
            self._adj[link.a].append((link.b, link))
            self._adj[link.b].append((link.a, link))
        for n in self._adj:
            self._adj[n].sort(key=lambda item: item[0])
        self.node_ids = sorted(self.nodes)
        self.total_capacity = sum(n.capacity for n in self.nodes.values())

    def neighbors(self, node: str) -> list[tuple[str, Link]]:
        return self._adj[node]

    def link(self, a: str, b: str) -> Link:
        return self.links[frozenset((a, b))]

    def committed(self) -> int:
        return sum(n.used for n in self.nodes.values())

    def utilizations(self) -> list[float]:
        return [self.nodes[n].utilization for n in self.node_ids]

    def reset(self) -> None:
        for n in self.nodes.values():
            n.used = 0
        for link in self.links.values():
            link.used_bps = 0.0

    # io ---------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "Infrastructure":
        try:
            nodes = {
                str(e["id"]): Node(str(e["id"]), int(e["capacity"]), float(e["op_cost"]),
                                   float(e["green_penalty"]), float(e["price"]))
                for e in data["nodes"]
            }
            links = {}
            for e in data["links"]:
                link = Link(str(e["a"]), str(e["b"]), float(e["bandwidth_bps"]), float(e["latency_ms"]))
                key = frozenset((link.a, link.b))
                if key in links or link.a == link.b:
                    raise MalformedInfrastructure(f"duplicate or self link {link.a}-{link.b}")
                links[key] = link
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, MalformedInfrastructure):
                raise
            raise MalformedInfrastructure(f"bad infrastructure entry: {exc}") from None
        for n in nodes.values():
            if n.capacity <= 0 or min(n.op_cost, n.green_penalty, n.price) < 0:
                raise MalformedInfrastructure(f"node {n.id}: capacity must be positive, prices non-negative")
        return cls(nodes, links)

    @classmethod
    def from_text(cls, text: str) -> "Infrastructure":
        return cls.from_dict(yaml.safe_load(text))

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "capacity": n.capacity, "op_cost": n.op_cost,
                 "green_penalty": n.green_penalty, "price": n.price}
                for n in (self.nodes[i] for i in self.node_ids)
            ],
            "links": [
                {"a": l.a, "b": l.b, "bandwidth_bps": l.bandwidth_bps, "latency_ms": l.latency_ms}
                for l in sorted(self.links.values(), key=lambda l: (l.a, l.b))
            ],
        }


def default_infrastructure(seed: int = 0, n_nodes: int = 24, n_links: int = 57,
                           bandwidth_bps: float = 10e9) -> Infrastructure:
    """Ring backbone plus seeded chords; node parameters drawn from the
    ranges of the reference deployment."""
    if n_links < n_nodes:
        raise AllocError("need at least a ring's worth of links")
    rng = random.Random(f"infra/{seed}")
    ids = [f"n{i + 1:02d}" for i in range(n_nodes)]
    nodes = {
        i: Node(
            i,
            capacity=rng.randint(40, 100),
            op_cost=round(rng.uniform(0.03, 0.08), 4),
            green_penalty=round(rng.uniform(0.01, 0.05), 4),
            price=round(rng.uniform(0.07, 0.08), 4),
        )
        for i in ids
    }
    pairs = {frozenset((ids[i], ids[(i + 1) % n_nodes])) for i in range(n_nodes)}
    while len(pairs) < n_links:
        a, b = rng.sample(ids, 2)
        pairs.add(frozenset((a, b)))
    links = {}
    for pair in sorted(pairs, key=sorted):
        a, b = sorted(pair)
        links[pair] = Link(a, b, bandwidth_bps, round(rng.uniform(1.0, 10.0), 2))
    return Infrastructure(nodes, links)
