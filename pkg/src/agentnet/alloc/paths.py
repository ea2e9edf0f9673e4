"""Loop-free k-shortest paths and the candidate-path report."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

from .infra import AllocError, Infrastructure


class NoPath(AllocError):
    pass


class SamePoint(AllocError):
    pass


def _latency(infra: Infrastructure, path) -> float:
    return sum(infra.link(a, b).latency_ms for a, b in zip(path, path[1:]))


def _shortest(infra: Infrastructure, src: str, dst: str, banned_nodes, banned_edges):
    """Minimum-latency path; equal latency resolved by the node sequence."""
    heap = [(0.0, (src,))]
    done = set()
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node == dst:
            return dist, path
        for nb, link in infra.neighbors(node):
            if nb in done or nb in banned_nodes or frozenset((node, nb)) in banned_edges:
                continue
            heapq.heappush(heap, (dist + link.latency_ms, path + (nb,)))
    return None


def k_shortest_paths(infra: Infrastructure, src: str, dst: str, k: int) -> list[tuple[float, tuple]]:
    """Yen's algorithm; results ordered by (latency, node sequence)."""
    if src == dst:
        raise SamePoint(f"source and destination are both {src}")
    for end in (src, dst):
        if end not in infra.nodes:
            raise AllocError(f"unknown node {end}")
    first = _shortest(infra, src, dst, set(), set())
    if first is None:
        raise NoPath(f"{src} and {dst} are disconnected")
    found = [(_latency(infra, first[1]), first[1])]
    seen = {first[1]}
    pool: list[tuple[float, tuple]] = []
    while len(found) < k:
        _, last = found[-1]
        for i in range(len(last) - 1):
            spur = last[i]
            root = last[: i + 1]
            banned_edges = {
                frozenset((p[i], p[i + 1])) for _, p in found if len(p) > i + 1 and p[: i + 1] == root
            }
            banned_nodes = set(root[:-1])
            tail = _shortest(infra, spur, dst, banned_nodes, banned_edges)
            if tail is None:
                continue
            path = root[:-1] + tail[1]
            if path not in seen:
                seen.add(path)
                heapq.heappush(pool, (_latency(infra, path), path))
        if not pool:
            break
        found.append(heapq.heappop(pool))
    return found


@dataclass(frozen=True)
class CandidatePath:
    index: int
    nodes: tuple[str, ...]
    latency_ms: float
    free_instances: tuple[int, ...]
    free_bandwidth_bps: tuple[float, ...]


@dataclass(frozen=True)
class RaReport:
    src: str
    dst: str
    paths: tuple[CandidatePath, ...]

    def render(self) -> str:
        lines = [f"Candidate paths {self.src} -> {self.dst}:"]
        for p in self.paths:
            nodes = ", ".join(f"{n}(free={f})" for n, f in zip(p.nodes, p.free_instances))
            bw = min(p.free_bandwidth_bps) / 1e6 if p.free_bandwidth_bps else 0.0
            lines.append(f"path {p.index}: {nodes}; latency={p.latency_ms:.1f} ms; min free bw={bw:.1f} Mbps")
        return "\n".join(lines)

    def node_paths(self) -> list[tuple[str, ...]]:
        return [p.nodes for p in self.paths]


class PathCache:
    """Static k-shortest paths per pair (topology never changes in a run)."""

    def __init__(self, infra: Infrastructure, k: int):
        self.infra = infra
        self.k = k
        self._cache: dict[tuple[str, str], list[tuple[float, tuple]]] = {}

    def get(self, src: str, dst: str) -> list[tuple[float, tuple]]:
        key = (src, dst)
        paths = self._cache.get(key)
        if paths is None:
            paths = self._cache[key] = k_shortest_paths(self.infra, src, dst, self.k)
        return paths


def candidate_paths(infra: Infrastructure, src: str, dst: str, k: int) -> RaReport:
    out = []
    for i, (lat, path) in enumerate(k_shortest_paths(infra, src, dst, k)):
        out.append(CandidatePath(
            index=i,
            nodes=path,
            latency_ms=round(lat, 6),
            free_instances=tuple(infra.nodes[n].free for n in path),
            free_bandwidth_bps=tuple(infra.link(a, b).free_bps for a, b in zip(path, path[1:])),
        ))
    return RaReport(src, dst, tuple(out))
