"""Event-driven SFC arrival/departure simulation with per-minute accounting."""
from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from .. import kernels
from .embed import ObjectiveWeights, Placement, Rejected, SfcRequest, embed_sfc, release
from .infra import AllocError, Infrastructure
from .paths import PathCache

SERIES = ("arrival_rate", "cost", "revenue", "green_penalty", "profit", "utilization", "fairness",
          "accepted", "acceptance_ratio")
DAY_S = 86_400


class WindowIncomplete(AllocError):
    pass


@dataclass(frozen=True)
class WorkloadSchedule:
    base_rate_per_min: float = 6.0
    change_at_h: float | None = 72.0
    rate_factor: float = 2.0
    horizon_h: float = 144.0
    lifetime_mean_s: float = 1800.0
    nf_min: int = 1
    nf_max: int = 20
    bandwidth_bps: tuple[float, float] = (10e6, 100e6)
    latency_bound_ms: tuple[float, float] = (30.0, 100.0)

    def rate_at(self, t_s: float) -> float:
        if self.change_at_h is not None and t_s >= self.change_at_h * 3600:
            return self.base_rate_per_min * self.rate_factor
        return self.base_rate_per_min


class ArrivalProcess:
    """Piecewise-homogeneous Poisson arrivals from a dedicated RNG, so two
    runs with the same seed see the same requests whatever they decide."""

    def __init__(self, node_ids, schedule: WorkloadSchedule, seed: int):
        self.node_ids = list(node_ids)
        self.schedule = schedule
        self.rng = random.Random(f"arrivals/{seed}")
        self.t = 0.0
        self.count = 0
        self.horizon_s = schedule.horizon_h * 3600

    def __iter__(self):
        return self

    def __next__(self) -> SfcRequest:
        sch = self.schedule
        rng = self.rng
        while True:
            rate = sch.rate_at(self.t) / 60.0
            gap = rng.expovariate(rate)
            boundary = self._next_boundary(self.t)
            if boundary is not None and self.t + gap >= boundary:
                # memoryless: restart the draw at the rate change
                self.t = boundary
                continue
            self.t += gap
            break
        if self.t >= self.horizon_s:
            raise StopIteration
        src, dst = rng.sample(self.node_ids, 2)
        req = SfcRequest(
            id=self.count,
            src=src,
            dst=dst,
            nf_count=rng.randint(sch.nf_min, sch.nf_max),
            bandwidth_bps=round(rng.uniform(*sch.bandwidth_bps), 0),
            latency_bound_ms=round(rng.uniform(*sch.latency_bound_ms), 3),
            lifetime_s=rng.expovariate(1.0 / sch.lifetime_mean_s),
            arrival_s=self.t,
        )
        self.count += 1
        return req

    def _next_boundary(self, t: float) -> float | None:
        ch = self.schedule.change_at_h
        if ch is None:
            return None
        b = ch * 3600
        return b if t < b else None


@dataclass
class MetricsWindow:
    start_min: int
    end_min: int
    series: dict[str, list[float]]
    aggregates: dict[str, float]

    @property
    def span_h(self) -> float:
        return (self.end_min - self.start_min) / 60


def aggregate(series: dict[str, list[float]], lo: int, hi: int) -> dict[str, float]:
    n = hi - lo
    if n <= 0:
        raise WindowIncomplete("empty window")
    agg = {}
    for key in ("cost", "revenue", "green_penalty", "profit", "utilization", "fairness", "arrival_rate"):
        agg[key] = sum(series[key][lo:hi]) / n
    arrivals = sum(series["arrival_rate"][lo:hi])
    accepted = sum(series["accepted"][lo:hi])
    agg["acceptance_ratio"] = accepted / arrivals if arrivals else 1.0
    agg["arrivals"] = arrivals
    agg["accepted"] = accepted
    return agg


class AllocationState:
    """Infrastructure occupancy, live placements and the accounting bins."""

    def __init__(self, infra: Infrastructure, schedule: WorkloadSchedule, seed: int = 0,
                 weights: ObjectiveWeights | None = None, k: int = 5):
        self.infra = infra
        self.schedule = schedule
        self.weights = weights or ObjectiveWeights(0, 1, 0, 0)
        self.paths = PathCache(infra, k)
        self.arrivals = ArrivalProcess(infra.node_ids, schedule, seed)
        self._pending: SfcRequest | None = next(self.arrivals, None)
        self._departures: list[tuple[float, int, Placement]] = []
        self.now = 0.0
        self.minutes = int(math.ceil(schedule.horizon_h * 60))
        self.series = {k: [0.0] * self.minutes for k in SERIES}
        self.accepted = 0
        self.rejected = 0
        self.reject_reasons: dict[str, int] = {}
        self.last_close_min = 0
        self.weight_history: list[tuple[float, ObjectiveWeights]] = [(0.0, self.weights)]
        self._refresh_rates()

    # rates ----------------------------------------------------------------
    def _refresh_rates(self) -> None:
        cost = rev = green = 0.0
        for n in self.infra.nodes.values():
            if n.used:
                cost += n.used * n.op_cost
                rev += n.used * n.price
                green += n.used * n.green_penalty
        self._cost, self._rev, self._green = cost, rev, green
        self._util = self.infra.committed() / self.infra.total_capacity
        self._fair = kernels.jain_index(self.infra.utilizations())

    def _accrue(self, t0: float, t1: float) -> None:
        if t1 <= t0:
            return
        s = self.series
        m = int(t0 // 60)
        while t0 < t1 and m < self.minutes:
            edge = min(t1, (m + 1) * 60.0)
            dt = edge - t0
            s["cost"][m] += self._cost * dt
            s["revenue"][m] += self._rev * dt
            s["green_penalty"][m] += self._green * dt
            s["profit"][m] += (self._rev - self._cost - self._green) * dt
            s["utilization"][m] += self._util * dt / 60.0
            s["fairness"][m] += self._fair * dt / 60.0
            t0 = edge
            m += 1

    # events -----------------------------------------------------------------
    def set_weights(self, weights: ObjectiveWeights) -> None:
        self.weights = weights
        self.weight_history.append((self.now, weights))

    def _arrive(self, req: SfcRequest) -> Placement | Rejected:
        minute = int(req.arrival_s // 60)
        if minute < self.minutes:
            self.series["arrival_rate"][minute] += 1
        result = embed_sfc(req, self.infra, self.weights, self.paths)
        if isinstance(result, Placement):
            self.accepted += 1
            if minute < self.minutes:
                self.series["accepted"][minute] += 1
            heapq.heappush(self._departures, (req.arrival_s + req.lifetime_s, req.id, result))
        else:
            self.rejected += 1
            self.reject_reasons[result.reason] = self.reject_reasons.get(result.reason, 0) + 1
        self._refresh_rates()
        return result

    def advance(self, dt_s: float) -> list:
        """Process every arrival and expiry in (now, now + dt]."""
        if dt_s <= 0:
            raise AllocError("dt must be positive")
        end = self.now + dt_s
        events = []
        while True:
            t_arr = self._pending.arrival_s if self._pending is not None else math.inf
            t_dep = self._departures[0][0] if self._departures else math.inf
            t = min(t_arr, t_dep)
            if t > end:
                break
            self._accrue(self.now, t)
            self.now = t
            if t_dep <= t_arr:
                _, _, placement = heapq.heappop(self._departures)
                release(self.infra, placement)
                self._refresh_rates()
                events.append(("expire", placement))
            else:
                req = self._pending
                self._pending = next(self.arrivals, None)
                events.append(("arrive", self._arrive(req)))
        self._accrue(self.now, end)
        self.now = end
        return events

    def current_minute(self) -> int:
        return min(self.minutes, int(self.now // 60))

    def finalize_series(self) -> None:
        s = self.series
        for m in range(self.minutes):
            a = s["arrival_rate"][m]
            s["acceptance_ratio"][m] = s["accepted"][m] / a if a else 1.0

    def metrics_window(self, span_s: float = DAY_S) -> MetricsWindow:
        end = self.current_minute()
        need = int(span_s // 60)
        if end - self.last_close_min < need:
            raise WindowIncomplete(
                f"{(end - self.last_close_min) / 60:.1f} h since the last report; {need / 60:.0f} h required")
        self.finalize_series()
        lo = self.last_close_min
        self.last_close_min = end
        series = {k: v[lo:end] for k, v in self.series.items()}
        return MetricsWindow(lo, end, series, aggregate(self.series, lo, end))


def advance_clock(state: AllocationState, dt_s: float) -> list:
    return state.advance(dt_s)


def metrics_window(state: AllocationState) -> MetricsWindow:
    return state.metrics_window()
