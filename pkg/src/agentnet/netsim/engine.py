"""Integer-microsecond discrete-event core."""
from __future__ import annotations

import heapq
from typing import Any, Callable, NamedTuple

from ..errors import AgentNetError


class SimError(AgentNetError):
    pass


class ClockViolation(SimError):
    pass


class EmptyQueue(SimError):
    pass


class SimEvent(NamedTuple):
    time: int
    ordinal: int
    action: Callable[..., Any]
    args: tuple = ()


class Simulator:
    """Events run in ``(time, ordinal)`` order; ordinals follow insertion order."""

    def __init__(self):
        self.now = 0
        self._heap: list[SimEvent] = []
        self._ordinal = 0
        self.processed = 0

    def schedule(self, time: int, action: Callable[..., Any], *args) -> SimEvent:
        time = int(time)
        if time < self.now:
            raise ClockViolation(f"event at {time} us is before the clock ({self.now} us)")
        ev = SimEvent(time, self._ordinal, action, args)
        self._ordinal += 1
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay: int, action: Callable[..., Any], *args) -> SimEvent:
        return self.schedule(self.now + int(delay), action, *args)

    def peek(self) -> SimEvent | None:
        return self._heap[0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def step(self) -> SimEvent:
        if not self._heap:
            raise EmptyQueue("no pending events")
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        self.processed += 1
        ev.action(*ev.args)
        return ev

    def run(self, until: int, stop: Callable[[], bool] | None = None) -> None:
        """Process events up to and including ``until``; the clock ends at ``until``
        unless ``stop`` returns true first."""
        heap = self._heap
        pop = heapq.heappop
        count = 0
        while heap and heap[0].time <= until:
            ev = pop(heap)
            self.now = ev.time
            count += 1
            ev.action(*ev.args)
            if stop is not None and stop():
                self.processed += count
                return
        self.processed += count
        if until > self.now:
            self.now = until


def step(sim: Simulator) -> SimEvent:
    return sim.step()
