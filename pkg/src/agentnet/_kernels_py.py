"""Pure-Python versions of the hot kernels.

Each function here has a compiled twin in ``_kernels.pyx`` with the same
signature and bit-identical results; :mod:`agentnet.kernels` picks one at
import time.
"""
from collections import deque


def jain_index(values):
    """Jain's fairness index of non-negative ``values``; all-zero input gives 1."""
    n = len(values)
    if n == 0:
        raise ValueError("jain_index needs at least one value")
    total = 0.0
    squares = 0.0
    for x in values:
        if x < 0:
            raise ValueError(f"negative share {x!r}")
        total += x
        squares += x * x
    if squares == 0.0:
        return 1.0
    j = (total * total) / (n * squares)
    # rounding can push a perfectly equal vector a hair above 1
    return 1.0 if j > 1.0 else j


def minmax_normalize(x, lo, hi):
    if lo > hi:
        raise ValueError(f"inverted bounds [{lo}, {hi}]")
    if hi == lo:
        return 0.0
    v = (x - lo) / (hi - lo)
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def score_candidates(rows, weights):
    """Min-max normalise candidate metric rows and score them.

    ``rows`` holds ``(cost, profit, utilization, fairness, green)`` tuples;
    ``weights`` is ``(a1, a2, a3, a4)``. Returns ``(scores, best)`` where
    ``best`` is the first index reaching the minimum score.
    """
    n = len(rows)
    if n == 0:
        return [], -1
    lo = [float("inf")] * 5
    hi = [float("-inf")] * 5
    for row in rows:
        for j in range(5):
            v = row[j]
            if v < lo[j]:
                lo[j] = v
            if v > hi[j]:
                hi[j] = v
    a1, a2, a3, a4 = weights
    scores = []
    best = 0
    best_score = float("inf")
    for i, row in enumerate(rows):
        c = minmax_normalize(row[0], lo[0], hi[0])
        p = minmax_normalize(row[1], lo[1], hi[1])
        u = minmax_normalize(row[2], lo[2], hi[2])
        f = minmax_normalize(row[3], lo[3], hi[3])
        g = minmax_normalize(row[4], lo[4], hi[4])
        s = a1 * c + a2 * (1.0 - p) + a3 * (u + (1.0 - f)) + a4 * g
        scores.append(s)
        if s < best_score:
            best_score = s
            best = i
    return scores, best


def tx_time_us(size_bytes, rate_bps):
    """Serialisation time in whole microseconds, rounded up."""
    return -(-(size_bytes * 8_000_000) // rate_bps)


class LinkQueue:
    """Drop-tail FIFO of a single link direction, solved analytically.

    ``capacity`` counts every packet in the system (waiting or in service).
    ``admit`` returns the time the packet finishes serialisation, or -1 when
    the buffer is full.
    """

    def __init__(self, rate_bps, capacity):
        if rate_bps <= 0 or capacity <= 0:
            raise ValueError("rate and capacity must be positive")
        self.rate_bps = int(rate_bps)
        self.capacity = int(capacity)
        self.busy_until = 0
        self._finish = deque()

    def admit(self, now, size_bytes):
        finish = self._finish
        while finish and finish[0] <= now:
            finish.popleft()
        if len(finish) >= self.capacity:
            return -1
        start = self.busy_until if self.busy_until > now else now
        done = start + tx_time_us(size_bytes, self.rate_bps)
        self.busy_until = done
        finish.append(done)
        return done

    def backlog(self, now):
        finish = self._finish
        while finish and finish[0] <= now:
            finish.popleft()
        return len(finish)
