# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernels. Semantics mirror ``_kernels_py`` exactly."""
from libc.stdlib cimport malloc, free


def jain_index(values):
    cdef Py_ssize_t n = len(values)
    cdef double total = 0.0, squares = 0.0, x, j
    if n == 0:
        raise ValueError("jain_index needs at least one value")
    for v in values:
        x = v
        if x < 0:
            raise ValueError(f"negative share {v!r}")
        total += x
        squares += x * x
    if squares == 0.0:
        return 1.0
    j = (total * total) / (<double>n * squares)
    return 1.0 if j > 1.0 else j


cdef inline double _norm(double x, double lo, double hi):
    cdef double v
    if hi == lo:
        return 0.0
    v = (x - lo) / (hi - lo)
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def minmax_normalize(double x, double lo, double hi):
    if lo > hi:
        raise ValueError(f"inverted bounds [{lo}, {hi}]")
    return _norm(x, lo, hi)


def score_candidates(rows, weights):
    cdef Py_ssize_t n = len(rows), i
    cdef int j
    cdef double lo[5]
    cdef double hi[5]
    cdef double v, s, best_score, c, p, u, f, g
    cdef double a1, a2, a3, a4
    cdef Py_ssize_t best = 0
    if n == 0:
        return [], -1
    for j in range(5):
        lo[j] = float("inf")
        hi[j] = float("-inf")
    for row in rows:
        for j in range(5):
            v = row[j]
            if v < lo[j]:
                lo[j] = v
            if v > hi[j]:
                hi[j] = v
    a1, a2, a3, a4 = weights
    scores = []
    best_score = float("inf")
    i = 0
    for row in rows:
        c = _norm(row[0], lo[0], hi[0])
        p = _norm(row[1], lo[1], hi[1])
        u = _norm(row[2], lo[2], hi[2])
        f = _norm(row[3], lo[3], hi[3])
        g = _norm(row[4], lo[4], hi[4])
        s = a1 * c + a2 * (1.0 - p) + a3 * (u + (1.0 - f)) + a4 * g
        scores.append(s)
        if s < best_score:
            best_score = s
            best = i
        i += 1
    return scores, best


def tx_time_us(long long size_bytes, long long rate_bps):
    return -(-(size_bytes * 8000000) // rate_bps)


cdef class LinkQueue:
    """Drop-tail FIFO of one link direction backed by a C ring buffer."""
    cdef public long long rate_bps
    cdef public long long capacity
    cdef public long long busy_until
    cdef long long *_ring
    cdef Py_ssize_t _head
    cdef Py_ssize_t _count

    def __cinit__(self, rate_bps, capacity):
        if rate_bps <= 0 or capacity <= 0:
            raise ValueError("rate and capacity must be positive")
        self.rate_bps = int(rate_bps)
        self.capacity = int(capacity)
        self.busy_until = 0
        self._head = 0
        self._count = 0
        self._ring = <long long *>malloc(self.capacity * sizeof(long long))
        if self._ring == NULL:
            raise MemoryError()

    def __dealloc__(self):
        if self._ring != NULL:
            free(self._ring)

    cdef inline void _expire(self, long long now):
        while self._count > 0 and self._ring[self._head] <= now:
            self._head = (self._head + 1) % self.capacity
            self._count -= 1

    def admit(self, long long now, long long size_bytes):
        cdef long long start, done
        self._expire(now)
        if self._count >= self.capacity:
            return -1
        start = self.busy_until if self.busy_until > now else now
        done = start + (-(-(size_bytes * 8000000) // self.rate_bps))
        self.busy_until = done
        self._ring[(self._head + self._count) % self.capacity] = done
        self._count += 1
        return done

    def backlog(self, long long now):
        self._expire(now)
        return self._count
