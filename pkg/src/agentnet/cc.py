"""Pluggable congestion control.

A scheme is the three window hooks a Linux ``tcp_congestion_ops`` module
would provide (``ssthresh``, ``cong_avoid``, ``undo_cwnd``) plus an
optional slow-start exit test. Connections own a :class:`CcState` and a
scheme reference; swapping schemes replaces only the reference.

Loss detection is not here: the simulator's TCP-like transport decides
when to call :meth:`Connection.on_loss`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

from .errors import AgentNetError


class CcError(AgentNetError):
    pass


class DuplicateName(CcError, ValueError):
    pass


class UnknownScheme(CcError, KeyError):
    pass


class NotInRecovery(CcError):
    pass


class SpecOutOfBounds(CcError, ValueError):
    pass


class InvalidParam(CcError, ValueError):
    pass


MIN_CWND = 1.0
MIN_SSTHRESH = 2.0


def _scaled_floor(cwnd: float, beta: float) -> float:
    # the epsilon keeps 20 * 0.7 from flooring to 13 on binary rounding
    return max(MIN_SSTHRESH, float(math.floor(cwnd * beta + 1e-9)))


@dataclass
class CcState:
    cwnd: float = 10.0
    ssthresh: float = 1e9
    srtt_us: float = 0.0
    min_rtt_us: float = 0.0
    in_recovery: bool = False
    prior_cwnd: float = 0.0
    acked_since_rtt: float = 0.0
    delivered_rate_estimate: float = 0.0
    # scheme-private scratch space, reset on every swap
    ca_priv: dict = field(default_factory=dict)

    @property
    def rtt_ratio(self) -> float:
        if self.min_rtt_us <= 0 or self.srtt_us <= 0:
            return 1.0
        return self.srtt_us / self.min_rtt_us


SsthreshHook = Callable[[CcState], float]
CongAvoidHook = Callable[[CcState, int, int], float]
UndoHook = Callable[[CcState], float]


@dataclass(frozen=True)
class CcScheme:
    name: str
    ssthresh: SsthreshHook
    cong_avoid: CongAvoidHook
    undo_cwnd: UndoHook
    slow_start_exit: Callable[[CcState], bool] | None = None
    pacing_gain: float | None = None
    params: dict = field(default_factory=dict)
    factory: Callable[..., "CcScheme"] | None = field(default=None, compare=False, repr=False)

    def with_params(self, **updates) -> "CcScheme":
        """Rebuild this scheme with some parameters changed (the ``tune`` action)."""
        unknown = set(updates) - set(self.params)
        if unknown:
            raise InvalidParam(f"{self.name} has no parameter(s) {sorted(unknown)}")
        if self.factory is None:
            raise InvalidParam(f"{self.name} is not tunable")
        merged = {**self.params, **{k: float(v) for k, v in updates.items()}}
        return self.factory(**merged)


def _undo_prior(state: CcState) -> float:
    return state.prior_cwnd


def _per_rtt(state: CcState, acked: int, growth: Callable[[CcState], float]) -> float:
    """Apply ``growth(state)`` packets once per window's worth of acks."""
    state.acked_since_rtt += acked
    cwnd = state.cwnd
    while state.acked_since_rtt >= cwnd:
        state.acked_since_rtt -= cwnd
        cwnd = max(MIN_CWND, cwnd + growth(state))
        state.cwnd = cwnd
    return cwnd


# built-ins -------------------------------------------------------------


def reno(beta: float = 0.5) -> CcScheme:
    return CcScheme(
        name="reno",
        ssthresh=lambda s: _scaled_floor(s.cwnd, beta),
        cong_avoid=lambda s, acked, now: _per_rtt(s, acked, lambda _s: 1.0),
        undo_cwnd=_undo_prior,
        params={"beta": beta},
        factory=reno,
    )


def cubic_lite(c: float = 0.4, beta: float = 0.7) -> CcScheme:
    def ssthresh(s: CcState) -> float:
        s.ca_priv["w_max"] = s.cwnd
        s.ca_priv.pop("epoch_us", None)
        return max(MIN_SSTHRESH, s.cwnd * beta)

    def cong_avoid(s: CcState, acked: int, now: int) -> float:
        priv = s.ca_priv
        if "epoch_us" not in priv:
            priv["epoch_us"] = now
            w_max = priv.setdefault("w_max", s.cwnd)
            priv["k"] = (max(0.0, w_max - s.cwnd) / c) ** (1.0 / 3.0)
        t = (now - priv["epoch_us"] + s.srtt_us) / 1e6
        target = c * (t - priv["k"]) ** 3 + priv["w_max"]
        if target > s.cwnd:
            # approach the cubic curve at most 0.5 packet per acked packet
            step = min((target - s.cwnd) / s.cwnd, 0.5) * acked
        else:
            step = 0.01 * acked / s.cwnd
        return s.cwnd + step

    return CcScheme(
        name="cubic_lite",
        ssthresh=ssthresh,
        cong_avoid=cong_avoid,
        undo_cwnd=_undo_prior,
        params={"c": c, "beta": beta},
        factory=cubic_lite,
    )


def vegas_lite(alpha: float = 2.0, beta: float = 4.0) -> CcScheme:
    def growth(s: CcState) -> float:
        if s.srtt_us <= 0:
            return 1.0
        queued = s.cwnd * (s.srtt_us - s.min_rtt_us) / s.srtt_us
        if queued < alpha:
            return 1.0
        if queued > beta:
            return -1.0
        return 0.0

    return CcScheme(
        name="vegas_lite",
        ssthresh=lambda s: _scaled_floor(s.cwnd, 0.75),
        cong_avoid=lambda s, acked, now: _per_rtt(s, acked, growth),
        undo_cwnd=_undo_prior,
        params={"alpha": alpha, "beta": beta},
        factory=vegas_lite,
    )


# generated family --------------------------------------------------------


@dataclass(frozen=True)
class GeneratedCcSpec:
    name: str
    additive_increase: float = 1.0
    beta: float = 0.5
    rtt_threshold: float = 1.5
    pacing_gain: float = 1.0
    rtt_sensitivity: float = 0.0

    def __post_init__(self):
        check_spec(self)


def check_spec(spec: GeneratedCcSpec) -> None:
    problems = []
    if not spec.name.startswith("llm_cc_v"):
        problems.append(f"name {spec.name!r} must look like llm_cc_v<i>")
    if not spec.additive_increase > 0:
        problems.append("additive_increase must be > 0")
    if not 0 < spec.beta < 1:
        problems.append("beta must lie in (0, 1)")
    if not spec.rtt_threshold > 1:
        problems.append("rtt_threshold must be > 1")
    if not spec.pacing_gain >= 1:
        problems.append("pacing_gain must be >= 1")
    if not 0 <= spec.rtt_sensitivity <= 1:
        problems.append("rtt_sensitivity must lie in [0, 1]")
    if problems:
        raise SpecOutOfBounds("; ".join(problems))


def generated_growth(spec: GeneratedCcSpec, state: CcState) -> float:
    """Per-RTT window change: additive increase damped by RTT inflation.

    Inflation is measured past ``rtt_threshold`` relative to the threshold's
    own headroom, so growth reaches zero at ratio ``thr + (thr - 1) / s``
    and turns negative beyond it.
    """
    excess = max(0.0, state.rtt_ratio - spec.rtt_threshold) / (spec.rtt_threshold - 1.0)
    return spec.additive_increase * (1.0 - spec.rtt_sensitivity * excess)


def build_generated_scheme(spec: GeneratedCcSpec) -> CcScheme:
    check_spec(spec)

    def factory(**params) -> CcScheme:
        return build_generated_scheme(replace(spec, **params))

    return CcScheme(
        name=spec.name,
        ssthresh=lambda s: _scaled_floor(s.cwnd, spec.beta),
        cong_avoid=lambda s, acked, now: _per_rtt(s, acked, lambda st: generated_growth(spec, st)),
        undo_cwnd=_undo_prior,
        slow_start_exit=lambda s: s.rtt_ratio > spec.rtt_threshold,
        pacing_gain=spec.pacing_gain,
        params={
            "additive_increase": spec.additive_increase,
            "beta": spec.beta,
            "rtt_threshold": spec.rtt_threshold,
            "pacing_gain": spec.pacing_gain,
            "rtt_sensitivity": spec.rtt_sensitivity,
        },
        factory=factory,
    )


# registry ------------------------------------------------------------------


class Registry:
    def __init__(self, schemes=()):
        self._schemes: dict[str, CcScheme] = {}
        for scheme in schemes:
            self.register(scheme)

    def register(self, scheme: CcScheme) -> "Registry":
        if scheme.name in self._schemes:
            raise DuplicateName(f"scheme {scheme.name!r} already registered")
        self._schemes[scheme.name] = scheme
        return self

    def get(self, name: str) -> CcScheme:
        try:
            return self._schemes[name]
        except KeyError:
            raise UnknownScheme(name) from None

    def names(self) -> list[str]:
        return list(self._schemes)

    def __contains__(self, name: str) -> bool:
        return name in self._schemes

    def __len__(self) -> int:
        return len(self._schemes)


def default_registry() -> Registry:
    return Registry([reno(), cubic_lite(), vegas_lite()])


def register_scheme(registry: Registry, scheme: CcScheme) -> Registry:
    return registry.register(scheme)


# connection ------------------------------------------------------------------


@dataclass
class SwapMarker:
    time_us: int
    old: str
    new: str
    kind: str = "swap"


class Connection:
    """Window state of one transport connection bound to a scheme."""

    def __init__(self, scheme: CcScheme, initial_cwnd: float = 10.0, initial_ssthresh: float = 1e9):
        self.scheme = scheme
        self.state = CcState(cwnd=float(initial_cwnd), ssthresh=float(initial_ssthresh))
        self.markers: list[SwapMarker] = []

    def _clamp(self) -> None:
        s = self.state
        if s.cwnd < MIN_CWND:
            s.cwnd = MIN_CWND
        if s.ssthresh < MIN_SSTHRESH:
            s.ssthresh = MIN_SSTHRESH

    def on_ack(self, acked_pkts: int, rtt_sample_us: float | None, now: int) -> CcState:
        s = self.state
        if rtt_sample_us is not None and rtt_sample_us > 0:
            if s.srtt_us <= 0:
                s.srtt_us = float(rtt_sample_us)
            else:
                s.srtt_us = 0.875 * s.srtt_us + 0.125 * rtt_sample_us
            if s.min_rtt_us <= 0 or rtt_sample_us < s.min_rtt_us:
                s.min_rtt_us = float(rtt_sample_us)
            s.delivered_rate_estimate = s.cwnd * 8 * 1400 / (s.srtt_us / 1e6)
        if acked_pkts <= 0:
            return s
        if s.cwnd < s.ssthresh:
            # slow start stops at ssthresh; leftover credit goes to avoidance
            grown = min(s.cwnd + acked_pkts, s.ssthresh)
            acked_pkts = max(0.0, acked_pkts - (grown - s.cwnd))
            s.cwnd = grown
            exit_test = self.scheme.slow_start_exit
            if exit_test is not None and exit_test(s):
                s.ssthresh = max(MIN_SSTHRESH, s.cwnd)
                acked_pkts = 0
        if acked_pkts > 0 and s.cwnd >= s.ssthresh:
            s.cwnd = self.scheme.cong_avoid(s, acked_pkts, now)
            if s.cwnd < s.ssthresh:
                # a delay-driven decrease must not re-enter slow start
                s.ssthresh = max(MIN_SSTHRESH, s.cwnd)
        self._clamp()
        return s

    def on_loss(self, now: int, timeout: bool = False) -> CcState:
        s = self.state
        s.prior_cwnd = s.cwnd
        s.ssthresh = self.scheme.ssthresh(s)
        # never grow on a loss: a window below the floor stays where it is
        s.cwnd = MIN_CWND if timeout else min(s.cwnd, s.ssthresh)
        s.acked_since_rtt = 0.0
        s.in_recovery = True
        self._clamp()
        return s

    def exit_recovery(self) -> None:
        self.state.in_recovery = False

    def undo(self) -> CcState:
        s = self.state
        if not s.in_recovery:
            raise NotInRecovery("undo outside loss recovery")
        s.cwnd = self.scheme.undo_cwnd(s)
        s.in_recovery = False
        self._clamp()
        return s

    def swap_scheme(self, registry: Registry, name: str, now: int, kind: str = "swap") -> "Connection":
        new = registry.get(name)
        self._install(new, now, kind)
        return self

    def install(self, scheme: CcScheme, now: int, kind: str = "tune") -> None:
        """Swap to an unregistered variant (used for parameter tuning)."""
        self._install(scheme, now, kind)

    def _install(self, new: CcScheme, now: int, kind: str) -> None:
        old = self.scheme
        self.markers.append(SwapMarker(now, old.name, new.name, kind))
        if new is old:
            return
        self.scheme = new
        self.state.ca_priv = {}


def on_ack(conn: Connection, acked_pkts: int, rtt_sample_us: float | None, now: int) -> CcState:
    return conn.on_ack(acked_pkts, rtt_sample_us, now)


def on_loss(conn: Connection, now: int, timeout: bool = False) -> CcState:
    return conn.on_loss(now, timeout)


def undo(conn: Connection) -> CcState:
    return conn.undo()


def swap_scheme(conn: Connection, registry: Registry, name: str, now: int) -> Connection:
    return conn.swap_scheme(registry, name, now)
