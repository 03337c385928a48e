"""Domain types and protocol constants shared by every other module.

Time unit everywhere is one symbol (16 us); one mini-slot = 1 symbol, and
one backoff period = 20 symbols. Frame payload of L bytes occupies 2L symbols
on air at 250 kb/s.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

log = logging.getLogger(__name__)


class TrafficMode(str, Enum):
    """Traffic regime of the network under study."""

    UNSAT1 = "unsat1"  # Bernoulli arrivals, single-frame MAC buffer
    UNSATM = "unsatm"  # Bernoulli arrivals, M-frame MAC buffer
    SATURATED = "sat"  # a frame is always waiting; arrival rate irrelevant

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True, slots=True)
class ProtocolConstants:
    """Unslotted CSMA/CA constants for non-beacon operation with ACKs.

    Durations are integer symbol counts. The backoff window for attempt i is
    w_i = 2^min(macMinBE + i, aMaxBE) backoff periods, and b_i is the mean
    backoff delay of attempt i in symbols.
    """

    macMinBE: int = 3
    aMaxBE: int = 5
    macMaxCSMABackoffs: int = 4
    aMaxFrameRetries: int = 3
    macAckWaitDuration: int = 54  # symbols from data end to ACK timeout
    aTurnaroundTime: int = 12  # RX->TX switch, symbols
    tAck: int = 20  # gap between data end and ACK start, symbols
    ackFrameSymbols: int = 22
    ccaSymbols: int = 8
    unitBackoffPeriod: int = 20
    symbolDurationMicroseconds: float = 16.0
    backoffWindows: tuple[int, ...] = (8, 16, 32, 32, 32)
    meanBackoffs: tuple[int, ...] = (70, 150, 310, 310, 310)

    def __post_init__(self):
        for i, w in enumerate(self.backoffWindows):
            if w != 2 ** min(self.macMinBE + i, self.aMaxBE):
                raise ValueError(f"backoff window {i} inconsistent: {w}")
        for i, b in enumerate(self.meanBackoffs):
            # (w - 1) * 20 / 2 is an exact integer for every w here
            if 2 * b != (self.backoffWindows[i] - 1) * self.unitBackoffPeriod:
                raise ValueError(f"mean backoff {i} inconsistent: {b}")


CONSTANTS = ProtocolConstants()

# Mean service time of a frame dropped after five busy CCAs: all five mean
# backoffs plus five CCA listens. Constant, independent of frame length.
T1_SYMBOLS = sum(CONSTANTS.meanBackoffs) + 5 * CONSTANTS.ccaSymbols

L_NOMINAL_RANGE = (30, 127)  # bytes; values outside only draw a warning


@dataclass(frozen=True, slots=True)
class NetworkConfig:
    """One star-network scenario.

    N sensor nodes contend for a single sink. L is the frame payload in bytes
    (2L symbols on air). r is the arrival rate in frames per frame duration,
    so the per-mini-slot arrival probability is r / 2L. M is the MAC buffer
    capacity in frames, counting the frame in service.
    """

    N: int
    L: int
    mode: TrafficMode
    r: float = 0.0
    M: int = 1

    def __post_init__(self):
        if not isinstance(self.N, int) or self.N < 1:
            raise ValueError(f"node count must be a positive integer, got {self.N}")
        if not isinstance(self.L, int) or self.L < 1:
            raise ValueError(f"frame length must be a positive integer, got {self.L}")
        lo, hi = L_NOMINAL_RANGE
        if not lo <= self.L <= hi:
            log.warning("frame length %d bytes outside nominal [%d, %d]", self.L, lo, hi)
        if self.mode is TrafficMode.UNSAT1 and self.M != 1:
            raise ValueError("single-buffer mode requires M = 1")
        if self.mode is TrafficMode.UNSATM and self.M <= 1:
            raise ValueError("multi-buffer mode requires M > 1")
        if self.M < 1:
            raise ValueError(f"buffer capacity must be >= 1, got {self.M}")
        if self.mode is not TrafficMode.SATURATED:
            if not (self.r >= 0.0) or not math.isfinite(self.r):
                raise ValueError(f"arrival rate must be finite and >= 0, got {self.r}")

    @property
    def frame_symbols(self) -> int:
        """On-air duration of one data frame in symbols."""
        return 2 * self.L

    @property
    def p_arrival(self) -> float:
        """Per-mini-slot arrival probability (0 in saturated mode)."""
        if self.mode is TrafficMode.SATURATED:
            return 0.0
        return self.r / (2 * self.L)


@dataclass(frozen=True, slots=True)
class ElementaryProbs:
    """Per-mini-slot probabilities derived from a candidate (tau, a) pair.

    tau  probability a node starts a CCA in a given mini-slot
    a    probability a CCA finds the channel busy
    k    none of the other N-1 nodes start sensing: (1-tau)^(N-1)
    x    no node starts sensing: (1-tau)^N
    y    exactly one node starts sensing: N tau (1-tau)^(N-1)
    z    equal to k; kept as a separate name because the channel-side and
         node-side derivations use it in different roles
    D    probability one service attempt ends in a collision:
         (1 - a^5)(1 - k^26)
    """

    tau: float
    a: float
    k: float
    x: float
    y: float
    z: float
    D: float
    p_arrival: float


def derived_probs(tau: float, a: float, N: int, L: int, r: float) -> ElementaryProbs:
    """Evaluate the elementary probabilities at (tau, a). Pure."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau out of [0,1]: {tau}")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a out of [0,1]: {a}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    k = (1.0 - tau) ** (N - 1)
    x = (1.0 - tau) * k
    y = N * tau * k
    D = (1.0 - a**5) * (1.0 - k**26)
    return ElementaryProbs(tau=tau, a=a, k=k, x=x, y=y, z=k, D=D, p_arrival=r / (2 * L))


class Source(str, Enum):
    """Where a performance report came from."""

    ANALYTICAL = "analytical"
    SIMULATED = "simulated"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True, slots=True)
class PerformanceReport:
    """The eight performance metrics of one scenario.

    Delays are in symbols. TS is None when no frame is ever delivered (the
    conditional mean is undefined then). TSW/TVSW are populated only for the
    multi-buffer mode, where queueing wait exists. ci95 holds 95% half-widths
    per metric name for simulated reports.
    """

    tau: float
    a: float
    TH: float
    PS: float
    TS: float | None
    TVS: float
    source: Source
    TSW: float | None = None
    TVSW: float | None = None
    ci95: dict[str, float] = field(default_factory=dict)
