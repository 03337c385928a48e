"""Per-service outcome probabilities and delay metrics from a converged (tau, a).

A service handles one frame: up to 5 CCAs per channel-access attempt and up
to 3 retransmissions after a collision. Each attempt ends one of three ways:
success (acknowledged), access failure (five busy CCAs), or collision.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import (
    NetworkConfig,
    PerformanceReport,
    Source,
    T1_SYMBOLS,
    TrafficMode,
    derived_probs,
)
from .analytical import FixedPoint, throughput


@dataclass(frozen=True, slots=True)
class ServiceTimes:
    """Mean duration in symbols of one attempt, by outcome.

    T1: frame discarded after five busy CCAs (all mean backoffs + 5 CCAs).
    T2: successful attempt, ends when the ACK finishes.
    T3: collided attempt, ends when the ACK timeout expires.
    """

    T1: float
    T2: float
    T3: float


@dataclass(frozen=True, slots=True)
class AttemptProbs:
    """Outcome probabilities of a single channel-access attempt."""

    PSuc: float
    PAcc: float  # access failure: five busy CCAs in a row
    PColl: float


@dataclass(frozen=True, slots=True)
class RetryProbs:
    """Joint probabilities over the retry stage i = 0..3 at which a service ends.

    PS[i]: delivered at stage i after i collisions.
    PC[i]: access-failure drop at stage i.
    PF[i]: still colliding at stage i (PF[3] is the retry-limit drop).
    """

    PS: tuple[float, float, float, float]
    PC: tuple[float, float, float, float]
    PF: tuple[float, float, float, float]


def service_times(a: float, k: float, L: int) -> ServiceTimes:
    """Mean attempt durations. The closed forms depend only on a and L;
    k is accepted for signature symmetry with the probability helpers."""
    if not 0.0 <= a < 1.0:
        raise ValueError(f"a must be in [0,1): {a}")
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"k out of [0,1]: {k}")
    a5 = a**5
    one = 1.0 - a5
    T2 = (132 + 158 * a + 318 * a**2 + 318 * a**3 + 318 * a**4 - 1244 * a5 + 2 * L * one) / one
    T3 = (144 + 170 * a + 330 * a**2 + 330 * a**3 + 330 * a**4 - 1256 * a5 + 2 * L * one) / one
    return ServiceTimes(T1=float(T1_SYMBOLS), T2=T2, T3=T3)


def attempt_probs(a: float, k: float) -> AttemptProbs:
    if not 0.0 <= a <= 1.0 or not 0.0 <= k <= 1.0:
        raise ValueError(f"probabilities out of range: a={a}, k={k}")
    a5 = a**5
    k26 = k**26
    return AttemptProbs(PSuc=(1.0 - a5) * k26, PAcc=a5, PColl=(1.0 - a5) * (1.0 - k26))


def retry_probs(ap: AttemptProbs) -> RetryProbs:
    q = ap.PColl
    # stage-0 weight: complement of ending at stages 1..3 instead
    head = 1.0 - q - q**2 - q**3
    return RetryProbs(
        PS=(head * ap.PSuc, q * ap.PSuc, q**2 * ap.PSuc, q**3 * ap.PSuc),
        PC=(head * ap.PAcc, q * ap.PAcc, q**2 * ap.PAcc, q**3 * ap.PAcc),
        PF=(q, q**2, q**3, q**4),
    )


def reliability(rp: RetryProbs) -> float:
    """Probability a frame entering service is eventually delivered."""
    num = sum(rp.PS)
    den = sum(rp.PS) + sum(rp.PC) + rp.PF[3]
    if den == 0.0:
        raise ValueError("no service outcome has positive probability")
    return num / den


def delays(
    rp: RetryProbs, st: ServiceTimes, PS: float | None = None
) -> tuple[float | None, float]:
    """Mean service delay of delivered frames (TS) and of all frames (TVS).

    A service ending at stage i spent i collided attempts (T3 each) before
    its final attempt; a frame dropped at the retry limit spent 4. TS is the
    conditional mean given delivery; it is None when delivery never happens.
    Both exclude queueing wait.
    """
    if PS is None:
        PS = reliability(rp)
    ps_total = sum(rp.PS)
    pc_total = sum(rp.PC)
    drop = rp.PF[3]
    ts_num = sum(rp.PS[i] * (i * st.T3 + st.T2) for i in range(4))
    TS = None if PS == 0.0 else ts_num / ps_total
    tvs_num = (
        sum(rp.PC[i] * (i * st.T3 + st.T1) for i in range(4))
        + ts_num
        + 4 * drop * st.T3
    )
    TVS = tvs_num / (ps_total + pc_total + drop)
    return TS, TVS


def queue_adjusted(
    TS: float | None, TVS: float, Wq: float
) -> tuple[float | None, float]:
    """Add mean queueing wait to the service delays."""
    if Wq < 0:
        raise ValueError(f"negative wait: {Wq}")
    return (None if TS is None else TS + Wq), TVS + Wq


def report(cfg: NetworkConfig, fp: FixedPoint) -> PerformanceReport:
    """Full metric set for a converged fixed point."""
    if not fp.converged:
        raise ValueError("fixed point did not converge; no report")
    probs = derived_probs(fp.tau, fp.a, cfg.N, cfg.L, cfg.r)
    st = service_times(fp.a, probs.k, cfg.L)
    rp = retry_probs(attempt_probs(fp.a, probs.k))
    PS = reliability(rp)
    TS, TVS = delays(rp, st, PS)
    TH = throughput(fp.tau, cfg.N, cfg.L)
    TSW = TVSW = None
    if cfg.mode is TrafficMode.UNSATM:
        from .queueing import queue_stats, utilization

        p = utilization(cfg.r, cfg.L, TVS)
        qs = queue_stats(p, cfg.M, cfg.r / (2 * cfg.L))
        TSW, TVSW = queue_adjusted(TS, TVS, qs.Wq)
    return PerformanceReport(
        tau=fp.tau, a=fp.a, TH=TH, PS=PS, TS=TS, TVS=TVS,
        TSW=TSW, TVSW=TVSW, source=Source.ANALYTICAL,
    )
