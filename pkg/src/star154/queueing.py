"""Finite-buffer M/M/1/K formulas for the MAC queue.

K equals the buffer capacity M and counts the frame in service. Time unit is
one symbol; arrival rate lambda is frames per symbol. The closed forms have a
removable singularity at utilization 1 where float evaluation loses all
precision, so a narrow window around 1 is computed from the stationary
weights directly; both routes agree to ~1e-10 at the seam.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

_NEAR_ONE = 1e-6  # half-width of the stable-evaluation window around p = 1


@dataclass(frozen=True, slots=True)
class QueueStats:
    p: float  # utilization r*TVS/2L, may exceed 1
    p0: float  # probability the buffer is empty
    pM: float  # blocking probability (buffer full)
    Lq: float  # mean number of frames waiting (excludes the one in service)
    lambda_e: float  # effective (accepted) arrival rate, frames per symbol
    Wq: float  # mean wait in the queue, symbols


def utilization(r: float, L: int, TVS: float) -> float:
    """Offered load of the MAC queue: arrivals per mean service time."""
    if r < 0:
        raise ValueError(f"negative arrival rate: {r}")
    if TVS <= 0:
        raise ValueError(f"service time must be positive: {TVS}")
    return r * TVS / (2 * L)


def _weights(p: float, M: int) -> list[float]:
    w = [1.0]
    for _ in range(M):
        w.append(w[-1] * p)
    return w


def empty_prob(p: float, M: int) -> float:
    if p < 0:
        raise ValueError(f"negative utilization: {p}")
    if M < 1:
        raise ValueError(f"capacity must be >= 1: {M}")
    if abs(p - 1.0) < _NEAR_ONE:
        return 1.0 / math.fsum(_weights(p, M))
    return (1.0 - p) / (1.0 - p ** (M + 1))


def queue_stats(p: float, M: int, lam: float) -> QueueStats:
    """All queue quantities at utilization p, capacity M, arrival rate lam."""
    if lam < 0:
        raise ValueError(f"negative arrival rate: {lam}")
    p0 = empty_prob(p, M)
    if abs(p - 1.0) < _NEAR_ONE:
        w = _weights(p, M)
        tot = math.fsum(w)
        pM = w[M] / tot
        Lq = math.fsum((n - 1) * w[n] for n in range(1, M + 1)) / tot
    else:
        pM = (1.0 - p) * p**M / (1.0 - p ** (M + 1))
        Lq = (
            p / (1.0 - p)
            - (M + 1) * p ** (M + 1) / (1.0 - p ** (M + 1))
            - (1.0 - p0)
        )
    if M == 1:
        # no waiting positions; rounding in the expressions must not leak
        Lq = 0.0
    else:
        Lq = max(Lq, 0.0)  # provably nonnegative; shed float noise near p=0
    lambda_e = lam * (1.0 - pM)
    Wq = 0.0 if lambda_e == 0.0 else Lq / lambda_e
    return QueueStats(p=p, p0=p0, pM=pM, Lq=Lq, lambda_e=lambda_e, Wq=Wq)
