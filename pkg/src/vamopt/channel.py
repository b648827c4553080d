"""802.11p node model: service-time transform, fixed-point transmission
probability, packet delivery ratio, and a slotted Monte Carlo oracle.

The analytic side treats each station as an M/G/1-style queue whose
service spans a uniform number of virtual slots (an idle backoff slot,
possibly followed by a transmission) plus the arbitration gap and the
frame itself. The Monte Carlo oracle simulates the same abstraction
directly on a shared slotted channel and is used to bound the error of
the fixed point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ChannelParams, derive_seed


def virtual_slot_transform(s: float, busy_prob: float, params: ChannelParams) -> float:
    """Laplace transform of one virtual slot.

    With probability 1-b the slot is idle (slot_time); with probability b
    it is followed by a busy period of aifs_delta + frame_time_t0.
    """
    if not (0.0 <= busy_prob <= 1.0):
        raise ValueError("busy_prob must lie in [0, 1]")
    b = busy_prob
    t_busy = params.busy_time
    return (1.0 - b) * math.exp(-s * params.slot_time) + \
        b * math.exp(-s * (params.slot_time + t_busy))


def mean_virtual_slot(busy_prob: float, params: ChannelParams) -> float:
    return params.slot_time + busy_prob * params.busy_time


def service_time_transform(s: float, busy_prob: float, params: ChannelParams) -> float:
    """Laplace transform of the full service time.

    exp(-(delta+T0)s) / W0 * sum_{k=1}^{W0} L_X(s)^k — the explicit sum is
    normative: it equals 1 at s=0 for every W0, which the closed-form
    ratio with a W0+1 exponent in the numerator does not.
    """
    lx = virtual_slot_transform(s, busy_prob, params)
    w0 = int(params.w0)
    acc = 0.0
    power = 1.0
    for _ in range(w0):
        power *= lx
        acc += power
    return math.exp(-s * (params.aifs_delta + params.frame_time_t0)) * acc / w0


def mean_service_time(busy_prob: float, params: ChannelParams) -> float:
    """Mean service time: prologue plus the mean backoff-slot count."""
    ex = mean_virtual_slot(busy_prob, params)
    return (params.aifs_delta + params.frame_time_t0) + 0.5 * (params.w0 + 1) * ex


@dataclass(frozen=True)
class FixedPointResult:
    tau: float
    pdr: float
    iterations: int
    converged: bool
    expected_service_time: float


def fixed_point_tau(big_lambda: float, n: int, params: ChannelParams,
                    tol: float = 1e-9, max_iter: int = 10_000,
                    tau0: float = 0.0) -> FixedPointResult:
    """Damped fixed-point iteration for the per-slot transmission probability.

    Each station carries rate big_lambda/n. One sweep: busy probability
    from the other stations' tau, mean virtual slot, mean service time,
    empty-queue probability pi0 = max(0, 1 - rho), and the update
    tau' = (1 - pi0) * 2/(W0+1). Iterates with 0.5 damping from tau0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if big_lambda < 0:
        raise ValueError("big_lambda must be >= 0")
    rate = big_lambda / n
    tau = float(tau0)
    ec = mean_service_time(0.0, params)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        b = 1.0 - (1.0 - tau) ** (n - 1)
        ec = mean_service_time(b, params)
        pi0 = max(0.0, 1.0 - rate * ec)
        tau_new = (1.0 - pi0) * 2.0 / (params.w0 + 1)
        if abs(tau_new - tau) < tol:
            tau = tau_new
            converged = True
            break
        tau = 0.5 * tau + 0.5 * tau_new
    pdr_val = (1.0 - tau) ** (n - 1)
    return FixedPointResult(tau=tau, pdr=pdr_val, iterations=iterations,
                            converged=converged, expected_service_time=ec)


def pdr(big_lambda: float, n: int, params: ChannelParams, **kwargs) -> float:
    """Packet delivery ratio (1-tau)^(n-1) of the fixed-point node model."""
    return fixed_point_tau(big_lambda, n, params, **kwargs).pdr


def _simulate_once(rate_per_station: float, n: int, params: ChannelParams,
                   sim_duration: float, rng) -> tuple[int, int]:
    """One replication of the slotted contention model.

    Stations hold at most one pending frame (arrivals during service are
    dropped, matching the single-frame service abstraction); a pending
    frame waits a uniform 1..W0 idle slots and transmits, colliding when
    another station picks the same slot. Returns (delivered, attempted).
    """
    slot = params.slot_time
    busy = params.busy_time
    w0 = int(params.w0)
    next_arrival = rng.exponential(1.0 / rate_per_station, size=n) \
        if rate_per_station > 0 else np.full(n, np.inf)
    backoff = np.full(n, -1, dtype=int)   # -1: no pending frame
    t = 0.0
    delivered = attempted = 0
    while t < sim_duration:
        if not (backoff >= 0).any():
            t_next = float(next_arrival.min())
            if t_next > sim_duration:
                break
            t = t_next
            due = next_arrival <= t
            backoff[due] = rng.integers(1, w0 + 1, size=int(due.sum()))
            next_arrival[due] += rng.exponential(1.0 / rate_per_station,
                                                 size=int(due.sum()))
            continue
        # one idle backoff slot elapses; frames arriving meanwhile join
        # with a fresh countdown from the next slot boundary
        t += slot
        newly = (next_arrival <= t) & (backoff < 0)
        if newly.any():
            backoff[newly] = rng.integers(1, w0 + 1, size=int(newly.sum()))
        while True:
            due = (next_arrival <= t)
            if not due.any():
                break
            next_arrival[due] += rng.exponential(1.0 / rate_per_station,
                                                 size=int(due.sum()))
        pending = backoff >= 0
        backoff[pending] -= 1
        firing = backoff == 0
        k = int(firing.sum())
        if k > 0:
            attempted += k
            if k == 1:
                delivered += 1
            t += busy
            backoff[firing] = -1
    return delivered, attempted


def monte_carlo_pdr(big_lambda: float, n: int, params: ChannelParams,
                    sim_duration: float = 60.0, seed: int = 0,
                    replications: int = 8) -> tuple[float, float]:
    """Monte Carlo delivery ratio with a 95% confidence half-width.

    Runs independent replications with derived seeds; by convention an
    idle network (no attempts anywhere) reports a PDR of 1.
    """
    if sim_duration <= 0:
        raise ValueError("sim_duration must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    rate = big_lambda / n
    ratios = []
    for r in range(replications):
        rng = np.random.default_rng(derive_seed(seed, r))
        delivered, attempted = _simulate_once(rate, n, params, sim_duration, rng)
        ratios.append(delivered / attempted if attempted else 1.0)
    ratios = np.asarray(ratios)
    mean = float(ratios.mean())
    if len(ratios) > 1:
        half = 1.96 * float(ratios.std(ddof=1)) / math.sqrt(len(ratios))
    else:
        half = float("nan")
    return mean, half
