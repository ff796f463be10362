"""Seeded Monte Carlo simulator of the queue, power policy, and drop policy.

One replica walks the queue recursion frame by frame: Poisson arrivals join a
FIFO queue; each frame with a non-empty queue commits min(Q, service) packets,
of which the part the fade-limited rate cannot carry is dropped head-first;
truncated channel inversion sets the transmit power; an independent
Bernoulli(eps_c) draw marks the frame's codeword as a decoding error.  Fades
are redrawn once per coherence block and held inside it.

Service is fluid (fractional packets) by default, mirroring the analysis the
solver runs on; ``integer_service_mode`` floors the committed service and the
fade-limited rate to whole packets to expose the discretization pessimism.

Everything downstream of the seed is deterministic: arrivals, fades, and
decode draws come from three child streams of ``SeedSequence([seed,
user_index])``, and the frame loop is compiled but sequential.  The empirical
eps-hat statistics carry Wilson 95% intervals; at the paper-strength targets
(1e-7) nothing is measurable in any desk-scale run, so validation runs use
relaxed targets with the same machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .optim import MultiUserSolution, SingleUserSolution
from .phy import RadioConfig, packets_per_tti_snr
from .qos import QosTarget, TrafficModel

__all__ = [
    "SimConfig",
    "SimStats",
    "wilson_interval",
    "run_single_user",
    "run_multi_user",
    "occupancy_report",
]

_Z95 = 1.959963984540054   # two-sided 95% normal quantile
_RING_CAP = 1 << 16        # queued-packet ring capacity; overflow aborts the run
_MASS_TOL = 1e-9           # fluid-mass slop treated as zero


@dataclass(frozen=True)
class SimConfig:
    """Run-length, seeding, and mode switches for one simulation.

    Relaxed loss targets are not a simulator concern: callers get them by
    re-optimizing the scenario at looser eps values and simulating that
    solution.  ``inject_decode_errors`` / ``power_cap_enabled`` exist for
    bound-validation runs that isolate one loss mechanism at a time.
    """

    n_frames: int
    seed: int
    coherence_frames: int = 10
    integer_service_mode: bool = False
    inject_decode_errors: bool = True
    power_cap_enabled: bool = True

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.coherence_frames < 1:
            raise ValueError("coherence_frames must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class SimStats:
    """Raw counters from one replica, plus derived empirical probabilities.

    Packets are partitioned exactly: every arrival is delivered intact,
    departed with some dropped mass, or still queued at the end.  A packet is
    late when its queueing delay — arrival until its first mass departs the
    queue — exceeds the queueing deadline; the transmission frames after that
    point are the end-to-end budget's separate one-TTI term.  (Charging them
    to queueing would penalize fluid service rates below one packet per
    frame for their multi-frame packets, a cost the delay analysis books
    nowhere.)  Delay violations are counted for both delivered and dropped
    departures, but the empirical eps_q uses only cleanly delivered packets —
    dropped packets are charged to eps_h alone, matching the disjoint budget
    split the optimizer assumes.  The drop ratio eps_h is fluid mass dropped
    over packets arrived, the time-average the drop bound is stated for.
    """

    n_frames: int
    arrivals_total: int
    delivered: int
    proactive_drops: int       # packets that departed with dropped mass
    backlog: int               # packets still queued when the run ended
    delay_violations: int      # served past deadline, delivered and dropped alike
    late_delivered: int        # of those, the cleanly delivered ones
    decode_errors: int
    frames_transmitting: int
    frames_q_zero: int
    frames_q_ge_service: int
    fluid_served: float
    fluid_dropped: float
    queue_final: float
    energy_j: float

    def __post_init__(self) -> None:
        if self.delivered + self.proactive_drops + self.backlog != self.arrivals_total:
            raise ValueError("packet accounting does not balance")

    @property
    def eps_q_hat(self) -> float:
        """Delay-violation frequency among cleanly delivered packets."""
        return self.late_delivered / self.delivered if self.delivered else 0.0

    @property
    def eps_c_hat(self) -> float:
        """Decode-error frequency among transmitting frames."""
        n = self.frames_transmitting
        return self.decode_errors / n if n else 0.0

    @property
    def eps_h_hat(self) -> float:
        """Dropped fluid mass per arrived packet."""
        return self.fluid_dropped / self.arrivals_total if self.arrivals_total else 0.0

    @property
    def eps_q_ci(self) -> tuple[float, float]:
        return wilson_interval(self.late_delivered, self.delivered)

    @property
    def eps_c_ci(self) -> tuple[float, float]:
        return wilson_interval(self.decode_errors, self.frames_transmitting)

    @property
    def eps_h_ci(self) -> tuple[float, float]:
        return wilson_interval(self.fluid_dropped, self.arrivals_total)


def wilson_interval(k: float, n: float, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for k successes in n trials; (0, 1) when n = 0.

    k may be fractional (fluid drop mass): the formula is algebraic in the
    observed proportion and stays a sensible summary for near-binomial data.
    """
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    z2n = z * z / n
    denom = 1.0 + z2n
    center = (p + z2n / 2.0) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / denom
    # at the extremes the exact endpoint is 0 or 1; don't leak rounding dust
    lo = 0.0 if k <= 0 else max(center - half, 0.0)
    hi = 1.0 if k >= n else min(center + half, 1.0)
    return lo, hi


@njit(cache=True)
def _frame_loop(
    arrivals,            # int64[n_frames]
    block_s_cap,         # float64[n_blocks] fade-limited packets per TTI
    block_power,         # float64[n_blocks] policy transmit power
    coherence_frames,    # int
    service_target,      # committed packets per frame
    eps_c_inject,        # Bernoulli rate for decode-error marks; 0 disables
    uniforms,            # float64[n_frames] when injecting, else size 0
    deadline_frames,     # delay budget in whole frames
    dl_phase_s,          # TTI length, for energy metering
    trace_on,            # write per-frame trace arrays when nonzero
    trace_q, trace_power, trace_served, trace_dropped,
):
    n_frames = arrivals.shape[0]
    arr_frame = np.zeros(_RING_CAP, dtype=np.int64)
    drop_acc = np.zeros(_RING_CAP, dtype=np.float64)
    late_acc = np.zeros(_RING_CAP, dtype=np.uint8)
    head = 0
    size = 0
    pos = 0.0            # mass of the head packet already departed

    n_arrived = 0
    n_done = 0
    n_dropped = 0
    n_late_clean = 0
    n_late_dropped = 0
    n_decode = 0
    n_tx = 0
    n_q_zero = 0
    n_q_ge = 0
    fluid_served = 0.0
    fluid_dropped = 0.0
    energy = 0.0
    overflow = 0

    for n in range(n_frames):
        blk = n // coherence_frames
        q = size - pos
        if size == 0:
            q = 0.0
            n_q_zero += 1
        elif q >= service_target - 1e-9:
            n_q_ge += 1

        served = 0.0
        dropped = 0.0
        power = 0.0
        if q > 0.0:
            power = block_power[blk]
            energy += power * dl_phase_s
            b = q if q < service_target else service_target
            dropped = b - block_s_cap[blk]
            if dropped < 0.0:
                dropped = 0.0
            served = b - dropped
            fluid_served += served
            fluid_dropped += dropped
            if served > _MASS_TOL:
                n_tx += 1
                if eps_c_inject > 0.0 and uniforms[n] < eps_c_inject:
                    n_decode += 1
            # consume b from the head; the first `dropped` of it is drop mass
            consumed = 0.0
            while consumed < b - _MASS_TOL and size > 0:
                if pos == 0.0:
                    # queueing delay ends when the packet's first mass departs;
                    # its remaining transmission frames are the E2E budget's
                    # separate per-TTI term, not queueing
                    late_acc[head] = 1 if (n - arr_frame[head]) > deadline_frames else 0
                take = 1.0 - pos
                if take > b - consumed:
                    take = b - consumed
                if consumed < dropped:
                    over = consumed + take
                    if over > dropped:
                        over = dropped
                    drop_acc[head] += over - consumed
                pos += take
                consumed += take
                if pos >= 1.0 - _MASS_TOL:
                    late = late_acc[head] != 0
                    if drop_acc[head] > _MASS_TOL:
                        n_dropped += 1
                        if late:
                            n_late_dropped += 1
                    else:
                        n_done += 1
                        if late:
                            n_late_clean += 1
                    drop_acc[head] = 0.0
                    head = (head + 1) % _RING_CAP
                    size -= 1
                    pos = 0.0

        if trace_on != 0:
            trace_q[n] = q
            trace_power[n] = power
            trace_served[n] = served
            trace_dropped[n] = dropped

        a = arrivals[n]
        if size + a > _RING_CAP:
            overflow = 1
            break
        for _ in range(a):
            tail = (head + size) % _RING_CAP
            arr_frame[tail] = n
            drop_acc[tail] = 0.0
            late_acc[tail] = 0
            size += 1
        n_arrived += a

    q_final = size - pos
    if size == 0:
        q_final = 0.0
    return (
        n_arrived, n_done, n_dropped, n_late_clean, n_late_dropped,
        n_decode, n_tx, n_q_zero, n_q_ge,
        fluid_served, fluid_dropped, q_final, size, energy, overflow,
    )


def _user_streams(sim_cfg: SimConfig, user_index: int, lam: float, n_antennas: int):
    """Arrivals, per-block fades, and decode uniforms for one user's replica."""
    n_blocks = -(-sim_cfg.n_frames // sim_cfg.coherence_frames)
    kids = np.random.SeedSequence([sim_cfg.seed, user_index]).spawn(3)
    arrivals = np.random.Generator(np.random.PCG64(kids[0])).poisson(
        lam, sim_cfg.n_frames
    ).astype(np.int64)
    gains = np.random.Generator(np.random.PCG64(kids[1])).gamma(
        float(n_antennas), 1.0, n_blocks
    )
    uniforms = np.random.Generator(np.random.PCG64(kids[2])).random(sim_cfg.n_frames)
    return arrivals, gains, uniforms


def _write_trace(path: str, arrivals, gains, sim_cfg: SimConfig,
                 tq, tp, ts, td) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,g,arrivals,queue,power_w,served,dropped\n")
        for n in range(sim_cfg.n_frames):
            # plain-float repr: numpy scalars would stringify as np.float64(x)
            g = float(gains[n // sim_cfg.coherence_frames])
            fh.write(
                f"{n},{g!r},{arrivals[n]},{float(tq[n])!r},{float(tp[n])!r},"
                f"{float(ts[n])!r},{float(td[n])!r}\n"
            )


def run_single_user(
    cfg: RadioConfig,
    qos: QosTarget,
    traffic: TrafficModel,
    avg_gain: float,
    sol: SingleUserSolution,
    sim_cfg: SimConfig,
    *,
    user_index: int = 0,
    trace_path: Optional[str] = None,
    _streams=None,
) -> SimStats:
    """Simulate one user's queue under its solved operating point.

    The fade and the policy's response to it are constant inside a coherence
    block, so the fade-limited rate and the transmit power are precomputed
    per block; the frame loop handles only queue motion.
    """
    if sim_cfg.coherence_frames * cfg.frame_duration_s <= qos.queue_delay_s:
        raise ValueError(
            "coherence_frames * frame_duration_s must exceed queue_delay_s: "
            "the proactive-drop policy assumes the fade outlives the queueing "
            "deadline of any packet it delays"
        )
    if _streams is None:
        _streams = _user_streams(
            sim_cfg, user_index, traffic.lambda_per_frame, cfg.n_antennas
        )
    arrivals, gains, uniforms = _streams

    n0w = cfg.noise_density_w_per_hz * sol.bandwidth_hz
    inv_demand = n0w * sol.snr_target / (avg_gain * gains)
    if sim_cfg.power_cap_enabled:
        power = np.minimum(inv_demand, sol.power_cap_w)
        snr_at_cap = avg_gain * sol.power_cap_w * gains / n0w
        s_cap = packets_per_tti_snr(
            cfg, sol.bandwidth_hz, snr_at_cap, sol.budget.eps_c
        )
    else:
        power = inv_demand
        s_cap = np.full(gains.shape, 1e18)

    service_target = sol.service_packets_per_frame
    if sim_cfg.integer_service_mode:
        service_target = math.floor(service_target)
        s_cap = np.floor(s_cap)

    inject = sol.budget.eps_c if sim_cfg.inject_decode_errors else 0.0
    if inject <= 0.0:
        uniforms = np.empty(0)

    deadline_frames = int(math.floor(qos.queue_delay_s / cfg.frame_duration_s + 1e-9))
    trace_on = 1 if trace_path else 0
    shape = sim_cfg.n_frames if trace_on else 0
    tq, tp, ts, td = (np.zeros(shape) for _ in range(4))

    (
        n_arrived, n_done, n_dropped, n_late_clean, n_late_dropped,
        n_decode, n_tx, n_q_zero, n_q_ge,
        fluid_served, fluid_dropped, q_final, backlog, energy, overflow,
    ) = _frame_loop(
        arrivals, s_cap, power, sim_cfg.coherence_frames, service_target,
        inject, uniforms, deadline_frames, cfg.dl_phase_s,
        trace_on, tq, tp, ts, td,
    )
    if overflow:
        raise RuntimeError(
            f"queue exceeded {_RING_CAP} packets; the configuration is "
            f"unstable (service below arrival rate?)"
        )
    if trace_path:
        _write_trace(trace_path, arrivals, gains, sim_cfg, tq, tp, ts, td)

    return SimStats(
        n_frames=sim_cfg.n_frames,
        arrivals_total=int(n_arrived),
        delivered=int(n_done),
        proactive_drops=int(n_dropped),
        backlog=int(backlog),
        delay_violations=int(n_late_clean + n_late_dropped),
        late_delivered=int(n_late_clean),
        decode_errors=int(n_decode),
        frames_transmitting=int(n_tx),
        frames_q_zero=int(n_q_zero),
        frames_q_ge_service=int(n_q_ge),
        fluid_served=float(fluid_served),
        fluid_dropped=float(fluid_dropped),
        queue_final=float(q_final),
        energy_j=float(energy),
    )


def occupancy_report(stats: SimStats) -> float:
    """Fraction of frames with an empty queue or at least a full service batch.

    In either state the committed service min(Q, T_f*E^B) equals what the
    busy-probability argument assumes, so a high fraction certifies the
    tightness of that step.
    """
    return (stats.frames_q_zero + stats.frames_q_ge_service) / stats.n_frames


def run_multi_user(
    cfg: RadioConfig,
    qos: QosTarget,
    msol: MultiUserSolution,
    traffics: Sequence[TrafficModel],
    avg_gains: Sequence[float],
    sim_cfg: SimConfig,
) -> tuple[list[SimStats], int]:
    """Simulate every user's queue independently and count joint power spikes.

    Queues and fades are independent across users, so per-user statistics
    come from per-user replicas with decorrelated streams.  The returned
    count is the number of frames where the summed uncapped inversion demand
    exceeds the summed per-user caps — the event whose probability the
    per-user decomposition bounds conservatively.
    """
    k = len(msol.allocations)
    if not (len(traffics) == len(avg_gains) == k):
        raise ValueError("traffics and avg_gains must match the solution's users")

    n_blocks = -(-sim_cfg.n_frames // sim_cfg.coherence_frames)
    frames_in_block = np.full(n_blocks, sim_cfg.coherence_frames, dtype=np.int64)
    frames_in_block[-1] = sim_cfg.n_frames - (n_blocks - 1) * sim_cfg.coherence_frames
    demand_sum = np.zeros(n_blocks)

    stats: list[SimStats] = []
    for user, alloc in enumerate(msol.allocations):
        sol = alloc.solution
        streams = _user_streams(
            sim_cfg, user, traffics[user].lambda_per_frame, cfg.n_antennas
        )
        demand_sum += (
            cfg.noise_density_w_per_hz * sol.bandwidth_hz * sol.snr_target
            / (avg_gains[user] * streams[1])
        )
        stats.append(
            run_single_user(
                cfg, qos, traffics[user], avg_gains[user], sol, sim_cfg,
                user_index=user, _streams=streams,
            )
        )

    exceed_frames = int(frames_in_block[demand_sum > msol.total_power_w].sum())
    return stats, exceed_frames
