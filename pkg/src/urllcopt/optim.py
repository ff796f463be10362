"""Power-minimal link configuration: error-budget split and bandwidth allocation.

The end-to-end loss target eps_D is spent three ways — decoding errors
(eps_c), delay violations (eps_q), and proactive drops (eps_h) — and each
split implies a different operating point.  ``optimize_single_user`` runs the
two-step search: an inner split of the (eps_q, eps_c) share that minimizes the
required SNR, wrapped in an outer scalar search over the drop share eps_h that
minimizes the resulting power cap.  Both searches are golden-section on log
axes, exploiting convexity (inner) and observed unimodality (outer); the
outer search can optionally cross-check itself against a coarse grid and fall
back to it when unimodality fails.

Multi-user bandwidth is allocated in whole TTI symbols by steepest descent:
start every user at one symbol, then repeatedly grant one more symbol to
whichever user's re-solved subproblem lowers the summed power caps the most.
``exhaustive_bandwidth_allocation`` enumerates all splits as the reference
oracle for small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .drop import solve_power_cap
from .errors import InfeasibleError
from .phy import RadioConfig, packets_per_tti_snr, required_snr
from .qos import QosTarget, TrafficModel, solve_exponent

__all__ = [
    "ErrorBudget",
    "SingleUserSolution",
    "UserAllocation",
    "MultiUserSolution",
    "min_gamma_split",
    "optimize_single_user",
    "greedy_bandwidth_allocation",
    "exhaustive_bandwidth_allocation",
    "power_policy",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0

# Relative interval tolerance for the scalar searches.  Both run on ln(eps)
# axes, where an interval of 1e-6 is a 1e-6 relative spread in eps itself —
# far below any acceptance tolerance downstream.
_GOLDEN_TOL = 1e-6


@dataclass(frozen=True)
class ErrorBudget:
    """Split of the end-to-end loss target across the three loss mechanisms."""

    eps_c: float  # decoding error share
    eps_q: float  # queue-delay violation share
    eps_h: float  # proactive-drop share

    def __post_init__(self) -> None:
        if not 0.0 < self.eps_c < 0.5:
            raise ValueError(f"eps_c must lie in (0, 0.5); got {self.eps_c}")
        for name in ("eps_q", "eps_h"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1); got {v}")

    @property
    def total(self) -> float:
        return self.eps_c + self.eps_q + self.eps_h


@dataclass(frozen=True)
class SingleUserSolution:
    """Operating point for one link: error split, SNR target, power cap, service."""

    budget: ErrorBudget
    snr_target: float
    power_cap_w: float
    bandwidth_hz: float
    service_packets_per_frame: float
    theta: float
    used_grid_fallback: bool = False  # outer search fell back to grid (non-unimodal)


@dataclass(frozen=True)
class UserAllocation:
    """One user's share of a multi-user solution."""

    n_symbols: int
    solution: SingleUserSolution
    power_threshold_w: float


@dataclass(frozen=True)
class MultiUserSolution:
    """Per-user symbol counts and subproblem solutions; total is the sum of caps.

    The per-user caps are individually sufficient, so the sum is a
    conservative (upper-bound) estimate of the power a joint constraint
    would need.
    """

    allocations: tuple[UserAllocation, ...] = field(default_factory=tuple)
    total_power_w: float = 0.0


def _golden_min(f: Callable[[float], float], a: float, b: float,
                tol: float = _GOLDEN_TOL) -> tuple[float, float]:
    """Golden-section minimum of f on [a, b]; returns (x, f(x))."""
    h = b - a
    c, d = a + _INVPHI2 * h, a + _INVPHI * h
    fc, fd = f(c), f(d)
    while h > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + _INVPHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + _INVPHI * h
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def min_gamma_split(
    cfg: RadioConfig,
    traffic: TrafficModel,
    qos: QosTarget,
    bandwidth_hz: float,
    eps_budget_qc: float,
    *,
    force_v1: bool = False,
) -> tuple[float, float, float]:
    """Split eps_budget_qc between delay and decoding shares to minimize the SNR.

    Spending the whole budget is always optimal (the required SNR falls as
    either share loosens), so the search is one-dimensional: eps_c in
    (delta, budget - delta) with eps_q the remainder, delta = 1e-3 * budget.
    The objective is strictly convex in log coordinates, so golden-section
    lands on the interior optimum.  Returns (eps_q, eps_c, snr).
    """
    if eps_budget_qc <= 0.0:
        raise InfeasibleError(
            f"no budget left for delay and decoding errors ({eps_budget_qc})"
        )
    delta = 1e-3 * eps_budget_qc

    def gamma_at(ln_eps_c: float) -> float:
        eps_c = math.exp(ln_eps_c)
        srv = solve_exponent(
            traffic, qos, eps_budget_qc - eps_c, cfg.frame_duration_s
        ).service_packets_per_frame
        return required_snr(cfg, bandwidth_hz, srv, eps_c, force_v1=force_v1)

    x, _ = _golden_min(gamma_at, math.log(delta), math.log(eps_budget_qc - delta))
    eps_c = math.exp(x)
    eps_q = eps_budget_qc - eps_c
    return eps_q, eps_c, gamma_at(x)


def _solution_at_drop_share(
    cfg: RadioConfig,
    traffic: TrafficModel,
    qos: QosTarget,
    avg_gain: float,
    bandwidth_hz: float,
    eps_h: float,
    force_v1: bool,
) -> SingleUserSolution:
    """Best single-user operating point for a fixed drop share eps_h."""
    eps_q, eps_c, snr = min_gamma_split(
        cfg, traffic, qos, bandwidth_hz, qos.loss_budget - eps_h, force_v1=force_v1
    )
    if not math.isfinite(snr):
        raise InfeasibleError("required SNR exceeds float range")
    qsol = solve_exponent(traffic, qos, eps_q, cfg.frame_duration_s)
    p_cap = solve_power_cap(
        cfg, snr, avg_gain, bandwidth_hz,
        qsol.service_packets_per_frame, eps_c, eps_h,
    )
    return SingleUserSolution(
        budget=ErrorBudget(eps_c=eps_c, eps_q=eps_q, eps_h=eps_h),
        snr_target=snr,
        power_cap_w=p_cap,
        bandwidth_hz=bandwidth_hz,
        service_packets_per_frame=qsol.service_packets_per_frame,
        theta=qsol.theta,
    )


def optimize_single_user(
    cfg: RadioConfig,
    traffic: TrafficModel,
    qos: QosTarget,
    avg_gain: float,
    bandwidth_hz: float,
    *,
    force_v1: bool = False,
    check_unimodal: bool = False,
) -> SingleUserSolution:
    """Two-step minimal-power operating point at a fixed bandwidth.

    Outer golden-section over ln(eps_h): each candidate drop share is scored
    by the power cap of its best (eps_q, eps_c) split.  Both edges of
    (0, eps_D) blow up — a vanishing drop share demands an enormous cap, a
    vanishing remainder demands an enormous SNR — so the optimum is interior.
    With ``check_unimodal`` the power curve is also sampled on a 100-point
    grid; if its first differences change sign more than once, the result is
    taken from the grid (refined locally) and flagged.
    """
    eps_d = qos.loss_budget
    best: dict[str, Optional[SingleUserSolution]] = {"sol": None}

    def power_at(ln_eps_h: float) -> float:
        try:
            sol = _solution_at_drop_share(
                cfg, traffic, qos, avg_gain, bandwidth_hz,
                math.exp(ln_eps_h), force_v1,
            )
        except (InfeasibleError, OverflowError):
            return math.inf
        prev = best["sol"]
        if prev is None or sol.power_cap_w < prev.power_cap_w:
            best["sol"] = sol
        return sol.power_cap_w

    lo, hi = math.log(eps_d * 1e-6), math.log(eps_d * 0.999)
    _golden_min(power_at, lo, hi)

    used_grid = False
    if check_unimodal:
        xs = [lo + (hi - lo) * i / 99.0 for i in range(100)]
        ps = [power_at(x) for x in xs]
        diffs = [b - a for a, b in zip(ps, ps[1:])]
        signs = [d for d in diffs if d != 0.0]
        flips = sum(1 for a, b in zip(signs, signs[1:]) if (a < 0.0) != (b < 0.0))
        if flips > 1:
            used_grid = True
            i = min(range(100), key=lambda j: ps[j])
            _golden_min(power_at, xs[max(i - 1, 0)], xs[min(i + 1, 99)])

    sol = best["sol"]
    if sol is None:
        raise InfeasibleError(
            f"no feasible drop share in ({eps_d * 1e-6:.3e}, {eps_d:.3e}) at "
            f"bandwidth {bandwidth_hz:.6g} Hz"
        )
    if used_grid:
        sol = replace(sol, used_grid_fallback=True)
    return sol


SubproblemCache = dict[tuple[int, int], Optional[SingleUserSolution]]


def _solve_symbols(
    cfg: RadioConfig,
    traffics: Sequence[TrafficModel],
    qos: QosTarget,
    avg_gains: Sequence[float],
    user: int,
    n_symbols: int,
    cache: SubproblemCache,
    force_v1: bool,
) -> Optional[SingleUserSolution]:
    """One user's subproblem at an integer symbol budget; None if infeasible."""
    key = (user, n_symbols)
    if key not in cache:
        try:
            cache[key] = optimize_single_user(
                cfg, traffics[user], qos, avg_gains[user],
                n_symbols / cfg.dl_phase_s, force_v1=force_v1,
            )
        except InfeasibleError:
            cache[key] = None
    return cache[key]


def _assemble(per_user: Sequence[tuple[int, SingleUserSolution]]) -> MultiUserSolution:
    allocs = tuple(
        UserAllocation(n_symbols=n, solution=s, power_threshold_w=s.power_cap_w)
        for n, s in per_user
    )
    return MultiUserSolution(
        allocations=allocs,
        total_power_w=sum(a.power_threshold_w for a in allocs),
    )


def _total_symbols(cfg: RadioConfig, w_max_hz: float, k: int) -> int:
    n_total = int(math.floor(cfg.dl_phase_s * w_max_hz + 1e-9))
    if n_total < k:
        raise InfeasibleError(
            f"{n_total} symbols cannot cover {k} users at one symbol each"
        )
    return n_total


def greedy_bandwidth_allocation(
    cfg: RadioConfig,
    traffics: Sequence[TrafficModel],
    qos: QosTarget,
    avg_gains: Sequence[float],
    w_max_hz: float,
    *,
    force_v1: bool = False,
    cache: Optional[SubproblemCache] = None,
) -> MultiUserSolution:
    """Steepest-descent allocation of whole symbols to users.

    Each user starts at the fewest symbols at which their subproblem is
    feasible (per-user power is nonincreasing in bandwidth, so feasibility is
    monotone and the minimum is found by doubling plus bisection; a plain
    one-symbol start stalls whenever several users need more than one symbol
    just to exist, because no single symbol then changes the feasible count).
    Every remaining symbol goes to the user whose incremented subproblem
    lowers the summed power caps the most, re-solving only that user's
    subproblem (all others are cached).  Ties go to the lowest user index.

    ``cache`` maps (user, n_symbols) -> solution and may be shared with
    ``exhaustive_bandwidth_allocation`` for the same scenario.
    """
    k = len(traffics)
    if k == 0 or len(avg_gains) != k:
        raise ValueError("traffics and avg_gains must be equal-length, non-empty")
    n_total = _total_symbols(cfg, w_max_hz, k)
    if cache is None:
        cache = {}

    def solve(user: int, n_symbols: int) -> Optional[SingleUserSolution]:
        return _solve_symbols(
            cfg, traffics, qos, avg_gains, user, n_symbols, cache, force_v1
        )

    n_spare = n_total - k
    for user in range(k):
        if solve(user, 1 + n_spare) is None:
            raise InfeasibleError(
                f"user {user} infeasible even with all {1 + n_spare} symbols "
                f"it could ever receive"
            )

    n_sym = []
    sols = []
    for user in range(k):
        hi = 1
        while solve(user, hi) is None:
            hi = min(2 * hi, 1 + n_spare)
        lo = hi // 2          # infeasible (or 0); hi is feasible
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if solve(user, mid) is None:
                lo = mid
            else:
                hi = mid
        n_sym.append(hi)
        sols.append(solve(user, hi))
    if sum(n_sym) > n_total:
        raise InfeasibleError(
            f"minimal feasible symbol counts {n_sym} need "
            f"{sum(n_sym)} symbols but only {n_total} exist"
        )

    for _ in range(n_total - sum(n_sym)):
        best_user, best_total, best_sol = -1, math.inf, None
        for user in range(k):
            trial = solve(user, n_sym[user] + 1)
            if trial is None:     # cannot happen under monotone feasibility
                continue
            total = trial.power_cap_w + sum(
                s.power_cap_w for u, s in enumerate(sols) if u != user
            )
            if total < best_total:
                best_user, best_total, best_sol = user, total, trial
        n_sym[best_user] += 1
        sols[best_user] = best_sol

    return _assemble(list(zip(n_sym, sols)))


def exhaustive_bandwidth_allocation(
    cfg: RadioConfig,
    traffics: Sequence[TrafficModel],
    qos: QosTarget,
    avg_gains: Sequence[float],
    w_max_hz: float,
    *,
    force_v1: bool = False,
    cache: Optional[SubproblemCache] = None,
) -> MultiUserSolution:
    """Global optimum over all symbol splits; reference oracle for the greedy.

    Per-user power never increases with more symbols, so only splits using the
    whole symbol budget are enumerated (any slack split is dominated by one
    that spends the slack).  Refuses instances with more than 1e6 splits.
    """
    k = len(traffics)
    if k == 0 or len(avg_gains) != k:
        raise ValueError("traffics and avg_gains must be equal-length, non-empty")
    n_total = _total_symbols(cfg, w_max_hz, k)
    n_splits = math.comb(n_total - 1, k - 1)
    if n_splits > 1_000_000:
        raise ValueError(
            f"{n_splits} candidate splits exceed the 1e6 enumeration guard"
        )
    if cache is None:
        cache = {}

    best_total, best_combo = math.inf, None
    for cuts in itertools.combinations(range(1, n_total), k - 1):
        bounds = (0,) + cuts + (n_total,)
        split = [b - a for a, b in zip(bounds, bounds[1:])]
        sols, total = [], 0.0
        for user, n_symbols in enumerate(split):
            sol = _solve_symbols(
                cfg, traffics, qos, avg_gains, user, n_symbols, cache, force_v1
            )
            if sol is None:
                total = math.inf
                break
            sols.append(sol)
            total += sol.power_cap_w
        if total < best_total:
            best_total, best_combo = total, list(zip(split, sols))

    if best_combo is None:
        raise InfeasibleError(
            f"every split of {n_total} symbols over {k} users is infeasible"
        )
    return _assemble(best_combo)


def power_policy(
    cfg: RadioConfig,
    sol: SingleUserSolution,
    avg_gain: float,
    q_n: float,
    g: float,
) -> tuple[float, float]:
    """Per-frame transmit power and proactive drop count for one queue state.

    Empty queue: radio off.  Otherwise truncated channel inversion holds the
    SNR at the target until the cap binds; when it binds, whatever part of the
    committed service min(Q, T_f*E^B) the capped rate cannot carry is dropped
    up front so the delay guarantee survives the fade.
    """
    if q_n < 0.0 or g < 0.0:
        raise ValueError("q_n and g must be >= 0")
    if q_n == 0.0:
        return 0.0, 0.0
    n0w = cfg.noise_density_w_per_hz * sol.bandwidth_hz
    if g > 0.0:
        power = min(n0w * sol.snr_target / (avg_gain * g), sol.power_cap_w)
    else:
        power = sol.power_cap_w
    snr_at_cap = avg_gain * sol.power_cap_w * g / n0w
    s_cap = packets_per_tti_snr(cfg, sol.bandwidth_hz, snr_at_cap, sol.budget.eps_c)
    committed = min(q_n, sol.service_packets_per_frame)
    return power, max(committed - s_cap, 0.0)
