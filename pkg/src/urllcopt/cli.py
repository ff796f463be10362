"""Command-line front end: generate scenarios, optimize, simulate, sweep.

All machine output is CSV with a fixed column order (documented per
subcommand below) and full-precision floats, so identical inputs and seeds
produce byte-identical files.  Exit codes: 0 success, 2 malformed
configuration, 3 infeasible operating point.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import __version__
from .drop import DropBoundInput, drop_ratio_bound, drop_ratio_bound_exact
from .errors import ConfigError, InfeasibleError
from .optim import (
    MultiUserSolution,
    SingleUserSolution,
    UserAllocation,
    ErrorBudget,
    exhaustive_bandwidth_allocation,
    greedy_bandwidth_allocation,
)
from .scenario import (
    DEFAULT_QOS,
    DEFAULT_RADIO,
    Scenario,
    UserSpec,
    avg_gain_from_distance,
    generate_scenario,
    parse_scenario,
    serialize_scenario,
)
from .sim import SimConfig, SimStats, occupancy_report, run_multi_user, run_single_user

_SCENARIO_MARKER = "# --- scenario ---\n"

# Deterministic starting points for common experiment shapes.
_PRESETS = {
    "single-far": dict(k=1, w_max_hz=0.5e6, distances_m=[200.0], n_nodes=100),
    "pair-narrow": dict(k=2, w_max_hz=240e3, distances_m=[100.0, 200.0], n_nodes=20),
    "dense-wideband": dict(k=40, w_max_hz=6e6),
}


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit(lines: Sequence[str], out_path: Optional[str]) -> None:
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _scenario_hash(sc: Scenario) -> str:
    return hashlib.sha256(serialize_scenario(sc).encode("utf-8")).hexdigest()


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# solution file round-trip


def serialize_solution(sc: Scenario, msol: MultiUserSolution,
                       force_v1: bool) -> str:
    lines = ["[meta]"]
    lines.append("format = urllcopt-solution-1")
    lines.append(f"scenario_sha256 = {_scenario_hash(sc)}")
    lines.append(f"force_v1 = {int(force_v1)}")
    lines.append("")
    lines.append("[solution]")
    lines.append(f"n_users = {len(msol.allocations)}")
    lines.append(f"total_power_w = {msol.total_power_w!r}")
    for i, alloc in enumerate(msol.allocations):
        s = alloc.solution
        lines.append("")
        lines.append(f"[solution_user{i}]")
        lines.append(f"n_symbols = {alloc.n_symbols}")
        lines.append(f"power_threshold_w = {alloc.power_threshold_w!r}")
        lines.append(f"bandwidth_hz = {s.bandwidth_hz!r}")
        lines.append(f"eps_c = {s.budget.eps_c!r}")
        lines.append(f"eps_q = {s.budget.eps_q!r}")
        lines.append(f"eps_h = {s.budget.eps_h!r}")
        lines.append(f"snr_target = {s.snr_target!r}")
        lines.append(f"power_cap_w = {s.power_cap_w!r}")
        lines.append(f"service_packets_per_frame = {s.service_packets_per_frame!r}")
        lines.append(f"theta = {s.theta!r}")
        lines.append(f"used_grid_fallback = {int(s.used_grid_fallback)}")
    lines.append("")
    lines.append(_SCENARIO_MARKER.rstrip("\n"))
    lines.append(serialize_scenario(sc))
    return "\n".join(lines)


def parse_solution(text: str, source: str) -> tuple[Scenario, MultiUserSolution]:
    head, marker, tail = text.partition(_SCENARIO_MARKER)
    if not marker:
        raise ConfigError(f"{source}: not a solution file (missing scenario block)")
    sc = parse_scenario(tail, source=source)

    import configparser

    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(head, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    def need(section: str, key: str) -> str:
        if not parser.has_option(section, key):
            raise ConfigError(f"{source}: [{section}] missing {key}")
        return parser.get(section, key)

    stored = need("meta", "scenario_sha256")
    actual = _scenario_hash(sc)
    if stored != actual:
        raise ConfigError(
            f"{source}: scenario hash mismatch (stored {stored[:12]}..., "
            f"actual {actual[:12]}...); the file was edited after optimization"
        )
    n_users = int(need("solution", "n_users"))
    if n_users != len(sc.users):
        raise ConfigError(f"{source}: solution has {n_users} users, scenario "
                          f"{len(sc.users)}")
    allocs = []
    for i in range(n_users):
        sec = f"solution_user{i}"
        try:
            budget = ErrorBudget(
                eps_c=float(need(sec, "eps_c")),
                eps_q=float(need(sec, "eps_q")),
                eps_h=float(need(sec, "eps_h")),
            )
            sol = SingleUserSolution(
                budget=budget,
                snr_target=float(need(sec, "snr_target")),
                power_cap_w=float(need(sec, "power_cap_w")),
                bandwidth_hz=float(need(sec, "bandwidth_hz")),
                service_packets_per_frame=float(
                    need(sec, "service_packets_per_frame")
                ),
                theta=float(need(sec, "theta")),
                used_grid_fallback=bool(int(need(sec, "used_grid_fallback"))),
            )
            allocs.append(
                UserAllocation(
                    n_symbols=int(need(sec, "n_symbols")),
                    solution=sol,
                    power_threshold_w=float(need(sec, "power_threshold_w")),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{source}: [{sec}] {exc}") from None
    return sc, MultiUserSolution(
        allocations=tuple(allocs),
        total_power_w=float(need("solution", "total_power_w")),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    kwargs = dict(radio=DEFAULT_RADIO, qos=DEFAULT_QOS)
    if args.preset:
        kwargs.update(_PRESETS[args.preset])
    if args.k is not None:
        kwargs["k"] = args.k
    if args.w_max is not None:
        kwargs["w_max_hz"] = args.w_max
    if args.distances:
        try:
            kwargs["distances_m"] = [float(d) for d in args.distances.split(",")]
        except ValueError:
            raise ConfigError(f"--distances: not a number list: {args.distances}")
    if args.n_nodes is not None:
        kwargs["n_nodes"] = args.n_nodes
    if "k" not in kwargs or "w_max_hz" not in kwargs:
        raise ConfigError("need --preset or both --k and --w-max")
    sc = generate_scenario(args.seed, kwargs.pop("k"), **kwargs)
    text = serialize_scenario(sc)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _solve(sc: Scenario, force_v1: bool, oracle: bool):
    traffics = [u.traffic for u in sc.users]
    gains = [u.avg_gain for u in sc.users]
    cache: dict = {}
    try:
        msol = greedy_bandwidth_allocation(
            sc.radio, traffics, sc.qos, gains, sc.w_max_hz,
            force_v1=force_v1, cache=cache,
        )
        osol = None
        if oracle:
            osol = exhaustive_bandwidth_allocation(
                sc.radio, traffics, sc.qos, gains, sc.w_max_hz,
                force_v1=force_v1, cache=cache,
            )
    except ValueError as exc:
        raise ConfigError(f"scenario not optimizable: {exc}") from None
    return msol, osol


def _optimize_rows(msol: MultiUserSolution,
                   osol: Optional[MultiUserSolution]) -> list[str]:
    header = "user,n_symbols,bandwidth_hz,eps_q,eps_c,eps_h,snr_target,power_cap_w"
    if osol is not None:
        header += ",oracle_power_w"
    rows = [header]
    for i, alloc in enumerate(msol.allocations):
        s = alloc.solution
        row = (
            f"{i},{alloc.n_symbols},{_fmt(s.bandwidth_hz)},{_fmt(s.budget.eps_q)},"
            f"{_fmt(s.budget.eps_c)},{_fmt(s.budget.eps_h)},{_fmt(s.snr_target)},"
            f"{_fmt(s.power_cap_w)}"
        )
        if osol is not None:
            row += f",{_fmt(osol.allocations[i].power_threshold_w)}"
        rows.append(row)
    total = (
        f"total,{sum(a.n_symbols for a in msol.allocations)},"
        f"{_fmt(sum(a.solution.bandwidth_hz for a in msol.allocations))},,,,,"
        f"{_fmt(msol.total_power_w)}"
    )
    if osol is not None:
        total += f",{_fmt(osol.total_power_w)}"
    rows.append(total)
    return rows


def cmd_optimize(args: argparse.Namespace) -> int:
    sc = parse_scenario(_read_text(args.scenario), source=args.scenario)
    if args.relax_eps is not None:
        if not 0.0 < args.relax_eps < 1.0:
            raise ConfigError(f"--relax-eps must lie in (0, 1); got {args.relax_eps}")
        sc = replace(sc, qos=replace(sc.qos, loss_budget=args.relax_eps))
    msol, osol = _solve(sc, args.force_v1, args.oracle == "exhaustive")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_solution(sc, msol, args.force_v1))
    _emit(_optimize_rows(msol, osol), None)
    return 0


_SIM_COLUMNS = (
    "replica,user,n_frames,arrivals,delivered,proactive_drops,backlog,"
    "delay_violations,decode_errors,frames_transmitting,occupancy,"
    "eps_q_hat,eps_q_hi,eps_q_target,eps_q_ok,"
    "eps_c_hat,eps_c_target,"
    "eps_h_hat,eps_h_hi,eps_h_bound,eps_h_bound_linear,eps_h_ok,"
    "energy_j,exceed_frames"
)


def _sim_user_row(replica: int, user, stats: SimStats, sol: SingleUserSolution,
                  bound_exact: float, bound_linear: float) -> str:
    eps_q_ok = stats.eps_q_hat <= sol.budget.eps_q + (
        stats.eps_q_ci[1] - stats.eps_q_hat
    )
    eps_h_ok = stats.eps_h_hat <= bound_exact + (
        stats.eps_h_ci[1] - stats.eps_h_hat
    )
    return ",".join(
        _fmt(v)
        for v in (
            replica, user, stats.n_frames, stats.arrivals_total, stats.delivered,
            stats.proactive_drops, stats.backlog, stats.delay_violations,
            stats.decode_errors, stats.frames_transmitting,
            occupancy_report(stats),
            stats.eps_q_hat, stats.eps_q_ci[1], sol.budget.eps_q,
            "PASS" if eps_q_ok else "FAIL",
            stats.eps_c_hat, sol.budget.eps_c,
            stats.eps_h_hat, stats.eps_h_ci[1], bound_exact, bound_linear,
            "PASS" if eps_h_ok else "FAIL",
            stats.energy_j, "",
        )
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    sc, msol = parse_solution(_read_text(args.solution), source=args.solution)
    if args.trace and (len(sc.users) > 1 or args.replicas > 1):
        raise ConfigError("--trace supports single-user, single-replica runs only")

    rows = [_SIM_COLUMNS]
    for r in range(args.replicas):
        sim_cfg = SimConfig(
            n_frames=args.frames,
            seed=args.seed + r,
            coherence_frames=args.coherence,
            integer_service_mode=args.integer_service,
            inject_decode_errors=not args.no_inject,
            power_cap_enabled=not args.no_cap,
        )
        traffics = [u.traffic for u in sc.users]
        gains = [u.avg_gain for u in sc.users]
        stats_list, exceed = run_multi_user(
            sc.radio, sc.qos, msol, traffics, gains, sim_cfg
        )
        if args.trace:
            run_single_user(
                sc.radio, sc.qos, traffics[0], gains[0],
                msol.allocations[0].solution, sim_cfg, trace_path=args.trace,
            )
        agg = dict(arrivals=0, delivered=0, drops=0, viol=0)
        for user, stats in enumerate(stats_list):
            sol = msol.allocations[user].solution
            inp = DropBoundInput(
                snr_target=sol.snr_target,
                power_cap_w=sol.power_cap_w,
                avg_gain=gains[user],
                bandwidth_hz=sol.bandwidth_hz,
                noise_density=sc.radio.noise_density_w_per_hz,
                n_antennas=sc.radio.n_antennas,
            )
            bound_exact = drop_ratio_bound_exact(
                sc.radio, inp, sol.service_packets_per_frame, sol.budget.eps_c
            )
            rows.append(
                _sim_user_row(r, user, stats, sol, bound_exact, drop_ratio_bound(inp))
            )
            agg["arrivals"] += stats.arrivals_total
            agg["delivered"] += stats.delivered
            agg["drops"] += stats.proactive_drops
            agg["viol"] += stats.delay_violations
        total_row = [""] * len(_SIM_COLUMNS.split(","))
        total_row[0:6] = [str(r), "total", str(args.frames), str(agg["arrivals"]),
                          str(agg["delivered"]), str(agg["drops"])]
        total_row[7] = str(agg["viol"])
        total_row[-1] = str(exceed)
        rows.append(",".join(total_row))
    _emit(rows, args.out)
    return 0


def _rebuild_for_axis(sc: Scenario, axis: str, value: float) -> Scenario:
    if axis == "w_max":
        return replace(sc, w_max_hz=value)
    if axis == "k":
        k = int(value)
        if k != value or k < 1:
            raise ValueError(f"k must be a positive integer; got {value}")
        return generate_scenario(
            sc.seed, k, w_max_hz=sc.w_max_hz, radio=sc.radio, qos=sc.qos,
            node_density_per_m2=sc.node_density_per_m2,
            area_diameter_m=sc.area_diameter_m,
        )
    if axis == "distance":
        users = tuple(
            replace(u, avg_gain=avg_gain_from_distance(value), distance_m=value)
            for u in sc.users
        )
        return replace(sc, users=users)
    if axis == "eps_d":
        return replace(sc, qos=replace(sc.qos, loss_budget=value))
    if axis == "d_max":
        return replace(
            sc,
            qos=replace(
                sc.qos,
                e2e_delay_s=value,
                queue_delay_s=value - sc.radio.frame_duration_s,
            ),
        )
    raise ConfigError(f"unknown axis {axis}")


def cmd_sweep(args: argparse.Namespace) -> int:
    sc = parse_scenario(_read_text(args.scenario), source=args.scenario)
    if args.relax_eps is not None:
        sc = replace(sc, qos=replace(sc.qos, loss_budget=args.relax_eps))
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError:
        raise ConfigError(f"--values: not a number list: {args.values}")

    rows = ["axis,axis_value,user,quantity,value,status"]
    for value in values:
        try:
            point = _rebuild_for_axis(sc, args.axis, value)
            msol, _ = _solve(point, args.force_v1, oracle=False)
        except (InfeasibleError, ConfigError, ValueError) as exc:
            rows.append(f"{args.axis},{_fmt(value)},,total_power_w,,infeasible")
            print(f"note: {args.axis}={value}: {exc}", file=sys.stderr)
            continue
        for i, alloc in enumerate(msol.allocations):
            s = alloc.solution
            for quantity, q in (
                ("n_symbols", alloc.n_symbols),
                ("power_cap_w", s.power_cap_w),
                ("eps_q", s.budget.eps_q),
                ("eps_c", s.budget.eps_c),
                ("eps_h", s.budget.eps_h),
                ("snr_target", s.snr_target),
            ):
                rows.append(
                    f"{args.axis},{_fmt(value)},{i},{quantity},{_fmt(q)},ok"
                )
        rows.append(
            f"{args.axis},{_fmt(value)},total,total_power_w,"
            f"{_fmt(msol.total_power_w)},ok"
        )
    _emit(rows, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urllcopt",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser(
        "generate",
        help="write a seeded scenario file",
        description="Generate a scenario. Output: INI scenario text "
                    "(stdout or --out).",
    )
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--k", type=int, help="number of users")
    g.add_argument("--w-max", type=float, help="total bandwidth in Hz")
    g.add_argument("--preset", choices=sorted(_PRESETS),
                   help="deterministic starting point; explicit flags override")
    g.add_argument("--distances", help="comma-separated user distances in m")
    g.add_argument("--n-nodes", type=int, help="explicit node count per user")
    g.add_argument("--out", help="output path (default stdout)")
    g.set_defaults(func=cmd_generate)

    o = sub.add_parser(
        "optimize",
        help="solve a scenario, write a solution file",
        description=(
            "Optimize a scenario. Stdout CSV columns: user,n_symbols,"
            "bandwidth_hz,eps_q,eps_c,eps_h,snr_target,power_cap_w"
            "[,oracle_power_w]; last row is the total."
        ),
    )
    o.add_argument("scenario")
    o.add_argument("--out", required=True, help="solution file path")
    o.add_argument("--oracle", choices=["exhaustive", "none"], default="none")
    o.add_argument("--relax-eps", type=float,
                   help="override the loss budget (validation runs)")
    o.add_argument("--force-v1", action="store_true",
                   help="pin the channel dispersion at 1")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser(
        "simulate",
        help="simulate a solved operating point",
        description=(
            "Simulate a solution file. Stdout CSV columns: " + _SIM_COLUMNS
            + "; one row per user plus a per-replica total row carrying the "
            "joint power exceedance count."
        ),
    )
    s.add_argument("solution")
    s.add_argument("--frames", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--coherence", type=int, default=10,
                   help="frames per fade coherence block")
    s.add_argument("--integer-service", action="store_true",
                   help="floor the per-frame service to whole packets")
    s.add_argument("--no-inject", action="store_true",
                   help="disable decode-error injection")
    s.add_argument("--no-cap", action="store_true",
                   help="disable the power cap (delay-bound validation)")
    s.add_argument("--trace", help="per-frame trace CSV path (single user only)")
    s.add_argument("--out", help="also write the CSV here")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser(
        "sweep",
        help="optimize across a parameter grid",
        description=(
            "Sweep one axis. Output CSV columns: axis,axis_value,user,"
            "quantity,value,status (long form; status=infeasible rows keep "
            "the sweep going)."
        ),
    )
    w.add_argument("scenario")
    w.add_argument("--axis", required=True,
                   choices=["w_max", "k", "distance", "eps_d", "d_max"])
    w.add_argument("--values", required=True, help="comma-separated grid")
    w.add_argument("--relax-eps", type=float)
    w.add_argument("--force-v1", action="store_true")
    w.add_argument("--out", help="also write the CSV here")
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
