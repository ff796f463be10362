"""Scenario model: radio constants, QoS targets, user placement, traffic.

A scenario is everything the optimizer and simulator need, in SI units, and
it round-trips through a flat INI file so runs are diffable and replayable.
Users are placed by distance (converted to a linear path gain via the
35.3 + 37.6*log10(d) dB urban model) or given an explicit gain; their packet
sources are aggregated sensor nodes, either an explicit count or a Poisson
draw from an areal density.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .phy import RadioConfig
from .qos import QosTarget, TrafficModel

__all__ = [
    "DEFAULT_RADIO",
    "DEFAULT_QOS",
    "UserSpec",
    "Scenario",
    "avg_gain_from_distance",
    "generate_scenario",
    "parse_scenario",
    "serialize_scenario",
]

DEFAULT_RADIO = RadioConfig(
    frame_duration_s=1e-4,
    dl_phase_s=5e-5,
    noise_density_w_per_hz=10.0 ** (-20.3),   # -173 dBm/Hz
    n_antennas=2,
    packet_size_bits=160,
)

DEFAULT_QOS = QosTarget(
    e2e_delay_s=1e-3,
    queue_delay_s=9e-4,      # deadline minus one frame of transmission
    loss_budget=1e-7,
)

DEFAULT_NODE_DENSITY = 0.01      # sensor nodes per square meter
DEFAULT_AREA_DIAMETER_M = 50.0   # diameter of each user's sensor patch
DEFAULT_NODE_RATE_HZ = 10.0      # packets per second per node
DEFAULT_DISTANCE_RANGE_M = (50.0, 200.0)


@dataclass(frozen=True)
class UserSpec:
    """One downlink user: its path gain and the traffic aimed at it."""

    avg_gain: float
    traffic: TrafficModel
    distance_m: Optional[float] = None   # kept when the gain came from a placement

    def __post_init__(self) -> None:
        if self.avg_gain <= 0.0:
            raise ValueError("avg_gain must be positive")
        if self.distance_m is not None and self.distance_m <= 0.0:
            raise ValueError("distance_m must be positive")


@dataclass(frozen=True)
class Scenario:
    radio: RadioConfig
    qos: QosTarget
    users: tuple[UserSpec, ...]
    w_max_hz: float
    seed: int = 0
    node_density_per_m2: float = DEFAULT_NODE_DENSITY
    area_diameter_m: float = DEFAULT_AREA_DIAMETER_M

    def __post_init__(self) -> None:
        if not self.users:
            raise ValueError("a scenario needs at least one user")
        if self.w_max_hz <= 0.0:
            raise ValueError("w_max_hz must be positive")
        gap = self.qos.e2e_delay_s - self.radio.frame_duration_s
        if not math.isclose(self.qos.queue_delay_s, gap, rel_tol=1e-9):
            raise ValueError(
                f"queue_delay_s must equal e2e_delay_s - frame_duration_s "
                f"({gap!r}); got {self.qos.queue_delay_s!r}"
            )


def avg_gain_from_distance(distance_m: float) -> float:
    """Linear path gain of the 35.3 + 37.6*log10(d[m]) dB loss model."""
    if distance_m <= 0.0:
        raise ValueError("distance_m must be positive")
    loss_db = 35.3 + 37.6 * math.log10(distance_m)
    return 10.0 ** (-loss_db / 10.0)


def generate_scenario(
    seed: int,
    k: int,
    *,
    w_max_hz: float,
    radio: RadioConfig = DEFAULT_RADIO,
    qos: QosTarget = DEFAULT_QOS,
    distances_m: Optional[Sequence[float]] = None,
    n_nodes: Optional[int] = None,
    per_node_rate_hz: float = DEFAULT_NODE_RATE_HZ,
    node_density_per_m2: float = DEFAULT_NODE_DENSITY,
    area_diameter_m: float = DEFAULT_AREA_DIAMETER_M,
    distance_range_m: tuple[float, float] = DEFAULT_DISTANCE_RANGE_M,
) -> Scenario:
    """Seeded random deployment: uniform distances, Poisson node counts.

    Explicit ``distances_m`` (length k) or ``n_nodes`` (applied to every
    user) replace the corresponding draws.  A Poisson node count of zero is
    bumped to one: a user with no traffic is a different scenario, not a
    random outcome of this one.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if distances_m is not None and len(distances_m) != k:
        raise ConfigError(f"need exactly {k} distances; got {len(distances_m)}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))

    if distances_m is None:
        lo, hi = distance_range_m
        if not 0.0 < lo < hi:
            raise ConfigError("distance_range_m must satisfy 0 < lo < hi")
        distances = rng.uniform(lo, hi, k)
    else:
        distances = np.asarray(distances_m, dtype=np.float64)

    if n_nodes is None:
        mean_nodes = node_density_per_m2 * math.pi * (area_diameter_m / 2.0) ** 2
        counts = np.maximum(rng.poisson(mean_nodes, k), 1)
    else:
        if n_nodes < 0:
            raise ConfigError("n_nodes must be >= 0")
        counts = np.full(k, n_nodes, dtype=np.int64)

    users = tuple(
        UserSpec(
            avg_gain=avg_gain_from_distance(float(d)),
            traffic=TrafficModel(
                lambda_per_frame=int(c) * per_node_rate_hz * radio.frame_duration_s,
                n_nodes=int(c),
                per_node_rate_hz=per_node_rate_hz,
            ),
            distance_m=float(d),
        )
        for d, c in zip(distances, counts)
    )
    return Scenario(
        radio=radio,
        qos=qos,
        users=users,
        w_max_hz=w_max_hz,
        seed=seed,
        node_density_per_m2=node_density_per_m2,
        area_diameter_m=area_diameter_m,
    )


# ---------------------------------------------------------------------------
# INI serialization.  Canonical form: fixed section and key order, floats via
# repr (shortest exact round-trip), so identical scenarios serialize to
# identical bytes.

_DB_SUFFIX = "_db"
_DBM_SUFFIX = "_dbm"


class _Section:
    """One parsed section with typed, suffix-aware field access."""

    def __init__(self, source: str, name: str, raw: dict[str, str]):
        self.source = source
        self.name = name
        self.raw = dict(raw)
        self.seen: set[str] = set()

    def _fail(self, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{self.source}: [{self.name}] {key}: {msg}")

    def _take(self, key: str) -> Optional[str]:
        if key in self.raw:
            self.seen.add(key)
            return self.raw[key]
        return None

    def number(self, key: str, *, dbm: bool = False, required: bool = True,
               default: float = math.nan) -> float:
        """Linear value of ``key``; also accepts key_db / key_dbm variants."""
        candidates = [(key, "linear"), (key + _DB_SUFFIX, "db")]
        if dbm:
            candidates.append((key + _DBM_SUFFIX, "dbm"))
        found = [(k, unit) for k, unit in candidates if k in self.raw]
        if len(found) > 1:
            raise self._fail(key, f"given in multiple units: {[k for k, _ in found]}")
        if not found:
            if required:
                raise self._fail(key, "missing")
            return default
        k, unit = found[0]
        text = self._take(k)
        try:
            v = float(text)
        except ValueError:
            raise self._fail(k, f"not a number: {text!r}") from None
        if unit == "db":
            return 10.0 ** (v / 10.0)
        if unit == "dbm":
            return 10.0 ** ((v - 30.0) / 10.0)
        return v

    def integer(self, key: str) -> int:
        text = self._take(key)
        if text is None:
            raise self._fail(key, "missing")
        try:
            return int(text)
        except ValueError:
            raise self._fail(key, f"not an integer: {text!r}") from None

    def check_consumed(self) -> None:
        extra = sorted(set(self.raw) - self.seen)
        if extra:
            raise ConfigError(
                f"{self.source}: [{self.name}] unknown keys: {', '.join(extra)}"
            )


def _read_ini(text: str, source: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return {name: dict(parser[name]) for name in parser.sections()}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse an INI scenario; every failure names the file, section, and key."""
    sections = _read_ini(text, source)
    for required in ("radio", "qos", "deployment"):
        if required not in sections:
            raise ConfigError(f"{source}: missing [{required}] section")

    radio_sec = _Section(source, "radio", sections["radio"])
    try:
        radio = RadioConfig(
            frame_duration_s=radio_sec.number("frame_duration_s"),
            dl_phase_s=radio_sec.number("dl_phase_s"),
            noise_density_w_per_hz=radio_sec.number("noise_density_w_per_hz", dbm=True),
            n_antennas=radio_sec.integer("n_antennas"),
            packet_size_bits=radio_sec.integer("packet_size_bits"),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: [radio] {exc}") from None
    radio_sec.check_consumed()

    qos_sec = _Section(source, "qos", sections["qos"])
    try:
        qos = QosTarget(
            e2e_delay_s=qos_sec.number("e2e_delay_s"),
            queue_delay_s=qos_sec.number("queue_delay_s"),
            loss_budget=qos_sec.number("loss_budget"),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: [qos] {exc}") from None
    qos_sec.check_consumed()

    dep = _Section(source, "deployment", sections["deployment"])
    w_max_hz = dep.number("w_max_hz")
    seed = dep.integer("seed")
    density = dep.number("node_density_per_m2", required=False,
                         default=DEFAULT_NODE_DENSITY)
    diameter = dep.number("area_diameter_m", required=False,
                          default=DEFAULT_AREA_DIAMETER_M)
    dep.check_consumed()

    user_names = {n for n in sections if n.startswith("user")}
    expected = [f"user{i}" for i in range(len(user_names))]
    if user_names != set(expected):
        raise ConfigError(
            f"{source}: user sections must be user0..user{{k-1}}; got "
            f"{sorted(user_names)}"
        )
    known = {"radio", "qos", "deployment", *user_names}
    unknown = sorted(set(sections) - known)
    if unknown:
        raise ConfigError(f"{source}: unknown sections: {', '.join(unknown)}")
    if not user_names:
        raise ConfigError(f"{source}: no [user0] section")

    users = []
    for name in expected:
        sec = _Section(source, name, sections[name])
        if "distance_m" in sections[name] and any(
            key.startswith("avg_gain") for key in sections[name]
        ):
            raise ConfigError(
                f"{source}: [{name}] give distance_m or avg_gain, not both"
            )
        distance = sec.number("distance_m", required=False)
        if math.isnan(distance):
            gain = sec.number("avg_gain")
            distance = None
        else:
            gain = avg_gain_from_distance(distance)
        n_nodes = sec.integer("n_nodes")
        rate = sec.number("per_node_rate_hz", required=False,
                          default=DEFAULT_NODE_RATE_HZ)
        sec.check_consumed()
        try:
            users.append(
                UserSpec(
                    avg_gain=gain,
                    traffic=TrafficModel(
                        lambda_per_frame=n_nodes * rate * radio.frame_duration_s,
                        n_nodes=n_nodes,
                        per_node_rate_hz=rate,
                    ),
                    distance_m=distance,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{source}: [{name}] {exc}") from None

    try:
        return Scenario(
            radio=radio,
            qos=qos,
            users=tuple(users),
            w_max_hz=w_max_hz,
            seed=seed,
            node_density_per_m2=density,
            area_diameter_m=diameter,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def serialize_scenario(sc: Scenario) -> str:
    """Canonical INI text; parse_scenario(serialize_scenario(sc)) == sc."""
    out = io.StringIO()
    out.write("[radio]\n")
    out.write(f"frame_duration_s = {sc.radio.frame_duration_s!r}\n")
    out.write(f"dl_phase_s = {sc.radio.dl_phase_s!r}\n")
    out.write(f"noise_density_w_per_hz = {sc.radio.noise_density_w_per_hz!r}\n")
    out.write(f"n_antennas = {sc.radio.n_antennas}\n")
    out.write(f"packet_size_bits = {sc.radio.packet_size_bits}\n")
    out.write("\n[qos]\n")
    out.write(f"e2e_delay_s = {sc.qos.e2e_delay_s!r}\n")
    out.write(f"queue_delay_s = {sc.qos.queue_delay_s!r}\n")
    out.write(f"loss_budget = {sc.qos.loss_budget!r}\n")
    out.write("\n[deployment]\n")
    out.write(f"w_max_hz = {sc.w_max_hz!r}\n")
    out.write(f"seed = {sc.seed}\n")
    out.write(f"node_density_per_m2 = {sc.node_density_per_m2!r}\n")
    out.write(f"area_diameter_m = {sc.area_diameter_m!r}\n")
    for i, user in enumerate(sc.users):
        out.write(f"\n[user{i}]\n")
        if user.distance_m is not None:
            out.write(f"distance_m = {user.distance_m!r}\n")
        else:
            out.write(f"avg_gain = {user.avg_gain!r}\n")
        out.write(f"n_nodes = {user.traffic.n_nodes}\n")
        out.write(f"per_node_rate_hz = {user.traffic.per_node_rate_hz!r}\n")
    return out.getvalue()
