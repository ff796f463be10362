"""Power-minimal cross-layer configuration of short-packet low-latency downlinks.

The package splits an end-to-end loss target into decoding-error, queueing-delay
and packet-dropping shares, converts the delay share into a constant service
rate via effective bandwidth, inverts the finite-blocklength rate formula for
the SNR that sustains it, sizes the transmit-power cap so deep-fade drops stay
inside their share, and allocates bandwidth across users greedily.  A seeded
Monte Carlo queue simulator checks every analytical bound empirically.
"""

from .errors import ConfigError, InfeasibleError
from .phy import (
    LinkState,
    RadioConfig,
    dispersion,
    gaussian_q,
    inverse_q,
    link_snr,
    packets_per_tti,
    packets_per_tti_snr,
    required_snr,
)
from .qos import (
    QosExponentSolution,
    QosTarget,
    TrafficModel,
    delay_violation_bound,
    empirical_eb,
    poisson_eb,
    solve_exponent,
)
from .drop import (
    DropBoundInput,
    FadingModel,
    drop_ratio_bound,
    drop_ratio_bound_exact,
    gain_cdf,
    gain_pdf,
    s_max,
    solve_power_cap,
)
from .optim import (
    ErrorBudget,
    MultiUserSolution,
    SingleUserSolution,
    UserAllocation,
    exhaustive_bandwidth_allocation,
    greedy_bandwidth_allocation,
    min_gamma_split,
    optimize_single_user,
    power_policy,
)
from .sim import (
    SimConfig,
    SimStats,
    occupancy_report,
    run_multi_user,
    run_single_user,
    wilson_interval,
)
from .scenario import Scenario, UserSpec, generate_scenario, parse_scenario, serialize_scenario

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
