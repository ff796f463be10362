"""Shared fixtures: the reference radio/QoS operating point used throughout."""
import pytest

from urllcopt.phy import RadioConfig
from urllcopt.qos import QosTarget, TrafficModel


@pytest.fixture(scope="session")
def radio():
    return RadioConfig(
        frame_duration_s=1e-4,
        dl_phase_s=5e-5,
        noise_density_w_per_hz=10 ** -20.3,
        n_antennas=2,
        packet_size_bits=160,
    )


@pytest.fixture(scope="session")
def qos():
    return QosTarget(e2e_delay_s=1e-3, queue_delay_s=9e-4, loss_budget=1e-7)


@pytest.fixture(scope="session")
def traffic100():
    # 100 sensing nodes at 10 Hz each -> 0.1 packets per 0.1 ms frame
    return TrafficModel(lambda_per_frame=0.1, n_nodes=100, per_node_rate_hz=10.0)
