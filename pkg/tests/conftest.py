import numpy as np
import pytest

from uavplan.scenario import (DEFAULT_RADIO, GroundUser, RadioParams, Role,
                              Scenario)

# reference radio values used across the suite
B_HZ = 1e7
GAMMA0 = 1e-5 / (B_HZ * 10 ** (-169 / 10) / 1000)   # = 10**7.9
H_M = 50.0
ZENITH_BPS_HZ = np.log2(1.0 + 0.01 * GAMMA0 / H_M ** 2)


def make_scenario(relay_pairs=0, uplink=0, downlink=0, positions=None,
                  rate_bps=2e6, throughput_bits=3e8, radio=None, seed=0,
                  box=2000.0, uplink_power_w=0.01):
    """Small scenario factory; positions default to seeded uniform placement."""
    n = uplink + downlink + 2 * relay_pairs
    if positions is None:
        rng = np.random.default_rng(seed)
        positions = [tuple(map(float, p)) for p in rng.uniform(0, box, (n, 2))]
    users = []
    uid = 0
    for k in range(relay_pairs):
        users.append(GroundUser(id=uid + 1, position=positions[uid],
                                role=Role.RELAY_SOURCE,
                                uplink_power_w=uplink_power_w, pair=k + 1))
        uid += 1
    for k in range(relay_pairs):
        users.append(GroundUser(id=uid + 1, position=positions[uid],
                                role=Role.RELAY_DESTINATION, pair=k + 1))
        uid += 1
    for _ in range(uplink):
        users.append(GroundUser(id=uid + 1, position=positions[uid],
                                role=Role.UPLINK_SOURCE,
                                uplink_power_w=uplink_power_w))
        uid += 1
    for _ in range(downlink):
        users.append(GroundUser(id=uid + 1, position=positions[uid],
                                role=Role.DOWNLINK_DESTINATION))
        uid += 1
    ids = [u.id for u in users]
    return Scenario(
        radio=radio or DEFAULT_RADIO,
        users=tuple(users),
        rate_bps=None if rate_bps is None else {i: float(rate_bps) for i in ids},
        throughput_bits=None if throughput_bits is None
        else {i: float(throughput_bits) for i in ids},
    )


@pytest.fixture
def radio():
    return DEFAULT_RADIO


@pytest.fixture
def relay_scenario():
    return make_scenario(relay_pairs=1, uplink=1, downlink=1, seed=7)
