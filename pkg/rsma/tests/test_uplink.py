import math
import time

import numpy as np
import pytest

from ..channel import gen_rayleigh
from ..uplink import (
    ORDER_12,
    ORDER_21,
    ORDER_SPLIT,
    UplinkConfig,
    default_order,
    filtered_stream_rate,
    find_split_for_point,
    mac_region_2user,
    oma_uplink_rates,
    rate_uplink,
    siso_channel,
    two_user_siso_config,
    uplink_config,
)
from ..utils import ParameterError, sample_rng


def _instances(count, seed=17):
    rng = sample_rng(seed)
    for _ in range(count):
        p1, p2 = 10.0 ** rng.uniform(-1.0, 3.0, size=2)
        h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        yield float(p1), float(p2), (complex(h[0]), complex(h[1]))


def test_corner_points():
    ch = siso_channel(1.0, 0.5)
    region = mac_region_2user(10.0, 10.0, 1.0, 0.25)
    first = rate_uplink(ch, two_user_siso_config(10.0, 10.0, order=ORDER_12))
    second = rate_uplink(ch, two_user_siso_config(10.0, 10.0, order=ORDER_21))

    assert first.user_totals[1] == pytest.approx(region.r2_max)
    assert first.sum_rate == pytest.approx(region.r_sum)
    assert second.user_totals[0] == pytest.approx(region.r1_max)
    assert second.sum_rate == pytest.approx(region.r_sum)


def test_sum_rate_conservation():
    for p1, p2, h in _instances(100):
        ch = siso_channel(*h)
        bound = math.log2(
            1.0 + p1 * abs(h[0]) ** 2 + p2 * abs(h[1]) ** 2)
        for a in (0.0, 0.25, 0.5, 0.9, 1.0):
            rates = rate_uplink(ch, two_user_siso_config(p1, p2, a))
            assert rates.sum_rate == pytest.approx(bound, abs=1e-10)


def test_dominant_face_without_time_sharing():
    start = time.time()
    for p1, p2, h in _instances(100, seed=23):
        region = mac_region_2user(p1, p2, abs(h[0]) ** 2, abs(h[1]) ** 2)
        for target in region.dominant_face(100):
            solution = find_split_for_point(target, p1, p2, h)
            assert solution.feasible, (p1, p2, h, target)
            assert solution.rates[0] >= target[0] - 1e-6
            assert solution.rates[1] >= target[1] - 1e-6
            assert 0.0 <= solution.split <= 1.0
    assert time.time() - start < 30.0


def test_outside_region_is_infeasible():
    region = mac_region_2user(10.0, 10.0, 1.0, 1.0)
    solution = find_split_for_point(
        (region.r1_max, region.r2_max), 10.0, 10.0, (1.0, 1.0))
    assert not solution.feasible
    assert solution.rates is None


def test_interior_point_uses_corner():
    solution = find_split_for_point((0.1, 0.1), 10.0, 10.0, (1.0, 1.0))
    assert solution.feasible
    assert solution.split == 1.0
    assert solution.order in (ORDER_12, ORDER_21)


def test_mmse_filter_rate_matches_log_det():
    ch = gen_rayleigh(4, 3, [2, 2], [1.0, 0.5])
    cfg = uplink_config(ch, [5.0, 8.0], split_fractions={0: 0.3})
    rates = rate_uplink(ch, cfg)
    for stream in cfg.order:
        assert filtered_stream_rate(ch, cfg, stream) == pytest.approx(
            rates.stream_rates[stream], abs=1e-9)


def test_mimo_sum_rate_independent_of_split():
    ch = gen_rayleigh(5, 4, [2, 1], [1.0, 1.0])
    totals = [
        rate_uplink(ch, uplink_config(ch, [3.0, 3.0], {0: a})).sum_rate
        for a in (0.0, 0.4, 1.0)
    ]
    assert totals == pytest.approx([totals[0]] * 3, abs=1e-10)


def test_default_order():
    assert default_order(3, [1]) == ((1, 1), (0, 0), (2, 0), (1, 2))
    assert default_order(2, []) == ((0, 0), (1, 0))


def test_config_validation():
    eye = np.eye(1)
    with pytest.raises(ParameterError):
        UplinkConfig((1.0, 1.0), {(0, 0): eye, (1, 0): eye}, ((0, 0),))
    with pytest.raises(ParameterError):
        UplinkConfig((1.0,), {(0, 0): 2.0 * eye}, ((0, 0),))
    with pytest.raises(ParameterError):
        UplinkConfig((1.0,), {(0, 1): eye}, ((0, 1),))
    with pytest.raises(ParameterError):
        two_user_siso_config(1.0, 1.0, a=1.5)


def test_oma_rates_inside_region():
    region = mac_region_2user(10.0, 5.0, 1.0, 0.5)
    for share in np.linspace(0.0, 1.0, 11):
        r1, r2 = oma_uplink_rates(10.0, 5.0, 1.0, 0.5, float(share))
        assert region.contains(r1, r2)
    assert oma_uplink_rates(10.0, 5.0, 1.0, 0.5, 1.0) == (
        pytest.approx(region.r1_max), 0.0)
    with pytest.raises(ParameterError):
        oma_uplink_rates(1.0, 1.0, 1.0, 1.0, 2.0)


def test_split_order_constant():
    assert ORDER_SPLIT[0] == (0, 1) and ORDER_SPLIT[-1] == (0, 2)
