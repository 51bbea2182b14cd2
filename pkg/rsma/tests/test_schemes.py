import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ..channel import ChannelSet, gen_rayleigh
from ..metric import Metric
from ..schemes import (
    DPCRS,
    GRS,
    HRS,
    MULTICAST,
    NOMA,
    OMA,
    ONE_LAYER_RS,
    SDMA,
    PrecoderSet,
    allocate_common,
    allocate_streams,
    best_decoding_orders,
    build_layout,
    decode_plan,
    evaluate,
    noma_groups,
    noma_order,
    rate_1layer,
    rate_dpcrs,
    rate_grs,
    rate_hrs,
    zero_precoders,
)
from ..utils import NumericalError, ParameterError, complex_gaussian, sample_rng


def _random_precoders(layout, tx, seed, scale=1.0):
    rng = sample_rng(seed, 3)
    precoders = tuple(
        scale * complex_gaussian(rng, (tx, stream.dim), 1.0)
        for stream in layout.streams
    )
    total = sum(float(np.vdot(p, p).real) for p in precoders)
    return PrecoderSet(precoders, total + 1.0)


def _sinr_rate(h, signal, interference):
    gain = abs(np.vdot(h, signal)) ** 2
    noise = 1.0 + sum(abs(np.vdot(h, p)) ** 2 for p in interference)
    return math.log2(1.0 + gain / noise)


def test_canonical_stream_order():
    one_layer = build_layout(ONE_LAYER_RS, 3)
    grs = build_layout(GRS, 3)
    assert [s.key for s in one_layer.streams] == ["123", "1", "2", "3"]
    assert [s.key for s in grs.streams] == [
        "123", "12", "13", "23", "1", "2", "3"]


def test_grs_always_has_singletons():
    layout = build_layout(GRS, 3, grs_active_subsets=[(0, 1, 2), (0, 2)])
    assert [s.key for s in layout.streams] == ["123", "13", "1", "2", "3"]


def test_duplicate_keys_are_suffixed():
    layout = build_layout(HRS, 2, groups=[[0, 1]])
    assert layout.stream_keys() == ["12", "12#2", "1", "2"]


def test_noma_chain_layout():
    layout = build_layout(NOMA, 3, noma_order=(2, 0, 1))
    described = [(s.subset, s.owners) for s in layout.streams]
    assert described == [((0, 1, 2), (1,)), ((0, 2), (0,)), ((2,), (2,))]


@pytest.mark.parametrize(
    ("kind", "options"),
    [
        ("Bogus", {}),
        (HRS, {}),
        (HRS, {"groups": [[0], [0, 1]]}),
        (NOMA, {"noma_order": (0, 0)}),
        (OMA, {"scheduled": 5}),
        (ONE_LAYER_RS, {"dims": [1]}),
        (DPCRS, {"dpc_order": (1, 1)}),
    ]
)
def test_build_layout_rejects(kind, options):
    with pytest.raises(ParameterError):
        build_layout(kind, 2, **options)


def test_precoder_budget_enforced():
    layout = build_layout(SDMA, 1)
    with pytest.raises(ParameterError):
        PrecoderSet((np.array([[2.0], [0.0]]),), 1.0)
    with pytest.raises(ParameterError):
        PrecoderSet((np.zeros((2, 1)),), 0.0)
    pre = zero_precoders(layout, 2, 1.0)
    assert pre.total_power() == 0.0


def test_dimension_mismatch():
    ch = gen_rayleigh(1, 3, [1, 1], [1.0, 1.0])
    layout = build_layout(SDMA, 2)
    pre = PrecoderSet((np.zeros((2, 1)), np.zeros((2, 1))), 1.0)
    with pytest.raises(ParameterError):
        evaluate(ch, layout, pre)


def test_log_det_matches_scalar_sinr():
    layout = build_layout(ONE_LAYER_RS, 3)
    for index in range(500):
        ch = gen_rayleigh(index, 4, [1, 1, 1], [1.0, 0.5, 0.2])
        pre = _random_precoders(layout, 4, index)
        report = rate_1layer(ch, layout, pre)
        columns = [p[:, 0] for p in pre.precoders]
        for user, matrix in enumerate(ch.matrices()):
            h = matrix[:, 0]
            own = layout.private_index(user)
            privates = [layout.private_index(k) for k in range(3)]
            common = _sinr_rate(
                h, columns[0], [columns[p] for p in privates])
            private = _sinr_rate(
                h, columns[own], [columns[p] for p in privates if p != own])
            assert abs(report.per_stream_user_rate[(0, user)]
                       - common) < 1e-12
            assert abs(report.per_stream_user_rate[(own, user)]
                       - private) < 1e-12


def test_specialisations():
    one_layer = build_layout(ONE_LAYER_RS, 2)
    grs = build_layout(GRS, 2, grs_active_subsets=[(0, 1)])
    sdma = build_layout(SDMA, 2)
    hrs = build_layout(HRS, 2, groups=[[0, 1]])
    for index in range(200):
        ch = gen_rayleigh(1000 + index, 3, [1, 1], [1.0, 1.0])
        pre = _random_precoders(one_layer, 3, index)
        reference = rate_1layer(ch, one_layer, pre)

        assert rate_grs(ch, grs, pre).user_total == reference.user_total

        silent = PrecoderSet(
            (np.zeros((3, 1)),) + pre.precoders[1:], pre.power_budget)
        sdma_pre = PrecoderSet(pre.precoders[1:], pre.power_budget)
        assert (
            rate_1layer(ch, one_layer, silent).user_total
            == evaluate(ch, sdma, sdma_pre).user_total
        )

        hrs_pre = PrecoderSet(
            (np.zeros((3, 1)),) + pre.precoders, pre.power_budget)
        assert rate_hrs(ch, hrs, hrs_pre).user_total == pytest.approx(
            reference.user_total, abs=1e-12)


def test_common_rate_is_min_over_decoders():
    layout = build_layout(ONE_LAYER_RS, 3)
    ch = gen_rayleigh(3, 4, [1, 2, 1], [1.0, 1.0, 1.0])
    report = rate_1layer(ch, layout, _random_precoders(layout, 4, 3))
    assert report.stream_rate[0] == min(
        report.per_stream_user_rate[(0, k)] for k in range(3))
    shares = [report.allocations[(0, k)] for k in range(3)]
    assert sum(shares) == pytest.approx(report.stream_rate[0])


def test_dpc_last_user_is_interference_free():
    layout = build_layout(DPCRS, 2, dpc_order=(1, 0))
    ch = gen_rayleigh(6, 3, [1, 1], [1.0, 1.0])
    pre = _random_precoders(layout, 3, 6)
    report = rate_dpcrs(ch, layout, pre)
    h = ch.matrices()[0][:, 0]
    own = layout.private_index(0)
    expected = math.log2(1.0 + abs(np.vdot(h, pre.precoders[own][:, 0])) ** 2)
    assert report.private_rate(0) == pytest.approx(expected, abs=1e-12)


def test_noma_siso_rates():
    ch = ChannelSet.from_matrices([np.array([[1.0]]), np.array([[0.3]])])
    order = noma_order(ch)
    assert order == (0, 1)
    layout = build_layout(NOMA, 2, noma_order=order)
    # streams: weak user's (decoded by both), strong user's own
    pre = PrecoderSet(
        (np.array([[math.sqrt(8.0)]]), np.array([[math.sqrt(2.0)]])), 10.0)
    report = evaluate(ch, layout, pre)
    weak = min(
        math.log2(1.0 + 8.0 / (1.0 + 2.0)),
        math.log2(1.0 + 0.09 * 8.0 / (1.0 + 0.09 * 2.0)),
    )
    assert report.user_total[1] == pytest.approx(weak)
    assert report.user_total[0] == pytest.approx(math.log2(3.0))


def test_oma_and_multicast():
    ch = gen_rayleigh(2, 3, [1, 1], [1.0, 1.0])
    h = [m[:, 0] for m in ch.matrices()]
    oma = build_layout(OMA, 2, scheduled=1)
    beam = math.sqrt(5.0) * h[1] / np.linalg.norm(h[1])
    report = evaluate(ch, oma, PrecoderSet((beam,), 5.0))
    assert report.user_total[0] == 0.0
    assert report.user_total[1] == pytest.approx(
        math.log2(1.0 + 5.0 * np.linalg.norm(h[1]) ** 2))

    multicast = build_layout(MULTICAST, 2)
    report = evaluate(ch, multicast, PrecoderSet((beam,), 5.0))
    assert report.stream_rate[0] == pytest.approx(min(
        math.log2(1.0 + abs(np.vdot(hk, beam)) ** 2) for hk in h))


def test_zero_power_stream_has_zero_rate():
    layout = build_layout(ONE_LAYER_RS, 2)
    ch = gen_rayleigh(4, 2, [1, 1], [1.0, 1.0])
    pre = _random_precoders(layout, 2, 4)
    silent = PrecoderSet(
        (np.zeros((2, 1)),) + pre.precoders[1:], pre.power_budget)
    report = rate_1layer(ch, layout, silent)
    assert report.stream_rate[0] == 0.0


def test_allocate_common_rules():
    assert allocate_common(2.0, [0.0, 0.0], Metric.wsr([1.0, 3.0])) == [
        0.0, 2.0]
    assert allocate_common(2.0, [0.0, 0.0], Metric.wsr([1.0, 1.0])) == [
        2.0, 0.0]
    assert allocate_common(3.0, [1.0, 2.0], Metric.mmf()) == pytest.approx(
        [2.0, 1.0])
    assert allocate_common(0.5, [1.0, 3.0], Metric.mmf()) == pytest.approx(
        [0.5, 0.0])
    with pytest.raises(ParameterError):
        allocate_common(-1.0, [0.0])


def test_qos_allocation_and_fallback():
    layout = build_layout(ONE_LAYER_RS, 2)
    rates = {0: 2.0, 1: 1.0, 2: 0.5}
    metric = Metric.wsr([1.0, 0.5], qos=[0.0, 1.5])
    allocations = allocate_streams(layout, rates, metric)
    assert allocations[(0, 1)] == pytest.approx(1.0, abs=1e-9)
    assert allocations[(0, 0)] == pytest.approx(1.0, abs=1e-9)

    infeasible = Metric.wsr([1.0, 0.5], qos=[0.0, 10.0])
    allocations = allocate_streams(layout, rates, infeasible)
    assert allocations == {(0, 0): 2.0, (0, 1): 0.0}


def test_mmf_with_several_shared_streams():
    layout = build_layout(GRS, 3)
    ch = gen_rayleigh(12, 3, [1, 1, 1], [1.0, 0.6, 0.3])
    report = evaluate(ch, layout, _random_precoders(layout, 3, 12),
                      Metric.mmf())
    for index, stream in enumerate(layout.streams):
        if len(stream.owners) > 1:
            shares = [report.allocations[(index, k)] for k in stream.owners]
            assert sum(shares) == pytest.approx(
                report.stream_rate[index], abs=1e-9)
    privates = [report.private_rate(k) for k in range(3)]
    assert min(report.user_total) >= min(privates) - 1e-9


def test_decoding_order_validation():
    layout = build_layout(GRS, 2)
    ch = gen_rayleigh(1, 2, [1, 1], [1.0, 1.0])
    pre = _random_precoders(layout, 2, 1)
    bad = PrecoderSet(
        pre.precoders, pre.power_budget, decoding_orders=((1, 0), (0, 2)))
    with pytest.raises(ParameterError):
        rate_grs(ch, layout, bad)


def test_best_decoding_orders_not_worse_than_default():
    layout = build_layout(GRS, 3)
    ch = gen_rayleigh(8, 3, [1, 1, 1], [1.0, 1.0, 1.0])
    pre = _random_precoders(layout, 3, 8)
    default = rate_grs(ch, layout, pre)
    orders, best = best_decoding_orders(ch, layout, pre)
    assert len(orders) == 3
    assert best.sum_rate >= default.sum_rate - 1e-12


def test_decode_plan_interference_sets():
    layout = build_layout(ONE_LAYER_RS, 2)
    plan = decode_plan(layout)
    assert [(s.stream, s.user, s.interference) for s in plan] == [
        (0, 0, (1, 2)), (1, 0, (2,)), (0, 1, (1, 2)), (2, 1, (1,))]


def test_noma_groups_round_robin():
    assert noma_groups([3, 1, 0, 2], 2) == [[3, 0], [1, 2]]
    with pytest.raises(ParameterError):
        noma_groups([0, 1], 3)


def test_report_json_keys():
    layout = build_layout(ONE_LAYER_RS, 2)
    ch = gen_rayleigh(5, 2, [1, 1], [1.0, 1.0])
    report = rate_1layer(ch, layout, _random_precoders(layout, 2, 5))
    data = report.to_dict()
    assert set(data["streams"]) == {"12", "1", "2"}
    assert set(data["user_total"]) == {"1", "2"}


def test_report_check_rejects_bad_allocation():
    layout = build_layout(ONE_LAYER_RS, 2)
    ch = gen_rayleigh(5, 2, [1, 1], [1.0, 1.0])
    report = rate_1layer(ch, layout, _random_precoders(layout, 2, 5))
    report.allocations[(0, 0)] += 1.0
    with pytest.raises(NumericalError):
        report.check()


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=10 ** 6),
    kind=st.sampled_from([ONE_LAYER_RS, GRS, SDMA, NOMA, DPCRS]),
)
def test_totals_account_for_every_stream(seed, kind):
    layout = build_layout(kind, 3)
    ch = gen_rayleigh(seed, 3, [1, 1, 1], [1.0, 0.5, 0.25])
    report = evaluate(ch, layout, _random_precoders(layout, 3, seed))
    assert all(rate >= 0 for rate in report.user_total)
    assert report.sum_rate == pytest.approx(
        sum(report.stream_rate.values()), abs=1e-9)


def _sic_chain(h, columns, order):
    # streams not yet decoded and streams never decoded both interfere
    remaining = set(range(len(columns)))
    rates = {}
    for index in order:
        remaining.discard(index)
        rates[index] = _sinr_rate(
            h, columns[index], [columns[j] for j in sorted(remaining)])
    return rates


@pytest.mark.parametrize("swap", [False, True])
def test_grs_three_users_against_sic_chain(swap):
    layout = build_layout(GRS, 3)
    for index in range(50):
        ch = gen_rayleigh(2000 + index, 3, [1, 1, 1], [1.0, 0.7, 0.4])
        pre = _random_precoders(layout, 3, 2000 + index)
        orders = []
        for user in range(3):
            order = list(layout.streams_of(user))
            if swap:
                # two pair streams decoded in the other order
                order[1], order[2] = order[2], order[1]
            orders.append(tuple(order))
        pre = PrecoderSet(pre.precoders, pre.power_budget,
                          decoding_orders=tuple(orders))
        report = rate_grs(ch, layout, pre)
        columns = [p[:, 0] for p in pre.precoders]
        for user, matrix in enumerate(ch.matrices()):
            expected = _sic_chain(matrix[:, 0], columns, orders[user])
            for stream, rate in expected.items():
                assert report.per_stream_user_rate[(stream, user)] == (
                    pytest.approx(rate, abs=1e-10))


def test_hrs_two_groups_decode_chain():
    layout = build_layout(HRS, 4, groups=[[0, 1], [2, 3]])
    assert layout.stream_keys() == ["1234", "12", "34", "1", "2", "3", "4"]
    plan = decode_plan(layout)
    assert [(s.stream, s.interference) for s in plan if s.user == 0] == [
        (0, (1, 2, 3, 4, 5, 6)),
        (1, (2, 3, 4, 5, 6)),
        (3, (2, 4, 5, 6)),
    ]

    group_of = {0: 1, 1: 1, 2: 2, 3: 2}
    privates = [3, 4, 5, 6]
    for index in range(50):
        ch = gen_rayleigh(3000 + index, 4, [1] * 4, [1.0, 0.8, 0.5, 0.3])
        pre = _random_precoders(layout, 4, 3000 + index)
        report = rate_hrs(ch, layout, pre)
        columns = [p[:, 0] for p in pre.precoders]
        for user, matrix in enumerate(ch.matrices()):
            h = matrix[:, 0]
            group = group_of[user]
            other = 3 - group
            own = privates[user]
            rest = [columns[p] for p in privates if p != own]
            common = _sinr_rate(
                h, columns[0],
                [columns[1], columns[2]] + [columns[p] for p in privates])
            group_rate = _sinr_rate(
                h, columns[group],
                [columns[other]] + [columns[p] for p in privates])
            private = _sinr_rate(h, columns[own], [columns[other]] + rest)
            rates = report.per_stream_user_rate
            assert rates[(0, user)] == pytest.approx(common, abs=1e-10)
            assert rates[(group, user)] == pytest.approx(group_rate, abs=1e-10)
            assert rates[(own, user)] == pytest.approx(private, abs=1e-10)
            assert (other, user) not in rates
