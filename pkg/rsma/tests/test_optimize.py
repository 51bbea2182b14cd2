import math

import numpy as np
import pytest
from pydantic import ValidationError

from ..channel import ChannelSet, gen_rayleigh, geometry_2user, theta_for_rho
from ..metric import Metric
from ..optimize import (
    OptimizerConfig,
    RayleighEnsemble,
    RegionPoint,
    TIER_REFINE,
    ergodic_average,
    evaluate_metric,
    gradient_check,
    mean_stderr,
    optimize,
    optimize_powers_fixed_directions,
    optimize_precoders_refine,
    pareto_front,
    random_precoders,
    rate_region_boundary,
    sample_design,
    share_lattice,
)
from ..schemes import (
    GRS,
    HRS,
    NOMA,
    OMA,
    ONE_LAYER_RS,
    SDMA,
    PrecoderSet,
    build_layout,
    evaluate,
)
from ..utils import ParameterError, derive_seed

FAST = OptimizerConfig(grid_points=11, share_points=6)


def _power(pre):
    return [float(np.vdot(p, p).real) for p in pre.precoders]


def test_config_defaults_and_validation():
    config = OptimizerConfig()
    assert config.tier == "grid"
    assert config.grid_points == 51
    with pytest.raises(ValidationError):
        OptimizerConfig(tier="newton")
    with pytest.raises(ValidationError):
        OptimizerConfig(grid_points=0)
    with pytest.raises(ValidationError):
        OptimizerConfig(momentum=0.9)


@pytest.mark.parametrize(
    ("num_users", "share_points", "count"),
    [(1, 11, 1), (2, 11, 11), (3, 11, 67), (5, 11, 1), (3, 1, 1)],
)
def test_share_lattice_size(num_users, share_points, count):
    lattice = share_lattice(num_users, share_points)
    assert len(lattice) == count
    assert lattice[0] == tuple([1.0 / num_users] * num_users)
    for shares in lattice:
        assert sum(shares) == pytest.approx(1.0)


def test_ee_value_matches_closed_form():
    ch = ChannelSet.from_matrices([np.ones((4, 1))])
    metric = Metric.ee()
    result = optimize(ch, build_layout(SDMA, 1), metric, 100.0)
    used = result.precoders.total_power()
    expected = math.log2(1.0 + 4.0 * used) / (
        used / 0.35 + metric.circuit_power(4))
    assert result.objective == pytest.approx(expected, abs=1e-9)


def test_ee_backs_off_transmit_power():
    ch = ChannelSet.from_matrices([np.ones((4, 1))])
    metric = Metric.ee()
    budget = 100.0
    result = optimize(ch, build_layout(SDMA, 1), metric, budget)
    full_power = metric.value([math.log2(1.0 + 4.0 * budget)], budget, 4)
    assert result.precoders.total_power() < 0.5 * budget
    assert result.objective > full_power


def test_ee_of_known_operating_point():
    # one user decoding 4 bit/s/Hz at 1 W from two antennas
    ch = ChannelSet.from_matrices([np.array([[math.sqrt(15.0)], [0.0]])])
    layout = build_layout(SDMA, 1)
    pre = PrecoderSet((np.array([[1.0], [0.0]]),), 1.0)
    report = evaluate(ch, layout, pre)
    assert report.user_total[0] == pytest.approx(4.0, abs=1e-12)
    value = evaluate_metric(report, pre, Metric.ee())
    expected = 4.0 / (1.0 / 0.35 + 2.0 * 10 ** (-0.3) + 0.001)
    assert value == pytest.approx(expected, abs=1e-9)
    assert value == pytest.approx(1.036, abs=1e-3)


def test_ee_peaks_inside_power_range():
    ch = gen_rayleigh(5, 2, [1, 1], [1.0, 1.0])
    layout = build_layout(SDMA, 2)
    values = []
    for power in np.logspace(-1.0, 2.0, 8):
        result = optimize(ch, layout, Metric.wsr(), float(power), FAST)
        assert result.precoders.total_power() == pytest.approx(float(power))
        values.append(
            evaluate_metric(result.report, result.precoders, Metric.ee()))
    peak = int(np.argmax(values))
    assert 0 < peak < len(values) - 1


def test_single_user_refine_reaches_capacity():
    h = np.array([[1.0 + 0.5j], [-0.3j], [0.8], [0.2 - 0.4j]])
    ch = ChannelSet.from_matrices([h])
    layout = build_layout(SDMA, 1)
    power = 10.0
    init = random_precoders(layout, 4, power, seed=5)
    result = optimize_precoders_refine(ch, layout, Metric.wsr(), init)
    capacity = math.log2(1.0 + power * float(np.vdot(h, h).real))
    assert result.tier == TIER_REFINE
    assert result.objective == pytest.approx(capacity, abs=1e-3)
    assert result.precoders.total_power() <= power * (1.0 + 1e-9)


@pytest.mark.parametrize("metric", [Metric.wsr([1.0, 0.5]), Metric.mmf()])
def test_refine_never_worse_than_grid(metric):
    layout = build_layout(ONE_LAYER_RS, 2)
    refine = FAST.copy(update={"tier": "refine", "iters": 40})
    for index in range(4):
        ch = gen_rayleigh(derive_seed(21, index), 2, [1, 1], [1.0, 1.0])
        grid = optimize(ch, layout, metric, 10.0, FAST)
        refined = optimize(ch, layout, metric, 10.0, refine)
        assert refined.objective >= grid.objective - 1e-12
        assert refined.trace == sorted(refined.trace)


@pytest.mark.parametrize(
    "metric",
    [
        Metric.wsr([1.0, 0.5]),
        Metric.mmf(),
        Metric.ee(),
        Metric.wsr(qos=[4.0, 4.0]),
    ],
)
def test_gradient_matches_finite_differences(metric):
    layout = build_layout(ONE_LAYER_RS, 2)
    for index in range(20):
        ch = gen_rayleigh(derive_seed(31, index), 3, [1, 1], [1.0, 1.0])
        pre = random_precoders(layout, 3, 10.0, seed=derive_seed(32, index))
        error = gradient_check(
            ch, layout, metric, pre, step=1e-5, threshold=1e-8)
        assert error < 1e-4


def test_gradient_with_shared_grs_streams():
    layout = build_layout(GRS, 3)
    metric = Metric.wsr([1.0, 2.0, 0.5])
    for index in range(5):
        ch = gen_rayleigh(derive_seed(33, index), 3, [1, 1, 1], [1.0] * 3)
        pre = random_precoders(layout, 3, 10.0, seed=derive_seed(34, index))
        error = gradient_check(
            ch, layout, metric, pre, step=1e-5, threshold=1e-8)
        assert error < 1e-4


def test_single_antenna_rs_falls_back_to_noma():
    power = 100.0
    rs_layout = build_layout(ONE_LAYER_RS, 2)
    noma_layout = build_layout(NOMA, 2)
    for index in range(20):
        ch = gen_rayleigh(derive_seed(41, index), 1, [1, 1], [1.0, 0.1])
        gains = [abs(m[0, 0]) ** 2 for m in ch.matrices()]
        weak = int(np.argmin(gains))
        rs = optimize(ch, rs_layout, Metric.wsr(), power)
        noma = optimize(ch, noma_layout, Metric.wsr(), power)
        weak_private = _power(rs.precoders)[rs_layout.private_index(weak)]
        assert weak_private < 1e-3 * power
        bound = math.log2(1.0 + power * max(gains))
        assert sum(rs.report.user_total) >= 0.97 * bound
        assert rs.objective >= noma.objective - 1e-9


def test_nearly_orthogonal_users_skip_common_stream():
    ch = geometry_2user(0.0, theta_for_rho(0.99))
    result = optimize(ch, build_layout(ONE_LAYER_RS, 2), Metric.wsr(), 100.0)
    assert _power(result.precoders)[0] / 100.0 < 0.01


def test_aligned_weak_user_rs_matches_noma():
    ch = geometry_2user(-20.0, theta_for_rho(0.01))
    metric = Metric.wsr([1.0, 1.0])
    rs = optimize(ch, build_layout(ONE_LAYER_RS, 2), metric, 100.0)
    noma = optimize(ch, build_layout(NOMA, 2), metric, 100.0)
    assert rs.objective >= noma.objective - 1e-9
    assert rs.objective <= 1.01 * noma.objective


def test_weight_scaling_keeps_the_design():
    ch = gen_rayleigh(51, 2, [1, 1], [1.0, 1.0])
    layout = build_layout(ONE_LAYER_RS, 2)
    small = optimize(ch, layout, Metric.wsr([1.0, 2.0]), 10.0, FAST)
    large = optimize(ch, layout, Metric.wsr([2.0, 4.0]), 10.0, FAST)
    assert large.objective == pytest.approx(2.0 * small.objective)
    for a, b in zip(small.precoders.precoders, large.precoders.precoders):
        assert np.allclose(a, b)


def test_oma_serves_strongest_user():
    h1 = np.array([[0.3], [0.1j]])
    h2 = np.array([[1.2], [-0.7 + 0.2j]])
    ch = ChannelSet.from_matrices([h1, h2])
    result = optimize(ch, build_layout(OMA, 2), Metric.wsr(), 10.0)
    assert result.layout.scheduled == 1
    expected = math.log2(1.0 + 10.0 * float(np.vdot(h2, h2).real))
    assert result.report.user_total[1] == pytest.approx(expected, abs=1e-9)
    assert result.report.user_total[0] == 0.0


def test_grid_tier_rejects_hrs():
    ch = gen_rayleigh(61, 2, [1, 1], [1.0, 1.0])
    layout = build_layout(HRS, 2, groups=[[0, 1]])
    with pytest.raises(ParameterError):
        optimize_powers_fixed_directions(ch, layout, Metric.wsr(), 10.0)


def test_refined_mmf_needs_one_shared_stream():
    ch = gen_rayleigh(62, 3, [1, 1, 1], [1.0, 1.0, 1.0])
    with pytest.raises(ParameterError):
        optimize(ch, build_layout(GRS, 3), Metric.mmf(), 10.0)


def test_ergodic_average_is_deterministic():
    draw = RayleighEnsemble(2, (1, 1), (1.0, 1.0), alpha_exponent=-0.6,
                            power=10.0)
    layout = build_layout(ONE_LAYER_RS, 2)
    first = ergodic_average(draw, layout, Metric.wsr(), 10.0, 4, 3, FAST)
    second = ergodic_average(draw, layout, Metric.wsr(), 10.0, 4, 3, FAST)
    assert first == second
    assert first.samples == 4
    assert len(first.mean_totals) == 2
    assert first.mean_sum_rate == pytest.approx(sum(first.mean_totals))


def test_ergodic_average_needs_samples():
    draw = RayleighEnsemble(2, (1, 1), (1.0, 1.0))
    with pytest.raises(ParameterError):
        ergodic_average(draw, build_layout(SDMA, 2), Metric.wsr(), 1.0, 0, 0)


def test_single_sample_average_is_that_sample():
    draw = RayleighEnsemble(2, (1, 1), (1.0, 1.0))
    layout = build_layout(ONE_LAYER_RS, 2)
    result = ergodic_average(draw, layout, Metric.wsr(), 10.0, 1, 7, FAST)
    totals, objective, _, power = sample_design(
        draw, layout, Metric.wsr(), 10.0, FAST, 7, 0)
    assert result.stderr_totals == (0.0, 0.0)
    assert result.stderr_sum_rate == 0.0
    assert result.stderr_objective == 0.0
    assert result.mean_totals == pytest.approx(totals, abs=1e-15)
    assert result.mean_objective == pytest.approx(objective, abs=1e-15)
    assert result.mean_transmit_power == pytest.approx(power, abs=1e-15)


def test_ergodic_means_agree_across_seeds():
    draw = RayleighEnsemble(2, (1, 1), (1.0, 1.0))
    layout = build_layout(ONE_LAYER_RS, 2)
    first = ergodic_average(draw, layout, Metric.wsr(), 10.0, 40, 1, FAST)
    second = ergodic_average(draw, layout, Metric.wsr(), 10.0, 40, 2, FAST)
    assert first.mean_sum_rate != second.mean_sum_rate
    combined = math.hypot(first.stderr_sum_rate, second.stderr_sum_rate)
    assert abs(first.mean_sum_rate - second.mean_sum_rate) <= 3.0 * combined


def test_pareto_front_drops_dominated_points():
    points = [
        RegionPoint(1.0, (1.0, 3.0), 4.0),
        RegionPoint(2.0, (2.0, 2.0), 4.0),
        RegionPoint(3.0, (1.5, 1.5), 3.0),
        RegionPoint(4.0, (3.0, 0.5), 3.5),
    ]
    front = pareto_front(points)
    assert [p.weight_ratio for p in front] == [1.0, 2.0, 4.0]


def test_rate_region_needs_two_users():
    ch = gen_rayleigh(71, 2, [1, 1, 1], [1.0, 1.0, 1.0])
    with pytest.raises(ParameterError):
        rate_region_boundary(ch, build_layout(SDMA, 3), 10.0, 5)


@pytest.mark.slow
def test_rs_region_contains_sdma_and_noma_regions():
    kinds = (ONE_LAYER_RS, SDMA, NOMA)
    objectives = {kind: [] for kind in kinds}
    for index in range(25):
        ch = gen_rayleigh(derive_seed(81, index), 2, [1, 1], [1.0, 0.3])
        for kind in kinds:
            trace = rate_region_boundary(ch, build_layout(kind, 2), 100.0, 20)
            objectives[kind].append([p.objective for p in trace.points])
    rs = np.array(objectives[ONE_LAYER_RS])
    for kind in (SDMA, NOMA):
        other = np.array(objectives[kind])
        for weight in range(20):
            rs_mean, rs_err = mean_stderr(rs[:, weight])
            mean, err = mean_stderr(other[:, weight])
            assert rs_mean >= mean - math.hypot(rs_err, err)
    assert np.all(rs >= np.array(objectives[SDMA]) - 1e-9)


def test_violated_qos_scores_minus_infinity():
    ch = gen_rayleigh(91, 2, [1, 1], [1.0, 1.0])
    layout = build_layout(SDMA, 2)
    pre = random_precoders(layout, 2, 1.0, seed=3)
    strict = Metric.wsr(qos=[100.0, 0.0])
    report = evaluate(ch, layout, pre, strict)
    assert evaluate_metric(report, pre, strict) == float("-inf")
    loose = Metric.wsr(qos=[0.0, 0.0])
    assert evaluate_metric(report, pre, loose) == pytest.approx(
        sum(report.user_total))
