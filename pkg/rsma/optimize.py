"""Objective evaluation and two-tier precoder optimization.

The grid tier fixes closed-form directions from the channel estimates and
searches power splits exhaustively; it is the deterministic reference. The
refinement tier runs projected gradient ascent on every precoder entry with
a soft-min surrogate for the min() terms and never returns something worse
than its starting point.

Designs always see ``ch.estimated_view()``; reported rates are evaluated on
the true channels.
"""
import itertools
import math

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from nxtools import logging
from pydantic import BaseModel, validator
from scipy import linalg

from .channel import ChannelSet, csit_sample
from .metric import EE, MMF, WSR, Metric
from .schemes import (
    DPCRS,
    GRS,
    HRS,
    MULTICAST,
    NOMA,
    OMA,
    ONE_LAYER_RS,
    SDMA,
    PrecoderSet,
    RateReport,
    StreamLayout,
    build_layout,
    decode_plan,
    evaluate,
    noma_order,
)
from .utils import NumericalError, ParameterError, complex_gaussian, sample_rng

TIER_GRID = "grid"
TIER_REFINE = "refine"

GRID_KINDS = (ONE_LAYER_RS, DPCRS, SDMA, NOMA, OMA, MULTICAST)
# Private-share lattice is enumerated up to this many users.
LATTICE_MAX_USERS = 4

_LN2 = math.log(2.0)


class OptimizerConfig(BaseModel):
    """Optimizer block of a scenario config, all fields optional."""

    tier: str = TIER_GRID
    grid_points: int = 51
    share_points: int = 11
    power_points: int = 7
    iters: int = 300
    tol: float = 1e-9
    soft_min_temp0: float = 1.0
    soft_min_temp_min: float = 1e-3
    anneal_every: int = 50
    penalty0: float = 1.0
    penalty_max: float = 1e4
    step: float = 0.1
    seed: int = 0

    class Config:
        extra = "forbid"

    @validator("tier")
    def _check_tier(cls, value):
        if value not in (TIER_GRID, TIER_REFINE):
            raise ValueError(
                f"Unknown tier '{value}', expected grid or refine")
        return value

    @validator("grid_points", "share_points", "power_points")
    def _check_points(cls, value):
        if value < 1:
            raise ValueError(f"Point counts must be >= 1, got {value}")
        return value

    @validator("iters", "anneal_every")
    def _check_positive_int(cls, value):
        if value < 1:
            raise ValueError(f"Must be >= 1, got {value}")
        return value

    @validator(
        "tol", "soft_min_temp0", "soft_min_temp_min", "penalty0",
        "penalty_max", "step"
    )
    def _check_positive(cls, value):
        if not value > 0:
            raise ValueError(f"Must be > 0, got {value}")
        return value

    @validator("seed")
    def _check_seed(cls, value):
        if value < 0:
            raise ValueError(f"Seed must be >= 0, got {value}")
        return value


@dataclass
class OptResult:
    precoders: PrecoderSet
    report: RateReport
    objective: float
    feasible: bool
    trace: List[float] = field(default_factory=list)
    tier: str = TIER_GRID

    @property
    def layout(self) -> StreamLayout:
        return self.report.layout


@dataclass(frozen=True)
class RegionPoint:
    weight_ratio: float
    rates: Tuple[float, float]
    objective: float
    stderr: Tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class RegionTrace:
    points: Tuple[RegionPoint, ...]
    frontier: Tuple[RegionPoint, ...]


@dataclass(frozen=True)
class ErgodicResult:
    samples: int
    mean_totals: Tuple[float, ...]
    stderr_totals: Tuple[float, ...]
    mean_objective: float
    stderr_objective: float
    mean_sum_rate: float
    stderr_sum_rate: float
    feasible_fraction: float
    mean_transmit_power: float


@dataclass(frozen=True)
class RayleighEnsemble:
    """Picklable channel source: i.i.d. Rayleigh draws with optional CSIT
    error (``alpha_exponent=None`` keeps perfect CSIT)."""
    tx: int
    rx_list: Tuple[int, ...]
    variances: Tuple[float, ...]
    alpha_exponent: Optional[float] = None
    power: float = 1.0

    def __call__(self, base_seed: int, index: int) -> ChannelSet:
        return csit_sample(
            base_seed,
            index,
            self.tx,
            list(self.rx_list),
            list(self.variances),
            self.alpha_exponent,
            self.power,
        ).channels


def evaluate_metric(
    report: RateReport, pre: PrecoderSet, metric: Metric
) -> float:
    """Metric of a report; ``-inf`` when a QoS threshold is violated."""
    if not metric.qos_satisfied(report.user_total):
        return float("-inf")
    return metric.value(
        report.user_total, pre.total_power(), report.tx_antennas)


# -- closed-form directions -------------------------------------------------

def _left_directions(matrix: np.ndarray, count: int) -> np.ndarray:
    left, _, _ = linalg.svd(matrix, full_matrices=True)
    return left[:, :count]


def stream_directions(
    design: ChannelSet, layout: StreamLayout, power: float
) -> List[np.ndarray]:
    """Unit-norm-column directions per stream.

    Single-decoder streams use the regularized inverse
    ``(H H^H + K/P I)^-1 H`` restricted to the decoder's block; shared
    streams use the dominant left singular vectors of the stacked channels
    of their decoders. OMA regularizes against the served user only.
    """

    matrices = design.matrices()
    served = (
        [layout.scheduled] if layout.kind == OMA
        else list(range(design.num_users))
    )
    tx = design.tx_antennas
    stacked = np.hstack([matrices[user] for user in served])
    regularized = linalg.solve(
        stacked @ stacked.conj().T + (len(served) / power) * np.eye(tx),
        stacked,
        assume_a="her",
    )
    offsets = {}
    column = 0
    for user in served:
        offsets[user] = (column, column + matrices[user].shape[1])
        column += matrices[user].shape[1]
    directions = []
    for stream in layout.streams:
        if len(stream.subset) == 1:
            user = stream.subset[0]
            start, stop = offsets[user]
            block = regularized[:, start:stop]
            directions.append(_left_directions(block, stream.dim))
        else:
            shared = np.hstack([matrices[user] for user in stream.subset])
            directions.append(_left_directions(shared, stream.dim))
    return directions


def _precoders_from_powers(directions, powers):
    return tuple(
        math.sqrt(max(power, 0.0) / direction.shape[1]) * direction
        for direction, power in zip(directions, powers)
    )


def share_lattice(num_users: int, share_points: int) -> List[Tuple[float, ...]]:
    """Private power shares: uniform first, then the simplex lattice with
    ``share_points - 1`` steps (only for K <= 4)."""
    uniform = tuple([1.0 / num_users] * num_users)
    if num_users == 1:
        return [(1.0,)]
    if num_users > LATTICE_MAX_USERS or share_points < 2:
        return [uniform]
    steps = share_points - 1
    points = [uniform]
    for head in itertools.product(range(steps + 1), repeat=num_users - 1):
        rest = steps - sum(head)
        if rest < 0:
            continue
        point = tuple(c / steps for c in head + (rest,))
        if point != uniform:
            points.append(point)
    return points


def _power_fractions(metric: Metric, power_points: int) -> List[float]:
    if metric.kind != EE or power_points < 2:
        return [1.0]
    return [float(f) for f in np.logspace(-2.0, 0.0, power_points)]


def _noma_chain_powers(layout: StreamLayout, budget: float, t: float):
    """Per group (budget split by size), the weakest user gets t of the
    group power, the next t of what is left, and so on."""
    powers = [0.0] * len(layout.streams)
    owner_stream = {
        stream.owners[0]: index for index, stream in enumerate(layout.streams)
    }
    rank = {user: position for position, user in enumerate(layout.noma_order)}
    for group in layout.groups:
        remaining = budget * len(group) / layout.num_users
        chain = sorted(group, key=lambda user: rank[user])
        for user in reversed(chain[1:]):
            powers[owner_stream[user]] = t * remaining
            remaining -= t * remaining
        powers[owner_stream[chain[0]]] = remaining
    return powers


def _grid_candidates(
    design: ChannelSet,
    layout: StreamLayout,
    metric: Metric,
    power: float,
    grid: int,
    share_points: int,
    power_points: int,
):
    """Yields (layout, stream powers) in a fixed order."""
    num_users = layout.num_users
    t_grid = [float(t) for t in np.linspace(0.0, 1.0, max(grid, 2))]
    fractions = _power_fractions(metric, power_points)
    kind = layout.kind

    if kind == OMA:
        dims = [
            min(channel.rx_antennas, design.tx_antennas)
            for channel in design.users
        ]
        if layout.scheduled is not None:
            dims[layout.scheduled] = layout.streams[0].dim
        for user in range(num_users):
            candidate = build_layout(OMA, num_users, dims, scheduled=user)
            for fraction in fractions:
                yield candidate, [power * fraction]
        return

    if kind == MULTICAST:
        for fraction in fractions:
            yield layout, [power * fraction]
        return

    if kind == NOMA:
        dims = [1] * num_users
        for stream in layout.streams:
            dims[stream.owners[0]] = stream.dim
        ordered = build_layout(
            NOMA,
            num_users,
            dims,
            groups=layout.groups,
            noma_order=noma_order(design),
        )
        for fraction in fractions:
            for t in t_grid:
                yield ordered, _noma_chain_powers(ordered, power * fraction, t)
        return

    private = [layout.private_index(user) for user in range(num_users)]
    lattice = share_lattice(num_users, share_points)
    if kind == SDMA:
        for fraction in fractions:
            for shares in lattice:
                powers = [0.0] * len(layout.streams)
                for user, share in enumerate(shares):
                    powers[private[user]] = power * fraction * share
                yield layout, powers
        return

    # one common stream at index 0 plus privates
    for fraction in fractions:
        budget = power * fraction
        for t in t_grid:
            for shares in (lattice if t < 1.0 else lattice[:1]):
                powers = [0.0] * len(layout.streams)
                powers[0] = t * budget
                for user, share in enumerate(shares):
                    powers[private[user]] = (1.0 - t) * budget * share
                yield layout, powers


def _finish(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    metric: Metric,
    trace: List[float],
    tier: str,
) -> OptResult:
    report = evaluate(ch, layout, pre, metric)
    objective = evaluate_metric(report, pre, metric)
    return OptResult(
        precoders=pre,
        report=report,
        objective=objective,
        feasible=metric.qos_satisfied(report.user_total),
        trace=trace,
        tier=tier,
    )


def optimize_powers_fixed_directions(
    ch: ChannelSet,
    layout: StreamLayout,
    metric: Metric,
    power: float,
    grid: int = 51,
    share_points: int = 11,
    power_points: int = 7,
) -> OptResult:
    """Grid tier: fixed closed-form directions, exhaustive power search.

    Searches the common power fraction on ``grid`` points together with the
    private share lattice (NOMA: the superposition fraction, EE: also the
    total power). The first strict maximum on the estimated channel wins.

    Raises:
        ParameterError: Layout kind without a closed-form design (HRS, GRS).
    """

    if layout.kind not in GRID_KINDS:
        raise ParameterError(
            f"Grid tier does not support {layout.kind} layouts")
    if not power > 0:
        raise ParameterError(f"Power must be > 0, got {power}")
    design = ch.estimated_view()
    best = None
    directions_cache: Dict[StreamLayout, List[np.ndarray]] = {}
    evaluated = 0
    for candidate, powers in _grid_candidates(
        design, layout, metric, power, grid, share_points, power_points
    ):
        directions = directions_cache.get(candidate)
        if directions is None:
            directions = stream_directions(design, candidate, power)
            directions_cache[candidate] = directions
        pre = PrecoderSet(_precoders_from_powers(directions, powers), power)
        report = evaluate(design, candidate, pre, metric)
        value = evaluate_metric(report, pre, metric)
        evaluated += 1
        if best is None or value > best[0]:
            best = (value, candidate, pre)
    logging.debug(
        f"Grid tier {layout.kind}: {evaluated} points,"
        f" best design objective {best[0]:.6g}"
    )
    return _finish(ch, best[1], best[2], metric, [best[0]], TIER_GRID)


def initial_precoders(
    ch: ChannelSet, layout: StreamLayout, power: float
) -> PrecoderSet:
    """Closed-form directions with equal power on every stream."""
    design = ch.estimated_view()
    directions = stream_directions(design, layout, power)
    share = power / len(layout.streams)
    return PrecoderSet(
        _precoders_from_powers(directions, [share] * len(directions)), power)


def random_precoders(
    layout: StreamLayout, tx_antennas: int, power: float, seed: int
) -> PrecoderSet:
    """Random complex Gaussian precoders scaled to the full budget."""
    rng = sample_rng(seed, 0)
    raw = [
        complex_gaussian(rng, (tx_antennas, stream.dim), 1.0)
        for stream in layout.streams
    ]
    total = sum(float(np.vdot(p, p).real) for p in raw)
    scale = math.sqrt(power / total)
    return PrecoderSet(tuple(scale * p for p in raw), power)


# -- refinement tier --------------------------------------------------------

def _soft_min(values: Sequence[float], temperature: float):
    """-tau log sum exp(-x / tau) and its weights (softmax of -x / tau)."""
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return float(values[0]), np.ones(1)
    shifted = -(values - values.min()) / temperature
    weights = np.exp(shifted)
    total = weights.sum()
    value = values.min() - temperature * math.log(total)
    return float(value), weights / total


def _total_coefficients(layout, stream_rates, metric):
    """Local linear map stream rates -> user totals, following the metric's
    allocation rule (WSR/EE: best-weight owner; MMF: water level)."""
    num_users = layout.num_users
    count = len(layout.streams)
    coeff = np.zeros((num_users, count))
    weights = metric.weight_vector(num_users)
    multi = [
        index for index, stream in enumerate(layout.streams)
        if len(stream.owners) > 1
    ]
    if metric.kind == MMF and len(multi) > 1:
        raise ParameterError(
            "Refinement with MMF supports at most one shared multi-owner"
            f" stream, {layout.kind} layout has {len(multi)}"
        )
    for index, stream in enumerate(layout.streams):
        if len(stream.owners) == 1:
            coeff[stream.owners[0], index] = 1.0
        elif metric.kind != MMF:
            owner = max(stream.owners, key=lambda k: (weights[k], -k))
            coeff[owner, index] = 1.0

    if metric.kind == MMF and multi:
        shared = multi[0]
        owners = layout.streams[shared].owners
        base = coeff @ np.asarray(stream_rates)
        ordered = sorted(owners, key=lambda k: (base[k], k))
        active = len(ordered)
        for size in range(1, len(ordered) + 1):
            level = (stream_rates[shared] + sum(
                base[k] for k in ordered[:size])) / size
            if size == len(ordered) or level <= base[ordered[size]]:
                active = size
                break
        chosen = ordered[:active]
        level_row = np.zeros(count)
        level_row[shared] = 1.0 / active
        for k in chosen:
            level_row += coeff[k] / active
        for k in chosen:
            coeff[k] = level_row
    return coeff


@dataclass
class _Surrogate:
    design: ChannelSet
    layout: StreamLayout
    metric: Metric
    plan: list
    temperature: float
    penalty: float

    def __call__(self, precoders, with_grad=True):
        layout = self.layout
        metric = self.metric
        matrices = self.design.matrices()
        count = len(layout.streams)
        effective = {}
        for user, matrix in enumerate(matrices):
            for index, precoder in enumerate(precoders):
                g = matrix.conj().T @ precoder
                effective[(index, user)] = g @ g.conj().T

        step_values = []
        step_inverses = []
        for step in self.plan:
            size = matrices[step.user].shape[1]
            numerator_set = tuple(sorted(set(step.interference) | {step.stream}))
            covs = []
            for indices in (numerator_set, step.interference):
                total = np.eye(size, dtype=complex)
                for index in indices:
                    total = total + effective[(index, step.user)]
                covs.append(total)
            try:
                factors = [linalg.cho_factor(c, lower=True) for c in covs]
            except linalg.LinAlgError as exc:
                raise NumericalError(f"Covariance factorization failed: {exc}")
            logdets = [
                2.0 * np.sum(np.log(np.abs(np.diag(f[0])))) for f in factors
            ]
            step_values.append((logdets[0] - logdets[1]) / _LN2)
            if with_grad:
                step_inverses.append((
                    numerator_set,
                    step.interference,
                    linalg.cho_solve(factors[0], np.eye(size)),
                    linalg.cho_solve(factors[1], np.eye(size)),
                ))

        # smoothed stream rates
        stream_rates = np.zeros(count)
        step_weight = np.zeros(len(self.plan))
        for index in range(count):
            members = [
                position for position, step in enumerate(self.plan)
                if step.stream == index
            ]
            if not members:
                continue
            value, weights = _soft_min(
                [step_values[p] for p in members], self.temperature)
            stream_rates[index] = value
            step_weight[members] = weights

        coeff = _total_coefficients(layout, stream_rates, metric)
        totals = coeff @ stream_rates
        power_used = float(sum(np.vdot(p, p).real for p in precoders))

        if metric.kind == WSR:
            weights = np.asarray(metric.weight_vector(layout.num_users))
            objective = float(weights @ totals)
            d_totals = weights.copy()
        elif metric.kind == MMF:
            objective, d_totals = _soft_min(totals, self.temperature)
        else:
            denominator = (
                power_used / metric.eta
                + metric.circuit_power(self.design.tx_antennas)
            )
            objective = float(totals.sum() / denominator)
            d_totals = np.full(layout.num_users, 1.0 / denominator)

        thresholds = metric.qos_vector(layout.num_users)
        if thresholds is not None:
            shortfall = np.maximum(0.0, np.asarray(thresholds) - totals)
            objective -= self.penalty * float(np.sum(shortfall ** 2))
            d_totals = d_totals + 2.0 * self.penalty * shortfall

        if not with_grad:
            return objective, None

        d_streams = d_totals @ coeff
        grads = [np.zeros_like(p) for p in precoders]
        for position, step in enumerate(self.plan):
            scale = d_streams[step.stream] * step_weight[position]
            if scale == 0:
                continue
            matrix = matrices[step.user]
            numerator_set, denominator_set, inv_num, inv_den = (
                step_inverses[position])
            outer_num = matrix @ inv_num @ matrix.conj().T
            outer_den = matrix @ inv_den @ matrix.conj().T
            factor = 2.0 * scale / _LN2
            for index in numerator_set:
                grads[index] += factor * (outer_num @ precoders[index])
            for index in denominator_set:
                grads[index] -= factor * (outer_den @ precoders[index])

        if metric.kind == EE:
            denominator = (
                power_used / metric.eta
                + metric.circuit_power(self.design.tx_antennas)
            )
            factor = -2.0 * float(totals.sum()) / (
                denominator ** 2 * metric.eta)
            for index, precoder in enumerate(precoders):
                grads[index] += factor * precoder

        for grad in grads:
            if not np.all(np.isfinite(grad)):
                raise NumericalError("Non-finite gradient in refinement")
        return objective, grads


def _project(precoders, budget):
    used = float(sum(np.vdot(p, p).real for p in precoders))
    if used <= budget:
        return precoders
    scale = math.sqrt(budget / used) * (1.0 - 1e-15)
    return [scale * p for p in precoders]


def _true_objective(design, layout, precoders, budget, metric):
    pre = PrecoderSet(tuple(precoders), budget)
    report = evaluate(design, layout, pre, metric)
    return evaluate_metric(report, pre, metric)


def optimize_precoders_refine(
    ch: ChannelSet,
    layout: StreamLayout,
    metric: Metric,
    init: PrecoderSet,
    iters: int = 300,
    tol: float = 1e-9,
    config: OptimizerConfig = None,
) -> OptResult:
    """Projected gradient ascent from ``init``.

    The soft-min temperature halves every ``anneal_every`` iterations, down
    to ``soft_min_temp_min``. A stalled ascent also halves it early and
    resets the step; only a stall at the minimum temperature ends the loop.
    The QoS penalty weight doubles while a threshold is violated. Steps are
    taken along the normalized gradient with backtracking, then scaled back
    onto the power ball.

    Iterates are scored with the exact metric on the design channel (the
    estimate under imperfect CSIT) and the best one is returned, so it is
    never worse than ``init`` on that channel. The returned report and
    objective are evaluated on the true channel, where no such ordering
    holds.
    """

    config = config or OptimizerConfig()
    design = ch.estimated_view()
    plan = decode_plan(layout, init)
    budget = init.power_budget
    surrogate = _Surrogate(
        design, layout, metric, plan,
        temperature=config.soft_min_temp0,
        penalty=config.penalty0,
    )
    current = [np.array(p) for p in init.precoders]
    best_value = _true_objective(design, layout, current, budget, metric)
    best = current
    trace = [best_value]
    step = config.step
    radius = math.sqrt(budget)

    for iteration in range(iters):
        value, grads = surrogate(current)
        norm = math.sqrt(sum(float(np.vdot(g, g).real) for g in grads))
        accepted = False
        candidate_value = value
        if norm > 0:
            for _ in range(40):
                candidate = _project(
                    [p + (step * radius / norm) * g
                     for p, g in zip(current, grads)],
                    budget
                )
                candidate_value, _ = surrogate(candidate, with_grad=False)
                if candidate_value > value:
                    accepted = True
                    break
                step *= 0.5
        if accepted:
            current = candidate
            step = min(step * 1.5, 1.0)
            true_value = _true_objective(
                design, layout, current, budget, metric)
            if true_value > best_value:
                best_value = true_value
                best = current
        trace.append(best_value)

        thresholds = metric.qos_vector(layout.num_users)
        if thresholds is not None:
            report = evaluate(
                design, layout, PrecoderSet(tuple(current), budget), metric)
            if not metric.qos_satisfied(report.user_total):
                surrogate.penalty = min(
                    2.0 * surrogate.penalty, config.penalty_max)

        if (iteration + 1) % config.anneal_every == 0:
            surrogate.temperature = max(
                0.5 * surrogate.temperature, config.soft_min_temp_min)
        stalled = not accepted or abs(candidate_value - value) < tol
        if stalled:
            if surrogate.temperature > config.soft_min_temp_min:
                surrogate.temperature = max(
                    0.5 * surrogate.temperature, config.soft_min_temp_min)
                step = config.step
                continue
            logging.debug(
                f"Refinement stopped after {iteration + 1} iterations")
            break

    pre = PrecoderSet(tuple(best), budget)
    return _finish(ch, layout, pre, metric, trace, TIER_REFINE)


def gradient_check(
    ch: ChannelSet,
    layout: StreamLayout,
    metric: Metric,
    pre: PrecoderSet,
    temperature: float = 1.0,
    penalty: float = 1.0,
    step: float = 1e-5,
    threshold: float = 1e-8,
) -> float:
    """Largest relative error between the analytic surrogate gradient and
    central finite differences, over coordinates above ``threshold``."""

    design = ch.estimated_view()
    surrogate = _Surrogate(
        design, layout, metric, decode_plan(layout, pre), temperature, penalty)
    base = [np.array(p) for p in pre.precoders]
    _, grads = surrogate(base)
    worst = 0.0
    for index, precoder in enumerate(base):
        for position in np.ndindex(precoder.shape):
            for direction, part in ((1.0, "real"), (1j, "imag")):
                plus = [p.copy() for p in base]
                minus = [p.copy() for p in base]
                plus[index][position] += direction * step
                minus[index][position] -= direction * step
                numeric = (
                    surrogate(plus, with_grad=False)[0]
                    - surrogate(minus, with_grad=False)[0]
                ) / (2.0 * step)
                value = grads[index][position]
                analytic = value.real if part == "real" else value.imag
                if abs(analytic) <= threshold:
                    continue
                error = abs(analytic - numeric) / max(
                    abs(analytic), abs(numeric))
                worst = max(worst, error)
    return worst


def optimize(
    ch: ChannelSet,
    layout: StreamLayout,
    metric: Metric,
    power: float,
    config: OptimizerConfig = None,
) -> OptResult:
    """Tier dispatcher: grid search, optionally refined by gradient ascent.

    HRS and GRS layouts have no grid design; they start from equal-power
    closed-form directions and are always refined.
    """

    config = config or OptimizerConfig()
    if layout.kind in GRID_KINDS:
        result = optimize_powers_fixed_directions(
            ch, layout, metric, power,
            grid=config.grid_points,
            share_points=config.share_points,
            power_points=config.power_points,
        )
        if config.tier == TIER_GRID:
            return result
        init_layout = result.layout
        init = result.precoders
    elif layout.kind in (HRS, GRS):
        init_layout = layout
        init = initial_precoders(ch, layout, power)
    else:
        raise ParameterError(f"No optimizer for {layout.kind} layouts")
    return optimize_precoders_refine(
        ch, init_layout, metric, init,
        iters=config.iters, tol=config.tol, config=config,
    )


# -- Monte Carlo and regions ------------------------------------------------

def mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def sample_design(
    draw: Callable[[int, int], ChannelSet],
    layout: StreamLayout,
    metric: Metric,
    power: float,
    config: OptimizerConfig,
    base_seed: int,
    index: int,
) -> Tuple[Tuple[float, ...], float, bool, float]:
    """One Monte Carlo sample: (totals, objective, feasible, tx power)."""
    ch = draw(base_seed, index)
    result = optimize(ch, layout, metric, power, config)
    return (
        result.report.user_total,
        result.objective,
        result.feasible,
        result.precoders.total_power(),
    )


def _sample_task(args):
    return sample_design(*args)


def ergodic_average(
    draw: Callable[[int, int], ChannelSet],
    layout: StreamLayout,
    metric: Metric,
    power: float,
    samples: int,
    base_seed: int,
    config: OptimizerConfig = None,
    executor=None,
) -> ErgodicResult:
    """Average of per-sample designs evaluated on the true channels.

    Each sample draws a channel, designs precoders on its estimate and
    evaluates the rates on the true realization (sample rates, not ergodic
    guarantees). ``executor`` (e.g. a process pool) maps samples in order.
    """

    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    config = config or OptimizerConfig()
    tasks = [
        (draw, layout, metric, power, config, base_seed, index)
        for index in range(samples)
    ]
    if executor is None:
        outcomes = [_sample_task(task) for task in tasks]
    else:
        outcomes = list(executor.map(_sample_task, tasks))

    totals = np.array([outcome[0] for outcome in outcomes], dtype=float)
    objectives = [outcome[1] for outcome in outcomes]
    feasible = [outcome[2] for outcome in outcomes]
    finite = [value for value in objectives if np.isfinite(value)]
    mean_objective, stderr_objective = (
        mean_stderr(finite) if finite else (float("-inf"), 0.0))
    means = []
    errors = []
    for column in totals.T:
        mean, error = mean_stderr(column)
        means.append(mean)
        errors.append(error)
    sum_mean, sum_error = mean_stderr(totals.sum(axis=1))
    return ErgodicResult(
        samples=samples,
        mean_totals=tuple(means),
        stderr_totals=tuple(errors),
        mean_objective=mean_objective,
        stderr_objective=stderr_objective,
        mean_sum_rate=sum_mean,
        stderr_sum_rate=sum_error,
        feasible_fraction=float(np.mean(feasible)),
        mean_transmit_power=float(np.mean([o[3] for o in outcomes])),
    )


def pareto_front(points: Sequence[RegionPoint]) -> List[RegionPoint]:
    """Points not dominated by another, sorted by the user-1 rate."""
    front = []
    for point in points:
        dominated = any(
            other.rates[0] >= point.rates[0]
            and other.rates[1] >= point.rates[1]
            and other.rates != point.rates
            for other in points
        )
        if not dominated:
            front.append(point)
    return sorted(front, key=lambda p: (p.rates[0], -p.rates[1]))


def rate_region_boundary(
    source,
    layout: StreamLayout,
    power: float,
    n_points: int,
    config: OptimizerConfig = None,
    samples: int = 1,
    base_seed: int = 0,
    executor=None,
) -> RegionTrace:
    """Two-user frontier traced by WSR weights.

    ``source`` is a fixed ChannelSet or a channel draw callable (averaged
    over ``samples``). Weight ratios u1/u2 are log-spaced on [1e-3, 1e3].
    """

    if layout.num_users != 2:
        raise ParameterError("Rate regions are traced for K = 2 only")
    if n_points < 1:
        raise ParameterError(f"n_points must be >= 1, got {n_points}")
    if isinstance(source, ChannelSet):
        fixed = source

        def draw(base_seed, index):
            return fixed

        samples = 1
    else:
        draw = source

    points = []
    for ratio in np.logspace(-3.0, 3.0, n_points):
        weights = [ratio / (1.0 + ratio), 1.0 / (1.0 + ratio)]
        metric = Metric.wsr(weights)
        if isinstance(source, ChannelSet):
            result = optimize(fixed, layout, metric, power, config)
            rates = tuple(result.report.user_total)
            objective = result.objective
            stderr = (0.0, 0.0)
        else:
            averaged = ergodic_average(
                draw, layout, metric, power, samples, base_seed, config,
                executor=executor,
            )
            rates = averaged.mean_totals
            objective = averaged.mean_objective
            stderr = averaged.stderr_totals
        logging.debug(
            f"{layout.kind} u1/u2={ratio:.4g} rates=({rates[0]:.4f},"
            f" {rates[1]:.4f})"
        )
        points.append(RegionPoint(
            float(ratio), (float(rates[0]), float(rates[1])),
            float(objective), tuple(stderr)))
    return RegionTrace(tuple(points), tuple(pareto_front(points)))
