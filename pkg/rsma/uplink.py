"""Uplink rate-splitting: split users send two stream vectors, the base
station runs MMSE-SIC over all transmitted streams.

Channels reuse :class:`rsma.channel.ChannelSet` with the base-station
dimension as rows, ``H_k`` of shape ``M x N_k`` and ``y = sum_k H_k x_k + n``.
Stream ids are ``(user, part)`` with part 0 for an unsplit user and 1/2 for
the two halves of a split user.
"""
import math

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from nxtools import logging

from .channel import ChannelSet
from .utils import ParameterError, clamp_rate, log2det_pd

StreamId = Tuple[int, int]

SEARCH_GRID_POINTS = 2001
SEARCH_TOLERANCE = 1e-8
DOMINANCE_TOLERANCE = 1e-6

ORDER_12 = ((0, 0), (1, 0))
ORDER_21 = ((1, 0), (0, 0))
ORDER_SPLIT = ((0, 1), (1, 0), (0, 2))


@dataclass(frozen=True)
class UplinkConfig:
    """Per-stream precoders keyed by stream id plus the SIC order."""
    powers: Tuple[float, ...]
    precoders: Dict[StreamId, np.ndarray]
    order: Tuple[StreamId, ...]

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        object.__setattr__(self, "order", tuple(tuple(s) for s in self.order))
        precoders = {}
        for stream, matrix in self.precoders.items():
            matrix = np.array(matrix, dtype=complex)
            if matrix.ndim == 1:
                matrix = matrix.reshape(-1, 1)
            matrix.setflags(write=False)
            precoders[tuple(stream)] = matrix
        object.__setattr__(self, "precoders", precoders)

        if any(p < 0 for p in self.powers):
            raise ParameterError(f"Powers must be >= 0: {self.powers}")
        if len(self.order) != len(set(self.order)) or (
            set(self.order) != set(self.precoders)
        ):
            raise ParameterError(
                f"Decoding order {self.order} must list every stream"
                f" {sorted(self.precoders)} exactly once"
            )
        for user in range(self.num_users):
            parts = sorted(part for (u, part) in self.precoders if u == user)
            if parts not in ([0], [1, 2]):
                raise ParameterError(
                    f"User {user + 1} must send one stream or two split"
                    f" halves, got parts {parts}"
                )
            used = sum(
                float(np.vdot(matrix, matrix).real)
                for (u, _), matrix in self.precoders.items() if u == user
            )
            if used > self.powers[user] + 1e-9:
                raise ParameterError(
                    f"User {user + 1} uses power {used:.12g} above budget"
                    f" {self.powers[user]:.12g}"
                )

    @property
    def num_users(self) -> int:
        return len(self.powers)

    def split_users(self) -> List[int]:
        return sorted({u for (u, part) in self.precoders if part == 1})


@dataclass(frozen=True)
class UplinkRates:
    stream_rates: Dict[StreamId, float]
    user_totals: Tuple[float, ...]

    @property
    def sum_rate(self) -> float:
        return float(sum(self.user_totals))


@dataclass(frozen=True)
class MacRegion2:
    r1_max: float
    r2_max: float
    r_sum: float

    def contains(self, r1: float, r2: float, margin: float = 1e-9) -> bool:
        return (
            r1 >= -margin and r2 >= -margin
            and r1 <= self.r1_max + margin
            and r2 <= self.r2_max + margin
            and r1 + r2 <= self.r_sum + margin
        )

    def dominant_face(self, points: int) -> List[Tuple[float, float]]:
        """Evenly spaced points on the sum-rate face between the corners."""
        low = self.r_sum - self.r2_max
        high = self.r1_max
        return [
            (float(r1), float(self.r_sum - r1))
            for r1 in np.linspace(low, high, points)
        ]


@dataclass(frozen=True)
class SplitSolution:
    feasible: bool
    split: Optional[float] = None
    order: Optional[Tuple[StreamId, ...]] = None
    rates: Optional[Tuple[float, float]] = None


def default_order(
    num_users: int, split_users: Sequence[int]
) -> Tuple[StreamId, ...]:
    """First halves of split users, then unsplit users, then second halves."""
    split_users = sorted(split_users)
    order = [(user, 1) for user in split_users]
    order += [(user, 0) for user in range(num_users) if user not in split_users]
    order += [(user, 2) for user in split_users]
    return tuple(order)


def uplink_config(
    ch: ChannelSet,
    powers: Sequence[float],
    split_fractions: Dict[int, float] = None,
    order: Sequence[StreamId] = None,
    split_all: bool = False,
) -> UplinkConfig:
    """Identity-direction configuration.

    Users split with ``P_{k,1} = a P_k`` and ``P_{k,2} = (1 - a) P_k``, each
    half spread evenly over the user's antennas. By default only user 1
    splits (with a = 0.5); ``split_all`` splits every user.
    """

    if len(powers) != ch.num_users:
        raise ParameterError(
            f"{len(powers)} powers for {ch.num_users} users")
    if split_fractions is None:
        users = range(ch.num_users) if split_all else [0]
        split_fractions = {user: 0.5 for user in users}
    precoders = {}
    for user, channel in enumerate(ch.users):
        eye = np.eye(channel.rx_antennas, dtype=complex)
        scale = powers[user] / channel.rx_antennas
        if user in split_fractions:
            a = float(split_fractions[user])
            if not 0.0 <= a <= 1.0:
                raise ParameterError(f"Split fraction must lie in [0, 1]: {a}")
            precoders[(user, 1)] = math.sqrt(a * scale) * eye
            precoders[(user, 2)] = math.sqrt((1.0 - a) * scale) * eye
        else:
            precoders[(user, 0)] = math.sqrt(scale) * eye
    if order is None:
        order = default_order(ch.num_users, list(split_fractions))
    return UplinkConfig(tuple(powers), precoders, tuple(order))


def two_user_siso_config(
    p1: float,
    p2: float,
    a: float = 1.0,
    order: Sequence[StreamId] = ORDER_SPLIT,
) -> UplinkConfig:
    order = tuple(tuple(s) for s in order)
    precoders = {}
    if (0, 1) in order:
        if not 0.0 <= a <= 1.0:
            raise ParameterError(f"Split fraction must lie in [0, 1]: {a}")
        precoders[(0, 1)] = np.array([[math.sqrt(a * p1)]])
        precoders[(0, 2)] = np.array([[math.sqrt((1.0 - a) * p1)]])
    else:
        precoders[(0, 0)] = np.array([[math.sqrt(p1)]])
    precoders[(1, 0)] = np.array([[math.sqrt(p2)]])
    return UplinkConfig((p1, p2), precoders, order)


def siso_channel(h1: complex, h2: complex) -> ChannelSet:
    return ChannelSet.from_matrices([np.array([[h1]]), np.array([[h2]])])


def _check_channel(ch: ChannelSet, cfg: UplinkConfig):
    if ch.num_users != cfg.num_users:
        raise ParameterError(
            f"Channel has {ch.num_users} users, config {cfg.num_users}")
    for (user, part), matrix in cfg.precoders.items():
        expected = ch.users[user].rx_antennas
        if matrix.shape[0] != expected:
            raise ParameterError(
                f"Precoder of stream ({user + 1}, {part}) has"
                f" {matrix.shape[0]} rows, user has {expected} antennas"
            )


def _stream_covariances(ch: ChannelSet, cfg: UplinkConfig):
    result = {}
    for stream in cfg.order:
        user = stream[0]
        effective = ch.users[user].true_channel @ cfg.precoders[stream]
        result[stream] = (effective, effective @ effective.conj().T)
    return result


def _residual_covariances(ch: ChannelSet, cfg: UplinkConfig):
    """C[i] = I + covariances of streams at positions >= i; C[n] = I."""
    covariances = _stream_covariances(ch, cfg)
    size = ch.tx_antennas
    residual = [np.eye(size, dtype=complex)]
    for stream in reversed(cfg.order):
        residual.append(residual[-1] + covariances[stream][1])
    residual.reverse()
    return covariances, residual


def rate_uplink(ch: ChannelSet, cfg: UplinkConfig) -> UplinkRates:
    """MMSE-SIC rates under the config order; stream i sees every later
    stream as interference."""

    _check_channel(ch, cfg)
    _, residual = _residual_covariances(ch, cfg)
    logdets = [log2det_pd(matrix) for matrix in residual]
    stream_rates = {}
    totals = [0.0] * cfg.num_users
    for position, stream in enumerate(cfg.order):
        rate = clamp_rate(logdets[position] - logdets[position + 1])
        stream_rates[stream] = rate
        totals[stream[0]] += rate
    return UplinkRates(stream_rates, tuple(totals))


def mmse_filters(ch: ChannelSet, cfg: UplinkConfig) -> Dict[StreamId, np.ndarray]:
    """W = P^H H^H (sum of later-stream covariances + I)^-1 per stream."""
    _check_channel(ch, cfg)
    covariances, residual = _residual_covariances(ch, cfg)
    filters = {}
    for position, stream in enumerate(cfg.order):
        effective = covariances[stream][0]
        filters[stream] = np.linalg.solve(
            residual[position + 1], effective).conj().T
    return filters


def filtered_stream_rate(
    ch: ChannelSet, cfg: UplinkConfig, stream: StreamId
) -> float:
    """Rate of one stream through its MMSE filter, log2det(I + W H P)."""
    filters = mmse_filters(ch, cfg)
    effective = ch.users[stream[0]].true_channel @ cfg.precoders[stream]
    gain = filters[stream] @ effective
    gain = 0.5 * (gain + gain.conj().T)
    return clamp_rate(log2det_pd(np.eye(gain.shape[0]) + gain))


def mac_region_2user(
    p1: float, p2: float, g1: float, g2: float
) -> MacRegion2:
    """Two-user Gaussian MAC pentagon from powers and channel gains."""
    if p1 < 0 or p2 < 0 or g1 < 0 or g2 < 0:
        raise ParameterError(
            f"Powers and gains must be >= 0: {(p1, p2, g1, g2)}")
    return MacRegion2(
        r1_max=math.log2(1.0 + p1 * g1),
        r2_max=math.log2(1.0 + p2 * g2),
        r_sum=math.log2(1.0 + p1 * g1 + p2 * g2),
    )


def oma_uplink_rates(
    p1: float, p2: float, g1: float, g2: float, share: float
) -> Tuple[float, float]:
    """Orthogonal time sharing: user 1 gets ``share`` of the time at power
    P1/share (energy preserving), user 2 the rest."""
    if not 0.0 <= share <= 1.0:
        raise ParameterError(f"Time share must lie in [0, 1]: {share}")

    def _rate(tau, power, gain):
        if tau == 0:
            return 0.0
        return tau * math.log2(1.0 + power * gain / tau)

    return _rate(share, p1, g1), _rate(1.0 - share, p2, g2)


def _pair(ch: ChannelSet, cfg: UplinkConfig) -> Tuple[float, float]:
    totals = rate_uplink(ch, cfg).user_totals
    return totals[0], totals[1]


def find_split_for_point(
    target: Tuple[float, float],
    p1: float,
    p2: float,
    h: Tuple[complex, complex],
) -> SplitSolution:
    """Configuration whose rate pair dominates ``target`` without time
    sharing.

    Plain SIC orders are tried first (corner points, reported with a = 1).
    Otherwise user 1 splits with order (s11, s2, s12); the rate of user 2
    grows with the first-half fraction a, so the smallest a meeting the
    user-2 target is located on a grid and refined by bisection.
    """

    ch = siso_channel(*h)
    g1 = abs(h[0]) ** 2
    g2 = abs(h[1]) ** 2
    region = mac_region_2user(p1, p2, g1, g2)
    t1, t2 = float(target[0]), float(target[1])
    if not region.contains(t1, t2, margin=1e-9):
        logging.debug(f"Target {target} outside the MAC region")
        return SplitSolution(feasible=False)

    def dominates(rates):
        return (
            rates[0] >= t1 - DOMINANCE_TOLERANCE
            and rates[1] >= t2 - DOMINANCE_TOLERANCE
        )

    for order in (ORDER_12, ORDER_21):
        rates = _pair(ch, two_user_siso_config(p1, p2, order=order))
        if dominates(rates):
            return SplitSolution(True, 1.0, order, rates)

    def user2_rate(a):
        # s2 sees only the second half of user 1 as interference.
        return np.log2(1.0 + p2 * g2 / (1.0 + (1.0 - a) * p1 * g1))

    grid = np.linspace(0.0, 1.0, SEARCH_GRID_POINTS)
    reached = np.flatnonzero(user2_rate(grid) >= t2)
    if reached.size == 0:
        return SplitSolution(feasible=False)
    high = int(reached[0])

    if high == 0:
        a_star = 0.0
    else:
        lo, hi = float(grid[high - 1]), float(grid[high])
        while hi - lo > SEARCH_TOLERANCE:
            mid = 0.5 * (lo + hi)
            if user2_rate(mid) >= t2:
                hi = mid
            else:
                lo = mid
        a_star = hi
    rates = _pair(ch, two_user_siso_config(p1, p2, a_star, ORDER_SPLIT))
    if not dominates(rates):
        return SplitSolution(feasible=False)
    return SplitSolution(True, a_star, ORDER_SPLIT, rates)
