"""Downlink stream layouts and log-det rate evaluation.

A layout maps messages to streams: every stream is decoded by a subset of
users and carries (parts of) the messages of its owners. Rates follow from
successive interference cancellation at every decoder, computed as
``log2det(I + sum of covariances incl. the stream) - log2det(I + covariances
of the interference)``. Users are indexed from 0 internally; serialized keys
use 1-based subset strings such as ``"12"``.

Covariance sums always run over stream indices in ascending order, so two
layouts that describe the same physical transmission produce bit-identical
rates.
"""
import itertools
import json

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from nxtools import logging
from scipy import optimize

from .channel import ChannelSet
from .metric import MMF, WSR, Metric
from .utils import (
    NumericalError,
    ParameterError,
    clamp_rate,
    format_number,
    log2det_pd,
)

ONE_LAYER_RS = "OneLayerRS"
HRS = "HRS"
GRS = "GRS"
DPCRS = "DPCRS"
SDMA = "SDMA"
NOMA = "NOMA"
OMA = "OMA"
MULTICAST = "Multicast"
SCHEME_KINDS = (
    ONE_LAYER_RS, HRS, GRS, DPCRS, SDMA, NOMA, OMA, MULTICAST
)
# Layouts evaluated by the generic SIC engine.
_SIC_KINDS = (GRS, SDMA, NOMA, OMA, MULTICAST)

ROLE_COMMON = "common"
ROLE_GROUP = "group"
ROLE_PRIVATE = "private"
ROLE_SUPERPOSED = "superposed"
ROLE_SUBSET = "subset"

POWER_TOLERANCE = 1e-9
ALLOCATION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Stream:
    subset: Tuple[int, ...]
    dim: int
    owners: Tuple[int, ...]
    role: str

    @property
    def key(self) -> str:
        labels = [str(user + 1) for user in self.subset]
        if all(len(label) == 1 for label in labels):
            return "".join(labels)
        return ",".join(labels)


def _canonical_key(stream: Stream):
    return (-len(stream.subset), stream.subset)


def _check_permutation(order, num_users, name):
    if order is None:
        return None
    order = tuple(int(user) for user in order)
    if sorted(order) != list(range(num_users)):
        raise ParameterError(
            f"{name} {order} is not a permutation of {num_users} users")
    return order


@dataclass(frozen=True)
class StreamLayout:
    kind: str
    num_users: int
    streams: Tuple[Stream, ...]
    groups: Optional[Tuple[Tuple[int, ...], ...]] = None
    noma_order: Optional[Tuple[int, ...]] = None
    dpc_order: Optional[Tuple[int, ...]] = None
    scheduled: Optional[int] = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ParameterError(f"Unknown scheme kind '{self.kind}'")
        if not self.streams:
            raise ParameterError(f"{self.kind} layout has no streams")
        for stream in self.streams:
            if not stream.subset or any(
                user < 0 or user >= self.num_users for user in stream.subset
            ):
                raise ParameterError(
                    f"Stream subset {stream.subset} outside"
                    f" {self.num_users} users"
                )
            if tuple(sorted(set(stream.subset))) != stream.subset:
                raise ParameterError(
                    f"Stream subset {stream.subset} is not sorted/unique")
            if not set(stream.owners) <= set(stream.subset):
                raise ParameterError(
                    f"Owners {stream.owners} not within subset"
                    f" {stream.subset}"
                )
            if stream.dim < 1:
                raise ParameterError(f"Stream dim must be >= 1: {stream}")
        private = [
            stream.subset[0] for stream in self.streams
            if stream.role == ROLE_PRIVATE
        ]
        if len(private) != len(set(private)):
            raise ParameterError("A user has more than one private stream")
        if self.kind == GRS:
            subsets = [stream.subset for stream in self.streams]
            if len(subsets) != len(set(subsets)):
                raise ParameterError("GRS allows one stream per subset")
        if self.groups is not None:
            members = sorted(user for group in self.groups for user in group)
            if members != list(range(self.num_users)) or any(
                not group for group in self.groups
            ):
                raise ParameterError(
                    f"Groups {self.groups} do not partition"
                    f" {self.num_users} users"
                )
        _check_permutation(self.noma_order, self.num_users, "NOMA order")
        _check_permutation(self.dpc_order, self.num_users, "DPC order")

    def streams_of(self, user: int) -> List[int]:
        return [
            index for index, stream in enumerate(self.streams)
            if user in stream.subset
        ]

    def private_index(self, user: int) -> Optional[int]:
        for index, stream in enumerate(self.streams):
            if stream.role == ROLE_PRIVATE and stream.subset == (user,):
                return index
        return None

    def stream_keys(self) -> List[str]:
        """Subset strings, duplicates suffixed with '#2', '#3', ..."""
        seen: Dict[str, int] = {}
        keys = []
        for stream in self.streams:
            count = seen.get(stream.key, 0) + 1
            seen[stream.key] = count
            keys.append(stream.key if count == 1 else f"{stream.key}#{count}")
        return keys


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=complex)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PrecoderSet:
    """Precoders in stream order; ``decoding_orders`` and ``dpc_order``
    override the layout defaults when given."""
    precoders: Tuple[np.ndarray, ...]
    power_budget: float
    decoding_orders: Optional[Tuple[Tuple[int, ...], ...]] = None
    dpc_order: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(
            self, "precoders", tuple(_frozen(p) for p in self.precoders))
        if not self.power_budget > 0:
            raise ParameterError(
                f"Power budget must be > 0, got {self.power_budget}")
        if self.decoding_orders is not None:
            object.__setattr__(
                self,
                "decoding_orders",
                tuple(tuple(int(i) for i in order)
                      for order in self.decoding_orders)
            )
        if self.dpc_order is not None:
            object.__setattr__(
                self, "dpc_order", tuple(int(i) for i in self.dpc_order))
        total = self.total_power()
        if total > self.power_budget + POWER_TOLERANCE:
            raise ParameterError(
                f"Precoders use power {total:.12g} above budget"
                f" {self.power_budget:.12g}"
            )

    def total_power(self) -> float:
        return float(sum(
            np.vdot(precoder, precoder).real for precoder in self.precoders
        ))

    def stream_powers(self) -> List[float]:
        return [float(np.vdot(p, p).real) for p in self.precoders]


@dataclass(frozen=True)
class DecodeStep:
    stream: int
    user: int
    interference: Tuple[int, ...]


@dataclass
class RateReport:
    layout: StreamLayout
    per_stream_user_rate: Dict[Tuple[int, int], float]
    stream_rate: Dict[int, float]
    allocations: Dict[Tuple[int, int], float]
    user_total: Tuple[float, ...]
    transmit_power: float = 0.0
    tx_antennas: int = 1
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.user_total = tuple(float(item) for item in self.user_total)
        self.check()

    @property
    def sum_rate(self) -> float:
        return float(sum(self.user_total))

    def check(self):
        """Assert the min-rate, allocation-sum and total contracts."""
        layout = self.layout
        for index, stream in enumerate(layout.streams):
            rates = [
                self.per_stream_user_rate[(index, user)]
                for user in stream.subset
                if (index, user) in self.per_stream_user_rate
            ]
            if not rates:
                continue
            if self.stream_rate[index] != min(rates):
                raise NumericalError(
                    f"Stream {stream.key} rate is not the min over decoders")
            if stream.role == ROLE_PRIVATE:
                continue
            shares = [
                self.allocations.get((index, user), 0.0)
                for user in stream.owners
            ]
            scale = max(1.0, self.stream_rate[index])
            if abs(sum(shares) - self.stream_rate[index]) > (
                ALLOCATION_TOLERANCE * scale
            ):
                raise NumericalError(
                    f"Allocations of stream {stream.key} sum to"
                    f" {sum(shares)}, stream rate {self.stream_rate[index]}"
                )
        values = (
            list(self.per_stream_user_rate.values())
            + list(self.stream_rate.values())
            + list(self.allocations.values())
            + list(self.user_total)
        )
        for value in values:
            if not np.isfinite(value) or value < 0:
                raise NumericalError(f"Invalid rate {value} in report")

    def private_rate(self, user: int) -> float:
        index = self.layout.private_index(user)
        if index is None:
            return 0.0
        return self.stream_rate.get(index, 0.0)

    def to_dict(self) -> Dict:
        def _num(value):
            return float(format_number(value))

        streams = {}
        for index, key in enumerate(self.layout.stream_keys()):
            stream = self.layout.streams[index]
            streams[key] = {
                "role": stream.role,
                "rate": _num(self.stream_rate.get(index, 0.0)),
                "per_user": {
                    str(user + 1): _num(rate)
                    for (s, user), rate in sorted(
                        self.per_stream_user_rate.items())
                    if s == index
                },
                "allocations": {
                    str(user + 1): _num(rate)
                    for (s, user), rate in sorted(self.allocations.items())
                    if s == index
                },
            }
        return {
            "kind": self.layout.kind,
            "streams": streams,
            "user_total": {
                str(user + 1): _num(rate)
                for user, rate in enumerate(self.user_total)
            },
            "transmit_power": _num(self.transmit_power),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _multi_stream_dim(dims: Sequence[int], subset: Iterable[int]) -> int:
    return min(dims[user] for user in subset)


def build_layout(
    kind: str,
    num_users: int,
    dims: Sequence[int] = None,
    groups: Sequence[Sequence[int]] = None,
    noma_order: Sequence[int] = None,
    grs_active_subsets: Iterable[Iterable[int]] = None,
    dpc_order: Sequence[int] = None,
    scheduled: int = 0,
    common_dim: int = None,
) -> StreamLayout:
    """Canonical message-to-stream layout of a scheme.

    Streams are ordered by decreasing subset size, then lexicographically by
    subset. Multi-user streams get ``common_dim`` (default: the smallest
    member dimension).

    Args:
        kind (str): One of ``SCHEME_KINDS``.
        num_users (int): Number of users K.
        dims (Sequence[int]): Stream dimension per user, default 1.
        groups (Sequence[Sequence[int]]): User partition for HRS (required)
            and NOMA (optional, one group by default).
        noma_order (Sequence[int]): Users from strongest to weakest.
        grs_active_subsets (Iterable[Iterable[int]]): GRS streams; all
            nonempty subsets by default, singletons are always added.
        dpc_order (Sequence[int]): DPCRS encoding order.
        scheduled (int): Served user for OMA.
        common_dim (int): Dimension of multi-user streams.

    Returns:
        StreamLayout: Validated layout.

    Raises:
        ParameterError: Inconsistent options.
    """

    if num_users < 1:
        raise ParameterError(f"Need at least one user, got {num_users}")
    if kind not in SCHEME_KINDS:
        raise ParameterError(
            f"Unknown scheme kind '{kind}', expected one of"
            f" {', '.join(SCHEME_KINDS)}"
        )
    dims = [1] * num_users if dims is None else [int(d) for d in dims]
    if len(dims) != num_users or any(d < 1 for d in dims):
        raise ParameterError(f"Invalid stream dims {dims}")
    everyone = tuple(range(num_users))

    def shared(subset, owners, role):
        subset = tuple(sorted(subset))
        dim = common_dim or _multi_stream_dim(dims, subset)
        return Stream(subset, dim, tuple(sorted(owners)), role)

    privates = [
        Stream((user,), dims[user], (user,), ROLE_PRIVATE)
        for user in everyone
    ]
    layout_groups = None
    layout_noma = None
    layout_dpc = None
    layout_scheduled = None

    if kind in (ONE_LAYER_RS, DPCRS):
        streams = [shared(everyone, everyone, ROLE_COMMON)] + privates
        if kind == DPCRS:
            layout_dpc = _check_permutation(
                everyone if dpc_order is None else dpc_order,
                num_users,
                "DPC order"
            )
    elif kind == SDMA:
        streams = privates
    elif kind == OMA:
        if not 0 <= scheduled < num_users:
            raise ParameterError(f"Scheduled user {scheduled} out of range")
        streams = [privates[scheduled]]
        layout_scheduled = int(scheduled)
    elif kind == MULTICAST:
        streams = [shared(everyone, everyone, ROLE_COMMON)]
    elif kind == HRS:
        if groups is None:
            raise ParameterError("HRS needs a user grouping")
        layout_groups = tuple(tuple(sorted(g)) for g in groups)
        streams = [shared(everyone, everyone, ROLE_COMMON)]
        streams += [
            shared(group, group, ROLE_GROUP) for group in layout_groups
        ]
        streams += privates
    elif kind == NOMA:
        layout_noma = _check_permutation(
            everyone if noma_order is None else noma_order,
            num_users,
            "NOMA order"
        )
        if groups is None:
            groups = [everyone]
        layout_groups = tuple(tuple(sorted(g)) for g in groups)
        rank = {user: position for position, user in enumerate(layout_noma)}
        streams = []
        for group in layout_groups:
            chain = sorted(group, key=lambda user: rank[user])
            for position, user in enumerate(chain):
                decoders = tuple(sorted(chain[:position + 1]))
                streams.append(Stream(
                    decoders, dims[user], (user,), ROLE_SUPERPOSED))
    else:
        if grs_active_subsets is None:
            subsets = [
                combo
                for size in range(num_users, 0, -1)
                for combo in itertools.combinations(everyone, size)
            ]
        else:
            subsets = [tuple(sorted(set(s))) for s in grs_active_subsets]
            subsets = [s for s in subsets if len(s) > 1]
            subsets += [(user,) for user in everyone]
        streams = [
            privates[s[0]] if len(s) == 1 else shared(s, s, ROLE_SUBSET)
            for s in subsets
        ]

    streams = sorted(streams, key=_canonical_key)
    return StreamLayout(
        kind=kind,
        num_users=num_users,
        streams=tuple(streams),
        groups=layout_groups,
        noma_order=layout_noma,
        dpc_order=layout_dpc,
        scheduled=layout_scheduled,
    )


def noma_order(ch: ChannelSet, use_estimate: bool = False) -> Tuple[int, ...]:
    """Users by descending Frobenius norm, ties by index."""
    matrices = ch.estimates() if use_estimate else ch.matrices()
    norms = [float(np.linalg.norm(matrix)) for matrix in matrices]
    return tuple(sorted(range(len(norms)), key=lambda k: (-norms[k], k)))


def noma_groups(order: Sequence[int], count: int) -> List[List[int]]:
    """Split a strength order into ``count`` groups round-robin, so every
    group mixes strong and weak users."""
    if count < 1 or count > len(order):
        raise ParameterError(
            f"Cannot form {count} groups from {len(order)} users")
    groups = [[] for _ in range(count)]
    for position, user in enumerate(order):
        groups[position % count].append(int(user))
    return groups


def default_decoding_orders(layout: StreamLayout) -> Tuple[Tuple[int, ...], ...]:
    """Canonical SIC orders: larger subsets first, lexicographic within."""
    return tuple(
        tuple(layout.streams_of(user)) for user in range(layout.num_users)
    )


def _check_decoding_orders(layout: StreamLayout, orders) -> None:
    if len(orders) != layout.num_users:
        raise ParameterError(
            f"Expected {layout.num_users} decoding orders, got {len(orders)}")
    for user, order in enumerate(orders):
        expected = set(layout.streams_of(user))
        if len(order) != len(expected) or set(order) != expected:
            raise ParameterError(
                f"Decoding order of user {user + 1} must list exactly the"
                f" streams it decodes {sorted(expected)}, got {list(order)}"
            )
        sizes = [len(layout.streams[index].subset) for index in order]
        if any(a < b for a, b in zip(sizes, sizes[1:])):
            raise ParameterError(
                f"Decoding order of user {user + 1} decodes a smaller"
                f" subset before a larger one: {list(order)}"
            )
        private = layout.private_index(user)
        if private is not None and order[-1] != private:
            raise ParameterError(
                f"Decoding order of user {user + 1} must end with its"
                " private stream"
            )


def _sic_plan(layout: StreamLayout, orders) -> List[DecodeStep]:
    everything = set(range(len(layout.streams)))
    steps = []
    for user, order in enumerate(orders):
        decoded = set()
        for index in order:
            interference = everything - decoded - {index}
            steps.append(DecodeStep(index, user, tuple(sorted(interference))))
            decoded.add(index)
    return steps


def decode_plan(
    layout: StreamLayout, pre: PrecoderSet = None
) -> List[DecodeStep]:
    """Every (stream, decoder, interference set) the scheme evaluates."""

    kind = layout.kind
    streams = layout.streams
    privates = [
        index for index, stream in enumerate(streams)
        if stream.role == ROLE_PRIVATE
    ]
    steps = []
    if kind == ONE_LAYER_RS:
        common = 0
        for user in range(layout.num_users):
            own = layout.private_index(user)
            steps.append(DecodeStep(common, user, tuple(privates)))
            steps.append(DecodeStep(
                own, user, tuple(p for p in privates if p != own)))
    elif kind == DPCRS:
        order = layout.dpc_order
        if pre is not None and pre.dpc_order is not None:
            order = _check_permutation(
                pre.dpc_order, layout.num_users, "DPC order")
        common = 0
        for position, user in enumerate(order):
            own = layout.private_index(user)
            later = sorted(layout.private_index(u) for u in order[position + 1:])
            steps.append(DecodeStep(common, user, tuple(privates)))
            steps.append(DecodeStep(own, user, tuple(later)))
    elif kind == HRS:
        group_streams = [
            index for index, stream in enumerate(streams)
            if stream.role == ROLE_GROUP
        ]
        for user in range(layout.num_users):
            own_group = next(
                index for index in group_streams
                if user in streams[index].subset
            )
            own = layout.private_index(user)
            others = [g for g in group_streams if g != own_group]
            steps.append(DecodeStep(
                0, user, tuple(sorted(group_streams + privates))))
            steps.append(DecodeStep(
                own_group, user, tuple(sorted(others + privates))))
            steps.append(DecodeStep(
                own, user,
                tuple(sorted(others + [p for p in privates if p != own]))))
    else:
        orders = None if pre is None else pre.decoding_orders
        if orders is None:
            orders = default_decoding_orders(layout)
        _check_decoding_orders(layout, orders)
        steps = _sic_plan(layout, orders)
    return steps


def _check_dimensions(ch: ChannelSet, layout: StreamLayout, pre: PrecoderSet):
    if ch.num_users != layout.num_users:
        raise ParameterError(
            f"Channel has {ch.num_users} users, layout {layout.num_users}")
    if len(pre.precoders) != len(layout.streams):
        raise ParameterError(
            f"{len(pre.precoders)} precoders for"
            f" {len(layout.streams)} streams"
        )
    for stream, precoder in zip(layout.streams, pre.precoders):
        expected = (ch.tx_antennas, stream.dim)
        if precoder.shape != expected:
            raise ParameterError(
                f"Precoder of stream {stream.key} has shape"
                f" {precoder.shape}, expected {expected}"
            )
        limit = min(
            [ch.tx_antennas]
            + [ch.users[user].rx_antennas for user in stream.subset]
        )
        if stream.dim > limit:
            raise ParameterError(
                f"Stream {stream.key} dim {stream.dim} exceeds"
                f" min(M, N_k) = {limit}"
            )


def received_covariances(
    matrices: Sequence[np.ndarray], precoders: Sequence[np.ndarray]
) -> Dict[Tuple[int, int], np.ndarray]:
    """(stream, user) -> H_k^H P_s P_s^H H_k."""
    result = {}
    for user, matrix in enumerate(matrices):
        for index, precoder in enumerate(precoders):
            effective = matrix.conj().T @ precoder
            result[(index, user)] = effective @ effective.conj().T
    return result


def _covariance(cov, user, indices, size):
    total = np.eye(size, dtype=complex)
    for index in indices:
        total = total + cov[(index, user)]
    return total


def step_rate(cov, step: DecodeStep, size: int) -> float:
    interference = step.interference
    numerator = tuple(sorted(set(interference) | {step.stream}))
    return (
        log2det_pd(_covariance(cov, step.user, numerator, size))
        - log2det_pd(_covariance(cov, step.user, interference, size))
    )


def _owner_weights(metric: Metric, owners: Sequence[int]) -> List[float]:
    if metric.kind != WSR or metric.weights is None:
        return [1.0] * len(owners)
    return [float(metric.weights[owner]) for owner in owners]


def _water_fill(total: float, levels: Sequence[float]) -> List[float]:
    count = len(levels)
    order = sorted(range(count), key=lambda i: (levels[i], i))
    active = count
    level = 0.0
    for size in range(1, count + 1):
        chosen = order[:size]
        level = (total + sum(levels[i] for i in chosen)) / size
        if size == count or level <= levels[order[size]]:
            active = size
            break
    shares = [0.0] * count
    for i in order[:active]:
        shares[i] = max(0.0, level - levels[i])
    return shares


def allocate_common(
    stream_rate: float,
    private_rates: Sequence[float],
    metric: Metric = None,
    owners: Sequence[int] = None,
) -> List[float]:
    """Split one common rate among its owners.

    WSR gives everything to the largest weight (lowest index on ties), EE
    behaves like WSR with unit weights and MMF water-fills the owners'
    private rates. ``owners`` maps positions to global user indices for the
    weight lookup.
    """

    if stream_rate < 0:
        raise ParameterError(f"Stream rate must be >= 0: {stream_rate}")
    metric = metric or Metric()
    count = len(private_rates)
    owners = list(range(count)) if owners is None else list(owners)
    if count == 0:
        raise ParameterError("A common stream needs at least one owner")
    if metric.kind == MMF:
        return _water_fill(stream_rate, [float(r) for r in private_rates])
    weights = _owner_weights(metric, owners)
    best = max(range(count), key=lambda i: (weights[i], -i))
    shares = [0.0] * count
    shares[best] = float(stream_rate)
    return shares


def _allocate_lp(layout, stream_rates, base, metric, thresholds):
    shared = [
        index for index, stream in enumerate(layout.streams)
        if stream.role != ROLE_PRIVATE
    ]
    variables = [
        (index, owner) for index in shared
        for owner in layout.streams[index].owners
    ]
    num_users = layout.num_users
    mmf = metric.kind == MMF
    size = len(variables) + (1 if mmf else 0)
    cost = np.zeros(size)
    if mmf:
        cost[-1] = -1.0
    else:
        weights = (
            metric.weight_vector(num_users) if metric.kind == WSR
            else [1.0] * num_users
        )
        for position, (_, owner) in enumerate(variables):
            cost[position] = -weights[owner]

    a_eq = np.zeros((len(shared), size))
    b_eq = np.zeros(len(shared))
    for row, index in enumerate(shared):
        for position, (stream, _) in enumerate(variables):
            if stream == index:
                a_eq[row, position] = 1.0
        b_eq[row] = stream_rates[index]

    a_ub = []
    b_ub = []
    for user in range(num_users):
        if mmf:
            row = np.zeros(size)
            row[-1] = 1.0
            for position, (_, owner) in enumerate(variables):
                if owner == user:
                    row[position] = -1.0
            a_ub.append(row)
            b_ub.append(base[user])
        if thresholds is not None:
            row = np.zeros(size)
            for position, (_, owner) in enumerate(variables):
                if owner == user:
                    row[position] = -1.0
            a_ub.append(row)
            b_ub.append(base[user] - thresholds[user])

    bounds = [(0.0, None)] * len(variables)
    if mmf:
        bounds.append((None, None))
    result = optimize.linprog(
        cost,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=a_eq if len(shared) else None,
        b_eq=b_eq if len(shared) else None,
        bounds=bounds,
        method="highs",
    )
    if not result.success:
        return None
    solution = np.maximum(result.x[:len(variables)], 0.0)
    allocations = {}
    for index in shared:
        positions = [
            position for position, (stream, _) in enumerate(variables)
            if stream == index
        ]
        # Put the LP round-off on the last owner so shares sum to the rate.
        values = [float(solution[p]) for p in positions]
        values[-1] = max(0.0, stream_rates[index] - sum(values[:-1]))
        for position, value in zip(positions, values):
            allocations[variables[position]] = value
    return allocations


def allocate_streams(
    layout: StreamLayout,
    stream_rates: Dict[int, float],
    metric: Metric = None,
) -> Dict[Tuple[int, int], float]:
    """Allocation of every non-private stream among its owners.

    Closed form when each stream can be split on its own (WSR/EE, or MMF with
    a single multi-owner stream); a linear program when MMF couples several
    shared streams or QoS thresholds are set. Infeasible QoS falls back to
    the allocation without thresholds.
    """

    metric = metric or Metric()
    num_users = layout.num_users
    base = [0.0] * num_users
    for index, stream in enumerate(layout.streams):
        if stream.role == ROLE_PRIVATE:
            base[stream.owners[0]] += stream_rates[index]
    shared = [
        index for index, stream in enumerate(layout.streams)
        if stream.role != ROLE_PRIVATE
    ]
    multi_owner = [
        index for index in shared if len(layout.streams[index].owners) > 1
    ]
    thresholds = metric.qos_vector(num_users)

    if thresholds is not None or (metric.kind == MMF and len(multi_owner) > 1):
        allocations = _allocate_lp(
            layout, stream_rates, base, metric, thresholds)
        if allocations is not None:
            return allocations
        logging.debug(f"{layout.kind}: QoS allocation infeasible")
        if thresholds is not None:
            return allocate_streams(
                layout, stream_rates, metric.copy(update={"qos": None}))

    allocations = {}
    for index in shared:
        stream = layout.streams[index]
        levels = [base[owner] for owner in stream.owners]
        shares = allocate_common(
            stream_rates[index], levels, metric, stream.owners)
        for owner, share in zip(stream.owners, shares):
            allocations[(index, owner)] = share
    return allocations


def user_totals(
    layout: StreamLayout,
    stream_rates: Dict[int, float],
    allocations: Dict[Tuple[int, int], float],
) -> List[float]:
    totals = [0.0] * layout.num_users
    for index, stream in enumerate(layout.streams):
        if stream.role == ROLE_PRIVATE:
            totals[stream.owners[0]] += stream_rates.get(index, 0.0)
            continue
        for owner in stream.owners:
            totals[owner] += allocations.get((index, owner), 0.0)
    return totals


def _report_from_plan(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    plan: List[DecodeStep],
    metric: Metric = None,
) -> RateReport:
    _check_dimensions(ch, layout, pre)
    cov = received_covariances(ch.matrices(), pre.precoders)
    per_user = {}
    for step in plan:
        size = ch.users[step.user].rx_antennas
        per_user[(step.stream, step.user)] = clamp_rate(
            step_rate(cov, step, size))

    stream_rates = {}
    for index, stream in enumerate(layout.streams):
        rates = [
            per_user[(index, user)] for user in stream.subset
            if (index, user) in per_user
        ]
        stream_rates[index] = min(rates) if rates else 0.0

    allocations = allocate_streams(layout, stream_rates, metric)
    totals = user_totals(layout, stream_rates, allocations)
    return RateReport(
        layout=layout,
        per_stream_user_rate=per_user,
        stream_rate=stream_rates,
        allocations=allocations,
        user_total=tuple(totals),
        transmit_power=pre.total_power(),
        tx_antennas=ch.tx_antennas,
    )


def _require_kind(layout: StreamLayout, *kinds: str):
    if layout.kind not in kinds:
        raise ParameterError(
            f"Layout kind {layout.kind} not accepted, expected"
            f" {' or '.join(kinds)}"
        )


def rate_1layer(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    metric: Metric = None,
) -> RateReport:
    """One common stream decoded by everyone, privates as noise."""
    _require_kind(layout, ONE_LAYER_RS)
    return _report_from_plan(ch, layout, pre, decode_plan(layout, pre), metric)


def rate_hrs(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    metric: Metric = None,
) -> RateReport:
    _require_kind(layout, HRS)
    return _report_from_plan(ch, layout, pre, decode_plan(layout, pre), metric)


def rate_grs(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    metric: Metric = None,
) -> RateReport:
    """Generalized rate-splitting: one stream per user subset, SIC from the
    largest subsets down. Interference at each step is every stream the
    user has not decoded yet plus every stream it never decodes."""
    _require_kind(layout, GRS)
    return _report_from_plan(ch, layout, pre, decode_plan(layout, pre), metric)


def rate_dpcrs(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    metric: Metric = None,
) -> RateReport:
    _require_kind(layout, DPCRS)
    return _report_from_plan(ch, layout, pre, decode_plan(layout, pre), metric)


def evaluate(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    metric: Metric = None,
) -> RateReport:
    """Rate report of any layout kind."""
    if layout.kind == ONE_LAYER_RS:
        return rate_1layer(ch, layout, pre, metric)
    if layout.kind == HRS:
        return rate_hrs(ch, layout, pre, metric)
    if layout.kind == DPCRS:
        return rate_dpcrs(ch, layout, pre, metric)
    _require_kind(layout, *_SIC_KINDS)
    return _report_from_plan(ch, layout, pre, decode_plan(layout, pre), metric)


def _order_candidates(layout: StreamLayout, user: int) -> List[Tuple[int, ...]]:
    streams = layout.streams_of(user)
    by_size: Dict[int, List[int]] = {}
    for index in streams:
        by_size.setdefault(len(layout.streams[index].subset), []).append(index)
    blocks = [
        list(itertools.permutations(by_size[size]))
        for size in sorted(by_size, reverse=True)
    ]
    return [
        tuple(index for block in combo for index in block)
        for combo in itertools.product(*blocks)
    ]


def best_decoding_orders(
    ch: ChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    metric: Metric = None,
) -> Tuple[Tuple[Tuple[int, ...], ...], RateReport]:
    """Exhaustive search of same-order SIC orders for GRS with K <= 3."""

    _require_kind(layout, GRS)
    if layout.num_users > 3:
        raise ParameterError(
            f"Exhaustive order search supports K <= 3, got"
            f" {layout.num_users}"
        )
    metric = metric or Metric()
    candidates = [
        _order_candidates(layout, user) for user in range(layout.num_users)
    ]
    best = None
    for orders in itertools.product(*candidates):
        trial = PrecoderSet(
            pre.precoders, pre.power_budget, decoding_orders=orders)
        report = rate_grs(ch, layout, trial, metric)
        value = metric.value(
            report.user_total, report.transmit_power, ch.tx_antennas)
        if best is None or value > best[0]:
            best = (value, tuple(orders), report)
    logging.debug(f"Best GRS decoding orders {best[1]} value={best[0]:.6f}")
    return best[1], best[2]


def zero_precoders(
    layout: StreamLayout, tx_antennas: int, power_budget: float
) -> PrecoderSet:
    return PrecoderSet(
        tuple(
            np.zeros((tx_antennas, stream.dim), dtype=complex)
            for stream in layout.streams
        ),
        power_budget,
    )
