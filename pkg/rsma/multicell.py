"""Coordinated multi-cell rate-splitting.

Cell ``j`` serves user ``j`` with one common and one private stream vector.
Every user decodes the common streams of all cells (in its own order), then
its private stream; common rates are the minimum over all users.
"""
import math

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from nxtools import logging
from scipy import linalg

from .channel import ChannelSet, MultiCellChannelSet
from .metric import Metric
from .schemes import PrecoderSet, RateReport, StreamLayout, evaluate
from .utils import ParameterError, clamp_rate, log2det_pd


@dataclass(frozen=True)
class CoordConfig:
    common_precoders: Tuple[np.ndarray, ...]
    private_precoders: Tuple[np.ndarray, ...]
    budgets: Tuple[float, ...]
    orders: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self):
        def _freeze(items):
            result = []
            for item in items:
                item = np.array(item, dtype=complex)
                if item.ndim == 1:
                    item = item.reshape(-1, 1)
                item.setflags(write=False)
                result.append(item)
            return tuple(result)

        object.__setattr__(
            self, "common_precoders", _freeze(self.common_precoders))
        object.__setattr__(
            self, "private_precoders", _freeze(self.private_precoders))
        object.__setattr__(
            self, "budgets", tuple(float(b) for b in self.budgets))
        cells = len(self.budgets)
        if len(self.common_precoders) != cells or (
            len(self.private_precoders) != cells
        ):
            raise ParameterError(
                f"Need one common and one private precoder per cell"
                f" ({cells} cells)"
            )
        for cell in range(cells):
            used = self.cell_power(cell)
            if used > self.budgets[cell] + 1e-9:
                raise ParameterError(
                    f"Cell {cell + 1} uses power {used:.12g} above budget"
                    f" {self.budgets[cell]:.12g}"
                )
        if self.orders is not None:
            orders = tuple(tuple(int(c) for c in order) for order in self.orders)
            if len(orders) != cells or any(
                sorted(order) != list(range(cells)) for order in orders
            ):
                raise ParameterError(
                    f"Decoding orders {orders} are not permutations of"
                    f" {cells} cells"
                )
            object.__setattr__(self, "orders", orders)

    @property
    def cells(self) -> int:
        return len(self.budgets)

    def cell_power(self, cell: int) -> float:
        return float(
            np.vdot(self.common_precoders[cell],
                    self.common_precoders[cell]).real
            + np.vdot(self.private_precoders[cell],
                      self.private_precoders[cell]).real
        )

    def total_power(self) -> float:
        return sum(self.cell_power(cell) for cell in range(self.cells))


@dataclass(frozen=True)
class CoordReport:
    # common_user_rate[k][j]: rate at which user k decodes cell j's common
    common_user_rate: Tuple[Tuple[float, ...], ...]
    common_rate: Tuple[float, ...]
    private_rate: Tuple[float, ...]
    user_total: Tuple[float, ...]
    orders: Tuple[Tuple[int, ...], ...]

    @property
    def sum_rate(self) -> float:
        return float(sum(self.user_total))


@dataclass(frozen=True)
class CoordResult:
    t: float
    config: CoordConfig
    report: CoordReport
    objective: float


def _gram(link: np.ndarray, precoder: np.ndarray) -> np.ndarray:
    effective = link.conj().T @ precoder
    return effective @ effective.conj().T


def _check(mc: MultiCellChannelSet, cfg: CoordConfig):
    if mc.cells != cfg.cells:
        raise ParameterError(
            f"Channel has {mc.cells} cells, config {cfg.cells}")
    for precoder in cfg.common_precoders + cfg.private_precoders:
        if precoder.shape[0] != mc.tx_antennas:
            raise ParameterError(
                f"Precoder has {precoder.shape[0]} rows, transmitters have"
                f" {mc.tx_antennas} antennas"
            )
        if precoder.shape[1] > min(mc.tx_antennas, mc.rx_antennas):
            raise ParameterError(
                f"Stream dim {precoder.shape[1]} exceeds min(M, N)")


def default_orders(
    mc: MultiCellChannelSet, cfg: CoordConfig
) -> Tuple[Tuple[int, ...], ...]:
    """Per user: cells by descending received common power, ties by index."""
    orders = []
    for user in range(mc.cells):
        received = [
            float(np.linalg.norm(
                mc.link(user, cell).conj().T @ cfg.common_precoders[cell]) ** 2)
            for cell in range(mc.cells)
        ]
        orders.append(tuple(sorted(
            range(mc.cells), key=lambda cell: (-received[cell], cell))))
    return tuple(orders)


def rate_coordinated(
    mc: MultiCellChannelSet, cfg: CoordConfig
) -> CoordReport:
    """Per-user totals of coordinated rate-splitting.

    At user k the common stream of cell ``orders[k][i]`` sees the commons
    still to be decoded and all private streams as interference; the private
    stream of k sees the other cells' private streams.
    """

    _check(mc, cfg)
    cells = mc.cells
    orders = cfg.orders if cfg.orders is not None else default_orders(mc, cfg)
    size = mc.rx_antennas
    eye = np.eye(size, dtype=complex)

    common_user = [[0.0] * cells for _ in range(cells)]
    private = [0.0] * cells
    for user in range(cells):
        common_cov = [
            _gram(mc.link(user, cell), cfg.common_precoders[cell])
            for cell in range(cells)
        ]
        private_cov = [
            _gram(mc.link(user, cell), cfg.private_precoders[cell])
            for cell in range(cells)
        ]
        other_private = eye.copy()
        for cell in range(cells):
            if cell != user:
                other_private = other_private + private_cov[cell]
        all_private = other_private + private_cov[user]

        # covariance after decoding the first i commons of this user
        remaining = [all_private]
        for cell in reversed(orders[user]):
            remaining.append(remaining[-1] + common_cov[cell])
        remaining.reverse()
        logdets = [log2det_pd(matrix) for matrix in remaining]
        for position, cell in enumerate(orders[user]):
            common_user[user][cell] = clamp_rate(
                logdets[position] - logdets[position + 1])
        private[user] = clamp_rate(
            log2det_pd(all_private) - log2det_pd(other_private))

    common_rate = [
        min(common_user[user][cell] for user in range(cells))
        for cell in range(cells)
    ]
    totals = [common_rate[k] + private[k] for k in range(cells)]
    return CoordReport(
        common_user_rate=tuple(tuple(row) for row in common_user),
        common_rate=tuple(common_rate),
        private_rate=tuple(private),
        user_total=tuple(totals),
        orders=orders,
    )


def _top_directions(matrix: np.ndarray, count: int) -> np.ndarray:
    left, _, _ = linalg.svd(matrix, full_matrices=True)
    return left[:, :count]


def design_coordinated(
    mc: MultiCellChannelSet,
    power: float,
    t: float,
    streams: int = 1,
) -> CoordConfig:
    """Closed-form directions with common power fraction ``t`` per cell.

    Private directions are regularized inverses of cell j's links towards
    every user, taken for user j; common directions are the dominant left
    singular vectors of cell j's stacked links, as all users decode them.
    """

    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"Common fraction must lie in [0, 1]: {t}")
    if not power > 0:
        raise ParameterError(f"Power must be > 0, got {power}")
    cells = mc.cells
    tx = mc.tx_antennas
    commons = []
    privates = []
    for cell in range(cells):
        stacked = np.hstack([mc.link(user, cell) for user in range(cells)])
        regularized = linalg.solve(
            stacked @ stacked.conj().T + (cells / power) * np.eye(tx),
            mc.link(cell, cell),
            assume_a="her",
        )
        private_dir = _top_directions(regularized, streams)
        common_dir = _top_directions(stacked, streams)
        commons.append(math.sqrt(t * power / streams) * common_dir)
        privates.append(math.sqrt((1.0 - t) * power / streams) * private_dir)
    return CoordConfig(tuple(commons), tuple(privates), (power,) * cells)


def optimize_coordinated(
    mc: MultiCellChannelSet,
    power: float,
    metric: Metric = None,
    grid: int = 51,
    streams: int = 1,
) -> CoordResult:
    """Grid search of the common fraction; first strict maximum wins."""

    metric = metric or Metric()
    if grid < 2:
        raise ParameterError(f"grid must be >= 2, got {grid}")
    best = None
    for t in np.linspace(0.0, 1.0, grid):
        cfg = design_coordinated(mc, power, float(t), streams)
        report = rate_coordinated(mc, cfg)
        value = metric.value(
            report.user_total, cfg.total_power(), mc.tx_antennas * mc.cells)
        if best is None or value > best.objective:
            best = CoordResult(float(t), cfg, report, value)
    logging.debug(
        f"Coordinated RS: t*={best.t:.3f} objective={best.objective:.6f}")
    return best


def cooperative_channel(mc: MultiCellChannelSet) -> ChannelSet:
    """Giant broadcast channel: user k sees all transmitters stacked."""
    return ChannelSet.from_matrices([
        np.vstack([mc.link(user, cell) for cell in range(mc.cells)])
        for user in range(mc.cells)
    ])


def cell_powers(pre: PrecoderSet, cells: int, tx_antennas: int) -> List[float]:
    powers = []
    for cell in range(cells):
        rows = slice(cell * tx_antennas, (cell + 1) * tx_antennas)
        powers.append(float(sum(
            np.vdot(p[rows], p[rows]).real for p in pre.precoders)))
    return powers


def check_per_cell_power(
    pre: PrecoderSet,
    budgets: Sequence[float],
    tx_antennas: int,
) -> List[float]:
    """Block-trace power per transmitter; raises when a budget is exceeded."""
    powers = cell_powers(pre, len(budgets), tx_antennas)
    for cell, (used, budget) in enumerate(zip(powers, budgets)):
        if used > budget + 1e-9:
            raise ParameterError(
                f"Transmitter {cell + 1} uses power {used:.12g} above its"
                f" budget {budget:.12g}"
            )
    return powers


def scale_to_cell_budgets(
    pre: PrecoderSet, budgets: Sequence[float], tx_antennas: int
) -> PrecoderSet:
    """Uniformly shrink a giant-channel design until every block fits."""
    powers = cell_powers(pre, len(budgets), tx_antennas)
    factor = min(
        [1.0] + [
            budget / used for used, budget in zip(powers, budgets) if used > 0
        ]
    )
    scale = math.sqrt(factor)
    return PrecoderSet(
        tuple(scale * p for p in pre.precoders),
        float(sum(budgets)),
        pre.decoding_orders,
        pre.dpc_order,
    )


def rate_cooperative(
    mc: MultiCellChannelSet,
    layout: StreamLayout,
    pre: PrecoderSet,
    budgets: Sequence[float],
    metric: Metric = None,
) -> RateReport:
    """Any downlink layout on the stacked channel under per-cell budgets."""
    check_per_cell_power(pre, budgets, mc.tx_antennas)
    return evaluate(cooperative_channel(mc), layout, pre, metric)
