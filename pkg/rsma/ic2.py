"""Two-user symmetric Gaussian interference channel with rate-splitting.

Each transmitter puts a fraction ``t`` of its power on a common stream
decoded at both receivers and the rest on a private stream treated as noise
at the other receiver. Receivers jointly decode both common streams first.
"""
import math

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from nxtools import logging
from scipy import optimize

from .channel import IcChannel
from .utils import DegenerateChannelError, ParameterError, clamp_rate

VERY_WEAK = "VeryWeak"
WEAK = "Weak"
STRONG = "Strong"
VERY_STRONG = "VeryStrong"
REGIMES = (VERY_WEAK, WEAK, STRONG, VERY_STRONG)

DEFAULT_EPS_VW = 1e-3
DEFAULT_GRID_POINTS = 1001

# Grid points within this margin of the best one count as tied.
_TIE_MARGIN = 1e-12

DEFAULT_ORTHOGONAL_BOOST = 2.0


def orthogonal_note(power_boost: float = DEFAULT_ORTHOGONAL_BOOST) -> str:
    return (
        "orthogonal baseline: each transmitter uses half of the resource"
        f" with power boosted by {power_boost:g},"
        f" rate = 0.5*log2(1 + {power_boost:g}*P*|h_d|^2)"
    )


@dataclass(frozen=True)
class IcRegime:
    tag: str
    # (|h_d|^2, |h_d|^2 (1 + P |h_d|^2))
    thresholds: Tuple[float, float]


@dataclass(frozen=True)
class IcSplit:
    t: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ParameterError(f"Split fraction must lie in [0, 1]: {self.t}")


@dataclass(frozen=True)
class IcSweepRow:
    inr_over_snr: float
    rs: float
    tin: float
    decode: float
    orthogonal: float
    regime: str
    t_star: float


def _as_split(split: Union[IcSplit, float]) -> IcSplit:
    if isinstance(split, IcSplit):
        return split
    return IcSplit(float(split))


def common_rate_bounds(
    ch: IcChannel, split: Union[IcSplit, float]
) -> Tuple[float, float, float]:
    """Bounds on the symmetric common rate at one receiver.

    Returns ``(own, cross, joint)`` where ``joint`` is the sum-rate bound
    already halved, so ``min`` of the three is the per-stream common rate.
    """

    t = _as_split(split).t
    interference = (1.0 - t) * ch.power * (ch.gain_d + ch.gain_c)
    common = t * ch.power
    b1 = math.log2(1.0 + common * ch.gain_d / (1.0 + interference))
    b2 = math.log2(1.0 + common * ch.gain_c / (1.0 + interference))
    b_sum = 0.5 * math.log2(
        1.0 + common * (ch.gain_d + ch.gain_c) / (1.0 + interference))
    return clamp_rate(b1), clamp_rate(b2), clamp_rate(b_sum)


def private_rate(ch: IcChannel, split: Union[IcSplit, float]) -> float:
    t = _as_split(split).t
    private = (1.0 - t) * ch.power
    return clamp_rate(math.log2(
        1.0 + private * ch.gain_d / (1.0 + private * ch.gain_c)))


def rs_symmetric_rate(ch: IcChannel, split: Union[IcSplit, float]) -> float:
    split = _as_split(split)
    return private_rate(ch, split) + min(common_rate_bounds(ch, split))


def classify_regime(ch: IcChannel, eps_vw: float = DEFAULT_EPS_VW) -> IcRegime:
    """Interference regime; equality points go to the stronger regime.

    Raises:
        DegenerateChannelError: Direct gain is zero.
        ParameterError: Power is not positive.
    """

    if ch.h_d == 0:
        raise DegenerateChannelError("Regime is undefined for h_d = 0")
    if not ch.power > 0:
        raise ParameterError(f"Regime needs power > 0, got {ch.power}")

    gain_d = ch.gain_d
    gain_c = ch.gain_c
    upper = gain_d * (1.0 + ch.power * gain_d)
    thresholds = (gain_d, upper)
    if gain_c <= eps_vw * gain_d:
        tag = VERY_WEAK
    elif gain_c < gain_d:
        tag = WEAK
    elif gain_c < upper:
        tag = STRONG
    else:
        tag = VERY_STRONG
    return IcRegime(tag, thresholds)


def orthogonal_rate(
    ch: IcChannel, power_boost: float = DEFAULT_ORTHOGONAL_BOOST
) -> float:
    """Half the resource per transmitter. The default boost of 2 keeps the
    energy per transmitter; 1 keeps the per-slot power."""
    if not power_boost > 0:
        raise ParameterError(f"power_boost must be > 0, got {power_boost}")
    return clamp_rate(
        0.5 * math.log2(1.0 + power_boost * ch.power * ch.gain_d))


def baseline_rates(
    ch: IcChannel, power_boost: float = DEFAULT_ORTHOGONAL_BOOST
) -> Dict[str, float]:
    return {
        "orthogonal": orthogonal_rate(ch, power_boost),
        "tin": rs_symmetric_rate(ch, 0.0),
        "decode": rs_symmetric_rate(ch, 1.0),
    }


def heuristic_t(ch: IcChannel) -> float:
    """Rule of thumb t ~ (P|h_c|^2 - 1) / (P|h_c|^2): private stream received
    at the other receiver at roughly noise level."""
    inr = ch.inr
    if inr <= 0:
        return 0.0
    return float(np.clip((inr - 1.0) / inr, 0.0, 1.0))


def optimize_t(
    ch: IcChannel, grid_points: int = DEFAULT_GRID_POINTS
) -> Tuple[float, float]:
    """Maximize the symmetric rate over the common power fraction.

    Evaluates a uniform grid on [0, 1], then runs a bounded scalar search in
    the cells adjacent to the best grid point. Among grid points tied within
    1e-12 the largest ``t`` wins, and the refined point replaces the grid
    point only when it is better by more than that margin.

    Args:
        ch (IcChannel): Channel instance.
        grid_points (int): Number of grid points, at least 2.

    Returns:
        tuple[float, float]: ``(t_star, rate)``.
    """

    if grid_points < 2:
        raise ParameterError(f"grid_points must be >= 2, got {grid_points}")

    grid = np.linspace(0.0, 1.0, grid_points)
    rates = np.array([rs_symmetric_rate(ch, float(t)) for t in grid])
    best_rate = float(np.max(rates))
    best_index = int(np.flatnonzero(rates >= best_rate - _TIE_MARGIN)[-1])
    t_star = float(grid[best_index])
    rate = float(rates[best_index])

    low = float(grid[max(best_index - 1, 0)])
    high = float(grid[min(best_index + 1, grid_points - 1)])
    result = optimize.minimize_scalar(
        lambda t: -rs_symmetric_rate(ch, float(np.clip(t, 0.0, 1.0))),
        bounds=(low, high),
        method="bounded",
        options={"xatol": 1e-6},
    )
    if result.success:
        refined_t = float(np.clip(result.x, 0.0, 1.0))
        refined_rate = rs_symmetric_rate(ch, refined_t)
        if refined_rate > rate + _TIE_MARGIN:
            t_star, rate = refined_t, refined_rate
    return t_star, rate


def sweep_inr(
    snr: float,
    ratios: Sequence[float],
    grid_points: int = DEFAULT_GRID_POINTS,
    eps_vw: float = DEFAULT_EPS_VW,
    power_boost: float = DEFAULT_ORTHOGONAL_BOOST,
) -> List[IcSweepRow]:
    """Symmetric rates versus INR/SNR with |h_d| = 1 and P = snr."""

    rows = []
    for ratio in ratios:
        ch = IcChannel(h_d=1.0, h_c=math.sqrt(ratio), power=snr)
        t_star, rate = optimize_t(ch, grid_points)
        baselines = baseline_rates(ch, power_boost)
        regime = classify_regime(ch, eps_vw)
        logging.debug(
            f"INR/SNR={ratio:.4g} regime={regime.tag} t*={t_star:.4f}"
            f" rs={rate:.6f}"
        )
        rows.append(IcSweepRow(
            inr_over_snr=float(ratio),
            rs=rate,
            tin=baselines["tin"],
            decode=baselines["decode"],
            orthogonal=baselines["orthogonal"],
            regime=regime.tag,
            t_star=t_star,
        ))
    return rows
