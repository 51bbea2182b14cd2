"""Channel construction, sampling and imperfect-CSIT decomposition.

Every channel matrix is stored with the transmitter (base station) dimension
as rows: a downlink user sees ``y_k = H_k^H x + n_k`` with ``H_k`` of shape
``M x N_k``. Noise variance is fixed to 1, all powers are relative to it.
"""
import json
import math

from dataclasses import dataclass, replace
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .utils import (
    ParameterError,
    complex_gaussian,
    derive_seed,
    sample_rng,
)

_RNG_TRUE = 0
_RNG_ERROR = 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class IcChannel:
    """Two-user symmetric Gaussian interference channel."""
    h_d: complex
    h_c: complex
    power: float

    def __post_init__(self):
        if not self.power >= 0 or not math.isfinite(self.power):
            raise ParameterError(f"Power must be >= 0, got {self.power}")

    @property
    def gain_d(self) -> float:
        return abs(self.h_d) ** 2

    @property
    def gain_c(self) -> float:
        return abs(self.h_c) ** 2

    @property
    def snr(self) -> float:
        return self.power * self.gain_d

    @property
    def inr(self) -> float:
        return self.power * self.gain_c


@dataclass(frozen=True)
class UserChannel:
    rx_antennas: int
    true_channel: np.ndarray
    estimate: np.ndarray
    error_variance: float
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "true_channel", _frozen(self.true_channel))
        object.__setattr__(self, "estimate", _frozen(self.estimate))
        if self.rx_antennas < 1:
            raise ParameterError(
                f"Receive antennas must be >= 1, got {self.rx_antennas}")
        if not self.variance > 0:
            raise ParameterError(
                f"Channel variance must be > 0, got {self.variance}")
        if not 0 <= self.error_variance <= self.variance:
            raise ParameterError(
                f"Error variance {self.error_variance} outside"
                f" [0, {self.variance}]"
            )
        if self.true_channel.shape != self.estimate.shape:
            raise ParameterError(
                f"Estimate shape {self.estimate.shape} does not match"
                f" channel shape {self.true_channel.shape}"
            )

    @property
    def error(self) -> np.ndarray:
        return self.true_channel - self.estimate


@dataclass(frozen=True)
class ChannelSet:
    tx_antennas: int
    users: Tuple[UserChannel, ...]

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if self.tx_antennas < 1:
            raise ParameterError(
                f"Transmit antennas must be >= 1, got {self.tx_antennas}")
        if not self.users:
            raise ParameterError("Channel set needs at least one user")
        for index, user in enumerate(self.users):
            expected = (self.tx_antennas, user.rx_antennas)
            if user.true_channel.shape != expected:
                raise ParameterError(
                    f"User {index + 1} channel has shape"
                    f" {user.true_channel.shape}, expected {expected}"
                )

    @property
    def num_users(self) -> int:
        return len(self.users)

    def matrices(self) -> List[np.ndarray]:
        return [user.true_channel for user in self.users]

    def estimates(self) -> List[np.ndarray]:
        return [user.estimate for user in self.users]

    def estimated_view(self) -> "ChannelSet":
        """Channel set as the transmitter believes it (true = estimate)."""
        return ChannelSet(
            self.tx_antennas,
            tuple(
                replace(
                    user,
                    true_channel=user.estimate,
                    error_variance=0.0,
                )
                for user in self.users
            )
        )

    @classmethod
    def from_matrices(
        cls,
        matrices: Sequence[np.ndarray],
        variances: Sequence[float] = None,
    ) -> "ChannelSet":
        """Perfect-CSIT set from explicit ``M x N_k`` matrices."""
        matrices = [np.atleast_2d(np.asarray(m, dtype=complex)) for m in matrices]
        if not matrices:
            raise ParameterError("Channel set needs at least one user")
        if variances is None:
            variances = [1.0] * len(matrices)
        tx = matrices[0].shape[0]
        users = tuple(
            UserChannel(
                rx_antennas=matrix.shape[1],
                true_channel=matrix,
                estimate=matrix,
                error_variance=0.0,
                variance=float(variance),
            )
            for matrix, variance in zip(matrices, variances)
        )
        return cls(tx, users)

    def to_json(self) -> str:
        def _encode(matrix):
            return [
                [{"re": float(value.real), "im": float(value.imag)}
                 for value in row]
                for row in matrix
            ]

        data = {
            "tx": self.tx_antennas,
            "users": [
                {
                    "rx": user.rx_antennas,
                    "true": _encode(user.true_channel),
                    "estimate": _encode(user.estimate),
                    "err_var": user.error_variance,
                    "var": user.variance,
                }
                for user in self.users
            ]
        }
        return json.dumps(data)

    @classmethod
    def from_json(cls, content: str) -> "ChannelSet":
        data: Dict[str, Any] = json.loads(content)

        def _decode(rows):
            return np.array(
                [[item["re"] + 1j * item["im"] for item in row]
                 for row in rows],
                dtype=complex
            )

        try:
            users = tuple(
                UserChannel(
                    rx_antennas=int(item["rx"]),
                    true_channel=_decode(item["true"]),
                    estimate=_decode(item["estimate"]),
                    error_variance=float(item["err_var"]),
                    variance=float(item.get("var", 1.0)),
                )
                for item in data["users"]
            )
            return cls(int(data["tx"]), users)
        except KeyError as exc:
            raise ParameterError(f"Channel document misses key {exc}")


@dataclass(frozen=True)
class MultiCellChannelSet:
    """Coordinated multi-cell links; ``links[k][j]`` is transmitter j to user k."""
    cells: int
    links: Tuple[Tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        links = tuple(
            tuple(_frozen(matrix) for matrix in row) for row in self.links
        )
        object.__setattr__(self, "links", links)
        if self.cells < 1:
            raise ParameterError(f"Cells must be >= 1, got {self.cells}")
        if len(links) != self.cells or any(
            len(row) != self.cells for row in links
        ):
            raise ParameterError(
                f"Link grid must be {self.cells}x{self.cells}")
        shape = links[0][0].shape
        for row in links:
            for matrix in row:
                if matrix.shape != shape:
                    raise ParameterError(
                        f"Link shapes differ: {matrix.shape} vs {shape}")

    @property
    def tx_antennas(self) -> int:
        return self.links[0][0].shape[0]

    @property
    def rx_antennas(self) -> int:
        return self.links[0][0].shape[1]

    def link(self, user: int, cell: int) -> np.ndarray:
        return self.links[user][cell]


@dataclass(frozen=True)
class CsitSample:
    index: int
    seed: int
    channels: ChannelSet


def gen_rayleigh(
    seed: int,
    tx: int,
    rx_list: Sequence[int],
    variances: Sequence[float],
) -> ChannelSet:
    """I.i.d. Rayleigh channels, entries CN(0, variance_k), perfect CSIT."""

    if tx < 1:
        raise ParameterError(f"tx must be >= 1, got {tx}")
    if not rx_list:
        raise ParameterError("rx_list must not be empty")
    if len(rx_list) != len(variances):
        raise ParameterError(
            f"rx_list has {len(rx_list)} users but {len(variances)}"
            " variances were given"
        )
    if any(rx < 1 for rx in rx_list):
        raise ParameterError(f"Receive antennas must be >= 1: {rx_list}")
    if any(not variance > 0 for variance in variances):
        raise ParameterError(f"Variances must be positive: {variances}")

    rng = sample_rng(seed, _RNG_TRUE)
    users = []
    for rx, variance in zip(rx_list, variances):
        matrix = complex_gaussian(rng, (tx, rx), variance)
        users.append(UserChannel(
            rx_antennas=rx,
            true_channel=matrix,
            estimate=matrix,
            error_variance=0.0,
            variance=float(variance),
        ))
    return ChannelSet(tx, tuple(users))


def error_variance_for(
    variance: float, power: float, alpha_exponent: float
) -> float:
    """sigma_e^2 = sigma^2 * power^alpha_exponent (sign chosen by caller)."""
    if not power > 0:
        raise ParameterError(f"Power must be > 0, got {power}")
    return float(variance * power ** alpha_exponent)


def apply_csit_error(
    ch: ChannelSet,
    alpha_exponent: float,
    power: float,
    seed: int,
) -> ChannelSet:
    """Split every true channel into estimate plus independent error.

    The estimate is drawn from its conditional law given the true channel,
    ``Ĥ | H ~ CN(c H, c sigma_e^2)`` with ``c = 1 - sigma_e^2 / sigma^2``,
    and the error is the remainder. Marginally Ĥ ~ CN(0, sigma^2 - sigma_e^2)
    and H̃ ~ CN(0, sigma_e^2), independent of each other, while the true
    channel is kept as drawn.
    """

    rng = sample_rng(seed, _RNG_ERROR)
    users = []
    for index, user in enumerate(ch.users):
        if user.error_variance != 0:
            raise ParameterError(
                f"User {index + 1} already carries a CSIT error")
        error_variance = error_variance_for(
            user.variance, power, alpha_exponent)
        if error_variance > user.variance:
            raise ParameterError(
                f"Error variance {error_variance:.6g} exceeds channel"
                f" variance {user.variance:.6g} for power={power},"
                f" alpha_exponent={alpha_exponent}"
            )
        shrink = 1.0 - error_variance / user.variance
        if shrink > 0:
            noise = complex_gaussian(
                rng, user.true_channel.shape, shrink * error_variance)
            estimate = shrink * user.true_channel + noise
        else:
            estimate = np.zeros_like(user.true_channel)
        users.append(UserChannel(
            rx_antennas=user.rx_antennas,
            true_channel=user.true_channel,
            estimate=estimate,
            error_variance=error_variance,
            variance=user.variance,
        ))
    return ChannelSet(ch.tx_antennas, tuple(users))


def csit_sample(
    base_seed: int,
    index: int,
    tx: int,
    rx_list: Sequence[int],
    variances: Sequence[float],
    alpha_exponent: float = None,
    power: float = 1.0,
) -> CsitSample:
    """Monte Carlo sample ``index`` of an ensemble; ``alpha_exponent=None``
    keeps perfect CSIT."""

    seed = derive_seed(base_seed, index)
    channels = gen_rayleigh(seed, tx, rx_list, variances)
    if alpha_exponent is not None:
        channels = apply_csit_error(channels, alpha_exponent, power, seed)
    return CsitSample(index=index, seed=seed, channels=channels)


def geometry_2user(
    gamma_db: float, theta: float, tx: int = 2
) -> ChannelSet:
    """Fixed two-user MISO geometry with strength disparity and angle.

    h1 = [1, 1]^H / sqrt(2), h2 = gamma [1, e^{j theta}]^H / sqrt(2),
    gamma = 10^(gamma_db / 20).
    """

    if tx != 2:
        raise ParameterError(f"The two-user geometry needs tx=2, got {tx}")
    if not 0 <= theta <= math.pi:
        raise ParameterError(f"theta must lie in [0, pi], got {theta}")
    gamma = 10.0 ** (gamma_db / 20.0)
    h1 = np.conj(np.array([[1.0], [1.0]], dtype=complex)) / math.sqrt(2.0)
    h2 = gamma * np.conj(
        np.array([[1.0], [np.exp(1j * theta)]], dtype=complex)
    ) / math.sqrt(2.0)
    return ChannelSet.from_matrices([h1, h2])


def theta_for_rho(rho: float) -> float:
    """Inverse of rho(theta) = (1 - cos theta) / 2 for the two-user geometry."""
    if not 0 <= rho <= 1:
        raise ParameterError(f"rho must lie in [0, 1], got {rho}")
    return float(math.acos(1.0 - 2.0 * rho))


def rho(h1: np.ndarray, h2: np.ndarray) -> float:
    """1 - |h1^H h2|^2 / (|h1|^2 |h2|^2); 0 aligned, 1 orthogonal."""
    h1 = np.ravel(h1)
    h2 = np.ravel(h2)
    norm = np.vdot(h1, h1).real * np.vdot(h2, h2).real
    if norm == 0:
        raise ParameterError("rho is undefined for a zero channel")
    return float(1.0 - abs(np.vdot(h1, h2)) ** 2 / norm)


def gen_multicell(
    seed: int,
    cells: int,
    tx: int,
    rx: int,
    direct_variance: float = 1.0,
    cross_variance: float = 1.0,
) -> MultiCellChannelSet:
    """I.i.d. Rayleigh link grid; cross links drawn with their own variance."""

    if not direct_variance > 0 or not cross_variance >= 0:
        raise ParameterError(
            f"Invalid variances ({direct_variance}, {cross_variance})")
    rng = sample_rng(seed, _RNG_TRUE)
    links = []
    for user in range(cells):
        row = []
        for cell in range(cells):
            variance = direct_variance if user == cell else cross_variance
            row.append(complex_gaussian(rng, (tx, rx), variance))
        links.append(tuple(row))
    return MultiCellChannelSet(cells, tuple(links))
