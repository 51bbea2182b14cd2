import os
import json
import shutil
import hashlib
import collections

from typing import Any, List

import numpy as np
from scipy import linalg

PACKAGE_ROOT = os.path.dirname(os.path.abspath(__file__))

# Reported rates below this value are written as exact zeros.
RATE_FLOOR = 1e-12


class ParameterError(ValueError):
    """Invalid dimensions, variances, orders or layouts."""


class DegenerateChannelError(ParameterError):
    """Channel makes the requested quantity undefined (e.g. h_d = 0)."""


class ConfigError(ValueError):
    """Scenario configuration could not be read or validated."""


class NumericalError(RuntimeError):
    """Non-finite rate, gradient or objective."""


def log2det_pd(matrix: np.ndarray) -> float:
    """Base-2 log-determinant of a Hermitian positive-definite matrix.

    Uses the Cholesky factor so no determinant of a near-singular matrix is
    ever formed.

    Args:
        matrix (np.ndarray): Square Hermitian positive-definite matrix.

    Returns:
        float: log2 det(matrix).

    Raises:
        NumericalError: Matrix is not positive definite.
    """

    try:
        factor = linalg.cholesky(matrix, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Covariance is not positive definite: {exc}")
    return float(2.0 * np.sum(np.log2(np.abs(np.diag(factor)))))


def clamp_rate(value: float) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"Non-finite rate {value}")
    if value < RATE_FLOOR:
        return 0.0
    return float(value)


def db_to_linear(value_db: float) -> float:
    """Power ratio from dB (SNR_dB = 10 log10 P with unit noise)."""
    return float(10.0 ** (value_db / 10.0))


def amplitude_db_to_linear(value_db: float) -> float:
    """Amplitude ratio from dB (gamma_dB = 20 log10 gamma)."""
    return float(10.0 ** (value_db / 20.0))


def dbm_to_watt(value_dbm: float) -> float:
    return float(10.0 ** ((value_dbm - 30.0) / 10.0))


def _seed_sequence(seed: int, index: int) -> np.random.SeedSequence:
    if seed < 0 or index < 0:
        raise ParameterError(
            f"Seed and index must be nonnegative, got ({seed}, {index})"
        )
    return np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(int(index),)
    )


def sample_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, stream) pair.

    The output depends only on the pair, so draws can happen in any order or
    in parallel and still be bit-identical.
    """

    return np.random.Generator(np.random.Philox(_seed_sequence(seed, stream)))


def derive_seed(base_seed: int, index: int) -> int:
    """64-bit per-sample seed = hash(base_seed, index)."""
    state = _seed_sequence(base_seed, index).generate_state(1, np.uint64)
    return int(state[0])


def complex_gaussian(
    rng: np.random.Generator, shape, variance: float
) -> np.ndarray:
    """Circularly-symmetric complex Gaussian entries CN(0, variance)."""
    scale = np.sqrt(variance / 2.0)
    real = rng.standard_normal(shape)
    imag = rng.standard_normal(shape)
    return scale * (real + 1j * imag)


def format_number(value: float) -> str:
    """12 significant digits, '.' decimal, no locale."""
    if value == 0:
        return "0"
    return f"{value:.12g}"


def config_hash(data: Any) -> str:
    payload = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def remove_tmpdir(tmpdir: str) -> List[str]:
    """Remove a processing directory, retrying files that are still locked.

    Args:
        tmpdir (str): Path to temp directory.

    Returns:
        list[str]: Paths that could not be removed.
    """

    failed = []
    if not os.path.exists(tmpdir):
        return failed

    filepaths = set()
    for root, _, filenames in os.walk(tmpdir):
        for filename in filenames:
            filepaths.add(os.path.join(root, filename))

    remove_queue = collections.deque()
    for filepath in filepaths:
        remove_queue.append((filepath, 0))

    while remove_queue:
        (filepath, attempt) = remove_queue.popleft()
        try:
            os.remove(filepath)
        except OSError:
            if attempt > 3:
                failed.append(filepath)
            else:
                remove_queue.append((filepath, attempt + 1))

    if not failed:
        shutil.rmtree(tmpdir)
    return failed
