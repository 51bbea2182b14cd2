"""Objectives shared by allocation and optimization."""
import math

from typing import List, Optional, Sequence

from pydantic import BaseModel, validator, root_validator

from .utils import ParameterError, dbm_to_watt

WSR = "wsr"
MMF = "mmf"
EE = "ee"

# Tolerance used when deciding whether a QoS threshold is met.
QOS_TOLERANCE = 1e-6


class Metric(BaseModel):
    """Weighted sum rate, max-min fairness or energy efficiency.

    ``weights`` is used by WSR only (``None`` means unit weights). The EE
    constants are in watt: circuit power is ``tx_antennas * p_dyn + p_sta``.
    ``qos`` holds optional per-user minimum total rates.
    """

    kind: str = WSR
    weights: Optional[List[float]] = None
    eta: float = 0.35
    p_dyn: float = dbm_to_watt(27.0)
    p_sta: float = 1e-3
    qos: Optional[List[float]] = None

    class Config:
        allow_mutation = False
        extra = "forbid"

    @validator("kind")
    def _check_kind(cls, value):
        value = value.lower()
        if value not in (WSR, MMF, EE):
            raise ValueError(
                f"Unknown metric '{value}', expected one of wsr, mmf, ee")
        return value

    @validator("weights")
    def _check_weights(cls, value):
        if value is None:
            return value
        if any(weight < 0 or not math.isfinite(weight) for weight in value):
            raise ValueError(f"Weights must be finite and >= 0: {value}")
        if not any(weight > 0 for weight in value):
            raise ValueError("At least one weight must be positive")
        return value

    @validator("eta")
    def _check_eta(cls, value):
        if not 0 < value <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {value}")
        return value

    @validator("p_dyn", "p_sta")
    def _check_positive(cls, value):
        if not value > 0:
            raise ValueError(f"Circuit power constants must be > 0: {value}")
        return value

    @validator("qos")
    def _check_qos(cls, value):
        if value is not None and any(item < 0 for item in value):
            raise ValueError(f"QoS thresholds must be >= 0: {value}")
        return value

    @root_validator(skip_on_failure=True)
    def _check_lengths(cls, values):
        weights = values.get("weights")
        qos = values.get("qos")
        if weights is not None and qos is not None and len(weights) != len(qos):
            raise ValueError("weights and qos must have the same length")
        return values

    @classmethod
    def wsr(cls, weights: Sequence[float] = None, qos=None) -> "Metric":
        return cls(
            kind=WSR,
            weights=None if weights is None else list(weights),
            qos=qos,
        )

    @classmethod
    def mmf(cls, qos=None) -> "Metric":
        return cls(kind=MMF, qos=qos)

    @classmethod
    def ee(cls, eta=0.35, p_dyn=None, p_sta=1e-3, qos=None) -> "Metric":
        if p_dyn is None:
            p_dyn = dbm_to_watt(27.0)
        return cls(kind=EE, eta=eta, p_dyn=p_dyn, p_sta=p_sta, qos=qos)

    def weight_vector(self, num_users: int) -> List[float]:
        """WSR weights (unit for MMF/EE), validated against user count."""
        if self.kind != WSR or self.weights is None:
            return [1.0] * num_users
        if len(self.weights) != num_users:
            raise ParameterError(
                f"Metric has {len(self.weights)} weights for"
                f" {num_users} users"
            )
        return [float(weight) for weight in self.weights]

    def qos_vector(self, num_users: int) -> Optional[List[float]]:
        if self.qos is None:
            return None
        if len(self.qos) != num_users:
            raise ParameterError(
                f"Metric has {len(self.qos)} QoS thresholds for"
                f" {num_users} users"
            )
        return [float(item) for item in self.qos]

    def circuit_power(self, tx_antennas: int) -> float:
        return tx_antennas * self.p_dyn + self.p_sta

    def value(
        self,
        totals: Sequence[float],
        transmit_power: float,
        tx_antennas: int,
    ) -> float:
        """Metric on per-user totals, QoS thresholds not considered."""
        totals = [float(item) for item in totals]
        if self.kind == WSR:
            weights = self.weight_vector(len(totals))
            return sum(w * r for w, r in zip(weights, totals))
        if self.kind == MMF:
            return min(totals)
        denominator = (
            transmit_power / self.eta + self.circuit_power(tx_antennas)
        )
        return sum(totals) / denominator

    def qos_satisfied(self, totals: Sequence[float]) -> bool:
        thresholds = self.qos_vector(len(totals))
        if thresholds is None:
            return True
        return all(
            total >= threshold - QOS_TOLERANCE
            for total, threshold in zip(totals, thresholds)
        )
