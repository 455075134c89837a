# relaytherm/models.py
"""Numeric domain types shared by the services.

Arrays stored on frozen types are made read-only so instances can be shared
between workers without copying.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .core.errors import ConfigurationError


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --- Enum Classes ---
class Threshold(str, enum.Enum):
    at_alpha = "AtAlpha"
    at_beta = "AtBeta"


class SectionPlane(str, enum.Enum):
    alpha = "Alpha"
    beta = "Beta"


class BifurcationKind(str, enum.Enum):
    s0 = "S0"
    s1_graze_valid = "S1_graze_valid"
    s2_graze_invalid = "S2_graze_invalid"
    s3_fold = "S3_fold"
    mixed = "Mixed"


class StabilityClass(str, enum.Enum):
    stable = "Stable"
    unstable = "Unstable"
    saddle = "Saddle"
    marginal = "Marginal"


class SmallSPrediction(str, enum.Enum):
    predicts_stable = "predicts_stable"
    predicts_unstable = "predicts_unstable"
    indeterminate = "indeterminate"


# --- spectral_model ---
@dataclass(frozen=True, eq=False)
class SpectralSystem:
    lambdas: np.ndarray
    m_coeffs: np.ndarray
    k_coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lambdas", _frozen_array(self.lambdas))
        object.__setattr__(self, "m_coeffs", _frozen_array(self.m_coeffs))
        object.__setattr__(self, "k_coeffs", _frozen_array(self.k_coeffs))
        if not (self.lambdas.ndim == self.m_coeffs.ndim == self.k_coeffs.ndim == 1):
            raise ConfigurationError("coefficient sequences must be one-dimensional")
        if not (self.lambdas.size == self.m_coeffs.size == self.k_coeffs.size):
            raise ConfigurationError("lambdas, m and k must have equal length")
        idx = np.arange(self.lambdas.size)
        guiding = idx[(idx == 0) | (self.m_coeffs != 0.0)]
        object.__setattr__(self, "guiding_indices", _frozen_array(guiding, dtype=int))
        object.__setattr__(self, "guided_indices", _frozen_array(idx[(idx > 0) & (self.m_coeffs == 0.0)], dtype=int))
        # J: guiding modes with j >= 1, the coordinates of the reduced section map
        object.__setattr__(self, "sensor_indices", _frozen_array(guiding[guiding > 0], dtype=int))

    @property
    def n_modes(self) -> int:
        return int(self.lambdas.size)

    @property
    def m0k0(self) -> float:
        return float(self.m_coeffs[0] * self.k_coeffs[0])

    @property
    def n_sensor_modes(self) -> int:
        """N = |J|, the dimension of the reduced Poincare map."""
        return int(self.sensor_indices.size)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: Tuple[str, ...]
    M: float
    kappa: float
    weighted_m_norm_sq: float
    weighted_k_sum: float


# --- hysteresis ---
@dataclass(frozen=True)
class RelayState:
    alpha: float
    beta: float
    output: int
    last_switch_time: Optional[float] = None
    last_event_time: Optional[float] = None
    history: Tuple[Tuple[float, int], ...] = ()


# --- dynamics ---
@dataclass(frozen=True, eq=False)
class ModeVector:
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "time", float(self.time))

    def __len__(self) -> int:
        return int(self.values.size)

    def with_values(self, values) -> "ModeVector":
        return ModeVector(values, self.time)


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    threshold: Threshold
    rate: float
    grazing: bool = False


@dataclass(frozen=True)
class Segment:
    start_time: float
    end_time: float
    output: int
    start: ModeVector


@dataclass
class Trajectory:
    segments: List[Segment]
    events: List[SwitchEvent]
    terminal: ModeVector
    alpha: float
    beta: float

    @property
    def switch_times(self) -> List[float]:
        return [e.time for e in self.events]

    @property
    def relay_history(self) -> List[int]:
        return [seg.output for seg in self.segments]


@dataclass(frozen=True)
class Decomposition:
    guiding: np.ndarray
    guided: np.ndarray
    guiding_norm: float
    guided_norm: float


# --- periodic ---
@dataclass(frozen=True)
class CrossingCheck:
    valid: bool
    margin: float
    tau_set: Tuple[float, ...]
    grazing: bool
    endpoint_rate: float


@dataclass(frozen=True)
class FRoot:
    s: float
    F_prime: float


@dataclass(frozen=True)
class PeriodicSolution:
    s: float
    psi: ModeVector
    valid: bool
    F_value: float
    F_prime: float
    min_H_margin: float
    grazing: bool
    alpha: float
    beta: float
    tau_set: Tuple[float, ...] = ()

    @property
    def period(self) -> float:
        return 2.0 * self.s


@dataclass
class VerificationReport:
    passed: bool
    first_switch: Optional[float]
    second_switch: Optional[float]
    return_error: Optional[float]
    symmetry_error: Optional[float]
    mismatches: List[str] = field(default_factory=list)


# --- bifurcation ---
@dataclass(frozen=True)
class BifurcationPoint:
    s: float
    gap: float
    kind: BifurcationKind
    detail: str = ""


@dataclass(frozen=True)
class DiagramRow:
    s: float
    F: float
    F_prime: float
    valid: bool
    grazing: bool


@dataclass(frozen=True)
class SolutionCount:
    gap: float
    n_valid: int
    n_ghost: int


# --- stability ---
@dataclass(frozen=True, eq=False)
class StabilityReport:
    s: float
    Q: float
    A: np.ndarray
    mus: np.ndarray
    classification: StabilityClass
    det_identity_residual: float

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.mus))) if self.mus.size else 0.0


@dataclass(frozen=True)
class SmallSCriteria:
    prediction: SmallSPrediction
    trace_sum: float
    M: float
    L: Optional[float] = None
    J2: Optional[float] = None


@dataclass(frozen=True)
class ThresholdSweep:
    s_values: Tuple[float, ...]
    crossings: Tuple[float, ...]
    extrapolated: float


# --- poincare ---
@dataclass(frozen=True)
class SectionPoint:
    v: ModeVector
    plane: SectionPlane


@dataclass(frozen=True)
class SectionHit:
    point: SectionPoint
    elapsed: float
    grazing: bool = False


@dataclass
class RateMeasurement:
    observed_factor: float
    predicted_factor: float
    distances: List[float]
    seed: int
    diverged: bool
    insufficient_data: bool = False
