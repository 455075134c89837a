# relaytherm/schemas.py
import math
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import TOLERANCE_FIELDS
from .models import (
    BifurcationKind,
    BifurcationPoint,
    DiagramRow,
    PeriodicSolution,
    RateMeasurement,
    SmallSCriteria,
    SmallSPrediction,
    SolutionCount,
    StabilityClass,
    StabilityReport,
    Trajectory,
    VerificationReport,
)


# --- Base Schemas ---
class BaseSchema(BaseModel):
    model_config = ConfigDict(from_attributes=True, extra="forbid")


# --- System descriptor ---
class RodDescriptor(BaseSchema):
    n_modes: int = Field(..., ge=1, description="Number of retained cosine modes.")
    m: Dict[int, float] = Field(default_factory=dict, description="Sensor coefficients by mode index; others are zero.")


class SystemDescriptor(BaseSchema):
    lambdas: Optional[List[float]] = Field(None, description="Eigenvalues, lambda_0 = 0 first.")
    m: Optional[List[float]] = Field(None, description="Sensor coefficients m_j.")
    k: Optional[List[float]] = Field(None, description="Actuator coefficients K_j.")
    rod: Optional[RodDescriptor] = Field(None, description="Shorthand for the Neumann rod model.")

    @model_validator(mode="after")
    def exactly_one_form(self):
        explicit = [self.lambdas is not None, self.m is not None, self.k is not None]
        if self.rod is not None and any(explicit):
            raise ValueError("give either 'rod' or explicit 'lambdas'/'m'/'k', not both")
        if self.rod is None:
            missing = [name for name, given in zip(("lambdas", "m", "k"), explicit) if not given]
            if missing:
                raise ValueError(f"system descriptor missing field(s): {', '.join(missing)}")
            if not len(self.lambdas) == len(self.m) == len(self.k):
                raise ValueError("lambdas, m and k must have equal length")
        return self

    def as_dict(self) -> dict:
        return self.model_dump(exclude_none=True)


# --- Run configuration ---
class RunConfig(BaseSchema):
    system: SystemDescriptor
    alpha: float = Field(0.0, description="Lower threshold; the relay switches to +1 on reaching it.")
    beta: float = Field(..., description="Upper threshold; the relay switches to -1 on reaching it.")

    horizon: float = Field(10.0, gt=0, description="Simulation length.")
    output_stride: float = Field(0.01, gt=0, description="Sampling stride of trajectory CSV rows.")
    initial: Optional[List[float]] = Field(None, description="Initial mode vector; default lifts zero modes onto alpha.")

    s_min: float = Field(0.01, gt=0)
    s_max: Optional[float] = Field(None, gt=0, description="Largest half-period searched; default is a guaranteed bound.")
    n_points: int = Field(400, ge=2, description="Rows of the bifurcation diagram.")
    gap_grid: Optional[List[float]] = Field(None, description="Gaps at which solutions are counted.")

    delta0: float = Field(1e-6, gt=0, description="Initial perturbation size for rate measurement.")
    n_periods: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)

    tolerances: Dict[str, float] = Field(default_factory=dict, description="Overrides of Settings tolerance fields.")
    workers: Optional[int] = Field(None, ge=1)
    out_dir: Optional[str] = None

    @model_validator(mode="after")
    def thresholds_ordered(self):
        if not self.alpha < self.beta:
            raise ValueError(f"alpha must be below beta (alpha={self.alpha}, beta={self.beta})")
        if self.s_max is not None and self.s_max <= self.s_min:
            raise ValueError("s_max must exceed s_min")
        return self

    @field_validator("tolerances")
    @classmethod
    def tolerances_known_and_positive(cls, v):
        unknown = sorted(set(v) - set(TOLERANCE_FIELDS))
        if unknown:
            raise ValueError(f"not a tolerance setting: {', '.join(unknown)}")
        for name, value in v.items():
            if not value > 0:
                raise ValueError(f"tolerance {name} must be positive")
        return v

    @property
    def gap(self) -> float:
        return self.beta - self.alpha


# --- Records ---
class ComplexValue(BaseSchema):
    re: float
    im: float


class TrajectorySummary(BaseSchema):
    n_modes: int
    switch_times: List[float]
    thresholds: List[str]
    grazing: List[bool]
    relay_history: List[int]
    terminal: List[float]
    terminal_time: float

    @classmethod
    def from_model(cls, trajectory: Trajectory) -> "TrajectorySummary":
        return cls(
            n_modes=len(trajectory.terminal),
            switch_times=trajectory.switch_times,
            thresholds=[e.threshold.value for e in trajectory.events],
            grazing=[e.grazing for e in trajectory.events],
            relay_history=trajectory.relay_history,
            terminal=trajectory.terminal.values.tolist(),
            terminal_time=trajectory.terminal.time,
        )


class VerificationRecord(BaseSchema):
    passed: bool
    first_switch: Optional[float] = None
    second_switch: Optional[float] = None
    return_error: Optional[float] = None
    symmetry_error: Optional[float] = None
    mismatches: List[str] = Field(default_factory=list)

    @classmethod
    def from_model(cls, report: VerificationReport) -> "VerificationRecord":
        return cls.model_validate(report)


class StabilityRecord(BaseSchema):
    s: float
    Q: float
    A: List[List[float]] = Field(..., description="Row-major linearization matrix.")
    mus: List[ComplexValue]
    classification: StabilityClass
    det_residual: float
    spectral_radius: float

    @classmethod
    def from_model(cls, report: StabilityReport) -> "StabilityRecord":
        return cls(
            s=report.s,
            Q=report.Q,
            A=report.A.tolist(),
            mus=[ComplexValue(re=float(mu.real), im=float(mu.imag)) for mu in report.mus],
            classification=report.classification,
            det_residual=report.det_identity_residual,
            spectral_radius=report.spectral_radius,
        )


class PeriodicSolutionRecord(BaseSchema):
    s: float
    T: float
    valid: bool
    grazing: bool
    F_value: float
    F_prime: float
    min_H_margin: float
    psi: List[float]
    tau: List[float] = Field(default_factory=list, description="Interior roots of H(., s).")
    near_bifurcation: bool = False
    verification: Optional[VerificationRecord] = None
    stability: Optional[StabilityRecord] = None
    stability_error: Optional[str] = None

    @classmethod
    def from_model(cls, sol: PeriodicSolution, **extra) -> "PeriodicSolutionRecord":
        return cls(
            s=sol.s,
            T=sol.period,
            valid=sol.valid,
            grazing=sol.grazing,
            F_value=sol.F_value,
            F_prime=sol.F_prime,
            min_H_margin=sol.min_H_margin,
            psi=sol.psi.values.tolist(),
            tau=list(sol.tau_set),
            **extra,
        )


class DiagramRowRecord(BaseSchema):
    s: float
    F: float
    Fprime: float
    valid: bool
    grazing: bool

    @classmethod
    def from_model(cls, row: DiagramRow) -> "DiagramRowRecord":
        return cls(s=row.s, F=row.F, Fprime=row.F_prime, valid=row.valid, grazing=row.grazing)


class BifurcationPointRecord(BaseSchema):
    s: float
    gap: float
    kind: BifurcationKind
    detail: str = ""

    @classmethod
    def from_model(cls, point: BifurcationPoint) -> "BifurcationPointRecord":
        return cls.model_validate(point)


class SmallSRecord(BaseSchema):
    prediction: SmallSPrediction
    trace_sum: float
    M: float
    L: Optional[float] = None
    J2: Optional[float] = None

    @classmethod
    def from_model(cls, criteria: SmallSCriteria) -> "SmallSRecord":
        return cls.model_validate(criteria)


class RateRecord(BaseSchema):
    s: float
    observed_factor: float
    predicted_factor: float
    relative_error: float
    diverged: bool
    insufficient_data: bool = False
    seed: int
    distances: List[float]

    @classmethod
    def from_model(cls, s: float, rate: RateMeasurement) -> "RateRecord":
        predicted = rate.predicted_factor
        rel = abs(rate.observed_factor - predicted) / predicted if predicted > 0 else float(rate.observed_factor != 0.0)
        if rate.insufficient_data:
            rel = math.nan
        return cls(
            s=s,
            observed_factor=rate.observed_factor,
            predicted_factor=predicted,
            relative_error=rel,
            diverged=rate.diverged,
            insufficient_data=rate.insufficient_data,
            seed=rate.seed,
            distances=list(rate.distances),
        )


class AcceptanceRecord(BaseSchema):
    name: str
    passed: bool
    measured: Dict[str, float] = Field(default_factory=dict)
    expected: Dict[str, float] = Field(default_factory=dict)
    detail: str = ""


class SolutionCountRecord(BaseSchema):
    gap: float
    n_valid: int
    n_ghost: int

    @classmethod
    def from_model(cls, count: SolutionCount) -> "SolutionCountRecord":
        return cls.model_validate(count)


# --- API responses ---
class SimulateResponse(BaseSchema):
    config_hash: str
    summary: TrajectorySummary


class PeriodicResponse(BaseSchema):
    config_hash: str
    n_valid: int
    n_ghost: int
    solutions: List[PeriodicSolutionRecord]


class BifurcationResponse(BaseSchema):
    config_hash: str
    rows: List[DiagramRowRecord]
    points: List[BifurcationPointRecord]
    sigma: List[float]
    counts: List[SolutionCountRecord] = Field(default_factory=list)


class StabilityResponse(BaseSchema):
    config_hash: str
    solutions: List[PeriodicSolutionRecord]
    small_s: SmallSRecord


class HealthResponse(BaseSchema):
    status: str
    version: str
    environment: str
