# relaytherm/services/stability.py
"""Linearization of the half-period guiding Poincare map at a symmetric periodic solution.

With E_j = 1 - e^{-lambda_j s}, Q_j = 2 e^{-lambda_j s} / (1 + e^{-lambda_j s}),
Q = m0 K0 + sum m_j K_j Q_j, S_j = K_j Q_j / Q and sigma_j = m_j E_j (j in J):

    A[i][j] = delta_ij (1 - E_i) + S_i sigma_j

The full-period derivative of the reduced map is A @ A.
"""
import math
from typing import Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import brentq

from ..config import setting_or
from ..core.errors import (
    DegenerateLinearization,
    EigenvalueFailure,
    HypothesisViolated,
    InternalConsistencyError,
    NumericalError,
    UsageError,
)
from ..models import (
    PeriodicSolution,
    SmallSCriteria,
    SmallSPrediction,
    SpectralSystem,
    StabilityClass,
    StabilityReport,
    ThresholdSweep,
)
from . import dynamics
from .spectral_model import build_rod_model

logger = structlog.get_logger(__name__)

MAX_EIGEN_DIM = 64
RATE_AGREEMENT_TOL = 1e-8
UNIT_RESIDUAL_FLOOR = 64.0 * float(np.finfo(float).eps)


def q_functions(system: SpectralSystem, s: float) -> Tuple[np.ndarray, float]:
    if not s > 0:
        raise UsageError(f"s must be positive, got {s}")
    J = system.sensor_indices
    e = np.exp(-system.lambdas[J] * s)
    qj = 2.0 * e / (1.0 + e)
    Q = system.m0k0 + float(np.dot(system.m_coeffs[J] * system.k_coeffs[J], qj))
    return qj, Q


def matrix_A(system: SpectralSystem, s: float, *, graze_tol: Optional[float] = None) -> np.ndarray:
    graze_tol = setting_or(graze_tol, "graze_tol")
    qj, Q = q_functions(system, s)
    if abs(Q) <= graze_tol:
        raise DegenerateLinearization(f"Q({s}) = {Q:.3g}: switching is tangential, no linearization")
    J = system.sensor_indices
    lam = system.lambdas[J]
    S = system.k_coeffs[J] * qj / Q
    sigma = system.m_coeffs[J] * -np.expm1(-lam * s)
    return np.diag(np.exp(-lam * s)) + np.outer(S, sigma)


def eigenvalues(A: np.ndarray, *, residual_tol: Optional[float] = None) -> np.ndarray:
    """Eigenvalues sorted by decreasing modulus, each eigenpair residual-checked."""
    residual_tol = setting_or(residual_tol, "eigen_residual_tol")
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError(f"eigenvalues need a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if n > MAX_EIGEN_DIM:
        raise UsageError(f"matrix dimension {n} exceeds {MAX_EIGEN_DIM}")

    try:
        mus, vecs = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueFailure(f"eigenvalue iteration did not converge: {exc}") from exc

    scale = float(np.linalg.norm(A, 2))
    for i in range(n):
        xi = vecs[:, i]
        residual = float(np.linalg.norm(A @ xi - mus[i] * xi)) / max(float(np.linalg.norm(xi)), np.finfo(float).tiny)
        # multipliers are read against the unit circle: below ulp level the residual carries no information
        allowed = max(residual_tol * max(scale, abs(mus[i])), UNIT_RESIDUAL_FLOOR)
        if residual > allowed:
            raise EigenvalueFailure(f"eigenpair {i} residual {residual:.3g} exceeds {allowed:.3g} (||A|| = {scale:.3g})")

    mus = mus.astype(complex)
    order = np.lexsort((-mus.imag, -mus.real, -np.abs(mus)))
    return mus[order]


def det_identity_check(system: SpectralSystem, s: float) -> float:
    """Relative residual of prod(mu_i - 1) = (-1)^N (m0 K0 / Q) prod(E_i)."""
    A = matrix_A(system, s)
    mus = eigenvalues(A)
    _, Q = q_functions(system, s)
    E = -np.expm1(-system.lambdas[system.sensor_indices] * s)
    rhs = (-1.0) ** A.shape[0] * system.m0k0 / Q * float(np.prod(E))
    lhs = complex(np.prod(mus - 1.0))
    return abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny)


def n1_multiplier(system: SpectralSystem, s: float) -> float:
    """Closed-form multiplier 1 - E_1 m0 K0 / Q for a single sensed mode."""
    if system.n_sensor_modes != 1:
        raise UsageError(f"closed-form multiplier needs exactly one sensed mode, got {system.n_sensor_modes}")
    _, Q = q_functions(system, s)
    E1 = -math.expm1(-float(system.lambdas[system.sensor_indices[0]]) * s)
    return 1.0 - E1 * system.m0k0 / Q


def _classify_moduli(mus: np.ndarray, tol: float) -> StabilityClass:
    if mus.size == 0:
        return StabilityClass.stable
    moduli = np.abs(mus)
    rho = float(np.max(moduli))
    if rho < 1.0 - tol:
        return StabilityClass.stable
    if rho > 1.0 + tol:
        return StabilityClass.saddle if float(np.min(moduli)) < 1.0 - tol else StabilityClass.unstable
    return StabilityClass.marginal


def classify(system: SpectralSystem, sol: PeriodicSolution, tol: Optional[float] = None) -> StabilityReport:
    tol = setting_or(tol, "classification_tol")
    s = sol.s
    if not sol.valid:
        raise HypothesisViolated(f"solution at s={s} is not a valid periodic solution")
    _, Q = q_functions(system, s)
    if not Q > 0:
        raise HypothesisViolated(f"Q({s}) = {Q:.3g} <= 0")

    at_switch = dynamics.advance_modes(system, sol.psi, 1, s)
    rate = dynamics.mean_rate(system, at_switch, 1)
    if abs(rate - Q) > RATE_AGREEMENT_TOL * max(1.0, abs(Q)):
        raise InternalConsistencyError(f"Q({s}) = {Q!r} but simulated switching rate is {rate!r}")

    A = matrix_A(system, s)
    mus = eigenvalues(A)
    if A.shape[0] == 1:
        mu1 = n1_multiplier(system, s)
        if abs(mus[0].real - mu1) > 1e-10 * max(1.0, abs(mu1)):
            raise InternalConsistencyError(f"eigen solver gave {mus[0]!r}, closed form {mu1!r}")

    if mus.size:
        closest = float(np.min(np.abs(mus - 1.0)))
        if closest <= 1e-12 * max(float(np.linalg.norm(A, 2)), 1.0):
            logger.warning("multiplier_at_one", s=s, distance=closest)

    residual = det_identity_check(system, s) if mus.size else 0.0
    classification = _classify_moduli(mus, tol)
    logger.info("stability_classified", s=s, Q=Q, classification=classification.value)
    return StabilityReport(s=s, Q=Q, A=A, mus=mus, classification=classification, det_identity_residual=residual)


def spectral_radius(system: SpectralSystem, s: float) -> float:
    mus = eigenvalues(matrix_A(system, s))
    return float(np.max(np.abs(mus))) if mus.size else 0.0


def trace_asymptotics(system: SpectralSystem) -> Optional[Tuple[float, float]]:
    """(L, J^2) of mu ~ 1 - L s / 2 +- s sqrt(L^2 - 4 J^2) / 2 for two sensed modes and M > 0."""
    if system.n_sensor_modes != 2:
        return None
    M = float(np.dot(system.m_coeffs, system.k_coeffs))
    if not M > 0:
        return None
    J = system.sensor_indices
    lam, mk = system.lambdas[J], system.m_coeffs[J] * system.k_coeffs[J]
    L = float(np.dot(M - mk, lam)) / M
    J2 = float(lam[0] * lam[1]) * system.m0k0 / M
    return L, J2


def small_s_criteria(system: SpectralSystem) -> SmallSCriteria:
    M = float(np.dot(system.m_coeffs, system.k_coeffs))
    N = system.n_sensor_modes
    if N == 0:
        return SmallSCriteria(prediction=SmallSPrediction.predicts_stable, trace_sum=0.0, M=M)
    if not M > 0:
        return SmallSCriteria(prediction=SmallSPrediction.indeterminate, trace_sum=math.nan, M=M)

    J = system.sensor_indices
    trace_sum = float(np.dot(M - system.m_coeffs[J] * system.k_coeffs[J], system.lambdas[J]))
    if N == 1:
        prediction = SmallSPrediction.predicts_stable
    elif trace_sum < 0.0:
        prediction = SmallSPrediction.predicts_unstable
    elif N == 2 and trace_sum > 0.0:
        prediction = SmallSPrediction.predicts_stable
    else:
        prediction = SmallSPrediction.indeterminate

    asymptotics = trace_asymptotics(system)
    L, J2 = asymptotics if asymptotics else (None, None)
    return SmallSCriteria(prediction=prediction, trace_sum=trace_sum, M=M, L=L, J2=J2)


def stability_threshold_sweep(
    m1: float = 4.0,
    ratio_bracket: Tuple[float, float] = (0.80, 0.90),
    s_values: Sequence[float] = (0.04, 0.02, 0.01),
    n_modes: int = 5,
) -> ThresholdSweep:
    """Rod with m_1 = m_2 = m1: ratio m0/m1 where the spectral radius crosses 1, extrapolated to s -> 0."""

    def excess(ratio: float, s: float) -> float:
        system = build_rod_model(n_modes, {0: ratio * m1, 1: m1, 2: m1})
        return spectral_radius(system, s) - 1.0

    lo, hi = ratio_bracket
    crossings = []
    for s in s_values:
        f_lo, f_hi = excess(lo, s), excess(hi, s)
        if (f_lo < 0.0) == (f_hi < 0.0):
            raise NumericalError(f"ratio bracket {ratio_bracket} does not contain the stability threshold at s={s}")
        crossings.append(brentq(excess, lo, hi, args=(s,), xtol=1e-12))

    if len(crossings) >= 2:
        extrapolated = float(np.polyfit(np.asarray(s_values, dtype=float), np.asarray(crossings), 1)[1])
    else:
        extrapolated = float(crossings[0])
    logger.info("stability_threshold", crossings=crossings, extrapolated=extrapolated)
    return ThresholdSweep(s_values=tuple(float(s) for s in s_values), crossings=tuple(crossings), extrapolated=extrapolated)
