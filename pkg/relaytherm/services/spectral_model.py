# relaytherm/services/spectral_model.py
"""Truncated spectral system: builders, descriptor loading and validation."""
import math
from typing import Any, Dict, Mapping, Optional

import numpy as np
import structlog

from ..core.errors import ConfigurationError
from ..models import ModeVector, SpectralSystem, ValidationReport

logger = structlog.get_logger(__name__)

SQRT_1_PI = 1.0 / math.sqrt(math.pi)
SQRT_2_PI = math.sqrt(2.0 / math.pi)


def build_rod_model(n_modes: int, m_overrides: Mapping[Any, float]) -> SpectralSystem:
    """Neumann rod on [0, pi] with the actuator at x = pi.

    lambda_j = j**2, K_0 = 1/sqrt(pi), K_j = (-1)**j * sqrt(2/pi). Sensor
    coefficients default to zero except those given in `m_overrides`.
    """
    if n_modes < 1:
        raise ConfigurationError(f"n_modes must be >= 1, got {n_modes}")

    m = np.zeros(n_modes)
    for key, value in m_overrides.items():
        try:
            idx = int(key)
        except (TypeError, ValueError):
            raise ConfigurationError(f"m override index {key!r} is not an integer")
        if idx < 0 or idx >= n_modes:
            raise ConfigurationError(f"m override index {idx} outside 0..{n_modes - 1}")
        m[idx] = float(value)
    if m[0] <= 0.0:
        raise ConfigurationError("m override for index 0 must be positive")

    j = np.arange(n_modes, dtype=float)
    lambdas = j ** 2
    k = np.where(np.arange(n_modes) % 2 == 0, SQRT_2_PI, -SQRT_2_PI)
    k[0] = SQRT_1_PI
    return SpectralSystem(lambdas=lambdas, m_coeffs=m, k_coeffs=k)


def validate(system: SpectralSystem) -> ValidationReport:
    violations = []
    lam, m, k = system.lambdas, system.m_coeffs, system.k_coeffs

    if lam.size == 0:
        violations.append("empty_system")
        return ValidationReport(False, tuple(violations), float("nan"), math.inf, float("nan"), float("nan"))

    finite = bool(np.all(np.isfinite(lam)) and np.all(np.isfinite(m)) and np.all(np.isfinite(k)))
    if not finite:
        violations.append("non_finite_coefficients")
    if lam[0] != 0.0:
        violations.append("lambda0_nonzero")
    if lam.size > 1:
        if np.any(lam[1:] <= 0.0):
            violations.append("lambda_nonpositive")
        if np.any(np.diff(lam) < 0.0):
            violations.append("lambda_not_sorted")
    if m[0] <= 0.0:
        violations.append("m0_nonpositive")
    if k[0] <= 0.0:
        violations.append("k0_nonpositive")

    M = float(np.dot(m, k))
    guided = system.guided_indices
    kappa = float(np.min(lam[guided])) if guided.size else math.inf

    weighted_m = float(np.sum((1.0 + lam) * m ** 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = k[1:] ** 2 / lam[1:] ** 2 + k[1:] ** 2 / lam[1:]
    weighted_k = float(np.sum(tail)) if tail.size else 0.0
    if finite and not (math.isfinite(weighted_m) and math.isfinite(weighted_k)):
        violations.append("weighted_sums_not_finite")

    report = ValidationReport(
        ok=not violations,
        violations=tuple(violations),
        M=M,
        kappa=kappa,
        weighted_m_norm_sq=weighted_m,
        weighted_k_sum=weighted_k,
    )
    if violations:
        logger.warning("system_validation_failed", violations=list(violations))
    return report


def require_valid(system: SpectralSystem) -> SpectralSystem:
    report = validate(system)
    if not report.ok:
        raise ConfigurationError(f"invalid spectral system: {', '.join(report.violations)}")
    return system


def load_system(descriptor: Mapping[str, Any]) -> SpectralSystem:
    """Build a system from `{"lambdas", "m", "k"}` or `{"rod": {"n_modes", "m"}}`."""
    if "rod" in descriptor:
        if any(key in descriptor for key in ("lambdas", "m", "k")):
            raise ConfigurationError("descriptor mixes 'rod' shorthand with explicit coefficients")
        rod = descriptor["rod"] or {}
        if "n_modes" not in rod:
            raise ConfigurationError("rod.n_modes is required")
        system = build_rod_model(int(rod["n_modes"]), rod.get("m", {}) or {})
    else:
        missing = [key for key in ("lambdas", "m", "k") if key not in descriptor]
        if missing:
            raise ConfigurationError(f"system descriptor missing field(s): {', '.join(missing)}")
        lengths = {len(descriptor[key]) for key in ("lambdas", "m", "k")}
        if len(lengths) != 1:
            raise ConfigurationError("lambdas, m and k must have equal length")
        system = SpectralSystem(
            lambdas=np.asarray(descriptor["lambdas"], dtype=float),
            m_coeffs=np.asarray(descriptor["m"], dtype=float),
            k_coeffs=np.asarray(descriptor["k"], dtype=float),
        )
    return require_valid(system)


def system_to_descriptor(system: SpectralSystem) -> Dict[str, Any]:
    return {
        "lambdas": system.lambdas.tolist(),
        "m": system.m_coeffs.tolist(),
        "k": system.k_coeffs.tolist(),
    }


def rod_field(system: SpectralSystem, v: ModeVector, x: Optional[np.ndarray] = None) -> np.ndarray:
    """Temperature profile v(x) = sum_j v_j e_j(x) of a rod model on a grid over [0, pi]."""
    if x is None:
        x = np.linspace(0.0, math.pi, 201)
    x = np.asarray(x, dtype=float)
    j = np.sqrt(system.lambdas)
    basis = SQRT_2_PI * np.cos(np.outer(x, j))
    basis[:, 0] = SQRT_1_PI
    return basis @ v.values
