# relaytherm/services/poincare.py
"""Numerical Poincare maps between the threshold planes and checks of the linearization.

P_alpha runs the relay at +1 from the plane {vhat = alpha} until vhat = beta,
P_beta runs it at -1 back to alpha, and P = P_beta o P_alpha. The reduced map
Pi = E o P o R_alpha acts on the sensed coordinates phi_J; R_alpha lifts them
onto the alpha plane by solving for v_0 and E drops everything else.
"""
import math
from typing import List, Optional, Tuple

import numpy as np
import structlog

from ..config import setting_or
from ..core.errors import DetectionFailure, HypothesisViolated, NonDifferentiablePoint
from ..models import ModeVector, PeriodicSolution, RateMeasurement, RelayState, SectionHit, SectionPlane, SectionPoint, SpectralSystem
from . import dynamics, stability

logger = structlog.get_logger(__name__)

JUMP_FLOOR = 100.0
RESOLVABLE_ULPS = 16.0


def _leading_above(values: List[float], floor: float) -> List[float]:
    out: List[float] = []
    for d in values:
        if not d > floor:
            break
        out.append(d)
    return out


def _half_map(system: SpectralSystem, v: ModeVector, h: int, alpha: float, beta: float) -> SectionHit:
    level = beta if h == 1 else alpha
    vhat = dynamics.mean_temperature(system, v)
    flow = dynamics.SegmentFlow(system, v, h)
    # vhat(t) moves towards `level` at net speed m0 K0 once the decaying terms are spent
    bound = (abs(level - vhat) + float(np.sum(np.abs(flow.weights)))) / system.m0k0
    t_max = v.time + bound * (1.0 + 1e-9) + 1e-9

    relay = RelayState(alpha=alpha, beta=beta, output=h, last_event_time=v.time)
    event = dynamics.next_switching(system, v, relay, t_max)
    if event is None:
        raise DetectionFailure(f"no crossing of {level} within the guaranteed bound {bound:.6g}")
    state = dynamics.advance_modes(system, v, h, event.time - v.time)
    plane = SectionPlane.beta if h == 1 else SectionPlane.alpha
    return SectionHit(
        point=SectionPoint(v=ModeVector(state.values, event.time), plane=plane),
        elapsed=event.time - v.time,
        grazing=event.grazing,
    )


def map_P_alpha(system: SpectralSystem, p: SectionPoint, alpha: float, beta: float) -> SectionHit:
    if dynamics.mean_temperature(system, p.v) >= beta:
        raise HypothesisViolated("P_alpha needs a start point below beta")
    return _half_map(system, p.v, 1, alpha, beta)


def map_P_beta(system: SpectralSystem, p: SectionPoint, alpha: float, beta: float) -> SectionHit:
    if dynamics.mean_temperature(system, p.v) <= alpha:
        raise HypothesisViolated("P_beta needs a start point above alpha")
    return _half_map(system, p.v, -1, alpha, beta)


def map_P(system: SpectralSystem, p: SectionPoint, alpha: float, beta: float) -> Tuple[SectionHit, SectionHit]:
    """Full period; returns both half-map hits, the second one lying on the alpha plane."""
    first = map_P_alpha(system, p, alpha, beta)
    second = map_P_beta(system, first.point, alpha, beta)
    return first, second


def lift(system: SpectralSystem, phi: np.ndarray, alpha: float, base: ModeVector) -> SectionPoint:
    """R_alpha: put phi on the sensed coordinates of `base` and solve v_0 for vhat = alpha."""
    values = np.array(base.values, dtype=float)
    J = system.sensor_indices
    values[J] = phi
    values[0] = (alpha - float(np.dot(system.m_coeffs[J], phi))) / system.m_coeffs[0]
    return SectionPoint(v=ModeVector(values, base.time), plane=SectionPlane.alpha)


def reduced_map(system: SpectralSystem, phi: np.ndarray, sol: PeriodicSolution):
    first, second = map_P(system, lift(system, phi, sol.alpha, sol.psi), sol.alpha, sol.beta)
    J = system.sensor_indices
    return second.point.v.values[J], (first.elapsed, second.elapsed), first.grazing or second.grazing


def _kinked(d_plus: float, d_minus: float, eps: float) -> bool:
    return abs(d_plus - d_minus) > 0.5 * max(abs(d_plus), abs(d_minus)) + JUMP_FLOOR * eps


def guiding_jacobian_fd(system: SpectralSystem, sol: PeriodicSolution, eps: Optional[float] = None) -> np.ndarray:
    """Central-difference Jacobian of Pi at psi_J; compare with matrix_A(s) squared."""
    if not sol.valid:
        raise HypothesisViolated(f"solution at s={sol.s} is not valid")
    _, Q = stability.q_functions(system, sol.s)
    if not Q > 0:
        raise HypothesisViolated(f"Q({sol.s}) = {Q:.3g} <= 0")

    J = system.sensor_indices
    N = J.size
    if N == 0:
        return np.zeros((0, 0))
    if eps is None:
        eps = setting_or(None, "fd_eps") * max(1.0, dynamics.weighted_norm(system, sol.psi.values))

    phi0 = sol.psi.values[J].copy()
    _, times0, _ = reduced_map(system, phi0, sol)
    jac = np.empty((N, N))
    for k in range(N):
        step = np.zeros(N)
        step[k] = eps
        plus, times_plus, graze_plus = reduced_map(system, phi0 + step, sol)
        minus, times_minus, graze_minus = reduced_map(system, phi0 - step, sol)
        if graze_plus or graze_minus:
            raise NonDifferentiablePoint(f"grazing switch under perturbation of coordinate {int(J[k])}")
        for t0, tp, tm in zip(times0, times_plus, times_minus):
            if _kinked(tp - t0, t0 - tm, eps):
                raise NonDifferentiablePoint(
                    f"switching structure changes under perturbation of coordinate {int(J[k])}"
                )
        jac[:, k] = (plus - minus) / (2.0 * eps)
    return jac


def measure_rate(
    system: SpectralSystem,
    sol: PeriodicSolution,
    delta0: float = 1e-6,
    n_periods: int = 20,
    seed: int = 0,
    *,
    transient: int = 2,
) -> RateMeasurement:
    """Per-period contraction of the distance to psi at even switchings, fitted in log space.

    Points that sink below the round-off floor are dropped before fitting, and
    the transient is shortened when too few points remain. With fewer than two
    points above the floor, the factor is the last ratio of distances still above
    a few ulps; failing that it is NaN with `insufficient_data` set.
    """
    if not sol.valid:
        raise HypothesisViolated(f"solution at s={sol.s} is not valid")
    _, Q = stability.q_functions(system, sol.s)
    if not Q > 0:
        raise HypothesisViolated(f"Q({sol.s}) = {Q:.3g} <= 0")

    rng = np.random.default_rng(seed)
    direction = np.zeros(system.n_modes)
    direction[1:] = rng.standard_normal(system.n_modes - 1)
    norm = dynamics.weighted_norm(system, direction)
    psi = sol.psi.values
    if norm > 0.0:
        direction *= delta0 / norm

    J = system.sensor_indices
    start = psi + direction
    start[0] = (sol.alpha - float(np.dot(system.m_coeffs[J], start[J]))) / system.m_coeffs[0]
    point = SectionPoint(v=ModeVector(start), plane=SectionPlane.alpha)

    scale = max(1.0, dynamics.weighted_norm(system, psi))
    floor = 1e-13 * scale
    distances: List[float] = [dynamics.weighted_norm(system, start - psi)]
    diverged = False
    for _ in range(n_periods):
        _, second = map_P(system, point, sol.alpha, sol.beta)
        point = SectionPoint(v=ModeVector(second.point.v.values), plane=SectionPlane.alpha)
        d = dynamics.weighted_norm(system, point.v.values - psi)
        distances.append(d)
        if d > 1e-2 * scale:
            diverged = True
            break

    usable = _leading_above(distances, floor)
    insufficient = False
    if len(usable) >= 2:
        skip = max(0, min(transient, len(usable) - 2))
        fitted = np.log(np.asarray(usable[skip:]))
        slope = np.polyfit(np.arange(fitted.size, dtype=float), fitted, 1)[0]
        observed = float(math.exp(slope))
    else:
        # contraction too fast for the fit: last ratio still above round-off
        resolvable = _leading_above(distances, RESOLVABLE_ULPS * np.finfo(float).eps * scale)
        if len(resolvable) >= 2:
            observed = resolvable[-1] / resolvable[-2]
        else:
            observed = math.nan
            insufficient = True
            logger.warning("rate_not_measurable", s=sol.s, distances=distances[:3])

    rho = stability.spectral_radius(system, sol.s) if J.size else 0.0
    guided = system.guided_indices
    kappa = float(np.min(system.lambdas[guided])) if guided.size else math.inf
    predicted = max(rho ** 2, math.exp(-2.0 * kappa * sol.s))
    if diverged:
        logger.warning("rate_measurement_diverged", s=sol.s, periods=len(distances) - 1)
    logger.info("rate_measured", s=sol.s, observed=observed, predicted=predicted, seed=seed)
    return RateMeasurement(
        observed_factor=observed,
        predicted_factor=predicted,
        distances=distances,
        seed=seed,
        diverged=diverged,
        insufficient_data=insufficient,
    )
