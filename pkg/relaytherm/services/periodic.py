# relaytherm/services/periodic.py
"""Closed-form construction of symmetric periodic solutions with two switchings per period.

A half-period s is a candidate iff F(s) = beta - alpha; the candidate is a true
periodic solution iff H(t, s) < 0 for every t in (0, s), i.e. the mean
temperature does not reach beta before the intended switching moment.
"""
import math
from typing import List, Optional, Sequence

import numpy as np
import structlog
from scipy.optimize import brentq, minimize_scalar

from ..config import setting_or
from ..core.errors import ConfigurationError, HypothesisViolated
from ..models import CrossingCheck, FRoot, ModeVector, PeriodicSolution, SpectralSystem, VerificationReport
from . import dynamics

logger = structlog.get_logger(__name__)

NEAR_TANGENCY = 1e-6
MAX_SCAN_POINTS = 200_000


def _sensor_terms(system: SpectralSystem):
    J = system.sensor_indices
    return system.m_coeffs[J], system.k_coeffs[J], system.lambdas[J]


def char_F(system: SpectralSystem, s):
    """m0 K0 s + sum_J (2 m_j K_j / lambda_j) (1 - e^{-lambda_j s}) / (1 + e^{-lambda_j s}); vectorized over s."""
    m, k, lam = _sensor_terms(system)
    s = np.asarray(s, dtype=float)
    x = -np.multiply.outer(s, lam)
    ratio = -np.expm1(x) / (1.0 + np.exp(x))
    out = system.m0k0 * s + ratio @ (2.0 * m * k / lam)
    return float(out) if out.ndim == 0 else out


def char_F_prime(system: SpectralSystem, s):
    m, k, lam = _sensor_terms(system)
    s = np.asarray(s, dtype=float)
    e = np.exp(-np.multiply.outer(s, lam))
    out = system.m0k0 + (4.0 * e / (1.0 + e) ** 2) @ (m * k)
    return float(out) if out.ndim == 0 else out


def char_H(system: SpectralSystem, t, s: float):
    """m0 K0 (t - s) + sum_J (2 m_j K_j / lambda_j) (e^{-lambda_j s} - e^{-lambda_j t}) / (1 + e^{-lambda_j s})."""
    m, k, lam = _sensor_terms(system)
    t = np.asarray(t, dtype=float)
    xs = -lam * s
    num = np.expm1(xs) - np.expm1(-np.multiply.outer(t, lam))
    out = system.m0k0 * (t - s) + (num / (1.0 + np.exp(xs))) @ (2.0 * m * k / lam)
    return float(out) if out.ndim == 0 else out


def char_H_t(system: SpectralSystem, t, s: float):
    """dH/dt; at t = s this is Q(s), the mean-temperature rate at the switching moment."""
    m, k, lam = _sensor_terms(system)
    t = np.asarray(t, dtype=float)
    e_t = np.exp(-np.multiply.outer(t, lam))
    out = system.m0k0 + (2.0 * e_t / (1.0 + np.exp(-lam * s))) @ (m * k)
    return float(out) if out.ndim == 0 else out


def symmetric_initial(system: SpectralSystem, alpha: float, s: float) -> ModeVector:
    if not s > 0:
        raise ConfigurationError(f"half-period must be positive, got {s}")
    lam, k = system.lambdas[1:], system.k_coeffs[1:]
    psi = np.empty(system.n_modes)
    x = -lam * s
    psi[1:] = (k / lam) * np.expm1(x) / (1.0 + np.exp(x))
    J = system.sensor_indices
    psi[0] = (alpha - float(np.dot(system.m_coeffs[J], psi[J]))) / system.m_coeffs[0]
    return ModeVector(psi)


def large_root_bound(system: SpectralSystem, gap: float) -> float:
    """An s with F(s) >= gap guaranteed, from F(s) >= m0 K0 s - sum |2 m_j K_j / lambda_j|."""
    m, k, lam = _sensor_terms(system)
    bound = (gap + float(np.sum(np.abs(2.0 * m * k / lam)))) / system.m0k0
    # strictly past the last root, so it is bracketed by the scan
    return bound * (1.0 + 1e-6)


def _scan_grid(system: SpectralSystem, gap: float, s_max: float) -> np.ndarray:
    step = min(gap / (8.0 * system.m0k0), 1e-3 * s_max)
    n = min(int(math.ceil(s_max / step)), MAX_SCAN_POINTS)
    uniform = np.linspace(0.0, s_max, n + 1)
    geometric = np.geomspace(1e-9 * s_max, s_max, 256)
    return np.unique(np.concatenate([uniform, geometric]))


def find_F_roots(system: SpectralSystem, gap: float, s_max: float, *, tol: Optional[float] = None) -> List[FRoot]:
    if not gap > 0:
        raise ConfigurationError(f"threshold gap must be positive, got {gap}")
    if not s_max > 0:
        raise ConfigurationError(f"s_max must be positive, got {s_max}")
    tol = setting_or(tol, "construction_tol")

    def G(s):
        return char_F(system, s) - gap

    grid = _scan_grid(system, gap, s_max)
    values = char_F(system, grid) - gap
    roots: List[float] = []

    for i in range(values.size - 1):
        a, b = values[i], values[i + 1]
        if b == 0.0:
            roots.append(float(grid[i + 1]))
        elif a != 0.0 and (a < 0.0) != (b < 0.0):
            roots.append(brentq(G, grid[i], grid[i + 1], xtol=tol))

    # near-tangencies: |F - gap| has a small local minimum without a sign change
    for i in range(1, values.size - 1):
        a, c, b = values[i - 1], values[i], values[i + 1]
        if abs(c) >= NEAR_TANGENCY or abs(c) > abs(a) or abs(c) > abs(b):
            continue
        if (a < 0.0) != (c < 0.0) or (c < 0.0) != (b < 0.0):
            continue
        lo, hi = grid[i - 1], grid[i + 1]
        d_lo, d_hi = char_F_prime(system, lo), char_F_prime(system, hi)
        if (d_lo < 0.0) == (d_hi < 0.0):
            continue
        s_ext = brentq(lambda s: char_F_prime(system, s), lo, hi, xtol=tol)
        g_ext = G(s_ext)
        if abs(g_ext) <= tol * max(1.0, gap):
            roots.append(s_ext)
        elif (g_ext < 0.0) != (c < 0.0):
            roots.append(brentq(G, lo, s_ext, xtol=tol))
            roots.append(brentq(G, s_ext, hi, xtol=tol))

    if char_F(system, s_max) < gap:
        logger.warning("s_max_too_small", s_max=s_max, gap=gap, bound=large_root_bound(system, gap))

    roots.sort()
    unique: List[float] = []
    for r in roots:
        if r > 0.0 and (not unique or r - unique[-1] > 10.0 * tol):
            unique.append(r)
    return [FRoot(s=r, F_prime=char_F_prime(system, r)) for r in unique]


def _refine_peak(system: SpectralSystem, s: float, lo: float, hi: float):
    d_lo, d_hi = char_H_t(system, lo, s), char_H_t(system, hi, s)
    if d_lo > 0.0 and d_hi < 0.0:
        t_peak = brentq(lambda t: char_H_t(system, t, s), lo, hi, xtol=1e-14 * max(1.0, s))
    else:
        res = minimize_scalar(
            lambda t: -char_H(system, t, s), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13 * max(1.0, s)}
        )
        t_peak = float(res.x)
    return t_peak, char_H(system, t_peak, s)


def first_crossing_check(
    system: SpectralSystem,
    s: float,
    *,
    n_grid: Optional[int] = None,
    tangency_tol: float = 1e-10,
    graze_tol: Optional[float] = None,
) -> CrossingCheck:
    """Locate the interior roots tau(s) of H(., s) on (0, s).

    The endpoint t = s is always a root; its side is decided by Q(s) = H_t(s, s):
    Q < 0 means H is positive just before s, so an interior root exists there.
    Interior local maxima that touch zero count as (grazing) roots.
    """
    n_grid = setting_or(n_grid, "h_grid_points")
    graze_tol = setting_or(graze_tol, "graze_tol")

    t = np.linspace(0.0, s, n_grid)
    hv = char_H(system, t, s)
    Q = char_H_t(system, s, s)
    dt = t[1] - t[0]

    peaks = []
    for i in range(1, n_grid - 1):
        if hv[i] >= hv[i - 1] and hv[i] >= hv[i + 1]:
            peaks.append(_refine_peak(system, s, t[i - 1], t[i + 1]) + (i,))
    margin = float(np.max(hv[1:-1])) if n_grid > 2 else -math.inf
    if peaks:
        margin = max(margin, max(p[1] for p in peaks))

    if char_F(system, s) <= 0.0:
        return CrossingCheck(valid=False, margin=margin, tau_set=(), grazing=False, endpoint_rate=Q)

    def H(x):
        return char_H(system, x, s)

    tau: List[float] = []
    tangent_points = [p[0] for p in peaks if abs(p[1]) <= tangency_tol]
    grazing = bool(tangent_points)
    tau.extend(tangent_points)

    def near_tangency(x: float) -> bool:
        return any(abs(x - tp) <= dt for tp in tangent_points)

    for i in range(n_grid - 2):
        a, b = hv[i], hv[i + 1]
        if b == 0.0:
            root = float(t[i + 1])
        elif a != 0.0 and (a < 0.0) != (b < 0.0):
            root = brentq(H, t[i], t[i + 1], xtol=1e-14 * max(1.0, s))
        else:
            continue
        if not near_tangency(root):
            tau.append(root)

    for t_peak, h_peak, i in peaks:
        # a positive excursion narrower than the grid spacing
        if h_peak > tangency_tol and hv[i - 1] < 0.0 and hv[i] < 0.0 and hv[i + 1] < 0.0:
            tau.append(brentq(H, t[i - 1], t_peak))
            tau.append(brentq(H, t_peak, t[i + 1]))

    if abs(Q) <= graze_tol:
        grazing = True
    elif Q < 0.0 and hv[-2] < 0.0:
        def G(x):
            return Q if x >= s else H(x) / (x - s)

        tau.append(brentq(G, t[-2], s))

    tau = sorted(set(float(x) for x in tau))
    return CrossingCheck(valid=not tau, margin=margin, tau_set=tuple(tau), grazing=grazing, endpoint_rate=Q)


def enumerate_periodic(
    system: SpectralSystem, alpha: float, beta: float, s_max: Optional[float] = None
) -> List[PeriodicSolution]:
    if not beta > alpha:
        raise ConfigurationError(f"thresholds must satisfy alpha < beta, got alpha={alpha}, beta={beta}")
    gap = beta - alpha
    if s_max is None:
        s_max = large_root_bound(system, gap)

    solutions = []
    for root in find_F_roots(system, gap, s_max):
        check = first_crossing_check(system, root.s)
        solutions.append(
            PeriodicSolution(
                s=root.s,
                psi=symmetric_initial(system, alpha, root.s),
                valid=check.valid,
                F_value=char_F(system, root.s),
                F_prime=root.F_prime,
                min_H_margin=check.margin,
                grazing=check.grazing,
                alpha=float(alpha),
                beta=float(beta),
                tau_set=check.tau_set,
            )
        )
    logger.info(
        "periodic_solutions_enumerated",
        gap=gap,
        n_candidates=len(solutions),
        n_valid=sum(1 for sol in solutions if sol.valid),
    )
    return solutions


def verify_by_simulation(system: SpectralSystem, sol: PeriodicSolution, tol: Optional[float] = None) -> VerificationReport:
    tol = setting_or(tol, "verify_tol")
    s = sol.s
    horizon = 2.0 * s + max(1e-6 * s, 1e-9)
    trajectory = dynamics.simulate(system, sol.psi, sol.alpha, sol.beta, horizon)
    times = [t - sol.psi.time for t in trajectory.switch_times]
    mismatches: List[str] = []

    first = times[0] if times else None
    second = times[1] if len(times) > 1 else None
    return_error = symmetry_error = None

    if first is None or abs(first - s) > tol:
        mismatches.append(f"first switch at {first}, expected {s}")
    if second is None or abs(second - 2.0 * s) > tol:
        mismatches.append(f"second switch at {second}, expected {2.0 * s}")
    if len(trajectory.segments) > 1:
        half = trajectory.segments[1].start.values
        symmetry_error = float(np.max(np.abs(half[1:] + sol.psi.values[1:]))) if system.n_modes > 1 else 0.0
        if symmetry_error > tol:
            mismatches.append(f"half-period state deviates from -psi by {symmetry_error:.3g}")
    if len(trajectory.segments) > 2:
        back = trajectory.segments[2].start.values
        return_error = dynamics.weighted_norm(system, back - sol.psi.values)
        if return_error > tol:
            mismatches.append(f"return to psi off by {return_error:.3g}")

    if mismatches:
        logger.warning("periodic_verification_failed", s=s, mismatches=mismatches)
    return VerificationReport(
        passed=not mismatches,
        first_switch=first,
        second_switch=second,
        return_error=return_error,
        symmetry_error=symmetry_error,
        mismatches=mismatches,
    )


def small_gap_branch(system: SpectralSystem, gaps: Sequence[float]) -> np.ndarray:
    """Half-period of the solution born at s = 0 for each gap; requires M = sum m_j K_j > 0."""
    M = float(np.dot(system.m_coeffs, system.k_coeffs))
    if not M > 0:
        raise HypothesisViolated(f"small-gap branch needs M > 0, got M={M}")
    out = []
    for gap in gaps:
        roots = find_F_roots(system, gap, large_root_bound(system, gap))
        out.append(roots[0].s if roots else math.nan)
    return np.asarray(out)
