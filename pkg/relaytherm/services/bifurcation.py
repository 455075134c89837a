# relaytherm/services/bifurcation.py
"""Bifurcation sets over the half-period s and diagram data over s and the gap beta - alpha.

S0: F(s) = 0. S1: valid solution whose switching is tangential (Q(s) = 0).
S2: every interior root of H(., s) is a tangency (a "ghost" is born or dies).
S3: fold, F'(s) = 0 with F(s) > 0.
"""
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import brentq

from ..config import current_settings, setting_or, settings_override
from ..core.errors import ConfigurationError
from ..models import BifurcationKind, BifurcationPoint, DiagramRow, SolutionCount, SpectralSystem
from . import periodic

logger = structlog.get_logger(__name__)

MAX_BISECTIONS = 200


def _with_settings(settings: dict, fn: Callable, item):
    with settings_override(**settings):
        return fn(item)


def pool_map(fn: Callable, items: Iterable, workers: Optional[int] = None) -> list:
    """Order-preserving map, fanned out over processes when workers > 1."""
    workers = setting_or(workers, "workers")
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    fn = partial(_with_settings, current_settings().model_dump(), fn)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def classify_s(system: SpectralSystem, s: float, tol: Optional[float] = None) -> Optional[BifurcationPoint]:
    if not s > 0:
        raise ConfigurationError(f"s must be positive, got {s}")
    tol = setting_or(tol, "bifurcation_tol")

    F = periodic.char_F(system, s)
    if abs(F) <= tol:
        return BifurcationPoint(s=s, gap=F, kind=BifurcationKind.s0, detail="F(s) = 0")
    if F < 0.0:
        return None

    check = periodic.first_crossing_check(system, s)
    Q = check.endpoint_rate
    if not check.tau_set and abs(Q) <= tol:
        return BifurcationPoint(s=s, gap=F, kind=BifurcationKind.s1_graze_valid, detail=f"Q(s) = {Q:.3g}")
    if check.tau_set:
        slopes = [abs(periodic.char_H_t(system, t, s)) for t in check.tau_set]
        if all(slope <= tol for slope in slopes):
            return BifurcationPoint(
                s=s, gap=F, kind=BifurcationKind.s2_graze_invalid,
                detail=f"tangency at t = {', '.join(f'{t:.6g}' for t in check.tau_set)}",
            )
        tangent = [t for t, slope in zip(check.tau_set, slopes) if slope <= tol]
        if tangent:
            # tangential and transversal interior roots together: neither S1 nor S2
            logger.info("mixed_interior_roots", s=s, n_roots=len(slopes))
            transversal = [t for t, slope in zip(check.tau_set, slopes) if slope > tol]
            return BifurcationPoint(
                s=s, gap=F, kind=BifurcationKind.mixed,
                detail=(
                    f"mixed: tangency at t = {', '.join(f'{t:.6g}' for t in tangent)}; "
                    f"transversal at t = {', '.join(f'{t:.6g}' for t in transversal)}"
                ),
            )
    if abs(periodic.char_F_prime(system, s)) <= tol:
        return BifurcationPoint(s=s, gap=F, kind=BifurcationKind.s3_fold, detail="F'(s) = 0")
    return None


def diagram_row(system: SpectralSystem, s: float) -> DiagramRow:
    check = periodic.first_crossing_check(system, s)
    return DiagramRow(
        s=float(s),
        F=periodic.char_F(system, s),
        F_prime=periodic.char_F_prime(system, s),
        valid=check.valid,
        grazing=check.grazing,
    )


def _validity_transition(system: SpectralSystem, lo: float, hi: float, tol: float) -> BifurcationPoint:
    valid_lo = periodic.first_crossing_check(system, lo).valid
    q_lo = periodic.char_H_t(system, lo, lo)
    q_hi = periodic.char_H_t(system, hi, hi)

    if (q_lo < 0.0) != (q_hi < 0.0):
        s = brentq(lambda x: periodic.char_H_t(system, x, x), lo, hi, xtol=1e-14)
        return BifurcationPoint(
            s=s, gap=periodic.char_F(system, s), kind=BifurcationKind.s1_graze_valid,
            detail="switching becomes tangential",
        )

    for _ in range(MAX_BISECTIONS):
        if hi - lo <= 1e-3 * tol * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        if periodic.first_crossing_check(system, mid).valid == valid_lo:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    return BifurcationPoint(
        s=s, gap=periodic.char_F(system, s), kind=BifurcationKind.s2_graze_invalid,
        detail="interior tangency " + ("destroys" if valid_lo else "restores") + " the solution",
    )


def scan_diagram(
    system: SpectralSystem,
    s_min: float,
    s_max: float,
    n_points: int,
    *,
    tol: Optional[float] = None,
    workers: Optional[int] = None,
) -> Tuple[List[DiagramRow], List[BifurcationPoint]]:
    if not 0 < s_min < s_max:
        raise ConfigurationError(f"need 0 < s_min < s_max, got s_min={s_min}, s_max={s_max}")
    if n_points < 2:
        raise ConfigurationError(f"n_points must be >= 2, got {n_points}")
    tol = setting_or(tol, "bifurcation_tol")

    grid = np.geomspace(s_min, s_max, n_points)
    rows: List[DiagramRow] = pool_map(partial(diagram_row, system), grid, workers)
    points: List[BifurcationPoint] = []

    def F(x):
        return periodic.char_F(system, x)

    def F_prime(x):
        return periodic.char_F_prime(system, x)

    for a, b in zip(rows, rows[1:]):
        if (a.F < 0.0) != (b.F < 0.0):
            s = brentq(F, a.s, b.s, xtol=1e-14)
            points.append(BifurcationPoint(s=s, gap=F(s), kind=BifurcationKind.s0, detail="F changes sign"))
        if (a.F_prime < 0.0) != (b.F_prime < 0.0):
            s = brentq(F_prime, a.s, b.s, xtol=1e-14)
            if F(s) > 0.0:
                kind = "maximum" if a.F_prime > 0.0 else "minimum"
                points.append(BifurcationPoint(s=s, gap=F(s), kind=BifurcationKind.s3_fold, detail=f"fold at local {kind}"))
        if a.F > 0.0 and b.F > 0.0 and a.valid != b.valid:
            points.append(_validity_transition(system, a.s, b.s, tol))

    points.sort(key=lambda p: p.s)
    for p in points:
        logger.info("bifurcation_point", kind=p.kind.value, s=p.s, gap=p.gap)
    return rows, points


def sigma_values(points: Sequence[BifurcationPoint]) -> List[float]:
    """Gap values F(s) at S1, S2 and S3 points, where the solution count may change."""
    kinds = {BifurcationKind.s1_graze_valid, BifurcationKind.s2_graze_invalid, BifurcationKind.s3_fold}
    return sorted({p.gap for p in points if p.kind in kinds})


def near_bifurcation(gap: float, sigma: Sequence[float], window: Optional[float] = None) -> bool:
    window = setting_or(window, "near_bifurcation_window")
    return any(abs(gap - value) <= window for value in sigma)


def count_for_gap(system: SpectralSystem, gap: float, s_max: Optional[float] = None) -> SolutionCount:
    solutions = periodic.enumerate_periodic(system, 0.0, gap, s_max)
    n_valid = sum(1 for sol in solutions if sol.valid)
    return SolutionCount(gap=float(gap), n_valid=n_valid, n_ghost=len(solutions) - n_valid)


def count_solutions_vs_gap(
    system: SpectralSystem,
    gap_grid: Sequence[float],
    *,
    s_max: Optional[float] = None,
    workers: Optional[int] = None,
) -> List[SolutionCount]:
    gaps = [float(g) for g in gap_grid]
    if any(g <= 0 for g in gaps):
        raise ConfigurationError("gap grid must be strictly positive")
    return pool_map(partial(count_for_gap, system, s_max=s_max), gaps, workers)
