# relaytherm/workflows.py
"""Command workflows shared by the CLI and the HTTP routers.

Each function takes a validated RunConfig and returns records (and frames for
CSV output); writing files is left to the caller.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from . import schemas
from .artifacts import config_hash
from .core.errors import ConfigurationError, DegenerateLinearization, HypothesisViolated
from .models import ModeVector, PeriodicSolution, SpectralSystem
from .services import bifurcation, dynamics, periodic, poincare, spectral_model, stability

logger = structlog.get_logger(__name__)

DEFAULT_SCAN_S_MAX = 6.0


@dataclass
class RunContext:
    config: schemas.RunConfig
    system: SpectralSystem
    config_hash: str

    @property
    def n_modes(self) -> int:
        return self.system.n_modes

    def s_max(self) -> float:
        if self.config.s_max is not None:
            return self.config.s_max
        return periodic.large_root_bound(self.system, self.config.gap)


def build_context(config: schemas.RunConfig) -> RunContext:
    system = spectral_model.load_system(config.system.as_dict())
    return RunContext(config=config, system=system, config_hash=config_hash(config.model_dump(mode="json")))


def initial_vector(ctx: RunContext) -> ModeVector:
    if ctx.config.initial is None:
        return dynamics.section_start(ctx.system, ctx.config.alpha)
    values = np.asarray(ctx.config.initial, dtype=float)
    if values.size != ctx.n_modes:
        raise ConfigurationError(f"initial has {values.size} entries, system has {ctx.n_modes} modes")
    return ModeVector(values)


def simulate_run(ctx: RunContext) -> Tuple[schemas.TrajectorySummary, pd.DataFrame]:
    cfg = ctx.config
    trajectory = dynamics.simulate(ctx.system, initial_vector(ctx), cfg.alpha, cfg.beta, cfg.horizon)
    frame = dynamics.trajectory_frame(ctx.system, trajectory, cfg.output_stride)
    return schemas.TrajectorySummary.from_model(trajectory), frame


def _stability_record(ctx: RunContext, sol: PeriodicSolution) -> Tuple[Optional[schemas.StabilityRecord], Optional[str]]:
    try:
        report = stability.classify(ctx.system, sol)
    except (HypothesisViolated, DegenerateLinearization) as e:
        return None, str(e)
    return schemas.StabilityRecord.from_model(report), None


def sigma_for(ctx: RunContext) -> List[float]:
    cfg = ctx.config
    s_max = max(ctx.s_max(), 2.0 * cfg.s_min)
    _, points = bifurcation.scan_diagram(ctx.system, cfg.s_min, s_max, cfg.n_points, workers=cfg.workers)
    return bifurcation.sigma_values(points)


def periodic_run(ctx: RunContext) -> List[schemas.PeriodicSolutionRecord]:
    cfg = ctx.config
    solutions = periodic.enumerate_periodic(ctx.system, cfg.alpha, cfg.beta, ctx.s_max())
    near = bifurcation.near_bifurcation(cfg.gap, sigma_for(ctx))
    if near:
        logger.warning("gap_near_bifurcation", gap=cfg.gap)

    records = []
    for sol in solutions:
        extra = {"near_bifurcation": near}
        if sol.valid:
            extra["verification"] = schemas.VerificationRecord.from_model(periodic.verify_by_simulation(ctx.system, sol))
            extra["stability"], extra["stability_error"] = _stability_record(ctx, sol)
        records.append(schemas.PeriodicSolutionRecord.from_model(sol, **extra))
    return records


def bifurcate_run(
    ctx: RunContext,
) -> Tuple[List[schemas.DiagramRowRecord], List[schemas.BifurcationPointRecord], List[float], List[schemas.SolutionCountRecord]]:
    cfg = ctx.config
    s_max = cfg.s_max if cfg.s_max is not None else DEFAULT_SCAN_S_MAX
    rows, points = bifurcation.scan_diagram(ctx.system, cfg.s_min, s_max, cfg.n_points, workers=cfg.workers)
    counts = []
    if cfg.gap_grid:
        counts = bifurcation.count_solutions_vs_gap(ctx.system, cfg.gap_grid, workers=cfg.workers)
    return (
        [schemas.DiagramRowRecord.from_model(r) for r in rows],
        [schemas.BifurcationPointRecord.from_model(p) for p in points],
        bifurcation.sigma_values(points),
        [schemas.SolutionCountRecord.from_model(c) for c in counts],
    )


def records_frame(records: Sequence[schemas.BaseSchema], columns: Sequence[str]) -> pd.DataFrame:
    """CSV frame from flat records; booleans are written as 0/1."""
    frame = pd.DataFrame([r.model_dump() for r in records], columns=list(columns))
    for col in frame.columns:
        if frame[col].dtype == bool:
            frame[col] = frame[col].astype(int)
    return frame


def stability_run(ctx: RunContext) -> Tuple[List[schemas.PeriodicSolutionRecord], schemas.SmallSRecord]:
    cfg = ctx.config
    records = []
    for sol in periodic.enumerate_periodic(ctx.system, cfg.alpha, cfg.beta, ctx.s_max()):
        extra = {}
        if sol.valid:
            extra["stability"], extra["stability_error"] = _stability_record(ctx, sol)
        records.append(schemas.PeriodicSolutionRecord.from_model(sol, **extra))
    criteria = schemas.SmallSRecord.from_model(stability.small_s_criteria(ctx.system))
    return records, criteria


def rate_run(ctx: RunContext) -> List[schemas.RateRecord]:
    cfg = ctx.config
    records = []
    for sol in periodic.enumerate_periodic(ctx.system, cfg.alpha, cfg.beta, ctx.s_max()):
        if not sol.valid or stability.q_functions(ctx.system, sol.s)[1] <= 0.0:
            continue
        rate = poincare.measure_rate(ctx.system, sol, cfg.delta0, cfg.n_periods, cfg.seed)
        records.append(schemas.RateRecord.from_model(sol.s, rate))
    return records
