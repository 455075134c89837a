# relaytherm/services/dynamics.py
"""Exact modal flow between switchings, event detection and trajectory simulation.

Between switchings every mode obeys a scalar affine ODE, so states are always
produced by the closed-form flow; nothing here is time-stepped. Event detection
only looks at the guiding modes, which makes switch times independent of the
guided components bit for bit.
"""
import math
from typing import Iterable, List, Mapping, Optional

import numpy as np
import pandas as pd
import structlog
from scipy.optimize import brentq

from ..config import setting_or
from ..core.errors import ConfigurationError, DetectionFailure, UsageError, ZenoSuspected
from ..models import Decomposition, ModeVector, RelayState, Segment, SpectralSystem, SwitchEvent, Trajectory
from . import hysteresis
from .spectral_model import build_rod_model

logger = structlog.get_logger(__name__)

MAX_DETECTION_STEPS = 1_000_000


def advance_modes(system: SpectralSystem, v: ModeVector, h: int, dt: float) -> ModeVector:
    if dt < 0:
        raise UsageError(f"cannot advance by negative time {dt}")
    if dt == 0:
        return ModeVector(v.values, v.time)

    lam, k = system.lambdas, system.k_coeffs
    out = np.empty_like(v.values)
    out[0] = v.values[0] + h * k[0] * dt
    if lam.size > 1:
        a = h * k[1:] / lam[1:]
        out[1:] = (v.values[1:] - a) * np.exp(-lam[1:] * dt) + a
    return ModeVector(out, v.time + dt)


def mean_temperature(system: SpectralSystem, v: ModeVector) -> float:
    idx = system.guiding_indices
    return float(np.dot(system.m_coeffs[idx], v.values[idx]))


def mean_rate(system: SpectralSystem, v: ModeVector, h: int) -> float:
    J = system.sensor_indices
    m, lam, k = system.m_coeffs[J], system.lambdas[J], system.k_coeffs[J]
    return float(h * system.m0k0 + np.dot(m, -lam * v.values[J] + h * k))


def weighted_norm(system: SpectralSystem, values: np.ndarray, indices: Optional[np.ndarray] = None) -> float:
    """sqrt(sum (1 + lambda_j) v_j**2), optionally over a subset of indices."""
    lam = system.lambdas
    values = np.asarray(values, dtype=float)
    if indices is not None:
        lam, values = lam[indices], values[indices]
    return float(math.sqrt(np.sum((1.0 + lam) * values ** 2)))


class SegmentFlow:
    """Mean temperature along one constant-output segment, as a function of elapsed time."""

    def __init__(self, system: SpectralSystem, v: ModeVector, h: int):
        J = system.sensor_indices
        lam = system.lambdas[J]
        m = system.m_coeffs[J]
        a = h * system.k_coeffs[J] / lam
        self.h = h
        self.lam = lam
        self.drift = h * system.m0k0
        self.offset = system.m_coeffs[0] * v.values[0] + float(np.dot(m, a))
        self.weights = m * (v.values[J] - a)
        self.rate_weights = self.weights * lam
        self.lipschitz = abs(self.drift) + float(np.sum(np.abs(self.rate_weights)))

    def mean(self, tau):
        decay = np.exp(-np.multiply.outer(tau, self.lam))
        return self.offset + self.drift * np.asarray(tau, dtype=float) + decay @ self.weights

    def rate(self, tau):
        decay = np.exp(-np.multiply.outer(tau, self.lam))
        return self.drift - decay @ self.rate_weights


def next_switching(
    system: SpectralSystem,
    v: ModeVector,
    relay: RelayState,
    t_max: float,
    *,
    horizon_scale: Optional[float] = None,
    event_tol: Optional[float] = None,
    graze_tol: Optional[float] = None,
) -> Optional[SwitchEvent]:
    """First time in (v.time, t_max] where the mean temperature reaches the opposing threshold.

    Sampling steps are bounded below by the Lipschitz-safe distance |g|/Lip and
    by a floor of min(scale/64, 1/lambda_max); sign changes are refined with
    brentq. A local maximum of g that touches the threshold without crossing
    is reported as a grazing switch.
    """
    event_tol = setting_or(event_tol, "event_tol")
    graze_tol = setting_or(graze_tol, "graze_tol")

    span = float(t_max) - v.time
    if span <= 0.0:
        return None
    scale = span if horizon_scale is None else float(horizon_scale)

    h = relay.output
    threshold = hysteresis.opposing_threshold(relay)
    level = relay.beta if h == 1 else relay.alpha
    flow = SegmentFlow(system, v, h)
    tiny = event_tol * max(1.0, abs(relay.alpha), abs(relay.beta))

    def g(tau):
        return h * (float(flow.mean(tau)) - level)

    def dg(tau):
        return h * float(flow.rate(tau))

    lam_max = float(np.max(flow.lam)) if flow.lam.size else 0.0
    floor = scale / 64.0 if lam_max == 0.0 else min(scale / 64.0, 1.0 / lam_max)

    tau = 0.0
    g_prev = g(tau)
    if g_prev > tiny:
        raise UsageError(f"mean temperature already past {threshold.value} at t={v.time}")
    if g_prev >= -tiny:
        # leaving the threshold: exclude t = 0 from the search
        tau = min(event_tol, span)
        g_prev = g(tau)
    dg_prev = dg(tau)

    def located(root: float, grazing: bool = False) -> SwitchEvent:
        rate = float(flow.rate(root))
        grazing = grazing or abs(rate) < graze_tol
        if grazing:
            logger.warning("grazing_switch", t=v.time + root, threshold=threshold.value, rate=rate)
        return SwitchEvent(time=v.time + root, threshold=threshold, rate=rate, grazing=grazing)

    try:
        for _ in range(MAX_DETECTION_STEPS):
            if tau >= span:
                return None
            step = max(-g_prev / flow.lipschitz, floor)
            tau_next = min(tau + step, span)
            g_next = g(tau_next)
            dg_next = dg(tau_next)

            if g_next >= 0.0:
                if g_next == 0.0:
                    return located(tau_next)
                return located(brentq(g, tau, tau_next, xtol=event_tol))

            if dg_prev > 0.0 and dg_next < 0.0:
                tau_ext = brentq(dg, tau, tau_next, xtol=event_tol)
                g_ext = g(tau_ext)
                if g_ext > tiny:
                    return located(brentq(g, tau, tau_ext, xtol=event_tol))
                if g_ext >= -tiny:
                    return located(tau_ext, grazing=True)

            tau, g_prev, dg_prev = tau_next, g_next, dg_next
    except (ValueError, RuntimeError) as exc:
        raise DetectionFailure(f"threshold bracketing failed near t={v.time + tau}: {exc}") from exc

    raise DetectionFailure(f"event detection exhausted {MAX_DETECTION_STEPS} steps")


def simulate(
    system: SpectralSystem,
    phi: ModeVector,
    alpha: float,
    beta: float,
    horizon: float,
    *,
    event_tol: Optional[float] = None,
    graze_tol: Optional[float] = None,
    dwell_factor: Optional[float] = None,
) -> Trajectory:
    if not horizon > 0:
        raise ConfigurationError(f"horizon must be positive, got {horizon}")
    dwell_floor = setting_or(dwell_factor, "dwell_factor") * horizon

    relay = hysteresis.relay_init(mean_temperature(system, phi), alpha, beta, t0=phi.time)
    t_end = phi.time + horizon
    segments: List[Segment] = []
    events: List[SwitchEvent] = []
    short_gaps = 0
    v = phi

    while True:
        event = next_switching(
            system, v, relay, t_end, horizon_scale=horizon, event_tol=event_tol, graze_tol=graze_tol
        )
        if event is None:
            segments.append(Segment(v.time, t_end, relay.output, v))
            terminal = ModeVector(advance_modes(system, v, relay.output, t_end - v.time).values, t_end)
            break

        segments.append(Segment(v.time, event.time, relay.output, v))
        if events:
            if event.time - events[-1].time < dwell_floor:
                short_gaps += 1
                if short_gaps >= 2:
                    raise ZenoSuspected(f"switchings closer than dwell floor {dwell_floor:.3g} at t={event.time}")
            else:
                short_gaps = 0
        events.append(event)
        v = ModeVector(advance_modes(system, v, relay.output, event.time - v.time).values, event.time)
        relay = hysteresis.relay_cross(relay, event.threshold, event.time)

    logger.debug("simulation_finished", n_switches=len(events), horizon=horizon)
    return Trajectory(segments=segments, events=events, terminal=terminal, alpha=float(alpha), beta=float(beta))


def decompose(system: SpectralSystem, v: ModeVector) -> Decomposition:
    guiding = np.zeros_like(v.values)
    guided = np.zeros_like(v.values)
    guiding[system.guiding_indices] = v.values[system.guiding_indices]
    guided[system.guided_indices] = v.values[system.guided_indices]
    return Decomposition(
        guiding=guiding,
        guided=guided,
        guiding_norm=weighted_norm(system, guiding),
        guided_norm=weighted_norm(system, guided),
    )


def trajectory_frame(system: SpectralSystem, trajectory: Trajectory, stride: float) -> pd.DataFrame:
    """Samples on a uniform stride plus every exact switch time (state taken right-continuous)."""
    if not stride > 0:
        raise ConfigurationError(f"output stride must be positive, got {stride}")
    t_start = trajectory.segments[0].start_time
    rows = []
    for seg in trajectory.segments:
        k_first = math.ceil((seg.start_time - t_start) / stride)
        grid = t_start + stride * np.arange(k_first, math.floor((seg.end_time - t_start) / stride) + 1)
        times = [seg.start_time] + [t for t in grid if seg.start_time < t < seg.end_time]
        for t in times:
            state = advance_modes(system, seg.start, seg.output, t - seg.start_time)
            rows.append([t, seg.output, mean_temperature(system, state), *state.values])
    last = trajectory.segments[-1]
    terminal = trajectory.terminal
    rows.append([terminal.time, last.output, mean_temperature(system, terminal), *terminal.values])

    columns = ["time", "h", "vhat"] + [f"v_{j}" for j in range(system.n_modes)]
    return pd.DataFrame(rows, columns=columns)


def section_start(system: SpectralSystem, level: float, values: Optional[Iterable[float]] = None) -> ModeVector:
    """Lift modes j >= 1 onto the plane {mean temperature = level} by solving for v_0."""
    v = np.zeros(system.n_modes) if values is None else np.array(values, dtype=float)
    J = system.sensor_indices
    v[0] = (level - float(np.dot(system.m_coeffs[J], v[J]))) / system.m_coeffs[0]
    return ModeVector(v)


def truncation_check(
    m_overrides: Mapping[int, float],
    alpha: float,
    beta: float,
    horizon: float,
    n_small: int = 16,
    n_large: int = 32,
) -> float:
    """Largest switch-time difference between two rod truncations started on the alpha plane."""
    times = []
    for n in (n_small, n_large):
        system = build_rod_model(n, m_overrides)
        times.append(simulate(system, section_start(system, alpha), alpha, beta, horizon).switch_times)
    if len(times[0]) != len(times[1]):
        logger.warning("truncation_switch_count_mismatch", n_small=len(times[0]), n_large=len(times[1]))
        return math.inf
    if not times[0]:
        return 0.0
    return float(np.max(np.abs(np.asarray(times[0]) - np.asarray(times[1]))))
