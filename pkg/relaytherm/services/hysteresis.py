# relaytherm/services/hysteresis.py
"""Two-threshold relay H: switches to +1 on reaching alpha, to -1 on reaching beta.

The relay never samples the input signal. It consumes threshold hits produced
by the event detection in `dynamics`.
"""
from dataclasses import replace

import structlog

from ..core.errors import ConfigurationError, UsageError
from ..models import RelayState, Threshold

logger = structlog.get_logger(__name__)


def relay_init(g0: float, alpha: float, beta: float, t0: float = 0.0) -> RelayState:
    if not alpha < beta:
        raise ConfigurationError(f"thresholds must satisfy alpha < beta, got alpha={alpha}, beta={beta}")
    output = 1 if g0 < beta else -1
    return RelayState(alpha=float(alpha), beta=float(beta), output=output, last_event_time=float(t0))


def relay_cross(state: RelayState, threshold_hit: Threshold, t: float) -> RelayState:
    previous = state.last_event_time
    if previous is None:
        previous = state.last_switch_time
    if previous is not None and t < previous:
        raise UsageError(f"relay time went backwards: {t} < {previous}")

    new_output = 1 if Threshold(threshold_hit) is Threshold.at_alpha else -1
    if new_output == state.output:
        return replace(state, last_event_time=float(t))

    logger.debug("relay_switch", t=t, output=new_output)
    return replace(
        state,
        output=new_output,
        last_switch_time=float(t),
        last_event_time=float(t),
        history=state.history + ((float(t), new_output),),
    )


def opposing_threshold(state: RelayState) -> Threshold:
    """The threshold whose attainment switches the relay from its current output."""
    return Threshold.at_beta if state.output == 1 else Threshold.at_alpha
