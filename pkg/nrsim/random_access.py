"""
Contention-based random access.

A RACH occasion collects the preambles sent in it; ``rach_round`` decides which
are detected and which collided, ``contention_resolution`` picks the single
winner of a collision, and ``next_attempt_params`` computes the back-off and
transmit power of a retry. Both the 4-step (MSG1..MSG4) and the 2-step
(MSGA/MSGB) procedures are covered; they differ only in message count and
latency.
"""
import logging
from collections import defaultdict
from enum import Enum
from typing import Annotated, Dict, Iterable, Optional, Tuple

from pydantic import BaseModel, Field, model_validator
from pydantic.dataclasses import dataclass

from .core_model import Duration, milliseconds

logger = logging.getLogger(__name__)


class RaFailure(Exception):
    """The RA procedure gave up after the configured number of preamble attempts."""

    def __init__(self, attempt_no: int, max_attempts: int):
        super().__init__(f"random access failed after {attempt_no} attempt(s), max_attempts={max_attempts}")
        self.attempt_no = attempt_no
        self.max_attempts = max_attempts


class RaMode(str, Enum):
    FOUR_STEP = "4-step"
    TWO_STEP = "2-step"


class RaPriorityClass(str, Enum):
    NORMAL = "normal"
    PRIORITIZED = "prioritized"


class PrioritizedRaConfig(BaseModel):
    """
    Prioritized random access parameters for MPS and MCS UEs.

    :ivar enabled: Scenario switch; when off every UE uses the normal class.
    :ivar backoff_scaling: Factor applied to the back-off of prioritized UEs.
    :ivar power_ramping_step_high: Ramping step of prioritized UEs, or None to
        use the normal step.
    """

    enabled: bool = False
    backoff_scaling: float = Field(default=1.0, gt=0.0, le=1.0)
    power_ramping_step_high: Optional[float] = Field(default=None, gt=0.0)


class MsgLatencies(BaseModel):
    msg1: Duration = milliseconds(1)
    msg2: Duration = milliseconds(4)
    msg3: Duration = milliseconds(2)
    msg4: Duration = milliseconds(4)
    msga: Duration = milliseconds(2)
    msgb: Duration = milliseconds(4)


class RachConfig(BaseModel):
    """
    RACH configuration of a cell.

    Received preamble power is the UE transmit power minus the path loss of
    its population; a preamble is detected when that reaches
    ``detection_threshold``. Transmit power never exceeds ``max_power``.
    """

    n_preambles: int = Field(default=64, gt=0)
    occasion_period: Duration = Field(default=milliseconds(10), gt=0)
    backoff_indicator: Duration = Field(default=milliseconds(20), ge=0)
    power_ramping_step: float = Field(default=2.0, gt=0.0)
    initial_power: float = 10.0
    max_power: float = 23.0
    detection_threshold: float = -100.0
    max_attempts: int = Field(default=10, gt=0)
    prioritized: PrioritizedRaConfig = PrioritizedRaConfig()
    mode: RaMode = RaMode.FOUR_STEP
    two_step_permitted: bool = True
    randomize_beam: bool = False
    msg_latencies: MsgLatencies = MsgLatencies()

    @model_validator(mode="after")
    def _consistent(self):
        high = self.prioritized.power_ramping_step_high
        if high is not None and high < self.power_ramping_step:
            raise ValueError(
                f"prioritized.power_ramping_step_high ({high}) must be >= power_ramping_step ({self.power_ramping_step})"
            )
        if self.initial_power > self.max_power:
            raise ValueError(f"initial_power ({self.initial_power}) exceeds max_power ({self.max_power})")
        if self.mode == RaMode.TWO_STEP and not self.two_step_permitted:
            raise ValueError("2-step random access is not permitted in this cell")
        return self


@dataclass
class RaAttemptState:
    """
    Progress of one UE through the RA procedure.

    ``same_beam_as_previous`` describes the beam of the next transmission
    relative to the last one; ramping only continues on the same beam.
    """

    attempt_no: Annotated[int, Field(ge=1)]
    current_power: float
    chosen_preamble: int = 0
    same_beam_as_previous: bool = True
    priority_class: RaPriorityClass = RaPriorityClass.NORMAL


@dataclass(frozen=True)
class RetryParams:
    backoff: int
    power: float


@dataclass(frozen=True)
class PreambleTx:
    ue_id: int
    preamble: int
    power: float


@dataclass(frozen=True)
class PreambleOutcome:
    detected: bool
    contended: bool = False


@dataclass(frozen=True)
class ContentionResult:
    winner: int
    losers: Tuple[int, ...]
    messages: int
    latency: int


def ramping_step(priority_class: RaPriorityClass, cfg: RachConfig) -> float:
    if priority_class == RaPriorityClass.PRIORITIZED and cfg.prioritized.power_ramping_step_high is not None:
        return cfg.prioritized.power_ramping_step_high
    return cfg.power_ramping_step


def next_attempt_params(state: RaAttemptState, cfg: RachConfig, uniform_draw: float) -> RetryParams:
    """
    Computes back-off and transmit power for the retry after a failed attempt.

    The back-off is drawn uniformly in [0, BI), scaled down for prioritized
    UEs. Power ramps by the applicable step on the same beam, capped at
    ``max_power``, and resets to ``initial_power`` on a beam change.

    :param state: State of the attempt that just failed.
    :type state: RaAttemptState
    :param cfg: The cell's RACH configuration.
    :type cfg: RachConfig
    :param uniform_draw: Draw in [0, 1) from the back-off stream.
    :return: Back-off duration and transmit power of the retry.
    :rtype: RetryParams
    :raises RaFailure: If ``state.attempt_no`` has reached ``max_attempts``.
    """
    if state.attempt_no >= cfg.max_attempts:
        raise RaFailure(state.attempt_no, cfg.max_attempts)

    scaling = 1.0
    if state.priority_class == RaPriorityClass.PRIORITIZED:
        scaling = cfg.prioritized.backoff_scaling
    backoff = int(uniform_draw * cfg.backoff_indicator * scaling)

    if state.same_beam_as_previous:
        power = min(state.current_power + ramping_step(state.priority_class, cfg), cfg.max_power)
    else:
        power = cfg.initial_power
    return RetryParams(backoff=backoff, power=power)


def rach_round(occasion: Iterable[PreambleTx], cfg: RachConfig) -> Dict[int, PreambleOutcome]:
    """
    Resolves detection and collisions for the preambles of one RACH occasion.

    Preambles received below the detection threshold are lost. A preamble
    index that two or more detected UEs picked is a collision: all of them get
    the response and are flagged as contended.
    """
    transmissions = list(occasion)
    detected_by_index = defaultdict(int)
    for tx in transmissions:
        if not 0 <= tx.preamble < cfg.n_preambles:
            raise ValueError(f"preamble {tx.preamble} outside 0..{cfg.n_preambles - 1}")
        if tx.power >= cfg.detection_threshold:
            detected_by_index[tx.preamble] += 1

    outcomes = {}
    for tx in transmissions:
        if tx.power < cfg.detection_threshold:
            outcomes[tx.ue_id] = PreambleOutcome(detected=False)
        else:
            outcomes[tx.ue_id] = PreambleOutcome(detected=True, contended=detected_by_index[tx.preamble] > 1)
    return outcomes


def procedure_messages(cfg: RachConfig) -> int:
    return 2 if cfg.mode == RaMode.TWO_STEP else 4


def procedure_latency(cfg: RachConfig) -> int:
    """One-way latency of a complete RA procedure, first message to last."""
    lat = cfg.msg_latencies
    if cfg.mode == RaMode.TWO_STEP:
        return lat.msga + lat.msgb
    return lat.msg1 + lat.msg2 + lat.msg3 + lat.msg4


def contention_resolution(contenders: Iterable[int], cfg: RachConfig, uniform_draw: float) -> ContentionResult:
    """
    Picks the one UE that wins contention resolution (MSG4 or MSGB).

    The winner is taken uniformly from the contenders sorted by UE id, so the
    result depends only on the draw and the contender set.
    """
    ordered = sorted(set(contenders))
    if not ordered:
        raise ValueError("contention resolution needs at least one contender")
    index = min(int(uniform_draw * len(ordered)), len(ordered) - 1)
    winner = ordered[index]
    return ContentionResult(
        winner=winner,
        losers=tuple(ue for ue in ordered if ue != winner),
        messages=procedure_messages(cfg),
        latency=procedure_latency(cfg),
    )


def select_preamble(cfg: RachConfig, uniform_draw: float) -> int:
    return min(int(uniform_draw * cfg.n_preambles), cfg.n_preambles - 1)


def next_occasion(at: int, cfg: RachConfig, strictly_after: bool = False) -> int:
    """First RACH occasion at or after ``at`` (strictly after it if ``strictly_after``)."""
    period = cfg.occasion_period
    if strictly_after:
        return (at // period + 1) * period
    return -(-at // period) * period
