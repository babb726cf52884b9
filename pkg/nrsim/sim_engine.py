"""
Discrete-event core: the event calendar, seeded random substreams and the
traffic generators.

The calendar is a :class:`simpy.Environment` running on integer microseconds.
Events execute in (fire_time, seq) order, ``seq`` being the scheduling order,
which is also the order simpy processes timeouts of equal time in.
"""
import hashlib
import logging
from enum import Enum
from typing import Annotated, Any, Callable, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import simpy
from pydantic import BaseModel, Field, model_validator
from pydantic.dataclasses import dataclass

from .core_model import Duration, US_PER_SECOND
from .metrics import EventLog

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    ATTEMPT_START = "attempt-start"
    RACH_OCCASION = "rach-occasion"
    PAGING_ARRIVAL = "paging-arrival"
    PAGING_CYCLE = "paging-cycle"
    RAN_PAGING = "ran-paging"
    HANDOVER_IN = "handover-in"
    MSG_DELIVERY = "msg-delivery"
    ADMISSION_EVAL = "admission-eval"
    QUEUE_TIMEOUT = "queue-timeout"
    RELEASE = "release"
    GENERATOR_TICK = "generator-tick"


@dataclass(frozen=True)
class Event:
    fire_time: int
    seq: int
    kind: EventKind
    cell_id: str = ""
    ue_id: int = -1
    slice_tag: str = ""
    payload: Any = None


class Engine(object):
    """
    Event calendar of one run.

    :ivar env: The simpy environment; ``env.now`` is the simulation time in
        microseconds.
    :ivar log: Event log every executed event is appended to.
    :ivar executed: Number of events executed so far.
    """

    def __init__(self, log: EventLog):
        self.env = simpy.Environment(initial_time=0)
        self.log = log
        self.executed = 0
        self._seq = 0
        self._last_time = 0

    @property
    def now(self) -> int:
        return int(self.env.now)

    def schedule(
        self,
        at: int,
        kind: EventKind,
        handler: Callable[[Event], None],
        cell_id: str = "",
        ue_id: int = -1,
        slice_tag: str = "",
        payload: Any = None,
    ) -> Event:
        """
        Schedules ``handler`` to run at time ``at``.

        :raises ValueError: If ``at`` lies in the past.
        """
        if at < self.now:
            raise ValueError(f"cannot schedule {kind.value} at {at}, the clock is at {self.now}")
        self._seq += 1
        event = Event(
            fire_time=at,
            seq=self._seq,
            kind=kind,
            cell_id=cell_id,
            ue_id=ue_id,
            slice_tag=slice_tag,
            payload=payload,
        )
        timeout = self.env.timeout(at - self.now)
        timeout.callbacks.append(lambda _: self._dispatch(event, handler))
        return event

    def _dispatch(self, event: Event, handler: Callable[[Event], None]) -> None:
        if event.fire_time < self._last_time:
            raise RuntimeError(f"clock moved backward from {self._last_time} to {event.fire_time}")
        self._last_time = event.fire_time
        self.executed += 1
        self.log.event(event.fire_time, event.seq, event.kind.value, event.cell_id, event.ue_id, event.slice_tag)
        handler(event)

    def run(self, until: int) -> None:
        """Executes every event scheduled before ``until``."""
        self.env.run(until=until)


def label_key(label: str) -> int:
    """Stable 64-bit integer for a substream label."""
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")


class RandomStreams(object):
    """
    Named random substreams derived from one seed.

    Each purpose label (``"uac/regular"``, ``"backoff/mps"``, ...) owns an
    independent generator, so draws for one purpose never shift another's.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be >= 0, got {seed}")
        self.seed = seed
        self._streams: Dict[str, np.random.Generator] = {}

    def stream(self, purpose: str) -> np.random.Generator:
        if purpose not in self._streams:
            self._streams[purpose] = np.random.default_rng(np.random.SeedSequence([self.seed, label_key(purpose)]))
        return self._streams[purpose]

    def uniform(self, purpose: str) -> float:
        return float(self.stream(purpose).random())

    def derived(self, purpose: str, *indices: int) -> np.random.Generator:
        """A fresh generator determined by the seed, the purpose and ``indices`` alone."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, label_key(purpose), *indices]))


class PoissonTraffic(BaseModel):
    """Every UE starts access attempts as a Poisson process of ``rate`` per second."""

    kind: Literal["poisson"] = "poisson"
    rate: float = Field(ge=0.0)
    start: Duration = 0
    stop: Optional[Duration] = None


class BurstTraffic(BaseModel):
    """``ue_count`` UEs (all if None) activate once within [activation_time, activation_time + jitter]."""

    kind: Literal["burst"] = "burst"
    activation_time: Duration = Field(ge=0)
    ue_count: Optional[int] = Field(default=None, ge=0)
    jitter: Duration = Field(default=0, ge=0)


class PagingLoad(BaseModel):
    """MT arrivals for the population at ``rate`` per second with a Paging Priority mix."""

    kind: Literal["paging"] = "paging"
    rate: float = Field(ge=0.0)
    priority_mix: Dict[Annotated[int, Field(ge=1)], float] = {1: 1.0}
    start: Duration = 0
    stop: Optional[Duration] = None

    @model_validator(mode="after")
    def _mix_sums_to_one(self):
        total = sum(self.priority_mix.values())
        if abs(total - 1.0) > 1e-9 or any(p < 0 for p in self.priority_mix.values()):
            raise ValueError(f"priority_mix must be non-negative and sum to 1, got {total}")
        return self


class HandoverTraffic(BaseModel):
    """Incoming handovers of idle population UEs into their cell at ``rate`` per second."""

    kind: Literal["handover"] = "handover"
    rate: float = Field(ge=0.0)
    start: Duration = 0
    stop: Optional[Duration] = None


TrafficModel = Annotated[Union[PoissonTraffic, BurstTraffic, PagingLoad, HandoverTraffic], Field(discriminator="kind")]


class ArrivalKind(str, Enum):
    ATTEMPT = "attempt"
    PAGING = "paging"
    HANDOVER = "handover"


@dataclass(frozen=True)
class TrafficArrival:
    time: int
    ue_id: int
    kind: ArrivalKind = ArrivalKind.ATTEMPT
    priority: Optional[int] = None


def _window(model, window_start: int, window_end: int):
    start = max(window_start, model.start)
    end = window_end if model.stop is None else min(window_end, model.stop)
    return start, end


def _poisson_times(rate: float, start: int, end: int, rng: np.random.Generator) -> List[int]:
    times = []
    elapsed = 0.0
    while True:
        elapsed += rng.exponential(1.0 / rate)
        at = start + int(elapsed * US_PER_SECOND)
        if at >= end:
            return times
        times.append(at)


def generate_traffic(
    model: Union[PoissonTraffic, BurstTraffic, PagingLoad, HandoverTraffic],
    population: Sequence[int],
    horizon: int,
    rng: np.random.Generator,
    window_start: int = 0,
) -> List[TrafficArrival]:
    """
    Generates the arrivals of a traffic model for a UE population.

    Poisson, paging and handover arrivals are produced for [window_start, horizon);
    successive windows can be generated independently since the processes are
    memoryless. A burst is produced whole when its activation time falls in
    the window.

    :param model: The traffic model.
    :param population: UE ids the model drives.
    :param horizon: End of the generation window (exclusive).
    :param rng: The population's traffic substream.
    :param window_start: Start of the generation window.
    :return: Arrivals sorted by time, then UE id.
    :raises ValueError: For a burst over an empty population.
    """
    arrivals = []
    if isinstance(model, BurstTraffic):
        if not population:
            raise ValueError("a burst needs a non-empty population")
        if window_start <= model.activation_time < horizon:
            selected = population if model.ue_count is None else population[: model.ue_count]
            for ue_id in selected:
                offset = int(rng.random() * (model.jitter + 1)) if model.jitter else 0
                arrivals.append(TrafficArrival(time=model.activation_time + offset, ue_id=ue_id))
    elif isinstance(model, PoissonTraffic):
        start, end = _window(model, window_start, horizon)
        if model.rate > 0 and start < end:
            for ue_id in population:
                arrivals.extend(TrafficArrival(time=t, ue_id=ue_id) for t in _poisson_times(model.rate, start, end, rng))
    elif isinstance(model, HandoverTraffic):
        start, end = _window(model, window_start, horizon)
        if model.rate > 0 and start < end and population:
            for t in _poisson_times(model.rate, start, end, rng):
                target = population[int(rng.integers(len(population)))]
                arrivals.append(TrafficArrival(time=t, ue_id=target, kind=ArrivalKind.HANDOVER))
    else:
        start, end = _window(model, window_start, horizon)
        if model.rate > 0 and start < end and population:
            priorities = sorted(model.priority_mix)
            weights = np.array([model.priority_mix[p] for p in priorities])
            for t in _poisson_times(model.rate, start, end, rng):
                target = population[int(rng.integers(len(population)))]
                priority = priorities[int(rng.choice(len(priorities), p=weights))]
                arrivals.append(TrafficArrival(time=t, ue_id=target, kind=ArrivalKind.PAGING, priority=priority))
    arrivals.sort(key=lambda a: (a.time, a.ue_id))
    return arrivals
