"""
The per-cell access pipeline wired onto the event engine.

An access attempt of an idle or inactive UE runs through cell selection, UAC,
random access at the cell's RACH occasions and admission control; connected
UEs ask admission control for further QoS flows directly. MT traffic enters
through paging control. Every decision is noted in the event log and counted
in the metrics sink.
"""
import itertools
import logging
import time
from collections import defaultdict
from typing import Dict, List, Optional, Union

import numpy as np
import psutil
from pydantic import ValidationError
from pydantic.dataclasses import dataclass

from .admission_control import (
    REASON_UNKNOWN_SLICE,
    AdmissionDecision,
    AdmissionRequest,
    CellState,
    DecisionKind,
    ReleaseReason,
    RequestKind,
    SlicePool,
    admit_request,
    audit_cell,
    audit_eviction,
    commit_decision,
    process_queue,
    release_connection,
)
from .core_model import (
    PRIORITY_SERVICE_AIS,
    AccessAttempt,
    EstablishmentCause,
    RrcState,
    ServiceHint,
    derive_access_info,
    seconds,
)
from .metrics import EventLog, MetricsReport, MetricsSink, ai_label
from .preventive_access import (
    PagingOrigin,
    PagingRequest,
    Topology,
    apply_wait_time,
    cell_selection_check,
    paging_control_filter,
    route_paging,
    selected_plmn,
    uac_check,
)
from .random_access import (
    PreambleTx,
    RaAttemptState,
    RaFailure,
    RaMode,
    RaPriorityClass,
    contention_resolution,
    next_attempt_params,
    next_occasion,
    procedure_latency,
    procedure_messages,
    rach_round,
    select_preamble,
)
from .scenario import UE_ID_BLOCK, CellConfig, ScenarioConfig, ScenarioError, UePopulation
from .sim_engine import ArrivalKind, BurstTraffic, Engine, Event, EventKind, RandomStreams, generate_traffic

logger = logging.getLogger(__name__)

GENERATOR_WINDOW = seconds(1)


@dataclass(frozen=True)
class AttemptSpec:
    """Fixed parameters of an attempt that is not a fresh MO arrival."""

    cause: EstablishmentCause
    hint: ServiceHint = ServiceHint.NONE
    uac_retries: int = 0


class UeContext(object):
    """Runtime state of one UE: its profile plus the attempt in progress."""

    def __init__(self, profile, population: UePopulation, operator_category: Optional[int]):
        self.profile = profile
        self.population = population
        self.operator_category = operator_category
        self.cell_id = profile.serving_cell
        self.slice_tag = str(population.flows[0].snssai)
        self.attempt: Optional[AccessAttempt] = None
        self.ra_state: Optional[RaAttemptState] = None
        self.session = 0
        self.flow_counter = 0
        self.handover_pending = False

    @property
    def ue_id(self) -> int:
        return self.profile.ue_id

    def labels(self) -> Dict[str, str]:
        if self.attempt is None:
            return {"slice_": self.slice_tag}
        return {
            "ai": ai_label(self.attempt.access_identities),
            "ac": str(self.attempt.access_category),
            "slice_": self.slice_tag,
            "cause": self.attempt.cause.value,
        }


class CellRuntime(object):
    """A cell's configuration together with its mutable RACH, paging and admission state."""

    def __init__(self, index: int, config: CellConfig):
        self.index = index
        self.config = config
        self.cell_id = config.cell_id
        self.admission = CellState(
            config.cell_id,
            [SlicePool(snssai=pool.snssai, dedicated_capacity=pool.dedicated_capacity) for pool in config.slices],
            shared_capacity=config.shared_capacity,
            policy=config.admission,
        )
        self.pending_preambles: Dict[int, List[PreambleTx]] = {}
        self.paging_queue: List[PagingRequest] = []
        self.next_paging_cycle: Optional[int] = None


class SimulationResult(object):
    """
    Outcome of a run.

    :ivar report: The metrics table.
    :ivar log: The event log.
    :ivar events: Number of executed events.
    """

    def __init__(self, report: MetricsReport, log: EventLog, events: int):
        self.report = report
        self.log = log
        self.events = events

    @property
    def digest(self) -> str:
        return self.log.digest()


class Simulation(object):
    """
    One simulation run of a scenario.

    :param scenario: The validated scenario.
    :type scenario: ScenarioConfig
    :param seed: Seed of all random substreams; defaults to the scenario's.
    :type seed: int
    :param audit: Check resource conservation and the eviction rule after
        every admission step; defaults to the scenario's ``audit`` flag.
    :type audit: bool
    :param keep_log: Keep event log records in memory, not only the digest.
    :type keep_log: bool
    """

    def __init__(
        self,
        scenario: ScenarioConfig,
        seed: Optional[int] = None,
        audit: Optional[bool] = None,
        keep_log: bool = True,
    ):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.audit = scenario.audit if audit is None else audit
        self.streams = RandomStreams(self.seed)
        self.log = EventLog(keep_records=keep_log)
        self.metrics = MetricsSink()
        self.engine = Engine(self.log)

        self.cells: Dict[str, CellRuntime] = {
            cell.cell_id: CellRuntime(index, cell) for index, cell in enumerate(scenario.cells)
        }
        tracking_areas = defaultdict(set)
        for cell in scenario.cells:
            tracking_areas[cell.tracking_area].add(cell.cell_id)
        self.topology = Topology(
            cells={cell.cell_id: cell.gnb for cell in scenario.cells},
            tracking_areas={ta: frozenset(cells) for ta, cells in tracking_areas.items()},
            inter_gnb_delay=scenario.inter_gnb_delay,
        )

        slice_categories = {r.snssai: r.access_category for r in scenario.operator_categories if r.snssai}
        service_categories = {r.service: r.access_category for r in scenario.operator_categories if r.service}
        self.ues: Dict[int, UeContext] = {}
        self.population_ues: Dict[str, List[int]] = {}
        for pop_index, pop in enumerate(scenario.populations):
            operator_category = service_categories.get(pop.service)
            if operator_category is None:
                operator_category = next(
                    (slice_categories[f.snssai] for f in pop.flows if f.snssai in slice_categories), None
                )
            cell = self.cells[pop.cell].config
            ue_ids = [pop_index * UE_ID_BLOCK + k for k in range(pop.count)]
            for ue_id in ue_ids:
                self.ues[ue_id] = UeContext(pop.template.instantiate(ue_id, cell), pop, operator_category)
            self.population_ues[pop.name] = ue_ids

        self._attempt_ids = itertools.count(1)
        self._request_ids = itertools.count(1)
        self._paging_ids = itertools.count(1)

    @property
    def now(self) -> int:
        return self.engine.now

    def run(self) -> SimulationResult:
        logger.info(
            f"Running scenario '{self.scenario.name}' with seed {self.seed}: "
            f"{len(self.ues)} UEs in {len(self.cells)} cell(s) for {self.scenario.duration / 1e6:g}s"
        )
        started = time.perf_counter()
        self._schedule_generators()
        self.engine.run(until=self.scenario.duration)
        elapsed = time.perf_counter() - started
        rss_mib = psutil.Process().memory_info().rss / 2**20
        logger.info(
            f"Scenario '{self.scenario.name}' done: {self.engine.executed} events, "
            f"{self.metrics.terminated} terminated attempts, {elapsed:.2f}s wall, {rss_mib:.0f} MiB RSS"
        )
        return SimulationResult(self.metrics.report(), self.log, self.engine.executed)

    def inject_attempt(self, ue_id: int, at: int, cause: EstablishmentCause, hint: ServiceHint = ServiceHint.NONE):
        """Schedules an extra access attempt with a fixed cause, e.g. an emergency call."""
        ctx = self.ues[ue_id]
        self.engine.schedule(
            at,
            EventKind.ATTEMPT_START,
            self._on_attempt_start,
            cell_id=ctx.cell_id,
            ue_id=ue_id,
            slice_tag=ctx.slice_tag,
            payload=AttemptSpec(cause=cause, hint=hint),
        )

    def _note(self, ctx: UeContext, kind: str, detail: str = "", at: Optional[int] = None) -> None:
        self.log.note(self.now if at is None else at, kind, ctx.cell_id, ctx.ue_id, ctx.slice_tag, detail)

    def _draw_mix(self, mix: Dict, purpose: str):
        keys = list(mix)
        if len(keys) == 1:
            return keys[0]
        weights = np.array([mix[key] for key in keys], dtype=float)
        return keys[int(self.streams.stream(purpose).choice(len(keys), p=weights / weights.sum()))]

    # traffic

    def _schedule_generators(self) -> None:
        for pop in self.scenario.populations:
            if not self.population_ues[pop.name]:
                continue
            for model_index in range(len(pop.traffic)):
                self.engine.schedule(
                    0, EventKind.GENERATOR_TICK, self._on_generator_tick, payload=(pop.name, model_index, 0)
                )

    def _on_generator_tick(self, event: Event) -> None:
        name, model_index, window_start = event.payload
        pop = next(p for p in self.scenario.populations if p.name == name)
        model = pop.traffic[model_index]
        window_end = min(window_start + GENERATOR_WINDOW, self.scenario.duration)
        arrivals = generate_traffic(
            model,
            self.population_ues[name],
            window_end,
            self.streams.stream(f"traffic/{name}/{model_index}"),
            window_start=window_start,
        )
        for arrival in arrivals:
            ctx = self.ues[arrival.ue_id]
            if arrival.kind == ArrivalKind.PAGING:
                kind, handler = EventKind.PAGING_ARRIVAL, self._on_paging_arrival
            elif arrival.kind == ArrivalKind.HANDOVER:
                kind, handler = EventKind.HANDOVER_IN, self._on_handover_in
            else:
                kind, handler = EventKind.ATTEMPT_START, self._on_attempt_start
            self.engine.schedule(
                arrival.time,
                kind,
                handler,
                cell_id=ctx.cell_id,
                ue_id=ctx.ue_id,
                slice_tag=ctx.slice_tag,
                payload=arrival.priority,
            )

        finished = window_end >= self.scenario.duration
        if isinstance(model, BurstTraffic):
            finished = finished or window_end > model.activation_time
        elif model.stop is not None:
            finished = finished or window_end >= model.stop
        if not finished:
            self.engine.schedule(
                window_end, EventKind.GENERATOR_TICK, self._on_generator_tick, payload=(name, model_index, window_end)
            )

    # access attempts

    def _on_attempt_start(self, event: Event) -> None:
        ctx = self.ues[event.ue_id]
        spec = event.payload if isinstance(event.payload, AttemptSpec) else None
        if ctx.attempt is not None or ctx.handover_pending:
            self.metrics.count("arrivals_coalesced", slice_=ctx.slice_tag)
            return
        if ctx.profile.rrc_state == RrcState.CONNECTED:
            if spec is None:
                self._setup_qos_flow(ctx)
            return
        self._start_attempt(ctx, spec)

    def _start_attempt(self, ctx: UeContext, spec: Optional[AttemptSpec]) -> None:
        pop = ctx.population
        if spec is None:
            cause = self._draw_mix(pop.cause_mix, f"cause/{pop.name}")
            hint = self._draw_mix(pop.hint_mix, f"hint/{pop.name}")
            spec = AttemptSpec(cause=cause, hint=hint)
        ac, ais = derive_access_info(spec.cause, ctx.profile, spec.hint, ctx.operator_category)
        ctx.attempt = AccessAttempt(
            attempt_id=next(self._attempt_ids),
            ue_id=ctx.ue_id,
            cause=spec.cause,
            access_category=ac,
            access_identities=ais,
            created_at=self.now,
            hint=spec.hint,
            uac_retries=spec.uac_retries,
        )
        self.metrics.count("attempts", **ctx.labels())

        cell = self.cells[ctx.cell_id]
        selection = cell_selection_check(ctx.profile, cell.config.access, spec.cause == EstablishmentCause.EMERGENCY)
        if not selection.selectable:
            self._note(ctx, "cell-not-selectable", selection.reason.value)
            self._finish(ctx, "barred_cell")
            return

        uac = cell.config.uac
        jitter_draw = self.streams.uniform(f"uac-jitter/{pop.name}") if uac.barring_time_jitter else 0.5
        decision = uac_check(ac, ais, uac, self.streams.uniform(f"uac/{pop.name}"), self.now, ctx.profile, jitter_draw)
        self._note(ctx, "uac", f"ac={ac} {decision.reason.value}")
        if not decision.allowed:
            self._finish(ctx, "barred_uac")
            if spec.uac_retries < pop.max_uac_retries:
                self.engine.schedule(
                    decision.barred_until,
                    EventKind.ATTEMPT_START,
                    self._on_attempt_start,
                    cell_id=ctx.cell_id,
                    ue_id=ctx.ue_id,
                    slice_tag=ctx.slice_tag,
                    payload=AttemptSpec(cause=spec.cause, hint=spec.hint, uac_retries=spec.uac_retries + 1),
                )
            return

        rach = cell.config.rach
        priority_class = RaPriorityClass.NORMAL
        if rach.prioritized.enabled and ais & PRIORITY_SERVICE_AIS:
            priority_class = RaPriorityClass.PRIORITIZED
        ctx.ra_state = RaAttemptState(attempt_no=1, current_power=rach.initial_power, priority_class=priority_class)
        self._send_preamble(ctx, cell, self.now)

    def _finish(self, ctx: UeContext, outcome: str) -> None:
        self.metrics.outcome(ctx.attempt.attempt_id, outcome, **ctx.labels())
        if ctx.attempt.ra_attempts:
            self.metrics.observe("ra_attempts", ctx.attempt.ra_attempts, **ctx.labels())
        self._note(ctx, outcome)
        ctx.attempt = None
        ctx.ra_state = None

    # random access

    def _send_preamble(self, ctx: UeContext, cell: CellRuntime, ready_at: int) -> None:
        rach = cell.config.rach
        state = ctx.ra_state
        occasion = next_occasion(ready_at, rach, strictly_after=True)
        state.chosen_preamble = select_preamble(rach, self.streams.uniform(f"preamble/{ctx.population.name}"))
        if occasion not in cell.pending_preambles:
            cell.pending_preambles[occasion] = []
            self.engine.schedule(occasion, EventKind.RACH_OCCASION, self._on_rach_occasion, cell_id=cell.cell_id)
        cell.pending_preambles[occasion].append(
            PreambleTx(
                ue_id=ctx.ue_id,
                preamble=state.chosen_preamble,
                power=state.current_power - ctx.population.path_loss,
            )
        )
        ctx.attempt.ra_attempts += 1
        first_message = "msga" if rach.mode == RaMode.TWO_STEP else "msg1"
        self._note(
            ctx,
            first_message,
            f"ac={ctx.attempt.access_category} attempt={state.attempt_no} preamble={state.chosen_preamble} "
            f"power={state.current_power:g}",
            at=occasion,
        )

    def _on_rach_occasion(self, event: Event) -> None:
        cell = self.cells[event.cell_id]
        rach = cell.config.rach
        transmissions = sorted(cell.pending_preambles.pop(event.fire_time, []), key=lambda tx: tx.ue_id)
        outcomes = rach_round(transmissions, rach)

        detected_by_index = defaultdict(list)
        for tx in transmissions:
            if outcomes[tx.ue_id].detected:
                detected_by_index[tx.preamble].append(tx.ue_id)
        occasion_index = event.fire_time // rach.occasion_period
        winners = set()
        for preamble in sorted(detected_by_index):
            contenders = detected_by_index[preamble]
            if len(contenders) == 1:
                winners.add(contenders[0])
                continue
            draw = float(self.streams.derived("contention", cell.index, occasion_index, preamble).random())
            winners.add(contention_resolution(contenders, rach, draw).winner)
            for ue_id in contenders:
                self.metrics.count("ra_collisions", **self.ues[ue_id].labels())

        done_at = event.fire_time + procedure_latency(rach)
        for tx in transmissions:
            ctx = self.ues[tx.ue_id]
            if tx.ue_id in winners:
                ctx.attempt.messages += procedure_messages(rach)
                self.engine.schedule(
                    done_at,
                    EventKind.ADMISSION_EVAL,
                    self._on_admission_eval,
                    cell_id=cell.cell_id,
                    ue_id=ctx.ue_id,
                    slice_tag=ctx.slice_tag,
                )
            elif outcomes[tx.ue_id].detected:
                ctx.attempt.messages += procedure_messages(rach)
                self._retry_random_access(ctx, cell, done_at, "contention-lost")
            else:
                ctx.attempt.messages += 1
                self._retry_random_access(ctx, cell, done_at, "not-detected")

    def _retry_random_access(self, ctx: UeContext, cell: CellRuntime, failed_at: int, reason: str) -> None:
        rach = cell.config.rach
        state = ctx.ra_state
        pop_name = ctx.population.name
        if rach.randomize_beam:
            state.same_beam_as_previous = self.streams.uniform(f"beam/{pop_name}") < 0.5
        try:
            params = next_attempt_params(state, rach, self.streams.uniform(f"backoff/{pop_name}"))
        except RaFailure as e:
            self._note(ctx, "ra-failure", f"attempts={e.attempt_no}")
            self._finish(ctx, "ra_failures")
            return
        self._note(ctx, "backoff", f"{reason} backoff={params.backoff}")
        state.attempt_no += 1
        state.current_power = params.power
        self._send_preamble(ctx, cell, failed_at + params.backoff)

    # admission

    def _on_admission_eval(self, event: Event) -> None:
        ctx = self.ues[event.ue_id]
        if ctx.attempt is None:
            return
        kind = RequestKind.RESUME if ctx.profile.rrc_state == RrcState.INACTIVE else RequestKind.INITIAL_SETUP
        request = self._request(ctx, kind, cause=ctx.attempt.cause, created_at=ctx.attempt.created_at)
        self._admit(ctx, self.cells[event.cell_id], request)

    def _on_handover_in(self, event: Event) -> None:
        ctx = self.ues[event.ue_id]
        if ctx.attempt is not None or ctx.handover_pending or ctx.profile.rrc_state == RrcState.CONNECTED:
            self.metrics.count("arrivals_coalesced", slice_=ctx.slice_tag)
            return
        # no barring, UAC or random access on the target side
        self.metrics.count("handover_requests", slice_=ctx.slice_tag)
        ctx.handover_pending = True
        self._note(ctx, "handover")
        self._admit(ctx, self.cells[ctx.cell_id], self._request(ctx, RequestKind.HANDOVER_IN))

    def _setup_qos_flow(self, ctx: UeContext) -> None:
        self.metrics.count("qos_flow_requests", slice_=ctx.slice_tag)
        request = self._request(ctx, RequestKind.QOS_FLOW_SETUP)
        self._admit(ctx, self.cells[ctx.profile.serving_cell], request)

    def _request(
        self,
        ctx: UeContext,
        kind: RequestKind,
        cause: Optional[EstablishmentCause] = None,
        created_at: Optional[int] = None,
    ) -> AdmissionRequest:
        flows = []
        for template in ctx.population.flows:
            ctx.flow_counter += 1
            flows.append(template.to_request(f"{ctx.ue_id}:{ctx.flow_counter}"))
        return AdmissionRequest(
            request_id=next(self._request_ids),
            kind=kind,
            ue_id=ctx.ue_id,
            flows=tuple(flows),
            serving_plmn=selected_plmn(ctx.profile, self.cells[ctx.cell_id].config.access),
            cause=cause,
            created_at=self.now if created_at is None else created_at,
        )

    def _admit(self, ctx: UeContext, cell: CellRuntime, request: AdmissionRequest) -> None:
        decision = admit_request(request, cell.admission)
        commit_decision(request, decision, cell.admission, self.now)
        self._settle(ctx, cell, request, decision)
        self._handle_evictions(cell)
        if self.audit:
            audit_cell(cell.admission)

    def _settle(self, ctx: UeContext, cell: CellRuntime, request: AdmissionRequest, decision: AdmissionDecision):
        flow_setup = request.kind == RequestKind.QOS_FLOW_SETUP
        handover = request.kind == RequestKind.HANDOVER_IN
        if decision.kind == DecisionKind.QUEUE:
            self.metrics.count("queue_waits", **ctx.labels())
            self._note(ctx, "queued", request.kind.value)
            self.engine.schedule(
                self.now + cell.config.admission.queue_timeout,
                EventKind.QUEUE_TIMEOUT,
                self._on_queue_timeout,
                cell_id=cell.cell_id,
                ue_id=ctx.ue_id,
                slice_tag=ctx.slice_tag,
            )
        elif decision.admitted:
            self._note(ctx, decision.kind.value, request.kind.value)
            if flow_setup:
                self.metrics.count("qos_flows_admitted", slice_=ctx.slice_tag)
            elif handover:
                ctx.handover_pending = False
                self.metrics.count("handovers_admitted", slice_=ctx.slice_tag)
                self._start_session(ctx, cell)
            else:
                self._connect(ctx, cell)
        else:
            if decision.reason == REASON_UNKNOWN_SLICE:
                self.metrics.count("config_errors", **ctx.labels())
            wait_time = decision.wait_time
            self._note(ctx, "reject", f"{request.kind.value} {decision.reason} wait_time={wait_time}")
            if flow_setup:
                self.metrics.count("qos_flows_rejected", slice_=ctx.slice_tag)
                return
            if handover:
                ctx.handover_pending = False
                self.metrics.count("handovers_rejected", slice_=ctx.slice_tag)
                return
            self._finish(ctx, "rejects")
            if wait_time:
                ctx.profile = apply_wait_time(ctx.profile, wait_time, self.now)

    def _connect(self, ctx: UeContext, cell: CellRuntime) -> None:
        attempt = ctx.attempt
        labels = ctx.labels()
        self.metrics.observe("access_latency", self.now - attempt.created_at, **labels)
        self.metrics.observe("ra_messages", attempt.messages, **labels)
        self._finish(ctx, "access_success")
        self._start_session(ctx, cell)

    def _start_session(self, ctx: UeContext, cell: CellRuntime) -> None:
        ctx.session += 1
        ctx.profile = ctx.profile.model_copy(
            update={"rrc_state": RrcState.CONNECTED, "serving_cell": cell.cell_id, "anchor_cell": None}
        )
        pop = ctx.population
        if pop.fixed_sessions:
            holding = pop.session_duration
        else:
            holding = int(self.streams.stream(f"holding/{pop.name}").exponential(pop.session_duration))
        reason = ReleaseReason.INACTIVITY_TO_INACTIVE if pop.release_to_inactive else ReleaseReason.NORMAL
        self.engine.schedule(
            self.now + max(holding, 1),
            EventKind.RELEASE,
            self._on_release,
            cell_id=cell.cell_id,
            ue_id=ctx.ue_id,
            slice_tag=ctx.slice_tag,
            payload=(ctx.session, reason),
        )

    def _on_release(self, event: Event) -> None:
        session, reason = event.payload
        ctx = self.ues[event.ue_id]
        if ctx.session != session:
            return
        cell = self.cells[event.cell_id]
        if not release_connection(ctx.ue_id, cell.admission, reason):
            self.metrics.count("release_warnings", slice_=ctx.slice_tag)
        cell.admission.drop_queued(ctx.ue_id)
        ctx.session += 1
        if reason == ReleaseReason.INACTIVITY_TO_INACTIVE:
            ctx.profile = ctx.profile.model_copy(update={"rrc_state": RrcState.INACTIVE, "anchor_cell": cell.cell_id})
        else:
            ctx.profile = ctx.profile.model_copy(update={"rrc_state": RrcState.IDLE, "anchor_cell": None})
        self._note(ctx, "release", reason.value)
        self._drain_queue(cell)

    def _on_queue_timeout(self, event: Event) -> None:
        self._drain_queue(self.cells[event.cell_id])

    def _drain_queue(self, cell: CellRuntime) -> None:
        for request, decision in process_queue(cell.admission, self.now):
            self._settle(self.ues[request.ue_id], cell, request, decision)
        self._handle_evictions(cell)
        if self.audit:
            audit_cell(cell.admission)

    def _handle_evictions(self, cell: CellRuntime) -> None:
        evicted = defaultdict(list)
        for eviction in cell.admission.pop_evictions():
            if self.audit:
                audit_eviction(eviction)
            evicted[eviction.victim.ue_id].append(eviction.victim.flow_id)
        for ue_id in sorted(evicted):
            ctx = self.ues[ue_id]
            self.metrics.count("preemptions", slice_=ctx.slice_tag, n=len(evicted[ue_id]))
            self._note(ctx, "preempted", ",".join(evicted[ue_id]))
            if cell.admission.flows_of(ue_id):
                continue
            cell.admission.drop_queued(ue_id)
            ctx.session += 1
            ctx.profile = ctx.profile.model_copy(update={"rrc_state": RrcState.IDLE, "anchor_cell": None})
            wait_time = cell.config.admission.release_wait_time
            if wait_time:
                ctx.profile = apply_wait_time(ctx.profile, wait_time, self.now)

    # paging

    def _on_paging_arrival(self, event: Event) -> None:
        ctx = self.ues.get(event.ue_id)
        if ctx is None:
            logger.warning(f"Paging for unknown UE {event.ue_id} ignored")
        profile = ctx.profile if ctx is not None else None
        if profile is not None and profile.rrc_state == RrcState.CONNECTED:
            self.metrics.count("paging_not_needed", slice_=ctx.slice_tag)
            return
        origin = PagingOrigin.RAN if profile is not None and profile.rrc_state == RrcState.INACTIVE else PagingOrigin.CN
        request = PagingRequest(
            request_id=next(self._paging_ids),
            target_ue=event.ue_id,
            priority=event.payload or 1,
            origin=origin,
            enqueue_time=self.now,
        )
        route = route_paging(request, profile, self.topology)
        if not route.cells:
            self.metrics.count("paging_failures", slice_=ctx.slice_tag if ctx is not None else "")
            return
        for cell_id in sorted(route.immediate):
            self._enqueue_page(self.cells[cell_id], request)
        if route.delayed:
            self.engine.schedule(
                self.now + route.delay,
                EventKind.RAN_PAGING,
                self._on_ran_paging,
                ue_id=event.ue_id,
                slice_tag=event.slice_tag,
                payload=(request, tuple(sorted(route.delayed))),
            )

    def _on_ran_paging(self, event: Event) -> None:
        request, cell_ids = event.payload
        for cell_id in cell_ids:
            self._enqueue_page(self.cells[cell_id], request)

    def _enqueue_page(self, cell: CellRuntime, request: PagingRequest) -> None:
        cell.paging_queue.append(request)
        if cell.next_paging_cycle is None:
            cycle = cell.config.paging.cycle
            cell.next_paging_cycle = (self.now // cycle + 1) * cycle
            self.engine.schedule(
                cell.next_paging_cycle, EventKind.PAGING_CYCLE, self._on_paging_cycle, cell_id=cell.cell_id
            )

    def _on_paging_cycle(self, event: Event) -> None:
        cell = self.cells[event.cell_id]
        paging = cell.config.paging
        cell.next_paging_cycle = None
        selection = paging_control_filter(
            cell.paging_queue, paging.budget, self.now, paging.effective_discard_timeout
        )
        cell.paging_queue = list(selection.deferred)

        for request in selection.dropped:
            self.metrics.count("paging_dropped", ac="0", slice_=self._slice_of(request.target_ue))
        detail = [f"paged={len(selection.to_page)}", f"deferred={len(selection.deferred)}"]
        detail.append(f"dropped={len(selection.dropped)}")
        if selection.to_page:
            detail.append(f"max_paged_priority={max(r.priority for r in selection.to_page)}")
        if selection.deferred:
            detail.append(f"min_deferred_priority={min(r.priority for r in selection.deferred)}")
        if selection.dropped:
            detail.append(f"min_dropped_age={min(self.now - r.enqueue_time for r in selection.dropped)}")
        self.log.note(self.now, "paging-selection", cell.cell_id, detail=" ".join(detail))

        for request in selection.to_page:
            self.metrics.count("paging_sent", ac="0", slice_=self._slice_of(request.target_ue))
            ctx = self.ues.get(request.target_ue)
            if ctx is None or ctx.cell_id != cell.cell_id or ctx.attempt is not None:
                continue
            if ctx.profile.rrc_state != RrcState.CONNECTED:
                self.engine.schedule(
                    self.now,
                    EventKind.ATTEMPT_START,
                    self._on_attempt_start,
                    cell_id=ctx.cell_id,
                    ue_id=ctx.ue_id,
                    slice_tag=ctx.slice_tag,
                    payload=AttemptSpec(cause=EstablishmentCause.MT_ACCESS),
                )

        if cell.paging_queue:
            cell.next_paging_cycle = self.now + paging.cycle
            self.engine.schedule(
                cell.next_paging_cycle, EventKind.PAGING_CYCLE, self._on_paging_cycle, cell_id=cell.cell_id
            )

    def _slice_of(self, ue_id: int) -> str:
        ctx = self.ues.get(ue_id)
        return ctx.slice_tag if ctx is not None else ""


def run(
    scenario: Union[ScenarioConfig, dict],
    seed: Optional[int] = None,
    audit: Optional[bool] = None,
    keep_log: bool = True,
) -> SimulationResult:
    """
    Runs a scenario to its horizon.

    The result is fully determined by the scenario and the seed: every random
    draw comes from a named substream of the seed.

    :param scenario: A validated scenario, or its raw mapping.
    :param seed: Seed overriding the scenario's default.
    :param audit: Enable the admission audit after every admission step.
    :param keep_log: Keep event log records, not only the digest.
    :return: Metrics report and event log of the run.
    :rtype: SimulationResult
    :raises ScenarioError: If a raw mapping does not validate; no event runs.
    """
    if not isinstance(scenario, ScenarioConfig):
        try:
            scenario = ScenarioConfig.model_validate(scenario)
        except ValidationError as e:
            raise ScenarioError.from_validation_error(e) from None
    return Simulation(scenario, seed=seed, audit=audit, keep_log=keep_log).run()
