"""
Admission control: the last gate before a connection or QoS flow is set up.

A request is admitted against the per-slice resource pools of a cell, pre-empts
lower-priority flows of the same slice, waits in the admission queue, or is
rejected (with waitTime for UE-originated setup and resume requests).

Resource accounting is in abstract integer units. Each slice pool owns a
dedicated capacity; units beyond it come from the cell's shared pool, so the
dedicated part of a pool is ``min(used, dedicated_capacity)`` and the rest is
shared.
"""
import logging
from collections import Counter, defaultdict
from enum import Enum
from functools import partial
from typing import Annotated, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic.dataclasses import dataclass

from .core_model import (
    Duration,
    EstablishmentCause,
    PlmnId,
    QosFlowRequest,
    ResourceType,
    Snssai,
    seconds,
)

logger = logging.getLogger(__name__)

REASON_UNKNOWN_SLICE = "unknown-slice"
REASON_NO_RESOURCES = "no-resources"
REASON_QUEUE_TIMEOUT = "queue-timeout"


class AdmissionAuditError(RuntimeError):
    """Resource conservation or the eviction rule was violated."""


class RequestKind(str, Enum):
    INITIAL_SETUP = "initial-setup"
    RESUME = "resume"
    HANDOVER_IN = "handover-in"
    QOS_FLOW_SETUP = "qos-flow-setup"


# Request kinds whose rejection may carry waitTime.
WAIT_TIME_KINDS = frozenset({RequestKind.INITIAL_SETUP, RequestKind.RESUME})


class DecisionKind(str, Enum):
    ADMIT = "admit"
    QUEUE = "queue"
    REJECT = "reject"
    PREEMPT_AND_ADMIT = "preempt-and-admit"


class ReleaseReason(str, Enum):
    NORMAL = "normal"
    PREEMPTED = "preempted"
    INACTIVITY_TO_INACTIVE = "inactivity-to-inactive"


class PreemptionGranularity(str, Enum):
    FLOW = "flow"
    UE = "ue"


class AdmissionPolicy(BaseModel):
    """
    Operator policy of a cell's admission control.

    :ivar queueing_enabled: Whether requests that cannot be served now may wait.
    :ivar queue_capacity: Maximum queued requests per slice.
    :ivar queue_timeout: Time after which a queued request is rejected.
    :ivar reject_wait_time: waitTime attached to rejected setup and resume
        requests; None sends no waitTime.
    :ivar release_wait_time: waitTime in the RRC Release sent to pre-empted UEs.
    :ivar preemption_enabled: Whether pre-emption-capable flows may evict.
    :ivar preemption_granularity: Evict single flows or whole UE contexts.
    :ivar plmn_quotas: Maximum reserved units per serving PLMN (``"MCC-MNC"``).
    :ivar delay_critical_first: Serve Delay-Critical GBR requests ahead of
        other requests of the same ARP level in the queue.
    :ivar priority_causes: Establishment causes served ahead of every other
        request in the queue; such a request queues instead of being rejected
        even when ``queueing_enabled`` is off.
    """

    queueing_enabled: bool = False
    queue_capacity: int = Field(default=16, ge=0)
    queue_timeout: Duration = Field(default=seconds(1), gt=0)
    reject_wait_time: Optional[Duration] = Field(default=seconds(4), gt=0)
    release_wait_time: Optional[Duration] = Field(default=None, gt=0)
    preemption_enabled: bool = True
    preemption_granularity: PreemptionGranularity = PreemptionGranularity.FLOW
    plmn_quotas: Dict[str, Annotated[int, Field(ge=0)]] = {}
    delay_critical_first: bool = True
    priority_causes: FrozenSet[EstablishmentCause] = frozenset()

    @field_validator("plmn_quotas")
    @classmethod
    def _normalize_plmns(cls, quotas):
        return {str(PlmnId.model_validate(plmn)): quota for plmn, quota in quotas.items()}


@dataclass
class SlicePool:
    snssai: Snssai
    dedicated_capacity: Annotated[int, Field(ge=0)]
    used: Annotated[int, Field(ge=0)] = 0

    @property
    def dedicated_used(self) -> int:
        return min(self.used, self.dedicated_capacity)

    @property
    def shared_used(self) -> int:
        return max(0, self.used - self.dedicated_capacity)


class AdmissionRequest(BaseModel):
    """
    A request reaching admission control from a UE, the CN or a peer gNB.

    Setup and resume requests carry the establishment cause; handover and QoS
    flow setup requests never went through UAC and carry none.
    """

    model_config = ConfigDict(frozen=True)

    request_id: int
    kind: RequestKind
    ue_id: int
    flows: Tuple[QosFlowRequest, ...] = Field(min_length=1)
    serving_plmn: PlmnId
    cause: Optional[EstablishmentCause] = None
    created_at: int = 0

    @model_validator(mode="after")
    def _consistent(self):
        if self.kind in WAIT_TIME_KINDS and self.cause is None:
            raise ValueError(f"{self.kind.value} requests need an establishment cause")
        flow_ids = [flow.flow_id for flow in self.flows]
        if len(set(flow_ids)) != len(flow_ids):
            raise ValueError(f"duplicate flow ids in request {self.request_id}")
        return self

    @property
    def top_priority(self) -> int:
        return min(flow.arp.priority_level for flow in self.flows)

    @property
    def slices(self) -> FrozenSet[Snssai]:
        return frozenset(flow.snssai for flow in self.flows)

    @property
    def demand(self) -> int:
        return sum(flow.reserved_units for flow in self.flows)

    @property
    def has_delay_critical(self) -> bool:
        return any(flow.resource_type == ResourceType.DELAY_CRITICAL_GBR for flow in self.flows)

    def has_priority_cause(self, policy: AdmissionPolicy) -> bool:
        return self.cause is not None and self.cause in policy.priority_causes


@dataclass(frozen=True)
class AdmissionDecision:
    kind: DecisionKind
    position: Optional[int] = None
    wait_time: Optional[int] = None
    victims: Tuple[str, ...] = ()
    evicted_by: Tuple[str, ...] = ()
    reason: str = ""

    @classmethod
    def admit(cls) -> "AdmissionDecision":
        return cls(kind=DecisionKind.ADMIT)

    @classmethod
    def queue(cls, position: int) -> "AdmissionDecision":
        return cls(kind=DecisionKind.QUEUE, position=position)

    @classmethod
    def reject(cls, wait_time: Optional[int] = None, reason: str = REASON_NO_RESOURCES) -> "AdmissionDecision":
        return cls(kind=DecisionKind.REJECT, wait_time=wait_time, reason=reason)

    @classmethod
    def preempt(cls, victims: Sequence[str], evicted_by: Sequence[str]) -> "AdmissionDecision":
        """``evicted_by[i]`` is the incoming flow that needed ``victims[i]`` gone."""
        if len(victims) != len(evicted_by):
            raise ValueError(f"{len(victims)} victims but {len(evicted_by)} evicting flows")
        return cls(kind=DecisionKind.PREEMPT_AND_ADMIT, victims=tuple(victims), evicted_by=tuple(evicted_by))

    @property
    def admitted(self) -> bool:
        return self.kind in (DecisionKind.ADMIT, DecisionKind.PREEMPT_AND_ADMIT)


@dataclass(frozen=True)
class AdmittedFlow:
    flow: QosFlowRequest
    ue_id: int
    plmn: str
    admitted_at: int
    seq: int

    @property
    def flow_id(self) -> str:
        return self.flow.flow_id

    @property
    def units(self) -> int:
        return self.flow.reserved_units

    @property
    def snssai(self) -> Snssai:
        return self.flow.snssai


@dataclass(frozen=True)
class QueuedRequest:
    request: AdmissionRequest
    enqueued_at: int
    seq: int


@dataclass(frozen=True)
class Eviction:
    """A flow released by pre-emption, with the request and the flow of it that caused it."""

    preemptor: AdmissionRequest
    preempting_flow: QosFlowRequest
    victim: AdmittedFlow
    at: int


class CellState(object):
    """
    Admission-side state of one cell: slice pools, shared pool, admitted
    flows and the admission queue.

    Mutated only by the admission operations of this module, inside the event
    handlers of the owning cell.

    :ivar pools: Slice pools keyed by S-NSSAI.
    :ivar shared_capacity: Units of the cell-level shared pool.
    :ivar flows: Admitted flows keyed by flow id.
    :ivar queue: Requests waiting for resources.
    :ivar plmn_used: Reserved units per serving PLMN.
    :ivar evictions: Pre-emptions since the last :meth:`pop_evictions`.
    """

    def __init__(
        self,
        cell_id: str,
        pools: Iterable[SlicePool],
        shared_capacity: int = 0,
        policy: Optional[AdmissionPolicy] = None,
    ):
        if shared_capacity < 0:
            raise ValueError(f"shared capacity must be >= 0, got {shared_capacity}")
        self.cell_id = cell_id
        self.pools: Dict[Snssai, SlicePool] = {}
        for pool in pools:
            if pool.snssai in self.pools:
                raise ValueError(f"cell {cell_id} declares slice {pool.snssai} twice")
            self.pools[pool.snssai] = pool
        self.shared_capacity = shared_capacity
        self.policy = policy or AdmissionPolicy()
        self.flows: Dict[str, AdmittedFlow] = {}
        self.queue: List[QueuedRequest] = []
        self.plmn_used: Counter = Counter()
        self.evictions: List[Eviction] = []
        self._seq = 0

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def shared_used(self) -> int:
        return sum(pool.shared_used for pool in self.pools.values())

    def free_units(self, snssai: Snssai) -> int:
        """Units a new flow of ``snssai`` could reserve right now."""
        return _free_units(self, {s: pool.used for s, pool in self.pools.items()}, snssai)

    def flows_of(self, ue_id: int) -> List[AdmittedFlow]:
        return sorted((f for f in self.flows.values() if f.ue_id == ue_id), key=lambda f: f.seq)

    def reserve(self, flow: QosFlowRequest, ue_id: int, plmn: str, now: int) -> AdmittedFlow:
        if flow.flow_id in self.flows:
            raise ValueError(f"flow '{flow.flow_id}' is already admitted in cell {self.cell_id}")
        if flow.reserved_units > self.free_units(flow.snssai):
            raise ValueError(f"flow '{flow.flow_id}' needs {flow.reserved_units} units, slice {flow.snssai} is short")
        admitted = AdmittedFlow(flow=flow, ue_id=ue_id, plmn=plmn, admitted_at=now, seq=self._next_seq())
        self.flows[flow.flow_id] = admitted
        self.pools[flow.snssai].used += admitted.units
        self.plmn_used[plmn] += admitted.units
        return admitted

    def remove(self, flow_id: str) -> AdmittedFlow:
        admitted = self.flows.pop(flow_id)
        self.pools[admitted.snssai].used -= admitted.units
        self.plmn_used[admitted.plmn] -= admitted.units
        return admitted

    def enqueue(self, request: AdmissionRequest, now: int) -> QueuedRequest:
        queued = QueuedRequest(request=request, enqueued_at=now, seq=self._next_seq())
        self.queue.append(queued)
        return queued

    def drop_queued(self, ue_id: int) -> List[QueuedRequest]:
        """Removes the queued requests of a UE whose context went away."""
        dropped = [queued for queued in self.queue if queued.request.ue_id == ue_id]
        if dropped:
            self.queue = [queued for queued in self.queue if queued.request.ue_id != ue_id]
        return dropped

    def queued_in_slice(self, snssai: Snssai) -> int:
        return sum(1 for queued in self.queue if snssai in queued.request.slices)

    def pop_evictions(self) -> List[Eviction]:
        evictions, self.evictions = self.evictions, []
        return evictions


def _free_units(cell: CellState, used: Dict[Snssai, int], snssai: Snssai) -> int:
    pool = cell.pools[snssai]
    dedicated_free = pool.dedicated_capacity - min(used[snssai], pool.dedicated_capacity)
    shared_used = sum(max(0, used[s] - p.dedicated_capacity) for s, p in cell.pools.items())
    return dedicated_free + cell.shared_capacity - shared_used


def eviction_allowed(victim: AdmittedFlow, incoming_level: int) -> bool:
    """A flow may be evicted only if vulnerable and of strictly lower priority."""
    return victim.flow.arp.preemption_vulnerability and victim.flow.arp.priority_level > incoming_level


@dataclass(frozen=True)
class VictimCandidate:
    """A flow, or a whole UE context, that pre-emption could release."""

    flow_ids: Tuple[str, ...]
    ue_id: int
    value: int
    cost: int
    arp_level: int
    admitted_at: int
    seq: int


def _preference(candidate: VictimCandidate):
    return -candidate.arp_level, -candidate.admitted_at, -candidate.seq


def eviction_candidates(
    cell: CellState,
    snssai: Snssai,
    incoming_level: int,
    granularity: PreemptionGranularity = PreemptionGranularity.FLOW,
    excluded: FrozenSet[str] = frozenset(),
    requester: Optional[int] = None,
    used: Optional[Dict[Snssai, int]] = None,
) -> List[VictimCandidate]:
    """
    Lists what a flow of ``snssai`` at ARP ``incoming_level`` may evict, most
    preferred victim first (highest ARP level, then most recently admitted).

    ``value`` is the number of units a candidate makes available to
    ``snssai``, ``cost`` the total units it releases. A whole UE context
    qualifies only if it holds units in ``snssai``; its value then also counts
    the shared-pool units its flows in other slices give back. The requesting
    UE's own flows never qualify.

    :param used: Pool usage to value candidates against; defaults to the
        cell's current usage.
    """
    if used is None:
        used = {s: pool.used for s, pool in cell.pools.items()}
    candidates = []
    if granularity == PreemptionGranularity.FLOW:
        for admitted in cell.flows.values():
            if admitted.flow_id in excluded or admitted.ue_id == requester:
                continue
            if admitted.snssai != snssai or admitted.units == 0:
                continue
            if eviction_allowed(admitted, incoming_level):
                candidates.append(
                    VictimCandidate(
                        flow_ids=(admitted.flow_id,),
                        ue_id=admitted.ue_id,
                        value=admitted.units,
                        cost=admitted.units,
                        arp_level=admitted.flow.arp.priority_level,
                        admitted_at=admitted.admitted_at,
                        seq=admitted.seq,
                    )
                )
    else:
        by_ue = defaultdict(list)
        for admitted in cell.flows.values():
            by_ue[admitted.ue_id].append(admitted)
        for ue_id, flows in by_ue.items():
            if ue_id == requester or any(f.flow_id in excluded for f in flows):
                continue
            value = sum(f.units for f in flows if f.snssai == snssai)
            if value == 0 or not all(eviction_allowed(f, incoming_level) for f in flows):
                continue
            # flows elsewhere count for the shared units they hand back
            held_elsewhere = Counter()
            for f in flows:
                if f.snssai != snssai:
                    held_elsewhere[f.snssai] += f.units
            for other, units in held_elsewhere.items():
                value += min(units, max(0, used[other] - cell.pools[other].dedicated_capacity))
            flows.sort(key=lambda f: f.seq)
            candidates.append(
                VictimCandidate(
                    flow_ids=tuple(f.flow_id for f in flows),
                    ue_id=ue_id,
                    value=value,
                    cost=sum(f.units for f in flows),
                    arp_level=min(f.flow.arp.priority_level for f in flows),
                    admitted_at=max(f.admitted_at for f in flows),
                    seq=max(f.seq for f in flows),
                )
            )
    candidates.sort(key=_preference)
    return candidates


def select_victims(candidates: Sequence[VictimCandidate], shortfall: int) -> Optional[List[VictimCandidate]]:
    """
    Chooses the victim set of minimal total cost whose value covers ``shortfall``.

    Among equally cheap sets the one that is lexicographically first over
    ``candidates`` (included before excluded) wins, so the order of
    ``candidates`` expresses victim preference.

    :param candidates: Eviction candidates in preference order.
    :param shortfall: Units still missing for the incoming flow.
    :return: The chosen candidates, or None if no subset frees enough.
    """
    if shortfall <= 0:
        return []
    n = len(candidates)
    unreachable = np.iinfo(np.int64).max // 4
    need = np.arange(shortfall + 1)
    # best[i, v]: cheapest way to free v units using candidates[i:]
    best = np.full((n + 1, shortfall + 1), unreachable, dtype=np.int64)
    best[n, 0] = 0
    for i in range(n - 1, -1, -1):
        candidate = candidates[i]
        taken = candidate.cost + best[i + 1, np.maximum(need - candidate.value, 0)]
        best[i] = np.minimum(best[i + 1], taken)
    if best[0, shortfall] >= unreachable:
        return None

    chosen = []
    remaining, budget = shortfall, int(best[0, shortfall])
    for i, candidate in enumerate(candidates):
        if remaining == 0:
            break
        after = max(remaining - candidate.value, 0)
        if candidate.cost + int(best[i + 1, after]) == budget:
            chosen.append(candidate)
            budget -= candidate.cost
            remaining = after
    return chosen


def _plan_admission(
    req: AdmissionRequest, cell: CellState, policy: AdmissionPolicy
) -> Optional[List[Tuple[str, str]]]:
    """
    (victim flow id, evicting flow id) pairs that let every flow of ``req``
    in, or None if it cannot be served now.
    """
    plmn = str(req.serving_plmn)
    quota = policy.plmn_quotas.get(plmn)
    if quota is not None and cell.plmn_used[plmn] + req.demand > quota:
        return None

    used = {snssai: pool.used for snssai, pool in cell.pools.items()}
    evicted: Set[str] = set()
    victims: List[Tuple[str, str]] = []
    for flow in sorted(req.flows, key=lambda f: (f.arp.priority_level, f.flow_id)):
        need = flow.reserved_units
        if need == 0:
            continue
        shortfall = need - _free_units(cell, used, flow.snssai)
        if shortfall > 0 and not (policy.preemption_enabled and flow.arp.preemption_capability):
            return None
        # shared units handed back by UEs of one slice are capped by that slice's share
        while shortfall > 0:
            candidates = eviction_candidates(
                cell,
                flow.snssai,
                flow.arp.priority_level,
                policy.preemption_granularity,
                frozenset(evicted),
                req.ue_id,
                used,
            )
            chosen = select_victims(candidates, shortfall)
            if chosen is None:
                return None
            for candidate in chosen:
                for flow_id in candidate.flow_ids:
                    victim = cell.flows[flow_id]
                    used[victim.snssai] -= victim.units
                    evicted.add(flow_id)
                    victims.append((flow_id, flow.flow_id))
            shortfall = need - _free_units(cell, used, flow.snssai)
        used[flow.snssai] += need
    return victims


def _try_admit(req: AdmissionRequest, cell: CellState, policy: AdmissionPolicy) -> Optional[AdmissionDecision]:
    victims = _plan_admission(req, cell, policy)
    if victims is None:
        return None
    if victims:
        return AdmissionDecision.preempt(*zip(*victims))
    return AdmissionDecision.admit()


def reject_wait_time(req: AdmissionRequest, policy: AdmissionPolicy) -> Optional[int]:
    return policy.reject_wait_time if req.kind in WAIT_TIME_KINDS else None


def _queue_key(queued: QueuedRequest, policy: AdmissionPolicy):
    request = queued.request
    delay_critical = policy.delay_critical_first and request.has_delay_critical
    cause_rank = 0 if request.has_priority_cause(policy) else 1
    return cause_rank, request.top_priority, 0 if delay_critical else 1, queued.enqueued_at, queued.seq


def admit_request(req: AdmissionRequest, cell: CellState, policy: Optional[AdmissionPolicy] = None) -> AdmissionDecision:
    """
    Decides how admission control answers a request. The cell is not modified;
    :func:`commit_decision` applies the answer.

    Every flow is checked against its slice pool, highest ARP priority first,
    on the state left by the flows before it. A flow that does not fit may
    pre-empt within its own slice if it is pre-emption capable: the victims
    are vulnerable flows of strictly lower priority forming the cheapest set
    that frees enough units. If any flow stays unserved, the request is
    queued when the policy allows, or its establishment cause is one of the
    policy's priority causes, and the slice queue has room; else rejected.

    :param req: The request to evaluate.
    :type req: AdmissionRequest
    :param cell: Admission state of the serving cell.
    :type cell: CellState
    :param policy: Policy to apply; defaults to the cell's own policy.
    :type policy: AdmissionPolicy
    :return: Admit, PreemptAndAdmit with the victim flow ids, Queue with the
        queue position, or Reject with the optional waitTime.
    :rtype: AdmissionDecision
    """
    policy = policy or cell.policy
    unknown = sorted({str(flow.snssai) for flow in req.flows if flow.snssai not in cell.pools})
    if unknown:
        logger.warning(f"Request {req.request_id} of UE {req.ue_id} names slices {unknown} unknown to cell {cell.cell_id}")
        return AdmissionDecision.reject(reason=REASON_UNKNOWN_SLICE)

    decision = _try_admit(req, cell, policy)
    if decision is not None:
        return decision

    may_queue = policy.queueing_enabled or req.has_priority_cause(policy)
    if may_queue and all(cell.queued_in_slice(s) < policy.queue_capacity for s in req.slices):
        # a new entry sorts after every queued request of the same class
        rank = _queue_key(QueuedRequest(request=req, enqueued_at=0, seq=0), policy)[:3]
        position = 1 + sum(1 for queued in cell.queue if _queue_key(queued, policy)[:3] <= rank)
        return AdmissionDecision.queue(position)
    return AdmissionDecision.reject(wait_time=reject_wait_time(req, policy), reason=REASON_NO_RESOURCES)


def commit_decision(req: AdmissionRequest, decision: AdmissionDecision, cell: CellState, now: int) -> List[AdmittedFlow]:
    """
    Applies a decision of :func:`admit_request` to the cell.

    :return: The flows released by pre-emption, also recorded in
        ``cell.evictions``.
    """
    if decision.kind == DecisionKind.QUEUE:
        cell.enqueue(req, now)
        return []
    if decision.kind == DecisionKind.REJECT:
        return []

    incoming = {flow.flow_id: flow for flow in req.flows}
    evicted = []
    for flow_id, evicting in zip(decision.victims, decision.evicted_by):
        for victim in release_connection(flow_id, cell, ReleaseReason.PREEMPTED):
            cell.evictions.append(Eviction(preemptor=req, preempting_flow=incoming[evicting], victim=victim, at=now))
            evicted.append(victim)
    plmn = str(req.serving_plmn)
    for flow in req.flows:
        cell.reserve(flow, req.ue_id, plmn, now)
    return evicted


def release_connection(target: Union[int, str], cell: CellState, reason: ReleaseReason) -> List[AdmittedFlow]:
    """
    Releases a UE context (``target`` is a UE id) or a single flow (a flow id).

    All flows of a UE leave together. The cell is updated in place.

    :return: The released flows; empty for an unknown target.
    """
    if isinstance(target, str):
        flow_ids = [target] if target in cell.flows else []
    else:
        flow_ids = [admitted.flow_id for admitted in cell.flows_of(target)]
    if not flow_ids:
        logger.warning(f"Release ({reason.value}) of unknown target {target!r} in cell {cell.cell_id} ignored")
        return []
    released = [cell.remove(flow_id) for flow_id in flow_ids]
    logger.debug(f"Released {flow_ids} in cell {cell.cell_id} ({reason.value})")
    return released


def process_queue(
    cell: CellState, now: int, policy: Optional[AdmissionPolicy] = None
) -> List[Tuple[AdmissionRequest, AdmissionDecision]]:
    """
    Re-evaluates queued requests after resources were freed.

    Requests are visited by (priority cause first, ARP priority, Delay-Critical
    GBR first, enqueue time). One that has waited ``queue_timeout`` is rejected with waitTime.
    Admitted requests are committed immediately; a request that still cannot
    be served blocks the later requests of its slices so the queue order holds
    within a slice without stalling other slices.
    """
    policy = policy or cell.policy
    if not cell.queue:
        return []

    results = []
    waiting = []
    blocked: Set[Snssai] = set()
    for queued in sorted(cell.queue, key=partial(_queue_key, policy=policy)):
        req = queued.request
        if now - queued.enqueued_at >= policy.queue_timeout:
            results.append((req, AdmissionDecision.reject(reject_wait_time(req, policy), REASON_QUEUE_TIMEOUT)))
            continue
        if req.slices & blocked:
            waiting.append(queued)
            continue
        decision = _try_admit(req, cell, policy)
        if decision is None:
            blocked |= req.slices
            waiting.append(queued)
            continue
        commit_decision(req, decision, cell, now)
        results.append((req, decision))
    cell.queue = waiting
    return results


def audit_cell(cell: CellState) -> None:
    """
    Checks resource conservation of a cell.

    :raises AdmissionAuditError: If a pool's ``used`` differs from the units
        its admitted flows hold, or the shared pool is overdrawn.
    """
    held = Counter()
    for admitted in cell.flows.values():
        if admitted.snssai not in cell.pools:
            raise AdmissionAuditError(f"flow '{admitted.flow_id}' holds units of unknown slice {admitted.snssai}")
        held[admitted.snssai] += admitted.units
    for snssai, pool in cell.pools.items():
        if pool.used != held[snssai]:
            raise AdmissionAuditError(
                f"cell {cell.cell_id} slice {snssai}: used={pool.used} but admitted flows hold {held[snssai]}"
            )
    if cell.shared_used() > cell.shared_capacity:
        raise AdmissionAuditError(
            f"cell {cell.cell_id}: shared pool overdrawn ({cell.shared_used()} > {cell.shared_capacity})"
        )


def audit_eviction(eviction: Eviction) -> None:
    """
    Checks the eviction rule for one pre-emption.

    :raises AdmissionAuditError: If the pre-empting flow was not capable, or
        the victim was not vulnerable or not of strictly lower priority than
        that flow.
    """
    flow = eviction.preempting_flow
    if not flow.arp.preemption_capability or not eviction_allowed(eviction.victim, flow.arp.priority_level):
        raise AdmissionAuditError(
            f"flow '{eviction.victim.flow_id}' (ARP {eviction.victim.flow.arp.priority_level}) evicted by flow "
            f"'{flow.flow_id}' (ARP {flow.arp.priority_level}) of request {eviction.preemptor.request_id} "
            f"in violation of the eviction rule"
        )
