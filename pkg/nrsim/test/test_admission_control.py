import itertools
import logging

import numpy as np
import pytest

from nrsim.admission_control import (
    REASON_NO_RESOURCES,
    REASON_QUEUE_TIMEOUT,
    REASON_UNKNOWN_SLICE,
    AdmissionAuditError,
    AdmissionPolicy,
    AdmittedFlow,
    CellState,
    DecisionKind,
    Eviction,
    PreemptionGranularity,
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
from nrsim.core_model import EstablishmentCause, ResourceType, Snssai, seconds

from .factories import make_flow, make_request

SST1 = Snssai(sst=1)
SST2 = Snssai(sst=2)


def make_cell(capacity=10, shared=0, second=None, **policy) -> CellState:
    pools = [SlicePool(snssai=SST1, dedicated_capacity=capacity)]
    if second is not None:
        pools.append(SlicePool(snssai=SST2, dedicated_capacity=second))
    return CellState("c1", pools, shared_capacity=shared, policy=AdmissionPolicy(**policy))


def submit(request, cell, now=0):
    decision = admit_request(request, cell)
    commit_decision(request, decision, cell, now)
    audit_cell(cell)
    return decision


class TestAdmission:
    def test_admit_within_capacity(self):
        cell = make_cell(capacity=3)
        decision = submit(make_request(1, 1, make_flow("a", demand=2)), cell)
        assert decision.kind == DecisionKind.ADMIT
        assert cell.pools[SST1].used == 2
        assert cell.free_units(SST1) == 1

    def test_non_gbr_flows_reserve_nothing(self):
        cell = make_cell(capacity=0)
        flow = make_flow("a", resource_type=ResourceType.NON_GBR)
        assert submit(make_request(1, 1, flow), cell).admitted
        assert cell.pools[SST1].used == 0

    def test_reject_carries_wait_time_for_setup_only(self):
        cell = make_cell(capacity=1, reject_wait_time="4s")
        setup = admit_request(make_request(1, 1, make_flow("a", demand=2)), cell)
        assert setup.kind == DecisionKind.REJECT
        assert setup.wait_time == seconds(4)
        assert setup.reason == REASON_NO_RESOURCES
        for kind in (RequestKind.HANDOVER_IN, RequestKind.QOS_FLOW_SETUP):
            decision = admit_request(make_request(2, 2, make_flow("b", demand=2), kind=kind), cell)
            assert decision.kind == DecisionKind.REJECT
            assert decision.wait_time is None

    def test_unknown_slice(self, caplog):
        cell = make_cell()
        with caplog.at_level(logging.WARNING, logger="nrsim.admission_control"):
            decision = admit_request(make_request(1, 1, make_flow("a", sst=7)), cell)
        assert decision.kind == DecisionKind.REJECT
        assert decision.reason == REASON_UNKNOWN_SLICE
        assert decision.wait_time is None
        assert "unknown to cell c1" in caplog.text

    def test_every_flow_must_fit(self):
        cell = make_cell(capacity=3)
        decision = submit(make_request(1, 1, make_flow("a", demand=2), make_flow("b", demand=2)), cell)
        assert decision.kind == DecisionKind.REJECT
        assert cell.flows == {}

    def test_plmn_quota(self):
        cell = make_cell(capacity=10, plmn_quotas={"001-01": 3})
        assert submit(make_request(1, 1, make_flow("a", demand=2)), cell).admitted
        assert not submit(make_request(2, 2, make_flow("b", demand=2)), cell).admitted
        assert cell.plmn_used["001-01"] == 2

    def test_shared_pool_is_drawn_after_dedicated_units(self):
        cell = make_cell(capacity=2, second=2, shared=2)
        assert submit(make_request(1, 1, make_flow("a", demand=3)), cell).admitted
        assert cell.pools[SST1].dedicated_used == 2
        assert cell.shared_used() == 1
        assert cell.free_units(SST2) == 3
        assert submit(make_request(2, 2, make_flow("b", demand=3, sst=2)), cell).admitted
        assert not submit(make_request(3, 3, make_flow("c", demand=1)), cell).admitted
        release_connection(1, cell, ReleaseReason.NORMAL)
        assert cell.shared_used() == 1
        audit_cell(cell)


class TestRelease:
    def test_release_by_ue_and_by_flow(self):
        cell = make_cell(capacity=10)
        submit(make_request(1, 1, make_flow("a", demand=2), make_flow("b", demand=3)), cell)
        submit(make_request(2, 2, make_flow("c", demand=1)), cell)
        assert [f.flow_id for f in release_connection("b", cell, ReleaseReason.NORMAL)] == ["b"]
        assert cell.pools[SST1].used == 3
        assert [f.flow_id for f in release_connection(1, cell, ReleaseReason.NORMAL)] == ["a"]
        assert cell.pools[SST1].used == 1
        audit_cell(cell)

    def test_unknown_target_is_a_no_op(self, caplog):
        cell = make_cell()
        with caplog.at_level(logging.WARNING, logger="nrsim.admission_control"):
            assert release_connection(99, cell, ReleaseReason.NORMAL) == []
            assert release_connection("nope", cell, ReleaseReason.PREEMPTED) == []
        assert caplog.text.count("ignored") == 2


class TestPreemption:
    def test_evicts_most_recent_lowest_priority_flow(self):
        cell = make_cell(capacity=4)
        submit(make_request(1, 1, make_flow("old", level=9, demand=2)), cell, now=0)
        submit(make_request(2, 2, make_flow("new", level=9, demand=2)), cell, now=1)
        request = make_request(3, 3, make_flow("mc", level=1, demand=2, capable=True))
        decision = admit_request(request, cell)
        assert decision.kind == DecisionKind.PREEMPT_AND_ADMIT
        assert decision.victims == ("new",)
        assert decision.evicted_by == ("mc",)
        evicted = commit_decision(request, decision, cell, now=2)
        assert [f.flow_id for f in evicted] == ["new"]
        (eviction,) = cell.pop_evictions()
        audit_eviction(eviction)
        audit_cell(cell)
        assert set(cell.flows) == {"old", "mc"}

    def test_protected_and_equal_priority_flows_stay(self):
        cell = make_cell(capacity=4)
        submit(make_request(1, 1, make_flow("shielded", level=9, demand=2, vulnerable=False)), cell)
        submit(make_request(2, 2, make_flow("peer", level=2, demand=2)), cell)
        decision = admit_request(make_request(3, 3, make_flow("mc", level=2, demand=1, capable=True)), cell)
        assert decision.kind == DecisionKind.REJECT

    def test_incapable_flow_never_preempts(self):
        cell = make_cell(capacity=2)
        submit(make_request(1, 1, make_flow("low", level=15, demand=2)), cell)
        assert admit_request(make_request(2, 2, make_flow("high", level=1, demand=1)), cell).kind == DecisionKind.REJECT

    def test_preemption_stays_inside_the_slice(self):
        cell = make_cell(capacity=2, second=5)
        submit(make_request(1, 1, make_flow("other-slice", level=15, demand=5, sst=2)), cell)
        submit(make_request(2, 2, make_flow("same-slice", level=1, demand=2)), cell)
        decision = admit_request(make_request(3, 3, make_flow("mc", level=1, demand=1, capable=True)), cell)
        assert decision.kind == DecisionKind.REJECT

    def test_whole_ue_granularity(self):
        granularities = {}
        for granularity in PreemptionGranularity:
            cell = make_cell(capacity=4, preemption_granularity=granularity)
            submit(make_request(1, 2, make_flow("f2", level=9, demand=2)), cell, now=0)
            submit(make_request(2, 1, make_flow("f1a", level=9, demand=1)), cell, now=1)
            submit(make_request(3, 1, make_flow("f1b", level=9, demand=1)), cell, now=2)
            request = make_request(4, 3, make_flow("mc", level=1, demand=1, capable=True))
            granularities[granularity] = admit_request(request, cell).victims
        assert granularities[PreemptionGranularity.FLOW] == ("f1b",)
        assert granularities[PreemptionGranularity.UE] == ("f1a", "f1b")

    def test_audit_catches_rule_violation(self):
        victim = AdmittedFlow(flow=make_flow("v", level=5), ue_id=1, plmn="001-01", admitted_at=0, seq=1)
        preemptor = make_request(2, 2, make_flow("p", level=5, capable=True))
        with pytest.raises(AdmissionAuditError):
            audit_eviction(Eviction(preemptor=preemptor, preempting_flow=preemptor.flows[0], victim=victim, at=0))

    def test_audit_checks_the_flow_that_evicted(self):
        victim = AdmittedFlow(flow=make_flow("v", level=5), ue_id=1, plmn="001-01", admitted_at=0, seq=1)
        strong = make_flow("strong", level=1, capable=True)
        weak = make_flow("weak", level=8, capable=True)
        preemptor = make_request(2, 2, strong, weak)
        audit_eviction(Eviction(preemptor=preemptor, preempting_flow=strong, victim=victim, at=0))
        with pytest.raises(AdmissionAuditError):
            audit_eviction(Eviction(preemptor=preemptor, preempting_flow=weak, victim=victim, at=0))

    def test_whole_ue_frees_its_shared_units_in_other_slices(self):
        decisions = {}
        for granularity in PreemptionGranularity:
            cell = make_cell(capacity=2, second=0, shared=2, preemption_granularity=granularity)
            submit(make_request(1, 1, make_flow("a", demand=1), make_flow("b", demand=2, sst=2)), cell)
            submit(make_request(2, 2, make_flow("c", demand=1)), cell)
            request = make_request(3, 3, make_flow("mc", level=1, demand=3, capable=True))
            decisions[granularity] = submit(request, cell)
            for eviction in cell.pop_evictions():
                audit_eviction(eviction)
        assert decisions[PreemptionGranularity.FLOW].kind == DecisionKind.REJECT
        whole_ue = decisions[PreemptionGranularity.UE]
        assert whole_ue.kind == DecisionKind.PREEMPT_AND_ADMIT
        assert whole_ue.victims == ("a", "b")
        assert whole_ue.evicted_by == ("mc", "mc")

    def test_shared_units_of_one_slice_count_once(self):
        cell = make_cell(capacity=2, second=2, shared=2, preemption_granularity=PreemptionGranularity.UE)
        submit(make_request(1, 1, make_flow("a", demand=1), make_flow("b", demand=2, sst=2)), cell)
        submit(make_request(2, 2, make_flow("c", demand=1), make_flow("d", demand=2, sst=2)), cell)
        too_big = make_request(3, 3, make_flow("big", level=1, demand=5, capable=True))
        assert admit_request(too_big, cell).kind == DecisionKind.REJECT
        fits = make_request(4, 3, make_flow("fits", level=1, demand=4, capable=True))
        decision = submit(fits, cell)
        assert decision.kind == DecisionKind.PREEMPT_AND_ADMIT
        assert set(decision.victims) == {"a", "b", "c", "d"}

    def test_audit_catches_conservation_error(self):
        cell = make_cell()
        submit(make_request(1, 1, make_flow("a", demand=2)), cell)
        cell.pools[SST1].used += 1
        with pytest.raises(AdmissionAuditError):
            audit_cell(cell)


def oracle_victims(cell, flow, requester):
    """Brute force over every victim subset of the incoming flow's slice."""
    eligible = [
        admitted
        for admitted in cell.flows.values()
        if admitted.snssai == flow.snssai
        and admitted.ue_id != requester
        and admitted.flow.arp.preemption_vulnerability
        and admitted.flow.arp.priority_level > flow.arp.priority_level
    ]
    eligible.sort(key=lambda f: (-f.flow.arp.priority_level, -f.admitted_at, -f.seq))
    shortfall = flow.reserved_units - cell.free_units(flow.snssai)
    if shortfall <= 0:
        return ()
    if not flow.arp.preemption_capability:
        return None
    best = None
    for mask in itertools.product((1, 0), repeat=len(eligible)):
        chosen = [f for f, take in zip(eligible, mask) if take]
        if sum(f.units for f in chosen) < shortfall:
            continue
        cost = sum(f.units for f in chosen)
        # product() yields masks in descending lexicographic order, so the first
        # cheapest mask found is the preferred one
        if best is None or cost < best[0]:
            best = (cost, tuple(f.flow_id for f in chosen))
    return None if best is None else best[1]


def test_preemption_matches_brute_force_oracle():
    rng = np.random.default_rng(42)
    preemptions = 0
    for instance in range(1000):
        cell = make_cell(capacity=int(rng.integers(1, 21)), second=20)
        for k in range(int(rng.integers(0, 7))):
            flow = make_flow(
                f"f{k}",
                level=int(rng.integers(1, 16)),
                demand=int(rng.integers(1, 6)),
                sst=int(rng.choice([1, 1, 2])),
                vulnerable=bool(rng.random() < 0.8),
            )
            if flow.reserved_units <= cell.free_units(flow.snssai):
                cell.reserve(flow, ue_id=k + 10, plmn="001-01", now=int(rng.integers(0, 4)))
        incoming = make_flow(
            "in",
            level=int(rng.integers(1, 16)),
            demand=int(rng.integers(1, 11)),
            capable=bool(rng.random() < 0.9),
        )
        request = make_request(instance, 99, incoming)
        expected = oracle_victims(cell, incoming, requester=99)
        decision = admit_request(request, cell)
        if expected is None:
            assert decision.kind == DecisionKind.REJECT, instance
        elif expected == ():
            assert decision.kind == DecisionKind.ADMIT, instance
        else:
            preemptions += 1
            assert decision.kind == DecisionKind.PREEMPT_AND_ADMIT, instance
            assert decision.victims == expected, instance
            commit_decision(request, decision, cell, now=10)
            for eviction in cell.pop_evictions():
                audit_eviction(eviction)
            audit_cell(cell)
    assert preemptions > 50


class TestQueue:
    def test_queue_position_and_order(self):
        cell = make_cell(capacity=2, queueing_enabled=True)
        submit(make_request(1, 1, make_flow("busy", level=9, demand=2)), cell)
        assert submit(make_request(2, 2, make_flow("a", level=5, demand=1)), cell, now=10).position == 1
        assert submit(make_request(3, 3, make_flow("b", level=5, demand=1)), cell, now=20).position == 2
        assert submit(make_request(4, 4, make_flow("c", level=2, demand=1)), cell, now=30).position == 1
        release_connection(1, cell, ReleaseReason.NORMAL)
        results = process_queue(cell, now=40)
        assert [request.request_id for request, _ in results] == [4, 2]
        assert all(decision.admitted for _, decision in results)
        assert [queued.request.request_id for queued in cell.queue] == [3]
        audit_cell(cell)

    def test_delay_critical_first_within_a_level(self):
        cell = make_cell(capacity=2, queueing_enabled=True)
        submit(make_request(1, 1, make_flow("busy", level=9, demand=2)), cell)
        submit(make_request(2, 2, make_flow("gbr", level=5, demand=2)), cell, now=1)
        dc = make_flow("dc", level=5, demand=2, resource_type=ResourceType.DELAY_CRITICAL_GBR)
        assert submit(make_request(3, 3, dc), cell, now=2).position == 1
        release_connection(1, cell, ReleaseReason.NORMAL)
        (admitted,) = process_queue(cell, now=3)
        assert admitted[0].request_id == 3

    def test_default_policy_ignores_the_cause(self):
        cell = make_cell(capacity=2)
        submit(make_request(1, 1, make_flow("busy", demand=2)), cell)
        for cause in (EstablishmentCause.MO_DATA, EstablishmentCause.EMERGENCY, EstablishmentCause.MPS_PRIORITY_ACCESS):
            decision = admit_request(make_request(2, 2, make_flow("a"), cause=cause), cell)
            assert (decision.kind, decision.wait_time) == (DecisionKind.REJECT, seconds(4))

    def test_priority_cause_queues_when_queueing_is_off(self):
        cell = make_cell(capacity=2, priority_causes=["emergency", "mps-PriorityAccess"])
        submit(make_request(1, 1, make_flow("busy", demand=2)), cell)
        data = admit_request(make_request(2, 2, make_flow("a"), cause=EstablishmentCause.MO_DATA), cell)
        assert (data.kind, data.wait_time) == (DecisionKind.REJECT, seconds(4))
        emergency = submit(make_request(3, 3, make_flow("b"), cause=EstablishmentCause.EMERGENCY), cell)
        assert (emergency.kind, emergency.position) == (DecisionKind.QUEUE, 1)
        mps = submit(make_request(4, 4, make_flow("c"), cause=EstablishmentCause.MPS_PRIORITY_ACCESS), cell)
        assert (mps.kind, mps.position) == (DecisionKind.QUEUE, 2)

    def test_priority_cause_is_served_first(self):
        cell = make_cell(capacity=2, queueing_enabled=True, priority_causes=["emergency"])
        submit(make_request(1, 1, make_flow("busy", demand=2)), cell)
        assert submit(make_request(2, 2, make_flow("data", level=1, demand=2)), cell, now=10).position == 1
        sos = make_request(3, 3, make_flow("sos", level=9, demand=2), cause=EstablishmentCause.EMERGENCY)
        assert submit(sos, cell, now=20).position == 1
        release_connection(1, cell, ReleaseReason.NORMAL)
        assert [request.request_id for request, _ in process_queue(cell, now=30)] == [3]
        assert [queued.request.request_id for queued in cell.queue] == [2]

    def test_timeout_rejects_with_wait_time(self):
        cell = make_cell(capacity=0, queueing_enabled=True, queue_timeout="1s", reject_wait_time="2s")
        submit(make_request(1, 1, make_flow("a", demand=1)), cell, now=0)
        assert process_queue(cell, now=seconds(1) - 1) == []
        ((request, decision),) = process_queue(cell, now=seconds(1))
        assert decision.kind == DecisionKind.REJECT
        assert decision.reason == REASON_QUEUE_TIMEOUT
        assert decision.wait_time == seconds(2)
        assert cell.queue == []

    def test_capacity_is_per_slice(self):
        cell = make_cell(capacity=0, second=0, queueing_enabled=True, queue_capacity=1)
        assert submit(make_request(1, 1, make_flow("a")), cell).kind == DecisionKind.QUEUE
        assert submit(make_request(2, 2, make_flow("b")), cell).kind == DecisionKind.REJECT
        assert submit(make_request(3, 3, make_flow("c", sst=2)), cell).kind == DecisionKind.QUEUE

    def test_blocked_slice_does_not_hold_back_another(self):
        cell = make_cell(capacity=2, second=2, queueing_enabled=True)
        submit(make_request(1, 1, make_flow("s1", demand=2)), cell)
        submit(make_request(2, 2, make_flow("s2", demand=2, sst=2)), cell)
        submit(make_request(3, 3, make_flow("wait1", demand=2)), cell, now=1)
        submit(make_request(4, 4, make_flow("wait2", demand=1, sst=2)), cell, now=2)
        release_connection(2, cell, ReleaseReason.NORMAL)
        results = process_queue(cell, now=3)
        assert [(request.request_id, decision.kind) for request, decision in results] == [(4, DecisionKind.ADMIT)]
        assert [queued.request.request_id for queued in cell.queue] == [3]

    def test_dropping_a_ue_clears_its_requests(self):
        cell = make_cell(capacity=0, queueing_enabled=True)
        submit(make_request(1, 1, make_flow("a")), cell)
        submit(make_request(2, 2, make_flow("b")), cell)
        assert [q.request.request_id for q in cell.drop_queued(1)] == [1]
        assert [q.request.request_id for q in cell.queue] == [2]
