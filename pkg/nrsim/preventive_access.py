"""
Preventive access control: everything that can stop an attempt before the UE
sends MSG1/MSGA, plus paging control on the network side.

Cell barring and reservation gate cell selection, Unified Access Control gates
every new access attempt, waitTime from an RRC Reject or Release bars all
categories but 0 and 2, and paging control limits the MT-access load a cell
generates.
"""
import logging
from enum import Enum
from typing import Annotated, Dict, FrozenSet, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic.dataclasses import dataclass

from .core_model import (
    HIGH_PRIORITY_AIS,
    OPERATOR_AIS,
    Duration,
    NUM_ACCESS_CATEGORIES,
    PlmnId,
    RrcState,
    StandardAccessCategory,
    UeProfile,
    effective_access_identities,
    milliseconds,
    seconds,
)

logger = logging.getLogger(__name__)

# Access categories that a running waitTime does not bar.
WAIT_TIME_EXEMPT_CATEGORIES = frozenset(
    {StandardAccessCategory.MT_ACCESS.value, StandardAccessCategory.EMERGENCY.value}
)
JITTER_LOW = 0.7
JITTER_SPAN = 0.6


class CellAccessInfo(BaseModel):
    """
    Barring and reservation information a cell broadcasts in MIB and SIB1.

    :ivar cell_barred: MIB cellBarred; nobody may select the cell.
    :ivar reserved_for_operator_use: Only UEs with AI 11 or 15 may select it.
    :ivar reserved_for_other_use: Only UEs authorized for one of ``npn_ids``.
    :ivar reserved_for_future_use: Treated as a total bar.
    :ivar npn_ids: NPN identities broadcast by the cell.
    :ivar plmn_ids: PLMNs broadcast by the cell.
    :ivar barred_retry_interval: How long a UE treats a barred cell as barred.
    """

    cell_barred: bool = False
    reserved_for_operator_use: bool = False
    reserved_for_other_use: bool = False
    reserved_for_future_use: bool = False
    npn_ids: FrozenSet[str] = frozenset()
    plmn_ids: FrozenSet[PlmnId] = Field(min_length=1)
    barred_retry_interval: Duration = Field(default=seconds(300), gt=0)


class UacBarringEntry(BaseModel):
    """Barring parameters of one Access Category."""

    model_config = ConfigDict(frozen=True)

    barring_factor: float = Field(ge=0.0, le=1.0)
    barring_time: Duration = Field(gt=0)
    ai_allow_bitmap: Dict[int, bool] = {}

    @field_validator("ai_allow_bitmap")
    @classmethod
    def _cover_high_priority_ais(cls, bitmap):
        unknown = sorted(set(bitmap) - HIGH_PRIORITY_AIS)
        if unknown:
            raise ValueError(f"barring indicators exist only for AIs {sorted(HIGH_PRIORITY_AIS)}, got {unknown}")
        return {ai: bool(bitmap.get(ai, False)) for ai in sorted(HIGH_PRIORITY_AIS)}


class UacConfig(BaseModel):
    """
    Per-cell UAC configuration: one optional barring entry per Access Category.

    An absent entry means the category is not barred. AC 0 can never carry an
    entry.
    """

    entries: Dict[int, UacBarringEntry] = {}
    barring_time_jitter: bool = False

    @field_validator("entries")
    @classmethod
    def _valid_categories(cls, entries):
        for ac in entries:
            if ac == StandardAccessCategory.MT_ACCESS:
                raise ValueError("AC 0 (MT-access) cannot be barred")
            if not 0 < ac < NUM_ACCESS_CATEGORIES:
                raise ValueError(f"access category {ac} outside 1..{NUM_ACCESS_CATEGORIES - 1}")
        return dict(sorted(entries.items()))


class SelectionReason(str, Enum):
    SELECTABLE = "selectable"
    CELL_BARRED = "cell-barred"
    RESERVED_FUTURE_USE = "reserved-future-use"
    RESERVED_OPERATOR_USE = "reserved-operator-use"
    RESERVED_OTHER_USE = "reserved-other-use"
    PLMN_MISMATCH = "plmn-mismatch"


@dataclass(frozen=True)
class CellSelection:
    selectable: bool
    reason: SelectionReason
    retry_after: Optional[int] = None


class UacReason(str, Enum):
    WAIT_TIME = "wait-time"
    MT_ACCESS = "mt-access"
    NOT_CONFIGURED = "not-configured"
    AI_ALLOWED = "ai-allowed"
    FACTOR_PASSED = "factor-passed"
    BARRED = "barred"


@dataclass(frozen=True)
class UacDecision:
    allowed: bool
    reason: UacReason
    barred_until: Optional[int] = None


def cell_selection_check(profile: UeProfile, cell: CellAccessInfo, is_emergency: bool) -> CellSelection:
    """
    Decides whether a UE may camp on a cell given its barring and reservation flags.

    cellBarred stops every UE, emergency calls included. A cell reserved for
    future use is treated as barred for everybody. An operator-reserved cell is
    selectable exactly for UEs with an applicable AI 11 or 15, an other-use cell
    exactly for UEs authorized for one of the cell's NPNs. Any other cell needs
    the home or an equivalent PLMN, except for emergency attempts.

    :param profile: The UE looking for a cell.
    :type profile: UeProfile
    :param cell: Broadcast access information of the candidate cell.
    :type cell: CellAccessInfo
    :param is_emergency: Whether the pending attempt is an emergency call.
    :type is_emergency: bool
    :return: Selectable, or NotSelectable with the retry interval.
    :rtype: CellSelection
    """

    def not_selectable(reason: SelectionReason) -> CellSelection:
        return CellSelection(selectable=False, reason=reason, retry_after=cell.barred_retry_interval)

    if cell.cell_barred:
        return not_selectable(SelectionReason.CELL_BARRED)
    if cell.reserved_for_future_use:
        return not_selectable(SelectionReason.RESERVED_FUTURE_USE)
    if cell.reserved_for_operator_use:
        if effective_access_identities(profile) & OPERATOR_AIS:
            return CellSelection(selectable=True, reason=SelectionReason.SELECTABLE)
        return not_selectable(SelectionReason.RESERVED_OPERATOR_USE)
    if cell.reserved_for_other_use:
        if profile.npn_authorized & cell.npn_ids:
            return CellSelection(selectable=True, reason=SelectionReason.SELECTABLE)
        return not_selectable(SelectionReason.RESERVED_OTHER_USE)
    if profile.registered_plmns & cell.plmn_ids or is_emergency:
        return CellSelection(selectable=True, reason=SelectionReason.SELECTABLE)
    return not_selectable(SelectionReason.PLMN_MISMATCH)


def selected_plmn(profile: UeProfile, cell: CellAccessInfo) -> PlmnId:
    """
    PLMN a UE camping on ``cell`` is served on: the home PLMN if the cell
    broadcasts it, else the first broadcast equivalent PLMN, else the first
    PLMN of the cell (emergency limited service, reserved cells).
    """
    if profile.home_plmn in cell.plmn_ids:
        return profile.home_plmn
    candidates = profile.registered_plmns & cell.plmn_ids or cell.plmn_ids
    return min(candidates, key=str)


def uac_check(
    ac: int,
    ais: Iterable[int],
    config: UacConfig,
    uniform_draw: float,
    now: int,
    profile: UeProfile,
    jitter_draw: float = 0.5,
) -> UacDecision:
    """
    Evaluates the UAC barring check for one access attempt.

    The rules apply in order: a running waitTime bars every AC but 0 and 2;
    AC 0 is always allowed; an AC without a barring entry is allowed; a high
    priority AI whose barring indicator allows access bypasses the barring
    factor; otherwise the attempt passes when ``uniform_draw`` falls below the
    barring factor and is barred for the barring time if not.

    :param ac: Access Category of the attempt.
    :param ais: Access Identities of the attempt.
    :param config: The cell's UAC configuration.
    :type config: UacConfig
    :param uniform_draw: Draw in [0, 1) from the caller's seeded stream.
    :param now: Current simulation time.
    :param profile: Profile of the UE, consulted for waitTime.
    :type profile: UeProfile
    :param jitter_draw: Draw in [0, 1) used only when barring-time jitter is
        enabled; the barred duration is then (0.7 + 0.6 * draw) * barring_time.
    :return: Allowed, or Barred with the time barring ends.
    :rtype: UacDecision
    """
    if (
        profile.wait_time_until is not None
        and now < profile.wait_time_until
        and ac not in WAIT_TIME_EXEMPT_CATEGORIES
    ):
        return UacDecision(allowed=False, reason=UacReason.WAIT_TIME, barred_until=profile.wait_time_until)
    if ac == StandardAccessCategory.MT_ACCESS:
        return UacDecision(allowed=True, reason=UacReason.MT_ACCESS)

    entry = config.entries.get(ac)
    if entry is None:
        return UacDecision(allowed=True, reason=UacReason.NOT_CONFIGURED)
    if any(entry.ai_allow_bitmap.get(ai, False) for ai in ais):
        return UacDecision(allowed=True, reason=UacReason.AI_ALLOWED)
    if uniform_draw < entry.barring_factor:
        return UacDecision(allowed=True, reason=UacReason.FACTOR_PASSED)

    duration = entry.barring_time
    if config.barring_time_jitter:
        duration = int(round((JITTER_LOW + JITTER_SPAN * jitter_draw) * entry.barring_time))
    return UacDecision(allowed=False, reason=UacReason.BARRED, barred_until=now + duration)


def apply_wait_time(profile: UeProfile, wait_time: int, now: int) -> UeProfile:
    """Returns the profile barred by a received waitTime until ``now + wait_time``."""
    if wait_time <= 0:
        raise ValueError(f"waitTime must be positive, got {wait_time}")
    return profile.model_copy(update={"wait_time_until": now + wait_time})


class PagingOrigin(str, Enum):
    CN = "cn"
    RAN = "ran"


@dataclass(frozen=True)
class PagingRequest:
    request_id: int
    target_ue: int
    priority: Annotated[int, Field(ge=1)]
    origin: PagingOrigin
    enqueue_time: int


class PagingConfig(BaseModel):
    """
    Paging control settings of a cell.

    :ivar budget: Paging records the cell sends per paging cycle.
    :ivar cycle: Paging cycle length.
    :ivar priority_levels: Number of Paging Priority levels, 1 being highest.
    :ivar discard_timeout: Age beyond which a deferred request is dropped;
        defaults to five paging cycles.
    """

    budget: int = Field(default=32, ge=0)
    cycle: Duration = Field(default=milliseconds(1280), gt=0)
    priority_levels: int = Field(default=8, ge=1)
    discard_timeout: Optional[Duration] = None

    @property
    def effective_discard_timeout(self) -> int:
        return self.discard_timeout if self.discard_timeout is not None else 5 * self.cycle


@dataclass(frozen=True)
class PagingSelection:
    to_page: List[PagingRequest]
    deferred: List[PagingRequest]
    dropped: List[PagingRequest]


def _paging_order(request: PagingRequest):
    return request.priority, request.enqueue_time, request.target_ue, request.request_id


def paging_control_filter(
    queue: List[PagingRequest],
    budget: int,
    now: int,
    discard_timeout: Optional[int] = None,
) -> PagingSelection:
    """
    Picks the paging records sent in this cycle.

    The ``budget`` best requests by (priority, enqueue time, UE id) are paged.
    The rest are deferred to the next cycle, except those older than
    ``discard_timeout``, which are dropped. The three lists partition ``queue``.

    :param queue: Pending paging requests of the cell.
    :param budget: Paging capacity of one cycle.
    :param now: Current simulation time.
    :param discard_timeout: Maximum age of a deferred request, or None to keep
        requests indefinitely.
    :return: The paged, deferred and dropped requests.
    :rtype: PagingSelection
    """
    if budget < 0:
        raise ValueError(f"paging budget must be >= 0, got {budget}")
    ordered = sorted(queue, key=_paging_order)
    to_page = ordered[:budget]
    deferred, dropped = [], []
    for request in ordered[budget:]:
        if discard_timeout is not None and now - request.enqueue_time > discard_timeout:
            dropped.append(request)
        else:
            deferred.append(request)
    return PagingSelection(to_page=to_page, deferred=deferred, dropped=dropped)


class Topology(BaseModel):
    """Which gNB serves each cell, which cells form each tracking area."""

    cells: Dict[str, str]
    tracking_areas: Dict[str, FrozenSet[str]] = {}
    inter_gnb_delay: Duration = Field(default=milliseconds(5), ge=0)

    @model_validator(mode="after")
    def _known_cells(self):
        for ta, cells in self.tracking_areas.items():
            unknown = sorted(cells - set(self.cells))
            if unknown:
                raise ValueError(f"tracking area '{ta}' lists unknown cells {unknown}")
        return self


@dataclass(frozen=True)
class PagingRoute:
    immediate: FrozenSet[str] = frozenset()
    delayed: FrozenSet[str] = frozenset()
    delay: int = 0

    @property
    def cells(self) -> FrozenSet[str]:
        return self.immediate | self.delayed


def route_paging(request: PagingRequest, ue: Optional[UeProfile], topology: Topology) -> PagingRoute:
    """
    Works out the cells a paging request is sent in.

    An RRC_IDLE UE is paged by the CN in every cell of its tracking areas. An
    RRC_INACTIVE UE is paged by its anchor gNB in the cells of its RNA; cells
    owned by neighbour gNBs receive the page through a RAN Paging Message and
    are reported as ``delayed`` by the inter-gNB delay. An unknown or connected
    UE yields an empty route.
    """
    if ue is None:
        logger.warning(f"Paging request {request.request_id} targets unknown UE {request.target_ue}")
        return PagingRoute()

    if ue.rrc_state == RrcState.IDLE:
        cells = set()
        for ta in ue.tracking_areas:
            cells |= topology.tracking_areas.get(ta, frozenset())
        return PagingRoute(immediate=frozenset(cells))

    if ue.rrc_state == RrcState.INACTIVE:
        anchor_gnb = topology.cells.get(ue.anchor_cell)
        rna = {cell for cell in ue.rna if cell in topology.cells}
        local = frozenset(cell for cell in rna if topology.cells[cell] == anchor_gnb)
        remote = frozenset(rna - local)
        return PagingRoute(
            immediate=local,
            delayed=remote,
            delay=topology.inter_gnb_delay if remote else 0,
        )

    logger.debug(f"UE {ue.ue_id} is connected; paging request {request.request_id} not routed")
    return PagingRoute()
