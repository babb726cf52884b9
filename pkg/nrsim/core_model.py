"""
Shared domain model of the access control pipeline.

Everything more than one stage needs lives here: RRC states, Access Identities
and Access Categories, establishment causes, subscription profiles, QoS flow
descriptors, simulation-time helpers, and the mapping of an access attempt onto
its Access Category and Access Identity set.

All times are integer microseconds.
"""
import logging
import re
from enum import Enum, IntEnum
from typing import Annotated, FrozenSet, Optional, Tuple

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_serializer,
    model_validator,
)
from pydantic.dataclasses import dataclass

logger = logging.getLogger(__name__)

US_PER_MS = 1_000
US_PER_SECOND = 1_000_000

_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(us|ms|s|min)?\s*$")
_UNIT_US = {"us": 1, "ms": US_PER_MS, "s": US_PER_SECOND, "min": 60 * US_PER_SECOND}


def seconds(value: float) -> int:
    """Convert seconds to simulation time (microseconds)."""
    return int(round(value * US_PER_SECOND))


def milliseconds(value: float) -> int:
    """Convert milliseconds to simulation time (microseconds)."""
    return int(round(value * US_PER_MS))


def parse_duration(value) -> int:
    """
    Parses a duration into integer microseconds.

    Strings carry a unit (``"300s"``, ``"80ms"``, ``"500us"``, ``"1.5s"``,
    ``"2min"``); bare integers are already microseconds.

    :param value: The duration as written in a scenario file or passed in code.
    :return: The duration in microseconds.
    :rtype: int
    :raises ValueError: If the value is not a recognised duration.
    """
    if isinstance(value, bool):
        raise ValueError("a duration cannot be a boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise ValueError(f"fractional microseconds are not allowed: {value}")
    if isinstance(value, str):
        match = _DURATION_RE.match(value)
        if not match:
            raise ValueError(f"invalid duration '{value}', expected e.g. '300s', '80ms' or '500us'")
        number, unit = match.groups()
        return int(round(float(number) * _UNIT_US[unit or "us"]))
    raise ValueError(f"invalid duration {value!r}")


def format_duration(value: int) -> str:
    """Writes microseconds back in the largest unit that represents them exactly."""
    if value:
        for unit in ("min", "s", "ms"):
            if value % _UNIT_US[unit] == 0:
                return f"{value // _UNIT_US[unit]}{unit}"
    return f"{value}us"


Duration = Annotated[
    int,
    BeforeValidator(parse_duration),
    PlainSerializer(format_duration, return_type=str, when_used="json"),
]


class RrcState(str, Enum):
    IDLE = "idle"
    INACTIVE = "inactive"
    CONNECTED = "connected"


class AccessIdentity(IntEnum):
    """The 16 standardized Access Identities."""

    REGULAR = 0
    MPS = 1
    MCS = 2
    DISASTER_CONDITION = 3
    RESERVED_4 = 4
    RESERVED_5 = 5
    RESERVED_6 = 6
    RESERVED_7 = 7
    RESERVED_8 = 8
    RESERVED_9 = 9
    RESERVED_10 = 10
    PLMN_USE = 11
    SECURITY_SERVICES = 12
    PUBLIC_UTILITIES = 13
    EMERGENCY_SERVICES = 14
    PLMN_STAFF = 15


# AIs that carry a per-AI barring indicator in every UAC barring entry.
HIGH_PRIORITY_AIS: FrozenSet[int] = frozenset({1, 2, 11, 12, 13, 14, 15})
OPERATOR_AIS: FrozenSet[int] = frozenset({11, 15})
HOME_COUNTRY_AIS: FrozenSet[int] = frozenset({12, 13, 14})
PRIORITY_SERVICE_AIS: FrozenSet[int] = frozenset({1, 2})


class StandardAccessCategory(IntEnum):
    MT_ACCESS = 0
    DELAY_TOLERANT = 1
    EMERGENCY = 2
    MO_NAS_SIGNALLING = 3
    MO_VOICE = 4
    MO_VIDEO = 5
    SMS = 6
    MO_DATA = 7
    MO_RRC_SIGNALLING = 8
    MO_IMS_REGISTRATION = 9
    MO_EXCEPTION_DATA = 10


NUM_ACCESS_CATEGORIES = 64
FIRST_OPERATOR_CATEGORY = 32

AccessCategory = Annotated[int, Field(ge=0, le=NUM_ACCESS_CATEGORIES - 1)]
OperatorAccessCategory = Annotated[int, Field(ge=FIRST_OPERATOR_CATEGORY, le=NUM_ACCESS_CATEGORIES - 1)]


def is_operator_defined(access_category: int) -> bool:
    return FIRST_OPERATOR_CATEGORY <= access_category < NUM_ACCESS_CATEGORIES


class EstablishmentCause(str, Enum):
    EMERGENCY = "emergency"
    HIGH_PRIORITY_ACCESS = "highPriorityAccess"
    MT_ACCESS = "mt-Access"
    MO_SIGNALLING = "mo-Signalling"
    MO_DATA = "mo-Data"
    MO_VOICE_CALL = "mo-VoiceCall"
    MO_VIDEO_CALL = "mo-VideoCall"
    MO_SMS = "mo-SMS"
    MPS_PRIORITY_ACCESS = "mps-PriorityAccess"
    MCS_PRIORITY_ACCESS = "mcs-PriorityAccess"


class ServiceHint(str, Enum):
    """Attempt flags set by the traffic generator; they refine the cause mapping."""

    NONE = "none"
    DELAY_TOLERANT = "delay-tolerant"
    EXCEPTION_DATA = "exception-data"
    NAS_SIGNALLING = "nas-signalling"
    IMS_REGISTRATION = "ims-registration"


_CAUSE_CATEGORY = {
    EstablishmentCause.MT_ACCESS: StandardAccessCategory.MT_ACCESS,
    EstablishmentCause.EMERGENCY: StandardAccessCategory.EMERGENCY,
    EstablishmentCause.MO_VOICE_CALL: StandardAccessCategory.MO_VOICE,
    EstablishmentCause.MO_VIDEO_CALL: StandardAccessCategory.MO_VIDEO,
    EstablishmentCause.MO_SMS: StandardAccessCategory.SMS,
    EstablishmentCause.MO_DATA: StandardAccessCategory.MO_DATA,
    EstablishmentCause.MO_SIGNALLING: StandardAccessCategory.MO_RRC_SIGNALLING,
    EstablishmentCause.HIGH_PRIORITY_ACCESS: StandardAccessCategory.MO_DATA,
    EstablishmentCause.MPS_PRIORITY_ACCESS: StandardAccessCategory.MO_DATA,
    EstablishmentCause.MCS_PRIORITY_ACCESS: StandardAccessCategory.MO_DATA,
}

_HINT_CATEGORY = {
    ServiceHint.DELAY_TOLERANT: StandardAccessCategory.DELAY_TOLERANT,
    ServiceHint.EXCEPTION_DATA: StandardAccessCategory.MO_EXCEPTION_DATA,
    ServiceHint.IMS_REGISTRATION: StandardAccessCategory.MO_IMS_REGISTRATION,
}


class PlmnId(BaseModel):
    """A PLMN identity; written ``"MCC-MNC"`` in scenario files."""

    model_config = ConfigDict(frozen=True)

    mcc: str = Field(pattern=r"^\d{3}$")
    mnc: str = Field(pattern=r"^\d{2,3}$")

    @model_validator(mode="before")
    @classmethod
    def _from_string(cls, data):
        if isinstance(data, str):
            mcc, sep, mnc = data.partition("-")
            if not sep:
                raise ValueError(f"invalid PLMN id '{data}', expected 'MCC-MNC'")
            return {"mcc": mcc, "mnc": mnc}
        return data

    @model_serializer(mode="wrap", when_used="json")
    def _to_string(self, handler):
        return str(self)

    def __str__(self) -> str:
        return f"{self.mcc}-{self.mnc}"


class Snssai(BaseModel):
    """Slice identifier: mandatory SST plus optional slice differentiator."""

    model_config = ConfigDict(frozen=True)

    sst: int = Field(ge=0, le=255)
    sd: Optional[int] = Field(default=None, ge=0, le=0xFFFFFF)

    @model_validator(mode="before")
    @classmethod
    def _from_int(cls, data):
        if isinstance(data, int) and not isinstance(data, bool):
            return {"sst": data}
        return data

    def __str__(self) -> str:
        return str(self.sst) if self.sd is None else f"{self.sst}-{self.sd:06x}"


class UeProfile(BaseModel):
    """
    Subscription-side view of a UE together with its RRC state.

    :ivar ue_id: Unique UE identifier.
    :ivar access_identities: Access Identities provisioned in the USIM.
    :ivar home_plmn: PLMN holding the subscription.
    :ivar equivalent_plmns: PLMNs treated as equivalent to the home PLMN.
    :ivar in_home_country: Whether the UE currently is in its home country.
    :ivar in_home_plmn: Whether the UE is served by its home (or equivalent) PLMN.
    :ivar priority_ai_roaming_allowed: AI 1/2 applicability outside the home
        country, as granted by the core network in an earlier registration.
    :ivar npn_authorized: NPN identities the UE may access.
    :ivar subscribed_slices: Up to 8 S-NSSAIs.
    :ivar tracking_areas: Tracking areas of the UE's registration area.
    :ivar rna: Cells of the RAN notification area while RRC_INACTIVE.
    :ivar rrc_state: Current RRC state.
    :ivar serving_cell: Cell the UE camps on or is connected to.
    :ivar anchor_cell: Cell keeping the UE context while RRC_INACTIVE.
    :ivar wait_time_until: End of a waitTime barring window, if any.
    """

    ue_id: int = Field(ge=0)
    access_identities: FrozenSet[AccessIdentity] = frozenset()
    home_plmn: PlmnId
    equivalent_plmns: FrozenSet[PlmnId] = frozenset()
    in_home_country: bool = True
    in_home_plmn: bool = True
    priority_ai_roaming_allowed: bool = False
    npn_authorized: FrozenSet[str] = frozenset()
    subscribed_slices: FrozenSet[Snssai] = frozenset()
    tracking_areas: FrozenSet[str] = frozenset()
    rna: FrozenSet[str] = frozenset()
    rrc_state: RrcState = RrcState.IDLE
    serving_cell: Optional[str] = None
    anchor_cell: Optional[str] = None
    wait_time_until: Optional[int] = None

    @field_validator("subscribed_slices")
    @classmethod
    def _at_most_eight_slices(cls, value):
        if len(value) > 8:
            raise ValueError(f"a UE can subscribe to at most 8 slices, got {len(value)}")
        return value

    @model_validator(mode="after")
    def _inactive_keeps_anchor(self):
        if self.rrc_state == RrcState.INACTIVE and self.anchor_cell is None:
            raise ValueError("an RRC_INACTIVE UE needs an anchor_cell")
        return self

    @property
    def registered_plmns(self) -> FrozenSet[PlmnId]:
        return self.equivalent_plmns | {self.home_plmn}

    def effective_access_identities(self) -> FrozenSet[int]:
        return effective_access_identities(self)


class ArpProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    priority_level: int = Field(ge=1, le=15)
    preemption_capability: bool = False
    preemption_vulnerability: bool = True


class ResourceType(str, Enum):
    GBR = "gbr"
    DELAY_CRITICAL_GBR = "delay-critical-gbr"
    NON_GBR = "non-gbr"

    @property
    def reserves_units(self) -> bool:
        return self is not ResourceType.NON_GBR


class QosFlowRequest(BaseModel):
    """A QoS flow to be set up; GBR flows must reserve a positive demand."""

    model_config = ConfigDict(frozen=True)

    flow_id: str
    arp: ArpProfile
    resource_type: ResourceType = ResourceType.NON_GBR
    snssai: Snssai
    demand: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _gbr_demand_positive(self):
        if self.resource_type.reserves_units and self.demand <= 0:
            raise ValueError(f"{self.resource_type.value} flow '{self.flow_id}' needs demand > 0")
        return self

    @property
    def reserved_units(self) -> int:
        return self.demand if self.resource_type.reserves_units else 0


@dataclass
class AccessAttempt:
    """One access event from its creation to its terminal outcome."""

    attempt_id: int
    ue_id: int
    cause: EstablishmentCause
    access_category: int
    access_identities: FrozenSet[int]
    created_at: int
    hint: ServiceHint = ServiceHint.NONE
    uac_retries: int = 0
    ra_attempts: int = 0
    messages: int = 0


def effective_access_identities(profile: UeProfile) -> FrozenSet[int]:
    """
    Filters the provisioned AIs down to those applicable right now.

    AI 0 is always present. AIs 1 and 2 need the home country (or the roaming
    grant), AIs 12 to 14 the home country, AIs 11 and 15 the home PLMN. AI 3
    always applies; the reserved AIs 4 to 10 never do.
    """
    identities = {AccessIdentity.REGULAR.value}
    for ai in profile.access_identities:
        if ai in PRIORITY_SERVICE_AIS:
            applicable = profile.in_home_country or profile.priority_ai_roaming_allowed
        elif ai in HOME_COUNTRY_AIS:
            applicable = profile.in_home_country
        elif ai in OPERATOR_AIS:
            applicable = profile.in_home_plmn
        else:
            applicable = ai == AccessIdentity.DISASTER_CONDITION
        if applicable:
            identities.add(int(ai))
    return frozenset(identities)


def derive_access_info(
    cause: EstablishmentCause,
    profile: UeProfile,
    hint: ServiceHint = ServiceHint.NONE,
    operator_category: Optional[int] = None,
) -> Tuple[int, FrozenSet[int]]:
    """
    Maps an access attempt to its Access Category and Access Identity set.

    MT-access always maps to AC 0 and emergency to AC 2. Otherwise an operator
    category configured for the attempt wins, then the service hint, then the
    cause table. MO signalling marked as NAS-level maps to AC 3 instead of AC 8.

    :param cause: Establishment cause of the attempt.
    :type cause: EstablishmentCause
    :param profile: Profile of the UE making the attempt.
    :type profile: UeProfile
    :param hint: Generator flag for delay-tolerant, exception-data, NAS-level
        signalling or IMS registration attempts.
    :type hint: ServiceHint
    :param operator_category: Operator-defined AC (32..63) provisioned for the
        attempt's service or slice, if any.
    :type operator_category: Optional[int]
    :return: The Access Category and the effective Access Identity set.
    :rtype: Tuple[int, FrozenSet[int]]
    """
    identities = effective_access_identities(profile)

    if cause in (EstablishmentCause.MT_ACCESS, EstablishmentCause.EMERGENCY):
        return int(_CAUSE_CATEGORY[cause]), identities
    if operator_category is not None and is_operator_defined(operator_category):
        return operator_category, identities
    if hint == ServiceHint.NAS_SIGNALLING and cause == EstablishmentCause.MO_SIGNALLING:
        return int(StandardAccessCategory.MO_NAS_SIGNALLING), identities
    if hint in _HINT_CATEGORY:
        return int(_HINT_CATEGORY[hint]), identities
    return int(_CAUSE_CATEGORY[cause]), identities
