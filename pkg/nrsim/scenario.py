"""
Scenario files: the pydantic schema, loading, validation and emission.

A scenario is a YAML document describing cells (barring, UAC, RACH, slice
pools, admission policy, paging), UE populations (count, profile template,
traffic, cause mix, QoS flows) and the run length. Every validation problem is
reported at once, each with the dotted key path it concerns.
"""
import logging
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .admission_control import AdmissionPolicy
from .core_model import (
    AccessIdentity,
    ArpProfile,
    Duration,
    EstablishmentCause,
    OperatorAccessCategory,
    PlmnId,
    QosFlowRequest,
    ResourceType,
    RrcState,
    ServiceHint,
    Snssai,
    UeProfile,
    milliseconds,
    seconds,
)
from .preventive_access import CellAccessInfo, PagingConfig, UacConfig
from .random_access import RachConfig
from .sim_engine import PagingLoad, TrafficModel

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
# UE ids of population i are i * UE_ID_BLOCK + k.
UE_ID_BLOCK = 100_000
MIX_TOLERANCE = 1e-9


class ScenarioError(ValueError):
    """
    A scenario failed to load or validate.

    :ivar issues: ``(key_path, message)`` pairs, one per problem found.
    """

    def __init__(self, issues: List[Tuple[str, str]]):
        self.issues = list(issues)
        super().__init__("invalid scenario:\n" + "\n".join(f"  {path}: {msg}" for path, msg in self.issues))

    @classmethod
    def from_validation_error(cls, error: ValidationError) -> "ScenarioError":
        issues = []
        for item in error.errors():
            path = ".".join(str(part) for part in item["loc"])
            cause = (item.get("ctx") or {}).get("error")
            if isinstance(cause, CrossReferenceError):
                issues.extend(cause.issues)
            else:
                issues.append((path or "<root>", item["msg"]))
        return cls(issues)


class CrossReferenceError(ValueError):
    """Inconsistencies between parts of an otherwise well-formed scenario."""

    def __init__(self, issues: List[Tuple[str, str]]):
        self.issues = issues
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in issues))


class SlicePoolConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    snssai: Snssai
    dedicated_capacity: int = Field(ge=0)


class CellConfig(BaseModel):
    """One cell, its gNB and tracking area, and every per-cell control setting."""

    model_config = ConfigDict(extra="forbid")

    cell_id: str
    gnb: str
    tracking_area: str
    access: CellAccessInfo
    uac: UacConfig = UacConfig()
    rach: RachConfig = RachConfig()
    slices: List[SlicePoolConfig] = Field(min_length=1)
    shared_capacity: int = Field(default=0, ge=0)
    admission: AdmissionPolicy = AdmissionPolicy()
    paging: PagingConfig = PagingConfig()


class UeTemplate(BaseModel):
    """
    Profile shared by all UEs of a population.

    Tracking areas default to the tracking area of the population's cell, the
    RNA to that cell, and the anchor of an RRC_INACTIVE UE to that cell.
    """

    model_config = ConfigDict(extra="forbid")

    access_identities: FrozenSet[AccessIdentity] = frozenset()
    home_plmn: PlmnId
    equivalent_plmns: FrozenSet[PlmnId] = frozenset()
    in_home_country: bool = True
    in_home_plmn: bool = True
    priority_ai_roaming_allowed: bool = False
    npn_authorized: FrozenSet[str] = frozenset()
    subscribed_slices: FrozenSet[Snssai] = Field(default=frozenset(), max_length=8)
    tracking_areas: FrozenSet[str] = frozenset()
    rna: FrozenSet[str] = frozenset()
    rrc_state: RrcState = RrcState.IDLE
    anchor_cell: Optional[str] = None

    @model_validator(mode="after")
    def _not_connected(self):
        if self.rrc_state == RrcState.CONNECTED:
            raise ValueError("populations start in idle or inactive state")
        return self

    def instantiate(self, ue_id: int, cell: CellConfig) -> UeProfile:
        inactive = self.rrc_state == RrcState.INACTIVE
        return UeProfile(
            ue_id=ue_id,
            access_identities=self.access_identities,
            home_plmn=self.home_plmn,
            equivalent_plmns=self.equivalent_plmns,
            in_home_country=self.in_home_country,
            in_home_plmn=self.in_home_plmn,
            priority_ai_roaming_allowed=self.priority_ai_roaming_allowed,
            npn_authorized=self.npn_authorized,
            subscribed_slices=self.subscribed_slices,
            tracking_areas=self.tracking_areas or frozenset({cell.tracking_area}),
            rna=self.rna or frozenset({cell.cell_id}),
            rrc_state=self.rrc_state,
            serving_cell=cell.cell_id,
            anchor_cell=(self.anchor_cell or cell.cell_id) if inactive else None,
        )


class FlowTemplate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arp: ArpProfile
    resource_type: ResourceType = ResourceType.NON_GBR
    snssai: Snssai
    demand: int = Field(default=0, ge=0)

    def to_request(self, flow_id: str) -> QosFlowRequest:
        return QosFlowRequest(
            flow_id=flow_id,
            arp=self.arp,
            resource_type=self.resource_type,
            snssai=self.snssai,
            demand=self.demand,
        )


class OperatorCategoryRule(BaseModel):
    """Maps a slice or a service tag onto an operator-defined Access Category."""

    model_config = ConfigDict(extra="forbid")

    access_category: OperatorAccessCategory
    snssai: Optional[Snssai] = None
    service: Optional[str] = None

    @model_validator(mode="after")
    def _one_selector(self):
        if (self.snssai is None) == (self.service is None):
            raise ValueError("an operator category rule names exactly one of snssai or service")
        return self


class UePopulation(BaseModel):
    """
    A group of UEs with the same profile and behaviour, camped on one cell.

    :ivar traffic: Traffic models driving the population.
    :ivar cause_mix: Probabilities of the establishment causes of MO attempts.
    :ivar hint_mix: Probabilities of the service hints of MO attempts.
    :ivar service: Service tag matched against operator category rules.
    :ivar flows: QoS flows requested on every connection or flow setup.
    :ivar session_duration: Mean connection holding time.
    :ivar fixed_sessions: Hold every connection for exactly
        ``session_duration`` instead of an exponential time.
    :ivar release_to_inactive: Release connections to RRC_INACTIVE.
    :ivar max_uac_retries: Re-attempts after UAC barring expires.
    :ivar path_loss: Path loss towards the cell, in dB.
    """

    model_config = ConfigDict(extra="forbid")

    name: str
    count: int = Field(ge=0, lt=UE_ID_BLOCK)
    cell: str
    template: UeTemplate
    traffic: List[TrafficModel] = []
    cause_mix: Dict[EstablishmentCause, float] = {EstablishmentCause.MO_DATA: 1.0}
    hint_mix: Dict[ServiceHint, float] = {ServiceHint.NONE: 1.0}
    service: Optional[str] = None
    flows: List[FlowTemplate] = Field(min_length=1)
    session_duration: Duration = Field(default=seconds(30), gt=0)
    fixed_sessions: bool = False
    release_to_inactive: bool = False
    max_uac_retries: int = Field(default=0, ge=0)
    path_loss: float = 100.0


class ScenarioConfig(BaseModel):
    """A complete, validated simulation scenario."""

    model_config = ConfigDict(extra="forbid")

    name: str
    description: str = ""
    duration: Duration = Field(gt=0)
    seed: int = Field(default=1, ge=0)
    inter_gnb_delay: Duration = Field(default=milliseconds(5), ge=0)
    cells: List[CellConfig] = Field(min_length=1)
    populations: List[UePopulation] = []
    operator_categories: List[OperatorCategoryRule] = []
    audit: bool = False

    @model_validator(mode="after")
    def _cross_references(self):
        issues = []
        cell_ids = [cell.cell_id for cell in self.cells]
        cells = {cell.cell_id: cell for cell in self.cells}
        for index, cell_id in enumerate(cell_ids):
            if cell_ids.index(cell_id) != index:
                issues.append((f"cells.{index}.cell_id", f"duplicate cell id '{cell_id}'"))
        pooled = {pool.snssai for cell in self.cells for pool in cell.slices}
        tracking_areas = {cell.tracking_area for cell in self.cells}

        names = set()
        for index, pop in enumerate(self.populations):
            where = f"populations.{index}"
            if pop.name in names:
                issues.append((f"{where}.name", f"duplicate population name '{pop.name}'"))
            names.add(pop.name)
            if pop.cell not in cells:
                issues.append((f"{where}.cell", f"unknown cell '{pop.cell}'"))
            for snssai in sorted(pop.template.subscribed_slices, key=str):
                if snssai not in pooled:
                    issues.append((f"{where}.template.subscribed_slices", f"slice {snssai} has no pool in any cell"))
            for flow_index, flow in enumerate(pop.flows):
                if flow.snssai not in pooled:
                    issues.append((f"{where}.flows.{flow_index}.snssai", f"slice {flow.snssai} has no pool in any cell"))
            for ta in sorted(pop.template.tracking_areas - tracking_areas):
                issues.append((f"{where}.template.tracking_areas", f"unknown tracking area '{ta}'"))
            for cell_id in sorted(pop.template.rna - set(cells)):
                issues.append((f"{where}.template.rna", f"unknown cell '{cell_id}'"))
            if pop.template.anchor_cell is not None and pop.template.anchor_cell not in cells:
                issues.append((f"{where}.template.anchor_cell", f"unknown cell '{pop.template.anchor_cell}'"))
            for mix_name in ("cause_mix", "hint_mix"):
                mix = getattr(pop, mix_name)
                total = sum(mix.values())
                if abs(total - 1.0) > MIX_TOLERANCE or any(p < 0 for p in mix.values()):
                    issues.append((f"{where}.{mix_name}", f"probabilities must be non-negative and sum to 1, got {total}"))
            if pop.cell in cells:
                levels = cells[pop.cell].paging.priority_levels
                for model_index, model in enumerate(pop.traffic):
                    if isinstance(model, PagingLoad) and max(model.priority_mix) > levels:
                        issues.append(
                            (
                                f"{where}.traffic.{model_index}.priority_mix",
                                f"priority {max(model.priority_mix)} exceeds the cell's {levels} paging priority levels",
                            )
                        )
        for index, rule in enumerate(self.operator_categories):
            if rule.snssai is not None and rule.snssai not in pooled:
                issues.append((f"operator_categories.{index}.snssai", f"slice {rule.snssai} has no pool in any cell"))
        if issues:
            raise CrossReferenceError(issues)
        return self


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    """
    Parses and validates scenario YAML text.

    :raises ScenarioError: With every problem found.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError([(source, f"invalid YAML: {e}")]) from e
    if not isinstance(data, dict):
        raise ScenarioError([(source, "a scenario file must contain a mapping")])
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ScenarioError.from_validation_error(e) from None


def parse_and_validate(path: Union[str, Path]) -> ScenarioConfig:
    """
    Loads a scenario file and validates it, filling in every default.

    :param path: Path of the YAML scenario file.
    :return: The validated scenario.
    :rtype: ScenarioConfig
    :raises ScenarioError: If the file cannot be read or is invalid; all
        validation problems are reported together.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError([(str(path), f"cannot read scenario file: {e.strerror or e}")]) from e
    config = parse_scenario(text, source=str(path))
    logger.info(f"Loaded scenario '{config.name}' from {path}")
    return config


def emit(config: ScenarioConfig) -> str:
    """Writes a scenario back as YAML; parsing the result gives an equal scenario."""
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False, default_flow_style=False)


def list_scenarios() -> List[str]:
    return sorted(path.stem for path in SCENARIO_DIR.glob("*.yaml"))


def load_scenario(name_or_path: Union[str, Path]) -> ScenarioConfig:
    """Loads a scenario file, or a shipped scenario by name."""
    path = Path(name_or_path)
    if not path.exists() and str(name_or_path) in list_scenarios():
        path = SCENARIO_DIR / f"{name_or_path}.yaml"
    return parse_and_validate(path)


def _child(node, part: str):
    if isinstance(node, list):
        if part.isdigit():
            return int(part)
        for index, item in enumerate(node):
            if isinstance(item, dict) and part in (item.get("name"), item.get("cell_id")):
                return index
        raise KeyError(part)
    if isinstance(node, dict):
        if part in node:
            return part
        if part.isdigit() and int(part) in node:
            return int(part)
        return part
    raise KeyError(part)


def apply_override(config: ScenarioConfig, key: str, value: str) -> ScenarioConfig:
    """
    Returns a copy of ``config`` with the dotted ``key`` set to the YAML scalar
    ``value``. List items may be addressed by index, population name or cell id,
    e.g. ``cells.c1.uac.entries.7.barring_factor``.

    :raises ScenarioError: If the key does not exist or the result is invalid.
    """
    data = config.model_dump(mode="json")
    parts = key.split(".")
    node = data
    try:
        for part in parts[:-1]:
            node = node[_child(node, part)]
        node[_child(node, parts[-1])] = yaml.safe_load(value)
    except (KeyError, IndexError, TypeError) as e:
        raise ScenarioError([(key, f"no such scenario key ({e})")]) from None
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ScenarioError.from_validation_error(e) from None
