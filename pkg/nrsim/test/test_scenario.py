import pytest
import yaml

from nrsim.admission_control import PreemptionGranularity
from nrsim.core_model import RrcState, Snssai, seconds
from nrsim.scenario import (
    SCENARIO_DIR,
    ScenarioConfig,
    ScenarioError,
    apply_override,
    emit,
    list_scenarios,
    load_scenario,
    parse_and_validate,
    parse_scenario,
)

SHIPPED = ["massive_iot_burst", "mc_surge", "npn_reservation", "paging_storm", "slice_contention"]


def issue_paths(error: ScenarioError):
    return [path for path, _ in error.issues]


def test_minimal_scenario_gets_defaults(minimal_scenario):
    config = ScenarioConfig.model_validate(minimal_scenario)
    cell = config.cells[0]
    assert config.seed == 1
    assert config.duration == seconds(2)
    assert cell.uac.entries == {}
    assert cell.rach.n_preambles == 64
    assert cell.rach.max_attempts == 10
    assert cell.access.barred_retry_interval == seconds(300)
    assert not cell.admission.queueing_enabled
    assert cell.admission.preemption_granularity == PreemptionGranularity.FLOW
    assert cell.paging.budget == 32
    pop = config.populations[0]
    assert pop.session_duration == seconds(30)
    assert pop.template.rrc_state == RrcState.IDLE


def test_validated_file(tmp_path, minimal_scenario):
    path = tmp_path / "minimal.yaml"
    path.write_text(yaml.safe_dump(minimal_scenario))
    assert parse_and_validate(path).name == "minimal"


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError) as error:
        parse_and_validate(tmp_path / "absent.yaml")
    assert "cannot read scenario file" in str(error.value)


def test_not_a_mapping():
    with pytest.raises(ScenarioError):
        parse_scenario("- just\n- a list\n")
    with pytest.raises(ScenarioError):
        parse_scenario("cells: [unclosed\n")


def test_barring_factor_out_of_range(minimal_scenario):
    minimal_scenario["cells"][0]["uac"] = {"entries": {7: {"barring_factor": 1.5, "barring_time": "4s"}}}
    with pytest.raises(ScenarioError) as error:
        parse_scenario(yaml.safe_dump(minimal_scenario))
    assert issue_paths(error.value) == ["cells.0.uac.entries.7.barring_factor"]


def test_unknown_enum_and_missing_key(minimal_scenario):
    minimal_scenario["populations"][0]["template"]["rrc_state"] = "asleep"
    del minimal_scenario["cells"][0]["gnb"]
    with pytest.raises(ScenarioError) as error:
        parse_scenario(yaml.safe_dump(minimal_scenario))
    assert sorted(issue_paths(error.value)) == ["cells.0.gnb", "populations.0.template.rrc_state"]


def test_unknown_keys_are_rejected(minimal_scenario):
    minimal_scenario["cells"][0]["bandwidth"] = "100MHz"
    with pytest.raises(ScenarioError) as error:
        parse_scenario(yaml.safe_dump(minimal_scenario))
    assert issue_paths(error.value) == ["cells.0.bandwidth"]


def test_cross_references_are_reported_together(minimal_scenario):
    minimal_scenario["cells"].append(dict(minimal_scenario["cells"][0]))
    pop = minimal_scenario["populations"][0]
    pop["cell"] = "c9"
    pop["flows"][0]["snssai"] = {"sst": 2}
    pop["cause_mix"] = {"mo-Data": 0.5}
    with pytest.raises(ScenarioError) as error:
        parse_scenario(yaml.safe_dump(minimal_scenario))
    assert issue_paths(error.value) == [
        "cells.1.cell_id",
        "populations.0.cell",
        "populations.0.flows.0.snssai",
        "populations.0.cause_mix",
    ]


def test_paging_priority_within_cell_levels(minimal_scenario):
    minimal_scenario["cells"][0]["paging"] = {"priority_levels": 4}
    minimal_scenario["populations"][0]["traffic"] = [{"kind": "paging", "rate": 1, "priority_mix": {6: 1.0}}]
    with pytest.raises(ScenarioError) as error:
        parse_scenario(yaml.safe_dump(minimal_scenario))
    assert issue_paths(error.value) == ["populations.0.traffic.0.priority_mix"]


def test_shipped_scenarios_are_listed():
    assert list_scenarios() == SHIPPED


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenario_round_trips(name):
    config = load_scenario(name)
    assert parse_scenario(emit(config)) == config


def test_mc_surge_has_priority_populations():
    config = load_scenario(SCENARIO_DIR / "mc_surge.yaml")
    identities = {pop.name: pop.template.access_identities for pop in config.populations}
    assert identities["mps"] == {1}
    assert identities["mcs"] == {2}
    assert identities["regular"] == frozenset()
    entry = config.cells[0].uac.entries[7]
    assert entry.barring_factor == 0.05
    assert entry.ai_allow_bitmap[1] and entry.ai_allow_bitmap[2]


def test_slice_contention_pools():
    cell = load_scenario("slice_contention").cells[0]
    assert {pool.snssai: pool.dedicated_capacity for pool in cell.slices} == {
        Snssai(sst=1, sd=1): 20,
        Snssai(sst=1, sd=2): 20,
    }
    assert cell.shared_capacity == 0


class TestOverride:
    def test_by_name_and_cell_id(self):
        config = load_scenario("mc_surge")
        changed = apply_override(config, "populations.regular.count", "10")
        assert changed.populations[0].count == 10
        assert config.populations[0].count == 5000
        barred = apply_override(config, "cells.c1.uac.entries.7.barring_factor", "0.5")
        assert barred.cells[0].uac.entries[7].barring_factor == 0.5

    def test_durations_and_flags(self, minimal_scenario):
        config = ScenarioConfig.model_validate(minimal_scenario)
        assert apply_override(config, "duration", "5s").duration == seconds(5)
        assert apply_override(config, "cells.0.admission.queueing_enabled", "true").cells[0].admission.queueing_enabled

    def test_unknown_key(self, minimal_scenario):
        config = ScenarioConfig.model_validate(minimal_scenario)
        with pytest.raises(ScenarioError):
            apply_override(config, "populations.nobody.count", "1")
        with pytest.raises(ScenarioError):
            apply_override(config, "cells.c1.uac.entries.7.barring_factor", "0.5")

    def test_invalid_value(self, minimal_scenario):
        config = ScenarioConfig.model_validate(minimal_scenario)
        with pytest.raises(ScenarioError) as error:
            apply_override(config, "populations.ues.count", "-3")
        assert issue_paths(error.value) == ["populations.0.count"]
