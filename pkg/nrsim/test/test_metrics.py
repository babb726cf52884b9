import json

import pandas as pd
import pytest

from nrsim.metrics import COLUMNS, EventLog, MetricsSink, ai_label


@pytest.fixture
def sink() -> MetricsSink:
    sink = MetricsSink()
    sink.outcome(1, "access_success", ai="0", ac="7", slice_="1", cause="mo-Data")
    sink.outcome(2, "barred_uac", ai="0", ac="7", slice_="1", cause="mo-Data")
    sink.outcome(3, "access_success", ai="0+1", ac="7", slice_="1", cause="mps-PriorityAccess")
    sink.observe("access_latency", 21_000, ai="0", ac="7", slice_="1", cause="mo-Data")
    sink.observe("access_latency", 41_000, ai="0", ac="7", slice_="1", cause="mo-Data")
    sink.count("ra_collisions", ac="7", n=3)
    return sink


def test_ai_label():
    assert ai_label({2, 0}) == "0+2"
    assert ai_label(set()) == ""


def test_outcomes_must_be_terminal_and_unique():
    sink = MetricsSink()
    with pytest.raises(ValueError):
        sink.outcome(1, "queued")
    sink.outcome(1, "rejects")
    with pytest.raises(RuntimeError):
        sink.outcome(1, "access_success")
    assert sink.terminated == 1


def test_report_table(sink):
    report = sink.report()
    assert list(report.table.columns) == COLUMNS
    assert report.total("access_success") == 2
    assert report.total("access_success", ai="0+1") == 1
    assert report.total("access_success", slice_="1", cause="mo-Data") == 1
    assert report.total("ra_collisions") == 3
    assert report.total("paging_sent") == 0
    assert report.rate("access_success", ai="0") == pytest.approx(0.5)
    assert report.rate("access_success", ai="7") == 0.0


def test_histogram_columns(sink):
    table = sink.report().table
    latency = table[table["metric"] == "access_latency"].iloc[0]
    assert latency["count"] == 2
    assert latency["sum"] == 62_000
    assert latency["p50"] == pytest.approx(31_000)
    assert "mean access latency: 31.000 ms" in sink.report().summary()


def test_summary_lists_outcomes(sink):
    summary = sink.report().summary()
    assert summary.startswith("terminated attempts: 3\n")
    assert "access_success" in summary
    assert "ra_collisions" in summary


def test_report_files(sink, tmp_path):
    report = sink.report()
    report.to_csv(tmp_path / "metrics.csv")
    report.to_json(tmp_path / "metrics.json")
    table = pd.read_csv(tmp_path / "metrics.csv", dtype={"ai": str, "ac": str, "slice": str})
    assert list(table.columns) == COLUMNS
    assert len(table) == len(report.table)
    records = json.loads((tmp_path / "metrics.json").read_text())
    assert {r["metric"] for r in records} == {"access_success", "barred_uac", "access_latency", "ra_collisions"}


def test_empty_report():
    report = MetricsSink().report()
    assert report.is_empty()
    assert report.total("access_success") == 0
    assert report.rate("access_success") == 0.0


class TestEventLog:
    def fill(self, log: EventLog) -> EventLog:
        log.event(0, 1, "attempt-start", "c1", 5, "1-000001")
        log.note(0, "uac", "c1", 5, "1-000001", "ac=7 factor-passed")
        log.event(10, 2, "rach-occasion", "c1")
        log.event(12, 3, "attempt-start", "c1", 6, "1-000002")
        return log

    def test_notes_inherit_the_event_sequence(self):
        log = self.fill(EventLog())
        assert [r.seq for r in log.records] == [1, 1, 2, 3]
        assert len(log) == 4

    def test_digest_is_a_function_of_the_records(self):
        assert self.fill(EventLog()).digest() == self.fill(EventLog()).digest()
        other = self.fill(EventLog())
        other.note(12, "uac", "c1", 6, "1-000002", "ac=7 barred")
        assert other.digest() != self.fill(EventLog()).digest()

    def test_digest_does_not_need_the_records(self):
        kept = self.fill(EventLog())
        hashed = self.fill(EventLog(keep_records=False))
        assert hashed.records == []
        assert len(hashed) == 4
        assert hashed.digest() == kept.digest()

    def test_filters(self):
        log = self.fill(EventLog())
        assert log.for_slice("1-000001") == [
            (0, "attempt-start", "c1", 5, "1-000001", ""),
            (0, "uac", "c1", 5, "1-000001", "ac=7 factor-passed"),
        ]
        assert [r.ue for r in log.of_kind("attempt-start")] == [5, 6]

    def test_write(self, tmp_path):
        log = self.fill(EventLog())
        log.write(tmp_path / "events.log")
        lines = (tmp_path / "events.log").read_text().splitlines()
        assert lines[1] == "0|1|uac|c1|5|1-000001|ac=7 factor-passed"
