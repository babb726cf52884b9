"""
Metrics and event log of a simulation run.

:class:`MetricsSink` collects counters and samples keyed by (metric, AI set,
AC, slice, cause) while a run executes; :class:`MetricsReport` turns them into
a pandas table that is written as CSV, JSON or parquet. :class:`EventLog` is
the append-only record of executed events and decisions whose SHA-256 digest
identifies a run.
"""
import hashlib
import logging
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# Exactly one of these is counted for every access attempt that terminates.
TERMINAL_OUTCOMES = ("access_success", "barred_cell", "barred_uac", "ra_failures", "rejects")

COLUMNS = ["metric", "ai", "ac", "slice", "cause", "count", "sum", "p50", "p95"]


class MetricKey(NamedTuple):
    metric: str
    ai: str = ""
    ac: str = ""
    slice: str = ""
    cause: str = ""


def ai_label(ais: Optional[Iterable[int]]) -> str:
    """Writes an AI set as ``"0+1"``."""
    if not ais:
        return ""
    return "+".join(str(ai) for ai in sorted(ais))


class MetricsSink(object):
    """
    Counters and histograms of one run.

    :ivar counts: Occurrences per metric key.
    :ivar samples: Observed values per metric key (histograms).
    """

    def __init__(self):
        self.counts: Counter = Counter()
        self.samples: Dict[MetricKey, List[int]] = defaultdict(list)
        self._terminated = set()

    def count(self, metric: str, ai: str = "", ac: str = "", slice_: str = "", cause: str = "", n: int = 1) -> None:
        self.counts[MetricKey(metric, ai, ac, slice_, cause)] += n

    def observe(self, metric: str, value: int, ai: str = "", ac: str = "", slice_: str = "", cause: str = "") -> None:
        key = MetricKey(metric, ai, ac, slice_, cause)
        self.counts[key] += 1
        self.samples[key].append(value)

    def outcome(self, attempt_id: int, outcome: str, ai: str = "", ac: str = "", slice_: str = "", cause: str = ""):
        """
        Records the terminal outcome of an access attempt.

        :raises ValueError: If ``outcome`` is not a terminal outcome.
        :raises RuntimeError: If the attempt already terminated.
        """
        if outcome not in TERMINAL_OUTCOMES:
            raise ValueError(f"'{outcome}' is not a terminal outcome, expected one of {TERMINAL_OUTCOMES}")
        if attempt_id in self._terminated:
            raise RuntimeError(f"attempt {attempt_id} already has a terminal outcome")
        self._terminated.add(attempt_id)
        self.count(outcome, ai, ac, slice_, cause)

    @property
    def terminated(self) -> int:
        return len(self._terminated)

    def report(self) -> "MetricsReport":
        rows = []
        for key in sorted(self.counts):
            values = self.samples.get(key)
            if values:
                sample = np.asarray(values, dtype=np.int64)
                total = int(sample.sum())
                p50, p95 = (float(p) for p in np.percentile(sample, [50, 95]))
            else:
                total, p50, p95 = self.counts[key], np.nan, np.nan
            rows.append((*key, self.counts[key], total, p50, p95))
        return MetricsReport(pd.DataFrame(rows, columns=COLUMNS))


class MetricsReport(object):
    """
    Tabular metrics of a finished run, one row per metric key.

    :ivar table: The metrics as a DataFrame with the columns of ``COLUMNS``.
    """

    def __init__(self, table: pd.DataFrame):
        self.table = table

    def total(self, metric: str, **labels) -> int:
        """Sum of ``count`` over rows of ``metric`` matching every given label."""
        rows = self.table[self.table["metric"] == metric]
        for column, value in labels.items():
            rows = rows[rows[column.rstrip("_")] == value]
        return int(rows["count"].sum())

    def rate(self, metric: str, of: Iterable[str] = TERMINAL_OUTCOMES, **labels) -> float:
        """Share of ``metric`` among the outcomes ``of`` for the given labels."""
        denominator = sum(self.total(m, **labels) for m in of)
        return self.total(metric, **labels) / denominator if denominator else 0.0

    def is_empty(self) -> bool:
        return self.table.empty

    def to_csv(self, path: Path) -> None:
        self.table.to_csv(path, index=False, float_format="%.1f")

    def to_json(self, path: Path) -> None:
        self.table.to_json(path, orient="records", indent=2)

    def to_parquet(self, path: Path) -> None:
        self.table.to_parquet(path, index=False)

    def summary(self) -> str:
        lines = []
        outcomes = self.table[self.table["metric"].isin(TERMINAL_OUTCOMES)]
        totals = outcomes.groupby("metric")["count"].sum()
        attempts = int(totals.sum())
        lines.append(f"terminated attempts: {attempts}")
        for outcome in TERMINAL_OUTCOMES:
            n = int(totals.get(outcome, 0))
            share = n / attempts if attempts else 0.0
            lines.append(f"  {outcome:<16}{n:>10}  ({share:.2%})")
        others = self.table[~self.table["metric"].isin(TERMINAL_OUTCOMES)]
        if not others.empty:
            lines.append("other metrics:")
            for metric, count in others.groupby("metric")["count"].sum().items():
                lines.append(f"  {metric:<16}{int(count):>10}")
        latency = self.table[self.table["metric"] == "access_latency"]
        if not latency.empty:
            mean_ms = latency["sum"].sum() / latency["count"].sum() / 1000.0
            lines.append(f"mean access latency: {mean_ms:.3f} ms")
        return "\n".join(lines) + "\n"


class LogRecord(NamedTuple):
    time: int
    seq: int
    kind: str
    cell: str = ""
    ue: int = -1
    slice: str = ""
    detail: str = ""

    def line(self) -> str:
        return f"{self.time}|{self.seq}|{self.kind}|{self.cell}|{self.ue}|{self.slice}|{self.detail}"


class EventLog(object):
    """
    Append-only log of executed events and the decisions they took.

    Engine events carry their sequence number; decision notes recorded while
    an event executes inherit it.
    """

    def __init__(self, keep_records: bool = True):
        self.keep_records = keep_records
        self.records: List[LogRecord] = []
        self._hash = hashlib.sha256()
        self._length = 0
        self._current_seq = 0

    def __len__(self) -> int:
        return self._length

    def append(self, record: LogRecord) -> None:
        self._hash.update(record.line().encode())
        self._hash.update(b"\n")
        self._length += 1
        if self.keep_records:
            self.records.append(record)

    def event(self, time: int, seq: int, kind: str, cell: str = "", ue: int = -1, slice_: str = "") -> None:
        self._current_seq = seq
        self.append(LogRecord(time, seq, kind, cell, ue, slice_))

    def note(self, time: int, kind: str, cell: str = "", ue: int = -1, slice_: str = "", detail: str = "") -> None:
        self.append(LogRecord(time, self._current_seq, kind, cell, ue, slice_, detail))

    def digest(self) -> str:
        return self._hash.hexdigest()

    def lines(self) -> Iterator[str]:
        return (record.line() for record in self.records)

    def for_slice(self, slice_: str) -> List[Tuple]:
        """Records of one slice without sequence numbers, for runs compared across populations."""
        return [
            (r.time, r.kind, r.cell, r.ue, r.slice, r.detail) for r in self.records if r.slice == slice_
        ]

    def of_kind(self, kind: str) -> List[LogRecord]:
        return [record for record in self.records if record.kind == kind]

    def write(self, path: Path) -> None:
        with open(path, "w") as f:
            for line in self.lines():
                f.write(line + "\n")
