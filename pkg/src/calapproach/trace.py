"""Per-stage metric traces and the stage schedule they are logged on."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np


def log_schedule(n, every=None):
    """Stages 1, 2, 4, 8, ... plus every multiple of ``every`` up to ``n``.

    ``every`` defaults to ``n // 100`` (at least 1). Stage ``n`` is always
    included.
    """
    stages = set()
    k = 1
    while k <= n:
        stages.add(k)
        k *= 2
    step = max(n // 100, 1) if every is None else int(every)
    if step < 1:
        raise ValueError("log interval must be >= 1")
    stages.update(range(step, n + 1, step))
    if n >= 1:
        stages.add(n)
    return stages


@dataclass
class MetricTrace:
    """Metadata plus rows ``(n, metric values...)`` with strictly increasing n."""

    metadata: dict
    metrics: list
    stages: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def append(self, n, **values):
        if self.stages and n <= self.stages[-1]:
            raise ValueError(f"stage {n} not after {self.stages[-1]}")
        missing = set(self.metrics) - values.keys()
        if missing:
            raise ValueError(f"missing metrics {sorted(missing)}")
        self.stages.append(int(n))
        self.rows.append([float(values[m]) for m in self.metrics])

    def __len__(self):
        return len(self.stages)

    def column(self, name):
        k = self.metrics.index(name)
        return np.array([row[k] for row in self.rows])

    def last(self, name):
        return self.rows[-1][self.metrics.index(name)]

    def at(self, n, name):
        return self.rows[self.stages.index(n)][self.metrics.index(name)]

    def __eq__(self, other):
        if not isinstance(other, MetricTrace):
            return NotImplemented
        return (self.metadata == other.metadata and list(self.metrics) == list(other.metrics)
                and self.stages == other.stages and _rows_equal(self.rows, other.rows))


def _rows_equal(a, b):
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for x, y in zip(ra, rb):
            if not (x == y or (math.isnan(x) and math.isnan(y))):
                return False
    return True


def export(trace, path, format="csv"):
    """Write a trace as CSV (header ``n,<metric>,...``) or JSON lines.

    The JSONL form starts with a metadata object followed by one object per
    logged stage. ``path`` may also be an open text stream.
    """
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {format!r}; expected 'csv' or 'jsonl'")
    if hasattr(path, "write"):
        _write(trace, path, format)
        return
    with open(path, "w", newline="") as fh:
        _write(trace, fh, format)


def _write(trace, fh, format):
    if format == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", *trace.metrics])
        for n, row in zip(trace.stages, trace.rows):
            w.writerow([n, *(repr(v) for v in row)])
    else:
        fh.write(json.dumps({"metadata": trace.metadata, "metrics": list(trace.metrics)},
                            sort_keys=True) + "\n")
        for n, row in zip(trace.stages, trace.rows):
            rec = {"n": n}
            rec.update(zip(trace.metrics, row))
            fh.write(json.dumps(rec) + "\n")


def load_jsonl(path):
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    head = lines[0]
    trace = MetricTrace(head["metadata"], head["metrics"])
    for rec in lines[1:]:
        n = rec.pop("n")
        trace.append(n, **rec)
    return trace


def load_csv(path, metadata=None):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        trace = MetricTrace(metadata or {}, header[1:])
        for row in reader:
            trace.append(int(row[0]), **dict(zip(header[1:], map(float, row[1:]))))
    return trace
