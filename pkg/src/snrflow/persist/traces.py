"""Metric trace CSV files: ``iteration,metric_name,value`` with a header row.

Divergence markers are written as the literal ``nan``. Rows of different metrics may
interleave; reading groups them by name in first-seen order.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable
from pathlib import Path
from types import TracebackType
from typing import TextIO

from snrflow.data.models import MetricTrace, Orientation
from snrflow.errors import TraceFormatError

HEADER = ["iteration", "metric_name", "value"]

# orientation of the metrics the trainer emits
KNOWN_ORIENTATIONS: dict[str, Orientation] = {
    "train_loss": Orientation.LOWER_BETTER,
    "neg_val_loss": Orientation.HIGHER_BETTER,
    "energy_distance": Orientation.LOWER_BETTER,
    "psnr": Orientation.HIGHER_BETTER,
}


def orientation_for(name: str) -> Orientation:
    return KNOWN_ORIENTATIONS.get(name, Orientation.HIGHER_BETTER)


def _format_value(value: float) -> str:
    return "nan" if math.isnan(value) else repr(float(value))


class TraceWriter:
    """Appends trace rows to a CSV file, flushing after every row"""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file: TextIO = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(HEADER)

    def append(self, name: str, iteration: int, value: float) -> None:
        self._writer.writerow([iteration, name, _format_value(value)])
        self._file.flush()

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> TraceWriter:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()


def traces_to_csv(traces: Iterable[MetricTrace]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for trace in traces:
        for iteration, value in zip(trace.iterations, trace.values):
            writer.writerow([iteration, trace.name, _format_value(value)])
    return buf.getvalue()


def write_traces(path: str | Path, traces: Iterable[MetricTrace]) -> None:
    Path(path).write_text(traces_to_csv(traces), encoding="utf-8")


def parse_traces(text: str) -> list[MetricTrace]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != HEADER:
        raise TraceFormatError(f"expected header {','.join(HEADER)}, got {header}")
    grouped: dict[str, MetricTrace] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise TraceFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            iteration, value = int(row[0]), float(row[2])
        except ValueError as e:
            raise TraceFormatError(f"line {lineno}: {e}") from e
        name = row[1]
        trace = grouped.setdefault(name, MetricTrace(name=name, orientation=orientation_for(name)))
        try:
            trace.append(iteration, value)
        except ValueError as e:
            raise TraceFormatError(f"line {lineno}: {e}") from e
    return list(grouped.values())


def read_traces(path: str | Path) -> list[MetricTrace]:
    return parse_traces(Path(path).read_text(encoding="utf-8"))
