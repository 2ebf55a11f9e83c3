"""Feature-by-sample count tables stored as CSV.

Layout: the header row holds a corner label followed by the sample ids; every
following row holds a feature id followed by one nonnegative integer count per
sample::

    feature,S1,S2,S3
    otu_1,0,3,0
    otu_2,12,0,7
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_CORNER = "feature"


class TableParseError(ValueError):
    """Malformed table; ``line`` is 1-based (0 when not tied to a line)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class CountTable:
    feature_ids: tuple
    sample_ids: tuple
    counts: np.ndarray
    corner: str = DEFAULT_CORNER

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 2:
            raise ValueError("counts must be a features x samples matrix")
        if counts.shape != (len(self.feature_ids), len(self.sample_ids)):
            raise ValueError(
                f"counts shape {counts.shape} does not match "
                f"{len(self.feature_ids)} features x {len(self.sample_ids)} samples"
            )
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        features = tuple(str(f) for f in self.feature_ids)
        samples = tuple(str(s) for s in self.sample_ids)
        for kind, ids in (("feature", features), ("sample", samples)):
            if any(not i or i != i.strip() for i in ids):
                raise ValueError(f"{kind} ids must be nonempty without surrounding whitespace")
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {kind} ids")
        object.__setattr__(self, "feature_ids", features)
        object.__setattr__(self, "sample_ids", samples)
        object.__setattr__(self, "corner", str(self.corner).strip())
        object.__setattr__(self, "counts", counts)

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    def row(self, feature) -> np.ndarray:
        """Counts of one feature, selected by id or by integer position."""
        if isinstance(feature, (int, np.integer)):
            return self.counts[int(feature)]
        try:
            return self.counts[self.feature_ids.index(str(feature))]
        except ValueError:
            raise KeyError(f"no feature named {feature!r}") from None

    def __eq__(self, other):
        if not isinstance(other, CountTable):
            return NotImplemented
        return (
            self.feature_ids == other.feature_ids
            and self.sample_ids == other.sample_ids
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None


def _parse_count(text: str, line: int, column: int) -> int:
    token = text.strip()
    try:
        value = int(token)
    except ValueError:
        try:
            as_float = float(token)
        except ValueError:
            raise TableParseError(f"column {column}: {token!r} is not an integer", line) from None
        if not np.isfinite(as_float) or as_float != int(as_float):
            raise TableParseError(f"column {column}: {token!r} is not an integer", line) from None
        value = int(as_float)
    if value < 0:
        raise TableParseError(f"column {column}: negative count {value}", line)
    return value


def parse_table(text: str) -> CountTable:
    """Parse CSV text; blank lines are skipped, line numbers refer to ``text``."""
    rows = []
    reader = csv.reader(io.StringIO(text))
    try:
        for record in reader:
            if not record or all(not cell.strip() for cell in record):
                continue
            rows.append((reader.line_num, record))
    except csv.Error as exc:
        raise TableParseError(str(exc), reader.line_num) from None
    if not rows:
        raise TableParseError("empty table")
    header_line, header = rows[0]
    sample_ids = [s.strip() for s in header[1:]]
    if not sample_ids:
        raise TableParseError("header has no sample columns", header_line)
    if not all(sample_ids):
        raise TableParseError("empty sample id in header", header_line)
    if len(set(sample_ids)) != len(sample_ids):
        raise TableParseError("duplicate sample ids in header", header_line)
    if len(rows) == 1:
        raise TableParseError("table has no feature rows", header_line)

    feature_ids, counts, seen = [], [], set()
    for line, record in rows[1:]:
        if len(record) != len(sample_ids) + 1:
            raise TableParseError(
                f"expected {len(sample_ids) + 1} fields, found {len(record)}", line
            )
        fid = record[0].strip()
        if not fid:
            raise TableParseError("missing feature id", line)
        if fid in seen:
            raise TableParseError(f"duplicate feature id {fid!r}", line)
        seen.add(fid)
        feature_ids.append(fid)
        counts.append([_parse_count(cell, line, j + 2) for j, cell in enumerate(record[1:])])
    return CountTable(feature_ids, sample_ids, np.array(counts, dtype=np.int64), header[0].strip())


def read_table(path) -> CountTable:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise TableParseError(f"not a text file: {exc}") from None
    return parse_table(text)


def format_table(table: CountTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([table.corner, *table.sample_ids])
    for fid, row in zip(table.feature_ids, table.counts):
        writer.writerow([fid, *(int(v) for v in row)])
    return buf.getvalue()


def write_table(table: CountTable, path) -> None:
    Path(path).write_text(format_table(table))
