"""Loading and summarising the Swedish third-party motor-insurance table.

Each row is one rating cell with seven columns::

    kilometres zone bonus make insured claims payment

Files may be comma- or whitespace-delimited; a non-numeric first row is
treated as a header.  Payments are divided by ``scale_divisor`` on load.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .fitting import SampleMoments

__all__ = [
    "DataError",
    "ClaimRecord",
    "SubsetFilter",
    "DataSummary",
    "NAMED_FILTERS",
    "COLUMNS",
    "load_dataset",
    "parse_dataset",
    "get_filter",
    "summarize",
    "inconsistent_records",
]

COLUMNS = ("kilometres", "zone", "bonus", "make", "insured", "claims", "payment")
CATEGORY_RANGES = {"kilometres": (1, 5), "zone": (1, 7), "bonus": (1, 7), "make": (1, 9)}
DEFAULT_SCALE = 1000.0


class DataError(ValueError):
    """The input file cannot be parsed as the seven-column table."""


@dataclass(frozen=True)
class ClaimRecord:
    kilometres: int
    zone: int
    bonus: int
    make: int
    insured: float
    claims: int
    payment: float


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def _split_rows(text):
    lines = text.splitlines()
    first = next((ln for ln in lines if ln.strip()), "")
    if "," in first:
        rows = csv.reader(io.StringIO(text))
        for lineno, row in enumerate(rows, start=1):
            if any(cell.strip() for cell in row):
                yield lineno, [cell.strip() for cell in row]
    else:
        for lineno, line in enumerate(lines, start=1):
            if line.strip():
                yield lineno, line.split()


def _parse_row(lineno, fields, scale_divisor):
    if len(fields) != len(COLUMNS):
        raise DataError(f"line {lineno}: expected {len(COLUMNS)} columns, found {len(fields)}")
    values = {}
    for name, token in zip(COLUMNS, fields):
        try:
            number = float(token)
        except ValueError:
            raise DataError(f"line {lineno}: column '{name}' is not numeric: {token!r}") from None
        if name in CATEGORY_RANGES or name == "claims":
            if number != int(number):
                raise DataError(f"line {lineno}: column '{name}' must be an integer, got {token!r}")
            number = int(number)
        if number < 0:
            raise DataError(f"line {lineno}: column '{name}' must be nonnegative, got {token!r}")
        if name in CATEGORY_RANGES:
            lo, hi = CATEGORY_RANGES[name]
            if not lo <= number <= hi:
                raise DataError(f"line {lineno}: {name} code {number} outside {lo}..{hi}")
        values[name] = number
    values["payment"] = values["payment"] / scale_divisor
    return ClaimRecord(**values)


def parse_dataset(text, scale_divisor=DEFAULT_SCALE):
    """Parse the table from a string; see :func:`load_dataset`."""
    if not scale_divisor > 0:
        raise ValueError(f"scale divisor must be positive, got {scale_divisor!r}")
    records = []
    for i, (lineno, fields) in enumerate(_split_rows(text)):
        if i == 0 and not all(_is_number(tok) for tok in fields):
            continue
        records.append(_parse_row(lineno, fields, scale_divisor))
    return records


def load_dataset(path, scale_divisor=DEFAULT_SCALE):
    """Read every record of the file at ``path``.  An empty file gives ``[]``."""
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read(), scale_divisor)


def inconsistent_records(records):
    """Rows with payment but no claims (or claims but no payment); kept, only reported."""
    return [r for r in records if (r.claims == 0) != (r.payment == 0)]


@dataclass(frozen=True)
class SubsetFilter:
    """Keep records whose listed columns take one of the allowed values."""

    allowed: dict = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        for column in self.allowed:
            if column not in COLUMNS:
                raise ValueError(f"unknown column {column!r} in filter; columns are {COLUMNS}")

    def matches(self, record):
        return all(getattr(record, col) in values for col, values in self.allowed.items())

    def apply(self, records):
        return [r for r in records if self.matches(r)]

    @classmethod
    def parse(cls, spec, name="custom"):
        """Inline form ``"zone=1,2;bonus=1-3"``: per-column value lists or ranges."""
        allowed = {}
        for part in filter(None, (p.strip() for p in spec.split(";"))):
            column, sep, values = part.partition("=")
            if not sep:
                raise ValueError(f"filter term {part!r} must look like column=values")
            chosen = set()
            for token in values.split(","):
                token = token.strip()
                lo, dash, hi = token.partition("-")
                try:
                    if dash:
                        chosen.update(range(int(lo), int(hi) + 1))
                    else:
                        chosen.add(int(token))
                except ValueError:
                    raise ValueError(f"filter value {token!r} is not an integer or range") from None
            allowed[column.strip().lower()] = frozenset(chosen)
        return cls(allowed, name)

    def describe(self):
        return {col: sorted(vals) for col, vals in self.allowed.items()}


#: ``larger_cities``: zones 1 and 2, the two big-city zones of the rating
#: scheme.  With complete cells this gives 5 * 2 * 7 * 9 = 630 rows.
NAMED_FILTERS = {
    "all": SubsetFilter({}, "all"),
    "larger_cities": SubsetFilter({"zone": frozenset({1, 2})}, "larger_cities"),
}


def get_filter(name_or_spec):
    """A named filter, or an inline spec understood by :meth:`SubsetFilter.parse`."""
    if name_or_spec in NAMED_FILTERS:
        return NAMED_FILTERS[name_or_spec]
    if "=" in name_or_spec:
        return SubsetFilter.parse(name_or_spec)
    raise ValueError(f"unknown filter {name_or_spec!r}; named filters are {sorted(NAMED_FILTERS)}")


@dataclass(frozen=True)
class DataSummary:
    count_moments: SampleMoments
    aggregate_moments: SampleMoments
    total_claims: int
    total_payment: float
    n_records: int

    def to_dict(self):
        return {
            "records": self.n_records,
            "claims": {"mean": self.count_moments.mean, "variance": self.count_moments.variance},
            "payment": {"mean": self.aggregate_moments.mean, "variance": self.aggregate_moments.variance},
            "total_claims": self.total_claims,
            "total_payment": self.total_payment,
        }


def summarize(records):
    """Sample moments of the claims and payment columns plus their totals."""
    if len(records) < 2:
        raise ValueError(f"summary needs at least 2 records, got {len(records)}")
    claims = np.array([r.claims for r in records], dtype=float)
    payment = np.array([r.payment for r in records], dtype=float)
    return DataSummary(
        count_moments=SampleMoments.from_sample(claims),
        aggregate_moments=SampleMoments.from_sample(payment),
        total_claims=int(claims.sum()),
        total_payment=float(payment.sum()),
        n_records=len(records),
    )
