"""Product panel ingestion and binary chromosome encoding.

A product is a bag of attribute strings observed in one calendar year.
Attributes act as the units of inheritance; the panel encodes each
product as a binary row over the lexicographically ordered attribute
vocabulary.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, ValidationError

CSV_HEADER = ["id", "name", "year", "attributes"]
ATTR_SEPARATOR = "|"


@dataclass(frozen=True)
class ProductRecord:
    """One product: unique id, display name, year, attribute set."""

    id: str
    name: str
    year: int
    attributes: frozenset

    def __post_init__(self):
        if not self.attributes:
            raise ValidationError(f"product {self.id!r} has no attributes")


@dataclass(frozen=True)
class GenotypeVocabulary:
    """Bijection between attribute strings and contiguous column indices.

    Ordering is lexicographic by attribute string, which makes column
    indices reproducible across runs and machines.
    """

    attributes: tuple
    index: dict = field(repr=False)

    @classmethod
    def from_attributes(cls, attributes) -> "GenotypeVocabulary":
        ordered = tuple(sorted(set(attributes)))
        return cls(ordered, {a: i for i, a in enumerate(ordered)})

    def __len__(self):
        return len(self.attributes)

    def __contains__(self, attribute):
        return attribute in self.index

    def digest(self) -> str:
        """sha256 over the ordered attribute list; identifies the vocabulary."""
        h = hashlib.sha256()
        for a in self.attributes:
            h.update(a.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


@dataclass
class ChromosomeMatrix:
    """Binary product-by-genotype incidence matrix.

    Rows follow (year, id) order; entry (i, k) is 1 iff product i carries
    genotype k.  Stored sparse: the full mobile-phone panel is <1% dense.
    """

    data: sp.csr_matrix
    records: list
    vocab: GenotypeVocabulary

    def __post_init__(self):
        self.years = np.array([r.year for r in self.records], dtype=np.int64)
        self.product_ids = [r.id for r in self.records]

    @property
    def shape(self):
        return self.data.shape

    @property
    def num_products(self):
        return self.data.shape[0]

    @property
    def num_genotypes(self):
        return self.data.shape[1]

    def distinct_years(self) -> np.ndarray:
        return np.unique(self.years)

    def year_groups(self):
        """[(year, row indices)] sorted ascending by year."""
        return [
            (int(y), np.flatnonzero(self.years == y))
            for y in self.distinct_years()
        ]

    def genotype_indices(self, row: int) -> np.ndarray:
        """Sorted column indices carried by one product row."""
        lo, hi = self.data.indptr[row], self.data.indptr[row + 1]
        return self.data.indices[lo:hi]

    def decode_row(self, row: int) -> frozenset:
        """Attribute strings for one row (inverse of the encoding)."""
        return frozenset(
            self.vocab.attributes[k] for k in self.genotype_indices(row)
        )

    def row_attribute_counts(self) -> np.ndarray:
        return np.diff(self.data.indptr)


def _clean_attributes(raw, record_id, line=None):
    cleaned = {a.strip() for a in raw}
    cleaned.discard("")
    if not cleaned:
        raise FormatError(
            f"record {record_id!r} has an empty attribute set", line=line
        )
    return frozenset(cleaned)


def _parse_year(value, record_id, line):
    try:
        return int(str(value).strip())
    except (TypeError, ValueError):
        raise FormatError(
            f"record {record_id!r} has a non-integer year {value!r}", line=line
        ) from None


def _load_csv(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty file", line=1) from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise FormatError(
                f"expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}",
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise FormatError(
                    f"expected {len(CSV_HEADER)} fields, got {len(row)}",
                    line=lineno,
                )
            pid, name, year, attrs = row
            pid = pid.strip()
            if not pid:
                raise FormatError("empty product id", line=lineno)
            records.append(
                ProductRecord(
                    id=pid,
                    name=name.strip(),
                    year=_parse_year(year, pid, lineno),
                    attributes=_clean_attributes(
                        attrs.split(ATTR_SEPARATOR), pid, line=lineno
                    ),
                )
            )
    return records


def _load_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from None
            missing = {"id", "year", "attributes"} - obj.keys()
            if missing:
                raise FormatError(
                    f"missing keys {sorted(missing)}", line=lineno
                )
            pid = str(obj["id"]).strip()
            if not pid:
                raise FormatError("empty product id", line=lineno)
            attrs = obj["attributes"]
            if not isinstance(attrs, list):
                raise FormatError(
                    f"record {pid!r}: attributes must be an array", line=lineno
                )
            records.append(
                ProductRecord(
                    id=pid,
                    name=str(obj.get("name", "")).strip(),
                    year=_parse_year(obj["year"], pid, lineno),
                    attributes=_clean_attributes(attrs, pid, line=lineno),
                )
            )
    return records


def load_products(path, format=None) -> list:
    """Load product records from a CSV or JSONL file.

    ``format`` is ``"csv"`` or ``"jsonl"``; inferred from the extension
    when omitted.  Records come back sorted by (year, id); duplicate ids
    and empty attribute sets are rejected.
    """
    path = str(path)
    if format is None:
        format = "jsonl" if path.endswith((".jsonl", ".ndjson")) else "csv"
    if format == "csv":
        records = _load_csv(path)
    elif format == "jsonl":
        records = _load_jsonl(path)
    else:
        raise ValidationError(f"unknown format {format!r}")

    seen = {}
    for r in records:
        if r.id in seen:
            raise ValidationError(f"duplicate product id {r.id!r}")
        seen[r.id] = r
    records.sort(key=lambda r: (r.year, r.id))
    return records


def build_vocabulary(records) -> GenotypeVocabulary:
    """Vocabulary over the union of all attribute strings, lexicographic."""
    if not records:
        raise ValidationError("cannot build a vocabulary from zero records")
    attrs = set()
    for r in records:
        attrs.update(r.attributes)
    return GenotypeVocabulary.from_attributes(attrs)


def encode_chromosomes(records, vocab: GenotypeVocabulary) -> ChromosomeMatrix:
    """Encode records as a binary CSR matrix over ``vocab`` columns.

    Rows keep the given record order, which `load_products` guarantees is
    (year, id) ascending.  Attributes absent from the vocabulary are an
    error rather than silently dropped.
    """
    if not records:
        raise ValidationError("cannot encode zero records")
    ordered = sorted(records, key=lambda r: (r.year, r.id))
    indptr = [0]
    indices = []
    for r in ordered:
        cols = []
        for a in r.attributes:
            k = vocab.index.get(a)
            if k is None:
                raise ValidationError(
                    f"record {r.id!r} carries unknown attribute {a!r}"
                )
            cols.append(k)
        cols.sort()
        indices.extend(cols)
        indptr.append(len(indices))
    data = np.ones(len(indices), dtype=np.int8)
    matrix = sp.csr_matrix(
        (data, np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
        shape=(len(ordered), len(vocab)),
    )
    matrix.sort_indices()
    return ChromosomeMatrix(data=matrix, records=ordered, vocab=vocab)


def write_products_csv(records, path):
    """Write records in the same CSV dialect `load_products` reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in sorted(records, key=lambda r: (r.year, r.id)):
            writer.writerow(
                [r.id, r.name, r.year, ATTR_SEPARATOR.join(sorted(r.attributes))]
            )


def write_products_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in sorted(records, key=lambda r: (r.year, r.id)):
            fh.write(
                json.dumps(
                    {
                        "id": r.id,
                        "name": r.name,
                        "year": r.year,
                        "attributes": sorted(r.attributes),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
