"""Loading, validation, and encoding of product panels."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phylo_forecast import (
    FormatError,
    ProductRecord,
    ValidationError,
    build_vocabulary,
    encode_chromosomes,
    load_products,
    write_products_csv,
    write_products_jsonl,
)

from conftest import HANDMADE_ROWS, make_panel


def test_record_rejects_empty_attributes():
    with pytest.raises(ValidationError):
        ProductRecord("p1", "p1", 2010, frozenset())


def test_records_sorted_by_year_then_id(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text(
        "id,name,year,attributes\n"
        "z9,z9,2010,a\n"
        "m5,m5,2012,b\n"
        "a1,a1,2010,c\n"
        "k2,k2,2011,a|b\n"
    )
    records = load_products(path)
    assert [r.id for r in records] == ["a1", "z9", "k2", "m5"]
    assert [r.year for r in records] == [2010, 2010, 2011, 2012]


def test_csv_attribute_splitting(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("id,name,year,attributes\np1,p1,2010, cam |gps|| mp3 \n")
    (rec,) = load_products(path)
    assert rec.attributes == frozenset({"cam", "gps", "mp3"})


@pytest.mark.parametrize(
    "body",
    [
        "id,year,attributes\np1,2010,a\n",           # wrong header
        "id,name,year,attributes\np1,p1,201x,a\n",   # bad year
        "id,name,year,attributes\n,p1,2010,a\n",     # empty id
        "id,name,year,attributes\np1,p1,2010\n",     # missing field
        "id,name,year,attributes\np1,p1,2010,|\n",   # attrs all empty
    ],
)
def test_csv_rejects_malformed(tmp_path, body):
    path = tmp_path / "panel.csv"
    path.write_text(body)
    with pytest.raises(FormatError):
        load_products(path)


def test_duplicate_ids_rejected(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("id,name,year,attributes\np1,p1,2010,a\np1,p1,2011,b\n")
    with pytest.raises(ValidationError):
        load_products(path)


def test_format_error_carries_line_number(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("id,name,year,attributes\np1,p1,2010,a\np2,p2,oops,a\n")
    with pytest.raises(FormatError) as exc:
        load_products(path)
    assert exc.value.line == 3


def test_jsonl_round_trip(tmp_path, handmade):
    records, _, _ = handmade
    path = tmp_path / "panel.jsonl"
    write_products_jsonl(records, path)
    again = load_products(path)
    assert again == records
    # format inferred from the extension, no override needed
    assert load_products(path, format="jsonl") == records


def test_csv_round_trip(tmp_path, handmade):
    records, _, _ = handmade
    path = tmp_path / "panel.csv"
    write_products_csv(records, path)
    assert load_products(path) == records


def test_jsonl_requires_attribute_list(tmp_path):
    path = tmp_path / "panel.jsonl"
    path.write_text(json.dumps({"id": "p1", "year": 2010, "attributes": "cam"}) + "\n")
    with pytest.raises(FormatError):
        load_products(path)


def test_vocabulary_sorted_and_stable(handmade):
    records, vocab, _ = handmade
    assert list(vocab.attributes) == sorted(vocab.attributes)
    assert vocab.digest() == build_vocabulary(records).digest()
    shuffled = list(reversed(records))
    assert build_vocabulary(shuffled).attributes == vocab.attributes


def test_encode_row_sums_match_attribute_counts(handmade):
    records, _, chrom = handmade
    counts = chrom.row_attribute_counts()
    assert counts.tolist() == [len(r.attributes) for r in records]


def test_encode_decode_round_trip(handmade):
    records, _, chrom = handmade
    for i, rec in enumerate(records):
        assert chrom.decode_row(i) == rec.attributes


def test_encode_unknown_attribute_fails(handmade):
    records, vocab, _ = handmade
    alien = ProductRecord("zz", "zz", 2013, frozenset({"warp-drive"}))
    with pytest.raises(ValidationError):
        encode_chromosomes(records + [alien], vocab)


def test_column_indices_sorted(handmade):
    _, _, chrom = handmade
    m = chrom.data
    for i in range(m.shape[0]):
        cols = m.indices[m.indptr[i] : m.indptr[i + 1]]
        assert np.all(np.diff(cols) > 0)


@st.composite
def panels(draw):
    n_years = draw(st.integers(2, 4))
    rows = []
    k = 0
    for y in range(2001, 2001 + n_years):
        for _ in range(draw(st.integers(1, 4))):
            attrs = draw(st.sets(st.sampled_from("abcdefg"), min_size=1, max_size=4))
            rows.append((f"p{k:03d}", y, attrs))
            k += 1
    return rows


@given(panels())
@settings(max_examples=40, deadline=None)
def test_round_trip_any_panel(tmp_path_factory, rows):
    records, _, _ = make_panel(rows)
    path = tmp_path_factory.mktemp("rt") / "panel.csv"
    write_products_csv(records, path)
    assert load_products(path) == records
