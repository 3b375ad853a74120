import numpy as np
import pytest

from phylo_forecast import (
    ProductRecord,
    build_vocabulary,
    encode_chromosomes,
)


def make_panel(rows):
    """rows: (id, year, attrs) triples -> (records, vocab, chrom)."""
    records = sorted(
        (ProductRecord(pid, pid, year, frozenset(attrs)) for pid, year, attrs in rows),
        key=lambda r: (r.year, r.id),
    )
    vocab = build_vocabulary(records)
    return records, vocab, encode_chromosomes(records, vocab)


HANDMADE_ROWS = [
    ("a1", 2010, {"cam", "gps"}),
    ("a2", 2010, {"cam"}),
    ("a3", 2010, {"mp3"}),
    ("b1", 2011, {"cam", "gps"}),
    ("b2", 2011, {"gps", "nfc"}),
    ("c1", 2012, {"nfc"}),
    ("c2", 2012, {"cam", "nfc", "oled"}),
]

# worked out by hand for theta=0.5:
#   cam  born 2010, ratio 2/3 > 0.5 there      -> dominant, ytd 0
#   gps  born 2010 (1/3), 2011 ratio 1.0       -> dominant, ytd 1
#   nfc  born 2011 (1/2, not strict), 2012 1.0 -> dominant, ytd 1
#   mp3, oled never cross                       -> not dominant
HANDMADE_LABELS = {"a1": 1, "a2": 1, "a3": 0, "b1": 0, "b2": 1, "c1": 0, "c2": 0}


@pytest.fixture
def handmade():
    return make_panel(HANDMADE_ROWS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
