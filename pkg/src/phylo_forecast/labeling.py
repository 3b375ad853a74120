"""Dominance labeling: which genotypes take over, and which products
introduced them.

A genotype is dominant at threshold theta when its carrier share among
the products of some year strictly exceeds theta; the earliest such year
is its dominance year.  A product is dominant when its own year is the
birth year of at least one dominant genotype it carries.  Products that
merely carry an already-established dominant genotype in later years are
not labeled.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .panel import ChromosomeMatrix


@dataclass
class GenotypeDossier:
    """Adoption history of one genotype column."""

    genotype: int
    birth_year: Optional[int]
    ratios: dict
    dominant: bool
    dominance_year: Optional[int]
    years_to_dominance: Optional[int]


@dataclass
class ProductLabels:
    """Binary dominance target plus the bookkeeping behind it.

    ``introduced[i]`` lists the dominant genotypes product i introduced in
    their birth year; ``birth_year_carriers[g]`` counts how many products
    of the birth year carry dominant genotype g.
    """

    d: np.ndarray
    introduced: list
    birth_year_carriers: dict

    @property
    def num_dominant(self):
        return int(self.d.sum())


def _yearly_carriers(chrom: ChromosomeMatrix):
    """[(year, total products, carriers-per-genotype vector)] by year."""
    out = []
    for year, rows in chrom.year_groups():
        carriers = np.asarray(chrom.data[rows].sum(axis=0)).ravel().astype(np.int64)
        out.append((year, len(rows), carriers))
    return out


def detect_dominant_genotypes(chrom: ChromosomeMatrix, threshold: float) -> list:
    """Dossier for every genotype column at the given adoption threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError(
            f"dominance threshold must be in (0, 1), got {threshold}"
        )
    n = chrom.num_genotypes
    birth = np.full(n, -1, dtype=np.int64)
    dominance_year = np.full(n, -1, dtype=np.int64)
    ratio_rows = []
    for year, total, carriers in _yearly_carriers(chrom):
        newborn = (birth < 0) & (carriers > 0)
        birth[newborn] = year
        ratio = carriers / total
        # ratio > 0 implies the genotype is already born this year
        qualify = (dominance_year < 0) & (ratio > threshold)
        dominance_year[qualify] = year
        ratio_rows.append((year, ratio))

    dossiers = []
    for g in range(n):
        born = int(birth[g]) if birth[g] >= 0 else None
        ratios = {
            year: float(ratio[g])
            for year, ratio in ratio_rows
            if born is not None and year >= born
        }
        dom_year = int(dominance_year[g]) if dominance_year[g] >= 0 else None
        dossiers.append(
            GenotypeDossier(
                genotype=g,
                birth_year=born,
                ratios=ratios,
                dominant=dom_year is not None,
                dominance_year=dom_year,
                years_to_dominance=None if dom_year is None else dom_year - born,
            )
        )
    return dossiers


def label_dominant_products(
    chrom: ChromosomeMatrix, dossiers: list
) -> ProductLabels:
    """Label products that introduced a dominant genotype in its birth year."""
    if len(dossiers) != chrom.num_genotypes:
        raise ValidationError(
            f"{len(dossiers)} dossiers for {chrom.num_genotypes} genotypes"
        )
    born_by_year = {}
    for d in dossiers:
        if d.dominant:
            born_by_year.setdefault(d.birth_year, set()).add(d.genotype)

    labels = np.zeros(chrom.num_products, dtype=np.int8)
    introduced = []
    carriers = {}
    for i in range(chrom.num_products):
        year = int(chrom.years[i])
        eligible = born_by_year.get(year)
        hits = []
        if eligible:
            hits = sorted(
                int(g) for g in chrom.genotype_indices(i) if int(g) in eligible
            )
        if hits:
            labels[i] = 1
            for g in hits:
                carriers[g] = carriers.get(g, 0) + 1
        introduced.append(hits)
    return ProductLabels(d=labels, introduced=introduced, birth_year_carriers=carriers)


def _distribution(values):
    if not values:
        return {"count": 0, "mean": None, "min": None, "max": None, "histogram": {}}
    arr = np.asarray(values, dtype=np.float64)
    hist = {}
    for v in sorted(values):
        hist[str(int(v))] = hist.get(str(int(v)), 0) + 1
    return {
        "count": len(values),
        "mean": float(arr.mean()),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "histogram": hist,
    }


def dominance_statistics(
    dossiers: list, labels: ProductLabels, chrom: ChromosomeMatrix, threshold: float
) -> dict:
    """Summary statistics shaped like the reporting tables.

    Covers the years-to-dominance summary, the per-year dominant product
    and genotype counts, and the two introduction distributions.
    """
    ytd = [d.years_to_dominance for d in dossiers if d.dominant]
    if ytd:
        arr = np.asarray(ytd, dtype=np.float64)
        summary = {
            "dominant_genotype_count": len(ytd),
            "mean_years": float(arr.mean()),
            "std_years": float(arr.std(ddof=1)) if len(ytd) > 1 else None,
            "min_years": float(arr.min()),
            "q25_years": float(np.quantile(arr, 0.25)),
            "q50_years": float(np.quantile(arr, 0.50)),
            "q75_years": float(np.quantile(arr, 0.75)),
            "max_years": float(arr.max()),
        }
    else:
        summary = {
            "dominant_genotype_count": 0,
            "mean_years": None,
            "std_years": None,
            "min_years": None,
            "q25_years": None,
            "q50_years": None,
            "q75_years": None,
            "max_years": None,
        }

    births = {}
    for d in dossiers:
        if d.dominant:
            births[d.birth_year] = births.get(d.birth_year, 0) + 1
    per_year = []
    for year, rows in chrom.year_groups():
        dom = int(labels.d[rows].sum())
        per_year.append(
            {
                "year": year,
                "dominant_product_count": dom,
                "total_product_count": len(rows),
                "dominant_product_ratio": dom / len(rows),
                "dominant_genotype_count": births.get(year, 0),
            }
        )

    carriers = [labels.birth_year_carriers[d.genotype] for d in dossiers if d.dominant]
    per_product = [len(h) for h, flag in zip(labels.introduced, labels.d) if flag]

    return {
        "threshold": threshold,
        "years_to_dominance": summary,
        "per_year": per_year,
        "dominant_product_count": labels.num_dominant,
        "birth_year_carriers_per_dominant_genotype": _distribution(carriers),
        "dominant_genotypes_per_dominant_product": _distribution(per_product),
    }


def write_genotypes_csv(dossiers, vocab, path):
    """Per-genotype dossier rows; optional fields stay empty when absent."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "genotype_index",
                "attribute",
                "birth_year",
                "dominant",
                "dominance_year",
                "years_to_dominance",
            ]
        )
        for d in dossiers:
            writer.writerow(
                [
                    d.genotype,
                    vocab.attributes[d.genotype],
                    "" if d.birth_year is None else d.birth_year,
                    int(d.dominant),
                    "" if d.dominance_year is None else d.dominance_year,
                    "" if d.years_to_dominance is None else d.years_to_dominance,
                ]
            )


def write_labels_csv(labels: ProductLabels, chrom: ChromosomeMatrix, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "product_id", "year", "label"])
        for i, (pid, year) in enumerate(zip(chrom.product_ids, chrom.years)):
            writer.writerow([i, pid, int(year), int(labels.d[i])])
