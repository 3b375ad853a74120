"""Seeded synthetic technology-evolution panels with planted dominants.

Products inherit most genes from a previous-year ancestor (weight-biased
vertical inheritance), borrow some from a second donor (horizontal
transfer), and mutate in brand-new genes.  Planted dominant genes live in
their own namespace, are never inherited organically, and get their
yearly carrier counts set directly from an adoption schedule, so their
dominance year is known by construction.

Ground truth is still recomputed from the realized panel by a
brute-force enumerator: organic genes can cross the threshold by chance,
and the truth must reflect the panel, not the plan.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .panel import ProductRecord

PLANT_PREFIX = "plant_"


@dataclass(frozen=True)
class PlantedDominant:
    """One planted gene: calendar birth year plus per-year target carrier
    ratios starting at the birth year (the last entry repeats to the end
    of the panel)."""

    birth_year: int
    schedule: tuple

    def lag(self, theta: float) -> int:
        """Years from birth to the first schedule entry above theta."""
        for i, v in enumerate(self.schedule):
            if v > theta:
                return i
        raise ValidationError(
            f"planted schedule {self.schedule} never crosses {theta}"
        )


def planted_schedule(lag: int, theta: float) -> tuple:
    """A minimal schedule: below-threshold adoption for ``lag`` years,
    then a level strictly above it."""
    low = round(0.6 * theta, 6)
    high = round(theta + 0.5 * (1.0 - theta), 6)
    return (low,) * lag + (high,)


@dataclass(frozen=True)
class SynthConfig:
    years: int
    products_per_year: tuple
    founder_genome_size: int
    mutation_rate: float
    vertical_fraction: float
    hgt_rate: float
    theta: float
    planted: tuple = ()
    package_size: int = 0
    herald_size: int = 0
    seed: int = 0
    start_year: int = 2001

    def __post_init__(self):
        if self.years < 4:
            raise ValidationError(f"need at least 4 years, got {self.years}")
        schedule = self.products_per_year
        if isinstance(schedule, int):
            schedule = (schedule,) * self.years
        else:
            schedule = tuple(int(v) for v in schedule)
        if len(schedule) != self.years or min(schedule) < 1:
            raise ValidationError(
                f"products-per-year schedule must hold {self.years} positive counts"
            )
        object.__setattr__(self, "products_per_year", schedule)
        if self.founder_genome_size < 1:
            raise ValidationError("founder genome size must be >= 1")
        if self.package_size < 0:
            raise ValidationError("package size must be >= 0")
        if self.herald_size < 0:
            raise ValidationError("herald size must be >= 0")
        if self.mutation_rate < 0:
            raise ValidationError("mutation rate must be >= 0")
        for name in ("vertical_fraction", "hgt_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 < self.theta < 1.0:
            raise ValidationError(f"theta must be in (0, 1), got {self.theta}")
        for plant in self.planted:
            if not plant.schedule:
                raise ValidationError("planted schedule must be non-empty")
            for v in plant.schedule:
                if not 0.0 <= v <= 1.0:
                    raise ValidationError(
                        f"planted schedule values must be in [0, 1], got {v}"
                    )
            lag = plant.lag(self.theta)
            for i, v in enumerate(plant.schedule):
                if i < lag and v > self.theta:
                    raise ValidationError("planted schedule crosses theta twice")
                if i >= lag and v <= self.theta:
                    raise ValidationError(
                        "planted schedule must stay above theta once crossed"
                    )
            last = self.start_year + self.years - 1
            if not self.start_year <= plant.birth_year <= last:
                raise ValidationError(
                    f"planted birth year {plant.birth_year} outside panel years"
                )

    @property
    def calendar_years(self):
        return tuple(self.start_year + i for i in range(self.years))


def _plant_carrier_count(target: float, n_t: int, theta: float, crossed: bool, is_birth: bool):
    """Carriers demanded by a schedule entry, clamped to keep the yearly
    ratio on the correct side of theta."""
    demanded = int(target * n_t + 0.5)
    cap = math.floor(theta * n_t)
    if crossed:
        carriers = max(demanded, cap + 1)
        if carriers > n_t:
            raise ValidationError(
                f"planted schedule demands {carriers} carriers of {n_t} products"
            )
        return carriers
    carriers = min(demanded, cap)
    if is_birth:
        if cap < 1:
            raise ValidationError(
                f"cannot stay below theta with one carrier among {n_t} products"
            )
        carriers = max(carriers, 1)
    return carriers


def generate_panel(config: SynthConfig):
    """Build the records and their recomputed ground truth.

    Returns (records, truth) where truth holds per-genotype dossiers,
    per-product labels, and the planted-gene bookkeeping.
    """
    rng = np.random.default_rng(config.seed)
    years = config.calendar_years
    counts = config.products_per_year

    # founder pool twice the genome size, so founder chromosomes overlap
    pool_size = 2 * config.founder_genome_size
    gene_names = [f"g{i:06d}" for i in range(pool_size)]
    gene_weights = {g: float(w) for g, w in zip(gene_names, rng.uniform(0.5, 1.5, pool_size))}
    next_gene = pool_size

    attr_sets = []
    year_of = []
    anc_of = []
    per_year_rows = {y: [] for y in years}
    for t, (year, n_t) in enumerate(zip(years, counts)):
        prev_rows = per_year_rows[years[t - 1]] if t > 0 else []
        for _ in range(n_t):
            row = len(attr_sets)
            anc_row = -1
            if t == 0:
                picks = rng.choice(pool_size, size=config.founder_genome_size, replace=False)
                genes = {gene_names[i] for i in picks}
            else:
                anc_row = prev_rows[int(rng.integers(len(prev_rows)))]
                anc_genes = sorted(attr_sets[anc_row])
                n_inherit = max(1, int(config.vertical_fraction * len(anc_genes) + 0.5))
                n_inherit = min(n_inherit, len(anc_genes))
                w = np.array([gene_weights[g] for g in anc_genes])
                picks = rng.choice(len(anc_genes), size=n_inherit, replace=False, p=w / w.sum())
                genes = {anc_genes[i] for i in picks}
                if len(prev_rows) > 1 and config.hgt_rate > 0:
                    donor_choices = [r for r in prev_rows if r != anc_row]
                    donor_row = donor_choices[int(rng.integers(len(donor_choices)))]
                    donor_genes = sorted(attr_sets[donor_row])
                    borrow = rng.random(len(donor_genes)) < config.hgt_rate
                    genes.update(g for g, take in zip(donor_genes, borrow) if take)
                n_new = int(rng.poisson(config.mutation_rate))
                for _ in range(n_new):
                    name = f"g{next_gene:06d}"
                    next_gene += 1
                    gene_weights[name] = float(rng.uniform(0.5, 1.5))
                    genes.add(name)
                if not genes:
                    genes = {anc_genes[int(np.argmax(w))]}
            attr_sets.append(genes)
            year_of.append(year)
            anc_of.append(anc_row)
            per_year_rows[year].append(row)

    # Planted genes spread through lineages: next-year carriers are drawn
    # from descendants of current carriers first, random fill after.  Each
    # plant also drags a package of companion genes along, capped at
    # floor(theta * n_t) carriers so companions never cross the threshold
    # themselves (the planted gene stays the only dominant in its cluster).
    planted_info = {}
    birth_cohorts = {}
    for j, plant in enumerate(config.planted):
        gene = f"{PLANT_PREFIX}{j:03d}"
        package = [f"{gene}_c{m}" for m in range(config.package_size)]
        lag = plant.lag(config.theta)
        birth_idx = years.index(plant.birth_year)
        prev_carriers = set()
        for offset in range(len(years) - birth_idx):
            year = years[birth_idx + offset]
            target = plant.schedule[min(offset, len(plant.schedule) - 1)]
            rows = per_year_rows[year]
            carriers = _plant_carrier_count(
                target, len(rows), config.theta,
                crossed=offset >= lag, is_birth=offset == 0,
            )
            if carriers == 0:
                prev_carriers = set()
                continue
            descended = [i for i, r in enumerate(rows) if anc_of[r] in prev_carriers]
            other = [i for i, r in enumerate(rows) if anc_of[r] not in prev_carriers]
            order = np.concatenate([
                rng.permutation(descended), rng.permutation(other),
            ]).astype(int)
            chosen = order[:carriers]
            pkg_cap = min(carriers, math.floor(config.theta * len(rows)))
            for rank, i in enumerate(chosen):
                attr_sets[rows[i]].add(gene)
                if rank < pkg_cap:
                    attr_sets[rows[i]].update(package)
            if offset == 0:
                birth_cohorts.setdefault(year, []).extend(rows[i] for i in chosen)
            prev_carriers = {rows[i] for i in chosen}
        planted_info[gene] = {
            "birth_year": plant.birth_year,
            "dominance_year": years[birth_idx + lag],
            "lag": lag,
        }

    # Herald genes: one shared marker set carried by every plant's birth
    # cohort in the birth year only, again capped below the threshold.
    # They are the cross-plant regularity a forecaster can latch onto:
    # products that launch a soon-dominant attribute share the era's
    # leading-edge stack regardless of which attribute it is.
    if config.herald_size > 0 and birth_cohorts:
        herald = [f"{PLANT_PREFIX}herald_{m}" for m in range(config.herald_size)]
        for year, cohort in birth_cohorts.items():
            cap = math.floor(config.theta * len(per_year_rows[year]))
            kept = list(dict.fromkeys(cohort))[:cap]
            for r in kept:
                attr_sets[r].update(herald)

    width = len(str(len(attr_sets)))
    records = [
        ProductRecord(
            id=f"p{row:0{width}d}",
            name=f"synthetic product {row}",
            year=year_of[row],
            attributes=frozenset(attr_sets[row]),
        )
        for row in range(len(attr_sets))
    ]
    truth = brute_force_truth(records, config.theta)
    truth["planted"] = planted_info
    return records, truth


def brute_force_truth(records, theta: float) -> dict:
    """Ground-truth dossiers and labels by direct enumeration.

    Deliberately naive (sets and loops, no matrices): this is the oracle
    the fast labeling path is tested against.
    """
    years = sorted({r.year for r in records})
    by_year = {y: [r for r in records if r.year == y] for y in years}
    attrs = sorted(set().union(*(r.attributes for r in records)))
    genotypes = {}
    for a in attrs:
        birth = None
        dom_year = None
        for y in years:
            carriers = sum(1 for r in by_year[y] if a in r.attributes)
            if carriers > 0 and birth is None:
                birth = y
            if birth is not None and dom_year is None:
                if carriers / len(by_year[y]) > theta:
                    dom_year = y
        genotypes[a] = {
            "birth_year": birth,
            "dominant": dom_year is not None,
            "dominance_year": dom_year,
            "years_to_dominance": None if dom_year is None else dom_year - birth,
        }
    labels = {
        r.id: int(
            any(
                genotypes[a]["dominant"] and genotypes[a]["birth_year"] == r.year
                for a in r.attributes
            )
        )
        for r in records
    }
    return {"theta": theta, "genotypes": genotypes, "labels": labels}


def benchmark_config(seed: int = 0) -> SynthConfig:
    """The desk-scale end-to-end benchmark: 15 years, 30 products/year,
    10 planted dominants with lags 1..3, several born in the last years."""
    theta = 0.5
    plants = [
        PlantedDominant(2002, planted_schedule(3, theta)),
        PlantedDominant(2003, planted_schedule(2, theta)),
        PlantedDominant(2004, planted_schedule(1, theta)),
        PlantedDominant(2005, planted_schedule(3, theta)),
        PlantedDominant(2006, planted_schedule(2, theta)),
        PlantedDominant(2007, planted_schedule(1, theta)),
        PlantedDominant(2011, planted_schedule(1, theta)),
        PlantedDominant(2013, planted_schedule(1, theta)),
        PlantedDominant(2013, planted_schedule(2, theta)),
        PlantedDominant(2014, planted_schedule(1, theta)),
    ]
    return SynthConfig(
        years=15,
        products_per_year=30,
        founder_genome_size=40,
        mutation_rate=2.0,
        vertical_fraction=0.8,
        hgt_rate=0.1,
        theta=theta,
        planted=tuple(plants),
        package_size=5,
        herald_size=6,
        seed=seed,
    )


def random_small_config(seed: int) -> SynthConfig:
    """A small random panel configuration (at most 50 products)."""
    rng = np.random.default_rng(seed)
    years = int(rng.integers(4, 7))
    counts = tuple(int(rng.integers(2, 9)) for _ in range(years))
    while sum(counts) > 50:
        counts = tuple(max(1, c - 1) for c in counts)
    theta = float(rng.uniform(0.3, 0.7))
    planted = []
    if rng.random() < 0.7:
        lag = int(rng.integers(0, 3))
        # The birth year must admit one carrier at or below theta, i.e.
        # floor(theta * n) >= 1; skip planting when no year qualifies.
        feasible = [i for i in range(years - lag) if counts[i] * theta >= 1.0]
        if feasible:
            birth = 2001 + feasible[int(rng.integers(0, len(feasible)))]
            planted.append(PlantedDominant(birth, planted_schedule(lag, theta)))
    return SynthConfig(
        years=years,
        products_per_year=counts,
        founder_genome_size=int(rng.integers(3, 9)),
        mutation_rate=float(rng.uniform(0.0, 2.0)),
        vertical_fraction=float(rng.uniform(0.3, 1.0)),
        hgt_rate=float(rng.uniform(0.0, 0.3)),
        theta=theta,
        planted=tuple(planted),
        seed=int(rng.integers(0, 2**31)),
    )
