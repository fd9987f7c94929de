"""Simulation oracle: populations from a known logistic truth, weighted
batch samples from them, and scoring of estimates against the truth.

Random streams come from numpy's PCG64 bit generator seeded through
``SeedSequence``; replicate ``r`` of a run uses spawn key ``(r,)`` under the
configured seed, and the population uses the bare seed.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .data_model import (
    COLUMNS,
    DEFAULT_AREAS,
    N_CELLS,
    AreaAux,
    ModelSpec,
    PopulationTable,
    Region,
    SurveyDataset,
    design_lookup,
)
from .jackknife import Estimator
from .pipeline import EstimateTable, as_array, estimate

# M2-style truth: every column but party carries signal.
M2_TRUTH: tuple[float, ...] = (0.2, -0.8, -0.45, -0.3, 0.6, -1.5, 0.15, 0.2, -0.1, -0.15, 0.0)
# M7 truth: cells and density only.
M7_TRUTH: tuple[float, ...] = (0.2, -0.8, -0.45, -0.3, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SimConfig:
    area_count: int = 51
    share_concentration: float = 8.0
    true_coefficients: tuple[float, ...] = M2_TRUTH
    population_min: float = 4.5e5
    population_max: float = 3.0e7
    sample_size: int = 6000
    batch_count: int = 20
    weight_dispersion: float = 0.5
    seed: int = 20201111
    wave_id: int = 1
    testing_rate_range: tuple[float, float] = (0.05, 0.6)
    positivity_range: tuple[float, float] = (0.02, 0.25)

    def __post_init__(self) -> None:
        if self.area_count < 2:
            raise ValueError("area_count must be >= 2")
        if len(self.true_coefficients) != len(COLUMNS):
            raise ValueError(f"true_coefficients needs {len(COLUMNS)} entries")
        if not 0 < self.population_min <= self.population_max:
            raise ValueError("population range must be positive and ordered")
        if self.sample_size < 1 or self.batch_count < 1:
            raise ValueError("sample_size and batch_count must be positive")
        if self.weight_dispersion < 0 or self.share_concentration <= 0:
            raise ValueError("weight_dispersion must be >= 0, share_concentration > 0")

    @property
    def area_ids(self) -> tuple[str, ...]:
        if self.area_count == len(DEFAULT_AREAS):
            return DEFAULT_AREAS
        return tuple(f"A{i:03d}" for i in range(1, self.area_count + 1))

    @classmethod
    def from_file(cls, path: str | Path) -> "SimConfig":
        """Read ``key = value`` pairs from the ``[simulation]`` section of an INI file."""
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        section = parser["simulation"] if parser.has_section("simulation") else parser.defaults()
        return cls.from_mapping(dict(section))

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SimConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            key = key.strip()
            if key not in types:
                raise ValueError(f"unknown simulation setting {key!r}")
            if key == "true_coefficients" and isinstance(raw, str) and raw.strip().upper() in ("M2", "M7"):
                kwargs[key] = M2_TRUTH if raw.strip().upper() == "M2" else M7_TRUTH
                continue
            t = types[key]
            if "tuple" in str(t):
                parts = raw if not isinstance(raw, str) else raw.replace(",", " ").split()
                kwargs[key] = tuple(float(p) for p in parts)
            elif t in ("int", int):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class SimTruth:
    area_ids: tuple[str, ...]
    area_means: np.ndarray
    cell_probs: np.ndarray

    def mean(self, area_id: str) -> float:
        return float(self.area_means[self.area_ids.index(area_id)])


@dataclass(frozen=True)
class SimPopulation:
    pop: PopulationTable
    aux: dict[str, AreaAux]
    truth: SimTruth


def _rng(seed: int, replicate: int | None = None) -> np.random.Generator:
    ss = np.random.SeedSequence(seed) if replicate is None else np.random.SeedSequence(seed, spawn_key=(replicate,))
    return np.random.Generator(np.random.PCG64(ss))


FULL_SPEC = ModelSpec("M1", COLUMNS)


def true_cell_probs(config: SimConfig, aux: Mapping[str, AreaAux], area_ids: Sequence[str]) -> np.ndarray:
    X = design_lookup(area_ids, aux, FULL_SPEC)
    return expit(X @ np.asarray(config.true_coefficients)).reshape(len(area_ids), N_CELLS)


def generate_population(config: SimConfig) -> SimPopulation:
    """Finite population, area covariates and exact truth for ``config``."""
    rng = _rng(config.seed)
    m = config.area_count
    ids = config.area_ids
    log_n = rng.uniform(math.log(config.population_min), math.log(config.population_max), size=m)
    totals = np.round(np.exp(log_n))
    shares = rng.dirichlet(np.full(N_CELLS, config.share_concentration), size=m)
    counts = shares * totals[:, None]
    # exact row sums after rounding noise
    counts *= (totals / counts.sum(axis=1))[:, None]
    lo, hi = config.testing_rate_range
    testing = rng.uniform(lo, hi, size=m)
    lo, hi = config.positivity_range
    positivity = rng.uniform(lo, hi, size=m)
    density = rng.integers(0, 3, size=m)
    regions = list(Region)
    region = rng.integers(0, len(regions), size=m)
    party = rng.integers(0, 2, size=m)
    aux = {
        a: AreaAux(
            area_id=a,
            testing_rate=float(testing[i]),
            positivity_rate=float(positivity[i]),
            density_score=int(density[i]),
            region=regions[region[i]],
            party=int(party[i]),
        )
        for i, a in enumerate(ids)
    }
    pop = PopulationTable(ids, totals, counts)
    probs = true_cell_probs(config, aux, ids)
    means = np.einsum("ig,ig->i", pop.cell_counts / pop.totals[:, None], probs)
    return SimPopulation(pop, aux, SimTruth(ids, means, probs))


def dispersion_factors(rng: np.random.Generator, d: float, size: int) -> np.ndarray:
    """Log-uniform factors on [e^-d, e^d] rescaled to mean one."""
    if d == 0:
        return np.ones(size)
    return np.exp(rng.uniform(-d, d, size=size)) / (math.sinh(d) / d)


def draw_sample(population: SimPopulation, config: SimConfig, replicate: int = 0) -> SurveyDataset:
    """Weighted survey sample with batch labels, deterministic per (seed, replicate)."""
    rng = _rng(config.seed, replicate)
    pop = population.pop
    n = config.sample_size
    grand = float(pop.totals.sum())
    n_area = rng.multinomial(n, pop.totals / grand)
    area_idx, cell_idx = [], []
    for i, k in enumerate(n_area):
        if k == 0:
            continue
        shares = pop.cell_counts[i] / pop.totals[i]
        n_cell = rng.multinomial(k, shares / shares.sum())
        area_idx.append(np.full(k, i))
        cell_idx.append(np.repeat(np.arange(N_CELLS), n_cell))
    area_idx = np.concatenate(area_idx)
    cell_idx = np.concatenate(cell_idx)
    theta = population.truth.cell_probs[area_idx, cell_idx]
    outcome = (rng.random(n) < theta).astype(np.float64)
    # N_i / E[n_i] is the same for every area under proportional allocation
    weight = grand / n * dispersion_factors(rng, config.weight_dispersion, n)
    while True:
        batch = rng.integers(0, config.batch_count, size=n)
        if n < config.batch_count or np.unique(batch).size == config.batch_count:
            break
    width = len(str(config.batch_count))
    labels = np.array([f"b{j + 1:0{width}d}" for j in range(config.batch_count)], dtype=object)
    return SurveyDataset(
        wave_id=config.wave_id,
        outcome=outcome,
        weight=weight,
        cell=cell_idx,
        area_id=np.array(pop.area_ids, dtype=object)[area_idx],
        batch_id=labels[batch],
    )


def size_terciles(pop: PopulationTable) -> dict[str, int]:
    """Area -> tercile (0 smallest, 2 largest) by adult population."""
    order = np.argsort(pop.totals, kind="stable")
    out = {}
    for t, chunk in enumerate(np.array_split(order, 3)):
        for i in chunk:
            out[pop.area_ids[i]] = t
    return out


TERCILE_NAMES = ("small", "medium", "large")
SCORED = ("direct", "synthetic", "benchmarked")


@dataclass(frozen=True)
class RunScore:
    """Per-area errors and their tercile aggregates for one replicate."""

    area_ids: tuple[str, ...]
    tercile: np.ndarray
    abs_error: dict[str, np.ndarray]
    sq_error: dict[str, np.ndarray]
    summary: list[dict] = field(default_factory=list)


def score_run(estimates: EstimateTable, truth: SimTruth, pop: PopulationTable) -> RunScore:
    """Absolute and squared errors against truth, aggregated by size tercile.

    Areas whose direct estimate is undefined drop out of the direct
    aggregates and are counted in ``direct_coverage``.
    """
    rows = estimates.by_area()
    if set(rows) != set(truth.area_ids):
        raise ValueError("estimate and truth area sets differ")
    ids = truth.area_ids
    ordered = [rows[a] for a in ids]
    terc_map = size_terciles(pop)
    terc = np.array([terc_map[a] for a in ids])
    abs_err, sq_err = {}, {}
    for name in SCORED:
        vals = as_array(ordered, name)
        err = vals - truth.area_means
        abs_err[name] = np.abs(err)
        sq_err[name] = err * err
    summary = []
    for t, tname in enumerate(TERCILE_NAMES):
        sel = terc == t
        for name in SCORED:
            se = sq_err[name][sel]
            ok = ~np.isnan(se)
            summary.append(
                {
                    "tercile": tname,
                    "estimator": name,
                    "n_areas": int(sel.sum()),
                    "coverage": int(ok.sum()),
                    "mse": float(se[ok].mean()) if ok.any() else float("nan"),
                    "mae": float(abs_err[name][sel][ok].mean()) if ok.any() else float("nan"),
                }
            )
    return RunScore(ids, terc, abs_err, sq_err, summary)


@dataclass(frozen=True)
class SimulationResult:
    config: SimConfig
    population: SimPopulation
    area_ids: tuple[str, ...]
    n_sample: np.ndarray
    direct_se: np.ndarray
    jackknife_std: np.ndarray
    br: np.ndarray
    national_direct: np.ndarray
    scores: list[RunScore]

    def summary(self) -> list[dict]:
        """MSE by estimator and size tercile, pooled over replicates."""
        out = []
        terc = self.scores[0].tercile
        for t, tname in enumerate(TERCILE_NAMES):
            sel = terc == t
            for name in SCORED:
                sq = np.stack([s.sq_error[name][sel] for s in self.scores])
                ok = ~np.isnan(sq)
                out.append(
                    {
                        "estimator": name,
                        "tercile": tname,
                        "mse": float(sq[ok].mean()) if ok.any() else float("nan"),
                        "coverage": float(ok.mean()),
                    }
                )
        return out


def run_simulation(
    config: SimConfig,
    replicates: int,
    spec: ModelSpec,
    *,
    estimator: Estimator | str = Estimator.BENCHMARKED,
    with_jackknife: bool = True,
    ridge_fallback: bool = True,
) -> SimulationResult:
    """Fixed population, ``replicates`` independent samples, each estimated and scored."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    population = generate_population(config)
    ids = population.truth.area_ids
    m = len(ids)
    n_sample = np.zeros((replicates, m), dtype=np.int64)
    d_se = np.full((replicates, m), np.nan)
    jk = np.full((replicates, m), np.nan)
    br = np.full(replicates, np.nan)
    nat = np.full(replicates, np.nan)
    scores = []
    for r in range(replicates):
        ds = draw_sample(population, config, r)
        table = estimate(
            ds, population.pop, population.aux, spec,
            estimator=estimator, with_jackknife=with_jackknife, ridge_fallback=ridge_fallback,
        )
        rows = table.by_area()
        ordered = [rows[a] for a in ids]
        n_sample[r] = [row.n_sample for row in ordered]
        d_se[r] = as_array(ordered, "direct_se")
        jk[r] = as_array(ordered, "jackknife_std")
        if table.benchmark is not None:
            br[r] = table.benchmark.br
        nat[r] = table.national.direct
        scores.append(score_run(table, population.truth, population.pop))
    return SimulationResult(config, population, ids, n_sample, d_se, jk, br, nat, scores)


__all__ = [
    "M2_TRUTH", "M7_TRUTH", "SimConfig", "SimTruth", "SimPopulation", "SimulationResult",
    "generate_population", "draw_sample", "score_run", "run_simulation", "size_terciles",
]
