"""End-to-end estimation for one wave: direct, synthetic, benchmarked, jackknife."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data_model import AreaAux, ModelSpec, PopulationTable, SurveyDataset
from .direct_est import NATIONAL_LABEL, DirectEstimate, direct_of
from .jackknife import Estimator, jackknife_replicates, jackknife_variance
from .synthetic_est import BenchmarkResult, aggregate_national, benchmark, synthetic_estimates
from .wglm import FitResult, fit

ESTIMATE_COLUMNS = (
    "area_id", "n_i_sample", "direct", "direct_se", "synthetic", "benchmarked", "jackknife_std",
)


@dataclass(frozen=True)
class EstimateRow:
    area_id: str
    n_sample: int
    direct: float | None
    direct_se: float | None
    synthetic: float
    benchmarked: float | None
    jackknife_std: float | None


@dataclass(frozen=True)
class EstimateTable:
    rows: list[EstimateRow]
    national: EstimateRow
    fit: FitResult
    benchmark: BenchmarkResult | None
    estimator: Estimator

    def by_area(self) -> dict[str, EstimateRow]:
        return {r.area_id: r for r in self.rows}

    def csv_rows(self, percent: bool = False) -> list[list[str]]:
        def fmt(x: float | None) -> str:
            if x is None:
                return ""
            return f"{100 * x:.1f}" if percent else f"{x:.6f}"

        out = [list(ESTIMATE_COLUMNS)]
        for r in [*self.rows, self.national]:
            out.append(
                [r.area_id, str(r.n_sample), fmt(r.direct), fmt(r.direct_se), fmt(r.synthetic),
                 fmt(r.benchmarked), fmt(r.jackknife_std)]
            )
        return out


def estimate(
    dataset: SurveyDataset,
    pop: PopulationTable,
    aux: Mapping[str, AreaAux],
    spec: ModelSpec,
    *,
    estimator: Estimator | str = Estimator.BENCHMARKED,
    with_jackknife: bool = True,
    ridge_fallback: bool = False,
) -> EstimateTable:
    """Per-area direct, synthetic and (optionally) benchmarked estimates.

    The jackknife STD column is computed for ``estimator`` when the data
    carry at least two batches.
    """
    estimator = Estimator(estimator)
    area_ids = sorted(aux)
    f = fit(dataset, aux, spec, ridge_fallback=ridge_fallback)
    syn = synthetic_estimates(f, pop, aux, area_ids)
    syn_values = {s.area_id: s.value for s in syn}
    national_direct: DirectEstimate = direct_of(dataset, label=NATIONAL_LABEL)
    bench = None
    if estimator is Estimator.BENCHMARKED:
        bench = benchmark(syn, pop, national_direct)

    std: dict[str, float] = {}
    nat_std = None
    if with_jackknife and len(dataset.batch_ids) >= 2:
        mat = jackknife_replicates(dataset, pop, aux, spec, estimator, ridge_fallback=ridge_fallback)
        for i, a in enumerate(mat.area_ids):
            std[a] = jackknife_variance(mat.replicates[:, i])[1]
        nat_std = jackknife_variance(mat.national_replicates)[1]

    rows = []
    for a in area_ids:
        d = direct_of(dataset, dataset.area_id == a, a)
        rows.append(
            EstimateRow(
                area_id=a,
                n_sample=d.n,
                direct=d.proportion,
                direct_se=d.se,
                synthetic=syn_values[a],
                benchmarked=None if bench is None else bench.benchmarked[a],
                jackknife_std=std.get(a),
            )
        )
    nat_syn = aggregate_national(syn_values, pop)
    national = EstimateRow(
        area_id=NATIONAL_LABEL,
        n_sample=national_direct.n,
        direct=national_direct.proportion,
        direct_se=national_direct.se,
        synthetic=nat_syn,
        benchmarked=None if bench is None else aggregate_national(bench.benchmarked, pop),
        jackknife_std=nat_std,
    )
    return EstimateTable(rows, national, f, bench, estimator)


def benchmark_json(table: EstimateTable) -> dict:
    b = table.benchmark
    assert b is not None
    return {
        "br": b.br,
        "national_direct": b.national_direct,
        "national_synthetic": b.national_synthetic,
        "national_benchmarked": table.national.benchmarked,
        "areas_above_one": b.exceeding_one,
    }


def as_array(rows: list[EstimateRow], field: str) -> np.ndarray:
    """Column as float array with NaN for undefined entries."""
    return np.array([np.nan if getattr(r, field) is None else getattr(r, field) for r in rows])
