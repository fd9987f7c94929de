"""Synthetic area estimates, national aggregation, and benchmarking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data_model import AreaAux, DataError, PopulationTable
from .direct_est import DirectEstimate
from .wglm import FitResult, cell_probabilities


@dataclass(frozen=True)
class SyntheticEstimate:
    area_id: str
    value: float
    cell_probs: tuple[float, ...]
    cell_shares: tuple[float, ...]


@dataclass(frozen=True)
class BenchmarkResult:
    br: float
    national_direct: float
    national_synthetic: float
    benchmarked: dict[str, float]

    @property
    def exceeding_one(self) -> list[str]:
        """Areas whose benchmarked value is above 1 (reported, never clipped)."""
        return [a for a, v in self.benchmarked.items() if v > 1.0]


def _check_coverage(area_ids: Sequence[str], pop: PopulationTable, aux: Mapping[str, AreaAux]) -> None:
    missing_pop = [a for a in area_ids if a not in pop]
    missing_aux = [a for a in area_ids if a not in aux]
    if missing_pop or missing_aux:
        raise DataError(
            f"areas missing from population: {missing_pop}; from auxiliary data: {missing_aux}"
        )


def synthetic_values(
    coefficients_fit: FitResult, pop: PopulationTable, aux: Mapping[str, AreaAux], area_ids: Sequence[str]
) -> np.ndarray:
    """Vector of synthetic values in ``area_ids`` order."""
    probs = cell_probabilities(coefficients_fit, area_ids, aux)
    idx = [pop.index_of(a) for a in area_ids]
    shares = pop.cell_counts[idx] / pop.totals[idx][:, None]
    return np.einsum("ig,ig->i", shares, probs)


def synthetic_estimates(
    fit: FitResult,
    pop: PopulationTable,
    aux: Mapping[str, AreaAux],
    area_ids: Sequence[str] | None = None,
) -> list[SyntheticEstimate]:
    """Share-weighted fitted cell probabilities for every area.

    Defined for areas with no sampled units.  ``area_ids`` defaults to the
    auxiliary-data areas in sorted order.
    """
    if not fit.usable:
        raise DataError(f"fit did not converge: {fit.diagnostic}")
    area_ids = sorted(aux) if area_ids is None else list(area_ids)
    _check_coverage(area_ids, pop, aux)
    probs = cell_probabilities(fit, area_ids, aux)
    out = []
    for a, theta in zip(area_ids, probs):
        shares = pop.shares(a)
        out.append(
            SyntheticEstimate(
                area_id=a,
                value=float(shares @ theta),
                cell_probs=tuple(float(t) for t in theta),
                cell_shares=tuple(float(s) for s in shares),
            )
        )
    return out


def _values_by_area(estimates) -> dict[str, float]:
    if isinstance(estimates, Mapping):
        return {a: float(v) for a, v in estimates.items()}
    return {e.area_id: e.value for e in estimates}


def aggregate_national(estimates, pop: PopulationTable) -> float:
    """Population-weighted mean sum_i (N_i / sum_j N_j) * value_i.

    ``estimates`` may be SyntheticEstimate objects or an area -> value map.
    """
    values = _values_by_area(estimates)
    missing = [a for a in pop.area_ids if a not in values]
    if missing:
        raise DataError(f"estimates missing for areas: {missing}")
    grand = math.fsum(pop.totals)
    return math.fsum(pop.total(a) / grand * values[a] for a in pop.area_ids)


def benchmark(estimates, pop: PopulationTable, national_direct: DirectEstimate | float) -> BenchmarkResult:
    """Scale every area value by national direct / national synthetic."""
    if isinstance(national_direct, DirectEstimate):
        if national_direct.proportion is None:
            raise DataError("national direct estimate undefined")
        nat_direct = national_direct.proportion
    else:
        nat_direct = float(national_direct)
    values = _values_by_area(estimates)
    nat_syn = aggregate_national(values, pop)
    if nat_syn <= 0:
        raise DataError("national synthetic estimate is zero; degenerate model")
    br = nat_direct / nat_syn
    return BenchmarkResult(
        br=br,
        national_direct=nat_direct,
        national_synthetic=nat_syn,
        benchmarked={a: br * v for a, v in values.items()},
    )
