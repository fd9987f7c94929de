"""Delete-a-batch jackknife for synthetic and benchmarked synthetic estimates."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data_model import AreaAux, DataError, ModelSpec, PopulationTable, SurveyDataset, design_lookup
from .direct_est import direct_proportion
from .wglm import FitResult, PatternIndex, fit_patterns, inv_logit


class Estimator(enum.Enum):
    SYNTHETIC = "synthetic"
    BENCHMARKED = "benchmarked"


@dataclass(frozen=True)
class JackknifeResult:
    area_id: str
    point: float
    replicates: np.ndarray
    variance: float
    std: float
    m_b: int


@dataclass(frozen=True)
class ReplicateMatrix:
    """Replicate estimates, one row per deleted batch (sorted batch ids)."""

    estimator: Estimator
    area_ids: tuple[str, ...]
    batch_ids: tuple[str, ...]
    point: np.ndarray
    replicates: np.ndarray
    national_point: float
    national_replicates: np.ndarray
    fit: FitResult
    ridge_batches: tuple[str, ...] = ()


def jackknife_variance(replicates: Sequence[float]) -> tuple[float, float]:
    """(m-1)/m * sum((r_j - mean r)^2) and its square root."""
    r = np.asarray(replicates, dtype=np.float64)
    m = r.size
    if m < 2:
        raise ValueError("jackknife needs at least 2 replicates")
    mean = math.fsum(r) / m
    v = (m - 1) / m * math.fsum((r - mean) ** 2)
    return v, math.sqrt(v)


class _Pipeline:
    """Fit + synthetic (+ benchmark) evaluation reusable across folds."""

    def __init__(
        self,
        dataset: SurveyDataset,
        pop: PopulationTable,
        aux: Mapping[str, AreaAux],
        spec: ModelSpec,
        estimator: Estimator,
        ridge_fallback: bool,
    ) -> None:
        self.area_ids = tuple(sorted(aux))
        missing = [a for a in self.area_ids if a not in pop]
        extra = [a for a in pop.area_ids if a not in aux]
        if missing or extra:
            raise DataError(
                f"population/auxiliary area sets differ: missing from population {missing}, "
                f"missing from auxiliary data {extra}"
            )
        self.dataset = dataset
        self.spec = spec
        self.estimator = estimator
        self.ridge_fallback = ridge_fallback
        self.X = design_lookup(self.area_ids, aux, spec)
        self.index = PatternIndex(dataset, self.area_ids)
        rows = [pop.index_of(a) for a in self.area_ids]
        totals = pop.totals[rows]
        self.shares = pop.cell_counts[rows] / totals[:, None]
        self.pop_weights = totals / math.fsum(totals)

    def run(self, mask: np.ndarray | None = None, start: np.ndarray | None = None):
        sw, swy = self.index.sums(mask)
        n_obs = len(self.dataset) if mask is None else int(np.count_nonzero(mask))
        fit = fit_patterns(
            self.X, sw, swy, self.spec,
            ridge_fallback=self.ridge_fallback, start=start, n_obs=n_obs,
        )
        if not fit.usable:
            raise DataError(f"fit failed: {fit.diagnostic}")
        probs = inv_logit(self.X @ fit.coefficients).reshape(len(self.area_ids), -1)
        values = np.einsum("ig,ig->i", self.shares, probs)
        national = math.fsum(self.pop_weights * values)
        if self.estimator is Estimator.BENCHMARKED:
            w = self.dataset.weight if mask is None else self.dataset.weight[mask]
            y = self.dataset.outcome if mask is None else self.dataset.outcome[mask]
            nat_direct = direct_proportion(w, y).proportion
            if national <= 0:
                raise DataError("national synthetic estimate is zero; degenerate model")
            br = nat_direct / national
            values = br * values
            national = nat_direct
        return fit, values, national


def jackknife_replicates(
    dataset: SurveyDataset,
    pop: PopulationTable,
    aux: Mapping[str, AreaAux],
    spec: ModelSpec,
    estimator: Estimator | str = Estimator.BENCHMARKED,
    *,
    ridge_fallback: bool = False,
) -> ReplicateMatrix:
    """Rerun the whole estimation pipeline once per deleted batch.

    Population and auxiliary tables are shared by every fold; only survey
    records are dropped.  Fold fits start from the full-sample coefficients.
    """
    estimator = Estimator(estimator)
    batches = dataset.batch_ids
    if len(batches) < 2:
        raise DataError(f"jackknife needs at least 2 batches, found {len(batches)}")
    pipe = _Pipeline(dataset, pop, aux, spec, estimator, ridge_fallback)
    full_fit, point, national_point = pipe.run()
    reps = np.empty((len(batches), len(pipe.area_ids)))
    nat_reps = np.empty(len(batches))
    ridge_batches = []
    for j, b in enumerate(batches):
        keep = dataset.batch_id != b
        try:
            fit_j, reps[j], nat_reps[j] = pipe.run(keep, start=full_fit.coefficients)
        except DataError as exc:
            raise DataError(f"jackknife fold deleting batch {b!r} failed: {exc}") from exc
        if fit_j.ridge:
            ridge_batches.append(b)
    return ReplicateMatrix(
        estimator=estimator,
        area_ids=pipe.area_ids,
        batch_ids=batches,
        point=point,
        replicates=reps,
        national_point=national_point,
        national_replicates=nat_reps,
        fit=full_fit,
        ridge_batches=tuple(ridge_batches),
    )


def jackknife(
    dataset: SurveyDataset,
    pop: PopulationTable,
    aux: Mapping[str, AreaAux],
    spec: ModelSpec,
    estimator: Estimator | str = Estimator.BENCHMARKED,
    *,
    ridge_fallback: bool = False,
) -> list[JackknifeResult]:
    mat = jackknife_replicates(dataset, pop, aux, spec, estimator, ridge_fallback=ridge_fallback)
    return summarize(mat)


def summarize(mat: ReplicateMatrix) -> list[JackknifeResult]:
    out = []
    m_b = len(mat.batch_ids)
    for i, a in enumerate(mat.area_ids):
        col = mat.replicates[:, i].copy()
        v, s = jackknife_variance(col)
        out.append(JackknifeResult(a, float(mat.point[i]), col, v, s, m_b))
    return out
