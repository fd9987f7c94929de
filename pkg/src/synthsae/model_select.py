"""Leave-one-area-out cross-validation criterion for choosing a model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data_model import AreaAux, DataError, ModelSpec, SurveyDataset, design_lookup
from .wglm import PatternIndex, fit_patterns


@dataclass(frozen=True)
class Fold:
    area_id: str
    n_train: int
    n_heldout: int
    contribution: float
    ridge: bool


@dataclass(frozen=True)
class CriterionRow:
    model_name: str
    per_wave_C: dict[int, float]
    quantiles: tuple[float, float, float, float, float]
    mean: float
    n_columns: int


@dataclass(frozen=True)
class Selection:
    rows: list[CriterionRow]
    best_by_mean: str
    best_by_median: str


def loso_folds(
    dataset: SurveyDataset,
    aux: Mapping[str, AreaAux],
    spec: ModelSpec,
    *,
    ridge_fallback: bool = True,
    area_order: Sequence[str] | None = None,
) -> list[Fold]:
    """Held-out weighted log-likelihood of each sampled area.

    Each fold refits the model without the area's records and scores those
    records at the fold coefficients.  Areas with no sampled units are not
    folds.
    """
    area_ids = sorted(aux)
    X = design_lookup(area_ids, aux, spec)
    index = PatternIndex(dataset, area_ids)
    sampled = sorted(set(dataset.area_id.tolist()))
    if len(sampled) < 2:
        raise DataError("leave-one-area-out needs at least 2 sampled areas")
    if area_order is not None:
        if sorted(area_order) != sampled:
            raise DataError("area_order must list exactly the sampled areas")
        sampled = list(area_order)

    sw_all, swy_all = index.sums()
    try:
        start = fit_patterns(X, sw_all, swy_all, spec, ridge_fallback=ridge_fallback).coefficients
    except DataError:
        start = None
    n = len(dataset)
    pos = {a: i for i, a in enumerate(area_ids)}
    n_cells = X.shape[0] // len(area_ids)
    folds = []
    for a in sampled:
        held = dataset.area_id == a
        train = ~held
        sw, swy = index.sums(train)
        n_train = int(np.count_nonzero(train))
        try:
            f = fit_patterns(X, sw, swy, spec, ridge_fallback=ridge_fallback, start=start, n_obs=n_train)
        except DataError as exc:
            raise DataError(f"leave-one-area-out fold for area {a!r} failed: {exc}") from exc
        if not f.usable:
            raise DataError(f"leave-one-area-out fold for area {a!r} failed: {f.diagnostic}")
        rows = slice(pos[a] * n_cells, (pos[a] + 1) * n_cells)
        eta = X[rows] @ f.coefficients
        hsw, hswy = index.sums(held)
        hsw, hswy = hsw[rows], hswy[rows]
        contrib = math.fsum(hswy * eta - hsw * np.logaddexp(0.0, eta))
        folds.append(Fold(a, n_train, n - n_train, contrib, f.ridge))
    return folds


def loso_criterion(
    dataset: SurveyDataset,
    aux: Mapping[str, AreaAux],
    spec: ModelSpec,
    *,
    ridge_fallback: bool = True,
    scale: bool = True,
) -> float:
    """Summed held-out log-likelihood, divided by the wave sample size."""
    folds = loso_folds(dataset, aux, spec, ridge_fallback=ridge_fallback)
    # area-id order keeps the reduction deterministic
    total = math.fsum(f.contribution for f in sorted(folds, key=lambda f: f.area_id))
    return total / len(dataset) if scale else total


def _pick(rows: Sequence[CriterionRow], key) -> str:
    best = max(rows, key=lambda r: (key(r), -r.n_columns))
    return best.model_name


def compare_models(
    waves: Sequence[tuple[SurveyDataset, Mapping[str, AreaAux]]],
    specs: Sequence[ModelSpec],
    *,
    ridge_fallback: bool = True,
) -> Selection:
    """Criterion per model and wave, summarized across waves.

    Selection is by the mean across waves (median reported as well); ties go
    to the model with fewer columns.
    """
    if not waves:
        raise ValueError("need at least one wave")
    if not specs:
        raise ValueError("need at least one model spec")
    wave_ids = [ds.wave_id for ds, _ in waves]
    if len(set(wave_ids)) != len(wave_ids):
        raise DataError(f"duplicate wave ids: {wave_ids}")
    rows = []
    for spec in specs:
        per_wave: dict[int, float] = {}
        for ds, aux in waves:
            per_wave[ds.wave_id] = loso_criterion(ds, aux, spec, ridge_fallback=ridge_fallback)
        vals = np.array(list(per_wave.values()))
        q = np.percentile(vals, [0, 25, 50, 75, 100])
        rows.append(
            CriterionRow(
                model_name=spec.name,
                per_wave_C=per_wave,
                quantiles=tuple(float(x) for x in q),
                mean=math.fsum(vals) / vals.size,
                n_columns=spec.size,
            )
        )
    return Selection(
        rows=rows,
        best_by_mean=_pick(rows, lambda r: r.mean),
        best_by_median=_pick(rows, lambda r: r.quantiles[2]),
    )
