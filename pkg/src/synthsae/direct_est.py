"""Survey-weighted (Hajek) proportions with linearization standard errors."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import CELLS, SurveyDataset

NATIONAL_LABEL = "NATIONAL"


class Grouping(enum.Enum):
    NATIONAL = "national"
    BY_CELL = "by_cell"
    BY_AREA = "by_area"


@dataclass(frozen=True)
class DirectEstimate:
    domain_label: str
    n: int
    sum_weights: float
    proportion: float | None
    se: float | None

    @property
    def defined(self) -> bool:
        return self.proportion is not None


def direct_proportion(
    weight: np.ndarray, outcome: np.ndarray, label: str = NATIONAL_LABEL
) -> DirectEstimate:
    """Weighted proportion sum(w*y)/sum(w) and its SE.

    The SE is the with-replacement linearization of the ratio,
    sqrt(sum(w^2 (y - p)^2)) / sum(w), without the n/(n-1) factor.
    An empty domain gives ``proportion = se = None``.
    """
    w = np.asarray(weight, dtype=np.float64)
    y = np.asarray(outcome, dtype=np.float64)
    n = int(w.size)
    if n == 0:
        return DirectEstimate(label, 0, 0.0, None, None)
    total = math.fsum(w)
    p = math.fsum(w * y) / total
    p = min(max(p, 0.0), 1.0)
    resid = w * (y - p)
    se = math.sqrt(math.fsum(resid * resid)) / total
    return DirectEstimate(label, n, total, p, se)


def direct_of(dataset: SurveyDataset, mask: np.ndarray | None = None, label: str = NATIONAL_LABEL) -> DirectEstimate:
    if mask is None:
        return direct_proportion(dataset.weight, dataset.outcome, label)
    return direct_proportion(dataset.weight[mask], dataset.outcome[mask], label)


def direct_table(
    dataset: SurveyDataset,
    grouping: Grouping | str,
    areas: Sequence[str] | None = None,
) -> list[DirectEstimate]:
    """One estimate per group; groups with no sample appear undefined.

    For ``by_area`` the rows follow ``areas`` (default: areas present in the
    sample, sorted).
    """
    grouping = Grouping(grouping)
    if grouping is Grouping.NATIONAL:
        return [direct_of(dataset)]
    if grouping is Grouping.BY_CELL:
        return [direct_of(dataset, dataset.cell == c.index, c.value) for c in CELLS]
    if areas is None:
        areas = dataset.area_ids
    return [direct_of(dataset, dataset.area_id == a, a) for a in areas]


def _fmt(x: float | None, percent: bool) -> str:
    if x is None:
        return ""
    return f"{100 * x:.1f}" if percent else f"{x:.6f}"


def to_csv_rows(estimates: Sequence[DirectEstimate], percent: bool = False) -> list[list[str]]:
    rows = [["domain_label", "n", "sum_weights", "proportion", "se"]]
    for e in estimates:
        rows.append(
            [e.domain_label, str(e.n), repr(e.sum_weights), _fmt(e.proportion, percent), _fmt(e.se, percent)]
        )
    return rows
