"""Domain types shared across the estimation pipeline.

Everything here is immutable after construction.  Survey microdata are held
column-wise in numpy arrays (flagged read-only) so that resampling folds can
be cut with boolean masks instead of rebuilding per-unit objects.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import numpy.typing as npt

# 50 states + DC.
DEFAULT_AREAS: tuple[str, ...] = (
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "DC", "FL", "GA", "HI",
    "ID", "IL", "IN", "IA", "KS", "KY", "LA", "ME", "MD", "MA", "MI", "MN",
    "MS", "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND", "OH",
    "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA",
    "WV", "WI", "WY",
)


class DataError(ValueError):
    """Invalid input data (bad record, inconsistent table, missing area)."""


class DomainCell(enum.Enum):
    """Race-ethnicity by age group.  OTHER_45P is the reference level."""

    NHW_18_44 = "NHW_18_44"
    NHW_45P = "NHW_45P"
    OTHER_18_44 = "OTHER_18_44"
    OTHER_45P = "OTHER_45P"

    @property
    def index(self) -> int:
        return _CELL_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> "DomainCell":
        return CELLS[i]


CELLS: tuple[DomainCell, ...] = tuple(DomainCell)
N_CELLS = len(CELLS)
_CELL_INDEX = {c: i for i, c in enumerate(CELLS)}
REFERENCE_CELL = DomainCell.OTHER_45P


class Region(enum.Enum):
    NORTHEAST = "Northeast"
    MIDWEST = "Midwest"
    SOUTH = "South"
    WEST = "West"

    @classmethod
    def parse(cls, token: str) -> "Region":
        key = token.strip().lower()
        for r in cls:
            if key in (r.value.lower(), r.name.lower()):
                return r
        aliases = {"ne": cls.NORTHEAST, "mw": cls.MIDWEST, "s": cls.SOUTH, "w": cls.WEST}
        if key in aliases:
            return aliases[key]
        raise DataError(f"unknown region {token!r}")


def assign_cell(age: int, is_nh_white: bool) -> DomainCell:
    """Map a respondent's age and ethnicity to one of the four domain cells."""
    if age < 18:
        raise DataError(f"age {age} below 18; survey covers adults only")
    young = age <= 44
    if is_nh_white:
        return DomainCell.NHW_18_44 if young else DomainCell.NHW_45P
    return DomainCell.OTHER_18_44 if young else DomainCell.OTHER_45P


@dataclass(frozen=True)
class UnitRecord:
    outcome: int
    weight: float
    cell: DomainCell
    area_id: str
    batch_id: str
    wave_id: int

    def __post_init__(self) -> None:
        if self.outcome not in (0, 1):
            raise DataError(f"outcome must be 0 or 1, got {self.outcome!r}")
        if not np.isfinite(self.weight) or self.weight <= 0:
            raise DataError(f"nonpositive weight {self.weight!r}")
        if self.wave_id < 1:
            raise DataError(f"wave_id must be >= 1, got {self.wave_id}")


def _frozen(a: npt.ArrayLike, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


class SurveyDataset:
    """One wave of survey responses, stored column-wise.

    Parameters
    ----------
    wave_id : int
    outcome, weight : array_like
        Binary outcomes and positive final weights.
    cell : array_like of int
        Cell indices into ``CELLS``.
    area_id, batch_id : sequence of str
    areas : sequence of str, optional
        Area registry the ``area_id`` values must belong to.
    """

    def __init__(
        self,
        wave_id: int,
        outcome: npt.ArrayLike,
        weight: npt.ArrayLike,
        cell: npt.ArrayLike,
        area_id: Sequence[str],
        batch_id: Sequence[str],
        areas: Sequence[str] | None = None,
    ) -> None:
        self.wave_id = int(wave_id)
        self.outcome = _frozen(outcome, np.float64)
        self.weight = _frozen(weight, np.float64)
        self.cell = _frozen(cell, np.int64)
        self.area_id = _frozen(area_id, object)
        self.batch_id = _frozen(batch_id, object)
        n = self.outcome.shape[0]
        if n == 0:
            raise DataError("survey dataset is empty")
        for name in ("weight", "cell", "area_id", "batch_id"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"column {name} has wrong length")
        if self.wave_id < 1:
            raise DataError(f"wave_id must be >= 1, got {self.wave_id}")
        if not np.all((self.outcome == 0) | (self.outcome == 1)):
            raise DataError("outcomes must be 0/1")
        if not np.all(np.isfinite(self.weight) & (self.weight > 0)):
            raise DataError("weights must be positive and finite")
        if np.any((self.cell < 0) | (self.cell >= N_CELLS)):
            raise DataError("cell index out of range")
        if areas is not None:
            unknown = set(self.area_id.tolist()) - set(areas)
            if unknown:
                raise DataError(f"unknown areas: {sorted(unknown)}")

    @classmethod
    def from_records(
        cls, records: Iterable[UnitRecord], areas: Sequence[str] | None = None
    ) -> "SurveyDataset":
        recs = list(records)
        if not recs:
            raise DataError("survey dataset is empty")
        waves = {r.wave_id for r in recs}
        if len(waves) != 1:
            raise DataError(f"records span several waves: {sorted(waves)}")
        return cls(
            wave_id=recs[0].wave_id,
            outcome=[r.outcome for r in recs],
            weight=[r.weight for r in recs],
            cell=[r.cell.index for r in recs],
            area_id=[r.area_id for r in recs],
            batch_id=[r.batch_id for r in recs],
            areas=areas,
        )

    def __len__(self) -> int:
        return self.outcome.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def records(self) -> Iterator[UnitRecord]:
        for k in range(len(self)):
            yield UnitRecord(
                outcome=int(self.outcome[k]),
                weight=float(self.weight[k]),
                cell=CELLS[self.cell[k]],
                area_id=self.area_id[k],
                batch_id=self.batch_id[k],
                wave_id=self.wave_id,
            )

    @property
    def batch_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.batch_id.tolist())))

    @property
    def area_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.area_id.tolist())))

    def subset(self, mask: npt.ArrayLike) -> "SurveyDataset":
        """Rows where ``mask`` is true (or the given integer indices), order kept."""
        idx = np.asarray(mask)
        return SurveyDataset(
            self.wave_id,
            self.outcome[idx],
            self.weight[idx],
            self.cell[idx],
            self.area_id[idx],
            self.batch_id[idx],
        )

    def sample_counts(self, areas: Sequence[str]) -> np.ndarray:
        """Matrix of n_gi with shape (len(areas), 4)."""
        pos = {a: i for i, a in enumerate(areas)}
        counts = np.zeros((len(areas), N_CELLS), dtype=np.int64)
        for a, c in zip(self.area_id, self.cell):
            if a in pos:
                counts[pos[a], c] += 1
        return counts


@dataclass(frozen=True)
class PopulationTable:
    """Adult population totals N_i and cell counts N_gi per area.

    ``cell_counts`` has shape (len(area_ids), 4) in ``CELLS`` order.
    """

    area_ids: tuple[str, ...]
    totals: np.ndarray
    cell_counts: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        totals = _frozen(self.totals, np.float64)
        counts = _frozen(self.cell_counts, np.float64)
        object.__setattr__(self, "area_ids", tuple(self.area_ids))
        object.__setattr__(self, "totals", totals)
        object.__setattr__(self, "cell_counts", counts)
        m = len(self.area_ids)
        if len(set(self.area_ids)) != m:
            raise DataError("duplicate area in population table")
        if totals.shape != (m,) or counts.shape != (m, N_CELLS):
            raise DataError("population table shape mismatch")
        if np.any(~np.isfinite(totals)) or np.any(totals <= 0):
            raise DataError("area totals must be positive")
        if np.any(counts < 0):
            raise DataError("cell counts must be nonnegative")
        rel = np.abs(counts.sum(axis=1) - totals) / totals
        if np.any(rel > 1e-9):
            bad = [self.area_ids[i] for i in np.flatnonzero(rel > 1e-9)]
            raise DataError(f"cell counts do not sum to area total for {bad}")
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(self.area_ids)})

    def index_of(self, area_id: str) -> int:
        try:
            return self._index[area_id]
        except KeyError:
            raise DataError(f"area {area_id!r} missing from population table") from None

    def shares(self, area_id: str) -> np.ndarray:
        i = self.index_of(area_id)
        return self.cell_counts[i] / self.totals[i]

    def total(self, area_id: str) -> float:
        return float(self.totals[self.index_of(area_id)])

    def __contains__(self, area_id: object) -> bool:
        return area_id in self._index


@dataclass(frozen=True)
class AreaAux:
    area_id: str
    testing_rate: float
    positivity_rate: float
    density_score: int
    region: Region
    party: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.testing_rate) and self.testing_rate >= 0):
            raise DataError(f"{self.area_id}: testing_rate must be >= 0")
        if not 0.0 <= self.positivity_rate <= 1.0:
            raise DataError(f"{self.area_id}: positivity_rate must lie in [0, 1]")
        if self.density_score not in (0, 1, 2):
            raise DataError(f"{self.area_id}: density_score must be 0, 1 or 2")
        if self.party not in (0, 1):
            raise DataError(f"{self.area_id}: party must be 0 or 1")
        if not isinstance(self.region, Region):
            raise DataError(f"{self.area_id}: region must be a Region")


COLUMNS: tuple[str, ...] = (
    "intercept",
    "cell_NHW1844",
    "cell_NHW45P",
    "cell_OTHER1844",
    "testing_rate",
    "positivity_rate",
    "density_score",
    "region_NE",
    "region_MW",
    "region_S",
    "party",
)
_COLUMN_INDEX = {c: i for i, c in enumerate(COLUMNS)}


@dataclass(frozen=True)
class ModelSpec:
    """A named subset of the canonical covariate columns."""

    name: str
    active_columns: tuple[str, ...]

    def __post_init__(self) -> None:
        cols = set(self.active_columns)
        unknown = cols - set(COLUMNS)
        if unknown:
            raise ValueError(f"unknown columns: {sorted(unknown)}")
        if "intercept" not in cols:
            raise ValueError("intercept must be active")
        if len(cols) != len(self.active_columns):
            raise ValueError("duplicate columns in model spec")
        # canonical order, whatever order the caller used
        object.__setattr__(
            self, "active_columns", tuple(c for c in COLUMNS if c in cols)
        )

    @property
    def mask(self) -> np.ndarray:
        return np.array([c in self.active_columns for c in COLUMNS])

    @property
    def size(self) -> int:
        return len(self.active_columns)


_CELL_COLS = ("cell_NHW1844", "cell_NHW45P", "cell_OTHER1844")
_M1 = COLUMNS
_M2 = tuple(c for c in _M1 if c != "party")
_M3 = tuple(c for c in _M2 if c != "positivity_rate")
_M4 = ("intercept", *_CELL_COLS, "testing_rate", "density_score", "region_S")
_M5 = tuple(c for c in _M4 if c != "testing_rate")
_M6 = ("intercept", *_CELL_COLS, "testing_rate", "density_score")
_M7 = ("intercept", *_CELL_COLS, "density_score")

PRESETS: dict[str, ModelSpec] = {
    name: ModelSpec(name, cols)
    for name, cols in (
        ("M1", _M1), ("M2", _M2), ("M3", _M3), ("M4", _M4),
        ("M5", _M5), ("M6", _M6), ("M7", _M7),
    )
}


def get_spec(name_or_columns: str) -> ModelSpec:
    """Preset by name (``"M2"``) or a custom comma-separated column list."""
    key = name_or_columns.strip()
    if key.upper() in PRESETS:
        return PRESETS[key.upper()]
    cols = tuple(c.strip() for c in key.split(",") if c.strip())
    if "intercept" not in cols:
        cols = ("intercept", *cols)
    return ModelSpec("custom:" + ",".join(cols), cols)


def full_design_vector(cell: DomainCell, aux: AreaAux) -> np.ndarray:
    """All 11 canonical columns for one (cell, area) combination."""
    v = np.zeros(len(COLUMNS))
    v[0] = 1.0
    if cell is not REFERENCE_CELL:
        v[1 + cell.index] = 1.0
    v[4] = aux.testing_rate
    v[5] = aux.positivity_rate
    v[6] = aux.density_score
    if aux.region is Region.NORTHEAST:
        v[7] = 1.0
    elif aux.region is Region.MIDWEST:
        v[8] = 1.0
    elif aux.region is Region.SOUTH:
        v[9] = 1.0
    v[10] = aux.party
    return v


def design_vector(cell: DomainCell, aux: AreaAux, spec: ModelSpec) -> np.ndarray:
    return full_design_vector(cell, aux)[spec.mask]


def design_lookup(
    area_ids: Sequence[str], aux: Mapping[str, AreaAux], spec: ModelSpec
) -> np.ndarray:
    """Design rows for every (area, cell) pair.

    Returns an array of shape (len(area_ids) * 4, spec.size); row
    ``i * 4 + g`` belongs to area ``area_ids[i]`` and cell ``CELLS[g]``.
    """
    missing = [a for a in area_ids if a not in aux]
    if missing:
        raise DataError(f"areas missing from auxiliary data: {missing}")
    mask = spec.mask
    rows = [
        full_design_vector(cell, aux[a])[mask] for a in area_ids for cell in CELLS
    ]
    return np.array(rows, dtype=np.float64).reshape(len(area_ids) * N_CELLS, spec.size)
