"""Read and write the three CSV schemas (survey, population, area covariates)."""

from __future__ import annotations

import contextlib
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data_model import (
    CELLS,
    DEFAULT_AREAS,
    N_CELLS,
    AreaAux,
    DataError,
    DomainCell,
    PopulationTable,
    Region,
    SurveyDataset,
    assign_cell,
)

SURVEY_FIELDS = ("wave_id", "area_id", "batch_id", "weight", "age", "nh_white", "outcome")
POPULATION_FIELDS = ("area_id", "cell_code", "count")
AUX_FIELDS = (
    "area_id", "total_tests", "positive_tests", "population", "density_level", "region", "party",
)
DENSITY_LEVELS = {"low": 0, "med": 1, "medium": 1, "high": 2, "0": 0, "1": 1, "2": 2}
DENSITY_NAMES = ("low", "med", "high")
# ages written for each cell when a dataset is exported
_CELL_AGE = {
    DomainCell.NHW_18_44: (30, 1),
    DomainCell.NHW_45P: (60, 1),
    DomainCell.OTHER_18_44: (30, 0),
    DomainCell.OTHER_45P: (60, 0),
}


class SchemaError(DataError):
    """File header does not match the expected schema."""


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_rejected: int = 0
    rejection_reasons: list[tuple[int, str]] = field(default_factory=list)

    @property
    def rows_accepted(self) -> int:
        return self.rows_read - self.rows_rejected

    def reject(self, row: int, reason: str) -> None:
        self.rows_rejected += 1
        self.rejection_reasons.append((row, reason))

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows_read": self.rows_read,
                "rows_accepted": self.rows_accepted,
                "rows_rejected": self.rows_rejected,
                "rejection_reasons": [{"row": r, "reason": why} for r, why in self.rejection_reasons],
            },
            indent=2,
        )


def _open_rows(path: str | Path, required: Sequence[str]) -> tuple[list[str], Iterable[dict]]:
    fh = open(path, newline="")
    reader = csv.DictReader(fh)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise SchemaError(f"{path}: header missing columns {missing}")
    reader.fieldnames = header

    def rows():
        with fh:
            yield from reader

    return header, rows()


def _parse_wave(raw: str) -> int:
    s = raw.strip().lower().lstrip("w")
    return int(s)


def _parse_binary(raw: str | None) -> int | None:
    if raw is None or raw.strip() == "":
        return None
    v = float(raw)
    if v not in (0.0, 1.0):
        raise ValueError(raw)
    return int(v)


def ingest_survey(
    path: str | Path,
    wave_id: int | None = None,
    *,
    areas: Sequence[str] = DEFAULT_AREAS,
    positive_codes: Iterable[str] | None = None,
) -> tuple[SurveyDataset, IngestReport]:
    """Load one wave of survey records.

    Bad rows are rejected and logged in the report; a missing file or a bad
    header is fatal.  When ``wave_id`` is None the wave of the first valid
    row is used and rows of other waves are rejected.

    ``positive_codes`` turns on recoding of a categorical outcome: the
    outcome is 1 when the raw value is one of the codes, 0 otherwise.
    """
    _, rows = _open_rows(path, SURVEY_FIELDS)
    registry = set(areas)
    codes = None if positive_codes is None else {c.strip().lower() for c in positive_codes}
    report = IngestReport()
    cols: dict[str, list] = {k: [] for k in ("outcome", "weight", "cell", "area", "batch")}
    wave = wave_id
    for rownum, row in enumerate(rows, start=2):
        report.rows_read += 1
        try:
            w = float(row.get("weight") or "nan")
        except ValueError:
            report.reject(rownum, "invalid weight")
            continue
        if math.isnan(w):
            report.reject(rownum, "missing weight")
            continue
        if not w > 0 or math.isinf(w):
            report.reject(rownum, "nonpositive weight")
            continue
        raw_y = row.get("outcome")
        if raw_y is None or raw_y.strip() == "":
            report.reject(rownum, "missing outcome")
            continue
        if codes is not None:
            y = int(raw_y.strip().lower() in codes)
        else:
            try:
                y = _parse_binary(raw_y)
            except ValueError:
                report.reject(rownum, "invalid outcome")
                continue
        area = (row.get("area_id") or "").strip()
        if area not in registry:
            report.reject(rownum, "unknown area")
            continue
        try:
            age = int(float(row.get("age") or ""))
            nhw = _parse_binary(row.get("nh_white"))
            if nhw is None:
                raise ValueError
            cell = assign_cell(age, bool(nhw))
        except (ValueError, DataError):
            report.reject(rownum, "invalid age or ethnicity")
            continue
        try:
            row_wave = _parse_wave(row.get("wave_id") or "")
        except ValueError:
            report.reject(rownum, "invalid wave")
            continue
        if wave is None:
            wave = row_wave
        if row_wave != wave:
            report.reject(rownum, "wave mismatch")
            continue
        batch = (row.get("batch_id") or "").strip()
        if not batch:
            report.reject(rownum, "missing batch")
            continue
        cols["outcome"].append(y)
        cols["weight"].append(w)
        cols["cell"].append(cell.index)
        cols["area"].append(area)
        cols["batch"].append(batch)
    if not cols["outcome"]:
        raise DataError(f"{path}: no valid survey rows")
    ds = SurveyDataset(
        wave_id=wave,
        outcome=cols["outcome"],
        weight=cols["weight"],
        cell=cols["cell"],
        area_id=cols["area"],
        batch_id=cols["batch"],
        areas=areas,
    )
    return ds, report


def ingest_population(path: str | Path) -> PopulationTable:
    """Cell counts per area, rescaled to the area total when one is given.

    Without an ``area_total`` column the total is the sum of the four cells.
    """
    header, rows = _open_rows(path, POPULATION_FIELDS)
    has_total = "area_total" in header
    cells: dict[str, dict[int, float]] = {}
    totals: dict[str, float] = {}
    order: list[str] = []
    for rownum, row in enumerate(rows, start=2):
        area = row["area_id"].strip()
        try:
            cell = DomainCell(row["cell_code"].strip().upper())
        except ValueError:
            raise DataError(f"{path}:{rownum}: unknown cell code {row['cell_code']!r}") from None
        try:
            count = float(row["count"])
        except (TypeError, ValueError):
            raise DataError(f"{path}:{rownum}: invalid count") from None
        if not count >= 0 or math.isinf(count):
            raise DataError(f"{path}:{rownum}: count must be nonnegative")
        if area not in cells:
            cells[area] = {}
            order.append(area)
        if cell.index in cells[area]:
            raise DataError(f"{path}:{rownum}: duplicate cell {cell.value} for area {area}")
        cells[area][cell.index] = count
        if has_total and (row.get("area_total") or "").strip():
            t = float(row["area_total"])
            if area in totals and totals[area] != t:
                raise DataError(f"{path}:{rownum}: inconsistent area_total for {area}")
            totals[area] = t
    if not order:
        raise DataError(f"{path}: no population rows")
    counts = np.zeros((len(order), N_CELLS))
    area_totals = np.zeros(len(order))
    for i, area in enumerate(order):
        got = cells[area]
        if len(got) != N_CELLS:
            lacking = [c.value for c in CELLS if c.index not in got]
            raise DataError(f"{path}: area {area} missing cells {lacking}")
        raw = np.array([got[g] for g in range(N_CELLS)])
        s = math.fsum(raw)
        if s <= 0:
            raise DataError(f"{path}: area {area} has all-zero cell counts")
        total = totals.get(area, s)
        if total <= 0:
            raise DataError(f"{path}: area {area} has nonpositive total")
        if abs(s - total) > 1e-12 * total:
            raw = raw * (total / s)
        counts[i] = raw
        area_totals[i] = total
    return PopulationTable(tuple(order), area_totals, counts)


def ingest_area_aux(path: str | Path) -> dict[str, AreaAux]:
    """Area covariates derived from test counts, population and categories."""
    _, rows = _open_rows(path, AUX_FIELDS)
    out: dict[str, AreaAux] = {}
    for rownum, row in enumerate(rows, start=2):
        area = row["area_id"].strip()
        where = f"{path}:{rownum}"
        try:
            tests = float(row["total_tests"])
            pos = float(row["positive_tests"])
            popn = float(row["population"])
            party = _parse_binary(row["party"])
        except (TypeError, ValueError):
            raise DataError(f"{where}: non-numeric field") from None
        if party is None:
            raise DataError(f"{where}: missing party")
        if not popn > 0:
            raise DataError(f"{where}: population must be positive")
        if tests < 0 or pos < 0:
            raise DataError(f"{where}: test counts must be nonnegative")
        if pos > tests:
            raise DataError(f"{where}: positive_tests exceeds total_tests")
        density_token = row["density_level"].strip().lower()
        if density_token not in DENSITY_LEVELS:
            raise DataError(f"{where}: unknown density level {row['density_level']!r}")
        try:
            region = Region.parse(row["region"])
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from None
        if area in out:
            raise DataError(f"{where}: duplicate area {area}")
        out[area] = AreaAux(
            area_id=area,
            testing_rate=tests / popn,
            positivity_rate=pos / tests if tests > 0 else 0.0,
            density_score=DENSITY_LEVELS[density_token],
            region=region,
            party=party,
        )
    if not out:
        raise DataError(f"{path}: no area rows")
    return out


@contextlib.contextmanager
def _text_target(target):
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh


def write_survey(dataset: SurveyDataset, target) -> None:
    """Write ``dataset`` to a path or open text file in the survey schema."""
    with _text_target(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SURVEY_FIELDS)
        for rec in dataset.records:
            age, nhw = _CELL_AGE[rec.cell]
            w.writerow([rec.wave_id, rec.area_id, rec.batch_id, repr(rec.weight), age, nhw, rec.outcome])


def write_population(pop: PopulationTable, target) -> None:
    with _text_target(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((*POPULATION_FIELDS, "area_total"))
        for i, a in enumerate(pop.area_ids):
            for c in CELLS:
                w.writerow([a, c.value, repr(float(pop.cell_counts[i, c.index])), repr(float(pop.totals[i]))])


def write_area_aux(aux: Mapping[str, AreaAux], pop: PopulationTable, target) -> None:
    """Export covariates as raw counts; test counts are derived from the rates."""
    with _text_target(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AUX_FIELDS)
        for a in sorted(aux):
            x = aux[a]
            popn = pop.total(a)
            tests = x.testing_rate * popn
            w.writerow(
                [a, repr(tests), repr(x.positivity_rate * tests), repr(popn),
                 DENSITY_NAMES[x.density_score], x.region.value, x.party]
            )
