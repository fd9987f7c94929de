import math

import numpy as np
import pytest

from synthsae.data_model import CELLS, AreaAux, PopulationTable, Region, SurveyDataset
from synthsae.simgen import SimConfig, draw_sample, generate_population


def make_aux(area_ids, rng=None):
    """Covariates for ``area_ids``; random when ``rng`` is given, else fixed."""
    regions = list(Region)
    out = {}
    for i, a in enumerate(area_ids):
        if rng is None:
            out[a] = AreaAux(a, 0.1 + 0.05 * i, 0.05 + 0.01 * i, i % 3, regions[i % 4], i % 2)
        else:
            out[a] = AreaAux(
                a,
                float(rng.uniform(0.05, 0.6)),
                float(rng.uniform(0.02, 0.25)),
                int(rng.integers(0, 3)),
                regions[int(rng.integers(0, 4))],
                int(rng.integers(0, 2)),
            )
    return out


def make_pop(area_ids, rng=None):
    m = len(area_ids)
    if rng is None:
        counts = np.tile([1.0e5, 2.0e5, 3.0e5, 4.0e5], (m, 1)) * (1 + np.arange(m))[:, None]
    else:
        counts = rng.uniform(1e4, 1e6, size=(m, len(CELLS)))
    return PopulationTable(tuple(area_ids), counts.sum(axis=1), counts)


def random_dataset(rng, area_ids, n, batches=4, wave=1, weight_range=(0.5, 3.0)):
    area = rng.choice(np.array(area_ids, dtype=object), size=n)
    # every area present
    area[: len(area_ids)] = area_ids
    return SurveyDataset(
        wave_id=wave,
        outcome=rng.integers(0, 2, size=n),
        weight=rng.uniform(*weight_range, size=n),
        cell=rng.integers(0, 4, size=n),
        area_id=area,
        batch_id=np.array([f"b{j}" for j in rng.integers(0, batches, size=n)], dtype=object),
    )


@pytest.fixture(scope="session")
def small_sim():
    """A reduced simulated world: 12 areas, 1500 units, 6 batches."""
    config = SimConfig(area_count=12, sample_size=1500, batch_count=6, seed=11)
    population = generate_population(config)
    return config, population, draw_sample(population, config, 0)


@pytest.fixture(scope="session")
def default_sim():
    config = SimConfig()
    population = generate_population(config)
    return config, population, draw_sample(population, config, 0)


def logit(p):
    return math.log(p / (1 - p))


_AC_LINES: list[str] = []


@pytest.fixture
def ac_report():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def report(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _AC_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_AC_LINES):
            terminalreporter.write_line(line)
