import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from synthsae.data_model import SurveyDataset
from synthsae.direct_est import Grouping, direct_proportion, direct_table, to_csv_rows

weights = st.lists(st.floats(0.01, 1e4), min_size=1, max_size=40)


def test_equal_weights():
    e = direct_proportion([1, 1, 1, 1], [1, 0, 1, 0])
    assert e.proportion == 0.5
    assert e.se == pytest.approx(0.25, abs=1e-15)


def test_all_zero_outcomes():
    e = direct_proportion([3.0, 1.0, 9.0], [0, 0, 0])
    assert e.proportion == 0.0 and e.se == 0.0


def test_two_unit_hand_expansion():
    e = direct_proportion([1.0, 3.0], [1, 0])
    assert e.proportion == 0.25
    assert e.se == pytest.approx(math.sqrt(1.125) / 4, abs=1e-15)
    assert abs(e.se - 0.265165) < 1e-6


def test_empty_domain_undefined():
    e = direct_proportion([], [])
    assert e.n == 0 and e.proportion is None and e.se is None
    assert to_csv_rows([e])[1][3:] == ["", ""]


@given(w=weights, data=st.data(), c=st.floats(1e-3, 1e3))
def test_rescaling_and_bounds(w, data, c):
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(w), max_size=len(w)))
    a = direct_proportion(w, y)
    b = direct_proportion(np.array(w) * c, y)
    assert 0 <= a.proportion <= 1
    assert a.se <= 1
    assert abs(a.proportion - b.proportion) <= 1e-12
    assert abs(a.se - b.se) <= 1e-12
    assert (a.se == 0) == (len(set(y)) == 1)


def _ds(area, y, w, cells=None):
    n = len(y)
    return SurveyDataset(1, y, w, cells or [0] * n, area, ["b"] * n)


class TestTable:
    def test_tiny_area_zero_se(self):
        ds = _ds(["CA", "CA", "RI"], [1, 0, 1], [1.0, 1.0, 2.0])
        rows = {e.domain_label: e for e in direct_table(ds, Grouping.BY_AREA, ["CA", "RI", "WY"])}
        assert rows["RI"].proportion == 1.0 and rows["RI"].se == 0.0
        assert rows["WY"].proportion is None

    def test_national_identity(self):
        rng = np.random.default_rng(1)
        n = 50
        ds = _ds(list(rng.choice(["A", "B", "C"], n)), rng.integers(0, 2, n), rng.uniform(1, 5, n))
        (nat,) = direct_table(ds, "national")
        assert nat == direct_proportion(ds.weight, ds.outcome)
        by_area = direct_table(ds, "by_area")
        avg = sum(e.proportion * e.sum_weights for e in by_area) / sum(e.sum_weights for e in by_area)
        assert abs(avg - nat.proportion) < 1e-14

    def test_by_cell_four_rows(self):
        ds = _ds(["A"] * 8, [1, 0] * 4, [1.0] * 8, cells=[0, 1, 2, 3] * 2)
        rows = direct_table(ds, "by_cell")
        assert len(rows) == 4 and all(r.defined for r in rows)

    def test_percent_rendering(self):
        e = direct_proportion([1, 1, 1, 1], [1, 0, 1, 0])
        assert to_csv_rows([e], percent=True)[1][3:] == ["50.0", "25.0"]
        assert to_csv_rows([e])[1][3:] == ["0.500000", "0.250000"]
