import numpy as np
import pytest
from hypothesis import given, strategies as st

from synthsae.data_model import (
    CELLS,
    COLUMNS,
    PRESETS,
    AreaAux,
    DataError,
    DomainCell,
    ModelSpec,
    PopulationTable,
    Region,
    SurveyDataset,
    UnitRecord,
    assign_cell,
    design_vector,
    get_spec,
)


class TestAssignCell:
    @pytest.mark.parametrize(
        "age, nhw, expected",
        [
            (30, True, DomainCell.NHW_18_44),
            (44, False, DomainCell.OTHER_18_44),
            (45, False, DomainCell.OTHER_45P),
            (90, True, DomainCell.NHW_45P),
            (18, False, DomainCell.OTHER_18_44),
        ],
    )
    def test_bands(self, age, nhw, expected):
        assert assign_cell(age, nhw) is expected

    def test_minor_rejected(self):
        with pytest.raises(DataError):
            assign_cell(17, True)


def test_four_cells_with_reference():
    assert len(CELLS) == 4
    assert CELLS[-1] is DomainCell.OTHER_45P


ZERO_WEST = AreaAux("XX", 0.0, 0.0, 0, Region.WEST, 0)
NE_AUX = AreaAux("YY", 0.5, 0.1, 2, Region.NORTHEAST, 1)


class TestDesignVector:
    def test_reference_everywhere(self):
        v = design_vector(DomainCell.OTHER_45P, ZERO_WEST, PRESETS["M1"])
        np.testing.assert_array_equal(v, [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0])

    def test_direct_encoding(self):
        v = design_vector(DomainCell.NHW_18_44, NE_AUX, PRESETS["M1"])
        np.testing.assert_array_equal(v, [1, 1, 0, 0, 0.5, 0.1, 2, 1, 0, 0, 1])

    def test_m7(self):
        v = design_vector(DomainCell.NHW_45P, NE_AUX, PRESETS["M7"])
        np.testing.assert_array_equal(v, [1, 0, 1, 0, 2])

    @given(
        cell=st.sampled_from(CELLS),
        testing=st.floats(0, 5),
        positivity=st.floats(0, 1),
        density=st.integers(0, 2),
        region=st.sampled_from(list(Region)),
        party=st.integers(0, 1),
        spec=st.sampled_from(list(PRESETS.values())),
    )
    def test_projection_of_full_vector(self, cell, testing, positivity, density, region, party, spec):
        aux = AreaAux("ZZ", testing, positivity, density, region, party)
        v = design_vector(cell, aux, spec)
        full = design_vector(cell, aux, PRESETS["M1"])
        assert v.shape == (spec.size,)
        np.testing.assert_array_equal(v, full[[COLUMNS.index(c) for c in spec.active_columns]])
        assert full[1:4].sum() <= 1

    def test_cells_distinct_patterns(self):
        pats = {tuple(design_vector(c, ZERO_WEST, PRESETS["M1"])[1:4]) for c in CELLS}
        assert len(pats) == 4


class TestPresets:
    def test_check_pattern(self):
        cells = ["cell_NHW1844", "cell_NHW45P", "cell_OTHER1844"]
        assert PRESETS["M1"].active_columns == COLUMNS
        assert set(PRESETS["M2"].active_columns) == set(COLUMNS) - {"party"}
        assert set(PRESETS["M3"].active_columns) == set(COLUMNS) - {"party", "positivity_rate"}
        assert set(PRESETS["M4"].active_columns) == {"intercept", *cells, "testing_rate", "density_score", "region_S"}
        assert set(PRESETS["M5"].active_columns) == {"intercept", *cells, "density_score", "region_S"}
        assert set(PRESETS["M6"].active_columns) == {"intercept", *cells, "testing_rate", "density_score"}
        assert set(PRESETS["M7"].active_columns) == {"intercept", *cells, "density_score"}

    def test_intercept_required(self):
        with pytest.raises(ValueError):
            ModelSpec("bad", ("density_score",))

    def test_custom_spec_canonical_order(self):
        spec = get_spec("density_score,cell_NHW1844")
        assert spec.active_columns == ("intercept", "cell_NHW1844", "density_score")
        assert get_spec("m2") is PRESETS["M2"]


class TestRecords:
    def test_nonpositive_weight(self):
        with pytest.raises(DataError):
            UnitRecord(1, 0.0, DomainCell.NHW_45P, "MD", "b5", 16)

    def test_dataset_roundtrip_records(self):
        recs = [
            UnitRecord(1, 1.25, DomainCell.NHW_45P, "MD", "b5", 16),
            UnitRecord(0, 2.0, DomainCell.OTHER_18_44, "RI", "b1", 16),
        ]
        ds = SurveyDataset.from_records(recs)
        assert list(ds.records) == recs
        assert ds.batch_ids == ("b1", "b5")
        counts = ds.sample_counts(["MD", "RI"])
        assert counts.sum() == ds.n == 2

    def test_mixed_waves_rejected(self):
        recs = [
            UnitRecord(1, 1.0, DomainCell.NHW_45P, "MD", "b5", 15),
            UnitRecord(0, 1.0, DomainCell.NHW_45P, "MD", "b5", 16),
        ]
        with pytest.raises(DataError):
            SurveyDataset.from_records(recs)

    def test_unknown_area(self):
        with pytest.raises(DataError):
            SurveyDataset(1, [1], [1.0], [0], ["ZZ"], ["b"], areas=["MD"])

    def test_immutable_columns(self):
        ds = SurveyDataset(1, [1], [1.0], [0], ["MD"], ["b"])
        with pytest.raises(ValueError):
            ds.weight[0] = 5.0


class TestPopulationTable:
    def test_sum_invariant(self):
        with pytest.raises(DataError):
            PopulationTable(("A",), [100.0], [[10, 20, 30, 30]])

    def test_shares(self):
        pop = PopulationTable(("A",), [100.0], [[10, 20, 30, 40]])
        np.testing.assert_allclose(pop.shares("A"), [0.1, 0.2, 0.3, 0.4])

    def test_positive_totals(self):
        with pytest.raises(DataError):
            PopulationTable(("A",), [0.0], [[0, 0, 0, 0]])


def test_aux_ranges():
    with pytest.raises(DataError):
        AreaAux("A", 0.1, 1.5, 0, Region.WEST, 0)
    with pytest.raises(DataError):
        AreaAux("A", -0.1, 0.5, 0, Region.WEST, 0)
