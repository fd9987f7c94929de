import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from synthsae.data_model import PRESETS, DataError, SurveyDataset
from synthsae.jackknife import Estimator, jackknife, jackknife_replicates, jackknife_variance, summarize
from synthsae.synthetic_est import aggregate_national, benchmark, synthetic_estimates
from synthsae.wglm import fit

from conftest import make_aux, make_pop, random_dataset

reps = st.lists(st.floats(-10, 10), min_size=2, max_size=30)


class TestVarianceFormula:
    def test_three_replicates(self):
        v, s = jackknife_variance([0.4, 0.5, 0.6])
        assert abs(v - 0.02 * 2 / 3) <= 1e-12
        assert abs(v - 0.0133333) < 1e-7
        assert s == math.sqrt(v)

    @given(a=st.floats(-1, 1), b=st.floats(-1, 1))
    def test_two_replicates(self, a, b):
        v, _ = jackknife_variance([a, b])
        assert v == pytest.approx((a - b) ** 2 / 4, rel=1e-12, abs=1e-300)

    def test_constant_replicates(self):
        assert jackknife_variance([0.3] * 20) == (0.0, 0.0)

    def test_too_few(self):
        with pytest.raises(ValueError):
            jackknife_variance([0.5])

    @given(r=reps, c=st.floats(-5, 5))
    def test_shift_invariance(self, r, c):
        v0, _ = jackknife_variance(r)
        v1, _ = jackknife_variance(np.array(r) + c)
        assert v1 == pytest.approx(v0, rel=1e-6, abs=1e-9)

    @given(r=reps)
    def test_adding_mean_replicate(self, r):
        m = len(r)
        v = jackknife_variance(r)[0]
        mean = math.fsum(r) / m
        v_aug = jackknife_variance([*r, mean])[0]
        assert v_aug == pytest.approx(v * m * m / ((m - 1) * (m + 1)), rel=1e-9, abs=1e-12)


AREAS = [f"A{i}" for i in range(8)]


@pytest.fixture(scope="module")
def world():
    rng = np.random.default_rng(5)
    aux = make_aux(AREAS, rng)
    pop = make_pop(AREAS, rng)
    ds = random_dataset(rng, AREAS, 800, batches=5)
    return ds, pop, aux


class TestReplicates:
    def test_shape_and_point(self, world):
        ds, pop, aux = world
        mat = jackknife_replicates(ds, pop, aux, PRESETS["M7"], "synthetic")
        assert mat.replicates.shape == (5, len(AREAS))
        assert mat.batch_ids == ("b0", "b1", "b2", "b3", "b4")
        f = fit(ds, aux, PRESETS["M7"])
        syn = {s.area_id: s.value for s in synthetic_estimates(f, pop, aux)}
        np.testing.assert_allclose(mat.point, [syn[a] for a in mat.area_ids], rtol=0, atol=1e-12)

    def test_fold_matches_refit(self, world):
        ds, pop, aux = world
        mat = jackknife_replicates(ds, pop, aux, PRESETS["M6"], "benchmarked")
        sub = ds.subset(ds.batch_id != "b2")
        f = fit(sub, aux, PRESETS["M6"])
        syn = synthetic_estimates(f, pop, aux)
        from synthsae.direct_est import direct_of

        b = benchmark(syn, pop, direct_of(sub))
        expected = [b.benchmarked[a] for a in mat.area_ids]
        np.testing.assert_allclose(mat.replicates[2], expected, rtol=0, atol=1e-10)
        assert mat.national_replicates[2] == pytest.approx(direct_of(sub).proportion, abs=1e-14)

    def test_benchmarked_replicates_are_consistent(self, world):
        ds, pop, aux = world
        mat = jackknife_replicates(ds, pop, aux, PRESETS["M7"], "benchmarked")
        for j in range(len(mat.batch_ids)):
            vals = dict(zip(mat.area_ids, mat.replicates[j]))
            assert abs(aggregate_national(vals, pop) - mat.national_replicates[j]) <= 1e-12

    def test_identical_batches_zero_variance(self):
        rng = np.random.default_rng(9)
        aux = make_aux(AREAS[:4], rng)
        pop = make_pop(AREAS[:4], rng)
        base = random_dataset(rng, AREAS[:4], 120)
        k = 4
        ds = SurveyDataset(
            1,
            np.tile(base.outcome, k),
            np.tile(base.weight, k),
            np.tile(base.cell, k),
            np.tile(base.area_id, k),
            np.repeat([f"c{j}" for j in range(k)], len(base)),
        )
        for r in jackknife(ds, pop, aux, PRESETS["M7"], "benchmarked"):
            assert r.std < 1e-9
            assert r.m_b == k

    def test_batch_count_from_data(self, world):
        ds, pop, aux = world
        sub = ds.subset(ds.batch_id != "b4")
        res = jackknife(sub, pop, aux, PRESETS["M7"])
        assert {r.m_b for r in res} == {4}

    def test_single_batch_error(self, world):
        ds, pop, aux = world
        sub = ds.subset(ds.batch_id == "b0")
        with pytest.raises(DataError, match="2 batches"):
            jackknife(sub, pop, aux, PRESETS["M7"])

    def test_area_set_mismatch(self, world):
        ds, pop, aux = world
        with pytest.raises(DataError, match="differ"):
            jackknife(ds, make_pop(AREAS[:-1]), aux, PRESETS["M7"])

    def test_summarize_matches_formula(self, world):
        ds, pop, aux = world
        mat = jackknife_replicates(ds, pop, aux, PRESETS["M7"])
        for i, r in enumerate(summarize(mat)):
            assert r.variance == jackknife_variance(mat.replicates[:, i])[0]
            assert r.std >= 0

    def test_deterministic(self, world):
        ds, pop, aux = world
        a = jackknife_replicates(ds, pop, aux, PRESETS["M2"])
        b = jackknife_replicates(ds, pop, aux, PRESETS["M2"])
        assert np.array_equal(a.replicates, b.replicates)

    def test_estimator_enum(self):
        assert Estimator("synthetic") is Estimator.SYNTHETIC
