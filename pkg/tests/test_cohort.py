import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_cohort
from dpmmrdd.cohort import (Cohort, CohortError, CohortFormatError, CovariateSchema,
                            CovariateStandardizer, Unit, center_forcing, load_cohort_csv,
                            require_both_sides, standardize_covariates, validate_cohort,
                            write_cohort_csv)
from dpmmrdd.simulate import SimConfig, simulate_cohort


def test_valid_cohort_returned_unchanged():
    units = [Unit("a", 0.1, 0, 1.0, (1.0,)), Unit("b", 0.2, 1, 2.0, (2.0,)),
             Unit("c", 0.3, 1, 3.0, (4.0,))]
    c = Cohort.from_units(units)
    assert validate_cohort(c) is c
    assert c.units == units


def test_treatment_not_binary():
    c = make_cohort([0.1, 0.3, 0.4], t=[0, 2, 1])
    with pytest.raises(CohortError, match="treatment not binary"):
        validate_cohort(c)


def test_duplicate_id_named():
    c = make_cohort([0.1, 0.3, 0.4], ids=np.array(["a", "dup", "dup"], dtype=object))
    with pytest.raises(CohortError, match="dup"):
        validate_cohort(c)


@pytest.mark.parametrize("field_name", ["x", "y"])
def test_non_finite_rejected(field_name):
    vals = {"x": [0.1, 0.3, 0.4], "y": [1.0, 2.0, 3.0]}
    vals[field_name][1] = np.nan
    c = make_cohort(vals["x"], y=vals["y"], t=[0, 1, 1])
    with pytest.raises(CohortError, match="u1"):
        validate_cohort(c)


def test_category_out_of_range():
    c = make_cohort([0.1, 0.3, 0.4], cat=[1, 2, 3], cat_levels=(2,))
    with pytest.raises(CohortError, match="outside 1..2"):
        validate_cohort(c)


def test_single_unit_rejected():
    with pytest.raises(CohortError):
        validate_cohort(make_cohort([0.3]))


@pytest.mark.parametrize("x, xc, z", [(0.20, 0.0, 1), (0.15, -0.05, 0), (0.30, 0.10, 1)])
def test_center_forcing_examples(x, xc, z):
    view = center_forcing(make_cohort([x, 0.5]))
    assert view.xc[0] == pytest.approx(xc, abs=1e-15)
    assert view.xc[0] == x - 0.20
    assert view.z[0] == z


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.floats(-5, 5))
def test_center_forcing_translation_invariant(xs, c):
    # shifting x and x0 together keeps the threshold indicator
    base = center_forcing(make_cohort(xs))
    shifted = center_forcing(make_cohort(np.asarray(xs) + c, x0=0.20 + c))
    np.testing.assert_allclose(shifted.xc, base.xc, atol=1e-12)
    # the indicator may only flip for points within rounding distance of x0
    flip = shifted.z != base.z
    assert np.all(np.abs(base.xc[flip]) < 1e-12)
    assert base.z.sum() + (1 - base.z).sum() == len(xs)


def test_require_both_sides():
    with pytest.raises(CohortError):
        require_both_sides(make_cohort([0.3, 0.4]))
    require_both_sides(make_cohort([0.1, 0.4]))


def test_standardize_symmetric_column():
    c = make_cohort([0.1, 0.2, 0.3], cont=[1.0, 2.0, 3.0])
    s = standardize_covariates(c)
    np.testing.assert_allclose(s.values[:, 0], [-1, 0, 1])
    assert s.means[0] == 2.0 and s.sds[0] == 1.0


def test_standardize_constant_column_named():
    c = make_cohort([0.1, 0.2, 0.3], cont=np.column_stack([[1, 2, 3], [5, 5, 5]]))
    with pytest.raises(CohortError, match="c1"):
        standardize_covariates(c)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**32 - 1))
def test_standardize_idempotent_and_moments(n, seed):
    r = np.random.default_rng(seed)
    cont = r.normal(10, 3, size=(n, 2))
    s1 = CovariateStandardizer().fit_transform(cont)
    s2 = CovariateStandardizer().fit_transform(s1)
    np.testing.assert_allclose(s2, s1, atol=1e-10)
    assert np.all(np.abs(s1.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(s1.std(axis=0, ddof=1) - 1) < 1e-10)


def test_standardizer_inverse_and_params():
    X = np.array([[1.0, 10.0], [2.0, 20.0], [4.0, 25.0]])
    sc = CovariateStandardizer()
    np.testing.assert_allclose(sc.inverse_transform(sc.fit_transform(X)), X)
    assert sc.get_params() == {"names": None}


def test_csv_round_trip(tmp_path):
    c = simulate_cohort(SimConfig(n=120, seed=3, cat_levels=(3,)))
    path = write_cohort_csv(c, tmp_path / "c.csv")
    back = load_cohort_csv(path)
    assert list(back.ids) == list(c.ids)
    for name in ("x", "y", "cont"):
        np.testing.assert_allclose(getattr(back, name), getattr(c, name), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(back.t, c.t)
    np.testing.assert_array_equal(back.cat, c.cat)
    assert back.schema == c.schema


def _write(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    return p


def test_csv_missing_column_named(tmp_path):
    p = _write(tmp_path, "id,x,y\na,0.1,1.0\nb,0.3,2.0\n")
    with pytest.raises(CohortFormatError, match="'t'"):
        load_cohort_csv(p)


def test_csv_non_numeric_row_number(tmp_path):
    rows = ["id,x,t,y"] + [f"u{i},0.{i + 1},{int(i > 2)},1.5" for i in range(8)]
    rows[6] = "u5,0.6,1,abc"  # seventh line of the file
    p = _write(tmp_path, "\n".join(rows) + "\n")
    with pytest.raises(CohortFormatError, match="row 7"):
        load_cohort_csv(p)


def test_csv_validation_error_carries_path(tmp_path):
    p = _write(tmp_path, "id,x,t,y\na,0.1,0,1\na,0.3,1,2\n")
    with pytest.raises(CohortError, match="bad.csv"):
        load_cohort_csv(p)


def test_arrays_read_only():
    c = make_cohort([0.1, 0.3])
    with pytest.raises(ValueError):
        c.x[0] = 0.5


def test_subset_keeps_schema():
    c = make_cohort([0.1, 0.3, 0.5], cont=[1.0, 2.0, 3.0])
    s = c.subset([2, 0])
    assert list(s.ids) == ["u2", "u0"]
    assert s.schema == c.schema
