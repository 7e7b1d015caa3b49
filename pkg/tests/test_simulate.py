import numpy as np
import pytest

from conftest import mc_se
from dpmmrdd.cohort import load_cohort_csv
from dpmmrdd.pipeline import bundled_cohort_path
from dpmmrdd.simulate import (SimConfig, StudyConfig, replicate_seed, simulate_cohort,
                              simulate_reallike, simulate_study, write_study)


def test_defaults_produce_valid_cohort():
    c = simulate_cohort(SimConfig(seed=1))
    assert c.n == 2000
    assert c.schema.cont_names == ("age", "sbp", "hdl")
    assert np.all((c.x > 0.01) & (c.x < 0.6))
    assert np.all(c.cont[:, 2] > 0.5)
    share_near = np.mean(np.abs(c.x - 0.2) < 0.05)
    assert share_near > 0.3


@pytest.mark.parametrize("kwargs", [dict(n=10), dict(compliance_below=0.9, compliance_above=0.1),
                                    dict(x0=1.5), dict(confounding_scale="extreme")])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_no_effect_no_jump():
    cfg = SimConfig(n=5000, effect=0.0, compliance_above=0.0, compliance_below=0.0, seed=4)
    c = simulate_cohort(cfg)
    assert c.t.sum() == 0
    near = np.abs(c.x - c.x0) < 0.1
    xc = c.x[near] - c.x0
    z = (xc >= 0).astype(float)
    X = np.column_stack([np.ones_like(xc), z, xc, z * xc])
    coef, res, *_ = np.linalg.lstsq(X, c.y[near], rcond=None)
    sigma2 = res[0] / (len(xc) - 4)
    se = np.sqrt(sigma2 * np.linalg.inv(X.T @ X)[1, 1])
    assert abs(coef[1]) < 3 * se


def test_compliance_above_threshold():
    fracs = []
    for r in range(50):
        c = simulate_cohort(SimConfig(n=5720, seed=100 + r))
        fracs.append(c.t[c.x >= c.x0].mean())
    assert abs(np.mean(fracs) - 0.85) < 0.03


def test_monotone_fuzziness():
    for r in range(10):
        c = simulate_cohort(SimConfig(n=500, seed=r))
        z = c.x >= c.x0
        assert c.t[z].mean() > c.t[~z].mean()


def test_outcome_drop_at_threshold():
    # local linear jump in y equals effect times the compliance jump
    jumps = []
    for r in range(20):
        c = simulate_cohort(SimConfig(n=5720, seed=200 + r))
        near = np.abs(c.x - c.x0) < 0.05
        xc = c.x[near] - c.x0
        z = (xc >= 0).astype(float)
        X = np.column_stack([np.ones_like(xc), z, xc, z * xc])
        jumps.append(np.linalg.lstsq(X, c.y[near], rcond=None)[0][1])
    assert abs(np.mean(jumps) - (-2.0) * (0.85 - 0.10)) < 0.3


def test_sharp_design():
    c = simulate_cohort(SimConfig(n=300, compliance_above=1.0, compliance_below=0.0, seed=2))
    np.testing.assert_array_equal(c.t, (c.x >= c.x0).astype(int))


def test_study_base_case_and_determinism():
    study = StudyConfig(SimConfig(n=200, seed=9), n_reps=1)
    (only,) = simulate_study(study)
    direct = simulate_cohort(SimConfig(n=200, seed=replicate_seed(9, 0)))
    np.testing.assert_array_equal(only.y, direct.y)
    again = simulate_study(study)[0]
    np.testing.assert_array_equal(again.x, only.x)
    np.testing.assert_array_equal(again.t, only.t)


def test_replicates_distinct():
    cohorts = simulate_study(StudyConfig(SimConfig(n=200, seed=5), n_reps=20))
    ys = {tuple(c.y) for c in cohorts}
    assert len(ys) == 20
    assert replicate_seed(5, 3) == 5 ^ 3


def test_write_study(tmp_path):
    cohorts = simulate_study(StudyConfig(SimConfig(n=100, seed=1), n_reps=2))
    paths = write_study(cohorts, tmp_path)
    assert [p.name for p in paths] == ["rep_0.csv", "rep_1.csv"]


def test_bundled_cohort_matches_generator():
    bundled = load_cohort_csv(bundled_cohort_path())
    fresh = simulate_reallike()
    assert bundled.n == 1386
    assert bundled.schema.cat_names == ("cat_ageband",)
    np.testing.assert_allclose(bundled.y, fresh.y, rtol=0, atol=0)
    np.testing.assert_array_equal(bundled.cat, fresh.cat)
