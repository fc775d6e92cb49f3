import math

import numpy as np
import pytest

import oracles
from conftest import random_cohort, zero_ratetable
from netsurv import YEAR, Cohort, expectation, nessie
from netsurv.errors import DivergentExpectationError, ValidationError

FORMULA = "Surv(time,status) ~ grp"


def test_time_zero_row_is_group_sizes(demo, rng):
    c = random_cohort(rng, 333, groups=("a", "b", "c"))
    r = nessie(c, demo, FORMULA)
    counts = [np.count_nonzero(c["grp"] == g[0]) for g in r.groups]
    assert list(r.ess[0]) == counts
    assert r.time_points[0] == 0.0


def test_default_time_points_are_whole_years(demo, rng):
    c = random_cohort(rng, 50, max_days=3000)
    r = nessie(c, demo, FORMULA)
    np.testing.assert_array_equal(r.time_points, np.arange(math.floor(c.time.max() / YEAR) + 1))


def test_zero_table_keeps_columns_constant(rng):
    c = random_cohort(rng, 40)
    r = nessie(c, zero_ratetable(), FORMULA, lifetimes=False)
    assert r.elt is None
    assert np.all(r.ess == r.ess[0])


def test_zero_table_lifetime_diverges(rng):
    c = random_cohort(rng, 40)
    with pytest.raises(DivergentExpectationError):
        nessie(c, zero_ratetable(), FORMULA)


def test_columns_non_increasing(demo, rng):
    c = random_cohort(rng, 200)
    r = nessie(c, demo, FORMULA, time_points=np.linspace(0, 40, 81))
    assert np.all(np.diff(r.ess, axis=0) <= 0)


def test_matches_per_patient_oracle(demo):
    rng = np.random.default_rng(21)
    c = random_cohort(rng, 20)
    pts = np.array([0.0, 0.5, 1, 2, 7.25, 15])
    r = nessie(c, demo, FORMULA, time_points=pts)
    for g, label in enumerate(r.groups):
        idx = np.flatnonzero(c["grp"] == label[0])
        for k, t in enumerate(pts):
            want = math.fsum(
                math.exp(-oracles.cumhaz_overlap(demo[c["sex"][i]], c.age[i], c.date[i], t * YEAR))
                for i in idx)
            assert r.ess[k, g] == pytest.approx(want, rel=1e-10, abs=1e-12)
        elt = math.fsum(expectation(demo[c["sex"][i]].life(c.age[i], c.date[i])) for i in idx)
        assert r.elt[g] == pytest.approx(elt / len(idx) / YEAR, rel=1e-12)


def test_partition_additivity(demo, rng):
    c = random_cohort(rng, 500)
    whole = nessie(c, demo, "Surv(time,status) ~ 1", time_points=np.arange(20.0))
    parts = nessie(c, demo, FORMULA, time_points=np.arange(20.0))
    summed = parts.ess[:, 0] + parts.ess[:, 1]
    ulp = np.spacing(whole.ess[:, 0])
    assert np.all(np.abs(summed - whole.ess[:, 0]) <= 2 * ulp)


def test_order_independence(demo, rng):
    c = random_cohort(rng, 700)
    perm = rng.permutation(c.n)
    shuffled = Cohort({k: v[perm] for k, v in c.columns.items()})
    a = nessie(c, demo, FORMULA)
    b = nessie(shuffled, demo, FORMULA)
    assert a.ess.tobytes() == b.ess.tobytes()


def test_time_point_validation(demo, rng):
    c = random_cohort(rng, 10)
    with pytest.raises(ValidationError):
        nessie(c, demo, FORMULA, time_points=[2, 1])
    with pytest.raises(ValidationError):
        nessie(c, demo, FORMULA, time_points=[-1])
