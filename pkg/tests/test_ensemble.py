import datetime as dt
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csgemos.ensemble import (
    HIGH,
    LOW,
    EQUAL_COST_MIXTURES,
    Dataset,
    EnsembleForecast,
    ForecastCase,
    MemberGroup,
    MixtureConfig,
    RollingWindow,
    assemble_windows,
    consecutive_dates,
    group_means,
    lead_days_to_hours,
    lead_hours_to_days,
    validate_mixture,
)
from csgemos.errors import EmptyWindow, InvalidMixture

DAY0 = dt.date(2016, 6, 1)


def make_case(loc, day, obs=1.0, hi=(1.0,), lo=()):
    groups = (MemberGroup(HIGH, hi), MemberGroup(LOW, lo))
    return ForecastCase(EnsembleForecast(loc, day, 30, groups), obs)


class TestMixture:
    @pytest.mark.parametrize("m", EQUAL_COST_MIXTURES)
    def test_reference_mixtures_cost_fifty(self, m):
        assert validate_mixture(MixtureConfig(*m), 50)

    def test_forty_forty(self):
        assert MixtureConfig(40, 40).cost == Fraction(50)

    def test_empty_rejected(self):
        with pytest.raises(InvalidMixture):
            MixtureConfig(0, 0)
        with pytest.raises(InvalidMixture):
            MixtureConfig(-1, 8)

    def test_off_budget(self):
        assert not validate_mixture(MixtureConfig(20, 121), 50)

    def test_only_cost_line_validates(self):
        passing = {(h, l) for h in range(51) for l in range(0, 201, 4)
                   if (h, l) != (0, 0) and validate_mixture(MixtureConfig(h, l), 50)}
        assert passing == {(h, 4 * (50 - h)) for h in range(51)}
        assert set(EQUAL_COST_MIXTURES) <= passing

    def test_parse_and_label(self):
        m = MixtureConfig.parse("(20,120)")
        assert (m.m_high, m.m_low, m.label) == (20, 120, "20-120")
        assert MixtureConfig.parse("10-160") == MixtureConfig(10, 160)
        assert MixtureConfig(50, 0).pure_high and MixtureConfig(0, 200).pure_low


class TestGroupMeans:
    def test_hand_arithmetic(self):
        f = EnsembleForecast("x", DAY0, 30, (MemberGroup(HIGH, [2, 4]), MemberGroup(LOW, [0, 0, 0, 4])))
        means, overall = group_means(f)
        assert means == [(HIGH, 3.0), (LOW, 1.0)]
        assert overall == pytest.approx(5 / 3, abs=1e-15)

    def test_single_group(self):
        f = EnsembleForecast("x", DAY0, 30, (MemberGroup(HIGH, [7]),))
        assert group_means(f) == ([(HIGH, 7.0)], 7.0)

    def test_empty_group_skipped(self):
        f = EnsembleForecast("x", DAY0, 30, (MemberGroup(HIGH, [1, 2]), MemberGroup(LOW, [])))
        assert group_means(f)[0] == [(HIGH, 1.5)]

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=20),
           st.lists(st.floats(0, 100), max_size=20), st.randoms())
    def test_permutation_invariant(self, hi, lo, rnd):
        f = EnsembleForecast("x", DAY0, 30, (MemberGroup(HIGH, hi), MemberGroup(LOW, lo)))
        hi2, lo2 = list(hi), list(lo)
        rnd.shuffle(hi2)
        rnd.shuffle(lo2)
        g = EnsembleForecast("x", DAY0, 30, (MemberGroup(HIGH, hi2), MemberGroup(LOW, lo2)))
        assert group_means(f) == group_means(g)

    def test_member_validation(self):
        with pytest.raises(ValueError):
            MemberGroup(HIGH, [1.0, -0.5])
        with pytest.raises(ValueError):
            MemberGroup(HIGH, [np.nan])
        with pytest.raises(ValueError):
            EnsembleForecast("x", DAY0, 30, (MemberGroup(HIGH, []),))
        with pytest.raises(ValueError):
            ForecastCase(EnsembleForecast("x", DAY0, 30, (MemberGroup(HIGH, [1]),)), -1.0)


class TestWindows:
    def test_forty_days(self):
        days = consecutive_dates(DAY0, 41)
        data = [make_case("a", d) for d in days[:40]]
        (w,) = assemble_windows(data, 30, [days[40]])
        got = sorted({c.valid_time for c in w.cases})
        assert got == days[10:40]

    def test_short_history(self):
        days = consecutive_dates(DAY0, 10)
        data = [make_case("a", d) for d in days]
        with pytest.raises(EmptyWindow):
            assemble_windows(data, 30, [days[5]])
        (w,) = assemble_windows(data, 30, [days[5]], allow_partial_windows=True)
        assert len(w.cases) == 5

    def test_empty_even_when_partial(self):
        data = [make_case("a", DAY0)]
        with pytest.raises(EmptyWindow):
            assemble_windows(data, 30, [DAY0], allow_partial_windows=True)

    def test_pooling(self):
        days = consecutive_dates(DAY0, 31)
        data = [make_case(loc, d) for loc in "ab" for d in days[:30]]
        (pooled,) = assemble_windows(data, 30, [days[30]])
        assert {c.location_id for c in pooled.cases} == {"a", "b"}
        split = assemble_windows(data, 30, [days[30]], pool_locations=False)
        assert [{c.location_id for c in w.cases} for w in split] == [{"a"}, {"b"}]

    def test_window_type_rejects_target_day(self):
        with pytest.raises(ValueError):
            RollingWindow(DAY0, 30, (make_case("a", DAY0),))

    @given(st.lists(st.tuples(st.sampled_from("abc"), st.integers(0, 60)), min_size=1, max_size=80),
           st.integers(1, 40), st.lists(st.integers(0, 90), min_size=1, max_size=5))
    def test_every_case_predates_target(self, rows, length, targets):
        data = [make_case(loc, DAY0 + dt.timedelta(days=d)) for loc, d in rows]
        for t in targets:
            target = DAY0 + dt.timedelta(days=t)
            try:
                (w,) = assemble_windows(data, length, [target], allow_partial_windows=True)
            except EmptyWindow:
                continue
            lo = target - dt.timedelta(days=length)
            assert all(lo <= c.valid_time < target for c in w.cases)
            expected = sum(1 for _, d in rows if t - length <= d < t)
            assert len(w.cases) == expected


class TestDataset:
    def test_cases_and_members(self, small_scenario):
        ds = small_scenario.dataset
        mix = MixtureConfig(40, 40)
        hi, lo = ds.members(mix, 0)
        assert hi.shape[-1] == 40 and lo.shape[-1] == 40
        cases = ds.cases(mix, 0)
        assert len(cases) == np.isfinite(ds.obs).sum()
        assert cases[0].forecast.lead_time == 30

    def test_training_days(self, small_scenario):
        ds = small_scenario.dataset
        sl = ds.training_days(ds.dates[35], 30)
        assert (sl.start, sl.stop) == (5, 35)
        with pytest.raises(EmptyWindow):
            ds.training_days(ds.dates[3], 30)

    def test_too_many_members(self, small_scenario):
        with pytest.raises(InvalidMixture):
            small_scenario.dataset.members(MixtureConfig(500, 0))

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            Dataset(["a"], [DAY0], [1], np.zeros((2, 1)), np.zeros((1, 1, 1, 2)), np.zeros((1, 1, 1, 2)))


def test_lead_hours_round_trip():
    for d in range(1, 11):
        assert lead_hours_to_days(lead_days_to_hours(d)) == d
    assert lead_days_to_hours(1) == 30
    assert lead_days_to_hours(3) == 78
