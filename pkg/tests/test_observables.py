import numpy as np
import pytest
from hypothesis import given, strategies as hs
from scipy import stats

from slitarrival.errors import NumericalDiagnostic, WindowTooSmall
from slitarrival.observables import (bootstrap_tv, column_means_from_events, compare,
                                     cumulative_position, events_for_resolution,
                                     histogram_events, local_mean_arrival_time,
                                     local_time_distribution, mean_arrival_time, sample_events,
                                     time_marginal, total_variation)
from slitarrival.screens import SpaceTimeGrid, normalized

GRID = SpaceTimeGrid.uniform((0.0, 10.0), 201, (0.0, 10.0), 401)


def _gauss_joint(mt=5.0, st_=1.0, mx=5.0, sx=1.5, tag="QF", meta=None, tilt=0.0):
    t = GRID.times[:, None]
    x = GRID.screen_coords[None, :]
    d = np.exp(-0.5 * ((t - mt - tilt * (x - mx)) / st_) ** 2 - 0.5 * ((x - mx) / sx) ** 2)
    return normalized(GRID, d, tag, meta)


def test_marginals_are_consistent():
    jd = _gauss_joint(tilt=0.3)
    tm = jd.time_marginal()
    pm = jd.position_marginal()
    assert tm.integral() == pytest.approx(1.0, abs=1e-9)
    assert np.trapezoid(pm, jd.coords) == pytest.approx(1.0, abs=1e-9)
    assert np.trapezoid(cumulative_position(jd), jd.coords) == pytest.approx(1.0, abs=1e-12)
    assert time_marginal(jd).integral() == pytest.approx(1.0, abs=1e-12)


def test_separable_density_has_flat_local_mean():
    jd = _gauss_joint()
    lm = local_mean_arrival_time(jd)
    np.testing.assert_allclose(lm.mean_time, lm.mean_time[100], rtol=1e-12)
    assert lm.mean_time[100] == pytest.approx(5.0, abs=1e-6)
    assert mean_arrival_time(jd.time_marginal()).value == pytest.approx(5.0, abs=1e-6)


def test_tilted_density_local_mean_follows_tilt():
    jd = _gauss_joint(tilt=0.2, st_=0.5)
    lm = local_mean_arrival_time(jd)
    mid = slice(80, 121)
    np.testing.assert_allclose(lm.mean_time[mid], 5.0 + 0.2 * (jd.coords[mid] - 5.0),
                               atol=1e-6)


@given(scale=hs.floats(1e-3, 1e3))
def test_local_mean_is_scale_invariant(scale):
    jd = _gauss_joint(tilt=0.1)
    a = local_mean_arrival_time(jd).mean_time
    jd2 = type(jd)(jd.grid, jd.density * scale, jd.proposal_tag, {})
    b = local_mean_arrival_time(jd2).mean_time
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_local_time_distribution():
    jd = _gauss_joint(tilt=0.2)
    td = local_time_distribution(jd, 5.0, half_width=0.5)
    assert td.integral() == pytest.approx(1.0, abs=1e-12)
    assert td.mean() == pytest.approx(5.0, abs=1e-3)
    with pytest.raises(NumericalDiagnostic):
        local_time_distribution(jd, 50.0, half_width=0.5)


def test_sampler_reproduces_marginals():
    jd = _gauss_joint(tilt=0.2)
    ev = sample_events(jd, 20000, seed=17)
    # KS on the time marginal, from the cell-integrated CDF
    tm = jd.time_marginal()
    cdf_t = np.concatenate([[0.0], np.cumsum(0.5 * (tm.density[1:] + tm.density[:-1])
                                             * np.diff(tm.times))])
    cdf_t /= cdf_t[-1]
    assert stats.kstest(ev[:, 1], lambda v: np.interp(v, tm.times, cdf_t)).pvalue > 0.01
    # chi-square on coarse position bins
    edges = np.linspace(0.0, 10.0, 11)
    pm = jd.position_marginal()
    cdf_x = np.concatenate([[0.0], np.cumsum(0.5 * (pm[1:] + pm[:-1]) * np.diff(jd.coords))])
    cdf_x /= cdf_x[-1]
    expected = np.diff(np.interp(edges, jd.coords, cdf_x)) * len(ev)
    observed = np.histogram(ev[:, 0], edges)[0]
    keep = expected > 5
    chi = stats.chisquare(observed[keep], expected[keep] * observed[keep].sum()
                          / expected[keep].sum())
    assert chi.pvalue > 0.01


def test_sampler_mean_converges_like_inverse_root_n():
    jd = _gauss_joint()
    errs = []
    for n in (1000, 16000):
        m = [sample_events(jd, n, seed=s)[:, 1].mean() for s in range(40)]
        errs.append(np.std(m))
    # 16x the events -> 4x smaller spread, within sampling noise
    assert 2.5 < errs[0] / errs[1] < 6.5
    # 1e4 events of a unit-width distribution give ~0.01 standard error
    m = [sample_events(jd, 10000, seed=100 + s)[:, 1].mean() for s in range(40)]
    assert 0.006 < np.std(m) < 0.015


def test_sampler_edge_cases():
    jd = _gauss_joint()
    assert sample_events(jd, 0, seed=1).shape == (0, 2)
    a = sample_events(jd, 50, seed=3)
    b = sample_events(jd, 50, seed=3)
    np.testing.assert_array_equal(a, b)
    h = histogram_events(a, np.linspace(0, 10, 6), np.linspace(0, 10, 6), seed=3)
    assert h.n_total == 50 and h.counts.shape == (5, 5)


def test_compare_with_itself_is_zero():
    jd = _gauss_joint(tilt=0.2)
    rec = compare(jd, jd)
    assert rec["total_variation"] == 0.0
    assert rec["max_local_mean_gap"] == 0.0


def test_compare_shift_and_power():
    a = _gauss_joint()
    b = _gauss_joint(mt=5.2, tag="STD")
    rec = compare(a, b, region=(4.0, 6.0))
    # the window truncates the shifted Gaussian at 4.8 sigma
    assert rec["max_local_mean_gap"] == pytest.approx(0.2, abs=1e-4)
    assert rec["total_variation"] > 0
    # two unit-width distributions 0.2 apart: 5 sigma needs 25 * 2 / 0.04 events
    assert rec["events_5sigma"] == pytest.approx(1250.0, rel=1e-3)
    assert events_for_resolution(1.0, 1.0, 0.2) == pytest.approx(1250.0)
    assert total_variation(a, b) == rec["total_variation"]


def test_compare_refuses_truncated_windows():
    a = _gauss_joint(meta={"captured_fraction": 0.9})
    with pytest.raises(WindowTooSmall):
        compare(a, a)
    assert compare(a, a, force=True)["total_variation"] == 0.0


def test_column_means_from_events():
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 2, 20000)
    t = 3.0 + c + rng.normal(0, 0.5, c.size)
    mean, se, n = column_means_from_events(t, c, np.array([0.0, 1.0, 2.0]), (0.0, 10.0))
    assert n.sum() == c.size
    np.testing.assert_allclose(mean, [3.5, 4.5], atol=4 * se.max())
    assert np.all(se < 0.01)


def test_bootstrap_tv_against_reference():
    rng = np.random.default_rng(1)
    n = 20000
    t = rng.uniform(0, 1, n)
    c = rng.uniform(0, 1, n)
    edges = np.linspace(0, 1, 11)
    ref = np.ones((10, 10))
    res = bootstrap_tv(t, c, np.arange(n), n, edges, edges, ref, n_boot=20, seed=4)
    assert res["n_events"] == n
    # a correct reference gives a TV comparable to its own MC error
    assert res["total_variation"] < 3 * res["bootstrap_error"]
    bad = ref.copy()
    bad[:5] *= 1.5
    res2 = bootstrap_tv(t, c, np.arange(n), n, edges, edges, bad, n_boot=20, seed=4)
    assert res2["total_variation"] > 3 * res2["bootstrap_error"]
