import json
import math

import numpy as np
import pytest

from nccerf import ConfigError, ModelConfig, Scenario, simulate, true_cerf
from nccerf.simulation import (ModeResult, U_MEAN, U_VAR, exposure_quantile,
                               outcome_mean, run_replications, write_report)


def slope(a, b):
    return np.polyfit(a, b, 1)[0]


@pytest.fixture(scope="module")
def big():
    return {s: simulate(Scenario(s, 10**6, seed=s)) for s in (1, 2)}


def test_confounder_moments(big):
    u = big[2].u_hidden
    assert abs(u.mean() - 1) <= 0.002
    assert abs(u.var() - 0.2) <= 0.002


def test_conditional_slopes(big):
    d = big[1]
    assert abs(slope(d.u_hidden, d.w) + 2) <= 0.01
    assert abs(slope(d.u_hidden, d.z) - 1.5) <= 0.01
    assert abs(slope(d.u_hidden, d.x) - 4) <= 0.01


def test_noise_is_variance(big):
    d = big[2]
    resid = d.y - outcome_mean(2, d.x, d.u_hidden)
    assert abs(resid.var() - 0.2) <= 0.002


def test_same_seed_same_data():
    a = simulate(Scenario(3, 100, seed=4))
    b = simulate(Scenario(3, 100, seed=4))
    c = simulate(Scenario(3, 100, seed=5))
    assert np.array_equal(a.y, b.y) and not np.array_equal(a.y, c.y)


def test_invalid_scenario():
    with pytest.raises(ConfigError):
        Scenario(5)
    with pytest.raises(ConfigError):
        Scenario(1, n=0)


def test_true_cerf_values():
    assert true_cerf(1, 5.5) == 14.0
    assert 3 + 2 * 5.5 == -13.5 + 5 * 5.5 == 14.0
    assert true_cerf(2, 6.0) == -6.0
    assert true_cerf(3, 5.0) == pytest.approx(3.2)
    assert true_cerf(4, 6.0) == pytest.approx(-2 + 0.8 * math.exp(1.1))
    assert true_cerf(4, 6.0) == pytest.approx(0.40334, abs=1e-5)
    with pytest.raises(ConfigError):
        true_cerf(7, 1.0)


@pytest.mark.parametrize("sid", [1, 2, 3, 4])
def test_true_cerf_monte_carlo(sid):
    rng = np.random.default_rng(100 + sid)
    u = rng.normal(U_MEAN, math.sqrt(U_VAR), 10**6)
    pts = exposure_quantile(sid, [0.1, 0.3, 0.5, 0.7, 0.9])
    if sid == 1:
        pts[2] = 5.5
    for x in pts:
        m = outcome_mean(sid, x, u)
        se = m.std(ddof=1) / math.sqrt(u.size)
        assert abs(m.mean() - true_cerf(sid, x)) <= 3 * se


def test_exposure_quantile():
    d = simulate(Scenario(4, 200_000, seed=1))
    np.testing.assert_allclose(np.quantile(d.x, [0.1, 0.5, 0.9]),
                               exposure_quantile(4, [0.1, 0.5, 0.9]),
                               atol=0.02)


def test_oracle_self_comparison():
    truth = np.linspace(0, 1, 10)
    res = ModeResult(medians=np.tile(truth, (3, 1)),
                     covered={0.95: np.ones((3, 10), bool)},
                     pooled_median=truth, pooled_bands={0.95: (truth, truth)},
                     runtimes=[1.0, 1.0, 1.0], truth=truth)
    mask = np.ones(10, bool)
    assert np.all(res.rmse(mask) == 0)
    assert res.pooled_coverage(0.95, mask) == 1.0


def test_replication_smoke(tmp_path):
    cfg = ModelConfig(K=4, iterations=120, burn_in=60, seed=2,
                      levels=(0.5, 0.95))
    rep = run_replications(2, 200, 2, cfg, modes=("bnp_nc", "yx"))
    assert set(rep.modes) == {"bnp_nc", "yx"} and not rep.failed
    res = rep.modes["bnp_nc"]
    assert res.medians.shape == (2, 100)
    assert res.covered[0.95].shape == (2, 100)
    again = run_replications(2, 200, 2, cfg, modes=("bnp_nc",))
    assert np.array_equal(again.modes["bnp_nc"].medians, res.medians)
    files = write_report(rep, tmp_path, {"check": {"pass": True}})
    names = sorted(p.name for p in files)
    assert names == ["scenario2_bnp_nc.csv", "scenario2_summary.json",
                     "scenario2_yx.csv"]
    s = json.loads((tmp_path / "scenario2_summary.json").read_text())
    assert s["acceptance"]["check"]["pass"]
    assert set(s["modes"]["yx"]["coverage_pooled_central"]) == {"0.5", "0.95"}
    header = (tmp_path / "scenario2_yx.csv").read_text().splitlines()[0]
    assert header == ("x,truth,median,central,lo_50,hi_50,coverage_50,"
                      "lo_95,hi_95,coverage_95")


def test_replicates_one():
    cfg = ModelConfig(K=3, iterations=60, burn_in=30)
    rep = run_replications(1, 150, 1, cfg)
    assert rep.modes["bnp_nc"].covered[0.95].shape == (1, 100)
    with pytest.raises(ConfigError):
        run_replications(1, 150, 0, cfg)
