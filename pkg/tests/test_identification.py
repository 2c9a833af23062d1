import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nccerf import (IdentificationError, ModelConfig, ValidationError,
                    cerf_draw, component_effect, run_chain, summarize)
from nccerf.data import Affine, ParameterState
from nccerf.identification import (MomentCache, cerf_columns, cerf_draws,
                                   component_intercept, estimate_from_chain,
                                   read_cerf, write_cerf)
from nccerf.psbp import KnotGrid, stick_break

from conftest import make_dataset

M0 = MomentCache({"x": 0.0, "z": 0.0})


def test_effect_examples():
    assert component_effect([0, 2.5, 7], [0, 0, 3]) == 2.5
    assert component_effect([0, 2, 3], [0, 1, 1.5]) == 0.0
    with pytest.raises(IdentificationError, match="A6/A7"):
        component_effect([0, 2, 3], [0, 1, 1e-12], tol=1e-6)


def test_intercept_examples():
    m = MomentCache({"x": 4.0, "z": 0.5})
    assert component_intercept([1.5, 9, 0], [0, 1, 2], m) == 1.5
    assert component_intercept([1, 0, 2], [0, 0.25, 1], m) == 4.0
    assert component_intercept([1, 3, 2], [0, 0.25, 1], M0) == 1.0
    # covariate terms enter at their means
    assert component_intercept([1, 0, 0, 2], [0, 1, 1], m,
                               extra=[(3, 0.5)]) == 2.0


def _state(theta_y, theta_w, eta):
    theta_y = np.atleast_2d(np.asarray(theta_y, float))
    return ParameterState(theta_y=theta_y, sigma_y=np.ones(len(theta_y)),
                          theta_w=np.asarray(theta_w, float), sigma_w=1.0,
                          eta=np.atleast_2d(np.asarray(eta, float)))


KN = KnotGrid([-2.0, 0.0, 2.0])


def test_k1_is_a_line():
    s = _state([[1, 2, 3]], [0, 1, 2], [[0, 0, 0]])
    g = np.linspace(-2, 2, 9)
    v = cerf_draw(s, g, KN, {"x": 0.3, "z": -0.2})
    np.testing.assert_allclose(np.diff(v, 2), 0, atol=1e-12)
    np.testing.assert_allclose(np.diff(v) / np.diff(g), 2 - 3 * 0.5)


def test_no_confounding_reduces_to_naive_mixture():
    th = np.array([[1.0, 2.0, 0.0], [-1.0, 0.5, 0.0]])
    eta = np.array([[0.2, 0.5, -0.3], [0.0, 0.0, 0.0]])
    s = _state(th, [0.3, 0.0, 1.0], eta)
    g = np.linspace(-1.5, 1.5, 7)
    w = stick_break(KN.design(g) @ eta[:-1].T)
    naive = (w * (th[:, 0] + np.outer(g, th[:, 1]))).sum(axis=1)
    np.testing.assert_allclose(cerf_draw(s, g, KN, {"x": 0.7, "z": 1.1}),
                               naive, atol=1e-14)


def test_two_component_hand_value():
    # hand evaluation at x = 1 (segment 2): alpha = 0.1 + 0.4 * 1 = 0.5
    th = [[1.0, 2.0, 0.5], [0.0, -1.0, 2.0]]
    tw = [0.0, 0.6, 1.2]                 # ratio 0.5
    eta = [[0.1, 9.0, 0.4], [0.0, 0.0, 0.0]]
    mom = {"x": 2.0, "z": 1.0}
    w1 = 0.6914624612740131              # Phi(0.5)
    b1, c1 = 2.0 - 0.5 * 0.5, 1.0 + 0.5 * 1.0 + 0.5 * 0.5 * 2.0
    b2, c2 = -1.0 - 2.0 * 0.5, 0.0 + 2.0 * 1.0 + 2.0 * 0.5 * 2.0
    expected = w1 * (b1 + c1) + (1 - w1) * (b2 + c2)
    got = cerf_draw(_state(th, tw, eta), [1.0], KN, mom)
    assert abs(got[0] - expected) < 1e-12


@given(st.integers(0, 2**32 - 1))
def test_k1_bitwise_against_closed_form(seed):
    # single component: the curve is effect * x + intercept, bit for bit,
    # with the effect equal to the two-regression formula
    r = np.random.default_rng(seed)
    ty = r.normal(size=3)
    tw = r.normal(size=3)
    tw[2] = np.sign(tw[2]) * max(abs(tw[2]), 1e-3)
    mom = MomentCache({"x": float(r.normal()), "z": float(r.normal())})
    g = r.normal(size=5)
    v = cerf_draw(_state([ty], tw, [[0, 0, 0]]), g, KN, mom)
    slope = component_effect(ty, tw)
    assert slope == ty[1] - ty[2] * (tw[1] / tw[2])
    icpt = component_intercept(ty, tw, mom)
    assert np.array_equal(v, slope * g + icpt)


def test_affine_consistency():
    # the same posterior state expressed on raw and standardized scales
    # gives the same curve (single segment so the weight model maps exactly)
    r = np.random.default_rng(0)
    mx, sx, mz, sz, my, sy, mw, sw = 3.0, 2.0, -1.0, 0.5, 10.0, 4.0, 2.0, 3.0
    K = 3
    a = r.normal(size=(K, 3))
    c = r.normal(size=3)
    eta = r.normal(size=(K, 2))
    knots_s = KnotGrid([-2.0, 2.0])
    knots_r = KnotGrid([mx - 2 * sx, mx + 2 * sx])
    raw_y = np.column_stack([
        my + sy * (a[:, 0] - a[:, 1] * mx / sx - a[:, 2] * mz / sz),
        sy * a[:, 1] / sx, sy * a[:, 2] / sz])
    raw_w = np.array([mw + sw * (c[0] - c[1] * mx / sx - c[2] * mz / sz),
                      sw * c[1] / sx, sw * c[2] / sz])
    raw_eta = np.column_stack([eta[:, 0] - eta[:, 1] * mx / sx,
                               eta[:, 1] / sx])
    g = np.linspace(mx - 3 * sx, mx + 3 * sx, 25)
    std = cerf_draw(_state(a, c, eta), g, knots_s, {"x": 0.0, "z": 0.0},
                    transforms={"x": Affine(mx, sx), "y": Affine(my, sy)})
    raw = cerf_draw(_state(raw_y, raw_w, raw_eta), g, knots_r,
                    {"x": mx, "z": mz})
    np.testing.assert_allclose(std, raw, rtol=0, atol=1e-8)


def test_summarize_examples():
    d = np.tile(np.arange(1.0, 101.0)[:, None], (1, 2))
    med, bands = summarize(d)
    np.testing.assert_allclose(bands[0.95][0], 3.475)
    np.testing.assert_allclose(bands[0.95][1], 97.525)
    np.testing.assert_allclose(med, 50.5)
    med, bands = summarize(np.full((10, 3), 2.5))
    for lo, hi in bands.values():
        assert np.all(lo == 2.5) and np.all(hi == 2.5)
    with pytest.raises(ValidationError):
        summarize(np.ones((1, 3)))


@given(st.integers(0, 2**32 - 1))
def test_bands_nested(seed):
    d = np.random.default_rng(seed).standard_cauchy((50, 8))
    med, bands = summarize(d)
    lv = sorted(bands)
    for small, big in zip(lv[:-1], lv[1:]):
        assert np.all(bands[big][0] <= bands[small][0])
        assert np.all(bands[small][1] <= bands[big][1])
    assert np.all((bands[lv[0]][0] <= med) & (med <= bands[lv[0]][1]))


@pytest.fixture(scope="module")
def chain():
    data = make_dataset(300, seed=7, with_u=False)
    return run_chain(data, ModelConfig(K=4, n_knots=2, iterations=240,
                                       burn_in=40, seed=3))


def test_draw_failures_counted_and_dropped(chain):
    grid = np.linspace(-1, 1, 5)
    vals, nf = cerf_draws(chain, grid)
    assert nf == 0 and vals.shape == (100, 5)
    saved = chain.theta_w.copy()
    chain.theta_w[0, 2] = 1e-9
    try:
        vals, nf = cerf_draws(chain, grid)
        assert nf == 1 and vals.shape == (99, 5)
        chain.theta_w[:5, 2] = 1e-9
        with pytest.raises(IdentificationError, match="5 of 100"):
            cerf_draws(chain, grid)
    finally:
        chain.theta_w[:] = saved


def test_vectorised_draws_match_single(chain):
    grid = np.linspace(-2, 2, 11)
    vals, _ = cerf_draws(chain, grid)
    for i in (0, 37, 99):
        one = cerf_draw(chain.state(i), grid, chain.knots, chain.moments,
                        chain.mode, chain.y_names, chain.transforms)
        np.testing.assert_allclose(vals[i], one, rtol=1e-12, atol=1e-12)


def test_cerf_file_round_trip(chain, tmp_path):
    est = estimate_from_chain(chain, np.linspace(-1, 1, 6))
    assert est.meta["draws"] == 100 and est.meta["identification_failures"] == 0
    write_cerf(est, tmp_path / "c.csv", tmp_path / "c.json")
    header = (tmp_path / "c.csv").read_text().splitlines()[0].split(",")
    assert header == cerf_columns(est.levels) == [
        "x", "median", "lo_50", "hi_50", "lo_80", "hi_80", "lo_90", "hi_90",
        "lo_95", "hi_95"]
    back = read_cerf(tmp_path / "c.csv")
    assert back.label == "BNP-NC"
    np.testing.assert_array_equal(back.median, est.median)
    for lv in est.levels:
        np.testing.assert_array_equal(back.bands[lv][0], est.bands[lv][0])
