"""Uniform grids and 2-D nonuniform block-maximum selection."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from broadbeam.errors import ShapeMismatch
from broadbeam.sampling import (PASSBAND, STOPBAND, WNG, BandSpec, GridConfig, SampleSet, allocate, axis_edges,
                                block_argmax, linspace_intervals, select_nonuniform, split_config, uniform_grid)


def brute_block_max(err, M, K):
    """Worst point of each block of an even M x K partition, by scanning every point."""
    P, Q = err.shape
    rb = [round(i * P / M) for i in range(M + 1)]
    cb = [round(j * Q / K) for j in range(K + 1)]
    out = []
    for i in range(M):
        for j in range(K):
            best, arg = -1.0, None
            for p in range(rb[i], rb[i + 1]):
                for q in range(cb[j], cb[j + 1]):
                    if abs(err[p, q]) > best:
                        best, arg = abs(err[p, q]), (p, q)
            out.append(arg)
    return out


def test_band_from_hz_deg(band):
    lo, hi = band.freq_band
    assert np.isclose(lo, 2 * np.pi * 1500 / 8000) and np.isclose(hi, 2 * np.pi * 3500 / 8000)
    assert np.allclose(band.passband, np.deg2rad([80, 100]))
    assert np.isclose(band.steer_angle, np.pi / 2)


@pytest.mark.parametrize("kw,msg", [
    (dict(passband_deg=(100, 80)), "passband"),
    (dict(stopband_deg=((0, 85),)), "overlaps"),
    (dict(steer_deg=120), "steer"),
    (dict(freq_hz=(3500, 1500)), "freq_band"),
])
def test_band_validation_names_the_problem(kw, msg):
    args = dict(freq_hz=(1500, 3500), passband_deg=(80, 100), stopband_deg=((0, 60), (120, 180)), steer_deg=90)
    args.update(kw)
    with pytest.raises(ValueError, match=msg):
        BandSpec.from_hz_deg(8000, **args)


def test_uniform_grid_layout(band):
    g = uniform_grid(band, 20, 30)
    s = g.samples
    assert s.count(PASSBAND) == 20 * 30 and s.count(STOPBAND) == 20 * 30 and s.count(WNG) == 20
    assert g.omegas[0] == band.freq_band[0] and g.omegas[-1] == band.freq_band[1]
    assert g.pass_thetas[0] == band.passband[0] and g.pass_thetas[-1] == band.passband[1]
    # stopband angles shared by width (60 and 60 degrees) and edges included
    assert np.isclose(g.stop_thetas[0], 0.0) and np.isclose(g.stop_thetas[-1], np.pi)
    p = s.select(PASSBAND)
    assert np.allclose(p.omega[:30], g.omegas[0]) and np.allclose(p.theta[:30], g.pass_thetas)
    with pytest.raises(ValueError):
        uniform_grid(band, 1, 5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=5), st.integers(10, 500))
def test_allocate_preserves_total(widths, total):
    counts = allocate(widths, total)
    assert sum(counts) == total and min(counts) >= 1


def test_linspace_intervals():
    pts, ids = linspace_intervals([(0.0, 1.0), (2.0, 5.0)], 40)
    assert len(pts) == 40 and set(ids) == {0, 1}
    assert np.sum(ids == 1) == 30
    assert pts[0] == 0.0 and pts[-1] == 5.0


@settings(max_examples=80, deadline=None)
@given(st.integers(4, 300), st.integers(2, 40), st.integers(0, 3))
def test_axis_edges_partition(length, blocks, edge):
    if blocks - 2 * edge < 1 or length - 2 * edge < blocks - 2 * edge:
        with pytest.raises(ValueError):
            axis_edges(length, blocks, edge)
        return
    e = axis_edges(length, blocks, edge)
    assert len(e) == blocks + 1 and e[0] == 0 and e[-1] == length
    assert np.all(np.diff(e) >= 1)
    if edge:
        assert np.all(np.diff(e)[:edge] == 1) and np.all(np.diff(e)[-edge:] == 1)


def test_block_argmax_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        err = rng.standard_normal((20, 20))
        p, q = block_argmax(err, axis_edges(20, 4, 0), axis_edges(20, 4, 0))
        assert list(zip(p, q)) == brute_block_max(err, 4, 4)


def test_select_nonuniform_matches_brute_force_oracle():
    rng = np.random.default_rng(8)
    cfg = GridConfig(P=20, Q=20, M=4, K=4, edge=0)
    om, th = np.linspace(0.5, 2.5, 20), np.linspace(0.1, 1.1, 20)
    for _ in range(25):
        err = rng.standard_normal((20, 20))
        s = select_nonuniform(err, cfg, om, th)
        want = brute_block_max(err, 4, 4)
        assert [tuple(ix) for ix in s.index] == want
        assert np.allclose(s.omega, om[[w[0] for w in want]]) and np.allclose(s.theta, th[[w[1] for w in want]])


def test_select_nonuniform_hits_global_max_and_edges():
    rng = np.random.default_rng(9)
    cfg = GridConfig(P=200, Q=500, M=22, K=52, edge=3)
    err = rng.random((200, 500))
    err[117, 311] = 5.0
    s = select_nonuniform(err, cfg)
    assert len(s) == 22 * 52
    assert (117, 311) in {tuple(ix) for ix in s.index}
    # unit-width edge blocks: every band-edge row and column is sampled
    rows = set(s.index[:, 0])
    assert {0, 1, 2, 197, 198, 199} <= rows
    with pytest.raises(ShapeMismatch):
        select_nonuniform(err[:10], cfg)


def test_split_config_shares_columns():
    cfg = GridConfig()
    parts = split_config(cfg, [np.pi / 3, np.pi / 3])
    assert sum(c.Q for c in parts) == cfg.Q and sum(c.K for c in parts) == cfg.K
    assert split_config(cfg, [1.0]) == [cfg]


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(mode="random")
    with pytest.raises(ValueError):
        GridConfig(P=10, M=22)
    with pytest.raises(ValueError):
        GridConfig(M=6, edge=3)


def test_sample_set_concat_and_select():
    a = SampleSet([1.0, 2.0], 0.5, PASSBAND, index=[[0, 0], [1, 0]])
    b = SampleSet([3.0], 0.7, STOPBAND, index=[[2, 1]])
    c = SampleSet.concat([a, b])
    assert len(c) == 3 and c.count(PASSBAND) == 2
    assert np.array_equal(c.select(STOPBAND).index, [[2, 1]])
    assert len(SampleSet.concat([])) == 0
