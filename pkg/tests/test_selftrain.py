import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gstpinn import diffnet
from gstpinn.problems import PdeProblem
from gstpinn.selftrain import (
    PseudoState,
    SelfTrainError,
    arg_partition,
    fraction_count,
    generate_pseudo,
    pseudo_round,
)

from oracles import brute_round, take_count


def test_arg_partition_examples():
    assert set(arg_partition([0.5, 0.1, 0.9, 0.3], 0.5)) == {1, 3}
    assert list(arg_partition([0.5, 0.1, 0.9, 0.3], 0.5)) == [1, 3]
    assert list(arg_partition([3, 2, 1], 1 / 3)) == [2]
    assert list(arg_partition([0.1, 0.1, 0.2], 1 / 3)) == [0]
    # magnitudes, not signed values
    assert list(arg_partition([-5.0, 0.2, -0.1], 1 / 3)) == [2]


def test_arg_partition_errors():
    with pytest.raises(SelfTrainError):
        arg_partition([], 0.5)
    with pytest.raises(SelfTrainError):
        arg_partition([1.0], 0.0)
    with pytest.raises(SelfTrainError):
        arg_partition([1.0, np.nan], 0.5)


@settings(max_examples=200, deadline=None)
@given(vals=st.lists(st.integers(-5, 5), min_size=1, max_size=40), q=st.sampled_from([0.05, 0.1, 0.2, 0.29, 0.5, 1.0]))
def test_arg_partition_matches_full_sort(vals, q):
    v = [float(a) / 4 for a in vals]
    expect = sorted(range(len(v)), key=lambda j: (abs(v[j]), j))[:take_count(q, len(v))]
    assert list(arg_partition(v, q)) == expect


def test_fraction_count_floor():
    assert fraction_count(0.29, 100) == 29
    assert fraction_count(0.1, 5) == 1
    assert fraction_count(0.2, 100) == 20


def _fields(n_grad_rows, members, n=10):
    """Residuals and gradients where ``members`` are the best points of every filter."""
    res = np.linspace(1.0, 2.0, n)
    res[list(members)] = 1e-3
    grads = np.tile(np.linspace(1.0, 2.0, n), (n_grad_rows, 1))
    grads[:, list(members)] = 1e-3
    return res, grads


def test_r0_selects_on_first_round():
    s = PseudoState.empty(10, 2, q=1.0, r=0)
    res, g = _fields(2, [3])
    # q = 1: every point is a candidate and in every idx set, flags become 1 > 0
    s2, rep = pseudo_round(s, res, g, np.arange(10.0))
    assert s2.count == 10
    s = PseudoState.empty(100, 2, q=0.1, r=0)
    res, g = _fields(2, [7], n=100)
    s2, rep = pseudo_round(s, res, g, np.arange(100.0))
    assert list(rep.selected) == [7]
    assert s2.pseudo_points[7][1] == 7.0


def test_r2_selected_on_third_round_only():
    s = PseudoState.empty(100, 2, q=0.1, r=2)
    res, g = _fields(2, [5], n=100)
    vals = np.arange(100.0)
    for k in range(1, 4):
        s, rep = pseudo_round(s, res, g, vals + k)
        assert s.flags[0, 5] == k and s.flags[1, 5] == k
        assert (5 in rep.selected) == (k == 3)
    assert s.pseudo_points[5][1] == 5.0 + 3


def test_reset_prevents_selection():
    s = PseudoState.empty(100, 2, q=0.1, r=2)
    good_res, good_g = _fields(2, [5], n=100)
    bad_res, bad_g = _fields(2, [6], n=100)
    bad_res[5] = bad_g[:, 5] = 50.0
    vals = np.zeros(100)
    s, _ = pseudo_round(s, good_res, good_g, vals)
    s, _ = pseudo_round(s, good_res, good_g, vals)
    s, _ = pseudo_round(s, bad_res, bad_g, vals)
    assert s.flags[0, 5] == 0 and s.flags[1, 5] == 0
    for _ in range(2):
        s, rep = pseudo_round(s, good_res, good_g, vals)
        assert 5 not in rep.selected
    assert 5 not in s.pseudo_points


def test_latest_label_wins():
    s = PseudoState.empty(10, 1, q=1.0, r=0)
    res = np.ones(10)
    s, _ = pseudo_round(s, res, None, np.full(10, 1.0))
    s, _ = pseudo_round(s, res, None, np.full(10, 2.0))
    assert all(label == 2.0 for _, label in s.pseudo_points.values())


def test_non_finite_excluded():
    s = PseudoState.empty(20, 2, q=0.5, r=0)
    res = np.linspace(0.1, 1, 20)
    res[0] = np.nan
    vals = np.zeros(20)
    vals[1] = np.inf
    g = np.ones((2, 20))
    s2, rep = pseudo_round(s, res, g, vals)
    assert rep.n_excluded == 2
    assert 0 not in s2.pseudo_points and 1 not in s2.pseudo_points


def test_gradient_rows_must_match_flags():
    s = PseudoState.empty(10, 1)
    with pytest.raises(SelfTrainError):
        pseudo_round(s, np.ones(10), np.ones((2, 10)), np.ones(10))


def test_state_validation():
    with pytest.raises(SelfTrainError):
        PseudoState.empty(5, q=0.0)
    with pytest.raises(SelfTrainError):
        PseudoState.empty(5, r=-1)
    with pytest.raises(SelfTrainError):
        PseudoState.empty(5, p=0)
    assert PseudoState.empty(5, p=math.inf).p == math.inf


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), r=st.integers(0, 2), q=st.sampled_from([0.1, 0.2, 0.3, 0.5]))
def test_round_matches_brute_force(seed, r, q):
    rng = np.random.default_rng(seed)
    n = 60
    s = PseudoState.empty(n, 2, q=q, r=r)
    bflags = [[0] * n, [0] * n]
    bpseudo = {}
    # drifting fields so some points persist
    base_res, base_g = rng.normal(size=n), rng.normal(size=(2, n))
    for k in range(5):
        res = base_res + 0.3 * rng.normal(size=n)
        g = base_g + 0.3 * rng.normal(size=(2, n))
        vals = rng.normal(size=n)
        s, rep = pseudo_round(s, res, g, vals, iteration=k)
        bflags, sel, labels, idx = brute_round(bflags, list(res), [list(g[0]), list(g[1])], list(vals), q, r)
        bpseudo.update(labels)
        assert list(rep.selected) == sel
        assert s.flags.tolist() == bflags
        assert {j: lab for j, (_, lab) in s.pseudo_points.items()} == bpseudo
        assert rep.n_selected <= take_count(q, take_count(q, n))


def test_single_filter_mode_matches_brute_force():
    rng = np.random.default_rng(1)
    n = 50
    s = PseudoState.empty(n, 1, q=0.2, r=1)
    bflags = [[0] * n]
    base = rng.normal(size=n)
    for k in range(4):
        res = base + 0.2 * rng.normal(size=n)
        vals = rng.normal(size=n)
        s, rep = pseudo_round(s, res, None, vals)
        bflags, sel, _, _ = brute_round(bflags, list(res), None, list(vals), 0.2, 1)
        assert list(rep.selected) == sel


def test_generate_pseudo_labels_are_network_values():
    prob = PdeProblem.default("burgers")
    params = diffnet.init_params((2, 6, 1), 0)
    pts = np.random.default_rng(0).uniform(0.05, 0.95, (40, 2))
    s = PseudoState.empty(40, 2, q=0.5, r=0)
    s, rep = generate_pseudo(s, params, prob, pts, iteration=500)
    assert rep.iteration == 500 and rep.n_candidates == 20
    assert rep.n_selected >= 1
    for j, (coords, label) in s.pseudo_points.items():
        assert coords == tuple(pts[j])
        assert label == pytest.approx(diffnet.forward(params, pts[j]), abs=1e-14)
    st1 = PseudoState.empty(40, 1, q=0.5, r=0)
    st1, rep1 = generate_pseudo(st1, params, prob, pts, gradient_filter=False)
    assert rep1.n_selected == 20


def test_pseudo_labels_frozen_after_param_change():
    prob = PdeProblem.default("fisher")
    params = diffnet.init_params((2, 6, 1), 0)
    pts = np.random.default_rng(1).uniform(0.05, 0.95, (30, 2))
    s, _ = generate_pseudo(PseudoState.empty(30, 2, q=0.5, r=0), params, prob, pts)
    before = dict(s.pseudo_points)
    mask, labels = s.dense()
    _ = diffnet.init_params((2, 6, 1), 9)
    assert s.pseudo_points == before
    assert mask.sum() == s.count
    assert all(labels[j] == lab for j, (_, lab) in before.items())
