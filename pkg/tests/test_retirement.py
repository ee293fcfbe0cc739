import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from conftest import linear_path, make_path
from cpslab.errors import ContractError, ParameterError
from cpslab.pathgen import ModelSpec, SamplePath, TimeGrid, generate_brownian, generate_fbm
from cpslab.retirement import LadderParams, build_ladder, effective_epsilon, validate_sandwich
from cpslab.transforms import resolve


def test_params():
    p = LadderParams(0.2)
    assert p.barrier == math.log1p(0.2)
    with pytest.raises(ParameterError):
        LadderParams(0.0)
    with pytest.raises(ParameterError):
        LadderParams(0.1, "nearest")


def test_constant_path_retires_at_once():
    path = make_path(np.full(17, 0.3))
    lad = build_ladder(path, LadderParams(0.2))
    assert lad.taus.tolist() == [0.0, 1.0]
    assert lad.signs.tolist() == [0]
    assert lad.z_values[0] == math.exp(0.3)
    assert lad.retired_at == 1


def test_two_up_rungs_then_flat():
    b = math.log1p(0.2)
    path = linear_path([(0.0, 0.0), (0.5, 2 * b), (1.0, 2 * b)], n_steps=1024)
    lad = build_ladder(path, LadderParams(0.2))
    assert lad.taus[1] == pytest.approx(0.25, abs=1e-12)
    assert lad.taus[2] == pytest.approx(0.5, abs=1e-12)
    assert lad.taus[-1] == 1.0
    assert lad.signs.tolist() == [1, 1, 0]
    assert lad.z_values[1] == pytest.approx(1.2, rel=1e-15)
    assert lad.z_values[2] == pytest.approx(1.44, rel=1e-15)


def test_several_crossings_in_one_cell():
    b = math.log1p(0.1)
    path = make_path([0.0, 3.5 * b, 3.5 * b])
    lad = build_ladder(path, LadderParams(0.1))
    assert lad.signs.tolist() == [1, 1, 1, 0]
    assert np.allclose(lad.taus[1:4], [1 / 7, 2 / 7, 3 / 7], atol=1e-12)


@pytest.mark.parametrize("eps0", [1.0, 0.1, 0.05])
def test_effective_epsilon(eps0):
    assert effective_epsilon(eps0) == {1.0: 7.0, 0.1: 0.331, 0.05: 0.157625}[eps0]
    assert effective_epsilon(0) == 0.0


def _ladder_invariants(path, lad, params):
    b = params.barrier
    assert lad.taus[0] == 0.0 and lad.taus[-1] == path.grid.horizon
    assert np.all(np.diff(lad.taus[:-1]) > 0)
    assert lad.signs[-1] == 0 and np.all(lad.signs[:-1] != 0)
    assert np.array_equal(np.cumsum(np.concatenate([[0], lad.signs])), lad.levels)
    if params.crossing_mode == "interpolated":
        steps = np.abs(np.diff(lad.x_at_tau[:-1]))
        assert np.allclose(steps, b, rtol=0, atol=1e-12)
        logratio = lad.x_at_tau - lad.log_z
        assert np.all(np.abs(logratio) <= b)


@given(st.integers(0, 2**32), st.sampled_from([0.05, 0.1, 0.2, 0.5]), st.sampled_from(["interpolated", "grid_snap"]))
@settings(max_examples=60, deadline=None)
def test_ladder_invariants_on_brownian(seed, eps0, mode):
    path = generate_brownian(TimeGrid(1.0, 512), 1.0, 0.0, seed)
    params = LadderParams(eps0, mode)
    lad = build_ladder(path, params)
    _ladder_invariants(path, lad, params)
    rep = validate_sandwich(path, lad, params)
    assert rep.violations["anchor_to_price"] == 0
    assert rep.violations["rung_move"] == 0
    if mode == "interpolated":
        assert rep.ok
        assert rep.tolerance == 0.0
        moves = np.exp(lad.signs[:-1] * params.barrier)
        assert set(np.round(moves, 12)) <= {round(1 + eps0, 12), round(1 / (1 + eps0), 12)}
    else:
        assert rep.tolerance == rep.max_abs_increment


def test_grid_snap_overshoot_accumulates_in_walk_factor():
    # without snapping, Z_n / Y_tau_n drifts by the summed overshoot of all rungs
    path = generate_brownian(TimeGrid(1.0, 512), 1.0, 0.0, 0)
    params = LadderParams(0.05, "grid_snap")
    lad = build_ladder(path, params)
    rep = validate_sandwich(path, lad, params)
    drift = np.abs(path.values[0] + lad.levels * params.barrier - lad.x_at_tau).max()
    assert drift > params.barrier + rep.max_abs_increment
    assert rep.violations["walk_to_price"] > 0


def test_constant_path_sandwich_is_trivial():
    path = make_path(np.zeros(9))
    params = LadderParams(0.2)
    rep = validate_sandwich(path, build_ladder(path, params), params)
    assert rep.ok
    assert set(rep.factor_min.values()) == {1.0} and set(rep.factor_max.values()) == {1.0}
    assert rep.envelope == pytest.approx((1.2**-3, 1.2**3))


def test_sandwich_contract_errors():
    g = TimeGrid(1.0, 64)
    a = generate_brownian(g, 1.0, 0.0, 1)
    b = generate_brownian(g, 1.0, 0.0, 2)
    params = LadderParams(0.2)
    lad = build_ladder(a, params)
    with pytest.raises(ContractError):
        validate_sandwich(b, lad, params)
    with pytest.raises(ContractError):
        validate_sandwich(a, lad, LadderParams(0.1))


def test_fbm_sandwich_zero_violations():
    g = TimeGrid(1.0, 2**14)
    params = LadderParams(0.1)
    for seed in range(200):
        path = generate_fbm(g, 0.7, 1.0, 0.0, seed)
        assert validate_sandwich(path, build_ladder(path, params), params).ok


def test_retirement_is_absorbing():
    path = generate_brownian(TimeGrid(1.0, 256), 1.0, 0.0, 5)
    lad = build_ladder(path, LadderParams(0.3))
    zero = np.flatnonzero(lad.signs == 0)
    assert zero.tolist() == [len(lad.signs) - 1]
    assert lad.z_values[-1] == lad.z_values[-2]


@given(st.integers(0, 2**32), st.sampled_from([0.4, 0.2, 0.1]))
@settings(max_examples=80, deadline=None)
def test_halving_eps0_adds_rungs_on_brownian_paths(seed, eps0):
    path = generate_brownian(TimeGrid(1.0, 2048), 1.0, 0.0, seed)
    coarse = build_ladder(path, LadderParams(eps0)).n_rungs
    fine = build_ladder(path, LadderParams(eps0 / 2)).n_rungs
    assert fine >= coarse


def test_halving_eps0_is_not_pathwise_monotone():
    # Near log-level 2 the eps0 = 0.1 window (21 b', 23 b') holds two eps0 = 0.2
    # levels 11 b and 12 b, so oscillating between them adds coarse rungs only.
    b, bf = math.log1p(0.2), math.log1p(0.1)
    lo, hi = 11 * b - 0.001, 12 * b + 0.001
    assert 21 * bf < lo and hi < 23 * bf
    knots = [(0.0, 0.0), (0.2, 22 * bf)]
    t = 0.2
    for _ in range(10):
        knots += [(t + 0.02, lo), (t + 0.04, hi)]
        t += 0.04
    knots.append((1.0, hi))
    path = linear_path(knots, n_steps=4096)
    coarse = build_ladder(path, LadderParams(0.2)).n_rungs
    fine = build_ladder(path, LadderParams(0.1)).n_rungs
    assert coarse > fine


def _inverse_sigmoid_like(y):
    return brentq(lambda x: x + math.tanh(x) - y, y - 2.0, y + 2.0, xtol=1e-15, rtol=1e-15)


@given(st.integers(0, 2**32), st.sampled_from([0.1, 0.3]))
@settings(max_examples=40, deadline=None)
def test_monotone_transform_commutes_with_ladder(seed, eps0):
    f = resolve("monotone_sigmoid_like")
    raw = generate_brownian(TimeGrid(1.0, 256), 1.0, 0.0, seed)
    fx = SamplePath(raw.grid, f(raw.values), seed, "f(B)")
    params = LadderParams(eps0, "grid_snap")
    lad = build_ladder(fx, params)
    b = params.barrier

    # re-derive the signs from raw-path crossings of the pulled-back thresholds
    x = raw.values
    i, signs = 0, []
    while True:
        ref = f(x[i])
        up, down = _inverse_sigmoid_like(ref + b), _inverse_sigmoid_like(ref - b)
        hits = np.flatnonzero((x[i + 1 :] >= up) | (x[i + 1 :] <= down))
        if hits.size == 0:
            signs.append(0)
            break
        i = i + 1 + int(hits[0])
        if i == len(x) - 1:  # an exit at T itself is retirement
            signs.append(0)
            break
        signs.append(1 if x[i] >= up else -1)
    assert lad.signs.tolist() == signs


def test_json_export():
    path = generate_brownian(TimeGrid(1.0, 128), 1.0, 0.0, 3)
    js = build_ladder(path, LadderParams(0.2)).to_json()
    assert set(js) >= {"taus", "signs", "levels", "z_values"}
    assert js["signs"][-1] == 0
