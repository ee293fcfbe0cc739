import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpslab.errors import DegenerateEnsembleError, ParameterError
from cpslab.measure import (
    conditional_cps_values,
    expected_terminal,
    make_chain_measure,
    normalized_weights,
    reweight_ensemble,
    terminal_decomposition,
    weighted_mean_se,
)
from cpslab.pathgen import ModelSpec, TimeGrid, iter_ensemble
from cpslab.retirement import LadderParams, LadderResult, build_ladder


def synthetic_ladder(signs, eps0, seed=0, x0=0.0):
    """Ladder with the given non-retirement signs followed by retirement."""
    params = LadderParams(eps0)
    s = np.array(list(signs) + [0], dtype=np.int8)
    levels = np.concatenate([[0], np.cumsum(s)])
    n = len(levels)
    taus = np.linspace(0.0, 1.0, n)
    x = x0 + levels * params.barrier
    return LadderResult(taus, levels, s, x, np.exp(x), n - 1, params, seed, 16)


def test_worked_example():
    c = make_chain_measure(1.0, 1 / 3)
    assert c.q_plus == pytest.approx(2 / 9, abs=1e-16)
    assert c.q_minus == pytest.approx(4 / 9, abs=1e-16)
    assert c.q_zero == pytest.approx(1 / 3, abs=1e-16)
    assert abs(c.martingale_residual()) < 1e-15


def test_beta_to_one():
    c = make_chain_measure(0.3, 1 - 1e-12)
    assert c.q_plus < 1e-11 and c.q_minus < 1e-11


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.1, 1.5])
def test_beta_range(beta):
    with pytest.raises(ParameterError):
        make_chain_measure(0.2, beta)


def test_eps0_must_be_positive():
    with pytest.raises(ParameterError):
        make_chain_measure(0.0, 0.1)


@given(st.floats(1e-4, 10.0), st.floats(1e-4, 1 - 1e-4))
@settings(max_examples=300, deadline=None)
def test_chain_identities(eps0, beta):
    c = make_chain_measure(eps0, beta)
    assert abs(c.q_plus + c.q_minus + c.q_zero - 1.0) < 1e-14
    assert abs(c.martingale_residual()) < 1e-14
    assert min(c.q_plus, c.q_minus, c.q_zero) > 0


def test_chain_identities_on_100_random_chains():
    rng = np.random.default_rng(2)
    for eps0, beta in zip(rng.uniform(0.01, 2.0, 100), rng.uniform(0.01, 0.99, 100)):
        c = make_chain_measure(float(eps0), float(beta))
        assert abs(c.q_plus + c.q_minus + c.q_zero - 1.0) < 1e-14
        assert abs(c.martingale_residual()) < 1e-14


def test_expected_terminal_one_step():
    c = make_chain_measure(0.7, 0.25)
    assert expected_terminal(c, 3.0, 1) == pytest.approx(3.0, rel=1e-15)


def test_expected_terminal_long_horizon():
    c = make_chain_measure(0.5, 0.2)
    assert abs(expected_terminal(c, 1.0, 200) - 1.0) < 1e-10
    assert expected_terminal(c, 7.0, 200) == pytest.approx(7 * expected_terminal(c, 1.0, 200), rel=1e-13)


def test_alive_mass_decays_at_rate_one_minus_beta():
    c = make_chain_measure(0.5, 0.2)
    horizons = [25, 50, 100, 200]
    alive = [terminal_decomposition(c, 1.0, n)[1] for n in horizons]
    for n, a in zip(horizons, alive):
        assert a == pytest.approx(0.8**n, rel=1e-9)
    # doubling the horizon squares the remainder: log-ratio equals n log(1 - beta)
    for (n1, a1), (n2, a2) in zip(zip(horizons, alive), zip(horizons[1:], alive[1:])):
        assert math.log(a2 / a1) == pytest.approx((n2 - n1) * math.log(0.8), rel=1e-9)


def test_horizon_must_be_positive_integer():
    c = make_chain_measure(0.5, 0.2)
    with pytest.raises(ParameterError):
        expected_terminal(c, 1.0, 0)
    with pytest.raises(ParameterError):
        expected_terminal(c, 1.0, 2.5)


def _ladders_from_transitions(table, eps0):
    """Sign sequences realising exact follower counts {prev: [n_plus, n_minus, n_stop]}.

    Followers are drawn without replacement from a seeded shuffle; a draw that
    would stop while moves remain is retried with the next seed.
    """
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pools = {k: list(rng.permutation([1] * v[0] + [-1] * v[1] + [0] * v[2])) for k, v in table.items()}
        seqs = []
        while pools[0]:
            seq, prev = [], 0
            while pools[prev]:
                step = int(pools[prev].pop())
                if step == 0:
                    break
                seq.append(step)
                prev = step
            else:
                break  # ran out of followers mid-walk
            seqs.append(seq)
        if not any(pools.values()) and len(seqs) == sum(table[0]):
            return [synthetic_ladder(seq, eps0, i) for i, seq in enumerate(seqs)]
    raise AssertionError("no realisation found")


def test_identity_reweighting():
    # every state's follower frequencies are 2:4:3 = (q+, q-, q0) for eps0 = 1, beta = 1/3
    c = make_chain_measure(1.0, 1 / 3)
    table = {0: [6, 12, 9], 1: [4, 8, 6], -1: [8, 16, 12]}
    ladders = _ladders_from_transitions(table, 1.0)
    assert len(ladders) == 27
    w = reweight_ensemble(ladders, c, min_visits=1000)
    assert all(abs(pw.log_weight) < 1e-13 for pw in w)
    nw = normalized_weights(w)
    assert np.allclose(nw, 1 / 27, atol=1e-15)
    assert math.fsum(nw) == pytest.approx(1.0, abs=1e-15)


def test_single_path_is_degenerate():
    c = make_chain_measure(0.2, 0.1)
    with pytest.raises(DegenerateEnsembleError):
        reweight_ensemble([synthetic_ladder([1, -1, 1], 0.2)], c)
    with pytest.raises(DegenerateEnsembleError):
        reweight_ensemble([synthetic_ladder([1], 0.2)], c)
    # a path that retired at once carries no step frequency to estimate
    assert reweight_ensemble([synthetic_ladder([], 0.2)], c)[0].log_weight == pytest.approx(math.log(0.1))


def test_one_sided_state_is_degenerate():
    c = make_chain_measure(0.2, 0.1)
    ladders = [synthetic_ladder([1], 0.2, i) for i in range(5)]
    with pytest.raises(DegenerateEnsembleError):
        reweight_ensemble(ladders, c, min_visits=1)


def test_empty_ensemble():
    with pytest.raises(DegenerateEnsembleError):
        reweight_ensemble([], make_chain_measure(0.2, 0.1))


def test_eps0_mismatch():
    with pytest.raises(ParameterError):
        reweight_ensemble([synthetic_ladder([], 0.3)], make_chain_measure(0.2, 0.1))


def test_conditional_cps_values():
    c = make_chain_measure(0.2, 0.1)
    lad = synthetic_ladder([1, 1], 0.2, x0=0.4)
    z = conditional_cps_values(c, lad)
    assert np.array_equal(z, lad.z_values)
    z0 = math.exp(0.4)
    assert z[1] == pytest.approx(z0 * 1.2, rel=1e-15)
    assert z[2] == pytest.approx(z0 * 1.44, rel=1e-15)
    assert conditional_cps_values(c, synthetic_ladder([], 0.2)).tolist() == [1.0, 1.0]


def test_weighted_mean_se():
    m, se = weighted_mean_se(np.array([1.0, 3.0]), np.array([1.0, 1.0]))
    assert m == 2.0 and se == pytest.approx(math.sqrt(0.5))


@pytest.fixture(scope="module")
def brownian_ladders():
    params = LadderParams(0.2)
    grid = TimeGrid(1.0, 512)
    return [build_ladder(p, params) for p in iter_ensemble(ModelSpec("brownian"), grid, 100_000, 7)]


def test_reweighted_terminal_mean(brownian_ladders):
    c = make_chain_measure(0.2, 0.1)
    w = normalized_weights(reweight_ensemble(brownian_ladders, c))
    z = np.array([lad.z_values[-1] for lad in brownian_ladders])
    mean, se = weighted_mean_se(z, w)
    assert abs(mean - 1.0) < 2 * se


def test_reweighted_one_step_martingale(brownian_ladders):
    """Weighted E[Z_{n+1} | rung n alive at level k] equals Z at level k."""
    c = make_chain_measure(0.2, 0.1)
    w = normalized_weights(reweight_ensemble(brownian_ladders, c))
    g = 1.2
    stats = {}
    for wi, lad in zip(w, brownian_ladders):
        for lvl, s in zip(lad.levels[:-1], lad.signs):
            stats.setdefault(int(lvl), []).append((wi, g ** float(s)))
    checked = 0
    for lvl, obs in stats.items():
        if len(obs) < 200:
            continue
        wi, ratio = map(np.asarray, zip(*obs))
        mean, se = weighted_mean_se(ratio, wi)
        if se == 0:
            continue
        assert abs(mean - 1.0) < 3 * se, (lvl, mean, se)
        checked += 1
    assert checked >= 3
