import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cpslab.errors import ConfigurationError, NumericalError, ParameterError
from cpslab.pathgen import (
    Ensemble,
    ModelSpec,
    SamplePath,
    TimeGrid,
    derive_seed,
    fbm_covariance,
    generate_brownian,
    generate_ensemble,
    generate_fbm,
    read_ensemble,
    regenerate,
    simulate_ensemble,
    write_ensemble,
    write_path_csv,
)


def test_grid_times():
    g = TimeGrid(2.0, 8)
    assert g.times[0] == 0.0 and g.times[-1] == 2.0
    assert np.all(np.diff(g.times) > 0)
    assert g.dt == 0.25


@pytest.mark.parametrize("n", [0, 1])
def test_grid_rejects_short(n):
    with pytest.raises(ParameterError):
        TimeGrid(1.0, n)


def test_brownian_starts_at_x0():
    g = TimeGrid(1.0, 64)
    assert generate_brownian(g, 1.0, 0.0, 5).values[0] == 0.0
    assert generate_brownian(g, 2.0, 1.5, 5).values[0] == 1.5


def test_brownian_rejects_bad_sigma():
    with pytest.raises(ParameterError):
        generate_brownian(TimeGrid(1.0, 8), 0.0, 0.0, 1)


def test_brownian_deterministic():
    g = TimeGrid(1.0, 256)
    a = generate_brownian(g, 1.0, 0.0, 123)
    b = generate_brownian(g, 1.0, 0.0, 123)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, generate_brownian(g, 1.0, 0.0, 124).values)


def test_brownian_terminal_variance():
    g = TimeGrid(1.0, 2**14)
    ens = simulate_ensemble(ModelSpec("brownian"), g, 10_000, 2024)
    var = ens.values[:, -1].var(ddof=1)
    assert 0.97 <= var <= 1.03


def test_fbm_rejects_bad_hurst():
    for h in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ParameterError):
            generate_fbm(TimeGrid(1.0, 8), h, 1.0, 0.0, 1)


def test_fbm_terminal_variance():
    ens = simulate_ensemble(ModelSpec("fractional_brownian", hurst=0.7), TimeGrid(1.0, 512), 10_000, 77)
    var = ens.values[:, -1].var(ddof=1)
    assert abs(var - 1.0) < 0.03


@pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7])
def test_fbm_covariance_matches_closed_form(hurst):
    g = TimeGrid(1.0, 256)
    ens = simulate_ensemble(ModelSpec("fractional_brownian", hurst=hurst), g, 10_000, 31)
    idx = np.linspace(32, 256, 8).astype(int)
    x = ens.values[:, idx]
    t = g.times[idx]
    n = x.shape[0]
    for a in range(8):
        for b in range(a, 8):
            prod = x[:, a] * x[:, b]
            se = prod.std(ddof=1) / np.sqrt(n)
            assert abs(prod.mean() - fbm_covariance(t[a], t[b], hurst)) < 4 * se


def test_fbm_half_matches_brownian_increments():
    g = TimeGrid(1.0, 128)
    fbm = simulate_ensemble(ModelSpec("fractional_brownian", hurst=0.5), g, 4000, 1)
    bm = simulate_ensemble(ModelSpec("brownian"), g, 4000, 2)
    inc_f = np.diff(fbm.values, axis=1)
    inc_b = np.diff(bm.values, axis=1)
    # equal variances of one increment (Levene) ...
    assert stats.levene(inc_f[:, 10], inc_b[:, 10]).pvalue > 0.01
    # ... and disjoint increments uncorrelated
    r = np.corrcoef(inc_f[:, 3], inc_f[:, 70])[0, 1]
    assert abs(r) < 3 / np.sqrt(4000)


def test_fbm_deterministic_and_finite():
    g = TimeGrid(1.0, 1000)
    a = generate_fbm(g, 0.3, 1.0, 0.0, 9)
    b = generate_fbm(g, 0.3, 1.0, 0.0, 9)
    assert np.array_equal(a.values, b.values)
    assert np.all(np.isfinite(a.values))


def test_model_spec_invariants():
    with pytest.raises(ParameterError):
        ModelSpec("brownian", hurst=0.7)
    with pytest.raises(ParameterError):
        ModelSpec("fractional_brownian")
    with pytest.raises(ParameterError):
        ModelSpec("transformed")
    with pytest.raises(ParameterError):
        ModelSpec("brownian", transform_id="identity")


def test_ensemble_distinct_seeds():
    paths = generate_ensemble(ModelSpec("brownian"), TimeGrid(1.0, 16), 3, 0)
    assert len({p.seed for p in paths}) == 3


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**20))
@settings(max_examples=200, deadline=None)
def test_seed_derivation_injective_in_index(base, i):
    assert derive_seed(base, i) != derive_seed(base, i + 1)


def test_identity_transform_keeps_driver():
    g = TimeGrid(1.0, 64)
    raw = simulate_ensemble(ModelSpec("brownian"), g, 5, 3)
    tr = simulate_ensemble(ModelSpec("transformed", transform_id="identity"), g, 5, 3)
    assert np.array_equal(raw.values, tr.values)
    assert np.array_equal(tr.driver, raw.values)


def test_transform_applied_pointwise():
    g = TimeGrid(1.0, 64)
    raw = simulate_ensemble(ModelSpec("brownian"), g, 4, 8)
    tr = simulate_ensemble(ModelSpec("transformed", transform_id="piecewise_ex3"), g, 4, 8)
    expected = np.where(raw.values >= -1, np.abs(raw.values), raw.values + 2)
    assert np.array_equal(tr.values, expected)


def test_unknown_transform_is_configuration_error():
    with pytest.raises(ConfigurationError):
        generate_ensemble(ModelSpec("transformed", transform_id="nope"), TimeGrid(1.0, 8), 1, 0)


def test_ensemble_reproducible():
    spec = ModelSpec("fractional_brownian", hurst=0.7)
    g = TimeGrid(1.0, 64)
    a = simulate_ensemble(spec, g, 6, 42)
    b = simulate_ensemble(spec, g, 6, 42)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.seeds, b.seeds)


def test_regenerate_from_seed():
    spec = ModelSpec("transformed", transform_id="cubic_plus_square", sigma=0.5)
    g = TimeGrid(1.0, 64)
    ens = simulate_ensemble(spec, g, 4, 5)
    p = regenerate(spec, g, int(ens.seeds[2]))
    assert np.array_equal(p.values, ens.values[2])


def test_sample_path_validation():
    g = TimeGrid(1.0, 4)
    with pytest.raises(ParameterError):
        SamplePath(g, np.zeros(4), 0, "x")
    with pytest.raises(NumericalError):
        SamplePath(g, np.array([0, 1, np.nan, 0, 0.0]), 0, "x")


def test_value_at_interpolates():
    g = TimeGrid(1.0, 2)
    p = SamplePath(g, np.array([0.0, 1.0, -1.0]), 0, "x")
    assert p.value_at(0.25) == 0.5
    assert p.value_at(0.75) == 0.0


def test_csv_export(tmp_path):
    p = generate_brownian(TimeGrid(1.0, 10), 1.0, 0.0, 4)
    target = tmp_path / "p.csv"
    write_path_csv(p, target)
    lines = target.read_text().splitlines()
    assert lines[0] == "t,value"
    data = np.loadtxt(target, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], p.values)
    assert np.array_equal(data[:, 0], p.grid.times)


def test_binary_round_trip(tmp_path):
    paths = generate_ensemble(ModelSpec("fractional_brownian", hurst=0.3), TimeGrid(2.0, 32), 5, 6)
    target = tmp_path / "e.bin"
    write_ensemble(paths, target)
    assert target.read_bytes()[:8] == b"CPSLENS\x00"
    back = read_ensemble(target)
    assert len(back) == 5
    for a, b in zip(paths, back):
        assert a.seed == b.seed and a.model_tag == b.model_tag
        assert np.array_equal(a.values, b.values)
        assert a.grid == b.grid


def test_binary_rejects_foreign_file(tmp_path):
    target = tmp_path / "junk.bin"
    target.write_bytes(b"\x00" * 64)
    with pytest.raises(ConfigurationError):
        read_ensemble(target)


def test_ensemble_from_paths_round_trip():
    paths = generate_ensemble(ModelSpec("brownian"), TimeGrid(1.0, 16), 3, 1)
    ens = Ensemble.from_paths(paths)
    assert ens.n_paths == 3
    assert np.array_equal(ens.path(1).values, paths[1].values)
