import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamsweep.array_model import ArrayGeometry, IsotropicPattern, Scene, SincPattern, Source, steering_vector, true_scm
from beamsweep.snapshots import RngStream, SnapshotBlock, estimate_beam_power, generate_snapshots
from beamsweep.sweep import (
    DiagonalityViolation,
    Reconstructor,
    TruncationPlan,
    build_sweep_matrix,
    compute_delta,
    export_lags_csv,
    export_matrix_csv,
    export_sweep_csv,
    full_sweep,
    grid_from_sines,
    lag_to_scm,
    make_grid,
    printed_delta,
    read_matrix_csv,
    reconstruct,
    scm_to_lag,
    statistical_powers,
    truncated_sweep,
)

doas = st.floats(-math.pi / 2, math.pi / 2)
scenes = st.builds(
    Scene,
    st.lists(st.builds(Source, doas, st.floats(0, 5)), max_size=4),
    st.floats(0, 2),
)


def random_toeplitz(rng, M):
    g = rng.standard_normal(2 * M - 1) + 1j * rng.standard_normal(2 * M - 1)
    g = 0.5 * (g + g[::-1].conj())
    return lag_to_scm(g), g


def test_grid_examples():
    g = make_grid(2)
    assert g.num_beams == 3
    np.testing.assert_allclose(g.sin_values, [-1, -1 / 3, 1 / 3])
    assert make_grid(16).num_beams == 31
    with pytest.raises(ValueError):
        make_grid(1)


@given(st.integers(2, 64))
def test_grid_uniform_in_sine(M):
    g = make_grid(M)
    assert g.num_beams == 2 * M - 1 and g.num_beams % 2 == 1
    np.testing.assert_allclose(np.diff(g.sin_values), 2 / g.num_beams)
    assert np.all(np.abs(g.angles) <= math.pi / 2)


def test_sweep_matrix_m2_by_hand():
    M = 2
    grid = make_grid(M)
    B = build_sweep_matrix(ArrayGeometry(M), grid).b_rows
    for row, s in zip(B, grid.sin_values):
        np.testing.assert_allclose(row, [np.exp(1j * np.pi * s), 2, np.exp(-1j * np.pi * s)], atol=1e-15)


def test_sweep_matrix_matches_pairwise_construction():
    # oracle: accumulate conj(a_m) a_n into lag m - n, one antenna pair at a time
    M = 5
    geom = ArrayGeometry(M)
    grid = make_grid(M)
    B = build_sweep_matrix(geom, grid).b_rows
    for q, th in enumerate(grid.angles):
        a = steering_vector(geom, th)
        row = np.zeros(2 * M - 1, dtype=complex)
        for m in range(M):
            for n in range(M):
                row[m - n + M - 1] += a[m].conj() * a[n]
        np.testing.assert_allclose(B[q], row, atol=1e-12)


@pytest.mark.parametrize("M", [2, 3, 8, 16])
def test_sweep_matrix_structure(M):
    B = build_sweep_matrix(ArrayGeometry(M), make_grid(M)).b_rows
    k = np.arange(-(M - 1), M)
    np.testing.assert_allclose(np.abs(B), np.broadcast_to(M - np.abs(k), B.shape), atol=1e-12)
    np.testing.assert_allclose(B[:, M - 1], M)


@pytest.mark.parametrize("seed", range(5))
def test_sweep_matrix_maps_lags_to_quadratic_forms(seed):
    rng = np.random.default_rng(seed)
    M = 16
    geom = ArrayGeometry(M)
    grid = make_grid(M)
    R, g = random_toeplitz(rng, M)
    p = np.array([np.vdot(a, R @ a) for a in (steering_vector(geom, t) for t in grid.angles)])
    B = build_sweep_matrix(geom, grid).b_rows
    np.testing.assert_allclose(B @ g, p, rtol=1e-10, atol=1e-10 * np.abs(p).max())


def test_delta_m2():
    d = compute_delta(build_sweep_matrix(ArrayGeometry(2), make_grid(2))).diag
    np.testing.assert_allclose(d, [3, 12, 3])


def test_delta_is_quadratic_in_lag_multiplicity_not_linear():
    for M in (2, 4, 16):
        d = compute_delta(build_sweep_matrix(ArrayGeometry(M), make_grid(M))).diag
        k = np.arange(-(M - 1), M)
        Q = 2 * M - 1
        np.testing.assert_allclose(d, Q * (M - np.abs(k)) ** 2)
        # the linear form only agrees at the outermost lags
        lin = printed_delta(M)
        assert lin[0] == d[0] and lin[-1] == d[-1]
        assert not np.allclose(lin, d)
    np.testing.assert_allclose(printed_delta(2), [3, 6, 3])


@pytest.mark.parametrize("M", [2, 4, 8, 16, 32])
def test_delta_diagonality_and_symmetry(M):
    B = build_sweep_matrix(ArrayGeometry(M), make_grid(M))
    d = compute_delta(B).diag
    np.testing.assert_allclose(d, d[::-1])
    G = B.b_rows.conj().T @ B.b_rows
    assert np.abs(G - np.diag(np.diag(G))).max() < 1e-9 * d.max()


@pytest.mark.parametrize("q", [0, 3, 15])
def test_perturbed_grid_breaks_diagonality(q):
    M = 16
    s = make_grid(M).sin_values.copy()
    s[q] *= 0.9
    with pytest.raises(DiagonalityViolation):
        compute_delta(build_sweep_matrix(ArrayGeometry(M), grid_from_sines(s)))


def test_non_half_wavelength_spacing_breaks_diagonality():
    M = 8
    with pytest.raises(DiagonalityViolation):
        compute_delta(build_sweep_matrix(ArrayGeometry(M, 0.4), make_grid(M)))


def test_truncation_plan_sets():
    plan = TruncationPlan(31, 5, 16.0)
    assert list(plan.kept_set) == list(range(3, 29))
    assert len(plan.kept_set) == 26
    assert list(TruncationPlan(31, 30, 16.0).kept_set) == [15]
    assert list(TruncationPlan(31, 0, 16.0).kept_set) == list(range(31))
    for bad in (-1, 31):
        with pytest.raises(ValueError):
            TruncationPlan(31, bad, 16.0)


@given(st.integers(1, 40).map(lambda m: 2 * m + 1), st.data())
def test_truncation_plan_sizes(Q, data):
    T = data.draw(st.integers(0, Q - 1))
    plan = TruncationPlan(Q, T, 1.0)
    kept = list(plan.kept_set)
    assert len(kept) + T == Q
    assert len(plan.truncated_set) == T
    assert kept == list(range(kept[0], kept[-1] + 1))
    # centred: the two truncated tails differ by at most one beam
    assert abs(kept[0] - (Q - 1 - kept[-1])) <= 1


def two_source_block(seed=0, N=500):
    scene = Scene((Source(0.0), Source(math.radians(40))), 1.0)
    return generate_snapshots(ArrayGeometry(16), SincPattern(1), scene, N, RngStream(seed))


def test_full_sweep_matches_per_beam_estimates():
    geom, grid = ArrayGeometry(16), make_grid(16)
    block = two_source_block()
    res = full_sweep(block, geom, grid)
    assert res.plan.num_truncated == 0 and len(res.plan.kept_set) == 31
    expected = [estimate_beam_power(block, geom, t) for t in grid.angles]
    np.testing.assert_allclose(res.powers, expected, rtol=1e-12)


def test_full_sweep_noise_only_and_zero():
    geom, grid = ArrayGeometry(16), make_grid(16)
    block = generate_snapshots(geom, IsotropicPattern(), Scene((), 2.0), 50_000, RngStream(4))
    np.testing.assert_allclose(full_sweep(block, geom, grid).powers, 32, rtol=0.05)
    zero = SnapshotBlock(np.zeros((16, 10)))
    assert not full_sweep(zero, geom, grid).powers.any()


@pytest.mark.parametrize("T", [0, 1, 5, 16, 30])
def test_truncated_sweep_agrees_with_full_on_kept_set(T):
    geom, grid = ArrayGeometry(16), make_grid(16)
    block = two_source_block(seed=T)
    full = full_sweep(block, geom, grid).powers
    res = truncated_sweep(block, geom, grid, T, 1.0)
    mask = res.plan.kept_mask()
    assert np.array_equal(res.powers[mask], full[mask])
    assert np.all(res.powers[~mask] == 16.0)
    assert mask.sum() == 31 - T


def test_truncated_sweep_rejects_bad_t():
    with pytest.raises(ValueError):
        truncated_sweep(two_source_block(), ArrayGeometry(16), make_grid(16), 31, 1.0)


def test_statistical_powers_noise_only():
    res = statistical_powers(ArrayGeometry(16), SincPattern(1), Scene((), 1.5), make_grid(16))
    np.testing.assert_allclose(res.powers, 24.0)
    assert res.source == "statistical"


def test_statistical_powers_on_grid_source_follow_dirichlet():
    from beamsweep.array_model import beam_gain_exact

    geom, grid = ArrayGeometry(16), make_grid(16)
    q0 = 20
    scene = Scene([Source(float(grid.angles[q0]))], 0.0)
    p = statistical_powers(geom, IsotropicPattern(), scene, grid).powers
    assert p[q0] == pytest.approx(256)
    expected = [beam_gain_exact(geom, t, grid.angles[q0]) for t in grid.angles]
    np.testing.assert_allclose(p, expected, rtol=1e-9, atol=1e-9)
    off = np.delete(p, q0)
    assert off.max() > 1e-3


@given(scenes, scenes)
def test_statistical_powers_additive(a, b):
    geom, grid, pat = ArrayGeometry(8), make_grid(8), SincPattern(1)
    pa = statistical_powers(geom, pat, Scene(a.sources), grid).powers
    pb = statistical_powers(geom, pat, Scene(b.sources), grid).powers
    pab = statistical_powers(geom, pat, Scene(a.sources + b.sources), grid).powers
    np.testing.assert_allclose(pab, pa + pb, atol=1e-9 * max(1, np.abs(pab).max()))


@given(scenes, st.sampled_from([2, 3, 7, 16]))
def test_exact_recovery(scene, M):
    geom = ArrayGeometry(M)
    rec = Reconstructor(geom)
    pattern = SincPattern(1)
    R = true_scm(geom, pattern, scene)
    R_hat = rec(statistical_powers(geom, pattern, scene, rec.grid))
    assert np.linalg.norm(R_hat - R) <= 1e-10 * max(np.linalg.norm(R), 1e-300)


def test_reconstruct_examples():
    rec = Reconstructor(ArrayGeometry(16))
    assert not rec(np.zeros(31)).any()
    np.testing.assert_allclose(rec(np.full(31, 16 * 0.7)), 0.7 * np.eye(16), atol=1e-10)


def test_reconstruct_dimension_mismatch():
    rec = Reconstructor(ArrayGeometry(16))
    with pytest.raises(ValueError):
        reconstruct(np.zeros(30), rec.B, rec.delta)


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_reconstruct_linear(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    rec = Reconstructor(ArrayGeometry(8))
    p1, p2 = rng.random(15), rng.random(15)
    lhs = rec(alpha * p1 + beta * p2)
    np.testing.assert_allclose(lhs, alpha * rec(p1) + beta * rec(p2), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_reconstruction_hermitian_toeplitz_under_noise(seed):
    rng = np.random.default_rng(seed)
    rec = Reconstructor(ArrayGeometry(8))
    R = rec(rng.random(15) * 10)
    np.testing.assert_allclose(R, R.conj().T, atol=1e-12)
    np.testing.assert_allclose(lag_to_scm(scm_to_lag(R)), R, atol=1e-12)


def test_lag_maps():
    g = np.zeros(7, dtype=complex)
    g[3] = 1
    np.testing.assert_array_equal(lag_to_scm(g), np.eye(4))
    np.testing.assert_array_equal(scm_to_lag(np.eye(4)), g)
    R, lags = random_toeplitz(np.random.default_rng(3), 5)
    np.testing.assert_allclose(scm_to_lag(R), lags)
    assert R[3, 1] == lags[2 + 4]  # gamma[m - n] with m - n = 2


def test_scm_to_lag_matches_closed_form():
    geom, pattern = ArrayGeometry(8), SincPattern(1.5)
    scene = Scene((Source(0.3, 2.0), Source(-1.0, 0.5)), 0.4)
    k = np.arange(-7, 8)
    expected = 0.4 * (k == 0).astype(complex)
    for s in scene.sources:
        expected = expected + s.power * pattern.power_gain(s.doa) * np.exp(1j * np.pi * math.sin(s.doa) * k)
    np.testing.assert_allclose(scm_to_lag(true_scm(geom, pattern, scene)), expected, atol=1e-12)


def test_scm_to_lag_averages_non_toeplitz():
    R = np.array([[1.0, 2.0], [3.0, 5.0]])
    np.testing.assert_allclose(scm_to_lag(R), [2.0, 3.0, 3.0])


def test_csv_exports(tmp_path):
    geom, grid = ArrayGeometry(4), make_grid(4)
    rec = Reconstructor(geom)
    scene = Scene((Source(0.2),), 1.0)
    res = statistical_powers(geom, SincPattern(1), scene, grid, T=2)
    R = rec(res)
    export_matrix_csv(R, tmp_path / "R.csv")
    np.testing.assert_array_equal(read_matrix_csv(tmp_path / "R.csv"), R)
    export_lags_csv(scm_to_lag(R), tmp_path / "lags.csv")
    lines = (tmp_path / "lags.csv").read_text().splitlines()
    assert lines[0] == "lag,re,im" and lines[1].startswith("-3,")
    export_sweep_csv(res, grid, tmp_path / "sweep.csv")
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "q,sin_value,power,kept"
    assert [r.split(",")[-1] for r in rows[1:]] == ["0", "1", "1", "1", "1", "1", "0"]
