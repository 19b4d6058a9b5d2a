import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsamp import (
    DiffusionModel,
    MetricError,
    RecoveryConfig,
    RecoveryError,
    SamplingPlan,
    TimeGrid,
    allocate_budget,
    apply_sampling,
    build_dictionary,
    build_laplacian,
    build_measurement,
    cosamp,
    draw_samples,
    eigendecompose,
    embed,
    error_ratio,
    gen_cycle,
    hard_threshold,
    optimal_distribution,
    random_sparse_signal,
    recover_signal,
    relative_error,
    sample_and_recover,
    support_least_squares,
    synth_signal,
)
from dynsamp.harness import estimate_rip
from dynsamp.recovery import top_index_set


@pytest.mark.parametrize("v,s,expected", [
    ([3, -5, 1, 0], 2, [3, -5, 0, 0]),
    ([2, -2, 0], 1, [2, 0, 0]),
    ([1, 2, 3], 0, [0, 0, 0]),
    ([1, 2, 3], 5, [1, 2, 3]),
])
def test_hard_threshold_examples(v, s, expected):
    assert hard_threshold(np.array(v, dtype=float), s).tolist() == expected


@pytest.mark.parametrize("v,r,expected", [
    ([0.1, -9, 3], 2, [1, 2]),
    ([1, 1, 1, 1], 2, [0, 1]),
    ([4, 5], 7, [0, 1]),
])
def test_top_index_set_examples(v, r, expected):
    assert top_index_set(np.array(v, dtype=float), r).tolist() == expected


def test_least_squares_examples():
    z = support_least_squares(np.eye(3), np.array([4.0, 5.0, 6.0]), [0, 2])
    assert z.tolist() == [4, 0, 6]
    assert not support_least_squares(np.eye(3), np.ones(3), []).any()
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((10, 4)))
    y = np.random.default_rng(1).standard_normal(10)
    np.testing.assert_allclose(support_least_squares(Q, y, [1, 3])[[1, 3]], Q[:, [1, 3]].T @ y, atol=1e-12)
    A = np.random.default_rng(2).standard_normal((12, 6))
    w = np.array([0.0, 1.5, 0.0, -2.0, 0.0, 0.0])
    np.testing.assert_allclose(support_least_squares(A, A @ w, [1, 3]), w, atol=1e-10)


def test_least_squares_rank_deficient_is_minimum_norm():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    z = support_least_squares(A, np.array([2.0, 2.0]), [0, 1])
    np.testing.assert_allclose(z, [1.0, 1.0])


def test_cosamp_zero_measurements():
    res = cosamp(np.random.default_rng(0).standard_normal((8, 5)), np.zeros(8), RecoveryConfig(2))
    assert not res.code.coeffs.any() and res.iterations == 1 and res.converged


def test_cosamp_two_path_full_sampling(path2):
    basis, model, d = path2
    phi = build_measurement(d, SamplingPlan.full(2, 2))
    traj = embed(basis.U[:, 1], basis, model, d.grid)
    res = cosamp(phi, traj, RecoveryConfig(1))
    np.testing.assert_allclose(res.code.coeffs, [0, d.fvals[1]], atol=1e-12)
    assert res.residuals[-1] <= 1e-10


def test_cosamp_random_well_conditioned():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((64, 32)) / 8
    c = np.zeros(32)
    c[[4, 17, 29]] = [1.0, -0.7, 2.2]
    res = cosamp(A, A @ c, RecoveryConfig(3))
    np.testing.assert_allclose(res.code.coeffs, c, atol=1e-8)
    assert res.code.support.tolist() == [4, 17, 29]


@pytest.mark.parametrize("seed", range(5))
def test_cosamp_orthonormal_one_pass(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 12)))
    c = np.zeros(12)
    c[rng.choice(12, 3, replace=False)] = rng.standard_normal(3)
    res = cosamp(Q, Q @ c, RecoveryConfig(3))
    assert res.iterations == 1
    np.testing.assert_allclose(res.code.coeffs, c, atol=1e-10)


def test_cosamp_clamps_candidate_set():
    Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((6, 3)))
    c = np.array([1.0, -1.0, 0.5])
    res = cosamp(Q, Q @ c, RecoveryConfig(2))
    assert np.count_nonzero(res.code.coeffs) <= 2


def test_cosamp_dimension_mismatch():
    with pytest.raises(RecoveryError):
        cosamp(np.ones((4, 3)), np.ones(5), RecoveryConfig(1))


@pytest.mark.parametrize("kw", [dict(s=0), dict(s=1, max_iter=0), dict(s=1, residual_tol=-1.0)])
def test_config_validation(kw):
    with pytest.raises(RecoveryError):
        RecoveryConfig(**kw)


def _exhaustive(phi, y, s):
    best, arg = np.inf, None
    k = phi.shape[1]
    for S in itertools.combinations(range(k), s):
        z, *_ = np.linalg.lstsq(phi[:, S], y, rcond=None)
        r = np.linalg.norm(y - phi[:, S] @ z)
        if r < best - 1e-12:
            best, arg = r, np.zeros(k)
            arg[list(S)] = z
    return arg


def _oracle_instance(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(6, 13))
    s = int(rng.integers(1, 3))
    m = 80 * k
    phi = rng.standard_normal((m, k)) / np.sqrt(m)
    assert estimate_rip(phi, min(4 * s, k)).delta < 0.4
    c = np.zeros(k)
    c[rng.choice(k, s, replace=False)] = rng.standard_normal(s) + np.sign(rng.standard_normal(s))
    return rng, phi, c, s


@pytest.mark.parametrize("seed", range(12))
def test_cosamp_matches_exhaustive_search(seed):
    _, phi, c, s = _oracle_instance(seed)
    y = phi @ c
    np.testing.assert_allclose(cosamp(phi, y, RecoveryConfig(s)).code.coeffs, _exhaustive(phi, y, s), atol=1e-8)


@pytest.mark.parametrize("seed", range(12))
def test_cosamp_noisy_support_matches_exhaustive_search(seed):
    # no refit after pruning, so values agree only to the order of the noise
    rng, phi, c, s = _oracle_instance(seed)
    w = 1e-3 * rng.standard_normal(phi.shape[0])
    got = cosamp(phi, phi @ c + w, RecoveryConfig(s)).code.coeffs
    best = _exhaustive(phi, phi @ c + w, s)
    assert np.flatnonzero(got).tolist() == np.flatnonzero(best).tolist()
    assert np.linalg.norm(got - best) <= np.linalg.norm(w)


def test_noise_robustness_ladder():
    rng = np.random.default_rng(7)
    phi = rng.standard_normal((120, 20)) / np.sqrt(120)
    c = np.zeros(20)
    c[[2, 11]] = [1.0, -1.5]
    w = rng.standard_normal(120)
    errs, ratios = [], []
    for scale in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6):
        res = cosamp(phi, phi @ c + scale * w, RecoveryConfig(2))
        e = np.linalg.norm(res.code.coeffs - c)
        errs.append(e)
        ratios.append(e / np.linalg.norm(scale * w))
    assert errs == sorted(errs, reverse=True)
    assert np.all(np.isfinite(ratios)) and max(ratios) < 10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_output_sparsity_property(seed, s):
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((15, 10))
    res = cosamp(phi, rng.standard_normal(15), RecoveryConfig(s))
    assert np.count_nonzero(res.code.coeffs) <= s
    assert len(res.residuals) == res.iterations <= 20


def test_cosamp_is_bitwise_deterministic():
    rng = np.random.default_rng(9)
    phi, y = rng.standard_normal((40, 16)), rng.standard_normal(40)
    a, b = cosamp(phi, y, RecoveryConfig(3)), cosamp(phi, y, RecoveryConfig(3))
    assert np.array_equal(a.code.coeffs, b.code.coeffs) and a.residuals == b.residuals


@pytest.fixture(scope="module")
def ring():
    b = eigendecompose(build_laplacian(gen_cycle(64)))
    model = DiffusionModel.heat(1.0)
    d = build_dictionary(b, model, 16, TimeGrid.regular(4))
    dist, prof = optimal_distribution(d)
    return b, model, d, dist, prof


def test_recover_signal_end_to_end(ring):
    b, model, d, dist, prof = ring
    x, _ = random_sparse_signal(b, 16, 3, np.random.default_rng(0))
    plan = draw_samples(dist, allocate_budget(prof, 80), seed=1)
    y, y_tilde = apply_sampling(embed(x, b, model, d.grid), plan)
    res = recover_signal(y_tilde, plan, d, b, RecoveryConfig(3))
    assert relative_error(x, res.x_hat) <= 0.01
    raw = recover_signal(y, plan, d, b, RecoveryConfig(3), reweighted=False)
    np.testing.assert_allclose(raw.x_hat, res.x_hat, atol=1e-12)
    zero = recover_signal(np.zeros(80), plan, d, b, RecoveryConfig(3))
    assert not zero.x_hat.any()
    with pytest.raises(RecoveryError):
        recover_signal(np.zeros(79), plan, d, b, RecoveryConfig(3))


def test_underestimated_sparsity_gives_best_approximation(ring):
    b, model, d, _, _ = ring
    x, code = synth_signal(b, 16, [1, 5, 9], [3.0, 1.0, 0.2])
    plan = SamplingPlan.full(64, 4)
    res = recover_signal(embed(x, b, model, d.grid), plan, d, b, RecoveryConfig(2))
    target = hard_threshold(d.fvals * code.coeffs, 2)
    np.testing.assert_allclose(res.code.coeffs, target, atol=1e-10)
    assert res.residuals[-1] > 0


def test_sample_and_recover_reports_psi_e(ring):
    b, model, d, dist, prof = ring
    x, _ = random_sparse_signal(b, 16, 2, np.random.default_rng(5))
    plan = draw_samples(dist, allocate_budget(prof, 120), seed=6)
    noise = np.random.default_rng(7).uniform(-1e-3, 1e-3, size=d.T * d.n)
    res, psi_e = sample_and_recover(x, b, model, d, plan, RecoveryConfig(2), noise)
    np.testing.assert_allclose(psi_e, plan.flat_weights() * noise[plan.rows()])
    assert relative_error(x, res.x_hat) <= 10 * np.linalg.norm(psi_e)
    clean, zero = sample_and_recover(x, b, model, d, plan, RecoveryConfig(2))
    assert not zero.any() and relative_error(x, clean.x_hat) < 1e-10


def test_result_json(tmp_path, ring):
    b, model, d, dist, prof = ring
    x, _ = synth_signal(b, 16, [0, 3], [1.0, -1.0])
    res = recover_signal(embed(x, b, model, d.grid), SamplingPlan.full(64, 4), d, b, RecoveryConfig(2))
    res.save(tmp_path / "result.json")
    data = json.loads((tmp_path / "result.json").read_text())
    assert set(data) >= {"code", "x_hat", "residuals", "iterations", "converged"}
    assert [pair[0] for pair in data["code"]] == [1, 4]
    assert len(data["x_hat"]) == 64 and data["converged"] is True


@pytest.mark.parametrize("x,x_hat,expected", [([3, 4], [3, 4], 0.0), ([3, 4], [0, 0], 1.0), ([3, 4], [0, 4], 0.6)])
def test_relative_error_examples(x, x_hat, expected):
    assert relative_error(np.array(x, float), np.array(x_hat, float)) == pytest.approx(expected)


def test_error_ratio_examples():
    x = np.array([1.0, 0.0])
    assert error_ratio(x, x, 0.3) == 0
    assert error_ratio(x, np.array([1.0, 0.2]), 0.2) == pytest.approx(1.0)
    assert error_ratio(x, np.array([1.05, 0.0]), 0.1) == pytest.approx(0.5)


def test_metrics_reject_zero_denominators():
    with pytest.raises(MetricError):
        relative_error(np.zeros(3), np.ones(3))
    with pytest.raises(MetricError):
        error_ratio(np.ones(3), np.ones(3), 0.0)
