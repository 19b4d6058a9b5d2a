import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsamp import (
    DiffusionModel,
    FilterDomainError,
    MultiplicityError,
    SparseSpectralCode,
    SpectralBasis,
    SpectralError,
    TimeGrid,
    build_dictionary,
    build_laplacian,
    code_to_vertex,
    cycle_fourier_basis,
    diffusion_eigenvalues,
    eigendecompose,
    embed,
    evolve,
    f_norms,
    gen_community,
    gen_cycle,
    gen_path,
    random_sparse_signal,
    synth_signal,
)
from dynsamp.spectral import _canonical_cluster, _fix_signs, load_signal, save_dictionary_csv, save_signal

LN2_HALF = np.log(2) / 2


def basis_of(g):
    return eigendecompose(build_laplacian(g))


def test_two_path_eigenpairs():
    b = basis_of(gen_path(2))
    np.testing.assert_allclose(b.sigma, [0, 2], atol=1e-15)
    r = 1 / np.sqrt(2)
    np.testing.assert_allclose(b.U, [[r, r], [r, -r]], atol=1e-15)


def test_single_node():
    b = eigendecompose(np.zeros((1, 1)))
    assert b.sigma.tolist() == [0.0] and b.U.tolist() == [[1.0]]


def test_cycle4_spectrum_and_orthonormality():
    b = basis_of(gen_cycle(4))
    np.testing.assert_allclose(b.sigma, [0, 2, 2, 4], atol=1e-12)
    assert np.abs(b.U.T @ b.U - np.eye(4)).max() <= 1e-10


@pytest.mark.parametrize("g", [gen_cycle(12), gen_path(9), gen_community((6, 10), 0.8, 0.1, 2)])
def test_eigendecompose_contract(g):
    L = build_laplacian(g)
    b = eigendecompose(L)
    assert np.all(np.diff(b.sigma) >= 0) and b.sigma[0] >= 0
    assert np.abs(b.U.T @ b.U - np.eye(g.n)).max() <= 1e-10
    assert np.abs(b.U @ np.diag(b.sigma) @ b.U.T - L).max() <= 1e-8 * np.abs(L).max()
    mags = np.abs(b.U)
    for j in range(g.n):
        lead = np.flatnonzero(mags[:, j] >= mags[:, j].max() - 1e-12)[0]
        assert b.U[lead, j] >= 0


def test_eigendecompose_is_repeatable():
    L = build_laplacian(gen_cycle(32))
    a, b = eigendecompose(L), eigendecompose(L)
    assert np.array_equal(a.U, b.U) and np.array_equal(a.sigma, b.sigma)


@pytest.mark.parametrize("seed", range(5))
def test_cluster_basis_ignores_solver_rotation(seed):
    b = basis_of(gen_cycle(10))
    pair = b.U[:, 1:3]                      # sigma_2 = sigma_3 on the ring
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((2, 2)))
    again = _fix_signs(_canonical_cluster(pair @ Q))
    np.testing.assert_allclose(again, pair, atol=1e-12)


def test_disconnected_graph_refused():
    L2 = np.zeros((4, 4))
    L2[:2, :2] = [[1, -1], [-1, 1]]
    L2[2:, 2:] = [[1, -1], [-1, 1]]
    with pytest.raises(MultiplicityError):
        eigendecompose(L2)
    assert eigendecompose(L2, allow_disconnected=True).sigma[1] == 0


@pytest.mark.parametrize("M", [np.ones((2, 3)), np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[-1.0, 0], [0, 1.0]])])
def test_eigendecompose_rejects_bad_input(M):
    with pytest.raises(SpectralError):
        eigendecompose(M)


def test_fourier_basis_is_unitary_and_flat():
    b = cycle_fourier_basis(16)
    assert np.abs(b.U.conj().T @ b.U - np.eye(16)).max() <= 1e-12
    np.testing.assert_allclose(np.abs(b.U), 1 / 4)
    L = build_laplacian(gen_cycle(16))
    np.testing.assert_allclose(L @ b.U, b.U * b.sigma, atol=1e-12)
    np.testing.assert_allclose(b.sigma, np.sort(b.sigma))


def test_diffusion_eigenvalue_examples():
    b = basis_of(gen_path(2))
    np.testing.assert_allclose(diffusion_eigenvalues(b, DiffusionModel.heat(LN2_HALF), 2), [1, 0.5])
    np.testing.assert_array_equal(diffusion_eigenvalues(b, DiffusionModel.heat(0.0), 2), [1, 1])
    toy = SpectralBasis(np.array([0.0, 2.0, 4.0]), np.eye(3))
    linear = DiffusionModel(lambda s: 1 - s / 4.0, "linear")
    np.testing.assert_array_equal(diffusion_eigenvalues(toy, linear, 3), [1, 0.5, 0])
    table = DiffusionModel.tabulated([0.0, 4.0], [1.0, 0.0])
    np.testing.assert_array_equal(diffusion_eigenvalues(toy, table, 3), [1, 0.5, 0])


def test_custom_filter_and_domain_errors():
    b = basis_of(gen_path(3))
    bad = DiffusionModel(lambda s: np.where(s > 0, np.nan, 1.0), "undefined")
    with pytest.raises(FilterDomainError):
        diffusion_eigenvalues(b, bad, 3)
    with pytest.raises(SpectralError):
        diffusion_eigenvalues(b, DiffusionModel.heat(1.0), 4)
    neg = DiffusionModel(lambda s: 1 - s, "shift")
    with pytest.raises(FilterDomainError):
        build_dictionary(b, neg, 3, TimeGrid((0.0, 0.5)))
    d = build_dictionary(b, neg, 3, TimeGrid.regular(3))
    assert np.abs(d.Utilde.T @ d.Utilde - np.eye(3)).max() <= 1e-12


@pytest.mark.parametrize("lam,T,expected", [(1.0, 10, np.sqrt(10)), (0.5, 2, np.sqrt(1.25)), (0.3, 1, 1.0), (0.0, 4, 1.0)])
def test_f_norm_examples(lam, T, expected):
    assert f_norms(np.array([lam]), TimeGrid.regular(T))[0] == pytest.approx(expected, rel=1e-15)


def test_two_path_dictionary_entries():
    b = basis_of(gen_path(2))
    d = build_dictionary(b, DiffusionModel.heat(LN2_HALF), 2, TimeGrid.regular(2))
    A = np.abs(d.Utilde)
    np.testing.assert_allclose(A[:2, 0], 0.5)
    np.testing.assert_allclose(A[:2, 1], 1 / np.sqrt(2.5))
    np.testing.assert_allclose(A[2:, 0], 0.5)
    np.testing.assert_allclose(A[2:, 1], 0.5 / np.sqrt(2.5))
    np.testing.assert_allclose(d.fvals, [np.sqrt(2), np.sqrt(1.25)])


def test_single_step_dictionary_is_u_k():
    b = basis_of(gen_cycle(9))
    d = build_dictionary(b, DiffusionModel.heat(2.0), 5, TimeGrid.regular(1))
    assert np.array_equal(d.Utilde, b.U[:, :5])


def test_irregular_grid_exponents():
    grid = TimeGrid((0.0, 0.5, 2.0), unit=0.5)
    np.testing.assert_allclose(grid.exponents, [0, 1, 4])
    assert not grid.is_regular and grid.integer_exponents
    assert TimeGrid.regular(4, dt=0.25).is_regular
    b = basis_of(gen_cycle(8))
    model = DiffusionModel.heat(0.7)
    d = build_dictionary(b, model, 4, TimeGrid((0.0, 0.3, 1.7)))
    assert np.abs(d.Utilde.T @ d.Utilde - np.eye(4)).max() <= 1e-12
    x = b.U[:, :4] @ np.array([1.0, -2.0, 0.5, 0.0])
    traj = embed(x, b, model, d.grid).reshape(3, 8)
    np.testing.assert_allclose(traj[1], evolve(x, b, model, 0.3), atol=1e-12)


@pytest.mark.parametrize("times", [(), (1.0, 1.0), (2.0, 1.0), (-1.0, 0.0)])
def test_time_grid_validation(times):
    with pytest.raises(SpectralError):
        TimeGrid(times)


def test_evolve_examples():
    b = basis_of(gen_path(2))
    model = DiffusionModel.heat(LN2_HALF)
    u2 = b.U[:, 1]
    np.testing.assert_allclose(evolve(u2, b, model, 1), 0.5 * u2, atol=1e-15)
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(evolve(x, b, model, 0), x, atol=1e-15)
    ring = basis_of(gen_cycle(7))
    const = ring.U[:, 0]
    np.testing.assert_allclose(evolve(const, ring, DiffusionModel.heat(3.0), 5), const, atol=1e-12)


def test_evolve_semigroup():
    b = basis_of(gen_community((8, 12), 0.6, 0.1, 5))
    model = DiffusionModel.heat(0.4)
    x = np.random.default_rng(0).standard_normal(b.n)
    np.testing.assert_allclose(evolve(evolve(x, b, model, 1.3), b, model, 2.1),
                               evolve(x, b, model, 3.4), atol=1e-9)


def test_embed_examples():
    b = basis_of(gen_cycle(10))
    model = DiffusionModel.heat(1.0)
    x = np.random.default_rng(1).standard_normal(10)
    np.testing.assert_allclose(embed(x, b, model, TimeGrid.regular(1)), x, atol=1e-12)
    assert np.linalg.norm(embed(b.U[:, 0], b, model, TimeGrid.regular(6))) == pytest.approx(np.sqrt(6))


def test_embed_factorization():
    b = basis_of(gen_cycle(20))
    model = DiffusionModel.heat(0.5)
    d = build_dictionary(b, model, 7, TimeGrid.regular(5))
    x = b.U[:, :7] @ np.random.default_rng(2).standard_normal(7)
    chat = b.U[:, :7].T @ x
    assert np.linalg.norm(embed(x, b, model, d.grid) - d.Utilde @ (d.fvals * chat)) <= 1e-9


def test_synth_signal_examples():
    b = basis_of(gen_cycle(12))
    x, code = synth_signal(b, 6, [0], [1.0])
    np.testing.assert_allclose(x, b.U[:, 0])
    x0, code0 = synth_signal(b, 6, [], [])
    assert not x0.any() and code0.support.size == 0
    x, code = random_sparse_signal(b, 6, 3, np.random.default_rng(3))
    assert np.linalg.norm(x) == pytest.approx(1.0)
    assert np.sum(np.abs(b.U[:, :6].T @ x) > 1e-12) == 3
    np.testing.assert_allclose(b.U[:, :6] @ code.coeffs, x, atol=1e-14)


@pytest.mark.parametrize("support,coeffs", [([6], [1.0]), ([-1], [1.0]), ([1, 1], [1.0, 2.0]), ([1], [1.0, 2.0])])
def test_synth_signal_validation(support, coeffs):
    with pytest.raises(SpectralError):
        synth_signal(basis_of(gen_cycle(12)), 6, support, coeffs)


def test_code_to_vertex_examples():
    b = basis_of(gen_cycle(12))
    model = DiffusionModel.heat(0.8)
    d = build_dictionary(b, model, 5, TimeGrid.regular(4))
    e2 = np.zeros(5)
    e2[1] = d.fvals[1]
    np.testing.assert_allclose(code_to_vertex(e2, d, b), b.U[:, 1], atol=1e-14)
    assert not code_to_vertex(SparseSpectralCode(np.zeros(5)), d, b).any()
    x, _ = random_sparse_signal(b, 5, 2, np.random.default_rng(4))
    c_star = d.Utilde.T @ embed(x, b, model, d.grid)
    np.testing.assert_allclose(code_to_vertex(c_star, d, b), x, atol=1e-10)
    with pytest.raises(SpectralError):
        code_to_vertex(np.zeros(4), d, b)


def test_signal_file_round_trip(tmp_path):
    x = np.array([0.1, -2.5, 1 / 3, 1e-300])
    save_signal(x, tmp_path / "x.txt")
    assert np.array_equal(load_signal(tmp_path / "x.txt"), x)
    (tmp_path / "bad.txt").write_text("1.0\nfoo\n")
    with pytest.raises(SpectralError, match="line 2"):
        load_signal(tmp_path / "bad.txt")


@pytest.mark.parametrize("basis", [basis_of(gen_path(3)), cycle_fourier_basis(3)])
def test_dictionary_csv_export(tmp_path, basis):
    d = build_dictionary(basis, DiffusionModel.heat(1.0), 2, TimeGrid.regular(2))
    save_dictionary_csv(d, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "6,2" and len(lines) == 7
    back = np.array([[complex(v) for v in line.split(",")] for line in lines[1:]])
    np.testing.assert_array_equal(back, d.Utilde)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 30), k_frac=st.floats(0.05, 1.0), T=st.integers(1, 10),
       dt=st.floats(0.0, 6.0), kind=st.sampled_from(["cycle", "path"]))
def test_dictionary_orthonormal_property(n, k_frac, T, dt, kind):
    g = gen_cycle(n) if kind == "cycle" else gen_path(n)
    k = max(1, int(round(k_frac * n)))
    d = build_dictionary(basis_of(g), DiffusionModel.heat(dt), k, TimeGrid.regular(T))
    assert np.abs(d.Utilde.T @ d.Utilde - np.eye(k)).max() <= 1e-10
    assert np.all(d.fvals >= 1.0)
