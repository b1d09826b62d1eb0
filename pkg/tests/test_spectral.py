import numpy as np
import pytest

import fracwave as fw
from conftest import case


def random_spd(n, rng):
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


def test_jacobi_matches_lapack(rng):
    a = random_spd(24, rng)
    lam, v = fw.jacobi_eigh(a)
    lam_ref, v_ref = np.linalg.eigh(a)
    np.testing.assert_allclose(lam, lam_ref, rtol=1e-10)
    # eigenvectors agree up to sign (spectrum of a random SPD matrix is simple)
    overlap = np.abs(np.einsum("ik,ik->k", v, v_ref))
    np.testing.assert_allclose(overlap, 1.0, atol=1e-8)


def test_jacobi_deterministic(rng):
    a = random_spd(12, rng)
    lam1, v1 = fw.jacobi_eigh(a)
    lam2, v2 = fw.jacobi_eigh(a)
    assert np.array_equal(lam1, lam2)
    assert np.array_equal(v1, v2)


def test_jacobi_orthonormal_and_ordered(rng):
    a = random_spd(16, rng)
    lam, v = fw.jacobi_eigh(a)
    np.testing.assert_allclose(v.T @ v, np.eye(16), atol=1e-12)
    assert np.all(np.diff(lam) >= 0)


def test_jacobi_sign_convention(rng):
    a = random_spd(10, rng)
    _, v = fw.jacobi_eigh(a)
    for col in v.T:
        lead = col[np.abs(col) > 1e-12 * np.abs(col).max()][0]
        assert lead > 0


def test_jacobi_trivial_and_invalid():
    lam, v = fw.jacobi_eigh(np.array([[3.0]]))
    assert lam[0] == 3.0 and v[0, 0] == 1.0
    with pytest.raises(ValueError):
        fw.jacobi_eigh(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        fw.jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_jacobi_reports_exhaustion(rng):
    a = random_spd(8, rng)
    with pytest.raises(fw.JacobiError):
        fw.jacobi_eigh(a, max_sweeps=0)


def test_eigendecompose_residual_and_gram():
    grid, op, basis = case(n_int=24, s=0.7)
    assert np.all(basis.lambdas > 0)
    assert np.all(np.diff(basis.lambdas) >= 0)
    resid = op.a_int @ basis.modes - basis.modes * basis.lambdas[None, :]
    assert np.max(np.abs(resid)) <= 1e-9 * basis.lambdas[-1]
    gram = grid.h * basis.modes.T @ basis.modes
    np.testing.assert_allclose(gram, np.eye(grid.n_int), atol=1e-12)


def test_classical_spectrum_closed_form():
    # s = 1 reduces to the Dirichlet Laplacian whose spectrum is known exactly
    grid, op, basis = case(n_int=12, s=1.0)
    n = grid.n_int
    k = np.arange(1, n + 1)
    exact = 4.0 / grid.h**2 * np.sin(k * np.pi * grid.h / 2.0) ** 2
    np.testing.assert_allclose(basis.lambdas, exact, rtol=1e-12)


def test_eigenvalue_growth_tracks_order():
    # lambda_k ~ k^(2s) in the resolved part of the spectrum
    _, _, basis = case(n_int=32, s=1.5)
    k = np.arange(3, 13)
    slope = np.polyfit(np.log(k), np.log(basis.lambdas[k - 1]), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.4)


def test_project_reconstruct_roundtrip(rng):
    grid, op, basis = case(n_int=24, s=0.7)
    field = rng.standard_normal((5, grid.n_int))
    coeffs = fw.project_l2(field, basis)
    np.testing.assert_allclose(fw.reconstruct(coeffs, basis), field, atol=1e-11)
    np.testing.assert_allclose(
        fw.project_l2(fw.reconstruct(coeffs, basis), basis), coeffs, atol=1e-11
    )


def test_mode_norms_closed_form():
    grid, op, basis = case(n_int=24, s=0.7)
    for k in (0, 5, 17):
        mode = basis.modes[:, k]
        lam = basis.lambdas[k]
        assert fw.l2_norm(mode, grid.h) == pytest.approx(1.0, rel=1e-11)
        assert fw.hs_norm(mode, op) == pytest.approx(np.sqrt(lam), rel=1e-10)
        assert fw.dual_norm(mode, basis) == pytest.approx(1 / np.sqrt(lam), rel=1e-10)


def test_dual_norm_routes_agree(rng):
    grid, op, basis = case(n_int=24, s=0.7)
    for _ in range(20):
        g = rng.standard_normal(grid.n_int)
        spectral = fw.dual_norm(g, basis)
        variational = fw.dual_norm_variational(g, op)
        assert abs(spectral - variational) <= 1e-10 * variational


def test_poincare_inequality(rng):
    grid, op, basis = case(n_int=24, s=0.7)
    lam1 = basis.lambdas[0]
    for _ in range(10):
        v = rng.standard_normal(grid.n_int)
        assert fw.hs_norm(v, op) >= np.sqrt(lam1) * fw.l2_norm(v, grid.h) * (1 - 1e-12)


def test_elliptic_solver_against_direct(rng):
    grid, op, _ = case(n_int=24, s=0.7)
    g = rng.standard_normal(grid.n_int)
    x = fw.solve_dirichlet_elliptic(g, op)
    ref = np.linalg.solve(op.a_int, g)
    np.testing.assert_allclose(x, ref, rtol=1e-10)
    resid = np.linalg.norm(op.a_int @ x - g) / np.linalg.norm(g)
    assert resid <= 1e-10


def test_elliptic_solver_isometry(rng):
    # the solve maps H^-s data to the energy space isometrically
    grid, op, basis = case(n_int=24, s=0.7)
    g = rng.standard_normal(grid.n_int)
    x = fw.solve_dirichlet_elliptic(g, op)
    assert fw.hs_norm(x, op) == pytest.approx(fw.dual_norm(g, basis), rel=1e-10)


def test_spectra_csv_exact(tmp_path):
    grid, op, basis = case(n_int=10, s=0.7)
    path = tmp_path / "spectra.csv"
    fw.dump_spectra_csv(basis, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,lambda"
    values = [float(line.split(",")[1]) for line in lines[1:]]
    assert np.array_equal(np.array(values), basis.lambdas)
