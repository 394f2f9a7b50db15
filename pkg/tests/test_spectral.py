import numpy as np
import pytest
import scipy.sparse as sp

from steklov_lab.assembly import (LAPLACIAN_ENERGY, HESSIAN_ENERGY, assemble,
                                  assemble_boundary_factor, normal_trace)
from steklov_lab.mesh import DofMap, build_mesh, mark_essential
from steklov_lab.profile_geometry import (BoundaryProfile, DomainSpec,
                                          build_diffeo, fit_kappa_layer)
from steklov_lab.spectral import (NoSteklovEigenvalues, rayleigh,
                                  solve_steklov)


def square_pencil(n, form=LAPLACIAN_ENERGY, part="All", grading=1.0):
    m = build_mesh(n, n, grading=grading)
    dm = mark_essential(m, DofMap.unconstrained(m), "DirichletAll")
    A = assemble(form, m, dm)
    B = assemble(normal_trace(part), m, dm)
    C = assemble_boundary_factor(normal_trace(part), m, dm)
    return A, B, C


def test_decoupled_two_by_two():
    A = sp.csr_matrix(np.diag([1.0, 2.0]))
    B = sp.csr_matrix(np.diag([1.0, 0.0]))
    s = solve_steklov(A, B, k=1)
    assert s.eigenvalues[0] == pytest.approx(1.0, rel=1e-12)
    assert abs(s.modes[1, 0]) < 1e-12


def test_diagonal_full_rank():
    A = sp.csr_matrix(np.diag([2.0, 3.0]))
    B = sp.csr_matrix(np.eye(2))
    s = solve_steklov(A, B, k=2)
    assert np.allclose(s.eigenvalues, [2.0, 3.0])


def test_zero_boundary_form_raises():
    A = sp.csr_matrix(np.eye(3))
    B = sp.csr_matrix((3, 3))
    with pytest.raises(NoSteklovEigenvalues):
        solve_steklov(A, B, k=1)


def test_methods_agree_on_square():
    A, B, C = square_pencil(8)
    ref = solve_steklov(A, B, k=3, method="dense")
    for method, kw in (("subspace", {}), ("range", {"b_factor": C}),
                       ("lanczos", {})):
        s = solve_steklov(A, B, k=3, method=method, tol=1e-9, **kw)
        rel = np.max(np.abs(s.eigenvalues - ref.eigenvalues) / ref.eigenvalues)
        assert rel <= 1e-9, (method, rel)


def test_residual_certificates():
    A, B, C = square_pencil(8, grading=0.8)
    for method, kw in (("dense", {}), ("subspace", {}),
                       ("range", {"b_factor": C})):
        s = solve_steklov(A, B, k=2, method=method, tol=1e-9, **kw)
        assert np.max(s.residuals) <= 1e-9


def test_modes_b_orthonormal():
    A, B, _ = square_pencil(8)
    s = solve_steklov(A, B, k=3, method="dense")
    G = s.modes.T @ (B.matrix @ s.modes)
    assert np.allclose(np.diag(G), 1.0, atol=1e-10)
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-8


def test_first_eigenvalue_cauchy_and_simple():
    vals = []
    gaps = []
    for n in (8, 16, 32):
        A, B, _ = square_pencil(n)
        s = solve_steklov(A, B, k=2)
        vals.append(s.eigenvalues[0])
        gaps.append(s.eigenvalues[1] - s.eigenvalues[0])
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    assert diffs[1] < diffs[0]            # Cauchy-like refinement sequence
    assert min(gaps) > 0.5 * max(gaps)    # d_1 simple with a stable gap
    assert all(g > 1.0 for g in gaps)


def test_rayleigh_bounds_and_homogeneity():
    A, B, _ = square_pencil(8)
    s = solve_steklov(A, B, k=1, method="dense")
    q = s.modes[:, 0]
    d1 = s.eigenvalues[0]
    assert rayleigh(A, B, q) == pytest.approx(d1, rel=1e-9)
    assert rayleigh(A, B, 7.0 * q) == pytest.approx(d1, rel=1e-9)
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = rng.standard_normal(q.size)
        if abs(v @ (B.matrix @ v)) < 1e-12:
            continue
        assert rayleigh(A, B, v) >= d1 - 1e-9


def test_rayleigh_undefined_in_kernel():
    A = sp.csr_matrix(np.diag([1.0, 2.0]))
    B = sp.csr_matrix(np.diag([1.0, 0.0]))
    with pytest.raises(ZeroDivisionError):
        rayleigh(A, B, np.array([0.0, 1.0]))


def test_laplacian_and_hessian_pencils_coincide_on_square():
    # the reduced matrices are equal, so the spectra must match
    A1, B1, _ = square_pencil(8, LAPLACIAN_ENERGY)
    A2, B2, _ = square_pencil(8, HESSIAN_ENERGY)
    s1 = solve_steklov(A1, B1, k=3)
    s2 = solve_steklov(A2, B2, k=3)
    assert np.max(np.abs(s1.eigenvalues - s2.eigenvalues)
                  / s1.eigenvalues) < 1e-9


@pytest.mark.filterwarnings("ignore:only .* elements per oscillation period")
def test_sweep_keeps_first_eigenvalue_bounded_below():
    # discrete analogue of the uniform lower bound along a valid sweep;
    # a deliberately coarse mesh keeps this a fast smoke-level check
    prof = BoundaryProfile.fourier_cosine([1.0, 1.0], alpha=2.0)
    m = build_mesh(32, 8, grading=0.8)
    dm = mark_essential(m, DofMap.unconstrained(m), "DirichletAll")
    A0 = assemble(LAPLACIAN_ENERGY, m, dm)
    B0 = assemble(normal_trace("All"), m, dm)
    d0 = solve_steklov(A0, B0, k=1).eigenvalues[0]
    worst = np.inf
    for eps in (1 / 8, 1 / 16, 1 / 32):
        spec = DomainSpec(epsilon=eps, profile=prof)
        dif = build_diffeo(spec, fit_kappa_layer(spec))
        A = assemble(LAPLACIAN_ENERGY, m, dm, dif)
        B = assemble(normal_trace("All"), m, dm, dif)
        worst = min(worst, solve_steklov(A, B, k=1).eigenvalues[0])
    assert worst >= 0.5 * d0


def test_cluster_grouping():
    A = sp.csr_matrix(np.eye(3) * 2.0)
    B = sp.csr_matrix(np.eye(3))
    s = solve_steklov(A, B, k=3)
    assert s.clusters == ((0, 3),)
