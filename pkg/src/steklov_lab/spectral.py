"""Generalized symmetric eigensolver for the Steklov pencils A q = d B q.

A is a positive definite energy matrix, B a positive semidefinite boundary
form of low effective rank.  The smallest Steklov eigenvalues d are the
reciprocals of the largest eigenvalues mu of B q = mu A q, so every method
factorizes the well-conditioned A side and works on A^{-1} B; the huge kernel
of B is deflated implicitly (kernel directions have mu = 0 and are never
returned).  Methods:

  dense     full eigh of the scaled pencil, systems below 2000 DOFs;
  subspace  block iteration on A^{-1} B with A-orthogonalization;
  lanczos   ARPACK on the same operator (robust for clustered mu);
  range     exact reduction to range(B) via a factor B = C C^T; no
            iteration, preferred when the factor is narrow enough.

Subspace iteration stalls when the mu spectrum is nearly flat, which happens
for the boundary pencils close to the critical oscillation exponent; the
range and Lanczos routes exist for exactly that regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["SteklovSpectrum", "NoSteklovEigenvalues", "SpectralConvergenceError",
           "solve_steklov", "rayleigh"]

DENSE_CUTOFF = 2000


class NoSteklovEigenvalues(RuntimeError):
    """The boundary form is numerically zero: the pencil has no eigenvalues."""


class SpectralConvergenceError(RuntimeError):
    def __init__(self, message, best_residuals=None):
        super().__init__(message)
        self.best_residuals = best_residuals


@dataclass
class SteklovSpectrum:
    """Ascending eigenvalues with B-normalized modes and residual certificates."""

    eigenvalues: np.ndarray
    modes: np.ndarray                  # columns, B-normalized
    residuals: np.ndarray              # ||A q - d B q|| / ||A q||
    method: str
    clusters: tuple = field(default=())  # (start, size) per multiplicity group

    def __len__(self):
        return self.eigenvalues.size


def _as_matrix(A):
    m = A.matrix if hasattr(A, "matrix") else A
    return sp.csr_matrix(m) if not sp.issparse(m) else m.tocsr()


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    for j in range(modes.shape[1]):
        i = int(np.argmax(np.abs(modes[:, j])))
        if modes[i, j] < 0:
            modes[:, j] = -modes[:, j]
    return modes


def _cluster(eigs: np.ndarray, rel_gap: float = 1e-6) -> tuple:
    groups = []
    start = 0
    for i in range(1, eigs.size + 1):
        if i == eigs.size or abs(eigs[i] - eigs[i - 1]) > rel_gap * abs(eigs[i - 1]):
            groups.append((start, i - start))
            start = i
    return tuple(groups)


def _finalize(B, As, Bs, mu, Ys, k, method, unscale):
    """Order the Ritz pairs, certify residuals on the scaled pencil and return
    B-normalized modes of the original one."""
    order = np.argsort(mu)[::-1]
    mu = mu[order][:k]
    Ys = Ys[:, order][:, :k]
    d = 1.0 / mu
    idx = np.argsort(d)
    d, Ys = d[idx], Ys[:, idx]
    Aq = As @ Ys
    res = np.linalg.norm(Aq - (Bs @ Ys) * d, axis=0) / np.linalg.norm(Aq, axis=0)
    Y = Ys * unscale[:, None]
    bnorm = np.sqrt(np.einsum("ij,ij->j", Y, B @ Y))
    Y = Y / bnorm
    Y = _fix_signs(Y)
    return SteklovSpectrum(eigenvalues=d, modes=Y, residuals=res,
                           method=method, clusters=_cluster(d))


def _jacobi_scale(A, B):
    """Symmetric diagonal scaling that tames the size disparity of Hermite
    DOFs on strongly graded meshes; pure algebra, same eigenvalues."""
    d = A.diagonal()
    s = 1.0 / np.sqrt(np.maximum(d, 1e-300))
    D = sp.diags(s)
    return (D @ A @ D).tocsr(), (D @ B @ D).tocsr(), s


def _solve_dense(A, B, k, tol):
    As, Bs, s = _jacobi_scale(A, B)
    mu, V = sla.eigh(Bs.toarray(), As.toarray())   # B v = mu A v, ascending mu
    cutoff = max(mu.max(), 0.0) * 1e-10
    keep = mu > max(cutoff, 10 * np.finfo(float).tiny)
    if not np.any(keep):
        raise NoSteklovEigenvalues("boundary form has no positive directions")
    mu, V = mu[keep], V[:, keep]
    if mu.size < k:
        raise NoSteklovEigenvalues(
            f"only {mu.size} positive pencil directions, {k} requested")
    return _finalize(B, As, Bs, mu, V, k, "dense", unscale=s)


def _solve_subspace(A, B, k, tol, max_iter, seed):
    As, Bs, scale = _jacobi_scale(A, B)
    n = As.shape[0]
    rank_cap = int(np.sum(np.abs(Bs.diagonal()) > 0)) + 8
    # generous block: the mu spectrum of boundary pencils decays slowly, so
    # extra vectors buy far more than they cost against one factorization
    m = min(max(2 * k + 4, k + 28), n, rank_cap)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    lu = spla.splu(As.tocsc())
    best_res = None
    for it in range(max_iter):
        Y = lu.solve(Bs @ X)
        G = Y.T @ (As @ Y)
        # A-orthonormalize; eigen route is robust to rank loss in the block
        w, U = sla.eigh(G)
        good = w > max(w.max(), 0.0) * 1e-13
        if not np.any(good):
            raise NoSteklovEigenvalues("boundary form is numerically zero")
        Y = (Y @ U[:, good]) / np.sqrt(w[good])
        H = Y.T @ (Bs @ Y)
        mu, Q = sla.eigh(H)
        order = np.argsort(mu)[::-1]
        mu, Q = mu[order], Q[:, order]
        X = Y @ Q
        kk = min(k, mu.size)
        lead = X[:, :kk]
        mu_l = mu[:kk]
        if np.any(mu_l <= 0):
            continue
        Aq = As @ lead
        res = np.linalg.norm(Aq - (Bs @ lead) * (1.0 / mu_l), axis=0)
        res = res / np.linalg.norm(Aq, axis=0)
        best_res = res if best_res is None else np.minimum(best_res, res)
        if mu.size >= k and np.max(res) <= tol:
            return _finalize(B, As, Bs, mu, X, k, "subspace", unscale=scale)
    raise SpectralConvergenceError(
        f"subspace iteration did not reach tol={tol} in {max_iter} iterations",
        best_residuals=best_res)


def _solve_lanczos(A, B, k, tol, seed):
    """Implicitly restarted Lanczos (ARPACK) on B q = mu A q with the
    factorized A side as inner solver; Krylov acceleration copes with the
    moderately clustered mu spectra of the wide boundary pencils."""
    As, Bs, scale = _jacobi_scale(A, B)
    lu = spla.splu(As.tocsc())
    n = As.shape[0]
    Minv = spla.LinearOperator((n, n), matvec=lu.solve)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    try:
        mu, V = spla.eigsh(Bs, k=k, M=As, Minv=Minv, which="LA", v0=v0,
                           ncv=min(n - 1, max(40, 4 * k)))
    except spla.ArpackNoConvergence as exc:
        raise SpectralConvergenceError(f"Lanczos did not converge: {exc}") from exc
    if np.any(mu <= 0):
        raise NoSteklovEigenvalues(
            "Lanczos returned nonpositive pencil directions")
    return _finalize(B, As, Bs, mu, V, k, "lanczos", unscale=scale)


def _solve_range(A, B, C, k, tol):
    """Exact reduction to range(B): with B = C C^T the nonzero part of the
    pencil is S z = mu z for S = C^T A^{-1} C, and q = A^{-1} C z.

    No iteration is involved, which is what makes this path robust for the
    near-critical pencils whose mu spectrum is too flat for subspace
    iteration to converge.
    """
    As, _, scale = _jacobi_scale(A, B)
    Cs = sp.diags(scale) @ C              # factor of the scaled B = (DC)(DC)^T
    lu = spla.splu(As.tocsc())
    n, r = Cs.shape
    S = np.empty((r, r))
    Ysol = np.empty((n, r))
    step = max(1, min(r, int(2e7 // max(n, 1))))
    for j0 in range(0, r, step):
        block = Cs[:, j0:j0 + step].toarray()
        Y = lu.solve(block)
        Ysol[:, j0:j0 + step] = Y
        S[:, j0:j0 + step] = Cs.T @ Y
    S = 0.5 * (S + S.T)
    mu, Z = sla.eigh(S)
    keep = mu > max(mu.max(), 0.0) * 1e-12
    if not np.any(keep):
        raise NoSteklovEigenvalues("boundary form has no positive directions")
    mu, Z = mu[keep], Z[:, keep]
    if mu.size < k:
        raise NoSteklovEigenvalues(
            f"only {mu.size} positive pencil directions, {k} requested")
    top = np.argsort(mu)[::-1][:k]
    mu, Z = mu[top], Z[:, top]
    Ys = Ysol @ Z                          # scaled modes for the leading mu
    Ys /= np.linalg.norm(Ys, axis=0)
    Bs = (Cs @ Cs.T).tocsr()
    return _finalize(B, As, Bs, mu, Ys, k, "range", unscale=scale)


def solve_steklov(A, B, k: int = 1, tol: float = 1e-9, method: str = "auto",
                  max_iter: int = 1000, seed: int = 0,
                  b_factor=None) -> SteklovSpectrum:
    """k smallest eigenvalues of A q = d B q restricted to the B-nontrivial subspace.

    `b_factor` is an optional quadrature factor C with B = C C^T (see
    assembly.assemble_boundary_factor); when present the robust exact range
    reduction is preferred for large systems.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    A = _as_matrix(A)
    B = _as_matrix(B)
    if A.shape != B.shape:
        raise ValueError("pencil matrices must have equal shape")
    bscale = spla.norm(B) if B.nnz else 0.0
    if bscale == 0.0 or bscale < 1e-300:
        raise NoSteklovEigenvalues("boundary form is numerically zero")
    if method == "auto":
        if A.shape[0] < DENSE_CUTOFF:
            method = "dense"
        elif b_factor is not None and b_factor.shape[1] <= 2048:
            method = "range"
        else:
            method = "lanczos"
    if method == "dense":
        return _solve_dense(A, B, k, tol)
    if method == "subspace":
        return _solve_subspace(A, B, k, tol, max_iter, seed)
    if method == "lanczos":
        return _solve_lanczos(A, B, k, tol, seed)
    if method == "range":
        if b_factor is None:
            raise ValueError("range method needs the boundary factor C")
        return _solve_range(A, B, sp.csr_matrix(b_factor), k, tol)
    raise ValueError(f"unknown method {method!r}")


def rayleigh(A, B, q) -> float:
    """Rayleigh quotient (q^T A q) / (q^T B q); an upper bound for d_1."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    q = np.asarray(q, dtype=float)
    den = float(q @ (B @ q))
    num = float(q @ (A @ q))
    if den <= max(abs(num), 1.0) * 1e-14:
        raise ZeroDivisionError("q^T B q = 0: Rayleigh quotient undefined")
    return num / den
