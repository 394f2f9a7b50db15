"""Weak Navier problems, the variational normal derivative and the
Navier-to-Neumann pencil, plus a second-order mixed-splitting oracle.

The hinged-plate (Navier) problem with boundary datum f (given as an H^1
function) reads in weak form

    int Lap(u) Lap(phi) dx = int (f Lap(phi) + grad f . grad phi) dx

over the C1 space with u = 0 on the boundary.  The right-hand side depends
only on the trace of f, and for a C1-conforming discrete u the same volume
expression evaluates the normal derivative exactly:

    <u_nu, v> = int (Lap(u) v + grad u . grad v) dx = int_bdry u_nu v dS,

because the interelement fluxes of v grad(u) cancel.  Building the
Navier-to-Neumann matrix on a boundary-trace basis therefore reproduces the
direct Steklov pencil up to round-off: both are algebraic reformulations of
one discrete problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (FeFunction, FeSystem, GRAD_MASS, LAPLACIAN_ENERGY,
                       HESSIAN_ENERGY, MIXED_U_DELTA, assemble,
                       assemble_navier_load, boundary_mass, gauss01)
from .mesh import DOF_V, DOF_VX, DOF_VY, DofMap, Mesh, mark_essential
from .profile_geometry import DiffeoField

__all__ = ["NavierSolution", "NtnOperator", "solve_navier",
           "normal_derivative_functional", "build_ntn", "ntn_eigenvalues",
           "q1_solve_dirichlet", "mixed_splitting_solve", "relative_h1_error",
           "q1_eval"]


@dataclass
class NavierSolution:
    u: FeFunction
    residual: float
    form: str
    bc: str
    domain: DiffeoField | None
    dofmap: DofMap
    system: FeSystem
    load: np.ndarray


def _energy_form(form: str):
    if form == "Laplacian":
        return LAPLACIAN_ENERGY
    if form == "Hessian":
        return HESSIAN_ENERGY
    raise ValueError("form must be 'Laplacian' or 'Hessian'")


def solve_navier(mesh: Mesh, f, form: str = "Laplacian",
                 bc: str = "DirichletAll", domain: DiffeoField | None = None,
                 quad_order: int | None = None,
                 system: FeSystem | None = None) -> NavierSolution:
    """Discrete solution of a(u, phi) = int (f Lap(phi) + grad f . grad phi).

    `f` is an FeFunction or a (f, f_x, f_y) triple of callables evaluated at
    physical points.  Pass a preassembled `system` to reuse the energy matrix.
    """
    kind = _energy_form(form)
    if system is None:
        dofmap = mark_essential(mesh, DofMap.unconstrained(mesh), bc)
        system = assemble(kind, mesh, dofmap, domain, quad_order)
    else:
        dofmap = system.dofmap
    F = assemble_navier_load(f, mesh, dofmap, domain, quad_order)
    A = system.matrix.tocsc()
    u_free = spla.splu(A).solve(F)
    fn = float(np.linalg.norm(F))
    res = float(np.linalg.norm(system.matrix @ u_free - F)) / fn if fn > 0 else 0.0
    u = FeFunction.from_free_vector(dofmap, mesh, u_free)
    return NavierSolution(u=u, residual=res, form=form, bc=bc, domain=domain,
                          dofmap=dofmap, system=system, load=F)


def _conormal_operator(mesh: Mesh, domain: DiffeoField | None,
                       quad_order: int | None = None) -> sp.csr_matrix:
    """Matrix of u -> [ int (Lap(u) psi_m + grad u . grad psi_m) ]_m over the
    full Hermite basis."""
    full = DofMap.unconstrained(mesh)
    M = assemble(MIXED_U_DELTA, mesh, full, domain, quad_order).matrix
    G = assemble(GRAD_MASS, mesh, full, domain, quad_order).matrix
    return (M + G).tocsr()


def normal_derivative_functional(sol: NavierSolution,
                                 quad_order: int | None = None) -> np.ndarray:
    """<u_nu, psi_m> for every function psi_m of the full Hermite basis.

    Entries for basis functions supported strictly inside the domain vanish
    (the pairing only sees the boundary trace of the test function).
    """
    op = _conormal_operator(sol.u.mesh, sol.domain, quad_order)
    return np.asarray(op @ sol.u.coeffs)


# ---------------------------------------------------------------------------
# Navier-to-Neumann pencil on a boundary-trace basis

@dataclass
class NtnOperator:
    N: np.ndarray              # <(u_{f_j})_nu, f_i>
    J0: np.ndarray             # boundary mass on the trace basis
    trace_dofs: np.ndarray     # global DOF indices parametrizing the traces
    extensions: np.ndarray     # (n_dofs, n_basis) harmonically extended basis
    mesh: Mesh


def boundary_trace_dofs(mesh: Mesh) -> np.ndarray:
    """Global DOFs that determine the boundary trace of a Hermite function:
    the value at every boundary node plus the tangential slope per edge."""
    dofs = []
    horizontal = np.unique(np.concatenate([mesh.top_nodes(), mesh.bottom_nodes()]))
    vertical = np.unique(np.concatenate([mesh.left_nodes(), mesh.right_nodes()]))
    for n in mesh.boundary_nodes():
        dofs.append(4 * n + DOF_V)
    for n in horizontal:
        dofs.append(4 * n + DOF_VX)
    for n in vertical:
        dofs.append(4 * n + DOF_VY)
    return np.unique(np.array(dofs, dtype=np.int64))


def build_ntn(mesh: Mesh, domain: DiffeoField | None = None,
              trace_dofs=None, quad_order: int | None = None,
              extra_dofs=None) -> NtnOperator:
    """Assemble the Navier-to-Neumann pencil (N, J0) on a trace basis.

    Basis functions are Hermite functions carrying one unit of boundary-trace
    data each, extended into the domain discretely harmonically (the interior
    minimizes the Dirichlet energy).  Functions with zero trace pair to zero
    on both sides, so the H^1_0 kernel is deflated by construction.
    """
    if trace_dofs is None:
        trace_dofs = boundary_trace_dofs(mesh)
    trace_dofs = np.asarray(trace_dofs, dtype=np.int64)
    if extra_dofs is not None:
        trace_dofs = np.unique(np.concatenate(
            [trace_dofs, np.asarray(extra_dofs, dtype=np.int64)]))
    full = DofMap.unconstrained(mesh)
    K = assemble(GRAD_MASS, mesh, full, domain, quad_order).matrix.tocsc()
    n_dofs = full.n_dofs
    comp = np.setdiff1d(np.arange(n_dofs), trace_dofs)

    # harmonic extension of each unit of trace data
    Kcc = K[comp][:, comp]
    Kct = K[comp][:, trace_dofs]
    lu = spla.splu(Kcc.tocsc())
    C = np.zeros((n_dofs, trace_dofs.size))
    C[trace_dofs, np.arange(trace_dofs.size)] = 1.0
    C[comp] = -lu.solve(Kct.toarray())

    # Navier solves for every basis function
    dofmap = mark_essential(mesh, full, "DirichletAll")
    system = assemble(LAPLACIAN_ENERGY, mesh, dofmap, domain, quad_order)
    conorm = _conormal_operator(mesh, domain, quad_order)
    loads = (conorm.T @ C)[dofmap.free]
    lu_a = spla.splu(system.matrix.tocsc())
    U_free = lu_a.solve(loads)
    U = np.zeros((n_dofs, trace_dofs.size))
    U[dofmap.free] = U_free

    N = C.T @ (conorm @ U)
    asym = np.linalg.norm(N - N.T) / max(np.linalg.norm(N), 1e-300)
    if asym > 1e-8:
        raise RuntimeError(f"NtN matrix asymmetry {asym:.2e}")
    N = 0.5 * (N + N.T)

    Mb = assemble(boundary_mass("All"), mesh, full, domain, quad_order).matrix
    J0 = C.T @ (Mb @ C)
    J0 = 0.5 * (J0 + J0.T)
    ev = np.linalg.eigvalsh(J0)
    if ev.min() <= ev.max() * 1e-12:
        raise RuntimeError("boundary-trace basis gives a rank-deficient J0")
    return NtnOperator(N=N, J0=J0, trace_dofs=trace_dofs, extensions=C, mesh=mesh)


def ntn_eigenvalues(op: NtnOperator, k: int) -> np.ndarray:
    """Largest k eigenvalues mu of N f = mu J0 f (mu = 1/d for Steklov d)."""
    mu = sla.eigh(op.N, op.J0, eigvals_only=True)
    mu = np.sort(mu)[::-1]
    return mu[:k]


# ---------------------------------------------------------------------------
# Q1 (bilinear) companion discretization: the splitting oracle

def _q1_local(hx: float, hy: float):
    t, w = gauss01(2)
    xi = np.repeat(t, 2)
    eta = np.tile(t, 2)
    wq = np.outer(w, w).ravel() * hx * hy
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])
    Nx = np.stack([-(1 - eta), (1 - eta), eta, -eta]) / hx
    Ny = np.stack([-(1 - xi), -xi, xi, (1 - xi)]) / hy
    K = np.einsum("iq,jq,q->ij", Nx, Nx, wq) + np.einsum("iq,jq,q->ij", Ny, Ny, wq)
    M = np.einsum("iq,jq,q->ij", N, N, wq)
    return K, M


def q1_matrices(mesh: Mesh):
    """Bilinear stiffness and mass on the mesh nodes."""
    n = mesh.n_nodes
    K = sp.lil_matrix((n, n))
    M = sp.lil_matrix((n, n))
    hx = mesh.w_len / mesh.nx
    for ey in range(mesh.ny):
        Kl, Ml = _q1_local(hx, mesh.hy(ey))
        for ex in range(mesh.nx):
            idx = np.array(mesh.elem_nodes(ex, ey))
            K[np.ix_(idx, idx)] += Kl
            M[np.ix_(idx, idx)] += Ml
    return K.tocsr(), M.tocsr()


def q1_solve_dirichlet(mesh: Mesh, K: sp.csr_matrix, rhs: np.ndarray,
                       boundary_values: np.ndarray) -> np.ndarray:
    """Solve K u = rhs with nodal values pinned on the whole boundary."""
    bnodes = mesh.boundary_nodes()
    inner = np.setdiff1d(np.arange(mesh.n_nodes), bnodes)
    u = np.zeros(mesh.n_nodes)
    u[bnodes] = boundary_values[bnodes]
    r = rhs[inner] - K[inner][:, bnodes] @ u[bnodes]
    u[inner] = spla.spsolve(K[inner][:, inner].tocsc(), r)
    return u


def mixed_splitting_solve(mesh: Mesh, f_trace) -> tuple[np.ndarray, np.ndarray]:
    """Second-order splitting for the Navier problem: v harmonic with trace f,
    then u with Lap(u) = v and zero trace.  Returns nodal (v, u)."""
    K, M = q1_matrices(mesh)
    pts = mesh.node_coords()
    fvals = f_trace(pts[:, 0], pts[:, 1])
    v = q1_solve_dirichlet(mesh, K, np.zeros(mesh.n_nodes), fvals)
    # int grad u . grad phi = - int v phi  for phi in H^1_0
    u = q1_solve_dirichlet(mesh, K, -np.asarray(M @ v), np.zeros(mesh.n_nodes))
    return v, u


def q1_eval(mesh: Mesh, nodal: np.ndarray, x, y, deriv: str = "value"):
    """Evaluate a Q1 nodal field (or its gradient components) at points."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    ix = np.clip(np.searchsorted(mesh.xs, x, side="right") - 1, 0, mesh.nx - 1)
    iy = np.clip(np.searchsorted(mesh.ys, y, side="right") - 1, 0, mesh.ny - 1)
    hx = mesh.w_len / mesh.nx
    hys = np.diff(mesh.ys)
    xi = (x - mesh.xs[ix]) / hx
    eta = (y - mesh.ys[iy]) / hys[iy]
    nyp = mesh.ny + 1
    n0 = ix * nyp + iy
    c = [nodal[n0], nodal[n0 + nyp], nodal[n0 + nyp + 1], nodal[n0 + 1]]
    if deriv == "value":
        sh = [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta]
    elif deriv == "dx":
        sh = [-(1 - eta) / hx, (1 - eta) / hx, eta / hx, -eta / hx]
    elif deriv == "dy":
        sh = [-(1 - xi) / hys[iy], -xi / hys[iy], xi / hys[iy], (1 - xi) / hys[iy]]
    else:
        raise ValueError("deriv must be 'value', 'dx' or 'dy'")
    return sum(ci * si for ci, si in zip(c, sh))


def relative_h1_error(u_fef: FeFunction, oracle_mesh: Mesh,
                      oracle_nodal: np.ndarray, nq: int = 3) -> float:
    """Full H^1 distance between a Hermite function and a Q1 oracle field,
    relative to the oracle norm, integrated on the oracle mesh."""
    t, w = gauss01(nq)
    hx = oracle_mesh.w_len / oracle_mesh.nx
    num = 0.0
    den = 0.0
    for ey in range(oracle_mesh.ny):
        hy = oracle_mesh.hy(ey)
        xq = (oracle_mesh.xs[:-1, None, None] + hx * t[None, :, None])
        xq = np.broadcast_to(xq, (oracle_mesh.nx, nq, nq)).ravel()
        yq = oracle_mesh.ys[ey] + hy * t
        yq = np.broadcast_to(yq[None, None, :], (oracle_mesh.nx, nq, nq)).ravel()
        wq = np.broadcast_to(np.outer(w, w)[None] * hx * hy,
                             (oracle_mesh.nx, nq, nq)).ravel()
        uo = q1_eval(oracle_mesh, oracle_nodal, xq, yq)
        uox = q1_eval(oracle_mesh, oracle_nodal, xq, yq, "dx")
        uoy = q1_eval(oracle_mesh, oracle_nodal, xq, yq, "dy")
        uh = u_fef.value(xq, yq)
        uhx = u_fef.eval(xq, yq, 1, 0)
        uhy = u_fef.eval(xq, yq, 0, 1)
        num += np.sum(wq * ((uh - uo) ** 2 + (uhx - uox) ** 2 + (uhy - uoy) ** 2))
        den += np.sum(wq * (uo ** 2 + uox ** 2 + uoy ** 2))
    return float(np.sqrt(num / den))
