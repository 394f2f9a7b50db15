"""Structured tensor-product quadrilateral meshes of the reference strip.

Nodes are laid out column-major: node(ix, iy) = ix * (ny + 1) + iy, which
keeps the matrix bandwidth proportional to ny for the wide, shallow meshes
used here.  Each node carries four Hermite degrees of freedom
(value, d/dx, d/dy, d2/dxdy).  Boundary edges are tagged Gamma (the top,
y = 0) or Sigma (bottom and lateral sides).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "DofMap", "build_mesh", "mark_essential", "DOF_V", "DOF_VX",
           "DOF_VY", "DOF_VXY"]

DOF_V, DOF_VX, DOF_VY, DOF_VXY = 0, 1, 2, 3


@dataclass(frozen=True)
class Mesh:
    nx: int
    ny: int
    w_len: float
    grading: float
    xs: np.ndarray          # nx+1 column abscissae
    ys: np.ndarray          # ny+1 row ordinates, ys[-1] = 0

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elems(self) -> int:
        return self.nx * self.ny

    def node(self, ix, iy):
        return ix * (self.ny + 1) + iy

    def node_coords(self) -> np.ndarray:
        """(n_nodes, 2) array of coordinates in node order."""
        xx = np.repeat(self.xs, self.ny + 1)
        yy = np.tile(self.ys, self.nx + 1)
        return np.column_stack([xx, yy])

    def elem_nodes(self, ex, ey):
        """Counterclockwise corner nodes (bl, br, tr, tl)."""
        return (self.node(ex, ey), self.node(ex + 1, ey),
                self.node(ex + 1, ey + 1), self.node(ex, ey + 1))

    def hx(self, ex) -> float:
        return self.xs[ex + 1] - self.xs[ex]

    def hy(self, ey) -> float:
        return self.ys[ey + 1] - self.ys[ey]

    # node index helpers for the four boundary sides
    def top_nodes(self):
        return np.array([self.node(i, self.ny) for i in range(self.nx + 1)])

    def bottom_nodes(self):
        return np.array([self.node(i, 0) for i in range(self.nx + 1)])

    def left_nodes(self):
        return np.array([self.node(0, j) for j in range(self.ny + 1)])

    def right_nodes(self):
        return np.array([self.node(self.nx, j) for j in range(self.ny + 1)])

    def boundary_nodes(self):
        mask = np.zeros(self.n_nodes, dtype=bool)
        for arr in (self.top_nodes(), self.bottom_nodes(),
                    self.left_nodes(), self.right_nodes()):
            mask[arr] = True
        return np.nonzero(mask)[0]

    def corner_nodes(self):
        return np.array([self.node(0, 0), self.node(self.nx, 0),
                         self.node(self.nx, self.ny), self.node(0, self.ny)])

    def gamma_nodes(self):
        """Nodes on the Gamma (top) boundary."""
        return self.top_nodes()

    def sigma_nodes(self):
        """Nodes on the Sigma boundary (bottom plus lateral sides)."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        for arr in (self.bottom_nodes(), self.left_nodes(), self.right_nodes()):
            mask[arr] = True
        return np.nonzero(mask)[0]

    def edge_tag(self, side: str) -> str:
        return "Gamma" if side == "top" else "Sigma"

    def dump(self) -> str:
        """Plain-text node/element listing for debugging."""
        lines = []
        coords = self.node_coords()
        for i, (x, y) in enumerate(coords):
            lines.append(f"node {i} {x!r} {y!r}")
        for ex in range(self.nx):
            for ey in range(self.ny):
                e = ex * self.ny + ey
                n0, n1, n2, n3 = self.elem_nodes(ex, ey)
                lines.append(f"elem {e} {n0} {n1} {n2} {n3}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DofMap:
    """Global Hermite DOF numbering with essential-constraint marks.

    Global index of (node, type) is 4*node + type.  `constrained` flags the
    essentially fixed DOFs; `free_index` maps global -> free numbering
    (-1 for constrained DOFs).
    """

    n_nodes: int
    constrained: np.ndarray = field(repr=False)
    bc: str = "none"

    def __post_init__(self):
        if self.constrained.shape != (4 * self.n_nodes,):
            raise ValueError("constraint mask has wrong length")

    @property
    def n_dofs(self) -> int:
        return 4 * self.n_nodes

    @property
    def free(self) -> np.ndarray:
        return np.nonzero(~self.constrained)[0]

    @property
    def n_free(self) -> int:
        return int(np.sum(~self.constrained))

    def free_index(self) -> np.ndarray:
        idx = -np.ones(self.n_dofs, dtype=np.int64)
        idx[~self.constrained] = np.arange(self.n_free)
        return idx

    @staticmethod
    def unconstrained(mesh: Mesh) -> "DofMap":
        return DofMap(n_nodes=mesh.n_nodes,
                      constrained=np.zeros(4 * mesh.n_nodes, dtype=bool))


def build_mesh(nx: int, ny: int, grading: float = 1.0, w_len: float = 1.0) -> Mesh:
    """Tensor mesh of (0, w_len) x (-1, 0), optionally graded toward the top.

    With grading q < 1 the vertical spacings form a geometric sequence that is
    finest at y = 0: h_j = h_bottom * q**j summing exactly to 1.
    """
    if nx < 1 or ny < 1:
        raise ValueError("element counts must be >= 1")
    if not (0.0 < grading <= 1.0):
        raise ValueError("grading must lie in (0, 1]")
    xs = np.linspace(0.0, w_len, nx + 1)
    if grading == 1.0:
        ys = np.linspace(-1.0, 0.0, ny + 1)
    else:
        q = grading
        h0 = (1.0 - q) / (1.0 - q ** ny)
        spac = h0 * q ** np.arange(ny)
        ys = -1.0 + np.concatenate([[0.0], np.cumsum(spac)])
        ys[-1] = 0.0
    return Mesh(nx=nx, ny=ny, w_len=float(w_len), grading=float(grading),
                xs=xs, ys=ys)


def _parse_bc(bc: str):
    tokens = [t.strip() for t in bc.split("+") if t.strip()]
    known = {"DirichletAll", "ClampGamma", "ClampSigma"}
    bad = [t for t in tokens if t not in known]
    if bad:
        raise ValueError(f"unknown boundary condition tokens {bad}")
    if "DirichletAll" not in tokens:
        raise ValueError("essential constraints must include DirichletAll")
    return set(tokens)


def mark_essential(mesh: Mesh, dofmap: DofMap, bc: str) -> DofMap:
    """Essential constraints for the bicubic Hermite space.

    DirichletAll pins u = 0 on the whole boundary: every boundary node loses
    the value DOF plus the tangential-derivative DOF of each incident edge;
    corners lose both first derivatives and the mixed DOF.  ClampGamma /
    ClampSigma additionally pin the normal derivative (and the mixed DOF) on
    the tagged part, producing the clamped trace u_nu = 0 there.
    """
    tokens = _parse_bc(bc)
    c = dofmap.constrained.copy()

    def fix(nodes, dof_types):
        for t in dof_types:
            c[4 * np.asarray(nodes) + t] = True

    top, bottom = mesh.top_nodes(), mesh.bottom_nodes()
    left, right = mesh.left_nodes(), mesh.right_nodes()
    horizontal = np.unique(np.concatenate([top, bottom]))
    vertical = np.unique(np.concatenate([left, right]))

    # value everywhere on the boundary; tangential derivative per edge
    fix(mesh.boundary_nodes(), [DOF_V])
    fix(horizontal, [DOF_VX])
    fix(vertical, [DOF_VY])
    fix(mesh.corner_nodes(), [DOF_VX, DOF_VY, DOF_VXY])

    if "ClampGamma" in tokens:
        fix(top, [DOF_VY, DOF_VXY])
    if "ClampSigma" in tokens:
        fix(bottom, [DOF_VY, DOF_VXY])
        fix(vertical, [DOF_VX, DOF_VXY])

    return DofMap(n_nodes=dofmap.n_nodes, constrained=c, bc=bc)
