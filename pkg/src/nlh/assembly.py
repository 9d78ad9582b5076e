"""P1 space, form assembly and the linear systems of the nonlinear iterations.

All matrices are assembled on the free (non-Dirichlet) vertices. The
sesquilinear form is linear in the trial and conjugate-linear in the test
function; with real hat functions as test functions, the Galerkin equations
of the Newton step read ``K c + L conj(c) = F``, which is solved as a real
system in ``(Re c, Im c)``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import IMPEDANCE
from .quadrature import interval_rule, p1_moment_tensor, triangle_rule

SOURCE_DEGREE = 10
EDGE_POINTS = 8
SCHEMES = ("newton", "frozen", "modified_newton")

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


class FeSpace:
    """Continuous P1 functions vanishing on the Dirichlet boundary.

    Attributes
    ----------
    mesh : Mesh
    dof : (nv,) int array, global dof of each vertex or ``-1`` if eliminated
    free : (n_dofs,) int array, vertex of each dof
    """

    def __init__(self, mesh):
        self.mesh = mesh
        dirichlet = np.zeros(mesh.n_vertices, bool)
        dirichlet[mesh.dirichlet_vertices] = True
        self.free = np.flatnonzero(~dirichlet)
        self.dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.dof[self.free] = np.arange(len(self.free))
        self.local_dofs = self.dof[mesh.triangles]

    @property
    def n_dofs(self):
        return len(self.free)

    def extend(self, coeffs):
        """Nodal values on all vertices (zero on the Dirichlet boundary)."""
        coeffs = np.asarray(coeffs)
        full = np.zeros(self.mesh.n_vertices, dtype=np.result_type(coeffs, float))
        full[self.free] = coeffs
        return full

    def restrict(self, values):
        return np.asarray(values)[self.free]

    @cached_property
    def grads(self):
        """(nt, 3, 2) gradients of the barycentric coordinates."""
        p = self.mesh.vertices[self.mesh.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
        return np.stack([-g1 - g2, g1, g2], axis=1)

    @cached_property
    def edge_geometry(self):
        """Unit normal (outward from ``edge_to_tri[:, 0]``) and length of every edge."""
        mesh = self.mesh
        p = mesh.vertices[mesh.edges]
        d = p[:, 1] - p[:, 0]
        length = np.linalg.norm(d, axis=1)
        n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        mid = p.mean(axis=1)
        out = np.einsum("ij,ij->i", n, mid - mesh.centroids[mesh.edge_to_tri[:, 0]])
        n[out < 0] *= -1.0
        return n, length

    def build_sparse(self, rows, cols, vals, vertex_numbering=True):
        """Sum COO triplets given in vertex numbering into a dof CSR matrix."""
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        vals = np.asarray(vals).ravel()
        if vertex_numbering:
            rows, cols = self.dof[rows], self.dof[cols]
        keep = (rows >= 0) & (cols >= 0)
        A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(self.n_dofs, self.n_dofs)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A

    def build_vector(self, rows, vals):
        rows = self.dof[np.asarray(rows).ravel()]
        vals = np.asarray(vals).ravel()
        keep = rows >= 0
        return np.bincount(rows[keep], weights=vals[keep].real, minlength=self.n_dofs) \
            + 1j * np.bincount(rows[keep], weights=vals[keep].imag, minlength=self.n_dofs)


def build_space(mesh):
    return FeSpace(mesh)


@dataclass(eq=False)
class Solution:
    """Complex P1 coefficients on the free dofs of ``space``."""

    space: FeSpace
    coeffs: np.ndarray

    @property
    def values(self):
        return self.space.extend(self.coeffs)

    @property
    def mesh(self):
        return self.space.mesh


def interpolate(space, func):
    """Nodal interpolant of ``func(points)`` (Dirichlet values dropped)."""
    return Solution(space, np.asarray(func(space.mesh.vertices[space.free]), dtype=complex))


# ----------------------------------------------------------------------
@dataclass(eq=False)
class FormBlocks:
    """Mesh matrices of one problem, restricted to the free dofs.

    ``S`` stiffness, ``M`` mass, ``B`` impedance boundary mass, ``J`` the
    normal-derivative jump matrix (penalty not included), ``Mk2`` the mass
    weighted by ``k_T²`` and ``Bk`` the boundary mass weighted by ``k``.
    ``load`` is ``(f, φ_j) + <g, φ_j>``.
    """

    S: sp.csr_matrix
    M: sp.csr_matrix
    B: sp.csr_matrix
    J: sp.csr_matrix
    Mk2: sp.csr_matrix
    Bk: sp.csr_matrix
    load: np.ndarray
    gamma: complex

    @cached_property
    def linear_part(self):
        """(∇u,∇v) - k²(u,v) + i k <u,v> + γ J(u,v) as a complex matrix."""
        A = (self.S - self.Mk2).astype(complex) + 1j * self.Bk
        if self.gamma != 0:
            A = A + self.gamma * self.J
        return A.tocsr()

    @cached_property
    def energy(self):
        """Gram matrix of the energy norm (|v|₁² + k²||v||₀²)."""
        return (self.S + self.Mk2).tocsr()


def element_stiffness(space):
    g = space.grads
    return space.mesh.areas[:, None, None] * np.einsum("tik,tjk->tij", g, g)


def element_mass(space):
    return space.mesh.areas[:, None, None] * _LOCAL_MASS[None]


def _triplets(space, local, tris=None):
    t = space.mesh.triangles if tris is None else space.mesh.triangles[tris]
    rows = np.repeat(t[:, :, None], 3, axis=2)
    cols = np.repeat(t[:, None, :], 3, axis=1)
    return rows, cols, local


def jump_matrix(space):
    """Σ_e h_e ∫_e [∂u/∂n][∂v/∂n] over interior edges, with ``h_e = |e|``."""
    mesh = space.mesh
    interior = np.flatnonzero(mesh.edge_to_tri[:, 1] >= 0)
    T1, T2 = mesh.edge_to_tri[interior].T
    n, length = space.edge_geometry
    n = n[interior]
    c = np.concatenate([np.einsum("tij,tj->ti", space.grads[T1], n),
                        -np.einsum("tij,tj->ti", space.grads[T2], n)], axis=1)
    verts = np.concatenate([mesh.triangles[T1], mesh.triangles[T2]], axis=1)
    w = length[interior] ** 2
    local = w[:, None, None] * c[:, :, None] * c[:, None, :]
    rows = np.repeat(verts[:, :, None], 6, axis=2)
    cols = np.repeat(verts[:, None, :], 6, axis=1)
    return space.build_sparse(rows, cols, local)


def _impedance_edges(space):
    mesh = space.mesh
    idx = np.flatnonzero(mesh.edge_tags == IMPEDANCE)
    return idx


def boundary_mass(space, weights=None):
    mesh = space.mesh
    idx = _impedance_edges(space)
    _, length = space.edge_geometry
    L = length[idx] if weights is None else length[idx] * weights
    local = L[:, None, None] * (np.ones((2, 2)) + np.eye(2))[None] / 6.0
    e = mesh.edges[idx]
    rows = np.repeat(e[:, :, None], 2, axis=2)
    cols = np.repeat(e[:, None, :], 2, axis=1)
    return space.build_sparse(rows, cols, local)


def source_load(space, f, degree=SOURCE_DEGREE):
    """(f, φ_j) by a triangle rule of the given degree."""
    if f is None:
        return np.zeros(space.n_dofs, complex)
    mesh = space.mesh
    bary, w = triangle_rule(degree)
    pts = np.einsum("qi,tij->tqj", bary, mesh.vertices[mesh.triangles])
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=complex).reshape(len(pts), -1)
    local = mesh.areas[:, None] * ((vals * w) @ bary)
    return space.build_vector(mesh.triangles, local)


def impedance_quadrature(space, n=EDGE_POINTS):
    """Points, outward normals, shape values and weights on impedance edges."""
    mesh = space.mesh
    idx = _impedance_edges(space)
    normals, length = space.edge_geometry
    s, w = interval_rule(n)
    p = mesh.vertices[mesh.edges[idx]]
    pts = p[:, None, 0, :] * (1.0 - s)[None, :, None] + p[:, None, 1, :] * s[None, :, None]
    nrm = np.repeat(normals[idx][:, None, :], n, axis=1)
    shape = np.stack([1.0 - s, s], axis=1)
    return idx, pts, nrm, shape, length[idx][:, None] * w[None, :]


def boundary_load(space, g, n=EDGE_POINTS):
    """<g, φ_j> on the impedance boundary by Gauss-Legendre on each edge."""
    if g is None:
        return np.zeros(space.n_dofs, complex)
    idx, pts, nrm, shape, wts = impedance_quadrature(space, n)
    if len(idx) == 0:
        return np.zeros(space.n_dofs, complex)
    vals = np.asarray(g(pts.reshape(-1, 2), nrm.reshape(-1, 2)), dtype=complex)
    vals = vals.reshape(len(idx), -1)
    local = (vals * wts) @ shape
    return space.build_vector(space.mesh.edges[idx], local)


def assemble_blocks(space, problem):
    mesh = space.mesh
    kt = problem.k_elements(mesh)
    Ke = element_stiffness(space)
    Me = element_mass(space)
    S = space.build_sparse(*_triplets(space, Ke))
    M = space.build_sparse(*_triplets(space, Me))
    Mk2 = space.build_sparse(*_triplets(space, (kt ** 2)[:, None, None] * Me))
    # wave number on an impedance edge is that of its triangle
    k_edge = kt[mesh.edge_to_tri[_impedance_edges(space), 0]]
    B = boundary_mass(space)
    Bk = boundary_mass(space, k_edge)
    J = jump_matrix(space)
    load = source_load(space, problem.f) + boundary_load(space, problem.g)
    return FormBlocks(S, M, B, J, Mk2, Bk, load, complex(problem.gamma))


# ----------------------------------------------------------------------
# Kerr terms, integrated exactly with the degree-4 moments of P1 functions
def nonlinear_terms(space, problem, w_coeffs):
    """Weighted Ω₀ masses and the cubic load for the field ``w``.

    Returns
    -------
    Mabs : csr, entries ε k_T² ∫_Ω₀ |w|² φ_i φ_j
    Msq : csr, entries ε k_T² ∫_Ω₀ w² φ_i φ_j
    cubic : vector, entries ε k_T² ∫_Ω₀ |w|² w φ_j
    """
    mesh = space.mesh
    tris = np.flatnonzero(mesh.in_omega0)
    n = space.n_dofs
    if problem.epsilon == 0 or len(tris) == 0:
        zero = sp.csr_matrix((n, n))
        return zero, zero.astype(complex), np.zeros(n, complex)
    Q = p1_moment_tensor(4)
    W = space.extend(w_coeffs).astype(complex)[mesh.triangles[tris]]
    scale = problem.epsilon * problem.k_elements(mesh)[tris] ** 2 * mesh.areas[tris]
    abs_local = np.einsum("ijkl,tk,tl->tij", Q, W, W.conj()).real * scale[:, None, None]
    sq_local = np.einsum("ijkl,tk,tl->tij", Q, W, W) * scale[:, None, None]
    cubic_local = np.einsum("ijkl,tj,tk,tl->ti", Q, W, W, W.conj()) * scale[:, None]
    Mabs = space.build_sparse(*_triplets(space, abs_local, tris))
    Msq = space.build_sparse(*_triplets(space, sq_local, tris))
    cubic = space.build_vector(mesh.triangles[tris], cubic_local)
    return Mabs, Msq, cubic


@dataclass(eq=False)
class RealBlockSystem:
    """``K c + L conj(c) = F`` and its real 2N x 2N form.

    ``matrix @ [Re c, Im c] = rhs`` with ``rhs = [Re F, Im F]``.
    """

    K: sp.csr_matrix
    L: sp.csr_matrix
    F: np.ndarray

    @cached_property
    def matrix(self):
        Kr, Ki = self.K.real, self.K.imag
        Lr, Li = self.L.real, self.L.imag
        A = sp.bmat([[Kr + Lr, Li - Ki], [Ki + Li, Kr - Lr]], format="csr")
        A.sort_indices()
        return A

    @property
    def rhs(self):
        return np.concatenate([self.F.real, self.F.imag])

    @property
    def n(self):
        return self.K.shape[0]

    def apply(self, c):
        """Complex action of the operator on ``c``."""
        return self.K @ c + self.L @ np.conj(c)

    @staticmethod
    def to_complex(x):
        n = len(x) // 2
        return x[:n] + 1j * x[n:]

    @staticmethod
    def to_real(c):
        return np.concatenate([np.real(c), np.imag(c)])


def _check(blocks, space, u_prev):
    if blocks.S.shape[0] != space.n_dofs or len(u_prev) != space.n_dofs:
        raise ValueError("dimension mismatch between blocks, space and iterate")


def assemble_newton_system(blocks, space, problem, u_prev):
    """Newton step: a^γ_{√2 u}(u⁺, v) - k²ε((u)² conj(u⁺), v)_Ω₀ = (f - 2k²ε|u|²u, v) + <g, v>."""
    u_prev = np.asarray(u_prev, dtype=complex)
    _check(blocks, space, u_prev)
    Mabs, Msq, cubic = nonlinear_terms(space, problem, u_prev)
    K = (blocks.linear_part - 2.0 * Mabs).tocsr()
    return RealBlockSystem(K, (-Msq).tocsr(), blocks.load - 2.0 * cubic)


def assemble_fixed_point_system(blocks, space, problem, u_prev, mode="frozen"):
    """Frozen-nonlinearity or modified-Newton step (both complex-linear)."""
    u_prev = np.asarray(u_prev, dtype=complex)
    _check(blocks, space, u_prev)
    Mabs, _, cubic = nonlinear_terms(space, problem, u_prev)
    zero = sp.csr_matrix(blocks.S.shape, dtype=complex)
    if mode == "frozen":
        return RealBlockSystem((blocks.linear_part - Mabs).tocsr(), zero, blocks.load.copy())
    if mode == "modified_newton":
        return RealBlockSystem((blocks.linear_part - 2.0 * Mabs).tocsr(), zero,
                               blocks.load - cubic)
    raise ValueError(f"unknown fixed-point mode {mode!r}")


def assemble_system(blocks, space, problem, u_prev, scheme="newton"):
    if scheme == "newton":
        return assemble_newton_system(blocks, space, problem, u_prev)
    return assemble_fixed_point_system(blocks, space, problem, u_prev, scheme)


def linear_system(blocks):
    """The Helmholtz system with the Kerr term dropped."""
    zero = sp.csr_matrix(blocks.S.shape, dtype=complex)
    return RealBlockSystem(blocks.linear_part, zero, blocks.load.copy())


def residual_vector(space, problem, u_h, blocks=None):
    """a^γ_{u_h}(u_h, φ_j) - (f, φ_j) - <g, φ_j> for every free dof."""
    if blocks is None:
        blocks = assemble_blocks(space, problem)
    u_h = np.asarray(u_h, dtype=complex)
    _, _, cubic = nonlinear_terms(space, problem, u_h)
    return blocks.linear_part @ u_h - cubic - blocks.load


def write_coo(matrix, path):
    """Dump a sparse matrix as ``row col value`` lines (complex as re im)."""
    A = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"% {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            if np.iscomplexobj(A.data):
                fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")
            else:
                fh.write(f"{i} {j} {v:.17g}\n")
