"""Residual error estimator, data oscillation, Dörfler marking and the
elliptic projection used to check the estimator.

The element indicator adds the volume residuals of the edge neighbours::

    η_T² = Σ_{T' ∈ Σ(T)} h_{T'}² ||R_{T'}||²_{T'} + h_T ||R_∂T||²_∂T

where Σ(T) are the triangles sharing an edge with T (T itself excluded) and
``h_T = |T|^½``.
"""
import csv
import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import Solution, element_mass, element_stiffness, _triplets
from .mesh import IMPEDANCE
from .quadrature import interval_rule, triangle_rule

log = logging.getLogger(__name__)

RESIDUAL_DEGREE = 10
EDGE_POINTS = 8

# mutation hook for the verification suite: -1 turns the normal-derivative
# jump into a difference of one-sided derivatives
_JUMP_SIGN = 1.0


@dataclass
class EstimateReport:
    """Per-element squared indicators and their global totals."""

    eta_sq: np.ndarray
    eta_std_sq: np.ndarray
    osc_sq: np.ndarray
    mesh_uid: int

    @property
    def eta(self):
        return float(np.sqrt(self.eta_sq.sum()))

    @property
    def eta_std(self):
        return float(np.sqrt(self.eta_std_sq.sum()))

    @property
    def osc(self):
        return float(np.sqrt(self.osc_sq.sum()))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# triangle: element id; eta_sq: squared indicator; "
                     "osc_sq: squared oscillation\n")
            w = csv.writer(fh)
            w.writerow(["triangle", "eta_sq", "osc_sq"])
            for i, (e, o) in enumerate(zip(self.eta_sq, self.osc_sq)):
                w.writerow([i, repr(float(e)), repr(float(o))])

    def summary_json(self):
        return json.dumps({"n_elements": int(len(self.eta_sq)), "eta": self.eta,
                           "eta_std": self.eta_std, "osc": self.osc})


# ----------------------------------------------------------------------
def _element_points(mesh, degree):
    bary, w = triangle_rule(degree)
    pts = np.einsum("qi,tij->tqj", bary, mesh.vertices[mesh.triangles])
    return bary, w, pts


def element_residuals_sq(space, problem, u_h, degree=RESIDUAL_DEGREE):
    """||f + k²(1 + ε 1_Ω₀ |u_h|²) u_h||²_{0,T} for every triangle."""
    mesh = space.mesh
    bary, w, pts = _element_points(mesh, degree)
    uq = space.extend(np.asarray(u_h, complex))[mesh.triangles] @ bary.T
    kt = problem.k_elements(mesh)[:, None]
    eps = np.where(mesh.in_omega0, problem.epsilon, 0.0)[:, None]
    R = kt ** 2 * (1.0 + eps * np.abs(uq) ** 2) * uq
    if problem.f is not None:
        R = R + np.asarray(problem.f(pts.reshape(-1, 2)), complex).reshape(R.shape)
    return (np.abs(R) ** 2 @ w) * mesh.areas


def element_residual_sq(space, problem, u_h, T, degree=RESIDUAL_DEGREE):
    return float(element_residuals_sq(space, problem, u_h, degree)[T])


def interior_jumps(space, u_h):
    """Normal-derivative jump of ``u_h`` across every interior edge.

    Returns the interior edge indices and the (constant) jumps.
    """
    mesh = space.mesh
    interior = np.flatnonzero(mesh.edge_to_tri[:, 1] >= 0)
    T1, T2 = mesh.edge_to_tri[interior].T
    n, _ = space.edge_geometry
    local = space.extend(np.asarray(u_h, complex))[mesh.triangles]
    grad = np.einsum("ti,tij->tj", local, space.grads)
    nn = n[interior]
    jump = (np.einsum("ij,ij->i", grad[T1], nn)
            - _JUMP_SIGN * np.einsum("ij,ij->i", grad[T2], nn))
    return interior, jump


def edge_residuals_sq(space, problem, u_h, n_points=EDGE_POINTS):
    """||R_e||²_{0,e} for every edge: ¼|jump|²|e| inside, the impedance
    defect on Γ_imp and zero on Γ_Dir."""
    mesh = space.mesh
    normals, length = space.edge_geometry
    out = np.zeros(len(mesh.edges))
    interior, jump = interior_jumps(space, u_h)
    out[interior] = 0.25 * np.abs(jump) ** 2 * length[interior]

    imp = np.flatnonzero(mesh.edge_tags == IMPEDANCE)
    if len(imp):
        s, w = interval_rule(n_points)
        full = space.extend(np.asarray(u_h, complex))
        T = mesh.edge_to_tri[imp, 0]
        grad = np.einsum("ti,tij->tj", full[mesh.triangles[T]], space.grads[T])
        dudn = np.einsum("ij,ij->i", grad, normals[imp])
        ends = mesh.edges[imp]
        uq = full[ends[:, 0], None] * (1.0 - s) + full[ends[:, 1], None] * s
        kt = problem.k_elements(mesh)[T]
        R = -dudn[:, None] - 1j * kt[:, None] * uq
        if problem.g is not None:
            p = mesh.vertices[ends]
            pts = p[:, None, 0] * (1.0 - s)[None, :, None] + p[:, None, 1] * s[None, :, None]
            nrm = np.repeat(normals[imp][:, None, :], len(s), axis=1)
            R = R + np.asarray(problem.g(pts.reshape(-1, 2), nrm.reshape(-1, 2)),
                               complex).reshape(R.shape)
        out[imp] = (np.abs(R) ** 2 @ w) * length[imp]
    return out


def edge_residual_sq(space, problem, u_h, e):
    return float(edge_residuals_sq(space, problem, u_h)[e])


# ----------------------------------------------------------------------
# oscillation: distance of f to P3(T) and of g to P1(e)
_P3_EXPONENTS = [(a, b) for d in range(4) for a in range(d + 1) for b in [d - a]]


def _p3_basis(bary):
    return np.stack([bary[:, 1] ** a * bary[:, 2] ** b for a, b in _P3_EXPONENTS], axis=1)


def _projection_defect_sq(vals, basis, w):
    """||v - Πv||² / measure for values at quadrature points, row-wise.

    The Gram matrix of barycentric monomials is affine invariant, so one
    reference factorisation serves every element.
    """
    G = basis.T @ (w[:, None] * basis)
    rhs = (vals * w) @ basis
    coef = np.linalg.solve(G, rhs.T).T
    defect = vals - coef @ basis.T
    return np.abs(defect) ** 2 @ w


def oscillation_sq(space, problem, degree=RESIDUAL_DEGREE, n_points=EDGE_POINTS):
    """h_T² ||f - Π₃f||²_T + h_T ||g - Π₁g||²_{∂T ∩ Γ_imp} per triangle."""
    mesh = space.mesh
    osc = np.zeros(mesh.n_triangles)
    if problem.f is not None:
        bary, w, pts = _element_points(mesh, degree)
        vals = np.asarray(problem.f(pts.reshape(-1, 2)), complex).reshape(pts.shape[:2])
        osc += mesh.h ** 2 * mesh.areas * _projection_defect_sq(vals, _p3_basis(bary), w)
    imp = np.flatnonzero(mesh.edge_tags == IMPEDANCE)
    if problem.g is not None and len(imp):
        normals, length = space.edge_geometry
        s, w = interval_rule(n_points)
        p = mesh.vertices[mesh.edges[imp]]
        pts = p[:, None, 0] * (1.0 - s)[None, :, None] + p[:, None, 1] * s[None, :, None]
        nrm = np.repeat(normals[imp][:, None, :], len(s), axis=1)
        vals = np.asarray(problem.g(pts.reshape(-1, 2), nrm.reshape(-1, 2)),
                          complex).reshape(len(imp), -1)
        basis = np.stack([1.0 - s, s], axis=1)
        defect = length[imp] * _projection_defect_sq(vals, basis, w)
        T = mesh.edge_to_tri[imp, 0]
        np.add.at(osc, T, mesh.h[T] * defect)
    return osc


# ----------------------------------------------------------------------
def estimate(space, problem, u_h):
    """Indicators η_T², standard indicators and oscillations for ``u_h``.

    ``u_h`` is a coefficient vector or a :class:`~nlh.assembly.Solution`.
    """
    mesh = space.mesh
    c = np.asarray(getattr(u_h, "coeffs", u_h), complex)
    vol = mesh.h ** 2 * element_residuals_sq(space, problem, c)
    edge = edge_residuals_sq(space, problem, c)
    bnd = mesh.h * edge[mesh.tri_edges].sum(axis=1)
    nb = mesh.neighbors
    neighbor_vol = np.where(nb >= 0, vol[np.maximum(nb, 0)], 0.0).sum(axis=1)
    return EstimateReport(eta_sq=neighbor_vol + bnd, eta_std_sq=vol + bnd,
                          osc_sq=oscillation_sq(space, problem), mesh_uid=mesh.uid)


def dorfler_mark(report, theta_D):
    """Minimal set with Σ_M η_T² ≥ θ² Σ η_T² (ties broken by element id)."""
    if not 0 < theta_D <= 1:
        raise ValueError("theta_D must lie in (0, 1]")
    eta_sq = np.asarray(getattr(report, "eta_sq", report), dtype=float)
    if eta_sq.size == 0 or not eta_sq.sum() > 0:
        return set()
    order = np.lexsort((np.arange(len(eta_sq)), -eta_sq))
    cum = np.cumsum(eta_sq[order])
    target = theta_D ** 2 * cum[-1]
    count = int(np.searchsorted(cum, target, side="left")) + 1
    return set(order[:min(count, len(order))].tolist())


# ----------------------------------------------------------------------
def elliptic_projection(space, exact, degree=RESIDUAL_DEGREE, k=None):
    """P_h u with (∇P_h u, ∇v) + (P_h u, v) = (∇u, ∇v) + (u, v) for all v_h."""
    mesh = space.mesh
    if k is not None and np.max(k * mesh.h * np.sqrt(2.0)) > 2 * np.pi:
        warnings.warn("k h exceeds 2π: quadrature may not resolve the exact solution",
                      RuntimeWarning, stacklevel=2)
    bary, w, pts = _element_points(mesh, degree)
    flat = pts.reshape(-1, 2)
    u = np.asarray(exact.value(flat), complex).reshape(pts.shape[:2])
    du = np.asarray(exact.gradient(flat), complex).reshape(pts.shape[:2] + (2,))
    grad_part = np.einsum("tqj,q,tij->ti", du, w, space.grads)
    mass_part = (u * w) @ bary
    local = mesh.areas[:, None] * (grad_part + mass_part)
    rhs = space.build_vector(mesh.triangles, local)
    A = space.build_sparse(*_triplets(space, element_stiffness(space) + element_mass(space)))
    lu = spla.splu(A.tocsc())
    coeffs = lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    return Solution(space, coeffs)
