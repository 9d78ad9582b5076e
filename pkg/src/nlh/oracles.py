"""Slow reference implementations for cross-checking the vectorised code.

Everything here loops over elements and edges one at a time, builds its own
quadrature from ``numpy.polynomial.legendre`` and finds the mesh topology by
brute force. Only meant for meshes with a handful of elements.
"""
import itertools

import numpy as np

from .mesh import DIRICHLET, IMPEDANCE


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _area(P):
    d1, d2 = P[1] - P[0], P[2] - P[0]
    return 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])


def triangle_points(P, n=9):
    """Quadrature points and weights on the triangle with vertices ``P``
    (collapsed square, exact for degree ``2n - 2``)."""
    s, ws = _gauss(n)
    pts, wts = [], []
    area = _area(P)
    for a, wa in zip(s, ws):
        for b, wb in zip(s, ws):
            l1 = a
            l2 = b * (1.0 - a)
            pts.append((1.0 - l1 - l2) * P[0] + l1 * P[1] + l2 * P[2])
            wts.append(2.0 * area * wa * wb * (1.0 - a))
    return np.array(pts), np.array(wts)


def segment_points(A, B, n=9):
    s, w = _gauss(n)
    L = np.linalg.norm(B - A)
    return A[None] + s[:, None] * (B - A)[None], w * L


def basis(P):
    """Coefficients ``C`` with ``φ_i(x, y) = C[0, i] + C[1, i] x + C[2, i] y``."""
    return np.linalg.inv(np.column_stack([np.ones(3), P]))


def _phi(C, pts):
    return C[0][None, :] + pts @ C[1:]


def _edges(mesh):
    """Sorted vertex pair -> list of (triangle, opposite vertex)."""
    out = {}
    for t, tri in enumerate(mesh.triangles):
        for j in range(3):
            e = tuple(sorted((int(tri[(j + 1) % 3]), int(tri[(j + 2) % 3]))))
            out.setdefault(e, []).append((t, int(tri[j])))
    return out


def _outward(mesh, e, opposite):
    A, B = mesh.vertices[list(e)]
    d = B - A
    n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    if np.dot(n, mesh.vertices[opposite] - A) > 0:
        n = -n
    return n


def _boundary_tag(mesh, e):
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tuple(sorted((int(a), int(b)))) == e:
            return int(tag)
    return None


def free_vertices(mesh):
    dirichlet = set()
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag == DIRICHLET:
            dirichlet.update((int(a), int(b)))
    return [v for v in range(mesh.n_vertices) if v not in dirichlet]


def _k(problem, mesh, t):
    return problem.k_in if mesh.in_omega0[t] else problem.k


def dense_blocks(mesh, problem):
    """Dense S, M, B, J, Mk2, Bk and load on the free vertices."""
    free = free_vertices(mesh)
    idx = {v: i for i, v in enumerate(free)}
    n = len(free)
    S, M, Mk2 = (np.zeros((n, n)) for _ in range(3))
    B, Bk, J = (np.zeros((n, n)) for _ in range(3))
    load = np.zeros(n, complex)
    for t, tri in enumerate(mesh.triangles):
        P = mesh.vertices[tri]
        C = basis(P)
        pts, w = triangle_points(P)
        phi = _phi(C, pts)
        k = _k(problem, mesh, t)
        f = problem.f(pts) if problem.f is not None else np.zeros(len(pts))
        for a, va in enumerate(tri):
            if va not in idx:
                continue
            load[idx[va]] += np.sum(w * f * phi[:, a])
            for b, vb in enumerate(tri):
                if vb not in idx:
                    continue
                grad = np.dot(C[1:, a], C[1:, b]) * w.sum()
                mass = np.sum(w * phi[:, a] * phi[:, b])
                S[idx[va], idx[vb]] += grad
                M[idx[va], idx[vb]] += mass
                Mk2[idx[va], idx[vb]] += k ** 2 * mass
    for e, sides in _edges(mesh).items():
        A_, B_ = mesh.vertices[list(e)]
        L = np.linalg.norm(B_ - A_)
        if len(sides) == 2:
            (t1, o1), (t2, _) = sides
            nrm = _outward(mesh, e, o1)
            c = {}
            for t, sgn in ((t1, 1.0), (t2, -1.0)):
                C = basis(mesh.vertices[mesh.triangles[t]])
                for a, v in enumerate(mesh.triangles[t]):
                    c[int(v)] = c.get(int(v), 0.0) + sgn * np.dot(C[1:, a], nrm)
            for va, ca in c.items():
                for vb, cb in c.items():
                    if va in idx and vb in idx:
                        J[idx[va], idx[vb]] += L * L * ca * cb
        elif _boundary_tag(mesh, e) == IMPEDANCE:
            t, opp = sides[0]
            nrm = _outward(mesh, e, opp)
            pts, w = segment_points(A_, B_)
            s = np.linalg.norm(pts - A_, axis=1) / L
            shape = {e[0]: 1.0 - s, e[1]: s}
            k = _k(problem, mesh, t)
            g = (problem.g(pts, np.repeat(nrm[None], len(pts), axis=0))
                 if problem.g is not None else np.zeros(len(pts)))
            for va in e:
                if va not in idx:
                    continue
                load[idx[va]] += np.sum(w * g * shape[va])
                for vb in e:
                    if vb in idx:
                        m = np.sum(w * shape[va] * shape[vb])
                        B[idx[va], idx[vb]] += m
                        Bk[idx[va], idx[vb]] += k * m
    return dict(S=S, M=M, B=B, J=J, Mk2=Mk2, Bk=Bk, load=load)


def _field(mesh, free, coeffs):
    full = np.zeros(mesh.n_vertices, complex)
    full[free] = coeffs
    return full


def kerr_integrals(mesh, problem, u, v=None):
    """``∫ ε k² |u|² u φ_j`` and, with ``v``, ``∫ ε k² (2|u|² v + u² conj(v)) φ_j``
    over the Kerr subdomain."""
    free = free_vertices(mesh)
    idx = {x: i for i, x in enumerate(free)}
    U = _field(mesh, free, u)
    V = None if v is None else _field(mesh, free, v)
    cubic = np.zeros(len(free), complex)
    deriv = np.zeros(len(free), complex)
    for t, tri in enumerate(mesh.triangles):
        if not mesh.in_omega0[t] or problem.epsilon == 0:
            continue
        P = mesh.vertices[tri]
        pts, w = triangle_points(P)
        phi = _phi(basis(P), pts)
        uq = phi @ U[tri]
        scale = problem.epsilon * _k(problem, mesh, t) ** 2
        vq = None if V is None else phi @ V[tri]
        for a, va in enumerate(tri):
            if va not in idx:
                continue
            cubic[idx[va]] += scale * np.sum(w * np.abs(uq) ** 2 * uq * phi[:, a])
            if vq is not None:
                deriv[idx[va]] += scale * np.sum(
                    w * (2.0 * np.abs(uq) ** 2 * vq + uq ** 2 * np.conj(vq)) * phi[:, a])
    return cubic, deriv


def linear_operator(blocks, gamma):
    return blocks["S"] - blocks["Mk2"] + 1j * blocks["Bk"] + gamma * blocks["J"]


def residual(mesh, problem, u):
    """``a_{u}(u, φ_j) - (f, φ_j) - <g, φ_j>``."""
    blk = dense_blocks(mesh, problem)
    cubic, _ = kerr_integrals(mesh, problem, u)
    return linear_operator(blk, problem.gamma) @ u - cubic - blk["load"]


def newton_action(mesh, problem, u, v):
    """Derivative of the residual at ``u`` applied to ``v``."""
    blk = dense_blocks(mesh, problem)
    _, deriv = kerr_integrals(mesh, problem, u, v)
    return linear_operator(blk, problem.gamma) @ v - deriv


def estimator(mesh, problem, u):
    """Squared indicators ``(η_T², η_std,T²)`` by element and edge loops."""
    free = free_vertices(mesh)
    U = _field(mesh, free, u)
    nt = mesh.n_triangles
    h = np.sqrt([_area(mesh.vertices[tri]) for tri in mesh.triangles])
    grads = [basis(mesh.vertices[tri])[1:].T for tri in mesh.triangles]
    vol = np.zeros(nt)
    for t, tri in enumerate(mesh.triangles):
        P = mesh.vertices[tri]
        pts, w = triangle_points(P)
        uq = _phi(basis(P), pts) @ U[tri]
        eps = problem.epsilon if mesh.in_omega0[t] else 0.0
        R = _k(problem, mesh, t) ** 2 * (1.0 + eps * np.abs(uq) ** 2) * uq
        if problem.f is not None:
            R = R + problem.f(pts)
        vol[t] = h[t] ** 2 * np.sum(w * np.abs(R) ** 2)
    bnd = np.zeros(nt)
    neighbours = [set() for _ in range(nt)]
    for e, sides in _edges(mesh).items():
        A_, B_ = mesh.vertices[list(e)]
        L = np.linalg.norm(B_ - A_)
        if len(sides) == 2:
            (t1, o1), (t2, _) = sides
            neighbours[t1].add(t2)
            neighbours[t2].add(t1)
            nrm = _outward(mesh, e, o1)
            g1 = grads[t1].T @ U[mesh.triangles[t1]]
            g2 = grads[t2].T @ U[mesh.triangles[t2]]
            jump = np.dot(g1, nrm) - np.dot(g2, nrm)
            r2 = abs(0.5 * jump) ** 2 * L
            bnd[t1] += h[t1] * r2
            bnd[t2] += h[t2] * r2
        elif _boundary_tag(mesh, e) == IMPEDANCE:
            t, opp = sides[0]
            nrm = _outward(mesh, e, opp)
            pts, w = segment_points(A_, B_)
            s = np.linalg.norm(pts - A_, axis=1) / L
            uq = U[e[0]] * (1.0 - s) + U[e[1]] * s
            dudn = np.dot(grads[t].T @ U[mesh.triangles[t]], nrm)
            R = -dudn - 1j * _k(problem, mesh, t) * uq
            if problem.g is not None:
                R = R + problem.g(pts, np.repeat(nrm[None], len(pts), axis=0))
            bnd[t] += h[t] * np.sum(w * np.abs(R) ** 2)
    eta = np.array([sum(vol[s] for s in neighbours[t]) + bnd[t] for t in range(nt)])
    return eta, vol + bnd


def minimal_dorfler_size(eta_sq, theta):
    """Smallest cardinality of a set carrying ``θ²`` of the total, by enumeration.

    Subset sums are compared with a relative slack of 1e-12, since summing
    in a different order than the total can lose the last few bits.
    """
    eta_sq = np.asarray(eta_sq, float)
    total = eta_sq.sum() * (1.0 - 1e-12)
    for size in range(1, len(eta_sq) + 1):
        for subset in itertools.combinations(range(len(eta_sq)), size):
            if eta_sq[list(subset)].sum() >= theta ** 2 * total:
                return size
    return len(eta_sq)
