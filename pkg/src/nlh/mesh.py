"""Conforming triangulations with newest-vertex bisection.

Every triangle is stored as ``(v0, v1, v2)`` in counter-clockwise order with
the refinement edge ``(v0, v1)``; ``v2`` is the newest vertex. Local edge
``j`` of a triangle is the edge opposite its vertex ``j``, so the refinement
edge is local edge 2.

Meshes are immutable: :func:`refine` returns a new :class:`Mesh` and never
touches its input.
"""
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

INTERIOR = 0
IMPEDANCE = 1
DIRICHLET = 2

_TAG_CODES = {"impedance": IMPEDANCE, "dirichlet": DIRICHLET}
_uid_counter = itertools.count()


class MeshError(ValueError):
    """Invalid mesh input (degenerate, non-conforming or untagged)."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, refinement edge ``(t[0], t[1])``
    boundary_edges : (nb, 2) int array
    boundary_tags : (nb,) int array of ``IMPEDANCE`` / ``DIRICHLET``
    in_omega0 : (nt,) bool array, Kerr subdomain flag
    generation : (nt,) int array, number of bisections since the initial mesh
    parent : (nt,) int array, index of the containing triangle of the parent
        mesh (``-1`` for an initial mesh)
    vertex_parents : (nv, 2) int array, endpoints of the edge a vertex was
        created on (``(i, i)`` for inherited vertices)
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    in_omega0: np.ndarray
    generation: np.ndarray
    parent: np.ndarray
    vertex_parents: np.ndarray
    parent_uid: int = -1
    uid: int = field(default_factory=lambda: next(_uid_counter))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_parent_vertices(self):
        """Number of vertices inherited from the parent mesh."""
        same = self.vertex_parents[:, 0] == self.vertex_parents[:, 1]
        return int(np.count_nonzero(same))

    # ------------------------------------------------------------------
    # geometry
    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self):
        return np.abs(self.signed_areas)

    @cached_property
    def h(self):
        """Element sizes ``|T|**0.5`` (not diameters)."""
        return np.sqrt(self.areas)

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def min_angles(self):
        """Smallest interior angle of every triangle, in radians."""
        p = self.vertices[self.triangles]
        angles = []
        for j in range(3):
            a = p[:, (j + 1) % 3] - p[:, j]
            b = p[:, (j + 2) % 3] - p[:, j]
            cos = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return np.min(angles, axis=0)

    # ------------------------------------------------------------------
    # topology
    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        keys = pairs[:, 0].astype(np.int64) * self.n_vertices + pairs[:, 1]
        ukeys, first, inverse, counts = np.unique(
            keys, return_index=True, return_inverse=True, return_counts=True)
        edges = pairs[first]
        tri_edges = inverse.reshape(-1, 3)
        edge_to_tri = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_to_tri[:, 0] = tri_of[starts]
        two = counts >= 2
        edge_to_tri[two, 1] = tri_of[starts[two] + 1]
        for arr in (ukeys, edges, tri_edges, edge_to_tri, counts):
            arr.setflags(write=False)
        return ukeys, edges, tri_edges, edge_to_tri, counts

    @property
    def edges(self):
        """(ne, 2) sorted vertex pairs."""
        return self._edge_data[1]

    @property
    def tri_edges(self):
        """(nt, 3) global edge index of local edge ``j`` (opposite vertex ``j``)."""
        return self._edge_data[2]

    @property
    def edge_to_tri(self):
        """(ne, 2) adjacent triangles, second entry ``-1`` on the boundary."""
        return self._edge_data[3]

    def edge_index(self, pairs):
        """Global edge indices of vertex pairs; ``-1`` where no such edge exists."""
        pairs = np.sort(np.atleast_2d(np.asarray(pairs, dtype=np.int64)), axis=1)
        keys = pairs[:, 0] * self.n_vertices + pairs[:, 1]
        ukeys = self._edge_data[0]
        pos = np.searchsorted(ukeys, keys)
        pos = np.minimum(pos, len(ukeys) - 1)
        return np.where(ukeys[pos] == keys, pos, -1)

    @cached_property
    def edge_tags(self):
        """Per-edge tag: ``INTERIOR``, ``IMPEDANCE`` or ``DIRICHLET``."""
        tags = np.zeros(len(self.edges), dtype=np.int8)
        if len(self.boundary_edges):
            tags[self.edge_index(self.boundary_edges)] = self.boundary_tags
        tags.setflags(write=False)
        return tags

    @property
    def edge_lengths(self):
        p = self.vertices[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def neighbors(self):
        """(nt, 3) triangle across local edge ``j``, ``-1`` on the boundary."""
        e2t = self.edge_to_tri[self.tri_edges]
        own = np.arange(self.n_triangles)[:, None]
        nb = np.where(e2t[..., 0] == own, e2t[..., 1], e2t[..., 0])
        nb.setflags(write=False)
        return nb

    @cached_property
    def dirichlet_vertices(self):
        v = np.unique(self.boundary_edges[self.boundary_tags == DIRICHLET])
        v.setflags(write=False)
        return v


@dataclass(frozen=True)
class ElementPatch:
    """Triangles sharing an edge with ``center`` and the area they cover."""

    center: int
    edge_neighbors: tuple
    patch_area: float


def h_of(mesh, T):
    """Element size ``|T|**0.5``."""
    return float(mesh.h[T])


def patch_of(mesh, T):
    nb = sorted(int(n) for n in mesh.neighbors[T] if n >= 0)
    return ElementPatch(int(T), tuple(nb), float(mesh.areas[nb].sum()))


# ----------------------------------------------------------------------
# construction
def _orient_refinement_edges(vertices, triangles):
    """Rotate each triangle so its longest edge is local edge 2.

    Ties go to the edge whose opposite vertex has the smallest index.
    """
    p = vertices[triangles]
    lengths = np.stack([
        np.linalg.norm(p[:, (j + 2) % 3] - p[:, (j + 1) % 3], axis=1)
        for j in range(3)], axis=1)
    longest = lengths.max(axis=1, keepdims=True)
    candidate = lengths >= longest * (1.0 - 1e-12)
    opposite = np.where(candidate, triangles, np.iinfo(np.int64).max)
    choice = np.argmin(opposite, axis=1)
    # cyclic rotation keeps the orientation; the chosen vertex moves to slot 2
    shift = (choice + 1) % 3
    idx = (np.arange(3)[None, :] + shift[:, None]) % 3
    return np.take_along_axis(triangles, idx, axis=1)


def build_mesh(points, triangle_list, boundary_tagger, subdomain_tagger=None):
    """Build a validated :class:`Mesh`.

    Parameters
    ----------
    points : (nv, 2) array_like
    triangle_list : (nt, 3) array_like of vertex indices
    boundary_tagger : callable
        ``boundary_tagger(a, b)`` receives the two endpoint coordinates of a
        boundary edge and returns ``"impedance"`` or ``"dirichlet"``.
    subdomain_tagger : callable, optional
        ``subdomain_tagger(centroids)`` returns a boolean array flagging the
        triangles inside the Kerr subdomain. Defaults to no subdomain.
    """
    vertices = np.array(points, dtype=float)
    tris = np.array(triangle_list, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("points must have shape (nv, 2)")
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise MeshError("triangles must have shape (nt, 3)")
    if tris.min() < 0 or tris.max() >= len(vertices):
        raise MeshError("triangle references a missing vertex")
    s = np.sort(tris, axis=1)
    if np.any(s[:, 1:] == s[:, :-1]):
        raise MeshError("degenerate triangle: repeated vertex index")

    p = vertices[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    scale = np.maximum(np.einsum("ij,ij->i", d1, d1), np.einsum("ij,ij->i", d2, d2))
    if np.any(np.abs(cross) <= 1e-14 * scale):
        raise MeshError("degenerate triangle: zero area")
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    tris = _orient_refinement_edges(vertices, tris)

    probe = Mesh(vertices, tris, np.zeros((0, 2), np.int64), np.zeros(0, np.int8),
                 np.zeros(len(tris), bool), np.zeros(len(tris), np.int64),
                 np.full(len(tris), -1), np.zeros((0, 2), np.int64))
    counts = probe._edge_data[4]
    if np.any(counts > 2):
        raise MeshError("non-conforming input: edge shared by more than two triangles")
    bedges = probe.edges[counts == 1]
    _check_no_hanging_nodes(vertices, bedges)

    tags = []
    for a, b in bedges:
        tag = boundary_tagger(vertices[a], vertices[b])
        if tag not in _TAG_CODES:
            raise MeshError(f"untagged boundary edge ({a}, {b}): {tag!r}")
        tags.append(_TAG_CODES[tag])

    centroids = vertices[tris].mean(axis=1)
    if subdomain_tagger is None:
        flags = np.zeros(len(tris), bool)
    else:
        flags = np.asarray(subdomain_tagger(centroids), dtype=bool)
        if flags.shape != (len(tris),):
            raise MeshError("subdomain_tagger must return one flag per triangle")

    nv = len(vertices)
    return Mesh(
        vertices=_frozen(vertices, float),
        triangles=_frozen(tris, np.int64),
        boundary_edges=_frozen(bedges.reshape(-1, 2), np.int64),
        boundary_tags=_frozen(tags, np.int8),
        in_omega0=_frozen(flags, bool),
        generation=_frozen(np.zeros(len(tris)), np.int64),
        parent=_frozen(np.full(len(tris), -1), np.int64),
        vertex_parents=_frozen(np.repeat(np.arange(nv)[:, None], 2, axis=1), np.int64),
    )


def _check_no_hanging_nodes(vertices, bedges, chunk=2048):
    """Raise if a vertex lies strictly inside a boundary-candidate edge."""
    a = vertices[bedges[:, 0]]
    b = vertices[bedges[:, 1]]
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    for start in range(0, len(vertices), chunk):
        q = vertices[start:start + chunk]
        w = q[None, :, :] - a[:, None, :]
        t = np.einsum("eij,ej->ei", w, d) / L2[:, None]
        cross = d[:, None, 0] * w[..., 1] - d[:, None, 1] * w[..., 0]
        on = (np.abs(cross) <= 1e-12 * L2[:, None]) & (t > 1e-12) & (t < 1 - 1e-12)
        if np.any(on):
            e, v = np.argwhere(on)[0]
            raise MeshError(
                f"non-conforming input: hanging node {start + v} on edge {tuple(bedges[e])}")


# ----------------------------------------------------------------------
# refinement
def _bisect_once(mesh, marked, all_edges=False):
    """One newest-vertex bisection sweep with conforming closure.

    With ``all_edges`` every edge is split, which quarters every triangle.
    Returns the refined mesh arrays and, for each new triangle, the index of
    the triangle of ``mesh`` that contains it.
    """
    t = mesh.triangles
    E = mesh.tri_edges
    nv = mesh.n_vertices
    edge_marked = np.full(len(mesh.edges), bool(all_edges))
    edge_marked[E[marked, 2]] = True
    # closure: any triangle with a marked edge must bisect its refinement edge
    while True:
        need = edge_marked[E].any(axis=1) & ~edge_marked[E[:, 2]]
        if not need.any():
            break
        edge_marked[E[need, 2]] = True

    new_edges = np.flatnonzero(edge_marked)
    mid = np.full(len(mesh.edges), -1, dtype=np.int64)
    mid[new_edges] = nv + np.arange(len(new_edges))
    ends = mesh.edges[new_edges]
    vertices = np.vstack([mesh.vertices, mesh.vertices[ends].mean(axis=1)])
    vparents = np.vstack([np.repeat(np.arange(nv)[:, None], 2, axis=1), ends])

    split = edge_marked[E[:, 2]]
    keep = np.flatnonzero(~split)
    cut = np.flatnonzero(split)
    v0, v1, v2 = t[cut, 0], t[cut, 1], t[cut, 2]
    m = mid[E[cut, 2]]
    m_left = mid[E[cut, 1]]    # on edge (v2, v0)
    m_right = mid[E[cut, 0]]   # on edge (v1, v2)

    children, parents, depth = [t[keep]], [keep], [np.zeros(len(keep), np.int64)]

    left = m_left < 0
    children.append(np.column_stack([v2, v0, m])[left])
    parents.append(cut[left])
    depth.append(np.ones(left.sum(), np.int64))
    children.append(np.column_stack([m, v2, m_left])[~left])
    children.append(np.column_stack([v0, m, m_left])[~left])
    parents += [cut[~left]] * 2
    depth += [np.full((~left).sum(), 2, np.int64)] * 2

    right = m_right < 0
    children.append(np.column_stack([v1, v2, m])[right])
    parents.append(cut[right])
    depth.append(np.ones(right.sum(), np.int64))
    children.append(np.column_stack([m, v1, m_right])[~right])
    children.append(np.column_stack([v2, m, m_right])[~right])
    parents += [cut[~right]] * 2
    depth += [np.full((~right).sum(), 2, np.int64)] * 2

    children = np.vstack(children)
    parents = np.concatenate(parents)
    depth = np.concatenate(depth)
    order = np.lexsort((np.arange(len(parents)), parents))
    children, parents, depth = children[order], parents[order], depth[order]

    # boundary edges: split marked ones, keep tags
    bidx = mesh.edge_index(mesh.boundary_edges)
    bmid = mid[bidx]
    whole = bmid < 0
    be = mesh.boundary_edges
    bedges = np.vstack([be[whole],
                        np.column_stack([be[~whole, 0], bmid[~whole]]),
                        np.column_stack([bmid[~whole], be[~whole, 1]])])
    btags = np.concatenate([mesh.boundary_tags[whole],
                            mesh.boundary_tags[~whole],
                            mesh.boundary_tags[~whole]])

    return dict(
        vertices=vertices, triangles=children, boundary_edges=bedges,
        boundary_tags=btags, in_omega0=mesh.in_omega0[parents],
        generation=mesh.generation[parents] + depth, vertex_parents=vparents,
    ), parents


def refine(mesh, marked, b=1):
    """Refine ``marked`` triangles by newest-vertex bisection.

    Every marked triangle is bisected at least ``b`` times; further
    bisections are added until the mesh is conforming again.

    Parameters
    ----------
    mesh : Mesh
    marked : iterable of int
        Triangle indices of ``mesh``.
    b : int, optional
        Minimum number of bisections per marked triangle.

    Returns
    -------
    Mesh
        New mesh whose ``parent`` array refers to triangles of ``mesh``.
    """
    if b < 1:
        raise ValueError("b must be a positive integer")
    marked = np.unique(np.fromiter(marked, dtype=np.int64))
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_triangles):
        raise IndexError("marked triangle out of range")
    nv = mesh.n_vertices
    if marked.size == 0:
        return Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges,
                    mesh.boundary_tags, mesh.in_omega0, mesh.generation,
                    _frozen(np.arange(mesh.n_triangles), np.int64),
                    _frozen(np.repeat(np.arange(nv)[:, None], 2, axis=1), np.int64),
                    parent_uid=mesh.uid)

    current = mesh
    ancestor = np.arange(mesh.n_triangles)
    vparents = np.repeat(np.arange(nv)[:, None], 2, axis=1)
    to_split = marked
    for _ in range(b):
        data, parents = _bisect_once(current, to_split)
        ancestor = ancestor[parents]
        vparents = np.vstack([vparents, data["vertex_parents"][current.n_vertices:]])
        current = Mesh(**{k: _frozen(v, v.dtype) for k, v in data.items()},
                       parent=_frozen(parents, np.int64))
        to_split = np.flatnonzero(np.isin(ancestor, marked))

    return Mesh(current.vertices, current.triangles, current.boundary_edges,
                current.boundary_tags, current.in_omega0, current.generation,
                _frozen(ancestor, np.int64), _frozen(vparents, np.int64),
                parent_uid=mesh.uid)


def refine_uniform(mesh):
    """Split every edge: each triangle is bisected exactly twice into four."""
    data, parents = _bisect_once(mesh, np.zeros(0, np.int64), all_edges=True)
    return Mesh(**{k: _frozen(v, v.dtype) for k, v in data.items()},
                parent=_frozen(parents, np.int64), parent_uid=mesh.uid)


def prolongation_values(fine, coarse_values):
    """Nodal values on ``fine`` of a P1 field given on its parent mesh."""
    coarse_values = np.asarray(coarse_values)
    n0 = fine.n_parent_vertices
    if len(coarse_values) != n0:
        raise ValueError("field does not live on the parent mesh")
    vals = np.zeros(fine.n_vertices, dtype=coarse_values.dtype)
    vals[:n0] = coarse_values
    vp = fine.vertex_parents
    # midpoints of later sweeps reference earlier midpoints; indices only grow
    done = np.zeros(fine.n_vertices, bool)
    done[:n0] = True
    while not done.all():
        ready = ~done & done[vp[:, 0]] & done[vp[:, 1]]
        vals[ready] = 0.5 * (vals[vp[ready, 0]] + vals[vp[ready, 1]])
        done |= ready
    return vals


# ----------------------------------------------------------------------
# invariant checks (cheap enough to run after every refinement in tests)
def is_conforming(mesh):
    """True if every edge is shared by one or two triangles and every
    single-owner edge is a tagged boundary edge."""
    counts = mesh._edge_data[4]
    if np.any(counts > 2):
        return False
    boundary = np.flatnonzero(counts == 1)
    if len(boundary) != len(mesh.boundary_edges):
        return False
    idx = mesh.edge_index(mesh.boundary_edges)
    return bool(np.all(idx >= 0) and np.array_equal(np.sort(idx), boundary))


def locate_points(mesh, points, chunk=256):
    """Containing triangle and barycentric coordinates of each point.

    Points outside the mesh get triangle ``-1``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p = mesh.vertices[mesh.triangles]
    a = p[:, 0]
    d1 = p[:, 1] - a
    d2 = p[:, 2] - a
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tri = np.full(len(points), -1, dtype=np.int64)
    bary = np.zeros((len(points), 3))
    for s in range(0, len(points), chunk):
        q = points[s:s + chunk, None, :] - a[None]
        l1 = (q[..., 0] * d2[:, 1] - q[..., 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * q[..., 1] - d1[:, 1] * q[..., 0]) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
        hit = inside.any(axis=1)
        j = np.argmax(inside, axis=1)
        rows = np.arange(len(j))
        tri[s:s + chunk] = np.where(hit, j, -1)
        bary[s:s + chunk] = np.column_stack([l0[rows, j], l1[rows, j], l2[rows, j]])
    return tri, bary


def evaluate_p1(mesh, values, points):
    """Evaluate a nodal P1 field at arbitrary points inside the mesh."""
    tri, bary = locate_points(mesh, points)
    if np.any(tri < 0):
        raise ValueError("point outside the mesh")
    values = np.asarray(values)
    return np.einsum("ij,ij->i", bary, values[mesh.triangles[tri]])


# ----------------------------------------------------------------------
# the two experiment domains
def _in_hexagon(points, radius):
    x, y = points[:, 0], points[:, 1]
    s3 = np.sqrt(3.0)
    tol = 1e-12
    return ((np.abs(y) <= s3 / 2 * radius + tol)
            & (np.abs(s3 * x + y) <= s3 * radius + tol)
            & (np.abs(s3 * x - y) <= s3 * radius + tol))


def hexagon_mesh(m):
    """Equilateral triangulation with side ``1/m`` of the unit hexagon.

    The hexagon has vertices at angles ``0, 60, ..., 300`` degrees. Triangles
    inside the concentric hexagon of radius 1/2 are flagged as the Kerr
    subdomain; every boundary edge is an impedance edge.
    """
    if int(m) != m or m < 2 or m % 2:
        raise ValueError("m must be an even integer >= 2")
    m = int(m)
    index = {}
    pts = []
    for i in range(-m, m + 1):
        for j in range(-m, m + 1):
            if max(abs(i), abs(j), abs(i + j)) <= m:
                index[i, j] = len(pts)
                pts.append(((i + 0.5 * j) / m, (np.sqrt(3.0) / 2) * j / m))
    tris = []
    for i in range(-m - 1, m + 1):
        for j in range(-m - 1, m + 1):
            up = (index.get((i, j)), index.get((i + 1, j)), index.get((i, j + 1)))
            if None not in up:
                tris.append(up)
            down = (index.get((i + 1, j)), index.get((i + 1, j + 1)), index.get((i, j + 1)))
            if None not in down:
                tris.append(down)
    return build_mesh(np.array(pts), tris,
                      lambda a, b: "impedance",
                      lambda c: _in_hexagon(c, 0.5))


def notched_mesh(R=0.25, h0=None):
    """Triangulation of the seven-point polygon with a re-entrant notch.

    The polygon has vertices ``(4R,4R), (-3R,4R), (-3R,-4R), (4R,-4R),
    (7R/2, -3R/2 tan(pi/40)), (2R, 0), (7R/2, 3R/2 tan(pi/40))``. The
    square ``[-R, R]^2`` is the Kerr subdomain, the four edges on the right
    are Dirichlet and the other three impedance. The coarse hand-made mesh
    is bisected uniformly until every ``h_T <= h0``.
    """
    t = 1.5 * np.tan(np.pi / 40)

    def chain_x(y):
        # x on the Dirichlet chain D-E (y<0) or G-A (y>0) at height y
        s = (abs(y) - t) / (4.0 - t)
        return 3.5 + 0.5 * s

    cols = [-3.0, -2.0, -1.0, 0.0, 1.0]
    rows = [-4.0, -2.5, -1.0, 0.0, 1.0, 2.5, 4.0]
    pts = {}

    def add(name, xy):
        pts[name] = len(pts)
        coords.append(xy)

    coords = []
    for r, y in enumerate(rows):
        for c, x in enumerate(cols):
            add(("g", r, c), (x, y))
    # right block: rows of the upper and lower strips
    mids = {-4.0: 2.5, -2.5: 2.4, -1.0: 2.3, 1.0: 2.3, 2.5: 2.4, 4.0: 2.5}
    for y in (-4.0, -2.5, -1.0, 1.0, 2.5, 4.0):
        add(("m", y), (mids[y], y))
        add(("c", y), (4.0 if abs(y) == 4.0 else chain_x(y), y))
    add("E", (3.5, -t))
    add("F", (2.0, 0.0))
    add("G", (3.5, t))

    tris = []
    for r in range(len(rows) - 1):
        for c in range(len(cols) - 1):
            a, b = pts["g", r, c], pts["g", r, c + 1]
            d, e = pts["g", r + 1, c], pts["g", r + 1, c + 1]
            if (r + c) % 2:
                tris += [(a, b, e), (a, e, d)]
            else:
                tris += [(a, b, d), (b, e, d)]

    def col_x1(y):
        return pts["g", rows.index(y), 4]

    for lo, hi in ((-4.0, -2.5), (-2.5, -1.0), (1.0, 2.5), (2.5, 4.0)):
        a, b, c = col_x1(lo), pts["m", lo], pts["c", lo]
        d, e, f = col_x1(hi), pts["m", hi], pts["c", hi]
        tris += [(a, b, e), (a, e, d), (b, c, f), (b, f, e)]

    p8, p19, p9 = col_x1(-1.0), col_x1(0.0), col_x1(1.0)
    p20, p14 = pts["m", -1.0], pts["c", -1.0]
    p21, p16 = pts["m", 1.0], pts["c", 1.0]
    E, F, G = pts["E"], pts["F"], pts["G"]
    tris += [(p8, p20, F), (p20, p14, E), (p20, E, F), (p8, F, p19),
             (p19, F, p9), (p9, F, p21), (p21, F, G), (p21, G, p16)]

    vertices = np.array(coords) * R
    tol = 1e-9 * R

    def tagger(a, b):
        for k in (0, 1):
            if abs(a[k] - b[k]) < tol:
                v = a[k] / R
                if (k == 1 and abs(abs(v) - 4.0) < 1e-9) or (k == 0 and abs(v + 3.0) < 1e-9):
                    return "impedance"
        return "dirichlet"

    def omega0(c):
        return (np.abs(c[:, 0]) < R) & (np.abs(c[:, 1]) < R)

    mesh = build_mesh(vertices, tris, tagger, omega0)
    if h0 is not None:
        while mesh.h.max() > h0:
            mesh = refine(mesh, np.flatnonzero(mesh.h > h0))
        # rebase so the result is an initial mesh without a parent
        mesh = Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges,
                    mesh.boundary_tags, mesh.in_omega0,
                    _frozen(np.zeros(mesh.n_triangles), np.int64),
                    _frozen(np.full(mesh.n_triangles, -1), np.int64),
                    _frozen(np.repeat(np.arange(mesh.n_vertices)[:, None], 2, axis=1),
                            np.int64))
    return mesh


# ----------------------------------------------------------------------
# export
def write_vtk(mesh, path, point_data=None, cell_data=None, title="nlh mesh"):
    """Write a legacy ASCII VTK unstructured grid.

    The subdomain flag and generation are always written as cell data.
    ``point_data`` and ``cell_data`` map names to real arrays.
    """
    cells = {"omega0": mesh.in_omega0.astype(int), "generation": mesh.generation}
    cells.update(cell_data or {})
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        nt = mesh.n_triangles
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("5\n" * nt)
        fh.write(f"CELL_DATA {nt}\n")
        for name, arr in cells.items():
            _vtk_scalars(fh, name, arr)
        if point_data:
            fh.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, arr in point_data.items():
                _vtk_scalars(fh, name, arr)


def _vtk_scalars(fh, name, arr):
    arr = np.asarray(arr)
    kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
    fh.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
    fmt = "{:d}\n" if kind == "int" else "{:.17g}\n"
    fh.write("".join(fmt.format(v) for v in arr.tolist()))


_TAG_NAMES = {IMPEDANCE: "impedance", DIRICHLET: "dirichlet"}


def mesh_to_json(mesh):
    """Compact JSON fixture: vertices, triangles, boundary tags, subdomain flags."""
    return json.dumps({
        "vertices": mesh.vertices.tolist(),
        "triangles": mesh.triangles.tolist(),
        "boundary_edges": mesh.boundary_edges.tolist(),
        "boundary_tags": [_TAG_NAMES[int(t)] for t in mesh.boundary_tags],
        "omega0": mesh.in_omega0.astype(int).tolist(),
    })


def mesh_from_json(text):
    data = json.loads(text)
    tags = {tuple(sorted(e)): t for e, t in zip(data["boundary_edges"], data["boundary_tags"])}
    verts = np.array(data["vertices"], dtype=float)
    lookup = {tuple(v): i for i, v in enumerate(verts.tolist())}
    flags = np.array(data["omega0"], dtype=bool)

    def tagger(a, b):
        return tags.get(tuple(sorted((lookup[tuple(a)], lookup[tuple(b)]))))

    mesh = build_mesh(verts, data["triangles"], tagger, lambda c: flags)
    return mesh
