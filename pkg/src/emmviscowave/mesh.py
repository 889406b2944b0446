"""Triangular meshes of polygonal domains with Dirichlet/Neumann edge labels.

File format (ASCII, whitespace separated)::

    m k b
    x y            (m node lines)
    i j l          (k counterclockwise triangles, 0-based node indices)
    i j D|N        (b labeled boundary edges)
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DIRICHLET = "D"
NEUMANN = "N"
SIDES = ("left", "right", "bottom", "top")


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


def _edge_key(edges):
    return np.sort(np.asarray(edges, dtype=np.int64), axis=1)


def triangle_edges(triangles):
    """Unique edges and, per unique edge, the number of triangles containing it."""
    tri = np.asarray(triangles)
    all_edges = _edge_key(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]))
    edges, counts = np.unique(all_edges, axis=0, return_counts=True)
    return edges, counts


@dataclass(frozen=True, eq=False)
class Mesh2D:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    labels: tuple

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(-1, 2)
        tri = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        bed = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        labels = tuple(self.labels)
        for name, arr in (("nodes", nodes), ("triangles", tri), ("boundary_edges", bed)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "labels", labels)
        self.validate()

    def validate(self):
        nn = len(self.nodes)
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= nn:
            raise MeshError("triangle references a missing node")
        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} is not counterclockwise (signed area {areas[bad[0]]:.3e})")
        if len(self.labels) != len(self.boundary_edges):
            raise MeshError("every boundary edge needs exactly one label")
        if any(lab not in (DIRICHLET, NEUMANN) for lab in self.labels):
            raise MeshError("boundary labels must be D or N")
        edges, counts = triangle_edges(self.triangles)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: an edge is shared by more than two triangles")
        computed = {tuple(e) for e in edges[counts == 1]}
        declared = [tuple(e) for e in _edge_key(self.boundary_edges)]
        if len(set(declared)) != len(declared):
            raise MeshError("duplicate boundary edge")
        missing = computed - set(declared)
        if missing:
            raise MeshError(f"boundary edge {sorted(missing)[0]} carries no label")
        extra = set(declared) - computed
        if extra:
            raise MeshError(f"declared boundary edge {sorted(extra)[0]} is not on the boundary")
        if DIRICHLET not in self.labels:
            raise MeshError("the Dirichlet part of the boundary must be nonempty")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def areas(self):
        return self.signed_areas()

    def dirichlet_nodes(self):
        mask = np.array([lab == DIRICHLET for lab in self.labels])
        return np.unique(self.boundary_edges[mask])

    def n_edges(self):
        return len(triangle_edges(self.triangles)[0])

    def h(self):
        """Longest edge length."""
        edges, _ = triangle_edges(self.triangles)
        return float(np.max(np.linalg.norm(self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]], axis=1)))

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)


def rect_mesh(nx, ny, labels=None):
    """Structured triangulation of the unit square with 2*nx*ny triangles.

    ``labels`` maps sides (left, right, bottom, top) to D or N; unspecified
    sides are Neumann. The default clamps the left side.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    labels = {"left": DIRICHLET} if labels is None else dict(labels)
    unknown = set(labels) - set(SIDES)
    if unknown:
        raise MeshError(f"unknown side(s) {sorted(unknown)}")
    side_label = {s: labels.get(s, NEUMANN) for s in SIDES}
    if DIRICHLET not in side_label.values():
        raise MeshError("all-Neumann labeling leaves the Dirichlet part empty")

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    edges, labs = [], []
    for i in range(nx):
        edges.append((nid(i, 0), nid(i + 1, 0)))
        labs.append(side_label["bottom"])
        edges.append((nid(i + 1, ny), nid(i, ny)))
        labs.append(side_label["top"])
    for j in range(ny):
        edges.append((nid(nx, j), nid(nx, j + 1)))
        labs.append(side_label["right"])
        edges.append((nid(0, j + 1), nid(0, j)))
        labs.append(side_label["left"])
    return Mesh2D(nodes, np.array(tris), np.array(edges), tuple(labs))


def refine(mesh):
    """Uniform quadrisection; boundary labels pass to the two child edges."""
    edges, _ = triangle_edges(mesh.triangles)
    nn = mesh.n_nodes
    index = {tuple(e): nn + k for k, e in enumerate(edges)}
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])

    def mid(a, b):
        return index[(a, b) if a < b else (b, a)]

    tris = []
    for a, b, c in mesh.triangles.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    bed, labs = [], []
    for (a, b), lab in zip(mesh.boundary_edges.tolist(), mesh.labels):
        m = mid(a, b)
        bed += [(a, m), (m, b)]
        labs += [lab, lab]
    return Mesh2D(nodes, np.array(tris), np.array(bed), tuple(labs))


def save_mesh(mesh, path):
    lines = [f"{mesh.n_nodes} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{i} {j} {lab}" for (i, j), lab in zip(mesh.boundary_edges.tolist(), mesh.labels)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh(path):
    """Read a mesh file; errors carry 1-based line numbers."""
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [(k + 1, line.split()) for k, line in enumerate(raw) if line.strip()]
    if not rows:
        raise MeshFormatError("empty mesh file", 1)
    lineno, head = rows[0]
    try:
        m, k, b = (int(s) for s in head)
    except ValueError:
        raise MeshFormatError("header must be three integers 'm k b'", lineno) from None
    if min(m, k, b) < 0:
        raise MeshFormatError("negative count in header", lineno)
    body = rows[1:]
    if len(body) != m + k + b:
        at = body[min(len(body), m + k + b)][0] if len(body) > m + k + b else (body[-1][0] + 1 if body else lineno + 1)
        raise MeshFormatError(f"header announces {m + k + b} data lines, found {len(body)}", at)

    nodes = np.empty((m, 2))
    for r, (ln, tok) in enumerate(body[:m]):
        if len(tok) != 2:
            raise MeshFormatError("node line must be 'x y'", ln)
        try:
            nodes[r] = [float(t) for t in tok]
        except ValueError:
            raise MeshFormatError("node coordinates must be numbers", ln) from None

    tris = np.empty((k, 3), dtype=np.int64)
    for r, (ln, tok) in enumerate(body[m:m + k]):
        if len(tok) != 3:
            raise MeshFormatError("triangle line must be 'i j l'", ln)
        try:
            tris[r] = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError("triangle indices must be integers", ln) from None
        if tris[r].min() < 0 or tris[r].max() >= m:
            raise MeshFormatError(f"triangle {r} references a missing node", ln)
        p = nodes[tris[r]]
        area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0]))
        if area <= 0:
            raise MeshFormatError(f"triangle {r} is clockwise or degenerate", ln)

    bed = np.empty((b, 2), dtype=np.int64)
    labs = []
    for r, (ln, tok) in enumerate(body[m + k:]):
        if len(tok) != 3:
            raise MeshFormatError("boundary line must be 'i j D|N' (label missing?)", ln)
        try:
            bed[r] = [int(t) for t in tok[:2]]
        except ValueError:
            raise MeshFormatError("boundary edge indices must be integers", ln) from None
        if tok[2] not in (DIRICHLET, NEUMANN):
            raise MeshFormatError(f"boundary label must be D or N, got {tok[2]!r}", ln)
        if bed[r].min() < 0 or bed[r].max() >= m:
            raise MeshFormatError("boundary edge references a missing node", ln)
        labs.append(tok[2])

    edges, counts = triangle_edges(tris)
    declared = {tuple(e) for e in _edge_key(bed)}
    missing = [tuple(e) for e in edges[counts == 1] if tuple(e) not in declared]
    if missing:
        # a boundary edge without a labeled line: point at the end of the edge block
        raise MeshFormatError(f"boundary edge {missing[0]} has no labeled line",
                              body[-1][0] if body else lineno)
    try:
        return Mesh2D(nodes, tris, bed, tuple(labs))
    except MeshError as exc:
        raise MeshFormatError(str(exc)) from None
