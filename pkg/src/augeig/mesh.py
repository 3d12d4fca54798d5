"""2D interface-fitted triangulations.

Structured right-triangle meshes over a rectangle, node snapping onto
circular material interfaces, region classification, point location and a
line-oriented mesh file format.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError, MeshFormatError

BACKGROUND_TAG = 0

# Fraction of h_max used as the snap band around each interface circle.
DEFAULT_SNAP_FRACTION = 0.45

_BARY_TOL = 1e-12


def _cross2(u, v):
    """z-component of the cross product of 2D vectors."""
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle (x0, y0) .. (x1, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise GeometryError("degenerate domain: zero area")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0


@dataclass(frozen=True)
class Circle:
    """Circular material interface."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"circle radius must be positive, got {self.radius}")

    def signed_distance(self, points):
        """Distance from the circle line; negative inside the disk."""
        d = np.hypot(points[..., 0] - self.center[0], points[..., 1] - self.center[1])
        return d - self.radius

    def contains(self, points):
        """Closed-disk membership test."""
        return self.signed_distance(points) <= 0.0

    def strictly_inside(self, rect):
        cx, cy = self.center
        r = self.radius
        return (
            cx - r > rect.x0 and cx + r < rect.x1
            and cy - r > rect.y0 and cy + r < rect.y1
        )


@dataclass
class Mesh:
    """Triangulation with region tags and boundary/interface node flags.

    Treated as immutable after construction; operations that modify a mesh
    return a new instance.
    """

    nodes: np.ndarray        # (n, 2) float64
    triangles: np.ndarray    # (m, 3) int, counterclockwise
    region_tag: np.ndarray   # (m,) int
    boundary_node: np.ndarray   # (n,) bool
    interface_node: np.ndarray  # (n,) bool
    h_max: float
    _locator: "object" = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def triangle_corners(self):
        """Corner coordinate arrays (a, b, c), each (m, 2)."""
        t = self.triangles
        return self.nodes[t[:, 0]], self.nodes[t[:, 1]], self.nodes[t[:, 2]]

    def signed_areas(self):
        a, b, c = self.triangle_corners()
        return 0.5 * _cross2(b - a, c - a)

    def centroids(self):
        a, b, c = self.triangle_corners()
        return (a + b + c) / 3.0

    def longest_edges(self):
        a, b, c = self.triangle_corners()
        e = np.stack([
            np.linalg.norm(b - a, axis=1),
            np.linalg.norm(c - b, axis=1),
            np.linalg.norm(a - c, axis=1),
        ])
        return e.max(axis=0)


@dataclass(frozen=True)
class LocateResult:
    triangle_index: int
    barycentric: np.ndarray  # 3 nonnegative reals summing to 1
    status: str              # "inside" | "snapped-to-nearest"


def _compute_h_max(nodes, triangles):
    b = nodes[triangles[:, 1]] - nodes[triangles[:, 0]]
    c = nodes[triangles[:, 2]] - nodes[triangles[:, 1]]
    a = nodes[triangles[:, 0]] - nodes[triangles[:, 2]]
    e = np.stack([np.linalg.norm(v, axis=1) for v in (a, b, c)])
    return float(e.max())


def generate_structured_mesh(domain: Rect, h: float) -> Mesh:
    """Uniform right-triangle mesh with ceil(side/h) subdivisions per axis."""
    if not h > 0:
        raise GeometryError(f"mesh size must be positive, got {h}")
    if h > min(domain.width, domain.height):
        raise GeometryError("mesh size exceeds the smallest domain side")
    nx = int(np.ceil(domain.width / h))
    ny = int(np.ceil(domain.height / h))

    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(order="C"), Y.ravel(order="C")])

    def nid(i, j):
        return i * (ny + 1) + j

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    v00 = nid(ii, jj).ravel()
    v10 = nid(ii + 1, jj).ravel()
    v01 = nid(ii, jj + 1).ravel()
    v11 = nid(ii + 1, jj + 1).ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    boundary = np.zeros(len(nodes), dtype=bool)
    gi = np.arange(len(nodes)) // (ny + 1)
    gj = np.arange(len(nodes)) % (ny + 1)
    boundary[(gi == 0) | (gi == nx) | (gj == 0) | (gj == ny)] = True

    return Mesh(
        nodes=nodes,
        triangles=triangles,
        region_tag=np.full(len(triangles), BACKGROUND_TAG, dtype=np.int64),
        boundary_node=boundary,
        interface_node=np.zeros(len(nodes), dtype=bool),
        h_max=_compute_h_max(nodes, triangles),
    )


def _check_circles(mesh, circles):
    for k, ck in enumerate(circles):
        if mesh.h_max >= ck.radius:
            raise GeometryError(
                f"mesh size h_max={mesh.h_max:g} must be below circle radius {ck.radius:g}"
            )
        for cj in circles[k + 1:]:
            gap = np.hypot(ck.center[0] - cj.center[0], ck.center[1] - cj.center[1])
            # Tangent circles (gap == r1 + r2) are allowed; only true
            # overlap is rejected.
            if gap < ck.radius + cj.radius - 1e-12:
                raise GeometryError("interface circles must not overlap")


def _unique_edges(triangles):
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    edges.sort(axis=1)
    return np.unique(edges, axis=0)


def fit_interfaces(mesh: Mesh, circles, snap_fraction=DEFAULT_SNAP_FRACTION) -> Mesh:
    """Radially project nodes near each circle onto it.

    Nodes within snap_fraction * h_max of a circle move onto the circle.
    A completion pass then snaps the nearer endpoint of every edge that
    still crosses a circle, so no triangle is left straddling an
    interface; without it the region assignment would carry an O(h)
    coefficient error instead of O(h^2).
    If snapping inverts a triangle the snap band (and the completion move
    cap) is halved and the fit is retried; after 4 retries a
    GeometryError is raised.
    """
    if not circles:
        return mesh
    _check_circles(mesh, circles)
    edges = _unique_edges(mesh.triangles)

    frac = snap_fraction
    cap_scale = 1.0
    for _attempt in range(5):
        nodes = mesh.nodes.copy()
        on_interface = np.zeros(mesh.n_nodes, dtype=bool)
        band = frac * mesh.h_max
        move_cap = cap_scale * mesh.h_max
        for circle in circles:
            cx, cy = circle.center
            dx = nodes[:, 0] - cx
            dy = nodes[:, 1] - cy
            dist = np.hypot(dx, dy)
            near = (np.abs(dist - circle.radius) <= band) & ~mesh.boundary_node & (dist > 0)
            scale = circle.radius / dist[near]
            nodes[near, 0] = cx + dx[near] * scale
            nodes[near, 1] = cy + dy[near] * scale
            on_interface |= near
        for circle in circles:
            cx, cy = circle.center
            d = np.hypot(nodes[:, 0] - cx, nodes[:, 1] - cy) - circle.radius
            da, db = d[edges[:, 0]], d[edges[:, 1]]
            crossing = np.flatnonzero(da * db < 0)
            if len(crossing) == 0:
                continue
            # Incidence map for the nodes involved, to veto snaps that
            # would put all three vertices of a triangle on the circle
            # (such inscribed triangles are nearly flat for small arcs).
            cand = np.unique(edges[crossing])
            tri_mask = np.isin(mesh.triangles, cand).any(axis=1)
            incident = {}
            for tri in mesh.triangles[tri_mask]:
                for v in tri:
                    incident.setdefault(int(v), []).append(tri)

            def flattens(node):
                for tri in incident.get(int(node), []):
                    if all(abs(d[v]) < 1e-12 for v in tri if v != node):
                        return True
                return False

            for a, b in edges[crossing]:
                if d[a] * d[b] >= 0:  # resolved by an earlier snap
                    continue
                pick, other = (a, b) if abs(d[a]) <= abs(d[b]) else (b, a)
                for node in (pick, other):
                    if (mesh.boundary_node[node] or abs(d[node]) > move_cap
                            or flattens(node)):
                        continue
                    r = np.hypot(nodes[node, 0] - cx, nodes[node, 1] - cy)
                    scale = circle.radius / r
                    nodes[node, 0] = cx + (nodes[node, 0] - cx) * scale
                    nodes[node, 1] = cy + (nodes[node, 1] - cy) * scale
                    d[node] = 0.0
                    on_interface[node] = True
                    break
        candidate = Mesh(
            nodes=nodes,
            triangles=mesh.triangles,
            region_tag=mesh.region_tag.copy(),
            boundary_node=mesh.boundary_node.copy(),
            interface_node=on_interface,
            h_max=_compute_h_max(nodes, mesh.triangles),
        )
        if candidate.signed_areas().min() > 0:
            return candidate
        frac /= 2.0
        cap_scale /= 2.0
    raise GeometryError("interface snapping inverted triangles even after 4 retries")


def classify_regions(mesh: Mesh, circles) -> Mesh:
    """Tag each triangle by the circle whose closed disk holds its centroid.

    Circles get tags 1..k in order; triangles outside every disk keep the
    background tag 0.
    """
    centroids = mesh.centroids()
    tags = np.full(mesh.n_triangles, BACKGROUND_TAG, dtype=np.int64)
    for k, circle in enumerate(circles):
        inside = circle.contains(centroids) & (tags == BACKGROUND_TAG)
        tags[inside] = k + 1
    return replace(mesh, region_tag=tags, _locator=None)


class _Locator:
    """Point location with exact barycentric coordinates.

    Brute-force scan below 1000 triangles, uniform background-grid
    bucketing above. Both paths return identical results: the bucketed
    path falls back to the full scan whenever no candidate contains the
    query point.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        a, b, c = mesh.triangle_corners()
        self.a = a
        self.e1 = b - a
        self.e2 = c - a
        self.det = _cross2(self.e1, self.e2)
        self.use_grid = mesh.n_triangles >= 1000
        if self.use_grid:
            self._build_grid()

    def _build_grid(self):
        nodes = self.mesh.nodes
        self.xmin, self.ymin = nodes.min(axis=0)
        xmax, ymax = nodes.max(axis=0)
        ncell = max(1, int(np.sqrt(self.mesh.n_triangles / 2)))
        self.nx = self.ny = ncell
        self.dx = (xmax - self.xmin) / ncell or 1.0
        self.dy = (ymax - self.ymin) / ncell or 1.0
        t = self.mesh.triangles
        px = nodes[t, 0]
        py = nodes[t, 1]
        ix0 = np.clip(((px.min(axis=1) - self.xmin) / self.dx).astype(int), 0, ncell - 1)
        ix1 = np.clip(((px.max(axis=1) - self.xmin) / self.dx).astype(int), 0, ncell - 1)
        iy0 = np.clip(((py.min(axis=1) - self.ymin) / self.dy).astype(int), 0, ncell - 1)
        iy1 = np.clip(((py.max(axis=1) - self.ymin) / self.dy).astype(int), 0, ncell - 1)
        buckets = {}
        for tri in range(self.mesh.n_triangles):
            for i in range(ix0[tri], ix1[tri] + 1):
                for j in range(iy0[tri], iy1[tri] + 1):
                    buckets.setdefault((i, j), []).append(tri)
        self.buckets = {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}

    def _bary(self, p, idx):
        d = p - self.a[idx]
        l2 = _cross2(d, self.e2[idx]) / self.det[idx]
        l3 = _cross2(self.e1[idx], d) / self.det[idx]
        l1 = 1.0 - l2 - l3
        return np.column_stack([l1, l2, l3])

    def locate(self, p):
        p = np.asarray(p, dtype=float)
        if self.use_grid:
            i = int(np.clip((p[0] - self.xmin) // self.dx, 0, self.nx - 1))
            j = int(np.clip((p[1] - self.ymin) // self.dy, 0, self.ny - 1))
            cand = self.buckets.get((i, j))
            if cand is not None:
                res = self._best_inside(p, cand)
                if res is not None:
                    return res
        all_idx = np.arange(self.mesh.n_triangles)
        res = self._best_inside(p, all_idx)
        if res is not None:
            return res
        lam = self._bary(p, all_idx)
        violation = -lam.min(axis=1)
        best = int(np.argmin(violation))
        clipped = np.clip(lam[best], 0.0, None)
        clipped /= clipped.sum()
        return LocateResult(best, clipped, "snapped-to-nearest")

    def _best_inside(self, p, idx):
        lam = self._bary(p, idx)
        inside = lam.min(axis=1) >= -_BARY_TOL
        if not inside.any():
            return None
        pick = int(np.flatnonzero(inside)[0])
        return LocateResult(int(idx[pick]), lam[pick], "inside")


def _locator(mesh):
    if mesh._locator is None:
        mesh._locator = _Locator(mesh)
    return mesh._locator


def locate_point(mesh: Mesh, p) -> LocateResult:
    """Find the triangle containing p, or the nearest one if p is outside.

    Total function: outside points are clamped to the triangle with the
    smallest barycentric violation, ties broken by smallest triangle index.
    """
    if mesh.n_triangles == 0:
        raise GeometryError("cannot locate a point in an empty mesh")
    return _locator(mesh).locate(p)


def write_mesh(mesh: Mesh, path):
    """Write the line-oriented text format (17 significant digit floats)."""
    with open(path, "w") as f:
        f.write("meshfmt 1\n")
        f.write(f"nodes {mesh.n_nodes}\n")
        for (x, y), bnd in zip(mesh.nodes, mesh.boundary_node):
            f.write(f"{x:.17g} {y:.17g} {int(bnd)}\n")
        f.write(f"triangles {mesh.n_triangles}\n")
        for (i, j, k), tag in zip(mesh.triangles, mesh.region_tag):
            f.write(f"{i} {j} {k} {tag}\n")


def read_mesh(path) -> Mesh:
    """Parse a mesh file; raises MeshFormatError with a line number."""
    with open(path) as f:
        lines = f.read().splitlines()

    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise MeshFormatError(pos + 1, "unexpected end of file")
        pos += 1
        return lines[pos - 1]

    if next_line().strip() != "meshfmt 1":
        raise MeshFormatError(1, "expected header 'meshfmt 1'")

    header = next_line().split()
    if len(header) != 2 or header[0] != "nodes":
        raise MeshFormatError(pos, "expected 'nodes N'")
    try:
        n_nodes = int(header[1])
    except ValueError:
        raise MeshFormatError(pos, f"bad node count {header[1]!r}") from None

    nodes = np.empty((n_nodes, 2))
    boundary = np.empty(n_nodes, dtype=bool)
    for i in range(n_nodes):
        parts = next_line().split()
        if len(parts) != 3:
            raise MeshFormatError(pos, "expected 'x y boundary_flag'")
        try:
            nodes[i, 0] = float(parts[0])
            nodes[i, 1] = float(parts[1])
            boundary[i] = bool(int(parts[2]))
        except ValueError:
            raise MeshFormatError(pos, f"bad node line {lines[pos - 1]!r}") from None

    header = next_line().split()
    if len(header) != 2 or header[0] != "triangles":
        raise MeshFormatError(pos, "expected 'triangles M'")
    try:
        n_tri = int(header[1])
    except ValueError:
        raise MeshFormatError(pos, f"bad triangle count {header[1]!r}") from None

    triangles = np.empty((n_tri, 3), dtype=np.int64)
    tags = np.empty(n_tri, dtype=np.int64)
    for i in range(n_tri):
        parts = next_line().split()
        if len(parts) != 4:
            raise MeshFormatError(pos, "expected 'i j k region_tag'")
        try:
            triangles[i] = [int(parts[0]), int(parts[1]), int(parts[2])]
            tags[i] = int(parts[3])
        except ValueError:
            raise MeshFormatError(pos, f"bad triangle line {lines[pos - 1]!r}") from None
        if triangles[i].min() < 0 or triangles[i].max() >= n_nodes:
            raise MeshFormatError(pos, "triangle references a node index out of range")

    return Mesh(
        nodes=nodes,
        triangles=triangles,
        region_tag=tags,
        boundary_node=boundary,
        interface_node=np.zeros(n_nodes, dtype=bool),
        h_max=_compute_h_max(nodes, triangles),
    )


def meshes_equal(m1: Mesh, m2: Mesh) -> bool:
    """Bit-exact equality of coordinates, connectivity, tags and flags."""
    return (
        m1.nodes.shape == m2.nodes.shape
        and np.array_equal(m1.nodes, m2.nodes)
        and np.array_equal(m1.triangles, m2.triangles)
        and np.array_equal(m1.region_tag, m2.region_tag)
        and np.array_equal(m1.boundary_node, m2.boundary_node)
    )
