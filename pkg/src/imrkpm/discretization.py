"""Node sets, interface nodes and background-cell quadrature.

Regular nodes sit at the (optionally refined) pixel centroids. Interface
nodes are placed where the score changes sign along the edges of that
lattice. Quadrature uses square background cells aligned with the lattice.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import CoverageError, ParameterError
from .imaging import INCLUSION, MATRIX

REGULAR = 0
INTERFACE = 1

MERGE_FACTOR = 0.25
DEFAULT_SUPPORT_FACTOR = 2.0


@dataclass(frozen=True)
class Void:
    """Circular hole (e.g. a notch cut into the specimen edge)."""

    center: tuple
    radius: float

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) < self.radius


def _in_any_void(pts, voids):
    out = np.zeros(len(pts), dtype=bool)
    for v in voids:
        out |= v.contains(pts)
    return out


@dataclass(frozen=True)
class NodeSet:
    """RK nodes. ``phase`` is +1 (matrix) / -1 (inclusion) for regular nodes, 0 for interface nodes."""

    coords: np.ndarray
    kind: np.ndarray
    support: np.ndarray
    phase: np.ndarray
    spacing: float
    extent: tuple
    lattice_shape: tuple = (0, 0)  # (ny, nx) of the regular lattice before any removal
    lattice_index: np.ndarray = None  # flat lattice id per regular node, -1 for interface nodes
    voids: tuple = ()

    def __post_init__(self):
        for name in ("coords", "kind", "support", "phase", "lattice_index"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if np.any(self.support <= 0):
            raise ParameterError("support radii must be positive")

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def is_interface(self):
        return self.kind == INTERFACE

    @property
    def n_interface(self):
        return int(np.count_nonzero(self.is_interface))

    @property
    def max_support(self):
        return float(self.support.max())

    def tree(self):
        return cKDTree(self.coords)

    def to_csv(self, path):
        names = {MATRIX: "matrix", INCLUSION: "inclusion", 0: "interface"}
        with open(path, "w") as fh:
            fh.write("x,y,kind,phase,a\n")
            for (x, y), k, p, a in zip(self.coords, self.kind, self.phase, self.support):
                kind = "interface" if k == INTERFACE else "regular"
                fh.write(f"{x:.17g},{y:.17g},{kind},{names[int(p)]},{a:.17g}\n")


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    cell: np.ndarray
    cache: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("points", "weights", "cell"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.weights <= 0):
            raise ParameterError("quadrature weights must be positive")

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def area(self):
        return float(self.weights.sum())

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x,y,w,cell\n")
            for (x, y), w, c in zip(self.points, self.weights, self.cell):
                fh.write(f"{x:.17g},{y:.17g},{w:.17g},{int(c)}\n")


@dataclass(frozen=True)
class BoundaryStations:
    """1D Gauss stations along the outer rectangle, used for penalty constraints."""

    points: np.ndarray
    weights: np.ndarray
    side: np.ndarray  # 0 bottom, 1 right, 2 top, 3 left


SIDES = {"bottom": 0, "right": 1, "top": 2, "left": 3}


# ---------------------------------------------------------------------------
# nodes


def lattice_nodes(origin, shape, spacing):
    """Cell-centred lattice: ``origin + spacing*(k + 1/2)``, row-major from the bottom."""
    ny, nx = shape
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    x = origin[0] + spacing * (ii.ravel() + 0.5)
    y = origin[1] + spacing * (jj.ravel() + 0.5)
    return np.column_stack([x, y])


def generate_nodes(img, field, refine=1, support_factor=DEFAULT_SUPPORT_FACTOR, voids=()):
    """Regular nodes at the refined pixel centroids, tagged by sign(S).

    Nodes that land exactly on S = 0 are tagged as interface nodes; nodes
    inside a void are dropped.
    """
    if int(refine) != refine or refine < 1:
        raise ParameterError(f"refine must be a positive integer, got {refine}")
    if not support_factor > 0:
        raise ParameterError("support_factor must be positive")
    refine = int(refine)
    h = img.pixel_size / refine
    shape = (img.height * refine, img.width * refine)
    pts = lattice_nodes(img.origin, shape, h)
    lattice_id = np.arange(pts.shape[0])
    keep = ~_in_any_void(pts, voids)
    pts, lattice_id = pts[keep], lattice_id[keep]
    s = np.asarray(field.values(pts), dtype=float)
    kind = np.where(s == 0.0, INTERFACE, REGULAR).astype(np.int8)
    phase = np.where(s > 0, MATRIX, np.where(s < 0, INCLUSION, 0)).astype(np.int8)
    lattice_id = np.where(kind == INTERFACE, -1, lattice_id)
    return NodeSet(
        coords=pts,
        kind=kind,
        support=np.full(pts.shape[0], support_factor * h),
        phase=phase,
        spacing=h,
        extent=img.extent,
        lattice_shape=shape,
        lattice_index=lattice_id,
        voids=tuple(voids),
    )


def _bisect_edges(field, a, b, sa, tol, max_iter=200):
    """Vectorized bisection of S on segments [a, b] with sign(S(a)) = sa != sign(S(b))."""
    lo, hi = a.copy(), b.copy()
    for _ in range(max_iter):
        if np.all(np.linalg.norm(hi - lo, axis=1) <= tol):
            break
        mid = 0.5 * (lo + hi)
        sm = np.asarray(field.values(mid), dtype=float)
        if not np.all(np.isfinite(sm)):
            k = int(np.flatnonzero(~np.isfinite(sm))[0])
            raise CoverageError(
                f"bisection on edge {tuple(a[k])} -> {tuple(b[k])} produced a non-finite score",
                point=tuple(mid[k]),
            )
        same = np.sign(sm) == sa
        lo = np.where(same[:, None], mid, lo)
        hi = np.where(same[:, None], hi, mid)
    gap = np.linalg.norm(hi - lo, axis=1)
    if np.any(gap > tol):
        k = int(np.argmax(gap))
        raise CoverageError(
            f"bisection did not converge on edge {tuple(a[k])} -> {tuple(b[k])}",
            point=tuple(0.5 * (lo[k] + hi[k])),
        )
    return 0.5 * (lo + hi)


def interface_crossings(field, base, tol=None):
    """S = 0 crossings on every lattice edge whose endpoint scores change sign."""
    ny, nx = base.lattice_shape
    if ny * nx == 0:
        return np.empty((0, 2))
    h = base.spacing
    tol = 1e-10 * h if tol is None else tol
    x0, y0 = base.extent[0], base.extent[1]
    pts = lattice_nodes((x0, y0), (ny, nx), h)
    s = np.asarray(field.values(pts), dtype=float).reshape(ny, nx)
    alive = np.zeros(ny * nx, dtype=bool)
    alive[base.lattice_index[base.lattice_index >= 0]] = True
    alive = alive.reshape(ny, nx)
    grid = pts.reshape(ny, nx, 2)

    starts, ends, signs = [], [], []
    for sa, sb, ga, gb, aa, ab in (
        (s[:, :-1], s[:, 1:], grid[:, :-1], grid[:, 1:], alive[:, :-1], alive[:, 1:]),
        (s[:-1, :], s[1:, :], grid[:-1, :], grid[1:, :], alive[:-1, :], alive[1:, :]),
    ):
        cross = (sa * sb < 0) & aa & ab
        starts.append(ga[cross])
        ends.append(gb[cross])
        signs.append(np.sign(sa[cross]))
    a = np.concatenate(starts)
    b = np.concatenate(ends)
    if a.shape[0] == 0:
        return np.empty((0, 2))
    found = _bisect_edges(field, a, b, np.concatenate(signs), tol)
    if base.voids:
        found = found[~_in_any_void(found, base.voids)]
    return found


def _greedy_merge(pts, radius):
    """Keep points in order, dropping any within ``radius`` of an already kept one."""
    if pts.shape[0] == 0:
        return pts
    tree = cKDTree(pts)
    taken = np.zeros(pts.shape[0], dtype=bool)
    dropped = np.zeros(pts.shape[0], dtype=bool)
    for i in range(pts.shape[0]):
        if dropped[i]:
            continue
        taken[i] = True
        for j in tree.query_ball_point(pts[i], radius):
            if j > i:
                dropped[j] = True
    return pts[taken]


def generate_interface_nodes(field, base, tol=None, support_factor=None):
    """Augment ``base`` with interface nodes on the S = 0 set.

    Interface nodes closer than ``0.25*h`` to each other are merged greedily,
    and regular nodes closer than that to an interface node are removed.
    """
    h = base.spacing
    radius = MERGE_FACTOR * h
    found = _greedy_merge(interface_crossings(field, base, tol), radius)
    if found.shape[0] == 0:
        return base
    a_int = base.support.max() if support_factor is None else support_factor * h
    keep = np.ones(base.n_nodes, dtype=bool)
    near = cKDTree(found).query(base.coords, k=1)[0]
    keep &= ~((near < radius) & (base.kind == REGULAR))
    n_new = found.shape[0]
    return NodeSet(
        coords=np.vstack([base.coords[keep], found]),
        kind=np.concatenate([base.kind[keep], np.full(n_new, INTERFACE, dtype=np.int8)]),
        support=np.concatenate([base.support[keep], np.full(n_new, a_int)]),
        phase=np.concatenate([base.phase[keep], np.zeros(n_new, dtype=np.int8)]),
        spacing=h,
        extent=base.extent,
        lattice_shape=base.lattice_shape,
        lattice_index=np.concatenate([base.lattice_index[keep], np.full(n_new, -1)]),
        voids=base.voids,
    )


# ---------------------------------------------------------------------------
# quadrature


def gauss_legendre(order):
    if order not in (1, 2, 3, 4, 5):
        raise ParameterError(f"Gauss order must be in 1..5, got {order}")
    return np.polynomial.legendre.leggauss(order)


def _cell_rule(lo, size, order):
    """Tensor Gauss points for square cells with lower-left corners ``lo`` (n, 2)."""
    g, w = gauss_legendre(order)
    u = 0.5 * (g + 1.0)
    gx, gy = np.meshgrid(u, u, indexing="xy")
    wx, wy = np.meshgrid(w, w, indexing="xy")
    ref = np.column_stack([gx.ravel(), gy.ravel()])
    wref = (wx * wy).ravel() * 0.25
    size = np.broadcast_to(np.asarray(size, dtype=float), (lo.shape[0],))
    pts = lo[:, None, :] + size[:, None, None] * ref[None, :, :]
    wts = size[:, None] ** 2 * wref[None, :]
    return pts.reshape(-1, 2), wts.ravel()


def _split(lo, size):
    half = 0.5 * size
    offs = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    return (lo[:, None, :] + half[:, None, None] * offs[None]).reshape(-1, 2), np.repeat(half, 4)


def _corner_signs(field, lo, size):
    offs = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
    corners = (lo[:, None, :] + size[:, None, None] * offs[None]).reshape(-1, 2)
    return np.sign(np.asarray(field.values(corners), dtype=float)).reshape(-1, 4)


def _void_state(lo, size, voids):
    """Per cell: 0 clear, 1 cut, 2 fully inside some void."""
    state = np.zeros(lo.shape[0], dtype=np.int8)
    centre = lo + 0.5 * size[:, None]
    half_diag = np.sqrt(0.5) * size
    for v in voids:
        r = np.hypot(centre[:, 0] - v.center[0], centre[:, 1] - v.center[1])
        inside = r + half_diag <= v.radius
        cut = (r - half_diag < v.radius) & ~inside
        state = np.where(inside, 2, np.where(cut & (state == 0), 1, state))
    return state


def build_quadrature(domain, cell_size, order=2, field=None, voids=(), void_depth=4):
    """Gauss quadrature on square background cells covering ``domain``.

    Cells whose corner scores change sign are split once into 2x2 subcells.
    Cells cut by a void are split recursively ``void_depth`` times; the
    surviving subcells whose centres fall inside a void are dropped.
    """
    x0, y0, x1, y1 = (float(v) for v in domain)
    if not cell_size > 0:
        raise ParameterError("cell_size must be positive")
    gauss_legendre(order)
    nx = (x1 - x0) / cell_size
    ny = (y1 - y0) / cell_size
    if abs(nx - round(nx)) > 1e-9 * nx or abs(ny - round(ny)) > 1e-9 * ny:
        raise ParameterError("domain is not an integer number of cells")
    nx, ny = int(round(nx)), int(round(ny))
    lo = lattice_nodes((x0, y0), (ny, nx), cell_size) - 0.5 * cell_size
    size = np.full(lo.shape[0], float(cell_size))
    owner = np.arange(lo.shape[0])

    if field is not None:
        sg = _corner_signs(field, lo, size)
        cut = np.any(sg != sg[:, :1], axis=1)
        if cut.any():
            sub_lo, sub_size = _split(lo[cut], size[cut])
            lo = np.vstack([lo[~cut], sub_lo])
            size = np.concatenate([size[~cut], sub_size])
            owner = np.concatenate([owner[~cut], np.repeat(owner[cut], 4)])

    if voids:
        for _ in range(void_depth):
            st = _void_state(lo, size, voids)
            keep = st == 0
            cut = st == 1
            sub_lo, sub_size = _split(lo[cut], size[cut])
            lo = np.vstack([lo[keep], sub_lo])
            size = np.concatenate([size[keep], sub_size])
            owner = np.concatenate([owner[keep], np.repeat(owner[cut], 4)])
        centre = lo + 0.5 * size[:, None]
        st = _void_state(lo, size, voids)
        keep = (st == 0) | ((st == 1) & ~_in_any_void(centre, voids))
        lo, size, owner = lo[keep], size[keep], owner[keep]

    order_idx = np.lexsort((lo[:, 0], lo[:, 1], owner))
    lo, size, owner = lo[order_idx], size[order_idx], owner[order_idx]
    pts, wts = _cell_rule(lo, size, order)
    cell = np.repeat(owner, order * order)
    return QuadratureRule(pts, wts, cell)


def boundary_stations(domain, segment, order=2, voids=()):
    """Gauss stations on the four sides; segments of length ``segment``."""
    x0, y0, x1, y1 = (float(v) for v in domain)
    g, w = gauss_legendre(order)
    u = 0.5 * (g + 1.0)
    pts, wts, side = [], [], []
    for sid, (a, b) in enumerate(
        [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))]
    ):
        a = np.asarray(a)
        b = np.asarray(b)
        length = float(np.linalg.norm(b - a))
        n_seg = max(1, int(round(length / segment)))
        t = ((np.arange(n_seg)[:, None] + u[None, :]) / n_seg).ravel()
        pts.append(a + t[:, None] * (b - a))
        wts.append(np.tile(0.5 * w * length / n_seg, n_seg))
        side.append(np.full(t.shape[0], sid))
    pts = np.vstack(pts)
    wts = np.concatenate(wts)
    side = np.concatenate(side)
    keep = ~_in_any_void(pts, voids)
    return BoundaryStations(pts[keep], wts[keep], side[keep])


# ---------------------------------------------------------------------------
# coverage


def min_nodes_for_order(order, dim=2):
    return (order + 1) * (order + 2) // 2 if dim == 2 else order + 1


def coverage_report(nodes, points, basis_order=1):
    """Points covered by fewer than the minimum number of (unmodified) supports.

    Returns ``(deficient_indices, counts)``.
    """
    tree = nodes.tree()
    lists = tree.query_ball_point(points, nodes.max_support)
    counts = np.empty(len(points), dtype=np.int64)
    for k, nb in enumerate(lists):
        nb = np.asarray(nb, dtype=np.int64)
        if nb.size:
            r = np.linalg.norm(nodes.coords[nb] - points[k], axis=1)
            counts[k] = int(np.count_nonzero(r < nodes.support[nb]))
        else:
            counts[k] = 0
    need = min_nodes_for_order(basis_order)
    return np.flatnonzero(counts < need), counts


def check_coverage(nodes, points, basis_order=1):
    bad, counts = coverage_report(nodes, points, basis_order)
    if bad.size:
        k = int(bad[0])
        raise CoverageError(
            f"{bad.size} point(s) covered by fewer than {min_nodes_for_order(basis_order)} "
            f"nodes; first at {tuple(points[k])} with {counts[k]}",
            point=tuple(points[k]),
            n_nodes=int(counts[k]),
        )
