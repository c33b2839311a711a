"""Reproducing kernel (RK) and interface-modified RK shape functions.

    Psi_I(x) = H(0)^T M(x)^{-1} H(x - x_I) phi_I(x),
    M(x)     = sum_I H(x - x_I) H(x - x_I)^T phi_I(x).

Monomials are scaled by a length L (the largest support radius) so that M
stays well conditioned; reproduction is unaffected by the scaling. The
gradient follows from differentiating M b = H(0): grad b = -M^{-1} (grad M) b.

In the interface-modified variant the kernel of every regular node is
multiplied by max(0, tanh(xi_I)), xi_I = sign(S(x_I)) * S(x) / c, which
vanishes on the far side of the S = 0 set. Interface-node kernels are left
untouched.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _accel
from ._accel import njit
from .discretization import INTERFACE
from .errors import ClassificationError, CoverageError, ParameterError

COND_CAP = 1e12

CUBIC = 0
TENT = 1
_KERNELS = {"cubic": CUBIC, "tent": TENT}


# ---------------------------------------------------------------------------
# scalar building blocks


def _cubic(z):
    z = np.asarray(z, dtype=float)
    inner = 2.0 / 3.0 - 4.0 * z**2 + 4.0 * z**3
    # outer branch 4/3 - 4z + 4z^2 - 4/3 z^3 in factored form, exact zero at z = 1
    outer = (4.0 / 3.0) * (1.0 - z) ** 3
    dinner = -8.0 * z + 12.0 * z**2
    douter = -4.0 * (1.0 - z) ** 2
    val = np.where(z <= 0.5, inner, np.where(z <= 1.0, outer, 0.0))
    dval = np.where(z <= 0.5, dinner, np.where(z < 1.0, douter, 0.0))
    return val, dval


def _tent(z):
    z = np.asarray(z, dtype=float)
    return np.where(z < 1.0, 1.0 - z, 0.0), np.where(z < 1.0, -1.0, 0.0)


def kernel_value(x, x_I, a, family="cubic"):
    """Kernel phi(|x - x_I| / a) and its gradient with respect to x.

    The gradient is defined as zero at z = 0 and for z >= 1.
    """
    if not a > 0:
        raise ParameterError(f"support radius must be positive, got {a}")
    d = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(x_I, dtype=float))
    r = float(np.linalg.norm(d))
    z = r / a
    val, dval = (_cubic if family == "cubic" else _tent)(z)
    grad = np.zeros_like(d)
    if 0.0 < z < 1.0:
        grad = float(dval) / a * d / r
    return float(val), grad


def regularized_heaviside(xi):
    """max(0, tanh(xi))."""
    return np.maximum(0.0, np.tanh(xi))


def modified_kernel(x, x_I, a, node_kind, node_score, s, grad_s, c, family="cubic"):
    """IM-RK kernel of one node at one point.

    ``s`` and ``grad_s`` are S(x) and grad S(x) at the evaluation point;
    ``node_score`` is S(x_I). Interface nodes return the plain kernel.
    """
    val, grad = kernel_value(x, x_I, a, family)
    if node_kind == INTERFACE:
        return val, grad
    if not c > 0:
        raise ParameterError("scaling length c must be positive")
    if node_score == 0:
        raise ClassificationError(
            f"regular node at {tuple(np.atleast_1d(x_I))} has S = 0; it should be an interface node"
        )
    sgn = 1.0 if node_score > 0 else -1.0
    xi = sgn * s / c
    t = np.tanh(xi)
    if xi <= 0:
        return 0.0, np.zeros_like(grad)
    return val * t, grad * t + val * (1.0 - t * t) * sgn * np.asarray(grad_s) / c


# ---------------------------------------------------------------------------
# basis


@dataclass(frozen=True)
class BasisSpec:
    order: int = 1
    dim: int = 2
    kernel: str = "cubic"

    def __post_init__(self):
        if self.order not in (0, 1, 2, 3):
            raise ParameterError(f"basis order must be 0..3, got {self.order}")
        if self.dim not in (1, 2):
            raise ParameterError("dim must be 1 or 2")
        if self.kernel not in _KERNELS:
            raise ParameterError(f"unknown kernel {self.kernel!r}")

    @property
    def exponents(self):
        """Multi-indices ordered by total degree: 1, x, y, x^2, xy, y^2, ..."""
        if self.dim == 1:
            return np.arange(self.order + 1, dtype=np.int64)[:, None]
        rows = [(p - q, q) for p in range(self.order + 1) for q in range(p + 1)]
        return np.array(rows, dtype=np.int64)

    @property
    def size(self):
        return self.exponents.shape[0]


def basis_vector(d, exps, L):
    """H(d) with scaled monomials (d/L)^alpha."""
    u = np.asarray(d, dtype=float) / L
    return np.prod(u[None, :] ** exps, axis=1)


# ---------------------------------------------------------------------------
# batched evaluation: inputs are CSR pair lists (indptr over points, node ids)


@njit(nogil=True)
def _shape_numba(
    pts, coords, supports, indptr, idx, node_sign, s_pts, gs_pts, c, use_im, exps, kernel, L
):
    n_pts, dim = pts.shape
    m = exps.shape[0]
    nnz = idx.shape[0]
    vals = np.zeros(nnz)
    grads = np.zeros((nnz, dim))
    cond = np.zeros(n_pts)
    H = np.zeros(m)
    dH = np.zeros((dim, m))
    for p in range(n_pts):
        k0 = indptr[p]
        k1 = indptr[p + 1]
        M = np.zeros((m, m))
        dM = np.zeros((dim, m, m))
        phis = np.zeros(k1 - k0)
        dphis = np.zeros((k1 - k0, dim))
        for k in range(k0, k1):
            I = idx[k]
            r2 = 0.0
            for j in range(dim):
                r2 += (pts[p, j] - coords[I, j]) ** 2
            r = np.sqrt(r2)
            a = supports[I]
            z = r / a
            if kernel == 0:
                if z <= 0.5:
                    phi = 2.0 / 3.0 - 4.0 * z * z + 4.0 * z * z * z
                    dphi = -8.0 * z + 12.0 * z * z
                elif z <= 1.0:
                    w = 1.0 - z
                    phi = (4.0 / 3.0) * w * w * w
                    dphi = -4.0 * w * w
                else:
                    phi = 0.0
                    dphi = 0.0
            else:
                if z < 1.0:
                    phi = 1.0 - z
                    dphi = -1.0
                else:
                    phi = 0.0
                    dphi = 0.0
            if z >= 1.0 or r == 0.0:
                dphi = 0.0
            gphi = np.zeros(dim)
            if r > 0.0:
                for j in range(dim):
                    gphi[j] = dphi / a * (pts[p, j] - coords[I, j]) / r
            if use_im and node_sign[I] != 0:
                xi = node_sign[I] * s_pts[p] / c
                if xi <= 0.0:
                    phi = 0.0
                    for j in range(dim):
                        gphi[j] = 0.0
                else:
                    t = np.tanh(xi)
                    for j in range(dim):
                        gphi[j] = gphi[j] * t + phi * (1.0 - t * t) * node_sign[I] * gs_pts[p, j] / c
                    phi = phi * t
            phis[k - k0] = phi
            for j in range(dim):
                dphis[k - k0, j] = gphi[j]
            if phi == 0.0 and gphi[0] == 0.0 and (dim == 1 or gphi[dim - 1] == 0.0):
                continue
            for t_ in range(m):
                h = 1.0
                for j in range(dim):
                    h *= ((pts[p, j] - coords[I, j]) / L) ** exps[t_, j]
                H[t_] = h
                for jd in range(dim):
                    e = exps[t_, jd]
                    if e == 0:
                        dH[jd, t_] = 0.0
                    else:
                        g = e * ((pts[p, jd] - coords[I, jd]) / L) ** (e - 1) / L
                        for j in range(dim):
                            if j != jd:
                                g *= ((pts[p, j] - coords[I, j]) / L) ** exps[t_, j]
                        dH[jd, t_] = g
            for r_ in range(m):
                for s_ in range(m):
                    hh = H[r_] * H[s_]
                    M[r_, s_] += hh * phi
                    for j in range(dim):
                        dM[j, r_, s_] += (dH[j, r_] * H[s_] + H[r_] * dH[j, s_]) * phi + hh * gphi[j]
        ev = np.linalg.eigvalsh(M)
        if ev[0] <= 0.0:
            cond[p] = np.inf
            continue
        cond[p] = ev[m - 1] / ev[0]
        if cond[p] > 1e300:
            continue
        Minv = np.linalg.inv(M)
        b = Minv[:, 0].copy()
        db = np.zeros((dim, m))
        for j in range(dim):
            tmp = dM[j] @ b
            db[j] = -(Minv @ tmp)
        for k in range(k0, k1):
            I = idx[k]
            phi = phis[k - k0]
            for t_ in range(m):
                h = 1.0
                for j in range(dim):
                    h *= ((pts[p, j] - coords[I, j]) / L) ** exps[t_, j]
                H[t_] = h
                for jd in range(dim):
                    e = exps[t_, jd]
                    if e == 0:
                        dH[jd, t_] = 0.0
                    else:
                        g = e * ((pts[p, jd] - coords[I, jd]) / L) ** (e - 1) / L
                        for j in range(dim):
                            if j != jd:
                                g *= ((pts[p, j] - coords[I, j]) / L) ** exps[t_, j]
                        dH[jd, t_] = g
            bh = 0.0
            for t_ in range(m):
                bh += b[t_] * H[t_]
            vals[k] = bh * phi
            for j in range(dim):
                acc = 0.0
                for t_ in range(m):
                    acc += db[j, t_] * H[t_] * phi + b[t_] * dH[j, t_] * phi
                grads[k, j] = acc + bh * dphis[k - k0, j]
    return vals, grads, cond


def _shape_numpy(
    pts, coords, supports, indptr, idx, node_sign, s_pts, gs_pts, c, use_im, exps, kernel, L
):
    n_pts, dim = pts.shape
    m = exps.shape[0]
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(n_pts), counts)
    d = pts[owner] - coords[idx]
    r = np.linalg.norm(d, axis=1)
    a = supports[idx]
    z = r / a
    phi, dphi = (_cubic if kernel == CUBIC else _tent)(z)
    dphi = np.where((z >= 1.0) | (r == 0.0), 0.0, dphi)
    safe_r = np.where(r > 0, r, 1.0)
    gphi = (dphi / a / safe_r)[:, None] * d
    if use_im:
        sg = node_sign[idx].astype(float)
        mod = sg != 0
        xi = sg * s_pts[owner] / c
        t = np.tanh(np.maximum(xi, 0.0))
        fac = np.where(mod, np.where(xi > 0, t, 0.0), 1.0)
        dfac = np.where(mod & (xi > 0), (1.0 - t * t) * sg / c, 0.0)
        gphi = gphi * fac[:, None] + (phi * dfac)[:, None] * gs_pts[owner]
        phi = phi * fac

    u = d / L
    H = np.prod(u[:, None, :] ** exps[None, :, :], axis=2)  # (nnz, m)
    dH = np.zeros((dim, idx.shape[0], m))
    for jd in range(dim):
        e = exps[:, jd]
        lowered = exps.copy()
        lowered[:, jd] = np.maximum(e - 1, 0)
        dH[jd] = np.where(e[None, :] > 0, e[None, :] * np.prod(u[:, None, :] ** lowered[None], axis=2) / L, 0.0)

    HH = H[:, :, None] * H[:, None, :]
    M = np.zeros((n_pts, m, m))
    np.add.at(M, owner, HH * phi[:, None, None])
    dM = np.zeros((dim, n_pts, m, m))
    for j in range(dim):
        term = (dH[j][:, :, None] * H[:, None, :] + H[:, :, None] * dH[j][:, None, :]) * phi[:, None, None]
        term += HH * gphi[:, j, None, None]
        np.add.at(dM[j], owner, term)

    ev = np.linalg.eigvalsh(M)
    ok = ev[:, 0] > 0
    cond = np.full(n_pts, np.inf)
    cond[ok] = ev[ok, -1] / ev[ok, 0]
    Minv = np.zeros_like(M)
    Minv[ok] = np.linalg.inv(M[ok])
    b = Minv[:, :, 0]
    db = np.stack([-np.einsum("pab,pbc,pc->pa", Minv, dM[j], b) for j in range(dim)])
    bh = np.einsum("ka,ka->k", b[owner], H)
    vals = bh * phi
    grads = np.empty((idx.shape[0], dim))
    for j in range(dim):
        grads[:, j] = (
            np.einsum("ka,ka->k", db[j][owner], H) * phi
            + np.einsum("ka,ka->k", b[owner], dH[j]) * phi
            + bh * gphi[:, j]
        )
    bad = ~ok
    if bad.any():
        rows = np.isin(owner, np.flatnonzero(bad))
        vals[rows] = 0.0
        grads[rows] = 0.0
    return vals, grads, cond


@dataclass(frozen=True)
class ShapeTable:
    """Shape functions at many points in CSR layout (row = point)."""

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    cond: np.ndarray

    @property
    def n_points(self):
        return self.indptr.shape[0] - 1

    def row(self, p):
        sl = slice(self.indptr[p], self.indptr[p + 1])
        return self.indices[sl], self.values[sl], self.gradients[sl]

    def owner(self):
        return np.repeat(np.arange(self.n_points), np.diff(self.indptr))


def neighbor_lists(points, coords, supports):
    """CSR lists of nodes whose support strictly contains each point; sorted by node id."""
    points = np.atleast_2d(points)
    if coords.shape[1] == 1:
        tree = cKDTree(coords)
        lists = tree.query_ball_point(points, supports.max())
    else:
        lists = cKDTree(coords).query_ball_point(points, supports.max())
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    chunks = []
    for p, nb in enumerate(lists):
        nb = np.sort(np.asarray(nb, dtype=np.int64))
        if nb.size:
            r = np.linalg.norm(coords[nb] - points[p], axis=1)
            nb = nb[r < supports[nb]]
        chunks.append(nb)
        indptr[p + 1] = indptr[p] + nb.size
    idx = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return indptr, idx


def evaluate_shapes(
    points,
    coords,
    supports,
    spec=BasisSpec(),
    node_sign=None,
    s_pts=None,
    gs_pts=None,
    c=None,
    use_im=False,
    cond_cap=COND_CAP,
    backend=None,
    raise_on_singular=True,
):
    """Shape values/gradients at ``points`` for nodes at ``coords`` (any dim 1 or 2).

    For IM-RK pass ``node_sign`` (+1/-1 for regular nodes by the sign of
    S(x_I), 0 for interface nodes), the score ``s_pts`` and its gradient
    ``gs_pts`` at the points, and the scaling length ``c``.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, spec.dim)
    points = np.asarray(points, dtype=float).reshape(-1, spec.dim)
    supports = np.broadcast_to(np.asarray(supports, dtype=float), (coords.shape[0],)).copy()
    n_pts = points.shape[0]
    if use_im:
        if node_sign is None or s_pts is None or gs_pts is None or c is None:
            raise ParameterError("IM-RK evaluation needs node_sign, s_pts, gs_pts and c")
        if not c > 0:
            raise ParameterError("scaling length c must be positive")
        node_sign = np.asarray(node_sign, dtype=np.float64)
        s_pts = np.asarray(s_pts, dtype=float).reshape(n_pts)
        gs_pts = np.asarray(gs_pts, dtype=float).reshape(n_pts, spec.dim)
        c = float(c)
    else:
        node_sign = np.zeros(coords.shape[0])
        s_pts = np.zeros(n_pts)
        gs_pts = np.zeros((n_pts, spec.dim))
        c = 1.0
    indptr, idx = neighbor_lists(points, coords, supports)
    L = float(supports.max())
    kern = _KERNELS[spec.kernel]
    fn = _shape_numba if _accel.resolve_backend(backend) == "numba" else _shape_numpy
    vals, grads, cond = fn(
        points, coords, supports, indptr, idx, node_sign, s_pts, gs_pts, c, bool(use_im),
        spec.exponents, kern, L,
    )
    table = ShapeTable(indptr, idx, vals, grads, cond)
    if raise_on_singular:
        bad = np.flatnonzero(~(cond <= cond_cap))
        if bad.size:
            p = int(bad[0])
            raise CoverageError(
                f"moment matrix singular or ill-conditioned (cond {cond[p]:.3g}) at "
                f"{tuple(points[p])} with {int(indptr[p + 1] - indptr[p])} contributing nodes; "
                f"{bad.size} point(s) affected",
                point=tuple(points[p]),
                n_nodes=int(indptr[p + 1] - indptr[p]),
            )
    return table


def node_signs(nodes, field=None):
    """+1/-1 per regular node from sign(S(x_I)); 0 for interface nodes."""
    sign = np.asarray(nodes.phase, dtype=np.float64).copy()
    sign[nodes.kind == INTERFACE] = 0.0
    if field is not None:
        s = np.asarray(field.values(nodes.coords), dtype=float)
        reg = nodes.kind != INTERFACE
        if np.any(s[reg] == 0.0):
            k = int(np.flatnonzero(reg & (s == 0.0))[0])
            raise ClassificationError(
                f"regular node {k} at {tuple(nodes.coords[k])} has S = 0; it should be an interface node"
            )
        sign[reg] = np.sign(s[reg])
    return sign


def xi_field(field, points, measure="score"):
    """(S, grad S) used inside xi; ``measure='distance'`` uses S/|grad S| instead."""
    s, g = field.values_and_gradients(points)
    s = np.asarray(s, dtype=float)
    g = np.asarray(g, dtype=float)
    if measure == "score":
        return s, g
    if measure != "distance":
        raise ParameterError(f"unknown xi measure {measure!r}")
    # d(S/|g|) is approximated by g/|g| (first-order distance, curvature term dropped)
    norm = np.linalg.norm(g, axis=1)
    ok = norm > field.eps_grad
    dist = np.where(s >= 0, np.inf, -np.inf)
    dist[ok] = s[ok] / norm[ok]
    gd = np.zeros_like(g)
    gd[ok] = g[ok] / norm[ok, None]
    return dist, gd


def shape_functions_at(
    points, nodes, field=None, spec=BasisSpec(), use_im=False, c=None, xi_measure="score", backend=None,
    raise_on_singular=True,
):
    """Batched evaluation on a :class:`NodeSet`; IM-RK needs ``field``."""
    kwargs = {}
    if use_im:
        if field is None:
            raise ParameterError("IM-RK evaluation needs a score field")
        s, g = xi_field(field, np.atleast_2d(points), xi_measure)
        kwargs = dict(node_sign=node_signs(nodes, field), s_pts=s, gs_pts=g,
                      c=nodes.spacing if c is None else c)
    return evaluate_shapes(
        points, nodes.coords, nodes.support, spec, use_im=use_im, backend=backend,
        raise_on_singular=raise_on_singular, **kwargs,
    )


@dataclass(frozen=True)
class ShapeEval:
    node_ids: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    cond: float


def shape_functions(x, nodes, field=None, spec=BasisSpec(), use_im=False, c=None, xi_measure="score",
                    backend=None):
    """Single-point evaluation returning a :class:`ShapeEval`."""
    t = shape_functions_at(np.atleast_2d(x), nodes, field, spec, use_im, c, xi_measure, backend)
    ids, v, g = t.row(0)
    return ShapeEval(ids.copy(), v.copy(), g.copy(), float(t.cond[0]))


def moment_matrix(x, coords, supports, spec=BasisSpec(), weights=None):
    """M(x) by direct summation; ``weights`` overrides the kernel values (e.g. IM-RK)."""
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    coords = np.asarray(coords, dtype=float).reshape(-1, spec.dim)
    supports = np.broadcast_to(np.asarray(supports, dtype=float), (coords.shape[0],))
    L = float(supports.max())
    exps = spec.exponents
    M = np.zeros((spec.size, spec.size))
    for k in range(coords.shape[0]):
        if weights is None:
            phi = kernel_value(x, coords[k], supports[k], spec.kernel)[0]
        else:
            phi = weights[k]
        H = basis_vector(x - coords[k], exps, L)
        M += np.outer(H, H) * phi
    return M


def gradient_check(x, nodes, field=None, spec=BasisSpec(), use_im=False, c=None, xi_measure="score",
                   step=None, backend=None):
    """Max relative error of analytic shape gradients against central differences.

    The error is measured per node relative to max(|grad Psi|) over the
    contributing set, so nodes with tiny gradients do not dominate.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    h = 1e-6 * nodes.max_support if step is None else step
    base = shape_functions(x, nodes, field, spec, use_im, c, xi_measure, backend)
    fd = np.zeros_like(base.gradients)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        vals = []
        for sgn in (1.0, -1.0):
            t = shape_functions(x + sgn * e, nodes, field, spec, use_im, c, xi_measure, backend)
            lookup = dict(zip(t.node_ids.tolist(), t.values.tolist()))
            vals.append(np.array([lookup.get(int(i), 0.0) for i in base.node_ids]))
        fd[:, j] = (vals[0] - vals[1]) / (2 * h)
    scale = max(np.abs(base.gradients).max(), 1e-300)
    return float(np.abs(fd - base.gradients).max() / scale)


def write_shape_line(path, nodes, node_id, start, end, n=200, field=None, spec=BasisSpec(), use_im=False,
                     c=None, xi_measure="score"):
    """Dump Psi_{node_id} along a segment as CSV ``s,x,y,psi``."""
    t = np.linspace(0.0, 1.0, n)
    pts = np.asarray(start, float)[None] + t[:, None] * (np.asarray(end, float) - np.asarray(start, float))[None]
    table = shape_functions_at(pts, nodes, field, spec, use_im, c, xi_measure, raise_on_singular=False)
    length = float(np.linalg.norm(np.asarray(end, float) - np.asarray(start, float)))
    with open(path, "w") as fh:
        fh.write("s,x,y,psi\n")
        for p in range(n):
            ids, v, _ = table.row(p)
            hit = np.flatnonzero(ids == node_id)
            psi = float(v[hit[0]]) if hit.size else 0.0
            fh.write(f"{t[p] * length:.9g},{pts[p, 0]:.9g},{pts[p, 1]:.9g},{psi:.9g}\n")
