"""Property suites run by ``imrkpm verify``.

Each suite returns a :class:`SuiteResult` with the worst error it observed
and the tolerance it was held to. All randomness is drawn from a generator
seeded by the caller, so a report is reproducible.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import discretization as disc
from . import material as mat
from . import rk, solver, svm
from .imaging import ImageGrid
from .synthetic import circle_image


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tolerance: float
    seconds: float = 0.0
    details: dict = field(default_factory=dict)
    normalized: bool = False  # max_error is the worst error / tolerance over several checks

    @property
    def passed(self):
        return bool(np.isfinite(self.max_error) and self.max_error < self.tolerance)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = "".join(f" {k}={v:.3g}" if isinstance(v, float) else f" {k}={v}" for k, v in self.details.items())
        if self.normalized:
            return f"{tag} {self.name}: worst error/tolerance {self.max_error:.3e}{extra}"
        return f"{tag} {self.name}: max error {self.max_error:.3e} (tol {self.tolerance:.0e}){extra}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def perturbed_cloud(n=20, extent=1.0, jitter=0.25, field_=None, rng=None):
    """Cell-centred n x n lattice on [0, extent]^2, nodes moved by up to ``jitter`` x spacing.

    With ``field_`` given, interface nodes are added from the unperturbed
    lattice edges before the regular nodes are moved.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    img = ImageGrid(np.zeros((n, n)), pixel_size=extent / n)
    f = svm.ConstantScore(1.0) if field_ is None else field_
    nodes = disc.generate_nodes(img, f)
    if field_ is not None:
        nodes = disc.generate_interface_nodes(f, nodes)
    h = nodes.spacing
    c = nodes.coords.copy()
    reg = ~nodes.is_interface
    c[reg] += rng.uniform(-jitter * h, jitter * h, (int(reg.sum()), 2))
    return disc.NodeSet(c, nodes.kind, nodes.support, nodes.phase, h, nodes.extent,
                        nodes.lattice_shape, nodes.lattice_index)


def _reproduction_errors(table, coords, points):
    own = table.owner()
    n = points.shape[0]
    pu = np.bincount(own, table.values, n)
    lin = np.column_stack([np.bincount(own, table.values * coords[table.indices, k], n) for k in range(2)])
    return float(np.abs(pu - 1).max()), float(np.linalg.norm(lin - points, axis=1).max())


@_timed
def suite_reproducing(rng, backend=None):
    """Partition of unity and linear reproduction for RK and IM-RK."""
    nodes = perturbed_cloud(rng=rng)
    pts = rng.uniform(0.0, 1.0, (500, 2))
    t = rk.shape_functions_at(pts, nodes, backend=backend)
    pu_rk, lin_rk = _reproduction_errors(t, nodes.coords, pts)
    f = svm.CircleScore((0.5, 0.5), 0.27)
    im_nodes = perturbed_cloud(field_=f, rng=rng)
    t = rk.shape_functions_at(pts, im_nodes, f, use_im=True, backend=backend)
    pu_im, lin_im = _reproduction_errors(t, im_nodes.coords, pts)
    err = max(pu_rk / 1e-10, pu_im / 1e-10, lin_rk / 1e-9, lin_im / 1e-9)
    return SuiteResult("reproducing conditions", err, 1.0, normalized=True,
                       details={"pu_rk": pu_rk, "pu_im": pu_im, "linear_rk": lin_rk, "linear_im": lin_im,
                                "interface_nodes": im_nodes.n_interface})


@_timed
def suite_hat(rng, backend=None):
    """1D tent-kernel RK with a = spacing equals the FEM hat functions."""
    xn = np.arange(11.0)
    xs = rng.uniform(0.0, 10.0, 100)
    t = rk.evaluate_shapes(xs, xn, 1.0, rk.BasisSpec(1, 1, "tent"), backend=backend)
    err = 0.0
    for p in range(xs.size):
        ids, v, _ = t.row(p)
        err = max(err, float(np.abs(v - np.maximum(0.0, 1.0 - np.abs(xs[p] - xn[ids]))).max()))
    return SuiteResult("1D hat degeneracy", err, 1e-12)


@_timed
def suite_truncation(rng, backend=None):
    """Regular nodes vanish across the interface; interface nodes reach both sides."""
    img, center, radius = circle_image(n=30, radius_px=8.3)
    f = svm.CircleScore(center, radius)
    nodes = disc.generate_interface_nodes(f, disc.generate_nodes(img, f))
    ang = rng.uniform(0, 2 * np.pi, 200)
    r = radius + rng.uniform(-1.5, 1.5, 200) * nodes.spacing
    pts = np.asarray(center) + r[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    s = f.values(pts)
    t = rk.shape_functions_at(pts, nodes, f, use_im=True, backend=backend)
    sign = rk.node_signs(nodes, f)
    worst = 0.0
    for p in range(pts.shape[0]):
        ids, v, _ = t.row(p)
        wrong = (sign[ids] != 0) & (sign[ids] * s[p] < 0)
        if np.any(wrong):
            worst = max(worst, float(np.abs(v[wrong]).max()))
    # every interface node carries nonzero value on both sides: probe x_I -+ h/4 along the normal
    ids = np.flatnonzero(nodes.is_interface)
    xi = nodes.coords[ids]
    g = f.gradients(xi)
    n = g / np.linalg.norm(g, axis=1)[:, None]
    probes = np.vstack([xi - 0.25 * nodes.spacing * n, xi + 0.25 * nodes.spacing * n])
    tp = rk.shape_functions_at(probes, nodes, f, use_im=True, backend=backend)
    own = tp.owner()
    hit = np.zeros(probes.shape[0], dtype=bool)
    target = np.concatenate([ids, ids])
    hit[own[(tp.indices == target[own]) & (np.abs(tp.values) > 0)]] = True
    one_sided = int(np.count_nonzero(~(hit[: ids.size] & hit[ids.size:])))
    return SuiteResult("IM-RK truncation", worst + one_sided, 1e-300,
                       details={"max_wrong_side_value": worst, "one_sided_interface_nodes": one_sided,
                                "interface_nodes": int(ids.size)})


def _trained_circle_score(rng, n=24):
    img, center, radius = circle_image(n=n, radius_px=n * 0.27, pixel_size=1.0)
    from .imaging import label_pixels, otsu_threshold, training_data

    labels = label_pixels(img, otsu_threshold(img.histogram()))
    pts, y = training_data(img, labels)
    model = svm.train_svm(pts, y, sigma=2.5, C=10.0)
    return svm.ScoreField(model), center, radius


def _fd_gradient(fun, x, h):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@_timed
def suite_gradients(rng, backend=None, n_points=100):
    """Analytic derivatives against central differences."""
    out = {}
    # shape functions (RK and IM-RK)
    img, center, radius = circle_image(n=20, radius_px=5.6)
    f = svm.CircleScore(center, radius)
    nodes = disc.generate_interface_nodes(f, disc.generate_nodes(img, f))
    pts = rng.uniform(1.0, 19.0, (n_points, 2))
    out["shape"] = max(
        max(rk.gradient_check(p, nodes, backend=backend) for p in pts),
        max(rk.gradient_check(p, nodes, f, use_im=True, backend=backend) for p in pts),
    )
    # SVM score
    sf, c, _ = _trained_circle_score(rng)
    xs = np.asarray(c) + rng.uniform(-8, 8, (n_points, 2))
    ga = sf.gradients(xs)
    scale = max(np.abs(ga).max(), 1e-300)
    err = 0.0
    for i, x in enumerate(xs):
        gf = _fd_gradient(lambda z: float(sf.values(z[None])[0]), x, 1e-5)
        err = max(err, float(np.abs(gf - ga[i]).max() / scale))
    out["score"] = err
    # degraded stress vs stored energy
    lam, mu = mat.lame(3660.0, 0.358)
    err = 0.0
    for _ in range(n_points):
        e = rng.normal(scale=1e-2, size=3)
        eps = np.array([[e[0], e[2]], [e[2], e[1]]])
        d = rng.uniform(0, 0.99)
        sig = mat.degraded_stress(eps, d, lam, mu)
        h = 1e-7

        def energy(v):
            return float(mat.stored_bulk_energy(np.array([[v[0], v[2]], [v[2], v[1]]]), d, lam, mu))

        g = _fd_gradient(energy, np.array([eps[0, 0], eps[1, 1], eps[0, 1]]), h)
        ana = np.array([sig[0, 0], sig[1, 1], 2 * sig[0, 1]])
        err = max(err, float(np.abs(g - ana).max() / max(np.abs(ana).max(), 1e-300)))
    out["stress"] = err
    # CZM tractions vs potential
    p = mat.CzmParameters(0.0171, 10.0, 10.0)
    err = 0.0
    for _ in range(n_points):
        wn = rng.uniform(0, 5 * p.delta_n)
        wt = rng.uniform(-3 * p.delta_t, 3 * p.delta_t)
        tn, tt = mat.czm_tractions(wn, wt, p)
        h = 1e-6 * p.delta_n
        gn = (mat.czm_potential(wn + h, wt, p) - mat.czm_potential(wn - h, wt, p)) / (2 * h)
        gt = (mat.czm_potential(wn, wt + h, p) - mat.czm_potential(wn, wt - h, p)) / (2 * h)
        err = max(err, float(max(abs(gn - tn), abs(gt - tt)) / p.t_n_max))
    out["czm"] = err
    worst = max(out["shape"] / 1e-5, out["stress"] / 1e-5, out["score"] / 1e-6, out["czm"] / 1e-6)
    return SuiteResult("gradient checks", worst, 1.0, normalized=True, details=out)


@_timed
def suite_czm(rng=None, backend=None):
    """Peak traction, its location and the fracture energy of the normal law."""
    p = mat.CzmParameters(0.0171, 10.0, 10.0)
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda w: -float(mat.czm_tractions(w, 0.0, p)[0]),
                          bounds=(0.0, 10 * p.delta_n), method="bounded",
                          options={"xatol": 1e-12 * p.delta_n})
    peak = -res.fun
    e_peak = abs(peak - p.t_n_max) / p.t_n_max
    e_loc = abs(res.x - p.delta_n) / p.delta_n
    energy, _ = integrate.quad(lambda w: float(mat.czm_tractions(w, 0.0, p)[0]), 0.0, np.inf,
                               epsabs=1e-14, epsrel=1e-12, limit=200)
    e_energy = abs(energy - p.g_c) / p.g_c
    worst = max(e_peak / 1e-6, e_loc / 1e-6, e_energy / 1e-4)
    return SuiteResult("CZM analytics", worst, 1.0, normalized=True,
                       details={"peak": e_peak, "location": e_loc, "energy": e_energy})


@_timed
def suite_damage(rng=None, backend=None):
    """d(0) = 0, monotone in H, and exactly 1/2 at the characteristic history."""
    g_c, l_d = 0.536, 0.006
    worst = 0.0
    for beta in (0.0, 0.3, 0.9):
        H = np.linspace(0.0, 50 * g_c / l_d, 1000)
        d = mat.damage(H, beta, g_c, l_d)
        worst = max(worst, abs(float(d[0])), float(np.maximum(0.0, -np.diff(d)).max()))
        half = float(mat.damage((1 - beta) * g_c / (2 * l_d), beta, g_c, l_d))
        worst = max(worst, abs(half - 0.5))
    return SuiteResult("damage formula", worst, 1e-15)


@_timed
def suite_patch(rng=None, backend=None, n=21, order=2):
    """Linear patch test on a single-phase plate, default quadrature and order 4."""
    img = ImageGrid(np.zeros((n, n)), pixel_size=1.0)
    f = svm.ConstantScore(1.0)
    nodes = disc.generate_nodes(img, f)
    phase = mat.PhaseProperties(1000.0, 0.3, 1.0)
    A = np.array([[1e-3, 2e-4], [-3e-4, 5e-4]])
    errs = {}
    for q in (order, 4):
        quad = disc.build_quadrature(img.extent, img.pixel_size, q)
        errs[q] = solver.run_patch_test(nodes, quad, phase, A, backend=backend)
    return SuiteResult("patch test", errs[order], 1e-6,
                       details={f"order{order}": errs[order], "order4": errs[4],
                                "decreases_with_order": bool(errs[4] < errs[order])})


SUITES = {
    "reproducing": suite_reproducing,
    "hat": suite_hat,
    "truncation": suite_truncation,
    "gradients": suite_gradients,
    "czm": suite_czm,
    "damage": suite_damage,
    "patch": suite_patch,
}


def run_all(seed=42, names=None, backend=None):
    results = []
    for name in names or SUITES:
        rng = np.random.default_rng(seed)
        results.append(SUITES[name](rng, backend=backend))
    return results


def format_report(results):
    lines = [r.line() for r in results]
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} suites passed")
    return "\n".join(lines) + "\n"
