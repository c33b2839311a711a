"""Quasi-static Galerkin solver with closed-form damage and smeared cohesive interfaces.

Each quadrature point carries the displacement-gradient vector
f = [F11, F12, F21, F22] (F_ij = du_i/dx_j), from which

    eps_e = P_e f   (Voigt, engineering shear),   w = P_w f = h F n,
    P_e   = P_s - gamma P_nw P_w .

The secant stiffness at a point is w_q (P_e^T D P_e + gamma P_w^T T P_w)
with D the spectral secant tensor and T = k_n n n^T + k_t m m^T the CZM
secant; both reproduce the current stress and traction exactly, so the
internal force equals K(u) u. Load steps are solved by Picard iteration.
Essential conditions are imposed by penalty at boundary Gauss stations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _accel
from . import discretization as disc
from . import material as mat
from . import rk
from ._accel import njit
from .errors import ConfigError, ParameterError, SolverError
from .svm import interface_geometry

log = logging.getLogger(__name__)

PENALTY_FACTOR = 1e3
MAX_PICARD = 50
TOL_DAMAGE = 1e-4
TOL_DISP = 1e-6
ANDERSON_DEPTH = 0

_PS = np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0], [0, 1.0, 1.0, 0]])


# ---------------------------------------------------------------------------
# boundary conditions and load program


@dataclass(frozen=True)
class Constraint:
    """Penalty constraint on one displacement component.

    ``where`` is a side name (bottom/right/top/left) or an (x, y) point. The
    prescribed value is ``value + scale * u_bar`` for the current step.
    """

    where: object
    component: int
    value: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        if self.component not in (0, 1):
            raise ParameterError("component must be 0 (x) or 1 (y)")
        if isinstance(self.where, str) and self.where not in disc.SIDES:
            raise ParameterError(f"unknown side {self.where!r}")

    @property
    def driven(self):
        return self.scale != 0.0

    def target(self, u_bar):
        return self.value + self.scale * u_bar


@dataclass(frozen=True)
class LoadProgram:
    u_bar: tuple  # prescribed value per step (cumulative)
    constraints: tuple

    def __post_init__(self):
        if not self.constraints:
            raise ConfigError("load program has no constraints")
        object.__setattr__(self, "u_bar", tuple(float(u) for u in self.u_bar))

    @classmethod
    def monotonic(cls, u_max, n_steps, constraints):
        if n_steps < 1:
            raise ParameterError("n_steps must be at least 1")
        return cls(tuple(u_max * (k + 1) / n_steps for k in range(n_steps)), tuple(constraints))

    @property
    def driven(self):
        return [c for c in self.constraints if c.driven]


def tension_program(u_max, n_steps, pin=None):
    """Top edge pulled in y, bottom edge held in y, one point pinned in x."""
    cons = [Constraint("top", 1, scale=1.0), Constraint("bottom", 1)]
    if pin is not None:
        cons.append(Constraint(tuple(pin), 0))
    return LoadProgram.monotonic(u_max, n_steps, cons)


# ---------------------------------------------------------------------------
# model


@dataclass
class Model:
    nodes: disc.NodeSet
    quad: disc.QuadratureRule
    shapes: rk.ShapeTable
    lam: np.ndarray
    mu: np.ndarray
    g_c: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    normal: np.ndarray
    lengths: mat.RegularizationLengths
    czm: mat.CzmParameters = None
    stations: disc.BoundaryStations = None
    station_shapes: rk.ShapeTable = None
    penalty: float = 0.0
    E_max: float = 0.0
    backend: str = None
    _pattern: tuple = field(default=None, repr=False)

    @property
    def n_dof(self):
        return 2 * self.nodes.n_nodes

    @property
    def n_points(self):
        return self.quad.n_points


def point_properties(points, field, matrix, inclusion, blending=None):
    """Per-point (E, nu, g_c) by sign(S), optionally blended towards homogenized values.

    ``blending`` is ``(box, width, volume_fraction)``: inside ``box`` the
    microstructure values are used, beyond ``width`` outside it the
    homogenized ones, with the logistic ramp in between. Returns
    ``(E, nu, g_c, alpha)``.
    """
    s = np.asarray(field.values(points), dtype=float)
    incl = s < 0
    E = np.where(incl, inclusion.E, matrix.E)
    nu = np.where(incl, inclusion.nu, matrix.nu)
    gc = np.where(incl, inclusion.g_c, matrix.g_c)
    alpha = np.zeros(points.shape[0])
    if blending is not None:
        box, width, p = blending
        hom = mat.homogenized_phase(matrix, inclusion, p)
        dx = np.maximum(np.maximum(box[0] - points[:, 0], points[:, 0] - box[2]), 0.0)
        dy = np.maximum(np.maximum(box[1] - points[:, 1], points[:, 1] - box[3]), 0.0)
        alpha = mat.blend_weight(np.hypot(dx, dy), width)
        E = mat.blend(E, hom.E, alpha)
        nu = mat.blend(nu, hom.nu, alpha)
        gc = mat.blend(gc, hom.g_c, alpha)
    return E, nu, gc, alpha


def build_model(
    nodes,
    quad,
    field,
    matrix,
    inclusion=None,
    lengths=None,
    czm=None,
    spec=rk.BasisSpec(),
    use_im=True,
    c=None,
    xi_measure="score",
    station_order=2,
    penalty=None,
    blending=None,
    backend=None,
):
    """Precompute shape functions and per-point material data.

    Without ``czm`` the cohesive term and the smeared jump are dropped
    (beta = 0 everywhere), which is the plain bulk phase-field model.
    """
    inclusion = matrix if inclusion is None else inclusion
    if lengths is None:
        raise ParameterError("regularization lengths are required")
    pts = quad.points
    has_interface = use_im and nodes.n_interface > 0
    shapes = rk.shape_functions_at(pts, nodes, field, spec, use_im=has_interface, c=c,
                                   xi_measure=xi_measure, backend=backend)
    E, nu, gc, alpha = point_properties(pts, field, matrix, inclusion, blending)
    lam, mu = mat.lame(E, nu)
    _, normal, dist, ok = interface_geometry(field, pts)
    if czm is None:
        beta = np.zeros(pts.shape[0])
    else:
        beta = np.where(ok, mat.interface_beta(np.where(ok, dist, 0.0), lengths.l_beta), 0.0)
        beta = beta * (1.0 - alpha)
    gamma = mat.interface_density(beta, lengths.l_beta)
    stations = disc.boundary_stations(nodes.extent, nodes.spacing, station_order, nodes.voids)
    st_shapes = rk.shape_functions_at(stations.points, nodes, field, spec, use_im=has_interface,
                                      c=c, xi_measure=xi_measure, backend=backend)
    E_max = float(np.max(E))
    if penalty is None:
        penalty = PENALTY_FACTOR * E_max / nodes.spacing
    return Model(
        nodes=nodes, quad=quad, shapes=shapes, lam=lam, mu=mu, g_c=gc, beta=beta, gamma=gamma,
        normal=normal, lengths=lengths, czm=czm, stations=stations, station_shapes=st_shapes,
        penalty=float(penalty), E_max=E_max, backend=backend,
    )


# ---------------------------------------------------------------------------
# kinematics


def displacement_gradients(model, u):
    """F at every quadrature point, shape (P, 2, 2)."""
    t = model.shapes
    own = t.owner()
    ux = u[2 * t.indices]
    uy = u[2 * t.indices + 1]
    P = t.n_points
    F = np.empty((P, 2, 2))
    F[:, 0, 0] = np.bincount(own, t.gradients[:, 0] * ux, P)
    F[:, 0, 1] = np.bincount(own, t.gradients[:, 1] * ux, P)
    F[:, 1, 0] = np.bincount(own, t.gradients[:, 0] * uy, P)
    F[:, 1, 1] = np.bincount(own, t.gradients[:, 1] * uy, P)
    return F


def interpolate(table, u):
    """u^h at the table's points, shape (P, 2)."""
    own = table.owner()
    P = table.n_points
    return np.column_stack([
        np.bincount(own, table.values * u[2 * table.indices], P),
        np.bincount(own, table.values * u[2 * table.indices + 1], P),
    ])


@dataclass
class PointFields:
    eps_e: np.ndarray
    w: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray


def point_fields(model, u):
    F = displacement_gradients(model, u)
    symF = 0.5 * (F + np.swapaxes(F, 1, 2))
    w = mat.smeared_jump(F, model.normal, model.lengths.h)
    eps_e = mat.effective_strain(symF, w, model.normal, model.gamma)
    pp, pm = mat.strain_energy_split(eps_e, model.lam, model.mu)
    return PointFields(eps_e, w, pp, pm)


def _projections(model):
    n = model.normal
    h = model.lengths.h
    P = n.shape[0]
    Pw = np.zeros((P, 2, 4))
    Pw[:, 0, 0] = h * n[:, 0]
    Pw[:, 0, 1] = h * n[:, 1]
    Pw[:, 1, 2] = h * n[:, 0]
    Pw[:, 1, 3] = h * n[:, 1]
    Pnw = np.zeros((P, 3, 2))
    Pnw[:, 0, 0] = n[:, 0]
    Pnw[:, 1, 1] = n[:, 1]
    Pnw[:, 2, 0] = n[:, 1]
    Pnw[:, 2, 1] = n[:, 0]
    Pe = _PS[None] - model.gamma[:, None, None] * np.einsum("pij,pjk->pik", Pnw, Pw)
    return Pe, Pw


def point_operators(model, pf, d):
    """Per-point 4x4 secant operators acting on f, weights included."""
    D = mat.secant_tensor(pf.eps_e, d, model.lam, model.mu, model.lengths.kappa)
    Pe, Pw = _projections(model)
    A = np.einsum("pji,pjk,pkl->pil", Pe, D, Pe)
    if model.czm is not None:
        wn, wt = mat.jump_components(pf.w, model.normal)
        kn, kt = mat.czm_secants(wn, wt, model.czm)
        m = mat.tangent_of(model.normal)
        T = kn[:, None, None] * model.normal[:, :, None] * model.normal[:, None, :]
        T = T + kt[:, None, None] * m[:, :, None] * m[:, None, :]
        A = A + model.gamma[:, None, None] * np.einsum("pji,pjk,pkl->pil", Pw, T, Pw)
    return A * model.quad.weights[:, None, None]


# ---------------------------------------------------------------------------
# assembly


def _pattern(model):
    """Unique node-pair blocks and the scatter map from (point, a, b) pairs."""
    if model._pattern is not None:
        return model._pattern
    t = model.shapes
    N = model.nodes.n_nodes
    counts = np.diff(t.indptr)
    first, second, keys = [], [], []
    for p in range(t.n_points):
        k0, k1 = t.indptr[p], t.indptr[p + 1]
        loc = np.arange(k0, k1)
        aa, bb = np.meshgrid(loc, loc, indexing="ij")
        first.append(aa.ravel())
        second.append(bb.ravel())
    pa = np.concatenate(first) if first else np.empty(0, np.int64)
    pb = np.concatenate(second) if second else np.empty(0, np.int64)
    keys = t.indices[pa] * N + t.indices[pb]
    uniq, inv = np.unique(keys, return_inverse=True)
    rows = uniq // N
    cols = uniq % N
    indptr = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=N), out=indptr[1:])
    pair_ptr = np.zeros(t.n_points + 1, dtype=np.int64)
    np.cumsum(counts**2, out=pair_ptr[1:])
    model._pattern = (pa, pb, inv.astype(np.int64), cols.astype(np.int64), indptr, uniq.shape[0], pair_ptr)
    return model._pattern


@njit(nogil=True)
def _scatter_numba(pair_ptr, pa, pb, inv, grads, A, nblocks):
    data = np.zeros((nblocks, 2, 2))
    P = A.shape[0]
    for p in range(P):
        for k in range(pair_ptr[p], pair_ptr[p + 1]):
            ga0 = grads[pa[k], 0]
            ga1 = grads[pa[k], 1]
            gb0 = grads[pb[k], 0]
            gb1 = grads[pb[k], 1]
            blk = inv[k]
            for i in range(2):
                for m in range(2):
                    data[blk, i, m] += (
                        ga0 * (A[p, 2 * i, 2 * m] * gb0 + A[p, 2 * i, 2 * m + 1] * gb1)
                        + ga1 * (A[p, 2 * i + 1, 2 * m] * gb0 + A[p, 2 * i + 1, 2 * m + 1] * gb1)
                    )
    return data


def _scatter_numpy(pair_ptr, pa, pb, inv, grads, A, nblocks, chunk=500_000):
    data = np.zeros((nblocks, 2, 2))
    owner = np.repeat(np.arange(A.shape[0]), np.diff(pair_ptr))
    A5 = A.reshape(-1, 2, 2, 2, 2)  # [p, i, j, m, l]
    for s in range(0, pa.shape[0], chunk):
        sl = slice(s, s + chunk)
        vals = np.einsum("kj,kijml,kl->kim", grads[pa[sl]], A5[owner[sl]], grads[pb[sl]])
        for i in range(2):
            for m in range(2):
                data[:, i, m] += np.bincount(inv[sl], vals[:, i, m], nblocks)
    return data


def assemble_operator(model, A):
    """Global stiffness (CSR) from per-point operators."""
    pa, pb, inv, cols, indptr, nblocks, pair_ptr = _pattern(model)
    fn = _scatter_numba if _accel.resolve_backend(model.backend) == "numba" else _scatter_numpy
    data = fn(pair_ptr, pa, pb, inv, model.shapes.gradients, np.ascontiguousarray(A), nblocks)
    K = sp.bsr_matrix((data, cols, indptr), shape=(model.n_dof, model.n_dof))
    return K.tocsr()


def assemble(model, u, d):
    """Secant stiffness and internal force at displacement ``u`` and damage ``d``."""
    pf = point_fields(model, u)
    A = point_operators(model, pf, d)
    K = assemble_operator(model, A)
    return K, K @ u, pf


# ---------------------------------------------------------------------------
# essential conditions


def _station_selection(model, con):
    st = model.stations
    if isinstance(con.where, str):
        sel = np.flatnonzero(st.side == disc.SIDES[con.where])
        return sel, st.weights[sel]
    p = np.asarray(con.where, dtype=float)
    k = int(np.argmin(np.linalg.norm(st.points - p, axis=1)))
    return np.array([k]), np.array([model.nodes.spacing])


def apply_essential_bcs(model, constraints, u_bar, penalty=None):
    """Penalty matrix and right-hand side for the given constraints at ``u_bar``."""
    if not constraints:
        raise ConfigError("no essential constraints given")
    penalty = model.penalty if penalty is None else penalty
    t = model.station_shapes
    rows, cols, vals = [], [], []
    rhs = np.zeros(model.n_dof)
    for con in constraints:
        sel, wts = _station_selection(model, con)
        g = con.target(u_bar)
        for s, ws in zip(sel, wts):
            ids, v, _ = t.row(s)
            dof = 2 * ids + con.component
            rows.append(np.repeat(dof, dof.size))
            cols.append(np.tile(dof, dof.size))
            vals.append(penalty * ws * np.outer(v, v).ravel())
            rhs[dof] += penalty * ws * g * v
    Kp = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(model.n_dof, model.n_dof),
    )
    return Kp, rhs


def touching_nodes(model, constraint):
    """Nodes whose support contains a station of ``constraint``."""
    sel, _ = _station_selection(model, constraint)
    t = model.station_shapes
    ids = [t.row(s)[0] for s in sel]
    return np.unique(np.concatenate(ids)) if ids else np.empty(0, np.int64)


# ---------------------------------------------------------------------------
# linear solves


@dataclass
class LinearSolution:
    x: np.ndarray
    method: str
    residual: float
    factor: object = None


def solve_linear(K, f, method="direct", tol=1e-10, maxiter=None):
    """Solve K x = f by sparse LU ("direct") or Jacobi-preconditioned CG ("cg")."""
    K = sp.csc_matrix(K)
    fnorm = float(np.linalg.norm(f))
    if fnorm == 0.0:
        return LinearSolution(np.zeros_like(f), method, 0.0)
    if method == "direct":
        try:
            # the secant operator is symmetric positive definite: symmetric
            # minimum-degree ordering, no partial pivoting
            lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        diag = np.abs(lu.U.diagonal())
        if diag.min() <= 1e-13 * diag.max():
            raise SolverError(
                f"stiffness is singular to working precision (pivot ratio {diag.min() / diag.max():.2e})"
            )
        x = lu.solve(f)
        res = float(np.linalg.norm(K @ x - f) / fnorm)
        if not np.isfinite(res) or res > tol:
            raise SolverError(f"direct solve residual {res:.3e} exceeds {tol:g}", [res])
        return LinearSolution(x, "direct", res, lu)
    if method == "cg":
        diag = K.diagonal()
        if np.any(diag <= 0):
            raise SolverError("nonpositive diagonal; CG needs a positive definite system")
        M = sp.diags(1.0 / diag)
        hist = []

        def cb(xk):
            hist.append(float(np.linalg.norm(K @ xk - f) / fnorm))

        x, info = spla.cg(K, f, rtol=tol, atol=0.0, M=M, maxiter=maxiter or 10 * K.shape[0], callback=cb)
        res = float(np.linalg.norm(K @ x - f) / fnorm)
        if info != 0 or res > 10 * tol:
            raise SolverError(f"CG did not converge (info {info}, residual {res:.3e})", hist)
        return LinearSolution(x, "cg", res)
    raise ParameterError(f"unknown linear solver {method!r}")


# ---------------------------------------------------------------------------
# load stepping


@dataclass
class SimulationState:
    u: np.ndarray
    H: np.ndarray
    d: np.ndarray
    step: int = 0
    u_bar: float = 0.0
    work: float = 0.0
    reaction: float = 0.0
    f_int: np.ndarray = None

    @classmethod
    def initial(cls, model):
        P = model.n_points
        return cls(np.zeros(model.n_dof), np.zeros(P), np.zeros(P), f_int=np.zeros(model.n_dof))


@dataclass
class StepResult:
    step: int
    u_bar: float
    converged: bool
    iterations: int
    reaction: float
    max_d: float
    dissipated: float
    stored: float
    work: float
    d_change: list = field(default_factory=list)
    u_change: list = field(default_factory=list)


def stored_energy(model, pf, d):
    bulk = mat.stored_bulk_energy(pf.eps_e, d, model.lam, model.mu, model.lengths.kappa)
    total = bulk
    if model.czm is not None:
        wn, wt = mat.jump_components(pf.w, model.normal)
        tn, tt = mat.czm_tractions(wn, wt, model.czm)
        total = total + model.gamma * 0.5 * (tn * wn + tt * wt)
    return float(np.sum(model.quad.weights * total))


def reaction_force(model, f_int, program):
    """Sum of internal forces over nodes touching the driven constraints."""
    total = 0.0
    for con in program.driven:
        ids = touching_nodes(model, con)
        total += float(np.sum(f_int[2 * ids + con.component]))
    return total


def _damage_from(model, H):
    return mat.damage(H, model.beta, model.g_c, model.lengths.l_d)


class _Anderson:
    """Anderson mixing for the damage fixed point d = G(d).

    Keeps the last ``depth`` differences of iterates and map values and
    returns the extrapolated next iterate, clipped to ``[lower, 1]``.
    """

    def __init__(self, depth, lower):
        self.depth = depth
        self.lower = lower
        self.x_prev = self.f_prev = self.g_prev = None
        self.dF, self.dG = [], []

    def step(self, x, g):
        f = g - x
        if self.depth <= 0:
            return g
        if self.f_prev is not None:
            self.dF.append(f - self.f_prev)
            self.dG.append(g - self.g_prev)
            if len(self.dF) > self.depth:
                self.dF.pop(0)
                self.dG.pop(0)
        self.f_prev, self.g_prev = f, g
        if not self.dF:
            return g
        F = np.column_stack(self.dF)
        coef = np.linalg.lstsq(F, f, rcond=1e-10)[0]
        x_new = g - np.column_stack(self.dG) @ coef
        return np.clip(x_new, self.lower, 1.0)


def run_load_step(model, state, program, u_bar, step=None, method="direct",
                  max_iter=MAX_PICARD, tol_d=TOL_DAMAGE, tol_u=TOL_DISP, anderson=ANDERSON_DEPTH):
    """Fixed-point iteration for one prescribed value; returns (StepResult, new state).

    Each iteration solves with the secant operator of the current damage
    iterate d_k, then maps the displacement to G(d_k) through the history.
    The step converges when max |G(d_k) - d_k| < ``tol_d`` and the
    displacement correction implied by the residual is below ``tol_u``
    relative to |u|. ``anderson`` > 0 mixes the damage iterates over that
    many previous pairs; 0 gives plain Picard. Committed damage is always
    G(d) evaluated from the committed history, never a mixed iterate.

    On failure the returned state is the unchanged input state.
    """
    step = state.step + 1 if step is None else step
    Kp, rhs = apply_essential_bcs(model, program.constraints, u_bar)
    x = state.d.copy()
    K = assemble(model, state.u, x)[0]
    mixer = _Anderson(anderson, state.d)
    d_hist, u_hist = [], []
    for it in range(1, max_iter + 1):
        sol = solve_linear(K + Kp, rhs, method)
        u = sol.x
        pf = point_fields(model, u)
        H_trial = mat.update_history(state.H, pf.psi_plus)
        g = _damage_from(model, H_trial)
        dd = float(np.max(np.abs(g - x))) if x.size else 0.0
        d_hist.append(dd)
        if dd < tol_d:
            K = assemble_operator(model, point_operators(model, pf, g))
            r = rhs - (K + Kp) @ u
            if sol.factor is not None:
                du = float(np.linalg.norm(sol.factor.solve(r)))
            else:
                du = float(np.linalg.norm(solve_linear(K + Kp, r, method).x)) if np.any(r) else 0.0
            unorm = float(np.linalg.norm(u))
            rel = du / unorm if unorm > 0 else du
            u_hist.append(rel)
            if rel < tol_u:
                f_int = K @ u
                R = reaction_force(model, f_int, program)
                # trapezoidal work of the boundary forces on the coefficient increment
                f_prev = np.zeros_like(f_int) if state.f_int is None else state.f_int
                work = state.work + 0.5 * float((f_int + f_prev) @ (u - state.u))
                stored = stored_energy(model, pf, g)
                new_state = SimulationState(u, H_trial, g, step, u_bar, work, R, f_int)
                res = StepResult(step, u_bar, True, it, R, float(g.max(initial=0.0)), work - stored,
                                 stored, work, d_hist, u_hist)
                return res, new_state
            x = g
            continue
        u_hist.append(float("nan"))
        x = mixer.step(x, g)
        K = assemble_operator(model, point_operators(model, pf, x))
    log.warning("step %d (u_bar=%g) did not converge in %d iterations", step, u_bar, max_iter)
    res = StepResult(step, u_bar, False, max_iter, float("nan"), float(state.d.max(initial=0.0)),
                     float("nan"), float("nan"), state.work, d_hist, u_hist)
    return res, state


def run_simulation(model, program, method="direct", on_step=None, state=None, **kw):
    """Run every step of ``program``; stops at the first failed step.

    Returns ``(results, state)`` where ``results`` lists the converged steps
    (plus the failed one, flagged, if any). ``on_step(result, state)`` is
    called after every step.
    """
    state = SimulationState.initial(model) if state is None else state
    results = []
    for u_bar in program.u_bar:
        res, state = run_load_step(model, state, program, u_bar, method=method, **kw)
        results.append(res)
        if on_step is not None:
            on_step(res, state)
        if not res.converged:
            break
    return results, state


# ---------------------------------------------------------------------------
# patch test


def _boundary_touching(nodes):
    x0, y0, x1, y1 = nodes.extent
    c = nodes.coords
    a = nodes.support
    return (c[:, 0] - a < x0) | (c[:, 0] + a > x1) | (c[:, 1] - a < y0) | (c[:, 1] + a > y1)


def run_patch_test(nodes, quad, phase, A=None, spec=rk.BasisSpec(), bc="nodal", station_order=2,
                   method="direct", penalty=None, backend=None):
    """Impose u = A x on the boundary of a single-phase body; max interior error.

    ``bc="nodal"`` fixes the coefficients of every node whose support
    reaches the boundary to A x_I. By linear reproduction this makes
    u^h = A x hold exactly along the boundary, so the remaining error is the
    quadrature error of the domain integrals. ``bc="penalty"`` uses the
    penalty stations instead and adds the O(1/penalty) boundary error.

    The error is max |u^h(x_I) - A x_I| over nodes whose support does not
    reach the boundary, relative to max |A x| over the domain.
    """
    from .svm import ConstantScore

    A = np.eye(2) * 1e-3 if A is None else np.asarray(A, dtype=float)
    lengths = mat.RegularizationLengths(l_d=1.0, l_beta=1.0, h=nodes.spacing)
    model = build_model(nodes, quad, ConstantScore(1.0), phase, lengths=lengths, spec=spec,
                        use_im=False, station_order=station_order, penalty=penalty, backend=backend)
    K = assemble_operator(model, point_operators(model, point_fields(model, np.zeros(model.n_dof)),
                                                 np.zeros(model.n_points)))
    c = nodes.coords
    touching = _boundary_touching(nodes)
    if bc == "nodal":
        fixed = np.zeros(model.n_dof, dtype=bool)
        fixed[2 * np.flatnonzero(touching)] = True
        fixed[2 * np.flatnonzero(touching) + 1] = True
        u = np.zeros(model.n_dof)
        u[0::2] = c @ A[0]
        u[1::2] = c @ A[1]
        free = ~fixed
        Kff = K[free][:, free]
        rhs = -(K[free][:, fixed] @ u[fixed])
        u[free] = solve_linear(Kff, rhs, method).x
    elif bc == "penalty":
        st = model.stations
        t = model.station_shapes
        rows, cols, vals = [], [], []
        rhs = np.zeros(model.n_dof)
        for s in range(st.points.shape[0]):
            ids, v, _ = t.row(s)
            g = A @ st.points[s]
            for comp in (0, 1):
                dof = 2 * ids + comp
                rows.append(np.repeat(dof, dof.size))
                cols.append(np.tile(dof, dof.size))
                vals.append(model.penalty * st.weights[s] * np.outer(v, v).ravel())
                rhs[dof] += model.penalty * st.weights[s] * g[comp] * v
        Kp = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=K.shape)
        u = solve_linear(K + Kp, rhs, method).x
    else:
        raise ParameterError(f"unknown patch-test boundary treatment {bc!r}")
    interior = ~touching
    table = rk.evaluate_shapes(c[interior], nodes.coords, nodes.support, spec, backend=backend)
    uh = interpolate(table, u)
    exact = c[interior] @ A.T
    x0, y0, x1, y1 = nodes.extent
    corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]])
    scale = np.abs(corners @ A.T).max()
    if scale == 0:
        return float(np.abs(uh - exact).max())
    return float(np.abs(uh - exact).max() / scale)
