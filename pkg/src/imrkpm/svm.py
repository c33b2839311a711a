"""Binary soft-margin RBF support vector machine and the score fields built on it.

The dual problem

    min  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  y^T a = 0

is solved by SMO: the first index of each pair is the maximal KKT violator,
the second is picked among violators by the second-order gain. The
decision function is f(x) = sum_i a_i y_i K(x_i, x) + b with
K(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from . import _accel
from ._accel import njit
from .errors import (
    ConvergenceError,
    DegenerateGradientError,
    ParameterError,
    TrainingError,
)

log = logging.getLogger(__name__)

SVM_FILE_TAG = "# imrkpm-svm v1"
_TAU = 1e-12


def rbf_kernel(x, y, sigma):
    """exp(-|x-y|^2 / (2 sigma^2)) for two points."""
    if not sigma > 0:
        raise ParameterError(f"kernel scale must be positive, got {sigma}")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return math.exp(-float(d @ d) / (2.0 * sigma * sigma))


def kernel_matrix(a, b, sigma):
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * sigma * sigma))


# ---------------------------------------------------------------------------
# SMO kernels


@njit(nogil=True)
def _smo_numba(K, y, C, tol, max_iter, alpha, G):
    """In-place SMO sweeps on (alpha, G); returns (pair updates, final KKT gap)."""
    n = y.shape[0]
    it = 0
    gap = np.inf
    while True:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                b = gmax - v
                if b > 0.0:
                    a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if a <= 0.0:
                        a = _TAU
                    obj = -(b * b) / a
                    if obj < best:
                        best = obj
                        j = t
        gap = gmax - gmin
        if gap < tol or j < 0:
            break
        if it >= max_iter:
            break
        it += 1

        ai_old = alpha[i]
        aj_old = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        yi = y[i]
        yj = y[j]
        for t in range(n):
            G[t] += y[t] * (yi * K[i, t] * dai + yj * K[j, t] * daj)
    return it, gap


def _smo_numpy(K, y, C, tol, max_iter, alpha, G):
    diagK = np.diag(K).copy()
    it = 0
    gap = np.inf
    pos = y > 0
    while True:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        v = -y * G
        vu = np.where(up, v, -np.inf)
        i = int(np.argmax(vu))
        gmax = vu[i]
        gmin = np.where(low, v, np.inf).min()
        gap = gmax - gmin
        bgain = gmax - v
        cand = low & (bgain > 0)
        if gap < tol or not cand.any():
            break
        if it >= max_iter:
            break
        it += 1
        a = diagK[i] + diagK - 2.0 * K[i]
        a = np.where(a <= 0, _TAU, a)
        obj = np.where(cand, -(bgain * bgain) / a, np.inf)
        j = int(np.argmin(obj))

        ai_old, aj_old = alpha[i], alpha[j]
        quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], _TAU)
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            ai, aj = alpha[i] + delta, alpha[j] + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            ai, aj = alpha[i] - delta, alpha[j] + delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            elif aj < 0:
                aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            elif ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        G += y * (y[i] * K[i] * (ai - ai_old) + y[j] * K[j] * (aj - aj_old))
    return it, gap


def _kkt_gap(alpha, G, y, C):
    v = -y * G
    pos = y > 0
    up = (pos & (alpha < C)) | (~pos & (alpha > 0))
    low = (pos & (alpha > 0)) | (~pos & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return float(v[up].max() - v[low].min())


def _gradient(K, y, alpha):
    sv = alpha > 0
    return y * (K[:, sv] @ (alpha[sv] * y[sv])) - 1.0


def _free_solve(K, y, alpha, free):
    """Minimizer over ``free`` with the other variables frozen (bordered KKT system)."""
    nf = int(free.sum())
    bound = ~free
    yF = y[free]
    ab = alpha * bound
    A = np.zeros((nf + 1, nf + 1))
    A[:nf, :nf] = K[np.ix_(free, free)] * np.outer(yF, yF)
    A[:nf, nf] = yF
    A[nf, :nf] = yF
    rhs = np.append(1.0 - yF * (K[np.ix_(free, bound)] @ (ab[bound] * y[bound])),
                    -float(y[bound] @ ab[bound]))
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    return sol[:nf] if np.all(np.isfinite(sol)) else None


def _clipped_step(K, y, C, alpha, max_free):
    """Newton step on the free set, shortened to stay in the box."""
    free = (alpha > 0) & (alpha < C)
    if not 0 < free.sum() <= max_free:
        return None
    target = _free_solve(K, y, alpha, free)
    if target is None:
        return None
    cur = alpha[free]
    step = target - cur
    t = 1.0
    neg = step < 0
    if neg.any():
        t = min(t, float(np.min(-cur[neg] / step[neg])))
    posd = step > 0
    if posd.any():
        t = min(t, float(np.min((C - cur[posd]) / step[posd])))
    new = alpha.copy()
    newF = cur + t * step
    newF[newF < 1e-15 * C] = 0.0
    newF[newF > C * (1 - 1e-15)] = C
    new[free] = newF
    # restore the equality constraint exactly after clipping
    drift = float(new @ y)
    if drift != 0.0:
        movable = (new > 0) & (new < C) & free
        if movable.any():
            k = np.flatnonzero(movable)[np.argmax(new[movable] * (C - new[movable]))]
            new[k] -= drift * y[k]
            new[k] = min(max(new[k], 0.0), C)
    return new


def _polish(K, y, C, alpha, max_free=2000, max_steps=50):
    """Active-set refinement of the SMO iterate on its free variables.

    Repeats clipped Newton steps (each one moves at least one variable onto
    a bound) until a step lands inside the box. Steps that would raise the
    dual objective are rejected. Returns the new (alpha, G) or None.
    """
    best = None
    cur = alpha
    f_cur = _objective(K, y, cur)
    for _ in range(max_steps):
        new = _clipped_step(K, y, C, cur, max_free)
        if new is None:
            break
        f_new = _objective(K, y, new)
        if f_new > f_cur:
            break
        done = np.array_equal((new > 0) & (new < C), (cur > 0) & (cur < C))
        cur, f_cur, best = new, f_new, new
        if done:
            break
    if best is None:
        return None
    return best, _gradient(K, y, best)


def _bias(alpha, G, y, C):
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return -float(yG[free].mean())
    ub = np.inf
    lb = -np.inf
    up_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lo_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    if up_mask.any():
        ub = yG[up_mask].min()
    if lo_mask.any():
        lb = yG[lo_mask].max()
    return -float(0.5 * (ub + lb))


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coefficients: np.ndarray
    bias: float
    kernel_scale: float
    box_constraint: float
    n_iter: int = 0
    kkt_gap: float = 0.0

    def __post_init__(self):
        sv = np.array(self.support_vectors, dtype=float).reshape(-1, 2)
        coef = np.array(self.dual_coefficients, dtype=float).ravel()
        if sv.shape[0] != coef.shape[0]:
            raise ParameterError("support vector / coefficient count mismatch")
        if not self.kernel_scale > 0 or not self.box_constraint > 0:
            raise ParameterError("kernel_scale and box_constraint must be positive")
        sv.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coefficients", coef)

    @property
    def n_support(self):
        return self.support_vectors.shape[0]

    def decision(self, x, chunk=4096):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], chunk):
            K = kernel_matrix(x[s : s + chunk], self.support_vectors, self.kernel_scale)
            out[s : s + chunk] = K @ self.dual_coefficients + self.bias
        return out

    def gradient(self, x, chunk=4096):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        s2 = self.kernel_scale**2
        for s in range(0, x.shape[0], chunk):
            xs = x[s : s + chunk]
            Kc = kernel_matrix(xs, self.support_vectors, self.kernel_scale) * self.dual_coefficients
            out[s : s + chunk] = (Kc @ self.support_vectors - xs * Kc.sum(axis=1)[:, None]) / s2
        return out

    def predict(self, x):
        return np.where(self.decision(x) >= 0.0, 1, -1)


def _objective(K, y, alpha):
    sv = alpha > 0
    ay = alpha[sv] * y[sv]
    return 0.5 * float(ay @ K[np.ix_(sv, sv)] @ ay) - float(alpha.sum())


POLISH_AFTER = 10  # pair updates per sample in one stage before polishing


def _dual_solution(K, y, C, tol, max_iter, backend, alpha0=None):
    """SMO with periodic active-set polishing.

    Returns ``(alpha, bias, pair_updates, kkt_gap)``. ``alpha0`` warm-starts
    from a feasible point (e.g. the solution for a smaller C).
    """
    n = y.shape[0]
    if max_iter is None:
        max_iter = max(100_000, 1000 * n)
    if alpha0 is None:
        alpha = np.zeros(n)
        G = -np.ones(n)
    else:
        alpha = np.clip(np.array(alpha0, dtype=float), 0.0, C)
        G = _gradient(K, y, alpha)
    smo = _smo_numba if _accel.resolve_backend(backend) == "numba" else _smo_numpy
    used = 0
    stage = max(tol, 1e-2)
    while True:
        it, gap = smo(K, y, float(C), float(stage), int(max_iter - used), alpha, G)
        used += it
        if gap < tol:
            break
        # the dense polish only pays off once SMO has started to crawl
        polished = _polish(K, y, C, alpha) if it > POLISH_AFTER * n else None
        if polished is not None and _objective(K, y, polished[0]) <= _objective(K, y, alpha):
            alpha[:], G[:] = polished
            gap = _kkt_gap(alpha, G, y, C)
            if gap < tol:
                break
        if used >= max_iter:
            raise ConvergenceError(
                f"SMO did not reach KKT tolerance {tol:g} after {used} pair updates",
                diagnostics={"kkt_gap": float(gap), "iterations": int(used), "C": C},
            )
        stage = max(tol, 0.1 * stage)
    return alpha, _bias(alpha, G, y, C), int(used), float(gap)


def _fit_from_kernel(points, y, K, sigma, C, tol, max_iter, backend):
    alpha, b, n_iter, gap = _dual_solution(K, y, C, tol, max_iter, backend)
    keep = alpha > 0.0
    return SvmModel(points[keep].copy(), alpha[keep] * y[keep], b, sigma, C, n_iter, gap)


def _check_training_input(points, labels):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    y = np.asarray(labels, dtype=float).ravel()
    if pts.shape[0] != y.shape[0]:
        raise ParameterError("points and labels differ in length")
    if pts.shape[0] < 2:
        raise TrainingError("need at least two training points")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ParameterError("labels must be +1 or -1")
    if np.all(y > 0) or np.all(y < 0):
        raise TrainingError("training data contains a single class")
    return pts, y


def train_svm(points, labels, sigma, C, tol=1e-6, max_iter=None, backend=None):
    """Train a soft-margin RBF SVM.

    Parameters
    ----------
    points : (n, 2) array
        Training coordinates (mm).
    labels : (n,) array of +1/-1
    sigma : float
        Kernel scale (mm).
    C : float
        Box constraint.
    tol : float
        Stop when the maximal KKT violation gap falls below ``tol``.

    Returns
    -------
    SvmModel
    """
    if not sigma > 0 or not C > 0:
        raise ParameterError("sigma and C must be positive")
    pts, y = _check_training_input(points, labels)
    K = kernel_matrix(pts, pts, sigma)
    return _fit_from_kernel(pts, y, K, float(sigma), float(C), tol, max_iter, backend)


def training_accuracy(model, points, labels):
    return float(np.mean(model.predict(points) == np.asarray(labels).ravel()))


# ---------------------------------------------------------------------------
# hyperparameter search


def default_grids(pixel_size, n_sigma=7, n_c=7):
    sigmas = pixel_size * np.logspace(np.log10(0.5), np.log10(32.0), n_sigma)
    cs = np.logspace(-1.0, 4.0, n_c)
    return sigmas, cs


def stratified_folds(y, folds, seed=42, max_attempts=20):
    """Fold index per sample; each class is shuffled and dealt round-robin."""
    y = np.asarray(y).ravel()
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + attempt)
        assign = np.empty(y.shape[0], dtype=np.int64)
        offset = 0
        for cls in (-1.0, 1.0):
            idx = np.flatnonzero(y == cls)
            idx = idx[rng.permutation(idx.shape[0])]
            assign[idx] = (np.arange(idx.shape[0]) + offset) % folds
            offset += idx.shape[0]
        if all(np.unique(y[assign != k]).size == 2 for k in range(folds)):
            return assign
    raise TrainingError(f"could not form {folds} folds whose training parts hold both classes")


@dataclass
class TuningResult:
    sigma: float
    C: float
    cv_loss: float
    table: list = field(default_factory=list)  # (sigma, C, loss) for every grid pair


def _fold_errors(y, K_full, tr, C_path, tol, backend):
    """Held-out error counts along an ascending C path, warm-starting each fit.

    A solution for C is feasible for any larger C, so each fit starts from the
    previous one. A fold that fails to converge yields ``inf``.
    """
    te = ~tr
    Ktr = K_full[np.ix_(tr, tr)]
    Kte = K_full[np.ix_(te, tr)]
    ytr, yte = y[tr], y[te]
    out = []
    alpha = None
    for C in C_path:
        try:
            alpha, b, _, _ = _dual_solution(Ktr, ytr, C, tol, None, backend, alpha0=alpha)
        except ConvergenceError as exc:
            log.warning("CV fit at C=%g did not converge: %s", C, exc)
            out.append(math.inf)
            alpha = None
            continue
        f = Kte @ (alpha * ytr) + b
        out.append(float(np.count_nonzero(np.where(f >= 0.0, 1.0, -1.0) != yte)))
    return out


def tune_hyperparameters(
    points,
    labels,
    sigma_grid,
    C_grid,
    folds=5,
    seed=42,
    tol=1e-3,
    threads=1,
    backend=None,
):
    """Exhaustive grid search minimising the k-fold misclassification rate.

    Ties are broken by the smaller C, then the smaller sigma. ``tol`` is the
    KKT tolerance of the cross-validation fits only; it only has to be tight
    enough for held-out predictions to settle.
    """
    sigma_grid = [float(s) for s in np.atleast_1d(sigma_grid)]
    C_grid = [float(c) for c in np.atleast_1d(C_grid)]
    if not sigma_grid or not C_grid:
        raise ParameterError("hyperparameter grids must be nonempty")
    if folds < 2:
        raise ParameterError("need at least two folds")
    if min(sigma_grid) <= 0 or min(C_grid) <= 0:
        raise ParameterError("grid values must be positive")
    pts, y = _check_training_input(points, labels)
    assign = stratified_folds(y, folds, seed)
    d2 = cdist(pts, pts, "sqeuclidean")
    C_path = sorted(C_grid)
    n = y.shape[0]

    table = []
    for sigma in sigma_grid:
        K_full = np.exp(-d2 / (2.0 * sigma * sigma))

        def job(k, K_full=K_full):
            return _fold_errors(y, K_full, assign != k, C_path, tol, backend)

        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_fold = list(pool.map(job, range(folds)))
        else:
            per_fold = [job(k) for k in range(folds)]
        totals = np.sum(np.array(per_fold), axis=0) / n
        loss_of = dict(zip(C_path, totals))
        table.extend((sigma, C, float(loss_of[C])) for C in C_grid)

    finite = [row for row in table if math.isfinite(row[2])]
    if not finite:
        raise TrainingError("no grid point trained successfully")
    best = min(finite, key=lambda r: (round(r[2], 12), r[1], r[0]))
    return TuningResult(best[0], best[1], best[2], table)


# ---------------------------------------------------------------------------
# score fields


class ScoreField:
    """Signed score S(x) from a trained SVM; S > 0 in the matrix, S < 0 in inclusions.

    ``gradient_step`` switches the gradient to central differences (mm); by
    default the analytic gradient is used.
    """

    def __init__(self, model, gradient_step=None):
        self.model = model
        self.gradient_step = gradient_step

    @property
    def eps_grad(self):
        l1 = float(np.abs(self.model.dual_coefficients).sum())
        return 1e-10 * max(1.0, l1 / self.model.kernel_scale)

    def values(self, x):
        return self.model.decision(x)

    def gradients(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.gradient_step is None:
            return self.model.gradient(x)
        h = float(self.gradient_step)
        out = np.empty_like(x)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[:, k] = (self.model.decision(x + e) - self.model.decision(x - e)) / (2 * h)
        return out

    def values_and_gradients(self, x):
        return self.values(x), self.gradients(x)


class LinearScore:
    """S(x) = normal . x - offset."""

    eps_grad = 1e-10

    def __init__(self, normal=(1.0, 0.0), offset=0.0):
        self.normal = np.asarray(normal, dtype=float)
        self.offset = float(offset)

    def values(self, x):
        return np.atleast_2d(np.asarray(x, dtype=float)) @ self.normal - self.offset

    def gradients(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.broadcast_to(self.normal, x.shape).copy()

    def values_and_gradients(self, x):
        return self.values(x), self.gradients(x)


class CircleScore:
    """Exact signed distance to a circle, negative inside (inclusion)."""

    eps_grad = 1e-10

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def values(self, x):
        r = np.linalg.norm(np.atleast_2d(np.asarray(x, dtype=float)) - self.center, axis=1)
        return r - self.radius

    def gradients(self, x):
        d = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        r = np.linalg.norm(d, axis=1)
        out = np.zeros_like(d)
        nz = r > 0
        out[nz] = d[nz] / r[nz, None]
        return out

    def values_and_gradients(self, x):
        return self.values(x), self.gradients(x)


class ConstantScore:
    """Single-phase field: no interface anywhere."""

    eps_grad = 1e-10

    def __init__(self, value=1.0):
        if value == 0:
            raise ParameterError("a constant score must be nonzero")
        self.value = float(value)

    def values(self, x):
        return np.full(np.atleast_2d(x).shape[0], self.value)

    def gradients(self, x):
        return np.zeros_like(np.atleast_2d(np.asarray(x, dtype=float)))

    def values_and_gradients(self, x):
        return self.values(x), self.gradients(x)


def _as_points(x):
    arr = np.asarray(x, dtype=float)
    return arr.reshape(-1, 2), arr.ndim == 1


def score(field, x):
    pts, single = _as_points(x)
    v = field.values(pts)
    return float(v[0]) if single else v


def score_gradient(field, x):
    pts, single = _as_points(x)
    g = field.gradients(pts)
    return g[0] if single else g


def interface_normal(field, x):
    """grad S / |grad S|; points from inclusion (S<0) into matrix (S>0)."""
    pts, single = _as_points(x)
    g = field.gradients(pts)
    norm = np.linalg.norm(g, axis=1)
    if np.any(norm <= field.eps_grad):
        bad = pts[norm <= field.eps_grad][0]
        raise DegenerateGradientError(f"|grad S| below {field.eps_grad:g} at {tuple(bad)}")
    n = g / norm[:, None]
    return n[0] if single else n


def pseudo_distance(field, x):
    """First-order signed distance S / |grad S| to the zero level set."""
    pts, single = _as_points(x)
    s, g = field.values_and_gradients(pts)
    norm = np.linalg.norm(g, axis=1)
    if np.any(norm <= field.eps_grad):
        bad = pts[norm <= field.eps_grad][0]
        raise DegenerateGradientError(f"|grad S| below {field.eps_grad:g} at {tuple(bad)}")
    d = s / norm
    return float(d[0]) if single else d


def interface_geometry(field, x):
    """Batched S, unit normal and pseudo distance; degenerate points flagged.

    Returns ``(S, normal, distance, ok)``. Where ``ok`` is False the normal is
    set to (1, 0) and the distance to +/-inf, i.e. "far from any interface".
    """
    pts, _ = _as_points(x)
    s, g = field.values_and_gradients(pts)
    norm = np.linalg.norm(g, axis=1)
    ok = norm > field.eps_grad
    normal = np.zeros_like(pts)
    normal[:, 0] = 1.0
    normal[ok] = g[ok] / norm[ok, None]
    dist = np.where(s >= 0, np.inf, -np.inf)
    dist[ok] = s[ok] / norm[ok]
    return s, normal, dist, ok


# ---------------------------------------------------------------------------
# persistence


def save_model(path, model):
    lines = [
        SVM_FILE_TAG,
        "sigma,C,bias,count",
        f"{model.kernel_scale!r},{model.box_constraint!r},{model.bias!r},{model.n_support}",
        "x,y,alpha_y",
    ]
    for (x, y), c in zip(model.support_vectors, model.dual_coefficients):
        lines.append(f"{float(x)!r},{float(y)!r},{float(c)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path):
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != SVM_FILE_TAG:
        raise TrainingError(f"{path}: not an imrkpm SVM model file")
    sigma, C, bias, count = text[2].split(",")
    rows = [ln.split(",") for ln in text[4:] if ln.strip()]
    if len(rows) != int(count):
        raise TrainingError(f"{path}: header says {count} support vectors, found {len(rows)}")
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return SvmModel(arr[:, :2], arr[:, 2], float(bias), float(sigma), float(C))
