"""Constitutive layer: spectral split, degradation, damage, smeared interface and cohesive law.

Units are mm, N and MPa throughout; Young's moduli given in GPa are
converted on construction of :class:`PhaseProperties`. Strains and stresses
are plain 2x2 arrays with arbitrary leading batch dimensions. Plane strain.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

KAPPA = 1e-8
SIGMOID_SLOPE = 12.0
GPA = 1000.0  # MPa per GPa


@dataclass(frozen=True)
class PhaseProperties:
    """Isotropic phase; ``E`` in MPa, ``g_c`` in N/mm."""

    E: float
    nu: float
    g_c: float

    def __post_init__(self):
        if not self.E > 0:
            raise ParameterError(f"E must be positive, got {self.E}")
        if not 0 <= self.nu < 0.5:
            raise ParameterError(f"nu must lie in [0, 0.5), got {self.nu}")
        if not self.g_c > 0:
            raise ParameterError(f"g_c must be positive, got {self.g_c}")

    @classmethod
    def from_gpa(cls, E_gpa, nu, g_c):
        return cls(E_gpa * GPA, nu, g_c)

    @property
    def lam(self):
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self):
        return self.E / (2 * (1 + self.nu))


def lame(E, nu):
    E = np.asarray(E, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


@dataclass(frozen=True)
class CzmParameters:
    g_c: float
    t_n_max: float
    t_t_max: float
    mode_one: bool = False  # drop the tangential contribution

    def __post_init__(self):
        for name in ("g_c", "t_n_max", "t_t_max"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    @property
    def delta_n(self):
        return czm_lengths(self.g_c, self.t_n_max, self.t_t_max)[0]

    @property
    def delta_t(self):
        return czm_lengths(self.g_c, self.t_n_max, self.t_t_max)[1]


@dataclass(frozen=True)
class RegularizationLengths:
    l_d: float
    l_beta: float
    h: float
    kappa: float = KAPPA

    def __post_init__(self):
        for name in ("l_d", "l_beta", "h"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not 0 < self.kappa < 1:
            raise ParameterError("kappa must lie in (0, 1)")


# ---------------------------------------------------------------------------
# spectral split


def spectral_split(eps):
    """Closed-form eigen-decomposition of symmetric 2x2 strains.

    Returns ``(values, vectors)`` with ``values[..., 0] >= values[..., 1]``
    and eigenvectors stored as columns. Coincident eigenvalues give the
    canonical axes.
    """
    eps = np.asarray(eps, dtype=float)
    a = eps[..., 0, 0]
    b = eps[..., 1, 1]
    c = 0.5 * (eps[..., 0, 1] + eps[..., 1, 0])
    mean = 0.5 * (a + b)
    rad = np.hypot(0.5 * (a - b), c)
    vals = np.stack([mean + rad, mean - rad], axis=-1)
    theta = 0.5 * np.arctan2(2.0 * c, a - b)
    ct, st = np.cos(theta), np.sin(theta)
    vecs = np.empty(eps.shape)
    vecs[..., 0, 0] = ct
    vecs[..., 1, 0] = st
    vecs[..., 0, 1] = -st
    vecs[..., 1, 1] = ct
    return vals, vecs


def macaulay_pos(x):
    return 0.5 * (x + np.abs(x))


def macaulay_neg(x):
    return 0.5 * (x - np.abs(x))


def strain_energy_split(eps, lam, mu):
    """Tensile and compressive energies (psi_plus, psi_minus) in MPa."""
    vals, _ = spectral_split(eps)
    tr = vals.sum(axis=-1)
    pp = mu * np.sum(macaulay_pos(vals) ** 2, axis=-1) + 0.5 * lam * macaulay_pos(tr) ** 2
    pm = mu * np.sum(macaulay_neg(vals) ** 2, axis=-1) + 0.5 * lam * macaulay_neg(tr) ** 2
    return pp, pm


def degradation(d):
    return (1.0 - d) ** 2


def _check_damage(d):
    d = np.asarray(d, dtype=float)
    if np.any((d < 0) | (d > 1)):
        raise ParameterError("damage must lie in [0, 1]")
    return d


def degraded_stress(eps, d, lam, mu, kappa=KAPPA):
    """sigma = (g(d) + kappa) dpsi+/deps + dpsi-/deps."""
    d = _check_damage(d)
    vals, vecs = spectral_split(eps)
    tr = vals.sum(axis=-1)
    gk = degradation(d) + kappa
    coef = 2 * mu * (gk[..., None] * macaulay_pos(vals) + macaulay_neg(vals))
    sig = np.einsum("...a,...ia,...ja->...ij", coef, vecs, vecs)
    vol = lam * (gk * macaulay_pos(tr) + macaulay_neg(tr))
    sig = sig + vol[..., None, None] * np.eye(2)
    return sig


def secant_tensor(eps, d, lam, mu, kappa=KAPPA):
    """Symmetric 3x3 Voigt operator D with D @ [e11, e22, 2 e12] = sigma (Voigt).

    The eigen-directions are frozen at the current strain: each principal
    mode is scaled by g(d) + kappa when in tension, by 1 otherwise; the
    shear mode between the directions uses the mean of the two factors.
    """
    d = _check_damage(d)
    vals, v = spectral_split(eps)
    tr = vals.sum(axis=-1)
    gk = degradation(d) + kappa
    f = np.where(vals > 0, gk[..., None], 1.0)
    ftr = np.where(tr > 0, gk, 1.0)
    fs = 0.5 * (f[..., 0] + f[..., 1])
    shape = vals.shape[:-1]
    m = np.array([1.0, 1.0, 0.0])
    D = (lam * ftr)[..., None, None] * np.outer(m, m)
    for k in range(2):
        r = np.stack([v[..., 0, k] ** 2, v[..., 1, k] ** 2, v[..., 0, k] * v[..., 1, k]], axis=-1)
        D = D + (2 * mu * f[..., k])[..., None, None] * r[..., :, None] * r[..., None, :]
    s = np.stack(
        [
            v[..., 0, 0] * v[..., 0, 1],
            v[..., 1, 0] * v[..., 1, 1],
            0.5 * (v[..., 0, 0] * v[..., 1, 1] + v[..., 1, 0] * v[..., 0, 1]),
        ],
        axis=-1,
    )
    D = D + (4 * mu * fs)[..., None, None] * s[..., :, None] * s[..., None, :]
    return np.broadcast_to(D, shape + (3, 3))


def stored_bulk_energy(eps, d, lam, mu, kappa=KAPPA):
    pp, pm = strain_energy_split(eps, lam, mu)
    return pp * (degradation(d) + kappa) + pm


# ---------------------------------------------------------------------------
# smeared interface


def interface_beta(dist, l_beta):
    """exp(-|dist| / l_beta)."""
    if not l_beta > 0:
        raise ParameterError("l_beta must be positive")
    return np.exp(-np.abs(np.asarray(dist, dtype=float)) / l_beta)


def interface_density(beta, l_beta):
    """gamma_beta = beta^2 / (2 l) + (l / 2) |grad beta|^2 = beta^2 / l for the exponential profile."""
    beta = np.asarray(beta, dtype=float)
    if np.any((beta < 0) | (beta > 1)):
        raise ParameterError("beta must lie in [0, 1]")
    return beta**2 / l_beta


def tangent_of(n):
    """Normal rotated by +90 degrees."""
    n = np.asarray(n, dtype=float)
    return np.stack([-n[..., 1], n[..., 0]], axis=-1)


def smeared_jump(grad_u, n, h):
    """w = h (grad u) n, with (grad u)_ij = du_i/dx_j."""
    return h * np.einsum("...ij,...j->...i", np.asarray(grad_u, dtype=float), n)


def jump_components(w, n):
    return np.einsum("...i,...i->...", w, n), np.einsum("...i,...i->...", w, tangent_of(n))


def sym_outer(a, b):
    o = a[..., :, None] * b[..., None, :]
    return 0.5 * (o + np.swapaxes(o, -1, -2))


def effective_strain(sym_grad, w, n, gamma):
    """eps_e = sym(grad u) - gamma * sym(n outer w)."""
    return np.asarray(sym_grad, dtype=float) - np.asarray(gamma)[..., None, None] * sym_outer(n, w)


# ---------------------------------------------------------------------------
# damage


def damage(H, beta, g_c, l_d):
    """d = 2H / (2H + (1 - beta) g_c / l_d); equals 1 wherever beta = 1 and H > 0."""
    H = np.asarray(H, dtype=float)
    if np.any(H < 0):
        raise ParameterError("history must be nonnegative")
    den = 2 * H + (1 - np.asarray(beta, dtype=float)) * g_c / l_d
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(den > 0, 2 * H / np.where(den > 0, den, 1.0), 0.0)
    return d


def update_history(H_old, psi_plus):
    return np.maximum(H_old, psi_plus)


# ---------------------------------------------------------------------------
# cohesive law


def czm_lengths(g_c, t_n_max, t_t_max):
    """(delta_n, delta_t) = (g / (T_n e), g / (T_t sqrt(e/2)))."""
    if not (g_c > 0 and t_n_max > 0 and t_t_max > 0):
        raise ParameterError("CZM parameters must be positive")
    e = np.e
    return g_c / (t_n_max * e), g_c / (t_t_max * np.sqrt(0.5 * e))


def czm_potential(w_n, w_t, p):
    """g [1 - (1 + w_n/dn) exp(-w_n/dn) exp(-w_t^2/dt^2)]."""
    dn, dt = p.delta_n, p.delta_t
    w_n = np.asarray(w_n, dtype=float)
    w_t = np.asarray(w_t, dtype=float)
    return p.g_c * (1.0 - (1.0 + w_n / dn) * np.exp(-w_n / dn) * np.exp(-(w_t**2) / dt**2))


def czm_secants(w_n, w_t, p):
    """(k_n, k_t) with t_n = k_n w_n and t_t = k_t w_t."""
    dn, dt = p.delta_n, p.delta_t
    w_n = np.asarray(w_n, dtype=float)
    w_t = np.asarray(w_t, dtype=float)
    decay = np.exp(-w_n / dn) * np.exp(-(w_t**2) / dt**2)
    k_n = p.g_c / dn**2 * decay
    k_t = 2 * p.g_c / dt**2 * (1 + w_n / dn) * decay
    if p.mode_one:
        k_t = np.zeros_like(k_t)
    return k_n, k_t


def czm_tractions(w_n, w_t, p):
    k_n, k_t = czm_secants(w_n, w_t, p)
    return k_n * np.asarray(w_n, dtype=float), k_t * np.asarray(w_t, dtype=float)


# ---------------------------------------------------------------------------
# homogenization and blending


def homogenize(X_m, X_i, p):
    if not 0 <= p <= 1:
        raise ParameterError("volume fraction must lie in [0, 1]")
    return (1 - p) * np.asarray(X_m, dtype=float) + p * np.asarray(X_i, dtype=float)


def homogenized_phase(matrix, inclusion, p):
    return PhaseProperties(
        float(homogenize(matrix.E, inclusion.E, p)),
        float(homogenize(matrix.nu, inclusion.nu, p)),
        float(homogenize(matrix.g_c, inclusion.g_c, p)),
    )


def blend(X_micro, X_h, alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any((alpha < 0) | (alpha > 1)):
        raise ParameterError("blending weight must lie in [0, 1]")
    return (1 - alpha) * np.asarray(X_micro, dtype=float) + alpha * np.asarray(X_h, dtype=float)


def blend_weight(s, width, slope=SIGMOID_SLOPE):
    """Logistic ramp across a zone of ``width``; 0.5 at the middle.

    ``s`` is the distance into the zone. The weight is exactly 0 for s <= 0
    and exactly 1 for s >= width.
    """
    if not width > 0:
        raise ParameterError("blending width must be positive")
    s = np.asarray(s, dtype=float)
    ramp = 1.0 / (1.0 + np.exp(-slope * (s / width - 0.5)))
    return np.where(s <= 0, 0.0, np.where(s >= width, 1.0, ramp))
