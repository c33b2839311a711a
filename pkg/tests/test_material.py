import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from imrkpm import material as mat
from imrkpm.errors import ParameterError

LAM, MU = mat.lame(3660.0, 0.358)
strain_comp = st.floats(-0.05, 0.05)


def sym(a, b, c):
    return np.array([[a, c], [c, b]])


def elastic_energy(eps, lam, mu):
    return 0.5 * lam * np.trace(eps) ** 2 + mu * np.sum(eps * eps)


def total_energy(eps, d, lam=LAM, mu=MU, kappa=mat.KAPPA):
    return float(mat.stored_bulk_energy(eps, d, lam, mu, kappa))


class TestPhase:
    def test_lame(self):
        p = mat.PhaseProperties.from_gpa(3.66, 0.358, 0.536)
        assert p.E == 3660.0
        assert p.lam == pytest.approx(3660 * 0.358 / (1.358 * (1 - 0.716)))
        assert p.mu == pytest.approx(3660 / 2.716)

    @pytest.mark.parametrize("args", [(0, 0.3, 1), (1, 0.5, 1), (1, -0.1, 1), (1, 0.3, 0)])
    def test_invalid(self, args):
        with pytest.raises(ParameterError):
            mat.PhaseProperties(*args)

    def test_lengths_invalid(self):
        with pytest.raises(ParameterError):
            mat.RegularizationLengths(0.0, 0.1, 0.1)
        with pytest.raises(ParameterError):
            mat.RegularizationLengths(0.1, 0.1, 0.1, kappa=0.0)


class TestSpectral:
    def test_zero(self):
        vals, vecs = mat.spectral_split(np.zeros((2, 2)))
        np.testing.assert_array_equal(vals, [0, 0])
        np.testing.assert_array_equal(vecs, np.eye(2))

    def test_diagonal(self):
        vals, vecs = mat.spectral_split(np.diag([0.01, -0.002]))
        np.testing.assert_allclose(vals, [0.01, -0.002], rtol=1e-15)
        np.testing.assert_allclose(np.abs(vecs), np.eye(2), atol=1e-15)

    def test_pure_shear(self):
        g = 0.004
        vals, vecs = mat.spectral_split(sym(0, 0, g / 2))
        np.testing.assert_allclose(vals, [g / 2, -g / 2], rtol=1e-14)
        s = np.sqrt(0.5)
        np.testing.assert_allclose(np.abs(vecs[:, 0]), [s, s], rtol=1e-14)
        assert vecs[0, 0] * vecs[1, 0] > 0 and vecs[0, 1] * vecs[1, 1] < 0

    @given(strain_comp, strain_comp, strain_comp)
    def test_matches_eigh(self, a, b, c):
        eps = sym(a, b, c)
        vals, vecs = mat.spectral_split(eps)
        assert vals[0] >= vals[1]
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(eps)[::-1], atol=1e-15)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, eps, atol=1e-15)


class TestEnergySplit:
    def test_zero(self):
        assert mat.strain_energy_split(np.zeros((2, 2)), LAM, MU) == (0.0, 0.0)

    def test_uniaxial(self):
        e = 0.003
        pp, pm = mat.strain_energy_split(np.diag([e, 0.0]), LAM, MU)
        assert pp == pytest.approx(MU * e**2 + 0.5 * LAM * e**2, rel=1e-14)
        assert pm == 0.0

    def test_equibiaxial_compression(self):
        e = 0.002
        pp, pm = mat.strain_energy_split(np.diag([-e, -e]), LAM, MU)
        assert pp == 0.0
        assert pm == pytest.approx(2 * MU * e**2 + 2 * LAM * e**2, rel=1e-14)

    @given(st.floats(0, 0.05), st.floats(0, 0.05), st.floats(0, np.pi), st.sampled_from([1.0, -1.0]))
    def test_same_sign_sum_is_elastic(self, e1, e2, th, sgn):
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        eps = sgn * R @ np.diag([e1, e2]) @ R.T
        pp, pm = mat.strain_energy_split(eps, LAM, MU)
        assert pp + pm == pytest.approx(elastic_energy(eps, LAM, MU), rel=1e-10, abs=1e-18)

    @given(strain_comp, strain_comp, strain_comp)
    def test_nonnegative(self, a, b, c):
        pp, pm = mat.strain_energy_split(sym(a, b, c), LAM, MU)
        assert pp >= 0 and pm >= 0
        vals = np.linalg.eigvalsh(sym(a, b, c))
        if vals.max() <= 0:
            assert pp == 0.0


class TestStress:
    @given(st.floats(0, 0.05), st.floats(0, 0.05), st.floats(0, np.pi))
    def test_undamaged_is_elastic(self, e1, e2, th):
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        eps = R @ np.diag([e1, e2]) @ R.T
        sig = mat.degraded_stress(eps, 0.0, LAM, MU, kappa=0.0)
        np.testing.assert_allclose(sig, LAM * np.trace(eps) * np.eye(2) + 2 * MU * eps, atol=1e-10)

    def test_fully_damaged_tension(self):
        sig = mat.degraded_stress(np.diag([0.01, 0.0]), 1.0, LAM, MU, kappa=0.0)
        np.testing.assert_array_equal(sig, 0.0)

    def test_finite_differences(self, rng):
        worst = 0.0
        n = 0
        while n < 200:
            eps = sym(*rng.uniform(-0.01, 0.01, 3))
            v = np.linalg.eigvalsh(eps)
            if abs(v[1] - v[0]) < 1e-4 or abs(v.sum()) < 1e-4 or np.min(np.abs(v)) < 1e-4:
                continue
            d = rng.uniform(0, 1)
            sig = mat.degraded_stress(eps, d, LAM, MU)
            h = 1e-7
            fd = np.zeros((2, 2))
            for i, j in ((0, 0), (1, 1), (0, 1)):
                E = np.zeros((2, 2))
                E[i, j] = E[j, i] = h
                dW = (total_energy(eps + E, d) - total_energy(eps - E, d)) / (2 * h)
                fd[i, j] = fd[j, i] = dW if i == j else dW / 2
            worst = max(worst, np.abs(sig - fd).max() / np.abs(sig).max())
            n += 1
        assert worst < 1e-5

    def test_secant_reproduces_stress(self, rng):
        for _ in range(50):
            eps = sym(*rng.uniform(-0.01, 0.01, 3))
            d = rng.uniform(0, 1)
            D = mat.secant_tensor(eps, d, LAM, MU)
            np.testing.assert_allclose(D, np.swapaxes(D, -1, -2), atol=1e-12 * LAM)
            v = D @ np.array([eps[0, 0], eps[1, 1], 2 * eps[0, 1]])
            sig = mat.degraded_stress(eps, d, LAM, MU)
            np.testing.assert_allclose(v, [sig[0, 0], sig[1, 1], sig[0, 1]], atol=1e-12 * LAM)

    def test_bad_damage(self):
        with pytest.raises(ParameterError):
            mat.degraded_stress(np.zeros((2, 2)), 1.5, LAM, MU)


class TestInterfaceFields:
    def test_beta(self):
        assert mat.interface_beta(0.0, 0.006) == 1.0
        assert mat.interface_beta(0.006, 0.006) == pytest.approx(np.exp(-1))
        assert mat.interface_beta(-0.006, 0.006) == pytest.approx(np.exp(-1))
        assert mat.interface_beta(1.0, 0.006) < 1e-70

    def test_density(self):
        assert mat.interface_density(1.0, 0.006) == pytest.approx(1 / 0.006)
        assert mat.interface_density(0.0, 0.006) == 0.0

    def test_density_unit_measure(self):
        lb = 0.006
        total, _ = quad(lambda s: float(mat.interface_density(mat.interface_beta(s, lb), lb)), -np.inf, np.inf)
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_density_matches_functional(self):
        # beta^2/(2l) + (l/2)|beta'|^2 with the exponential profile
        lb = 0.01
        s = np.linspace(0.001, 0.05, 20)
        b = mat.interface_beta(s, lb)
        db = -b / lb
        np.testing.assert_allclose(mat.interface_density(b, lb), b**2 / (2 * lb) + 0.5 * lb * db**2)

    def test_jump(self):
        np.testing.assert_array_equal(mat.smeared_jump(np.zeros((2, 2)), np.array([1.0, 0]), 0.008), 0.0)
        np.testing.assert_allclose(mat.smeared_jump(np.eye(2), np.array([1.0, 0]), 0.008), [0.008, 0.0])
        w = mat.smeared_jump(np.array([[0, -0.01], [0.01, 0]]), np.array([1.0, 0]), 0.008)
        wn, wt = mat.jump_components(w, np.array([1.0, 0]))
        assert wn == 0.0 and wt != 0.0

    def test_tangent(self):
        n = np.array([0.6, 0.8])
        m = mat.tangent_of(n)
        assert abs(m @ n) < 1e-16
        np.testing.assert_allclose(m, [-0.8, 0.6])

    def test_effective_strain(self):
        g = np.array([[0.01, 0.002], [0.002, -0.003]])
        n = np.array([1.0, 0.0])
        w = np.array([0.0004, 0.0])
        np.testing.assert_array_equal(mat.effective_strain(g, w, n, 0.0), g)
        lb = 0.006
        et = g - mat.effective_strain(g, w, n, 1 / lb)
        assert et[0, 0] == pytest.approx(0.0004 / lb)
        assert et[1, 1] == 0.0

    @given(st.tuples(*[st.floats(-1, 1)] * 4), st.floats(0, 2 * np.pi), st.floats(0, 100))
    def test_effective_strain_symmetric(self, w4, th, gam):
        n = np.array([np.cos(th), np.sin(th)])
        e = mat.effective_strain(sym(*w4[:3]), np.array(w4[2:]), n, gam)
        np.testing.assert_allclose(e, e.T, atol=0)


class TestDamage:
    def test_zero(self):
        assert mat.damage(0.0, 0.3, 0.536, 0.1) == 0.0

    @given(st.floats(0, 0.999), st.floats(0.01, 1.0), st.floats(1e-3, 1.0))
    def test_half(self, beta, gc, ld):
        H = (1 - beta) * gc / (2 * ld)
        assert mat.damage(H, beta, gc, ld) == pytest.approx(0.5, rel=1e-14)

    def test_monotone(self):
        H = np.linspace(0, 100, 1000)
        d = mat.damage(H, 0.2, 0.536, 0.1)
        assert np.all(np.diff(d) > 0) and d.max() < 1

    def test_beta_one(self):
        assert mat.damage(1e-9, 1.0, 0.536, 0.1) == 1.0
        assert mat.damage(1.0, 1 - 1e-12, 0.536, 0.1) == pytest.approx(1.0, abs=1e-10)

    def test_negative_history(self):
        with pytest.raises(ParameterError):
            mat.damage(-1.0, 0.0, 1.0, 1.0)

    def test_history(self, rng):
        assert mat.update_history(0.0, 5.0) == 5.0
        assert mat.update_history(5.0, 3.0) == 5.0
        psi = rng.uniform(0, 10, 200)
        H = np.zeros(1)
        out = []
        for p in psi:
            H = mat.update_history(H, p)
            out.append(H[0])
        np.testing.assert_array_equal(out, np.maximum.accumulate(psi))


class TestCzm:
    def test_lengths(self):
        assert mat.czm_lengths(np.e, 1.0, 1.0)[0] == pytest.approx(1.0)
        dn, dt = mat.czm_lengths(0.0171, 10.0, 10.0)
        assert dn == pytest.approx(6.291e-4, rel=1e-4)
        assert dt / dn == pytest.approx(2.3316, rel=1e-4)
        assert dt / dn == pytest.approx(np.sqrt(2 * np.e), rel=1e-14)

    def test_bad(self):
        with pytest.raises(ParameterError):
            mat.czm_lengths(0.0, 1.0, 1.0)
        with pytest.raises(ParameterError):
            mat.CzmParameters(1.0, -1.0, 1.0)

    def test_zero_jump(self):
        p = mat.CzmParameters(0.0171, 15.0, 15.0)
        assert mat.czm_tractions(0.0, 0.0, p) == (0.0, 0.0)
        assert mat.czm_potential(0.0, 0.0, p) == 0.0

    def test_peak(self):
        p = mat.CzmParameters(0.0171, 15.0, 12.0)
        tn, _ = mat.czm_tractions(p.delta_n, 0.0, p)
        assert tn == pytest.approx(15.0, rel=1e-12)
        w = np.linspace(0, 5 * p.delta_n, 200001)
        t, _ = mat.czm_tractions(w, np.zeros_like(w), p)
        assert w[np.argmax(t)] == pytest.approx(p.delta_n, rel=1e-4)

    def test_limits(self):
        p = mat.CzmParameters(0.0171, 15.0, 12.0)
        assert mat.czm_potential(1e3 * p.delta_n, 0.0, p) == pytest.approx(p.g_c, rel=1e-12)
        assert mat.czm_potential(0.0, 1e2 * p.delta_t, p) == pytest.approx(p.g_c, rel=1e-12)

    def test_energy(self):
        p = mat.CzmParameters(0.0171, 15.0, 12.0)
        val, _ = quad(lambda w: float(mat.czm_tractions(w, 0.0, p)[0]), 0, np.inf)
        assert val == pytest.approx(p.g_c, rel=1e-4)

    def test_tractions_are_potential_gradient(self, rng):
        p = mat.CzmParameters(0.0171, 15.0, 12.0)
        worst = 0.0
        for _ in range(100):
            wn = rng.uniform(0, 4) * p.delta_n
            wt = rng.uniform(-3, 3) * p.delta_t
            tn, tt = mat.czm_tractions(wn, wt, p)
            hn, ht = 1e-6 * p.delta_n, 1e-6 * p.delta_t
            fn = (mat.czm_potential(wn + hn, wt, p) - mat.czm_potential(wn - hn, wt, p)) / (2 * hn)
            ft = (mat.czm_potential(wn, wt + ht, p) - mat.czm_potential(wn, wt - ht, p)) / (2 * ht)
            scale = max(abs(tn), abs(tt))
            worst = max(worst, abs(fn - tn) / scale, abs(ft - tt) / scale)
        assert worst < 1e-6

    def test_mode_one(self):
        p = mat.CzmParameters(0.0171, 15.0, 12.0, mode_one=True)
        tn, tt = mat.czm_tractions(p.delta_n, p.delta_t, p)
        assert tt == 0.0 and tn > 0


class TestHomogenization:
    def test_values(self):
        assert mat.homogenize(3.66, 320.0, 0.0) == 3.66
        assert mat.homogenize(3.66, 320.0, 1.0) == 320.0
        assert mat.homogenize(3.66, 320.0, 0.05) == pytest.approx(19.477, rel=1e-12)

    def test_phase(self):
        m = mat.PhaseProperties.from_gpa(3.66, 0.358, 0.536)
        i = mat.PhaseProperties.from_gpa(320.0, 0.23, 0.1)
        h = mat.homogenized_phase(m, i, 0.05)
        assert h.E == pytest.approx(19477.0)

    def test_blend(self):
        assert mat.blend(1.0, 5.0, 0.0) == 1.0
        assert mat.blend(1.0, 5.0, 1.0) == 5.0
        with pytest.raises(ParameterError):
            mat.blend(1.0, 5.0, 1.2)
        with pytest.raises(ParameterError):
            mat.homogenize(1.0, 2.0, -0.1)

    def test_blend_weight(self):
        assert mat.blend_weight(0.5, 1.0) == pytest.approx(0.5)
        assert mat.blend_weight(-0.1, 1.0) == 0.0
        assert mat.blend_weight(1.0, 1.0) == 1.0
        s = np.linspace(-0.5, 1.5, 101)
        assert np.all(np.diff(mat.blend_weight(s, 1.0)) >= 0)
