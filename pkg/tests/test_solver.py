import numpy as np
import pytest
import scipy.sparse as sp

from imrkpm import discretization as disc
from imrkpm import material as mat
from imrkpm import solver as S
from imrkpm.errors import ConfigError, ParameterError, SolverError
from imrkpm.imaging import ImageGrid
from imrkpm.svm import ConstantScore

W, HGT, PS = 1.0, 2.0, 0.1
PHASE = mat.PhaseProperties.from_gpa(3.66, 0.358, 0.536)


def strip_model(width=W, height=HGT, ps=PS, l_d=0.1, **kw):
    img = ImageGrid(np.zeros((int(round(height / ps)), int(round(width / ps)))), pixel_size=ps)
    f = ConstantScore(1.0)
    nodes = disc.generate_nodes(img, f)
    quad = disc.build_quadrature(img.extent, ps, 2)
    lengths = mat.RegularizationLengths(l_d, 0.006, ps)
    return S.build_model(nodes, quad, f, PHASE, lengths=lengths, **kw)


@pytest.fixture(scope="module")
def strip():
    return strip_model()


def tension(u_bar):
    return S.LoadProgram(tuple(u_bar), S.tension_program(1.0, 1, pin=(W / 2, 0.0)).constraints)


# ---------------------------------------------------------------------------
# assembly


def test_zero_state_residual_and_symmetry(strip):
    u = np.zeros(strip.n_dof)
    K, f, _ = S.assemble(strip, u, np.zeros(strip.n_points))
    assert np.all(f == 0.0)
    Kd = K.toarray()
    assert np.abs(Kd - Kd.T).max() < 1e-10 * np.abs(Kd).max()


def test_damage_degrades_tensile_response(strip):
    # equibiaxial stretch: both principal strains positive, so the whole energy is degraded
    c = strip.nodes.coords
    u = np.zeros(strip.n_dof)
    u[0::2] = 1e-3 * c[:, 0]
    u[1::2] = 1e-3 * c[:, 1]
    f0 = S.assemble(strip, u, np.zeros(strip.n_points))[1]
    f1 = S.assemble(strip, u, np.full(strip.n_points, 0.5))[1]
    kappa = strip.lengths.kappa
    assert np.allclose(f1, (0.25 + kappa) / (1 + kappa) * f0, rtol=1e-9, atol=1e-12 * np.abs(f0).max())


def test_internal_force_is_secant_times_u(strip, rng):
    u = 1e-3 * rng.standard_normal(strip.n_dof)
    d = rng.uniform(0, 0.9, strip.n_points)
    K, f, _ = S.assemble(strip, u, d)
    assert np.allclose(K @ u, f)


# ---------------------------------------------------------------------------
# boundary conditions and linear solves


def test_rigid_translation(strip):
    g = np.array([0.03, -0.02])
    cons = [S.Constraint(side, c, value=g[c]) for side in disc.SIDES for c in (0, 1)]
    Kp, rhs = S.apply_essential_bcs(strip, cons, 0.0)
    K = S.assemble(strip, np.zeros(strip.n_dof), np.zeros(strip.n_points))[0]
    u = S.solve_linear(K + Kp, rhs).x
    uh = S.interpolate(strip.shapes, u)
    assert np.abs(uh - g).max() < 1e-6 * np.linalg.norm(g)


def test_empty_constraints_rejected(strip):
    with pytest.raises(ConfigError):
        S.apply_essential_bcs(strip, [], 0.0)
    with pytest.raises(ConfigError):
        S.LoadProgram((0.1,), ())


def test_constraint_validation():
    with pytest.raises(ParameterError):
        S.Constraint("top", 2)
    with pytest.raises(ParameterError):
        S.Constraint("front", 0)


def test_vanishing_penalty_is_singular(strip):
    K = S.assemble(strip, np.zeros(strip.n_dof), np.zeros(strip.n_points))[0]
    cons = S.tension_program(1.0, 1).constraints
    Kp, rhs = S.apply_essential_bcs(strip, cons, 0.01, penalty=1e-300)
    with pytest.raises(SolverError):
        S.solve_linear(K + Kp, rhs + 1.0)


def test_unconstrained_system_is_singular(strip):
    K = S.assemble(strip, np.zeros(strip.n_dof), np.zeros(strip.n_points))[0]
    with pytest.raises(SolverError):
        S.solve_linear(K, np.ones(strip.n_dof))


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_identity_like_solve(method, rng):
    n = 50
    A = sp.diags(rng.uniform(1.0, 2.0, n)) + sp.diags(np.full(n - 1, 0.1), 1) + sp.diags(np.full(n - 1, 0.1), -1)
    x = rng.standard_normal(n)
    sol = S.solve_linear(A, A @ x, method=method, tol=1e-14)
    assert sol.method == method
    assert np.abs(sol.x - x).max() < 1e-12


def test_zero_rhs_gives_zero(strip):
    sol = S.solve_linear(sp.identity(4), np.zeros(4))
    assert np.all(sol.x == 0)


def test_unknown_linear_method():
    with pytest.raises(ParameterError):
        S.solve_linear(sp.identity(3), np.ones(3), method="qr")


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_strip_residual(strip, method):
    K = S.assemble(strip, np.zeros(strip.n_dof), np.zeros(strip.n_points))[0]
    Kp, rhs = S.apply_essential_bcs(strip, tension(()).constraints, 1e-3)
    A = K + Kp
    sol = S.solve_linear(A, rhs, method=method)
    assert np.linalg.norm(A @ sol.x - rhs) / np.linalg.norm(rhs) < (1e-10 if method == "direct" else 1e-9)


# ---------------------------------------------------------------------------
# patch test


@pytest.fixture(scope="module")
def plate():
    img = ImageGrid(np.zeros((10, 10)), pixel_size=0.1)
    nodes = disc.generate_nodes(img, ConstantScore(1.0))
    return nodes, img


def test_patch_zero_field(plate):
    nodes, img = plate
    quad = disc.build_quadrature(img.extent, 0.1, 2)
    assert S.run_patch_test(nodes, quad, PHASE, A=np.zeros((2, 2))) == 0.0


def test_patch_error_small_and_improves_with_order(plate):
    nodes, img = plate
    e2 = S.run_patch_test(nodes, disc.build_quadrature(img.extent, 0.1, 2), PHASE)
    e4 = S.run_patch_test(nodes, disc.build_quadrature(img.extent, 0.1, 4), PHASE)
    assert e4 < e2 < 1e-3


def test_patch_penalty_convergence(plate):
    # boundary error of the penalty method shrinks ~1/p; successive doublings change less
    nodes, img = plate
    quad = disc.build_quadrature(img.extent, 0.1, 2)
    p0 = S.PENALTY_FACTOR * PHASE.E / nodes.spacing
    e = [S.run_patch_test(nodes, quad, PHASE, bc="penalty", penalty=k * p0) for k in (1, 2, 4)]
    assert e[0] > e[1] > e[2]
    assert abs(e[1] - e[2]) < 0.75 * abs(e[0] - e[1])


def test_patch_bad_bc(plate):
    nodes, img = plate
    with pytest.raises(ParameterError):
        S.run_patch_test(nodes, disc.build_quadrature(img.extent, 0.1, 2), PHASE, bc="weak")


# ---------------------------------------------------------------------------
# load stepping


def test_elastic_step(strip):
    prog = tension((1e-7,))
    res, state = S.run_load_step(strip, S.SimulationState.initial(strip), prog, 1e-7)
    assert res.converged
    assert res.iterations <= 2
    assert state.d.max() < 1e-9


def test_strip_stiffness(strip):
    u = 1e-5
    res, _ = S.run_load_step(strip, S.SimulationState.initial(strip), tension((u,)), u)
    E = PHASE.E
    nu = PHASE.nu
    # plane strain, laterally free: sigma_yy = E / (1 - nu^2) * eps_yy
    expected = E / (1 - nu ** 2) * u / HGT * W
    assert abs(res.reaction - expected) < 0.02 * expected


def test_reaction_balance(strip):
    u = 1e-3
    prog = tension((u,))
    _, state = S.run_load_step(strip, S.SimulationState.initial(strip), prog, u)
    K = S.assemble(strip, state.u, state.d)[0]
    f = K @ state.u
    top = S.reaction_force(strip, f, prog)
    bottom = float(np.sum(f[2 * S.touching_nodes(strip, S.Constraint("bottom", 1)) + 1]))
    assert abs(top + bottom) < 1e-6 * abs(top)


def test_zero_increment_program(strip):
    results, state = S.run_simulation(strip, tension((0.0, 0.0, 0.0)))
    assert all(r.converged for r in results)
    assert all(r.reaction == 0.0 for r in results)
    assert np.all(state.d == 0.0)


@pytest.fixture(scope="module")
def cycle(strip):
    prog = tension((0.01, 0.02, 0.01, 0.0, 0.01, 0.02, 0.025))
    states = []
    results, _ = S.run_simulation(strip, prog, on_step=lambda r, s: states.append(s))
    return results, states


def test_cycle_converges(cycle):
    results, _ = cycle
    assert all(r.converged for r in results)
    assert all(0 < r.iterations <= S.MAX_PICARD for r in results)


def test_reload_reproduces_damage(cycle):
    _, states = cycle
    assert states[1].d.max() > 0.01
    assert np.abs(states[5].d - states[1].d).max() < S.TOL_DAMAGE
    # unloading leaves damage in place
    assert np.array_equal(states[2].d, states[1].d)
    assert np.array_equal(states[3].d, states[1].d)


def test_history_and_damage_nondecreasing(cycle):
    _, states = cycle
    for a, b in zip(states, states[1:]):
        assert np.all(b.H >= a.H)
        assert np.all(b.d >= a.d)


def test_energy_bookkeeping(cycle):
    results, _ = cycle
    prev_work, prev_stored, prev_diss = 0.0, 0.0, 0.0
    for r in results:
        dw = r.work - prev_work
        assert r.dissipated - prev_diss >= -1e-8 * abs(dw) - 1e-12
        if dw > 0:
            assert dw >= r.stored - prev_stored - 1e-8 * dw
        prev_work, prev_stored, prev_diss = r.work, r.stored, r.dissipated
    assert results[-1].dissipated > 0


def test_failed_step_rolls_back(strip):
    prog = tension((0.05,))
    s0 = S.SimulationState.initial(strip)
    res, state = S.run_load_step(strip, s0, prog, 0.05, max_iter=1)
    assert not res.converged
    assert state is s0
    results, _ = S.run_simulation(strip, tension((0.05, 0.06)), max_iter=1)
    assert len(results) == 1 and not results[0].converged


def test_anderson_option_converges(strip):
    prog = tension((0.01, 0.02))
    plain, _ = S.run_simulation(strip, prog)
    mixed, _ = S.run_simulation(strip, prog, anderson=3)
    assert all(r.converged for r in mixed)
    assert abs(mixed[-1].reaction - plain[-1].reaction) < 1e-3 * abs(plain[-1].reaction)
