import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulerlab.mesh import NO_FORCE, Mesh, PotentialField
from eulerlab.mvs import (AtomicYoungMeasure, ConcentrationMeasure, atom_reports, check_continuity,
                          check_energy_and_defect, check_entropy, check_momentum, entropy_support_check,
                          kinetic_observable, load_manifest, moment, momentum_defect_operator,
                          rel_energy_inequality_slack, support_constant, write_manifest)
from eulerlab.reference import ReferenceTriple
from eulerlab.solver import FieldState, Solver, SolverConfig
from eulerlab.static_state import build_static
from eulerlab.testfunctions import TestFunctionBasis
from eulerlab.thermo import GasParams
from eulerlab.trajectory import Trajectory, cell_axes
from eulerlab.verifier import QUADRATURE_FLOOR, residual_continuity

GAS = GasParams(1.5)
SHAPE = (16, 8)
AXES = cell_axes(SHAPE, walls=False)
TIMES = np.linspace(0.0, 1.0, 11)


def const(m, rho=1.0, E=1.5):
    return Trajectory.constant(np.full(SHAPE, rho), m, np.full(SHAPE, E), AXES, TIMES)


def oscillating_pair():
    X, Y = np.meshgrid(AXES[0].points(), AXES[1].points(), indexing="ij")
    g = np.stack([np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y) + 1, np.sin(2 * np.pi * X)])
    return AtomicYoungMeasure([const(g), const(-g)], [0.5, 0.5])


def test_weights_validation():
    a = const(np.zeros((2,) + SHAPE))
    with pytest.raises(ValueError):
        AtomicYoungMeasure([a, a], [0.5, 0.6])
    with pytest.raises(ValueError):
        AtomicYoungMeasure([a, a], [1.0, 0.0])
    other = Trajectory.constant(np.ones(SHAPE), np.zeros((2,) + SHAPE), np.ones(SHAPE), AXES, TIMES + 0.01)
    with pytest.raises(ValueError):
        AtomicYoungMeasure([a, other], [0.5, 0.5])
    bad = const(np.zeros((2,) + SHAPE), E=-1.0)
    with pytest.raises(ValueError):
        AtomicYoungMeasure.dirac(bad)


def test_moment_examples():
    e = np.zeros((2,) + SHAPE)
    e[0] = 1.0
    Y = AtomicYoungMeasure([const(e), const(-e)], [0.5, 0.5])
    assert np.all(moment(Y, lambda r, m, E: m) == 0)
    np.testing.assert_array_equal(moment(Y, kinetic_observable), 1.0)
    single = AtomicYoungMeasure.dirac(const(e))
    np.testing.assert_array_equal(moment(single, lambda r, m, E: m), const(e).m)


def test_moment_undefined_names_atom():
    m = np.zeros((2,) + SHAPE)
    m[0] = 1.0
    vac = const(m, rho=0.0)
    Y = AtomicYoungMeasure([const(m), vac], [0.5, 0.5])
    with pytest.raises(ValueError, match="atom 1"):
        moment(Y, kinetic_observable)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_jensen(seed, n):
    rng = np.random.default_rng(seed)
    w = rng.random(n) + 0.1
    w = w / math.fsum(w)
    w[-1] = 1.0 - math.fsum(w[:-1])
    atoms = [Trajectory.constant(0.1 + rng.random((4, 4)), rng.normal(size=(2, 4, 4)), np.ones((4, 4)),
                                 cell_axes((4, 4), False), [0.0, 1.0]) for _ in range(n)]
    Y = AtomicYoungMeasure(atoms, w)
    alpha = 1.5
    lhs = np.linalg.norm(moment(Y, lambda r, m, e: m), axis=1) ** alpha
    rhs = moment(Y, lambda r, m, e: r ** (alpha / 2) * (np.linalg.norm(m, axis=1) / np.sqrt(r)) ** alpha)
    assert np.all(lhs <= rhs * (1 + 1e-12))


def test_moment_monotone():
    rng = np.random.default_rng(2)
    atoms = [const(np.zeros((2,) + SHAPE), rho=1 + rng.random()) for _ in range(3)]
    Y = AtomicYoungMeasure(atoms, [0.2, 0.3, 0.5])
    assert np.all(moment(Y, lambda r, m, e: r**2) >= moment(Y, lambda r, m, e: r))


def test_continuity_dirac_and_linearity():
    Y = oscillating_pair()
    assert check_continuity(Y).passed
    rng = np.random.default_rng(0)
    a = Trajectory(TIMES, 1 + rng.random((11,) + SHAPE), rng.normal(size=(11, 2) + SHAPE),
                   np.ones((11,) + SHAPE), AXES)
    b = const(np.zeros((2,) + SHAPE))
    mix = AtomicYoungMeasure([a, b], [0.25, 0.75])
    parts = atom_reports(mix, check_continuity)
    np.testing.assert_allclose(check_continuity(mix).residuals,
                               0.25 * parts[0].residuals + 0.75 * parts[1].residuals, atol=1e-13)
    assert not parts[0].passed and parts[1].passed
    # the Dirac check reduces to the single-trajectory verifier
    np.testing.assert_allclose(parts[0].residuals, residual_continuity(a).residuals, atol=1e-14)


def test_momentum_mixture_and_solve_mode():
    Y = oscillating_pair()
    rep, _ = check_momentum(Y, gas=GAS)
    assert not rep.passed
    rep2, mu = check_momentum(Y, gas=GAS, solve=True)
    assert rep2.passed, rep2.summary()
    assert np.max(np.abs(mu.density)) > 0


def test_momentum_annihilator_perturbation():
    Y = oscillating_pair()
    basis = TestFunctionBasis.default(Y.axes, Y.T, vector=True)
    _, mu = check_momentum(Y, gas=GAS, basis=basis, solve=True)
    G = momentum_defect_operator(Y, basis)
    v = np.random.default_rng(1).normal(size=G.shape[1])
    y, *_ = np.linalg.lstsq(G @ G.T, G @ v, rcond=None)
    null = v - G.T @ y
    assert np.max(np.abs(G @ null)) < 1e-10 * np.max(np.abs(v))
    pert = ConcentrationMeasure(mu.density + null.reshape(mu.density.shape))
    r1, _ = check_momentum(Y, mu, gas=GAS, basis=basis)
    r2, _ = check_momentum(Y, pert, gas=GAS, basis=basis)
    np.testing.assert_allclose(r1.residuals, r2.residuals, atol=1e-10)


def test_momentum_dirac_weak_solution():
    m = np.zeros((2,) + SHAPE)
    m[0] = 0.4
    rep, _ = check_momentum(AtomicYoungMeasure.dirac(const(m)), gas=GAS)
    assert rep.passed


def test_entropy_dirac_equality_and_linearity():
    Y = AtomicYoungMeasure.dirac(const(np.zeros((2,) + SHAPE)))
    rep = check_entropy(Y, gas=GAS)
    assert rep.passed and np.max(np.abs(rep.normalized)) < QUADRATURE_FLOOR
    pair = oscillating_pair()
    parts = atom_reports(pair, check_entropy, gas=GAS)
    mix = check_entropy(pair, gas=GAS)
    np.testing.assert_allclose(mix.residuals, 0.5 * (parts[0].residuals + parts[1].residuals), atol=1e-13)


def shock_traj(n=32):
    mesh = Mesh((n, 2), walls=False)
    x = mesh.coords()[0]
    mid = (x > 0.25) & (x < 0.75)
    s = FieldState.from_primitive(np.where(mid, 1.0, 0.125), np.where(mid, 1.0, 0.8), 0.0, GAS)
    res = Solver(mesh, GAS, NO_FORCE, SolverConfig(t_end=0.2, snapshot_dt=0.02)).run_to_time(s)
    return res


def test_entropy_reversed_atom_fails():
    traj = shock_traj().trajectory()
    assert check_entropy(AtomicYoungMeasure.dirac(traj), gas=GAS, tol=1e-3).passed
    assert not check_entropy(AtomicYoungMeasure.dirac(traj.reversed()), gas=GAS, tol=1e-3).passed


def test_defect_energy_conserving_dirac():
    Y = AtomicYoungMeasure.dirac(const(np.zeros((2,) + SHAPE)))
    rep = check_energy_and_defect(Y, NO_FORCE)
    assert rep.passed and np.all(rep.D == 0) and rep.dominated and rep.c_min == 0


def test_defect_mixture_not_dominated():
    Y = oscillating_pair()
    _, mu = check_momentum(Y, gas=GAS, solve=True)
    rep = check_energy_and_defect(Y, NO_FORCE, mu_R=mu)
    assert np.all(rep.D == 0)
    assert rep.mu_tv[-1] > 0 and not rep.dominated


def test_defect_positive_energy_loss_is_dominated():
    m = np.zeros((11, 2) + SHAPE)
    E = 1.5 * np.ones((11,) + SHAPE) * (1 - 0.1 * TIMES[:, None, None])
    Y = AtomicYoungMeasure.dirac(Trajectory(TIMES, np.ones((11,) + SHAPE), m, E, AXES))
    mu = ConcentrationMeasure(np.full((11, 2, 2) + SHAPE, 0.01))
    rep = check_energy_and_defect(Y, NO_FORCE, mu_R=mu)
    assert np.all(np.diff(rep.D) > 0)
    assert rep.dominated and 0 < rep.c_min < math.inf


def test_defect_negative_is_hard_fail():
    E = 1.5 * np.ones((11,) + SHAPE) * (1 + 0.1 * TIMES[:, None, None])
    Y = AtomicYoungMeasure.dirac(Trajectory(TIMES, np.ones((11,) + SHAPE), np.zeros((11, 2) + SHAPE), E, AXES))
    rep = check_energy_and_defect(Y, NO_FORCE)
    assert not rep.passed


def test_defect_matches_solver_energy_ledger():
    mesh = Mesh((16, 16))
    eps = 0.5
    s = build_static(1.0, 1.0)
    X, Z = mesh.coords()
    rho = s.sample(mesh) * (1 + 0.1 * np.sin(2 * np.pi * X) * np.sin(np.pi * Z) ** 2)
    u = np.stack([0.2 * np.sin(np.pi * Z) ** 2, np.zeros(mesh.shape)])
    st0 = FieldState.from_primitive(rho, np.ones(mesh.shape), u, GAS, eps)
    solver = Solver(mesh, GAS, PotentialField(), SolverConfig(epsilon=eps, t_end=0.1, snapshot_dt=0.02))
    res = solver.run_to_time(st0)
    rep = check_energy_and_defect(AtomicYoungMeasure.dirac(res.trajectory()), PotentialField())
    ledger = res.column("energy_with_potential")
    loss = ledger[0] - ledger
    assert np.max(np.abs(rep.D - loss)) < 1e-12 * abs(ledger[0])
    assert np.all(rep.D >= 0)


def test_defect_invariant_under_merging():
    a = shock_traj().trajectory()
    Y = AtomicYoungMeasure([a, a], [0.3, 0.7])
    merged = Y.merged()
    assert len(merged.atoms) == 1
    d1 = check_energy_and_defect(Y, NO_FORCE).D
    d2 = check_energy_and_defect(merged, NO_FORCE).D
    np.testing.assert_allclose(d1, d2, atol=1e-14)


def test_support_examples():
    assert support_constant(0.0, GAS) == pytest.approx(1 / 1.5)
    Y = AtomicYoungMeasure.dirac(const(np.zeros((2,) + SHAPE)))
    assert entropy_support_check(Y, 0.0, GAS).passed
    assert entropy_support_check(Y, -math.inf, GAS).passed
    E = np.full((11,) + SHAPE, 1.5)
    E[4, 3, 2] = 0.5
    bad = Trajectory(TIMES, np.ones((11,) + SHAPE), np.zeros((11, 2) + SHAPE), E, AXES)
    rep = entropy_support_check(AtomicYoungMeasure.dirac(bad), 0.0, GAS)
    assert rep.violations == [(0, 4, (3, 2))]
    vac = AtomicYoungMeasure.dirac(const(np.zeros((2,) + SHAPE), rho=0.0, E=0.0))
    assert entropy_support_check(vac, 0.0, GAS).passed


def translating_functions():
    return (lambda t, x, y: 1 + 0.2 * np.sin(2 * np.pi * (x - t)),
            lambda t, x, y: 1.0 / (1 + 0.2 * np.sin(2 * np.pi * (x - t))),
            lambda t, x, y: (1 + 0 * x, 0 * x))


def test_slack_static_dirac():
    mesh = Mesh((8, 16))
    s = build_static(1.0, 1.0)
    traj = Trajectory.constant(s.sample(mesh), np.zeros((2,) + mesh.shape), GAS.c_v * s.sample(mesh),
                               cell_axes(mesh.shape), TIMES)
    traj.epsilon = 0.1
    Y = AtomicYoungMeasure.dirac(traj)
    ref = ReferenceTriple.static(s, traj.axes, TIMES)
    pot = PotentialField()
    sl = rel_energy_inequality_slack(Y, check_energy_and_defect(Y, pot), None, ref, gas=GAS, potential=pot)
    assert np.max(np.abs(sl.lhs)) < 1e-12 and np.max(np.abs(sl.rhs)) < 1e-9
    assert sl.passed


def test_slack_exact_smooth_solution():
    r_fn, th_fn, U_fn = translating_functions()
    traj = Trajectory.from_functions(r_fn, lambda t, x, y: tuple(r_fn(t, x, y) * c for c in U_fn(t, x, y)),
                                     lambda t, x, y: GAS.c_v * r_fn(t, x, y) * th_fn(t, x, y), AXES, TIMES)
    ref = ReferenceTriple.from_functions(r_fn, th_fn, U_fn, AXES, TIMES)
    Y = AtomicYoungMeasure.dirac(traj)
    sl = rel_energy_inequality_slack(Y, check_energy_and_defect(Y, NO_FORCE), None, ref, gas=GAS)
    assert sl.passed
    assert np.max(np.abs(sl.slack)) < 1e-6


def test_slack_two_atom_mixture():
    r_fn, th_fn, U_fn = translating_functions()
    delta = 0.3

    def atom(sign):
        return Trajectory.from_functions(
            r_fn, lambda t, x, y: (r_fn(t, x, y) * (1 + sign * delta), 0 * x),
            lambda t, x, y: GAS.c_v * r_fn(t, x, y) * th_fn(t, x, y), AXES, TIMES)

    Y = AtomicYoungMeasure([atom(1), atom(-1)], [0.5, 0.5])
    ref = ReferenceTriple.from_functions(r_fn, th_fn, U_fn, AXES, TIMES)
    _, mu = check_momentum(Y, gas=GAS, solve=True)
    sl = rel_energy_inequality_slack(Y, check_energy_and_defect(Y, NO_FORCE, mu_R=mu), mu, ref, gas=GAS)
    assert np.all(sl.energy > 0)
    assert sl.passed, sl.slack


def test_slack_rejects_misaligned_reference():
    Y = AtomicYoungMeasure.dirac(const(np.zeros((2,) + SHAPE)))
    ref = ReferenceTriple.static(build_static(1.0, 1.0), AXES, TIMES[:5])
    with pytest.raises(ValueError):
        rel_energy_inequality_slack(Y, np.zeros(11), None, ref)


def test_manifest_round_trip(tmp_path):
    Y = oscillating_pair()
    write_manifest(Y, tmp_path / "meas")
    back = load_manifest(str(tmp_path / "meas"))
    assert len(back.atoms) == 2
    np.testing.assert_array_equal(back.weights, Y.weights)
    np.testing.assert_array_equal(back.atoms[1].m, Y.atoms[1].m)
