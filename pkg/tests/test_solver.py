import numpy as np
import pytest

from eulerlab.mesh import NO_FORCE, Mesh, PotentialField
from eulerlab.solver import (FieldState, PositivityError, Solver, SolverConfig, entropy_production, entropy_sign_ok,
                             entropy_tolerance, gravity_source, numerical_flux, run_to_time, step)
from eulerlab.static_state import build_static
from eulerlab.thermo import GasParams

GAS = GasParams(1.5)


def packed(rho, u, theta, eps=1.0, gas=GAS):
    u = np.asarray(u, dtype=float)
    return np.array([rho, *(rho * u), 0.5 * rho * u @ u + gas.c_v * rho * theta / eps**2])


def rusanov_reference(rhoL, uL, thL, rhoR, uR, thR, eps, cv):
    """Scalar 1-D Rusanov flux, x-normal, written without the package kernels."""
    gamma = 1 + 1 / cv

    def flux(r, u, th):
        p = r * th / eps**2
        E = 0.5 * r * u * u + cv * r * th / eps**2
        return [r * u, r * u * u + p, 0.0, (E + p) * u], [r, r * u, 0.0, E]

    FL, UL = flux(rhoL, uL, thL)
    FR, UR = flux(rhoR, uR, thR)
    a = max(abs(uL) + np.sqrt(gamma * thL) / eps, abs(uR) + np.sqrt(gamma * thR) / eps)
    return [0.5 * (fl + fr) - 0.5 * a * (ur - ul) for fl, fr, ul, ur in zip(FL, FR, UL, UR)]


def test_flux_at_rest():
    U = packed(1.0, [0.0, 0.0], 1.0)
    F = numerical_flux(U, U, [1.0, 0.0], 1.0)
    np.testing.assert_allclose(F, [0.0, 1.0, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("kind", ["rusanov", "hll", "hllc"])
def test_flux_antisymmetry(kind):
    L = packed(1.0, [0.3, -0.1], 1.0)
    R = packed(0.4, [-0.2, 0.5], 0.7)
    n = np.array([0.6, 0.8])
    F = numerical_flux(L, R, n, 0.5, kind=kind)
    G = numerical_flux(R, L, -n, 0.5, kind=kind)
    np.testing.assert_allclose(F, -G, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("kind", ["rusanov", "hll", "hllc"])
def test_flux_consistency(kind):
    U = packed(0.8, [0.3, -0.4], 1.2, eps=0.3)
    from eulerlab.solver import physical_flux
    F = numerical_flux(U, U, [0.0, 1.0], 0.3, kind=kind)
    np.testing.assert_allclose(F, physical_flux(U, np.array([0.0, 1.0]), 0.3, GAS), rtol=1e-14)


@pytest.mark.parametrize("eps", [1.0, 0.2])
def test_rusanov_scalar_oracle(eps):
    L = packed(1.0, [0.0, 0.0], 1.0, eps)
    R = packed(0.125, [0.0, 0.0], 0.8, eps)
    F = numerical_flux(L, R, [1.0, 0.0], eps, kind="rusanov")
    ref = rusanov_reference(1.0, 0.0, 1.0, 0.125, 0.0, 0.8, eps, 1.5)
    np.testing.assert_allclose(F, ref, rtol=1e-13)


def test_flux_rejects_vacuum():
    L = packed(1.0, [0.0, 0.0], 1.0)
    R = np.array([0.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        numerical_flux(L, R, [1.0, 0.0], 1.0)


def test_gravity_source_examples():
    U = packed(1.0, [0.0, 0.0, 0.0], 1.0)
    S = gravity_source(U, PotentialField(), 1.0)
    np.testing.assert_allclose(S, [0, 0, 0, -1, 0])
    S2 = gravity_source(U, PotentialField(), 0.5)
    np.testing.assert_allclose(S2, 4 * S)
    U = packed(2.0, [0.0, 0.5], 1.0)
    np.testing.assert_allclose(gravity_source(U, PotentialField(), 1.0)[-1], -1.0)


def static_field(mesh, eps, theta=1.0):
    s = build_static(theta, 1.0)
    rho = s.sample(mesh)
    return FieldState.from_primitive(rho, np.full(mesh.shape, theta), 0.0, GAS, eps)


@pytest.mark.parametrize("flux", ["rusanov", "hll", "hllc"])
@pytest.mark.parametrize("shape", [(8, 16), (4, 4, 8)])
def test_well_balanced(flux, shape):
    mesh = Mesh(shape)
    eps = 0.1
    st = static_field(mesh, eps)
    cfg = SolverConfig(epsilon=eps, flux=flux)
    out = step(st, cfg, mesh, GAS, PotentialField())
    scale = np.max(np.abs(st.pack()))
    assert np.max(np.abs(out.pack() - st.pack())) / scale < 1e-13


def test_uniform_state_unchanged():
    mesh = Mesh((8, 8), walls=False)
    st = FieldState.from_primitive(np.ones(mesh.shape), np.ones(mesh.shape), [0.3, -0.2])
    out = step(st, SolverConfig(), mesh, GAS, NO_FORCE)
    np.testing.assert_allclose(out.pack(), st.pack(), rtol=1e-14, atol=1e-14)


def random_state(mesh, seed, eps=1.0):
    rng = np.random.default_rng(seed)
    rho = 1 + 0.2 * rng.random(mesh.shape)
    theta = 1 + 0.2 * rng.random(mesh.shape)
    u = 0.1 * (rng.random((mesh.ndim,) + mesh.shape) - 0.5)
    return FieldState.from_primitive(rho, theta, u, GAS, eps)


def test_mass_conserved_1000_steps():
    mesh = Mesh((8, 8))
    solver = Solver(mesh, GAS, PotentialField(), SolverConfig(epsilon=1.0))
    st = random_state(mesh, 1)
    m0 = solver.totals(st)["mass"]
    for _ in range(1000):
        st = solver.step(st)
    assert abs(solver.totals(st)["mass"] - m0) <= 1e-12 * m0


def test_energy_conserved_torus():
    mesh = Mesh((8, 8), walls=False)
    cfg = SolverConfig(epsilon=1.0, t_end=0.2)
    res = run_to_time(random_state(mesh, 2), cfg, mesh=mesh, gas=GAS, potential=NO_FORCE)
    e = res.column("energy")
    assert np.max(np.abs(e - e[0])) <= 1e-12 * abs(e[0])
    m = res.column("mass")
    assert np.max(np.abs(m - m[0])) <= 1e-12 * m[0]


def test_energy_with_potential_conserved_slab():
    mesh = Mesh((8, 8))
    cfg = SolverConfig(epsilon=0.5, t_end=0.05)
    res = run_to_time(random_state(mesh, 3, 0.5), cfg, mesh=mesh, gas=GAS, potential=PotentialField())
    e = res.column("energy_with_potential")
    assert np.max(np.abs(e - e[0])) <= 1e-11 * abs(e[0])


def riemann_state(mesh):
    x = mesh.coords()[0]
    left = (x > 0.25) & (x < 0.75)
    rho = np.where(left, 1.0, 0.125)
    theta = np.where(left, 1.0, 0.8)
    return FieldState.from_primitive(rho, theta, 0.0, GAS)


def test_entropy_production_uniform_zero():
    mesh = Mesh((8, 8), walls=False)
    st = FieldState.from_primitive(np.ones(mesh.shape), np.ones(mesh.shape), [0.1, 0.0])
    out = step(st, SolverConfig(), mesh, GAS, NO_FORCE)
    assert np.max(np.abs(entropy_production(st, out, 0.01, mesh, GAS))) < 1e-12


def test_entropy_production_positive_and_antisymmetric():
    mesh = Mesh((64, 4), walls=False)
    solver = Solver(mesh, GAS, NO_FORCE, SolverConfig())
    st = riemann_state(mesh)
    for _ in range(20):
        st = solver.step(st)
    dt = solver.max_dt(st.pack())
    nxt = solver.step(st, dt)
    fwd = entropy_production(st, nxt, dt, mesh, GAS)
    total = np.sum(fwd) * mesh.cell_volume
    assert total > 0
    assert entropy_sign_ok(fwd, mesh)
    back = entropy_production(nxt, st, dt, mesh, GAS)
    assert np.sum(back) * mesh.cell_volume == pytest.approx(-total, rel=1e-10)


def test_entropy_tolerance_shrinks():
    assert entropy_tolerance(Mesh((32, 32))) == pytest.approx(entropy_tolerance(Mesh((16, 16))) / 2)


def test_run_to_time_identity():
    mesh = Mesh((8, 8))
    st = static_field(mesh, 1.0)
    res = run_to_time(st, SolverConfig(t_end=0.0), mesh=mesh, gas=GAS)
    assert len(res.snapshots) == 1 and res.steps == 0
    np.testing.assert_array_equal(res.final.pack(), st.pack())


def test_run_to_time_rejects_past_end():
    mesh = Mesh((8, 8))
    st = static_field(mesh, 1.0)
    st.t = 1.0
    with pytest.raises(ValueError):
        run_to_time(st, SolverConfig(t_end=0.5), mesh=mesh, gas=GAS)


def test_snapshot_cadence():
    mesh = Mesh((8, 8))
    cfg = SolverConfig(epsilon=0.5, t_end=0.1, snapshot_dt=0.025)
    res = run_to_time(random_state(mesh, 4, 0.5), cfg, mesh=mesh, gas=GAS)
    np.testing.assert_allclose(res.column("t"), [0, 0.025, 0.05, 0.075, 0.1], atol=1e-14)


def test_abort_propagates_partial_trajectory():
    mesh = Mesh((8, 8))
    cfg = SolverConfig(epsilon=0.5, t_end=1.0, max_steps=3)
    res = run_to_time(random_state(mesh, 5, 0.5), cfg, mesh=mesh, gas=GAS)
    assert res.failed and "step limit" in res.message
    assert res.steps == 3 and len(res.snapshots) == 4


def test_positivity_loss_aborts():
    mesh = Mesh((8, 8), walls=False)
    st = random_state(mesh, 6)
    st.E[2, 3] = 0.0  # negative internal energy in one cell
    with pytest.raises(PositivityError, match="cell"):
        step(st, SolverConfig(), mesh, GAS, NO_FORCE)


def test_mirror_symmetry():
    mesh = Mesh((16, 8))
    x, z = mesh.coords()
    rho = build_static(1.0, 1.0).sample(mesh) * (1 + 0.1 * np.cos(2 * np.pi * x))
    u = np.stack([0.1 * np.sin(2 * np.pi * x), np.zeros(mesh.shape)])
    st = FieldState.from_primitive(rho, np.ones(mesh.shape), u, GAS, 0.5)
    cfg = SolverConfig(epsilon=0.5, t_end=0.05)
    fin = run_to_time(st, cfg, mesh=mesh, gas=GAS).final
    # x -> 1 - x maps cell i to n - 1 - i
    np.testing.assert_allclose(fin.rho, fin.rho[::-1], rtol=1e-12)
    np.testing.assert_allclose(fin.m[0], -fin.m[0][::-1], atol=1e-12)


def test_config_validation():
    for kw in ({"epsilon": 0.0}, {"cfl": 1.0}, {"flux": "roe"}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_first_order_convergence():
    # smooth advected density on the torus: rho = 1 + 0.2 sin(2 pi (x - t)), u = 1, p = const
    errs = []
    for n in (32, 64, 128):
        mesh = Mesh((n, 2), walls=False)
        x = mesh.coords()[0]
        rho = 1 + 0.2 * np.sin(2 * np.pi * x)
        st = FieldState.from_primitive(rho, 1.0 / rho, [1.0, 0.0], GAS)
        fin = run_to_time(st, SolverConfig(t_end=0.2), mesh=mesh, gas=GAS, potential=NO_FORCE).final
        # cell averages of the exact solution
        xe = mesh.edges(0)
        avg = 1 + 0.2 * (np.cos(2 * np.pi * (xe[:-1] - 0.2)) - np.cos(2 * np.pi * (xe[1:] - 0.2))) \
            / (2 * np.pi / n)
        errs.append(np.mean(np.abs(fin.rho[:, 0] - avg)))
    for a, b in zip(errs, errs[1:]):
        assert 1.8 <= a / b <= 2.2
