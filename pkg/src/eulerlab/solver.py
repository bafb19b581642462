"""Well-balanced finite-volume solver for the low Mach / low Froude Euler system.

Evolved unknowns per cell are (rho, m, E) with the scaled total energy
E = |m|^2/(2 rho) + E_int/eps^2, so that

    d_t rho + div m = 0
    d_t m + div(m (x) m / rho) + grad p / eps^2 = rho grad(Phi) / eps^2
    d_t E + div((E + p/eps^2) m / rho) = grad(Phi) . m / eps^2

Internally a state is packed as one array ``U`` of shape ``(N + 2, *cells)``
holding ``[rho, m_1..m_N, E]``.  The last spatial axis is vertical; with
walls it is closed by mirror ghost cells.  Vertical interfaces use a
hydrostatic reconstruction around each cell (density and pressure
extrapolated with exp(-g (z - z_c)/theta_c)), which makes any discrete
isothermal hydrostatic profile a fixed point of the update.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from eulerlab.mesh import Mesh, PotentialField
from eulerlab.thermo import RHO_FLOOR, CutoffSpec, GasParams
from eulerlab.trajectory import Trajectory, cell_axes

FLUXES = ("rusanov", "hll", "hllc")


class PositivityError(RuntimeError):
    """Density fell below the floor or internal energy became negative."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class FieldState:
    rho: np.ndarray
    m: np.ndarray
    E: np.ndarray
    t: float = 0.0
    epsilon: float = 1.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        self.E = np.asarray(self.E, dtype=float)
        if self.m.shape != (self.rho.ndim,) + self.rho.shape or self.E.shape != self.rho.shape:
            raise ValueError("inconsistent field shapes")

    @classmethod
    def from_primitive(cls, rho, theta, u, gas: GasParams = GasParams(), epsilon=1.0, t=0.0):
        rho = np.asarray(rho, dtype=float)
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            # a constant velocity vector, one entry per component
            u = u.reshape((-1,) + (1,) * rho.ndim)
        u = np.broadcast_to(u, (rho.ndim,) + rho.shape)
        E_int = gas.c_v * rho * np.asarray(theta, dtype=float)
        m = rho * u
        E = 0.5 * rho * np.sum(u**2, axis=0) + E_int / epsilon**2
        return cls(rho, m, E, t, epsilon)

    @classmethod
    def from_internal(cls, rho, m, E_int, epsilon=1.0, t=0.0):
        rho = np.asarray(rho, dtype=float)
        m = np.asarray(m, dtype=float)
        E = 0.5 * np.sum(m**2, axis=0) / rho + np.asarray(E_int, dtype=float) / epsilon**2
        return cls(rho, m, E, t, epsilon)

    @property
    def ndim(self) -> int:
        return self.rho.ndim

    @property
    def E_int(self):
        return self.epsilon**2 * (self.E - 0.5 * np.sum(self.m**2, axis=0) / self.rho)

    def theta(self, gas: GasParams = GasParams()):
        return self.E_int / (gas.c_v * self.rho)

    def velocity(self):
        return self.m / self.rho

    def entropy(self, gas: GasParams = GasParams()):
        return gas.c_v * np.log(self.theta(gas)) - np.log(self.rho)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.rho[None], self.m, self.E[None]])

    @classmethod
    def unpack(cls, U, t, epsilon):
        n = U.shape[0] - 2
        return cls(U[0].copy(), U[1:1 + n].copy(), U[1 + n].copy(), t, epsilon)

    def copy(self) -> "FieldState":
        return FieldState(self.rho.copy(), self.m.copy(), self.E.copy(), self.t, self.epsilon)


@dataclass
class SolverConfig:
    epsilon: float = 1.0
    cfl: float = 0.4
    flux: str = "rusanov"
    well_balanced: bool = True
    t_end: float = 0.1
    snapshot_every: int = 1
    snapshot_dt: float = 0.0
    max_steps: int = 10_000_000
    cutoff: CutoffSpec | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.flux not in FLUXES:
            raise ValueError(f"flux must be one of {FLUXES}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")


# -- pointwise kernels on packed arrays ---------------------------------------

def _primitives(U, eps, gas):
    n = U.shape[0] - 2
    rho = U[0]
    m = U[1:1 + n]
    u = m / rho
    kin = 0.5 * np.sum(m * u, axis=0)
    E_int = eps**2 * (U[1 + n] - kin)
    p = E_int / gas.c_v
    return rho, u, p


def _normal(n, ndim):
    n = np.asarray(n, dtype=float)
    if n.shape != (ndim,):
        raise ValueError(f"normal must have {ndim} components")
    norm = np.linalg.norm(n)
    if not np.isclose(norm, 1.0):
        raise ValueError("normal must be a unit vector")
    return n


def _bcast(n, like):
    return n.reshape(n.shape + (1,) * (like.ndim - 1))


def physical_flux(U, n, eps, gas: GasParams = GasParams()):
    """Exact flux F(U) . n of the scaled system."""
    U = np.asarray(U, dtype=float)
    ndim = U.shape[0] - 2
    n = _normal(n, ndim)
    rho, u, p = _primitives(U, eps, gas)
    nb = _bcast(n, u)
    un = np.sum(u * nb, axis=0)
    P = p / eps**2
    F = np.empty_like(U)
    F[0] = rho * un
    F[1:1 + ndim] = U[1:1 + ndim] * un + P * nb
    F[1 + ndim] = (U[1 + ndim] + P) * un
    return F


def _validate(U, eps, gas, side):
    if np.any(~(U[0] >= RHO_FLOOR)):
        raise ValueError(f"{side} state has vacuum or negative density")
    _, _, p = _primitives(U, eps, gas)
    if np.any(~(p >= 0)):
        raise ValueError(f"{side} state has negative internal energy")


def _flux_kernel(UL, UR, n, eps, gas, kind):
    ndim = UL.shape[0] - 2
    nb = _bcast(n, UL[1:1 + ndim])
    rL, uL, pL = _primitives(UL, eps, gas)
    rR, uR, pR = _primitives(UR, eps, gas)
    unL = np.sum(uL * nb, axis=0)
    unR = np.sum(uR * nb, axis=0)
    cL = np.sqrt(gas.gamma * pL / rL) / eps
    cR = np.sqrt(gas.gamma * pR / rR) / eps
    FL = physical_flux(UL, n, eps, gas)
    FR = physical_flux(UR, n, eps, gas)
    if kind == "rusanov":
        a = np.maximum(np.abs(unL) + cL, np.abs(unR) + cR)
        return 0.5 * (FL + FR) - 0.5 * a * (UR - UL)

    SL = np.minimum(unL - cL, unR - cR)
    SR = np.maximum(unL + cL, unR + cR)
    if kind == "hll":
        denom = np.where(SR > SL, SR - SL, 1.0)
        Fs = (SR * FL - SL * FR + SL * SR * (UR - UL)) / denom
        return np.where(SL >= 0, FL, np.where(SR <= 0, FR, Fs))

    # HLLC: the scaled system is ordinary Euler with pressure P = p / eps^2
    PL, PR = pL / eps**2, pR / eps**2
    aL = rL * (SL - unL)
    aR = rR * (SR - unR)
    denom = aL - aR
    denom = np.where(denom == 0, 1.0, denom)
    Ss = (PR - PL + aL * unL - aR * unR) / denom

    def star(U, r, u, un, P, S):
        d = np.where(S - Ss == 0, 1.0, S - Ss)
        fac = r * (S - un) / d
        Us = np.empty_like(U)
        Us[0] = fac
        Us[1:1 + ndim] = fac * (u + (Ss - un) * nb)
        E = U[1 + ndim]
        Us[1 + ndim] = fac * (E / r + (Ss - un) * (Ss + P / (r * (S - un))))
        return Us

    FsL = FL + SL * (star(UL, rL, uL, unL, PL, SL) - UL)
    FsR = FR + SR * (star(UR, rR, uR, unR, PR, SR) - UR)
    return np.where(SL >= 0, FL, np.where(Ss >= 0, FsL, np.where(SR > 0, FsR, FR)))


def numerical_flux(left, right, normal, epsilon, gas: GasParams = GasParams(), kind="rusanov"):
    """Two-point numerical flux through a face with unit ``normal``.

    ``left``/``right`` are packed state arrays ``[rho, m..., E]`` (extra
    trailing axes allowed) or :class:`FieldState` objects.
    """
    if kind not in FLUXES:
        raise ValueError(f"unknown flux {kind!r}")
    UL = left.pack() if isinstance(left, FieldState) else np.asarray(left, dtype=float)
    UR = right.pack() if isinstance(right, FieldState) else np.asarray(right, dtype=float)
    if UL.shape != UR.shape:
        raise ValueError("left and right states differ in shape")
    n = _normal(normal, UL.shape[0] - 2)
    _validate(UL, epsilon, gas, "left")
    _validate(UR, epsilon, gas, "right")
    if np.array_equal(UL, UR):
        return physical_flux(UL, n, epsilon, gas)
    return _flux_kernel(UL, UR, n, epsilon, gas, kind)


def gravity_source(state, potential: PotentialField, epsilon):
    """Pointwise source (0, rho grad Phi / eps^2, grad Phi . m / eps^2)."""
    U = state.pack() if isinstance(state, FieldState) else np.asarray(state, dtype=float)
    ndim = U.shape[0] - 2
    g = _bcast(potential.grad(ndim), U[1:1 + ndim])
    S = np.zeros_like(U)
    S[1:1 + ndim] = U[0] * g / epsilon**2
    S[1 + ndim] = np.sum(g * U[1:1 + ndim], axis=0) / epsilon**2
    return S


# -- the scheme ---------------------------------------------------------------

class Solver:
    def __init__(self, mesh: Mesh, gas: GasParams = GasParams(),
                 potential: PotentialField = PotentialField(), config: SolverConfig = SolverConfig()):
        self.mesh = mesh
        self.gas = gas
        self.potential = potential
        self.config = config
        if not mesh.walls and potential.gravity != 0:
            raise ValueError("a gravitational potential needs the wall-bounded slab")

    @property
    def eps(self):
        return self.config.epsilon

    def _cons(self, rho, u, p):
        eps = self.eps
        U = np.empty((rho.ndim + 2,) + rho.shape)
        U[0] = rho
        U[1:-1] = rho * u
        U[-1] = 0.5 * rho * np.sum(u**2, axis=0) + self.gas.c_v * p / eps**2
        return U

    def rhs(self, U):
        """Semi-discrete time derivative of the packed state."""
        mesh, eps, gas, kind = self.mesh, self.eps, self.gas, self.config.flux
        ndim = mesh.ndim
        dU = np.zeros_like(U)
        for d in range(ndim):
            n = np.zeros(ndim)
            n[d] = 1.0
            h = mesh.h[d]
            ax = d + 1
            if mesh.periodic(d):
                UR = np.roll(U, -1, axis=ax)
                F = _flux_kernel(U, UR, n, eps, gas, kind)
                dU -= (F - np.roll(F, 1, axis=ax)) / h
            else:
                dU += self._vertical(U, n, h, ax)
        return dU

    def _vertical(self, U, n, h, ax):
        eps, gas = self.eps, self.gas
        ndim = U.shape[0] - 2
        rho, u, p = _primitives(U, eps, gas)
        g = self.potential.gravity
        if self.config.well_balanced and g != 0:
            theta = p / rho
            up = np.exp(-0.5 * g * h / theta)
            dn = np.exp(0.5 * g * h / theta)
        else:
            up = dn = np.ones_like(rho)
        Uup = self._cons(rho * up, u, p * up)   # value at the top face of each cell
        Udn = self._cons(rho * dn, u, p * dn)   # value at the bottom face
        low = Udn[..., :1].copy()
        low[ndim] *= -1
        high = Uup[..., -1:].copy()
        high[ndim] *= -1
        UL = np.concatenate([low, Uup], axis=-1)
        UR = np.concatenate([Udn, high], axis=-1)
        F = _flux_kernel(UL, UR, n, eps, gas, self.config.flux)
        # mirror ghosts: only the normal momentum (pressure) crosses a wall
        keep = F[ndim, ..., [0, -1]].copy()
        F[..., [0, -1]] = 0.0
        F[ndim, ..., [0, -1]] = keep
        out = -(F[..., 1:] - F[..., :-1]) / h
        if g != 0:
            if self.config.well_balanced:
                out[ndim] += (p * up - p * dn) / (h * eps**2)
            else:
                out[ndim] += -g * rho / eps**2
            # energy source uses the interface mass fluxes so that the total
            # E - rho Phi / eps^2 telescopes exactly
            mflux = 0.5 * (F[0, ..., 1:] + F[0, ..., :-1])
            out[1 + ndim] += -g * mflux / eps**2
        return out

    def max_dt(self, U) -> float:
        rho, u, p = _primitives(U, self.eps, self.gas)
        c = np.sqrt(self.gas.gamma * p / rho) / self.eps
        rate = sum(float(np.max(np.abs(u[d]) + c)) / self.mesh.h[d] for d in range(self.mesh.ndim))
        return self.config.cfl / rate

    def _check(self, U, t):
        rho, _, p = _primitives(U, self.eps, self.gas)
        bad = ~(rho >= RHO_FLOOR) | ~(p >= 0)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise PositivityError(
                f"positivity lost at t={t:.6g} in cell {idx}: rho={rho[idx]:.3e}, p={p[idx]:.3e}",
            )

    def step(self, state: FieldState, dt: float | None = None) -> FieldState:
        """One SSP-RK2 (Heun) step; dt defaults to the CFL bound."""
        if state.epsilon != self.eps:
            raise ValueError("state epsilon differs from solver epsilon")
        U0 = state.pack()
        self._check(U0, state.t)
        if dt is None:
            dt = self.max_dt(U0)
        U1 = U0 + dt * self.rhs(U0)
        self._check(U1, state.t + dt)
        U2 = 0.5 * (U0 + U1 + dt * self.rhs(U1))
        self._check(U2, state.t + dt)
        return FieldState.unpack(U2, state.t + dt, self.eps)

    def totals(self, state: FieldState) -> dict:
        vol = self.mesh.cell_volume
        eps = self.eps
        Phi = self.potential.sample(self.mesh)
        s = state.entropy(self.gas)
        Z = self.config.cutoff(s) if self.config.cutoff is not None else s
        return {
            "t": state.t,
            "mass": float(np.sum(state.rho) * vol),
            "energy": float(np.sum(state.E) * vol),
            "entropy_total": float(np.sum(state.rho * Z) * vol),
            "energy_with_potential": float(np.sum(state.E - state.rho * Phi / eps**2) * vol),
        }

    def run_to_time(self, state: FieldState, observers: Sequence[Callable] = ()) -> "RunResult":
        cfg = self.config
        if cfg.t_end < state.t:
            raise ValueError("t_end lies before the initial time")
        cur = state.copy()
        result = RunResult(mesh=self.mesh, gas=self.gas, config=cfg)
        result.record(cur, self.totals(cur), observers)
        next_snap = cur.t + cfg.snapshot_dt if cfg.snapshot_dt > 0 else np.inf
        steps = 0
        while cur.t < cfg.t_end:
            if steps >= cfg.max_steps:
                result.failed = True
                result.message = f"step limit {cfg.max_steps} reached at t={cur.t:.6g}"
                break
            dt = self.max_dt(cur.pack())
            target = min(cfg.t_end, next_snap)
            landing = cur.t + dt >= target
            if landing:
                dt = target - cur.t
            try:
                cur = self.step(cur, dt)
            except PositivityError as err:
                result.failed = True
                result.message = str(err)
                break
            steps += 1
            if landing:
                cur.t = target
            hit = landing and target == next_snap
            if hit:
                next_snap += cfg.snapshot_dt
            if hit or cur.t >= cfg.t_end or (cfg.snapshot_dt <= 0 and steps % cfg.snapshot_every == 0):
                result.record(cur, self.totals(cur), observers)
        result.steps = steps
        return result


def step(state: FieldState, config: SolverConfig, mesh: Mesh | None = None,
         gas: GasParams = GasParams(), potential: PotentialField = PotentialField(),
         dt: float | None = None) -> FieldState:
    """Advance ``state`` by one step of the scheme described by ``config``."""
    mesh = mesh or Mesh(state.rho.shape)
    return Solver(mesh, gas, potential, config).step(state, dt)


def run_to_time(state: FieldState, config: SolverConfig, observers: Sequence[Callable] = (),
                mesh: Mesh | None = None, gas: GasParams = GasParams(),
                potential: PotentialField = PotentialField()) -> "RunResult":
    mesh = mesh or Mesh(state.rho.shape)
    return Solver(mesh, gas, potential, config).run_to_time(state, observers)


def entropy_production(before: FieldState, after: FieldState, dt: float, mesh: Mesh,
                       gas: GasParams = GasParams()) -> np.ndarray:
    """Cellwise residual of d_t(rho s) + div(rho s u) between two states.

    The flux divergence uses centred interface averages of rho s u taken
    at the mid-step; wall faces carry no flux.  Vacuum cells are NaN.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    vac = (before.rho < RHO_FLOOR) | (after.rho < RHO_FLOOR)

    def rs_and_flux(st):
        rho = np.where(vac, 1.0, st.rho)
        E_int = np.where(vac, 1.0, st.E_int)
        s = gas.c_v * np.log(E_int / (gas.c_v * rho)) - np.log(rho)
        rs = np.where(vac, 0.0, rho * s)
        q = np.where(vac, 0.0, rs * st.m / rho)
        return rs, q

    rs0, q0 = rs_and_flux(before)
    rs1, q1 = rs_and_flux(after)
    q = 0.5 * (q0 + q1)
    div = np.zeros_like(rs0)
    for d in range(mesh.ndim):
        h = mesh.h[d]
        qd = q[d]
        if mesh.periodic(d):
            face = 0.5 * (qd + np.roll(qd, -1, axis=d))
            div += (face - np.roll(face, 1, axis=d)) / h
        else:
            inner = 0.5 * (np.take(qd, range(0, qd.shape[d] - 1), axis=d)
                           + np.take(qd, range(1, qd.shape[d]), axis=d))
            zeros = np.zeros_like(np.take(qd, [0], axis=d))
            face = np.concatenate([zeros, inner, zeros], axis=d)
            div += np.diff(face, axis=d) / h
    out = (rs1 - rs0) / dt + div
    return np.where(vac, np.nan, out)


def entropy_tolerance(mesh: Mesh, constant: float = 1.0) -> float:
    """Allowed negative total entropy production, C * h_max."""
    return constant * max(mesh.h)


def entropy_sign_ok(production: np.ndarray, mesh: Mesh, constant: float = 1.0) -> bool:
    total = float(np.nansum(production) * mesh.cell_volume)
    return total >= -entropy_tolerance(mesh, constant)


@dataclass
class RunResult:
    mesh: Mesh
    gas: GasParams
    config: SolverConfig
    snapshots: list = field(default_factory=list)
    series: list = field(default_factory=list)
    failed: bool = False
    message: str = ""
    steps: int = 0

    def record(self, state, totals, observers=()):
        snap = state.copy()
        self.snapshots.append(snap)
        self.series.append(totals)
        for obs in observers:
            obs(snap)

    @property
    def final(self) -> FieldState:
        return self.snapshots[-1]

    def column(self, name) -> np.ndarray:
        return np.array([row[name] for row in self.series])

    def trajectory(self) -> Trajectory:
        snaps = self.snapshots
        return Trajectory(
            times=np.array([s.t for s in snaps]),
            rho=np.array([s.rho for s in snaps]),
            m=np.array([s.m for s in snaps]),
            E_int=np.array([s.E_int for s in snaps]),
            axes=cell_axes(self.mesh.shape, self.mesh.walls),
            epsilon=self.config.epsilon,
            meta={"failed": self.failed, "flux": self.config.flux},
        )

    def write(self, directory):
        """Snapshots (npz per time) plus ``series.csv``."""
        os.makedirs(directory, exist_ok=True)
        self.trajectory().save(directory)
        cols = ["t", "mass", "energy", "entropy_total", "energy_with_potential"]
        with open(os.path.join(directory, "series.csv"), "w", newline="") as fh:
            fh.write(f"# run epsilon={self.config.epsilon!r} shape={list(self.mesh.shape)} "
                     f"failed={self.failed}\n")
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.series:
                w.writerow([repr(float(row[c])) for c in cols])


def with_epsilon(config: SolverConfig, epsilon: float) -> SolverConfig:
    return replace(config, epsilon=epsilon)
