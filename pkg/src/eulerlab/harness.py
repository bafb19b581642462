"""Experiment driver for the low Mach / low Froude singular limit.

Well-prepared data are O(eps) perturbations of the static state whose
profiles themselves shrink like eps^decay, with the velocity close to the
horizontal, divergence-free limit field U0.  A sweep runs the scaled solver
for each eps, measures the relative energy against (rho_s, Theta_bar, U)
and collects the limit-momentum diagnostics of xi = <Y; m>.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from eulerlab import incompressible
from eulerlab.mesh import Mesh, PotentialField
from eulerlab.mvs import AtomicYoungMeasure, check_energy_and_defect, rel_energy_inequality_slack
from eulerlab.reference import ReferenceTriple
from eulerlab.relative_energy import rel_energy_integral
from eulerlab.solver import FieldState, Solver, SolverConfig
from eulerlab.static_state import StaticState, build_static
from eulerlab.testfunctions import TestFunctionBasis, WeakQuadrature
from eulerlab.thermo import GasParams
from eulerlab.trajectory import Trajectory
from eulerlab.verifier import _evaluate, _sup

U0_KINDS = ("shear", "none", "vortex")
_SECTIONS = {
    "gas": ("c_v",),
    "domain": ("shape", "Theta_bar", "total_mass", "gravity"),
    "sweep": ("epsilons", "t_end", "snapshot_dt", "workers"),
    "perturbation": ("rho_amp", "theta_amp", "u_amp", "decay", "mode", "U0", "U0_amp"),
    "solver": ("flux", "cfl"),
    "output": ("directory", "seed"),
}


@dataclass
class ExperimentConfig:
    c_v: float = 1.5
    shape: tuple = (32, 16)
    Theta_bar: float = 1.0
    total_mass: float = 1.0
    gravity: float = 1.0
    epsilons: tuple = (0.1, 0.05, 0.025)
    t_end: float = 0.5
    snapshot_dt: float = 0.025
    workers: int = 1
    rho_amp: float = 0.5
    theta_amp: float = 0.5
    u_amp: float = 0.2
    decay: float = 1.0
    mode: int = 1
    U0: str = "shear"
    U0_amp: float = 0.5
    flux: str = "hllc"
    cfl: float = 0.4
    directory: str = "sweep_out"
    seed: int = 0

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        self.epsilons = tuple(float(e) for e in self.epsilons)
        if len(self.shape) not in (2, 3):
            raise ValueError("shape must have 2 or 3 entries")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("every epsilon must be positive")
        if self.U0 not in U0_KINDS:
            raise ValueError(f"U0 must be one of {U0_KINDS}")
        if self.U0 == "vortex" and len(self.shape) != 3:
            raise ValueError("the vortex limit field needs a 3-D slab")
        for name in ("rho_amp", "theta_amp", "u_amp", "U0_amp"):
            if not np.isfinite(getattr(self, name)) or abs(getattr(self, name)) > 10:
                raise ValueError(f"{name} must be bounded (|value| <= 10)")
        if self.decay < 0:
            raise ValueError("decay exponent must be nonnegative")
        if not (self.t_end > 0 and self.snapshot_dt > 0):
            raise ValueError("t_end and snapshot_dt must be positive")

    @property
    def gas(self) -> GasParams:
        return GasParams(c_v=self.c_v)

    @property
    def mesh(self) -> Mesh:
        return Mesh(self.shape, walls=True)

    @property
    def potential(self) -> PotentialField:
        return PotentialField(self.gravity)

    def static(self) -> StaticState:
        return build_static(self.Theta_bar, self.total_mass, 1.0, self.gravity)

    def solver_config(self, epsilon: float) -> SolverConfig:
        return SolverConfig(epsilon=epsilon, cfl=self.cfl, flux=self.flux, t_end=self.t_end,
                            snapshot_dt=self.snapshot_dt)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        values = asdict(self)
        for sec, keys in _SECTIONS.items():
            cp[sec] = {k: _fmt(values[k]) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read_string(text)
        types = {f.name: f.default for f in fields(cls)}
        kwargs = {}
        for sec in cp.sections():
            if sec not in _SECTIONS:
                raise ValueError(f"unknown config section [{sec}]")
            for key, raw in cp[sec].items():
                if key not in _SECTIONS[sec]:
                    raise ValueError(f"unknown key {key!r} in [{sec}]")
                kwargs[key] = _parse(raw, types[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read())

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, default):
    if isinstance(default, tuple):
        kind = type(default[0])
        return tuple(kind(x) for x in raw.split(",") if x.strip())
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes")
    return type(default)(raw.strip())


def _bump(z):
    return np.sin(np.pi * z) ** 2


def _shear_profile(amp):
    return lambda z: amp * np.sin(2 * np.pi * np.asarray(z, dtype=float))


def _vortex_field(cfg: ExperimentConfig, X, Yc, Z):
    """Layered Taylor-Green velocity (U1, U2), divergence-free in each layer."""
    g = cfg.U0_amp * (1.0 + 0.5 * np.cos(np.pi * Z))
    return np.stack([g * np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Yc),
                     -g * np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Yc)])


def limit_velocity(cfg: ExperimentConfig) -> np.ndarray:
    """U0 on the cell centres, shape (N, *shape) with zero vertical part."""
    mesh = cfg.mesh
    C = mesh.coords()
    out = np.zeros((mesh.ndim,) + mesh.shape)
    if cfg.U0 == "shear":
        out[0] = _shear_profile(cfg.U0_amp)(C[-1])
    elif cfg.U0 == "vortex":
        out[:2] = _vortex_field(cfg, *C)
    return out


def well_prepared_data(cfg: ExperimentConfig, epsilon: float) -> FieldState:
    """rho_s + eps a_eps rho1, Theta_bar + eps a_eps theta1, U0 + a_eps u1, a_eps = eps^decay."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    mesh = cfg.mesh
    C = mesh.coords()
    x, z = C[0], C[-1]
    k = 2 * np.pi * cfg.mode
    a = epsilon**cfg.decay
    st = cfg.static()
    rho = st.rho(z) + epsilon * a * cfg.rho_amp * np.sin(k * x) * _bump(z)
    theta = cfg.Theta_bar + epsilon * a * cfg.theta_amp * np.cos(k * x) * _bump(z)
    if np.min(rho) <= 0 or np.min(theta) <= 0:
        raise ValueError(f"epsilon = {epsilon} is too large for positive initial data")
    u = limit_velocity(cfg)
    u[0] = u[0] + a * cfg.u_amp * np.cos(2 * np.pi * z)
    return FieldState.from_primitive(rho, theta, u, cfg.gas, epsilon)


def positivity_bound(cfg: ExperimentConfig) -> float:
    """Largest eps (within (0, 1]) for which the datum stays positive."""
    st = cfg.static()
    rho_min = float(st.rho(1.0)) if cfg.gravity >= 0 else float(st.rho(0.0))
    lo, hi = 0.0, 1.0

    def ok(e):
        a = e**cfg.decay
        return e * a * abs(cfg.rho_amp) < rho_min and e * a * abs(cfg.theta_amp) < cfg.Theta_bar

    if ok(hi):
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def limit_solution(cfg: ExperimentConfig, times) -> incompressible.LimitSolution:
    """Incompressible limit on the compressible grid's horizontal cell centres."""
    mesh = cfg.mesh
    times = np.asarray(times, dtype=float)
    if mesh.ndim == 2:
        return incompressible.shear_limit(
            _shear_profile(cfg.U0_amp if cfg.U0 == "shear" else 0.0), mesh.centers(1), times)
    U0 = limit_velocity(cfg)[:2]
    if cfg.U0 == "none":
        K = len(times)
        return incompressible.LimitSolution(times, np.zeros((K,) + U0.shape), np.zeros((K,) + mesh.shape))
    dt = min(0.5 * min(mesh.h[:2]) / max(1e-12, float(np.max(np.abs(U0)))), 1e-2)
    return incompressible.solve_layered(U0, float(times[-1]), dt, times)


def reference_triple(cfg: ExperimentConfig, traj: Trajectory,
                     lim: incompressible.LimitSolution) -> ReferenceTriple:
    """(rho_s, Theta_bar, U) with dt_U = -(U . grad_h) U - grad_h Pi and spectral gradients."""
    mesh = cfg.mesh
    st = cfg.static()
    K = len(traj.times)
    N = mesh.ndim
    S = mesh.shape
    z = mesh.z()
    ref = ReferenceTriple.static(st, traj.axes, traj.times)
    U = np.zeros((K, N) + S)
    grad_U = np.zeros((K, N, N) + S)
    dt_U = np.zeros((K, N) + S)
    if N == 2:
        f = lim.U[:, 0, :]  # (K, nz)
        U[:, 0] = f[:, None, :]
        prof = _shear_profile(cfg.U0_amp if cfg.U0 == "shear" else 0.0)
        h = 1e-6
        grad_U[:, 0, 1] = ((prof(z + h) - prof(z - h)) / (2 * h))[None]
    else:
        grid = incompressible.SpectralGrid(S[0], S[1])
        for k in range(K):
            Uk, Pk = lim.U[k], lim.Pi[k]
            U[k, :2] = Uk
            for i in range(2):
                for layer in range(S[2]):
                    uh = grid.fft(Uk[i, ..., layer])
                    grad_U[k, i, 0, ..., layer] = grid.ifft(grid.dx(uh))
                    grad_U[k, i, 1, ..., layer] = grid.ifft(grid.dy(uh))
                grad_U[k, i, 2] = np.gradient(Uk[i], mesh.h[2], axis=-1)
            for layer in range(S[2]):
                ph = grid.fft(Pk[..., layer])
                gp = (grid.ifft(grid.dx(ph)), grid.ifft(grid.dy(ph)))
                for i in range(2):
                    adv = Uk[0, ..., layer] * grad_U[k, i, 0, ..., layer] + \
                        Uk[1, ..., layer] * grad_U[k, i, 1, ..., layer]
                    dt_U[k, i, ..., layer] = -adv - gp[i]
    return ReferenceTriple(ref.times, ref.r, ref.Theta, U, ref.dt_r, ref.dt_Theta, dt_U,
                           ref.grad_r, ref.grad_Theta, grad_U)


@dataclass
class SweepRow:
    epsilon: float
    sup_rel_energy: float
    final_D: float
    wall_time: float
    grid: str
    failed: bool = False
    message: str = ""


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: -r.epsilon)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def monotone(self, factor: float = 1.0) -> bool:
        """Each finite row's sup relative energy <= factor * the previous one."""
        v = self.column("sup_rel_energy")
        return bool(np.all(np.isfinite(v)) and np.all(v[1:] <= factor * v[:-1]))

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# convergence table v1\n")
            w = csv.writer(fh)
            w.writerow(["epsilon", "sup_rel_energy", "final_D", "wall_time", "grid", "failed", "message"])
            for r in self.rows:
                w.writerow([repr(r.epsilon), repr(r.sup_rel_energy), repr(r.final_D),
                            f"{r.wall_time:.3f}", r.grid, r.failed, r.message])


@dataclass
class SweepRun:
    """Everything one epsilon produced."""

    epsilon: float
    row: SweepRow
    trajectory: Trajectory | None
    rel_energy: np.ndarray
    defect: np.ndarray
    slack: object = None


def _run_one(cfg: ExperimentConfig, epsilon: float) -> SweepRun:
    t0 = time.perf_counter()
    grid = "x".join(str(n) for n in cfg.shape)
    try:
        state = well_prepared_data(cfg, epsilon)
    except ValueError as exc:
        row = SweepRow(epsilon, float("nan"), float("nan"), 0.0, grid, True, str(exc))
        return SweepRun(epsilon, row, None, np.array([]), np.array([]))
    solver = Solver(cfg.mesh, cfg.gas, cfg.potential, cfg.solver_config(epsilon))
    result = solver.run_to_time(state)
    traj = result.trajectory()
    lim = limit_solution(cfg, traj.times)
    ref = reference_triple(cfg, traj, lim)
    w = traj.cell_weights()
    rel = np.array([rel_energy_integral(traj, ref.r[k], ref.Theta[k], ref.U[k], w, epsilon,
                                        gas=cfg.gas, k=k).total for k in range(len(traj.times))])
    Y = AtomicYoungMeasure.dirac(traj)
    defect = check_energy_and_defect(Y, cfg.potential)
    slack = rel_energy_inequality_slack(Y, defect, None, ref, gas=cfg.gas, potential=cfg.potential)
    row = SweepRow(epsilon, float(np.max(rel)), float(defect.D[-1]), time.perf_counter() - t0, grid,
                   result.failed, result.message)
    return SweepRun(epsilon, row, traj, rel, defect.D, slack)


def run_sweep(cfg: ExperimentConfig, workers: int | None = None):
    """Run every epsilon; returns (ConvergenceTable, {eps: SweepRun})."""
    workers = cfg.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, [cfg] * len(cfg.epsilons), cfg.epsilons))
    else:
        runs = [_run_one(cfg, e) for e in cfg.epsilons]
    by_eps = {r.epsilon: r for r in runs}
    return ConvergenceTable([r.row for r in runs]), by_eps


@dataclass
class LimitMomentumField:
    """Weak diagnostics of xi = <Y; m> for one epsilon."""

    epsilon: float
    xi_vertical: float
    div_residual: float
    div_h_residual: float
    entropy_transport: float
    cancellation: float

    def row(self) -> list:
        return [self.epsilon, self.xi_vertical, self.div_residual, self.div_h_residual,
                self.entropy_transport, self.cancellation]


DIAGNOSTIC_COLUMNS = ["epsilon", "xi_vertical", "div_residual", "div_h_residual",
                      "entropy_transport", "cancellation"]


def _weak_flux_residual(traj, xi, directions, weight=None, scale=None):
    """max over the basis of |int int weight xi_j d_j phi| / (||phi||_C1 T |Omega| scale).

    ``scale`` defaults to sup|weight xi|.
    """
    basis = TestFunctionBasis.default(traj.axes, traj.T)
    quad = WeakQuadrature(traj.times, traj.axes)
    G = xi if weight is None else xi * weight

    def terms(c):
        return None, [(j, G[:, j]) for j in directions], None, None

    res, norms, _ = _evaluate(quad, basis, terms)
    return float(np.max(np.abs(res) / (norms * traj.T))) / (scale or _sup(G))


def _xi_scale(traj, rho_s):
    # floored by the static density (unit velocity) so round-off momenta stay at round-off
    return max(float(np.max(np.abs(traj.m))), float(np.max(rho_s)))


def momentum_diagnostics(cfg: ExperimentConfig, run: SweepRun) -> LimitMomentumField:
    """Diagnostics for one run, normalized by max(sup |xi|, sup rho_s)."""
    traj = run.trajectory
    xi = traj.m
    N = traj.ndim
    w = traj.cell_weights()
    rho_s = cfg.static().rho(cfg.mesh.z())
    scale = _xi_scale(traj, rho_s)
    vert = _l2_time(traj, xi[:, -1] ** 2, w)
    div = _weak_flux_residual(traj, xi, range(N), scale=scale)
    div_h = _weak_flux_residual(traj, xi, range(N - 1), scale=scale)
    s_s = cfg.c_v * np.log(cfg.Theta_bar) - np.log(rho_s)
    ent = _weak_flux_residual(traj, xi, range(N), s_s[None, None], scale * _sup(s_s))
    lim = limit_solution(cfg, traj.times)
    canc = cancellation(cfg, traj, lim)
    return LimitMomentumField(run.epsilon, float(vert) / scale, div, div_h, ent, canc)


def _l2_time(traj, sq, w):
    vals = np.tensordot(sq, w, axes=traj.ndim)
    return np.sqrt(np.sum(0.5 * np.diff(traj.times) * (vals[1:] + vals[:-1])) / traj.T)


def cancellation(cfg: ExperimentConfig, traj: Trajectory, lim) -> float:
    """Normalized int_0^T int (xi - rho_s U) . grad_h Pi; identically 0 when Pi = 0."""
    Pi = lim.Pi
    if not np.any(Pi):
        return 0.0
    mesh = cfg.mesh
    grid = incompressible.SpectralGrid(mesh.shape[0], mesh.shape[1])
    ref = reference_triple(cfg, traj, lim)
    diff = traj.m[:, :2] - ref.r[:, None] * ref.U[:, :2]
    vals = []
    for k in range(len(traj.times)):
        gp = np.zeros((2,) + mesh.shape)
        for layer in range(mesh.shape[2]):
            ph = grid.fft(Pi[k, ..., layer])
            gp[0, ..., layer] = grid.ifft(grid.dx(ph))
            gp[1, ..., layer] = grid.ifft(grid.dy(ph))
        vals.append(float(np.sum(np.sum(diff[k] * gp, axis=0)) * mesh.cell_volume))
    vals = np.array(vals)
    total = float(np.sum(0.5 * np.diff(traj.times) * (vals[1:] + vals[:-1])))
    scale = _sup(traj.m, ref.U) * _sup(np.gradient(Pi, axis=1)) * traj.T
    return abs(total) / scale


def limit_momentum_diagnostics(cfg: ExperimentConfig, runs: dict) -> list:
    """One LimitMomentumField per successful run, by decreasing epsilon."""
    ok = [r for r in runs.values() if r.trajectory is not None]
    if len(ok) < 2:
        raise ValueError("limit diagnostics need at least two epsilon values")
    return [momentum_diagnostics(cfg, r) for r in sorted(ok, key=lambda r: -r.epsilon)]


def write_diagnostics(path, diags):
    with open(path, "w", newline="") as fh:
        fh.write("# limit momentum diagnostics v1\n")
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for d in diags:
            w.writerow([repr(float(v)) for v in d.row()])


def write_manifest(directory, cfg: ExperimentConfig, extra: dict | None = None) -> str:
    """Run manifest: versions, seed and config hash."""
    info = {
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "eulerlab": _version(),
    }
    info.update(extra or {})
    path = os.path.join(directory, "manifest.json")
    with open(path, "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    return path


def _version() -> str:
    from eulerlab import __version__
    return __version__


def run_and_write(cfg: ExperimentConfig, directory: str | None = None, workers: int | None = None):
    """Sweep, diagnostics and all CSV outputs under ``directory``."""
    out = directory or cfg.directory
    os.makedirs(out, exist_ok=True)
    table, runs = run_sweep(cfg, workers)
    table.write(os.path.join(out, "convergence.csv"))
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(cfg.to_ini())
    diags = []
    if sum(r.trajectory is not None for r in runs.values()) >= 2:
        diags = limit_momentum_diagnostics(cfg, runs)
        write_diagnostics(os.path.join(out, "diagnostics.csv"), diags)
    for eps, run in runs.items():
        if run.trajectory is None:
            continue
        sub = os.path.join(out, f"eps_{eps:g}")
        os.makedirs(sub, exist_ok=True)
        with open(os.path.join(sub, "rel_energy.csv"), "w", newline="") as fh:
            fh.write("# relative energy v1\n")
            wr = csv.writer(fh)
            wr.writerow(["t", "rel_energy", "D"])
            for row in zip(run.trajectory.times, run.rel_energy, run.defect):
                wr.writerow([repr(float(v)) for v in row])
        run.slack.write(os.path.join(sub, "inequality_terms.csv"))
    write_manifest(out, cfg, {"epsilons": list(cfg.epsilons)})
    return table, runs, diags
