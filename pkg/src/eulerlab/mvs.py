"""Atomic Young measures and the computable checks of dissipative
measure-valued solutions.

A measure Y = sum_i lambda_i delta_{atom_i} is stored as a list of
trajectories sharing one grid and one snapshot cadence.  Every expectation
<Y; g> is the weighted sum of g over the atoms; nothing is re-interpolated.
The concentration measure mu_R is represented by a grid density (K, N, N,
*S) that is piecewise linear in time, plus a scalar for unresolved mass.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from eulerlab.mesh import PotentialField
from eulerlab.reference import ReferenceTriple
from eulerlab.relative_energy import _rho_Z, rel_energy_density
from eulerlab.testfunctions import TestFunctionBasis, WeakQuadrature
from eulerlab.thermo import RHO_FLOOR, CutoffSpec, GasParams
from eulerlab.trajectory import Trajectory
from eulerlab.verifier import TAU_R, ResidualReport, _evaluate, _report, _sup

WEIGHT_TOL = 1e-15
DEFECT_TOL = 1e-10


@dataclass
class AtomicYoungMeasure:
    atoms: list
    weights: np.ndarray

    def __post_init__(self):
        self.atoms = list(self.atoms)
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.atoms) == 0 or len(self.atoms) != len(self.weights):
            raise ValueError("need one positive weight per atom")
        if np.any(self.weights <= 0):
            raise ValueError("atom weights must be positive")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_TOL * len(self.weights):
            raise ValueError(f"weights sum to {math.fsum(self.weights)!r}, not 1")
        ref = self.atoms[0]
        for i, a in enumerate(self.atoms):
            if a.axes != ref.axes or a.rho.shape != ref.rho.shape:
                raise ValueError(f"atom {i} lives on a different grid")
            if not np.array_equal(a.times, ref.times):
                raise ValueError(f"atom {i} has misaligned snapshots")
            if a.epsilon != ref.epsilon:
                raise ValueError(f"atom {i} has a different epsilon")
            if np.any(a.rho < 0) or np.any(a.E_int < 0):
                raise ValueError(f"atom {i} leaves the phase space (rho >= 0, E_int >= 0)")

    @classmethod
    def dirac(cls, traj: Trajectory) -> "AtomicYoungMeasure":
        return cls([traj], [1.0])

    @property
    def times(self) -> np.ndarray:
        return self.atoms[0].times

    @property
    def axes(self) -> tuple:
        return self.atoms[0].axes

    @property
    def epsilon(self) -> float:
        return self.atoms[0].epsilon

    @property
    def T(self) -> float:
        return self.atoms[0].T

    @property
    def ndim(self) -> int:
        return self.atoms[0].ndim

    def cell_weights(self) -> np.ndarray:
        return self.atoms[0].cell_weights()

    def mean_trajectory(self) -> Trajectory:
        """Trajectory of the first moments <rho>, <m>, <E_int>."""
        a0 = self.atoms[0]
        return Trajectory(a0.times, moment(self, lambda r, m, e: r), moment(self, lambda r, m, e: m),
                          moment(self, lambda r, m, e: e), a0.axes, a0.epsilon)

    def merged(self) -> "AtomicYoungMeasure":
        """Combine bit-identical atoms, adding their weights."""
        atoms, weights = [], []
        for a, w in zip(self.atoms, self.weights):
            for j, b in enumerate(atoms):
                if (np.array_equal(a.rho, b.rho) and np.array_equal(a.m, b.m)
                        and np.array_equal(a.E_int, b.E_int)):
                    weights[j] += w
                    break
            else:
                atoms.append(a)
                weights.append(float(w))
        return AtomicYoungMeasure(atoms, weights)


def moment(Y: AtomicYoungMeasure, g) -> np.ndarray:
    """<Y; g> with ``g(rho, m, E_int)`` applied to whole atom trajectories."""
    out = 0.0
    for i, (a, lam) in enumerate(zip(Y.atoms, Y.weights)):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.asarray(g(a.rho, a.m, a.E_int), dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"observable is undefined on atom {i}")
        out = out + lam * v
    return out


def kinetic_observable(rho, m, E_int):
    """|m|^2 / rho with the vacuum convention 0 (needs m = 0 there)."""
    vac = rho < RHO_FLOOR
    if np.any(vac & np.any(m != 0, axis=1)):
        return np.full(rho.shape, np.nan)
    return np.where(vac, 0.0, np.sum(m**2, axis=1) / np.where(vac, 1.0, rho))


def _flux_tensor(rho, m):
    """m (x) m / rho, shape (K, N, N, *S), zero on vacuum."""
    vac = rho < RHO_FLOOR
    safe = np.where(vac, 1.0, rho)
    u = np.where(vac[:, None], 0.0, m / safe[:, None])
    return m[:, :, None] * u[:, None, :]


def _initial_moments(Y, initial):
    src = Y if initial is None else initial
    return (moment(src, lambda r, m, e: r[0]), moment(src, lambda r, m, e: m[0]),
            moment(src, lambda r, m, e: e[0]))


def _basis(Y, basis, **kw):
    if basis is None:
        return TestFunctionBasis.default(Y.axes, Y.T, **kw)
    if not np.isclose(basis.T, Y.T):
        raise ValueError(f"basis horizon {basis.T} differs from measure horizon {Y.T}")
    return basis


def check_continuity(Y: AtomicYoungMeasure, initial: AtomicYoungMeasure | None = None,
                     basis: TestFunctionBasis | None = None, tol: float = TAU_R) -> ResidualReport:
    """int int [<rho> d_t phi + <m> . grad phi] + int <Y_0; rho> phi(0)."""
    basis = _basis(Y, basis)
    quad = WeakQuadrature(Y.times, Y.axes)
    rho = moment(Y, lambda r, m, e: r)
    mom = moment(Y, lambda r, m, e: m)
    rho0, _, _ = _initial_moments(Y, initial)

    def terms(c):
        return rho, [(j, mom[:, j]) for j in range(Y.ndim)], None, rho0

    res, norms, ids = _evaluate(quad, basis, terms)
    return _report("mv-continuity", Y.atoms[0], res, norms, ids, _sup(rho, mom), tol)


def atom_reports(Y: AtomicYoungMeasure, check, *args, **kwargs) -> list:
    """Run a linear check on each atom as a Dirac; weighted raw residuals sum to the mixture's."""
    return [check(AtomicYoungMeasure.dirac(a), *args, **kwargs) for a in Y.atoms]


@dataclass
class ConcentrationMeasure:
    """Tensor-valued density mu[k, i, j, *S] plus an unresolved-mass ledger."""

    density: np.ndarray
    unresolved_mass: float = 0.0

    @classmethod
    def zero(cls, Y: AtomicYoungMeasure) -> "ConcentrationMeasure":
        K = len(Y.times)
        N = Y.ndim
        return cls(np.zeros((K, N, N) + Y.atoms[0].shape))

    def total_variation(self, times, cell_weights, upto: int | None = None) -> float:
        """int_0^{t_upto} int |mu| (Frobenius) dx dt by trapezoid, plus unresolved mass."""
        nd = cell_weights.ndim
        pointwise = np.sqrt(np.sum(self.density**2, axis=(1, 2)))
        per_t = np.tensordot(pointwise, cell_weights, axes=nd)
        k = len(times) - 1 if upto is None else upto
        if k <= 0:
            return float(self.unresolved_mass)
        dt = np.diff(times[: k + 1])
        return float(np.sum(0.5 * dt * (per_t[:k] + per_t[1: k + 1])) + self.unresolved_mass)

    def __add__(self, other: "ConcentrationMeasure") -> "ConcentrationMeasure":
        return ConcentrationMeasure(self.density + other.density,
                                    self.unresolved_mass + other.unresolved_mass)


def _momentum_terms(Y, gas, potential):
    N = Y.ndim
    eps2 = Y.epsilon**2
    mom = moment(Y, lambda r, m, e: m)
    conv = moment(Y, lambda r, m, e: _flux_tensor(r, m))
    P = moment(Y, lambda r, m, e: e / gas.c_v) / eps2
    rho = moment(Y, lambda r, m, e: r)
    gradPhi = potential.grad(N)
    return mom, conv, P, rho, gradPhi


def momentum_defect_operator(Y: AtomicYoungMeasure, basis: TestFunctionBasis) -> np.ndarray:
    """Matrix G with G @ mu.ravel() = int int grad phi : mu for every basis element."""
    quad = WeakQuadrature(Y.times, Y.axes)
    K = len(Y.times)
    N = Y.ndim
    S = Y.atoms[0].shape
    rows = []
    for fam in basis.families:
        A, _, _ = quad.time_matrices(fam)
        B, dB = quad.space_matrices(fam)
        c = fam.component
        for idx in np.ndindex(*fam.shape):
            row = np.zeros((K, N, N) + S)
            for j in range(N):
                spat = None
                for d in range(N):
                    v = (dB if d == j else B)[d][idx[1 + d]]
                    spat = v if spat is None else np.multiply.outer(spat, v)
                row[:, c, j] = np.multiply.outer(A[idx[0]], spat)
            rows.append(row.ravel())
    return np.array(rows)


def check_momentum(Y: AtomicYoungMeasure, mu_R: ConcentrationMeasure | None = None,
                   initial: AtomicYoungMeasure | None = None,
                   potential: PotentialField = PotentialField(0.0),
                   basis: TestFunctionBasis | None = None, gas: GasParams = GasParams(),
                   tol: float = TAU_R, solve: bool = False):
    """Residuals of the measure-valued momentum balance.

    Returns (report, mu_R).  With ``solve=True`` the density of mu_R is
    replaced by the minimum-norm least-squares choice that zeroes the
    residual on the basis, G^T (G G^T)^+ (-r0).
    """
    basis = _basis(Y, basis, vector=True)
    quad = WeakQuadrature(Y.times, Y.axes)
    N = Y.ndim
    eps2 = Y.epsilon**2
    mom, conv, P, rho, gradPhi = _momentum_terms(Y, gas, potential)
    _, m0, _ = _initial_moments(Y, initial)
    mu_R = mu_R or ConcentrationMeasure.zero(Y)

    def evaluate(mu):
        def terms(c):
            fluxes = [(j, conv[:, c, j] + mu[:, c, j] + (P if j == c else 0.0)) for j in range(N)]
            S = rho * gradPhi[c] / eps2 if gradPhi[c] != 0 else None
            return mom[:, c], fluxes, S, m0[c]
        return _evaluate(quad, basis, terms)

    res, norms, ids = evaluate(mu_R.density)
    if solve:
        G = momentum_defect_operator(Y, basis)
        r0, _, _ = evaluate(np.zeros_like(mu_R.density))
        y, *_ = np.linalg.lstsq(G @ G.T, -r0, rcond=None)
        mu_R = ConcentrationMeasure((G.T @ y).reshape(mu_R.density.shape), mu_R.unresolved_mass)
        res, norms, ids = evaluate(mu_R.density)
    scale = _sup(mom, conv, P, rho * np.max(np.abs(gradPhi)) / eps2)
    rep = _report("mv-momentum", Y.atoms[0], res, norms, ids, scale, tol)
    if solve:
        rep.notes.append("mu_R reconstructed by least squares over the basis functionals")
    return rep, mu_R


def check_entropy(Y: AtomicYoungMeasure, initial: AtomicYoungMeasure | None = None,
                  basis: TestFunctionBasis | None = None, cutoffs=(None,),
                  gas: GasParams = GasParams(), tol: float = TAU_R) -> ResidualReport:
    """Signed slacks of the measure-valued entropy inequality per (phi >= 0, Z)."""
    basis = _basis(Y, basis, nonneg=True)
    if not basis.is_nonneg():
        raise ValueError("the entropy inequality needs nonnegative test functions")
    quad = WeakQuadrature(Y.times, Y.axes)
    N = Y.ndim
    src0 = Y if initial is None else initial
    all_res, all_norm, all_ids = [], [], []
    scale = 0.0
    for Zspec in cutoffs:
        rZ = moment(Y, lambda r, m, e: _rho_Z(r, e, Zspec, gas))
        q = moment(Y, lambda r, m, e: _Z_m(r, m, e, Zspec, gas))
        rZ0 = moment(src0, lambda r, m, e: _rho_Z(r[0], e[0], Zspec, gas))

        def terms(c, rZ=rZ, q=q, rZ0=rZ0):
            return rZ, [(j, q[:, j]) for j in range(N)], None, rZ0

        res, norms, ids = _evaluate(quad, basis, terms)
        label = "Z=s" if Zspec is None else f"Z(s0={Zspec.s0:g},beta={Zspec.beta:g})"
        all_res.append(res)
        all_norm.append(norms)
        all_ids += [f"{label}|{i}" for i in ids]
        scale = max(scale, _sup(rZ, q))
    return _report("mv-entropy", Y.atoms[0], np.concatenate(all_res), np.concatenate(all_norm),
                   all_ids, scale, tol, inequality=True, sign=-1.0)


def _Z_m(rho, m, E_int, Zspec, gas):
    """Z(s) m, zero where rho vanishes (m = 0 there)."""
    vac = rho < RHO_FLOOR
    safe = np.where(vac, 1.0, rho)
    rZ = _rho_Z(rho, E_int, Zspec, gas)
    return np.where(vac[:, None], 0.0, (rZ / safe)[:, None] * m)


@dataclass
class DefectReport:
    """Dissipation defect D(t) and the domination verdict for mu_R."""

    times: np.ndarray
    D: np.ndarray
    energy: np.ndarray
    work: np.ndarray
    tol: float
    clipped: int = 0
    hard_fail: bool = False
    mu_tv: np.ndarray | None = None
    c_min: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.hard_fail

    @property
    def dominated(self) -> bool:
        return np.isfinite(self.c_min)

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# dissipation defect v1\n")
            w = csv.writer(fh)
            w.writerow(["t", "D", "energy", "work", "mu_tv"])
            tv = self.mu_tv if self.mu_tv is not None else np.zeros_like(self.D)
            for row in zip(self.times, self.D, self.energy, self.work, tv):
                w.writerow([repr(float(v)) for v in row])


def _cumtrapz(times, values):
    out = np.zeros(len(times))
    if len(times) > 1:
        out[1:] = np.cumsum(0.5 * np.diff(times) * (values[1:] + values[:-1]))
    return out


def check_energy_and_defect(Y: AtomicYoungMeasure, potential: PotentialField = PotentialField(0.0),
                            mu_R: ConcentrationMeasure | None = None, tol: float = DEFECT_TOL,
                            work: str = "potential") -> DefectReport:
    """D(tau) = E(0) - E(tau) + int_0^tau int <m> . grad Phi / eps^2, energies scaled.

    ``work="potential"`` evaluates the work term as the change of
    int <rho> Phi, which equals it for any measure obeying the continuity
    balance and matches a conservative scheme's ledger exactly;
    ``work="flux"`` integrates <m> . grad Phi by trapezoid.
    The tolerance is relative to max(1, |E(0)|).
    """
    eps2 = Y.epsilon**2
    w = Y.cell_weights()
    nd = Y.ndim
    kin = moment(Y, kinetic_observable)
    Eint = moment(Y, lambda r, m, e: e)
    energy = np.tensordot(0.5 * kin + Eint / eps2, w, axes=nd)
    if work == "potential":
        z = Y.axes[-1].points()
        Phi = potential.values(z)
        rho = moment(Y, lambda r, m, e: r)
        pot = np.tensordot(rho * Phi, w, axes=nd) / eps2
        work_t = pot - pot[0]
    elif work == "flux":
        gradPhi = potential.grad(nd)
        mom = moment(Y, lambda r, m, e: m)
        power = np.tensordot(np.tensordot(gradPhi, mom, axes=([0], [1])), w, axes=nd) / eps2
        work_t = _cumtrapz(Y.times, power)
    else:
        raise ValueError(f"unknown work mode {work!r}")
    D = energy[0] - energy + work_t
    abs_tol = tol * max(1.0, abs(float(energy[0])))
    roundoff = 64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(energy))))
    D = np.where((D < 0) & (D >= -roundoff), 0.0, D)
    rep = DefectReport(Y.times, D, energy, work_t, abs_tol)
    small = (D < 0) & (D >= -abs_tol)
    if np.any(D < -abs_tol):
        rep.hard_fail = True
        rep.notes.append(f"negative defect {float(np.min(D)):.3e} below -{abs_tol:.1e}")
    if np.any(small):
        rep.clipped = int(np.sum(small))
        warnings.warn(f"clipped {rep.clipped} slightly negative defect values to 0")
        rep.D = np.where(small, 0.0, D)
    mu_R = mu_R or ConcentrationMeasure.zero(Y)
    tv = np.array([mu_R.total_variation(Y.times, w, k) for k in range(len(Y.times))])
    rep.mu_tv = tv
    intD = _cumtrapz(Y.times, np.maximum(rep.D, 0.0))
    c = 0.0
    for a, b in zip(tv[1:], intD[1:]):
        if a <= 0:
            continue
        if b <= 0:
            c = math.inf
            break
        c = max(c, a / b)
    rep.c_min = c
    if not np.isfinite(c):
        rep.notes.append("mu_R is nonzero where the integrated defect vanishes: no finite c")
    return rep


def support_constant(s0: float, gas: GasParams = GasParams()) -> float:
    """c(s0) with s >= s0  <=>  rho^(1 + 1/c_v) <= c(s0) E_int."""
    if s0 == -math.inf:
        return math.inf
    return math.exp(-s0 / gas.c_v) / gas.c_v


@dataclass
class SupportReport:
    s0: float
    constant: float
    violations: list
    worst: float

    @property
    def passed(self) -> bool:
        return not self.violations


def entropy_support_check(Y: AtomicYoungMeasure, s0: float, gas: GasParams = GasParams(),
                          rtol: float = 1e-12) -> SupportReport:
    """Check rho^(1+1/c_v) <= c(s0) E_int on every atom; violations as (atom, k, index)."""
    c = support_constant(s0, gas)
    viol = []
    worst = -math.inf
    for i, a in enumerate(Y.atoms):
        lhs = a.rho ** (1.0 + 1.0 / gas.c_v)
        if math.isinf(c):
            continue
        rhs = c * a.E_int
        gap = lhs - rhs * (1 + rtol)
        worst = max(worst, float(np.max(lhs - rhs)))
        for idx in zip(*np.nonzero(gap > 0)):
            viol.append((i, int(idx[0]), tuple(int(v) for v in idx[1:])))
    return SupportReport(s0, c, viol, worst)


RHS_TERMS = ("entropy_transport", "reference_entropy", "momentum", "pressure_work",
             "potential", "concentration")


@dataclass
class RelEnergySlack:
    """LHS and RHS of the relative energy inequality at each snapshot."""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    terms: dict
    energy: np.ndarray
    tol: float
    notes: list = field(default_factory=list)

    @property
    def slack(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return bool(np.all(self.slack <= self.tol))

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# relative energy inequality v1\n")
            w = csv.writer(fh)
            w.writerow(["t", "rel_energy", "lhs", "rhs", "slack"] + list(RHS_TERMS))
            for k, t in enumerate(self.times):
                w.writerow([repr(float(v)) for v in
                            [t, self.energy[k], self.lhs[k], self.rhs[k], self.slack[k]]
                            + [self.terms[n][k] for n in RHS_TERMS]])


def rel_energy_inequality_slack(Y: AtomicYoungMeasure, D, mu_R: ConcentrationMeasure | None,
                                ref: ReferenceTriple, cutoff: CutoffSpec | None = None,
                                gas: GasParams = GasParams(),
                                potential: PotentialField = PotentialField(0.0),
                                tol: float = 1e-8) -> RelEnergySlack:
    """Evaluate [int <E_eps,Z>]_0^tau + D(tau) and the right-hand side integrals.

    ``D`` is a DefectReport or an array over the snapshot times.  Time
    integrals use the trapezoid rule on the snapshots; if halving the
    cadence moves the right-hand side by more than 1% of its size the
    result carries a cadence note.
    """
    if len(ref.times) != len(Y.times) or not np.allclose(ref.times, Y.times):
        raise ValueError("reference and measure must share snapshot times")
    eps2 = Y.epsilon**2
    nd = Y.ndim
    w = Y.cell_weights()
    Dv = np.asarray(D.D if isinstance(D, DefectReport) else D, dtype=float)
    r, Th, U = ref.r, ref.Theta, ref.U
    s_ref = ref.entropy(gas)
    gradPhi = potential.grad(nd)

    def per_atom(rho, m, e):
        vac = rho < RHO_FLOOR
        safe = np.where(vac, 1.0, rho)
        u = np.where(vac[:, None], 0.0, m / safe[:, None])
        rZ = _rho_Z(rho, e, cutoff, gas)
        Zm = np.where(vac[:, None], 0.0, (rZ / safe)[:, None] * m)
        p = e / gas.c_v
        t1 = -(rZ * ref.dt_Theta + np.sum(Zm * ref.grad_Theta, axis=1)) / eps2
        t2 = (rho * s_ref * ref.dt_Theta + np.sum(m * ref.grad_Theta, axis=1) * s_ref) / eps2
        d = rho[:, None] * U - m
        t3 = (np.sum(d * ref.dt_U, axis=1)
              + np.einsum("ki...,kj...,kij...->k...", d, u, ref.grad_U)
              - p * ref.div_U() / eps2)
        t4 = ((r - rho) / r * ref.dt_pressure()
              - np.sum(m * ref.grad_pressure(), axis=1) / r) / eps2
        t5 = np.tensordot(gradPhi, m - rho[:, None] * U, axes=([0], [1])) / eps2
        dens = np.array([rel_energy_density(rho[k], e[k], m[k], r[k], Th[k], U[k],
                                            Y.epsilon, cutoff, gas) for k in range(len(rho))])
        return np.stack([t1, t2, t3, t4, t5, dens])

    acc = moment(Y, per_atom)
    integrated = np.tensordot(acc, w, axes=nd)  # (6, K)
    mu = mu_R.density if mu_R is not None else None
    if mu is not None:
        t6 = -np.tensordot(np.einsum("kij...,kij...->k...", ref.grad_U, mu), w, axes=nd)
    else:
        t6 = np.zeros(len(Y.times))
    rates = list(integrated[:5]) + [t6]
    terms = {n: _cumtrapz(Y.times, v) for n, v in zip(RHS_TERMS, rates)}
    rhs = sum(terms.values())
    energy = integrated[5]
    lhs = energy - energy[0] + Dv
    out = RelEnergySlack(Y.times, lhs, rhs, terms, energy, tol)
    K = len(Y.times)
    if K >= 5 and K % 2 == 1:
        coarse = sum(_cumtrapz(Y.times[::2], v[::2])[-1] for v in rates)
        size = max(abs(rhs[-1]), float(np.max(np.abs(lhs))), 1e-300)
        if abs(coarse - rhs[-1]) > 0.01 * size:
            out.notes.append("snapshot cadence too coarse for the time integrals")
    elif K < 5:
        out.notes.append("fewer than 5 snapshots: cadence not assessed")
    return out


def write_manifest(Y: AtomicYoungMeasure, directory) -> str:
    """Save each atom as a snapshot directory and list them with weights."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, (a, lam) in enumerate(zip(Y.atoms, Y.weights)):
        name = f"atom_{i:03d}"
        a.save(os.path.join(directory, name))
        entries.append({"path": name, "weight": float(lam)})
    path = os.path.join(directory, "measure.json")
    with open(path, "w") as fh:
        json.dump({"format": "eulerlab-measure v1", "atoms": entries}, fh, indent=2)
    return path


def load_manifest(path) -> AtomicYoungMeasure:
    """Read a measure manifest (file, or directory holding measure.json)."""
    if os.path.isdir(path):
        path = os.path.join(path, "measure.json")
    base = os.path.dirname(path)
    with open(path) as fh:
        spec = json.load(fh)
    atoms = [Trajectory.load(os.path.join(base, e["path"])) for e in spec["atoms"]]
    return AtomicYoungMeasure(atoms, [e["weight"] for e in spec["atoms"]])
