"""Weak-form residuals of the Euler system on a finite test-function basis.

Every check integrates a trajectory against the tensor-product basis of
:mod:`eulerlab.testfunctions` and reports raw and normalized residuals,
where the normalization is ||phi||_C1 * T * |Omega| * (largest sup norm of
the fields entering the identity).  A PASS only means the identity was not
falsified on the basis; the basis is finite.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from eulerlab.mesh import PotentialField
from eulerlab.testfunctions import TestFunctionBasis, WeakQuadrature
from eulerlab.thermo import RHO_FLOOR, GasParams
from eulerlab.trajectory import Trajectory

QUADRATURE_FLOOR = 1e-10
TAU_R = 10 * QUADRATURE_FLOOR


@dataclass
class ResidualReport:
    equation: str
    ids: list
    residuals: np.ndarray
    normalized: np.ndarray
    tol: float
    inequality: bool = False
    scale: float = 1.0
    notes: list = field(default_factory=list)

    @property
    def verdicts(self) -> np.ndarray:
        if self.inequality:
            return self.normalized >= -self.tol
        return np.abs(self.normalized) <= self.tol

    @property
    def passed(self) -> bool:
        return bool(np.all(self.verdicts))

    @property
    def max_normalized(self) -> float:
        return float(np.max(np.abs(self.normalized))) if len(self.normalized) else 0.0

    @property
    def min_normalized(self) -> float:
        return float(np.min(self.normalized)) if len(self.normalized) else 0.0

    def failures(self) -> list:
        return [i for i, ok in zip(self.ids, self.verdicts) if not ok]

    def rows(self):
        for i, r, n, ok in zip(self.ids, self.residuals, self.normalized, self.verdicts):
            yield [self.equation, i, repr(float(r)), repr(float(n)), "PASS" if ok else "FAIL"]

    def summary(self) -> str:
        stat = f"min slack {self.min_normalized:.3e}" if self.inequality else \
            f"max normalized {self.max_normalized:.3e}"
        n = len(self.ids)
        if self.passed:
            return f"{self.equation}: PASS ({stat}, tol {self.tol:.1e}, {n} tests; " \
                   "not falsified on a finite basis)"
        return f"{self.equation}: FAIL ({stat}, tol {self.tol:.1e}, {len(self.failures())} of {n} tests)"


def write_reports(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["equation", "test_id", "residual", "normalized", "verdict"])
        for rep in reports:
            for row in rep.rows():
                w.writerow(row)


def _sup(*arrays) -> float:
    vals = [float(np.max(np.abs(a))) for a in arrays if a is not None and np.size(a)]
    s = max(vals) if vals else 0.0
    return s if s > 0 else 1.0


def _domain_measure(axes) -> float:
    return 1.0  # unit box in every configuration


def _evaluate(quad: WeakQuadrature, basis: TestFunctionBasis, terms):
    """Sum the weak-form terms for every basis element.

    ``terms(component)`` returns (F_dt, [(j, G_j)], S, F0); any entry may
    be None.
    """
    res, norms, ids = [], [], []
    for fam in basis.families:
        F, fluxes, S, F0 = terms(fam.component)
        r = 0.0
        if F is not None:
            r = r + quad.dt_term(fam, F)
        for j, G in fluxes:
            r = r + quad.grad_term(fam, G, j)
        if S is not None:
            r = r + quad.value_term(fam, S)
        if F0 is not None:
            r = r + quad.initial_term(fam, F0)
        r = np.broadcast_to(r, fam.shape)
        res.append(np.ravel(r))
        norms.append(np.ravel(fam.c1_norms(basis.T)))
        ids += fam.ids()
    return np.concatenate(res), np.concatenate(norms), ids


def _report(name, traj, res, norms, ids, scale, tol, inequality=False, sign=1.0):
    denom = norms * traj.T * _domain_measure(traj.axes) * scale
    return ResidualReport(name, ids, sign * res, sign * res / denom, tol, inequality, scale)


def _initial(traj, initial):
    if initial is None:
        return traj.rho[0], traj.m[0], traj.E_int[0]
    rho0, m0, E0 = initial
    return np.asarray(rho0, float), np.asarray(m0, float), np.asarray(E0, float)


def _check_basis(traj, basis):
    if basis is not None and not np.isclose(basis.T, traj.T):
        raise ValueError(f"basis horizon {basis.T} differs from trajectory horizon {traj.T}")


def _safe_velocity(traj):
    vac = traj.vacuum()
    safe = np.where(vac, 1.0, traj.rho)
    return np.where(vac[:, None], 0.0, traj.m / safe[:, None]), int(np.sum(vac))


def residual_continuity(traj: Trajectory, basis: TestFunctionBasis | None = None, initial=None,
                        tol: float = TAU_R) -> ResidualReport:
    """int int [rho d_t phi + m . grad phi] + int rho0 phi(0) per basis element."""
    _check_basis(traj, basis)
    basis = basis or TestFunctionBasis.default(traj.axes, traj.T)
    quad = WeakQuadrature(traj.times, traj.axes)
    rho0, _, _ = _initial(traj, initial)
    N = traj.ndim

    def terms(c):
        return traj.rho, [(j, traj.m[:, j]) for j in range(N)], None, rho0

    res, norms, ids = _evaluate(quad, basis, terms)
    return _report("continuity", traj, res, norms, ids, _sup(traj.rho, traj.m), tol)


def residual_momentum(traj: Trajectory, potential: PotentialField = PotentialField(0.0),
                      basis: TestFunctionBasis | None = None, initial=None,
                      gas: GasParams = GasParams(), tol: float = TAU_R) -> ResidualReport:
    """int int [m . d_t phi + (m(x)m/rho) : grad phi + p/eps^2 div phi + rho grad Phi . phi / eps^2]
    + int m0 . phi(0), for vector phi (tangent to the walls by default)."""
    _check_basis(traj, basis)
    basis = basis or TestFunctionBasis.default(traj.axes, traj.T, vector=True)
    quad = WeakQuadrature(traj.times, traj.axes)
    _, m0, _ = _initial(traj, initial)
    N = traj.ndim
    eps2 = traj.epsilon**2
    u, nvac = _safe_velocity(traj)
    P = traj.pressure(gas) / eps2
    gradPhi = potential.grad(N)
    conv = traj.m[:, :, None] * u[:, None, :]  # (K, i, j, *S)

    def terms(c):
        fluxes = [(j, conv[:, c, j] + (P if j == c else 0.0)) for j in range(N)]
        S = traj.rho * gradPhi[c] / eps2 if gradPhi[c] != 0 else None
        return traj.m[:, c], fluxes, S, m0[c]

    res, norms, ids = _evaluate(quad, basis, terms)
    scale = _sup(traj.m, conv, P, traj.rho * np.max(np.abs(gradPhi)) / eps2)
    rep = _report("momentum", traj, res, norms, ids, scale, tol)
    if nvac:
        rep.notes.append(f"{nvac} vacuum samples used the m = 0 convention")
    return rep


def residual_energy(traj: Trajectory, potential: PotentialField = PotentialField(0.0),
                    basis: TestFunctionBasis | None = None, initial=None,
                    gas: GasParams = GasParams(), tol: float = TAU_R) -> ResidualReport:
    """int int [E d_t phi + (E + p/eps^2) u . grad phi + grad Phi . m phi / eps^2] + int E0 phi(0)."""
    _check_basis(traj, basis)
    basis = basis or TestFunctionBasis.default(traj.axes, traj.T)
    quad = WeakQuadrature(traj.times, traj.axes)
    rho0, m0, Ei0 = _initial(traj, initial)
    N = traj.ndim
    eps2 = traj.epsilon**2
    E = traj.energy()
    safe0 = np.where(rho0 < RHO_FLOOR, 1.0, rho0)
    E0 = np.where(rho0 < RHO_FLOOR, 0.0, 0.5 * np.sum(m0**2, axis=0) / safe0) + Ei0 / eps2
    u, nvac = _safe_velocity(traj)
    H = E + traj.pressure(gas) / eps2
    gradPhi = potential.grad(N)
    S = np.tensordot(gradPhi, traj.m, axes=([0], [1])) / eps2 if np.any(gradPhi) else None
    fluxes = [(j, H * u[:, j]) for j in range(N)]

    def terms(c):
        return E, fluxes, S, E0

    res, norms, ids = _evaluate(quad, basis, terms)
    rep = _report("energy", traj, res, norms, ids, _sup(E, *[f for _, f in fluxes], S), tol)
    if nvac:
        rep.notes.append(f"{nvac} vacuum samples: energy flux set to zero there")
    return rep


def entropy_inequality_check(traj: Trajectory, cutoffs=(None,), basis: TestFunctionBasis | None = None,
                             initial=None, gas: GasParams = GasParams(),
                             tol: float = TAU_R) -> ResidualReport:
    """Signed slacks -[int int (rho Z d_t phi + Z m . grad phi) + int rho0 Z(s0) phi(0)].

    ``cutoffs`` holds CutoffSpec objects (None = identity).  PASS iff every
    normalized slack is >= -tol.  Requires a nonnegative basis.
    """
    _check_basis(traj, basis)
    basis = basis or TestFunctionBasis.default(traj.axes, traj.T, nonneg=True)
    if not basis.is_nonneg():
        raise ValueError("the entropy inequality needs nonnegative test functions")
    quad = WeakQuadrature(traj.times, traj.axes)
    rho0, m0, Ei0 = _initial(traj, initial)
    N = traj.ndim
    if np.any(traj.vacuum()):
        raise ValueError("entropy is undefined on vacuum samples")
    s = traj.entropy(gas)
    s0 = gas.c_v * np.log(Ei0 / (gas.c_v * rho0)) - np.log(rho0)
    all_res, all_norm, all_ids = [], [], []
    scale = 0.0
    for Zspec in cutoffs:
        Z = s if Zspec is None else Zspec(s)
        Z0 = s0 if Zspec is None else Zspec(s0)
        rZ = traj.rho * Z
        q = traj.m * Z[:, None]

        def terms(c, rZ=rZ, q=q, Z0=Z0):
            return rZ, [(j, q[:, j]) for j in range(N)], None, rho0 * Z0

        res, norms, ids = _evaluate(quad, basis, terms)
        label = "Z=s" if Zspec is None else f"Z(s0={Zspec.s0:g},beta={Zspec.beta:g})"
        all_res.append(res)
        all_norm.append(norms)
        all_ids += [f"{label}|{i}" for i in ids]
        scale = max(scale, _sup(rZ, q))
    return _report("entropy", traj, np.concatenate(all_res), np.concatenate(all_norm), all_ids,
                   scale, tol, inequality=True, sign=-1.0)


def residual_constrained_incompressible(traj: Trajectory, rho: float, m0=None,
                                        basis_scalar: TestFunctionBasis | None = None,
                                        basis_vector: TestFunctionBasis | None = None,
                                        tol: float = TAU_R):
    """Residuals of the divergence constraint and the traceless momentum balance.

    The momentum identity is tested with vector fields whose normal trace
    need not vanish.  Returns (divergence report, momentum report).
    """
    if not rho > 0:
        raise ValueError("constant density must be positive")
    N = traj.ndim
    quad = WeakQuadrature(traj.times, traj.axes)
    basis_scalar = basis_scalar or TestFunctionBasis.default(traj.axes, traj.T)
    basis_vector = basis_vector or TestFunctionBasis.default(traj.axes, traj.T, vector=True,
                                                             wall_tangent=False)
    m = traj.m
    m0 = m[0] if m0 is None else np.asarray(m0, dtype=float)

    def div_terms(c):
        return None, [(j, m[:, j]) for j in range(N)], None, None

    res, norms, ids = _evaluate(quad, basis_scalar, div_terms)
    div_rep = _report("incompressible-div", traj, res, norms, ids, _sup(m), tol)

    msq = np.sum(m**2, axis=1)
    stress = m[:, :, None] * m[:, None, :] / rho
    for i in range(N):
        stress[:, i, i] -= msq / (N * rho)

    def mom_terms(c):
        return m[:, c], [(j, stress[:, c, j]) for j in range(N)], None, m0[c]

    res, norms, ids = _evaluate(quad, basis_vector, mom_terms)
    mom_rep = _report("incompressible-momentum", traj, res, norms, ids, _sup(m, stress), tol)
    return div_rep, mom_rep


def kinetic_constraint_check(m, rho: float, p: float, Lambda: float, N: int | None = None,
                             Phi=None):
    """Pointwise |1/2 |m|^2/rho - target| for the constant-kinetic-energy constraint.

    target = Lambda - N p / 2 without forcing, Lambda - p + rho Phi when the
    potential values ``Phi`` (broadcastable to the field) are given.
    """
    m = np.asarray(m, dtype=float)
    N = m.shape[0] if N is None else N
    if Phi is None:
        target = Lambda - 0.5 * N * p
    else:
        target = Lambda - p + rho * np.asarray(Phi, dtype=float)
    if np.any(np.asarray(target) <= 0):
        raise ValueError("Lambda too small: the prescribed kinetic energy is not positive")
    return np.abs(0.5 * np.sum(m**2, axis=0) / rho - target)


def cadence_estimate(check, traj: Trajectory, *args, **kwargs) -> float:
    """Time-quadrature error estimate: rerun ``check`` on every other snapshot.

    Returns the largest change in normalized residual; compare it with the
    reported residual to judge whether snapshots are dense enough.
    """
    K = len(traj.times)
    if K < 3:
        return float("nan")
    idx = list(range(0, K, 2))
    if idx[-1] != K - 1:
        idx.append(K - 1)
    full = check(traj, *args, **kwargs)
    half = check(traj.select(idx), *args, **kwargs)
    return float(np.max(np.abs(full.normalized - half.normalized)))


def verify_all(traj: Trajectory, potential: PotentialField = PotentialField(0.0),
               gas: GasParams = GasParams(), cutoffs=(None,), tol: float = TAU_R,
               entropy: bool = True) -> list:
    reports = [
        residual_continuity(traj, tol=tol),
        residual_momentum(traj, potential, gas=gas, tol=tol),
        residual_energy(traj, potential, gas=gas, tol=tol),
    ]
    if entropy:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            reports.append(entropy_inequality_check(traj, cutoffs, gas=gas, tol=tol))
    return reports
