"""Relative energy of a state with respect to a smooth reference.

For a state (rho, E_int, m) and reference (r, Theta, U)::

    E_eps,Z = 1/2 rho |m/rho - U|^2
              + eps^-2 [E_int - Theta rho Z(s) - dH/drho(r, Theta) (rho - r) - H(r, Theta)]

with the ballistic free energy H_Theta(rho, theta) = rho e - Theta rho s.
``Z = None`` means the identity (the untruncated functional).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from eulerlab.thermo import RHO_FLOOR, CutoffSpec, GasParams


def ballistic_free_energy(rho, theta, Theta_ref, gas: GasParams = GasParams()):
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(rho <= 0) or np.any(theta <= 0) or np.any(np.asarray(Theta_ref) <= 0):
        raise ValueError("ballistic free energy needs rho, theta, Theta > 0")
    s = gas.c_v * np.log(theta) - np.log(rho)
    return rho * gas.c_v * theta - Theta_ref * rho * s


def ballistic_free_energy_drho(r, Theta, gas: GasParams = GasParams()):
    """d/drho H_Theta(rho, Theta) at rho = r (temperature held at Theta)."""
    r = np.asarray(r, dtype=float)
    Theta = np.asarray(Theta, dtype=float)
    return Theta * (gas.c_v + 1.0 - gas.c_v * np.log(Theta) + np.log(r))


def _rho_Z(rho, E_int, cutoff, gas):
    """rho * Z(s(rho, E_int)) with its vacuum limit 0."""
    vac = rho < RHO_FLOOR
    r = np.where(vac, 1.0, rho)
    E = np.where(vac | (E_int <= 0), 1.0, E_int)
    s = gas.c_v * np.log(E / (gas.c_v * r)) - np.log(r)
    if np.any(~vac & (E_int <= 0)):
        raise ValueError("non-vacuum state with non-positive internal energy")
    Z = s if cutoff is None else cutoff(s)
    return np.where(vac, 0.0, rho * Z)


def _parts(rho, E_int, m, r, Theta, U, epsilon, cutoff, gas):
    rho = np.asarray(rho, dtype=float)
    E_int = np.asarray(E_int, dtype=float)
    m = np.asarray(m, dtype=float)
    U = np.asarray(U, dtype=float)
    vac = rho < RHO_FLOOR
    safe = np.where(vac, 1.0, rho)
    w = np.where(vac, 0.0, m / safe - U)
    kin = np.where(vac, 0.0, 0.5 * rho * np.sum(w**2, axis=0))
    H = ballistic_free_energy(r, Theta, Theta, gas)
    dH = ballistic_free_energy_drho(r, Theta, gas)
    internal = (E_int - Theta * _rho_Z(rho, E_int, cutoff, gas) - dH * (rho - r) - H) / epsilon**2
    return kin, internal, vac


def rel_energy_density(rho, E_int, m, r, Theta, U, epsilon=1.0, cutoff: CutoffSpec | None = None,
                       gas: GasParams = GasParams()):
    """Pointwise relative energy; ``m`` and ``U`` carry the component axis first."""
    kin, internal, _ = _parts(rho, E_int, m, r, Theta, U, epsilon, cutoff, gas)
    return kin + internal


@dataclass(frozen=True)
class EssResSplit:
    """Essential/residual partition of unity Psi(rho, E_int).

    Psi is the product of C^2 plateau bumps in rho and theta = E_int/(c_v rho):
    1 on the rectangle K = [rho_lo, rho_hi] x [theta_lo, theta_hi], 0 once a
    variable leaves K enlarged by ``margin`` (relative) on either side.
    """

    rho_lo: float
    rho_hi: float
    theta_lo: float
    theta_hi: float
    margin: float = 0.25

    def __post_init__(self):
        if not (0 < self.rho_lo < self.rho_hi and 0 < self.theta_lo < self.theta_hi):
            raise ValueError("K must be a non-degenerate rectangle in (0, inf)^2")
        if not 0 < self.margin < 1:
            raise ValueError("margin must lie in (0, 1)")

    @classmethod
    def for_static(cls, static, margin=0.25) -> "EssResSplit":
        """Default K around all points (rho_s(z), Theta_bar), z in [0, 1]."""
        lo = float(static.rho(1.0))
        hi = float(static.rho(0.0))
        return cls(lo / 2, 2 * hi, static.Theta_bar / 2, 2 * static.Theta_bar, margin)

    @staticmethod
    def _plateau(x, lo, hi, margin):
        def ramp(t):
            t = np.clip(t, 0.0, 1.0)
            return t**3 * (10 - 15 * t + 6 * t**2)

        up = ramp((x - lo * (1 - margin)) / (lo * margin))
        down = ramp(((1 + margin) * hi - x) / (hi * margin))
        return up * down

    def psi(self, rho, E_int, gas: GasParams = GasParams()):
        rho = np.asarray(rho, dtype=float)
        E_int = np.asarray(E_int, dtype=float)
        pos = rho > RHO_FLOOR
        theta = np.where(pos, E_int / (gas.c_v * np.where(pos, rho, 1.0)), 0.0)
        out = self._plateau(rho, self.rho_lo, self.rho_hi, self.margin) * \
            self._plateau(theta, self.theta_lo, self.theta_hi, self.margin)
        return np.where(pos, out, 0.0)


def ess_res_split(G, rho, E_int, split: EssResSplit, gas: GasParams = GasParams()):
    """(Psi G, (1 - Psi) G) for an observable G evaluated on the same states."""
    G = np.asarray(G, dtype=float)
    psi = split.psi(rho, E_int, gas)
    ess = psi * G
    return ess, G - ess


@dataclass
class RelEnergyReport:
    total: float
    kinetic: float
    internal: float
    ess: float
    res: float
    density: np.ndarray
    vacuum_cells: int = 0

    @property
    def certifiable(self) -> bool:
        return self.vacuum_cells == 0

    def row(self, t: float) -> list:
        return [t, self.total, self.kinetic, self.internal, self.ess, self.res]


REPORT_COLUMNS = ["t", "total", "kinetic", "internal", "ess", "res"]


def write_reports(path, times, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for t, rep in zip(times, reports):
            w.writerow([repr(float(v)) for v in rep.row(t)])


def _atoms(Y, k):
    """Normalise a state, trajectory or atomic measure to [(weight, rho, E_int, m)]."""
    if hasattr(Y, "atoms"):
        return [(lam, a.rho[k], a.E_int[k], a.m[k]) for lam, a in zip(Y.weights, Y.atoms)]
    if hasattr(Y, "times"):
        return [(1.0, Y.rho[k], Y.E_int[k], Y.m[k])]
    if hasattr(Y, "E") and hasattr(Y, "epsilon"):
        return [(1.0, Y.rho, Y.E_int, Y.m)]
    rho, E_int, m = Y
    return [(1.0, np.asarray(rho, float), np.asarray(E_int, float), np.asarray(m, float))]


def rel_energy_integral(Y, r, Theta, U, weights, epsilon=1.0, cutoff: CutoffSpec | None = None,
                        gas: GasParams = GasParams(), split: EssResSplit | None = None,
                        k: int = 0) -> RelEnergyReport:
    """Quadrature of <Y; E_eps,Z> against spatial ``weights`` (cell volumes).

    ``Y`` may be a (rho, E_int, m) tuple, a solver FieldState, a Trajectory
    (snapshot ``k``) or an atomic Young measure (snapshot ``k``).  Vacuum
    cells contribute by the m = 0 convention and are counted.
    """
    weights = np.asarray(weights, dtype=float)
    kin_t = 0.0
    int_t = 0.0
    ess_t = 0.0
    dens = 0.0
    vac_count = 0
    for lam, rho, E_int, m in _atoms(Y, k):
        if rho.shape != np.broadcast_shapes(rho.shape, np.shape(r)) or m.shape[1:] != rho.shape:
            raise ValueError("state and reference grids do not match")
        kin, internal, vac = _parts(rho, E_int, m, r, Theta, U, epsilon, cutoff, gas)
        d = kin + internal
        kin_t += lam * float(np.sum(kin * weights))
        int_t += lam * float(np.sum(internal * weights))
        if split is not None:
            ess_t += lam * float(np.sum(split.psi(rho, E_int, gas) * d * weights))
        dens = dens + lam * d
        vac_count += int(np.sum(vac))
    total = kin_t + int_t
    if split is None:
        ess_t = total
    return RelEnergyReport(total, kin_t, int_t, ess_t, total - ess_t, np.asarray(dens), vac_count)


def coercivity_check(rho, E_int, m, static, z, epsilon=1.0, split: EssResSplit | None = None,
                     gas: GasParams = GasParams()):
    """Pointwise (lhs, rhs, ratio) of the coercivity estimate around (rho_s, Theta_bar, 0).

    lhs is the untruncated relative energy with U = 0; rhs is
    |m|^2/rho + eps^-2 ([rho - rho_s]^2 + [E_int - c_v rho_s Theta]^2)_ess
    + eps^-2 [1 + rho + rho |s| + E_int]_res.  ``ratio`` is NaN where rhs = 0.
    """
    rho = np.asarray(rho, dtype=float)
    E_int = np.asarray(E_int, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(rho <= 0) or np.any(E_int <= 0):
        raise ValueError("coercivity scan needs rho > 0 and E_int > 0")
    split = split or EssResSplit.for_static(static)
    rho_s = static.rho(z)
    Tb = static.Theta_bar
    zero_U = np.zeros_like(m)
    lhs = rel_energy_density(rho, E_int, m, rho_s, Tb, zero_U, epsilon, None, gas)
    psi = split.psi(rho, E_int, gas)
    s = gas.c_v * np.log(E_int / (gas.c_v * rho)) - np.log(rho)
    ess = (rho - rho_s) ** 2 + (E_int - gas.c_v * rho_s * Tb) ** 2
    res = 1.0 + rho + rho * np.abs(s) + E_int
    rhs = np.sum(m**2, axis=0) / rho + (psi * ess + (1 - psi) * res) / epsilon**2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.nan)
    return lhs, rhs, ratio
