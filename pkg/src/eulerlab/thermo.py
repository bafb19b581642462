"""Perfect-gas thermodynamics and the renormalizing entropy cutoffs.

Closure used throughout the package::

    p = rho * theta,   E_int = c_v * rho * theta,   s = c_v log(theta) - log(rho)

Vector fields carry their component axis first, so a momentum field on an
``(nx, nz)`` grid has shape ``(2, nx, nz)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RHO_FLOOR = 1e-12


@dataclass(frozen=True)
class GasParams:
    c_v: float = 1.5

    def __post_init__(self):
        if not self.c_v > 0:
            raise ValueError(f"c_v must be positive, got {self.c_v}")

    @property
    def gamma(self) -> float:
        """Adiabatic exponent 1 + 1/c_v of the perfect gas."""
        return 1.0 + 1.0 / self.c_v


def _check_nonneg(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise ValueError(f"{name} must be finite and non-negative")
    return x


def _check_pos(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(~np.isfinite(x)):
        raise ValueError(f"{name} must be finite and positive")
    return x


def pressure(rho, theta):
    rho = _check_nonneg("rho", rho)
    theta = _check_pos("theta", theta)
    return rho * theta


def internal_energy(rho, theta, gas: GasParams = GasParams()):
    rho = _check_nonneg("rho", rho)
    theta = _check_pos("theta", theta)
    return gas.c_v * rho * theta


def entropy(rho, theta, gas: GasParams = GasParams()):
    """Specific entropy; undefined (ValueError) at vacuum."""
    rho = _check_pos("rho", rho)
    theta = _check_pos("theta", theta)
    return gas.c_v * np.log(theta) - np.log(rho)


def entropy_from_energy(rho, E_int, gas: GasParams = GasParams()):
    """Specific entropy in the (rho, E_int) phase variables."""
    rho = np.asarray(rho, dtype=float)
    E_int = np.asarray(E_int, dtype=float)
    theta = E_int / (gas.c_v * rho)
    return gas.c_v * np.log(theta) - np.log(rho)


def sound_speed(theta, gas: GasParams = GasParams()):
    return np.sqrt(gas.gamma * np.asarray(theta, dtype=float))


def gibbs_residual(rho, theta, gas: GasParams = GasParams(), step=None, analytic=False):
    """Residual of theta*Ds - De - p*D(1/rho) for the perfect-gas closure.

    The one-form is tested along both coordinate directions (rho, theta)
    with central differences of step ``step`` (default
    ``1e-5 * max(1, |input|)`` per direction); the larger of the two
    component residuals is returned.  ``analytic=True`` uses the exact
    partial derivatives instead and returns 0 identically.
    """
    rho = float(_check_pos("rho", rho))
    theta = float(_check_pos("theta", theta))
    cv = gas.c_v
    if analytic:
        # theta*ds/drho = -theta/rho, de/drho = 0, p*d(1/rho)/drho = -theta/rho
        r_rho = (-theta / rho) - 0.0 - (-theta / rho)
        # theta*ds/dtheta = c_v, de/dtheta = c_v
        r_theta = cv - cv
        return max(abs(r_rho), abs(r_theta))

    if step is None:
        h_rho = 1e-5 * max(1.0, abs(rho))
        h_theta = 1e-5 * max(1.0, abs(theta))
    else:
        if not step > 0:
            raise ValueError("finite-difference step must be positive")
        h_rho = h_theta = float(step)
    if h_rho >= rho or h_theta >= theta:
        raise ValueError("finite-difference step must be small relative to the inputs")

    def s(r, t):
        return cv * np.log(t) - np.log(r)

    def e(r, t):
        return cv * t

    p = rho * theta
    ds = (s(rho + h_rho, theta) - s(rho - h_rho, theta)) / (2 * h_rho)
    de = (e(rho + h_rho, theta) - e(rho - h_rho, theta)) / (2 * h_rho)
    dv = (1.0 / (rho + h_rho) - 1.0 / (rho - h_rho)) / (2 * h_rho)
    r_rho = theta * ds - de - p * dv

    ds = (s(rho, theta + h_theta) - s(rho, theta - h_theta)) / (2 * h_theta)
    de = (e(rho, theta + h_theta) - e(rho, theta - h_theta)) / (2 * h_theta)
    r_theta = theta * ds - de
    return max(abs(r_rho), abs(r_theta))


@dataclass
class PrimitiveState:
    rho: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    vacuum: np.ndarray = field(default=None)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.vacuum is None:
            self.vacuum = self.rho < RHO_FLOOR


@dataclass
class ConservedState:
    """Density, momentum and total energy density (unscaled)."""

    rho: np.ndarray
    m: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        self.E = np.asarray(self.E, dtype=float)

    @property
    def E_kin(self):
        vac = self.rho < RHO_FLOOR
        safe = np.where(vac, 1.0, self.rho)
        return np.where(vac, 0.0, 0.5 * np.sum(self.m**2, axis=0) / safe)

    @property
    def E_int(self):
        return self.E - self.E_kin


def prim_to_cons(prim: PrimitiveState, gas: GasParams = GasParams()) -> ConservedState:
    rho = _check_nonneg("rho", prim.rho)
    vac = rho < RHO_FLOOR
    theta = np.where(vac, 1.0, prim.theta)
    _check_pos("theta", theta)
    m = np.where(vac, 0.0, rho * prim.u)
    E_int = np.where(vac, 0.0, gas.c_v * rho * theta)
    E = E_int + 0.5 * rho * np.sum(np.where(vac, 0.0, prim.u) ** 2, axis=0)
    return ConservedState(rho=rho, m=m, E=E)


def cons_to_prim(cons: ConservedState, gas: GasParams = GasParams()) -> PrimitiveState:
    """Invert to (rho, theta, u).  Vacuum cells get theta = nan and u = 0."""
    rho = _check_nonneg("rho", cons.rho)
    vac = rho < RHO_FLOOR
    if np.any(vac & np.any(cons.m != 0, axis=0)):
        raise ValueError("momentum must vanish wherever rho = 0")
    E_int = cons.E_int
    if np.any(E_int[~vac] < 0):
        raise ValueError("negative internal energy: invalid state")
    safe = np.where(vac, 1.0, rho)
    theta = np.where(vac, np.nan, E_int / (gas.c_v * safe))
    u = np.where(vac, 0.0, cons.m / safe)
    return PrimitiveState(rho=np.where(vac, 0.0, rho), theta=theta, u=u, vacuum=vac)


@dataclass(frozen=True)
class CutoffSpec:
    """Concave, non-decreasing, bounded renormalization Z of the entropy.

    Z(s) = s - shift below ``s0``; on ``[s0, s0 + beta]`` a C^2 blend
    ``s0 + beta*q((s - s0)/beta) - shift`` with ``q(t) = t - t^3 + t^4/2``;
    constant ``s0 + beta/2 - shift`` above.
    """

    s0: float = 0.0
    beta: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("cutoff band width beta must be positive")

    @classmethod
    def negative_tail(cls, s0: float, beta: float = 1.0) -> "CutoffSpec":
        """Cutoff with Z < 0 for s < s0 and Z = 0 for s >= s0."""
        return cls(s0=s0 - beta, beta=beta, shift=s0 - beta / 2)

    @property
    def z_inf(self) -> float:
        return self.s0 + 0.5 * self.beta - self.shift

    def __call__(self, s):
        return apply_cutoff(self, s)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        t = np.clip((s - self.s0) / self.beta, 0.0, 1.0)
        return 1.0 - 3 * t**2 + 2 * t**3

    def second_derivative(self, s):
        s = np.asarray(s, dtype=float)
        t = np.clip((s - self.s0) / self.beta, 0.0, 1.0)
        return (-6 * t + 6 * t**2) / self.beta

    def check(self, s_grid=None) -> bool:
        """Grid-sampled monotonicity, concavity and boundedness."""
        if s_grid is None:
            s_grid = np.linspace(self.s0 - 5 * self.beta, self.s0 + 5 * self.beta, 1000)
        z = apply_cutoff(self, s_grid)
        return bool(
            np.all(np.diff(z) >= -1e-14)
            and np.all(self.second_derivative(s_grid) <= 0)
            and np.all(z <= self.z_inf + 1e-14)
        )


def apply_cutoff(spec: CutoffSpec, s):
    s = np.asarray(s, dtype=float)
    t = np.clip((s - spec.s0) / spec.beta, 0.0, 1.0)
    blend = spec.s0 + spec.beta * (t - t**3 + 0.5 * t**4)
    return np.where(s <= spec.s0, s, blend) - spec.shift


def identity_cutoff(s):
    return np.asarray(s, dtype=float)


def cutoff_family(s_values, beta=1.0):
    """A small family of admissible cutoffs saturating at different levels."""
    return [CutoffSpec(s0=float(v), beta=beta) for v in s_values]
