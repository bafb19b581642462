"""Isothermal hydrostatic equilibrium rho_s(z) = c0 exp(-z/Theta_bar)."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from eulerlab.mesh import Mesh, PotentialField


@dataclass(frozen=True)
class StaticState:
    Theta_bar: float
    c0: float
    total_mass: float
    gravity: float = 1.0
    horizontal_area: float = 1.0

    def rho(self, z):
        return self.c0 * np.exp(-self.gravity * np.asarray(z, dtype=float) / self.Theta_bar)

    def drho_dz(self, z):
        return -self.gravity / self.Theta_bar * self.rho(z)

    def pressure(self, z):
        return self.rho(z) * self.Theta_bar

    def sample(self, mesh: Mesh) -> np.ndarray:
        """Profile at cell centres, broadcast to the mesh shape."""
        return self.rho(mesh.z())

    def profile(self, nz: int):
        z = (np.arange(nz) + 0.5) / nz
        return z, self.rho(z)

    def mass(self, nz: int = 4096) -> float:
        """Midpoint-rule total mass on ``nz`` vertical cells."""
        z, r = self.profile(nz)
        return float(np.sum(r) / nz * self.horizontal_area)

    def to_csv(self, path, nz: int):
        z, r = self.profile(nz)
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# static_state v1 Theta_bar={self.Theta_bar!r} c0={self.c0!r} "
                f"mass={self.total_mass!r}\n"
            )
            w = csv.writer(fh)
            w.writerow(["z", "rho_s"])
            for zi, ri in zip(z, r):
                w.writerow([repr(float(zi)), repr(float(ri))])


def build_static(Theta_bar: float, total_mass: float = 1.0, horizontal_area: float = 1.0,
                 gravity: float = 1.0) -> StaticState:
    """Static state of prescribed total mass on T^(N-1) x (0, 1).

    c0 = M / (|T| * Theta_bar * (1 - exp(-g/Theta_bar))) for g = 1; the
    general-g version divides Theta_bar by g.
    """
    if not Theta_bar > 0:
        raise ValueError("Theta_bar must be positive")
    if not total_mass > 0:
        raise ValueError("total mass must be positive")
    if not horizontal_area > 0:
        raise ValueError("horizontal area must be positive")
    if gravity == 0:
        c0 = total_mass / horizontal_area
    else:
        scale = Theta_bar / gravity
        # -expm1(-x) keeps full precision for large Theta_bar
        c0 = total_mass / (horizontal_area * scale * -np.expm1(-1.0 / scale))
    return StaticState(float(Theta_bar), float(c0), float(total_mass), float(gravity),
                       float(horizontal_area))


def hydrostatic_residual(rho_s, mesh: Mesh, potential: PotentialField, Theta_bar: float,
                         analytic_gradient=None):
    """Cellwise residual grad(rho_s Theta_bar) - rho_s grad(Phi), vertical part.

    ``rho_s`` is sampled at cell centres with the mesh shape.  With
    ``analytic_gradient`` (d rho_s/dz at cell centres) the residual is
    exact up to round-off; otherwise second-order centred differences are
    used on interior cells (one-sided second-order stencils at the walls).
    """
    rho_s = np.asarray(rho_s, dtype=float)
    if rho_s.shape != mesh.shape:
        raise ValueError(f"profile shape {rho_s.shape} does not match mesh {mesh.shape}")
    gz = potential.grad(mesh.ndim)[-1]
    if analytic_gradient is not None:
        dpdz = Theta_bar * np.asarray(analytic_gradient, dtype=float)
        if dpdz.shape != mesh.shape:
            raise ValueError("gradient shape does not match mesh")
    else:
        h = mesh.h[-1]
        p = Theta_bar * rho_s
        dpdz = np.empty_like(p)
        dpdz[..., 1:-1] = (p[..., 2:] - p[..., :-2]) / (2 * h)
        dpdz[..., 0] = (-3 * p[..., 0] + 4 * p[..., 1] - p[..., 2]) / (2 * h)
        dpdz[..., -1] = (3 * p[..., -1] - 4 * p[..., -2] + p[..., -3]) / (2 * h)
    return dpdz - rho_s * gz

