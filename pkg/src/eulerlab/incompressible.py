"""Pseudo-spectral 2-D incompressible Euler on the unit torus.

Vorticity-streamfunction form: omega = d_x u2 - d_y u1, U = (d_y psi, -d_x psi)
with -Lap psi = omega.  Products are dealiased with the 2/3 rule and time
stepping is classical RK4.  The initial vorticity is projected onto the
retained modes, so the semi-discrete system is a Galerkin truncation that
conserves energy and enstrophy exactly; only the RK4 error remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SpectralGrid:
    """Uniform nodes x_i = i/nx, y_j = j/ny with rfft2 wavenumbers."""

    def __init__(self, nx: int, ny: int | None = None):
        ny = nx if ny is None else ny
        self.nx, self.ny = int(nx), int(ny)
        kx = np.fft.fftfreq(self.nx, 1.0 / self.nx)
        ky = np.fft.rfftfreq(self.ny, 1.0 / self.ny)
        self.KX, self.KY = np.meshgrid(2 * np.pi * kx, 2 * np.pi * ky, indexing="ij")
        self.K2 = self.KX**2 + self.KY**2
        self.inv_K2 = np.where(self.K2 == 0, 0.0, 1.0 / np.where(self.K2 == 0, 1.0, self.K2))
        ix = np.abs(np.meshgrid(kx, ky, indexing="ij")[0])
        iy = np.meshgrid(kx, ky, indexing="ij")[1]
        self.mask = (ix < self.nx / 3) & (iy < self.ny / 3)

    @property
    def shape(self):
        return (self.nx, self.ny)

    def coords(self):
        x = np.arange(self.nx) / self.nx
        y = np.arange(self.ny) / self.ny
        return np.meshgrid(x, y, indexing="ij")

    def fft(self, f):
        return np.fft.rfft2(f)

    def ifft(self, fh):
        return np.fft.irfft2(fh, s=self.shape)

    def dx(self, fh):
        return 1j * self.KX * fh

    def dy(self, fh):
        return 1j * self.KY * fh


@dataclass
class VorticityField:
    omega: np.ndarray
    t: float = 0.0
    grid: SpectralGrid = field(default=None, repr=False)
    _hat: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.grid is None:
            self.grid = SpectralGrid(*self.omega.shape)
        if self.omega.shape != self.grid.shape:
            raise ValueError("vorticity shape does not match grid")

    @property
    def hat(self):
        if self._hat is None:
            self._hat = self.grid.fft(self.omega)
        return self._hat

    @classmethod
    def from_hat(cls, what, grid, t=0.0):
        return cls(grid.ifft(what), t, grid, what)

    @classmethod
    def from_velocity(cls, U, grid: SpectralGrid | None = None, t=0.0):
        U = np.asarray(U, dtype=float)
        grid = grid or SpectralGrid(*U.shape[1:])
        u1, u2 = grid.fft(U[0]), grid.fft(U[1])
        return cls.from_hat(grid.dx(u2) - grid.dy(u1), grid, t)

    def mean(self) -> float:
        return float(np.mean(self.omega))

    def energy(self) -> float:
        U = velocity_from_vorticity(self)
        return 0.5 * float(np.mean(np.sum(U**2, axis=0)))

    def enstrophy(self) -> float:
        return 0.5 * float(np.mean(self.omega**2))


def _check_mean(w: VorticityField, tol=1e-10):
    scale = max(1.0, float(np.max(np.abs(w.omega))))
    if abs(w.mean()) > tol * scale:
        raise ValueError("vorticity must have zero mean on the torus")


def _velocity_hat(what, grid):
    psi = what * grid.inv_K2
    return grid.dy(psi), -grid.dx(psi)


def velocity_from_vorticity(w: VorticityField) -> np.ndarray:
    """U_h = grad^perp Lap^{-1} omega, shape (2, nx, ny)."""
    _check_mean(w)
    u1h, u2h = _velocity_hat(w.hat, w.grid)
    return np.stack([w.grid.ifft(u1h), w.grid.ifft(u2h)])


def spectral_divergence(U, grid: SpectralGrid | None = None) -> np.ndarray:
    grid = grid or SpectralGrid(*U.shape[1:])
    return grid.ifft(grid.dx(grid.fft(U[0])) + grid.dy(grid.fft(U[1])))


def _advection_hat(what, grid):
    """-(U . grad omega) in spectral space, dealiased."""
    what = what * grid.mask
    u1h, u2h = _velocity_hat(what, grid)
    u1, u2 = grid.ifft(u1h), grid.ifft(u2h)
    wx, wy = grid.ifft(grid.dx(what)), grid.ifft(grid.dy(what))
    return -grid.fft(u1 * wx + u2 * wy) * grid.mask


def euler_step(w: VorticityField, dt: float) -> VorticityField:
    """One RK4 step of d_t omega + U . grad omega = 0."""
    _check_mean(w)
    g = w.grid
    y0 = w.hat * g.mask
    k1 = _advection_hat(y0, g)
    k2 = _advection_hat(y0 + 0.5 * dt * k1, g)
    k3 = _advection_hat(y0 + 0.5 * dt * k2, g)
    k4 = _advection_hat(y0 + dt * k3, g)
    y1 = y0 + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return VorticityField.from_hat(y1, g, w.t + dt)


def advective_dt(w: VorticityField, cfl: float = 0.5) -> float:
    U = velocity_from_vorticity(w)
    umax = float(np.max(np.abs(U[0]))) * w.grid.nx + float(np.max(np.abs(U[1]))) * w.grid.ny
    return np.inf if umax == 0 else cfl / umax


def pressure_from_velocity(U, grid: SpectralGrid | None = None) -> np.ndarray:
    """Mean-zero Pi solving -Lap Pi = div(U . grad U)."""
    U = np.asarray(U, dtype=float)
    grid = grid or SpectralGrid(*U.shape[1:])
    uh = [grid.fft(U[0]) * grid.mask, grid.fft(U[1]) * grid.mask]
    u = [grid.ifft(c) for c in uh]
    adv = []
    for i in range(2):
        dux = grid.ifft(grid.dx(uh[i]))
        duy = grid.ifft(grid.dy(uh[i]))
        adv.append(grid.fft(u[0] * dux + u[1] * duy) * grid.mask)
    div = grid.dx(adv[0]) + grid.dy(adv[1])
    Pi_hat = div * grid.inv_K2
    Pi_hat[0, 0] = 0.0
    return grid.ifft(Pi_hat)


@dataclass
class LimitSolution:
    """Snapshots of the horizontal limit velocity and pressure.

    ``U`` has shape (K, 2, nx, ny[, nz]) and ``Pi`` (K, nx, ny[, nz]); a
    trailing vertical axis is present when the data were z-dependent (each
    horizontal layer then evolves on its own).
    """

    times: np.ndarray
    U: np.ndarray
    Pi: np.ndarray

    def at(self, t: float):
        """Linear interpolation in time."""
        k = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2)) if len(self.times) > 1 else 0
        if len(self.times) == 1:
            return self.U[0], self.Pi[0]
        t0, t1 = self.times[k], self.times[k + 1]
        a = (t - t0) / (t1 - t0)
        return (1 - a) * self.U[k] + a * self.U[k + 1], (1 - a) * self.Pi[k] + a * self.Pi[k + 1]

    def lift(self, nz: int | None = None) -> np.ndarray:
        """3-D velocity (U1, U2, 0), constant in z unless already layered."""
        U = self.U
        if U.ndim == 4:
            if nz is None:
                raise ValueError("nz is required to lift z-independent data")
            U = np.repeat(U[..., None], nz, axis=-1)
        zero = np.zeros_like(U[:, :1])
        return np.concatenate([U, zero], axis=1)


def solve(omega0, t_end: float, dt: float, snapshot_times=None) -> LimitSolution:
    """Evolve one horizontal layer and record U and Pi at ``snapshot_times``."""
    w = omega0 if isinstance(omega0, VorticityField) else VorticityField(omega0)
    w = VorticityField.from_hat(w.hat * w.grid.mask, w.grid, w.t)
    if snapshot_times is None:
        snapshot_times = [0.0, t_end]
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    Us, Ps = [], []
    for ts in snapshot_times:
        while w.t < ts - 1e-14:
            w = euler_step(w, min(dt, ts - w.t))
        U = velocity_from_vorticity(w)
        Us.append(U)
        Ps.append(pressure_from_velocity(U, w.grid))
    return LimitSolution(snapshot_times, np.array(Us), np.array(Ps))


def solve_layered(U0, t_end: float, dt: float, snapshot_times=None) -> LimitSolution:
    """Evolve z-dependent data U0 of shape (2, nx, ny, nz) layer by layer."""
    U0 = np.asarray(U0, dtype=float)
    layers = [solve(VorticityField.from_velocity(U0[..., k]), t_end, dt, snapshot_times)
              for k in range(U0.shape[-1])]
    return LimitSolution(
        layers[0].times,
        np.stack([s.U for s in layers], axis=-1),
        np.stack([s.Pi for s in layers], axis=-1),
    )


def shear_limit(profile, z, times) -> LimitSolution:
    """Stationary shear U = (f(z), 0) for the 2-D slab T x (0, 1).

    With a one-dimensional horizontal torus, div_h U_h = 0 forces U^1 to
    be independent of x, so horizontally constant layers are the only
    limit fields; they are steady and carry Pi = 0.
    """
    f = np.asarray(profile(np.asarray(z, dtype=float)), dtype=float)
    times = np.asarray(times, dtype=float)
    U = np.broadcast_to(f, (len(times), 1) + f.shape).copy()
    return LimitSolution(times, U, np.zeros((len(times),) + f.shape))
