"""Smooth reference fields (r, Theta, U) with the derivatives the relative
energy inequality needs, sampled on a trajectory's quadrature points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from eulerlab.thermo import GasParams


@dataclass
class ReferenceTriple:
    """Reference density, temperature and velocity over snapshot times.

    Arrays carry a leading time axis of length K; vector fields then a
    component axis and gradient fields two (``grad_U[k, i, j] = d_j U_i``).
    """

    times: np.ndarray
    r: np.ndarray
    Theta: np.ndarray
    U: np.ndarray
    dt_r: np.ndarray
    dt_Theta: np.ndarray
    dt_U: np.ndarray
    grad_r: np.ndarray
    grad_Theta: np.ndarray
    grad_U: np.ndarray

    def __post_init__(self):
        if np.any(self.r <= 0) or np.any(self.Theta <= 0):
            raise ValueError("reference density and temperature must be positive")

    @property
    def ndim(self) -> int:
        return self.U.shape[1]

    def at(self, k: int):
        return self.r[k], self.Theta[k], self.U[k]

    def div_U(self):
        return np.trace(self.grad_U, axis1=1, axis2=2)

    def entropy(self, gas: GasParams = GasParams()):
        return gas.c_v * np.log(self.Theta) - np.log(self.r)

    def pressure(self):
        return self.r * self.Theta

    def dt_pressure(self):
        return self.dt_r * self.Theta + self.r * self.dt_Theta

    def grad_pressure(self):
        return self.grad_r * self.Theta[:, None] + self.r[:, None] * self.grad_Theta

    def wall_normal_velocity(self, axes) -> float:
        """Largest |U^N| on the samples nearest the walls (0 for periodic data)."""
        if axes[-1].periodic:
            return 0.0
        return float(max(np.max(np.abs(self.U[:, -1, ..., 0])), np.max(np.abs(self.U[:, -1, ..., -1]))))

    @classmethod
    def from_functions(cls, r_fn, Theta_fn, U_fn, axes, times, step: float = 1e-5):
        """Sample callables f(t, *x) and difference them (2nd-order central).

        ``U_fn`` returns a sequence of N components.  The step is small
        enough that for smooth analytic data the derivative error sits
        near 1e-9.
        """
        axes = tuple(axes)
        nd = len(axes)
        X = np.meshgrid(*[a.points() for a in axes], indexing="ij")
        times = np.asarray(times, dtype=float)

        def vec(t, *x):
            return np.stack([np.broadcast_to(c, X[0].shape) for c in U_fn(t, *x)])

        def scal(fn):
            return lambda t, *x: np.broadcast_to(fn(t, *x), X[0].shape).astype(float)

        def sample(fn):
            return np.array([fn(t, *X) for t in times])

        def d_time(fn):
            return np.array([(fn(t + step, *X) - fn(t - step, *X)) / (2 * step) for t in times])

        def d_space(fn):
            out = []
            for t in times:
                comps = []
                for j in range(nd):
                    xp = list(X)
                    xm = list(X)
                    xp[j] = X[j] + step
                    xm[j] = X[j] - step
                    comps.append((fn(t, *xp) - fn(t, *xm)) / (2 * step))
                out.append(np.stack(comps))
            return np.array(out)

        rf, Tf = scal(r_fn), scal(Theta_fn)
        U = sample(vec)
        grad_U = d_space(vec)  # (K, N(deriv), N(comp), *S)
        grad_U = np.swapaxes(grad_U, 1, 2)
        return cls(times, sample(rf), sample(Tf), U, d_time(rf), d_time(Tf), d_time(vec),
                   d_space(rf), d_space(Tf), grad_U)

    @classmethod
    def static(cls, static_state, axes, times):
        """The static state (rho_s, Theta_bar) at rest, with exact derivatives."""
        axes = tuple(axes)
        nd = len(axes)
        X = np.meshgrid(*[a.points() for a in axes], indexing="ij")
        K = len(times)
        shape = X[0].shape
        rho = static_state.rho(X[-1])
        r = np.broadcast_to(rho, (K,) + shape).copy()
        Th = np.full((K,) + shape, static_state.Theta_bar)
        grad_r = np.zeros((K, nd) + shape)
        grad_r[:, -1] = static_state.drho_dz(X[-1])
        zeros_v = np.zeros((K, nd) + shape)
        return cls(np.asarray(times, float), r, Th, zeros_v.copy(), np.zeros_like(r), np.zeros_like(r),
                   zeros_v.copy(), grad_r, zeros_v.copy(), np.zeros((K, nd, nd) + shape))
