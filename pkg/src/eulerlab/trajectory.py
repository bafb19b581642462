"""Space-time field records and their quadrature layout.

A :class:`Trajectory` stores snapshots of (rho, m, E_int) at increasing
times.  Between snapshots fields are read as piecewise linear in time.  In
space every axis is described by an :class:`Axis` which knows how to
integrate a one-dimensional function against the stored samples:

* ``cells`` - finite-volume cell averages (piecewise constant); a test
  function is integrated exactly over each cell with Gauss-Legendre.
* ``nodes`` - periodic uniform nodes with trapezoidal weights, exact for
  trigonometric polynomials below the Nyquist mode.
* ``gauss`` - composite Gauss-Legendre nodes, used to sample analytic
  fields.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from eulerlab.thermo import GasParams, RHO_FLOOR


@dataclass(frozen=True)
class Axis:
    n: int
    kind: str = "cells"
    periodic: bool = True
    order: int = 6

    def __post_init__(self):
        if self.kind not in ("cells", "nodes", "gauss"):
            raise ValueError(f"unknown axis kind {self.kind!r}")
        if self.kind == "nodes" and not self.periodic:
            raise ValueError("uniform node quadrature requires a periodic axis")

    @property
    def size(self) -> int:
        return self.n * self.order if self.kind == "gauss" else self.n

    def _gauss(self):
        x, w = np.polynomial.legendre.leggauss(self.order)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        left = np.arange(self.n)[:, None] / self.n
        pts = left + x[None, :] / self.n
        return pts, np.broadcast_to(w[None, :] / self.n, pts.shape)

    def points(self) -> np.ndarray:
        if self.kind == "cells":
            return (np.arange(self.n) + 0.5) / self.n
        if self.kind == "nodes":
            return np.arange(self.n) / self.n
        return self._gauss()[0].ravel()

    def integrate(self, f) -> np.ndarray:
        """Vector of integrals of ``f`` against each stored sample."""
        if self.kind == "nodes":
            return f(self.points()) / self.n
        pts, w = self._gauss()
        vals = f(pts) * w
        if self.kind == "cells":
            return vals.sum(axis=1)
        return vals.ravel()

    def weights(self) -> np.ndarray:
        return self.integrate(np.ones_like)


def cell_axes(shape, walls=True):
    nd = len(shape)
    return tuple(Axis(n, "cells", periodic=not (walls and a == nd - 1)) for a, n in enumerate(shape))


@dataclass
class Trajectory:
    times: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    E_int: np.ndarray
    axes: tuple
    epsilon: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        self.E_int = np.asarray(self.E_int, dtype=float)
        K = len(self.times)
        shape = tuple(a.size for a in self.axes)
        if self.rho.shape != (K,) + shape or self.E_int.shape != (K,) + shape:
            raise ValueError(f"field shapes {self.rho.shape} do not match {(K,) + shape}")
        if self.m.shape != (K, len(self.axes)) + shape:
            raise ValueError(f"momentum shape {self.m.shape} does not match axes")
        if K > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must increase")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def walls(self) -> bool:
        return not self.axes[-1].periodic

    def vacuum(self):
        return self.rho < RHO_FLOOR

    def velocity(self):
        safe = np.where(self.vacuum(), 1.0, self.rho)
        return np.where(self.vacuum()[:, None], 0.0, self.m / safe[:, None])

    def kinetic(self):
        safe = np.where(self.vacuum(), 1.0, self.rho)
        return np.where(self.vacuum(), 0.0, 0.5 * np.sum(self.m**2, axis=1) / safe)

    def energy(self):
        """Scaled total energy density |m|^2/(2 rho) + E_int/eps^2."""
        return self.kinetic() + self.E_int / self.epsilon**2

    def pressure(self, gas: GasParams):
        return self.E_int / gas.c_v

    def theta(self, gas: GasParams):
        safe = np.where(self.vacuum(), 1.0, self.rho)
        return np.where(self.vacuum(), np.nan, self.E_int / (gas.c_v * safe))

    def entropy(self, gas: GasParams):
        safe = np.where(self.vacuum(), 1.0, self.rho)
        th = np.where(self.vacuum(), 1.0, self.E_int / (gas.c_v * safe))
        return np.where(self.vacuum(), np.nan, gas.c_v * np.log(th) - np.log(safe))

    def cell_weights(self) -> np.ndarray:
        """Spatial quadrature weights with the field shape."""
        ws = [a.weights() for a in self.axes]
        out = ws[0]
        for w in ws[1:]:
            out = np.multiply.outer(out, w)
        return out

    def integral(self, field_k) -> np.ndarray:
        """Spatial integral of a (K, *shape) field at each snapshot."""
        w = self.cell_weights()
        return np.tensordot(field_k, w, axes=self.ndim)

    def reversed(self) -> "Trajectory":
        """Time reversal t -> T - t with m -> -m."""
        t = self.times[-1] - self.times[::-1]
        return Trajectory(t, self.rho[::-1].copy(), -self.m[::-1], self.E_int[::-1].copy(),
                          self.axes, self.epsilon, dict(self.meta, reversed=True))

    def select(self, idx) -> "Trajectory":
        idx = np.asarray(idx)
        return Trajectory(self.times[idx], self.rho[idx], self.m[idx], self.E_int[idx],
                          self.axes, self.epsilon, dict(self.meta))

    def snapshot_fields(self, k: int):
        return self.rho[k], self.m[k], self.E_int[k]

    @classmethod
    def constant(cls, rho, m, E_int, axes, times):
        """Time-independent trajectory from single fields."""
        K = len(times)
        rho = np.broadcast_to(np.asarray(rho, float), (K,) + tuple(a.size for a in axes)).copy()
        m = np.asarray(m, float)
        m = np.broadcast_to(m, (K,) + m.shape).copy()
        E_int = np.broadcast_to(np.asarray(E_int, float), rho.shape).copy()
        return cls(np.asarray(times, float), rho, m, E_int, tuple(axes))

    @classmethod
    def from_functions(cls, rho_fn, m_fn, E_int_fn, axes, times, epsilon=1.0):
        """Sample analytic fields f(t, *coords) at the axes' points."""
        axes = tuple(axes)
        coords = np.meshgrid(*[a.points() for a in axes], indexing="ij")
        rho, m, E = [], [], []
        for t in times:
            rho.append(np.broadcast_to(rho_fn(t, *coords), coords[0].shape))
            m.append(np.stack([np.broadcast_to(c, coords[0].shape) for c in m_fn(t, *coords)]))
            E.append(np.broadcast_to(E_int_fn(t, *coords), coords[0].shape))
        return cls(np.asarray(times, float), np.array(rho), np.array(m), np.array(E), axes, epsilon)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        for k, t in enumerate(self.times):
            np.savez(
                os.path.join(directory, f"snap_{k:05d}.npz"),
                t=t, rho=self.rho[k], m=self.m[k], E_int=self.E_int[k],
                epsilon=self.epsilon, shape=np.array(self.shape),
            )
        header = {
            "format": "eulerlab-snapshots v1",
            "count": len(self.times),
            "epsilon": self.epsilon,
            "axes": [{"n": a.n, "kind": a.kind, "periodic": a.periodic, "order": a.order}
                     for a in self.axes],
            "meta": {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, bool))},
        }
        with open(os.path.join(directory, "trajectory.json"), "w") as fh:
            json.dump(header, fh, indent=2)

    @classmethod
    def load(cls, directory) -> "Trajectory":
        with open(os.path.join(directory, "trajectory.json")) as fh:
            header = json.load(fh)
        axes = tuple(Axis(**a) for a in header["axes"])
        t, rho, m, E = [], [], [], []
        for k in range(header["count"]):
            with np.load(os.path.join(directory, f"snap_{k:05d}.npz")) as d:
                t.append(float(d["t"]))
                rho.append(d["rho"])
                m.append(d["m"])
                E.append(d["E_int"])
        return cls(np.array(t), np.array(rho), np.array(m), np.array(E), axes,
                   header.get("epsilon", 1.0), header.get("meta", {}))
