"""Uniform Cartesian meshes on the slab T^(N-1) x (0, 1) and on the torus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Cell-centred uniform mesh on the unit box.

    The last axis is the vertical one.  With ``walls=True`` it carries
    impermeable walls at z = 0 and z = 1; otherwise every axis is periodic
    (the fully periodic test torus).
    """

    shape: tuple
    walls: bool = True

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) not in (2, 3):
            raise ValueError("only N = 2 or N = 3 meshes are supported")
        if any(n < 1 for n in shape):
            raise ValueError("cell counts must be positive")
        object.__setattr__(self, "shape", shape)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> tuple:
        return tuple(1.0 / n for n in self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def horizontal_area(self) -> float:
        return 1.0

    def edges(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.shape[axis] + 1)

    def centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return (np.arange(n) + 0.5) / n

    def coords(self):
        """Cell-centre coordinate arrays broadcast to the full shape."""
        return np.meshgrid(*[self.centers(a) for a in range(self.ndim)], indexing="ij")

    def z(self) -> np.ndarray:
        return self.coords()[-1]

    def periodic(self, axis: int) -> bool:
        return not (self.walls and axis == self.ndim - 1)

    def refine(self, factor: int = 2) -> "Mesh":
        return Mesh(tuple(n * factor for n in self.shape), self.walls)


@dataclass(frozen=True)
class PotentialField:
    """Gravitational potential Phi = -gravity * z (gravity = 0: no force)."""

    gravity: float = 1.0

    @property
    def analytic(self) -> bool:
        return True

    def values(self, z):
        return -self.gravity * np.asarray(z, dtype=float)

    def grad(self, ndim: int) -> np.ndarray:
        g = np.zeros(ndim)
        g[-1] = -self.gravity
        return g

    def sample(self, mesh: Mesh) -> np.ndarray:
        return self.values(mesh.z())


NO_FORCE = PotentialField(gravity=0.0)
