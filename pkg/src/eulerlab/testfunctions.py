"""Separable space-time test functions and weak-form quadrature.

A test function is a product a(t) * b_1(x_1) * ... * b_N(x_N), optionally
placed in one component of a vector.  A :class:`Family` bundles lists of
one-dimensional factors whose full tensor product is tested at once, so
every weak-form term reduces to one einsum over (time, cells).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Legendre, Polynomial

_SUP_SAMPLES = 2049
_TIME_GAUSS = 24


@dataclass(frozen=True)
class Factor:
    """One-dimensional factor with its derivative."""

    f: object
    df: object
    label: str
    nonneg: bool = False

    def sup(self, lo=0.0, hi=1.0):
        x = np.linspace(lo, hi, _SUP_SAMPLES)
        return float(np.max(np.abs(self.f(x)))), float(np.max(np.abs(self.df(x))))


def trig_factor(kind: str, k: int) -> Factor:
    w = 2 * np.pi * k
    if kind == "one":
        return Factor(np.ones_like, np.zeros_like, "1", True)
    if kind == "cos":
        return Factor(lambda x: np.cos(w * x), lambda x: -w * np.sin(w * x), f"cos{k}")
    return Factor(lambda x: np.sin(w * x), lambda x: w * np.cos(w * x), f"sin{k}")


def periodic_modes() -> list:
    """1, cos/sin of 2 pi x, 4 pi x, 6 pi x, and cos 8 pi x."""
    out = [trig_factor("one", 0)]
    for k in (1, 2, 3):
        out += [trig_factor("cos", k), trig_factor("sin", k)]
    out.append(trig_factor("cos", 4))
    return out


def poly_factor(poly: Polynomial, label: str, nonneg=False) -> Factor:
    d = poly.deriv()
    return Factor(poly, d, label, nonneg)


def wall_modes(tangent: bool = False, count: int = 4) -> list:
    """Shifted Legendre P_0..P_{count-1} on [0, 1]; times z(1-z) if ``tangent``."""
    w = Polynomial([0.0, 1.0, -1.0])
    out = []
    for j in range(count):
        P = Legendre.basis(j, domain=[0, 1]).convert(kind=Polynomial)
        if tangent:
            out.append(poly_factor(w * P, f"z(1-z)P{j}"))
        else:
            out.append(poly_factor(P, f"P{j}"))
    return out


def bump_periodic(center: float, q: int) -> Factor:
    """(1/2 (1 + cos 2 pi (x - c)))^q: nonnegative, modes up to q."""
    def f(x):
        return (0.5 * (1 + np.cos(2 * np.pi * (x - center)))) ** q

    def df(x):
        base = 0.5 * (1 + np.cos(2 * np.pi * (x - center)))
        return q * base ** (q - 1) * (-np.pi * np.sin(2 * np.pi * (x - center)))

    return Factor(f, df, f"bump(c={center:.3f},q={q})", True)


def bump_wall(a: int, b: int) -> Factor:
    """Normalised z^a (1-z)^b."""
    poly = Polynomial([0, 1]) ** a * Polynomial([1, -1]) ** b
    x = np.linspace(0, 1, _SUP_SAMPLES)
    scale = float(np.max(poly(x)))
    return poly_factor(poly / scale, f"z^{a}(1-z)^{b}", True)


def nonneg_periodic_modes() -> list:
    out = [trig_factor("one", 0)]
    out += [bump_periodic(c, 1) for c in (0.0, 0.25, 0.5, 0.75)]
    out += [bump_periodic(c, 2) for c in (0.0, 1 / 3, 2 / 3)]
    return out


def nonneg_wall_modes() -> list:
    return [bump_wall(0, 0), bump_wall(1, 0), bump_wall(0, 1), bump_wall(1, 1)]


def time_modes(T: float, count: int = 3) -> list:
    """cos((2k+1) pi t / 2T): smooth on [0, T] and zero at t = T."""
    out = []
    for k in range(count):
        w = (2 * k + 1) * np.pi / (2 * T)
        out.append(Factor(lambda t, w=w: np.cos(w * t), lambda t, w=w: -w * np.sin(w * t),
                          f"tcos{2 * k + 1}", k == 0))
    return out


def nonneg_time_modes(T: float, powers=(1, 2, 3)) -> list:
    """cos(pi t / 2T)^q, nonnegative and zero at t = T."""
    w = np.pi / (2 * T)
    out = []
    for q in powers:
        out.append(Factor(
            lambda t, q=q: np.cos(w * t) ** q,
            lambda t, q=q: -q * w * np.cos(w * t) ** (q - 1) * np.sin(w * t),
            f"tcos^{q}", True))
    return out


@dataclass
class Family:
    """Tensor product of time factors and per-axis spatial factors."""

    time: list
    space: list
    component: int | None = None
    label: str = ""

    @property
    def shape(self) -> tuple:
        return (len(self.time),) + tuple(len(s) for s in self.space)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def ids(self) -> list:
        comp = "" if self.component is None else f"[{self.component}]"
        out = []
        for idx in np.ndindex(*self.shape):
            parts = [self.time[idx[0]].label] + [self.space[d][i].label for d, i in enumerate(idx[1:])]
            out.append(f"{self.label}{comp}:" + "*".join(parts))
        return out

    def c1_norms(self, T: float) -> np.ndarray:
        """||phi||_C1 = sup|phi| + sup|d_t phi| + sum_j sup|d_j phi| per element."""
        ta = np.array([f.sup(0, T) for f in self.time])
        sp = [np.array([f.sup() for f in fs]) for fs in self.space]

        def outer(vecs):
            out = vecs[0]
            for v in vecs[1:]:
                out = np.multiply.outer(out, v)
            return out

        vals = [s[:, 0] for s in sp]
        total = outer([ta[:, 0]] + vals) + outer([ta[:, 1]] + vals)
        for j in range(len(sp)):
            mixed = list(vals)
            mixed[j] = sp[j][:, 1]
            total = total + outer([ta[:, 0]] + mixed)
        return total

    def is_nonneg(self) -> bool:
        return all(f.nonneg for f in self.time) and all(f.nonneg for fs in self.space for f in fs)


@dataclass
class TestFunctionBasis:
    __test__ = False  # keep pytest from collecting it

    families: list = field(default_factory=list)
    T: float = 1.0

    @property
    def size(self) -> int:
        return sum(f.size for f in self.families)

    def ids(self) -> list:
        return [i for f in self.families for i in f.ids()]

    def is_nonneg(self) -> bool:
        return all(f.is_nonneg() for f in self.families)

    @classmethod
    def default(cls, axes, T: float, vector: bool = False, wall_tangent: bool = True,
                nonneg: bool = False, n_random: int = 8, seed: int = 0) -> "TestFunctionBasis":
        """3 time x 8 per periodic axis x 4 wall modes, plus random bumps.

        ``vector=True`` yields one family per component; with walls and
        ``wall_tangent`` the normal component uses z(1-z) P_j so phi.n = 0.
        ``nonneg=True`` switches every factor to a nonnegative one.
        """
        nd = len(axes)
        tm = nonneg_time_modes(T) if nonneg else time_modes(T)
        fams = []
        comps = range(nd) if vector else [None]
        for c in comps:
            space = []
            for d, ax in enumerate(axes):
                if ax.periodic:
                    space.append(nonneg_periodic_modes() if nonneg else periodic_modes())
                else:
                    tangent = wall_tangent and c is not None and c == d
                    if nonneg:
                        space.append(nonneg_wall_modes())
                    else:
                        space.append(wall_modes(tangent))
            fams.append(Family(tm, space, c, "mode"))
        fams += random_bumps(axes, T, n_random, seed, vector, wall_tangent)
        return cls(fams, T)


def random_bumps(axes, T, count=8, seed=0, vector=False, wall_tangent=True) -> list:
    """Band-limited nonnegative bumps with random centres, widths and components."""
    rng = np.random.default_rng(seed)
    nd = len(axes)
    out = []
    for i in range(count):
        c = int(rng.integers(nd)) if vector else None
        tfac = nonneg_time_modes(T, powers=(int(rng.integers(1, 4)),))
        space = []
        for d, ax in enumerate(axes):
            if ax.periodic:
                space.append([bump_periodic(float(rng.random()), int(rng.integers(1, 5)))])
            else:
                lo = 1 if (vector and wall_tangent and c == d) else 0
                space.append([bump_wall(int(rng.integers(lo, 4)), int(rng.integers(lo, 4)))])
        out.append(Family(tfac, space, c, f"rand{i}"))
    return out


class WeakQuadrature:
    """Contracts space-time fields against a family's tensor-product elements.

    Fields are piecewise linear in time between the snapshot ``times``; the
    time integral of each factor against every hat function uses Gauss
    points per interval.  Spatial integrals come from the axes' rules.
    """

    def __init__(self, times, axes):
        self.times = np.asarray(times, dtype=float)
        self.axes = tuple(axes)
        self._cache = {}

    def _hat_weights(self, fn):
        t = self.times
        K = len(t)
        W = np.zeros(K)
        if K < 2:
            return W
        x, w = np.polynomial.legendre.leggauss(_TIME_GAUSS)
        x = 0.5 * (x + 1)
        w = 0.5 * w
        for k in range(K - 1):
            h = t[k + 1] - t[k]
            tq = t[k] + h * x
            v = fn(tq) * w * h
            W[k] += np.sum(v * (1 - x))
            W[k + 1] += np.sum(v * x)
        return W

    def time_matrices(self, fam: Family):
        key = ("t", id(fam))
        if key not in self._cache:
            A = np.array([self._hat_weights(f.f) for f in fam.time])
            dA = np.array([self._hat_weights(f.df) for f in fam.time])
            a0 = np.array([float(f.f(np.array(self.times[0]))) for f in fam.time])
            self._cache[key] = (A, dA, a0, fam)
        return self._cache[key][:3]

    def space_matrices(self, fam: Family):
        key = ("s", id(fam))
        if key not in self._cache:
            B = [np.array([ax.integrate(f.f) for f in fs]) for ax, fs in zip(self.axes, fam.space)]
            dB = [np.array([ax.integrate(f.df) for f in fs]) for ax, fs in zip(self.axes, fam.space)]
            self._cache[key] = (B, dB, fam)
        return self._cache[key][:2]

    def _contract(self, F, Tm, Bs):
        nd = len(self.axes)
        letters = "ijklm"[:nd]
        outs = "BCDE"[:nd]
        sub = "z" + letters + ",Az," + ",".join(o + l for o, l in zip(outs, letters)) + "->A" + outs
        return np.einsum(sub, F, Tm, *Bs, optimize=True)

    def dt_term(self, fam, F):
        """int int F d_t phi."""
        A, dA, _ = self.time_matrices(fam)
        B, _ = self.space_matrices(fam)
        return self._contract(F, dA, B)

    def grad_term(self, fam, G, j):
        """int int G d_j phi."""
        A, _, _ = self.time_matrices(fam)
        B, dB = self.space_matrices(fam)
        Bs = list(B)
        Bs[j] = dB[j]
        return self._contract(G, A, Bs)

    def value_term(self, fam, S):
        """int int S phi."""
        A, _, _ = self.time_matrices(fam)
        B, _ = self.space_matrices(fam)
        return self._contract(S, A, B)

    def initial_term(self, fam, F0):
        """int F0 phi(0)."""
        _, _, a0 = self.time_matrices(fam)
        B, _ = self.space_matrices(fam)
        return self._contract(F0[None], a0[:, None], B)
