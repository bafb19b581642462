"""Oscillatory divergence-free momentum fields for the constrained system.

A desk-scale stand-in for convex integration.  Momentum is a sum of
plane-wave pairs on the unit torus::

    m = A tau(t) [cos(2 pi k.x + a) k_perp/|k| - cos(2 pi k_perp.x + a) k/|k|]

Each member is divergence-free pointwise.  The two members have orthogonal
polarizations, so their mean Reynolds stress is isotropic and the traceless
stress m(x)m/rho - |m|^2/(N rho) I has no mean part.  All wave vectors lie
in 8 Z^2, so every remaining frequency of the stress is orthogonal to test
modes of order <= 4.  Amplitudes are chosen greedily by a bounded line
search on the kinetic-energy gap.  The fields are approximate weak
solutions, never exact wild solutions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from eulerlab.mesh import PotentialField
from eulerlab.thermo import GasParams
from eulerlab.trajectory import Axis, Trajectory

LATTICE = 8
MAX_COMPONENT = 24
PREFIX_K = (8, 0)
PREFIX_FRACTION = 0.4


@dataclass(frozen=True)
class OscillationTarget:
    rho: float = 1.0
    p: float = 1.0
    Lambda: float = 2.0
    N: int = 2
    potential: PotentialField | None = None

    def __post_init__(self):
        if not (self.rho > 0 and self.p > 0):
            raise ValueError("rho and p must be positive constants")
        if self.N != 2:
            raise ValueError("the wave builder works in two dimensions")

    def e_star(self, x, z):
        """Prescribed kinetic energy density at nodes (x, z)."""
        if self.potential is None:
            e = np.full(np.shape(x), self.Lambda - 0.5 * self.N * self.p)
        else:
            e = self.Lambda - self.p + self.rho * self.potential.values(z)
        if np.any(e <= 0):
            raise ValueError("Lambda is too small: prescribed kinetic energy must be positive")
        return e

    @property
    def theta(self) -> float:
        return self.p / self.rho


def canonical_vectors():
    """Wave vectors (a, b) in 8Z^2 with a > 0, b >= 0, components <= 24."""
    vals = range(LATTICE, MAX_COMPONENT + 1, LATTICE)
    return [(a, b) for a in vals for b in [0, *vals]]


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


@dataclass(frozen=True)
class Wave:
    k: tuple
    phase: float
    amplitude: float = 0.0
    t_on: float = -1.0
    ramp: float = 0.05

    def profile(self, t):
        """Time envelope: 1 for a constant wave (t_on < 0), else a C^2 ramp."""
        t = np.asarray(t, dtype=float)
        if self.t_on < 0:
            return np.ones_like(t)
        return _smoothstep((t - self.t_on) / self.ramp)

    def unit_field(self, X, Y):
        a, b = self.k
        norm = np.hypot(a, b)
        kp = (-b, a)
        c1 = np.cos(2 * np.pi * (a * X + b * Y) + self.phase)
        c2 = np.cos(2 * np.pi * (kp[0] * X + kp[1] * Y) + self.phase)
        return np.stack([c1 * kp[0] / norm - c2 * a / norm, c1 * kp[1] / norm - c2 * b / norm])

    def with_amplitude(self, A) -> "Wave":
        return Wave(self.k, self.phase, float(A), self.t_on, self.ramp)


@dataclass
class OscillationField:
    target: OscillationTarget
    n: int
    times: np.ndarray
    m: np.ndarray
    waves: list = field(default_factory=list)
    gap_history: list = field(default_factory=list)
    stalls: int = 0

    def coords(self):
        x = np.arange(self.n) / self.n
        return np.meshgrid(x, x, indexing="ij")

    def e_star(self):
        X, Z = self.coords()
        return self.target.e_star(X, Z)

    def gap_field(self):
        return np.abs(self.e_star() - 0.5 * np.sum(self.m**2, axis=1) / self.target.rho)

    def gap(self) -> float:
        """Space-time mean of |e* - |m|^2/(2 rho)|."""
        return _time_mean(self.times, self.gap_field().mean(axis=(1, 2)))

    @property
    def m0(self):
        return self.m[0]

    def divergence(self) -> float:
        """Largest spectral divergence over all snapshots."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n) * 2j * np.pi
        KX, KY = np.meshgrid(k, k, indexing="ij")
        d = np.fft.ifft2(KX * np.fft.fft2(self.m[:, 0]) + KY * np.fft.fft2(self.m[:, 1])).real
        return float(np.max(np.abs(d)))

    def axes(self):
        return (Axis(self.n, "nodes"), Axis(self.n, "nodes"))

    def trajectory(self, gas: GasParams = GasParams()) -> Trajectory:
        """Constant-density, constant-temperature full Euler fields with this momentum."""
        K = len(self.times)
        shape = (K, self.n, self.n)
        rho = np.full(shape, self.target.rho)
        E_int = np.full(shape, gas.c_v * self.target.p)
        return Trajectory(self.times, rho, self.m.copy(), E_int, self.axes(),
                          meta={"waves": len(self.waves)})

    def spectrum(self, k_max: int | None = None):
        """Shell-averaged energy spectrum of m at t = T (reported, not interpreted)."""
        mh = np.fft.fft2(self.m[-1], axes=(-2, -1)) / self.n**2
        e = 0.5 * np.sum(np.abs(mh) ** 2, axis=0)
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        KX, KY = np.meshgrid(k, k, indexing="ij")
        shell = np.rint(np.hypot(KX, KY)).astype(int)
        k_max = k_max or self.n // 2
        return np.arange(k_max + 1), np.bincount(shell.ravel(), e.ravel(), minlength=k_max + 1)[:k_max + 1]

    def plan_text(self) -> str:
        """Wave plan as JSON lines (one wave per line)."""
        return "\n".join(json.dumps(asdict(w)) for w in self.waves) + "\n"


def _time_mean(times, values) -> float:
    if len(times) == 1:
        return float(values[0])
    values = np.asarray(values, dtype=float)
    area = 0.5 * np.sum((values[1:] + values[:-1]) * np.diff(times))
    return float(area / (times[-1] - times[0]))


def init_subsolution(target: OscillationTarget, n: int = 128, T: float = 1.0,
                     snapshots: int = 21) -> OscillationField:
    """Zero momentum; the gap equals e* everywhere."""
    times = np.linspace(0.0, T, snapshots)
    f = OscillationField(target, n, times, np.zeros((snapshots, 2, n, n)))
    f.gap_history.append(f.gap())
    return f


def _line_search(f: OscillationField, wave: Wave, max_amplitude: float | None = None):
    """Amplitude in [-A_max, A_max] minimising the space-time gap after adding ``wave``."""
    X, Y = f.coords()
    w = wave.unit_field(X, Y)
    tau = wave.profile(f.times)
    rho = f.target.rho
    e = f.e_star()
    msq = np.sum(f.m**2, axis=1)
    dot = tau[:, None, None] * np.sum(f.m * w[None], axis=1)
    wsq = tau[:, None, None] ** 2 * np.sum(w**2, axis=0)[None]

    def gap(A):
        g = np.abs(e - (msq + 2 * A * dot + A * A * wsq) / (2 * rho)).mean(axis=(1, 2))
        return _time_mean(f.times, g)

    hi = max_amplitude or 2.0 * np.sqrt(2 * rho * float(np.max(e)))
    res = minimize_scalar(gap, bounds=(-hi, hi), method="bounded", options={"xatol": 1e-6 * hi})
    return float(res.x), float(res.fun), gap


def _apply(f: OscillationField, wave: Wave, A: float, gA: float) -> OscillationField:
    X, Y = f.coords()
    w = wave.unit_field(X, Y)
    tau = wave.profile(f.times)
    m = f.m + A * tau[:, None, None, None] * w[None]
    return OscillationField(f.target, f.n, f.times, m, f.waves + [wave.with_amplitude(A)],
                            f.gap_history + [gA], f.stalls)


def add_wave(f: OscillationField, wave: Wave, amplitude: float | None = None,
             max_amplitude: float | None = None):
    """Add ``wave`` with a line-searched amplitude (or a given one).

    Returns (new field, stalled).  On a stall the field is returned
    unchanged apart from its stall counter.
    """
    g0 = f.gap_history[-1] if f.gap_history else f.gap()
    A, gA, gap = _line_search(f, wave, max_amplitude)
    if amplitude is not None:
        A, gA = float(amplitude), gap(float(amplitude))
    elif not gA < g0:
        f.stalls += 1
        return f, True
    return _apply(f, wave, A, gA), False


def prefix_wave(target: OscillationTarget, n: int) -> Wave:
    """Seed-independent constant-in-time first wave carrying ~40% of e*."""
    X, Y = np.meshgrid(np.arange(n) / n, np.arange(n) / n, indexing="ij")
    e_mean = float(np.mean(target.e_star(X, Y)))
    # |unit field|^2 averages to 1, so (1/2) A^2 / rho = fraction * e_mean
    A = np.sqrt(2 * target.rho * PREFIX_FRACTION * e_mean)
    return Wave(PREFIX_K, 0.0, A, -1.0, 0.05)


def build(target: OscillationTarget, budget: int, seed: int, n: int = 128, T: float = 1.0,
          snapshots: int = 21, prefix: bool = True, candidates: int = 4) -> OscillationField:
    """Prefix wave plus ``budget`` greedy steps, each the best of ``candidates`` random waves."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    f = init_subsolution(target, n, T, snapshots)
    if prefix:
        pw = prefix_wave(target, n)
        f, _ = add_wave(f, pw, amplitude=pw.amplitude)
    rng = np.random.default_rng(seed)
    vecs = canonical_vectors()
    for _ in range(budget):
        best = None
        for _ in range(candidates):
            k = vecs[int(rng.integers(len(vecs)))]
            wave = Wave(k, float(rng.uniform(0, 2 * np.pi)), 0.0,
                        float(rng.uniform(0.02, 0.2)) * T, 0.05 * T)
            A, gA, _ = _line_search(f, wave)
            if best is None or gA < best[2]:
                best = (wave, A, gA)
        wave, A, gA = best
        if gA < f.gap_history[-1]:
            f = _apply(f, wave, A, gA)
        else:
            f.stalls += 1
    return f


def build_pair(target: OscillationTarget, budget: int = 50, seeds=(1, 2), n: int = 128,
               T: float = 1.0, snapshots: int = 21):
    """Two fields from the same initial momentum; returns (A, B, m0).

    Seeded waves switch on strictly after t = 0 (their envelope is exactly
    0.0 there), so both fields start from the shared prefix wave.
    """
    A = build(target, budget, seeds[0], n, T, snapshots)
    B = build(target, budget, seeds[1], n, T, snapshots)
    return A, B, A.m0.copy()


def relative_distance(A: OscillationField, B: OscillationField) -> float:
    """||m_A - m_B|| / ||m_A|| in L^2((0,T) x Q)."""
    d = _time_mean(A.times, np.mean(np.sum((A.m - B.m) ** 2, axis=1), axis=(1, 2)))
    a = _time_mean(A.times, np.mean(np.sum(A.m**2, axis=1), axis=(1, 2)))
    return float(np.sqrt(d / a))


def assemble_full_euler(f: OscillationField, gas: GasParams = GasParams(), gap_tol: float = 0.5):
    """Lift to (rho, m, E_int) with constant rho, theta = p/rho.

    Refuses (ValueError) when the relative kinetic-energy gap exceeds
    ``gap_tol``.  Returns (trajectory, constraint energy e* + c_v rho theta).
    """
    rel = f.gap() / f.gap_history[0]
    if rel > gap_tol:
        raise ValueError(f"relative gap {rel:.3f} above tolerance {gap_tol}; not certified")
    traj = f.trajectory(gas)
    E_constraint = f.e_star() + gas.c_v * f.target.rho * f.target.theta
    return traj, E_constraint


@dataclass
class PiecewiseLayout:
    """Disjoint subdomains (boolean node masks) with constants (rho_i, theta_i), shared Lambda."""

    masks: list
    rho: list
    theta: list
    Lambda: float

    def __post_init__(self):
        total = np.sum([np.asarray(m, dtype=int) for m in self.masks], axis=0)
        if np.any(total > 1):
            raise ValueError("subdomains overlap")
        if np.any(total < 1):
            raise ValueError("subdomains do not cover the domain")
        if not (len(self.masks) == len(self.rho) == len(self.theta)):
            raise ValueError("one (rho, theta) pair per subdomain is required")

    def pressures(self):
        return [r * t for r, t in zip(self.rho, self.theta)]

    def targets(self, N: int = 2):
        return [self.Lambda - 0.5 * N * p for p in self.pressures()]


def piecewise_compose(layout: PiecewiseLayout, fields):
    """Glue per-subdomain momentum fields (each on the full grid) by the masks.

    Returns (m, rho field, p field, interface stress jump).  The jump is
    the largest difference of p_i + 2 e*_i / N between subdomains, which
    vanishes when Lambda is shared.
    """
    N = 2
    m = sum(np.where(mask, f, 0.0) for mask, f in zip(layout.masks, fields))
    rho = sum(np.where(mask, r, 0.0) for mask, r in zip(layout.masks, layout.rho))
    p = sum(np.where(mask, pi, 0.0) for mask, pi in zip(layout.masks, layout.pressures()))
    normal_stress = [pi + 2 * e / N for pi, e in zip(layout.pressures(), layout.targets(N))]
    jump = float(np.max(normal_stress) - np.min(normal_stress))
    return m, rho, p, jump
