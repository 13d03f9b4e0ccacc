"""Lattice, potential, basis, Brillouin-zone and contour primitives.

The lattice is fixed to Z^d with the unit cube as cell, so the Brillouin
zone is [-pi, pi)^d and plane waves are exp(2 pi i m.x) with integer m.
Every other module consumes the immutable types defined here.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

FAMILIES = (
    "zero",
    "trig-polynomial",
    "power-law-decay",
    "gaussian-decay",
    "truncated-delta",
    "random-smooth",
)

#: default guard on the plane-wave matrix dimension
MAX_BASIS_SIZE = 4096


class ModelError(ValueError):
    """Invalid model parameters."""


def _as_freq(m, d: int) -> tuple[int, ...]:
    if isinstance(m, (int, np.integer)):
        m = (int(m),)
    m = tuple(int(v) for v in m)
    if len(m) != d:
        raise ModelError(f"frequency {m} does not have dimension {d}")
    return m


@dataclass(frozen=True)
class PotentialSpec:
    """Recipe for a periodic potential.

    Only the fields relevant to ``family`` are read:

    * ``trig-polynomial``: ``amplitudes`` maps frequency -> V^(m); missing
      conjugate partners are filled in.
    * ``power-law-decay``: ``amplitude * (1+|m|)^-decay`` for ``0 < |m|_inf <= cutoff``,
      with seeded random phases when ``seed`` is given (cosine series otherwise).
    * ``gaussian-decay``: ``amplitude * exp(-|m|^2 / (2 width^2))``; ``cutoff``
      defaults to where the coefficients drop below 1e-17 * amplitude.
    * ``truncated-delta``: ``V^(m) = strength`` for ``|m|_inf <= cutoff``.
    * ``random-smooth``: seeded complex Gaussian coefficients with a Gaussian
      envelope of ``width``, truncated at ``cutoff``.
    """

    family: str
    dimension: int = 1
    shift: float = 0.0
    amplitudes: Mapping = field(default_factory=dict)
    amplitude: float = 1.0
    decay: float = 2.0
    width: float = 4.0
    strength: float = 1.0
    cutoff: int | None = None
    seed: int | None = None

    @classmethod
    def cosine(cls, amplitude: float = 2.0, shift: float = 3.0) -> "PotentialSpec":
        """``amplitude * cos(2 pi x) + shift`` in one dimension."""
        a = amplitude / 2
        return cls("trig-polynomial", shift=shift, amplitudes={1: a, -1: a})


@dataclass(frozen=True, eq=False)
class FourierPotential:
    """Finite Fourier series of a real periodic potential.

    ``freqs`` is an (n, d) integer array, ``coeffs`` the matching complex
    amplitudes.  The constant shift is already folded into V^(0).
    """

    dimension: int
    freqs: np.ndarray
    coeffs: np.ndarray
    shift: float = 0.0

    def __post_init__(self):
        self.freqs.setflags(write=False)
        self.coeffs.setflags(write=False)

    def as_dict(self) -> dict[tuple[int, ...], complex]:
        return {tuple(int(v) for v in m): complex(c) for m, c in zip(self.freqs, self.coeffs)}

    def coefficient(self, m) -> complex:
        m = np.asarray(_as_freq(m, self.dimension))
        hit = np.all(self.freqs == m, axis=1)
        return complex(self.coeffs[hit][0]) if hit.any() else 0j

    @property
    def max_frequency(self) -> int:
        """Largest sup-norm of a frequency carrying a nonzero coefficient."""
        nz = self.coeffs != 0
        if not nz.any():
            return 0
        return int(np.abs(self.freqs[nz]).max())

    def evaluate(self, x) -> np.ndarray:
        """V at points ``x`` of shape (..., d) (or (...) when d = 1); complex."""
        x = np.asarray(x, dtype=float)
        if self.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        phase = 2j * np.pi * (x @ self.freqs.T)
        return np.exp(phase) @ self.coeffs

    def derivative_coeffs(self, alpha: int, order: int = 1) -> np.ndarray:
        """Fourier coefficients of the ``order``-th derivative along ``alpha``."""
        return (2j * np.pi * self.freqs[:, alpha]) ** order * self.coeffs

    def sup_derivative(self, alpha: int, order: int = 1) -> float:
        """Upper bound sum |coeff| for sup |d^order V / dx_alpha^order|."""
        return float(np.abs(self.derivative_coeffs(alpha, order)).sum())


def _cube(d: int, radius: int) -> np.ndarray:
    rng = range(-radius, radius + 1)
    return np.array(list(itertools.product(rng, repeat=d)), dtype=int).reshape(-1, d)


def _hermitize(d: int, table: dict) -> dict:
    out = dict(table)
    for m, c in table.items():
        neg = tuple(-v for v in m)
        if neg in table:
            if abs(table[neg] - np.conj(c)) > 1e-12 * max(1.0, abs(c)):
                raise ModelError(f"amplitudes at {m} and {neg} are not complex conjugates")
        else:
            out[neg] = np.conj(c)
    zero = (0,) * d
    if zero in out and abs(np.imag(out[zero])) > 1e-12:
        raise ModelError("V^(0) must be real")
    return out


def build_potential(spec: PotentialSpec) -> FourierPotential:
    """Realize ``spec`` as a finite, conjugate-symmetric Fourier series."""
    d = spec.dimension
    if d not in (1, 2, 3):
        raise ModelError(f"dimension must be 1, 2 or 3, got {d}")
    if spec.family not in FAMILIES:
        raise ModelError(f"unknown potential family {spec.family!r}; expected one of {FAMILIES}")

    table: dict[tuple[int, ...], complex] = {}
    fam = spec.family
    if fam == "zero":
        pass
    elif fam == "trig-polynomial":
        raw = {_as_freq(m, d): complex(c) for m, c in spec.amplitudes.items()}
        table = _hermitize(d, raw)
    elif fam == "truncated-delta":
        if not spec.strength > 0:
            raise ModelError(f"delta strength must be positive, got {spec.strength}")
        if spec.cutoff is None or spec.cutoff < 0:
            raise ModelError("truncated-delta needs a non-negative cutoff K")
        for m in _cube(d, spec.cutoff):
            table[tuple(m)] = complex(spec.strength)
    elif fam == "power-law-decay":
        if not spec.decay > 1:
            raise ModelError(f"power-law decay exponent must exceed 1, got {spec.decay}")
        if spec.cutoff is None or spec.cutoff < 1:
            raise ModelError("power-law-decay needs a cutoff K >= 1")
        freqs = _cube(d, spec.cutoff)
        rng = np.random.default_rng(spec.seed) if spec.seed is not None else None
        for m in freqs:
            key = tuple(m)
            if not any(key) or key in table:
                continue
            mag = spec.amplitude * (1.0 + np.linalg.norm(m)) ** (-spec.decay)
            c = mag * np.exp(2j * np.pi * rng.random()) if rng is not None else complex(mag)
            table[key] = c
            table[tuple(-m)] = np.conj(c)
    elif fam == "gaussian-decay":
        if not spec.width > 0:
            raise ModelError(f"gaussian width must be positive, got {spec.width}")
        K = spec.cutoff
        if K is None:
            K = int(math.ceil(spec.width * math.sqrt(2 * math.log(1e17))))
        for m in _cube(d, K):
            if any(m):
                table[tuple(m)] = complex(spec.amplitude * math.exp(-float(m @ m) / (2 * spec.width**2)))
    elif fam == "random-smooth":
        if not spec.width > 0:
            raise ModelError(f"random-smooth width must be positive, got {spec.width}")
        K = spec.cutoff if spec.cutoff is not None else int(math.ceil(3 * spec.width))
        rng = np.random.default_rng(0 if spec.seed is None else spec.seed)
        for m in _cube(d, K):
            key = tuple(m)
            if not any(key) or key in table:
                continue
            env = spec.amplitude * math.exp(-float(m @ m) / (2 * spec.width**2))
            c = env * complex(rng.standard_normal(), rng.standard_normal()) / math.sqrt(2)
            table[key] = c
            table[tuple(-m)] = np.conj(c)

    zero = (0,) * d
    table[zero] = table.get(zero, 0j) + spec.shift
    keys = sorted(table)
    freqs = np.array(keys, dtype=int).reshape(-1, d)
    coeffs = np.array([table[k] for k in keys], dtype=complex)
    coeffs[np.all(freqs == 0, axis=1)] = coeffs[np.all(freqs == 0, axis=1)].real
    return FourierPotential(d, freqs, coeffs, float(spec.shift))


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    """Frequencies ``m`` with ``|m|_inf <= cutoff`` in lexicographic order."""

    dimension: int
    cutoff: int
    freqs: np.ndarray

    def __post_init__(self):
        self.freqs.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.freqs)

    def index(self, m) -> int:
        """Position of frequency ``m`` in the ordering."""
        m = _as_freq(m, self.dimension)
        idx = 0
        for v in m:
            if abs(v) > self.cutoff:
                raise KeyError(m)
            idx = idx * (2 * self.cutoff + 1) + (v + self.cutoff)
        return idx


def build_basis(d: int, M_cut: int, max_size: int = MAX_BASIS_SIZE) -> PlaneWaveBasis:
    if d not in (1, 2, 3):
        raise ModelError(f"dimension must be 1, 2 or 3, got {d}")
    if M_cut < 1:
        raise ModelError(f"cutoff must be >= 1, got {M_cut}")
    size = (2 * M_cut + 1) ** d
    if size > max_size:
        raise ModelError(f"basis of size {size} exceeds the matrix-size limit {max_size}")
    return PlaneWaveBasis(d, M_cut, _cube(d, M_cut))


@dataclass(frozen=True, eq=False)
class KGrid:
    dimension: int
    n: int
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.points)


def sample_brillouin(d: int, n: int, offset: float = 0.0) -> KGrid:
    """Uniform Monkhorst-Pack grid on [-pi, pi)^d with equal weights (2 pi / n)^d.

    Points sit at ``-pi + (2i+1) pi / n`` (plus ``offset``), so the grid is
    symmetric under k -> -k and contains k = 0 exactly when n is odd.
    """
    if d not in (1, 2, 3):
        raise ModelError(f"dimension must be 1, 2 or 3, got {d}")
    if n < 1:
        raise ModelError(f"need at least one point per axis, got {n}")
    # integer numerators keep k -> -k symmetry bitwise exact
    axis = (2 * np.arange(n) + 1 - n) * (np.pi / n) + offset
    pts = np.array(list(itertools.product(axis, repeat=d)), dtype=float).reshape(-1, d)
    w = np.full(len(pts), (2 * np.pi / n) ** d)
    return KGrid(d, n, pts, w)


@dataclass(frozen=True)
class ContourSpec:
    """Truncated Fermi-Dirac contour around [-1, x_max].

    The two horizontal lines sit at ``+-delta``; ``delta <= pi / (2 beta)``
    keeps them away from the Fermi-Dirac poles ``mu + i pi (2l+1) / beta``.
    ``n_quad`` is the Gauss-Legendre order of each panel; panels are at most
    ``delta`` long.
    """

    beta: float
    mu: float
    delta: float | None = None
    x_max: float | None = None
    n_quad: int = 16

    def __post_init__(self):
        if not self.beta > 0:
            raise ModelError(f"beta must be positive, got {self.beta}")
        if self.delta is None:
            object.__setattr__(self, "delta", math.pi / (2 * self.beta))
        if not 0 < self.delta <= math.pi / (2 * self.beta) * (1 + 1e-14):
            raise ModelError(f"delta must lie in (0, pi/(2 beta)] = (0, {math.pi / (2 * self.beta)}], got {self.delta}")
        if self.x_max is None:
            object.__setattr__(self, "x_max", max(self.mu, -1.0) + 20.0 / self.beta)
        if not self.x_max > -1:
            raise ModelError(f"x_max must exceed -1, got {self.x_max}")
        if self.n_quad < 2:
            raise ModelError("n_quad must be at least 2")

    def covering(self, top: float, margin: float | None = None) -> "ContourSpec":
        """Copy whose truncation point also clears ``top`` by ``margin``."""
        if margin is None:
            margin = 20.0 / self.beta
        x_max = max(self.x_max, top + margin)
        return ContourSpec(self.beta, self.mu, self.delta, x_max, self.n_quad)

    @property
    def tail_bound(self) -> float:
        """Size of f_FD at the truncation point."""
        return math.exp(-self.beta * (self.x_max - self.mu))
