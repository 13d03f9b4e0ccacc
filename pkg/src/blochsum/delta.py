"""Semi-analytic delta-interaction fiber on the unit circle (k = 0).

Odd states are sqrt(2) sin(2 pi j x) with lambda_j = 4 pi^2 j^2.  Even states
are C_j (cos(beta_j x) + (g / beta_j) sin(beta_j x)) on [0, 1/2], extended
evenly, with beta tan(beta / 2) = g and beta_j in (2 pi (j-1), 2 pi j).

This even form has u'(0+) = g u(0), i.e. it solves -u'' + 2 g delta(x) u = lambda u;
:func:`fiber_strength` converts to the Fourier strength V^(m) = 2 g used by
the plane-wave solver.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .sumrule import tail_slope


def fiber_strength(g: float) -> float:
    """Fourier amplitude of the equivalent truncated-delta potential."""
    return 2.0 * g


def _offset(g: float, j: int) -> float:
    """eps = beta_j - 2 pi (j-1) in (0, pi), root of (2 pi (j-1) + eps) tan(eps / 2) = g."""
    base = 2 * math.pi * (j - 1)

    def F(e):  # pole-free form of the quantization condition
        return g * math.cos(e / 2) - (base + e) * math.sin(e / 2)

    lo, hi = 0.0, math.pi
    if not F(lo) > 0 > F(hi):
        raise ValueError(f"quantization root not bracketed for j={j}, g={g}")
    return brentq(F, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _norm_const(g: float, b: float) -> float:
    """C with 2 C^2 int_0^1/2 (cos bx + g/b sin bx)^2 dx = 1."""
    sb = math.sin(b) / (2 * b)
    n2 = (0.5 + sb) + (g / b) ** 2 * (0.5 - sb) + 2 * g / b**2 * math.sin(b / 2) ** 2
    return 1.0 / math.sqrt(n2)


@dataclass(frozen=True, eq=False)
class DeltaModel:
    g: float
    offsets: np.ndarray  # beta_j - 2 pi (j-1)
    beta: np.ndarray
    norms: np.ndarray  # C_j
    j_max: int

    @property
    def even_levels(self) -> np.ndarray:
        return self.beta**2

    @property
    def odd_levels(self) -> np.ndarray:
        j = np.arange(1, self.j_max + 1)
        return 4 * np.pi**2 * j**2

    def residuals(self) -> np.ndarray:
        """|beta_j tan(beta_j / 2) - g| evaluated through the offsets."""
        base = 2 * np.pi * np.arange(self.j_max)
        return np.abs((base + self.offsets) * np.tan(self.offsets / 2) - self.g)

    def even_state(self, j: int, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=float))
        b, C = self.beta[j - 1], self.norms[j - 1]
        return C * (np.cos(b * x) + self.g / b * np.sin(b * x))

    @staticmethod
    def odd_state(j: int, x) -> np.ndarray:
        return math.sqrt(2) * np.sin(2 * np.pi * j * np.asarray(x, dtype=float))

    def levels_csv(self, path) -> None:
        rows = [(j, "even", lam) for j, lam in enumerate(self.even_levels, 1)]
        rows += [(j, "odd", lam) for j, lam in enumerate(self.odd_levels, 1)]
        rows.sort(key=lambda r: r[2])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j", "parity", "lambda"])
            for j, par, lam in rows:
                w.writerow([j, par, f"{lam:.17g}"])


def delta_levels(g: float, j_max: int) -> DeltaModel:
    if not g > 0:
        raise ValueError(f"delta strength must be positive, got {g}")
    if j_max < 1:
        raise ValueError("j_max must be at least 1")
    offs = np.array([_offset(g, j) for j in range(1, j_max + 1)])
    beta = 2 * np.pi * np.arange(j_max) + offs
    norms = np.array([_norm_const(g, b) for b in beta])
    return DeltaModel(float(g), offs, beta, norms, int(j_max))


@dataclass(frozen=True)
class PiAsymptote:
    """pi_j = i <u~_1, u_j'> (purely imaginary); stored by imaginary parts."""

    j: int
    exact: float
    leading: float
    remainder: float


def _ground_cos_overlap(g: float, b: float, a: float) -> float:
    """int_0^1/2 (cos bx + g/b sin bx) cos(ax) dx for a != b."""
    s, d = b + a, b - a
    cc = 0.5 * (math.sin(d / 2) / d + math.sin(s / 2) / s)
    sc = 0.5 * ((1 - math.cos(s / 2)) / s + (1 - math.cos(d / 2)) / d)
    return cc + g / b * sc


def delta_pi(model: DeltaModel, j: int) -> PiAsymptote:
    """Matrix element between the even ground state and the j-th odd state.

    Exact: Im pi_j = 2 sqrt(2) (2 pi j) C_1 int_0^1/2 u~_1 cos(2 pi j x) / C_1 dx.
    Leading term: -sqrt(2) C_1 g / (j pi); the remainder is O(1/j^3).
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    b, C, g = model.beta[0], model.norms[0], model.g
    a = 2 * math.pi * j
    exact = 2 * math.sqrt(2) * a * C * _ground_cos_overlap(g, b, a)
    leading = -math.sqrt(2) * C * g / (j * math.pi)
    return PiAsymptote(j, exact, leading, exact - leading)


def pi_table_csv(model: DeltaModel, js, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "im_pi", "leading", "remainder"])
        for j in js:
            p = delta_pi(model, int(j))
            w.writerow([p.j, f"{p.exact:.17g}", f"{p.leading:.17g}", f"{p.remainder:.17g}"])


def riemann_partial_sum(t, J: int) -> np.ndarray:
    """S_J(t) = sum_{j <= J} sin(4 pi^2 j^2 t) / j^2, vectorized over t."""
    t = np.asarray(t, dtype=float)
    j = np.arange(1, J + 1, dtype=float)
    out = np.empty(t.shape)
    flat = t.ravel()
    res = out.ravel()
    for lo in range(0, flat.size, 64):
        chunk = flat[lo : lo + 64]
        res[lo : lo + 64] = np.sin(np.multiply.outer(chunk, 4 * np.pi**2 * j**2)) @ (1 / j**2)
    return res.reshape(t.shape)


@dataclass(frozen=True)
class HolderFit:
    exponent: float
    t: list
    values: list
    J: int
    tail_bound: float


def holder_fit(t_min: float, t_max: float, J: int = 10_000, n_points: int = 25, tail_fraction: float = 0.02) -> HolderFit:
    """Log-log slope of |S_J(t)| over log-spaced t in [t_min, t_max].

    The crude tail bound sum_{j > J} 1/j^2 < 1/J must stay below
    ``tail_fraction`` of the smallest sampled |S_J(t)|.
    """
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    if J < 100:
        raise ValueError("J must be at least 100 for a fit")
    t = np.geomspace(t_min, t_max, n_points)
    S = riemann_partial_sum(t, J)
    tail = 1.0 / J
    if tail > tail_fraction * np.abs(S).min():
        raise ValueError(
            f"tail bound {tail:.2e} exceeds {tail_fraction:g} of min |S_J| = {np.abs(S).min():.2e}; raise J"
        )
    slope, _ = np.polyfit(np.log(t), np.log(np.abs(S)), 1)
    return HolderFit(float(slope), t.tolist(), S.tolist(), int(J), tail)


@dataclass(frozen=True)
class DivergenceReport:
    cutoffs: list
    partial_sums: list
    slope: float
    predicted_slope: float
    fit_residual: float

    @property
    def relative_error(self) -> float:
        return abs(self.slope - self.predicted_slope) / abs(self.predicted_slope)

    def to_json(self, path) -> None:
        out = dict(self.__dict__, relative_error=self.relative_error)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["J", "R_J"])
            for J, R in zip(self.cutoffs, self.partial_sums):
                w.writerow([J, f"{R:.17g}"])


def sumrule_terms(model: DeltaModel, J: int) -> np.ndarray:
    """2 |pi_j|^2 (4 pi^2 j^2 - lambda~_1) for odd levels j = 1..J."""
    pis = np.array([delta_pi(model, j).exact for j in range(1, J + 1)])
    j = np.arange(1, J + 1)
    return 2 * pis**2 * (4 * np.pi**2 * j**2 - model.even_levels[0])


def delta_sumrule_divergence(model: DeltaModel, cutoffs) -> DivergenceReport:
    """Partial sums of the (divergent) sum rule and their linear growth rate.

    The slope is fitted on the upper half of ``cutoffs``; the prediction from
    the leading asymptote is 16 C_1^2 g^2 per odd level.
    """
    cutoffs = sorted(int(c) for c in cutoffs)
    csum = np.cumsum(sumrule_terms(model, cutoffs[-1]))
    partial = [float(csum[J - 1]) for J in cutoffs]
    slope, _, res = tail_slope(cutoffs, partial)
    pred = 16 * model.norms[0] ** 2 * model.g**2
    return DivergenceReport(cutoffs, partial, slope, float(pred), res)
