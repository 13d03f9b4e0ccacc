"""Sum rule and oscillation identity for A = p_alpha.

For A = p_alpha the double commutator [p, [h, p]] is multiplication by
d_alpha^2 V, so the left-hand side of the sum rule is <(d^2 V) u_m, u_m>
and the right-hand side is 2 sum_n |pi_mn|^2 (lambda_n - lambda_m).
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .fiber import FiberSpectrum, potential_matrix
from .model import FourierPotential
from .momentum import MomentumMatrix

IMAG_TOL = 1e-10


def curvature_matrix(V: FourierPotential, basis, alpha: int) -> np.ndarray:
    """Plane-wave matrix of d_alpha^2 V: entries -(2 pi q_alpha)^2 V^(q), q = m - m'."""
    return potential_matrix(V, basis, V.derivative_coeffs(alpha, 2))


def sumrule_lhs(V: FourierPotential, spec: FiberSpectrum, m: int, alpha: int = 0) -> float:
    """<[p_alpha, [h, p_alpha]] u_m, u_m> for band ``m`` (1-based)."""
    if spec.coefficients is None:
        raise ValueError("spectrum was solved without eigenvectors")
    c = spec.coefficients[m - 1]
    W = curvature_matrix(V, spec.basis, alpha)
    val = c.conj() @ W @ c
    if abs(val.imag) > IMAG_TOL * max(1.0, abs(val.real)):
        raise ValueError(f"sum-rule left-hand side not real: {val}")
    return float(val.real)


@dataclass(frozen=True)
class SumRulePartial:
    band: int
    cutoffs: list
    partial_sums: list
    lhs: float | None
    slope: float
    intercept: float
    fit_residual: float

    @property
    def relative_gap(self) -> float:
        """|R_J - LHS| / |LHS| at the largest cutoff."""
        if self.lhs is None:
            raise ValueError("no left-hand side attached")
        return abs(self.partial_sums[-1] - self.lhs) / abs(self.lhs)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["J", "R_J"])
            for J, R in zip(self.cutoffs, self.partial_sums):
                w.writerow([J, f"{R:.17g}"])

    def summary(self) -> dict:
        out = asdict(self)
        out["relative_gap"] = self.relative_gap if self.lhs not in (None, 0.0) else None
        return out

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def sumrule_terms(pi: MomentumMatrix, spec: FiberSpectrum, m: int) -> np.ndarray:
    """Terms 2 |pi_mn|^2 (lambda_n - lambda_m) for n = 1..n_bands."""
    n = min(pi.n_bands, spec.n_bands)
    lam = spec.eigenvalues[:n]
    return 2 * np.abs(pi.matrix[m - 1, :n]) ** 2 * (lam - lam[m - 1])


def tail_slope(cutoffs, values) -> tuple[float, float, float]:
    """Least-squares line through the upper half of (cutoff, value); returns slope, intercept, rms residual."""
    x = np.asarray(cutoffs, dtype=float)
    y = np.asarray(values, dtype=float)
    half = len(x) // 2
    x, y = x[half:], y[half:]
    if len(x) < 2:
        return 0.0, float(y[-1]) if len(y) else 0.0, 0.0
    slope, icpt = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return float(slope), float(icpt), res


def sumrule_rhs_partial(
    pi: MomentumMatrix,
    spec: FiberSpectrum,
    m: int,
    cutoffs,
    lhs: float | None = None,
) -> SumRulePartial:
    """Partial sums R_J = 2 sum_{n <= J} |pi_mn|^2 (lambda_n - lambda_m)."""
    cutoffs = [int(J) for J in cutoffs]
    n = min(pi.n_bands, spec.trusted)
    if max(cutoffs) > n:
        raise ValueError(f"cutoff {max(cutoffs)} beyond the {n} trusted bands")
    csum = np.cumsum(sumrule_terms(pi, spec, m))
    partial = [float(csum[J - 1]) for J in cutoffs]
    slope, icpt, res = tail_slope(cutoffs, partial)
    return SumRulePartial(m, cutoffs, partial, lhs, slope, icpt, res)


@dataclass(frozen=True)
class OscillationSeries:
    band: int
    J: int
    t: np.ndarray
    values: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        """|S_J(t) - S_J(0)|; S_J(0) = 0 identically."""
        return np.abs(self.values)

    def holder_exponent(self, t_min: float, t_max: float) -> float:
        """Slope of log |S_J(t)| against log t over t in [t_min, t_max]."""
        sel = (self.t >= t_min) & (self.t <= t_max) & (self.increments > 0)
        if sel.sum() < 2:
            raise ValueError("fewer than two usable points in the fit window")
        slope, _ = np.polyfit(np.log(self.t[sel]), np.log(self.increments[sel]), 1)
        return float(slope)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "S_J"])
            for t, v in zip(self.t, self.values):
                w.writerow([f"{t:.17g}", f"{v:.17g}"])


def oscillation_series(pi: MomentumMatrix, spec: FiberSpectrum, m: int, t_grid, J: int) -> OscillationSeries:
    """S_J(t) = 2 sum_{n <= J} |pi_mn|^2 sin(t (lambda_m - lambda_n))."""
    n = min(pi.n_bands, spec.trusted)
    if J > n:
        raise ValueError(f"J = {J} beyond the {n} trusted bands")
    t = np.asarray(t_grid, dtype=float)
    lam = spec.eigenvalues[:J]
    w = 2 * np.abs(pi.matrix[m - 1, :J]) ** 2
    vals = np.sin(np.multiply.outer(t, lam[m - 1] - lam)) @ w
    return OscillationSeries(m, J, t, vals)
