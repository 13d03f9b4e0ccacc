"""Momentum matrix elements between Bloch bands.

Convention: with u_j = sum_m c_{j,m} exp(2 pi i m.x),

    pi_st(alpha, k) = int u_s * conj[(-i d_alpha + k_alpha) u_t] dx
                    = sum_m (2 pi m_alpha + k_alpha) c_{s,m} conj(c_{t,m}),

i.e. the bilinear form is linear in the first slot.  The matrix is Hermitian
and ``pi_st`` is the complex conjugate of <u_s, (p+k) u_t> in the usual
physics convention.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .fiber import DEGENERACY_GAP, FiberSpectrum, assemble_fiber, solve_fiber
from .model import FourierPotential, PlaneWaveBasis


class DegenerateBandError(ValueError):
    """Requested band is (numerically) degenerate; derivative-type checks are skipped."""


@dataclass(frozen=True, eq=False)
class MomentumMatrix:
    alpha: int
    k: np.ndarray
    matrix: np.ndarray

    @property
    def n_bands(self) -> int:
        return len(self.matrix)

    def element(self, s: int, t: int) -> complex:
        """pi_st with 1-based band labels."""
        return complex(self.matrix[s - 1, t - 1])

    def hermiticity_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "t", "re_pi", "im_pi"])
            n = self.n_bands
            for s in range(n):
                for t in range(n):
                    z = self.matrix[s, t]
                    w.writerow([s + 1, t + 1, f"{z.real:.17g}", f"{z.imag:.17g}"])

    def summary(self) -> dict:
        A = np.abs(self.matrix)
        off = A - np.diag(np.diag(A))
        s, t = np.unravel_index(np.argmax(off), off.shape)
        return {
            "alpha": self.alpha,
            "k": self.k.tolist(),
            "n_bands": self.n_bands,
            "frobenius_norm": float(np.linalg.norm(self.matrix)),
            "max_abs_entry": float(A.max()),
            "max_abs_offdiagonal": float(off.max()),
            "argmax_offdiagonal": [int(s) + 1, int(t) + 1],
            "hermiticity_error": self.hermiticity_error(),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def momentum_matrix(spec: FiberSpectrum, alpha: int) -> MomentumMatrix:
    d = spec.basis.dimension
    if not 0 <= alpha < d:
        raise ValueError(f"direction index must be in [0, {d}), got {alpha}")
    if spec.coefficients is None:
        raise ValueError("spectrum was solved without eigenvectors")
    C = spec.coefficients
    q = 2 * np.pi * spec.basis.freqs[:, alpha] + spec.k[alpha]
    P = (C * q) @ C.conj().T
    P = 0.5 * (P + P.conj().T)
    return MomentumMatrix(alpha, spec.k, P)


@dataclass(frozen=True)
class FeynmanHellmann:
    band: int
    alpha: int
    diagonal: float
    fd_derivative: float
    residual: float


def _solve_at(V, basis, k, n_bands):
    return solve_fiber(assemble_fiber(V, basis, k), n_bands)


def feynman_hellmann_check(
    V: FourierPotential,
    basis: PlaneWaveBasis,
    k,
    band: int,
    alpha: int = 0,
    h_fd: float = 1e-4,
    gap_tol: float = 1e-6,
) -> FeynmanHellmann:
    """Compare 2 pi_jj with a central difference of lambda_j along ``alpha``.

    Raises
    ------
    DegenerateBandError
        if band ``band`` is within ``gap_tol`` of a neighbour at ``k``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    n = band + 1
    spec = _solve_at(V, basis, k, n)
    if spec.gap(band) <= gap_tol:
        raise DegenerateBandError(f"band {band} degenerate at k={k.tolist()} (gap {spec.gap(band):.3g})")
    pi = momentum_matrix(spec, alpha).matrix[band - 1, band - 1].real
    e = np.zeros_like(k)
    e[alpha] = h_fd
    up = _solve_at(V, basis, k + e, n).eigenvalues[band - 1]
    dn = _solve_at(V, basis, k - e, n).eigenvalues[band - 1]
    fd = (up - dn) / (2 * h_fd)
    return FeynmanHellmann(band, alpha, float(pi), float(fd), float(abs(2 * pi - fd)))


def is_degenerate(spec: FiberSpectrum, band: int, gap_tol: float = DEGENERACY_GAP) -> bool:
    return spec.gap(band) <= gap_tol


@dataclass(frozen=True, eq=False)
class SupNormReport:
    """Per-band bound sup|u_j| <= sum_m |c_{j,m}| and its growth in lambda_j."""

    eigenvalues: np.ndarray
    bounds: np.ndarray
    exponent: float
    log_amplitude: float


def supnorm_growth(spec: FiberSpectrum, n_bands: int | None = None) -> SupNormReport:
    if spec.coefficients is None:
        raise ValueError("spectrum was solved without eigenvectors")
    n = spec.trusted if n_bands is None else n_bands
    if n < 16:
        raise ValueError(f"need at least 16 trusted bands, got {n}")
    lam = spec.eigenvalues[:n]
    if lam[0] <= 0:
        raise ValueError("growth fit needs positive eigenvalues; shift the potential")
    bounds = np.abs(spec.coefficients[:n]).sum(axis=1)
    slope, icpt = np.polyfit(np.log(lam), np.log(bounds), 1)
    return SupNormReport(lam, bounds, float(slope), float(icpt))
