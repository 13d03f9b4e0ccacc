"""Fiber Hamiltonian h(k) = (-i grad + k)^2 + V in the plane-wave basis."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import FourierPotential, KGrid, PlaneWaveBasis

DEGENERACY_GAP = 1e-8


class SolverError(RuntimeError):
    """The dense eigensolver failed or produced unusable output."""


@dataclass(frozen=True, eq=False)
class FiberOperator:
    k: np.ndarray
    basis: PlaneWaveBasis
    matrix: np.ndarray

    @property
    def dimension(self) -> int:
        return self.basis.size

    def kinetic(self) -> np.ndarray:
        """Diagonal |2 pi m + k|^2."""
        return ((2 * np.pi * self.basis.freqs + self.k) ** 2).sum(axis=1)


@dataclass(frozen=True, eq=False)
class FiberSpectrum:
    """Eigenpairs of one fiber; ``coefficients[j]`` is band j+1 in basis order."""

    k: np.ndarray
    eigenvalues: np.ndarray
    coefficients: np.ndarray | None
    basis: PlaneWaveBasis

    @property
    def n_bands(self) -> int:
        return len(self.eigenvalues)

    @property
    def trusted(self) -> int:
        """Bands below half the basis size; the rest feel the cutoff."""
        return min(self.n_bands, self.basis.size // 2)

    def gap(self, band: int) -> float:
        """Distance from band ``band`` (1-based) to its nearest neighbour."""
        lam = self.eigenvalues
        j = band - 1
        left = lam[j] - lam[j - 1] if j > 0 else np.inf
        right = lam[j + 1] - lam[j] if j + 1 < len(lam) else np.inf
        return float(min(left, right))


@dataclass(frozen=True, eq=False)
class BandStructure:
    grid: KGrid
    eigenvalues: np.ndarray  # (n_k, n_bands)
    spectra: tuple[FiberSpectrum, ...] | None = None

    def to_csv(self, path) -> None:
        """Write one row per (k, band): k components, 1-based band index, eigenvalue."""
        d = self.grid.dimension
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"k{a + 1}" for a in range(d)] + ["band", "eigenvalue"])
            for k, lam in zip(self.grid.points, self.eigenvalues):
                for j, val in enumerate(lam, start=1):
                    w.writerow([f"{x:.17g}" for x in k] + [j, f"{val:.17g}"])


def _potential_box(V: FourierPotential, radius: int) -> np.ndarray:
    """Dense array of V^(q) for |q|_inf <= radius, index q + radius."""
    d = V.dimension
    box = np.zeros((2 * radius + 1,) * d, dtype=complex)
    for m, c in zip(V.freqs, V.coeffs):
        if np.abs(m).max() <= radius:
            box[tuple(m + radius)] += c
    return box


def potential_matrix(V: FourierPotential, basis: PlaneWaveBasis, coeffs=None) -> np.ndarray:
    """Matrix W(m, m') = W^(m - m') of multiplication by a function.

    ``coeffs`` overrides V's coefficients (same frequency list); used for
    derivatives of V.
    """
    if V.dimension != basis.dimension:
        raise ValueError(f"potential is {V.dimension}-dimensional, basis {basis.dimension}-dimensional")
    radius = 2 * basis.cutoff
    if V.max_frequency > radius:
        raise ValueError(
            f"potential frequency {V.max_frequency} exceeds 2*M_cut = {radius}; "
            "raise the basis cutoff or truncate the potential"
        )
    if coeffs is not None:
        V = FourierPotential(V.dimension, V.freqs, np.asarray(coeffs, dtype=complex), V.shift)
    box = _potential_box(V, radius)
    diff = basis.freqs[:, None, :] - basis.freqs[None, :, :] + radius
    return box[tuple(np.moveaxis(diff, -1, 0))]


def assemble_fiber(V: FourierPotential, basis: PlaneWaveBasis, k) -> FiberOperator:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (basis.dimension,):
        raise ValueError(f"k must have {basis.dimension} components, got {k.shape}")
    H = potential_matrix(V, basis)
    kin = ((2 * np.pi * basis.freqs + k) ** 2).sum(axis=1)
    H[np.diag_indices_from(H)] = H.diagonal().real + kin
    return FiberOperator(k, basis, H)


def fix_phases(C: np.ndarray) -> np.ndarray:
    """Rotate each row so its largest-magnitude entry is real and positive."""
    idx = np.argmax(np.abs(C), axis=1)
    pivot = C[np.arange(len(C)), idx]
    return C * (np.abs(pivot) / pivot)[:, None]


def solve_fiber(op: FiberOperator, n_bands: int | None = None, vectors: bool = True) -> FiberSpectrum:
    """Lowest ``n_bands`` eigenpairs (default: half the basis, the trusted range)."""
    n = op.dimension
    if n_bands is None:
        n_bands = n // 2
    if not 1 <= n_bands <= n:
        raise ValueError(f"n_bands must be in [1, {n}], got {n_bands}")
    try:
        # full divide-and-conquer solve: the tails of the eigenvectors stay
        # accurate far below eps * ||H||, which the decay fits rely on
        if vectors:
            lam, U = scipy.linalg.eigh(op.matrix, driver="evd")
            lam, U = lam[:n_bands], U[:, :n_bands]
        else:
            lam = scipy.linalg.eigh(op.matrix, eigvals_only=True, driver="evd")[:n_bands]
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigensolver failed at k={op.k.tolist()}: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise SolverError(f"non-finite eigenvalues at k={op.k.tolist()}")
    C = fix_phases(U.T) if vectors else None
    return FiberSpectrum(op.k, lam, C, op.basis)


def band_structure(
    V: FourierPotential,
    basis: PlaneWaveBasis,
    grid: KGrid,
    n_bands: int | None = None,
    keep_vectors: bool = False,
    executor=None,
) -> BandStructure:
    """Solve every fiber of ``grid``; results always come back in grid order.

    ``executor`` is any object with a ``map`` method (e.g. a
    ``concurrent.futures`` pool); the caller owns it.
    """

    def one(k):
        try:
            return solve_fiber(assemble_fiber(V, basis, k), n_bands, vectors=keep_vectors)
        except SolverError as exc:
            raise SolverError(f"band structure failed at k={list(k)}: {exc}") from exc

    mapper = executor.map if executor is not None else map
    spectra = tuple(mapper(one, list(grid.points)))
    lam = np.array([s.eigenvalues for s in spectra])
    return BandStructure(grid, lam, spectra if keep_vectors else None)


def free_levels(basis: PlaneWaveBasis, k, shift: float = 0.0) -> np.ndarray:
    """Sorted (2 pi m + k)^2 + shift over the basis."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return np.sort(((2 * np.pi * basis.freqs + k) ** 2).sum(axis=1) + shift)


def check_spectrum(spec: FiberSpectrum, floor: float | None = 1.0, tol: float = 1e-10) -> list[str]:
    """Problems with ordering, orthonormality and the lower bound (empty if fine)."""
    out = []
    lam = spec.eigenvalues
    if np.any(np.diff(lam) < 0):
        out.append("eigenvalues not ascending")
    if spec.coefficients is not None:
        C = spec.coefficients
        err = np.abs(C @ C.conj().T - np.eye(len(C))).max()
        if err > tol:
            out.append(f"eigenvectors not orthonormal (error {err:.3g})")
    if floor is not None and lam[0] < floor - 1e-12:
        out.append(f"lowest eigenvalue {lam[0]:.12g} below {floor}")
    return out

