"""Empirical decay of momentum matrix elements with the band energy.

The bound under test is |pi_st| <= C_N lambda_s^(N+1/2) / lambda_t^N, and
the boundedness of h^N [p, h^-N], whose eigenbasis matrix is
lambda_s^N pi_st (lambda_t^-N - lambda_s^-N).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .fiber import FiberSpectrum
from .momentum import MomentumMatrix

NOISE_FLOOR = 1e-14
MAX_POWER = 4


class DegenerateFitError(ValueError):
    """Every matrix element in the window sits below the noise floor."""


def _trusted(pi: MomentumMatrix, spec: FiberSpectrum) -> int:
    return min(pi.n_bands, spec.trusted)


@dataclass(frozen=True)
class RatioEstimate:
    N: int
    value: float
    s: int
    t: int


def theorem1_ratio(pi: MomentumMatrix, spec: FiberSpectrum, N: int, s_max: int, t_max: int) -> RatioEstimate:
    """sup over s <= s_max, t <= t_max of |pi_st| lambda_t^N / lambda_s^(N+1/2).

    Evaluated in log space; exact zeros are skipped.  Band labels are 1-based.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    n = _trusted(pi, spec)
    if s_max < 1 or t_max < 1:
        raise ValueError("empty band range")
    if s_max > n or t_max > n:
        raise ValueError(f"band range ({s_max}, {t_max}) exceeds the {n} trusted bands")
    lam = np.log(spec.eigenvalues[:n])
    A = np.abs(pi.matrix[:s_max, :t_max])
    with np.errstate(divide="ignore"):
        L = np.log(A) + N * lam[None, :t_max] - (N + 0.5) * lam[:s_max, None]
    if not np.isfinite(L).any():
        raise ValueError("all matrix elements in range vanish")
    s, t = np.unravel_index(np.nanargmax(np.where(np.isfinite(L), L, -np.inf)), L.shape)
    return RatioEstimate(N, float(np.exp(L[s, t])), int(s) + 1, int(t) + 1)


@dataclass(frozen=True)
class Stabilization:
    N: int
    t_values: tuple
    ratios: tuple
    relative_change: float
    stabilized: bool


def ratio_stabilization(
    pi: MomentumMatrix,
    spec: FiberSpectrum,
    N: int,
    s_max: int,
    t_values=(100, 200),
    rel_tol: float = 0.01,
) -> Stabilization:
    """Track the C_N estimate as the t range grows; flag whether the last step moved it < rel_tol."""
    ratios = tuple(theorem1_ratio(pi, spec, N, s_max, t).value for t in t_values)
    change = abs(ratios[-1] - ratios[-2]) / abs(ratios[-2]) if len(ratios) > 1 else 0.0
    return Stabilization(N, tuple(t_values), ratios, float(change), bool(change < rel_tol))


@dataclass(frozen=True)
class DecayFit:
    """Power-law fit of the upper envelope of |pi_st| against lambda_t."""

    s: int
    eigenvalues: list
    magnitudes: list
    envelope_lambda: list
    envelope: list
    exponent: float
    amplitude: float
    window: tuple
    n_bands_used: int
    N: int | None = None
    C_N: float | None = None

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    def pairs_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("lambda_t,abs_pi_st\n")
            for lam, a in zip(self.eigenvalues, self.magnitudes):
                fh.write(f"{lam:.17g},{a:.17g}\n")


def envelope(lam: np.ndarray, mags: np.ndarray, n_bins: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Binned running maximum taken from the top of the window downwards.

    Bins are log-spaced in lambda; each bin keeps its largest entry and the
    result is then made non-increasing by a reverse cumulative maximum.
    Returns (bin representative lambda, envelope value) for non-empty bins.
    """
    edges = np.geomspace(lam.min(), lam.max() * (1 + 1e-12), n_bins + 1)
    which = np.clip(np.searchsorted(edges, lam, side="right") - 1, 0, n_bins - 1)
    xs, ys = [], []
    for b in range(n_bins):
        sel = which == b
        if sel.any():
            xs.append(np.sqrt(edges[b] * edges[b + 1]))
            ys.append(mags[sel].max())
    ys = np.maximum.accumulate(np.array(ys)[::-1])[::-1]
    return np.array(xs), ys


def decay_exponent_fit(
    pi: MomentumMatrix,
    spec: FiberSpectrum,
    s: int,
    lam_window: tuple[float, float],
    n_bins: int = 16,
    floor: float = NOISE_FLOOR,
    N: int | None = None,
) -> DecayFit:
    """Fit log(envelope |pi_st|) = exponent * log(lambda_t) + const over the window.

    Entries below ``floor`` are round-off and are left out of the envelope.
    """
    n = _trusted(pi, spec)
    lam = spec.eigenvalues[:n]
    lo, hi = lam_window
    sel = (lam >= lo) & (lam <= hi)
    sel[s - 1] = False
    if sel.sum() < 20:
        raise ValueError(f"window {lam_window} holds {sel.sum()} trusted bands; need at least 20")
    mags = np.abs(pi.matrix[s - 1, :n])
    lw, mw = lam[sel], mags[sel]
    live = mw >= floor
    if not live.any():
        raise DegenerateFitError(f"all |pi_{s}t| in window below {floor:g}")
    xs, ys = envelope(lw[live], mw[live], n_bins)
    if len(xs) < 2:
        raise DegenerateFitError("fewer than two envelope bins above the noise floor")
    slope, icpt = np.polyfit(np.log(xs), np.log(ys), 1)
    C_N = None
    if N is not None:
        C_N = theorem1_ratio(pi, spec, N, s, int(np.nonzero(sel)[0].max()) + 1).value
    return DecayFit(
        s=s,
        eigenvalues=lw.tolist(),
        magnitudes=mw.tolist(),
        envelope_lambda=xs.tolist(),
        envelope=ys.tolist(),
        exponent=float(slope),
        amplitude=float(np.exp(icpt)),
        window=(float(lo), float(hi)),
        n_bands_used=int(sel.sum()),
        N=N,
        C_N=C_N,
    )


@dataclass(frozen=True)
class CommutatorNormReport:
    N: int
    cutoffs: list
    norms: list
    stabilized: bool
    rel_tol: float = 0.02
    notes: list = field(default_factory=list)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


def commutator_matrix(pi: MomentumMatrix, spec: FiberSpectrum, N: int, J: int) -> np.ndarray:
    """Eigenbasis section J x J of h^N [p_alpha, h^-N]."""
    lam = spec.eigenvalues[:J]
    ratio = (lam[:, None] / lam[None, :]) ** N
    return pi.matrix[:J, :J] * (ratio - 1.0)


def commutator_norm(
    spec: FiberSpectrum,
    pi: MomentumMatrix,
    N: int,
    cutoffs=None,
    rel_tol: float = 0.02,
) -> CommutatorNormReport:
    """Largest singular value of the truncated h^N [p, h^-N] for each cutoff."""
    if not 1 <= N <= MAX_POWER:
        raise ValueError(f"N must be in [1, {MAX_POWER}]")
    n = _trusted(pi, spec)
    if cutoffs is None:
        cutoffs = [c for c in (n // 8, n // 4, n // 2, n) if c >= 2]
    cutoffs = [int(c) for c in cutoffs]
    if max(cutoffs) > n:
        raise ValueError(f"cutoff {max(cutoffs)} exceeds the {n} trusted bands")
    norms = [float(np.linalg.norm(commutator_matrix(pi, spec, N, J), 2)) for J in cutoffs]
    if len(norms) > 1:
        a, b = norms[-2], norms[-1]
        stable = abs(b - a) <= rel_tol * max(abs(a), abs(b)) if max(a, b) > 0 else True
    else:
        stable = False
    return CommutatorNormReport(N, cutoffs, norms, bool(stable), rel_tol)
