"""Trace per unit volume of Fermi-Dirac weighted resolvent products.

Per k-point, the z-integral over the contour of f_FD(z) / prod_j (lambda_j - z)
equals (-1)^n 2 pi i f_FD[lambda_1, ..., lambda_n] (counterclockwise
contour), so the band-sum route only needs divided differences of f_FD.  The
direct route integrates the matrix trace of prod (p_a + k_a)(h(k) - z)^-1
numerically along the same contour and serves as an independent check.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import expit

from .fiber import assemble_fiber, solve_fiber
from .model import ContourSpec, FourierPotential, KGrid, PlaneWaveBasis
from .momentum import momentum_matrix

MAX_DERIVATIVE = 8
CONFLUENCE_TOL = 1e-8
MAX_ORACLE_DIM = 513
MAX_ORACLE_NODES = 4000


class ConfluenceError(ValueError):
    """A node cluster needs a derivative beyond the implemented closed forms."""


@lru_cache(maxsize=None)
def _logistic_poly(n: int) -> np.ndarray:
    """Coefficients of P_n with d^n/dy^n sigma(y) = P_n(sigma(y))."""
    if n == 0:
        return np.array([0.0, 1.0])
    prev = _logistic_poly(n - 1)
    return npoly.polymul(npoly.polyder(prev), [0.0, 1.0, -1.0])


class FermiDirac:
    """f(x) = 1 / (exp(beta (x - mu)) + 1) with closed-form derivatives up to order 8."""

    def __init__(self, beta: float, mu: float):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)
        self.mu = float(mu)

    def __call__(self, x):
        x = np.asarray(x)
        if np.iscomplexobj(x):
            y = self.beta * (x - self.mu)
            pos = y.real > 0
            e = np.exp(np.where(pos, -y, y))
            return np.where(pos, e / (1 + e), 1 / (1 + e))
        return expit(-self.beta * (x - self.mu))

    def derivative(self, x, n: int):
        """n-th derivative in x, exact up to rounding for n <= 8."""
        if n == 0:
            return self(x)
        if n > MAX_DERIVATIVE:
            raise ConfluenceError(f"derivative order {n} exceeds the implemented maximum {MAX_DERIVATIVE}")
        y = -self.beta * (np.asarray(x, dtype=float) - self.mu)
        # sigma^(n)(-y) = (-1)^(n+1) sigma^(n)(y): evaluate where sigma is small
        sign = np.where(y > 0, (-1.0) ** (n + 1), 1.0)
        s = expit(-np.abs(y))
        val = sign * npoly.polyval(s, _logistic_poly(n))
        return (-self.beta) ** n * val

    def complement(self) -> "FermiDirac":
        """1 - f, as a Fermi-Dirac-like object (used for nodes deep below mu)."""
        return _Complement(self.beta, self.mu)


class _Complement(FermiDirac):
    def __call__(self, x):
        return expit(self.beta * (np.asarray(x, dtype=float) - self.mu))

    def derivative(self, x, n: int):
        if n == 0:
            return self(x)
        return -super().derivative(x, n)


def _clusters(nodes: np.ndarray, tol: float) -> np.ndarray:
    """Sorted nodes with each run of near-equal neighbours replaced by its mean."""
    z = np.sort(nodes)
    out = z.copy()
    start = 0
    for i in range(1, len(z) + 1):
        if i == len(z) or z[i] - z[i - 1] >= tol * max(1.0, abs(z[i])):
            out[start:i] = z[start:i].mean()
            start = i
    return out


def divided_difference(f, nodes, confluence_tol: float = CONFLUENCE_TOL, derivative=None) -> float:
    """Newton divided difference f[x_1, ..., x_n], confluent nodes included.

    Nodes closer than ``confluence_tol`` (relative for |x| > 1) are merged;
    a k-fold node uses f^(j)(x) / j! for the collapsed entries.  ``derivative``
    is ``derivative(x, order)``; by default ``f.derivative`` is used when present.
    """
    x = np.asarray(nodes, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one node")
    if derivative is None:
        derivative = getattr(f, "derivative", None)
    z = _clusters(x, confluence_tol)
    n = len(z)
    col = np.array([float(f(v)) for v in z])
    for j in range(1, n):
        nxt = np.empty(n - j)
        for i in range(n - j):
            if z[i + j] == z[i]:
                if derivative is None:
                    raise ConfluenceError("confluent nodes need derivatives of f")
                if j > MAX_DERIVATIVE:
                    raise ConfluenceError(f"{j + 1}-fold node needs derivative order {j} > {MAX_DERIVATIVE}")
                nxt[i] = float(derivative(z[i], j)) / math.factorial(j)
            else:
                nxt[i] = (col[i + 1] - col[i]) / (z[i + j] - z[i])
        col = nxt
    return float(col[0])


def fd_divided_difference(nodes, fd: FermiDirac, confluence_tol: float = CONFLUENCE_TOL) -> float:
    """f_FD[nodes], switching to -(1 - f_FD)[nodes] when every node lies below mu."""
    x = np.asarray(nodes, dtype=float)
    if len(x) > 1 and x.max() < fd.mu:
        return -divided_difference(fd.complement(), x, confluence_tol)
    return divided_difference(fd, x, confluence_tol)


def contour_nodes(contour: ContourSpec) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes z and complex weights dz along the truncated contour.

    Counterclockwise: lower line -1 - i delta -> x_max - i delta, upper line
    x_max + i delta -> -1 + i delta, then down the segment at Re z = -1.
    """
    t, w = np.polynomial.legendre.leggauss(contour.n_quad)
    d = contour.delta
    segs = [
        (complex(-1, -d), complex(contour.x_max, -d)),
        (complex(contour.x_max, d), complex(-1, d)),
        (complex(-1, d), complex(-1, -d)),
    ]
    zs, ws = [], []
    for a, b in segs:
        n_pan = max(1, math.ceil(abs(b - a) / d))
        edges = a + (b - a) * np.linspace(0, 1, n_pan + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = (hi - lo) / 2
            zs.append(lo + half * (t + 1))
            ws.append(half * w)
    return np.concatenate(zs), np.concatenate(ws)


def contour_integral_quadrature(contour: ContourSpec, nodes, tol: float = 1e-8) -> complex:
    """Integral over the contour of f_FD(z) prod_j (lambda_j - z)^-1 dz."""
    lam = np.asarray(nodes, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("need at least one node")
    if np.any(lam <= -1):
        raise ValueError(f"nodes must lie inside the contour (> -1); got min {lam.min()}")
    if np.any(lam >= contour.x_max):
        raise ValueError(f"node {lam.max()} lies beyond x_max = {contour.x_max}; use ContourSpec.covering")
    if contour.tail_bound > tol:
        warnings.warn(
            f"contour truncation tail ~{contour.tail_bound:.2e} exceeds {tol:.1e}; raise x_max",
            RuntimeWarning,
            stacklevel=2,
        )
    z, dz = contour_nodes(contour)
    fd = FermiDirac(contour.beta, contour.mu)
    integrand = fd(z) / np.prod(lam[:, None] - z[None, :], axis=0)
    return complex(np.sum(integrand * dz))


def residue_value(contour: ContourSpec, nodes) -> complex:
    """(-1)^n 2 pi i f_FD[nodes]: the exact contour integral."""
    n = len(nodes)
    fd = FermiDirac(contour.beta, contour.mu)
    return (-1) ** n * 2j * math.pi * fd_divided_difference(nodes, fd)


@dataclass(frozen=True, eq=False)
class TraceResult:
    alphas: tuple
    value: complex
    method: str
    J: int | None
    grid_n: int
    k_points: np.ndarray
    per_k: np.ndarray
    abs_sums: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    @property
    def imag_part(self) -> float:
        return float(abs(self.value.imag))

    def summary(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "value_re": self.value.real,
            "value_im": self.value.imag,
            "method": self.method,
            "J": self.J,
            "grid_n": self.grid_n,
            "max_abs_sum": None if self.abs_sums is None else float(np.max(self.abs_sums)),
            "config": self.config,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        d = self.k_points.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = [f"k{a + 1}" for a in range(d)] + ["re", "im"]
            if self.abs_sums is not None:
                head.append("abs_sum")
            w.writerow(head)
            for i, (k, v) in enumerate(zip(self.k_points, self.per_k)):
                row = [f"{x:.17g}" for x in k] + [f"{v.real:.17g}", f"{v.imag:.17g}"]
                if self.abs_sums is not None:
                    row.append(f"{self.abs_sums[i]:.17g}")
                w.writerow(row)


def _check_alphas(alphas, d):
    alphas = tuple(int(a) for a in alphas)
    if not alphas:
        raise ValueError("need at least one direction index")
    if any(not 0 <= a < d for a in alphas):
        raise ValueError(f"direction indices must be in [0, {d})")
    return alphas


def _band_sum_at_k(V, basis, fd, alphas, J, k):
    n = len(alphas)
    spec = solve_fiber(assemble_fiber(V, basis, k), J)
    lam = spec.eigenvalues
    pis = {a: momentum_matrix(spec, a).matrix for a in set(alphas)}
    cache: dict = {}
    total = 0j
    abs_total = 0.0
    sign = (-1) ** n * 2j * math.pi
    for idx in itertools.product(range(J), repeat=n):
        prod = 1 + 0j
        for pos, a in enumerate(alphas):
            prod *= pis[a][idx[pos], idx[(pos + 1) % n]]
        if prod == 0:
            continue
        key = tuple(sorted(idx))
        dd = cache.get(key)
        if dd is None:
            try:
                dd = fd_divided_difference(lam[list(key)], fd)
            except ConfluenceError as exc:
                raise ConfluenceError(f"band tuple {tuple(i + 1 for i in idx)} at k={list(k)}: {exc}") from exc
            cache[key] = dd
        term = prod * sign * dd
        total += term
        abs_total += abs(term)
    return total, abs_total


def trace_per_unit_volume(
    V: FourierPotential,
    basis: PlaneWaveBasis,
    contour: ContourSpec,
    alphas,
    J: int,
    grid: KGrid,
    executor=None,
) -> TraceResult:
    """Band-sum route: (2 pi)^-d sum_k w_k sum_{j_1..j_n <= J} pi_j1j2(a_1) ... pi_jnj1(a_n) (-1)^n 2 pi i f[lambda_j1..lambda_jn].

    With the momentum-element convention of :mod:`blochsum.momentum` the
    product of matrix elements is the trace of the (p+k) operators taken in
    reverse order, so this matches :func:`trace_oracle_direct` called with
    ``alphas[::-1]`` (identical for n <= 2, and for real symmetric fibers).
    """
    alphas = _check_alphas(alphas, basis.dimension)
    if not 1 <= J <= basis.size // 2:
        raise ValueError(f"J must be within the trusted range [1, {basis.size // 2}]")
    fd = FermiDirac(contour.beta, contour.mu)
    mapper = executor.map if executor is not None else map
    out = list(mapper(lambda k: _band_sum_at_k(V, basis, fd, alphas, J, k), list(grid.points)))
    per_k = np.array([o[0] for o in out])
    abs_sums = np.array([o[1] for o in out])
    value = complex(np.sum(grid.weights * per_k) / (2 * math.pi) ** grid.dimension)
    return TraceResult(alphas, value, "band-sum", J, grid.n, grid.points.copy(), per_k, abs_sums)


def _oracle_at_k(V, basis, contour, alphas, k, z, dz, fz, batch=64):
    op = assemble_fiber(V, basis, k)
    H = op.matrix
    N = len(H)
    lam = np.linalg.eigvalsh(H)
    dist = np.abs(lam[None, :] - z[:, None]).min()
    if dist < 1e-8:
        raise ValueError(f"contour node within {dist:.1e} of the spectrum at k={list(k)}")
    ps = [2 * np.pi * basis.freqs[:, a] + k[a] for a in alphas]
    eye = np.eye(N)
    total = 0j
    for lo in range(0, len(z), batch):
        zb = z[lo : lo + batch]
        R = np.linalg.inv(H[None, :, :] - zb[:, None, None] * eye)
        M = ps[0][None, :, None] * R
        for p in ps[1:]:
            M = M @ (p[None, :, None] * R)
        tr = np.trace(M, axis1=1, axis2=2)
        total += np.sum(fz[lo : lo + batch] * tr * dz[lo : lo + batch])
    return total


def trace_oracle_direct(
    V: FourierPotential,
    basis: PlaneWaveBasis,
    contour: ContourSpec,
    alphas,
    grid: KGrid,
    executor=None,
) -> TraceResult:
    """Direct route: integrate f_FD(z) Tr[(p_a1+k_a1) R(z) ... (p_an+k_an) R(z)] over the contour, then over k."""
    alphas = _check_alphas(alphas, basis.dimension)
    if basis.size > MAX_ORACLE_DIM:
        raise ValueError(f"basis size {basis.size} exceeds the oracle limit {MAX_ORACLE_DIM}")
    z, dz = contour_nodes(contour)
    if len(z) > MAX_ORACLE_NODES:
        raise ValueError(f"{len(z)} contour nodes exceed the oracle limit {MAX_ORACLE_NODES}")
    fz = FermiDirac(contour.beta, contour.mu)(z)
    mapper = executor.map if executor is not None else map
    per_k = np.array(list(mapper(lambda k: _oracle_at_k(V, basis, contour, alphas, k, z, dz, fz), list(grid.points))))
    value = complex(np.sum(grid.weights * per_k) / (2 * math.pi) ** grid.dimension)
    return TraceResult(alphas, value, "direct-quadrature", None, grid.n, grid.points.copy(), per_k)


def compare_traces(a: TraceResult, b: TraceResult) -> dict:
    """Relative difference of the totals and the k-point with the largest per-k mismatch."""
    scale = max(abs(a.value), abs(b.value), 1e-300)
    diff = np.abs(a.per_k - b.per_k)
    i = int(np.argmax(diff))
    return {
        "relative_difference": float(abs(a.value - b.value) / scale),
        "worst_k": a.k_points[i].tolist(),
        "worst_k_difference": float(diff[i]),
    }
