"""k.p perturbation theory around a non-degenerate ground band."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .fiber import FiberSpectrum, assemble_fiber, solve_fiber
from .model import FourierPotential, PlaneWaveBasis
from .momentum import DegenerateBandError, MomentumMatrix

GAP_TOL = 1e-6
IMAG_TOL = 1e-10


class FeshbachDivergence(RuntimeError):
    def __init__(self, message, last: float, trace: list):
        super().__init__(message)
        self.last = last
        self.trace = trace


@dataclass(frozen=True)
class FeshbachResult:
    eigenvalue: float
    iterations: int
    residual: float
    trace: list = field(default_factory=list)


def feshbach_eigenvalue(
    V: FourierPotential,
    basis: PlaneWaveBasis,
    k0,
    k,
    tol: float = 1e-13,
    max_iter: int = 50,
    damping: float = 0.5,
) -> FeshbachResult:
    """Ground-band eigenvalue at ``k`` from the Feshbach map built at ``k0``.

    Iterates lam <- lam1(k0) + <u, W u> - <W u, (Q (h(k) - lam) Q)^-1 W u>,
    with W = h(k) - h(k0) = 2 (k-k0).(p+k0) + (k-k0)^2, u the ground state at
    k0 and Q the projector onto its complement (spanned by the other
    eigenvectors of h(k0)).  Steps are damped once the residual stops
    decreasing; three successive increases abort.
    """
    k0 = np.atleast_1d(np.asarray(k0, dtype=float))
    k = np.atleast_1d(np.asarray(k, dtype=float))
    h0 = assemble_fiber(V, basis, k0)
    spec0 = solve_fiber(h0, h0.dimension)
    if spec0.gap(1) <= GAP_TOL:
        raise DegenerateBandError(f"ground band degenerate at k0={k0.tolist()}")
    lam0 = spec0.eigenvalues[0]
    C = spec0.coefficients
    u = C[0]
    Q = C[1:].T  # columns span the complement

    hk = assemble_fiber(V, basis, k).matrix
    W = hk - h0.matrix
    Wu = W @ u
    first = (u.conj() @ Wu).real
    QWu = Q.conj().T @ Wu
    QhQ = Q.conj().T @ hk @ Q
    eye = np.eye(len(QhQ))

    def rhs(lam):
        y = np.linalg.solve(QhQ - lam * eye, QWu)
        return lam0 + first - (QWu.conj() @ y).real

    lam = lam0 + first
    trace = [float(lam)]
    res_prev = np.inf
    rises = 0
    step = 1.0
    for it in range(1, max_iter + 1):
        new = rhs(lam)
        res = abs(new - lam)
        if res <= tol * max(1.0, abs(lam)):
            trace.append(float(new))
            return FeshbachResult(float(new), it, float(abs(rhs(new) - new)), trace)
        if res > res_prev:
            rises += 1
            step = damping
            if rises >= 3:
                raise FeshbachDivergence(f"Feshbach iteration diverging at k={k.tolist()}", float(lam), trace)
        else:
            rises = 0
        res_prev = res
        lam = lam + step * (new - lam)
        trace.append(float(lam))
    raise FeshbachDivergence(f"no convergence in {max_iter} iterations", float(lam), trace)


def kp_second_derivative(spec: FiberSpectrum, pi: MomentumMatrix, band: int = 1) -> float:
    """d^2 lambda_1 / dk_alpha^2 = 2 + 8 sum_{j != 1} |pi_1j|^2 / (lambda_1 - lambda_j).

    Uses every band in ``spec``; pass a full spectrum for the truncated-basis exact value.
    """
    if band != 1:
        raise ValueError("only the ground band is supported")
    if spec.gap(1) <= GAP_TOL:
        raise DegenerateBandError(f"ground band degenerate at k={spec.k.tolist()}")
    n = min(pi.n_bands, spec.n_bands)
    lam = spec.eigenvalues[:n]
    w = np.abs(pi.matrix[0, 1:n]) ** 2
    return float(2 + 8 * np.sum(w / (lam[0] - lam[1:])))


def fd_second_derivative(V, basis, k, alpha: int = 0, h: float = 1e-3, band: int = 1, richardson: bool = False) -> float:
    """Central second difference of lambda_band along ``alpha``.

    Eigenvalue round-off is of order eps * ||h(k)||, which grows like
    M_cut^2 and is amplified by 1/h^2.  For large bases pass a larger ``h``
    with ``richardson=True``, which combines h and h/2 to cancel the
    O(h^2) truncation term.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    e = np.zeros_like(k)
    e[alpha] = 1.0

    def lam(kk):
        return solve_fiber(assemble_fiber(V, basis, kk), band, vectors=False).eigenvalues[band - 1]

    mid = lam(k)

    def D(step):
        return (lam(k + step * e) - 2 * mid + lam(k - step * e)) / step**2

    if not richardson:
        return float(D(h))
    return float((4 * D(h / 2) - D(h)) / 3)


@dataclass(frozen=True)
class NestedSumReport:
    """Displayed fourth-order k.p term, nested and reversed, with absolute sums."""

    cutoffs: list
    values: list
    reversed_values: list
    abs_sums: list
    imag_parts: list
    converged: bool
    tol: float

    @property
    def value(self) -> float:
        return self.values[-1]

    @property
    def order_difference(self) -> float:
        return abs(self.values[-1] - self.reversed_values[-1])

    @property
    def abs_increments(self) -> list:
        """Relative growth of A_J between consecutive cutoffs."""
        A = self.abs_sums
        return [(b - a) / a if a > 0 else 0.0 for a, b in zip(A[:-1], A[1:])]

    @property
    def tail_estimate(self) -> float:
        """Crude bound on A_inf - A_J: the last increment."""
        A = self.abs_sums
        return A[-1] - A[-2] if len(A) > 1 else float("nan")

    def to_json(self, path) -> None:
        out = asdict(self)
        out.update(order_difference=self.order_difference, abs_increments=self.abs_increments)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)


def _nested(P: np.ndarray, lam: np.ndarray, J: int):
    """Both summation orders and the absolute sum, bands 2..J (0-based 1..J-1)."""
    a = P[0, 1:J]  # pi_{1 j1}
    b = P[1:J, 0]  # pi_{j3 1}
    M = P[1:J, 1:J]
    D = 1.0 / (lam[1:J] - lam[0])
    # innermost first: j3, then j2, then j1
    v3 = M @ (D * b)
    v2 = M @ (D * v3)
    forward = a @ v2
    # outermost first: j1, then j2, then j3
    w1 = a @ M
    w2 = (w1 * D) @ M
    backward = (w2 * D) @ b
    Aa, Ab, AM = np.abs(a), np.abs(b), np.abs(M)
    total = Aa @ (AM @ (D * (AM @ (D * Ab))))
    return forward, backward, float(total)


def nested_sum_apatra2(pi: MomentumMatrix, spec: FiberSpectrum, J_cutoffs, tol: float = 1e-8) -> NestedSumReport:
    """sum_{j1,j2,j3 >= 2} pi_1j1 pi_j1j2 / (l_j2 - l_1) pi_j2j3 / (l_j3 - l_1) pi_j31 at each cutoff.

    ``converged`` is true when both the nested value and the absolute sum A_J
    move by less than ``tol`` (relative to max(1, |.|)) over the last cutoff step.
    """
    if spec.gap(1) <= GAP_TOL:
        raise DegenerateBandError("ground band degenerate")
    cutoffs = [int(J) for J in J_cutoffs]
    n = min(pi.n_bands, spec.trusted)
    if max(cutoffs) > n:
        raise ValueError(f"cutoff {max(cutoffs)} beyond the {n} trusted bands")
    lam = spec.eigenvalues
    vals, revs, abss, imags = [], [], [], []
    for J in cutoffs:
        f, r, A = _nested(pi.matrix, lam, J)
        vals.append(float(f.real))
        revs.append(float(r.real))
        imags.append(float(max(abs(f.imag), abs(r.imag))))
        abss.append(A)
    converged = False
    if len(cutoffs) > 1:
        dv = abs(vals[-1] - vals[-2]) <= tol * max(1.0, abs(vals[-1]))
        dA = abs(abss[-1] - abss[-2]) <= tol * max(1.0, abss[-1])
        converged = bool(dv and dA)
    return NestedSumReport(cutoffs, vals, revs, abss, imags, converged, tol)
