"""Dense complex matrix kernel.

Everything downstream asks positivity questions of small dense Hermitian
matrices (Choi matrices, kernels, Loewner matrices).  This module answers
them with a deterministic cyclic Jacobi eigensolver and a pivoted Cholesky
factorisation, plus a few helpers built on top of them.

Tolerances follow one ladder, always scaled by ``max(1, ||A||)``:

=============  =======  ==========================================
name           value    used for
=============  =======  ==========================================
``TOL_HERM``   1e-12    accepting a matrix as Hermitian
``TOL_PSD``    1e-9     PSD verdicts and numerical rank
``TOL_RECON``  1e-10    reconstruction checks (U diag U*, R*R)
=============  =======  ==========================================
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DomainViolation, NoConvergence, NotHermitian, NotPsd, ShapeMismatch

TOL_HERM = 1e-12
TOL_PSD = 1e-9
TOL_RECON = 1e-10

MAX_SWEEPS = 100
_OFF_TOL = 1e-14


def as_matrix(A, square: bool = False) -> np.ndarray:
    """Return ``A`` as a finite 2-D complex array (copy)."""
    M = np.array(A, dtype=complex)
    if M.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def dagger(A: np.ndarray) -> np.ndarray:
    return np.conj(A).T


def scale(A: np.ndarray) -> float:
    """``max(1, ||A||_F)``, the reference size for relative tolerances."""
    return max(1.0, float(np.linalg.norm(A))) if A.size else 1.0


def hermitian_defect(A: np.ndarray) -> float:
    return float(np.linalg.norm(A - dagger(A))) if A.size else 0.0


def require_hermitian(A, tol: float = TOL_HERM) -> np.ndarray:
    M = as_matrix(A, square=True)
    d = hermitian_defect(M)
    if d > tol * scale(M):
        raise NotHermitian(f"matrix is not Hermitian (||A - A*|| = {d:.3e})", asymmetry=d)
    return (M + dagger(M)) / 2


@dataclass(frozen=True)
class HermEig:
    eigenvalues: np.ndarray  # ascending, real
    basis: np.ndarray  # unitary, columns are eigenvectors

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ dagger(self.basis)


@dataclass(frozen=True)
class LowRankFactor:
    """``factor.conj().T @ factor`` reproduces the factored matrix."""

    rank: int
    factor: np.ndarray  # rank x n
    pivots: tuple = ()

    def reconstruct(self) -> np.ndarray:
        return dagger(self.factor) @ self.factor


@dataclass(frozen=True)
class PsdVerdict:
    is_psd: bool
    min_eigenvalue: float
    tol: float
    witness: Optional[np.ndarray] = None
    factor: Optional[LowRankFactor] = None

    def __bool__(self):
        return self.is_psd


@lru_cache(maxsize=None)
def _round_robin(n: int):
    """Pair schedule for one sweep: n-1 (or n) rounds of disjoint pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = map(np.array, zip(*pairs))
            rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


@lru_cache(maxsize=None)
def _scatter(n: int):
    """Per round: pair indices plus flat positions of the rotation entries and of the zeroed pairs."""
    out = []
    for p, q in _round_robin(n):
        rot = np.concatenate([p * n + p, p * n + q, q * n + p, q * n + q])
        zero = np.concatenate([p * n + q, q * n + p])
        out.append((p, q, rot, zero))
    return tuple(out)


def _jacobi(A: np.ndarray):
    n = A.shape[0]
    real = not np.iscomplexobj(A) or not np.any(A.imag)
    dtype = float if real else complex
    A = np.array(A.real if real else A, dtype=dtype)
    V = np.eye(n, dtype=dtype)
    if n < 2:
        return A.diagonal().real.copy(), V.astype(complex)
    target = _OFF_TOL * np.linalg.norm(A)
    # rotating on subnormal entries overflows the phase; they are far below target anyway
    negligible = max(_OFF_TOL * 1e-4 * np.linalg.norm(A), np.finfo(float).tiny)
    rounds = _scatter(n)
    eye = np.eye(n, dtype=dtype)
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(MAX_SWEEPS):
        if np.linalg.norm(A[offmask]) <= target:
            return A.diagonal().real.copy(), V.astype(complex)
        for p, q, rot, zero in rounds:
            apq = A[p, q]
            mag = np.abs(apq)
            live = mag > negligible
            full = live.all()
            if not full:
                if not live.any():
                    continue
                mag = np.where(live, mag, 1.0)
                apq = np.where(live, apq, 1.0)
            d = A.diagonal().real
            tau = (d[q] - d[p]) / (2 * mag)
            t = np.copysign(1.0, tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            if not full:
                t[~live] = 0.0
            c = 1 / np.sqrt(1.0 + t * t)
            s = t * c
            cph = np.conj(apq / mag)
            # one round of disjoint rotations as a single unitary J; A <- J^* A J
            J = eye.copy()
            J.flat[rot] = np.concatenate([c, s, -s * cph, c * cph])
            A = dagger(J) @ A @ J
            A.flat[zero] = 0
            V = V @ J
    raise NoConvergence(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")


def herm_eig(A, tol_herm: float = TOL_HERM) -> HermEig:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi.

    Each sweep visits every off-diagonal pair once, in a fixed round-robin
    order in which the pairs of one round are disjoint, so a round is
    applied as a single vectorised update.  Iteration stops when the
    off-diagonal Frobenius mass drops below ``1e-14 * ||A||``.

    :raises NotHermitian: if ``||A - A*|| > tol_herm * max(1, ||A||)``.
    :raises NoConvergence: after 100 sweeps.
    """
    M = require_hermitian(A, tol_herm)
    w, V = _jacobi(M)
    order = np.argsort(w, kind="stable")
    return HermEig(w[order], V[:, order])


def _pivoted_cholesky(M: np.ndarray, tol: float) -> LowRankFactor:
    n = M.shape[0]
    S = M.copy()
    thresh = tol * scale(M)
    rows, pivots = [], []
    for _ in range(n):
        d = S.diagonal().real
        j = int(np.argmax(d))  # first maximal index wins ties
        if d[j] <= thresh:
            break
        row = S[j, :] / np.sqrt(d[j])
        row[pivots] = 0
        rows.append(row)
        pivots.append(j)
        S = S - np.outer(np.conj(row), row)
        S[j, :] = 0
        S[:, j] = 0
    R = np.array(rows, dtype=complex).reshape(len(rows), n)
    return LowRankFactor(len(rows), R, tuple(pivots))


def psd_check(A, tol: float = TOL_PSD) -> PsdVerdict:
    """Decide whether a Hermitian matrix is positive semidefinite.

    PSD means the smallest eigenvalue is at least ``-tol * max(1, ||A||)``.
    A negative verdict carries a unit eigenvector for the smallest
    eigenvalue; a positive one carries a pivoted Cholesky factor.
    """
    M = require_hermitian(A)
    if M.shape[0] == 0:
        return PsdVerdict(True, 0.0, tol, factor=LowRankFactor(0, np.zeros((0, 0), complex)))
    eig = herm_eig(M)
    lam = float(eig.eigenvalues[0])
    if lam < -tol * scale(M):
        return PsdVerdict(False, lam, tol, witness=eig.basis[:, 0].copy())
    return PsdVerdict(True, lam, tol, factor=_pivoted_cholesky(M, tol))


def pivoted_cholesky(A, tol: float = TOL_PSD) -> LowRankFactor:
    """Low-rank factor ``R`` (rank x n) with ``R* R = A``.

    Pivots on the largest remaining diagonal entry and stops once every
    remaining diagonal entry is below ``tol * max(1, ||A||)``.  Row ``k`` of
    ``R`` vanishes on the first ``k`` pivot columns.

    :raises NotPsd: if ``A`` fails :func:`psd_check` at ``tol``.
    """
    verdict = psd_check(A, tol)
    if not verdict.is_psd:
        raise NotPsd(
            f"matrix is not PSD (min eigenvalue {verdict.min_eigenvalue:.3e})",
            witness=verdict.witness,
            min_eigenvalue=verdict.min_eigenvalue,
        )
    return verdict.factor


def numerical_rank(A, tol: float = TOL_PSD) -> int:
    """Count of eigenvalues above ``tol * max eigenvalue`` (Hermitian A)."""
    w = herm_eig(A).eigenvalues
    if w.size == 0 or w[-1] <= 0:
        return 0
    return int(np.sum(w > tol * w[-1]))


def mat_fn(A, f: Callable, domain=None) -> np.ndarray:
    """Spectral calculus ``U diag(f(lambda)) U*``.

    ``domain`` is an open interval ``(lo, hi)``; when omitted it is taken
    from ``f.domain`` if present.

    :raises DomainViolation: listing the eigenvalues outside the domain.
    """
    eig = herm_eig(A)
    if domain is None:
        domain = getattr(f, "domain", None)
    lam = eig.eigenvalues
    if domain is not None:
        lo, hi = domain
        bad = lam[(lam <= lo) | (lam >= hi)]
        if bad.size:
            raise DomainViolation(f"eigenvalues outside {domain}: {bad.tolist()}", bad.tolist())
    fl = np.asarray(f(lam), dtype=complex)
    return (eig.basis * fl) @ dagger(eig.basis)


def op_norm(A) -> float:
    """Largest singular value, from the spectrum of ``A* A``."""
    M = as_matrix(A)
    if M.size == 0:
        return 0.0
    G = dagger(M) @ M if M.shape[1] <= M.shape[0] else M @ dagger(M)
    return float(np.sqrt(max(herm_eig(G).eigenvalues[-1], 0.0)))


def nullspace(A, tol: float = TOL_PSD) -> np.ndarray:
    """Orthonormal basis (columns) of the kernel; singular values <= tol * sigma_max count as zero."""
    M = as_matrix(A)
    n = M.shape[1]
    if M.size == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(M)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return np.conj(vh[r:]).T


def range_isometry(p, tol: float = TOL_PSD) -> np.ndarray:
    """Isometry ``P`` (n x r) with ``P P* = p`` for an orthogonal projection ``p``.

    For a diagonal projection the columns are the standard basis vectors
    of its support, in increasing order.
    """
    eig = herm_eig(p)
    keep = eig.eigenvalues > 0.5
    return eig.basis[:, keep]


def is_projection(p, tol: float = TOL_RECON) -> bool:
    P = as_matrix(p, square=True)
    s = scale(P)
    return hermitian_defect(P) <= tol * s and np.linalg.norm(P @ P - P) <= tol * s
