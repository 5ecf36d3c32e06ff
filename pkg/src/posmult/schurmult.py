"""Schur multipliers on finite weighted point sets.

A kernel ``phi`` on points ``x_1, ..., x_n`` acts on ``n x n`` matrices by
the entrywise product.  It is a positive multiplier exactly when its value
matrix is PSD, and then ``phi(x_i, x_j) = <a(x_i), a(x_j)>`` for vectors
``a(x)`` read off a pivoted Cholesky factor.

Inner products are linear in the first slot: ``<u, v> = sum u_k conj(v_k)``.
Weights are carried along but never enter the numerics; in orthonormal
coordinates the multiplier acts entrywise whatever the measure.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InconsistentRestriction, NotMinimalInput, NotPsd, ShapeMismatch
from .matcore import (
    TOL_PSD,
    TOL_RECON,
    PsdVerdict,
    as_matrix,
    dagger,
    psd_check,
    require_hermitian,
    scale,
)


@dataclass(frozen=True, eq=False)
class WeightedPointSet:
    labels: tuple
    weights: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(labels) != w.size:
            raise ShapeMismatch(f"{len(labels)} labels but {w.size} weights")
        if len(set(labels)) != len(labels):
            raise ValueError("point labels must be unique")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int) -> "WeightedPointSet":
        return cls(tuple(range(n)), np.ones(n))

    def __len__(self):
        return len(self.labels)

    def subset(self, idx: Sequence[int]) -> "WeightedPointSet":
        idx = list(idx)
        return WeightedPointSet(tuple(self.labels[i] for i in idx), self.weights[idx])

    def reweighted(self, weights) -> "WeightedPointSet":
        return WeightedPointSet(self.labels, weights)


@dataclass(frozen=True, eq=False)
class Kernel:
    space: WeightedPointSet
    values: np.ndarray

    def __post_init__(self):
        v = as_matrix(self.values, square=True)
        if v.shape[0] != len(self.space):
            raise ShapeMismatch(f"{v.shape[0]}x{v.shape[0]} values over {len(self.space)} points")
        object.__setattr__(self, "values", v)

    @classmethod
    def of(cls, values, labels: Sequence = None, weights: Sequence = None) -> "Kernel":
        v = as_matrix(values, square=True)
        n = v.shape[0]
        labels = tuple(range(n)) if labels is None else tuple(labels)
        weights = np.ones(n) if weights is None else weights
        return cls(WeightedPointSet(labels, weights), v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def restrict(self, idx: Sequence[int]) -> "Kernel":
        idx = list(idx)
        return Kernel(self.space.subset(idx), self.values[np.ix_(idx, idx)])


@dataclass(frozen=True, eq=False)
class GramRep:
    """Vectors ``a(x_i)`` as the rows of ``vectors`` (n x rank)."""

    space: WeightedPointSet
    rank: int
    vectors: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=complex).reshape(len(self.space), self.rank)
        object.__setattr__(self, "vectors", V)

    def gram(self) -> np.ndarray:
        return self.vectors @ dagger(self.vectors)

    def norms_squared(self) -> np.ndarray:
        return np.sum(np.abs(self.vectors) ** 2, axis=1)

    def residual(self, phi: "Kernel") -> float:
        return float(np.abs(self.gram() - _values(phi)).max()) if len(self.space) else 0.0


@dataclass(frozen=True, eq=False)
class Exhaustion:
    subsets: tuple  # tuples of point indices
    block_bounds: tuple
    thresholds: tuple


def _values(phi) -> np.ndarray:
    return phi.values if isinstance(phi, Kernel) else as_matrix(phi, square=True)


def as_kernel(phi) -> Kernel:
    return phi if isinstance(phi, Kernel) else Kernel.of(phi)


def schur_apply(phi, T) -> np.ndarray:
    """Entrywise product ``phi o T``."""
    P = _values(phi)
    T = as_matrix(T)
    if T.shape != P.shape:
        raise ShapeMismatch(f"kernel is {P.shape}, operand is {T.shape}")
    return P * T


def positive_schur_check(phi, tol: float = TOL_PSD) -> PsdVerdict:
    """PSD verdict for the value matrix; a negative verdict carries a witness vector.

    :raises NotHermitian: if the values are not Hermitian.
    """
    P = require_hermitian(_values(phi))
    return psd_check(P, tol)


def representing_vectors(phi, tol: float = TOL_PSD) -> GramRep:
    """Minimal vectors ``a(x)`` with ``<a(x_i), a(x_j)> = phi_ij``.

    With ``phi = R* R`` from pivoted Cholesky, ``a(x_i)`` is the conjugate
    of column ``i`` of ``R``.

    :raises NotPsd: with the witness from :func:`positive_schur_check`.
    """
    K = as_kernel(phi)
    verdict = positive_schur_check(K, tol)
    if not verdict.is_psd:
        raise NotPsd(
            f"kernel is not PSD (min eigenvalue {verdict.min_eigenvalue:.3e})",
            witness=verdict.witness,
            min_eigenvalue=verdict.min_eigenvalue,
        )
    R = verdict.factor.factor
    return GramRep(K.space, verdict.factor.rank, np.conj(R).T)


def is_minimal_rep(rep: GramRep, tol: float = TOL_PSD) -> bool:
    """The vectors span ``C^rank``."""
    if rep.rank == 0:
        return True
    s = np.linalg.svd(rep.vectors, compute_uv=False)
    if s.size < rep.rank or s[0] == 0:
        return False
    return int(np.sum(s > tol * s[0])) == rep.rank


def lift_representing(phi, Y: Sequence[int], a: GramRep, tol: float = TOL_PSD) -> GramRep:
    """Extend a minimal representation on ``Y`` to one on all points.

    Points of ``Y`` get ``b(y) = (a(y), 0)``.  Any other point ``z`` gets
    ``b(z) = (c(z), d(z))`` where ``c(z)`` solves ``<c(z), a(y)> = phi(z, y)``
    and the ``d`` vectors represent the Schur complement of the ``Y`` block.

    :raises NotPsd: ``phi`` is not PSD.
    :raises NotMinimalInput: the vectors of ``a`` do not span ``C^rank``.
    :raises InconsistentRestriction: ``a`` does not represent ``phi`` on ``Y``.
    """
    K = as_kernel(phi)
    P = K.values
    n = K.n
    Y = [int(y) for y in Y]
    if len(set(Y)) != len(Y) or any(y < 0 or y >= n for y in Y):
        raise ValueError(f"invalid subset {Y} of {n} points")
    if a.vectors.shape[0] != len(Y):
        raise ShapeMismatch(f"representation has {a.vectors.shape[0]} points, subset has {len(Y)}")
    verdict = positive_schur_check(K, tol)
    if not verdict.is_psd:
        raise NotPsd("kernel is not PSD", witness=verdict.witness, min_eigenvalue=verdict.min_eigenvalue)
    if not is_minimal_rep(a, tol):
        _, _, vh = np.linalg.svd(a.vectors)
        raise NotMinimalInput("representation does not span its coordinate space", np.conj(vh[-1]))
    PY = P[np.ix_(Y, Y)]
    res = float(np.abs(a.gram() - PY).max()) if Y else 0.0
    if res > max(tol, TOL_RECON) * scale(PY):
        raise InconsistentRestriction(f"representation misses the kernel on the subset by {res:.3e}", res)
    Z = [i for i in range(n) if i not in set(Y)]
    r = a.rank
    A = a.vectors
    if Z:
        # C A^* = phi[Z, Y]
        Cz = np.linalg.lstsq(np.conj(A), P[np.ix_(Z, Y)].T, rcond=None)[0].T if r else np.zeros((len(Z), 0))
        S = P[np.ix_(Z, Z)] - Cz @ dagger(Cz)
        S = (S + dagger(S)) / 2
        tail = representing_vectors(S, tol)
        s = tail.rank
        Dz = tail.vectors
    else:
        s = 0
        Cz = np.zeros((0, r))
        Dz = np.zeros((0, 0))
    B = np.zeros((n, r + s), dtype=complex)
    B[Y, :r] = A
    if Z:
        B[Z, :r] = Cz
        B[Z, r:] = Dz
    return GramRep(K.space, r + s, B)


def exhaustion_search(rep: GramRep, thresholds: Sequence[float]) -> Exhaustion:
    """Levels ``X_n = {x : ||a(x)||^2 <= t_n}``, closed off by a final level equal to all points."""
    t = [float(x) for x in thresholds]
    if any(b < a for a, b in zip(t, t[1:])):
        raise ValueError("thresholds must be nondecreasing")
    norms = rep.norms_squared()
    top = float(norms.max()) if norms.size else 0.0
    if not t or t[-1] < top:
        t.append(top)
    subsets, bounds = [], []
    for thr in t:
        idx = tuple(int(i) for i in np.flatnonzero(norms <= thr))
        subsets.append(idx)
        bounds.append(float(norms[list(idx)].max()) if idx else 0.0)
    return Exhaustion(tuple(subsets), tuple(bounds), tuple(t))


def positive_schur_norm(phi, tol: float = TOL_PSD) -> float:
    """Norm (and cb norm) of the multiplier for a PSD kernel: its largest diagonal entry.

    :raises NotPsd: otherwise.
    """
    verdict = positive_schur_check(phi, tol)
    if not verdict.is_psd:
        raise NotPsd("kernel is not PSD", witness=verdict.witness, min_eigenvalue=verdict.min_eigenvalue)
    d = _values(phi).diagonal().real
    return float(d.max()) if d.size else 0.0


def factorization_bound(A: np.ndarray, B: np.ndarray) -> float:
    """``max row norm of A * max column norm of B`` for ``phi = A B``."""
    if A.size == 0 or B.size == 0:
        return 0.0
    return float(np.linalg.norm(A, axis=1).max() * np.linalg.norm(B, axis=0).max())


def schur_norm_upper(phi) -> float:
    """Upper bound on the cb norm of the multiplier from a few explicit factorizations.

    Candidates: ``phi = phi I``, ``phi = I phi``, the balanced SVD split and,
    for PSD ``phi``, the Cholesky split ``R* R``.
    """
    P = _values(phi)
    n = P.shape[0]
    if n == 0:
        return 0.0
    eye = np.eye(n)
    cands = [factorization_bound(P, eye), factorization_bound(eye, P)]
    U, s, Vh = np.linalg.svd(P)
    root = np.sqrt(s)
    cands.append(factorization_bound(U * root, root[:, None] * Vh))
    if np.linalg.norm(P - dagger(P)) <= 1e-12 * scale(P):
        verdict = psd_check(P)
        if verdict.is_psd:
            R = verdict.factor.factor
            cands.append(factorization_bound(dagger(R), R))
    return float(min(cands))


def brute_force_norm(phi, trials: int = 2000, rng: Optional[np.random.Generator] = None) -> float:
    """Largest ``||phi o T|| / ||T||`` over random complex ``T`` (a lower bound on the norm)."""
    P = _values(phi)
    rng = np.random.default_rng(0) if rng is None else rng
    n = P.shape[0]
    T = rng.normal(size=(trials, n, n)) + 1j * rng.normal(size=(trials, n, n))
    num = np.linalg.norm(P * T, ord=2, axis=(1, 2))
    den = np.linalg.norm(T, ord=2, axis=(1, 2))
    return float((num / den).max())

