"""Finite-dimensional von Neumann algebras as spans of matrices.

An algebra is stored by a Frobenius-orthonormal basis of its span, which
makes membership a least-squares projection.  The commutant is the
nullspace of the stacked commutator map.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidAlgebra, NotCommuting, ShapeMismatch
from .matcore import as_matrix, dagger

# column-stacking: vec(A X B) = (B^T kron A) vec(X)


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).T.reshape(-1)


def unvec(v: np.ndarray, shape) -> np.ndarray:
    rows, cols = shape
    return np.asarray(v).reshape(cols, rows).T


def orthonormal_span(mats, dim: int, tol: float = 1e-10) -> np.ndarray:
    """Frobenius-orthonormal basis, shape (k, dim, dim), of the span of ``mats``."""
    mats = [as_matrix(m) for m in mats]
    if not mats:
        return np.zeros((0, dim, dim), dtype=complex)
    M = np.stack([vec(m) for m in mats], axis=1)
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((0, dim, dim), dtype=complex)
    r = int(np.sum(s > tol * s[0]))
    return np.stack([unvec(u[:, i], (dim, dim)) for i in range(r)]) if r else np.zeros((0, dim, dim), complex)


@dataclass(frozen=True, eq=False)
class VNAlg:
    """Unital *-subalgebra of n x n matrices.

    ``basis`` is Frobenius-orthonormal; use :meth:`from_span` to build one
    from arbitrary spanning matrices.
    """

    dim: int
    basis: np.ndarray  # (k, dim, dim)

    @classmethod
    def from_span(cls, mats: Sequence, dim: int = None, validate: bool = False, tol: float = 1e-10):
        mats = list(mats)
        if dim is None:
            if not mats:
                raise InvalidAlgebra("cannot infer dimension of an empty spanning set")
            dim = as_matrix(mats[0]).shape[0]
        for m in mats:
            if as_matrix(m).shape != (dim, dim):
                raise ShapeMismatch(f"basis element has shape {np.shape(m)}, expected {(dim, dim)}")
        alg = cls(dim, orthonormal_span(mats, dim, tol))
        if validate:
            alg.validate()
        return alg

    @property
    def size(self) -> int:
        return self.basis.shape[0]

    @property
    def contains_unit(self) -> bool:
        return self.membership_defect(np.eye(self.dim)) <= 1e-9

    def _frame(self) -> np.ndarray:
        return self.basis.reshape(self.size, -1)

    def project(self, x) -> np.ndarray:
        x = as_matrix(x)
        if not self.size:
            return np.zeros_like(x)
        F = self._frame()
        coeffs = np.conj(F) @ x.reshape(-1)
        return (coeffs @ F).reshape(self.dim, self.dim)

    def membership_defect(self, x) -> float:
        """Frobenius distance to the algebra, relative to ``max(1, ||x||_F)``."""
        x = as_matrix(x)
        if x.shape != (self.dim, self.dim):
            raise ShapeMismatch(f"expected {(self.dim, self.dim)} matrix, got {x.shape}")
        return float(np.linalg.norm(x - self.project(x)) / max(1.0, np.linalg.norm(x)))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.membership_defect(x) <= tol

    def validate(self, tol: float = 1e-9):
        """Check unit, adjoint and product closure; raise :class:`InvalidAlgebra`."""
        if not self.contains_unit:
            raise InvalidAlgebra("algebra does not contain the unit")
        for i, a in enumerate(self.basis):
            if self.membership_defect(dagger(a)) > tol:
                raise InvalidAlgebra(f"not closed under adjoint (basis element {i})")
            for j, b in enumerate(self.basis):
                if self.membership_defect(a @ b) > tol:
                    raise InvalidAlgebra(f"not closed under products (basis pair {i}, {j})")
        return self

    def compress(self, P: np.ndarray) -> "VNAlg":
        """The algebra ``P* A P`` on the range of an isometry ``P``."""
        r = P.shape[1]
        return VNAlg.from_span([dagger(P) @ b @ P for b in self.basis] or [np.eye(r)], dim=r)

    def same_span(self, other: "VNAlg", tol: float = 1e-10) -> bool:
        if self.dim != other.dim or self.size != other.size:
            return False
        return all(other.membership_defect(b) <= tol for b in self.basis) and all(
            self.membership_defect(b) <= tol for b in other.basis
        )

    def is_central(self, x, tol: float = 1e-9) -> bool:
        """``x`` lies in the algebra and commutes with it."""
        x = as_matrix(x)
        return self.contains(x, tol) and all(np.linalg.norm(x @ b - b @ x) <= tol for b in self.basis)

    def __repr__(self):
        return f"VNAlg(dim={self.dim}, size={self.size})"


def scalars(n: int) -> VNAlg:
    return VNAlg.from_span([np.eye(n)], dim=n)


def full(n: int) -> VNAlg:
    return VNAlg(n, np.eye(n * n, dtype=complex).reshape(n * n, n, n).transpose(0, 2, 1).copy())


def diagonal(n: int) -> VNAlg:
    return VNAlg(n, np.stack([np.diag(np.eye(n)[i]).astype(complex) for i in range(n)]) if n else np.zeros((0, 0, 0), complex))


def block_diagonal(sizes: Sequence[int]) -> VNAlg:
    """Direct sum of full matrix algebras ``M_{k1} + M_{k2} + ...``."""
    n = int(sum(sizes))
    mats = []
    offset = 0
    for k in sizes:
        for i in range(k):
            for j in range(k):
                E = np.zeros((n, n), dtype=complex)
                E[offset + i, offset + j] = 1
                mats.append(E)
        offset += k
    return VNAlg(n, np.stack(mats))


def block_scalars(sizes: Sequence[int]) -> VNAlg:
    """``C I_{k1} + C I_{k2} + ...``: the commutant of :func:`block_diagonal`."""
    n = int(sum(sizes))
    mats = []
    offset = 0
    for k in sizes:
        E = np.zeros((n, n), dtype=complex)
        E[offset:offset + k, offset:offset + k] = np.eye(k)
        mats.append(E)
        offset += k
    return VNAlg.from_span(mats, dim=n)


def commutant(A: VNAlg, tol: float = 1e-10) -> VNAlg:
    """Basis of ``{x : x a = a x for every basis element a}``."""
    n = A.dim
    eye = np.eye(n)
    if A.size == 0:
        return full(n)
    rows = [np.kron(eye, a) - np.kron(a.T, eye) for a in A.basis]
    C = np.concatenate(rows, axis=0)
    _, s, vh = np.linalg.svd(C)
    smax = max(s[0], 1.0) if s.size else 1.0  # basis elements have unit norm
    rank = int(np.sum(s > tol * smax))
    null = np.conj(vh[rank:])
    return VNAlg.from_span([unvec(v, (n, n)) for v in null], dim=n)


def check_commuting(projections, tol: float = 1e-9):
    """Raise :class:`NotCommuting` for the first non-commuting pair."""
    ps = [as_matrix(p) for p in projections]
    for i in range(len(ps)):
        for j in range(i + 1, len(ps)):
            c = float(np.linalg.norm(ps[i] @ ps[j] - ps[j] @ ps[i], 2))
            if c > tol:
                raise NotCommuting(f"projections {i} and {j} do not commute (||[p, q]|| = {c:.3e})", (i, j), c)


def atoms(projections, tol: float = 1e-9):
    """Minimal projections of the abelian algebra generated by commuting projections.

    Each atom is a nonzero product of ``p`` or ``1 - p`` over the family,
    obtained by refining the partition ``{I}`` one projection at a time.
    Atoms are returned in a fixed order: for each projection, the part
    inside it comes before the part outside it.
    """
    ps = [as_matrix(p, square=True) for p in projections]
    if not ps:
        raise ValueError("need at least one projection")
    check_commuting(ps, tol)
    n = ps[0].shape[0]
    parts = [np.eye(n, dtype=complex)]
    for p in ps:
        refined = []
        for e in parts:
            for piece in (e @ p, e @ (np.eye(n) - p)):
                if np.linalg.norm(piece) > tol:
                    refined.append((piece + dagger(piece)) / 2)
        parts = refined
    return parts


def generated_by_projections(projections, tol: float = 1e-9) -> VNAlg:
    """Abelian algebra spanned by the atoms of a commuting family."""
    parts = atoms(projections, tol)
    return VNAlg.from_span(parts, dim=parts[0].shape[0])
