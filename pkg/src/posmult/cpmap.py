"""Completely positive maps on matrix algebras.

Conventions (fixed once, used everywhere):

* vectorisation stacks columns, so ``vec(A X B) = (B^T kron A) vec(X)``;
* a Kraus family ``(a_i)`` denotes the map ``x -> sum_i a_i^* x a_i``
  (the adjoint sits on the left, the column-operator orientation), so an
  op of shape ``(d_in, d_out)`` sends ``d_in x d_in`` inputs to
  ``d_out x d_out`` outputs;
* the Choi matrix is ``sum_ij E_ij kron Phi(E_ij)``: block ``(i, j)`` is
  ``Phi(E_ij)``.  With this choice ``C = sum_i vec(a_i^*) vec(a_i^*)^*``.
"""
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .algebra import VNAlg, unvec, vec
from .errors import NotCompletelyPositive, ShapeMismatch
from .matcore import TOL_PSD, as_matrix, dagger, herm_eig, psd_check


@dataclass(frozen=True, eq=False)
class KrausFamily:
    """Column of operators ``(a_1, ..., a_alpha)``; see the module notes for orientation."""

    ops: np.ndarray  # (count, dim_in, dim_out)

    def __post_init__(self):
        if self.ops.ndim != 3:
            raise ShapeMismatch(f"Kraus ops must be a (count, d_in, d_out) array, got {self.ops.shape}")

    @classmethod
    def of(cls, ops: Sequence, dim_in: int = None, dim_out: int = None) -> "KrausFamily":
        mats = [as_matrix(a) for a in ops]
        if not mats:
            if dim_in is None:
                raise ShapeMismatch("empty Kraus family needs explicit dimensions")
            return cls(np.zeros((0, dim_in, dim_in if dim_out is None else dim_out), dtype=complex))
        shape = mats[0].shape
        if any(m.shape != shape for m in mats):
            raise ShapeMismatch("Kraus ops must share one shape")
        return cls(np.stack(mats))

    @property
    def count(self) -> int:
        return self.ops.shape[0]

    @property
    def dim_in(self) -> int:
        return self.ops.shape[1]

    @property
    def dim_out(self) -> int:
        return self.ops.shape[2]

    def __len__(self):
        return self.count

    def __iter__(self):
        return iter(self.ops)

    def __getitem__(self, i):
        return self.ops[i]

    def superop(self) -> "SuperOp":
        m = sum((np.kron(a.T, dagger(a)) for a in self.ops),
                np.zeros((self.dim_out ** 2, self.dim_in ** 2), dtype=complex))
        return SuperOp(m, (self.dim_in, self.dim_in), (self.dim_out, self.dim_out))

    def norm_squared(self) -> float:
        """``||sum a_i^* a_i||``: the squared norm of the column operator."""
        from .matcore import op_norm

        return op_norm(apply_cp(self, np.eye(self.dim_in)))


@dataclass(frozen=True, eq=False)
class SuperOp:
    """Linear map on matrices as a matrix acting on column-stacked inputs."""

    matrix: np.ndarray
    in_shape: Tuple[int, int]
    out_shape: Tuple[int, int]

    def __post_init__(self):
        r = self.out_shape[0] * self.out_shape[1]
        c = self.in_shape[0] * self.in_shape[1]
        if self.matrix.shape != (r, c):
            raise ShapeMismatch(f"super-operator matrix {self.matrix.shape} does not match shapes {self.in_shape} -> {self.out_shape}")

    @classmethod
    def square(cls, matrix, n: int = None, m: int = None) -> "SuperOp":
        M = as_matrix(matrix)
        if n is None:
            n = int(round(np.sqrt(M.shape[1])))
        if m is None:
            m = int(round(np.sqrt(M.shape[0])))
        return cls(M, (n, n), (m, m))

    @classmethod
    def from_function(cls, f, in_shape, out_shape=None) -> "SuperOp":
        """Tabulate a linear map by evaluating it on matrix units."""
        rows, cols = in_shape
        columns = []
        for j in range(cols):
            for i in range(rows):
                E = np.zeros(in_shape, dtype=complex)
                E[i, j] = 1
                columns.append(vec(as_matrix(f(E))))
        M = np.stack(columns, axis=1)
        if out_shape is None:
            out_shape = as_matrix(f(np.zeros(in_shape))).shape
        return cls(M, tuple(in_shape), tuple(out_shape))

    @property
    def dim_in(self) -> int:
        return self.in_shape[0]

    @property
    def dim_out(self) -> int:
        return self.out_shape[0]

    def apply(self, x) -> np.ndarray:
        x = as_matrix(x)
        if x.shape != tuple(self.in_shape):
            raise ShapeMismatch(f"input shape {x.shape} != {self.in_shape}")
        return unvec(self.matrix @ vec(x), self.out_shape)

    __call__ = apply


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    matrix: np.ndarray
    dim_in: int
    dim_out: int

    @property
    def dim(self) -> int:
        return self.dim_in

    def superop(self) -> SuperOp:
        di, do = self.dim_in, self.dim_out
        C4 = self.matrix.reshape(di, do, di, do)  # [i, a, j, b] = Phi(E_ij)[a, b]
        S = C4.transpose(3, 1, 2, 0).reshape(do * do, di * di)
        return SuperOp(S, (di, di), (do, do))


Map = Union[KrausFamily, SuperOp]


def as_superop(m: Map) -> SuperOp:
    if isinstance(m, SuperOp):
        return m
    if isinstance(m, KrausFamily):
        return m.superop()
    if isinstance(m, ChoiMatrix):
        return m.superop()
    raise TypeError(f"cannot interpret {type(m).__name__} as a linear map")


def identity_map(n: int) -> SuperOp:
    return SuperOp(np.eye(n * n, dtype=complex), (n, n), (n, n))


def transpose_map(n: int) -> SuperOp:
    return SuperOp.from_function(lambda x: x.T, (n, n))


def schur_map(phi) -> SuperOp:
    """Entrywise multiplication ``T -> phi o T`` as a super-operator."""
    phi = as_matrix(phi)
    return SuperOp(np.diag(vec(phi)), phi.shape, phi.shape)


def choi(m: Map) -> ChoiMatrix:
    """Choi matrix ``sum_ij E_ij kron Phi(E_ij)`` of a map on square matrices."""
    S = as_superop(m)
    if S.in_shape[0] != S.in_shape[1] or S.out_shape[0] != S.out_shape[1]:
        raise ShapeMismatch("Choi matrix needs a map between square matrix spaces")
    di, do = S.dim_in, S.dim_out
    S4 = S.matrix.reshape(do, do, di, di)  # [b, a, j, i]
    C = S4.transpose(3, 1, 2, 0).reshape(di * do, di * do)
    return ChoiMatrix(C, di, do)


def apply_cp(V: KrausFamily, x) -> np.ndarray:
    """``sum_i a_i^* x a_i``."""
    x = as_matrix(x)
    if x.shape != (V.dim_in, V.dim_in):
        raise ShapeMismatch(f"input shape {x.shape} does not match Kraus ops {V.ops.shape[1:]}")
    if V.count == 0:
        return np.zeros((V.dim_out, V.dim_out), dtype=complex)
    return np.einsum("kji,jl,klm->im", np.conj(V.ops), x, V.ops)


def _fix_phase(rows: np.ndarray) -> np.ndarray:
    """Rotate each row so its largest entry is real positive."""
    out = rows.copy()
    for r in out:
        k = int(np.argmax(np.abs(r)))
        if abs(r[k]) > 0:
            r *= np.conj(r[k]) / abs(r[k])
    return out


def kraus_from_choi(C: ChoiMatrix, tol: float = TOL_PSD) -> KrausFamily:
    """Minimal Kraus family read off the spectral decomposition of a PSD Choi matrix.

    Eigenvalues at or below ``tol * lambda_max`` are dropped, so the count
    equals the numerical rank of ``C``; ops come in decreasing order of
    eigenvalue.

    :raises NotCompletelyPositive: with the negative eigenvector as witness.
    """
    if not isinstance(C, ChoiMatrix):
        C = choi(C)
    verdict = psd_check(C.matrix, tol)
    if not verdict.is_psd:
        raise NotCompletelyPositive(
            f"Choi matrix has eigenvalue {verdict.min_eigenvalue:.3e}",
            witness=verdict.witness,
            min_eigenvalue=verdict.min_eigenvalue,
        )
    di, do = C.dim_in, C.dim_out
    eig = herm_eig(C.matrix)
    lam, U = eig.eigenvalues[::-1], eig.basis[:, ::-1]
    if lam.size == 0 or lam[0] <= 0:
        return KrausFamily(np.zeros((0, di, do), dtype=complex))
    keep = lam > tol * lam[0]
    vecs = _fix_phase((U[:, keep] * np.sqrt(lam[keep])).T)
    ops = [dagger(unvec(v, (do, di))) for v in vecs]
    return KrausFamily(np.stack(ops))


def _stack(V: KrausFamily) -> np.ndarray:
    return V.ops.transpose(0, 2, 1).reshape(V.count, -1).T  # columns vec(a_i)


def is_strongly_independent(V: KrausFamily, tol: float = TOL_PSD):
    """Linear independence of the ops.

    Returns ``(flag, relation)``.  ``relation`` is ``None`` when independent,
    else a unit vector ``lam`` minimising ``||sum lam_i a_i||``.  Singular
    values of the stacked ``vec(a_i)`` at or below ``tol * sigma_max`` count
    as zero.
    """
    if V.count == 0:
        return True, None
    M = _stack(V)
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    smax = s[0] if s.size else 0.0
    if smax == 0:
        rel = np.zeros(V.count, dtype=complex)
        rel[0] = 1
        return False, rel
    smin = s[-1] if V.count <= M.shape[0] else 0.0
    if smin > tol * smax:
        return True, None
    rel = np.conj(vh[-1])
    return False, _fix_phase(rel[None, :])[0]


def minimalize(V: KrausFamily, tol: float = TOL_PSD, ref: float = 0.0):
    """Strip linear relations from a Kraus family without changing its map.

    Returns ``(W, Lambda)`` with ``W_j = sum_i Lambda[j, i] V_i``.  The rows
    of ``Lambda`` are orthonormal and ``Lambda^* Lambda`` is the projection
    whose kernel is ``{conj(lam) : sum lam_i V_i = 0}``, so the map is
    unchanged and ``W`` is strongly independent.

    Singular values at or below ``tol * max(sigma_max, ref)`` are dropped;
    pass ``ref`` when ``V`` is a remainder whose own scale is meaningless.
    """
    if V.count == 0:
        return V, np.zeros((0, 0), dtype=complex)
    M = _stack(V)
    _, s, vh = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return KrausFamily(np.zeros((0, V.dim_in, V.dim_out), dtype=complex)), np.zeros((0, V.count), dtype=complex)
    r = int(np.sum(s > tol * max(s[0], ref)))
    Lam = _fix_phase(np.conj(vh[:r]))
    W = np.einsum("ji,iab->jab", Lam, V.ops)
    return KrausFamily(W), Lam


def check_bimodular(m: Map, D: VNAlg, tol: float = 1e-9):
    """Test ``Phi(d1 x d2) = d1 Phi(x) d2`` for ``d1, d2`` in ``D``.

    Since ``D`` is unital this splits into a left and a right condition,
    each checked as a commutator of super-operators over the basis of ``D``
    (basis elements scaled to unit operator norm).  The defect is the
    largest commutator norm divided by ``max(1, ||Phi||)``.

    Returns ``(flag, defect)``.
    """
    S = as_superop(m)
    n = S.dim_in
    if S.dim_out != n or D.dim != n:
        raise ShapeMismatch(f"algebra acts on C^{D.dim}, map on {S.in_shape} -> {S.out_shape}")
    eye = np.eye(n)
    norm = max(1.0, float(np.linalg.norm(S.matrix, 2)))
    defect = 0.0
    for d in D.basis:
        d = d / np.linalg.norm(d, 2)
        left = np.kron(eye, d)
        right = np.kron(d.T, eye)
        for L in (left, right):
            c = np.linalg.norm(S.matrix @ L - L @ S.matrix, 2)
            defect = max(defect, float(c) / norm)
    return defect <= tol, defect


def is_cp(m: Map, tol: float = TOL_PSD):
    """PSD verdict of the Choi matrix."""
    return psd_check(choi(m).matrix, tol)


def map_residual(a: Map, b: Map) -> float:
    """Spectral-norm distance between two maps, relative to ``max(1, ||a||)``."""
    A, B = as_superop(a).matrix, as_superop(b).matrix
    if A.shape != B.shape:
        raise ShapeMismatch("maps act between different spaces")
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A - B, 2)) / max(1.0, float(np.linalg.norm(A, 2)))
