"""Operator multipliers at finite dimension.

A multiplier is a matrix ``phi`` acting on ``H^dual (x) K`` coordinates,
``C^m (x) C^n`` with the dual factor first.  The map ``theta`` identifies
that space with ``n x m`` matrices (``x^dual (x) y -> y x^*``); in these
coordinates ``theta`` is column-stacking, so the induced map ``S_phi`` on
matrices has superoperator matrix exactly ``phi``, and ``a^T (x) b`` acts as
``T -> b T a``.

Multipliers for a pair of algebras ``(M, N)`` are the elements of
``span{a^T (x) b : a in M, b in N}``.  Completely positive ones over
``(M, M)`` are the sums ``sum b_k^T (x) b_k^*`` with ``b_k`` in ``M``
(:func:`cone_element`).
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import algebra as alg
from .algebra import VNAlg, commutant, unvec, vec
from .cpmap import SuperOp, choi, kraus_from_choi
from .errors import (
    InconsistentAtoms,
    InconsistentFiltration,
    MembershipViolation,
    NotCompletelyPositive,
    NotMultiplier,
    ShapeMismatch,
)
from .matcore import TOL_HERM, TOL_PSD, TOL_RECON, as_matrix, dagger, is_projection, psd_check, range_isometry
from .stinelift import FilteredCPMap, Filtration, nested_kraus


TOL = 1e-9


def theta(xi, m: int, n: int) -> np.ndarray:
    """Vector in ``C^m (x) C^n`` (dual factor first) to the ``n x m`` matrix it defines."""
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.size != m * n:
        raise ShapeMismatch(f"vector of length {xi.size}, expected {m * n}")
    return unvec(xi, (n, m))


def theta_inv(T) -> np.ndarray:
    return vec(as_matrix(T))


def opposite_tensor(M: VNAlg, N: VNAlg) -> VNAlg:
    """Frobenius-orthonormal basis of ``span{a^T (x) b}`` (not an algebra check, just the span)."""
    mats = np.einsum("iab,jcd->ijacbd", np.transpose(M.basis, (0, 2, 1)), N.basis)
    k = M.size * N.size
    dim = M.dim * N.dim
    return VNAlg(dim, mats.reshape(k, dim, dim))


@dataclass(frozen=True, eq=False)
class TensorMultiplier:
    """``phi`` on ``C^dim_h (x) C^dim_k`` with optional algebras ``M`` (on ``H``) and ``N`` (on ``K``)."""

    dim_h: int
    dim_k: int
    matrix: np.ndarray
    M: Optional[VNAlg] = None
    N: Optional[VNAlg] = None

    def __post_init__(self):
        mat = as_matrix(self.matrix, square=True)
        if mat.shape[0] != self.dim_h * self.dim_k:
            raise ShapeMismatch(f"matrix is {mat.shape}, expected side {self.dim_h * self.dim_k}")
        if self.M is not None and self.M.dim != self.dim_h:
            raise ShapeMismatch("algebra M acts on the wrong space")
        if self.N is not None and self.N.dim != self.dim_k:
            raise ShapeMismatch("algebra N acts on the wrong space")
        object.__setattr__(self, "matrix", mat)

    @property
    def defect(self) -> float:
        """Relative Frobenius distance to ``span{a^T (x) b : a in M, b in N}`` (0 without algebras)."""
        if self.M is None and self.N is None:
            return 0.0
        M = self.M if self.M is not None else alg.full(self.dim_h)
        N = self.N if self.N is not None else alg.full(self.dim_k)
        return opposite_tensor(M, N).membership_defect(self.matrix)

    def with_algebras(self, M: VNAlg, N: VNAlg) -> "TensorMultiplier":
        return TensorMultiplier(self.dim_h, self.dim_k, self.matrix, M, N)

    def compress(self, P: np.ndarray, Q: np.ndarray) -> "TensorMultiplier":
        """Multiplier on the ranges of isometries ``P`` (on ``H``) and ``Q`` (on ``K``)."""
        E = np.kron(np.conj(P), Q)
        M = self.M.compress(P) if self.M is not None else None
        N = self.N.compress(Q) if self.N is not None else None
        return TensorMultiplier(P.shape[1], Q.shape[1], dagger(E) @ self.matrix @ E, M, N)


def require_multiplier(phi: TensorMultiplier, tol: float = TOL) -> TensorMultiplier:
    d = phi.defect
    if d > tol:
        raise NotMultiplier(f"matrix is not in the multiplier span (defect {d:.3e})", d)
    return phi


def s_phi(phi: TensorMultiplier, tol: float = TOL) -> SuperOp:
    """``T -> theta(phi theta^{-1}(T))`` on ``dim_k x dim_h`` matrices.

    :raises NotMultiplier: if ``phi`` is too far from the multiplier span.
    """
    require_multiplier(phi, tol)
    shape = (phi.dim_k, phi.dim_h)
    return SuperOp(phi.matrix.copy(), shape, shape)


@dataclass(frozen=True, eq=False)
class MultiplierSymbol:
    """``x -> sum_i b_i x a_i`` with ``a_i`` on ``H`` (m x m) and ``b_i`` on ``K`` (n x n)."""

    a_ops: np.ndarray
    b_ops: np.ndarray
    ph_bound: float = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.a_ops, dtype=complex)
        b = np.asarray(self.b_ops, dtype=complex)
        if a.shape[0] != b.shape[0]:
            raise ShapeMismatch(f"{a.shape[0]} left ops, {b.shape[0]} right ops")
        object.__setattr__(self, "a_ops", a)
        object.__setattr__(self, "b_ops", b)
        if self.ph_bound is None:
            object.__setattr__(self, "ph_bound", ph_bound(a, b))

    @property
    def count(self) -> int:
        return self.a_ops.shape[0]

    def apply(self, x) -> np.ndarray:
        return np.einsum("kab,bc,kcd->ad", self.b_ops, as_matrix(x), self.a_ops)

    def tensor(self) -> np.ndarray:
        """``sum a_i^T (x) b_i``."""
        m = self.a_ops.shape[-1]
        n = self.b_ops.shape[-1]
        out = np.einsum("kba,kcd->acbd", self.a_ops, self.b_ops).reshape(m * n, m * n)
        return out


def ph_bound(a_ops: np.ndarray, b_ops: np.ndarray) -> float:
    """``||sum a_i^* a_i||^{1/2} ||sum b_i b_i^*||^{1/2}``: a bound on the cb norm of ``x -> sum b_i x a_i``."""
    if len(a_ops) == 0:
        return 0.0
    ca = np.einsum("kba,kbc->ac", np.conj(a_ops), a_ops)
    rb = np.einsum("kab,kcb->ac", b_ops, np.conj(b_ops))
    return float(np.sqrt(np.linalg.norm(ca, 2) * np.linalg.norm(rb, 2)))


def realign(phi: np.ndarray, m: int, n: int) -> np.ndarray:
    """Rearrange so that ``A (x) B`` becomes the rank-one ``vec_r(A) vec_r(B)^T`` (row-major vecs)."""
    return phi.reshape(m, n, m, n).transpose(0, 2, 1, 3).reshape(m * m, n * n)


def symbol(phi: TensorMultiplier, M: VNAlg = None, N: VNAlg = None, tol: float = TOL) -> MultiplierSymbol:
    """Operator-sum form ``S_phi(x) = sum b_i x a_i`` from an SVD of the realigned matrix.

    ``a_i`` lie in ``M`` and ``b_i`` in ``N`` (checked); the algebras default
    to those attached to ``phi``.

    :raises NotMultiplier: ``phi`` is outside the multiplier span.
    :raises MembershipViolation: some ``a_i`` or ``b_i`` leaves its algebra.
    """
    M = phi.M if M is None else M
    N = phi.N if N is None else N
    phi = require_multiplier(phi.with_algebras(M, N) if (M is not None or N is not None) else phi, tol)
    m, n = phi.dim_h, phi.dim_k
    R = realign(phi.matrix, m, n)
    U, s, Vh = np.linalg.svd(R, full_matrices=False)
    r = int(np.sum(s > TOL_PSD * s[0])) if s.size and s[0] > 0 else 0
    root = np.sqrt(s[:r])
    a = (U[:, :r] * root).T.reshape(r, m, m).transpose(0, 2, 1)
    b = (root[:, None] * Vh[:r]).reshape(r, n, n)
    for i in range(r):
        if M is not None:
            d = M.membership_defect(a[i])
            if d > tol:
                raise MembershipViolation(f"left op {i} is outside M (defect {d:.3e})", index=i, defect=d)
        if N is not None:
            d = N.membership_defect(b[i])
            if d > tol:
                raise MembershipViolation(f"right op {i} is outside N (defect {d:.3e})", index=i, defect=d)
    return MultiplierSymbol(a, b)


def symbol_residual(phi: TensorMultiplier, sym: MultiplierSymbol) -> float:
    """Largest ``||S_phi(E) - sum b_i E a_i||`` over matrix units ``E``."""
    m, n = phi.dim_h, phi.dim_k
    S = SuperOp(phi.matrix, (n, m), (n, m))
    worst = 0.0
    for i in range(n):
        for j in range(m):
            E = np.zeros((n, m), dtype=complex)
            E[i, j] = 1
            worst = max(worst, float(np.linalg.norm(S(E) - sym.apply(E), 2)))
    return worst


def cone_element(b_list, M: VNAlg = None, tol: float = TOL) -> TensorMultiplier:
    """``sum b_k^T (x) b_k^*`` (adjoint ``b_k^*``), whose map is ``x -> sum b_k^* x b_k``.

    :raises MembershipViolation: some ``b_k`` is outside ``M``.
    """
    bs = np.asarray([as_matrix(b, square=True) for b in b_list])
    if bs.ndim != 3 or not bs.shape[0]:
        raise ShapeMismatch("need a nonempty list of square matrices")
    m = bs.shape[1]
    if M is not None:
        for k, b in enumerate(bs):
            d = M.membership_defect(b)
            if d > tol:
                raise MembershipViolation(f"op {k} is outside the algebra (defect {d:.3e})", index=k, defect=d)
    phi = sum(np.kron(b.T, dagger(b)) for b in bs)
    return TensorMultiplier(m, m, phi, M, M)


@dataclass(frozen=True, eq=False)
class CpVerdict:
    is_cp: bool
    min_eigenvalue: float  # of the Choi matrix of S_phi
    kraus: Optional[np.ndarray] = None  # b_k with phi = sum b_k^T (x) b_k^*
    residual: Optional[float] = None  # cone reconstruction residual
    membership_defect: Optional[float] = None
    witness: Optional[np.ndarray] = None

    def __bool__(self):
        return self.is_cp


def cp_multiplier_check(phi: TensorMultiplier, M: VNAlg = None, tol: float = TOL) -> CpVerdict:
    """Decide whether ``phi`` lies in the cone ``{sum b_k^T (x) b_k^* : b_k in M}``.

    :raises NotMultiplier: ``phi`` is outside the ``(M, M)`` multiplier span.
    """
    if phi.dim_h != phi.dim_k:
        raise ShapeMismatch("completely positive multipliers need H = K")
    M = phi.M if M is None else M
    if M is not None:
        phi = phi.with_algebras(M, M)
    S = s_phi(phi, tol)
    C = choi(S)
    herm = (C.matrix + dagger(C.matrix)) / 2
    scale = max(1.0, float(np.abs(C.matrix).max())) if C.matrix.size else 1.0
    if C.matrix.size and np.abs(C.matrix - herm).max() > TOL_HERM * scale:
        # a non-Hermitian Choi matrix cannot be positive
        v = psd_check(herm, TOL_PSD)
        return CpVerdict(False, v.min_eigenvalue, witness=v.witness)
    v = psd_check(herm, TOL_PSD)
    if not v.is_psd:
        return CpVerdict(False, v.min_eigenvalue, witness=v.witness)
    fam = kraus_from_choi(C, TOL_PSD)
    defect = max((M.membership_defect(b) for b in fam.ops), default=0.0) if M is not None else 0.0
    recon = sum((np.kron(b.T, dagger(b)) for b in fam.ops), np.zeros_like(phi.matrix))
    res = float(np.abs(recon - phi.matrix).max()) if phi.matrix.size else 0.0
    ok = defect <= tol and res <= max(TOL_RECON, tol) * max(1.0, float(np.linalg.norm(phi.matrix)))
    return CpVerdict(ok, v.min_eigenvalue, fam.ops, res, defect)


def norm_lower_bound(phi: TensorMultiplier, trials: int = 200, seed: int = 0) -> float:
    """Largest ``||S_phi(x)|| / ||x||`` over the identity pattern and random unitaries and contractions."""
    m, n = phi.dim_h, phi.dim_k
    S = SuperOp(phi.matrix, (n, m), (n, m))
    rng = np.random.default_rng(seed)
    best = 0.0
    cands = [np.eye(n, m)]
    for _ in range(trials):
        Z = rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))
        U, _, Vh = np.linalg.svd(Z, full_matrices=False)
        cands.append(U @ Vh)
        cands.append(Z)
    for x in cands:
        nx = np.linalg.norm(x, 2)
        if nx > 0:
            best = max(best, float(np.linalg.norm(S(x), 2) / nx))
    return best


@dataclass(frozen=True, eq=False)
class CoveringFamily:
    """Pairs ``(p_n, q_n)`` of projections on ``H`` and ``K``; each family commutes internally."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((as_matrix(p, square=True), as_matrix(q, square=True)) for p, q in self.pairs)
        if not pairs:
            raise ValueError("empty covering family")
        for k, (p, q) in enumerate(pairs):
            if not (is_projection(p, 1e-9) and is_projection(q, 1e-9)):
                raise ValueError(f"pair {k} is not a pair of orthogonal projections")
        object.__setattr__(self, "pairs", pairs)

    @property
    def ps(self) -> List[np.ndarray]:
        return [p for p, _ in self.pairs]

    @property
    def qs(self) -> List[np.ndarray]:
        return [q for _, q in self.pairs]

    def covers(self, tol: float = 1e-9) -> bool:
        """Whether ``sup_n p_n (x) q_n = I``: every pair of atoms sits under some ``p_n (x) q_n``."""
        es, fs = refine_covering(self, tol)
        for e in es:
            for f in fs:
                if not any(np.linalg.norm(p @ e - e) <= tol and np.linalg.norm(q @ f - f) <= tol
                           for p, q in self.pairs):
                    return False
        return True

    def is_nested(self, tol: float = 1e-9) -> bool:
        ps, qs = self.ps, self.qs
        return all(np.linalg.norm(ps[k - 1] @ ps[k] - ps[k - 1]) <= tol and np.linalg.norm(qs[k - 1] @ qs[k] - qs[k - 1]) <= tol
                   for k in range(1, len(ps)))


def refine_covering(C: CoveringFamily, tol: float = 1e-9) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Atoms ``(e_i)`` of the algebra generated by the ``p_n`` and ``(f_j)`` of that generated by the ``q_n``.

    :raises NotCommuting: naming the offending pair and the commutator norm.
    """
    return alg.atoms(C.ps, tol), alg.atoms(C.qs, tol)


def _check_atoms(atoms: Sequence[np.ndarray], tol: float, side: str):
    if not atoms:
        raise InconsistentAtoms(f"no {side} atoms")
    n = atoms[0].shape[0]
    for i, e in enumerate(atoms):
        if not is_projection(e, tol):
            raise InconsistentAtoms(f"{side} atom {i} is not a projection")
        for j in range(i):
            if np.linalg.norm(e @ atoms[j]) > tol:
                raise InconsistentAtoms(f"{side} atoms {j} and {i} are not orthogonal")
    if np.linalg.norm(sum(atoms) - np.eye(n)) > tol * max(1, n):
        raise InconsistentAtoms(f"{side} atoms do not sum to the identity")


@dataclass(frozen=True, eq=False)
class AssembledSymbol:
    symbol: MultiplierSymbol
    column_norms: tuple  # per e_i: ||sum (a_k e_i)^* (a_k e_i)||^{1/2}
    row_norms: tuple  # per f_j: ||sum (f_j b_k)(f_j b_k)^*||^{1/2}


def assemble_block_symbols(blocks: Dict[Tuple[int, int], MultiplierSymbol], e_atoms: Sequence[np.ndarray],
                           f_atoms: Sequence[np.ndarray], tol: float = 1e-9) -> AssembledSymbol:
    """Glue per-block symbols into one symbol for the direct sum of the maps ``x -> f_j S_ij(x) e_i``.

    ``blocks[(i, j)]`` acts on ``f_j x e_i`` (ambient coordinates); the glued
    symbol consists of the pairs ``(a_k e_i, f_j b_k)``.  Missing blocks are zero.

    :raises InconsistentAtoms: atoms are not orthogonal, not projections, or incomplete.
    """
    e_atoms = [as_matrix(e, square=True) for e in e_atoms]
    f_atoms = [as_matrix(f, square=True) for f in f_atoms]
    _check_atoms(e_atoms, tol, "left")
    _check_atoms(f_atoms, tol, "right")
    m, n = e_atoms[0].shape[0], f_atoms[0].shape[0]
    a_all, b_all = [], []
    for (i, j), sym in sorted(blocks.items()):
        if not (0 <= i < len(e_atoms) and 0 <= j < len(f_atoms)):
            raise InconsistentAtoms(f"block {(i, j)} refers to a missing atom")
        if sym.count and (sym.a_ops.shape[1:] != (m, m) or sym.b_ops.shape[1:] != (n, n)):
            raise ShapeMismatch(f"block {(i, j)} ops have the wrong size")
        for a, b in zip(sym.a_ops, sym.b_ops):
            a_all.append(a @ e_atoms[i])
            b_all.append(f_atoms[j] @ b)
    a_all = np.array(a_all, dtype=complex).reshape(-1, m, m)
    b_all = np.array(b_all, dtype=complex).reshape(-1, n, n)
    cols = tuple(
        float(np.sqrt(np.linalg.norm(np.einsum("kba,kbc->ac", np.conj(a_all @ e), a_all @ e), 2))) if len(a_all) else 0.0
        for e in e_atoms
    )
    rows = tuple(
        float(np.sqrt(np.linalg.norm(np.einsum("kab,kcb->ac", f @ b_all, np.conj(f @ b_all)), 2))) if len(b_all) else 0.0
        for f in f_atoms
    )
    return AssembledSymbol(MultiplierSymbol(a_all, b_all), cols, rows)


@dataclass(frozen=True, eq=False)
class FilteredMultiplier:
    """Nested covering ``p_1 <= p_2 <= ...``, ``q_1 <= q_2 <= ...`` with one block per level.

    ``blocks[n]`` acts on the ranges of ``p_n`` and ``q_n`` in the
    coordinates of :func:`~posmult.matcore.range_isometry`.
    """

    covering: CoveringFamily
    blocks: tuple
    M: Optional[VNAlg] = None
    N: Optional[VNAlg] = None

    def __post_init__(self):
        if len(self.blocks) != len(self.covering.pairs):
            raise InconsistentFiltration(f"{len(self.blocks)} blocks for {len(self.covering.pairs)} levels")
        if not self.covering.is_nested():
            raise InconsistentFiltration("covering projections are not nested")
        for k, (blk, (p, q)) in enumerate(zip(self.blocks, self.covering.pairs)):
            rp = int(round(np.trace(p).real))
            rq = int(round(np.trace(q).real))
            if (blk.dim_h, blk.dim_k) != (rp, rq):
                raise InconsistentFiltration(f"block {k + 1} has size {(blk.dim_h, blk.dim_k)}, level has {(rp, rq)}",
                                             level=k + 1)
        # covering projections live in the commutants M' and N'
        for side, A, projs in (("p", self.M, self.covering.ps), ("q", self.N, self.covering.qs)):
            if A is None:
                continue
            Ac = commutant(A)
            for k, e in enumerate(projs):
                d = Ac.membership_defect(e)
                if d > 1e-9:
                    raise InconsistentFiltration(f"{side}_{k + 1} is not in the commutant (defect {d:.3e})",
                                                 level=k + 1, residual=d)

    @classmethod
    def from_global(cls, phi: TensorMultiplier, covering: CoveringFamily) -> "FilteredMultiplier":
        blocks = []
        for p, q in covering.pairs:
            blocks.append(phi.compress(range_isometry(p), range_isometry(q)))
        return cls(covering, tuple(blocks), phi.M, phi.N)

    def isometries(self):
        return [(range_isometry(p), range_isometry(q)) for p, q in self.covering.pairs]

    def consistency_residuals(self) -> List[float]:
        iso = self.isometries()
        out = [0.0]
        for k in range(1, len(self.blocks)):
            (P1, Q1), (P2, Q2) = iso[k - 1], iso[k]
            down = self.blocks[k].compress(dagger(P2) @ P1, dagger(Q2) @ Q1)
            out.append(float(np.abs(down.matrix - self.blocks[k - 1].matrix).max()) if down.matrix.size else 0.0)
        return out


@dataclass(frozen=True, eq=False)
class LevelReport:
    defect: float
    symbol: MultiplierSymbol
    ph_bound: float


@dataclass(frozen=True, eq=False)
class FilteredReport:
    levels: tuple
    ph_bounds: tuple
    classification: str  # "uniformly bounded" or "strictly local growth"
    central: bool
    consistency: tuple

    @property
    def growth(self) -> tuple:
        first = self.ph_bounds[0] if self.ph_bounds and self.ph_bounds[0] > 0 else 1.0
        return tuple(b / first for b in self.ph_bounds)


UNIFORM_SLACK = 1.1


def filtered_multiplier_check(F: FilteredMultiplier, tol: float = TOL) -> FilteredReport:
    """Per-level membership defect, symbol and ``ph_bound``, plus a growth classification.

    The family counts as uniformly bounded when every level's ``ph_bound``
    is within 10% of the smallest one; otherwise it shows strictly local
    growth.  ``central`` reports whether every ``p_n`` is central in ``M``
    and every ``q_n`` central in ``N``.

    :raises InconsistentFiltration: consecutive blocks disagree after compression.
    """
    cons = F.consistency_residuals()
    for k, r in enumerate(cons):
        if r > tol:
            raise InconsistentFiltration(f"block {k + 1} does not compress to block {k} (residual {r:.3e})",
                                         level=k + 1, residual=r)
    levels = []
    for (P, Q), blk in zip(F.isometries(), F.blocks):
        M = F.M.compress(P) if F.M is not None else blk.M
        N = F.N.compress(Q) if F.N is not None else blk.N
        b = blk.with_algebras(M, N) if (M is not None or N is not None) else blk
        sym = symbol(b, M, N, tol)
        levels.append(LevelReport(b.defect, sym, sym.ph_bound))
    phs = tuple(lv.ph_bound for lv in levels)
    lo = min(phs)
    uniform = max(phs) <= UNIFORM_SLACK * lo if lo > 0 else max(phs) == 0
    central = True
    for p, q in F.covering.pairs:
        if F.M is not None and not F.M.is_central(p, tol):
            central = False
        if F.N is not None and not F.N.is_central(q, tol):
            central = False
    return FilteredReport(tuple(levels), phs, "uniformly bounded" if uniform else "strictly local growth",
                          central, tuple(cons))


@dataclass(frozen=True, eq=False)
class FilteredCpReport:
    family: object  # FilteredKrausFamily
    kraus: tuple  # per level: b_k with block = sum b_k^T (x) b_k^*
    cone_residuals: tuple


def filtered_cp_multiplier(F: FilteredMultiplier, tol: float = TOL) -> FilteredCpReport:
    """Nested per-level cone decompositions of a filtered completely positive multiplier.

    Requires ``q_n = p_n`` and ``M = N``.  Level ``n`` gets ops ``b_k`` in
    ``M p_n`` with the first ones restricting to level ``n - 1``.

    :raises NotCompletelyPositive: naming the first failing level.
    :raises InconsistentFiltration: mismatched covering or blocks.
    """
    for k, (p, q) in enumerate(F.covering.pairs):
        if p.shape != q.shape or np.linalg.norm(p - q) > tol:
            raise InconsistentFiltration(f"level {k + 1} uses different projections on the two sides", level=k + 1)
    M = F.M if F.M is not None else (F.N if F.N is not None else alg.full(F.covering.ps[0].shape[0]))
    for k, r in enumerate(F.consistency_residuals()):
        if r > tol:
            raise InconsistentFiltration(f"block {k + 1} does not compress to block {k}", level=k + 1, residual=r)
    iso = F.isometries()
    for k, ((P, _), blk) in enumerate(zip(iso, F.blocks)):
        v = cp_multiplier_check(blk.with_algebras(M.compress(P), M.compress(P)), None, tol)
        if not v.is_cp:
            raise NotCompletelyPositive(f"level {k + 1} is not completely positive (Choi eigenvalue {v.min_eigenvalue:.3e})",
                                        v.witness, v.min_eigenvalue, level=k + 1)
    filt = Filtration(tuple(F.covering.ps))
    blocks = tuple(SuperOp(b.matrix, (b.dim_k, b.dim_h), (b.dim_k, b.dim_h)) for b in F.blocks)
    fam = nested_kraus(FilteredCPMap(filt, blocks, commutant(M)), tol)
    kraus, res = [], []
    for blk, V in zip(F.blocks, fam.levels):
        recon = sum((np.kron(b.T, dagger(b)) for b in V.ops), np.zeros_like(blk.matrix))
        kraus.append(V.ops)
        res.append(float(np.abs(recon - blk.matrix).max()) if blk.matrix.size else 0.0)
    return FilteredCpReport(fam, tuple(kraus), tuple(res))


def bimodularity_defects(phi: TensorMultiplier, tol: float = TOL) -> Tuple[float, float]:
    """Defects of ``S_phi`` against ``N'`` acting on the left and ``M'`` on the right.

    Returns ``(left, right)``: the largest normalized ``||S(d x) - d S(x)||``
    for ``d`` in ``N'`` and ``||S(x d) - S(x) d||`` for ``d`` in ``M'``.
    """
    m, n = phi.dim_h, phi.dim_k
    S = s_phi(phi, tol).matrix
    Mc = commutant(phi.M if phi.M is not None else alg.full(m))
    Nc = commutant(phi.N if phi.N is not None else alg.full(n))
    ref = max(1.0, float(np.linalg.norm(S, 2)))
    left = 0.0
    for d in Nc.basis:
        d = d / np.linalg.norm(d, 2)
        L = np.kron(np.eye(m), d)
        left = max(left, float(np.linalg.norm(S @ L - L @ S, 2)) / ref)
    right = 0.0
    for d in Mc.basis:
        d = d / np.linalg.norm(d, 2)
        R = np.kron(d.T, np.eye(n))
        right = max(right, float(np.linalg.norm(S @ R - R @ S, 2)) / ref)
    return left, right
