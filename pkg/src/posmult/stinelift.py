"""Lifting minimal Kraus families across subspaces and along filtrations.

Given a completely positive ``D``-bimodular map ``Phi`` on ``C^d``, a
projection ``p`` in ``D`` and a minimal Kraus family ``V`` of the
compression of ``Phi`` to ``pC^d``, :func:`lift_minimal_kraus` produces a
minimal Kraus family ``W`` of ``Phi`` whose first ``len(V)`` ops restrict
to ``V`` on ``pC^d`` and whose remaining ops vanish there.  Iterating the
lift along an increasing chain of projections gives nested families
(:func:`nested_kraus`).

Compressed spaces are described by isometries ``P`` (``d x r``) with
``P P^* = p``; a map or operator "on ``pC^d``" is written in the
coordinates of ``P``.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import algebra as alg
from .algebra import VNAlg
from .cpmap import (
    KrausFamily,
    SuperOp,
    as_superop,
    check_bimodular,
    _fix_phase,
    _stack,
    choi,
    is_strongly_independent,
    kraus_from_choi,
    map_residual,
    minimalize,
)
from .errors import (
    InconsistentFiltration,
    InconsistentRestriction,
    MembershipViolation,
    NotBimodular,
    NotCompletelyPositive,
    NotMinimalInput,
    ProjectionNotInAlgebra,
    ShapeMismatch,
)
from .matcore import TOL_PSD, as_matrix, dagger, is_projection, psd_check, range_isometry

TOL = 1e-9
# Choi eigenvalues above RANK_TOL * lambda_max count as structural rank when
# lifting.  Tighter than TOL_PSD: a direction dropped at one level would
# otherwise reappear at the next and spoil the restriction identity.
RANK_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class Filtration:
    """Increasing orthogonal projections ``p_1 <= ... <= p_N = I``."""

    projections: tuple

    def __post_init__(self):
        ps = tuple(as_matrix(p, square=True) for p in self.projections)
        object.__setattr__(self, "projections", ps)
        if not ps:
            raise InconsistentFiltration("empty filtration")
        n = ps[0].shape[0]
        for k, p in enumerate(ps):
            if p.shape != (n, n):
                raise InconsistentFiltration(f"projection {k} has shape {p.shape}", level=k)
            if not is_projection(p, 1e-9):
                raise InconsistentFiltration(f"level {k + 1} is not an orthogonal projection", level=k + 1)
            if k and np.linalg.norm(ps[k - 1] @ p - ps[k - 1]) > 1e-9 * max(1, n):
                raise InconsistentFiltration(f"p_{k} is not below p_{k + 1}", level=k + 1)
        if np.linalg.norm(ps[-1] - np.eye(n)) > 1e-9 * max(1, n):
            raise InconsistentFiltration("last projection is not the identity", level=len(ps))

    @classmethod
    def coordinate(cls, sizes: Sequence[int], dim: int = None) -> "Filtration":
        """``p_k`` = projection onto the first ``sizes[k]`` coordinates."""
        dim = sizes[-1] if dim is None else dim
        return cls(tuple(np.diag([1.0] * k + [0.0] * (dim - k)) for k in sizes))

    @property
    def dim(self) -> int:
        return self.projections[0].shape[0]

    def __len__(self):
        return len(self.projections)

    def isometries(self) -> List[np.ndarray]:
        return [range_isometry(p) for p in self.projections]

    def embeddings(self) -> List[np.ndarray]:
        """``J_n = P_n^* P_{n-1}``: level ``n-1`` coordinates inside level ``n`` (``J_1`` is empty)."""
        Ps = self.isometries()
        out = [np.zeros((Ps[0].shape[1], 0), dtype=complex)]
        out += [dagger(Ps[k]) @ Ps[k - 1] for k in range(1, len(Ps))]
        return out

    def generated_algebra(self) -> VNAlg:
        return alg.generated_by_projections(self.projections)


@dataclass(frozen=True, eq=False)
class FilteredCPMap:
    """Blocks ``Phi_n`` acting on ``p_n C^d`` (in the coordinates of ``range_isometry(p_n)``).

    ``algebra`` is the ``D`` over which each block is bimodular; by default
    the abelian algebra generated by the filtration.
    """

    filtration: Filtration
    blocks: tuple
    algebra: Optional[VNAlg] = None

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(as_superop(b) for b in self.blocks))
        if len(self.blocks) != len(self.filtration):
            raise InconsistentFiltration(f"{len(self.blocks)} blocks for {len(self.filtration)} levels")
        if self.algebra is None:
            object.__setattr__(self, "algebra", self.filtration.generated_algebra())

    @classmethod
    def from_global(cls, phi, filtration: Filtration, algebra: VNAlg = None) -> "FilteredCPMap":
        phi = as_superop(phi)
        blocks = [compress_cp(phi, p) for p in filtration.projections]
        return cls(filtration, tuple(blocks), algebra)

    def consistency_residuals(self) -> List[float]:
        out = [0.0]
        for n, J in enumerate(self.filtration.embeddings()[1:], start=1):
            out.append(map_residual(compress_cp(self.blocks[n], J @ dagger(J), basis=J), self.blocks[n - 1]))
        return out


@dataclass(frozen=True, eq=False)
class FilteredKrausFamily:
    """Per-level minimal Kraus families with prefix nesting.

    ``levels[n]`` acts on level-``n`` coordinates; its first
    ``len(levels[n-1])`` ops restrict to ``levels[n-1]`` on the previous
    level and the others vanish there.  ``block_norms[n]`` is
    ``||sum a_i^* a_i||`` at level ``n``.
    """

    filtration: Filtration
    levels: tuple
    block_norms: tuple
    pairing_residual: Optional[float] = field(default=None)

    @property
    def counts(self) -> List[int]:
        return [V.count for V in self.levels]

    def nesting_residuals(self) -> List[float]:
        out = [0.0]
        for n, J in enumerate(self.filtration.embeddings()[1:], start=1):
            out.append(restriction_residual(self.levels[n], self.levels[n - 1], J))
        return out

    def global_family(self) -> KrausFamily:
        """The top level written in ambient coordinates: ``a_i p_n`` is ``levels[n][i]`` padded."""
        P = self.filtration.isometries()[-1]
        top = self.levels[-1]
        return KrausFamily(np.einsum("ab,kbc,dc->kad", P, top.ops, np.conj(P)))


def compress_cp(phi, p, basis: np.ndarray = None) -> SuperOp:
    """``x -> P^* Phi(P x P^*) P`` on the range of ``p``.

    ``basis`` fixes the coordinates (an isometry with ``P P^* = p``); by
    default :func:`~posmult.matcore.range_isometry` is used.
    """
    S = as_superop(phi)
    p = as_matrix(p, square=True)
    if S.dim_in != S.dim_out or p.shape[0] != S.dim_in:
        raise ShapeMismatch(f"projection of size {p.shape[0]} on a map {S.in_shape} -> {S.out_shape}")
    P = range_isometry(p) if basis is None else as_matrix(basis)
    r = P.shape[1]
    M = np.kron(P.T, dagger(P)) @ S.matrix @ np.kron(np.conj(P), P)
    return SuperOp(M, (r, r), (r, r))


def pad(V: KrausFamily, P: np.ndarray, count: int = None) -> np.ndarray:
    """Ops ``P v P^*`` on the big space, padded with zero ops up to ``count``."""
    d = P.shape[0]
    count = V.count if count is None else count
    out = np.zeros((count, d, d), dtype=complex)
    if V.count:
        out[: V.count] = np.einsum("ab,kbc,dc->kad", P, V.ops, np.conj(P))
    return out


def restriction_residual(W: KrausFamily, V: KrausFamily, P: np.ndarray) -> float:
    """``max_i ||W_i P - P V_i||`` with ``V_i = 0`` for ``i >= len(V)``."""
    if W.count < V.count:
        return float("inf")
    if W.count == 0 or P.shape[1] == 0:
        return 0.0
    target = np.zeros((W.count, W.dim_in, P.shape[1]), dtype=complex)
    if V.count:
        target[: V.count] = np.einsum("ab,kbc->kac", P, V.ops)
    got = np.einsum("kab,bc->kac", W.ops, P)
    return float(max(np.linalg.norm(g - t, 2) for g, t in zip(got, target)))


def commutant_defect(V: KrausFamily, D: VNAlg) -> float:
    """Largest ``||v d - d v||`` over ops and (unit-norm) basis elements of ``D``."""
    worst = 0.0
    for d in D.basis:
        dn = d / max(np.linalg.norm(d, 2), 1e-300)
        for v in V.ops:
            worst = max(worst, float(np.linalg.norm(v @ dn - dn @ v, 2)) / max(1.0, float(np.linalg.norm(v, 2))))
    return worst


def lift_minimal_kraus(phi, D2: VNAlg, p, V: KrausFamily, tol: float = TOL, basis: np.ndarray = None,
                       order: str = "stacked") -> KrausFamily:
    """Extend a minimal Kraus family of a compression to one of the whole map.

    Follows the complementary-map construction: start from a minimal family
    ``A`` of ``phi`` (with entries in ``D2'``), rotate its compression onto
    ``V`` to obtain ``B``, take a minimal family ``C`` of the remainder
    ``Phi - Phi_B`` (which vanishes on ``pC^d``) and return ``B`` followed
    by ``C``.

    With ``order="interleaved"`` the ops are returned as
    ``b_1, c_1, b_2, c_2, ...`` with the surplus of the longer list at the
    end; the ``b`` ops then sit at :func:`interleaved_positions`.

    :raises ProjectionNotInAlgebra: ``p`` is not a projection of ``D2``.
    :raises NotCompletelyPositive: ``phi`` has a non-PSD Choi matrix.
    :raises NotBimodular: ``phi`` is not ``D2``-bimodular.
    :raises NotMinimalInput: ``V`` is not strongly independent.
    :raises MembershipViolation: some op of ``V`` is outside ``(p D2 p)'``.
    :raises InconsistentRestriction: ``V`` does not implement the compression.
    """
    S = as_superop(phi)
    p = as_matrix(p, square=True)
    d = S.dim_in
    if p.shape != (d, d) or D2.dim != d:
        raise ShapeMismatch("map, algebra and projection must act on the same space")
    if not is_projection(p, tol):
        raise ProjectionNotInAlgebra("p is not an orthogonal projection")
    pdef = D2.membership_defect(p)
    if pdef > tol:
        raise ProjectionNotInAlgebra(f"projection is not in the algebra (defect {pdef:.3e})", pdef)
    C = choi(S)
    verdict = psd_check(C.matrix, TOL_PSD)
    if not verdict.is_psd:
        raise NotCompletelyPositive(
            f"map is not completely positive (Choi eigenvalue {verdict.min_eigenvalue:.3e})",
            witness=verdict.witness, min_eigenvalue=verdict.min_eigenvalue,
        )
    ok, bdef = check_bimodular(S, D2, tol)
    if not ok:
        raise NotBimodular(f"map is not bimodular over the algebra (defect {bdef:.3e})", bdef)

    P = range_isometry(p) if basis is None else as_matrix(basis)
    r = P.shape[1]
    if V.dim_in != r or V.dim_out != r:
        raise ShapeMismatch(f"V acts on C^{V.dim_in}, compressed space has dimension {r}")
    indep, relation = is_strongly_independent(V, tol)
    if not indep:
        raise NotMinimalInput("V is not strongly independent", relation)
    D1 = D2.compress(P)
    cdef = commutant_defect(V, D1)
    if cdef > tol:
        raise MembershipViolation(f"V is not in the commutant of the compressed algebra (defect {cdef:.3e})", defect=cdef)
    psi = compress_cp(S, p, basis=P)
    res = map_residual(psi, V.superop())
    if res > tol:
        raise InconsistentRestriction(f"V does not implement the compressed map (residual {res:.3e})", res)

    A = kraus_from_choi(C, RANK_TOL)
    restricted = KrausFamily(np.einsum("ba,kbc,cd->kad", np.conj(P), A.ops, P))
    r = V.count
    if A.count:
        _, sv, vh = np.linalg.svd(_stack(restricted), full_matrices=False)
    else:
        sv, vh = np.zeros(0), np.zeros((0, 0), complex)
    top = sv[0] if sv.size else 0.0
    live = int(np.sum(sv > np.sqrt(RANK_TOL) * top)) if top > 0 else 0
    # V may have dropped compression directions whose Choi weight is within tol
    if r > live or (live > r and sv[r] ** 2 > tol * max(1.0, top ** 2)):
        raise InconsistentRestriction(f"compression has {live} minimal ops, V has {r}")
    Lam = _fix_phase(np.conj(vh[:r])) if r else np.zeros((0, A.count), dtype=complex)
    if r:
        T = np.einsum("jk,kab->jab", Lam, restricted.ops)
        X = np.linalg.lstsq(_stack(KrausFamily(T)), _stack(V), rcond=None)[0].T
        # nearest unitary, so that B and C together still implement phi
        u, _, wh = np.linalg.svd(X)
        U0 = u @ wh
        B = np.einsum("ik,kab->iab", U0 @ Lam, A.ops)
    else:
        B = np.zeros((0, d, d), dtype=complex)
    Qperp = np.eye(A.count) - dagger(Lam) @ Lam if A.count else np.zeros((0, 0))
    rest = KrausFamily(np.einsum("mk,kab->mab", Qperp, A.ops)) if A.count else KrausFamily(np.zeros((0, d, d), complex))
    ref = float(np.linalg.svd(A.ops.reshape(A.count, -1), compute_uv=False)[0]) if A.count else 0.0
    Cfam, _ = minimalize(rest, float(np.sqrt(RANK_TOL)), ref=ref)
    if Cfam.count:
        Cfam = KrausFamily(_fix_phase(Cfam.ops.reshape(Cfam.count, -1)).reshape(Cfam.ops.shape))
    if order == "stacked":
        W = np.concatenate([B, Cfam.ops], axis=0)
    elif order == "interleaved":
        W = np.stack([B[i] if tag == "b" else Cfam.ops[i] for tag, i in _interleave(len(B), Cfam.count)]) \
            if len(B) + Cfam.count else np.zeros((0, d, d), complex)
    else:
        raise ValueError(f"unknown order {order!r}")
    return KrausFamily(W)


def _interleave(nb: int, nc: int):
    out = []
    for i in range(max(nb, nc)):
        if i < nb:
            out.append(("b", i))
        if i < nc:
            out.append(("c", i))
    return out


def interleaved_positions(nb: int, nc: int) -> List[int]:
    """Positions of ``b_1, ..., b_nb`` in the interleaved ordering."""
    return [k for k, (tag, _) in enumerate(_interleave(nb, nc)) if tag == "b"]


def nested_kraus(F: FilteredCPMap, tol: float = TOL) -> FilteredKrausFamily:
    """Minimal Kraus families for every level, each extending the previous one.

    :raises InconsistentFiltration: if a block does not compress to its
        predecessor.
    :raises NotCompletelyPositive: with ``level`` set (1-based).
    """
    filt = F.filtration
    for n, res in enumerate(F.consistency_residuals()):
        if res > tol:
            raise InconsistentFiltration(f"block {n + 1} does not compress to block {n} (residual {res:.3e})",
                                         level=n + 1, residual=res)
    Ps = filt.isometries()
    Js = filt.embeddings()
    levels = []
    for n, block in enumerate(F.blocks):
        Dn = F.algebra.compress(Ps[n])
        try:
            if n == 0:
                C = choi(block)
                ok, bdef = check_bimodular(block, Dn, tol)
                if not ok:
                    raise NotBimodular(f"block 1 is not bimodular (defect {bdef:.3e})", bdef)
                V = kraus_from_choi(C, RANK_TOL)
            else:
                J = Js[n]
                V = lift_minimal_kraus(block, Dn, J @ dagger(J), levels[-1], tol, basis=J)
        except NotCompletelyPositive as exc:
            raise NotCompletelyPositive(f"level {n + 1}: {exc}", exc.witness, exc.min_eigenvalue, level=n + 1) from exc
        levels.append(V)
    norms = tuple(V.norm_squared() if V.count else 0.0 for V in levels)
    return FilteredKrausFamily(filt, tuple(levels), norms)


def pairing_residual(block, V: KrausFamily) -> float:
    """``max |(Phi(E_kl) e_j, e_i) - sum_m (E_kl V_m e_j, V_m e_i)|`` over all indices."""
    S = as_superop(block)
    n = S.dim_in
    if n == 0:
        return 0.0
    S4 = S.matrix.reshape(n, n, n, n)  # [j, i, l, k] = Phi(E_kl)[i, j]
    lhs = S4.transpose(3, 2, 1, 0)  # [k, l, i, j]
    rhs = np.einsum("mki,mlj->klij", np.conj(V.ops), V.ops)
    return float(np.abs(lhs - rhs).max())


def graded_stinespring(F: FilteredCPMap, tol: float = TOL):
    """Nested families plus the dilation multiplicity.

    Returns ``(multiplicity, family)``; ``family.pairing_residual`` holds the
    worst violation of ``(Phi(a) xi, eta) = sum_i (a V_i xi, V_i eta)`` over
    matrix units and standard basis vectors, across all levels.
    """
    fam = nested_kraus(F, tol)
    res = max(pairing_residual(b, V) for b, V in zip(F.blocks, fam.levels))
    fam = FilteredKrausFamily(fam.filtration, fam.levels, fam.block_norms, res)
    return fam.levels[-1].count, fam


def schur_filtration(phi, sizes: Sequence[int]) -> FilteredCPMap:
    """Schur multiplier by ``phi`` cut to the leading ``sizes[k]`` coordinates."""
    from .cpmap import schur_map

    phi = as_matrix(phi, square=True)
    filt = Filtration.coordinate(sizes, phi.shape[0])
    return FilteredCPMap(filt, tuple(schur_map(phi[:k, :k]) for k in sizes))
