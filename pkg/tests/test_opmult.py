import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import crandn, random_algebra, random_in_algebra, random_psd
from posmult import algebra as al
from posmult.cpmap import SuperOp, check_bimodular, schur_map
from posmult.errors import (
    InconsistentAtoms,
    InconsistentFiltration,
    MembershipViolation,
    NotCommuting,
    NotCompletelyPositive,
    NotMultiplier,
)
from posmult.opmult import (
    CoveringFamily,
    FilteredMultiplier,
    MultiplierSymbol,
    TensorMultiplier,
    assemble_block_symbols,
    bimodularity_defects,
    cone_element,
    cp_multiplier_check,
    filtered_cp_multiplier,
    filtered_multiplier_check,
    norm_lower_bound,
    refine_covering,
    s_phi,
    symbol,
    symbol_residual,
    theta,
    theta_inv,
)
from posmult.schurmult import representing_vectors

seeds = st.integers(0, 2**32 - 1)


def _unit(k, n):
    e = np.zeros(n)
    e[k] = 1
    return e


def _swap(m):
    return np.eye(m * m)[[j * m + i for i in range(m) for j in range(m)]]


def _schur_multiplier(phi):
    """Multiplier whose map is entrywise multiplication by ``phi`` (n x m)."""
    return TensorMultiplier(phi.shape[1], phi.shape[0], np.diag(phi.T.reshape(-1)))


def test_theta_examples():
    assert np.abs(theta(np.kron(_unit(0, 2), _unit(0, 3)), 2, 3) - np.eye(3, 2)[:, :2] * [1, 0]).max() == 0
    x, y = np.array([1, 1j]), np.array([1, 0])
    T = theta(np.kron(np.conj(x), y), 2, 2)
    assert np.abs(T - [[1, -1j], [0, 0]]).max() == 0
    for k in range(6):
        assert np.abs(theta_inv(theta(_unit(k, 6), 2, 3)) - _unit(k, 6)).max() == 0


def test_s_phi_examples():
    S = s_phi(TensorMultiplier(2, 3, np.eye(6)))
    T = crandn(np.random.default_rng(0), 3, 2)
    assert np.abs(S(T) - T).max() < 1e-14
    rng = np.random.default_rng(1)
    a, b = crandn(rng, 2, 2), crandn(rng, 3, 3)
    S = s_phi(TensorMultiplier(2, 3, np.kron(a.T, b)))
    assert np.abs(S(T) - b @ T @ a).max() < 1e-12
    phi = crandn(rng, 3, 2)
    assert np.abs(s_phi(_schur_multiplier(phi))(T) - phi * T).max() < 1e-14


def test_s_phi_rejects_outside_span():
    phi = TensorMultiplier(2, 2, _swap(2), al.diagonal(2), al.diagonal(2))
    with pytest.raises(NotMultiplier):
        s_phi(phi)


def test_symbol_identity():
    sym = symbol(TensorMultiplier(2, 2, np.eye(4)))
    assert sym.count == 1
    assert abs(sym.ph_bound - 1) < 1e-12
    c = sym.a_ops[0][0, 0]
    assert np.abs(sym.a_ops[0] - c * np.eye(2)).max() < 1e-12
    assert np.abs(sym.b_ops[0] - np.eye(2) / c).max() < 1e-12


def test_symbol_elementary():
    rng = np.random.default_rng(2)
    a, b = crandn(rng, 3, 3), crandn(rng, 2, 2)
    sym = symbol(TensorMultiplier(3, 2, np.kron(a.T, b)))
    assert sym.count == 1
    c = np.vdot(a, sym.a_ops[0]) / np.vdot(a, a)
    assert np.abs(sym.a_ops[0] - c * a).max() < 1e-12
    assert np.abs(sym.b_ops[0] - b / c).max() < 1e-12
    assert abs(sym.ph_bound - np.linalg.norm(a, 2) * np.linalg.norm(b, 2)) < 1e-10


def test_symbol_schur_over_masas():
    phi = random_psd(np.random.default_rng(3), 3)
    M = al.diagonal(3)
    sym = symbol(_schur_multiplier(phi).with_algebras(M, M))
    for a, b in zip(sym.a_ops, sym.b_ops):
        assert np.abs(a - np.diag(np.diag(a))).max() < 1e-12
        assert np.abs(b - np.diag(np.diag(b))).max() < 1e-12
    gram = sum(np.outer(np.diag(b), np.diag(a)) for a, b in zip(sym.a_ops, sym.b_ops))
    assert np.abs(gram - phi).max() < 1e-12
    assert symbol_residual(_schur_multiplier(phi), sym) < 1e-12


def test_symbol_membership_violation():
    X = np.array([[0, 1], [1, 0.0]])
    phi = TensorMultiplier(2, 2, np.kron(X.T, np.eye(2)))
    with pytest.raises((MembershipViolation, NotMultiplier)):
        symbol(phi, al.diagonal(2), al.full(2))


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from([("full", "full"), ("diag", "diag"), ("block", "full")]))
def test_symbol_soundness(seed, kinds):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    M, N = random_algebra(rng, kinds[0], m), random_algebra(rng, kinds[1], n)
    pairs = [(random_in_algebra(rng, M), random_in_algebra(rng, N)) for _ in range(int(rng.integers(1, 4)))]
    phi = TensorMultiplier(m, n, sum(np.kron(a.T, b) for a, b in pairs), M, N)
    sym = symbol(phi)
    assert symbol_residual(phi, sym) <= 1e-9
    assert max(M.membership_defect(a) for a in sym.a_ops) <= 1e-9
    assert max(N.membership_defect(b) for b in sym.b_ops) <= 1e-9
    left, right = bimodularity_defects(phi)
    assert left <= 1e-9 and right <= 1e-9


def test_ph_bound_dominates_norm():
    rng = np.random.default_rng(4)
    for _ in range(10):
        phi = TensorMultiplier(3, 3, crandn(rng, 9, 9))
        assert norm_lower_bound(phi, 50) <= symbol(phi).ph_bound + 1e-9


def test_cone_identity():
    phi = cone_element([np.eye(2)])
    assert np.abs(phi.matrix - np.eye(4)).max() == 0
    v = cp_multiplier_check(phi)
    assert v.is_cp
    assert len(v.kraus) == 1
    assert np.abs(np.abs(v.kraus[0]) - np.eye(2)).max() < 1e-12


def test_cone_pinching():
    M = al.diagonal(2)
    phi = cone_element([np.diag([1.0, 0]), np.diag([0.0, 1])], M)
    x = np.array([[1, 2], [3, 4.0]])
    assert np.abs(s_phi(phi)(x) - np.diag([1, 4])).max() < 1e-14


def test_cone_schur_gram_columns():
    phi0 = random_psd(np.random.default_rng(5), 3)
    rep = representing_vectors(phi0)
    bs = [np.diag(np.conj(rep.vectors[:, k])) for k in range(rep.rank)]
    S = s_phi(cone_element(bs, al.diagonal(3)))
    x = crandn(np.random.default_rng(6), 3, 3)
    assert np.abs(S(x) - phi0 * x).max() < 1e-12


def test_cone_membership_enforced():
    with pytest.raises(MembershipViolation):
        cone_element([np.ones((2, 2))], al.diagonal(2))


def test_cp_check_transpose():
    v = cp_multiplier_check(TensorMultiplier(2, 2, _swap(2)))
    assert not v.is_cp
    assert abs(v.min_eigenvalue + 1) < 1e-12


def test_cp_check_schur_over_masa():
    M = al.diagonal(3)
    rng = np.random.default_rng(7)
    v = cp_multiplier_check(_schur_multiplier(random_psd(rng, 3)), M)
    assert v.is_cp
    for b in v.kraus:
        assert M.membership_defect(b) < 1e-9
    bad = np.array([[1, 2, 0], [2, 1, 0], [0, 0, 1.0]])
    assert not cp_multiplier_check(_schur_multiplier(bad), M).is_cp


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(["diag", "full", "block"]))
def test_cone_soundness(seed, kind):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5))
    M = random_algebra(rng, kind, m)
    bs = [random_in_algebra(rng, M) for _ in range(int(rng.integers(1, 5)))]
    phi = cone_element(bs, M)
    v = cp_multiplier_check(phi, M)
    assert v.is_cp
    recon = sum(np.kron(b.T, b.conj().T) for b in v.kraus)
    assert np.abs(recon - phi.matrix).max() <= 1e-9


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_cone_faithfulness(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    mat = crandn(rng, m * m, m * m)
    if rng.random() < 0.5:
        # symmetrise so the Choi matrix is Hermitian and the eigenvalue test decides
        C = _choi_of(mat, m)
        mat = _mat_of((C + C.conj().T) / 2, m)
    C = _choi_of(mat, m)
    expected = np.abs(C - C.conj().T).max() < 1e-12 and np.linalg.eigvalsh((C + C.conj().T) / 2)[0] >= -1e-9
    assert cp_multiplier_check(TensorMultiplier(m, m, mat)).is_cp == expected


def _mat_of(C, m):
    # inverse of _choi_of: the superop matrix sending vec(E_ij) to vec(block ij)
    mat = np.zeros((m * m, m * m), dtype=complex)
    for i in range(m):
        for j in range(m):
            mat[:, j * m + i] = C[i * m:(i + 1) * m, j * m:(j + 1) * m].T.reshape(-1)
    return mat


def _choi_of(mat, m):
    S = SuperOp(mat, (m, m), (m, m))
    C = np.zeros((m * m, m * m), dtype=complex)
    for i in range(m):
        for j in range(m):
            E = np.zeros((m, m))
            E[i, j] = 1
            C[i * m:(i + 1) * m, j * m:(j + 1) * m] = S(E)
    return C


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_cone_rejects_hermitian_non_cp(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    ops = crandn(rng, 3, m, m)
    signs = [1.0, -1.0, 1.0]
    mat = sum(s * np.kron(b.T, b.conj().T) for s, b in zip(signs, ops))
    v = cp_multiplier_check(TensorMultiplier(m, m, mat))
    assert v.is_cp == (np.linalg.eigvalsh(_choi_of(mat, m))[0] >= -1e-9 * max(1, np.abs(mat).max()))


def test_refine_covering_examples():
    es, fs = refine_covering(CoveringFamily(((np.eye(3), np.eye(2)),)))
    assert len(es) == 1 and len(fs) == 1
    p1 = np.diag([1.0, 0, 0])
    es, _ = refine_covering(CoveringFamily(((p1, np.eye(2)), (np.eye(3), np.eye(2)))))
    assert len(es) == 2
    assert np.abs(es[0] - p1).max() < 1e-14
    assert np.abs(es[1] - (np.eye(3) - p1)).max() < 1e-14


def test_refine_covering_three_overlapping():
    ps = [np.diag([1.0, 1, 0, 0]), np.diag([1.0, 0, 1, 0]), np.diag([0.0, 1, 1, 1])]
    es, _ = refine_covering(CoveringFamily(tuple((p, np.eye(1)) for p in ps)))
    expected = {(0,), (1,), (2,), (3,)}
    got = {tuple(np.flatnonzero(np.diag(e).real > 0.5)) for e in es}
    assert got == expected
    assert np.abs(sum(es) - np.eye(4)).max() < 1e-10


def test_refine_covering_rejects_noncommuting():
    h = np.full((2, 2), 0.5)
    with pytest.raises(NotCommuting):
        refine_covering(CoveringFamily(((np.diag([1.0, 0]), np.eye(1)), (h, np.eye(1)))))


def test_covering_flags():
    C = CoveringFamily(((np.diag([1.0, 0]), np.eye(2)), (np.eye(2), np.eye(2))))
    assert C.covers() and C.is_nested()
    assert not CoveringFamily(((np.diag([1.0, 0]), np.eye(2)),)).covers()


def test_assemble_one_atom_pair():
    rng = np.random.default_rng(8)
    a, b = crandn(rng, 2, 2), crandn(rng, 3, 3)
    sym = MultiplierSymbol(a[None], b[None])
    out = assemble_block_symbols({(0, 0): sym}, [np.eye(2)], [np.eye(3)])
    assert np.abs(out.symbol.a_ops - sym.a_ops).max() == 0
    assert np.abs(out.symbol.b_ops - sym.b_ops).max() == 0


def test_assemble_scalar_blocks():
    e = [np.diag([1.0, 0]), np.diag([0.0, 1])]
    c = {(0, 0): 1.0, (0, 1): 2.0, (1, 0): 3.0, (1, 1): 4.0}
    blocks = {k: MultiplierSymbol(np.eye(2)[None] * v, np.eye(2)[None]) for k, v in c.items()}
    out = assemble_block_symbols(blocks, e, e)
    assert np.abs(out.symbol.apply(np.ones((2, 2))) - [[1, 3], [2, 4]]).max() < 1e-14


def test_assemble_gram_columns():
    phi = random_psd(np.random.default_rng(9), 4)
    rep = representing_vectors(phi)
    e = [np.diag([1.0, 1, 0, 0]), np.diag([0.0, 0, 1, 1])]
    blocks = {}
    for i in range(2):
        for j in range(2):
            a = np.stack([np.diag(np.conj(rep.vectors[:, k])) for k in range(rep.rank)])
            b = np.stack([np.diag(rep.vectors[:, k]) for k in range(rep.rank)])
            blocks[(i, j)] = MultiplierSymbol(a, b)
    out = assemble_block_symbols(blocks, e, e)
    x = crandn(np.random.default_rng(10), 4, 4)
    assert np.abs(out.symbol.apply(x) - phi * x).max() < 1e-12


def test_assemble_rejects_bad_atoms():
    sym = MultiplierSymbol(np.eye(2)[None], np.eye(2)[None])
    with pytest.raises(InconsistentAtoms):
        assemble_block_symbols({(0, 0): sym}, [np.diag([1.0, 0])], [np.eye(2)])


def _coordinate_covering(sizes, n):
    return CoveringFamily(tuple((np.diag((np.arange(n) < k).astype(float)),) * 2 for k in sizes))


def test_filtered_constant_blocks_uniform():
    F = FilteredMultiplier.from_global(TensorMultiplier(3, 3, np.eye(9)), _coordinate_covering([1, 2, 3], 3))
    rep = filtered_multiplier_check(F)
    assert rep.classification == "uniformly bounded"
    assert np.abs(np.array(rep.ph_bounds) - 1).max() < 1e-12


def test_filtered_cauchy_local_growth():
    K = 6
    x = 1 / np.arange(1, K + 1)
    M = al.diagonal(K)
    phi = _schur_multiplier(1 / (x[:, None] + x[None, :])).with_algebras(M, M)
    rep = filtered_multiplier_check(FilteredMultiplier.from_global(phi, _coordinate_covering(range(1, K + 1), K)))
    assert rep.classification == "strictly local growth"
    assert np.abs(np.array(rep.ph_bounds) - np.arange(1, K + 1) / 2).max() < 1e-9
    assert rep.central


def test_filtered_single_level_matches_global():
    rng = np.random.default_rng(11)
    phi = TensorMultiplier(2, 3, crandn(rng, 6, 6))
    rep = filtered_multiplier_check(FilteredMultiplier.from_global(phi, CoveringFamily(((np.eye(2), np.eye(3)),))))
    assert abs(rep.ph_bounds[0] - symbol(phi).ph_bound) < 1e-10


def test_filtered_not_central():
    # p = diag(1, 1, 0) lies in M' = C + M_2 but not in M = C + C I_2
    M = al.block_scalars([1, 2])
    phi = TensorMultiplier(3, 3, np.eye(9), M, M)
    rep = filtered_multiplier_check(FilteredMultiplier.from_global(phi, _coordinate_covering([2, 3], 3)))
    assert not rep.central
    M = al.block_diagonal([1, 2])
    phi = TensorMultiplier(3, 3, np.eye(9), M, M)
    rep = filtered_multiplier_check(FilteredMultiplier.from_global(phi, _coordinate_covering([1, 3], 3)))
    assert rep.central


def test_filtered_rejects_projection_outside_commutant():
    phi = TensorMultiplier(2, 2, np.eye(4), al.full(2), al.full(2))
    with pytest.raises(InconsistentFiltration):
        FilteredMultiplier.from_global(phi, _coordinate_covering([1, 2], 2))


def test_filtered_inconsistent_blocks():
    cov = _coordinate_covering([1, 2], 2)
    F = FilteredMultiplier(cov, (TensorMultiplier(1, 1, [[5.0]]), TensorMultiplier(2, 2, np.eye(4))))
    with pytest.raises(InconsistentFiltration):
        filtered_multiplier_check(F)


def test_filtered_cp_identity():
    M = al.diagonal(3)
    phi = TensorMultiplier(3, 3, np.eye(9), M, M)
    rep = filtered_cp_multiplier(FilteredMultiplier.from_global(phi, _coordinate_covering([1, 2, 3], 3)))
    for k, ops in zip((1, 2, 3), rep.kraus):
        assert len(ops) == 1
        assert np.abs(np.abs(ops[0]) - np.eye(k)).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_filtered_cp_schur_nesting(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    sizes = sorted(rng.choice(np.arange(1, n), size=2, replace=False).tolist()) + [n]
    M = al.diagonal(n)
    phi = _schur_multiplier(random_psd(rng, n, int(rng.integers(1, n + 1)))).with_algebras(M, M)
    rep = filtered_cp_multiplier(FilteredMultiplier.from_global(phi, _coordinate_covering(sizes, n)))
    assert max(rep.family.nesting_residuals()) <= 1e-9
    assert max(rep.cone_residuals) <= 1e-9
    for ops in rep.kraus:
        for b in ops:
            assert np.abs(b - np.diag(np.diag(b))).max() < 1e-9


def test_filtered_cp_names_failing_level():
    M = al.diagonal(3)
    bad = np.array([[1, 1, 0], [1, 1, 2], [0, 2, 1.0]])
    phi = _schur_multiplier(bad).with_algebras(M, M)
    with pytest.raises(NotCompletelyPositive) as info:
        filtered_cp_multiplier(FilteredMultiplier.from_global(phi, _coordinate_covering([2, 3], 3)))
    assert info.value.level == 2


def test_s_phi_bimodular_over_commutants():
    M = al.diagonal(3)
    phi = _schur_multiplier(random_psd(np.random.default_rng(12), 3)).with_algebras(M, M)
    ok, _ = check_bimodular(s_phi(phi), al.commutant(M))
    assert ok
    assert check_bimodular(schur_map(np.ones((3, 3))), M)[0]
