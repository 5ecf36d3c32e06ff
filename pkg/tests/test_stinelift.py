import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import choi_direct, crandn, lifting_instance, random_psd, random_unitary
from posmult import algebra as al
from posmult.cpmap import (
    KrausFamily,
    SuperOp,
    choi,
    identity_map,
    is_strongly_independent,
    kraus_from_choi,
    map_residual,
    schur_map,
    transpose_map,
)
from posmult.errors import (
    InconsistentFiltration,
    InconsistentRestriction,
    MembershipViolation,
    NotBimodular,
    NotCompletelyPositive,
    NotMinimalInput,
    ProjectionNotInAlgebra,
)
from posmult.stinelift import (
    FilteredCPMap,
    Filtration,
    commutant_defect,
    compress_cp,
    graded_stinespring,
    interleaved_positions,
    lift_minimal_kraus,
    nested_kraus,
    pad,
    range_isometry,
    restriction_residual,
    schur_filtration,
)

seeds = st.integers(0, 2**32 - 1)
PHI = np.array([[1, 1], [1, 2.0]])


def test_compress_identity_projection():
    S = KrausFamily(crandn(np.random.default_rng(0), 2, 3, 3)).superop()
    assert map_residual(compress_cp(S, np.eye(3)), S) < 1e-14


def test_compress_zero_projection():
    out = compress_cp(identity_map(3), np.zeros((3, 3)))
    assert out.matrix.shape == (0, 0)


def test_compress_schur_restricts_entrywise():
    rng = np.random.default_rng(1)
    phi = crandn(rng, 4, 4)
    out = compress_cp(schur_map(phi), np.diag([1.0, 0, 1, 1]))
    assert map_residual(out, schur_map(phi[np.ix_([0, 2, 3], [0, 2, 3])])) < 1e-14


def test_lift_two_point_schur():
    V = KrausFamily.of([[[1.0]]])
    W = lift_minimal_kraus(schur_map(PHI), al.diagonal(2), np.diag([1.0, 0]), V)
    assert W.count == 2
    assert np.abs(W.ops[0] - np.eye(2)).max() < 1e-12
    assert np.abs(W.ops[1] - np.diag([0, 1])).max() < 1e-12
    assert restriction_residual(W, V, np.eye(2)[:, :1]) < 1e-12


def test_lift_identity_projection_keeps_family():
    rng = np.random.default_rng(2)
    V = kraus_from_choi(choi(KrausFamily(crandn(rng, 2, 3, 3))))
    U = random_unitary(rng, V.count)
    V = KrausFamily(np.einsum("ij,jab->iab", U, V.ops))
    W = lift_minimal_kraus(V.superop(), al.scalars(3), np.eye(3), V)
    assert W.count == V.count
    assert np.abs(W.ops - V.ops).max() < 1e-10


def test_lift_rank_counts():
    rng = np.random.default_rng(3)
    for trial in range(30):
        ops, D, p = lifting_instance(rng, trial % 3)
        phi = KrausFamily(ops).superop()
        P = range_isometry(p)
        psi = compress_cp(phi, p, basis=P)
        V = kraus_from_choi(choi(psi)) if P.shape[1] else KrausFamily(np.zeros((0, 0, 0), complex))
        W = lift_minimal_kraus(phi, D, p, V, basis=P)
        assert W.count == np.linalg.matrix_rank(choi_direct(ops), tol=1e-8)
        assert V.count == np.linalg.matrix_rank(choi(psi).matrix, tol=1e-8) if P.shape[1] else V.count == 0
        assert W.count >= V.count


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(0, 2))
def test_lift_soundness(seed, kind):
    rng = np.random.default_rng(seed)
    ops, D, p = lifting_instance(rng, kind)
    phi = KrausFamily(ops).superop()
    P = range_isometry(p)
    V = kraus_from_choi(choi(compress_cp(phi, p, basis=P))) if P.shape[1] else \
        KrausFamily(np.zeros((0, 0, 0), complex))
    W = lift_minimal_kraus(phi, D, p, V, basis=P)
    assert map_residual(phi, W.superop()) <= 1e-9
    assert is_strongly_independent(W)[0]
    assert max((np.linalg.norm(w @ p - v, 2) for w, v in zip(W.ops, pad(V, P, W.count))), default=0) <= 1e-9
    assert commutant_defect(W, D) <= 1e-9


def test_lift_interleaved_order():
    rng = np.random.default_rng(4)
    d = 4
    ops = np.stack([np.diag(crandn(rng, d)) for _ in range(3)])
    phi = KrausFamily(ops).superop()
    p = np.diag([1.0, 0, 0, 0])
    P = range_isometry(p)
    V = kraus_from_choi(choi(compress_cp(phi, p, basis=P)))
    stacked = lift_minimal_kraus(phi, al.diagonal(d), p, V, basis=P)
    inter = lift_minimal_kraus(phi, al.diagonal(d), p, V, basis=P, order="interleaved")
    pos = interleaved_positions(V.count, stacked.count - V.count)
    assert np.abs(inter.ops[pos] - stacked.ops[:V.count]).max() < 1e-14
    assert map_residual(phi, inter.superop()) < 1e-12
    assert interleaved_positions(1, 2) == [0]
    assert interleaved_positions(3, 1) == [0, 2, 3]


def test_lift_errors():
    V = KrausFamily.of([[[1.0]]])
    p = np.diag([1.0, 0])
    with pytest.raises(ProjectionNotInAlgebra):
        lift_minimal_kraus(schur_map(PHI), al.scalars(2), p, V)
    with pytest.raises(NotCompletelyPositive):
        lift_minimal_kraus(schur_map([[1, 2], [2, 1]]), al.diagonal(2), p, V)
    with pytest.raises(NotBimodular):
        H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        lift_minimal_kraus(KrausFamily.of([H]), al.diagonal(2), p, V)
    with pytest.raises(NotMinimalInput):
        lift_minimal_kraus(schur_map(PHI), al.diagonal(2), p, KrausFamily.of([[[1.0]], [[0.0]]]))
    with pytest.raises(InconsistentRestriction):
        lift_minimal_kraus(schur_map(PHI), al.diagonal(2), p, KrausFamily.of([[[2.0]]]))
    with pytest.raises(MembershipViolation):
        X = np.array([[0, 1], [1, 0.0]])
        lift_minimal_kraus(KrausFamily.of([np.eye(3)]), al.block_diagonal([2, 1]), np.diag([1.0, 1, 0]),
                           KrausFamily.of([np.eye(2), X]))


def test_nested_identity_levels():
    filt = Filtration.coordinate([1, 2, 3])
    F = FilteredCPMap(filt, tuple(identity_map(k) for k in (1, 2, 3)))
    fam = nested_kraus(F)
    assert fam.counts == [1, 1, 1]
    for k, V in zip((1, 2, 3), fam.levels):
        assert np.abs(np.abs(V.ops[0]) - np.eye(k)).max() < 1e-12
    assert np.abs(np.array(fam.block_norms) - 1).max() < 1e-12


def test_nested_schur_norms_squares():
    u = np.array([1.0, 2.0, 3.0])
    fam = nested_kraus(schur_filtration(np.outer(u, u), [1, 2, 3]))
    assert np.abs(np.array(fam.block_norms) - [1, 4, 9]).max() < 1e-12
    assert max(fam.nesting_residuals()) < 1e-12


def test_nested_schur_gram_columns():
    fam = nested_kraus(schur_filtration(PHI, [1, 2]))
    first, second = fam.levels
    assert np.abs(second.ops[0][:1, :1] - first.ops[0]).max() < 1e-12
    assert abs(second.ops[0][0, 1]) < 1e-14
    assert abs(second.ops[1][0, 0]) < 1e-14


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_nesting_and_monotone_counts(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    sizes = sorted(rng.choice(np.arange(1, n), size=2, replace=False).tolist()) + [n]
    phi = random_psd(rng, n, int(rng.integers(1, n + 1)))
    fam = nested_kraus(schur_filtration(phi, sizes))
    assert max(fam.nesting_residuals()) <= 1e-9
    assert all(a <= b for a, b in zip(fam.counts, fam.counts[1:]))


def test_nested_cauchy_many_levels():
    x = 1 / np.arange(1, 9)
    fam = nested_kraus(schur_filtration(1 / (x[:, None] + x[None, :]), list(range(1, 9))))
    assert fam.counts == list(range(1, 9))
    assert max(fam.nesting_residuals()) <= 1e-9


def test_nested_repeated_level():
    fam = nested_kraus(schur_filtration(PHI, [1, 1, 2]))
    assert fam.counts == [1, 1, 2]


def test_nested_not_cp_names_level():
    bad = np.array([[1, 1, 0], [1, 1, 2], [0, 2, 1.0]])
    with pytest.raises(NotCompletelyPositive) as info:
        nested_kraus(schur_filtration(bad, [2, 3]))
    assert info.value.level == 2


def test_nested_inconsistent_blocks():
    filt = Filtration.coordinate([1, 2])
    F = FilteredCPMap(filt, (schur_map([[2.0]]), schur_map(PHI)))
    with pytest.raises(InconsistentFiltration):
        nested_kraus(F)


def test_graded_stinespring_trivial():
    m, fam = graded_stinespring(FilteredCPMap(Filtration.coordinate([2]), (identity_map(2),)))
    assert m == 1
    assert fam.pairing_residual < 1e-12


def test_graded_stinespring_pinching():
    F = schur_filtration(np.eye(3), [1, 2, 3])
    m, fam = graded_stinespring(F)
    assert m == 3
    assert fam.pairing_residual < 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_graded_pairing_identity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    phi = random_psd(rng, n)
    _, fam = graded_stinespring(schur_filtration(phi, [1, n]))
    assert fam.pairing_residual <= 1e-9


def test_global_family_reproduces_top_block():
    phi = random_psd(np.random.default_rng(5), 4)
    fam = nested_kraus(schur_filtration(phi, [2, 4]))
    assert map_residual(schur_map(phi), fam.global_family().superop()) < 1e-12


def test_filtration_validation():
    with pytest.raises(InconsistentFiltration):
        Filtration((np.diag([1.0, 1]), np.diag([1.0, 0])))


def test_transpose_level_fails():
    F = FilteredCPMap(Filtration.coordinate([2]), (transpose_map(2),), al.scalars(2))
    with pytest.raises(NotCompletelyPositive):
        nested_kraus(F)


def test_superop_roundtrip_in_compress():
    S = SuperOp.from_function(lambda x: x + x.T, (2, 2))
    assert map_residual(compress_cp(S, np.eye(2)), S) < 1e-14
