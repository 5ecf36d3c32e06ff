"""Random instance generators shared by the test modules."""
import numpy as np

from posmult import algebra as al


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_hermitian(rng, n):
    A = crandn(rng, n, n)
    return (A + A.conj().T) / 2


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    G = crandn(rng, rank, n)
    return G.conj().T @ G


def random_unitary(rng, n):
    Q, R = np.linalg.qr(crandn(rng, n, n))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_projection(rng, n, rank):
    Q = random_unitary(rng, n)[:, :rank]
    return Q @ Q.conj().T


def choi_direct(ops):
    """Choi matrix of ``x -> sum a^* x a`` by evaluating on matrix units."""
    ops = np.asarray(ops)
    n = ops.shape[1]
    m = ops.shape[2]
    C = np.zeros((n * m, n * m), dtype=complex)
    for i in range(n):
        for j in range(n):
            E = np.zeros((n, n))
            E[i, j] = 1
            out = sum(a.conj().T @ E @ a for a in ops) if len(ops) else np.zeros((m, m))
            C[i * m:(i + 1) * m, j * m:(j + 1) * m] = out
    return C


def apply_direct(ops, x):
    return sum(a.conj().T @ x @ a for a in ops)


def random_in_algebra(rng, A):
    """A random element of a VNAlg (projection of a Gaussian matrix)."""
    return A.project(crandn(rng, A.dim, A.dim))


def random_algebra(rng, kind, m):
    if kind == "diag":
        return al.diagonal(m)
    if kind == "full":
        return al.full(m)
    if m < 2:
        return al.full(m)
    k = int(rng.integers(1, m))
    return al.block_diagonal([k, m - k])


def lifting_instance(rng, kind):
    """``(phi ops, D2, p)`` with phi bimodular over ``D2`` and ``p`` a projection of ``D2``."""
    d = int(rng.integers(1, 7))
    if kind == 0:
        D = al.scalars(d)
        ops = crandn(rng, int(rng.integers(1, 5)), d, d)
        p = np.eye(d) if rng.random() < 0.7 else np.zeros((d, d))
    elif kind == 1:
        D = al.diagonal(d)
        ops = np.stack([np.diag(crandn(rng, d)) for _ in range(int(rng.integers(1, 5)))])
        p = np.diag((rng.random(d) < 0.5).astype(float))
    else:
        d = max(d, 2)
        k = int(rng.integers(1, d))
        D = al.block_diagonal([k, d - k])
        ops = np.stack([
            np.diag(np.r_[np.full(k, crandn(rng, 1)[0]), np.full(d - k, crandn(rng, 1)[0])])
            for _ in range(int(rng.integers(1, 4)))
        ])
        p = np.zeros((d, d), dtype=complex)
        p[:k, :k] = random_projection(rng, k, int(rng.integers(0, k + 1)))
        p[k:, k:] = random_projection(rng, d - k, int(rng.integers(0, d - k + 1)))
    return ops, D, p
