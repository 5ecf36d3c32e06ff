"""Block norms of a multiplier restricted to an increasing family of corners.

A bounded Schur pattern keeps its factorization bound level by level, while
the rank-one pattern u u^T with growing u only has finite bounds on each corner.
"""
import numpy as np

from posmult import algebra as al
from posmult.opmult import CoveringFamily, FilteredMultiplier, TensorMultiplier, filtered_multiplier_check


def schur_multiplier(phi):
    n = phi.shape[0]
    D = al.diagonal(n)
    return TensorMultiplier(n, n, np.diag(phi.T.reshape(-1)), D, D)


def report(name, phi):
    n = phi.shape[0]
    cov = CoveringFamily(tuple((p, p) for p in (np.diag([1.0] * k + [0.0] * (n - k)) for k in range(1, n + 1))))
    r = filtered_multiplier_check(FilteredMultiplier.from_global(schur_multiplier(phi), cov))
    print(f"{name}: {r.classification}")
    print(f"  bounds per level {np.array2string(np.array(r.ph_bounds), precision=3)}")


def main():
    n = 6
    report("all-ones pattern", np.ones((n, n)))
    u = np.arange(1.0, n + 1)
    report("u u^T with u_k = k", np.outer(u, u))


if __name__ == "__main__":
    main()
