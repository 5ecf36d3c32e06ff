"""Divided-difference matrices and a direct matrix-monotonicity search.

Each function is tested on random node sets and by sampling ordered pairs
A <= B of Hermitian matrices. Powers up to one and the logarithm pass;
the square and the exponential are caught by both tests.
"""
import numpy as np

from posmult.kernels import BATTERY, function_by_name, loewner_matrix, monotonicity_oracle, \
    operator_monotone_test, random_node_sets


def main():
    rng = np.random.default_rng(0)
    names = ["sqrt", "log1p", "pow:0.3", "pow:0.9", "square", "exp"]
    print(f"{'function':<10}{'loewner':>9}{'oracle':>9}{'min eig':>12}")
    for name in names:
        f = function_by_name(name)
        lo = operator_monotone_test(f, random_node_sets(f, 50, 6, rng))
        orc = monotonicity_oracle(f, 3, 500, seed=0)
        print(f"{name:<10}{str(lo.aggregate):>9}{str(orc.monotone):>9}{orc.min_eigenvalue:>12.3e}")
    x1, x2 = 1.0, 3.0
    det = np.linalg.det(loewner_matrix(BATTERY["square"], [x1, x2]).values.real)
    print(f"square on ({x1}, {x2}): determinant {det:.6f}, -(x1-x2)^2 = {-(x1 - x2) ** 2:.6f}")


if __name__ == "__main__":
    main()
