"""Extend a minimal Kraus family from a corner to the whole space.

A Schur multiplier on three points is compressed to the first point,
a minimal family is computed there, and the lift keeps those operators
as its leading entries while staying in the commutant of the diagonal.
"""
import numpy as np

from posmult import algebra as al
from posmult.cpmap import choi, kraus_from_choi, map_residual, schur_map
from posmult.stinelift import commutant_defect, compress_cp, lift_minimal_kraus, range_isometry, \
    restriction_residual


def main():
    u = np.array([1.0, 2.0, 0.5])
    phi = np.outer(u, u) + np.diag([0.0, 1.0, 2.0])
    S = schur_map(phi)
    p = np.diag([1.0, 0.0, 0.0])
    P = range_isometry(p)
    V = kraus_from_choi(choi(compress_cp(S, p, basis=P)))
    W = lift_minimal_kraus(S, al.diagonal(3), p, V, basis=P)
    print(f"corner family: {V.count} operator(s), lifted family: {W.count} operators")
    print(f"map residual:         {map_residual(S, W.superop()):.2e}")
    print(f"restriction residual: {restriction_residual(W, V, P):.2e}")
    print(f"commutant defect:     {commutant_defect(W, al.diagonal(3)):.2e}")
    for k, w in enumerate(W.ops):
        print(f"W_{k}: diag {np.array2string(np.diag(w).real, precision=4)}")


if __name__ == "__main__":
    main()
