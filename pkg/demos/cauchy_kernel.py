"""Representing vectors for the kernel 1/(x+y) on positive nodes.

The exact Gram factor and a Gauss-Laguerre quadrature factor are compared
against the kernel and against the diagonal values 1/(2x).
"""
import numpy as np

from posmult.kernels import cauchy_kernel
from posmult.schurmult import positive_schur_check, positive_schur_norm


def main():
    x = np.logspace(-1, 1, 8)
    res = cauchy_kernel(x, quad_points=40)
    v = positive_schur_check(res.kernel)
    print(f"nodes: {np.array2string(x, precision=3)}")
    print(f"PSD: {v.is_psd}, smallest eigenvalue {v.min_eigenvalue:.3e}")
    err = np.abs(res.exact.norms_squared() - 1 / (2 * x)).max()
    print(f"exact factor: rank {res.exact.rank}, max |‖a(x)‖² - 1/(2x)| = {err:.2e}")
    print(f"quadrature factor: {res.quadrature.rank} points, beta {res.beta:.3f}, "
          f"max kernel error {res.quadrature_error:.2e}")
    print(f"positive Schur norm (largest diagonal): {positive_schur_norm(res.kernel):.4f} = 1/(2*{x[0]:.1f})")


if __name__ == "__main__":
    main()
