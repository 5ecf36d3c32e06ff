"""Structured kernels: divided differences, group Toeplitz kernels, the Cauchy kernel.

* Loewner matrices ``(f(x_i) - f(x_j)) / (x_i - x_j)`` (with ``f'`` on the
  diagonal) are PSD on every finite node set exactly when ``f`` is operator
  monotone; :func:`operator_monotone_test` samples that condition and
  :func:`monotonicity_oracle` checks ``A <= B => f(A) <= f(B)`` directly.
* On a finite group, ``Nf(s, t) = f(s t^{-1})`` is PSD exactly when ``f`` is
  positive definite.  For abelian groups the coefficients of ``f`` against
  the characters are the eigenvalues of ``Nf``, which gives an independent
  check.
* ``1/(x + y) = int_0^inf e^{-sx} e^{-sy} ds`` gives the Cauchy kernel a Gram
  representation; a Gauss-Laguerre rule turns it into a finite one.
"""
import cmath
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainViolation, InvalidAlgebra, NodesCollide, NonPositiveNode, ShapeMismatch
from .matcore import PsdVerdict, hermitian_defect, mat_fn, psd_check, scale
from .schurmult import GramRep, Kernel, WeightedPointSet, representing_vectors

NODE_SEPARATION = 1e-12
ORACLE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ScalarFunction:
    """A real function with its derivative on an open interval."""

    name: str
    evaluator: Callable
    derivative: Callable
    domain: Tuple[float, float] = (-np.inf, np.inf)

    def __call__(self, t):
        return self.evaluator(np.asarray(t, dtype=float))

    def check_derivative(self, samples: int = 11, h: float = 1e-5, tol: float = 1e-6) -> float:
        """Largest relative gap between ``f'`` and a central difference; raises ``ValueError`` above ``tol``."""
        lo, hi = _box(self.domain)
        t = np.linspace(lo, hi, samples)
        fd = (self.evaluator(t + h) - self.evaluator(t - h)) / (2 * h)
        d = self.derivative(t)
        gap = float(np.max(np.abs(fd - d) / np.maximum(1.0, np.abs(d))))
        if gap > tol:
            raise ValueError(f"derivative of {self.name} disagrees with finite differences ({gap:.3e})")
        return gap


def _box(domain, cap: Tuple[float, float] = (0.0, 10.0), margin: float = 0.05) -> Tuple[float, float]:
    """A closed interval inside ``domain`` intersected with ``cap``."""
    lo = max(domain[0], cap[0])
    hi = min(domain[1], cap[1])
    if not hi > lo:
        raise DomainViolation(f"domain {domain} does not meet {cap}")
    pad = margin * (hi - lo)
    return lo + pad, hi - pad


def power(p: float) -> ScalarFunction:
    return ScalarFunction(f"pow:{p:g}", lambda t: t ** p, lambda t: p * t ** (p - 1), (0.0, np.inf))


BATTERY = {
    "sqrt": ScalarFunction("sqrt", np.sqrt, lambda t: 0.5 / np.sqrt(t), (0.0, np.inf)),
    "log1p": ScalarFunction("log1p", np.log1p, lambda t: 1 / (1 + t), (-1.0, np.inf)),
    "square": ScalarFunction("square", lambda t: t * t, lambda t: 2 * t),
    "id": ScalarFunction("id", lambda t: t, np.ones_like),
    "exp": ScalarFunction("exp", np.exp, np.exp),
}


def function_by_name(spec: str) -> ScalarFunction:
    """``sqrt``, ``log1p``, ``square``, ``id``, ``exp`` or ``pow:<p>``."""
    if spec in BATTERY:
        return BATTERY[spec]
    if spec.startswith("pow:"):
        try:
            return power(float(spec[4:]))
        except ValueError:
            pass
    raise ValueError(f"unknown function {spec!r}")


def _check_nodes(f: ScalarFunction, nodes) -> np.ndarray:
    x = np.asarray(nodes, dtype=float).reshape(-1)
    lo, hi = f.domain
    bad = x[(x <= lo) | (x >= hi) | ~np.isfinite(x)]
    if bad.size:
        raise DomainViolation(f"nodes outside {f.domain}: {bad.tolist()}", bad.tolist())
    gaps = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(gaps, np.inf)
    if x.size > 1 and gaps.min() < NODE_SEPARATION:
        i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
        raise NodesCollide(f"nodes {i} and {j} are closer than {NODE_SEPARATION:g}")
    return x


def loewner_matrix(f: ScalarFunction, nodes) -> Kernel:
    """Divided differences of ``f`` at the nodes, ``f'`` on the diagonal.

    :raises NodesCollide: two nodes are within ``1e-12``.
    :raises DomainViolation: a node is outside the open domain.
    """
    x = _check_nodes(f, nodes)
    fx = f(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    L = (fx[:, None] - fx[None, :]) / dx
    np.fill_diagonal(L, f.derivative(x))
    return Kernel(WeightedPointSet(tuple(float(t) for t in x), np.ones(x.size)), L)


@dataclass(frozen=True)
class MonotoneReport:
    verdicts: tuple  # PsdVerdict per node set
    aggregate: bool
    largest_passed: int  # size of the largest node set that passed
    counterexample: Optional[tuple] = None  # first failing node set


def operator_monotone_test(f: ScalarFunction, node_sets: Sequence, tol: float = 1e-9) -> MonotoneReport:
    """PSD verdict of the Loewner matrix on each node set."""
    verdicts = []
    largest = 0
    bad = None
    for nodes in node_sets:
        v = psd_check(loewner_matrix(f, nodes).values, tol)
        verdicts.append(v)
        if v.is_psd:
            largest = max(largest, len(nodes))
        elif bad is None:
            bad = tuple(float(t) for t in nodes)
    return MonotoneReport(tuple(verdicts), bad is None, largest, bad)


def random_node_sets(f: ScalarFunction, count: int, max_size: int = 6, rng=None) -> List[np.ndarray]:
    """Node sets of sizes 2..max_size drawn uniformly from a box inside the domain and ``(0, 10)``."""
    rng = np.random.default_rng(0) if rng is None else rng
    lo, hi = _box(f.domain)
    return [np.sort(rng.uniform(lo, hi, size=rng.integers(2, max_size + 1))) for _ in range(count)]


@dataclass(frozen=True, eq=False)
class OracleResult:
    monotone: bool
    trials: int
    counterexample: Optional[Tuple[np.ndarray, np.ndarray]] = None
    min_eigenvalue: float = 0.0  # smallest eigenvalue of f(B) - f(A) seen


def _random_unitary(n: int, rng) -> np.ndarray:
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def monotonicity_oracle(f: ScalarFunction, dim: int, trials: int, seed: int = 0,
                        tol: float = ORACLE_TOL) -> OracleResult:
    """Sample ``A <= B`` with spectra inside the domain and test ``f(A) <= f(B)``.

    ``A`` has eigenvalues in the lower half of a box inside the domain and
    ``(0, 10)``; ``B = A + s G* G`` with ``G`` of rank one or full rank and
    ``s`` chosen so that ``B`` stays in the box.  Stops at the first pair
    with ``f(B) - f(A)`` failing :func:`psd_check` at ``tol``.
    """
    if not 1 <= dim <= 6:
        raise ValueError("dim must be between 1 and 6")
    rng = np.random.default_rng(seed)
    lo, hi = _box(f.domain)
    mid = (lo + hi) / 2
    worst = np.inf
    for k in range(trials):
        U = _random_unitary(dim, rng)
        A = (U * rng.uniform(lo, mid, size=dim)) @ U.conj().T
        A = (A + A.conj().T) / 2
        rows = 1 if rng.random() < 0.5 else dim
        G = rng.normal(size=(rows, dim)) + 1j * rng.normal(size=(rows, dim))
        Pos = G.conj().T @ G
        Pos /= np.linalg.norm(Pos, 2)
        room = hi - np.linalg.eigvalsh(A)[-1]
        B = A + rng.uniform(0, 1) * room * Pos
        B = (B + B.conj().T) / 2
        diff = mat_fn(B, f, f.domain) - mat_fn(A, f, f.domain)
        v = psd_check((diff + diff.conj().T) / 2, tol)
        worst = min(worst, v.min_eigenvalue)
        if not v.is_psd:
            return OracleResult(False, k + 1, (A, B), worst)
    return OracleResult(True, trials, None, float(worst))


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    """Group on ``0..order-1`` given by its multiplication table."""

    cayley: np.ndarray
    labels: tuple = ()
    identity: int = field(init=False)
    inverses: tuple = field(init=False)

    def __post_init__(self):
        T = np.asarray(self.cayley)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] == 0:
            raise ShapeMismatch(f"cayley table must be square and nonempty, got {T.shape}")
        n = T.shape[0]
        if not np.issubdtype(T.dtype, np.integer) or T.min() < 0 or T.max() >= n:
            raise InvalidAlgebra("cayley table entries must be element indices")
        T = T.astype(int)
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(n))
        if len(labels) != n:
            raise ShapeMismatch(f"{len(labels)} labels for a group of order {n}")
        left = T[T[:, :, None], np.arange(n)[None, None, :]]  # (ab)c
        right = T[np.arange(n)[:, None, None], T[None, :, :]]  # a(bc)
        if not np.array_equal(left, right):
            raise InvalidAlgebra("multiplication table is not associative")
        ids = [e for e in range(n) if np.array_equal(T[e], np.arange(n)) and np.array_equal(T[:, e], np.arange(n))]
        if not ids:
            raise InvalidAlgebra("no identity element")
        e = ids[0]
        inv = []
        for a in range(n):
            cands = np.flatnonzero((T[a] == e) & (T[:, a] == e))
            if not cands.size:
                raise InvalidAlgebra(f"element {labels[a]} has no inverse")
            inv.append(int(cands[0]))
        object.__setattr__(self, "cayley", T)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "identity", e)
        object.__setattr__(self, "inverses", tuple(inv))

    @property
    def order(self) -> int:
        return self.cayley.shape[0]

    @property
    def is_abelian(self) -> bool:
        return bool(np.array_equal(self.cayley, self.cayley.T))

    def power(self, g: int, k: int) -> int:
        x = self.identity
        for _ in range(k):
            x = int(self.cayley[x, g])
        return x

    def characters(self) -> np.ndarray:
        """Character table (rows = characters, trivial first) of an abelian group.

        Built by adjoining one generator at a time: if ``g^k`` is the first
        power of ``g`` in the current subgroup ``H``, each character of ``H``
        extends in ``k`` ways, one for each ``k``-th root of its value at ``g^k``.
        """
        if not self.is_abelian:
            raise InvalidAlgebra("character coefficients need an abelian group")
        n = self.order
        members = [self.identity]
        chars = [{self.identity: 1.0 + 0j}]
        while len(members) < n:
            g = next(x for x in range(n) if x not in set(members))
            k, gk = 1, g
            while gk not in set(members):
                gk = int(self.cayley[gk, g])
                k += 1
            new_members = []
            gj = self.identity
            for j in range(k):
                new_members += [int(self.cayley[h, gj]) for h in members]
                gj = int(self.cayley[gj, g])
            new_chars = []
            for chi in chars:
                base = cmath.exp(cmath.log(chi[gk]) / k)
                for m in range(k):
                    w = base * cmath.exp(2j * cmath.pi * m / k)
                    ext = {}
                    gj, wj = self.identity, 1.0 + 0j
                    for j in range(k):
                        for h in members:
                            ext[int(self.cayley[h, gj])] = chi[h] * wj
                        gj, wj = int(self.cayley[gj, g]), wj * w
                    new_chars.append(ext)
            members, chars = new_members, new_chars
        return np.array([[c[x] for x in range(n)] for c in chars])


def cyclic_group(n: int) -> FiniteGroup:
    idx = np.arange(n)
    return FiniteGroup((idx[:, None] + idx[None, :]) % n, tuple(str(i) for i in range(n)))


def direct_product(G: FiniteGroup, H: FiniteGroup) -> FiniteGroup:
    m, n = G.order, H.order
    T = np.empty((m * n, m * n), dtype=int)
    for a in range(m * n):
        for b in range(m * n):
            T[a, b] = G.cayley[a // n, b // n] * n + H.cayley[a % n, b % n]
    labels = tuple(f"({g},{h})" for g in G.labels for h in H.labels)
    return FiniteGroup(T, labels)


def toeplitz_kernel(f, G: FiniteGroup) -> Kernel:
    """``Nf[s, t] = f(s t^{-1})`` over the group elements."""
    f = np.asarray(f, dtype=complex).reshape(-1)
    if f.size != G.order:
        raise ShapeMismatch(f"{f.size} values for a group of order {G.order}")
    inv = np.array(G.inverses)
    N = f[G.cayley[:, inv]]
    return Kernel(WeightedPointSet(G.labels, np.ones(G.order)), N)


@dataclass(frozen=True, eq=False)
class ToeplitzVerdict:
    is_psd: bool
    hermitian: bool
    verdict: Optional[PsdVerdict]
    coefficients: Optional[np.ndarray] = None  # one per character, abelian groups only

    def coefficients_nonnegative(self, tol: float = 1e-9) -> Optional[bool]:
        if self.coefficients is None:
            return None
        c = self.coefficients
        return bool(np.all(c.real >= -tol) and np.all(np.abs(c.imag) <= tol))


def character_coefficients(f, G: FiniteGroup) -> np.ndarray:
    """``sum_g f(g) conj(chi(g))`` for each character ``chi``: the eigenvalues of ``Nf``."""
    f = np.asarray(f, dtype=complex).reshape(-1)
    return np.conj(G.characters()) @ f


def toeplitz_positive_check(f, G: FiniteGroup, tol: float = 1e-9) -> ToeplitzVerdict:
    """PSD verdict for ``Nf`` plus character coefficients when ``G`` is abelian.

    A non-Hermitian ``Nf`` gives a negative verdict rather than an error.
    """
    N = toeplitz_kernel(f, G).values
    coeffs = character_coefficients(f, G) if G.is_abelian else None
    herm = hermitian_defect(N) <= 1e-12 * scale(N)
    if not herm:
        return ToeplitzVerdict(False, False, None, coeffs)
    v = psd_check(N, tol)
    return ToeplitzVerdict(v.is_psd, True, v, coeffs)


@dataclass(frozen=True, eq=False)
class CauchyResult:
    kernel: Kernel
    exact: GramRep
    quadrature: GramRep
    quadrature_error: float
    beta: float


@lru_cache(maxsize=16)
def _laguerre_rule(points: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.laguerre.laggauss(points)


def laguerre_vectors(x: np.ndarray, points: int, beta: float) -> np.ndarray:
    """Rows ``a(x_i)`` with ``a_k(x) = sqrt(w_k / beta) exp(t_k / 2 - t_k x / beta)``."""
    t, w = _laguerre_rule(points)
    return np.exp(0.5 * np.log(w / beta)[None, :] + t[None, :] * (0.5 - x[:, None] / beta))


def cauchy_kernel(nodes, quad_points: int = 40) -> CauchyResult:
    """The kernel ``1/(x_i + x_j)`` with an exact and a quadrature Gram representation.

    The quadrature rule discretises ``int_0^inf e^{-sx} e^{-sy} ds`` after the
    substitution ``s = t / beta``; ``beta`` is picked by a one-dimensional
    search minimising the largest reconstruction error on the given nodes.

    :raises NonPositiveNode: some node is not strictly positive.
    """
    x = np.asarray(nodes, dtype=float).reshape(-1)
    if x.size == 0 or np.any(~(x > 0)) or np.any(~np.isfinite(x)):
        raise NonPositiveNode(f"nodes must be positive: {x.tolist()}")
    K = Kernel(WeightedPointSet(tuple(float(t) for t in x), np.ones(x.size)), 1 / (x[:, None] + x[None, :]))
    exact = representing_vectors(K)

    def error(log_beta: float) -> float:
        A = laguerre_vectors(x, quad_points, float(np.exp(log_beta)))
        return float(np.abs(A @ A.T - K.values.real).max())

    centre = np.log(2 * np.sqrt(x.min() * x.max()))
    grid = centre + np.linspace(-4, 4, 33)
    errs = [error(g) for g in grid]
    k = int(np.argmin(errs))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best = minimize_scalar(error, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    log_beta = best.x if best.fun <= errs[k] else grid[k]
    beta = float(np.exp(log_beta))
    A = laguerre_vectors(x, quad_points, beta)
    quad = GramRep(K.space, quad_points, A)
    return CauchyResult(K, exact, quad, quad.residual(K), beta)
