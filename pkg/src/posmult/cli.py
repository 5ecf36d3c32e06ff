"""Command-line front end: JSON in, JSON report out.

Every command prints one report (sorted keys, so identical inputs give
identical bytes) and exits with

* 0 when the computation succeeded with an affirmative verdict,
* 3 when it succeeded with a negative verdict (e.g. "not PSD"),
* 2 on malformed input (the report names the location),
* 1 on an internal numerical failure.

Complex numbers travel as ``[re, im]`` pairs; a matrix is
``{"rows": r, "cols": c, "data": [[re, im], ...]}`` in row-major order
(nested lists of numbers or pairs are accepted too).
"""
import argparse
import hashlib
import json
import sys
from typing import Any, Dict, List, Optional

import numpy as np

from . import algebra as alg
from . import cpmap, kernels, opmult, schurmult, stinelift
from .errors import (
    InconsistentFiltration,
    InconsistentRestriction,
    MembershipViolation,
    NoConvergence,
    NotBimodular,
    NotCompletelyPositive,
    NotHermitian,
    NotMinimalInput,
    NotMultiplier,
    NotPsd,
    PosmultError,
    ProjectionNotInAlgebra,
)
from .matcore import TOL_PSD, dagger, range_isometry

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NEGATIVE = 0, 1, 2, 3

# errors that mean "the answer is no" rather than "the question was malformed"
NEGATIVE = (NotPsd, NotBimodular, NotMinimalInput, InconsistentRestriction, ProjectionNotInAlgebra,
            MembershipViolation, NotMultiplier, InconsistentFiltration)


class InputError(Exception):
    def __init__(self, msg: str, location: str = "$"):
        super().__init__(msg)
        self.location = location


# wire format


def enc_complex(z) -> List[float]:
    z = complex(z)
    return [float(z.real) + 0.0, float(z.imag) + 0.0]


def enc_matrix(M) -> Dict[str, Any]:
    M = np.asarray(M, dtype=complex)
    if M.ndim == 1:
        M = M[:, None]
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": [enc_complex(z) for z in M.reshape(-1)]}


def enc_vector(v) -> List[List[float]]:
    return [enc_complex(z) for z in np.asarray(v, dtype=complex).reshape(-1)]


def enc_ops(ops) -> List[Dict[str, Any]]:
    return [enc_matrix(a) for a in ops]


def _num(x, loc: str) -> complex:
    if isinstance(x, bool):
        raise InputError("expected a number", loc)
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in x):
        return complex(x[0], x[1])
    raise InputError("expected a number or an [re, im] pair", loc)


def dec_vector(obj, loc: str = "$") -> np.ndarray:
    if not isinstance(obj, list):
        raise InputError("expected a list of numbers", loc)
    return np.array([_num(x, f"{loc}[{i}]") for i, x in enumerate(obj)], dtype=complex)


def dec_matrix(obj, loc: str = "$") -> np.ndarray:
    if isinstance(obj, dict):
        for key in ("rows", "cols", "data"):
            if key not in obj:
                raise InputError(f"matrix is missing {key!r}", loc)
        r, c = obj["rows"], obj["cols"]
        if not (isinstance(r, int) and isinstance(c, int) and r >= 0 and c >= 0):
            raise InputError("rows and cols must be nonnegative integers", loc)
        data = dec_vector(obj["data"], f"{loc}.data")
        if data.size != r * c:
            raise InputError(f"expected {r * c} entries, got {data.size}", f"{loc}.data")
        return data.reshape(r, c)
    if isinstance(obj, list):
        rows = [dec_vector(row, f"{loc}[{i}]") for i, row in enumerate(obj)]
        if rows and any(len(row) != len(rows[0]) for row in rows):
            raise InputError("rows have different lengths", loc)
        return np.array(rows, dtype=complex).reshape(len(rows), len(rows[0]) if rows else 0)
    raise InputError("expected a matrix", loc)


def dec_ops(obj, loc: str) -> np.ndarray:
    if not isinstance(obj, list):
        raise InputError("expected a list of matrices", loc)
    mats = [dec_matrix(m, f"{loc}[{i}]") for i, m in enumerate(obj)]
    if mats and any(m.shape != mats[0].shape for m in mats):
        raise InputError("matrices have different shapes", loc)
    return np.array(mats, dtype=complex)


def _get(obj: dict, key: str, loc: str):
    if not isinstance(obj, dict):
        raise InputError("expected an object", loc)
    if key not in obj:
        raise InputError(f"missing field {key!r}", loc)
    return obj[key]


def dec_kernel(obj, loc: str = "$") -> schurmult.Kernel:
    """``{"labels", "weights", "values"}`` with row-major flat values, or a bare matrix."""
    if isinstance(obj, dict) and "values" in obj:
        raw = obj["values"]
        nested = isinstance(raw, list) and any(isinstance(r, list) and r and isinstance(r[0], list) for r in raw)
        if isinstance(raw, dict) or nested:
            V = dec_matrix(raw, f"{loc}.values")
        else:
            flat = dec_vector(raw, f"{loc}.values")
            n = int(round(np.sqrt(flat.size)))
            if n * n != flat.size:
                raise InputError(f"{flat.size} values do not form a square matrix", f"{loc}.values")
            V = flat.reshape(n, n)
        n = V.shape[0]
        labels = obj.get("labels", list(range(n)))
        weights = obj.get("weights", [1.0] * n)
        try:
            return schurmult.Kernel.of(V, [str(x) if isinstance(x, (list, dict)) else x for x in labels], weights)
        except (ValueError, TypeError) as exc:
            raise InputError(str(exc), loc) from exc
    M = dec_matrix(obj, loc)
    if M.shape[0] != M.shape[1]:
        raise InputError(f"kernel must be square, got {M.shape}", loc)
    return schurmult.Kernel.of(M)


def dec_algebra(obj, loc: str = "$") -> alg.VNAlg:
    """``{"dim", "basis"}`` or one of ``"scalars:n"``, ``"diagonal:n"``, ``"full:n"``, ``"blocks:k1,k2,..."``."""
    if isinstance(obj, str):
        kind, _, arg = obj.partition(":")
        try:
            if kind == "blocks":
                return alg.block_diagonal([int(x) for x in arg.split(",")])
            n = int(arg)
        except ValueError:
            raise InputError(f"bad algebra shorthand {obj!r}", loc) from None
        makers = {"scalars": alg.scalars, "diagonal": alg.diagonal, "full": alg.full}
        if kind not in makers:
            raise InputError(f"unknown algebra {kind!r}", loc)
        return makers[kind](n)
    dim = _get(obj, "dim", loc)
    basis = dec_ops(_get(obj, "basis", loc), f"{loc}.basis")
    if basis.size and basis.shape[1:] != (dim, dim):
        raise InputError(f"basis matrices must be {dim}x{dim}", f"{loc}.basis")
    return alg.VNAlg.from_span(list(basis), dim=dim)


def dec_map(obj, loc: str = "$") -> cpmap.SuperOp:
    """A linear map given as ``kraus``, ``choi``, ``superop``, ``schur`` or a named map."""
    if not isinstance(obj, dict):
        raise InputError("expected a map object", loc)
    if "kraus" in obj:
        ops = dec_ops(obj["kraus"], f"{loc}.kraus")
        if ops.ndim != 3:
            raise InputError("empty Kraus list", f"{loc}.kraus")
        return cpmap.KrausFamily(ops).superop()
    if "choi" in obj:
        C = dec_matrix(obj["choi"], f"{loc}.choi")
        di = obj.get("dim_in")
        do = obj.get("dim_out", di)
        if di is None or di * do != C.shape[0] or C.shape[0] != C.shape[1]:
            raise InputError("choi needs dim_in/dim_out matching its size", loc)
        return cpmap.ChoiMatrix(C, di, do).superop()
    if "superop" in obj:
        S = dec_matrix(obj["superop"], f"{loc}.superop")
        try:
            return cpmap.SuperOp.square(S)
        except PosmultError as exc:
            raise InputError(str(exc), loc) from exc
    if "schur" in obj:
        return cpmap.schur_map(dec_matrix(obj["schur"], f"{loc}.schur"))
    if "named" in obj:
        n = _get(obj, "dim", loc)
        named = {"identity": cpmap.identity_map, "transpose": cpmap.transpose_map}
        if obj["named"] not in named:
            raise InputError(f"unknown map {obj['named']!r}", f"{loc}.named")
        return named[obj["named"]](n)
    raise InputError("map needs one of kraus, choi, superop, schur, named", loc)


def dec_multiplier(obj, loc: str = "$") -> opmult.TensorMultiplier:
    m = _get(obj, "dim_h", loc)
    n = _get(obj, "dim_k", loc)
    phi = dec_matrix(_get(obj, "matrix", loc), f"{loc}.matrix")
    if phi.shape != (m * n, m * n):
        raise InputError(f"matrix must be {m * n}x{m * n}", f"{loc}.matrix")
    M = dec_algebra(obj["M"], f"{loc}.M") if "M" in obj else None
    N = dec_algebra(obj["N"], f"{loc}.N") if "N" in obj else None
    return opmult.TensorMultiplier(m, n, phi, M, N)


def dec_group(obj, loc: str = "$") -> kernels.FiniteGroup:
    """``{"order", "cayley", "labels"}`` or ``"cyclic:n"`` / ``"cyclic:n,m"`` (a product)."""
    if isinstance(obj, str):
        kind, _, arg = obj.partition(":")
        if kind != "cyclic":
            raise InputError(f"unknown group {obj!r}", loc)
        try:
            orders = [int(x) for x in arg.split(",")]
        except ValueError:
            raise InputError(f"bad group shorthand {obj!r}", loc) from None
        G = kernels.cyclic_group(orders[0])
        for k in orders[1:]:
            G = kernels.direct_product(G, kernels.cyclic_group(k))
        return G
    table = _get(obj, "cayley", loc)
    try:
        G = kernels.FiniteGroup(np.array(table, dtype=int), tuple(obj.get("labels", ())))
    except (ValueError, TypeError, PosmultError) as exc:
        raise InputError(str(exc), f"{loc}.cayley") from exc
    if "order" in obj and obj["order"] != G.order:
        raise InputError("order does not match the table", f"{loc}.order")
    return G


def parse_list(text: str, loc: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}", loc) from None


# reports


class Report:
    def __init__(self, command: str, digest: str, seed: int, tol: float):
        self.data = {"command": command, "inputs": {"sha256": digest}, "seed": seed, "tol": tol,
                     "verdicts": {}, "residuals": {}, "artifacts": {}, "values": {}}
        self.negative = False

    def verdict(self, name: str, value: bool, tol: float, residual: Optional[float] = None, primary: bool = True):
        self.data["verdicts"][name] = {"value": bool(value), "tol": tol,
                                       "residual": None if residual is None else float(residual)}
        if primary and not value:
            self.negative = True

    def residual(self, name: str, value: float):
        self.data["residuals"][name] = float(value)

    def artifact(self, name: str, value):
        self.data["artifacts"][name] = value

    def value(self, name: str, value):
        self.data["values"][name] = value

    def error(self, exc: BaseException, location: Optional[str] = None):
        err = {"type": type(exc).__name__, "message": str(exc)}
        if location is not None:
            err["location"] = location
        for attr in ("min_eigenvalue", "defect", "residual", "level", "index"):
            v = getattr(exc, attr, None)
            if v is not None:
                err[attr] = float(v) if isinstance(v, (float, np.floating)) else v
        for attr in ("witness", "relation"):
            v = getattr(exc, attr, None)
            if v is not None:
                err[attr] = enc_vector(v)
        self.data["error"] = err

    def dumps(self) -> str:
        return json.dumps(_plain(self.data), sort_keys=True, indent=1)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return enc_complex(x)
    return x


# commands


def cmd_psd(doc, args, rep: Report):
    K = dec_kernel(doc)
    v = schurmult.positive_schur_check(K, args.tol)
    rep.value("min_eigenvalue", v.min_eigenvalue)
    if v.is_psd:
        F = v.factor
        rep.verdict("psd", True, args.tol, float(np.abs(F.reconstruct() - K.values).max()) if K.n else 0.0)
        rep.value("rank", F.rank)
        rep.artifact("factor", enc_matrix(F.factor))
    else:
        rep.verdict("psd", False, args.tol, v.min_eigenvalue)
        rep.artifact("witness", enc_vector(v.witness))


def cmd_gram(doc, args, rep: Report):
    K = dec_kernel(doc)
    g = schurmult.representing_vectors(K, args.tol)
    rep.verdict("psd", True, args.tol)
    rep.verdict("reconstructs", g.residual(K) <= 1e-9 * max(1.0, np.abs(K.values).max()), 1e-9, g.residual(K))
    rep.verdict("minimal", schurmult.is_minimal_rep(g, args.tol), args.tol)
    rep.value("rank", g.rank)
    rep.value("norms_squared", g.norms_squared().tolist())
    rep.artifact("vectors", enc_matrix(g.vectors))


def cmd_lift_gram(doc, args, rep: Report):
    K = dec_kernel(_get(doc, "kernel", "$"), "$.kernel")
    Y = _get(doc, "subset", "$")
    if not isinstance(Y, list) or not all(isinstance(y, int) for y in Y):
        raise InputError("subset must be a list of point indices", "$.subset")
    if any(y < 0 or y >= K.n for y in Y) or len(set(Y)) != len(Y):
        raise InputError("subset indices out of range or repeated", "$.subset")
    if "vectors" in doc:
        A = dec_matrix(doc["vectors"], "$.vectors")
        a = schurmult.GramRep(K.space.subset(Y), A.shape[1], A)
    else:
        a = schurmult.representing_vectors(K.restrict(Y), args.tol)
    b = schurmult.lift_representing(K, Y, a, args.tol)
    pad = b.vectors[Y][:, a.rank:]
    rest = float(np.abs(b.vectors[Y][:, :a.rank] - a.vectors).max()) if Y and a.rank else 0.0
    rep.verdict("reconstructs", b.residual(K) <= 1e-9 * max(1.0, np.abs(K.values).max()), 1e-9, b.residual(K))
    rep.verdict("restriction", rest <= 1e-9 and (pad.size == 0 or np.abs(pad).max() == 0), 1e-9, rest)
    rep.verdict("minimal", schurmult.is_minimal_rep(b, args.tol), args.tol)
    rep.value("rank", b.rank)
    rep.artifact("vectors", enc_matrix(b.vectors))


def cmd_kraus(doc, args, rep: Report):
    S = dec_map(_get(doc, "map", "$") if "map" in doc else doc, "$.map" if "map" in doc else "$")
    C = cpmap.choi(S)
    v = cpmap.is_cp(S, args.tol)
    rep.value("choi_min_eigenvalue", v.min_eigenvalue)
    if not v.is_psd:
        rep.verdict("completely_positive", False, args.tol, v.min_eigenvalue)
        rep.artifact("witness", enc_vector(v.witness))
        return
    V = cpmap.kraus_from_choi(C, args.tol)
    res = cpmap.map_residual(S, V.superop())
    rep.verdict("completely_positive", True, args.tol)
    rep.verdict("implements", res <= 1e-9, 1e-9, res)
    rep.value("count", V.count)
    rep.artifact("kraus", enc_ops(V.ops))


def cmd_minimalize(doc, args, rep: Report):
    ops = dec_ops(_get(doc, "kraus", "$"), "$.kraus")
    if ops.ndim != 3:
        raise InputError("empty Kraus list", "$.kraus")
    V = cpmap.KrausFamily(ops)
    was, rel = cpmap.is_strongly_independent(V, args.tol)
    W, Lam = cpmap.minimalize(V, args.tol)
    res = cpmap.map_residual(V.superop(), W.superop())
    rep.verdict("input_minimal", was, args.tol, primary=False)
    if rel is not None:
        rep.artifact("relation", enc_vector(rel))
    rep.verdict("output_minimal", cpmap.is_strongly_independent(W, args.tol)[0], args.tol)
    rep.verdict("same_map", res <= 1e-9, 1e-9, res)
    rep.value("count", W.count)
    rep.artifact("kraus", enc_ops(W.ops))
    rep.artifact("mixing", enc_matrix(Lam))


def cmd_lift_kraus(doc, args, rep: Report):
    S = dec_map(_get(doc, "map", "$"), "$.map")
    D2 = dec_algebra(_get(doc, "algebra", "$"), "$.algebra")
    p = dec_matrix(_get(doc, "projection", "$"), "$.projection")
    P = None
    if "V" in doc:
        V = cpmap.KrausFamily(dec_ops(doc["V"], "$.V"))
    else:
        P = range_isometry(p)
        V = cpmap.kraus_from_choi(cpmap.choi(stinelift.compress_cp(S, p, basis=P)), stinelift.RANK_TOL)
        rep.artifact("V", enc_ops(V.ops))
    W = stinelift.lift_minimal_kraus(S, D2, p, V, args.tol, basis=P)
    P = range_isometry(p) if P is None else P
    res = cpmap.map_residual(S, W.superop())
    rr = stinelift.restriction_residual(W, V, P)
    cd = stinelift.commutant_defect(W, D2)
    rep.verdict("implements", res <= 1e-9, 1e-9, res)
    rep.verdict("restriction", rr <= 1e-9, 1e-9, rr)
    rep.verdict("minimal", cpmap.is_strongly_independent(W, args.tol)[0], args.tol)
    rep.verdict("in_commutant", cd <= 1e-9, 1e-9, cd)
    rep.value("count", W.count)
    rep.artifact("kraus", enc_ops(W.ops))


def _filtration(doc, args, dim: int) -> stinelift.Filtration:
    if "filtration" in doc:
        ps = dec_ops(doc["filtration"], "$.filtration")
        return stinelift.Filtration(tuple(ps))
    if args.levels:
        sizes = [int(x) for x in parse_list(args.levels, "--levels")]
        return stinelift.Filtration.coordinate(sizes, dim)
    raise InputError("need a filtration (field 'filtration' or --levels)", "$")


def cmd_nested(doc, args, rep: Report):
    S = dec_map(_get(doc, "map", "$"), "$.map")
    filt = _filtration(doc, args, S.dim_in)
    D = dec_algebra(doc["algebra"], "$.algebra") if "algebra" in doc else None
    F = stinelift.FilteredCPMap.from_global(S, filt, D)
    mult, fam = stinelift.graded_stinespring(F, args.tol)
    nest = fam.nesting_residuals()
    rep.verdict("nested", max(nest) <= 1e-9, 1e-9, max(nest))
    rep.verdict("pairing", fam.pairing_residual <= 1e-9, 1e-9, fam.pairing_residual)
    rep.value("multiplicity", mult)
    rep.value("counts", fam.counts)
    rep.value("block_norms", list(fam.block_norms))
    rep.artifact("levels", [enc_ops(V.ops) for V in fam.levels])


def cmd_schur_norm(doc, args, rep: Report):
    K = dec_kernel(doc)
    upper = schurmult.schur_norm_upper(K)
    lower = schurmult.brute_force_norm(K, 2000, np.random.default_rng(args.seed))
    rep.value("upper_bound", upper)
    rep.value("lower_bound", lower)
    v = schurmult.positive_schur_check(K, args.tol)
    rep.verdict("psd", v.is_psd, args.tol, v.min_eigenvalue)
    if v.is_psd:
        rep.value("norm", schurmult.positive_schur_norm(K, args.tol))


def _fn(args) -> kernels.ScalarFunction:
    if not args.fn:
        raise InputError("--fn is required", "--fn")
    try:
        f = kernels.function_by_name(args.fn)
    except ValueError as exc:
        raise InputError(str(exc), "--fn") from exc
    return f


def cmd_loewner(doc, args, rep: Report):
    f = _fn(args)
    if not args.nodes:
        raise InputError("--nodes is required", "--nodes")
    x = parse_list(args.nodes, "--nodes")
    L = kernels.loewner_matrix(f, x)
    v = schurmult.positive_schur_check(L, args.tol)
    rep.artifact("matrix", enc_matrix(L.values))
    rep.value("min_eigenvalue", v.min_eigenvalue)
    rep.value("determinant", float(np.linalg.det(L.values.real)))
    rep.verdict("psd", v.is_psd, args.tol, v.min_eigenvalue)
    if not v.is_psd:
        rep.artifact("witness", enc_vector(v.witness))


def cmd_monotone(doc, args, rep: Report):
    f = _fn(args)
    rng = np.random.default_rng(args.seed)
    if args.nodes:
        sets = [parse_list(s, "--nodes") for s in args.nodes.split(";")]
    else:
        sets = kernels.random_node_sets(f, args.sets, 6, rng)
    lo = kernels.operator_monotone_test(f, sets, args.tol)
    oracle = kernels.monotonicity_oracle(f, args.dim, args.trials, args.seed)
    rep.verdict("loewner_psd", lo.aggregate, args.tol)
    rep.verdict("monotone_oracle", oracle.monotone, kernels.ORACLE_TOL, oracle.min_eigenvalue)
    rep.value("largest_passed", lo.largest_passed)
    rep.value("trials", oracle.trials)
    if lo.counterexample is not None:
        rep.artifact("loewner_counterexample", list(lo.counterexample))
    if oracle.counterexample is not None:
        A, B = oracle.counterexample
        rep.artifact("oracle_counterexample", {"A": enc_matrix(A), "B": enc_matrix(B)})


def cmd_toeplitz(doc, args, rep: Report):
    gspec = args.group if args.group else _get(doc, "group", "$")
    if isinstance(gspec, str) and not gspec.startswith("cyclic:"):
        gspec = _load_json(gspec, "--group")
    G = dec_group(gspec, "--group" if args.group else "$.group")
    f = dec_vector(_get(doc, "values", "$"), "$.values")
    if f.size != G.order:
        raise InputError(f"{f.size} values for a group of order {G.order}", "$.values")
    v = kernels.toeplitz_positive_check(f, G, args.tol)
    rep.verdict("psd", v.is_psd, args.tol, None if v.verdict is None else v.verdict.min_eigenvalue)
    rep.value("hermitian", v.hermitian)
    if v.coefficients is not None:
        ok = v.coefficients_nonnegative(1e-9)
        rep.verdict("characters_nonnegative", ok, 1e-9, float(v.coefficients.real.min()), primary=False)
        rep.value("coefficients", enc_vector(v.coefficients))
    rep.artifact("matrix", enc_matrix(kernels.toeplitz_kernel(f, G).values))


def cmd_cauchy(doc, args, rep: Report):
    if not args.nodes:
        raise InputError("--nodes is required", "--nodes")
    x = parse_list(args.nodes, "--nodes")
    r = kernels.cauchy_kernel(x, args.quad)
    rep.verdict("psd", True, args.tol)
    rep.verdict("quadrature", r.quadrature_error <= 1e-6, 1e-6, r.quadrature_error)
    rep.value("beta", r.beta)
    rep.value("norms_squared", r.exact.norms_squared().tolist())
    rep.artifact("kernel", enc_matrix(r.kernel.values))
    rep.artifact("vectors", enc_matrix(r.exact.vectors))


def cmd_symbol(doc, args, rep: Report):
    phi = dec_multiplier(doc)
    sym = opmult.symbol(phi, tol=args.tol)
    res = opmult.symbol_residual(phi, sym)
    rep.verdict("multiplier", True, args.tol, phi.defect)
    rep.verdict("reproduces", res <= 1e-9, 1e-9, res)
    rep.value("ph_bound", sym.ph_bound)
    rep.value("count", sym.count)
    rep.value("norm_lower_bound", opmult.norm_lower_bound(phi, 200, args.seed))
    rep.artifact("a", enc_ops(sym.a_ops))
    rep.artifact("b", enc_ops(sym.b_ops))


def cmd_cp_mult(doc, args, rep: Report):
    phi = dec_multiplier(doc)
    v = opmult.cp_multiplier_check(phi, tol=args.tol)
    rep.value("choi_min_eigenvalue", v.min_eigenvalue)
    rep.verdict("in_cone", v.is_cp, args.tol, v.residual)
    if v.kraus is not None:
        rep.artifact("b", enc_ops(v.kraus))
    if v.witness is not None:
        rep.artifact("witness", enc_vector(v.witness))


def cmd_filtered(doc, args, rep: Report):
    phi = dec_multiplier(_get(doc, "multiplier", "$"), "$.multiplier")
    if "covering" in doc:
        pairs = []
        for i, pq in enumerate(doc["covering"]):
            if not isinstance(pq, list) or len(pq) != 2:
                raise InputError("covering entries are [p, q] pairs", f"$.covering[{i}]")
            pairs.append((dec_matrix(pq[0], f"$.covering[{i}][0]"), dec_matrix(pq[1], f"$.covering[{i}][1]")))
    else:
        filt = _filtration(doc, args, phi.dim_h)
        pairs = [(p, p) for p in filt.projections]
    try:
        cov = opmult.CoveringFamily(tuple(pairs))
    except ValueError as exc:
        raise InputError(str(exc), "$.covering") from exc
    F = opmult.FilteredMultiplier.from_global(phi, cov)
    r = opmult.filtered_multiplier_check(F, args.tol)
    rep.value("classification", r.classification)
    rep.value("ph_bounds", list(r.ph_bounds))
    rep.value("growth", list(r.growth))
    rep.value("central", r.central)
    rep.value("defects", [lv.defect for lv in r.levels])
    rep.verdict("consistent", max(r.consistency) <= args.tol, args.tol, max(r.consistency))
    if all(p.shape == q.shape and np.allclose(p, q) for p, q in pairs) and phi.dim_h == phi.dim_k:
        try:
            cp = opmult.filtered_cp_multiplier(F, args.tol)
        except NotCompletelyPositive as exc:
            rep.value("cp_failure_level", exc.level)
        else:
            nest = cp.family.nesting_residuals()
            rep.verdict("cp_nested", max(nest) <= 1e-9, 1e-9, max(nest), primary=False)
            rep.residual("cone", max(cp.cone_residuals))
            rep.artifact("cp_levels", [enc_ops(k) for k in cp.kraus])


COMMANDS = {
    "psd": cmd_psd,
    "gram": cmd_gram,
    "lift-gram": cmd_lift_gram,
    "kraus": cmd_kraus,
    "minimalize": cmd_minimalize,
    "lift-kraus": cmd_lift_kraus,
    "nested": cmd_nested,
    "schur-norm": cmd_schur_norm,
    "loewner": cmd_loewner,
    "monotone": cmd_monotone,
    "toeplitz": cmd_toeplitz,
    "cauchy": cmd_cauchy,
    "symbol": cmd_symbol,
    "cp-mult": cmd_cp_mult,
    "filtered": cmd_filtered,
}
NEEDS_INPUT = {"psd", "gram", "lift-gram", "kraus", "minimalize", "lift-kraus", "nested", "schur-norm",
               "symbol", "cp-mult", "filtered"}


# verification of emitted artifacts against the same input


def verify(command: str, doc, args, emitted: dict) -> float:
    """Residual of the artifacts in a previous report, recomputed from the input."""
    art = emitted.get("artifacts", {})
    if command in ("psd",) and "factor" in art:
        K = dec_kernel(doc)
        R = dec_matrix(art["factor"], "$.artifacts.factor")
        return float(np.abs(dagger(R) @ R - K.values).max())
    if command in ("gram", "lift-gram", "cauchy") and "vectors" in art:
        if command == "cauchy":
            x = np.array(parse_list(args.nodes, "--nodes"))
            K = 1 / (x[:, None] + x[None, :])
        else:
            K = dec_kernel(doc if command == "gram" else doc["kernel"]).values
        A = dec_matrix(art["vectors"], "$.artifacts.vectors")
        return float(np.abs(A @ dagger(A) - K).max())
    if command in ("kraus", "minimalize", "lift-kraus") and "kraus" in art:
        if command == "minimalize":
            S = cpmap.KrausFamily(dec_ops(doc["kraus"], "$.kraus")).superop()
        else:
            S = dec_map(doc["map"] if "map" in doc else doc)
        W = cpmap.KrausFamily(dec_ops(art["kraus"], "$.artifacts.kraus"))
        return cpmap.map_residual(S, W.superop())
    if command == "nested" and "levels" in art:
        S = dec_map(doc["map"])
        filt = _filtration(doc, args, S.dim_in)
        F = stinelift.FilteredCPMap.from_global(S, filt)
        return max(cpmap.map_residual(b, cpmap.KrausFamily(dec_ops(ops, "$.artifacts.levels")).superop())
                   for b, ops in zip(F.blocks, art["levels"]))
    if command == "symbol" and "a" in art:
        phi = dec_multiplier(doc)
        sym = opmult.MultiplierSymbol(dec_ops(art["a"], "$.artifacts.a"), dec_ops(art["b"], "$.artifacts.b"))
        return opmult.symbol_residual(phi, sym)
    if command == "cp-mult" and "b" in art:
        phi = dec_multiplier(doc)
        bs = dec_ops(art["b"], "$.artifacts.b")
        recon = sum(np.kron(b.T, dagger(b)) for b in bs)
        return float(np.abs(recon - phi.matrix).max())
    raise InputError(f"report has no verifiable artifact for {command!r}", "--verify")


# driver


def _load_json(path: str, loc: str):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}", loc) from None
    try:
        return json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not UTF-8: {exc}", loc) from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from None


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as exceptions so they become exit code 2 with a JSON report."""

    def error(self, message):
        raise _ArgError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="posmult", description="Positivity checks for kernels, CP maps and multipliers.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--in", dest="inp", help="input JSON file")
    ap.add_argument("--out", help="write the report here instead of standard output")
    ap.add_argument("--tol", type=float, default=TOL_PSD)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fn", help="sqrt, log1p, pow:<p>, square, id or exp")
    ap.add_argument("--nodes", help="comma-separated nodes (monotone: sets separated by ';')")
    ap.add_argument("--group", help="group JSON file or cyclic:n[,m...]")
    ap.add_argument("--levels", help="comma-separated leading-coordinate sizes of a filtration")
    ap.add_argument("--verify", help="previous report whose artifacts should be re-checked")
    ap.add_argument("--quad", type=int, default=40, help="quadrature points for cauchy")
    ap.add_argument("--dim", type=int, default=3, help="matrix size for the monotonicity oracle")
    ap.add_argument("--trials", type=int, default=500, help="trials for the monotonicity oracle")
    ap.add_argument("--sets", type=int, default=50, help="random node sets for monotone")
    return ap


def run(argv: Optional[List[str]] = None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = ap.parse_args(argv)
    except _ArgError as exc:
        rep = Report(argv[0] if argv else "", "", 0, TOL_PSD)
        rep.error(InputError(str(exc)), "argv")
        stdout.write(rep.dumps() + "\n")
        return EXIT_INPUT

    digest = hashlib.sha256()
    digest.update(json.dumps({k: v for k, v in sorted(vars(args).items()) if k not in ("inp", "out", "verify")},
                             sort_keys=True).encode())
    rep = None
    code = EXIT_OK
    try:
        doc = {}
        if args.inp:
            doc = _load_json(args.inp, "--in")
            digest.update(json.dumps(doc, sort_keys=True).encode())
        elif args.command in NEEDS_INPUT:
            raise InputError("--in is required", "--in")
        rep = Report(args.command, digest.hexdigest(), args.seed, args.tol)
        if args.verify:
            emitted = _load_json(args.verify, "--verify")
            res = verify(args.command, doc, args, emitted)
            emit_tol = float(emitted.get("tol", args.tol))
            bound = max(emit_tol, 1e-9)
            rep.verdict("verified", res <= bound, bound, res)
        else:
            COMMANDS[args.command](doc, args, rep)
        code = EXIT_NEGATIVE if rep.negative else EXIT_OK
    except InputError as exc:
        rep = rep or Report(args.command, digest.hexdigest(), args.seed, args.tol)
        rep.error(exc, exc.location)
        code = EXIT_INPUT
    except NEGATIVE as exc:
        rep.error(exc)
        code = EXIT_NEGATIVE
    except NotHermitian as exc:
        rep.error(exc, "$")
        code = EXIT_INPUT
    except (NoConvergence, FloatingPointError, np.linalg.LinAlgError) as exc:
        rep.error(exc)
        code = EXIT_FAIL
    except PosmultError as exc:
        rep.error(exc, "$")
        code = EXIT_INPUT
    except (ValueError, KeyError, TypeError) as exc:
        rep = rep or Report(args.command, digest.hexdigest(), args.seed, args.tol)
        rep.error(exc, "$")
        code = EXIT_INPUT
    rep.data["exit_code"] = code
    text = rep.dumps() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
