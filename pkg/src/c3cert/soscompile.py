"""Compile SOS obligations to a semidefinite program, solve, extract, export.

Each obligation ``E(a; v) - sum_i lambda_i(v) g_i(v)`` must be a sum of
squares.  Every SOS polynomial gets a Gram matrix over a monomial basis chosen
inside half the (outer-approximated) Newton polytope of ``E``'s support, and
coefficient matching yields linear equalities between the template unknowns
``a`` and the Gram entries.

Variable vector layout: ``[a (free) | nonneg slacks | margin? | svec(G_1) | ...]``
where ``svec`` lists the upper triangle column by column with off-diagonal
entries scaled by sqrt(2) (the scaled-triangle convention of the PSD cone).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .certgen import Constants, ConstraintProgram, LinPoly, SosObligation
from .certificate import Certificate
from .polyalg import Polynomial, monomial, var_key

__all__ = [
    "GramBlock",
    "SdpProblem",
    "SolverOptions",
    "SolverReport",
    "SolverUnavailable",
    "ExtractionError",
    "compile_program",
    "solve",
    "extract",
    "export_sdpa",
    "import_sdpa",
    "SdpaData",
    "sos_program",
]

log = logging.getLogger(__name__)
SQRT2 = math.sqrt(2.0)


class SolverUnavailable(RuntimeError):
    pass


class ExtractionError(RuntimeError):
    pass


class CompileError(ValueError):
    pass


@dataclass
class GramBlock:
    name: str
    obligation: int
    multiplier: Polynomial | None  # None for the free SOS term
    basis: list  # exponent tuples over the obligation's variables
    offset: int
    variables: tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def svec_len(self) -> int:
        return self.dim * (self.dim + 1) // 2

    def basis_monomials(self) -> list:
        return [_exp_to_mono(e, self.variables) for e in self.basis]


@dataclass
class SdpProblem:
    free_names: list[str]
    n_nonneg: int
    blocks: list[GramBlock]
    A: sp.csr_matrix
    b: np.ndarray
    row_labels: list
    margin: bool = False
    nonneg_labels: list = field(default_factory=list)

    @property
    def n_free(self) -> int:
        return len(self.free_names)

    @property
    def margin_index(self) -> int | None:
        return self.n_free + self.n_nonneg if self.margin else None

    @property
    def psd_offset(self) -> int:
        return self.n_free + self.n_nonneg + (1 if self.margin else 0)

    @property
    def n_vars(self) -> int:
        return self.psd_offset + sum(b.svec_len for b in self.blocks)

    def summary(self) -> dict:
        dims = [b.dim for b in self.blocks]
        return {
            "rows": int(self.A.shape[0]),
            "vars": int(self.n_vars),
            "free": self.n_free,
            "nonneg": self.n_nonneg,
            "psd_blocks": len(self.blocks),
            "max_block": max(dims, default=0),
            "sum_svec": int(sum(b.svec_len for b in self.blocks)),
        }


# ---------------------------------------------------------------------------
# Newton polytope trimming


def _exp(m, index: dict[str, int], n: int) -> tuple[int, ...]:
    e = [0] * n
    for v, k in m:
        e[index[v]] = k
    return tuple(e)


def _exp_to_mono(e, variables):
    return monomial({v: k for v, k in zip(variables, e) if k})


def _all_exponents(n: int, deg: int) -> np.ndarray:
    rows = []
    for d in range(deg + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in combo:
                e[i] += 1
            rows.append(e)
    return np.array(rows, dtype=float).reshape(-1, n)


def _weights(variables: Sequence[str], mixed: bool = True) -> np.ndarray:
    """Directions for the polytope tests: total degree, blocks, variables.

    With ``mixed`` also the negated total degree and blends that weight one
    variable block fully and the rest lightly.
    """
    n = len(variables)
    blocks: dict[str, list[int]] = {}
    for i, v in enumerate(variables):
        blocks.setdefault(var_key(v)[1], []).append(i)
    W = [np.ones(n)]
    for i in range(n):
        w = np.zeros(n)
        w[i] = 1
        W.append(w)
    for idx in blocks.values():
        w = np.zeros(n)
        w[idx] = 1
        W.append(w)
    if mixed:
        W.append(-np.ones(n))
        if len(blocks) > 1:
            for idx in blocks.values():
                for light in (1 / 3, 1 / 2):
                    w2 = np.full(n, light)
                    w2[idx] = 1
                    W.append(w2)
    return np.array(W)


def _even_up(h: np.ndarray) -> np.ndarray:
    return h + np.mod(h, 2)


def sos_program(expr: Polynomial, domain: Sequence[Polynomial] = (), name: str = "p") -> ConstraintProgram:
    """Single obligation with no unknowns: ``expr`` is SOS, or nonnegative on ``{g >= 0}``."""
    variables = sorted(set(expr.variables).union(*(g.variables for g in domain)), key=var_key)
    ob = SosObligation(name, "sos", LinPoly.constant(expr), tuple(variables), tuple(domain))
    return ConstraintProgram(None, [], [ob], Constants(), 0)


def gram_bases(ob: SosObligation, trim: bool = True):
    """``(sigma0 basis, [multiplier bases])`` as exponent arrays.

    Multiplier bases follow per-block and per-variable degree bounds (the
    expression's degrees rounded up to even).  The free SOS term is then
    trimmed against half the Newton polytope of the expression's support
    together with the supports of the multiplier products, which is exact
    for the chosen multipliers.
    """
    variables = tuple(ob.variables)
    n = len(variables)
    index = {v: i for i, v in enumerate(variables)}
    if n == 0:
        # constant obligation: sigma is a nonnegative scalar
        return np.zeros((1, 0), dtype=int), [np.zeros((1, 0), dtype=int) for _ in ob.domain]
    supp = ob.expr.support() or {()}
    S = np.array([_exp(m, index, n) for m in supp], dtype=float).reshape(-1, n)
    deg = int(S.sum(axis=1).max())
    top = deg + (deg % 2)
    tol = 1e-9
    Wi = _weights(variables, mixed=False)
    Hi = _even_up((S @ Wi.T).max(axis=0))
    mults = []
    parts = [S]
    for g in ob.domain:
        G = np.array([_exp(m, index, n) for m, _ in g.items()], dtype=float).reshape(-1, n)
        dg = int(G.sum(axis=1).max())
        c2 = _all_exponents(n, max(0, (top - dg) // 2))
        if trim:
            hg = (G @ Wi.T).max(axis=0)
            c2 = c2[np.all(2 * c2 @ Wi.T + hg <= Hi + tol, axis=1)]
        mults.append(c2)
        if len(c2):
            parts.append((2 * c2[:, None, :] + G[None, :, :]).reshape(-1, n))
    cand = _all_exponents(n, top // 2)
    if trim:
        W = _weights(variables)
        H = (np.vstack(parts) @ W.T).max(axis=0)
        cand = cand[np.all(2 * cand @ W.T <= H + tol, axis=1)]
    return cand.astype(int), [m.astype(int) for m in mults]


def _min_degree_cliques(adj: list[set[int]]) -> list[list[int]]:
    """Maximal cliques of a chordal extension built by min-degree elimination."""
    work = [set(a) for a in adj]
    alive = set(range(len(adj)))
    cliques: list[set[int]] = []
    while alive:
        v = min(alive, key=lambda k: (len(work[k]), k))
        nb = work[v]
        cliques.append(nb | {v})
        for a in nb:
            work[a] |= nb - {a}
            work[a].discard(v)
        alive.discard(v)
    cliques.sort(key=len, reverse=True)
    maximal: list[set[int]] = []
    for c in cliques:
        if not any(c <= m for m in maximal):
            maximal.append(c)
    return [sorted(c) for c in maximal]


def term_sparsity_split(ob: SosObligation, sig: np.ndarray, mults: list[np.ndarray]) -> list[list[np.ndarray]]:
    """Split each Gram basis into cliques of the term-sparsity graph.

    Two basis monomials are linked when their product (times a monomial of
    the domain inequality, for multipliers) hits the support of the
    expression, the inequalities, or a diagonal square.  Each maximal clique
    of a chordal extension becomes its own PSD block, which restricts the
    Gram matrix to a sum of overlapping blocks.
    """
    variables = tuple(ob.variables)
    n = len(variables)
    index = {v: i for i, v in enumerate(variables)}
    A = {_exp(m, index, n) for m in ob.expr.support()}
    gsupp = [[_exp(m, index, n) for m, _ in g.items()] for g in ob.domain]
    for G in gsupp:
        A.update(G)
    A.update(tuple(int(v) for v in 2 * row) for row in sig)
    out = []
    for bi, B in enumerate([sig] + list(mults)):
        G = None if bi == 0 else np.array(gsupp[bi - 1])
        m = len(B)
        adj: list[set[int]] = [set() for _ in range(m)]
        for i in range(m):
            for j in range(i + 1, m):
                base = B[i] + B[j]
                if G is None:
                    hit = tuple(int(v) for v in base) in A
                else:
                    hit = any(tuple(int(v) for v in base + ge) in A for ge in G)
                if hit:
                    adj[i].add(j)
                    adj[j].add(i)
        out.append([B[c] for c in _min_degree_cliques(adj)] if m else [])
    return out


# ---------------------------------------------------------------------------
# compilation


def _poly_exp_dict(p: Polynomial, index, n) -> dict:
    return {_exp(m, index, n): c for m, c in p.items()}


SPARSITY_MODES = ("dense", "chordal")


def compile_program(cp: ConstraintProgram, trim: bool = True, margin: bool = False,
                    sparsity: str = "chordal") -> SdpProblem:
    if sparsity not in SPARSITY_MODES:
        raise CompileError(f"unknown sparsity mode {sparsity!r}; expected one of {SPARSITY_MODES}")
    free_names = cp.unknown_names()
    n_free = len(free_names)
    pointwise = [i for i, o in enumerate(cp.obligations) if o.pointwise]
    n_nonneg = len(pointwise)
    psd_offset = n_free + n_nonneg + (1 if margin else 0)
    margin_col = n_free + n_nonneg if margin else None

    rows_i: list[int] = []
    rows_j: list[int] = []
    vals: list[float] = []
    rhs: list[float] = []
    labels: list = []
    blocks: list[GramBlock] = []
    offset = psd_offset
    nonneg_labels = []
    r = 0
    for oi, ob in enumerate(cp.obligations):
        if ob.pointwise:
            # sum_k e_k a_k + e0 - s = 0, s >= 0
            col = n_free + len(nonneg_labels)
            nonneg_labels.append(ob.name)
            if ob.dense is not None:
                vec, c0 = ob.dense
                nz = np.flatnonzero(vec)
                rows_i.extend([r] * len(nz)); rows_j.extend(nz.tolist()); vals.extend(vec[nz].tolist())
                parts = {None: c0}
            else:
                parts = ob.expr.rows().get((), {})
                for k, c in parts.items():
                    if k is not None:
                        rows_i.append(r); rows_j.append(k); vals.append(c)
            rows_i.append(r); rows_j.append(col); vals.append(-1.0)
            if margin:
                rows_i.append(r); rows_j.append(margin_col); vals.append(-1.0)
            rhs.append(-parts.get(None, 0.0))
            labels.append((oi, ()))
            r += 1
            continue
        variables = tuple(ob.variables)
        n = len(variables)
        index = {v: i for i, v in enumerate(variables)}
        extra = ob.expr.variables - set(variables)
        if extra:
            raise CompileError(f"obligation {ob.name!r} mentions undeclared variables {sorted(extra)}")
        sig, mults = gram_bases(ob, trim)
        if len(sig) == 0:
            raise CompileError(f"obligation {ob.name!r}: no attainable Gram basis for degree {ob.expr.degree}")
        # equality rows keyed by monomial exponent
        entries: dict[tuple, list] = {}

        def add(e, col, v):
            entries.setdefault(e, []).append((col, v))

        for m, coeffs in ob.expr.rows().items():
            e = _exp(m, index, n)
            entries.setdefault(e, [])
            for k, c in coeffs.items():
                if k is None:
                    entries[e].append((None, c))
                else:
                    add(e, k, c)
        if sparsity == "chordal":
            groups = term_sparsity_split(ob, sig, mults)
        else:
            groups = [[B] if len(B) else [] for B in [sig] + list(mults)]
        for bi, (g, cliques) in enumerate(zip((None,) + tuple(ob.domain), groups)):
            gd = {(0,) * n: 1.0} if g is None else _poly_exp_dict(g, index, n)
            tag = "sigma" if g is None else f"lambda{bi - 1}"
            for ci, B in enumerate(cliques):
                name = f"{ob.name}/{tag}" + (f"#{ci}" if len(cliques) > 1 else "")
                blocks.append(GramBlock(name, oi, g, [tuple(map(int, row)) for row in B], offset, variables))
                col = offset
                for j in range(len(B)):
                    for i in range(j + 1):
                        scale = -1.0 if i == j else -SQRT2
                        base = tuple(B[i] + B[j])
                        for ge, gc in gd.items():
                            add(tuple(a + b for a, b in zip(base, ge)), col, scale * gc)
                        col += 1
                offset = col
        if margin:
            # expression - t * (1 + sum of squared sigma-basis monomials) must be SOS
            add((0,) * n, margin_col, -1.0)
            for row in sig:
                add(tuple(int(v) for v in 2 * row), margin_col, -1.0)
        for e in sorted(entries):
            const = 0.0
            for col, v in entries[e]:
                if col is None:
                    const += v
                else:
                    rows_i.append(r); rows_j.append(col); vals.append(v)
            rhs.append(-const)
            labels.append((oi, e))
            r += 1
    n_vars = offset
    A = sp.csr_matrix((vals, (rows_i, rows_j)), shape=(r, n_vars))
    A.sum_duplicates()
    return SdpProblem(free_names, n_nonneg, blocks, A, np.array(rhs, dtype=float), labels, margin, nonneg_labels)


# ---------------------------------------------------------------------------
# solving


@dataclass
class SolverOptions:
    max_iter: int = 200
    tol_gap: float = 1e-8
    tol_feas: float = 1e-11
    time_limit: float = 600.0
    verbose: bool = False
    backend: str = "clarabel"
    # certification thresholds
    residual_rel: float = 1e-6
    min_eig: float = -1e-7


@dataclass
class SolverReport:
    status: str  # feasible | infeasible | numerical-failure | timeout
    x: np.ndarray | None
    residual: float | None
    min_eigs: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    raw_status: str = ""
    iterations: int = 0
    margin: float | None = None

    @property
    def min_eig(self) -> float | None:
        return min(self.min_eigs) if self.min_eigs else None

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "raw_status": self.raw_status,
            "residual": self.residual,
            "min_eig": self.min_eig,
            "wall_time": self.wall_time,
            "iterations": self.iterations,
            "margin": self.margin,
        }


def svec_to_mat(v: np.ndarray, d: int) -> np.ndarray:
    M = np.zeros((d, d))
    k = 0
    for j in range(d):
        for i in range(j + 1):
            if i == j:
                M[i, i] = v[k]
            else:
                M[i, j] = M[j, i] = v[k] / SQRT2
            k += 1
    return M


def residuals(sdp: SdpProblem, x: np.ndarray) -> tuple[float, list[float]]:
    res = float(np.max(np.abs(sdp.A @ x - sdp.b))) if sdp.A.shape[0] else 0.0
    eigs = []
    for blk in sdp.blocks:
        G = svec_to_mat(x[blk.offset:blk.offset + blk.svec_len], blk.dim)
        eigs.append(float(np.linalg.eigvalsh(G)[0]))
    if sdp.n_nonneg:
        eigs.append(float(np.min(x[sdp.n_free:sdp.n_free + sdp.n_nonneg])))
    return res, eigs


def solve(sdp: SdpProblem, opts: SolverOptions | None = None) -> SolverReport:
    opts = opts or SolverOptions()
    if opts.backend != "clarabel":
        raise SolverUnavailable(f"solver backend {opts.backend!r} is not available; "
                                "export the problem with export-sdpa and use an external SDPA-format solver")
    try:
        import clarabel
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise SolverUnavailable("clarabel is not installed; export the problem with export-sdpa "
                                "and use an external SDPA-format solver") from exc
    t0 = time.perf_counter()
    n = sdp.n_vars
    m_eq = sdp.A.shape[0]
    blocks_A = [sdp.A]
    b_parts = [sdp.b]
    cones = []
    if m_eq:
        cones.append(clarabel.ZeroConeT(m_eq))
    if sdp.n_nonneg:
        sel = sp.csr_matrix((-np.ones(sdp.n_nonneg), (np.arange(sdp.n_nonneg), sdp.n_free + np.arange(sdp.n_nonneg))),
                            shape=(sdp.n_nonneg, n))
        blocks_A.append(sel)
        b_parts.append(np.zeros(sdp.n_nonneg))
        cones.append(clarabel.NonnegativeConeT(sdp.n_nonneg))
    q = np.zeros(n)
    if sdp.margin:
        # maximize t subject to t <= 1 (keeps the problem bounded)
        mi = sdp.margin_index
        blocks_A.append(sp.csr_matrix(([1.0], ([0], [mi])), shape=(1, n)))
        b_parts.append(np.ones(1))
        cones.append(clarabel.NonnegativeConeT(1))
        q[mi] = -1.0
    for blk in sdp.blocks:
        L = blk.svec_len
        sel = sp.csr_matrix((-np.ones(L), (np.arange(L), blk.offset + np.arange(L))), shape=(L, n))
        blocks_A.append(sel)
        b_parts.append(np.zeros(L))
        cones.append(clarabel.PSDTriangleConeT(blk.dim))
    A = sp.vstack(blocks_A).tocsc()
    b = np.concatenate(b_parts)
    P = sp.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = opts.max_iter
    settings.tol_gap_abs = opts.tol_gap
    settings.tol_gap_rel = opts.tol_gap
    settings.tol_feas = opts.tol_feas
    settings.time_limit = opts.time_limit
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    sol = solver.solve()
    wall = time.perf_counter() - t0
    raw = str(sol.status)
    x = np.array(sol.x)
    report = SolverReport("numerical-failure", None, None, wall_time=wall, raw_status=raw,
                          iterations=int(getattr(sol, "iterations", 0)))
    if "Infeasible" in raw and "Dual" not in raw:
        report.status = "infeasible"
        return report
    if "MaxTime" in raw:
        report.status = "timeout"
    res, eigs = residuals(sdp, x)
    report.x, report.residual, report.min_eigs = x, res, eigs
    if sdp.margin:
        report.margin = float(x[sdp.margin_index])
    bnorm = float(np.max(np.abs(sdp.b))) if sdp.b.size else 0.0
    certified = res <= opts.residual_rel * (1 + bnorm) and (not eigs or min(eigs) >= opts.min_eig)
    if raw in ("Solved", "AlmostSolved") and certified:
        report.status = "feasible"
    elif report.status != "timeout":
        report.status = "numerical-failure"
    log.info("solve: %s (raw %s) residual=%.2e min_eig=%s in %.1fs", report.status, raw, res,
             f"{min(eigs):.2e}" if eigs else "n/a", wall)
    return report


# ---------------------------------------------------------------------------
# extraction


def extract(sdp: SdpProblem, report: SolverReport, cp: ConstraintProgram, tol: float = 1e-6,
            keep_multipliers: bool = False) -> Certificate:
    if report.status != "feasible" or report.x is None:
        raise ExtractionError(f"cannot extract from a {report.status} solve")
    x = report.x
    a = x[:sdp.n_free]
    coeffs = {t.name: [float(v) for v in a[t.offset:t.offset + t.size]] for t in cp.templates}
    bases = {t.name: t.basis for t in cp.templates}
    cert = Certificate.from_coefficients(coeffs, bases, constants=cp.constants.as_dict())
    # re-verify every obligation from clipped Gram factors
    by_ob: dict[int, list[GramBlock]] = {}
    for blk in sdp.blocks:
        by_ob.setdefault(blk.obligation, []).append(blk)
    worst = 0.0
    mults = {}
    for oi, ob in enumerate(cp.obligations):
        if ob.pointwise:
            continue
        lhs = ob.expr.evaluate(a)
        recon: dict = {}
        for blk in by_ob.get(oi, []):
            G = svec_to_mat(x[blk.offset:blk.offset + blk.svec_len], blk.dim)
            w, V = np.linalg.eigh(G)
            G = (V * np.clip(w, 0, None)) @ V.T
            mons = blk.basis_monomials()
            q = _gram_poly(G, mons)
            if blk.multiplier is not None:
                if keep_multipliers:
                    mults.setdefault(ob.name, []).append({"g": blk.multiplier.to_string(),
                                                          "lambda": q.to_string()})
                q = q * blk.multiplier
            for m, c in q.items():
                recon[m] = recon.get(m, 0.0) + c
        diff = lhs - Polynomial(recon)
        worst = max(worst, diff.max_abs_coeff())
    cert.meta["extraction_mismatch"] = worst
    cert.multipliers = mults
    if worst > tol:
        raise ExtractionError(f"extraction inconsistency: max coefficient mismatch {worst:.3e} > {tol:g}")
    return cert


def _gram_poly(G: np.ndarray, mons: list) -> Polynomial:
    from .polyalg import mono_mul

    acc: dict = {}
    d = len(mons)
    for i in range(d):
        for j in range(i, d):
            c = G[i, j] * (1.0 if i == j else 2.0)
            if c == 0.0:
                continue
            m = mono_mul(mons[i], mons[j])
            acc[m] = acc.get(m, 0.0) + c
    return Polynomial(acc)


# ---------------------------------------------------------------------------
# SDPA sparse format
#
# Dual standard form: find block-diagonal Y >= 0 with F_i . Y = c_i.  Gram
# matrices become dense blocks; nonnegative slacks and the split free
# scalars (a = a_plus - a_minus) share one diagonal block.


@dataclass
class SdpaData:
    m: int
    block_struct: list[int]
    c: np.ndarray
    entries: list  # (matno, block, i, j, value), 1-based indices, i <= j

    def entry_multiset(self) -> list:
        return sorted(self.entries)

    def residual(self, Y: list[np.ndarray]) -> float:
        """max_i |F_i . Y - c_i| for block values ``Y`` (diagonal blocks as vectors)."""
        acc = np.zeros(self.m + 1)
        for (k, blk, i, j, v) in self.entries:
            Yb = Y[blk - 1]
            if self.block_struct[blk - 1] < 0:
                if i != j:
                    continue
                val = Yb[i - 1]
                acc[k] += v * val
            else:
                acc[k] += v * Yb[i - 1, j - 1] * (1.0 if i == j else 2.0)
        return float(np.max(np.abs(acc[1:] - self.c))) if self.m else 0.0


def to_sdpa(sdp: SdpProblem) -> SdpaData:
    A = sdp.A.tocoo()
    m = A.shape[0]
    diag_size = 2 * sdp.n_free + sdp.n_nonneg + (2 if sdp.margin else 0)
    struct = []
    if diag_size:
        struct.append(-diag_size)
    block_no = {}
    for bi, blk in enumerate(sdp.blocks):
        struct.append(blk.dim)
        block_no[bi] = len(struct)
    # column -> (block, i, j, factor)
    colmap: dict[int, list] = {}
    for k in range(sdp.n_free):
        colmap[k] = [(1, 2 * k + 1, 2 * k + 1, 1.0), (1, 2 * k + 2, 2 * k + 2, -1.0)]
    for s in range(sdp.n_nonneg):
        col = sdp.n_free + s
        pos = 2 * sdp.n_free + s + 1
        colmap[col] = [(1, pos, pos, 1.0)]
    if sdp.margin:
        pos = 2 * sdp.n_free + sdp.n_nonneg + 1
        colmap[sdp.margin_index] = [(1, pos, pos, 1.0), (1, pos + 1, pos + 1, -1.0)]
    for bi, blk in enumerate(sdp.blocks):
        col = blk.offset
        for j in range(blk.dim):
            for i in range(j + 1):
                colmap[col] = [(block_no[bi], i + 1, j + 1, 1.0 if i == j else 1.0 / SQRT2)]
                col += 1
    agg: dict = {}
    for r, c, v in zip(A.row, A.col, A.data):
        for (blk, i, j, f) in colmap[int(c)]:
            key = (int(r) + 1, blk, i, j)
            agg[key] = agg.get(key, 0.0) + float(v) * f
    entries = [(k, blk, i, j, v) for (k, blk, i, j), v in sorted(agg.items()) if v != 0.0]
    if sdp.margin:
        pos = 2 * sdp.n_free + sdp.n_nonneg + 1
        entries = [(0, 1, pos, pos, 1.0), (0, 1, pos + 1, pos + 1, -1.0)] + entries
    return SdpaData(m, struct, np.array(sdp.b, dtype=float), entries)


def export_sdpa(sdp: SdpProblem, path: str | Path) -> SdpaData:
    data = to_sdpa(sdp)
    lines = [
        '"c3cert SDP in SDPA sparse format (dual standard form: F_i . Y = c_i, Y psd)',
        '"free scalars a_k are split as Y1[2k-1] - Y1[2k] in the leading diagonal block',
        f'"free={sdp.n_free} nonneg={sdp.n_nonneg} margin={int(sdp.margin)} gram_blocks={len(sdp.blocks)}',
        str(data.m),
        str(len(data.block_struct)),
        " ".join(str(s) for s in data.block_struct) if data.block_struct else "",
        " ".join(repr(float(v)) for v in data.c) if data.m else "",
    ]
    for (k, blk, i, j, v) in data.entries:
        lines.append(f"{k} {blk} {i} {j} {v!r}")
    if data.m == 0 and not data.block_struct:
        lines = lines[:3] + ["0 0"]
    Path(path).write_text("\n".join(lines) + "\n")
    return data


def import_sdpa(path: str | Path) -> SdpaData:
    raw = [ln.strip() for ln in Path(path).read_text().splitlines()]
    body = [ln for ln in raw if ln and not ln.startswith(('"', "*"))]
    if not body:
        raise ValueError("empty SDPA file")
    head = body[0].replace(",", " ").split()
    if len(head) == 2 and head == ["0", "0"]:
        return SdpaData(0, [], np.zeros(0), [])
    m = int(head[0])
    nblocks = int(body[1].split()[0])
    if nblocks == 0:
        return SdpaData(m, [], np.zeros(m), [])
    struct = [int(t) for t in body[2].replace(",", " ").replace("{", " ").replace("}", " ").split()][:nblocks]
    rest = body[3:]
    c_tokens: list[float] = []
    i = 0
    while len(c_tokens) < m:
        c_tokens.extend(float(t) for t in rest[i].replace(",", " ").replace("{", " ").replace("}", " ").split())
        i += 1
    entries = []
    for ln in rest[i:]:
        parts = ln.split()
        entries.append((int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])))
    return SdpaData(m, struct, np.array(c_tokens[:m]), entries)


def sdpa_block_values(sdp: SdpProblem, x: np.ndarray) -> list[np.ndarray]:
    """Map a solution vector onto SDPA block values (for round-trip residual checks)."""
    out = []
    diag_size = 2 * sdp.n_free + sdp.n_nonneg + (2 if sdp.margin else 0)
    if diag_size:
        d = np.zeros(diag_size)
        a = x[:sdp.n_free]
        d[0:2 * sdp.n_free:2] = np.clip(a, 0, None)
        d[1:2 * sdp.n_free:2] = np.clip(-a, 0, None)
        d[2 * sdp.n_free:2 * sdp.n_free + sdp.n_nonneg] = x[sdp.n_free:sdp.n_free + sdp.n_nonneg]
        if sdp.margin:
            t = x[sdp.margin_index]
            d[-2], d[-1] = max(t, 0.0), max(-t, 0.0)
        out.append(d)
    for blk in sdp.blocks:
        out.append(svec_to_mat(x[blk.offset:blk.offset + blk.svec_len], blk.dim))
    return out
