"""Certificate conditions as sum-of-squares obligations.

A :class:`ProblemSpec` fixes the system, the target sets, the template degrees
and the constants.  :func:`enumerate_conditions` expands it into a list of
:class:`ConditionInstance` records, one per quantifier instantiation (input,
counter triple, automaton-state pair, region of the slab cover).  The same
records drive two consumers:

* :func:`generate` turns each record into an S-procedure strengthened
  :class:`SosObligation` over template coefficients (the SDP side), and
* :mod:`c3cert.certcheck` evaluates each record's logical implication on
  samples (the verifier side).

Variable blocks: ``x`` is the first state argument (``x0`` for initial
states), ``y`` the second and ``z`` the third (``w'`` in ranking conditions),
``u`` the input.  System state variables must be named ``x1..xn``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .polyalg import (
    MonomialBasis,
    Polynomial,
    basis,
    const,
    mono_str,
    var,
)
from .semialg import SemiAlgebraicSet, set_difference_as_regions
from .sysmodel import ControlSystem, FiniteInputSet

__all__ = [
    "Constants",
    "LinPoly",
    "Template",
    "ProblemSpec",
    "ConditionInstance",
    "SosObligation",
    "ConstraintProgram",
    "enumerate_conditions",
    "generate",
    "gen_finite_visits",
    "gen_recurrence",
    "gen_counter",
    "gen_fin_inf",
    "gen_verification_only",
    "gen_recurrence_on_trace",
    "t_name",
    "v_name",
    "z_name",
]

MODES = ("finite", "recurrence", "counter", "fin_inf", "verify-only")


class ProgramError(ValueError):
    pass


@dataclass(frozen=True)
class Constants:
    mu: float = 0.5
    tau: float = 1.0
    xi: float | tuple[float, ...] = 0.1
    M: float = 1e3

    def __post_init__(self):
        xis = self.xi if isinstance(self.xi, tuple) else (self.xi,)
        for name, val in [("mu", self.mu), ("tau", self.tau), ("M", self.M)] + [("xi", x) for x in xis]:
            if not val > 0:
                raise ProgramError(f"constant {name} must be strictly positive, got {val}")

    def xi_for(self, r: int) -> float:
        """ξ for partition ``r`` (1-based); a scalar broadcasts."""
        if isinstance(self.xi, tuple):
            return self.xi[r - 1] if len(self.xi) > 1 else self.xi[0]
        return self.xi

    def as_dict(self) -> dict:
        return {"mu": self.mu, "tau": self.tau, "xi": list(self.xi) if isinstance(self.xi, tuple) else self.xi, "M": self.M}


# ---------------------------------------------------------------------------
# polynomials with coefficients affine in the unknowns


class LinPoly:
    """``const + sum_k a_k * P_k``: a polynomial affine in unknowns ``a_k``.

    Stored as ``{key: Polynomial}`` where ``key`` is ``None`` for the constant
    part and an integer unknown index otherwise.
    """

    __slots__ = ("parts",)

    def __init__(self, parts: Mapping | None = None):
        self.parts: dict = {k: p for k, p in (parts or {}).items() if not p.is_zero()}

    @classmethod
    def constant(cls, p: Polynomial | float) -> "LinPoly":
        if not isinstance(p, Polynomial):
            p = const(float(p))
        return cls({None: p})

    def __add__(self, other: "LinPoly") -> "LinPoly":
        out = dict(self.parts)
        for k, p in other.parts.items():
            out[k] = out[k] + p if k in out else p
        return LinPoly(out)

    def __neg__(self) -> "LinPoly":
        return LinPoly({k: -p for k, p in self.parts.items()})

    def __sub__(self, other: "LinPoly") -> "LinPoly":
        return self + (-other)

    def scale(self, c: float) -> "LinPoly":
        return LinPoly({k: p * c for k, p in self.parts.items()})

    def __mul__(self, c: float) -> "LinPoly":
        return self.scale(c)

    __rmul__ = __mul__

    def support(self) -> set:
        return {m for p in self.parts.values() for m, _ in p.items()}

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.parts.values()), default=0)

    @property
    def variables(self) -> set[str]:
        return {v for p in self.parts.values() for v in p.variables}

    def unknowns(self) -> set[int]:
        return {k for k in self.parts if k is not None}

    def rows(self) -> dict:
        """``{monomial: {key: coeff}}`` coefficient-matching view."""
        out: dict = {}
        for k, p in self.parts.items():
            for m, c in p.items():
                out.setdefault(m, {})[k] = out.get(m, {}).get(k, 0.0) + c
        return out

    def evaluate(self, values: Sequence[float]) -> Polynomial:
        acc: dict = {}
        for k, p in self.parts.items():
            w = 1.0 if k is None else float(values[k])
            if w == 0.0:
                continue
            for m, c in p.items():
                acc[m] = acc.get(m, 0.0) + w * c
        return Polynomial(acc)


# ---------------------------------------------------------------------------
# templates and naming


def t_name(p: int | None = None, q: int | None = None, j: int | None = None, l: int | None = None) -> str:
    name = "T" if p is None else f"T^({p},{q})"
    return name if j is None else f"{name}[{j},{l}]"


def v_name(q: int | None = None, j: int | None = None) -> str:
    name = "V" if q is None else f"V^({q})"
    return name if j is None else f"{name}[{j}]"


def z_name(r: int | None = None, q: int | None = None) -> str:
    if q is not None:
        return f"Z^({q})"
    return "Z" if r is None else f"Z[{r}]"


@dataclass(frozen=True)
class Template:
    name: str
    family: str  # "T", "V" or "Z"
    basis: MonomialBasis
    offset: int
    arity: int  # number of state arguments (2 for T, 1 for V/Z)

    @property
    def size(self) -> int:
        return len(self.basis)

    def unknown_names(self) -> list[str]:
        return [f"{self.name}.c[{k}]" for k in range(self.size)]


class _Composer:
    """Caches basis monomials composed with substitutions."""

    def __init__(self):
        self._cache: dict = {}

    def composed(self, b: MonomialBasis, sub: Mapping[str, Polynomial]) -> list[Polynomial]:
        key = (b.variables, b.max_degree, tuple(sorted((v, p) for v, p in sub.items() if v in b.variables)))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        images = {v: sub.get(v, var(v)) for v in b.variables}
        done: dict = {(): const(1.0)}
        out = []
        for m in b.elements:
            if m not in done:
                v, e = m[0]
                parent = ((v, e - 1),) + m[1:] if e > 1 else m[1:]
                done[m] = done[parent] * images[v]
            out.append(done[m])
        self._cache[key] = out
        return out

    def instantiate(self, t: Template, args: Sequence[Mapping[str, Polynomial]]) -> LinPoly:
        """``t(arg_1, ..., arg_arity)`` where each arg maps ``x_i`` to a polynomial."""
        n = len(t.basis.variables) // t.arity
        sub: dict[str, Polynomial] = {}
        for a, arg in enumerate(args):
            prefix = "xyz"[a]
            for i in range(n):
                sub[f"{prefix}{i + 1}"] = arg[f"x{i + 1}"]
        polys = self.composed(t.basis, sub)
        return LinPoly({t.offset + k: p for k, p in enumerate(polys)})


def _state_arg(prefix: str, n: int) -> dict[str, Polynomial]:
    return {f"x{i + 1}": var(f"{prefix}{i + 1}") for i in range(n)}


# ---------------------------------------------------------------------------
# problem specification


@dataclass
class ProblemSpec:
    system: ControlSystem
    U_d: FiniteInputSet
    mode: str
    vf_partitions: tuple[SemiAlgebraicSet, ...] = ()
    x_inf: SemiAlgebraicSet | None = None
    # product with an automaton: ``product`` is an omega.ProductSystem
    product: object | None = None
    vf_states: tuple[int, ...] = ()
    inf_states: tuple[int, ...] = ()
    j_max: int = 0
    share_counters: bool = True
    deg_T: int = 3
    deg_V: int = 3
    constants: Constants = field(default_factory=Constants)
    input_form: str = "eq18"  # or "sum": every input weighted by mu
    prune_transient: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ProgramError(f"unknown mode {self.mode!r}")
        if self.j_max < 0:
            raise ProgramError("j_max must be >= 0")
        if self.deg_T < 1 or self.deg_V < 1:
            raise ProgramError("template degrees must be >= 1")
        if self.input_form not in ("eq18", "sum"):
            raise ProgramError("input_form must be 'eq18' or 'sum'")
        n = len(self.system.state_vars)
        if tuple(self.system.state_vars) != tuple(f"x{i + 1}" for i in range(n)):
            raise ProgramError("state variables must be named x1..xn")

    @property
    def n(self) -> int:
        return len(self.system.state_vars)

    @property
    def has_inf(self) -> bool:
        if self.product is not None:
            return bool(self.inf_states)
        return self.x_inf is not None

    @property
    def counters_shared(self) -> bool:
        return self.share_counters or not self.has_inf

    def automaton_states(self) -> list[int | None]:
        return list(self.product.dpa.states) if self.product is not None else [None]

    def z_targets(self) -> list[tuple[int | None, int | None, SemiAlgebraicSet]]:
        """``(partition r, automaton state q, domain)`` for each finite-visit ranking."""
        X = self.system.X
        if self.product is not None:
            dpa = self.product.dpa
            out = []
            for q in self.vf_states:
                if self.prune_transient and not dpa.on_cycle(q):
                    continue
                out.append((None, q, X))
            return out
        parts = self.vf_partitions
        if len(parts) == 1:
            return [(None, None, parts[0])]
        return [(r + 1, None, s) for r, s in enumerate(parts)]

    def v_states(self) -> list[int | None]:
        if not self.has_inf:
            return []
        if self.product is not None:
            return [q for q in self.product.dpa.states if q not in self.inf_states]
        return [None]

    def counter_range(self) -> list[int | None]:
        return [None] if self.counters_shared else list(range(self.j_max + 1))


@dataclass(frozen=True)
class ConditionInstance:
    kind: str
    label: str
    # variable blocks: tuple of (prefix, SemiAlgebraicSet over x1..xn)
    domain: tuple
    templates: dict
    inputs: tuple = ()
    xi: float = 0.0
    taus: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def variables(self) -> tuple[str, ...]:
        out = []
        for prefix, s in self.domain:
            out.extend(f"{prefix}{i + 1}" for i in range(s.dim))
        return tuple(out)

    def domain_sets(self) -> list[SemiAlgebraicSet]:
        return [s.with_prefix(prefix) for prefix, s in self.domain]


def _intersect(a: SemiAlgebraicSet, b: SemiAlgebraicSet) -> SemiAlgebraicSet:
    if a.is_box and b.is_box:
        bounds = [(max(l1, l2), min(h1, h2)) for (l1, h1), (l2, h2) in zip(a.bbox, b.bbox)]
        return SemiAlgebraicSet.box(a.variables, bounds, name=f"{a.name}&{b.name}")
    bb = a.bbox or b.bbox
    return SemiAlgebraicSet(a.variables, a.inequalities + b.inequalities, bb, False, f"{a.name}&{b.name}")


def _nonempty(s: SemiAlgebraicSet) -> bool:
    return s.bbox is None or all(lo <= hi for lo, hi in s.bbox)


def _flat(s: SemiAlgebraicSet) -> bool:
    return s.bbox is not None and any(lo == hi for lo, hi in s.bbox)


def _source_regions(spec: ProblemSpec) -> list[tuple[int | None, str | None, SemiAlgebraicSet, bool, int | None]]:
    """``(p, letter, region, in_inf, q_next)`` covering the product state space."""
    X = spec.system.X
    out = []
    if spec.product is not None:
        dpa = spec.product.dpa
        for p in dpa.states:
            for letter in dpa.alphabet:
                for region in spec.product.labeling.region_of(letter):
                    r = _intersect(X, region)
                    if _nonempty(r) and not _flat(r):
                        out.append((p, letter, r, p in spec.inf_states, dpa.delta[(p, letter)]))
        return out
    if spec.counters_shared or spec.x_inf is None:
        return [(None, None, X, False, None)]
    inside = _intersect(X, spec.x_inf)
    if _nonempty(inside) and not _flat(inside):
        out.append((None, None, inside, True, None))
    for r in set_difference_as_regions(X, spec.x_inf):
        out.append((None, None, r, False, None))
    return out


def _non_inf_regions(spec: ProblemSpec) -> list[tuple[int | None, SemiAlgebraicSet]]:
    X = spec.system.X
    if spec.product is not None:
        return [(q, X) for q in spec.v_states()]
    if spec.x_inf is None:
        return []
    return [(None, r) for r in set_difference_as_regions(X, spec.x_inf)]


def enumerate_conditions(spec: ProblemSpec) -> list[ConditionInstance]:
    c = spec.constants
    tau = c.tau
    X, X0 = spec.system.X, spec.system.X0
    inputs = tuple(spec.U_d.inputs)
    out: list[ConditionInstance] = []
    q0 = spec.product.dpa.initial if spec.product is not None else None

    if spec.mode == "recurrence":
        T = t_name()
        out.append(ConditionInstance("existence", "existence", (("x", X),), {"T": T}, inputs))
        for ui, u in enumerate(inputs):
            out.append(ConditionInstance(
                "transitivity", f"transitivity[u={ui}]", (("x", X), ("y", X)),
                {"T_jl": T, "T_kl": T, "T_jk": T}, (u,), taus=(tau, tau)))
        regions = _non_inf_regions(spec)
        for ri, (_, reg) in enumerate(regions):
            for ui, u in enumerate(inputs):
                out.append(ConditionInstance(
                    "recurrence", f"recurrence[region={ri},u={ui}]", (("x", X0), ("y", reg)),
                    {"T": T}, (u,), xi=c.xi_for(1), taus=(tau, tau)))
        out.append(ConditionInstance("bound", "bound", (("x", X), ("y", X)), {"T": T}, meta={"M": c.M}))
        return out

    shared = spec.counters_shared
    counters = spec.counter_range()
    jmax = spec.j_max

    def tn(p, q, j, l):
        if shared:
            return t_name(p, q)
        return t_name(p, q, j, l)

    sources = _source_regions(spec)
    # (i) existence, (ii) transitivity
    for (p, letter, region, in_inf, qn) in sources:
        for j in counters:
            k = None if shared else (j + 1 if in_inf else j)
            tag = _tag(p=p, letter=letter, j=j, region=region.name if p is None and not shared else None)
            out.append(ConditionInstance(
                "existence", f"existence[{tag}]", (("x", region),),
                {"T": tn(p, qn, j, k)}, inputs, meta={"p": p, "q": qn, "j": j, "k": k}))
            targets = spec.automaton_states()
            ells = [None] if shared else list(range(k, jmax + 2))
            for r in targets:
                for l in ells:
                    for ui, u in enumerate(inputs):
                        tag2 = _tag(p=p, letter=letter, r=r, j=j, k=k, l=l, u=ui,
                                    region=region.name if p is None and not shared else None)
                        out.append(ConditionInstance(
                            "transitivity", f"transitivity[{tag2}]", (("x", region), ("y", X)),
                            {"T_jl": tn(p, r, j, l), "T_kl": tn(qn, r, k, l), "T_jk": tn(p, qn, j, k)},
                            (u,), taus=(tau, tau), meta={"p": p, "q": qn, "r": r, "j": j, "k": k, "l": l}))
    # (iii) containment of the saturated counter
    if not shared:
        for r in spec.automaton_states():
            out.append(ConditionInstance(
                "containment", f"containment[{_tag(r=r)}]", (("x", X0), ("y", X)),
                {"T_lo": tn(q0, r, 0, jmax), "T_hi": tn(q0, r, 0, jmax + 1)}, taus=(tau,)))
    # (iv) finite-visit rankings
    for (r, q, dom) in spec.z_targets():
        Z = z_name(r, q)
        xi = c.xi_for(r or 1)
        out.append(ConditionInstance("lower", f"lower[{Z}]", (("x", X),), {"R": Z}))
        pairs = [(None, None)] if shared else [(l1, l2) for l1 in range(jmax + 2) for l2 in range(l1, jmax + 2)]
        for l1, l2 in pairs:
            out.append(ConditionInstance(
                "rank_fin", f"rank[{Z}{_tag(l1=l1, l2=l2, brackets=True)}]",
                (("x", X0), ("y", dom), ("z", dom)),
                {"R": Z, "T_init": tn(q0, q, 0, l1), "T_step": tn(q, q, l1, l2)},
                xi=xi, taus=(tau, tau)))
    # (v) infinite-visit rankings
    if spec.has_inf:
        regions = _non_inf_regions(spec)
        for j in counters:
            for q in spec.v_states():
                V = v_name(q, j)
                out.append(ConditionInstance("lower", f"lower[{V}]", (("x", X),), {"R": V}))
                doms = [reg for (qq, reg) in regions if qq == q]
                for a, da in enumerate(doms):
                    for b, db in enumerate(doms):
                        tag = f"{V}" + (f",regions={a}/{b}" if len(doms) > 1 else "")
                        jj = None if shared else j
                        out.append(ConditionInstance(
                            "rank_inf", f"rank[{tag}]", (("x", X0), ("y", da), ("z", db)),
                            {"R": V, "T_init": tn(q0, q, 0, jj), "T_step": tn(q, q, jj, jj)},
                            xi=c.xi_for(1), taus=(tau, tau)))
    return out


def _tag(brackets: bool = False, **kw) -> str:
    parts = [f"{k}={v}" for k, v in kw.items() if v is not None]
    s = ",".join(parts)
    return f"({s})" if brackets and s else s


def template_layout(spec: ProblemSpec) -> list[tuple[str, str, int]]:
    """``(name, family, arity)`` of every template, in registry order."""
    out = []
    if spec.mode == "recurrence":
        return [(t_name(), "T", 2)]
    states = spec.automaton_states()
    for p in states:
        for q in states:
            if spec.counters_shared:
                out.append((t_name(p, q), "T", 2))
            else:
                for j in range(spec.j_max + 2):
                    for l in range(j, spec.j_max + 2):
                        out.append((t_name(p, q, j, l), "T", 2))
    for (r, q, _) in spec.z_targets():
        out.append((z_name(r, q), "Z", 1))
    for j in spec.counter_range():
        for q in spec.v_states():
            out.append((v_name(q, j), "V", 1))
    return out


# ---------------------------------------------------------------------------
# obligations


@dataclass
class SosObligation:
    name: str
    kind: str
    expr: LinPoly
    variables: tuple[str, ...]
    domain: tuple[Polynomial, ...]
    domain_names: tuple[str, ...] = ()
    pointwise: bool = False  # expr has no variables; require expr >= 0
    # pointwise rows may instead carry ``(coefficients over unknowns, constant)``
    dense: tuple | None = None

    def multiplier_degrees(self) -> list[int]:
        top = self.expr.degree + (self.expr.degree % 2)
        return [max(0, top - g.degree) for g in self.domain]


@dataclass
class ConstraintProgram:
    spec: ProblemSpec | None
    templates: list[Template]
    obligations: list[SosObligation]
    constants: Constants
    n_unknowns: int
    instances: list[ConditionInstance] = field(default_factory=list)
    expected_infeasible: bool = False

    def template(self, name: str) -> Template:
        for t in self.templates:
            if t.name == name:
                return t
        raise KeyError(name)

    def unknown_names(self) -> list[str]:
        out = []
        for t in self.templates:
            out.extend(t.unknown_names())
        return out

    def to_json(self) -> dict:
        return {
            "constants": self.constants.as_dict(),
            "n_unknowns": self.n_unknowns,
            "expected_infeasible": self.expected_infeasible,
            "templates": [
                {"name": t.name, "family": t.family, "offset": t.offset, "size": t.size,
                 "variables": list(t.basis.variables), "degree": t.basis.max_degree}
                for t in self.templates
            ],
            "obligations": [
                {
                    "name": o.name,
                    "kind": o.kind,
                    "variables": list(o.variables),
                    "domain": [g.to_string() for g in o.domain],
                    "multiplier_degrees": o.multiplier_degrees(),
                    "pointwise": o.pointwise,
                    **({"row": [float(v) for v in o.dense[0]], "row_constant": float(o.dense[1])}
                       if o.dense is not None else {}),
                    "expression": {
                        ("const" if k is None else str(k)): p.to_string() for k, p in o.expr.parts.items()
                    },
                }
                for o in self.obligations
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def box_sos_inequalities(s: SemiAlgebraicSet) -> tuple[Polynomial, ...]:
    """S-procedure inequalities: ``(x-lo)(hi-x)`` per box side pair."""
    if not s.is_box:
        return s.inequalities
    out = []
    for v, (lo, hi) in zip(s.variables, s.bbox):
        if lo == hi:
            continue
        out.append((var(v) - lo) * (const(hi) - var(v)))
    return tuple(out)


def build_templates(spec: ProblemSpec) -> list[Template]:
    n = spec.n
    bT = basis([f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)], spec.deg_T)
    bV = basis([f"x{i + 1}" for i in range(n)], spec.deg_V)
    out, offset = [], 0
    for name, family, arity in template_layout(spec):
        b = bT if family == "T" else bV
        out.append(Template(name, family, b, offset, arity))
        offset += len(b)
    return out


def _instance_expr(inst: ConditionInstance, spec: ProblemSpec, temps: dict, comp: _Composer) -> LinPoly:
    n = spec.n
    sys = spec.system
    X_ = _state_arg("x", n)
    Y_ = _state_arg("y", n)
    Z_ = _state_arg("z", n)
    c = spec.constants
    if inst.kind == "existence":
        T = temps[inst.templates["T"]]
        m = len(inst.inputs)
        acc = LinPoly()
        for t, u in enumerate(inst.inputs):
            fx = sys.successor_polys(u, [f"x{i + 1}" for i in range(n)])
            w = 1.0 if (spec.input_form == "eq18" and t == m - 1) else c.mu
            acc = acc + comp.instantiate(T, [X_, fx]).scale(w)
        return acc
    if inst.kind == "transitivity":
        (u,) = inst.inputs
        fx = sys.successor_polys(u, [f"x{i + 1}" for i in range(n)])
        t1, t2 = inst.taus
        return (comp.instantiate(temps[inst.templates["T_jl"]], [X_, Y_])
                - comp.instantiate(temps[inst.templates["T_kl"]], [fx, Y_]).scale(t1)
                - comp.instantiate(temps[inst.templates["T_jk"]], [X_, fx]).scale(t2))
    if inst.kind == "containment":
        (t3,) = inst.taus
        return (comp.instantiate(temps[inst.templates["T_lo"]], [X_, Y_])
                - comp.instantiate(temps[inst.templates["T_hi"]], [X_, Y_]).scale(t3))
    if inst.kind == "lower":
        return comp.instantiate(temps[inst.templates["R"]], [X_])
    if inst.kind in ("rank_fin", "rank_inf"):
        R = temps[inst.templates["R"]]
        t4, t5 = inst.taus
        return (comp.instantiate(R, [Y_]) - comp.instantiate(R, [Z_])
                - comp.instantiate(temps[inst.templates["T_init"]], [X_, Y_]).scale(t4)
                - comp.instantiate(temps[inst.templates["T_step"]], [Y_, Z_]).scale(t5)
                - LinPoly.constant(inst.xi))
    if inst.kind == "recurrence":
        (u,) = inst.inputs
        fy = sys.successor_polys(u, [f"y{i + 1}" for i in range(n)])
        fy = {f"x{i + 1}": fy[f"y{i + 1}"] for i in range(n)}
        T = temps[inst.templates["T"]]
        t1, t2 = inst.taus
        # T(x0, f(y,u)) - T(x0, y) - xi - tau T(x0, y) - tau T(y, f(y,u))
        return (comp.instantiate(T, [X_, fy])
                - comp.instantiate(T, [X_, Y_]).scale(1.0 + t1)
                - comp.instantiate(T, [Y_, fy]).scale(t2)
                - LinPoly.constant(inst.xi))
    raise ProgramError(f"no SOS form for condition kind {inst.kind!r}")


def generate(spec: ProblemSpec) -> ConstraintProgram:
    templates = build_templates(spec)
    temps = {t.name: t for t in templates}
    n_unknowns = sum(t.size for t in templates)
    comp = _Composer()
    instances = enumerate_conditions(spec)
    obligations = []
    for inst in instances:
        sets = inst.domain_sets()
        dom = tuple(g for s in sets for g in box_sos_inequalities(s))
        if inst.kind == "bound":
            n = spec.n
            T = comp.instantiate(temps[inst.templates["T"]], [_state_arg("x", n), _state_arg("y", n)])
            M = inst.meta["M"]
            for sign, tag in ((1.0, "lo"), (-1.0, "hi")):
                obligations.append(SosObligation(
                    f"{inst.label}[{tag}]", "bound", T.scale(sign) + LinPoly.constant(M), inst.variables, dom,
                    tuple(s.name for s in sets)))
            continue
        expr = _instance_expr(inst, spec, temps, comp)
        obligations.append(SosObligation(inst.label, inst.kind, expr, inst.variables, dom,
                                         tuple(s.name for s in sets)))
    used = set()
    for o in obligations:
        used |= o.expr.unknowns()
    if len(used) != n_unknowns:
        missing = [t.name for t in templates if not set(range(t.offset, t.offset + t.size)) & used]
        if missing:
            raise ProgramError(f"templates never constrained: {missing}")
    return ConstraintProgram(spec, templates, obligations, spec.constants, n_unknowns, instances)


# ---------------------------------------------------------------------------
# entry points mirroring the individual certificate definitions


def gen_finite_visits(sys: ControlSystem, U_d: FiniteInputSet, partitions: Sequence[SemiAlgebraicSet],
                      deg_T: int = 3, deg_V: int = 3, constants: Constants | None = None,
                      **kw) -> ConstraintProgram:
    if not partitions:
        raise ProgramError("finite-visit program needs at least one partition")
    spec = ProblemSpec(sys, U_d, "finite", vf_partitions=tuple(partitions), deg_T=deg_T, deg_V=deg_V,
                       constants=constants or Constants(), **kw)
    return generate(spec)


def gen_verification_only(sys: ControlSystem, partitions: Sequence[SemiAlgebraicSet], u: Sequence[float],
                          deg_T: int = 3, deg_V: int = 3, constants: Constants | None = None) -> ConstraintProgram:
    U_d = FiniteInputSet((tuple(u),))
    spec = ProblemSpec(sys, U_d, "verify-only", vf_partitions=tuple(partitions), deg_T=deg_T, deg_V=deg_V,
                       constants=constants or Constants())
    return generate(spec)


def gen_recurrence(sys: ControlSystem, U_d: FiniteInputSet, X_INF: SemiAlgebraicSet, deg_T: int = 3,
                   constants: Constants | None = None) -> ConstraintProgram:
    spec = ProblemSpec(sys, U_d, "recurrence", x_inf=X_INF, deg_T=deg_T, deg_V=deg_T,
                       constants=constants or Constants())
    return generate(spec)


def gen_counter(sys: ControlSystem, U_d: FiniteInputSet, X_INF: SemiAlgebraicSet, j_max: int,
                deg_T: int = 3, deg_V: int = 3, constants: Constants | None = None,
                share_counters: bool = False) -> ConstraintProgram:
    if j_max < 0:
        raise ProgramError("j_max must be >= 0")
    spec = ProblemSpec(sys, U_d, "counter", x_inf=X_INF, j_max=j_max, share_counters=share_counters,
                       deg_T=deg_T, deg_V=deg_V, constants=constants or Constants())
    return generate(spec)


def gen_fin_inf(sys: ControlSystem, U_d: FiniteInputSet, partitions: Sequence[SemiAlgebraicSet],
                X_INF: SemiAlgebraicSet | None, j_max: int = 0, deg_T: int = 3, deg_V: int = 3,
                constants: Constants | None = None, share_counters: bool = True, **kw) -> ConstraintProgram:
    spec = ProblemSpec(sys, U_d, "fin_inf", vf_partitions=tuple(partitions), x_inf=X_INF, j_max=j_max,
                       share_counters=share_counters, deg_T=deg_T, deg_V=deg_V,
                       constants=constants or Constants(), **kw)
    if spec.x_inf is not None and spec.vf_partitions:
        _check_disjoint(spec)
    return generate(spec)


def _check_disjoint(spec: ProblemSpec, n: int = 2000) -> None:
    for part in spec.vf_partitions:
        if part.bbox is None:
            continue
        pts = part.sample(n, seed=11)
        inside = spec.x_inf.contains_many(pts, tol=-1e-9)
        if inside.any():
            raise ProgramError(f"finite-visit set {part.name!r} overlaps the infinite-visit set")


def gen_recurrence_on_trace(trace: Sequence[Sequence[float]], in_inf: Sequence[bool], deg_T: int = 3,
                            constants: Constants | None = None, scale: float | None = None) -> ConstraintProgram:
    """Recurrence conditions restricted to the states of one finite trace.

    For piecewise systems that have no polynomial update, every quantifier of
    the recurrence definition is instantiated only at trace points (with the
    recorded successor as the single input's image).  This keeps a subset of
    the constraints, so infeasibility here implies infeasibility of the full
    program.  States are divided by ``scale`` (default: the largest
    coordinate) to keep monomial values in [0, 1].
    """
    c = constants or Constants()
    pts = np.asarray(trace, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ProgramError("trace must hold at least two states")
    if len(in_inf) != len(pts):
        raise ProgramError("need one X_INF flag per trace state")
    n = pts.shape[1]
    s = float(scale or np.max(np.abs(pts)) or 1.0)
    pts = pts / s
    b = basis([f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)], deg_T)
    tmpl = Template(t_name(), "T", b, 0, 2)
    exps = np.array([[dict(m).get(v, 0) for v in b.variables] for m in b.elements], dtype=float)

    def row(i: int, j: int) -> np.ndarray:
        z = np.concatenate([pts[i], pts[j]])
        return np.prod(np.power(z[None, :], exps), axis=1)

    tau, xi, M = c.tau, c.xi_for(1), c.M
    L = len(pts) - 1  # the last state has no recorded successor
    obligations = []

    def add(name, kind, vec, const0):
        # positive row scaling leaves the feasible set unchanged and helps conditioning
        w = max(float(np.max(np.abs(vec))), abs(const0), 1e-300)
        vec, const0 = vec / w, const0 / w
        obligations.append(SosObligation(name, kind, LinPoly(), (), (), pointwise=True, dense=(vec, const0)))

    for i in range(L):
        add(f"existence[{i}]", "existence", row(i, i + 1), 0.0)
    for i in range(L):
        for j in range(len(pts)):
            # T(x_i, y) - tau T(x_{i+1}, y) - tau T(x_i, x_{i+1})
            add(f"transitivity[{i},{j}]", "transitivity", row(i, j) - tau * row(i + 1, j) - tau * row(i, i + 1), 0.0)
    for i in range(L):
        if in_inf[i]:
            continue
        # T(x0, x_{i+1}) - (1 + tau) T(x0, x_i) - tau T(x_i, x_{i+1}) - xi
        add(f"recurrence[{i}]", "recurrence", row(0, i + 1) - (1 + tau) * row(0, i) - tau * row(i, i + 1), -xi)
    for i in range(len(pts)):
        for j in range(len(pts)):
            add(f"bound[{i},{j}][lo]", "bound", row(i, j), M)
            add(f"bound[{i},{j}][hi]", "bound", -row(i, j), M)
    cp = ConstraintProgram(None, [tmpl], obligations, c, len(b), expected_infeasible=True)
    return cp
