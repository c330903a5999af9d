"""Sparse multivariate polynomials over named real variables.

Monomials are stored as sorted tuples of ``(variable, exponent)`` pairs and
polynomials as immutable maps from monomial to coefficient.  Variable names
follow a prefix-plus-index convention (``x1``, ``y2``, ``u1`` ...) and are
ordered by prefix rank, then index, so that serialized output is canonical.

The canonical monomial order is graded lexicographic: lower total degree first,
and within a degree the monomial with the larger exponent on the earliest
variable comes first.  For the variables ``x1, x2, y1, y2`` this reproduces the
ordering ``1, x1, x2, y1, y2, x1^2, x1 x2, x1 y1, ...``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Monomial",
    "Polynomial",
    "MonomialBasis",
    "PolynomialError",
    "var_key",
    "sort_vars",
    "monomial",
    "basis",
    "from_basis",
    "parse",
    "const",
    "var",
]

_PREFIX_RANK = {"x": 0, "y": 1, "z": 2, "w": 3, "u": 4}
_VAR_RE = re.compile(r"^([A-Za-z_]+?)(\d*)$")


class PolynomialError(ValueError):
    pass


@lru_cache(maxsize=None)
def var_key(name: str) -> tuple:
    m = _VAR_RE.match(name)
    if m is None:
        return (9, name, 0)
    prefix, idx = m.group(1), m.group(2)
    return (_PREFIX_RANK.get(prefix, 5), prefix, int(idx) if idx else 0)


def sort_vars(names: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(set(names), key=var_key))


# A monomial is a tuple of (var, exp) pairs sorted by var_key, exps > 0.
Monomial = tuple


def monomial(exps: Mapping[str, int]) -> Monomial:
    """Build a canonical monomial from a ``{var: exponent}`` map."""
    items = []
    for v, e in exps.items():
        e = int(e)
        if e < 0:
            raise PolynomialError(f"negative exponent for {v}")
        if e:
            items.append((v, e))
    return tuple(sorted(items, key=lambda t: var_key(t[0])))


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_key(m: Monomial) -> tuple:
    return (mono_degree(m), tuple((var_key(v), -e) for v, e in m))


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for v, e in b:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items(), key=lambda t: var_key(t[0])))


def mono_str(m: Monomial) -> str:
    return " ".join(v if e == 1 else f"{v}^{e}" for v, e in m)


class Polynomial:
    """Immutable sparse polynomial with float coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        clean: dict[Monomial, float] = {}
        if terms:
            for m, c in terms.items():
                c = float(c)
                if c != 0.0:
                    if not math.isfinite(c):
                        raise PolynomialError(f"non-finite coefficient {c!r}")
                    clean[m] = c
        self._terms = clean
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def _raw(cls, terms: dict) -> "Polynomial":
        p = cls.__new__(cls)
        p._terms = {m: c for m, c in terms.items() if c != 0.0}
        p._hash = None
        return p

    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    @property
    def variables(self) -> tuple[str, ...]:
        return sort_vars(v for m in self._terms for v, _ in m)

    @property
    def degree(self) -> int:
        return max((mono_degree(m) for m in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def coeff(self, m: Monomial) -> float:
        return self._terms.get(m, 0.0)

    def constant_term(self) -> float:
        return self._terms.get((), 0.0)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other) -> "Polynomial":
        other = _lift(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_lift(other))

    def __rsub__(self, other) -> "Polynomial":
        return _lift(other) - self

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            if other == 0:
                return Polynomial()
            return Polynomial._raw({m: c * other for m, c in self._terms.items()})
        other = _lift(other)
        out: dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = mono_mul(m1, m2)
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial._raw(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise PolynomialError("negative power")
        result = Polynomial({(): 1.0})
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = _lift(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # evaluation -----------------------------------------------------------
    def eval(self, point: Mapping[str, float]) -> float:
        total = 0.0
        for m, c in self._terms.items():
            t = c
            for v, e in m:
                try:
                    t *= point[v] ** e
                except KeyError:
                    raise PolynomialError(f"unbound variable {v!r}") from None
            total += t
        return total

    __call__ = eval

    def eval_many(self, points: Mapping[str, "object"]):
        """Vectorized evaluation; ``points`` maps variables to equal-length arrays."""
        import numpy as np

        arrs = {v: np.asarray(a, dtype=float) for v, a in points.items()}
        shape = np.broadcast_shapes(*[a.shape for a in arrs.values()]) if arrs else ()
        total = np.zeros(shape)
        for m, c in self._terms.items():
            t = np.full(shape, c)
            for v, e in m:
                try:
                    t = t * arrs[v] ** e
                except KeyError:
                    raise PolynomialError(f"unbound variable {v!r}") from None
            total = total + t
        return total

    def compose(self, substitution: Mapping[str, "Polynomial | float"]) -> "Polynomial":
        """Substitute polynomials for variables; unlisted variables pass through."""
        sub = {v: _lift(p) for v, p in substitution.items()}
        powers: dict[tuple[str, int], Polynomial] = {}

        def power(v: str, e: int) -> Polynomial:
            key = (v, e)
            if key not in powers:
                powers[key] = sub[v] ** e if e > 1 else sub[v]
            return powers[key]

        acc: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            kept = tuple((v, e) for v, e in m if v not in sub)
            term = Polynomial._raw({kept: c})
            for v, e in m:
                if v in sub:
                    term = term * power(v, e)
            for mm, cc in term._terms.items():
                acc[mm] = acc.get(mm, 0.0) + cc
        return Polynomial._raw(acc)

    def rename(self, mapping: Mapping[str, str]) -> "Polynomial":
        out: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            d: dict[str, int] = {}
            for v, e in m:
                nv = mapping.get(v, v)
                d[nv] = d.get(nv, 0) + e
            mm = monomial(d)
            out[mm] = out.get(mm, 0.0) + c
        return Polynomial._raw(out)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # text form ------------------------------------------------------------
    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self._terms.items(), key=lambda t: mono_key(t[0]))

    def to_string(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            parts.append(repr(c) if not m else f"{c!r} * {mono_str(m)}")
        return " + ".join(parts)

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()!r})"


def _lift(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    if isinstance(p, (int, float)):
        return Polynomial({(): float(p)})
    raise TypeError(f"cannot convert {type(p).__name__} to Polynomial")


def const(c: float) -> Polynomial:
    return Polynomial({(): c})


def var(name: str) -> Polynomial:
    return Polynomial({((name, 1),): 1.0})


@dataclass(frozen=True)
class MonomialBasis:
    variables: tuple[str, ...]
    max_degree: int
    elements: tuple[Monomial, ...]

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def index(self, m: Monomial) -> int:
        return self.elements.index(m)

    def labels(self) -> list[str]:
        return [mono_str(m) or "1" for m in self.elements]


def basis(variables: Sequence[str], degree: int) -> MonomialBasis:
    """All monomials of total degree <= ``degree`` in graded-lex order."""
    if degree < 0:
        raise PolynomialError("degree must be >= 0")
    vs = sort_vars(variables)
    if len(vs) != len(variables):
        raise PolynomialError("duplicate variables")
    elems: list[Monomial] = []
    for d in range(degree + 1):
        block = []
        for combo in combinations_with_replacement(vs, d):
            counts: dict[str, int] = {}
            for v in combo:
                counts[v] = counts.get(v, 0) + 1
            block.append(monomial(counts))
        block.sort(key=mono_key)
        elems.extend(block)
    return MonomialBasis(vs, degree, tuple(elems))


def from_basis(b: MonomialBasis, coeffs: Sequence[float]) -> Polynomial:
    if len(coeffs) != len(b):
        raise PolynomialError(f"expected {len(b)} coefficients, got {len(coeffs)}")
    return Polynomial({m: c for m, c in zip(b.elements, coeffs)})


def coefficients(p: Polynomial, b: MonomialBasis) -> list[float]:
    """Coefficient vector of ``p`` over ``b``; raises if ``p`` has terms outside it."""
    idx = {m: i for i, m in enumerate(b.elements)}
    out = [0.0] * len(b)
    for m, c in p.items():
        if m not in idx:
            raise PolynomialError(f"monomial {mono_str(m)!r} not in basis")
        out[idx[m]] = c
    return out


# parsing ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf|nan)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*^()/]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise PolynomialError(f"cannot parse polynomial near {text[pos:pos + 12]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def expr(self) -> Polynomial:
        sign = 1.0
        kind, val = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
        acc = self.term() * sign
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                nxt = self.term()
                acc = acc + nxt if val == "+" else acc - nxt
            else:
                return acc

    def term(self) -> Polynomial:
        acc = self.power()
        while True:
            kind, val = self.peek()
            if kind == "op" and val == "*":
                self.take()
                acc = acc * self.power()
            elif kind == "op" and val == "/":
                self.take()
                den = self.power()
                if den.variables or den.is_zero():
                    raise PolynomialError("division only by nonzero constants")
                acc = acc * (1.0 / den.constant_term())
            elif kind in ("num", "name") or (kind == "op" and val == "("):
                acc = acc * self.power()  # implicit multiplication
            else:
                return acc

    def power(self) -> Polynomial:
        base = self.atom()
        kind, val = self.peek()
        if kind == "op" and val in ("^", "**"):
            self.take()
            k2, v2 = self.take()
            if k2 != "num":
                raise PolynomialError("exponent must be a non-negative integer")
            e = float(v2)
            if e != int(e) or e < 0:
                raise PolynomialError("exponent must be a non-negative integer")
            base = base ** int(e)
        return base

    def atom(self) -> Polynomial:
        kind, val = self.take()
        if kind == "num":
            return const(float(val))
        if kind == "name":
            return var(val)
        if kind == "op" and val == "(":
            inner = self.expr()
            k2, v2 = self.take()
            if v2 != ")":
                raise PolynomialError("unbalanced parenthesis")
            return inner
        if kind == "op" and val == "-":
            return -self.power()
        raise PolynomialError(f"unexpected token {val!r}")


def parse(text: str) -> Polynomial:
    """Parse the canonical ``coeff * x1^a x2^b + ...`` form or ordinary algebra."""
    p = _Parser(text)
    if not p.toks:
        raise PolynomialError("empty polynomial")
    out = p.expr()
    if p.i != len(p.toks):
        raise PolynomialError(f"trailing input {p.toks[p.i][1]!r}")
    return out
