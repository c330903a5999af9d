"""Discrete-time control systems, finite input sets, labelings and counters."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polyalg import Polynomial, const, parse, var
from .semialg import SemiAlgebraicSet

__all__ = [
    "ControlSystem",
    "FiniteInputSet",
    "LabelingMap",
    "CounterSystem",
    "UnlabeledStateError",
    "step",
    "discretize_inputs",
    "label",
    "hopf_dynamics",
    "make_hopf",
    "make_chain_system",
    "chain_trace",
]

log = logging.getLogger(__name__)


class UnlabeledStateError(ValueError):
    pass


@dataclass(frozen=True)
class ControlSystem:
    name: str
    state_vars: tuple[str, ...]
    input_vars: tuple[str, ...]
    X: SemiAlgebraicSet
    X0: SemiAlgebraicSet
    U: SemiAlgebraicSet
    f: tuple[Polynomial, ...]
    # Piecewise systems that cannot be written as one polynomial map supply a
    # Python step instead; they are usable for simulation only.
    step_fn: Callable | None = None

    def __post_init__(self):
        if self.step_fn is None and len(self.f) != len(self.state_vars):
            raise ValueError("need one update polynomial per state variable")

    @property
    def polynomial(self) -> bool:
        return self.step_fn is None

    def check_initial_inside(self, n: int = 1000, seed: int = 0) -> bool:
        pts = self.X0.sample(n, seed)
        return bool(np.all(self.X.contains_many(pts)))

    def successor_polys(self, u: Sequence[float], target: Sequence[str] | None = None) -> dict[str, Polynomial]:
        """Substitution ``{target_i: f_i(x, u)}`` with the input frozen."""
        if not self.polynomial:
            raise TypeError(f"system {self.name!r} is simulation-only")
        target = target or self.state_vars
        usub = {v: float(val) for v, val in zip(self.input_vars, u)}
        return {t: fi.compose(usub) for t, fi in zip(target, self.f)}


def step(sys: ControlSystem, x: Sequence[float], u: Sequence[float] | float) -> tuple[float, ...]:
    if isinstance(u, (int, float)):
        u = (float(u),)
    if sys.step_fn is not None:
        return tuple(sys.step_fn(tuple(x), tuple(u)))
    env = dict(zip(sys.state_vars, x))
    env.update(zip(sys.input_vars, u))
    if sys.X.bbox is not None and not sys.X.contains(dict(zip(sys.state_vars, x)), tol=1e-12):
        log.debug("step from %s outside X of %s", x, sys.name)
    return tuple(fi.eval(env) for fi in sys.f)


def step_many(sys: ControlSystem, xs: np.ndarray, u: Sequence[float]) -> np.ndarray:
    """Vectorized successor for an ``(N, n)`` array of states under one input."""
    env = {v: xs[:, i] for i, v in enumerate(sys.state_vars)}
    env.update({v: np.full(xs.shape[0], float(val)) for v, val in zip(sys.input_vars, u)})
    return np.stack([fi.eval_many(env) for fi in sys.f], axis=1)


@dataclass(frozen=True)
class FiniteInputSet:
    inputs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("finite input set must be nonempty")

    def __len__(self) -> int:
        return len(self.inputs)

    def __iter__(self):
        return iter(self.inputs)

    def values(self) -> list[list[float]]:
        return [list(u) for u in self.inputs]


def discretize_inputs(U: SemiAlgebraicSet, grid: int) -> FiniteInputSet:
    """Uniform lattice over a box input set, endpoints included, last axis fastest."""
    if not U.is_box:
        raise ValueError("input discretization needs a box input set")
    if grid < 1:
        raise ValueError("grid must be >= 1")
    axes = []
    for lo, hi in U.bbox:
        if grid == 1 or lo == hi:
            axes.append([lo] if lo == hi else [(lo + hi) / 2])
        else:
            axes.append([lo + (hi - lo) * k / (grid - 1) for k in range(grid)])
            axes[-1][-1] = hi
    combos: list[tuple[float, ...]] = [()]
    for ax in axes:
        combos = [c + (float(a),) for c in combos for a in ax]
    return FiniteInputSet(tuple(combos))


@dataclass(frozen=True)
class LabelingMap:
    regions: tuple[tuple[SemiAlgebraicSet, str], ...]
    alphabet: tuple[str, ...]

    def __post_init__(self):
        for _, letter in self.regions:
            if letter not in self.alphabet:
                raise ValueError(f"letter {letter!r} not in alphabet")

    def region_of(self, letter: str) -> list[SemiAlgebraicSet]:
        return [s for s, a in self.regions if a == letter]


def label(lmap: LabelingMap, x: Sequence[float], tol: float = 1e-12) -> str:
    for region, letter in lmap.regions:
        if region.contains(tuple(x), tol=tol):
            return letter
    raise UnlabeledStateError(f"unlabeled state {tuple(x)}")


def label_or_none(lmap: LabelingMap, x: Sequence[float]) -> str | None:
    try:
        return label(lmap, x)
    except UnlabeledStateError:
        return None


@dataclass(frozen=True)
class CounterSystem:
    """Counter-augmented system: the counter counts visits to ``X_INF``."""

    base: ControlSystem
    X_INF: SemiAlgebraicSet
    j_max: int | None = None  # None: unbounded counter

    def step(self, state: tuple[tuple[float, ...], int], u) -> tuple[tuple[float, ...], int]:
        x, j = state
        k = j + 1 if self.X_INF.contains(tuple(x), tol=1e-12) else j
        if self.j_max is not None:
            k = min(k, self.j_max + 1)
        return step(self.base, x, u), k


# built-in systems --------------------------------------------------------

HOPF_T = 0.1


HOPF_FORMS = ("normal", "printed")


def hopf_dynamics(sampling: float = HOPF_T, form: str = "normal") -> tuple[Polynomial, Polynomial]:
    """Euler-discretized Hopf normal form.

    ``normal`` uses ``+u*x2`` in the second component (the textbook normal
    form, and the only reading under which the published certificate tables
    satisfy their existence condition).  ``printed`` keeps ``-u*x2``.
    """
    if form not in HOPF_FORMS:
        raise KeyError(f"unknown hopf form {form!r}; expected one of {HOPF_FORMS}")
    x1, x2, u = var("x1"), var("x2"), var("u1")
    r2 = x1 * x1 + x2 * x2
    s2 = 1.0 if form == "normal" else -1.0
    f1 = x1 + sampling * (u * x1 - x2 - x1 * r2)
    f2 = x2 + sampling * (x1 + s2 * u * x2 - x2 * r2)
    return f1, f2


def make_hopf(variant: str = "hopf", form: str = "normal") -> tuple[ControlSystem, dict]:
    """The Hopf-bifurcation benchmark and its named target sets.

    ``hopf`` is the plain case study; ``hopf_dpa`` restricts the state space to
    the upper half plane and attaches the a/b labeling.
    """
    sv = ("x1", "x2")
    U = SemiAlgebraicSet.box(("u1",), [(-3.0, 0.5)], name="U")
    f = hopf_dynamics(form=form)
    if variant == "hopf":
        X = SemiAlgebraicSet.box(sv, [(-0.75, 1.0), (-0.75, 0.75)], name="X")
        X0 = SemiAlgebraicSet.box(sv, [(0.8, 1.0), (-0.2, 0.2)], name="X0")
        sets = {
            "X_VF": SemiAlgebraicSet.box(sv, [(0.8, 1.0), (0.0, 0.75)], name="X_VF"),
            "X_INF": SemiAlgebraicSet.box(sv, [(-0.75, 0.75), (-0.75, 0.75)], name="X_INF"),
        }
    elif variant == "hopf_dpa":
        X = SemiAlgebraicSet.box(sv, [(-0.75, 1.0), (0.0, 0.75)], name="X")
        X0 = SemiAlgebraicSet.box(sv, [(0.8, 1.0), (0.0, 0.2)], name="X0")
        a_set = SemiAlgebraicSet.box(sv, [(-0.75, 0.75), (0.0, 0.75)], name="L_a")
        b_set = SemiAlgebraicSet.box(sv, [(0.75, 1.0), (0.0, 0.75)], name="L_b")
        sets = {
            "X_INF": a_set,
            "X_VF": b_set,
            "labeling": LabelingMap(((a_set, "a"), (b_set, "b")), ("a", "b")),
        }
    else:
        raise KeyError(f"unknown hopf variant {variant!r}")
    return ControlSystem(variant, sv, ("u1",), X, X0, U, f), sets


def make_chain_system(growth: int = 1) -> ControlSystem:
    """Deterministic chain whose visits to ``X_INF`` drift further apart.

    State ``(count, init_val)`` emulates the nested-loop program that prints
    ``a`` ``count`` times, then ``b``, then restarts with a larger
    ``init_val``.  States with ``count == 0`` are the ``b`` (accepting) states.
    The transition is piecewise, so the system is simulation-only.
    """
    if growth < 1:
        raise ValueError("growth must be >= 1")

    def chain_step(x, u):
        count, init = x
        if count >= 1:
            return (count - 1.0, init)
        return (init + growth, init + growth)

    sv = ("x1", "x2")
    big = 1e9
    X = SemiAlgebraicSet.box(sv, [(0.0, big), (1.0, big)], name="X")
    X0 = SemiAlgebraicSet.box(sv, [(1.0, 1.0), (1.0, 1.0)], name="X0")
    U = SemiAlgebraicSet.box(("u1",), [(0.0, 0.0)], name="U")
    return ControlSystem(f"chain{growth}", sv, ("u1",), X, X0, U, (), step_fn=chain_step)


def chain_inf_set() -> SemiAlgebraicSet:
    # count == 0 encoded as 0 <= count <= 0
    return SemiAlgebraicSet.box(("x1", "x2"), [(0.0, 0.0), (1.0, 1e9)], name="X_INF")


def chain_labeling() -> LabelingMap:
    inf = chain_inf_set()
    rest = SemiAlgebraicSet.box(("x1", "x2"), [(1.0, 1e9), (1.0, 1e9)], name="X_rest")
    return LabelingMap(((inf, "b"), (rest, "a")), ("a", "b"))


def chain_trace(sys: ControlSystem, length: int) -> list[tuple[float, ...]]:
    x = (1.0, 1.0)
    out = [x]
    for _ in range(length - 1):
        x = step(sys, x, 0.0)
        out.append(x)
    return out
