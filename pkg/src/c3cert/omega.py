"""Deterministic parity automata (min-even acceptance) and system products."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

from .sysmodel import ControlSystem, LabelingMap, label, step

__all__ = [
    "DPA",
    "DPAError",
    "ProductSystem",
    "PrioritySets",
    "parse_dpa",
    "format_dpa",
    "accepts_lasso",
    "build_product",
    "priority_targets",
    "fig5_dpa",
]


class DPAError(ValueError):
    pass


@dataclass(frozen=True)
class DPA:
    alphabet: tuple[str, ...]
    n_states: int  # states are 1..n_states
    initial: int
    priority: tuple[int, ...]  # priority[q-1]
    delta: dict  # (q, letter) -> q'

    @property
    def states(self) -> range:
        return range(1, self.n_states + 1)

    def acc(self, q: int) -> int:
        return self.priority[q - 1]

    def step(self, q: int, letter: str) -> int:
        if letter not in self.alphabet:
            raise DPAError(f"letter {letter!r} outside alphabet")
        return self.delta[(q, letter)]

    def run(self, word: Sequence[str], q: int | None = None) -> list[int]:
        q = self.initial if q is None else q
        out = [q]
        for a in word:
            q = self.step(q, a)
            out.append(q)
        return out

    def on_cycle(self, q: int) -> bool:
        """True iff ``q`` can reach itself in one or more steps."""
        seen, frontier = set(), [self.delta[(q, a)] for a in self.alphabet]
        while frontier:
            p = frontier.pop()
            if p == q:
                return True
            if p in seen:
                continue
            seen.add(p)
            frontier.extend(self.delta[(p, a)] for a in self.alphabet)
        return False


def parse_dpa(text: str) -> DPA:
    alphabet = None
    n = None
    initial = None
    prio = None
    delta: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(":")
        key, fields = key.strip(), rest.split()
        if key == "alphabet":
            alphabet = tuple(fields)
        elif key == "states":
            n = int(fields[0])
        elif key == "initial":
            initial = int(fields[0])
        elif key == "priority":
            prio = tuple(int(p) for p in fields)
        elif key == "trans":
            if len(fields) != 3:
                raise DPAError(f"line {lineno}: expected 'trans: src letter dst'")
            src, letter, dst = int(fields[0]), fields[1], int(fields[2])
            if (src, letter) in delta:
                raise DPAError(f"duplicate transition for ({src}, {letter})")
            delta[(src, letter)] = dst
        elif key == "acceptance":
            if rest.strip() != "min-even":
                raise DPAError("only min-even parity acceptance is supported")
        else:
            raise DPAError(f"line {lineno}: unknown key {key!r}")
    if alphabet is None or n is None or initial is None or prio is None:
        raise DPAError("missing one of alphabet/states/initial/priority")
    if len(set(alphabet)) != len(alphabet):
        raise DPAError("repeated letter in alphabet")
    if len(prio) != n:
        raise DPAError(f"{len(prio)} priorities for {n} states")
    if not 1 <= initial <= n:
        raise DPAError("initial state out of range")
    c = max(prio)
    for p in prio:
        if not 1 <= p <= c:
            raise DPAError(f"priority {p} outside 1..{c}")
    for (src, letter), dst in delta.items():
        if letter not in alphabet:
            raise DPAError(f"transition letter {letter!r} not in alphabet")
        if not (1 <= src <= n and 1 <= dst <= n):
            raise DPAError(f"transition ({src}, {letter}) -> {dst} out of range")
    for q in range(1, n + 1):
        for a in alphabet:
            if (q, a) not in delta:
                raise DPAError(f"missing transition for ({q}, {a})")
    return DPA(alphabet, n, initial, prio, delta)


def format_dpa(dpa: DPA) -> str:
    lines = [
        f"alphabet: {' '.join(dpa.alphabet)}",
        f"states: {dpa.n_states}",
        f"initial: {dpa.initial}",
        f"priority: {' '.join(str(p) for p in dpa.priority)}",
    ]
    for q in dpa.states:
        for a in dpa.alphabet:
            lines.append(f"trans: {q} {a} {dpa.delta[(q, a)]}")
    return "\n".join(lines) + "\n"


FIG5_TEXT = """\
alphabet: a b
states: 3
initial: 1
priority: 1 3 4
trans: 1 a 3
trans: 1 b 2
trans: 2 a 3
trans: 2 b 2
trans: 3 a 3
trans: 3 b 2
"""


def fig5_dpa() -> DPA:
    """Three-state automaton for "eventually always a"."""
    return parse_dpa(FIG5_TEXT)


def accepts_lasso(dpa: DPA, prefix: Sequence[str], cycle: Sequence[str]) -> bool:
    if not cycle:
        raise DPAError("cycle must be nonempty")
    for a in list(prefix) + list(cycle):
        if a not in dpa.alphabet:
            raise DPAError(f"letter {a!r} outside alphabet")
    q = dpa.initial
    for a in prefix:
        q = dpa.delta[(q, a)]
    # iterate the cycle until the state at the cycle start repeats
    first_seen: dict[int, int] = {}
    visited: list[int] = []  # states entered while reading cycles
    while q not in first_seen:
        first_seen[q] = len(visited)
        for a in cycle:
            visited.append(q)
            q = dpa.delta[(q, a)]
    loop = visited[first_seen[q]:]
    return min(dpa.acc(s) for s in loop) % 2 == 0


@dataclass(frozen=True)
class ProductSystem:
    base: ControlSystem
    dpa: DPA
    labeling: LabelingMap

    @property
    def n_copies(self) -> int:
        return self.dpa.n_states

    def step(self, state: tuple[tuple[float, ...], int], u) -> tuple[tuple[float, ...], int]:
        x, q = state
        letter = label(self.labeling, x)
        return step(self.base, x, u), self.dpa.step(q, letter)

    def initial_state(self, x0) -> tuple[tuple[float, ...], int]:
        return tuple(x0), self.dpa.initial


def build_product(sys: ControlSystem, dpa: DPA, labeling: LabelingMap) -> ProductSystem:
    if set(labeling.alphabet) != set(dpa.alphabet):
        raise DPAError(f"labeling alphabet {labeling.alphabet} != automaton alphabet {dpa.alphabet}")
    return ProductSystem(sys, dpa, labeling)


@dataclass(frozen=True)
class PrioritySets:
    odd_set: tuple[int, ...]
    even_pick: int | None
    vf_states: tuple[int, ...]
    inf_states: tuple[int, ...]


def priority_targets(dpa: DPA, odd_set: Sequence[int], even_pick: int | None = None) -> PrioritySets:
    odd_set = tuple(sorted(set(odd_set)))
    if not odd_set:
        raise DPAError("odd priority set must be nonempty")
    if any(p % 2 == 0 for p in odd_set):
        raise DPAError(f"odd priority set contains even values: {odd_set}")
    if even_pick is not None:
        if even_pick % 2:
            raise DPAError(f"even pick {even_pick} is odd")
        if even_pick >= max(odd_set):
            raise DPAError(f"even pick {even_pick} must be below {max(odd_set)}")
    vf = tuple(q for q in dpa.states if dpa.acc(q) in odd_set)
    inf: tuple[int, ...] = ()
    if even_pick is not None:
        inf = tuple(q for q in dpa.states if dpa.acc(q) == even_pick)
        if not inf:
            warnings.warn(f"no automaton state has priority {even_pick}; INF target is empty", stacklevel=2)
    return PrioritySets(odd_set, even_pick, vf, inf)
