"""Finite-memory controllers induced by certificates, closed-loop rollouts and monitors."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .certgen import ProblemSpec, t_name
from .certificate import Certificate, CertificateError
from .omega import DPA, accepts_lasso
from .sysmodel import FiniteInputSet, label_or_none, step

__all__ = [
    "Controller",
    "ControllerGap",
    "Trajectory",
    "extract_controller",
    "simulate",
    "empirical_visits",
    "monitor_dpa",
    "VisitStats",
    "RunVerdict",
]


class ControllerGap(RuntimeError):
    """No input of ``U_d`` keeps the certificate's step value above ``-delta``."""


@dataclass(frozen=True)
class _CompiledPoly:
    # exponents over (x..., y...) and coefficients, for fast batched evaluation
    exps: np.ndarray
    coefs: np.ndarray

    @classmethod
    def of(cls, p, variables: Sequence[str]) -> "_CompiledPoly":
        idx = {v: k for k, v in enumerate(variables)}
        rows, cs = [], []
        for m, c in p.items():
            e = np.zeros(len(variables), dtype=int)
            for v, k in m:
                if v not in idx:
                    raise CertificateError(f"certificate polynomial uses unexpected variable {v!r}")
                e[idx[v]] = k
            rows.append(e)
            cs.append(c)
        if not rows:
            rows, cs = [np.zeros(len(variables), dtype=int)], [0.0]
        return cls(np.array(rows), np.array(cs, dtype=float))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        # pts: (N, nvars)
        return np.prod(pts[:, None, :] ** self.exps[None, :, :], axis=2) @ self.coefs


@dataclass(frozen=True)
class Controller:
    """``kappa(x, mem)``: argmax of the indexed certificate over ``U_d``.

    Memory is the automaton state ``q`` on products and the visit counter
    ``j`` when counters are not shared.  Ties go to the lowest input index.
    """

    cert: Certificate
    spec: ProblemSpec
    U_d: FiniteInputSet
    mode: str  # plain | counter | product
    delta: float = 1e-6
    _polys: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def uses_counter(self) -> bool:
        return not self.spec.counters_shared

    @property
    def j_max(self) -> int:
        return self.spec.j_max

    def initial_memory(self, x0) -> tuple[int | None, int | None]:
        q = self.spec.product.dpa.initial if self.spec.product is not None else None
        return q, (0 if self.uses_counter else None)

    def in_inf(self, x, q) -> bool:
        if self.spec.product is not None:
            return q in self.spec.inf_states
        return self.spec.x_inf is not None and self.spec.x_inf.contains(tuple(x), tol=1e-12)

    def in_vf(self, x, q) -> bool:
        if self.spec.product is not None:
            return q in self.spec.vf_states
        return any(s.contains(tuple(x), tol=1e-12) for s in self.spec.vf_partitions)

    def _next_q(self, x, q):
        if q is None:
            return None
        letter = label_or_none(self.spec.product.labeling, x)
        if letter is None:
            return None
        return self.spec.product.dpa.step(q, letter)

    def template_for(self, x, q, j) -> str:
        qn = self._next_q(x, q)
        if q is not None and qn is None:
            raise ControllerGap(f"state {tuple(x)} carries no label")
        if not self.uses_counter:
            return t_name(q, qn)
        k = j + 1 if self.in_inf(x, q) else j
        return t_name(q, qn, j, k)

    def _compiled(self, name: str) -> _CompiledPoly:
        if name not in self._polys:
            n = self.spec.n
            self._polys[name] = _CompiledPoly.of(
                self.cert[name], [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)])
        return self._polys[name]

    def margins(self, x, q=None, j=None) -> np.ndarray:
        """``T_index(x, f(x, u))`` for every ``u`` in ``U_d``."""
        name = self.template_for(x, q, j)
        succ = np.array([step(self.spec.system, x, u) for u in self.U_d.inputs])
        pts = np.hstack([np.tile(np.asarray(x, dtype=float), (len(succ), 1)), succ])
        return self._compiled(name)(pts)

    def act(self, x, q=None, j=None) -> tuple[tuple[float, ...], float]:
        m = self.margins(x, q, j)
        i = int(np.argmax(m))  # first maximizer
        if not m[i] >= -self.delta:
            raise ControllerGap(f"no admissible input at x={tuple(x)}, q={q}, j={j} (best {m[i]:.3g})")
        return self.U_d.inputs[i], float(m[i])

    def update_memory(self, x, q, j) -> tuple[int | None, int | None]:
        qn = self._next_q(x, q)
        if j is not None:
            # saturate at j_max: kappa(x, j_max) is played from then on
            j = min(j + 1 if self.in_inf(x, q) else j, self.j_max)
        return qn, j

    def gap_report(self, n: int = 2000, seed: int = 0) -> dict:
        """Sampled states of ``X`` (each memory value) where no input is admissible."""
        pts = self.spec.system.X.sample(n, seed)
        qs = list(self.spec.product.dpa.states) if self.spec.product is not None else [None]
        js = list(range(self.j_max + 1)) if self.uses_counter else [None]
        gaps = []
        for q in qs:
            for j in js:
                for x in pts:
                    try:
                        m = self.margins(x, q, j)
                    except ControllerGap:
                        continue
                    if m.max() < -self.delta:
                        gaps.append({"x": [float(v) for v in x], "q": q, "j": j, "best": float(m.max())})
        return {"tested": len(pts) * len(qs) * len(js), "gaps": len(gaps), "examples": gaps[:5]}


def extract_controller(cert: Certificate, spec: ProblemSpec, mode: str | None = None,
                       delta: float = 1e-6) -> Controller:
    if mode is None:
        mode = "product" if spec.product is not None else ("counter" if not spec.counters_shared else "plain")
    if mode not in ("plain", "counter", "product"):
        raise ValueError(f"unknown controller mode {mode!r}")
    if (mode == "product") != (spec.product is not None):
        raise ValueError("controller mode 'product' needs a product problem and vice versa")
    if spec.mode == "recurrence":
        raise ValueError("recurrence certificates have no controller extraction here")
    q_states = spec.automaton_states()
    need = {t_name(p, q) for p in q_states for q in q_states} if spec.counters_shared else set()
    missing = sorted(n for n in need if n not in cert)
    if missing:
        raise CertificateError(f"certificate lacks {missing} for {mode} control")
    return Controller(cert, spec, spec.U_d, mode, delta)


# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    states: list[tuple[float, ...]]
    inputs: list[tuple[float, ...]]
    margins: list[float]
    labels: list[str | None]
    q: list[int | None]
    j: list[int | None]
    status: str = "ok"  # ok | gap | left-X
    message: str = ""
    first_inf_step: int | None = None
    last_vf_step: int | None = None
    inf_flags: list[bool] = field(default_factory=list)
    vf_flags: list[bool] = field(default_factory=list)
    left_X_step: int | None = None

    def __post_init__(self):
        n = len(self.states)
        if len(self.inputs) != len(self.margins) or len(self.inputs) not in (n - 1, n):
            raise ValueError("trajectory fields have inconsistent lengths")

    @property
    def steps(self) -> int:
        return len(self.inputs)

    @property
    def truncated(self) -> bool:
        return self.status != "ok"

    def to_rows(self) -> list[dict]:
        n = len(self.states[0])
        m = len(self.inputs[0]) if self.inputs else 0
        rows = []
        for i, x in enumerate(self.states):
            row = {"step": i}
            row.update({f"x{k + 1}": x[k] for k in range(n)})
            u = self.inputs[i] if i < len(self.inputs) else (None,) * m
            row.update({f"u{k + 1}": u[k] for k in range(m)})
            row["label"] = self.labels[i] if i < len(self.labels) else None
            row["q"] = self.q[i] if i < len(self.q) else None
            row["j"] = self.j[i] if i < len(self.j) else None
            row["margin"] = self.margins[i] if i < len(self.margins) else None
            rows.append(row)
        return rows

    def to_csv(self, path: str | Path) -> None:
        rows = self.to_rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v)) for k, v in r.items()})

    def summary(self) -> dict:
        return {"steps": self.steps, "status": self.status, "message": self.message,
                "first_inf_step": self.first_inf_step, "last_vf_step": self.last_vf_step,
                "min_margin": min(self.margins) if self.margins else None}


def simulate(ctrl: Controller, x0: Sequence[float], horizon: int, check_x0: bool = True,
             beyond_X: bool = False) -> Trajectory:
    """Closed-loop rollout of at most ``horizon`` transitions.

    Leaving ``X`` ends the certificate's guarantees, so the rollout stops
    there with status ``left-X``.  ``beyond_X=True`` is a diagnostic: the
    dynamics keep running with the last input held, the automaton state and
    counter frozen, and no labels (the labeling is only defined on ``X``).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    sys = ctrl.spec.system
    x = tuple(float(v) for v in x0)
    if check_x0 and not sys.X0.contains(x, tol=1e-12):
        raise ValueError(f"initial state {x} is outside X0")
    q, j = ctrl.initial_memory(x)
    lab = ctrl.spec.product.labeling if ctrl.spec.product is not None else None
    traj = Trajectory([x], [], [], [label_or_none(lab, x) if lab else None], [q], [j])
    status, msg = "ok", ""
    inside = True
    for _ in range(horizon):
        if inside:
            try:
                u, m = ctrl.act(x, q, j)
            except ControllerGap as exc:
                status, msg = "gap", str(exc)
                break
            q, j = ctrl.update_memory(x, q, j)
        else:
            m = math.nan
        x = step(sys, x, u)
        traj.inputs.append(tuple(u))
        traj.margins.append(m)
        traj.states.append(x)
        if not all(math.isfinite(v) for v in x):
            inside = False
            status, msg = "left-X", f"state {x} diverged at step {len(traj.inputs)}"
            traj.labels.append(None)
            traj.q.append(q)
            traj.j.append(j)
            break
        if inside and not sys.X.contains(x, tol=1e-9):
            inside = False
            status, msg = "left-X", f"state {x} left X at step {len(traj.inputs)}"
            traj.left_X_step = len(traj.inputs)
        traj.labels.append(label_or_none(lab, x) if lab and inside else None)
        traj.q.append(q)
        traj.j.append(j)
        if not inside and not beyond_X:
            break
    traj.status, traj.message = status, msg
    n_in = len(traj.states) if traj.left_X_step is None else traj.left_X_step
    traj.inf_flags = [ctrl.in_inf(s, qq) if i < n_in else False
                      for i, (s, qq) in enumerate(zip(traj.states, traj.q))]
    traj.vf_flags = [ctrl.in_vf(s, qq) if i < n_in else False
                     for i, (s, qq) in enumerate(zip(traj.states, traj.q))]
    inf = [i for i, f in enumerate(traj.inf_flags) if f]
    vf = [i for i, f in enumerate(traj.vf_flags) if f]
    traj.first_inf_step = inf[0] if inf else None
    traj.last_vf_step = vf[-1] if vf else None
    return traj


# ---------------------------------------------------------------------------
# finite-horizon statistics


@dataclass
class VisitStats:
    horizon: int
    tail_start: int
    vf_tail: int
    inf_tail: int
    inf_gap_tail: float
    inf_gaps: list[int]
    finitely_often_proxy: bool
    infinitely_often_proxy: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


Pred = Callable[[Sequence[float], int | None], bool]


def _as_pred(s) -> Pred | None:
    if s is None:
        return None
    if callable(s):
        return s
    return lambda x, q: s.contains(tuple(x), tol=1e-12)


def empirical_visits(traj: Trajectory, X_VF=None, X_INF=None, tail_fraction: float = 0.5,
                     gap_bound: int = 5) -> VisitStats:
    """Visit counts in the final ``tail_fraction`` of the trajectory.

    ``X_VF`` / ``X_INF`` are sets or predicates ``(x, q) -> bool``; ``None``
    falls back to the flags recorded by :func:`simulate`.  The INF gap in the
    tail counts the boundary stretches too, so a tail with no INF visit has
    gap ``len(tail) + 1``.
    """
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    n = len(traj.states)
    vf_p, inf_p = _as_pred(X_VF), _as_pred(X_INF)
    vf = [vf_p(x, q) for x, q in zip(traj.states, traj.q)] if vf_p else list(traj.vf_flags or [False] * n)
    inf = [inf_p(x, q) for x, q in zip(traj.states, traj.q)] if inf_p else list(traj.inf_flags or [False] * n)
    start = int(math.floor(n * (1 - tail_fraction)))
    idx = [i for i in range(start, n) if inf[i]]
    if idx:
        marks = [start - 1] + idx + [n]
        gap = max(b - a for a, b in zip(marks, marks[1:]))
    else:
        gap = n - start + 1
    all_idx = [i for i in range(n) if inf[i]]
    gaps = [b - a for a, b in zip(all_idx, all_idx[1:])]
    vf_tail = sum(vf[start:])
    return VisitStats(n - 1, start, vf_tail, len(idx), gap, gaps, vf_tail == 0, gap <= gap_bound)


@dataclass
class RunVerdict:
    run: list[int]
    histogram: dict[int, int]
    verdict: str  # accept | reject | inconclusive
    lasso: tuple[int, int] | None = None  # (cycle start, cycle end) state indices

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "lasso": self.lasso, "histogram": self.histogram,
                "run_length": len(self.run)}


def monitor_dpa(traj: Trajectory, dpa: DPA, grid: float = 1e-6) -> RunVerdict:
    """Run ``dpa`` on the trajectory's labels and look for an exact lasso.

    The closed loop is deterministic given ``(x, q, j)``, so a repeat of the
    rounded triple closes a lasso.  No repeat within the horizon gives
    ``inconclusive``.
    """
    labels = traj.labels
    if any(a is None for a in labels):
        # only the labeled prefix (states inside X) has a run
        labels = labels[:labels.index(None)]
        if not labels:
            return RunVerdict([], {}, "inconclusive")
    run = dpa.run(labels)
    hist: dict[int, int] = {}
    for q in run:
        hist[dpa.acc(q)] = hist.get(dpa.acc(q), 0) + 1
    seen: dict = {}
    # only states with a recorded successor can close a cycle
    for i in range(len(labels)):
        key = (tuple(round(v / grid) for v in traj.states[i]), run[i],
               traj.j[i] if i < len(traj.j) else None)
        if key in seen:
            a = seen[key]
            ok = accepts_lasso(dpa, labels[:a], labels[a:i])
            return RunVerdict(run, hist, "accept" if ok else "reject", (a, i))
        seen[key] = i
    return RunVerdict(run, hist, "inconclusive")
