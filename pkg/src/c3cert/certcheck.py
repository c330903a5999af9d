"""Sampling-based checks of the logical certificate conditions.

Each :class:`~c3cert.certgen.ConditionInstance` is evaluated as the
implication it stands for, not as its SOS strengthening: antecedents are
tested against ``-delta_ant`` and the margin is the consequent's value.
Passing is evidence, not proof.
"""

from __future__ import annotations

import json
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .certgen import ConditionInstance, ProblemSpec, enumerate_conditions
from .certificate import Certificate, CertificateError
from .polyalg import Polynomial
from .semialg import ProductSet, SemiAlgebraicSet, SamplingError
from .sysmodel import FiniteInputSet, step_many

__all__ = [
    "CheckConfig",
    "ConditionReport",
    "CheckReport",
    "check_condition",
    "check_certificate",
    "check_boundedness",
    "EXIT_PASS",
    "EXIT_FAIL",
    "EXIT_VACUOUS",
]

EXIT_PASS, EXIT_FAIL, EXIT_VACUOUS = 0, 1, 2
IMPLICATIONS = ("transitivity", "containment", "rank_fin", "rank_inf", "recurrence")


@dataclass(frozen=True)
class CheckConfig:
    samples: int = 10_000
    seed: int = 0
    eps: float = 1e-6
    delta_ant: float = 1e-6
    min_antecedent_rate: float = 0.01
    # optional denser input lattice for the existence condition
    existence_inputs: FiniteInputSet | None = None
    max_violations: int = 5

    def __post_init__(self):
        for name in ("samples", "eps", "delta_ant"):
            if not getattr(self, name) > 0:
                raise ValueError(f"check config field {name} must be positive")

    def as_dict(self) -> dict:
        return {"samples": self.samples, "seed": self.seed, "eps": self.eps, "delta_ant": self.delta_ant,
                "min_antecedent_rate": self.min_antecedent_rate,
                "existence_inputs": None if self.existence_inputs is None else len(self.existence_inputs)}


@dataclass
class ConditionReport:
    label: str
    kind: str
    tested: int
    antecedent_ok: int
    worst_margin: float | None
    worst_point: list[float] | None
    violations: list = field(default_factory=list)
    verdict: str = "pass"  # pass | fail | vacuous
    low_antecedent_rate: bool = False
    seconds: float = 0.0
    # largest sampled value of the weakest antecedent; far below zero means
    # the antecedent looks unsatisfiable rather than undersampled
    antecedent_best: float | None = None

    @property
    def antecedent_rate(self) -> float:
        return self.antecedent_ok / self.tested if self.tested else 0.0

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "tested": self.tested,
            "antecedent_ok": self.antecedent_ok,
            "antecedent_rate": self.antecedent_rate,
            "worst_margin": self.worst_margin,
            "worst_point": self.worst_point,
            "violations": self.violations,
            "verdict": self.verdict,
            "low_antecedent_rate": self.low_antecedent_rate,
            "antecedent_best": self.antecedent_best,
        }


@dataclass
class CheckReport:
    conditions: list[ConditionReport]
    config: CheckConfig
    verdict: str = "pass"
    seconds: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return {"pass": EXIT_PASS, "fail": EXIT_FAIL, "vacuous": EXIT_VACUOUS}[self.verdict]

    def worst(self, kind: str | None = None) -> float | None:
        vals = [c.worst_margin for c in self.conditions
                if c.worst_margin is not None and (kind is None or c.kind == kind)]
        return min(vals) if vals else None

    def by_kind(self, kind: str) -> list[ConditionReport]:
        return [c for c in self.conditions if c.kind == kind]

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "exit_code": self.exit_code,
            "config": self.config.as_dict(),
            "seconds": self.seconds,
            "notes": self.notes
            + ["sampling evidence only: a pass is necessary, not sufficient, for validity"],
            "conditions": [c.to_json() for c in self.conditions],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    def summary_table(self) -> str:
        lines = [f"{'condition':48s} {'verdict':8s} {'tested':>7s} {'ante%':>7s} {'worst margin':>14s} {'best ante':>11s}"]
        for c in self.conditions:
            wm = "n/a" if c.worst_margin is None else f"{c.worst_margin:.6g}"
            ab = "" if c.antecedent_best is None else f"{c.antecedent_best:.4g}"
            flag = " (low antecedent rate)" if c.low_antecedent_rate else ""
            lines.append(f"{c.label[:48]:48s} {c.verdict:8s} {c.tested:7d} {100 * c.antecedent_rate:6.2f}% "
                         f"{wm:>14s} {ab:>11s}{flag}")
        lines.append(f"overall: {self.verdict}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------


def _seed_for(label: str, seed: int) -> int:
    return (zlib.crc32(label.encode()) + 1_000_003 * seed) % (2**31)


def _eval(p: Polynomial, arrays: dict[str, np.ndarray], n_pts: int) -> np.ndarray:
    out = p.eval_many(arrays)
    return np.broadcast_to(np.asarray(out, dtype=float), (n_pts,))


def _binary(T: Polynomial, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``T(a, b)`` for state arrays ``a``, ``b`` of shape ``(N, n)``."""
    env = {f"x{i + 1}": a[:, i] for i in range(a.shape[1])}
    env.update({f"y{i + 1}": b[:, i] for i in range(b.shape[1])})
    return _eval(T, env, a.shape[0])


def _unary(R: Polynomial, a: np.ndarray) -> np.ndarray:
    return _eval(R, {f"x{i + 1}": a[:, i] for i in range(a.shape[1])}, a.shape[0])


def _poly(cert: Certificate, name: str) -> Polynomial:
    if name not in cert:
        raise CertificateError(f"certificate has no polynomial {name!r} required by the condition")
    return cert[name]


def check_condition(cert: Certificate, inst: ConditionInstance, spec: ProblemSpec,
                    cfg: CheckConfig | None = None) -> ConditionReport:
    cfg = cfg or CheckConfig()
    t0 = time.perf_counter()
    sys = spec.system
    n = spec.n
    sets = [s for _, s in inst.domain]
    pts = ProductSet(tuple(s.with_prefix(p) for p, s in inst.domain)).sample(cfg.samples, _seed_for(inst.label, cfg.seed))
    blocks = [pts[:, k * n:(k + 1) * n] for k in range(len(sets))]
    N = pts.shape[0]
    P = {role: _poly(cert, name) for role, name in inst.templates.items()}
    ante = np.full(N, np.inf)  # pointwise min over antecedent values
    kind = inst.kind
    if kind == "existence":
        x = blocks[0]
        inputs = cfg.existence_inputs.inputs if cfg.existence_inputs is not None else inst.inputs
        margin = np.full(N, -np.inf)
        for u in inputs:
            margin = np.maximum(margin, _binary(P["T"], x, step_many(sys, x, u)))
    elif kind == "transitivity":
        x, y = blocks
        fx = step_many(sys, x, inst.inputs[0])
        ante = np.minimum(_binary(P["T_jk"], x, fx), _binary(P["T_kl"], fx, y))
        margin = _binary(P["T_jl"], x, y)
    elif kind == "containment":
        x, y = blocks
        ante = _binary(P["T_hi"], x, y)
        margin = _binary(P["T_lo"], x, y)
    elif kind == "lower":
        margin = _unary(P["R"], blocks[0])
    elif kind in ("rank_fin", "rank_inf"):
        x0, y, z = blocks
        ante = np.minimum(_binary(P["T_init"], x0, y), _binary(P["T_step"], y, z))
        margin = _unary(P["R"], y) - _unary(P["R"], z) - inst.xi
    elif kind == "recurrence":
        x0, y = blocks
        fy = step_many(sys, y, inst.inputs[0])
        ante = np.minimum(_binary(P["T"], x0, y), _binary(P["T"], y, fy))
        margin = _binary(P["T"], x0, fy) - _binary(P["T"], x0, y) - inst.xi
    elif kind == "bound":
        v = _binary(P["T"], blocks[0], blocks[1])
        margin = inst.meta["M"] - np.abs(v)
    else:
        raise ValueError(f"no logical check for condition kind {kind!r}")
    return _finish(inst, cfg, pts, ante, margin, time.perf_counter() - t0)


def _finish(inst, cfg, pts, ante, margin, seconds) -> ConditionReport:
    N = pts.shape[0]
    antecedent = ante >= -cfg.delta_ant
    ok = int(antecedent.sum())
    rep = ConditionReport(inst.label, inst.kind, N, ok, None, None, seconds=seconds)
    if inst.kind in IMPLICATIONS:
        rep.antecedent_best = float(np.max(ante))
    if ok == 0:
        rep.verdict = "vacuous"
        return rep
    m = np.where(antecedent, margin, np.inf)
    i = int(np.argmin(m))
    rep.worst_margin = float(m[i])
    rep.worst_point = [float(v) for v in pts[i]]
    bad = np.flatnonzero(m < -cfg.eps)
    order = bad[np.argsort(m[bad])][: cfg.max_violations]
    rep.violations = [{"point": [float(v) for v in pts[k]], "margin": float(m[k])} for k in order]
    rep.verdict = "fail" if bad.size else "pass"
    if inst.kind in IMPLICATIONS and rep.antecedent_rate < cfg.min_antecedent_rate:
        rep.low_antecedent_rate = True
    return rep


def check_certificate(cert: Certificate, spec: ProblemSpec, cfg: CheckConfig | None = None,
                      kinds: Sequence[str] | None = None) -> CheckReport:
    """Run every condition of ``spec`` against ``cert`` and aggregate."""
    cfg = cfg or CheckConfig()
    t0 = time.perf_counter()
    reports = []
    for inst in enumerate_conditions(spec):
        if kinds is not None and inst.kind not in kinds:
            continue
        reports.append(check_condition(cert, inst, spec, cfg))
    out = CheckReport(reports, cfg, seconds=time.perf_counter() - t0)
    out.verdict = aggregate_verdict(reports)
    vac = [r.label for r in reports if r.verdict == "vacuous"]
    if vac:
        out.notes.append(f"VACUOUS: no sampled antecedent held for {len(vac)} condition(s): {', '.join(vac)}")
    low = [r.label for r in reports if r.low_antecedent_rate]
    if low:
        out.notes.append(f"antecedent rate below {cfg.min_antecedent_rate:.0%} for {len(low)} condition(s); "
                         "rerun with more samples before trusting their margins")
    return out


EXPECTED_NONVACUOUS = ("existence",)


def aggregate_verdict(reports: Sequence[ConditionReport]) -> str:
    """Fail on any failing condition; vacuous if a condition expected to bite did not."""
    if any(r.verdict == "fail" for r in reports):
        return "fail"
    if not reports or all(r.verdict == "vacuous" for r in reports):
        return "vacuous"
    if any(r.verdict == "vacuous" for r in reports if r.kind in EXPECTED_NONVACUOUS):
        return "vacuous"
    return "pass"


def check_boundedness(cert: Certificate, name: str, domain: SemiAlgebraicSet | ProductSet, M: float,
                      two_sided: bool = True, cfg: CheckConfig | None = None) -> ConditionReport:
    """Sampled ``|p| <= M`` (two-sided) or ``p >= -M`` on ``domain``."""
    cfg = cfg or CheckConfig()
    t0 = time.perf_counter()
    if domain.bbox is None:
        raise SamplingError("no bounding box for the boundedness domain")
    p = _poly(cert, name)
    pts = domain.sample(cfg.samples, _seed_for(name, cfg.seed))
    env = {v: pts[:, k] for k, v in enumerate(domain.variables)}
    vals = _eval(p, env, pts.shape[0])
    margin = M - np.abs(vals) if two_sided else vals + M
    inst = ConditionInstance("bound", f"bound[{name}]", (), {})
    return _finish(inst, cfg, pts, np.full(pts.shape[0], np.inf), margin, time.perf_counter() - t0)
