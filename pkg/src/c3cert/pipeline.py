"""End-to-end runs: synthesis with degree escalation, the parity loop, checks, rollouts.

Every run writes an audit trail into its output directory: the resolved
config, per-attempt program dumps, SDPA exports and solver reports, the
certificate, the check report, CSV tables and figures.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .certcheck import CheckConfig, CheckReport, check_certificate
from .certgen import Constants, ConstraintProgram, ProblemSpec, generate, gen_recurrence_on_trace
from .certificate import Certificate
from .config import RunConfig
from .control import empirical_visits, extract_controller, monitor_dpa, simulate
from .omega import build_product
from .soscompile import ExtractionError, SolverOptions, compile_program, export_sdpa, extract, solve
from .sysmodel import FiniteInputSet, chain_inf_set, chain_trace, discretize_inputs

__all__ = [
    "EXIT_OK", "EXIT_CHECK_FAIL", "EXIT_VACUOUS", "EXIT_EXHAUSTED", "EXIT_CONFIG",
    "Attempt", "SynthResult", "build_spec", "run_synth", "run_parity", "run_check", "run_simulate",
    "parity_plan", "chain_gap_profile",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECK_FAIL, EXIT_VACUOUS, EXIT_EXHAUSTED, EXIT_CONFIG = 0, 1, 2, 3, 4


@dataclass
class Attempt:
    tag: str
    deg_T: int
    deg_V: int
    vf_states: tuple = ()
    inf_states: tuple = ()
    status: str = ""  # feasible | infeasible | numerical-failure | timeout | skipped-size | extraction-failed
    check: str | None = None
    seconds: float = 0.0
    sdp: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    note: str = ""

    @property
    def success(self) -> bool:
        return self.status == "feasible" and self.check == "pass"

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["vf_states"], d["inf_states"] = list(self.vf_states), list(self.inf_states)
        return d


@dataclass
class SynthResult:
    attempts: list[Attempt]
    cert: Certificate | None = None
    report: CheckReport | None = None
    spec: ProblemSpec | None = None
    exit_code: int = EXIT_EXHAUSTED

    def to_json(self) -> dict:
        return {"exit_code": self.exit_code, "attempts": [a.to_json() for a in self.attempts],
                "certificate_digest": self.cert.digest() if self.cert else None,
                "check_verdict": self.report.verdict if self.report else None}


# ---------------------------------------------------------------------------


def _u_d(cfg: RunConfig) -> FiniteInputSet:
    if cfg.mode == "verify-only":
        return FiniteInputSet((tuple(float(v) for v in cfg["verify_input"]),))
    return discretize_inputs(cfg.system.U, cfg["input_grid"])


def build_spec(cfg: RunConfig, deg_T: int, deg_V: int | None = None, mode: str | None = None,
               vf_states: Sequence[int] = (), inf_states: Sequence[int] = (),
               product: bool | None = None) -> ProblemSpec:
    mode = mode or cfg.mode
    deg_V = deg_V or deg_T
    if product is None:
        product = cfg.dpa is not None and (bool(vf_states) or bool(inf_states))
    kw = dict(U_d=_u_d(cfg), deg_T=deg_T, deg_V=deg_V, constants=cfg.constants, j_max=cfg["j_max"],
              share_counters=cfg["share_counters"], input_form=cfg["input_form"])
    if product:
        prod = build_product(cfg.system, cfg.dpa, cfg.labeling)
        return ProblemSpec(cfg.system, mode=mode, product=prod, vf_states=tuple(vf_states),
                           inf_states=tuple(inf_states), **kw)
    vf = (cfg.sets["X_VF"],) if mode in ("finite", "fin_inf", "verify-only") else ()
    xinf = cfg.sets.get("X_INF") if mode in ("counter", "fin_inf", "recurrence") else None
    return ProblemSpec(cfg.system, mode=mode, vf_partitions=vf, x_inf=xinf, **kw)


def _solver_opts(cfg: RunConfig) -> SolverOptions:
    s = cfg["solver"]
    return SolverOptions(max_iter=int(s["max_iter"]), tol_gap=s["tol_gap"], tol_feas=s["tol_feas"],
                         time_limit=s["time_limit"])


def _check_cfg(cfg: RunConfig) -> CheckConfig:
    c = cfg["check"]
    ex = discretize_inputs(cfg.system.U, c["existence_grid"]) if c["existence_grid"] else None
    return CheckConfig(samples=c["samples"], seed=c["seed"], eps=c["eps"], delta_ant=c["delta_ant"],
                       existence_inputs=ex)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, default=str), encoding="utf-8")


def _attempt(cfg: RunConfig, spec: ProblemSpec, cp: ConstraintProgram, att: Attempt, out: Path | None):
    """Compile, solve, extract and check one program; fills ``att`` in place."""
    t0 = time.perf_counter()
    adir = None
    if out is not None:
        adir = out / "attempts" / f"{att.tag}-deg{att.deg_T}"
        adir.mkdir(parents=True, exist_ok=True)
        (adir / "program.json").write_text(cp.dumps(), encoding="utf-8")
    sdp = compile_program(cp, sparsity=cfg["solver"]["sparsity"])
    att.sdp = sdp.summary()
    if adir is not None:
        export_sdpa(sdp, adir / "problem.dat-s")
    if att.sdp["sum_svec"] > cfg["solver"]["max_svec"]:
        att.status = "skipped-size"
        att.note = f"{att.sdp['sum_svec']} PSD entries exceed solver.max_svec={cfg['solver']['max_svec']}"
        att.seconds = time.perf_counter() - t0
        return None, None
    rep = solve(sdp, _solver_opts(cfg))
    att.status, att.solver = rep.status, rep.to_json()
    cert = report = None
    if rep.status == "feasible" and spec is not None:
        try:
            cert = extract(sdp, rep, cp)
        except ExtractionError as exc:
            att.status, att.note = "extraction-failed", str(exc)
        else:
            cert.meta.update({"system": cfg.system.name, "mode": spec.mode, "deg_T": att.deg_T,
                              "deg_V": att.deg_V, "input_grid": cfg["input_grid"],
                              "U_d": [list(u) for u in spec.U_d.inputs],
                              "vf_states": list(att.vf_states), "inf_states": list(att.inf_states),
                              "hopf_form": cfg["hopf_form"], "share_counters": spec.share_counters,
                              "j_max": spec.j_max})
            report = check_certificate(cert, spec, _check_cfg(cfg))
            att.check = report.verdict
    if adir is not None:
        _write_json(adir / "solver.json", {"attempt": att.to_json(), "solver_options": _solver_opts(cfg).__dict__})
    att.seconds = time.perf_counter() - t0
    log.info("attempt %s deg %d: %s (check %s) in %.1fs", att.tag, att.deg_T, att.status, att.check, att.seconds)
    return cert, report


def _degrees(cfg: RunConfig) -> list[tuple[int, int]]:
    d = cfg["degrees"]
    top = d["max"] if d["escalate"] else d["T"]
    return [(k, d["V"] or k) for k in range(d["T"], top + 1)]


def _finish(cfg: RunConfig, res: SynthResult, out: Path | None) -> SynthResult:
    if res.cert is not None:
        res.exit_code = res.report.exit_code if res.report is not None else EXIT_OK
    if out is not None:
        _write_json(out / "attempts.json", res.to_json())
        _write_csv(out / "attempts.csv", [
            {"tag": a.tag, "deg_T": a.deg_T, "deg_V": a.deg_V, "vf_states": " ".join(map(str, a.vf_states)),
             "inf_states": " ".join(map(str, a.inf_states)), "status": a.status, "check": a.check or "",
             "seconds": round(a.seconds, 3), "psd_entries": a.sdp.get("sum_svec", "")}
            for a in res.attempts])
        if res.cert is not None:
            res.cert.dump(out / "certificate.json")
        if res.report is not None:
            _write_report(out, res.report, cfg)
    return res


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _write_report(out: Path, report: CheckReport, cfg: RunConfig, stem: str = "check") -> None:
    (out / f"{stem}.json").write_text(report.dumps(), encoding="utf-8")
    (out / f"{stem}.txt").write_text(report.summary_table() + "\n", encoding="utf-8")
    _write_csv(out / f"{stem}_margins.csv", [
        {"condition": c.label, "kind": c.kind, "verdict": c.verdict, "tested": c.tested,
         "antecedent_rate": c.antecedent_rate, "worst_margin": c.worst_margin, "antecedent_best": c.antecedent_best}
        for c in report.conditions])
    if cfg["figures"]:
        from . import plotting
        plotting.plot_check_margins(report, out / f"{stem}_margins.png")


def _prepare(cfg: RunConfig, out: Path | None) -> None:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.resolved.json").write_text(cfg.dumps(), encoding="utf-8")


# ---------------------------------------------------------------------------


def run_synth(cfg: RunConfig, out: Path | None = None) -> SynthResult:
    """Degree escalation from ``degrees.T`` to ``degrees.max``; stop at the first checked success."""
    _prepare(cfg, out)
    if cfg.mode == "parity":
        return run_parity(cfg, out)
    if cfg.system.step_fn is not None:
        return _run_chain(cfg, out)
    res = SynthResult([])
    for dT, dV in _degrees(cfg):
        spec = build_spec(cfg, dT, dV)
        cp = generate(spec)
        att = Attempt(cfg.mode, dT, dV)
        cert, report = _attempt(cfg, spec, cp, att, out)
        res.attempts.append(att)
        if att.success:
            res.cert, res.report, res.spec = cert, report, spec
            break
    if out is not None and res.cert is not None and cfg["figures"]:
        from . import plotting
        plotting.plot_certificate_slice(res.cert, res.spec, out / "certificate_slice.png")
    return _finish(cfg, res, out)


def chain_gap_profile(length: int = 400, growth: int = 1) -> list[int]:
    """Distances between consecutive ``X_INF`` visits of the uncontrolled chain."""
    from .sysmodel import make_chain_system

    sys = make_chain_system(growth)
    inf = chain_inf_set()
    idx = [i for i, x in enumerate(chain_trace(sys, length)) if inf.contains(x)]
    return [b - a for a, b in zip(idx, idx[1:])]


def _run_chain(cfg: RunConfig, out: Path | None) -> SynthResult:
    """Recurrence encoding instantiated along the chain's trace; expected infeasible."""
    trace = chain_trace(cfg.system, cfg["chain"]["length"])
    inf = chain_inf_set()
    flags = [inf.contains(x) for x in trace]
    res = SynthResult([])
    for dT, _ in _degrees(cfg):
        cp = gen_recurrence_on_trace(trace, flags, deg_T=dT, constants=cfg.constants)
        att = Attempt("recurrence-trace", dT, dT)
        _attempt(cfg, None, cp, att, out)
        if att.status == "feasible":
            att.note = "feasible on the sampled trace; the full program is not decided by this relaxation"
        res.attempts.append(att)
    if out is not None:
        gaps = chain_gap_profile(cfg["chain"]["length"], cfg["chain"]["growth"])
        _write_csv(out / "chain_gaps.csv", [{"visit": i + 1, "gap": g} for i, g in enumerate(gaps)])
        if cfg["figures"]:
            from . import plotting
            plotting.plot_chain_gaps(gaps, out / "chain_gaps.png")
    return _finish(cfg, res, out)


# ---------------------------------------------------------------------------
# parity loop


def parity_plan(dpa) -> list[int]:
    return sorted({dpa.acc(q) for q in dpa.states if dpa.acc(q) % 2 == 1})


def _states_with(dpa, prios) -> tuple[int, ...]:
    return tuple(q for q in dpa.states if dpa.acc(q) in set(prios))


def run_parity(cfg: RunConfig, out: Path | None = None) -> SynthResult:
    """Grow the finite-visit frontier through the odd priorities.

    For each odd priority ``o`` (ascending) the loop first tries to add its
    states to the finite-visit set.  On failure it adds the even priorities
    below ``o`` to the infinite-visit set, largest first.  Once every odd
    priority is handled with finite visits alone, one more attempt pairs the
    frontier with the smallest even priority above it; if that fails the
    finite-only certificate stands.
    """
    _prepare(cfg, out)
    dpa = cfg.dpa
    res = SynthResult([])
    vf_prios: list[int] = []
    inf_prios: list[int] = []
    best = None  # (cert, report, spec)

    def try_combo(vfp, infp, tag):
        vf, inf = _states_with(dpa, vfp), _states_with(dpa, infp)
        for dT, dV in _degrees(cfg):
            mode = "fin_inf" if inf else "finite"
            spec = build_spec(cfg, dT, dV, mode=mode, vf_states=vf, inf_states=inf, product=True)
            cp = generate(spec)
            att = Attempt(tag, dT, dV, vf, inf)
            cert, report = _attempt(cfg, spec, cp, att, out)
            res.attempts.append(att)
            if att.success:
                return cert, report, spec
            if att.status == "skipped-size":
                break
        return None

    for o in parity_plan(dpa):
        got = try_combo(vf_prios + [o], inf_prios, f"vf{''.join(map(str, vf_prios + [o]))}"
                        + (f"-inf{''.join(map(str, inf_prios))}" if inf_prios else ""))
        if got is None:
            evens = [e for e in range(o - 1, 0, -2) if e not in inf_prios and _states_with(dpa, [e])]
            for e in evens:
                got = try_combo(vf_prios, inf_prios + [e],
                                f"vf{''.join(map(str, vf_prios))}-inf{''.join(map(str, inf_prios + [e]))}")
                if got is not None:
                    inf_prios.append(e)
                    break
            if got is None:
                res.exit_code = EXIT_EXHAUSTED
                return _finish(cfg, res, out)
            # an even priority below o is visited infinitely often: o no longer matters
            best = got
            break
        vf_prios.append(o)
        best = got
    else:
        top = max(vf_prios, default=0)
        evens = sorted({dpa.acc(q) for q in dpa.states if dpa.acc(q) % 2 == 0 and dpa.acc(q) > top})
        if vf_prios and evens and not inf_prios:
            got = try_combo(vf_prios, [evens[0]],
                            f"vf{''.join(map(str, vf_prios))}-inf{evens[0]}")
            if got is not None:
                best = got
    if best is not None:
        res.cert, res.report, res.spec = best
    elif not parity_plan(dpa):
        res.exit_code = EXIT_OK  # all priorities even: every run accepts
    if out is not None and res.cert is not None and cfg["figures"]:
        from . import plotting
        plotting.plot_certificate_slice(res.cert, res.spec, out / "certificate_slice.png")
    return _finish(cfg, res, out)


# ---------------------------------------------------------------------------


def spec_for_certificate(cfg: RunConfig, cert: Certificate) -> ProblemSpec:
    """Rebuild the problem a certificate was solved for, from its metadata and ``cfg``.

    A recorded input grid and recorded constants win over ``cfg``.
    """
    meta = cert.meta
    mode = meta.get("mode", cfg.mode)
    if mode == "parity":
        mode = cfg.mode
    deg_T = int(meta.get("deg_T", cfg["degrees"]["T"]))
    vf, inf = tuple(meta.get("vf_states", ())), tuple(meta.get("inf_states", ()))
    product = bool(vf or inf) or any(n.startswith("T^(") for n in cert.names())
    if product and cfg.dpa is None:
        from .omega import fig5_dpa
        cfg.dpa = fig5_dpa()
    spec = build_spec(cfg, deg_T, mode=mode, vf_states=vf, inf_states=inf, product=product)
    if meta.get("U_d"):
        # the input grid the certificate was solved over, not the config default
        spec = replace(spec, U_d=FiniteInputSet(tuple(tuple(float(v) for v in u) for u in meta["U_d"])))
    if cert.constants:
        rec = Constants(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in cert.constants.items()
                           if k in ("mu", "tau", "xi", "M")})
        if rec != spec.constants:
            log.warning("using the certificate's recorded constants %s instead of %s", rec, spec.constants)
        spec = replace(spec, constants=rec)
    return spec


def run_check(cfg: RunConfig, cert: Certificate, out: Path | None = None) -> CheckReport:
    _prepare(cfg, out)
    spec = spec_for_certificate(cfg, cert)
    report = check_certificate(cert, spec, _check_cfg(cfg))
    if out is not None:
        _write_report(out, report, cfg)
    return report


def run_simulate(cfg: RunConfig, cert: Certificate, out: Path | None = None) -> dict:
    _prepare(cfg, out)
    spec = spec_for_certificate(cfg, cert)
    sim = cfg["simulate"]
    ctrl = extract_controller(cert, spec, delta=sim["delta"])
    x0s = cfg.system.X0.sample(sim["rollouts"], sim["seed"])
    rows, trajs = [], []
    for k, x0 in enumerate(x0s):
        tr = simulate(ctrl, x0, sim["horizon"], beyond_X=sim["beyond_X"])
        st = empirical_visits(tr, tail_fraction=sim["tail_fraction"], gap_bound=sim["gap_bound"])
        full = tr.steps == sim["horizon"]
        row = {"rollout": k, "x0": [float(v) for v in x0], "status": tr.status, "steps": tr.steps,
               "left_X_step": tr.left_X_step,
               "first_inf_step": tr.first_inf_step, "last_vf_step": tr.last_vf_step,
               "vf_tail": st.vf_tail, "inf_gap_tail": st.inf_gap_tail,
               # a proxy over a truncated rollout says nothing about the horizon
               "finite_proxy": full and st.finitely_often_proxy,
               "infinite_proxy": full and st.infinitely_often_proxy}
        if spec.product is not None:
            v = monitor_dpa(tr, spec.product.dpa)
            b_tail = sum(1 for a in tr.labels[st.tail_start:] if a == "b")
            # the b region lies inside X, so states past X are never b
            row.update({"lasso": v.verdict, "b_tail": b_tail, "b_free_tail": full and b_tail == 0,
                        "ok": v.verdict == "accept"
                        or (v.verdict != "reject" and full and tr.left_X_step is None and b_tail == 0)})
        rows.append(row)
        trajs.append(tr)
        if out is not None and k < sim["csv_limit"]:
            tdir = out / "trajectories"
            tdir.mkdir(exist_ok=True)
            tr.to_csv(tdir / f"rollout_{k:03d}.csv")
    n = len(rows)
    summary = {
        "rollouts": n,
        "horizon": sim["horizon"],
        "tail_fraction": sim["tail_fraction"],
        "gap_bound": sim["gap_bound"],
        "beyond_X": sim["beyond_X"],
        "truncated": sum(r["steps"] < sim["horizon"] for r in rows),
        "left_X": sum(r["left_X_step"] is not None for r in rows),
        "finite_proxy_rate": sum(r["finite_proxy"] for r in rows) / n,
        "infinite_proxy_rate": sum(r["infinite_proxy"] for r in rows) / n,
        "max_inf_gap_tail": max(r["inf_gap_tail"] for r in rows),
    }
    if spec.product is not None:
        for verdict in ("accept", "reject", "inconclusive"):
            summary[f"lasso_{verdict}"] = sum(r["lasso"] == verdict for r in rows)
        summary["ok_rate"] = sum(r["ok"] for r in rows) / n
        summary["b_free_tail_rate"] = sum(r["b_free_tail"] for r in rows) / n
    if out is not None:
        _write_json(out / "simulation.json", {"summary": summary, "rollouts": rows})
        flat = [{k: (" ".join(map(str, v)) if isinstance(v, list) else v) for k, v in r.items()} for r in rows]
        _write_csv(out / "rollouts.csv", flat)
        if cfg["figures"]:
            from . import plotting
            plotting.plot_trajectories(trajs, cfg, spec, out / "trajectories.png")
            plotting.plot_visits(trajs, out / "visits.png")
    return {"summary": summary, "rollouts": rows, "trajectories": trajs}


def run_export_sdpa(cfg: RunConfig, out: Path) -> dict:
    """Write the SDPA file for the configured program at the start degree."""
    _prepare(cfg, out)
    dT, dV = _degrees(cfg)[0]
    if cfg.system.step_fn is not None:
        trace = chain_trace(cfg.system, cfg["chain"]["length"])
        inf = chain_inf_set()
        cp = gen_recurrence_on_trace(trace, [inf.contains(x) for x in trace], deg_T=dT, constants=cfg.constants)
    elif cfg.mode == "parity":
        # the loop's first program: the lowest odd priority visited finitely often
        vf = _states_with(cfg.dpa, parity_plan(cfg.dpa)[:1])
        cp = generate(build_spec(cfg, dT, dV, mode="finite", vf_states=vf, product=True))
    else:
        cp = generate(build_spec(cfg, dT, dV))
    sdp = compile_program(cp, sparsity=cfg["solver"]["sparsity"])
    data = export_sdpa(sdp, out / "problem.dat-s")
    (out / "program.json").write_text(cp.dumps(), encoding="utf-8")
    info = {"sdp": sdp.summary(), "m": len(data.c), "blocks": list(data.block_struct)}
    _write_json(out / "export.json", info)
    return info


def rollout_rate(rows: list[dict], key: str = "ok") -> float:
    return float(np.mean([bool(r[key]) for r in rows])) if rows else 0.0
