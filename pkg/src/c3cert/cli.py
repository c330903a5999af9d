"""Command-line driver: ``c3cert {synth,parity,check,simulate,export-sdpa}``.

Exit codes: 0 success, 1 check failure, 2 vacuous check, 3 synthesis
exhausted, 4 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .certificate import Certificate, CertificateError
from .config import ConfigError, load_config
from .fixtures import FixtureError, certificate_from_document, is_table_document, load_table
from .pipeline import EXIT_CONFIG, run_check, run_export_sdpa, run_simulate, run_synth

log = logging.getLogger("c3cert")

PARITY_DEFAULTS = {"system": "hopf_dpa", "automaton": "fig5", "mode": "parity",
                   "constants": {"xi": 0.01}, "input_grid": 2}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags below override it")
    p.add_argument("--system", help="built-in system: hopf, hopf_dpa, chain")
    p.add_argument("--hopf-form", dest="hopf_form", choices=["normal", "printed"])
    p.add_argument("--mode", help="finite, recurrence, counter, fin_inf, parity or verify-only")
    p.add_argument("--automaton", help="DPA file, or 'fig5' for the built-in three-state automaton")
    p.add_argument("--deg", type=int, help="starting template degree (T and V/Z)")
    p.add_argument("--deg-V", dest="deg_V", type=int, help="fixed V/Z degree")
    p.add_argument("--deg-max", dest="deg_max", type=int, help="last degree tried by escalation")
    p.add_argument("--no-escalate", action="store_true", help="try the starting degree only")
    p.add_argument("--grid", type=int, help="points per input axis in U_d")
    p.add_argument("--mu", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--M", type=float)
    p.add_argument("--j-max", dest="j_max", type=int)
    p.add_argument("--sparsity", choices=["chordal", "dense"])
    p.add_argument("--samples", type=int, help="check samples per condition")
    p.add_argument("--seed", type=int, help="check sampling seed")
    p.add_argument("--eps", type=float, help="check tolerance")
    p.add_argument("--rollouts", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--beyond-X", dest="beyond_X", action="store_true",
                   help="diagnostic: keep simulating after a rollout leaves X (input held, no labels)")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _overrides(a: argparse.Namespace) -> dict:
    o: dict = {}
    for key in ("system", "hopf_form", "mode", "automaton", "j_max", "out"):
        v = getattr(a, key, None)
        if v is not None:
            o["output" if key == "out" else key] = v
    if a.grid is not None:
        o["input_grid"] = a.grid
    deg = {k: v for k, v in (("T", a.deg), ("V", a.deg_V), ("max", a.deg_max)) if v is not None}
    if a.deg is not None and a.deg_max is None:
        deg["max"] = max(a.deg, 4)
    if a.no_escalate:
        deg["escalate"] = False
    if deg:
        o["degrees"] = deg
    consts = {k: getattr(a, k) for k in ("mu", "tau", "xi", "M") if getattr(a, k) is not None}
    if consts:
        o["constants"] = consts
    if a.sparsity:
        o["solver"] = {"sparsity": a.sparsity}
    chk = {k: getattr(a, k) for k in ("samples", "seed", "eps") if getattr(a, k) is not None}
    if chk:
        o["check"] = chk
    sim = {k: getattr(a, k) for k in ("rollouts", "horizon") if getattr(a, k) is not None}
    if a.beyond_X:
        sim["beyond_X"] = True
    if sim:
        o["simulate"] = sim
    if a.no_figures:
        o["figures"] = False
    return o


def _deep_update(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _deep_update(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _load_cert(path: str) -> Certificate:
    if path.startswith("table:"):
        return load_table(int(path.split(":", 1)[1]))
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CertificateError(f"cannot read certificate {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CertificateError(f"{path}: not valid JSON ({exc})") from exc
    if is_table_document(doc):
        return certificate_from_document(doc)
    return Certificate.from_json(doc)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="c3cert", description="Control closure certificate synthesis and checking")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in [("synth", "synthesize a certificate with degree escalation"),
                      ("parity", "run the parity loop on the product with an automaton"),
                      ("check", "sample-check a certificate file"),
                      ("simulate", "closed-loop rollouts under the certificate's controller"),
                      ("export-sdpa", "write the configured SDP in SDPA sparse format")]:
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        if name in ("check", "simulate"):
            p.add_argument("--cert", required=True, help="certificate JSON, a table fixture file, or table:N")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    over = _overrides(args)
    if args.command == "parity":
        # built-in defaults only when no config file supplies its own setup
        over = _deep_update(PARITY_DEFAULTS, over) if args.config is None else dict(over, mode="parity")
    try:
        cfg = load_config(args.config, over)
        cert = _load_cert(args.cert) if args.command in ("check", "simulate") else None
    except (ConfigError, CertificateError, FixtureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["output"])
    if args.command in ("synth", "parity"):
        res = run_synth(cfg, out)
        for a in res.attempts:
            print(f"{a.tag:16s} deg {a.deg_T}/{a.deg_V}  {a.status:18s} check={a.check}  {a.seconds:.1f}s")
        if res.report is not None:
            print(res.report.summary_table())
        print(f"exit {res.exit_code}; artifacts in {out}")
        return res.exit_code
    if args.command == "check":
        try:
            report = run_check(cfg, cert, out)
        except (CertificateError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(report.summary_table())
        return report.exit_code
    if args.command == "simulate":
        try:
            res = run_simulate(cfg, cert, out)
        except (CertificateError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(res["summary"], indent=1))
        return 0
    info = run_export_sdpa(cfg, out)
    print(json.dumps(info["sdp"]))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
