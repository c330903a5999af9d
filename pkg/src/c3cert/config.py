"""Run configuration: one JSON document, validated before any work starts."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .certgen import MODES, Constants, ProgramError
from .omega import DPA, DPAError, fig5_dpa, parse_dpa
from .polyalg import PolynomialError, parse
from .semialg import SemiAlgebraicSet
from .sysmodel import HOPF_FORMS, ControlSystem, LabelingMap, make_chain_system, make_hopf

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "resolve", "load_config", "BUILTIN_SYSTEMS"]

BUILTIN_SYSTEMS = ("hopf", "hopf_dpa", "chain")
RUN_MODES = MODES + ("parity",)


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "system": "hopf",
    "hopf_form": "normal",
    "sets": {},
    "automaton": None,
    "mode": "fin_inf",
    "degrees": {"T": 3, "V": None, "max": 4, "escalate": True},
    "constants": {"mu": 0.5, "tau": 1.0, "xi": 0.1, "M": 1000.0},
    "j_max": 0,
    "share_counters": True,
    "input_grid": 8,
    "input_form": "eq18",
    "verify_input": None,
    "solver": {"tol_feas": 1e-11, "tol_gap": 1e-8, "max_iter": 200, "time_limit": 600.0,
               "sparsity": "chordal", "max_svec": 400000},
    "check": {"samples": 10000, "seed": 0, "eps": 1e-6, "delta_ant": 1e-6, "existence_grid": None},
    "simulate": {"rollouts": 100, "horizon": 500, "tail_fraction": 0.5, "gap_bound": 5, "seed": 1,
                 "delta": 1e-6, "csv_limit": 10, "beyond_X": False},
    "chain": {"length": 60, "growth": 1},
    "figures": True,
    "output": "c3cert-out",
}

_SECTIONS = {k for k, v in DEFAULTS.items() if isinstance(v, dict) and k != "sets"}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if k in _SECTIONS and path == "":
            if not isinstance(v, dict):
                raise ConfigError(f"config key {k!r} must be an object")
            out[k] = _merge(base[k], v, k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(d: dict, key: str, where: str, integer: bool = False, allow_none: bool = False):
    v = d.get(key)
    if v is None and allow_none:
        return
    if integer and (not isinstance(v, int) or isinstance(v, bool)):
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
        raise ConfigError(f"{where}.{key} must be > 0, got {v!r}")


def _set_from(doc, variables, name: str) -> SemiAlgebraicSet:
    """``{"box": [[lo, hi], ...]}`` or ``{"ineqs": [...], "bbox": [...]}``."""
    if not isinstance(doc, dict):
        raise ConfigError(f"set {name!r} must be an object with 'box' or 'ineqs'")
    try:
        if "box" in doc:
            return SemiAlgebraicSet.box(variables, doc["box"], name=name)
        if "ineqs" in doc:
            return SemiAlgebraicSet.from_strings(variables, doc["ineqs"], doc.get("bbox"), name=name)
    except (ValueError, PolynomialError, TypeError) as exc:
        raise ConfigError(f"set {name!r}: {exc}") from exc
    raise ConfigError(f"set {name!r} needs 'box' or 'ineqs'")


@dataclass
class RunConfig:
    raw: dict  # resolved document, defaults materialized
    system: ControlSystem
    sets: dict
    dpa: DPA | None
    labeling: LabelingMap | None
    constants: Constants

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    def __getitem__(self, key):
        return self.raw[key]

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=1, sort_keys=True)


def _build_system(raw: dict) -> tuple[ControlSystem, dict]:
    s = raw["system"]
    if isinstance(s, str):
        if s not in BUILTIN_SYSTEMS:
            raise ConfigError(f"unknown system {s!r}; built-ins are {BUILTIN_SYSTEMS}")
        if s == "chain":
            return make_chain_system(raw["chain"]["growth"]), {}
        if raw["hopf_form"] not in HOPF_FORMS:
            raise ConfigError(f"hopf_form must be one of {HOPF_FORMS}")
        return make_hopf(s, raw["hopf_form"])
    if not isinstance(s, dict):
        raise ConfigError("system must be a built-in name or an inline definition")
    try:
        sv = tuple(s["state_vars"])
        iv = tuple(s.get("input_vars", ["u1"]))
        f = tuple(parse(e) for e in s["f"])
        X = _set_from(s["X"], sv, "X")
        X0 = _set_from(s["X0"], sv, "X0")
        U = _set_from(s["U"], iv, "U")
        return ControlSystem(s.get("name", "inline"), sv, iv, X, X0, U, f), {}
    except KeyError as exc:
        raise ConfigError(f"inline system lacks field {exc}") from exc
    except (PolynomialError, ValueError) as exc:
        raise ConfigError(f"inline system: {exc}") from exc


def resolve(doc: dict, overrides: dict | None = None, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    raw = _merge(DEFAULTS, doc)
    if overrides:
        raw = _merge(raw, {k: v for k, v in overrides.items() if v is not None})
    if raw["mode"] not in RUN_MODES:
        raise ConfigError(f"mode must be one of {RUN_MODES}, got {raw['mode']!r}")
    deg = raw["degrees"]
    _positive(deg, "T", "degrees", integer=True)
    _positive(deg, "V", "degrees", integer=True, allow_none=True)
    _positive(deg, "max", "degrees", integer=True)
    if deg["max"] < deg["T"]:
        raise ConfigError("degrees.max must be >= degrees.T")
    c = raw["constants"]
    for k in ("mu", "tau", "M"):
        _positive(c, k, "constants")
    xis = c["xi"] if isinstance(c["xi"], list) else [c["xi"]]
    for x in xis:
        if not isinstance(x, (int, float)) or not x > 0:
            raise ConfigError(f"constants.xi must be > 0, got {c['xi']!r}")
    if not isinstance(raw["j_max"], int) or raw["j_max"] < 0:
        raise ConfigError("j_max must be a non-negative integer")
    _positive(raw, "input_grid", "", integer=True)
    if raw["input_form"] not in ("eq18", "sum"):
        raise ConfigError("input_form must be 'eq18' or 'sum'")
    for k in ("samples",):
        _positive(raw["check"], k, "check", integer=True)
    for k in ("eps", "delta_ant"):
        _positive(raw["check"], k, "check")
    sim = raw["simulate"]
    for k in ("rollouts", "horizon", "gap_bound"):
        _positive(sim, k, "simulate", integer=True)
    if not 0 < sim["tail_fraction"] < 1:
        raise ConfigError("simulate.tail_fraction must lie in (0, 1)")
    if not isinstance(sim["beyond_X"], bool):
        raise ConfigError("simulate.beyond_X must be true or false")
    sol = raw["solver"]
    for k in ("tol_feas", "tol_gap", "max_iter", "time_limit", "max_svec"):
        _positive(sol, k, "solver")
    if sol["sparsity"] not in ("dense", "chordal"):
        raise ConfigError("solver.sparsity must be 'dense' or 'chordal'")
    _positive(raw["chain"], "length", "chain", integer=True)

    system, sets = _build_system(raw)
    for name, sdoc in raw["sets"].items():
        if name not in ("X_VF", "X_INF"):
            raise ConfigError(f"unknown set {name!r}; expected X_VF or X_INF")
        sets[name] = _set_from(sdoc, system.state_vars, name)

    dpa = None
    a = raw["automaton"]
    if a is not None:
        try:
            if a == "fig5":
                dpa = fig5_dpa()
            else:
                p = Path(a)
                if not p.is_absolute() and base_dir is not None:
                    p = base_dir / p
                dpa = parse_dpa(p.read_text())
        except (OSError, DPAError) as exc:
            raise ConfigError(f"automaton {a!r}: {exc}") from exc
    labeling = sets.get("labeling")
    if raw["mode"] == "parity":
        if dpa is None:
            raise ConfigError("parity mode needs an automaton")
        if labeling is None:
            raise ConfigError(f"system {raw['system']!r} has no labeling for the automaton")
    if system.step_fn is not None and raw["mode"] != "recurrence":
        raise ConfigError("the chain system is simulation-only; only recurrence mode applies")
    if raw["mode"] in ("finite", "fin_inf") and "X_VF" not in sets and raw["mode"] != "parity":
        raise ConfigError(f"mode {raw['mode']} needs an X_VF set")
    if raw["mode"] in ("counter", "fin_inf") and "X_INF" not in sets:
        raise ConfigError(f"mode {raw['mode']} needs an X_INF set")
    if raw["mode"] == "verify-only" and raw["verify_input"] is None:
        raise ConfigError("verify-only mode needs verify_input")
    try:
        constants = Constants(c["mu"], c["tau"], tuple(xis) if len(xis) > 1 else float(xis[0]), c["M"])
    except ProgramError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(raw, system, sets, dpa, labeling, constants)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    if path is None:
        return resolve({}, overrides)
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    return resolve(doc, overrides, p.parent)
