"""YAML run configuration: loading, dotted overrides, full validation.

Validation never stops at the first problem; it returns the complete list of
(field, reason) pairs so a bad config can be fixed in one pass. Unknown keys
are rejected at every mapping level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import yaml

from .bar import BarParams, InitialLaw, NoiseSpec
from .bounds import BoundConstants
from .offspring import SQRT2, OffspringLaw
from .stats import SetKind

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "apply_overrides",
    "validate_config",
]

COMMANDS = ("simulate", "estimate", "deviation", "chain", "bounds", "report")
MODES = ("tilde", "conditional", "theta", "gw_lln")
SETS = {"generation": SetKind.GENERATION, "tree": SetKind.TREE}
FORMS = ("centered", "uncentered", "conditional", "theta")

_TOP_KEYS = {"command", "seed", "output", "model", "experiment", "constants", "report"}
_MODEL_KEYS = {"law", "params", "noise", "init"}
_LAW_KEYS = {"p_both", "p_new", "p_old"}
_PARAM_KEYS = {"alpha0", "beta0", "alpha1", "beta1",
               "alpha0p", "beta0p", "alpha1p", "beta1p"}
_NOISE_KEYS = {"sigma", "rho", "sigma0", "sigma1", "trunc_k", "kind", "noiseless"}
_INIT_KEYS = {"kind", "value", "low", "high"}
_F_KEYS = {"kind", "scale", "shift", "subtract_mu"}
_MU_KEYS = {"burn_in", "length", "n_chains"}
_CONSTANT_KEYS = {"c", "c_prime", "c_double_prime", "c0", "k0",
                  "c1", "c2", "c3", "p", "q", "a", "b", "gamma"}
_REPORT_KEYS = {"input"}

_EXPERIMENT_KEYS = {
    "simulate": {"max_depth"},
    "estimate": {"n", "max_depth"},
    "deviation": {"mode", "set", "f", "deltas", "r_grid", "n_rep",
                  "centered", "a", "w_depth", "mu"},
    "chain": {"f", "x_grid", "k_max", "n_rep", "mu"},
    "bounds": {"set", "deltas", "r_grid", "forms"},
    "report": set(),
}


@dataclass(frozen=True)
class ConfigError:
    field: str
    reason: str

    def as_dict(self) -> dict:
        return {"field": self.field, "reason": self.reason}


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    output: str | None
    law: OffspringLaw | None
    params: BarParams | None
    noise: NoiseSpec | None
    init: InitialLaw | None
    experiment: dict
    constants: BoundConstants
    report_input: str | None
    raw: dict


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError("config root must be a mapping")
    return raw


def apply_overrides(cfg: dict, sets: list[str]) -> dict:
    """Apply ``dotted.path=value`` overrides; values parse as YAML scalars."""
    for item in sets:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form path=value")
        path, _, text = item.partition("=")
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ValueError(f"override {item!r} has an empty path")
        value = yaml.safe_load(text) if text.strip() else None
        node = cfg
        for k in keys[:-1]:
            nxt = node.get(k)
            if not isinstance(nxt, dict):
                nxt = {}
                node[k] = nxt
            node = nxt
        node[keys[-1]] = value
    return cfg


class _Checker:
    def __init__(self) -> None:
        self.errors: list[ConfigError] = []

    def err(self, field: str, reason: str) -> None:
        self.errors.append(ConfigError(field, reason))

    def unknown(self, mapping: dict, known: set[str], where: str) -> None:
        for key in mapping:
            if key not in known:
                self.err(f"{where}.{key}" if where else str(key), "unknown key")

    def mapping(self, parent: dict, key: str, where: str, required: bool) -> dict | None:
        val = parent.get(key)
        if val is None:
            if required:
                self.err(f"{where}.{key}" if where else key, "required section missing")
            return None
        if not isinstance(val, dict):
            self.err(f"{where}.{key}" if where else key, "must be a mapping")
            return None
        return val

    def num(self, mapping: dict, key: str, where: str, *, required: bool = False,
            default: float | None = None, lo: float | None = None,
            hi: float | None = None, integer: bool = False) -> Any:
        field = f"{where}.{key}" if where else key
        if key not in mapping or mapping[key] is None:
            if required:
                self.err(field, "required value missing")
                return None
            return default
        val = mapping[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.err(field, "must be a number")
            return None
        if integer:
            if float(val) != int(val):
                self.err(field, "must be an integer")
                return None
            val = int(val)
        else:
            val = float(val)
        if not math.isfinite(val):
            self.err(field, "must be finite")
            return None
        if lo is not None and val < lo:
            self.err(field, f"must be >= {lo}")
            return None
        if hi is not None and val > hi:
            self.err(field, f"must be <= {hi}")
            return None
        return val

    def flag(self, mapping: dict, key: str, where: str, default: bool) -> bool:
        field = f"{where}.{key}" if where else key
        if key not in mapping or mapping[key] is None:
            return default
        val = mapping[key]
        if not isinstance(val, bool):
            self.err(field, "must be true or false")
            return default
        return val

    def choice(self, mapping: dict, key: str, where: str, options, *,
               required: bool = False, default: str | None = None) -> str | None:
        field = f"{where}.{key}" if where else key
        if key not in mapping or mapping[key] is None:
            if required:
                self.err(field, "required value missing")
                return None
            return default
        val = mapping[key]
        if not isinstance(val, str) or val not in options:
            self.err(field, f"must be one of {sorted(options)}")
            return None
        return val

    def num_list(self, mapping: dict, key: str, where: str, *, required: bool = False,
                 lo: float | None = None, integer: bool = False,
                 nonempty: bool = True) -> tuple | None:
        field = f"{where}.{key}" if where else key
        if key not in mapping or mapping[key] is None:
            if required:
                self.err(field, "required value missing")
            return None
        val = mapping[key]
        if not isinstance(val, (list, tuple)):
            self.err(field, "must be a list")
            return None
        out = []
        for i, item in enumerate(val):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                self.err(f"{field}[{i}]", "must be a number")
                return None
            if integer and float(item) != int(item):
                self.err(f"{field}[{i}]", "must be an integer")
                return None
            item = int(item) if integer else float(item)
            if lo is not None and item < lo:
                self.err(f"{field}[{i}]", f"must be >= {lo}")
                return None
            out.append(item)
        if nonempty and not out:
            self.err(field, "must be non-empty")
            return None
        return tuple(out)


def _build_law(ck: _Checker, section: dict) -> OffspringLaw | None:
    ck.unknown(section, _LAW_KEYS, "model.law")
    pb = ck.num(section, "p_both", "model.law", required=True, lo=0.0, hi=1.0)
    pn = ck.num(section, "p_new", "model.law", required=True, lo=0.0, hi=1.0)
    po = ck.num(section, "p_old", "model.law", required=True, lo=0.0, hi=1.0)
    if None in (pb, pn, po):
        return None
    try:
        return OffspringLaw(pb, pn, po)
    except ValueError as exc:
        ck.err("model.law", str(exc))
        return None


def _build_params(ck: _Checker, section: dict) -> BarParams | None:
    ck.unknown(section, _PARAM_KEYS, "model.params")
    vals = {}
    for key in ("alpha0", "beta0", "alpha1", "beta1",
                "alpha0p", "beta0p", "alpha1p", "beta1p"):
        vals[key] = ck.num(section, key, "model.params", required=True)
    if any(v is None for v in vals.values()):
        return None
    try:
        return BarParams(**vals)
    except ValueError as exc:
        ck.err("model.params", str(exc))
        return None


def _build_noise(ck: _Checker, section: dict) -> NoiseSpec | None:
    ck.unknown(section, _NOISE_KEYS, "model.noise")
    sigma = ck.num(section, "sigma", "model.noise", required=True, lo=0.0)
    rho = ck.num(section, "rho", "model.noise", default=0.0, lo=-1.0, hi=1.0)
    sigma0 = ck.num(section, "sigma0", "model.noise", required=True, lo=0.0)
    sigma1 = ck.num(section, "sigma1", "model.noise", required=True, lo=0.0)
    trunc_k = ck.num(section, "trunc_k", "model.noise", default=4.0, lo=0.0)
    kind = ck.choice(section, "kind", "model.noise", ("gaussian", "two_point"),
                     default="gaussian")
    noiseless = ck.flag(section, "noiseless", "model.noise", False)
    if None in (sigma, rho, sigma0, sigma1, trunc_k, kind):
        return None
    try:
        return NoiseSpec(sigma=sigma, rho=rho, sigma0=sigma0, sigma1=sigma1,
                         trunc_k=trunc_k, kind=kind, noiseless=noiseless)
    except ValueError as exc:
        ck.err("model.noise", str(exc))
        return None


def _build_init(ck: _Checker, section: dict) -> InitialLaw | None:
    ck.unknown(section, _INIT_KEYS, "model.init")
    kind = ck.choice(section, "kind", "model.init", ("point", "uniform"),
                     default="point")
    if kind == "uniform":
        low = ck.num(section, "low", "model.init", required=True)
        high = ck.num(section, "high", "model.init", required=True)
        if None in (low, high):
            return None
        try:
            return InitialLaw("uniform", low=low, high=high)
        except ValueError as exc:
            ck.err("model.init", str(exc))
            return None
    value = ck.num(section, "value", "model.init", default=0.0)
    if kind is None or value is None:
        return None
    return InitialLaw("point", value=value)


def _build_f(ck: _Checker, parent: dict, where: str, required: bool) -> dict | None:
    section = ck.mapping(parent, "f", where, required)
    if section is None:
        return None
    ck.unknown(section, _F_KEYS, f"{where}.f")
    kind = ck.choice(section, "kind", f"{where}.f",
                     ("identity", "square", "affine"), default="identity")
    scale = ck.num(section, "scale", f"{where}.f", default=1.0)
    shift = ck.num(section, "shift", f"{where}.f", default=0.0)
    subtract_mu = ck.flag(section, "subtract_mu", f"{where}.f", False)
    if None in (kind, scale, shift):
        return None
    return {"kind": kind, "scale": scale, "shift": shift, "subtract_mu": subtract_mu}


def _build_mu(ck: _Checker, parent: dict, where: str) -> dict:
    section = parent.get("mu")
    out = {"burn_in": 1000, "length": 1_000_000, "n_chains": 100}
    if section is None:
        return out
    if not isinstance(section, dict):
        ck.err(f"{where}.mu", "must be a mapping")
        return out
    ck.unknown(section, _MU_KEYS, f"{where}.mu")
    for key in _MU_KEYS:
        val = ck.num(section, key, f"{where}.mu", default=out[key], lo=1, integer=True)
        if val is not None:
            out[key] = val
    return out


def _build_constants(ck: _Checker, section: dict | None) -> BoundConstants:
    if section is None:
        return BoundConstants()
    ck.unknown(section, _CONSTANT_KEYS, "constants")
    kwargs = {}
    for key in _CONSTANT_KEYS:
        if key in section and section[key] is not None:
            val = ck.num(section, key, "constants")
            if val is not None:
                kwargs[key] = int(val) if key == "k0" else val
    try:
        return BoundConstants(**kwargs)
    except ValueError as exc:
        ck.err("constants", str(exc))
        return BoundConstants()


def _require_h2(ck: _Checker, law: OffspringLaw | None, field: str) -> None:
    if law is not None and not law.is_strong:
        ck.err(field, f"(H2) violated: law mean m = {law.mean} must exceed "
                      f"sqrt(2) = {SQRT2}")


def _require_h3(ck: _Checker, law: OffspringLaw | None, field: str) -> None:
    if law is not None and not law.is_h3:
        ck.err(field, "cell survival probabilities must sum to 1 (no extinction)")


def validate_config(raw: dict, command: str | None = None
                    ) -> tuple[RunConfig | None, list[ConfigError]]:
    """Check a raw config mapping; return (typed config, errors).

    The typed config is None whenever errors is non-empty.
    """
    ck = _Checker()
    if not isinstance(raw, dict):
        return None, [ConfigError("", "config root must be a mapping")]
    ck.unknown(raw, _TOP_KEYS, "")

    declared = raw.get("command")
    if declared is not None and declared not in COMMANDS:
        ck.err("command", f"must be one of {list(COMMANDS)}")
        declared = None
    cmd = command or declared
    if cmd is None:
        ck.err("command", "no command given on the command line or in the config")
        return None, ck.errors
    if declared is not None and command is not None and declared != command:
        ck.err("command", f"config declares {declared!r} but {command!r} was invoked")

    seed = ck.num(raw, "seed", "", default=0, lo=0, integer=True)
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        ck.err("output", "must be a path string")
        output = None

    law = params = noise = init = None
    needs_model = cmd != "report"
    model = ck.mapping(raw, "model", "", required=needs_model)
    if model is not None:
        ck.unknown(model, _MODEL_KEYS, "model")
        law_sec = ck.mapping(model, "law", "model", required=True)
        par_sec = ck.mapping(model, "params", "model", required=True)
        noi_sec = ck.mapping(model, "noise", "model", required=True)
        ini_sec = ck.mapping(model, "init", "model", required=False)
        law = _build_law(ck, law_sec) if law_sec is not None else None
        params = _build_params(ck, par_sec) if par_sec is not None else None
        noise = _build_noise(ck, noi_sec) if noi_sec is not None else None
        init = _build_init(ck, ini_sec) if ini_sec is not None else InitialLaw("point", value=0.0)

    constants = _build_constants(ck, ck.mapping(raw, "constants", "", required=False))

    report_input = None
    rep_sec = ck.mapping(raw, "report", "", required=(cmd == "report"))
    if rep_sec is not None:
        ck.unknown(rep_sec, _REPORT_KEYS, "report")
        report_input = rep_sec.get("input")
        if cmd == "report" and not isinstance(report_input, str):
            ck.err("report.input", "required path string missing")
            report_input = None

    exp_needed = cmd not in ("report",)
    exp = ck.mapping(raw, "experiment", "", required=exp_needed)
    experiment: dict = {}
    if exp is not None and cmd in _EXPERIMENT_KEYS:
        ck.unknown(exp, _EXPERIMENT_KEYS[cmd], "experiment")

    if cmd == "simulate" and exp is not None:
        experiment["max_depth"] = ck.num(exp, "max_depth", "experiment",
                                         required=True, lo=0, integer=True)
        if law is not None and law.mean <= 1.0:
            ck.err("model.law", "simulation requires a supercritical law (m > 1)")

    elif cmd == "estimate" and exp is not None:
        n = ck.num(exp, "n", "experiment", required=True, lo=0, integer=True)
        experiment["n"] = n
        md = ck.num(exp, "max_depth", "experiment", integer=True, lo=1)
        if n is not None:
            if md is None:
                md = n + 1
            elif md < n + 1:
                ck.err("experiment.max_depth", "must be at least n + 1")
        experiment["max_depth"] = md
        if law is not None and law.mean <= 1.0:
            ck.err("model.law", "estimation requires a supercritical law (m > 1)")

    elif cmd == "deviation" and exp is not None:
        mode = ck.choice(exp, "mode", "experiment", MODES, required=True)
        experiment["mode"] = mode
        set_name = ck.choice(exp, "set", "experiment", tuple(SETS), default="generation")
        experiment["set"] = set_name
        experiment["deltas"] = ck.num_list(exp, "deltas", "experiment",
                                           required=True, lo=1e-12)
        experiment["r_grid"] = ck.num_list(exp, "r_grid", "experiment",
                                           required=True, lo=0, integer=True)
        experiment["n_rep"] = ck.num(exp, "n_rep", "experiment",
                                     required=True, lo=1, integer=True)
        experiment["centered"] = ck.flag(exp, "centered", "experiment", False)
        experiment["a"] = ck.num(exp, "a", "experiment", default=1.0, lo=1e-12)
        experiment["w_depth"] = ck.num(exp, "w_depth", "experiment", lo=0, integer=True)
        experiment["mu"] = _build_mu(ck, exp, "experiment")
        if mode in ("tilde", "conditional"):
            experiment["f"] = _build_f(ck, exp, "experiment", required=True)
        elif "f" in exp and exp["f"] is not None:
            ck.err("experiment.f", f"mode {mode} takes no statistic function")
        _require_h2(ck, law, "model.law")
        if mode in ("conditional", "theta"):
            _require_h3(ck, law, "model.law")
        grid = experiment["r_grid"]
        wd = experiment["w_depth"]
        if grid is not None and wd is not None:
            need = max(grid) + (1 if mode == "theta" else 0)
            if wd < need:
                ck.err("experiment.w_depth", "must reach the deepest statistic depth")

    elif cmd == "chain" and exp is not None:
        experiment["f"] = _build_f(ck, exp, "experiment", required=True)
        experiment["x_grid"] = ck.num_list(exp, "x_grid", "experiment", required=True)
        experiment["k_max"] = ck.num(exp, "k_max", "experiment",
                                     required=True, lo=1, integer=True)
        experiment["n_rep"] = ck.num(exp, "n_rep", "experiment",
                                     required=True, lo=1, integer=True)
        experiment["mu"] = _build_mu(ck, exp, "experiment")
        if law is not None and law.mean <= 1.0:
            ck.err("model.law", "the lineage chain requires a supercritical law (m > 1)")
        if experiment["f"] is not None and experiment["f"]["subtract_mu"]:
            ck.err("experiment.f.subtract_mu",
                   "chain gaps are measured against the long-run mean; "
                   "recentring is applied automatically")

    elif cmd == "bounds" and exp is not None:
        set_name = ck.choice(exp, "set", "experiment", tuple(SETS), default="generation")
        experiment["set"] = set_name
        experiment["deltas"] = ck.num_list(exp, "deltas", "experiment",
                                           required=True, lo=1e-12)
        experiment["r_grid"] = ck.num_list(exp, "r_grid", "experiment",
                                           required=True, lo=0, integer=True)
        forms = exp.get("forms")
        if forms is None:
            forms = ["centered"]
        if not isinstance(forms, list) or not forms or \
                any(f not in FORMS for f in forms):
            ck.err("experiment.forms", f"must be a non-empty list drawn from {list(FORMS)}")
            forms = []
        experiment["forms"] = tuple(forms)
        _require_h2(ck, law, "model.law")
        deltas = experiment["deltas"]
        if "conditional" in forms or "theta" in forms:
            _require_h3(ck, law, "model.law")
            if deltas is not None:
                for d in deltas:
                    if constants.b >= constants.a / (d + 1.0):
                        ck.err("constants.b",
                               f"conditional/theta forms need b < a/(delta+1); "
                               f"fails at delta = {d}")
                        break
        if "theta" in forms and deltas is not None:
            for d in deltas:
                cap = constants.c1 / (1.0 + max(d, math.sqrt(d)))
                if constants.gamma >= cap:
                    ck.err("constants.gamma",
                           f"theta form needs gamma < c1/(1+max(delta, sqrt(delta))); "
                           f"fails at delta = {d}")
                    break

    if ck.errors:
        return None, ck.errors
    return RunConfig(command=cmd, seed=seed, output=output, law=law, params=params,
                     noise=noise, init=init, experiment=experiment,
                     constants=constants, report_input=report_input, raw=raw), []
