"""Run configuration: an INI-style key/value file with section headers.

Arrays are comma-separated. Unknown sections or keys are rejected with the
offending line number. See ``docs/example.ini`` for the canonical example.

Defaults
--------
=========================  ==========================================
grid.n                     201 (d = 1), 51 per axis (d >= 2)
solver.init                FROM_OBSTACLE
solver.tol                 1e-8 (d = 1), 1e-6 (d >= 2)
solver.max_iters           20000000
solver.contact_tol         1e-5
simulate.M                 10000
simulate.dt                1e-3 / max_i k_i
simulate.t_max             50 / min_i k_i
simulate.seed              0
simulate.x0                0.5 in every coordinate
simulate.policy            FROM_SOLVER
simulate.episodes_csv      false
simulate.martingale_x0     0.25, 0.5, 0.75
simulate.martingale_t_max  1.0
verify.alpha               1, 10, 100, 1000
verify.eps                 0.1, 0.01, 0.001
verify.pair_budget         100000000
verify.doubling_n          101
verify.partner_cost_scale  2.0
verify.samples             100000
verify.theta_R             2.0
verify.monotone_pairs      100
verify.monotone_n          51
output.dir                 out
=========================  ==========================================
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, asdict

from .errors import ConfigError, ValidationError
from .model import ProblemSpec, make_spec
from .simulator import default_dt, default_t_max
from .solver import default_tol

__all__ = ["RunConfig", "SolverOptions", "SimOptions", "VerifyOptions", "load_config",
           "parse_config"]

_KEYS = {
    "problem": {"d", "pi_low", "pi_high", "pi0", "sigma", "c", "b"},
    "grid": {"n"},
    "solver": {"init", "tol", "max_iters", "contact_tol"},
    "simulate": {"M", "dt", "t_max", "seed", "x0", "policy", "episodes_csv",
                 "martingale_x0", "martingale_t_max"},
    "verify": {"alpha", "eps", "pair_budget", "doubling_n", "partner_cost_scale", "samples",
               "theta_R", "monotone_pairs", "monotone_n"},
    "output": {"dir"},
}
_REQUIRED = {"problem": {"pi_low", "pi_high", "pi0"}}


@dataclass
class SolverOptions:
    init: str
    tol: float
    max_iters: int
    contact_tol: float


@dataclass
class SimOptions:
    M: int
    dt: float
    t_max: float
    seed: int
    x0: list
    policy: str
    episodes_csv: bool
    martingale_x0: list
    martingale_t_max: float


@dataclass
class VerifyOptions:
    alpha: list
    eps: list
    pair_budget: int
    doubling_n: int
    partner_cost_scale: float
    samples: int
    theta_R: float
    monotone_pairs: int
    monotone_n: int


@dataclass
class RunConfig:
    spec: ProblemSpec
    n: list
    solver: SolverOptions
    simulate: SimOptions
    verify: VerifyOptions
    out_dir: str
    source: str | None = field(default=None, compare=False)

    def to_dict(self):
        d = asdict(self)
        d["spec"] = self.spec.to_dict()
        d.pop("source")
        return d


def _line_of(text, section, key=None):
    cur = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return lineno
            continue
        if key is not None and cur == section:
            k = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            if k == key:
                return lineno
    return None


def _floats(raw, name, line):
    try:
        return [float(t) for t in raw.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {raw!r}",
                          line=line, field=name) from None


def _one(conv, raw, name, line):
    try:
        return conv(raw.strip())
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}", line=line, field=name) from None


def _bool(raw):
    s = raw.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _int(raw):
    return int(float(raw)) if re.fullmatch(r"[0-9.eE+]+", raw) else int(raw)


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", line=getattr(exc, "lineno", None)) from None
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigError(f"unknown section [{sec}]", line=_line_of(text, sec), field=sec)
        for key in cp[sec]:
            if key not in _KEYS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]",
                                  line=_line_of(text, sec, key), field=key)
    for sec, keys in _REQUIRED.items():
        for key in keys:
            if not cp.has_option(sec, key):
                raise ConfigError(f"missing required key {key!r} in [{sec}]", field=key)

    def get(sec, key):
        return cp.get(sec, key) if cp.has_option(sec, key) else None

    def line(sec, key):
        return _line_of(text, sec, key)

    prob = {}
    for key in ("pi_low", "pi_high", "sigma", "c"):
        raw = get("problem", key)
        if raw is not None:
            prob[key] = _floats(raw, key, line("problem", key))
    for key in ("pi0", "b"):
        raw = get("problem", key)
        if raw is not None:
            prob[key] = _one(float, raw, key, line("problem", key))
    d_decl = get("problem", "d")
    try:
        spec = make_spec(prob["pi_low"], prob["pi_high"], prob["pi0"],
                         prob.get("sigma", 1.0), prob.get("c", 1.0), prob.get("b"))
    except ValidationError as exc:
        fld = {"SHIFT_TOO_SMALL": "b", "NONPOSITIVE_COST": "c", "NONPOSITIVE_NOISE": "sigma",
               "NONPOSITIVE_OUTSIDE_OPTION": "pi0", "PAYOFF_ORDER": "pi_low"}.get(exc.code, "problem")
        raise ConfigError(f"{fld}: {exc}", code="VALIDATION_ERROR", line=line("problem", fld),
                          field=fld, reason=exc.code) from None
    d = spec.d
    if d_decl is not None and _one(int, d_decl, "d", line("problem", "d")) != d:
        raise ConfigError(f"d={d_decl} disagrees with {d} payoff entries", code="VALIDATION_ERROR",
                          line=line("problem", "d"), field="d")

    raw = get("grid", "n")
    n = [201] * d if d == 1 else [51] * d
    if raw is not None:
        vals = [int(v) for v in _floats(raw, "n", line("grid", "n"))]
        n = vals * d if len(vals) == 1 else vals
        if len(n) != d or any(m < 3 for m in n):
            raise ConfigError(f"n: need {d} axis sizes >= 3", code="VALIDATION_ERROR",
                              line=line("grid", "n"), field="n")

    def opt(sec, key, conv, default, check=None):
        raw = get(sec, key)
        if raw is None:
            return default
        val = _one(conv, raw, key, line(sec, key))
        if check is not None and not check(val):
            raise ConfigError(f"{key}: invalid value {raw!r}", code="VALIDATION_ERROR",
                              line=line(sec, key), field=key)
        return val

    pos = lambda v: v > 0  # noqa: E731
    init = opt("solver", "init", str.upper, "FROM_OBSTACLE",
               lambda v: v in ("FROM_OBSTACLE", "FROM_UPPER"))
    solver = SolverOptions(
        init=init,
        tol=opt("solver", "tol", float, default_tol(d), pos),
        max_iters=opt("solver", "max_iters", _int, 20_000_000, pos),
        contact_tol=opt("solver", "contact_tol", float, 1e-5, pos),
    )

    def vec(sec, key, default, check=None):
        raw = get(sec, key)
        if raw is None:
            return default
        vals = _floats(raw, key, line(sec, key))
        if check is not None and not check(vals):
            raise ConfigError(f"{key}: invalid value {raw!r}", code="VALIDATION_ERROR",
                              line=line(sec, key), field=key)
        return vals

    inside = lambda v: len(v) > 0 and all(0 < t < 1 for t in v)  # noqa: E731
    x0 = vec("simulate", "x0", [0.5] * d, lambda v: len(v) in (1, d) and inside(v))
    if len(x0) == 1:
        x0 = x0 * d
    sim = SimOptions(
        M=opt("simulate", "M", _int, 10_000, lambda v: v >= 2),
        dt=opt("simulate", "dt", float, default_dt(spec), pos),
        t_max=opt("simulate", "t_max", float, default_t_max(spec), pos),
        seed=opt("simulate", "seed", _int, 0, lambda v: v >= 0),
        x0=x0,
        policy=opt("simulate", "policy", str.upper, "FROM_SOLVER",
                   lambda v: v in ("FROM_SOLVER", "STOP")),
        episodes_csv=opt("simulate", "episodes_csv", _bool, False),
        martingale_x0=vec("simulate", "martingale_x0", [0.25, 0.5, 0.75], inside),
        martingale_t_max=opt("simulate", "martingale_t_max", float, 1.0, pos),
    )
    ver = VerifyOptions(
        alpha=vec("verify", "alpha", [1.0, 10.0, 100.0, 1000.0], lambda v: all(a > 0 for a in v)),
        eps=vec("verify", "eps", [1e-1, 1e-2, 1e-3], lambda v: all(e > 0 for e in v)),
        pair_budget=opt("verify", "pair_budget", _int, 10**8, pos),
        doubling_n=opt("verify", "doubling_n", _int, 101, lambda v: v >= 3),
        partner_cost_scale=opt("verify", "partner_cost_scale", float, 2.0, pos),
        samples=opt("verify", "samples", _int, 100_000, pos),
        theta_R=opt("verify", "theta_R", float, 2.0),
        monotone_pairs=opt("verify", "monotone_pairs", _int, 100, pos),
        monotone_n=opt("verify", "monotone_n", _int, 51, lambda v: v >= 3),
    )
    out_dir = get("output", "dir") or "out"
    return RunConfig(spec, n, solver, sim, ver, out_dir.strip(), source)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", code="USAGE_ERROR") from None
    return parse_config(text, str(path))
