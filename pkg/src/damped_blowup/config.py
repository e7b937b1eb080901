"""Plain-text experiment configuration.

A document is a list of ``key = value`` lines, optionally grouped under
``[run name]`` headers. Keys before the first header apply to every run (and
define an implicit run called ``run`` when no header follows). ``#`` starts a
comment. Comma-separated values of ``n``, ``p`` and ``eps`` expand into a
sweep, one run per combination::

    kind = simulate
    t_end = 200

    [sweep]
    n = 3
    p = 1.5, 2.0, 2.3
    eps = 0.5, 1, 2
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

from .ode import OdeBlowupSpec, Variant
from .radial import Dimension, RadialProblem, quartic_bump, strauss_exponent, zero_profile
from .solver import SolverConfig

KINDS = ("simulate", "ode", "ode-scan", "ode-threshold", "testfn", "estimates")
SWEEPABLE = ("n", "p", "eps")
LISTS = ("a_values", "q_values", "p_values")


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and line."""


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(s):
    f = float(s)
    if f != int(f):
        raise ValueError("not an integer")
    return int(f)


def _float_or_strauss(s):
    # p may be given as "strauss" to use the critical exponent of the run's dimension
    return s.strip() if s.strip().startswith("strauss") else _float(s)


def _floats(s):
    return tuple(_float(x) for x in s.split(","))


KEYS = {
    "kind": (str, "simulate"),
    # geometry and data
    "n": (_int, 3), "r0": (_float, None), "p": (_float_or_strauss, 2.0), "eps": (_float, 1.0),
    "R": (_float, 3.0), "profile": (str, "bump"),
    # solver
    "h": (_float, 2e-3), "dt": (_float, None), "cfl_safety": (_float, 1.0), "t_end": (_float, 200.0),
    "output_interval": (_float, 0.05), "blowup_threshold": (_float, 1e6), "dt_min": (_float, 1e-9),
    "growth_limit": (_float, 1.05), "tail_margin": (_float, 12.0), "fit_window": (_int, 8),
    # diagnostics windows, as fractions of the last trace time
    "identity_window": (_float, 0.9), "growth_window": (_float, 0.5),
    # ode
    "a": (_float, 2.0), "q": (_float, 3.0), "k": (_float, 1.0), "delta": (_float, 1.0),
    "variant": (str, "plain"), "K0": (_float, None), "K1": (_float, None), "T0": (_float, None),
    "f0": (_float, None), "f0prime": (_float, None), "horizon": (_float, 1e6),
    "a_values": (_floats, (1.0, 1.5, 2.0, 2.5, 3.0)), "q_values": (_floats, (0.0, 0.5, 1.0, 1.5, 2.0)),
    "p_values": (_floats, (1.5, 2.0, 2.5, 3.0, 4.0)),
    "k0_min": (_float, 1e-2), "k0_max": (_float, 1e4), "k0_count": (_int, 25),
    # test functions and estimates
    "rmax": (_float, 10.0), "t_min": (_float, 10.0), "t_max": (_float, 100.0), "count": (_int, 12),
    "log_correction": (_float, None),
}


_GEOMETRY = ("n", "r0", "p", "eps", "R")
_ODE = ("p", "a", "q", "k", "delta", "R", "variant", "horizon")
KIND_KEYS = {
    "simulate": _GEOMETRY + ("profile", "h", "dt", "cfl_safety", "t_end", "output_interval", "blowup_threshold",
                             "dt_min", "growth_limit", "tail_margin", "fit_window", "identity_window",
                             "growth_window"),
    "ode": _ODE + ("K0", "K1", "T0", "f0", "f0prime"),
    "ode-scan": ("a_values", "q_values", "p_values", "k", "delta", "R", "variant", "horizon"),
    "ode-threshold": ("p", "a", "q", "R", "K1", "T0", "k0_min", "k0_max", "k0_count", "horizon"),
    "testfn": ("n", "r0", "h", "rmax"),
    "estimates": ("n", "r0", "p", "R", "h", "t_min", "t_max", "count", "log_correction"),
}


@dataclass(frozen=True)
class RunSpec:
    name: str
    kind: str
    params: dict
    line: int

    @property
    def resolved(self) -> dict:
        """Every parameter the run uses, defaults filled in, as JSON-friendly values."""
        keys = sorted(KIND_KEYS[self.kind])
        return {"name": self.name, "kind": self.kind, **{k: _jsonable(self.params[k]) for k in keys}}

    def problem(self) -> RadialProblem:
        p = self.params
        profile = p["profile"]
        if profile == "bump":
            r0 = p["r0"]
            c, w = 0.5 * (r0 + p["R"]), 0.5 * (p["R"] - r0)
            u0 = u1 = quartic_bump(c, w)
        elif profile == "zero":
            u0 = u1 = zero_profile
        else:
            raise ValueError(f"unknown profile {profile!r}")
        return RadialProblem(Dimension(p["n"], p["r0"]), p["p"], p["eps"], u0, u1, p["R"], name=self.name)

    def solver_config(self) -> SolverConfig:
        p = self.params
        return SolverConfig(h=p["h"], dt=p["dt"], cfl_safety=p["cfl_safety"], output_interval=p["output_interval"],
                            blowup_threshold=p["blowup_threshold"], dt_min=p["dt_min"],
                            growth_limit=p["growth_limit"], tail_margin=p["tail_margin"],
                            fit_window=p["fit_window"])

    def ode_spec(self) -> OdeBlowupSpec:
        p = self.params
        if self.kind == "ode-threshold":
            return OdeBlowupSpec(p=p["p"], a=p["a"], q=p["q"], R=p["R"], variant=Variant.LOG_CRITICAL,
                                 K0=p["k0_min"], K1=p["K1"], T0=p["T0"])
        return OdeBlowupSpec(p=p["p"], a=p["a"], q=p["q"], k=p["k"], delta=p["delta"], R=p["R"],
                             variant=Variant(p["variant"]), K0=p["K0"], K1=p["K1"], T0=p["T0"])


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


@dataclass
class ExperimentPlan:
    name: str
    runs: list = field(default_factory=list)
    output_dir: Path | None = None
    seedless: bool = True

    def __post_init__(self):
        names = [r.name for r in self.runs]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ConfigError(f"duplicate run name(s): {', '.join(sorted(dup))}")


def _split_lines(text):
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or not line[1:-1].strip():
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            yield lineno, section, None, None
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        yield lineno, section, key, value


def _convert(key, value, lineno):
    if key not in KEYS:
        raise ConfigError(f"line {lineno}: unknown key {key!r}")
    conv = KEYS[key][0]
    parts = [value] if key in LISTS or key not in SWEEPABLE else [v.strip() for v in value.split(",")]
    try:
        vals = tuple(conv(v) for v in parts)
    except ValueError:
        raise ConfigError(f"line {lineno}: key {key!r} has invalid value {value!r}") from None
    return vals if key in SWEEPABLE else vals[0]


def _resolve(name, raw, lines, section_line):
    params = {k: default for k, (_, default) in KEYS.items()}
    params.update(raw)
    kind = params["kind"]
    if kind not in KINDS:
        raise ConfigError(f"line {lines.get('kind', section_line)}: key 'kind' must be one of {', '.join(KINDS)}")
    sweep = {k: params[k] if isinstance(params[k], tuple) else (params[k],) for k in SWEEPABLE}
    combos = list(itertools.product(*(sweep[k] for k in SWEEPABLE)))
    runs = []
    for n, p, eps in combos:
        run_params = dict(params, n=n, p=p, eps=eps)
        if isinstance(p, str):
            if p != "strauss":
                raise ConfigError(f"line {lines.get('p', section_line)}: key 'p' has invalid value {p!r}")
            run_params["p"] = strauss_exponent(n)
        if run_params["r0"] is None:
            run_params["r0"] = 0.0 if n == 1 else 1.0
        label = name
        if len(combos) > 1:
            label = f"{name}-n{n}-p{_tag(run_params['p'])}-eps{_tag(eps)}"
        spec = RunSpec(label, kind, run_params, section_line)
        _validate(spec, lines, section_line)
        runs.append(spec)
    return runs


def _tag(x):
    return f"{x:g}" if isinstance(x, float) else str(x)


def _validate(spec, lines, section_line):
    p = spec.params

    def fail(key, msg):
        raise ConfigError(f"line {lines.get(key, section_line)}: key {key!r}: {msg}")

    if not p["p"] > 1:
        fail("p", "p must exceed 1")
    if p["n"] < 1:
        fail("n", "n must be a positive integer")
    try:
        if spec.kind == "simulate":
            spec.problem()
            cfg = spec.solver_config()
            if not p["t_end"] > 0:
                fail("t_end", "t_end must be positive")
            if not 0 < p["identity_window"] <= 1 or not 0 <= p["growth_window"] < 1:
                fail("identity_window", "window fractions must lie in (0, 1]")
            del cfg
        elif spec.kind in ("ode", "ode-threshold"):
            spec.ode_spec()
        elif spec.kind in ("testfn", "estimates"):
            Dimension(p["n"], p["r0"])
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in KEYS if k in lines and msg.startswith(k + " ")), None)
        raise ConfigError(f"line {lines.get(key, section_line)}: run {spec.name!r}: {msg}") from None


def parse_config(text: str, name: str = "plan") -> ExperimentPlan:
    """Parse a configuration document into a validated plan."""
    shared, shared_lines = {}, {}
    sections = []  # (name, header line, raw, lines)
    for lineno, section, key, value in _split_lines(text):
        if key is None:
            sections.append((section, lineno, {}, {}))
            continue
        raw, lines = (shared, shared_lines) if section is None else sections[-1][2:]
        if key in raw:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        raw[key] = _convert(key, value, lineno)
        lines[key] = lineno
    if not sections:
        if not shared:
            return ExperimentPlan(name)
        sections = [("run", 1, {}, {})]
    headers = [s[0] for s in sections]
    dup = sorted({h for h in headers if headers.count(h) > 1})
    if dup:
        raise ConfigError(f"duplicate run name(s): {', '.join(dup)}")
    runs = []
    for sec_name, header_line, raw, lines in sections:
        merged = dict(shared, **raw)
        merged_lines = dict(shared_lines, **lines)
        runs.extend(_resolve(sec_name, merged, merged_lines, header_line))
    return ExperimentPlan(name, runs)


def load_config(path) -> ExperimentPlan:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not UTF-8 text") from None
    return parse_config(text, name=path.stem)
