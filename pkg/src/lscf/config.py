"""Sectioned ``key = value`` run configuration with line/column diagnostics.

Example::

    [grid]
    d = 1
    L = 8
    eps = 0.02

    [solver]
    models = rehf, lsc   # comments start with '#'

Unknown sections or keys, malformed values and violated preconditions are
all collected before anything is raised, so one pass reports every problem.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .analysis import METRICS, SystemSpec, config_hash
from .density import MODELS
from .errors import LscfError
from .grid import SCHEMES


class ConfigError(LscfError, ValueError):
    """Base for configuration problems; ``issues`` lists every message."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("\n".join(self.issues))


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _words(text):
    return tuple(t.strip().lower() for t in text.split(",") if t.strip())


def _opt_float(text):
    return None if text.lower() in ("", "none") else float(text)


def _opt_int(text):
    return None if text.lower() in ("", "none") else int(text)


# section -> key -> (converter, default)
SCHEMA = {
    "grid": {"d": (int, None), "L": (int, None), "n": (_opt_int, None), "eps": (float, None)},
    "potential": {
        "seed": (int, 1), "v_min": (float, 1.0), "delta": (float, 0.1), "kappa0": (float, 1.0),
        "dopant_amplitude": (float, 0.0), "c_cut": (float, 1.0),
    },
    "thermo": {"tau": (_opt_float, None), "beta": (_opt_float, None), "K": (float, 0.3)},
    "solver": {
        "models": (_words, ("rehf", "pl", "lsc")), "scheme": (str, "spectral"), "tol": (float, 1e-8),
        "alpha": (float, 0.5), "newton": (_bool, False), "anderson_depth": (int, 5), "max_iter": (int, 200),
    },
    "sweep": {"eps_list": (_floats, (0.08, 0.06, 0.04, 0.03, 0.02)), "metrics": (_words, METRICS)},
    "output": {"directory": (str, "out"), "formats": (_words, ("csv", "bin"))},
}
REQUIRED = {("grid", "d"), ("grid", "L"), ("grid", "eps")}
FORMATS = ("csv", "bin")


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration; ``values[section][key]`` holds converted values."""

    values: dict
    source: str = field(default="<string>", compare=False)

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def n(self) -> int:
        n = self.get("grid", "n")
        return 16 * self.get("grid", "L") if n is None else n

    def system_spec(self, eps: float | None = None, seed: int | None = None) -> SystemSpec:
        g, p, t = self.values["grid"], self.values["potential"], self.values["thermo"]
        return SystemSpec(
            d=g["d"], L=g["L"], n=self.n, eps=g["eps"] if eps is None else eps,
            seed=p["seed"] if seed is None else seed, v_min=p["v_min"], delta=p["delta"], kappa0=p["kappa0"],
            dopant_amplitude=p["dopant_amplitude"], c_cut=p["c_cut"], K=t["K"], tau=t["tau"], beta=t["beta"],
            scheme=self.get("solver", "scheme"),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        values = {s: dict(kv) for s, kv in self.values.items()}
        values["potential"]["seed"] = int(seed)
        return RunConfig(values, self.source)

    def hash(self) -> str:
        return config_hash(self.values)


def _validate(v) -> list[str]:
    out = []
    g, p, t, s = v["grid"], v["potential"], v["thermo"], v["solver"]
    if g["d"] not in (1, 2, 3):
        out.append(f"grid.d must be 1, 2 or 3, got {g['d']}")
    if g["L"] < 1:
        out.append("grid.L must be a positive integer")
    if not g["eps"] > 0:
        out.append("eps must be positive")
    n = 16 * g["L"] if g["n"] is None else g["n"]
    if g["L"] >= 1 and (n < 1 or n % g["L"]):
        out.append(f"grid.n={n} must be a positive multiple of grid.L={g['L']}")
    if not p["v_min"] > 0:
        out.append("potential.v_min must be positive")
    if p["delta"] < 0:
        out.append("potential.delta must be non-negative")
    if not p["kappa0"] > 0:
        out.append("potential.kappa0 must be positive")
    if p["dopant_amplitude"] < 0 or p["dopant_amplitude"] >= p["kappa0"]:
        out.append("potential.dopant_amplitude must lie in [0, kappa0) so the dopant stays positive")
    if not p["c_cut"] > 0:
        out.append("potential.c_cut must be positive")
    if t["beta"] is not None and not t["beta"] > 0:
        out.append("thermo.beta must be positive")
    if t["beta"] is None:
        tau = 0.5 * (t["K"] + p["v_min"]) if t["tau"] is None else t["tau"]
        if not t["K"] < tau < p["v_min"]:
            out.append(f"thermo.tau={tau:g} must lie strictly between K={t['K']:g} and v_min={p['v_min']:g}")
        if g["eps"] >= 1:
            out.append("eps must be < 1 when beta is coupled to eps")
    bad_models = [m for m in s["models"] if m not in MODELS]
    if bad_models or not s["models"]:
        out.append(f"solver.models must be a non-empty subset of {MODELS}")
    if s["scheme"] not in SCHEMES:
        out.append(f"solver.scheme must be one of {SCHEMES}")
    if not s["tol"] > 0:
        out.append("solver.tol must be positive")
    if not 0 < s["alpha"] <= 1:
        out.append("solver.alpha must lie in (0, 1]")
    if s["anderson_depth"] < 0:
        out.append("solver.anderson_depth must be >= 0")
    if s["max_iter"] < 1:
        out.append("solver.max_iter must be >= 1")
    eps_list = v["sweep"]["eps_list"]
    if len(eps_list) < 3 or any(not (0 < e < 1) for e in eps_list):
        out.append("sweep.eps_list needs at least 3 values in (0, 1)")
    bad_metrics = [m for m in v["sweep"]["metrics"] if m not in METRICS]
    if bad_metrics:
        out.append(f"sweep.metrics must be a subset of {METRICS}")
    bad_formats = [f for f in v["output"]["formats"] if f not in FORMATS]
    if bad_formats or not v["output"]["formats"]:
        out.append(f"output.formats must be a non-empty subset of {FORMATS}")
    return out


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate configuration text.

    Raises:
        ParseError: syntax problems, unknown keys, unconvertible values; each
            message carries ``source:line:column``.
        ValidationError: values that parse but violate a precondition.
    """
    raw: dict[str, dict[str, str]] = {}
    seen = set()
    issues = []
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        stripped = body.strip()
        if not stripped:
            continue
        col = len(body) - len(body.lstrip()) + 1
        where = f"{source}:{lineno}:{col}"
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                issues.append(f"{where}: unterminated section header")
                section = None
                continue
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                issues.append(f"{where}: unknown section [{section}]")
                section = None
            else:
                raw.setdefault(section, {})
            continue
        if "=" not in stripped:
            issues.append(f"{where}: expected 'key = value'")
            continue
        key, value = (part.strip() for part in stripped.split("=", 1))
        if section is None:
            issues.append(f"{where}: key {key!r} outside a known section")
            continue
        if key not in SCHEMA[section]:
            issues.append(f"{where}: unknown key {section}.{key}")
            continue
        if (section, key) in seen:
            issues.append(f"{where}: duplicate key {section}.{key}")
            continue
        seen.add((section, key))
        conv = SCHEMA[section][key][0]
        try:
            conv(value)
        except (TypeError, ValueError) as exc:
            after = stripped.split("=", 1)[1]
            vcol = col + stripped.index("=") + 1 + len(after) - len(after.lstrip())
            issues.append(f"{source}:{lineno}:{vcol}: bad value for {section}.{key}: {exc}")
            continue
        raw[section][key] = value
    for sec, key in sorted(REQUIRED):
        if (sec, key) not in seen:
            issues.append(f"{source}: missing required key {sec}.{key}")
    if issues:
        raise ParseError(issues)
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (conv, default) in keys.items():
            values[sec][key] = conv(raw[sec][key]) if key in raw.get(sec, {}) else default
    problems = _validate(values)
    if problems:
        raise ValidationError([f"{source}: {p}" for p in problems])
    return RunConfig(values, source)


def parse_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def _emit_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_emit_value(v) for v in value)
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    """Canonical text form: every section and key, in schema order."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key in keys:
            lines.append(f"{key} = {_emit_value(cfg.values[sec][key])}")
        lines.append("")
    return "\n".join(lines)


def replace_value(cfg: RunConfig, section: str, key: str, value) -> RunConfig:
    values = {s: dict(kv) for s, kv in cfg.values.items()}
    values[section][key] = value
    return dataclasses.replace(cfg, values=values)


__all__ = ["ConfigError", "ParseError", "RunConfig", "ValidationError", "emit_config", "parse_config",
           "parse_config_text", "replace_value"]
