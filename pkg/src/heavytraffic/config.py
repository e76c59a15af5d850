"""Strict TOML experiment configuration.

Schema (every key outside this list is rejected)::

    [system]
    kind = "single_server" | "load_balance" | "schedule"
    n = 2
    policy = "single" | "jsq" | "random" | "maxweight"
    arrivals = "bernoulli"                 # mean-parametrised family
    service = "bernoulli p=0.5"            # one spec, or a list with one per queue
    service_set = [[1, 0], [0, 1], [0, 0]] # schedule only
    face = 0                               # index into faces
    [[system.faces]]
    c = [1, 1]
    b = 1
    anchor = [0.5, 0.5]
    delta = 0.5                            # optional

    [estimator]
    horizon, burn_in, batch_count, seed, thinning, replications,
    perp_orders, guard, max_samples

    [sweep]
    eps_grid = [0.2, 0.1, 0.05]
    epsilon = 0.05                         # used by ``simulate`` and ``ssc``

    [output]
    dir = "out"
    formats = ["csv", "json", "long", "samples"]

Inline overrides use dotted keys (``estimator.horizon=1000000``) and are
validated against the same schema.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .control import CapacityFace, Policy, ServiceSet
from .distributions import parse_dist, parse_family
from .errors import ConfigError
from .estimation import EstimatorConfig
from .system import KINDS, SystemTemplate

SECTIONS = {
    "system": {"kind", "n", "policy", "arrivals", "service", "service_set", "face", "faces"},
    "estimator": {f.name for f in fields(EstimatorConfig)},
    "sweep": {"eps_grid", "epsilon"},
    "output": {"dir", "formats"},
}
FACE_KEYS = {"c", "b", "anchor", "delta"}
FORMATS = {"csv", "json", "long", "samples"}
DEFAULT_POLICY = {"single_server": "single", "load_balance": "jsq", "schedule": "maxweight"}


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class ExperimentConfig:
    template: SystemTemplate
    estimator: EstimatorConfig
    eps_grid: tuple[float, ...] = ()
    epsilon: float | None = None
    output: OutputConfig = field(default_factory=OutputConfig)
    faces: tuple[CapacityFace, ...] = ()


def _check_keys(where: str, table: dict, allowed: set[str]) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{where + '.' if where else ''}{key}'")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key {where}.{key}")
    return table[key]


def _typed(value, kind, name):
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{name} has the wrong type: {value!r}")
    return value


def apply_overrides(raw: dict, overrides) -> dict:
    """Set ``section.key=value`` pairs; values are read as TOML scalars or arrays."""
    for item in overrides or ():
        key, sep, text = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, _, name = key.strip().partition(".")
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if name not in SECTIONS[section]:
            raise ConfigError(f"unknown config key '{section}.{name}'")
        try:
            value = tomllib.loads(f"v = {text.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = text.strip()
        raw.setdefault(section, {})[name] = value
    return raw


def _faces(raw_faces) -> tuple[CapacityFace, ...]:
    out = []
    for i, f in enumerate(raw_faces or ()):
        if not isinstance(f, dict):
            raise ConfigError(f"system.faces[{i}] must be a table")
        _check_keys(f"system.faces[{i}]", f, FACE_KEYS)
        out.append(CapacityFace(c=tuple(float(x) for x in _require(f, "c", "faces")),
                                b=float(_require(f, "b", "faces")),
                                anchor=tuple(float(x) for x in _require(f, "anchor", "faces")),
                                delta=None if f.get("delta") is None else float(f["delta"])))
    return tuple(out)


def build_template(sysraw: dict) -> tuple[SystemTemplate, tuple[CapacityFace, ...]]:
    kind = _typed(_require(sysraw, "kind", "system"), str, "system.kind")
    if kind not in KINDS:
        raise ConfigError(f"system.kind must be one of {KINDS}, got {kind!r}")
    n = _typed(sysraw.get("n", 1), int, "system.n")
    policy = Policy(sysraw.get("policy", DEFAULT_POLICY[kind]))
    family = parse_family(_typed(_require(sysraw, "arrivals", "system"), str, "system.arrivals"))
    faces = _faces(sysraw.get("faces"))

    if kind == "schedule":
        if "service_set" not in sysraw:
            raise ConfigError("a schedule system requires system.service_set")
        if not faces:
            raise ConfigError("a schedule system requires at least one [[system.faces]] entry")
        idx = _typed(sysraw.get("face", 0), int, "system.face")
        if not 0 <= idx < len(faces):
            raise ConfigError(f"system.face={idx} does not name a declared face")
        sset = ServiceSet(tuple(tuple(s) for s in sysraw["service_set"]))
        template = SystemTemplate(kind, n, policy, family, service_set=sset, face=faces[idx])
        return template, faces

    svc = _require(sysraw, "service", "system")
    specs = svc if isinstance(svc, list) else [svc] * n
    if len(specs) != n:
        raise ConfigError(f"system.service lists {len(specs)} models for n={n}")
    service = tuple(parse_dist(s) for s in specs)
    return SystemTemplate(kind, n, policy, family, service=service), faces


def build_config(raw: dict) -> ExperimentConfig:
    _check_keys("", raw, set(SECTIONS))
    for name, allowed in SECTIONS.items():
        table = raw.get(name, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        _check_keys(name, table, allowed)
    template, faces = build_template(_require(raw, "system", ""))

    est = dict(raw.get("estimator", {}))
    if "horizon" not in est:
        raise ConfigError("missing required key estimator.horizon")
    if "perp_orders" in est:
        est["perp_orders"] = tuple(est["perp_orders"])
    estimator = EstimatorConfig(**est)

    sw = raw.get("sweep", {})
    grid = tuple(float(e) for e in sw.get("eps_grid", ()))
    eps = sw.get("epsilon")
    out = raw.get("output", {})
    formats = tuple(out.get("formats", OutputConfig.formats))
    bad = sorted(set(formats) - FORMATS)
    if bad:
        raise ConfigError(f"unknown output format(s) {bad}; known: {sorted(FORMATS)}")
    return ExperimentConfig(template=template, estimator=estimator, eps_grid=grid,
                            epsilon=None if eps is None else float(eps),
                            output=OutputConfig(dir=str(out.get("dir", "out")), formats=formats),
                            faces=faces)


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return build_config(apply_overrides(raw, overrides))
