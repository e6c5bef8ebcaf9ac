"""Experiment-grid configuration: INI-style ``[section]`` headers with ``key = value`` lines.

Example::

    [grid]
    problems = sphere-2, branin-2
    noise = 0, 0.1
    methods = ei, qerci_v2, fixed-10
    replications = 10
    master_seed = 1

    [budget]
    evals_per_dim = 10000      # N_max = evals_per_dim * (d + 1), the default
    max_iterations = 2000

    [cost]
    setup = 1
    per_replicate = 0.001

    [tr]
    imse_ratio = 10

    [method:nogate]
    kind = ei
    imse_ratio = 0

Built-in method names are ``ei``, ``qerci_v1``, ``qerci_v2`` and
``fixed-<k>`` (EI candidates with exactly k replicates).  A
``[method:<name>]`` section defines a named variant: ``kind`` and
``fixed_reps`` pick the acquisition, any other key overrides a trust-region
setting for that method only.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..acquisition import CostModel
from ..errors import ConfigError
from ..problems import REGISTRY
from ..trust_region import ACQUISITIONS, AcquisitionChoice, TRConfig

SEED_ENV = "OGPIT_MASTER_SEED"

_TR_FIELDS = {
    f.name: f
    for f in dataclasses.fields(TRConfig)
    if f.name not in ("acquisition", "cost", "max_cost", "max_iterations", "N_max")
}
_ACQ_FIELDS = {"kind", "fixed_reps", "draws", "search_draws", "seed"}


@dataclass
class MethodSpec:
    name: str
    acquisition: AcquisitionChoice
    overrides: Dict[str, object] = field(default_factory=dict)


@dataclass
class GridConfig:
    problems: List[str]
    noise: List[float]
    methods: List[MethodSpec]
    replications: int = 1
    master_seed: int = 0
    paired: bool = False
    evals_per_dim: Optional[int] = None
    max_evals: Optional[int] = None
    max_iterations: Optional[int] = None
    max_cost: Optional[float] = None
    max_seconds: Optional[float] = None
    cost: CostModel = field(default_factory=CostModel)
    tr: Dict[str, object] = field(default_factory=dict)

    def budget(self, dim: int) -> int:
        """N_max: the smaller of the given caps, else 10000 (d + 1)."""
        caps = []
        if self.evals_per_dim is not None:
            caps.append(self.evals_per_dim * (dim + 1))
        if self.max_evals is not None:
            caps.append(self.max_evals)
        return min(caps) if caps else 10_000 * (dim + 1)

    def tr_config(self, method: MethodSpec, dim: int) -> TRConfig:
        kw = dict(self.tr)
        kw.update(method.overrides)
        try:
            cfg = TRConfig(
                acquisition=method.acquisition,
                cost=self.cost,
                N_max=self.budget(dim),
                max_cost=self.max_cost,
                max_iterations=self.max_iterations,
                **kw,
            )
            cfg.resolved(dim)
        except TypeError as exc:
            raise ConfigError(f"method {method.name!r}: {exc}") from None
        return cfg

    def method(self, name: str) -> MethodSpec:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)


def _split(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        if kind is str:
            return raw.strip()
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {kind.__name__}") from None


def _field_type(name: str):
    ann = str(_TR_FIELDS[name].type)
    if "str" in ann:
        return str
    if "int" in ann:
        return int
    return float


def _tr_overrides(section: str, items) -> Dict[str, object]:
    out = {}
    for key, raw in items:
        if key not in _TR_FIELDS:
            raise ConfigError(f"[{section}] unknown trust-region setting {key!r}")
        out[key] = _convert(section, key, raw, _field_type(key))
    return out


def builtin_method(name: str) -> MethodSpec:
    if name in ACQUISITIONS:
        return MethodSpec(name, AcquisitionChoice(name))
    if name.startswith("fixed-"):
        try:
            k = int(name.split("-", 1)[1])
        except ValueError:
            raise ConfigError(f"bad fixed-replication method name {name!r}") from None
        if k < 1:
            raise ConfigError("fixed replicate count must be at least 1")
        return MethodSpec(name, AcquisitionChoice("ei", fixed_reps=k))
    raise ConfigError(f"unknown method {name!r}")


def _method_section(name: str, section) -> MethodSpec:
    label = f"method:{name}"
    acq_kw = {}
    rest = []
    for key, raw in section.items():
        if key in _ACQ_FIELDS:
            kind = str if key == "kind" else int
            acq_kw[key] = _convert(label, key, raw, kind)
        else:
            rest.append((key, raw))
    try:
        acq = AcquisitionChoice(**acq_kw)
    except ConfigError as exc:
        raise ConfigError(f"[{label}] {exc}") from None
    return MethodSpec(name, acq, _tr_overrides(label, rest))


def parse_config(text: str, source: str = "<config>") -> GridConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not parser.has_section("grid"):
        raise ConfigError(f"{source}: missing [grid] section")
    known = {"grid", "budget", "cost", "tr"}
    for sec in parser.sections():
        if sec not in known and not sec.startswith("method:"):
            raise ConfigError(f"{source}: unknown section [{sec}]")
    g = parser["grid"]
    for key in ("problems", "methods"):
        if key not in g:
            raise ConfigError(f"{source}: [grid] needs {key!r}")
    problems = _split(g["problems"])
    for p in problems:
        if p not in REGISTRY:
            raise ConfigError(f"{source}: [grid] problems: unknown problem {p!r}")
    noise = [_convert("grid", "noise", v, float) for v in _split(g.get("noise", "0"))]
    if any(v < 0 for v in noise):
        raise ConfigError(f"{source}: [grid] noise levels must be nonnegative")
    named = {
        sec.split(":", 1)[1].strip(): _method_section(sec.split(":", 1)[1].strip(), parser[sec])
        for sec in parser.sections()
        if sec.startswith("method:")
    }
    methods = [named[m] if m in named else builtin_method(m) for m in _split(g["methods"])]
    if len({m.name for m in methods}) != len(methods):
        raise ConfigError(f"{source}: duplicate method names")
    cfg = GridConfig(
        problems=problems,
        noise=noise,
        methods=methods,
        replications=_convert("grid", "replications", g.get("replications", "1"), int),
        master_seed=_convert("grid", "master_seed", g.get("master_seed", "0"), int),
        paired=_convert("grid", "paired", g.get("paired", "false"), bool),
    )
    if cfg.replications < 1:
        raise ConfigError(f"{source}: [grid] replications must be at least 1")
    if parser.has_section("budget"):
        b = parser["budget"]
        allowed = {"evals_per_dim", "max_evals", "max_iterations", "max_cost", "max_seconds"}
        for key in b:
            if key not in allowed:
                raise ConfigError(f"{source}: [budget] unknown key {key!r}")
        for key, kind in (("evals_per_dim", int), ("max_evals", int), ("max_iterations", int)):
            if key in b:
                setattr(cfg, key, _convert("budget", key, b[key], kind))
        for key in ("max_cost", "max_seconds"):
            if key in b:
                setattr(cfg, key, _convert("budget", key, b[key], float))
    if parser.has_section("cost"):
        c = parser["cost"]
        for key in c:
            if key not in ("setup", "per_replicate"):
                raise ConfigError(f"{source}: [cost] unknown key {key!r}")
        try:
            cfg.cost = CostModel(
                _convert("cost", "setup", c.get("setup", "0"), float),
                _convert("cost", "per_replicate", c.get("per_replicate", "1"), float),
            )
        except ValueError as exc:
            raise ConfigError(f"{source}: [cost] {exc}") from None
    if parser.has_section("tr"):
        cfg.tr = _tr_overrides("tr", parser["tr"].items())
    env = os.environ.get(SEED_ENV)
    if env:
        cfg.master_seed = _convert("environment", SEED_ENV, env, int)
    # validate every method once up front so errors surface before any run
    for p in problems:
        dim = REGISTRY[p][1]
        for m in methods:
            cfg.tr_config(m, dim)
    return cfg


def load_config(path) -> GridConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def cells(cfg: GridConfig) -> List[Tuple[str, float, MethodSpec, int]]:
    return [
        (p, s, m, r)
        for p in cfg.problems
        for s in cfg.noise
        for m in cfg.methods
        for r in range(cfg.replications)
    ]
