"""Problem configuration files (YAML).

Schema (``schema_version: 1``)::

    schema_version: 1
    name: free text
    example: 3                 # optional link to a built-in example
    geometry:                  # closed chain of edges, domain on the left
      - segment: {ax: 0, ay: 1, bx: 1, by: 1}
      - arc: {cx: 0, cy: 1, r: 0.5, t0: -pi, t1: pi}
    u1: "x"
    u2: "-y"
    l: "1"
    W: 1
    solver: {trace_tol: 1.0e-9, t_max: 40}
    diagnostics: {singular: [0, 1.5], r0: 0.25, annuli: 8, along: [[0, 2], [0, 1]]}
    output: path/to/report      # optional

Numbers may be written as constant expressions (``pi/2``, ``1/3``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .expr import ExprError, ScalarField, VectorField2, constant_value
from .geometry import Arc, Domain, GeometryError, Segment

SCHEMA_VERSION = 1
_SEGMENT_KEYS = ("ax", "ay", "bx", "by")
_ARC_KEYS = ("cx", "cy", "r", "t0", "t1")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemConfig:
    geometry: tuple[tuple[str, tuple[Any, ...]], ...]
    u1: str
    u2: str
    l: str
    W: float = 1.0
    name: str = ""
    example: Optional[int] = None
    trace_tol: float = 1e-9
    t_max: float = 40.0
    singular: Optional[tuple[float, float]] = None
    r0: Optional[float] = None
    annuli: int = 8
    along: Optional[tuple[tuple[float, float], tuple[float, float]]] = None
    output: Optional[str] = None
    texts: dict = field(default_factory=dict, compare=False)

    def domain(self) -> Domain:
        edges = []
        for kind, vals in self.geometry:
            nums = [constant_value(v) for v in vals]
            if kind == "segment":
                edges.append(Segment((nums[0], nums[1]), (nums[2], nums[3])))
            else:
                edges.append(Arc((nums[0], nums[1]), nums[2], nums[3], nums[4]))
        return Domain(edges)

    def velocity(self) -> VectorField2:
        return VectorField2.parse(self.u1, self.u2)

    def rhs(self) -> ScalarField:
        return ScalarField.parse(self.l)


def _where(path: str, node) -> str:
    mark = getattr(node, "start_mark", None)
    return f"{path} (line {mark.line + 1})" if mark is not None else path


def _number(value, where: str) -> float:
    try:
        v = constant_value(value if not isinstance(value, str) else value.strip())
    except (ExprError, TypeError) as e:
        raise ConfigError(f"{where}: {e}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{where}: not a finite number")
    return v


def _point(value, where: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{where}: expected [x, y]")
    return (_number(value[0], f"{where}[0]"), _number(value[1], f"{where}[1]"))


def _lines(text: str) -> dict[str, int]:
    # line numbers of top-level keys and geometry items, for error messages
    out: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if isinstance(root, yaml.MappingNode):
        for k, v in root.value:
            out[k.value] = k.start_mark.line + 1
            if k.value == "geometry" and isinstance(v, yaml.SequenceNode):
                for i, item in enumerate(v.value):
                    out[f"geometry[{i}]"] = item.start_mark.line + 1
    return out


def parse_config(text: str, source: str = "<config>") -> ProblemConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: malformed YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    lines = _lines(text)

    def at(key: str) -> str:
        return f"{source}:{lines[key]}: {key}" if key in lines else f"{source}: {key}"

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{at('schema_version')}: unsupported version {version!r}")
    known = {"schema_version", "name", "example", "geometry", "u1", "u2", "l", "W", "solver",
             "diagnostics", "output"}
    for k in raw:
        if k not in known:
            raise ConfigError(f"{at(str(k))}: unknown key")
    for k in ("geometry", "u1", "u2", "l"):
        if k not in raw:
            raise ConfigError(f"{source}: missing required key {k!r}")
    geo = raw["geometry"]
    if not isinstance(geo, list) or not geo:
        raise ConfigError(f"{at('geometry')}: expected a non-empty list of edges")
    geometry = []
    for i, item in enumerate(geo):
        where = at(f"geometry[{i}]")
        if not isinstance(item, dict) or len(item) != 1:
            raise ConfigError(f"{where}: expected one of 'segment' or 'arc'")
        (kind, rec), = item.items()
        keys = {"segment": _SEGMENT_KEYS, "arc": _ARC_KEYS}.get(kind)
        if keys is None:
            raise ConfigError(f"{where}: unknown edge type {kind!r}")
        if not isinstance(rec, dict) or set(rec) != set(keys):
            raise ConfigError(f"{where}: {kind} needs exactly the fields {', '.join(keys)}")
        vals = []
        for k in keys:
            v = rec[k]
            _number(v, f"{where}.{kind}.{k}")
            vals.append(v if isinstance(v, str) else float(v))
        if kind == "arc" and _number(rec["r"], "") <= 0:
            raise ConfigError(f"{where}.arc.r: radius must be positive")
        geometry.append((kind, tuple(vals)))
    texts = {}
    for k in ("u1", "u2", "l"):
        v = raw[k]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = repr(v)
        if not isinstance(v, str):
            raise ConfigError(f"{at(k)}: expected an expression string")
        texts[k] = v
    W = _number(raw.get("W", 1.0), at("W"))
    if W == 0:
        raise ConfigError(f"{at('W')}: W must be nonzero")
    solver = raw.get("solver") or {}
    diag = raw.get("diagnostics") or {}
    if not isinstance(solver, dict) or not isinstance(diag, dict):
        raise ConfigError(f"{source}: 'solver' and 'diagnostics' must be mappings")
    for k in solver:
        if k not in ("trace_tol", "t_max"):
            raise ConfigError(f"{at('solver')}.{k}: unknown key")
    for k in diag:
        if k not in ("singular", "r0", "annuli", "along"):
            raise ConfigError(f"{at('diagnostics')}.{k}: unknown key")
    trace_tol = _number(solver.get("trace_tol", 1e-9), f"{at('solver')}.trace_tol")
    t_max = _number(solver.get("t_max", 40.0), f"{at('solver')}.t_max")
    if trace_tol <= 0 or t_max <= 0:
        raise ConfigError(f"{at('solver')}: trace_tol and t_max must be positive")
    singular = _point(diag["singular"], f"{at('diagnostics')}.singular") if "singular" in diag else None
    r0 = _number(diag["r0"], f"{at('diagnostics')}.r0") if "r0" in diag else None
    annuli = diag.get("annuli", 8)
    if not isinstance(annuli, int) or annuli < 5:
        raise ConfigError(f"{at('diagnostics')}.annuli: expected an integer >= 5")
    along = None
    if "along" in diag:
        a = diag["along"]
        if not isinstance(a, list) or len(a) != 2:
            raise ConfigError(f"{at('diagnostics')}.along: expected [[x, y], [x, y]]")
        along = (_point(a[0], f"{at('diagnostics')}.along[0]"),
                 _point(a[1], f"{at('diagnostics')}.along[1]"))
    example = raw.get("example")
    if example is not None and (not isinstance(example, int) or not 1 <= example <= 7):
        raise ConfigError(f"{at('example')}: expected an integer 1..7")
    cfg = ProblemConfig(tuple(geometry), texts["u1"], texts["u2"], texts["l"], W,
                        str(raw.get("name", "")), example, trace_tol, t_max, singular, r0,
                        annuli, along, raw.get("output"), texts)
    validate(cfg, source)
    return cfg


def validate(cfg: ProblemConfig, source: str = "<config>") -> None:
    """Build the domain and fields; the divergence gate runs here."""
    try:
        cfg.domain()
    except GeometryError as e:
        raise ConfigError(f"{source}: geometry: {e}") from None
    try:
        cfg.velocity()
    except ExprError as e:
        raise ConfigError(f"{source}: u: {e}") from None
    try:
        cfg.rhs()
    except ExprError as e:
        raise ConfigError(f"{source}: l: {e}") from None


def load_config(path: str | Path) -> ProblemConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ProblemConfig) -> str:
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    if cfg.name:
        doc["name"] = cfg.name
    if cfg.example is not None:
        doc["example"] = cfg.example
    doc["geometry"] = [{kind: dict(zip(_SEGMENT_KEYS if kind == "segment" else _ARC_KEYS, vals))}
                       for kind, vals in cfg.geometry]
    doc.update(u1=cfg.u1, u2=cfg.u2, l=cfg.l, W=cfg.W)
    doc["solver"] = {"trace_tol": cfg.trace_tol, "t_max": cfg.t_max}
    diag: dict[str, Any] = {"annuli": cfg.annuli}
    if cfg.singular is not None:
        diag["singular"] = list(cfg.singular)
    if cfg.r0 is not None:
        diag["r0"] = cfg.r0
    if cfg.along is not None:
        diag["along"] = [list(cfg.along[0]), list(cfg.along[1])]
    doc["diagnostics"] = diag
    if cfg.output:
        doc["output"] = cfg.output
    return yaml.safe_dump(doc, sort_keys=False)


def config_dir() -> Path:
    return Path(__file__).resolve().parent / "configs"


def shipped_config(n: int) -> Path:
    return config_dir() / f"example{n}.yaml"
