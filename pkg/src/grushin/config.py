"""YAML run configuration: schema, validation with line numbers, round-trip.

Example document::

    space:
      rho: ["1", "x1"]
    pfield: {base: 2.0, poly: "0.25*x1^2", floor: 1.05}
    grid: {lower: [-1, -1], upper: [1, 1], counts: [33, 33]}
    boundary: "x2 + 0.5*x1^2"
    solver: {mode: limit, schedule: [1, 2, 4, 8, 16, 32, 64]}
    output: {directory: out}

Only ``space`` is always required; each subcommand asks for the sections it
uses (see :meth:`RunConfig.require`).
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import yaml

from .geometry import GrushinSpace, MetricGraphConfig
from .grid import Grid
from .operators import ExponentField
from .polynomial import Polynomial, PolynomialParseError
from .solver import DirichletProblem, JensenConfig, KSchedule

__all__ = [
    "ConfigError",
    "SpaceSpec",
    "PFieldSpec",
    "GridSpec",
    "SolverSpec",
    "DistanceSpec",
    "ComparisonSpec",
    "HarnackSpec",
    "PenalizationSpec",
    "VerifySpec",
    "OutputSpec",
    "RunConfig",
    "parse_config",
    "serialize",
    "config_hash",
    "MODES",
]

MODES = ("limit", "relax", "jensen-min", "jensen-max")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path, ``line`` 1-based or None."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key:
            where += f"{key}: "
        text = where + message
        if line is not None:
            text += f" (line {line})"
        super().__init__(text)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class SpaceSpec:
    rho: tuple

    def build(self) -> GrushinSpace:
        return GrushinSpace(list(self.rho))


@dataclass(frozen=True)
class PFieldSpec:
    base: float = 2.0
    poly: str = "0"
    floor: float = 1.01

    def build(self, n: int) -> ExponentField:
        return ExponentField(self.base, Polynomial.parse(self.poly, n), self.floor)


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    counts: tuple

    def build(self) -> Grid:
        return Grid(self.lower, self.upper, self.counts)


@dataclass(frozen=True)
class SolverSpec:
    mode: str = "limit"
    schedule: tuple = KSchedule().ks
    epsilon: float = 0.0
    tol: float = 1e-6
    stage_tol: float = 1e-2
    relax_tol: float = 1e-5
    max_iters: int = 20000

    def jensen(self) -> JensenConfig:
        eps = {"relax": 0.0, "jensen-min": abs(self.epsilon), "jensen-max": -abs(self.epsilon)}[self.mode]
        return JensenConfig(eps, self.relax_tol, self.max_iters)


@dataclass(frozen=True)
class DistanceSpec:
    stencil_radius: int = 2
    degenerate_threshold: float = 1e-12
    edge_rule: str = "midpoint"

    def build(self) -> MetricGraphConfig:
        return MetricGraphConfig(self.stencil_radius, self.degenerate_threshold, self.edge_rule)


@dataclass(frozen=True)
class ComparisonSpec:
    shift: float = 0.1
    tol: float | None = None


@dataclass(frozen=True)
class HarnackSpec:
    center: tuple
    r: float


@dataclass(frozen=True)
class PenalizationSpec:
    u: str
    v: str
    levels: tuple = (10.0, 100.0, 1000.0, 10000.0)
    schedule: tuple | None = None


@dataclass(frozen=True)
class VerifySpec:
    comparison: ComparisonSpec | None = None
    harnack: HarnackSpec | None = None
    penalization: PenalizationSpec | None = None


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    space: SpaceSpec
    pfield: PFieldSpec = PFieldSpec()
    grid: GridSpec | None = None
    boundary: str | None = None
    solver: SolverSpec = SolverSpec()
    distance: DistanceSpec = DistanceSpec()
    hormander_depth_cap: int = 8
    verify: VerifySpec = VerifySpec()
    output: OutputSpec = OutputSpec()
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.space.rho)

    def require(self, *keys: str) -> None:
        """Raise :class:`ConfigError` unless every dotted section is present."""
        for key in keys:
            obj: Any = self
            for part in key.split("."):
                obj = getattr(obj, part, None)
                if obj is None:
                    raise ConfigError("missing required key", key)

    def problem(self, shift: float = 0.0) -> DirichletProblem:
        self.require("grid", "boundary")
        space = self.space.build()
        return DirichletProblem.from_function(space, self.pfield.build(self.n), self.grid.build(),
                                              Polynomial.parse(self.boundary, self.n) + shift)

    def to_dict(self) -> dict:
        out: dict = {"space": {"rho": list(self.space.rho)}, "pfield": asdict(self.pfield)}
        if self.grid is not None:
            out["grid"] = {k: list(v) for k, v in asdict(self.grid).items()}
        if self.boundary is not None:
            out["boundary"] = self.boundary
        solver = asdict(self.solver)
        solver["schedule"] = list(self.solver.schedule)
        out["solver"] = solver
        out["distance"] = asdict(self.distance)
        out["hormander"] = {"depth_cap": self.hormander_depth_cap}
        verify = {}
        if self.verify.comparison is not None:
            verify["comparison"] = asdict(self.verify.comparison)
        if self.verify.harnack is not None:
            verify["harnack"] = {"center": list(self.verify.harnack.center), "r": self.verify.harnack.r}
        if self.verify.penalization is not None:
            pen = self.verify.penalization
            d = {"u": pen.u, "v": pen.v, "levels": list(pen.levels)}
            if pen.schedule is not None:
                d["schedule"] = [list(a) for a in pen.schedule]
            verify["penalization"] = d
        if verify:
            out["verify"] = verify
        out["output"] = {"directory": self.output.directory, "formats": list(self.output.formats)}
        return out


# loading with line information


def _compose(text: str):
    try:
        return yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"not valid YAML: {getattr(exc, 'problem', exc)}", None,
                          mark.line + 1 if mark else None) from None


def _to_python(node, path: str, lines: dict):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = str(key_node.value)
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError("duplicate key", sub, key_node.start_mark.line + 1)
            out[key] = _to_python(value_node, sub, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return _scalar(node)


def _scalar(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node)
    finally:
        loader.dispose()


class _Reader:
    """Typed access to a nested mapping that reports paths and lines."""

    def __init__(self, data: dict, path: str, lines: dict):
        self.data = data
        self.path = path
        self.lines = lines
        self.used: set = set()

    def _key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def line(self, name: str | None = None) -> int | None:
        return self.lines.get(self._key(name) if name else self.path)

    def fail(self, name: str, message: str):
        raise ConfigError(message, self._key(name), self.line(name) or self.line())

    def has(self, name: str) -> bool:
        return name in self.data

    def raw(self, name: str, required: bool = False, default=None):
        self.used.add(name)
        if name not in self.data or self.data[name] is None:
            if required:
                raise ConfigError("missing required key", self._key(name), self.line())
            return default
        return self.data[name]

    def number(self, name: str, required: bool = False, default=None, positive: bool = False):
        value = self.raw(name, required, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            if isinstance(value, str):
                try:
                    value = float(value)
                except ValueError:
                    self.fail(name, f"expected a number, got {value!r}")
            else:
                self.fail(name, f"expected a number, got {value!r}")
        value = float(value)
        if not np.isfinite(value):
            self.fail(name, "must be finite")
        if positive and not value > 0:
            self.fail(name, "must be positive")
        return value

    def integer(self, name: str, required: bool = False, default=None):
        value = self.raw(name, required, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(name, f"expected an integer, got {value!r}")
        return int(value)

    def string(self, name: str, required: bool = False, default=None):
        value = self.raw(name, required, default)
        if value is None:
            return None
        if isinstance(value, bool):
            self.fail(name, f"expected a string, got {value!r}")
        return str(value)

    def numbers(self, name: str, required: bool = False, default=None, integer: bool = False):
        value = self.raw(name, required, default)
        if value is None:
            return None
        if not isinstance(value, (list, tuple)):
            self.fail(name, "expected a list")
        out = []
        for i, item in enumerate(value):
            ok = isinstance(item, int) if integer else isinstance(item, (int, float))
            if isinstance(item, bool) or not ok:
                kind = "integer" if integer else "number"
                raise ConfigError(f"expected a {kind}, got {item!r}", f"{self._key(name)}[{i}]",
                                  self.lines.get(f"{self._key(name)}[{i}]"))
            out.append(int(item) if integer else float(item))
        return tuple(out)

    def section(self, name: str, required: bool = False):
        value = self.raw(name, required)
        if value is None:
            return None
        if not isinstance(value, dict):
            self.fail(name, "expected a mapping")
        return _Reader(value, self._key(name), self.lines)

    def finish(self):
        for key in self.data:
            if key not in self.used:
                raise ConfigError("unknown key", self._key(key), self.lines.get(self._key(key)))


def _poly(reader: _Reader, name: str, n: int, text: str, key: str | None = None) -> str:
    key = key or reader._key(name)
    try:
        Polynomial.parse(text, n)
    except PolynomialParseError as exc:
        raise ConfigError(str(exc), key, reader.lines.get(key)) from None
    return text


def parse_config(text: str) -> RunConfig:
    """Validate a YAML document and return the run configuration."""
    root = _compose(text)
    if root is None:
        raise ConfigError("empty document")
    lines: dict = {}
    data = _to_python(root, "", lines)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", None, 1)
    top = _Reader(data, "", lines)

    sp = top.section("space", required=True)
    rho = sp.raw("rho", required=True)
    if not isinstance(rho, list) or not rho:
        sp.fail("rho", "expected a non-empty list of polynomials")
    n = len(rho)
    rho = tuple(_poly(sp, "rho", n, str(r), f"space.rho[{i}]") for i, r in enumerate(rho))
    sp.finish()
    try:
        GrushinSpace(list(rho))
    except ValueError as exc:
        raise ConfigError(str(exc), "space.rho", lines.get("space.rho")) from None
    space = SpaceSpec(rho)

    pfield = PFieldSpec()
    pf = top.section("pfield")
    if pf is not None:
        pfield = PFieldSpec(pf.number("base", default=2.0),
                            _poly(pf, "poly", n, pf.string("poly", default="0")),
                            pf.number("floor", default=1.01))
        pf.finish()
        try:
            pfield.build(n)
        except ValueError as exc:
            raise ConfigError(str(exc), "pfield", lines.get("pfield")) from None

    grid = None
    gr = top.section("grid")
    if gr is not None:
        lower = gr.numbers("lower", required=True)
        upper = gr.numbers("upper", required=True)
        counts = gr.numbers("counts", required=True, integer=True)
        gr.finish()
        for name, vals in (("lower", lower), ("upper", upper), ("counts", counts)):
            if len(vals) != n:
                gr.fail(name, f"expected {n} entries, got {len(vals)}")
        grid = GridSpec(lower, upper, counts)
        try:
            grid.build()
        except ValueError as exc:
            raise ConfigError(str(exc), "grid", lines.get("grid")) from None

    boundary = top.string("boundary")
    if boundary is not None:
        _poly(top, "boundary", n, boundary)

    solver = SolverSpec()
    so = top.section("solver")
    if so is not None:
        mode = so.string("mode", default="limit")
        if mode not in MODES:
            so.fail("mode", f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
        epsilon = so.number("epsilon", required=mode.startswith("jensen"), default=0.0)
        if mode.startswith("jensen") and epsilon == 0:
            so.fail("epsilon", "Jensen modes need a nonzero epsilon")
        schedule = so.numbers("schedule", default=KSchedule().ks)
        try:
            schedule = KSchedule(schedule).ks
        except ValueError as exc:
            so.fail("schedule", str(exc))
        solver = SolverSpec(mode, schedule, epsilon,
                            so.number("tol", default=1e-6, positive=True),
                            so.number("stage_tol", default=1e-2, positive=True),
                            so.number("relax_tol", default=1e-5, positive=True),
                            so.integer("max_iters", default=20000))
        if solver.max_iters < 1:
            so.fail("max_iters", "must be at least 1")
        so.finish()

    distance = DistanceSpec()
    di = top.section("distance")
    if di is not None:
        distance = DistanceSpec(di.integer("stencil_radius", default=2),
                                di.number("degenerate_threshold", default=1e-12),
                                di.string("edge_rule", default="midpoint"))
        di.finish()
        try:
            distance.build()
        except ValueError as exc:
            raise ConfigError(str(exc), "distance", lines.get("distance")) from None

    depth_cap = 8
    ho = top.section("hormander")
    if ho is not None:
        depth_cap = ho.integer("depth_cap", default=8)
        if depth_cap < 0:
            ho.fail("depth_cap", "must be non-negative")
        ho.finish()

    verify = VerifySpec()
    ve = top.section("verify")
    if ve is not None:
        comparison = harnack = penalization = None
        co = ve.section("comparison")
        if co is not None:
            comparison = ComparisonSpec(co.number("shift", default=0.1), co.number("tol", positive=True))
            if comparison.shift < 0:
                co.fail("shift", "must be non-negative")
            co.finish()
        ha = ve.section("harnack")
        if ha is not None:
            center = ha.numbers("center", required=True)
            if len(center) != n:
                ha.fail("center", f"expected {n} entries, got {len(center)}")
            harnack = HarnackSpec(center, ha.number("r", required=True, positive=True))
            ha.finish()
        pe = ve.section("penalization")
        if pe is not None:
            u = _poly(pe, "u", n, pe.string("u", required=True))
            v = _poly(pe, "v", n, pe.string("v", required=True))
            levels = pe.numbers("levels", default=(10.0, 100.0, 1000.0, 10000.0))
            sched = pe.raw("schedule")
            if sched is not None:
                if not isinstance(sched, list) or not sched:
                    pe.fail("schedule", "expected a list of weight vectors")
                rows = []
                for i, row in enumerate(sched):
                    key = f"verify.penalization.schedule[{i}]"
                    if (not isinstance(row, list) or len(row) != n
                            or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in row)):
                        raise ConfigError(f"expected {n} numbers", key, lines.get(key))
                    rows.append(tuple(float(a) for a in row))
                sched = tuple(rows)
            penalization = PenalizationSpec(u, v, levels, sched)
            pe.finish()
        verify = VerifySpec(comparison, harnack, penalization)
        ve.finish()

    output = OutputSpec()
    ou = top.section("output")
    if ou is not None:
        formats = ou.raw("formats", default=["csv", "json"])
        if not isinstance(formats, list) or any(f not in ("csv", "json") for f in formats):
            ou.fail("formats", "expected a list drawn from csv, json")
        output = OutputSpec(ou.string("directory", default="out"), tuple(formats))
        ou.finish()

    top.finish()
    return RunConfig(space, pfield, grid, boundary, solver, distance, depth_cap, verify, output, lines)


def serialize(cfg: RunConfig) -> str:
    """YAML text that :func:`parse_config` maps back to ``cfg``."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
