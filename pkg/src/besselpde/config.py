"""Run configuration: INI text with fixed sections and keys.

Example::

    [run]
    delta = 0.5
    T = 1.0
    outputs = out

    [grid]
    n = 256
    scheme = graded
    support_radius = 4.0

    [problem]
    preset = sin

Every key has a default; unknown sections or keys are errors, and so is any
value outside its documented range.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

from .expr import ExpressionError, compile_expression
from .mspace import SCHEMES

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunSection",
    "GridSection",
    "MeshSection",
    "SolverSection",
    "MCSection",
    "ProblemSection",
    "ChecksSection",
    "PRESETS",
    "TERMINALS",
    "parse_config",
    "load_config",
]

PRESETS = ("zero", "linear", "sin", "u_plus_du", "custom")
TERMINALS = ("gaussian", "bump")
QUADRATURES = ("trapezoid", "midpoint")


class ConfigError(ValueError):
    """Invalid configuration text or value."""


@dataclass(frozen=True)
class RunSection:
    delta: float = 0.5
    T: float = 1.0
    outputs: str = "out"


@dataclass(frozen=True)
class GridSection:
    n: int = 256
    scheme: str = "graded"
    support_radius: float = 4.0
    # empty means: truncation rule sqrt(2 T ln 1e12) + support_radius
    x_max: Optional[float] = None


@dataclass(frozen=True)
class MeshSection:
    n_steps: int = 64


@dataclass(frozen=True)
class SolverSection:
    tol: float = 1e-6
    max_iter: int = 30
    lambda_override: Optional[float] = None
    quadrature: str = "midpoint"


@dataclass(frozen=True)
class MCSection:
    n_paths: int = 100000
    seed: int = 0
    n_steps: int = 100
    x0: float = 1.0


@dataclass(frozen=True)
class ProblemSection:
    preset: str = "sin"
    expression: Optional[str] = None
    lipschitz_c: Optional[float] = None
    terminal: str = "gaussian"


@dataclass(frozen=True)
class ChecksSection:
    # grid size for the kernel suites (finer than the solver grid)
    n: int = 512
    # overrides every suite tolerance when set
    tol: Optional[float] = None


_SECTIONS = {
    "run": RunSection,
    "grid": GridSection,
    "mesh": MeshSection,
    "solver": SolverSection,
    "mc": MCSection,
    "problem": ProblemSection,
    "checks": ChecksSection,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    grid: GridSection = field(default_factory=GridSection)
    mesh: MeshSection = field(default_factory=MeshSection)
    solver: SolverSection = field(default_factory=SolverSection)
    mc: MCSection = field(default_factory=MCSection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    checks: ChecksSection = field(default_factory=ChecksSection)

    def __post_init__(self):
        _validate(self)

    @property
    def delta(self) -> float:
        return self.run.delta

    @property
    def T(self) -> float:
        return self.run.T

    def x_max(self) -> float:
        if self.grid.x_max is not None:
            return self.grid.x_max
        return math.sqrt(2.0 * self.T * math.log(1e12)) + self.grid.support_radius

    def replace(self, section: str, **changes) -> "RunConfig":
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        try:
            new = dataclasses.replace(getattr(self, section), **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return dataclasses.replace(self, **{section: new})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_ini(self) -> str:
        lines = []
        for name in _SECTIONS:
            lines.append(f"[{name}]")
            for f in dataclasses.fields(getattr(self, name)):
                value = getattr(getattr(self, name), f.name)
                lines.append(f"{f.name} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(section: str, key: str, ftype, raw: str):
    text = raw.strip()
    optional = ftype.startswith("Optional[")
    base = ftype[len("Optional[") : -1] if optional else ftype
    if text == "":
        if optional:
            return None
        raise ConfigError(f"[{section}] {key} must not be empty")
    try:
        if base == "int":
            return int(text)
        if base == "float":
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
            return value
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {text!r} as {base}") from None
    return text


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse INI ``text``; ``overrides`` maps ``"section.key"`` to raw strings."""
    parser = configparser.ConfigParser(
        interpolation=None, default_section="__unused__", inline_comment_prefixes=(";", "#")
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw: dict[str, dict[str, str]] = {s: {} for s in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        raw[section].update(parser[section])
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS or not key:
            raise ConfigError(f"bad override {dotted!r}; expected section.key")
        raw[section][key] = value
    built = {}
    for section, cls in _SECTIONS.items():
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, value in raw[section].items():
            if key not in fields:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _convert(section, key, str(fields[key].type), value)
        built[section] = cls(**values)
    return RunConfig(**built)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _validate(cfg: RunConfig) -> None:
    r, g, m, s, mc, p, c = cfg.run, cfg.grid, cfg.mesh, cfg.solver, cfg.mc, cfg.problem, cfg.checks
    _require(0 < r.delta < 1, f"[run] delta must lie in (0, 1), got {r.delta}")
    _require(0 < r.T <= 100, f"[run] T must lie in (0, 100], got {r.T}")
    _require(bool(r.outputs), "[run] outputs must be a directory path")
    _require(16 <= g.n <= 8192, f"[grid] n must lie in [16, 8192], got {g.n}")
    _require(g.scheme in SCHEMES, f"[grid] scheme must be one of {SCHEMES}")
    _require(g.support_radius >= 0, "[grid] support_radius must be >= 0")
    _require(g.x_max is None or g.x_max > 0, "[grid] x_max must be positive")
    _require(1 <= m.n_steps <= 4096, f"[mesh] n_steps must lie in [1, 4096], got {m.n_steps}")
    _require(s.tol > 0, "[solver] tol must be positive")
    _require(1 <= s.max_iter <= 10000, "[solver] max_iter must lie in [1, 10000]")
    _require(
        s.lambda_override is None or s.lambda_override >= 0,
        "[solver] lambda_override must be non-negative",
    )
    _require(s.quadrature in QUADRATURES, f"[solver] quadrature must be one of {QUADRATURES}")
    _require(1 <= mc.n_paths <= 10**8, "[mc] n_paths must lie in [1, 1e8]")
    _require(mc.seed >= 0, "[mc] seed must be non-negative")
    _require(1 <= mc.n_steps <= 10000, "[mc] n_steps must lie in [1, 10000]")
    _require(mc.x0 >= 0, "[mc] x0 must be non-negative")
    _require(p.preset in PRESETS, f"[problem] preset must be one of {PRESETS}")
    _require(p.terminal in TERMINALS, f"[problem] terminal must be one of {TERMINALS}")
    _require(p.lipschitz_c is None or p.lipschitz_c > 0, "[problem] lipschitz_c must be positive")
    if p.preset == "custom":
        _require(p.expression is not None, "[problem] custom preset needs an expression")
        _require(p.lipschitz_c is not None, "[problem] custom preset needs lipschitz_c")
        try:
            compile_expression(p.expression)
        except ExpressionError as exc:
            raise ConfigError(f"[problem] expression: {exc}") from None
    _require(16 <= c.n <= 8192, f"[checks] n must lie in [16, 8192], got {c.n}")
    _require(c.tol is None or c.tol > 0, "[checks] tol must be positive")
