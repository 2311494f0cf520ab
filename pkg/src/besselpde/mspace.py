"""Discrete weighted spaces L^2(mu) and H on a truncated half-line.

``mu(dx) = x**(delta - 1) dx`` is integrable but unbounded at the origin, so
quadrature weights come from product integration: on each panel the integrand
is replaced by its Lagrange interpolant and the interpolant is integrated
exactly against ``x**(delta - 1)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

__all__ = [
    "Grid",
    "GridFunction",
    "SobolevNorms",
    "TestFunction",
    "make_grid",
    "default_x_max",
    "inner_mu",
    "derivative",
    "norms",
    "apply_generator",
    "in_test_space",
    "bump",
    "even_bump",
    "gaussian_bump",
    "constant",
]

SCHEMES = ("uniform", "graded")
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


class GridMismatchError(ValueError):
    """Two grid functions live on different grids."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Nodes on ``[0, x_max]`` with weights for integrals against ``mu``."""

    nodes: np.ndarray
    mu_weights: np.ndarray
    x_max: float
    delta: float
    scheme: str = "graded"
    order: int = 2

    def __post_init__(self):
        for arr in (self.nodes, self.mu_weights):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def n(self) -> int:
        """Number of cells."""
        return self.nodes.size - 1

    @property
    def mass(self) -> float:
        return float(self.mu_weights.sum())

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def sample(self, fn: Callable) -> "GridFunction":
        return GridFunction(self, fn(self.nodes))

    def key(self) -> tuple:
        return (self.delta, self.x_max, self.scheme, self.order, self.nodes.tobytes())


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values sampled at the nodes of a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise ValueError(
                f"expected {self.grid.nodes.size} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def _same(self, other: "GridFunction") -> None:
        if other.grid is not self.grid:
            raise GridMismatchError("grid functions are defined on different grids")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._same(other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._same(other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node", "value"])
        for x, v in zip(self.grid.nodes, self.values):
            writer.writerow([repr(float(x)), repr(float(v))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "delta": self.grid.delta,
                "x_max": self.grid.x_max,
                "scheme": self.grid.scheme,
                "order": self.grid.order,
                "nodes": self.grid.nodes.tolist(),
                "mu_weights": self.grid.mu_weights.tolist(),
                "values": self.values.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        data = json.loads(text)
        grid = Grid(
            nodes=np.array(data["nodes"], dtype=float),
            mu_weights=np.array(data["mu_weights"], dtype=float),
            x_max=float(data["x_max"]),
            delta=float(data["delta"]),
            scheme=data.get("scheme", "uniform"),
            order=int(data.get("order", 2)),
        )
        return cls(grid, np.array(data["values"], dtype=float))

    @classmethod
    def from_csv(cls, text: str, grid: Grid) -> "GridFunction":
        """Read values written by :meth:`to_csv`; nodes must match ``grid`` exactly."""
        rows = list(csv.reader(io.StringIO(text)))
        body = np.array([[float(a), float(b)] for a, b in rows[1:]])
        if body.shape[0] != len(grid) or not np.array_equal(body[:, 0], grid.nodes):
            raise GridMismatchError("CSV nodes do not match the grid")
        return cls(grid, body[:, 1])


class SobolevNorms(NamedTuple):
    l2: float
    h: float
    form: float


class TestFunction(NamedTuple):
    """A twice differentiable function with its first two derivatives."""

    f: Callable
    df: Callable
    d2f: Callable
    name: str = "phi"

    def __call__(self, x):
        return self.f(x)


def default_x_max(T: float, support_radius: float = 0.0) -> float:
    """Truncation radius so that ``exp(-x_max**2 / (2T)) < 1e-12`` beyond the data."""
    return math.sqrt(2.0 * T * math.log(1e12)) + support_radius


def _graded_nodes(x_max: float, n: int, delta: float, order: int) -> np.ndarray:
    # Panel boundaries: a power-law block near 0 with b ~ (i/m)**(1/delta), then
    # uniform panels as wide as the last graded one.  Nodes inside a panel are
    # equispaced, which keeps the product weights positive.
    panels, extra = divmod(n, order)
    m = max(2, panels // 8)
    p = 1.0 / delta
    width = x_max / (panels - m + m / p)
    x_c = m * width / p
    bounds = np.concatenate(
        [x_c * (np.arange(m + 1) / m) ** p, x_c + width * np.arange(1, panels - m + 1)]
    )
    bounds[-1] = x_max
    pieces = [np.linspace(lo, hi, order + 1)[:-1] for lo, hi in zip(bounds[:-1], bounds[1:])]
    nodes = np.concatenate(pieces + [[x_max]])
    if extra:
        # leftover cells split the last (uniform) panel
        tail = np.linspace(nodes[-order - 1], x_max, order + extra + 1)
        nodes = np.concatenate([nodes[: -order - 1], tail])
    return nodes


def _lagrange_basis(panel: np.ndarray, x: np.ndarray) -> np.ndarray:
    # rows: basis index j, columns: evaluation points
    out = np.ones((panel.size, x.size))
    for j, xj in enumerate(panel):
        for m, xm in enumerate(panel):
            if m != j:
                out[j] *= (x - xm) / (xj - xm)
    return out


def _jacobi_rule(b: float, npts: int, delta: float):
    # nodes/weights for int_0^b x^(delta-1) g(x) dx, exact for deg g <= 2 npts - 1
    s, w = special.roots_jacobi(npts, 0.0, delta - 1.0)
    x = 0.5 * b * (s + 1.0)
    return x, w * (0.5 * b) ** delta


def _panel_weights(panel: np.ndarray, delta: float) -> np.ndarray:
    a, b = panel[0], panel[-1]
    width = b - a
    deg = panel.size - 1
    if a <= 2.0 * width:
        npts = deg // 2 + 2
        xb, wb = _jacobi_rule(b, npts, delta)
        w = _lagrange_basis(panel, xb) @ wb
        if a > 0:
            xa, wa = _jacobi_rule(a, npts, delta)
            w -= _lagrange_basis(panel, xa) @ wa
        return w
    # weight analytic on the panel: Gauss-Legendre of x^(delta-1) * basis
    x = a + 0.5 * width * (_GL_NODES + 1.0)
    wq = 0.5 * width * _GL_WEIGHTS * x ** (delta - 1.0)
    return _lagrange_basis(panel, x) @ wq


def mu_weights_for(nodes: np.ndarray, delta: float, order: int = 2) -> np.ndarray:
    """Product-integration weights for ``int f dmu`` over ``[nodes[0], nodes[-1]]``."""
    n = nodes.size - 1
    weights = np.zeros(nodes.size)
    start = 0
    while start < n:
        k = min(order, n - start)
        panel = nodes[start : start + k + 1]
        weights[start : start + k + 1] += _panel_weights(panel, delta)
        start += k
    return weights


def make_grid(
    delta: float,
    x_max: float,
    n: int,
    scheme: str = "graded",
    order: int = 2,
) -> Grid:
    """Build a grid of ``n`` cells on ``[0, x_max]`` with ``mu``-quadrature weights.

    ``order`` is the interpolation degree per panel (panels of ``order`` cells);
    the default 2 makes every panel exact for quadratics against ``x**(delta-1)``.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not x_max > 0:
        raise ValueError(f"x_max must be positive, got {x_max}")
    if int(n) != n or n < 16:
        raise ValueError(f"n must be an integer >= 16, got {n}")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    n = int(n)
    if scheme == "uniform":
        nodes = np.linspace(0.0, x_max, n + 1)
    else:
        nodes = _graded_nodes(x_max, n, delta, order)
    weights = mu_weights_for(nodes, delta, order)
    return Grid(nodes=nodes, mu_weights=weights, x_max=float(x_max), delta=float(delta),
                scheme=scheme, order=order)


def inner_mu(f: GridFunction, g: GridFunction) -> float:
    """Discrete ``<f, g>`` in ``L^2(mu)``."""
    f._same(g)
    return float(np.sum(f.values * g.values * f.grid.mu_weights))


def derivative(f: GridFunction) -> GridFunction:
    """Second-order finite-difference derivative (one-sided at both ends)."""
    return GridFunction(f.grid, np.gradient(f.values, f.grid.nodes, edge_order=2))


def norms(f: GridFunction) -> SobolevNorms:
    l2_sq = inner_mu(f, f)
    df = derivative(f)
    form = 0.5 * inner_mu(df, df)
    return SobolevNorms(l2=math.sqrt(max(l2_sq, 0.0)), h=math.sqrt(max(l2_sq + form, 0.0)),
                        form=form)


def apply_generator(f: TestFunction, delta: float, x, boundary: str = "continuous"):
    """``f''/2 + (delta-1) f'/(2x)`` for ``x > 0``.

    At ``x = 0`` the default is the continuous extension ``delta f''(0) / 2``
    (for ``f'(0) = 0`` the drift term tends to ``(delta-1) f''(0) / 2``), which is
    also what the kernel semigroup generates.  ``boundary="literal"`` returns
    ``delta f''(0)`` instead, twice the limit.
    """
    if boundary not in ("continuous", "literal"):
        raise ValueError("boundary must be 'continuous' or 'literal'")
    x_arr = np.asarray(x, dtype=float)
    d2 = np.asarray(f.d2f(x_arr), dtype=float)
    d1 = np.asarray(f.df(x_arr), dtype=float)
    pos = x_arr > 0
    safe = np.where(pos, x_arr, 1.0)
    at0 = delta * d2 if boundary == "literal" else 0.5 * delta * d2
    out = np.where(pos, 0.5 * d2 + 0.5 * (delta - 1.0) * d1 / safe, at0)
    return float(out) if out.ndim == 0 else out


def in_test_space(f: TestFunction, x_max: float, tol: float = 1e-10, samples: int = 4001) -> bool:
    """Heuristic membership in D: ``f'(0) = 0`` and support inside ``[0, x_max)``."""
    if abs(float(f.df(np.array(0.0)))) > tol:
        return False
    x = np.linspace(0.0, x_max, samples)
    mag = np.maximum.reduce([np.abs(f.f(x)), np.abs(f.df(x)), np.abs(f.d2f(x))])
    live = np.nonzero(mag > tol)[0]
    if live.size == 0:
        return True
    # needs a nonempty stretch of exact zeros before x_max
    return live[-1] < samples - 2


# Test-function factories.  All are C^2 with compact support and even or
# vanishing near 0, so they belong to D.

def bump(center: float, radius: float, scale: float = 1.0, name: str | None = None) -> TestFunction:
    """``scale * (1 - s^2)^4`` with ``s = (x - center) / radius``, zero outside."""

    def f(x):
        s = (np.asarray(x, dtype=float) - center) / radius
        return np.where(np.abs(s) < 1, scale * (1 - s * s) ** 4, 0.0)

    def df(x):
        s = (np.asarray(x, dtype=float) - center) / radius
        return np.where(np.abs(s) < 1, scale * -8 * s * (1 - s * s) ** 3 / radius, 0.0)

    def d2f(x):
        s = (np.asarray(x, dtype=float) - center) / radius
        val = (-8 * (1 - s * s) ** 3 + 48 * s * s * (1 - s * s) ** 2) / radius**2
        return np.where(np.abs(s) < 1, scale * val, 0.0)

    return TestFunction(f, df, d2f, name or f"bump(c={center},r={radius})")


def even_bump(radius: float, scale: float = 1.0) -> TestFunction:
    """A bump centred at 0; even, so its derivative vanishes at the origin."""
    return bump(0.0, radius, scale, name=f"even_bump(r={radius})")


def gaussian_bump(width: float, radius: float) -> TestFunction:
    """``exp(-x^2 / width^2)`` times an even bump of the given radius."""
    b = even_bump(radius)
    c = 1.0 / width**2

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-c * x * x) * b.f(x)

    def df(x):
        x = np.asarray(x, dtype=float)
        e = np.exp(-c * x * x)
        return e * (b.df(x) - 2 * c * x * b.f(x))

    def d2f(x):
        x = np.asarray(x, dtype=float)
        e = np.exp(-c * x * x)
        return e * (b.d2f(x) - 4 * c * x * b.df(x) + (4 * c * c * x * x - 2 * c) * b.f(x))

    return TestFunction(f, df, d2f, f"gaussian_bump(w={width},r={radius})")


def constant(value: float = 1.0) -> TestFunction:
    return TestFunction(
        lambda x: np.full(np.shape(x), value, dtype=float),
        lambda x: np.zeros(np.shape(x)),
        lambda x: np.zeros(np.shape(x)),
        f"constant({value})",
    )
