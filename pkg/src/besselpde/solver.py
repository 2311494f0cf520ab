"""Mild solutions of the semilinear backward equation by Picard iteration.

On a time mesh ``0 = t_0 < ... < t_N = T`` the Duhamel map is

    (A u)(t_i) = P_{T - t_i} g + sum_j c_ij P_{t_j - t_i} f(t_j, ., u_j, u_j')

with composite-trapezoid weights ``c_ij`` over ``[t_i, T]`` (``P_0`` is the
identity).  ``A^2`` contracts in the weighted norm
``||u||_{B,lam} = int exp(lam t) ||u(t)||_H dt`` once ``lam > C_T^2 T pi`` with
``C_T = sqrt(2) C (sqrt(T) + 1)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import semigroup
from .mspace import Grid, GridFunction, TestFunction, apply_generator, in_test_space
from .semigroup import KernelParams

__all__ = [
    "SemilinearProblem",
    "TimeMesh",
    "SpaceTimeFunction",
    "SolverReport",
    "Propagator",
    "NonFiniteNonlinearity",
    "contraction_constant",
    "default_lambda",
    "lambda_threshold",
    "b_lambda_norm",
    "linear_solution",
    "apply_A",
    "mild_residual",
    "solve",
    "weak_residual",
    "a2_contraction_ratio",
    "PRESETS",
    "preset",
]

log = logging.getLogger(__name__)


class NonFiniteNonlinearity(FloatingPointError):
    """The nonlinearity returned a non-finite value."""


@dataclass(frozen=True, eq=False)
class TimeMesh:
    times: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a time mesh needs at least two points")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("mesh times must start at 0 and increase strictly")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, T: float, n_steps: int) -> "TimeMesh":
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        times = np.linspace(0.0, T, n_steps + 1)
        times[-1] = T
        return cls(times)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def trapezoid_weights(self) -> np.ndarray:
        """``c[i, j]``: weight of node ``j`` in the trapezoid rule over ``[t_i, T]``."""
        t = self.times
        n = t.size
        dt = np.diff(t)
        c = np.zeros((n, n))
        for i in range(n - 1):
            c[i, i:-1] += 0.5 * dt[i:]
            c[i, i + 1 :] += 0.5 * dt[i:]
        return c


@dataclass(frozen=True, eq=False)
class SpaceTimeFunction:
    """Grid functions on a common grid, one per mesh time (``values[i]`` at ``t_i``)."""

    mesh: TimeMesh
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.times.size, len(self.grid)):
            raise ValueError(f"values must have shape (n_times, n_nodes), got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def slices(self) -> list[GridFunction]:
        return [GridFunction(self.grid, row) for row in self.values]

    def at(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.values[i])

    def __sub__(self, other: "SpaceTimeFunction") -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.mesh, self.grid, self.values - other.values)

    def __add__(self, other: "SpaceTimeFunction") -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.mesh, self.grid, self.values + other.values)

    def derivative(self) -> np.ndarray:
        return np.gradient(self.values, self.grid.nodes, axis=1, edge_order=2)

    def l2_norms(self) -> np.ndarray:
        return np.sqrt(np.maximum((self.values**2) @ self.grid.mu_weights, 0.0))

    def h_norms(self) -> np.ndarray:
        d = self.derivative()
        sq = (self.values**2 + 0.5 * d**2) @ self.grid.mu_weights
        return np.sqrt(np.maximum(sq, 0.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "x", "u"])
        for t, row in zip(self.mesh.times, self.values):
            for x, v in zip(self.grid.nodes, row):
                writer.writerow([repr(float(t)), repr(float(x)), repr(float(v))])
        return buf.getvalue()

    def to_json(self, **metadata) -> str:
        return json.dumps(
            {
                "delta": self.grid.delta,
                "x_max": self.grid.x_max,
                "scheme": self.grid.scheme,
                "times": self.mesh.times.tolist(),
                "nodes": self.grid.nodes.tolist(),
                "values": self.values.tolist(),
                **metadata,
            }
        )


@dataclass
class SemilinearProblem:
    """Terminal value problem ``(d_t + L) u + f(t, x, u, u') = 0``, ``u(T) = g``.

    ``f`` is called with broadcastable arrays and must be vectorized.
    """

    T: float
    delta: float
    g: GridFunction
    f: Callable
    lipschitz_c: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.lipschitz_c > 0:
            raise ValueError("lipschitz_c must be positive")

    @property
    def params(self) -> KernelParams:
        return KernelParams(self.delta)

    def f0(self, t, x):
        return self.f(t, x, np.zeros_like(np.asarray(x, dtype=float)),
                      np.zeros_like(np.asarray(x, dtype=float)))

    def check_lipschitz(self, n_samples: int = 2000, scale: float = 10.0, seed: int = 0) -> float:
        """Largest observed ``|f(y1, z1) - f(y2, z2)| / (|y1 - y2| + |z1 - z2|)``.

        A value above ``lipschitz_c`` (beyond rounding) means the declared
        constant is wrong; a value below it cannot certify anything.
        """
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, self.T, n_samples)
        x = rng.uniform(0, self.g.grid.x_max, n_samples)
        y1, y2, z1, z2 = rng.normal(0, scale, (4, n_samples))
        num = np.abs(self.f(t, x, y1, z1) - self.f(t, x, y2, z2))
        den = np.abs(y1 - y2) + np.abs(z1 - z2)
        return float(np.max(num / den))


@dataclass
class SolverReport:
    iterations: int
    residual_history: list
    lam: float
    contraction_estimate: float
    one_step_ratio: float
    final_mild_residual: float
    converged: bool
    tol: float
    norm_scale: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def contraction_constant(lipschitz_c: float, T: float) -> float:
    """``C_T = sqrt(2) C (sqrt(T) + 1)``."""
    return math.sqrt(2.0) * lipschitz_c * (math.sqrt(T) + 1.0)


def lambda_threshold(lipschitz_c: float, T: float) -> float:
    """``C_T^2 T pi``; any larger weight makes ``A^2`` a contraction."""
    return contraction_constant(lipschitz_c, T) ** 2 * T * math.pi


def default_lambda(lipschitz_c: float, T: float) -> float:
    return 2.0 * lambda_threshold(lipschitz_c, T)


def _trapz(values: np.ndarray, times: np.ndarray) -> float:
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def b_lambda_norm(u: SpaceTimeFunction, lam: float = 0.0) -> float:
    """Trapezoidal ``int_0^T exp(lam t) ||u(t)||_H dt``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    t = u.mesh.times
    return _trapz(np.exp(lam * t) * u.h_norms(), t)


def _weight_mass(mesh: TimeMesh, lam: float) -> float:
    t = mesh.times
    return _trapz(np.exp(lam * t), t)


class Propagator:
    """Kernel operators for every lag a mesh needs, built once and reused.

    ``quadrature="trapezoid"`` integrates ``s -> P_{s-t_i} l(s)`` with the
    composite trapezoid rule on mesh points (``P_0`` the identity at ``s = t_i``).
    ``quadrature="midpoint"`` uses ``dt_j P_{m_j - t_i} (l_j + l_{j+1}) / 2`` with
    ``m_j`` the cell midpoints, so the kernel is never evaluated at lag 0.  The
    trapezoid rule passes ``l(t_i)`` through unsmoothed, so when ``f`` depends
    on ``u'`` each sweep differentiates it once more on the grid and the
    iteration can blow up; the midpoint rule avoids that.
    """

    def __init__(
        self, params, grid: Grid, mesh: TimeMesh, quadrature: str = "trapezoid", threads: int = 1
    ):
        if quadrature not in ("trapezoid", "midpoint"):
            raise ValueError("quadrature must be 'trapezoid' or 'midpoint'")
        self.params = params if isinstance(params, KernelParams) else KernelParams(params)
        self.grid = grid
        self.mesh = mesh
        self.quadrature = quadrature
        self.threads = threads
        t = mesh.times
        n = t.size
        scale = max(mesh.T, 1.0)
        if quadrature == "trapezoid":
            c = mesh.trapezoid_weights()
            self._diag = np.diag(c).copy()
            ii, jj = np.triu_indices(n, k=1)
            lag = t[jj] - t[ii]
            w = c[ii, jj]
        else:
            self._diag = np.zeros(n)
            ii, jj = np.triu_indices(n - 1)
            mid = 0.5 * (t[1:] + t[:-1])
            lag = mid[jj] - t[ii]
            w = np.diff(t)[jj]
        keys = np.round(lag / scale, 12)
        self._pairs: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._lag_value: dict[float, float] = {}
        for key in np.unique(keys):
            sel = keys == key
            self._pairs[key] = (ii[sel], jj[sel], w[sel])
            self._lag_value[key] = float(lag[sel][0])
        self._terminal = []
        for ti in t[:-1]:
            key = float(np.round((mesh.T - ti) / scale, 12))
            self._lag_value.setdefault(key, mesh.T - ti)
            self._terminal.append(key)
        self._ops: dict[float, np.ndarray] = {}

    @property
    def n_operators(self) -> int:
        return len(self._lag_value)

    def operator(self, key: float) -> np.ndarray:
        op = self._ops.get(key)
        if op is None:
            km = semigroup.build_kernel_matrix(
                self.params, self._lag_value[key], self.grid, threads=self.threads, cache=False
            )
            op = km.operator()
            self._ops[key] = op
        return op

    def flow(self, g: np.ndarray) -> np.ndarray:
        """Rows ``P_{T - t_i} g``."""
        out = np.empty((self.mesh.times.size, g.size))
        out[-1] = g
        for i, key in enumerate(self._terminal):
            out[i] = self.operator(key) @ g
        return out

    def duhamel(self, l: np.ndarray) -> np.ndarray:
        """Rows approximating ``int_{t_i}^T P_{s - t_i} l(s) ds``."""
        src = l if self.quadrature == "trapezoid" else 0.5 * (l[1:] + l[:-1])
        out = self._diag[:, None] * l
        for key, (ii, jj, w) in self._pairs.items():
            contrib = (self.operator(key) @ (src[jj] * w[:, None]).T).T
            np.add.at(out, ii, contrib)
        return out


def linear_solution(
    g: GridFunction,
    l: SpaceTimeFunction | np.ndarray | None,
    params,
    mesh: TimeMesh,
    propagator: Propagator | None = None,
    quadrature: str = "trapezoid",
) -> SpaceTimeFunction:
    """``v(t) = P_{T-t} g + int_t^T P_{s-t} l(s) ds`` on the mesh.

    The time integral uses ``quadrature`` (see :class:`Propagator`); an explicit
    ``propagator`` takes precedence.
    """
    prop = propagator or Propagator(params, g.grid, mesh, quadrature)
    out = prop.flow(g.values)
    if l is not None:
        lv = l.values if isinstance(l, SpaceTimeFunction) else np.asarray(l, dtype=float)
        out = out + prop.duhamel(lv)
    return SpaceTimeFunction(mesh, g.grid, out)


def _nonlinearity(problem: SemilinearProblem, u: SpaceTimeFunction) -> np.ndarray:
    t = u.mesh.times[:, None]
    x = u.grid.nodes[None, :]
    l = np.asarray(problem.f(t, x, u.values, u.derivative()), dtype=float)
    l = np.broadcast_to(l, u.values.shape)
    bad = ~np.isfinite(l)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFiniteNonlinearity(
            f"f is not finite at t={float(u.mesh.times[i])!r}, x={float(u.grid.nodes[j])!r}"
        )
    return l


def apply_A(
    problem: SemilinearProblem,
    u: SpaceTimeFunction,
    propagator: Propagator | None = None,
    quadrature: str = "midpoint",
) -> SpaceTimeFunction:
    """The Duhamel map applied to ``u``."""
    prop = propagator or Propagator(problem.params, u.grid, u.mesh, quadrature)
    return linear_solution(problem.g, _nonlinearity(problem, u), problem.params, u.mesh, prop)


def mild_residual(
    problem: SemilinearProblem,
    u: SpaceTimeFunction,
    propagator: Propagator | None = None,
    quadrature: str = "midpoint",
) -> np.ndarray:
    """``||u(t_i) - (A u)(t_i)||_mu`` at every mesh time."""
    return (u - apply_A(problem, u, propagator, quadrature)).l2_norms()


def a2_contraction_ratio(
    problem: SemilinearProblem,
    u: SpaceTimeFunction,
    v: SpaceTimeFunction,
    lam: float,
    propagator: Propagator | None = None,
    quadrature: str = "midpoint",
) -> float:
    """``||A^2 u - A^2 v||_{B,lam} / ||u - v||_{B,lam}``."""
    prop = propagator or Propagator(problem.params, u.grid, u.mesh, quadrature)
    a2u = apply_A(problem, apply_A(problem, u, prop), prop)
    a2v = apply_A(problem, apply_A(problem, v, prop), prop)
    return b_lambda_norm(a2u - a2v, lam) / b_lambda_norm(u - v, lam)


def solve(
    problem: SemilinearProblem,
    mesh: TimeMesh,
    grid: Grid | None = None,
    tol: float = 1e-6,
    max_iter: int = 50,
    lam: float | None = None,
    u0: SpaceTimeFunction | None = None,
    propagator: Propagator | None = None,
    quadrature: str = "midpoint",
) -> tuple[SpaceTimeFunction, SolverReport]:
    """Picard iteration ``u_{k+1} = A u_k``.

    Stops when the step ``||u_{k+1} - u_k||_{B,lam}``, divided by
    ``int_0^T exp(lam t) dt`` so the test does not depend on the size of the
    weight, drops below ``tol`` and the mild residual of the last iterate is
    below ``tol`` at every mesh time.  Without convergence after ``max_iter``
    sweeps the last iterate is returned with ``report.converged = False``.

    The Duhamel integral defaults to the midpoint rule, which stays stable when
    ``f`` depends on ``u'``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = grid or problem.g.grid
    if grid is not problem.g.grid:
        raise ValueError("the terminal datum must live on the solver grid")
    if abs(mesh.T - problem.T) > 1e-12 * max(1.0, problem.T):
        raise ValueError("mesh does not end at the problem horizon")
    lam = default_lambda(problem.lipschitz_c, problem.T) if lam is None else float(lam)
    prop = propagator or Propagator(problem.params, grid, mesh, quadrature)
    scale = _weight_mass(mesh, lam)

    u = u0 if u0 is not None else linear_solution(problem.g, None, problem.params, mesh, prop)
    history: list[float] = []
    converged = False
    final_residual = math.inf
    iterations = 0
    nxt = apply_A(problem, u, prop)
    for iterations in range(1, max_iter + 1):
        step = b_lambda_norm(nxt - u, lam)
        history.append(step)
        u = nxt
        nxt = apply_A(problem, u, prop)
        if step / scale <= tol:
            final_residual = float((u - nxt).l2_norms().max())
            log.debug("iteration %d: step %.3e, mild residual %.3e", iterations, step, final_residual)
            if final_residual <= tol:
                converged = True
                break
    else:
        final_residual = float((u - nxt).l2_norms().max())
        log.warning("Picard iteration did not converge in %d sweeps", max_iter)

    h = [s for s in history if s > 0]
    one_step = max((b / a for a, b in zip(h, h[1:])), default=0.0)
    two_step = max((b / a for a, b in zip(h, h[2:])), default=0.0)
    report = SolverReport(
        iterations=iterations,
        residual_history=history,
        lam=lam,
        contraction_estimate=two_step,
        one_step_ratio=one_step,
        final_mild_residual=final_residual,
        converged=converged,
        tol=tol,
        norm_scale=scale,
    )
    return u, report


def weak_residual(
    u: SpaceTimeFunction, problem: SemilinearProblem, test_fns: list[TestFunction]
) -> np.ndarray:
    """Max over mesh times of the weak-formulation defect, one entry per test function.

    The defect at ``t`` is ``<u(t), phi> - <g, phi> - int_t^T <u(s), L phi> ds
    - int_t^T <f(s, ., u(s), u'(s)), phi> ds`` with trapezoidal time integrals.
    """
    grid = u.grid
    w = grid.mu_weights
    t = u.mesh.times
    l = _nonlinearity(problem, u)
    out = []
    for phi in test_fns:
        if not in_test_space(phi, grid.x_max):
            raise ValueError(f"{getattr(phi, 'name', phi)} is not in the test space D")
        phi_v = phi.f(grid.nodes) * w
        lphi_v = apply_generator(phi, problem.delta, grid.nodes) * w
        lhs = u.values @ phi_v
        integrand = u.values @ lphi_v + l @ phi_v
        seg = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(t)
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        defect = lhs - problem.g.values @ phi_v - tail
        out.append(float(np.max(np.abs(defect))))
    return np.array(out)


def _zero(t, x, u, v):
    return np.zeros(np.broadcast(t, x, u, v).shape)


def _linear(t, x, u, v):
    return np.broadcast_to(np.asarray(u, dtype=float), np.broadcast(t, x, u, v).shape)


def _sin(t, x, u, v):
    return np.broadcast_to(np.sin(u), np.broadcast(t, x, u, v).shape)


def _u_plus_du(t, x, u, v):
    return np.broadcast_to(np.asarray(u) + np.asarray(v), np.broadcast(t, x, u, v).shape)


# name -> (f, Lipschitz constant C in |f(y1,z1) - f(y2,z2)| <= C(|y1-y2| + |z1-z2|))
PRESETS = {
    "zero": (_zero, 1.0),
    "linear": (_linear, 1.0),
    "sin": (_sin, 1.0),
    "u_plus_du": (_u_plus_du, 1.0),
}


def preset(name: str):
    """Nonlinearity and Lipschitz constant of a named preset."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
