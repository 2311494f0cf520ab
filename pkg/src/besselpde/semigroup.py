"""Bessel transition kernel and the semigroup it generates on grid functions.

Everything is computed through the density of ``X_t`` with respect to ``mu``::

    q_t(x, y) = p_t(x, y) * y**(1 - delta)
              = t**-1 (2t)**-nu exp(-(x^2 + y^2) / 2t) * Ired_nu(x y / t)

with ``Ired_nu(z) = (z/2)**-nu I_nu(z)``.  ``q`` is symmetric in ``(x, y)``,
smooth and even in both variables, and finite at the origin, which is why the
discrete semigroup ``P_t f = Q W f`` (``W`` the mu-weights) is exactly
self-adjoint in the discrete ``L^2(mu)`` product.

The x-derivative uses ``d/dx p^delta = (x/t) (p^(delta+2) - p^delta)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from . import specfn
from .mspace import Grid, GridFunction, inner_mu

__all__ = [
    "KernelParams",
    "KernelMatrix",
    "X_MIN",
    "log_mu_density",
    "mu_density",
    "kernel_density",
    "kernel_dx",
    "build_kernel_matrix",
    "apply",
    "apply_dx",
    "apply_at",
    "invariance_defect",
    "transition_cdf",
    "clear_cache",
]

# starting points below this are treated as the origin
X_MIN = 1e-8


@dataclass(frozen=True)
class KernelParams:
    """Dimension ``delta`` and Bessel order ``nu = delta/2 - 1``."""

    delta: float
    nu: float = field(init=False)

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise specfn.DomainError(f"delta must be positive, got {self.delta}")
        object.__setattr__(self, "nu", self.delta / 2.0 - 1.0)

    def shifted(self) -> "KernelParams":
        """Parameters of dimension ``delta + 2``."""
        return KernelParams(self.delta + 2.0)


def _as_params(params) -> KernelParams:
    return params if isinstance(params, KernelParams) else KernelParams(float(params))


def _check_t(t):
    if not (np.isfinite(t) and t > 0):
        raise specfn.DomainError(f"t must be positive, got {t}")


def log_mu_density(params, t: float, x, y):
    """Log of ``q_t(x, y)``, the density of ``X_t`` (started at x) w.r.t. ``mu``.

    Broadcasts over ``x`` and ``y``; both must be non-negative.
    """
    params = _as_params(params)
    _check_t(t)
    nu = params.nu
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any(x < 0) or np.any(y < 0):
        raise specfn.DomainError("x and y must be non-negative")
    x = np.where(x < X_MIN, 0.0, x)
    y = np.where(y < X_MIN, 0.0, y)
    z = x * y / t
    const = -math.log(t) - nu * math.log(2.0 * t)
    out = np.empty(z.shape)
    small = z <= specfn.series_cutoff(nu)
    if small.any():
        xs, ys = x[small], y[small]
        out[small] = const - (xs * xs + ys * ys) / (2.0 * t) + specfn.log_bessel_i_reduced(
            nu, z[small]
        )
    if (~small).any():
        xb, yb, zb = x[~small], y[~small], z[~small]
        out[~small] = (
            const
            - (xb - yb) ** 2 / (2.0 * t)
            + specfn.log_bessel_i_scaled(nu, zb)
            - nu * np.log(0.5 * zb)
        )
    return float(out) if out.ndim == 0 else out


def mu_density(params, t: float, x, y):
    out = np.exp(log_mu_density(params, t, x, y))
    return float(out) if np.ndim(out) == 0 else out


def kernel_density(params, t: float, x, y):
    """Transition density ``p_t(x, y)`` with respect to Lebesgue measure in ``y``.

    ``x = 0`` (or ``x < X_MIN``) gives the closed-form density from the origin.
    """
    params = _as_params(params)
    y_arr = np.asarray(y, dtype=float)
    if np.any(~(y_arr > 0)):
        raise specfn.DomainError("kernel_density requires y > 0")
    out = np.exp(log_mu_density(params, t, x, y_arr) - (1.0 - params.delta) * np.log(y_arr))
    return float(out) if np.ndim(out) == 0 else out


def kernel_dx(params, t: float, x, y):
    """``d/dx p_t(x, y) = (x / t) * (p^(delta+2)_t(x, y) - p^delta_t(x, y))``."""
    params = _as_params(params)
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise specfn.DomainError("kernel_dx requires x > 0")
    p_hi = kernel_density(params.shifted(), t, x_arr, y)
    p_lo = kernel_density(params, t, x_arr, y)
    out = (x_arr / t) * (p_hi - p_lo)
    return float(out) if np.ndim(out) == 0 else out


def _mu_density_dx(params: KernelParams, t: float, x, y):
    # d/dx q_t(x, y) = (x/t) * (y^2 q^(delta+2)_t(x, y) - q_t(x, y)); finite everywhere
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    q_hi = mu_density(params.shifted(), t, x, y)
    q_lo = mu_density(params, t, x, y)
    return (x / t) * (y * y * q_hi - q_lo)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """``rows[i, j] = q_t(x_i, y_j)``: kernel density w.r.t. ``mu`` on a grid.

    Multiply by ``grid.mu_weights`` along ``j`` to integrate in ``y``.  The
    Lebesgue density is ``rows * y**(delta - 1)`` (infinite in the ``y = 0``
    column); :meth:`density` returns it for ``y > 0``.
    """

    params: KernelParams
    t: float
    grid: Grid
    rows: np.ndarray = field(repr=False)
    renormalized: bool = False

    @property
    def row_mass(self) -> np.ndarray:
        return self.rows @ self.grid.mu_weights

    def density(self) -> np.ndarray:
        y = self.grid.nodes[1:]
        return self.rows[:, 1:] * y ** (self.params.delta - 1.0)

    def operator(self) -> np.ndarray:
        """Matrix ``M`` with ``P_t f = M @ f`` on nodal values."""
        return self.rows * self.grid.mu_weights[None, :]

    def diagnostics(self) -> dict:
        mass = self.row_mass
        scale = np.maximum(np.abs(self.rows), np.abs(self.rows.T))
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(scale > 0, np.abs(self.rows - self.rows.T) / scale, 0.0)
        return {
            "delta": self.params.delta,
            "t": self.t,
            "n_nodes": len(self.grid),
            "row_mass_min": float(mass.min()),
            "row_mass_max": float(mass.max()),
            "symmetry_defect_max": float(rel.max()),
            "renormalized": self.renormalized,
        }

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics())

    def to_csv(self) -> str:
        """Long format ``x, y, q`` with full float precision."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y", "q"])
        nodes = self.grid.nodes
        for i, x in enumerate(nodes):
            for j, y in enumerate(nodes):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(self.rows[i, j]))])
        return buf.getvalue()


_cache: dict = {}
_cache_lock = threading.Lock()


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


def _cache_key(params: KernelParams, t: float, grid: Grid, kind: str, renormalize: bool):
    return (
        kind,
        np.float64(params.delta).tobytes(),
        np.float64(t).tobytes(),
        id(grid),
        renormalize,
    )


def _rows(fn, params, t, nodes, threads: int) -> np.ndarray:
    if threads <= 1 or nodes.size < 64:
        return fn(params, t, nodes[:, None], nodes[None, :])
    blocks = np.array_split(np.arange(nodes.size), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda idx: fn(params, t, nodes[idx, None], nodes[None, :]), blocks)
        return np.vstack(list(parts))


def build_kernel_matrix(
    params,
    t: float,
    grid: Grid,
    renormalize: bool = False,
    threads: int = 1,
    cache: bool = True,
) -> KernelMatrix:
    """Kernel matrix on ``grid``, cached per ``(delta, t, grid)`` unless ``cache=False``.

    Truncation loss is left in place unless ``renormalize`` is set, since
    rescaling rows breaks the exact symmetry of the matrix.
    """
    params = _as_params(params)
    _check_t(t)
    key = _cache_key(params, t, grid, "q", renormalize)
    hit = _cache.get(key) if cache else None
    if hit is not None and hit.grid is grid:
        return hit
    rows = _rows(mu_density, params, t, grid.nodes, threads)
    if renormalize:
        rows = rows / (rows @ grid.mu_weights)[:, None]
    rows.setflags(write=False)
    km = KernelMatrix(params=params, t=float(t), grid=grid, rows=rows, renormalized=renormalize)
    if not cache:
        return km
    with _cache_lock:
        _cache.setdefault(key, km)
    return km


def _dx_rows(params: KernelParams, t: float, grid: Grid) -> np.ndarray:
    key = _cache_key(params, t, grid, "dq", False)
    hit = _cache.get(key)
    if hit is not None:
        return hit[1]
    nodes = grid.nodes
    rows = _mu_density_dx(params, t, nodes[:, None], nodes[None, :])
    rows.setflags(write=False)
    with _cache_lock:
        _cache.setdefault(key, (grid, rows))
    return rows


def apply(params, t: float, f: GridFunction) -> GridFunction:
    """``P_t f`` on the grid of ``f``; ``t = 0`` returns ``f`` itself."""
    if t == 0:
        return f
    km = build_kernel_matrix(params, t, f.grid)
    return GridFunction(f.grid, km.rows @ (f.grid.mu_weights * f.values))


def apply_dx(params, t: float, f: GridFunction) -> GridFunction:
    """``(P_t f)'`` computed by integrating ``d/dx q_t(x, y)`` against ``f``."""
    params = _as_params(params)
    _check_t(t)
    rows = _dx_rows(params, t, f.grid)
    return GridFunction(f.grid, rows @ (f.grid.mu_weights * f.values))


def apply_at(params, t: float, f: GridFunction, x) -> np.ndarray | float:
    """``P_t f`` evaluated at arbitrary points ``x >= 0`` (not necessarily nodes)."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        out = np.interp(x_arr, f.grid.nodes, f.values)
    else:
        q = mu_density(params, t, x_arr[:, None], f.grid.nodes[None, :])
        out = q @ (f.grid.mu_weights * f.values)
    return float(out[0]) if np.ndim(x) == 0 else out


def invariance_defect(params, t: float, f: GridFunction) -> float:
    """``|int P_t f dmu - int f dmu| / max(1, |int f dmu|)``."""
    ones = GridFunction(f.grid, np.ones(len(f.grid)))
    before = inner_mu(f, ones)
    after = inner_mu(apply(params, t, f), ones)
    return abs(after - before) / max(1.0, abs(before))


def transition_cdf(params, t: float, x: float, y, n_points: int = 8193):
    """``P(X_t <= y | X_0 = x)`` by quadrature of the kernel.

    With ``s = y**delta`` the integral ``int_0^y q_t(x, z) z^(delta-1) dz``
    becomes ``(1/delta) int q_t(x, s^(1/delta)) ds`` with a smooth integrand,
    which is tabulated with Simpson's rule and interpolated linearly.
    """
    params = _as_params(params)
    _check_t(t)
    y_arr = np.asarray(y, dtype=float)
    y_top = float(x) + math.sqrt(2.0 * t * math.log(1e16))
    s = np.linspace(0.0, y_top**params.delta, n_points)
    z = s ** (1.0 / params.delta)
    dens = mu_density(params, t, float(x), z) / params.delta
    cdf = cumulative_simpson(dens, x=s, initial=0.0)
    out = np.interp(np.clip(y_arr, 0.0, None) ** params.delta, s, cdf, right=cdf[-1])
    return float(out) if out.ndim == 0 else out
