"""Path simulation of the Bessel process and Monte Carlo checks of the semigroup.

The squared process ``S = X^2`` solves ``dS = 2 sqrt(S) dW + delta dt``.  Its
transition over a step ``h`` is a Poisson mixture of Gamma laws,

    N ~ Poisson(S / (2h)),   S' = h * Gamma(shape=delta/2 + N, scale=2),

which :func:`sample_exact` draws directly.  Paths are generated in blocks;
block ``b`` of a run with seed ``s`` always uses the stream
``SeedSequence(s, spawn_key=(b,))``, so results do not depend on the number
of worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .mspace import TestFunction, apply_generator, in_test_space

__all__ = [
    "PathEnsemble",
    "MCEstimate",
    "sample_exact",
    "sample_euler",
    "feynman_kac",
    "martingale_defect",
    "BLOCK_SIZE",
]

BLOCK_SIZE = 8192


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """``paths[k, i]`` is the Bessel value ``X = sqrt(S)`` of path ``k`` at ``times[i]``."""

    delta: float
    x0: float
    times: np.ndarray
    paths: np.ndarray = field(repr=False)
    seed: int
    method: str = "exact"

    def __post_init__(self):
        for name in ("times", "paths"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.paths.ndim != 2 or self.paths.shape[1] != self.times.size:
            raise ValueError("paths must have shape (n_paths, n_times)")
        if np.any(self.paths < 0):
            raise ValueError("Bessel paths must be non-negative")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def time_index(self, t: float) -> int:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12 * max(1.0, abs(t))))
        if idx.size == 0:
            raise ValueError(f"t={t!r} is not a mesh time of the ensemble")
        return int(idx[0])

    def to_csv(self) -> str:
        """One row per path, one column per mesh time."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([repr(float(t)) for t in self.times])
        for row in self.paths:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def save(self, path) -> None:
        """Compact binary export (``.npz``)."""
        np.savez_compressed(
            path,
            delta=self.delta,
            x0=self.x0,
            times=self.times,
            paths=self.paths,
            seed=self.seed,
            method=self.method,
        )

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        with np.load(path) as data:
            return cls(
                delta=float(data["delta"]),
                x0=float(data["x0"]),
                times=data["times"],
                paths=data["paths"],
                seed=int(data["seed"]),
                method=str(data["method"]),
            )


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "MCEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n < 2:
            raise ValueError("need at least two samples")
        return cls(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n)), int(n))

    def z_score(self, reference: float) -> float:
        diff = abs(self.mean - reference)
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.std_error

    def agrees(self, reference: float, k: float = 4.0, slack: float = 0.0) -> bool:
        """``|mean - reference| <= k * std_error + slack``."""
        return abs(self.mean - reference) <= k * self.std_error + slack

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _check_inputs(delta, x0, times, n_paths):
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not x0 >= 0:
        raise ValueError("x0 must be non-negative")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must increase strictly from 0")
    if int(n_paths) < 1:
        raise ValueError("n_paths must be positive")
    return times


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _run_blocks(fn, n_paths: int, seed: int, threads: int) -> np.ndarray:
    sizes = [BLOCK_SIZE] * (n_paths // BLOCK_SIZE)
    if n_paths % BLOCK_SIZE:
        sizes.append(n_paths % BLOCK_SIZE)
    jobs = [(_block_rng(seed, b), size) for b, size in enumerate(sizes)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return np.vstack(parts)


def sample_exact(
    delta: float, x0: float, times, n_paths: int, seed: int = 0, threads: int = 1
) -> PathEnsemble:
    """Exact Bessel paths on ``times`` via the Poisson-Gamma transition of ``S``."""
    times = _check_inputs(delta, x0, times, n_paths)
    steps = np.diff(times)

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        s = np.full(size, float(x0) ** 2)
        out = np.empty((size, times.size))
        out[:, 0] = x0
        for i, h in enumerate(steps, start=1):
            n = rng.poisson(s / (2.0 * h))
            s = h * rng.gamma(0.5 * delta + n, 2.0)
            out[:, i] = np.sqrt(s)
        return out

    paths = _run_blocks(block, int(n_paths), int(seed), threads)
    return PathEnsemble(delta, float(x0), times, paths, int(seed), "exact")


def sample_euler(
    delta: float,
    x0: float,
    times,
    n_substeps: int,
    n_paths: int,
    seed: int = 0,
    threads: int = 1,
    zero_noise: bool = False,
) -> PathEnsemble:
    """Euler-Maruyama for ``dS = 2 sqrt(|S|) dW + delta dt``, clamped at 0 after each step.

    ``n_substeps`` Euler steps are taken inside every mesh interval.  With
    ``zero_noise`` the Brownian increments are set to 0 and ``S`` follows the
    ODE ``S' = delta``.
    """
    times = _check_inputs(delta, x0, times, n_paths)
    if int(n_substeps) < 1:
        raise ValueError("n_substeps must be >= 1")
    steps = np.diff(times)

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        s = np.full(size, float(x0) ** 2)
        out = np.empty((size, times.size))
        out[:, 0] = x0
        for i, h in enumerate(steps, start=1):
            dt = h / n_substeps
            for _ in range(n_substeps):
                dw = 0.0 if zero_noise else rng.normal(0.0, math.sqrt(dt), size)
                s = np.maximum(s + 2.0 * np.sqrt(np.abs(s)) * dw + delta * dt, 0.0)
            out[:, i] = np.sqrt(s)
        return out

    paths = _run_blocks(block, int(n_paths), int(seed), threads)
    return PathEnsemble(delta, float(x0), times, paths, int(seed), "euler")


def feynman_kac(ensemble: PathEnsemble, g: Callable, t: float) -> MCEstimate:
    """Monte Carlo estimate of ``E[g(X_t)]``, i.e. ``P_t g`` at ``x0``."""
    k = ensemble.time_index(t)
    values = np.asarray(g(ensemble.paths[:, k]), dtype=float)
    values = np.broadcast_to(values, (ensemble.n_paths,))
    return MCEstimate.from_samples(values)


def martingale_defect(
    ensemble: PathEnsemble,
    f: TestFunction,
    t: float,
    drop_drift: bool = False,
    boundary: str = "continuous",
) -> MCEstimate:
    """Estimate ``E[f(X_t) - f(x0) - int_0^t L f(X_r) dr]`` along the stored paths.

    The time integral is the trapezoid rule on the ensemble mesh.  With
    ``drop_drift`` the generator is replaced by ``f''/2`` alone; that broken
    generator serves as a negative control.
    """
    # Only f on [0, max path] matters, and any C^2 function with f'(0) = 0
    # coincides there with a member of D; so only the boundary condition is
    # checked when f is not itself compactly supported.
    radius = max(10.0, 2.0 * float(ensemble.paths.max()))
    if not in_test_space(f, radius) and abs(float(f.df(np.array(0.0)))) > 1e-10:
        raise ValueError(f"{getattr(f, 'name', f)} is not in the test space D (f'(0) != 0)")
    k = ensemble.time_index(t)
    x = ensemble.paths[:, : k + 1]
    if drop_drift:
        gen = 0.5 * np.asarray(f.d2f(x), dtype=float)
    else:
        gen = apply_generator(f, ensemble.delta, x, boundary=boundary)
    dt = np.diff(ensemble.times[: k + 1])
    integral = (0.5 * (gen[:, 1:] + gen[:, :-1]) * dt).sum(axis=1)
    defect = f.f(x[:, -1]) - f.f(np.array(ensemble.x0)) - integral
    return MCEstimate.from_samples(defect)
