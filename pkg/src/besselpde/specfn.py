"""Special functions used by the Bessel transition kernel.

The modified Bessel function is only ever needed in two forms:

* the exponentially scaled value ``exp(-z) * I_nu(z)``, which stays O(z**-0.5)
  for large arguments, and
* the "reduced" value ``(z/2)**(-nu) * I_nu(z)``, an entire function of ``z**2``
  that is finite and positive at ``z = 0`` even for negative order.

Both are evaluated with an ascending power series for ``z <= series_cutoff(nu)``
and Hankel's large-argument expansion beyond.  With ``|nu| < 2`` the cutoff is
``z = 25``: there the smallest Hankel term is below ``exp(-2z) ~ 2e-22`` and the
neglected recessive exponential is of the same size, while the series still
sums positive terms only, so both branches agree to rounding at the crossover.
"""

from __future__ import annotations

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "PoleError",
    "BesselOrder",
    "log_gamma",
    "beta",
    "bessel_i_scaled",
    "log_bessel_i_scaled",
    "log_bessel_i_reduced",
    "series_cutoff",
]

_EPS = 1e-17
_MAX_TERMS = 500


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class PoleError(ArithmeticError):
    """Evaluation requested exactly at a pole (e.g. I_nu(0) for nu < 0)."""


class BesselOrder(float):
    """Order ``nu`` of a modified Bessel function, restricted to ``nu > -1``."""

    def __new__(cls, nu):
        nu = float(nu)
        if not np.isfinite(nu) or nu <= -1.0:
            raise DomainError(f"Bessel order must satisfy nu > -1, got {nu}")
        return super().__new__(cls, nu)

    @property
    def nu(self) -> float:
        return float(self)


def log_gamma(x):
    """Natural log of the Gamma function for ``x > 0``."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("log_gamma requires x > 0")
    out = special.gammaln(arr)
    return float(out) if out.ndim == 0 else out


def beta(a, b):
    """Euler Beta function ``Gamma(a) Gamma(b) / Gamma(a + b)`` for ``a, b > 0``."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(~(a_arr > 0)) or np.any(~(b_arr > 0)):
        raise DomainError("beta requires a > 0 and b > 0")
    out = special.beta(a_arr, b_arr)
    return float(out) if out.ndim == 0 else out


def series_cutoff(nu: float) -> float:
    """Argument above which the large-z expansion replaces the power series."""
    return max(25.0, 2.0 * nu * nu)


def _log_reduced_series(nu: float, z: np.ndarray) -> np.ndarray:
    # sum_k (z^2/4)^k / (k! Gamma(nu+k+1)); every term is positive for nu > -1
    q = 0.25 * z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    k = 0
    while active.any():
        k += 1
        if k > _MAX_TERMS:
            raise RuntimeError("Bessel power series failed to converge")
        term = np.where(active, term * q / (k * (nu + k)), 0.0)
        total = total + term
        active = term > _EPS * total
    return np.log(total) - special.gammaln(nu + 1.0)


def _log_scaled_asymptotic(nu: float, z: np.ndarray) -> np.ndarray:
    # Hankel: exp(-z) I_nu(z) ~ (2 pi z)^(-1/2) sum_k (-1)^k a_k(nu) / z^k
    mu = 4.0 * nu * nu
    term = np.ones_like(z)
    total = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    k = 0
    while active.any():
        k += 1
        if k > _MAX_TERMS:
            break
        nxt = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        growing = np.abs(nxt) >= np.abs(term)
        active &= ~growing
        term = np.where(active, nxt, 0.0)
        total = total + term
        active &= np.abs(term) > _EPS * np.abs(total)
    return np.log(total) - 0.5 * np.log(2.0 * np.pi * z)


def log_bessel_i_reduced(nu, z):
    """Log of ``(z/2)**(-nu) * I_nu(z)`` for ``z >= 0`` and ``nu > -1``.

    Finite at ``z = 0`` where it equals ``-log Gamma(nu + 1)``.
    """
    nu = BesselOrder(nu).nu
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr >= 0)):
        raise DomainError("log_bessel_i_reduced requires z >= 0")
    flat = np.atleast_1d(z_arr).ravel()
    out = np.empty_like(flat)
    small = flat <= series_cutoff(nu)
    if small.any():
        out[small] = _log_reduced_series(nu, flat[small])
    if (~small).any():
        zb = flat[~small]
        out[~small] = _log_scaled_asymptotic(nu, zb) + zb - nu * np.log(0.5 * zb)
    out = out.reshape(np.shape(z_arr))
    return float(out) if out.ndim == 0 else out


def log_bessel_i_scaled(nu, z):
    """Log of ``exp(-z) * I_nu(z)`` for ``z > 0`` (``z = 0`` allowed when ``nu >= 0``)."""
    nu = BesselOrder(nu).nu
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr >= 0)):
        raise DomainError("bessel_i_scaled requires z >= 0")
    if nu < 0 and np.any(z_arr == 0):
        raise PoleError(f"I_nu(0) is infinite for nu = {nu} < 0")
    flat = np.atleast_1d(z_arr).ravel()
    out = np.empty_like(flat)
    small = flat <= series_cutoff(nu)
    if small.any():
        zs = flat[small]
        with np.errstate(divide="ignore"):
            lead = np.where(zs > 0, nu * np.log(0.5 * np.where(zs > 0, zs, 1.0)), 0.0)
        # nu > 0 at z = 0: the leading power drives the value to zero
        lead = np.where((zs == 0) & (nu > 0), -np.inf, lead)
        out[small] = _log_reduced_series(nu, zs) + lead - zs
    if (~small).any():
        out[~small] = _log_scaled_asymptotic(nu, flat[~small])
    out = out.reshape(np.shape(z_arr))
    return float(out) if out.ndim == 0 else out


def bessel_i_scaled(nu, z):
    """Exponentially scaled modified Bessel function ``exp(-z) * I_nu(z)``.

    Parameters
    ----------
    nu : float
        Order, ``nu > -1``.
    z : float or array_like
        Non-negative argument.

    Raises
    ------
    PoleError
        If ``z == 0`` and ``nu < 0``; the value is +inf there and kernel
        callers must use the reduced form instead.
    DomainError
        For ``nu <= -1`` or negative ``z``.
    """
    out = np.exp(log_bessel_i_scaled(nu, z))
    return float(out) if np.ndim(out) == 0 else out
