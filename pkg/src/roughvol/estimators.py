"""Block volatility estimators and model-free roughness diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import C_FLOOR

L_FLOOR = 1e-12


@dataclass(frozen=True)
class EcfEstimate:
    l_hat: complex
    c_hat: float
    frak_c: float | None
    u: float
    block_id: tuple | None = None
    degenerate: bool = False


def ecf_block(returns, delta_n: float, u: float, block_id: tuple | None = None) -> EcfEstimate:
    """Spot variance from the modulus of the local empirical characteristic function.

    ``L = mean(exp(1j * u * r / sqrt(delta_n)))`` and ``c = -2 log|L| / u**2``.
    The log-variance is left undefined (and the block flagged) when ``c`` is at or
    below ``C_FLOOR`` or ``|L|`` underflows below ``1e-12``.
    """
    if u == 0:
        raise ValueError("characteristic exponent u must be nonzero")
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        raise ValueError("empty block")
    z = np.exp(1j * (u / math.sqrt(delta_n)) * r).mean()
    mod = min(abs(z), 1.0)
    if mod < L_FLOOR:
        c_hat = -2.0 / u**2 * math.log(L_FLOOR)
        return EcfEstimate(complex(z), c_hat, None, u, block_id, True)
    c_hat = -2.0 / u**2 * math.log(mod)
    if c_hat <= C_FLOOR:
        return EcfEstimate(complex(z), max(c_hat, 0.0), None, u, block_id, True)
    return EcfEstimate(complex(z), c_hat, math.log(c_hat), u, block_id, False)


def ecf_log_variance(returns: np.ndarray, delta_n: float, u: np.ndarray):
    """Vectorised ``ecf_block`` over rows of ``returns`` with per-row exponents.

    Returns ``(frak_c, degenerate)``; ``frak_c`` is NaN where degenerate.
    """
    u = np.asarray(u, dtype=float)[..., None]
    mod = np.abs(np.exp(1j * (u / math.sqrt(delta_n)) * returns).mean(axis=-1))
    mod = np.minimum(mod, 1.0)
    with np.errstate(divide="ignore"):
        c_hat = -2.0 / u[..., 0] ** 2 * np.log(mod)
    bad = (mod < L_FLOOR) | ~(c_hat > C_FLOOR)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(bad, np.nan, np.log(np.where(bad, 1.0, c_hat)))
    return out, bad


def bipower_block(returns, delta_n: float, k_n: int | None = None, start: int = 0):
    """Bipower spot variance ``pi / (2 k delta_n) * sum |r_i| |r_{i-1}|``.

    ``returns`` is the whole day; the block covers ``returns[start:start + k_n]``
    and each term uses its same-day predecessor. A block starting at the first
    return of the day loses one term and is renormalised by the actual count.
    Returns ``(value, shortened)``.
    """
    r = np.abs(np.asarray(returns, dtype=float))
    if k_n is None:
        k_n = r.size - start
    lo = max(start, 1)
    hi = start + k_n
    if hi > r.size:
        raise ValueError("block extends past the end of the day")
    count = hi - lo
    if count <= 0:
        raise ValueError("block has no same-day predecessor pairs")
    s = float(np.dot(r[lo:hi], r[lo - 1:hi - 1]))
    return math.pi / (2.0 * count * delta_n) * s, lo != start


def bipower_panel(returns: np.ndarray, delta_n: float, p_n: int, k_n: int, n_blocks: int) -> np.ndarray:
    """Bipower value for every ``(day, block)`` of a ``(n_days, n_returns)`` array."""
    a = np.abs(returns)
    prod = np.zeros_like(a)
    prod[:, 1:] = a[:, 1:] * a[:, :-1]
    out = np.empty((returns.shape[0], n_blocks))
    for b in range(n_blocks):
        s = b * p_n
        lo = max(s, 1)
        out[:, b] = prod[:, lo:s + k_n].sum(axis=1) * math.pi / (2.0 * (s + k_n - lo) * delta_n)
    return out


def _extend(path) -> np.ndarray:
    z = np.asarray(path, dtype=float)
    if z.ndim != 1 or z.size < 3:
        raise ValueError("need a path with at least 3 points (n >= 2)")
    return z


def rv_ratio(path) -> float:
    """Ratio of realized variance at lag two (halved) to realized variance at lag one.

    The path ``Z_0..Z_n`` is extended by ``Z_{-1} = Z_0`` and ``Z_{n+1} = Z_n``.
    A constant path returns 2.
    """
    z = _extend(path)
    ze = np.concatenate([[z[0]], z, [z[-1]]])
    num = 0.5 * float(np.sum((ze[2:] - ze[:-2]) ** 2))
    den = float(np.sum(np.diff(z) ** 2))
    if den == 0.0:
        return 2.0 if num == 0.0 else math.inf
    return num / den


def increment_acf(path, max_lag: int = 1) -> np.ndarray:
    """Uncentred autocorrelations of increments, ``sum dZ_{i+l} dZ_i / sum dZ_i**2``.

    Entry ``l - 1`` holds lag ``l``. A path with no variation returns 1 at every lag.
    """
    z = _extend(path)
    d = np.diff(z)
    if d.size < max_lag + 2:
        raise ValueError("path too short for the requested lag")
    den = float(np.dot(d, d))
    if den == 0.0:
        return np.ones(max_lag)
    return np.array([float(np.dot(d[lag:], d[:-lag])) / den for lag in range(1, max_lag + 1)])
