"""Synthetic price panels under Heston and rough Heston variance.

Prices follow ``dx = sqrt(V) dW + dJ`` where ``J`` is a tempered-stable jump
process time-changed by ``V`` and ``corr(dW, dB) = rho``. Observed prices may be
contaminated by (volatility-scaled) Gaussian noise.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, linalg, optimize, special

from .core import (
    Heston,
    NumericError,
    PricePath,
    RoughHeston,
    SimScenario,
    TradingDay,
    rng_stream,
)

logger = logging.getLogger(__name__)

#: Share of the total jump variance allowed in the Gaussian small-jump substitute.
SMALL_JUMP_SHARE = 1e-4
#: Upper bound on the expected number of big jumps per step at the reference variance.
MAX_JUMPS_PER_STEP = 1.0
CHOLESKY_MAX_N = 4096


@dataclass
class SimOutput:
    """Simulated panel; latent arrays are ``(n_days, n_points)`` aligned with ``prices``."""

    prices: PricePath
    latent_variance: np.ndarray
    latent_clean_prices: np.ndarray
    jump_log: np.ndarray
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# tempered-stable jumps


def _check_jump_params(alpha, lam, c):
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if lam <= 0 or c < 0:
        raise ValueError("lambda must be positive and c nonnegative")


@lru_cache(maxsize=256)
def big_jump_intensity(alpha: float, lam: float, c: float, eps: float) -> float:
    """Mass ``2c * int_eps^inf exp(-lam x) x**(-alpha-1) dx`` of jumps larger than ``eps``.

    Integrated by quadrature after the substitution ``x = eps * exp(s)``, which
    turns the power singularity into a smooth, doubly exponentially decaying integrand.
    """
    _check_jump_params(alpha, lam, c)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if c == 0:
        return 0.0
    a = lam * eps

    def f(s):
        return math.exp(-a * math.exp(s) - alpha * s)

    # the integrand is negligible once a*exp(s) > 750
    upper = max(math.log(750.0 / a), 1.0) if a > 0 else 50.0
    val, err = integrate.quad(f, 0.0, upper, limit=400, epsabs=0.0, epsrel=1e-12)
    if not np.isfinite(val) or err > 1e-9 * abs(val):
        raise NumericError(
            f"jump intensity quadrature did not converge: value={val}, error={err}, "
            f"alpha={alpha}, lam={lam}, eps={eps}"
        )
    return 2.0 * c * eps ** (-alpha) * val


@lru_cache(maxsize=256)
def small_jump_variance(alpha: float, lam: float, c: float, eps: float) -> float:
    """Second moment ``2c * int_0^eps x**(1-alpha) exp(-lam x) dx`` of jumps below ``eps``."""
    _check_jump_params(alpha, lam, c)
    return float(2.0 * c * lam ** (alpha - 2.0) * special.gamma(2.0 - alpha)
                 * special.gammainc(2.0 - alpha, lam * eps))


def jump_second_moment(alpha: float, lam: float, c: float) -> float:
    return 2.0 * c * math.gamma(2.0 - alpha) / lam ** (2.0 - alpha)


def default_jump_cutoff(alpha: float, lam: float, c: float, delta: float, v_ref: float) -> float:
    """Small/big jump threshold used when none is given.

    Takes the smallest ``eps`` whose Gaussian remainder carries at most
    ``SMALL_JUMP_SHARE`` of the jump variance, then raises it if needed so the
    expected number of big jumps per step at variance ``v_ref`` stays below
    ``MAX_JUMPS_PER_STEP``.
    """
    total = jump_second_moment(alpha, lam, c)
    target = SMALL_JUMP_SHARE * total
    # s2(eps) ~ 2c eps^(2-alpha)/(2-alpha) for small eps: bracket from there
    guess = (target * (2.0 - alpha) / (2.0 * c)) ** (1.0 / (2.0 - alpha))
    eps_var = optimize.brentq(
        lambda e: small_jump_variance(alpha, lam, c, e) - target,
        guess * 1e-3, guess * 1e3, xtol=guess * 1e-12, rtol=1e-12,
    )
    max_rate = MAX_JUMPS_PER_STEP / (v_ref * delta)
    if big_jump_intensity(alpha, lam, c, eps_var) <= max_rate:
        return float(eps_var)
    # intensity ~ 2c eps^-alpha / alpha
    guess = (2.0 * c / (alpha * max_rate)) ** (1.0 / alpha)
    eps_rate = optimize.brentq(
        lambda e: big_jump_intensity(alpha, lam, c, e) - max_rate,
        guess * 1e-3, guess * 1e3, xtol=guess * 1e-12, rtol=1e-12,
    )
    return float(max(eps_var, eps_rate))


def _tail_sizes(n: int, alpha: float, lam: float, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` magnitudes from the density proportional to ``exp(-lam x) x**(-alpha-1)`` on ``(eps, inf)``.

    Pareto proposals ``eps * U**(-1/alpha)`` accepted with probability ``exp(-lam (x - eps))``.
    """
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        m = int(need * 1.2) + 16
        x = eps * rng.random(m) ** (-1.0 / alpha)
        keep = x[rng.random(m) < np.exp(-lam * (x - eps))][:need]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def simulate_jump_increments(alpha: float, lam: float, c: float, variance_path, delta_n: float,
                             eps_cut: float | None, stream: np.random.Generator) -> np.ndarray:
    """Per-step increments of a tempered-stable process time-changed by ``variance_path``.

    Step ``k`` has Levy measure ``V_k * delta_n * c exp(-lam|x|)/|x|**(alpha+1) dx``.
    Jumps above ``eps_cut`` are drawn exactly (Poisson count, rejection-sampled
    sizes, symmetric signs); the remainder is replaced by a centred Gaussian with
    matching variance. The measure is symmetric, so no compensator drift enters.
    """
    v = np.asarray(variance_path, dtype=float)
    if np.any(v < 0):
        raise ValueError("variance path must be nonnegative")
    if c == 0:
        return np.zeros(v.size)
    if eps_cut is None:
        v_ref = float(np.mean(v)) if np.mean(v) > 0 else 1.0
        eps_cut = default_jump_cutoff(alpha, lam, c, delta_n, v_ref)
    if eps_cut <= 0:
        raise ValueError("eps_cut must be positive")
    clock = v * delta_n
    rate = big_jump_intensity(alpha, lam, c, eps_cut)
    s2 = small_jump_variance(alpha, lam, c, eps_cut)

    counts = stream.poisson(clock * rate)
    total = int(counts.sum())
    sizes = _tail_sizes(total, alpha, lam, eps_cut, stream)
    signs = np.where(stream.random(total) < 0.5, -1.0, 1.0)
    steps = np.repeat(np.arange(v.size), counts)
    incr = np.bincount(steps, weights=sizes * signs, minlength=v.size).astype(float)
    incr += np.sqrt(clock * s2) * stream.standard_normal(v.size)
    return incr


# ---------------------------------------------------------------------------
# variance and price paths


def _drivers(n: int, dt: float, rho: float, stream: np.random.Generator):
    z = stream.standard_normal((2, n))
    dB = math.sqrt(dt) * z[0]
    dW = math.sqrt(dt) * (rho * z[0] + math.sqrt(max(0.0, 1.0 - rho * rho)) * z[1])
    return dW, dB


def heston_variance(model: Heston, dB: np.ndarray, dt: float) -> np.ndarray:
    """Full-truncation Euler path of length ``len(dB) + 1`` starting at ``v0``.

    A 2-D ``dB`` of shape ``(n, m)`` simulates ``m`` paths at once.
    """
    if dB.ndim == 2:
        V = np.empty((dB.shape[0] + 1, dB.shape[1]))
        V[0] = model.v0
        for k in range(dB.shape[0]):
            v = V[k]
            V[k + 1] = np.maximum(v + model.kappa * (model.theta - v) * dt
                                  + model.nu * np.sqrt(v) * dB[k], 0.0)
        return V
    n = dB.size
    V = np.empty(n + 1)
    V[0] = v = model.v0
    kappa, theta, nu = model.kappa, model.theta, model.nu
    sq = math.sqrt
    for k in range(n):
        v = v + kappa * (theta - v) * dt + nu * sq(v) * dB[k]
        if v < 0.0:
            v = 0.0
        V[k + 1] = v
    return V


def rough_heston_variance(model: RoughHeston, dB: np.ndarray, dt: float,
                          window: int | None = None) -> np.ndarray:
    """Left-point Volterra-Euler path for the rough Heston variance.

    ``V_k = v0 + sum_{i<k} K(t_k - t_i) [kappa (theta - V_i) dt + nu sqrt(V_i) dB_i]``
    with ``K(t) = t**(H - 1/2) / Gamma(H + 1/2)``. ``V`` is floored at zero.
    ``window`` keeps only the most recent kernel terms.
    """
    n = dB.size
    w = (np.arange(1, n + 1) * dt) ** (model.H - 0.5) / math.gamma(model.H + 0.5)
    wrev = w[::-1].copy()  # wrev[n - m] = K(m dt)
    V = np.empty(n + 1)
    g = np.empty(n)
    V[0] = model.v0
    kappa, theta, nu, v0 = model.kappa, model.theta, model.nu, model.v0
    sq = math.sqrt
    dot = np.dot
    for k in range(n):
        v = V[k]
        g[k] = kappa * (theta - v) * dt + nu * sq(v) * dB[k]
        lo = 0 if window is None else max(0, k + 1 - window)
        vk = v0 + dot(wrev[n - k - 1 + lo:], g[lo:k + 1])
        V[k + 1] = vk if vk > 0.0 else 0.0
    return V


def _simulate(scenario: SimScenario, n_days: int, stream: np.random.Generator, rough: bool,
              window: int | None = None) -> SimOutput:
    grid = scenario.grid
    m = grid.substeps
    n_obs = n_days * grid.steps_per_day
    n = n_obs * m
    dt = grid.delta_n / m
    model = scenario.variance
    dW, dB = _drivers(n, dt, model.rho, stream)
    if rough:
        V = rough_heston_variance(model, dB, dt, window)
    else:
        V = heston_variance(model, dB, dt)
    dX = np.sqrt(V[:-1]) * dW
    if scenario.jumps is not None:
        j = scenario.jumps
        eps = default_jump_cutoff(j.alpha, j.lam, j.scale, dt, model.theta)
        dJ = simulate_jump_increments(j.alpha, j.lam, j.scale, V[:-1], dt, eps, stream)
    else:
        dJ = np.zeros(n)
    X = np.concatenate([[0.0], np.cumsum(dX + dJ)])

    # observation grid
    Vo = V[::m]
    Xo = X[::m]
    Jo = dJ.reshape(n_obs, m).sum(axis=1)
    Y = Xo.copy()
    if scenario.noise is not None and scenario.noise.sigma_noise > 0:
        eps = stream.standard_normal(Y.size)
        scale = np.sqrt(Vo) if scenario.noise.volatility_scaled else 1.0
        Y = Xo + scenario.noise.sigma_noise * scale * eps
    return _split_days(scenario, n_days, Y, Vo, Xo, Jo)


def _split_days(scenario, n_days, Y, V, X, J) -> SimOutput:
    grid = scenario.grid
    spd, drop = grid.steps_per_day, grid.drop_first
    days, var, clean, jumps = [], [], [], []
    for d in range(n_days):
        a, b = d * spd + drop, (d + 1) * spd
        days.append(TradingDay(f"day{d + 1:04d}", Y[a:b + 1]))
        var.append(V[a:b + 1])
        clean.append(X[a:b + 1])
        jumps.append(J[a:b])
    path = PricePath(days, grid.delta_n, {"scenario": scenario.label})
    return SimOutput(path, np.vstack(var), np.vstack(clean), np.vstack(jumps))


def simulate_heston(scenario: SimScenario, n_days: int, stream: np.random.Generator) -> SimOutput:
    """Simulate ``n_days`` contiguous trading days under Heston variance."""
    if isinstance(scenario.variance, RoughHeston) or not isinstance(scenario.variance, Heston):
        raise TypeError("simulate_heston needs a Heston variance model")
    return _simulate(scenario, n_days, stream, rough=False)


def simulate_rough_heston(scenario: SimScenario, n_days: int, stream: np.random.Generator,
                          window: int | None = None) -> SimOutput:
    """Simulate ``n_days`` contiguous trading days under rough Heston variance. Cost is O(N^2)."""
    if not isinstance(scenario.variance, RoughHeston):
        raise TypeError("simulate_rough_heston needs a RoughHeston variance model")
    if not 0.0 < scenario.variance.H < 0.5:
        raise ValueError("H must lie in (0, 1/2) for the rough scheme")
    return _simulate(scenario, n_days, stream, rough=True, window=window)


def simulate_scenario(scenario: SimScenario, n_days: int, stream: np.random.Generator) -> SimOutput:
    """Dispatch on the variance model; ``H = 1/2`` falls back to the Heston scheme."""
    v = scenario.variance
    if isinstance(v, RoughHeston) and v.H < 0.5:
        return simulate_rough_heston(scenario, n_days, stream)
    if isinstance(v, RoughHeston):
        v = Heston(v.theta, v.kappa, v.nu, v.rho, v.v0)
        scenario = SimScenario(v, scenario.jumps, scenario.noise, scenario.grid, scenario.seed,
                               scenario.label)
    return simulate_heston(scenario, n_days, stream)


def simulate_panel(scenario: SimScenario, n_days: int, replication: int = 0) -> SimOutput:
    """Concatenate independent blocks of ``grid.days_per_block`` days.

    Block ``b`` draws from ``rng_stream(scenario.seed, replication, b)``.
    """
    per = scenario.grid.days_per_block
    outs = []
    for b, start in enumerate(range(0, n_days, per)):
        k = min(per, n_days - start)
        outs.append(simulate_scenario(scenario, k, rng_stream(scenario.seed, replication, b)))
    days = []
    for i, o in enumerate(outs):
        for day in o.prices.days:
            days.append(TradingDay(f"day{len(days) + 1:04d}", day.log_prices))
    path = PricePath(days, scenario.grid.delta_n, {"scenario": scenario.label})
    return SimOutput(
        path,
        np.vstack([o.latent_variance for o in outs]),
        np.vstack([o.latent_clean_prices for o in outs]),
        np.vstack([o.jump_log for o in outs]),
    )


def add_noise(clean: SimOutput, sigma_noise: float, volatility_scaled: bool,
              stream: np.random.Generator) -> SimOutput:
    """Return a copy of ``clean`` observed as ``x + sigma_noise * sqrt(V) * eps``."""
    X = clean.latent_clean_prices
    if sigma_noise == 0:
        Y = X.copy()
    else:
        scale = np.sqrt(clean.latent_variance) if volatility_scaled else 1.0
        Y = X + sigma_noise * scale * stream.standard_normal(X.shape)
    path = PricePath([TradingDay(d.date, y) for d, y in zip(clean.prices.days, Y)],
                     clean.prices.delta_n, dict(clean.prices.meta))
    return SimOutput(path, clean.latent_variance, X, clean.jump_log, dict(clean.info))


# ---------------------------------------------------------------------------
# fractional Brownian motion


def fgn_autocovariance(H: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def _fgn_cholesky(H, n, size, rng):
    cov = linalg.toeplitz(fgn_autocovariance(H, n))
    L = linalg.cholesky(cov, lower=True)
    return (L @ rng.standard_normal((n, size))).T


def _fgn_circulant(H, n, size, rng):
    r = fgn_autocovariance(H, n + 1)
    row = np.concatenate([r, r[-2:0:-1]])  # length 2n
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        return None
    lam = np.clip(lam, 0.0, None)
    m = row.size
    z = rng.standard_normal((size, m)) + 1j * rng.standard_normal((size, m))
    w = np.fft.fft(np.sqrt(lam / m) * z, axis=1)
    return w.real[:, :n]


def simulate_fbm(H: float, n: int, horizon: float, stream: np.random.Generator,
                 size: int | None = None) -> np.ndarray:
    """Exact fractional Brownian motion on ``{0, T/n, ..., T}``.

    Cholesky factorisation for ``n <= 4096``, circulant embedding (Davies-Harte)
    above, with a Cholesky fallback (and a warning) if the embedding is not
    positive semi-definite. Returns shape ``(n + 1,)`` or ``(size, n + 1)``.
    """
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")
    if n < 2:
        raise ValueError("n must be at least 2")
    m = 1 if size is None else int(size)
    method = "cholesky"
    if n <= CHOLESKY_MAX_N:
        fgn = _fgn_cholesky(H, n, m, stream)
    else:
        fgn = _fgn_circulant(H, n, m, stream)
        method = "circulant"
        if fgn is None:
            warnings.warn("circulant embedding not PSD; falling back to Cholesky", RuntimeWarning)
            method = "cholesky"
            fgn = _fgn_cholesky(H, n, m, stream)
    logger.debug("fbm H=%s n=%d via %s", H, n, method)
    paths = np.zeros((m, n + 1))
    paths[:, 1:] = np.cumsum(fgn, axis=1) * (horizon / n) ** H
    return paths[0] if size is None else paths
