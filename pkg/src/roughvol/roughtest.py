"""Rough-volatility test: block layout, exponents, day-differenced increments, statistic.

Blocks hold ``p_n`` returns of which the first ``k_n`` feed the estimators. Blocks
are grouped in pairs ``(2p - 1, 2p)`` sharing one characteristic exponent
``u = theta / sqrt(eta)``. For each pair the log-variance increment between its
two blocks is differenced against the same pair on the previous day; the
statistic is the self-normalised sum of products of increments two blocks apart
within a day.

Days after the warm-up alternate between reference days and product days, so
summands never reuse a day-differencing reference and never straddle a night.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    BlockGrid,
    DegenerateStatisticError,
    LaggedBlocks,
    LayoutError,
    PipelineError,
    PricePath,
    SameTimeOfDay,
    TestReport,
    TuningSpec,
    normal_cdf,
    normal_quantile,
)
from .estimators import bipower_panel, ecf_log_variance

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.01, 0.05, 0.10)
DEFAULT_MAX_LAG = 7
MIN_BLOCKS = 4


@dataclass
class SpotVolPanel:
    """Per-(day, block) log spot variances; rows before ``warmup`` are NaN.

    ``u_used``/``eta_used`` are per (day, pair); ``degenerate`` is per (day, block).
    """

    grid: BlockGrid
    frak_c: np.ndarray
    u_used: np.ndarray
    eta_used: np.ndarray
    degenerate: np.ndarray
    tuning: TuningSpec
    warmup: int


@dataclass
class DiffPanel:
    """Doubly differenced log-variance increments on product days.

    ``values[i, p - 1]`` is the increment ending at block ``2p`` of day ``days[i]``
    (zero-based day index), differenced against day ``days[i] - 1``.
    """

    days: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    grid: BlockGrid
    panel: SpotVolPanel | None = field(default=None, repr=False)


def build_block_grid(path: PricePath | np.ndarray, p_n: int = 60, k_n: int = 48) -> BlockGrid:
    """Lay out ``floor(N_d / p_n)`` blocks per day; every day must have the same length."""
    if isinstance(path, PricePath):
        lengths = {d.n_returns for d in path.days}
    else:
        lengths = {np.asarray(path).shape[-1]}
    if len(lengths) != 1:
        raise LayoutError(f"inconsistent day lengths: {sorted(lengths)}")
    n_ret = lengths.pop()
    if p_n <= 0:
        raise LayoutError("p_n must be positive")
    return BlockGrid(int(p_n), int(k_n), n_ret // int(p_n))


def warmup_days(tuning: TuningSpec, grid: BlockGrid) -> int:
    """Number of leading days consumed before the first exponent is available."""
    scheme = tuning.eta_scheme
    if isinstance(scheme, SameTimeOfDay):
        return scheme.lookback_days
    return math.ceil((scheme.l2 - 1) / grid.n_blocks)


def select_exponents(bipower: np.ndarray, tuning: TuningSpec, grid: BlockGrid):
    """Exponents ``u = theta / sqrt(eta)`` for every (day, pair) past the warm-up.

    ``eta`` averages bipower values either over the same two blocks on the
    preceding ``lookback_days`` days, or over blocks ``2p - l`` for
    ``l1 <= l <= l2`` counted backwards through the day sequence.
    Returns ``(u, eta, degenerate)`` arrays of shape ``(n_days, n_pairs)``.
    """
    D, B = bipower.shape
    P = grid.n_pairs
    W = warmup_days(tuning, grid)
    eta = np.full((D, P), np.nan)
    scheme = tuning.eta_scheme
    if isinstance(scheme, SameTimeOfDay):
        L = scheme.lookback_days
        pair_mean = 0.5 * (bipower[:, 0:2 * P:2] + bipower[:, 1:2 * P:2])
        for d in range(W, D):
            eta[d] = pair_mean[d - L:d].mean(axis=0)
    elif isinstance(scheme, LaggedBlocks):
        flat = bipower.reshape(-1)
        lags = np.arange(scheme.l1, scheme.l2 + 1)
        last_block = 2 * np.arange(1, P + 1) - 1  # zero-based column of block 2p
        for d in range(W, D):
            idx = d * B + last_block[:, None] - lags[None, :]
            if idx.min() < 0:
                raise PipelineError("select_exponents", "lagged reference blocks precede the data")
            eta[d] = flat[idx].mean(axis=1)
    else:
        raise TypeError(f"unknown eta scheme {scheme!r}")
    with np.errstate(invalid="ignore"):
        degenerate = ~(eta > 0) | ~np.isfinite(eta)
        u = np.where(degenerate, np.nan, tuning.theta / np.sqrt(np.where(degenerate, 1.0, eta)))
    degenerate[:W] = True
    return u, eta, degenerate


def _check_blocks(grid: BlockGrid):
    if grid.n_blocks < MIN_BLOCKS:
        raise LayoutError(f"need at least {MIN_BLOCKS} blocks per day, got {grid.n_blocks}")


def _as_returns(path) -> tuple[np.ndarray, float]:
    if isinstance(path, PricePath):
        return path.returns(), path.delta_n
    raise TypeError("expected a PricePath")


def spot_vol_panel(path: PricePath, grid: BlockGrid, tuning: TuningSpec) -> SpotVolPanel:
    """ECF log spot variance for every block of every pair on days past the warm-up."""
    _check_blocks(grid)
    R, delta_n = _as_returns(path)
    D = R.shape[0]
    P, B = grid.n_pairs, grid.n_blocks
    W = warmup_days(tuning, grid)
    if D <= W:
        raise PipelineError("spot_vol_panel", f"need more than {W} days, got {D}")
    bp = bipower_panel(R, delta_n, grid.p_n, grid.k_n, B)
    u, eta, pair_bad = select_exponents(bp, tuning, grid)

    blocks = R[:, :B * grid.p_n].reshape(D, B, grid.p_n)[:, :2 * P, :grid.k_n]
    frak_c = np.full((D, B), np.nan)
    degenerate = np.ones((D, B), dtype=bool)
    u_blocks = np.repeat(np.where(pair_bad, 1.0, u), 2, axis=1)
    fc, bad = ecf_log_variance(blocks[W:], delta_n, u_blocks[W:])
    bad |= np.repeat(pair_bad[W:], 2, axis=1)
    fc[bad] = np.nan
    frak_c[W:, :2 * P] = fc
    degenerate[W:, :2 * P] = bad
    return SpotVolPanel(grid, frak_c, u, eta, degenerate, tuning, W)


def product_days(n_days: int, warmup: int, last_day_only: bool = False) -> np.ndarray:
    """Zero-based indices of days whose increments enter the statistic."""
    days = np.arange(warmup + 1, n_days, 2)
    if last_day_only:
        days = days[days == n_days - 1]
    return days


def compute_diff_panel(path: PricePath, grid: BlockGrid, tuning: TuningSpec,
                       last_day_only: bool = False) -> DiffPanel:
    """Day-differenced block increments for every product day."""
    panel = spot_vol_panel(path, grid, tuning)
    days = product_days(path.n_days, panel.warmup, last_day_only)
    if days.size == 0:
        raise PipelineError("compute_diff_panel",
                            f"need at least {panel.warmup + 2} days, got {path.n_days}")
    fc = panel.frak_c
    P = grid.n_pairs
    inc = fc[:, 1:2 * P:2] - fc[:, 0:2 * P:2]  # increment ending at block 2p, same u
    values = inc[days] - inc[days - 1]
    valid = np.isfinite(values)
    values = np.where(valid, values, 0.0)
    return DiffPanel(days, values, valid, grid, panel)


def summands(diff: DiffPanel) -> tuple[np.ndarray, int]:
    """Products of increments ending at blocks ``b`` and ``b - 2`` for even ``b >= 4``.

    Returns the valid products and the number dropped for touching a degenerate block.
    """
    v, ok = diff.values, diff.valid
    prod = v[:, 1:] * v[:, :-1]
    keep = ok[:, 1:] & ok[:, :-1]
    return prod[keep], int(keep.size - keep.sum())


def lag_autocovariances(diff: DiffPanel, max_lag: int = DEFAULT_MAX_LAG) -> list[float]:
    """Within-day autocovariances of the differenced increments; entry ``k`` is lag ``k``."""
    v, ok = diff.values, diff.valid
    out = []
    for lag in range(max_lag + 1):
        if lag >= v.shape[1]:
            out.append(math.nan)
            continue
        a, b = v[:, lag:], v[:, :v.shape[1] - lag]
        m = ok[:, lag:] & ok[:, :v.shape[1] - lag]
        out.append(float((a * b)[m].mean()) if m.any() else math.nan)
    return out


def statistic_from_summands(prod: np.ndarray, alphas: Iterable[float] = DEFAULT_ALPHAS,
                            n_dropped: int = 0, lag_acov: Sequence[float] = ()) -> TestReport:
    """Self-normalised statistic ``sum(P) / sqrt(sum(P**2))`` and its one-sided decisions."""
    prod = np.asarray(prod, dtype=float)
    if prod.size == 0:
        raise DegenerateStatisticError("no valid summands")
    num = float(prod.sum())
    ss = float(np.dot(prod, prod))
    if ss == 0.0:
        raise DegenerateStatisticError("all summands are zero; no decision")
    den = math.sqrt(ss)
    stat = num / den
    reject = {float(a): bool(stat < normal_quantile(a)) for a in alphas}
    return TestReport(stat, float(normal_cdf(stat)), reject, int(prod.size), num, den,
                      list(lag_acov), n_dropped)


def test_statistic(diff: DiffPanel, alphas: Iterable[float] = DEFAULT_ALPHAS,
                   max_lag: int = DEFAULT_MAX_LAG) -> TestReport:
    prod, dropped = summands(diff)
    return statistic_from_summands(prod, alphas, dropped, lag_autocovariances(diff, max_lag))


test_statistic.__test__ = False


def run_test(path: PricePath, p_n: int = 60, k_n: int = 48, tuning: TuningSpec | None = None,
             alphas: Iterable[float] = DEFAULT_ALPHAS, max_lag: int = DEFAULT_MAX_LAG,
             last_day_only: bool = False) -> TestReport:
    """Full pipeline from log-prices to a ``TestReport``."""
    tuning = tuning or TuningSpec()
    try:
        grid = build_block_grid(path, p_n, k_n)
        _check_blocks(grid)
    except LayoutError as e:
        raise PipelineError("build_block_grid", str(e)) from e
    diff = compute_diff_panel(path, grid, tuning, last_day_only)
    try:
        return test_statistic(diff, alphas, max_lag)
    except DegenerateStatisticError as e:
        raise PipelineError("test_statistic", str(e)) from e


def diff_series_rows(diff: DiffPanel, dates: Sequence[str] | None = None) -> list[tuple]:
    """Rows ``(date, block, value, valid)`` for CSV export."""
    rows = []
    for i, d in enumerate(diff.days):
        label = dates[d] if dates is not None else int(d)
        for p in range(diff.values.shape[1]):
            rows.append((label, 2 * (p + 1), float(diff.values[i, p]), bool(diff.valid[i, p])))
    return rows
