"""scikit-learn style front end.

``X`` is either a :class:`~roughvol.core.PricePath` or a 2-D array of log-prices
with one row per trading day and one column per grid point.

>>> test = RoughVolatilityTest(frak_L=0.75).fit(X)  # doctest: +SKIP
>>> test.statistic_, test.p_value_, test.reject_  # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import DELTA_5S, PricePath, TuningSpec, parse_eta_scheme
from .roughtest import (
    DEFAULT_MAX_LAG,
    build_block_grid,
    compute_diff_panel,
    spot_vol_panel,
    test_statistic,
)


def check_price_panel(X, delta_n: float = DELTA_5S, min_points: int = 3) -> PricePath:
    """Validate ``X`` and return it as a PricePath.

    Arrays must be 2-D, finite and have at least ``min_points`` columns.
    """
    if isinstance(X, PricePath):
        X.as_array()  # raises on unequal day lengths
        return X
    arr = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                      ensure_min_features=min_points)
    return PricePath.from_array(arr, delta_n)


def _tuning(est) -> TuningSpec:
    return TuningSpec(est.frak_L, parse_eta_scheme(est.eta_scheme))


class RoughVolatilityTest(BaseEstimator):
    """Test of semimartingale (null) against rough (alternative) spot volatility.

    Parameters
    ----------
    p_n, k_n : int
        Returns per block and returns used per block.
    frak_L : float
        Target modulus of the empirical characteristic function, in (0, 1).
    eta_scheme : str
        ``"timeofday"``, ``"timeofday:<days>"`` or ``"lagged:<l1>,<l2>"``.
    alpha : float
        Level for ``reject_``.
    delta_n : float
        Grid spacing in years; only used when ``X`` is an array.

    Attributes
    ----------
    report_ : TestReport
    statistic_, p_value_ : float
    reject_ : bool
    """

    def __init__(self, p_n=60, k_n=48, frak_L=0.75, eta_scheme="timeofday", alpha=0.05,
                 delta_n=DELTA_5S, max_lag=DEFAULT_MAX_LAG):
        self.p_n = p_n
        self.k_n = k_n
        self.frak_L = frak_L
        self.eta_scheme = eta_scheme
        self.alpha = alpha
        self.delta_n = delta_n
        self.max_lag = max_lag

    def fit(self, X, y=None):
        path = check_price_panel(X, self.delta_n)
        grid = build_block_grid(path, self.p_n, self.k_n)
        self.diff_panel_ = compute_diff_panel(path, grid, _tuning(self))
        self.report_ = test_statistic(self.diff_panel_, (self.alpha,), self.max_lag)
        self.statistic_ = self.report_.statistic
        self.p_value_ = self.report_.p_value
        self.reject_ = self.report_.reject_at[float(self.alpha)]
        self.n_days_ = path.n_days
        return self

    def decision_function(self, X=None):
        """The statistic; small values indicate rough volatility."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "report_")
        return self.statistic_


class BlockSpotVariance(TransformerMixin, BaseEstimator):
    """Per-block ECF log spot variance with data-driven exponents.

    ``transform`` returns an ``(n_days, n_blocks)`` array; rows inside the
    warm-up, the unpaired last block and degenerate blocks are NaN.
    """

    def __init__(self, p_n=60, k_n=48, frak_L=0.75, eta_scheme="timeofday", delta_n=DELTA_5S):
        self.p_n = p_n
        self.k_n = k_n
        self.frak_L = frak_L
        self.eta_scheme = eta_scheme
        self.delta_n = delta_n

    def fit(self, X, y=None):
        path = check_price_panel(X, self.delta_n)
        self.grid_ = build_block_grid(path, self.p_n, self.k_n)
        self.n_blocks_ = self.grid_.n_blocks
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        path = check_price_panel(X, self.delta_n)
        grid = build_block_grid(path, self.p_n, self.k_n)
        if grid != self.grid_:
            raise ValueError(f"X has {grid.n_blocks} blocks per day, fitted on {self.n_blocks_}")
        self.panel_ = spot_vol_panel(path, grid, _tuning(self))
        return self.panel_.frak_c
