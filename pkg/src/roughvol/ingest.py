"""Tick CSV to regular-grid PricePath with the day filters used in the empirical study.

Sampling is previous-tick: each grid time takes the last trade at or before it.
Timestamps are taken as exchange-local clock times; no timezone or DST logic
is applied beyond what the caller supplies.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import DAYS_PER_YEAR, PricePath, RoughVolError, TradingDay

logger = logging.getLogger(__name__)

SECONDS_PER_TRADING_DAY = 6.5 * 3600


@dataclass
class RawTickFile:
    timestamps: pd.DatetimeIndex
    prices: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)
        if len(self.timestamps) != self.prices.size:
            raise ValueError("timestamps and prices differ in length")
        if np.any(self.prices <= 0):
            raise ValueError("prices must be positive")


@dataclass
class DayGrid:
    date: str
    log_prices: np.ndarray
    n_ticks: int
    leading_fill: bool


@dataclass
class DayFilterConfig:
    zero_return_threshold: float = 0.20
    exclusion_dates: list = field(default_factory=list)
    session: tuple = ("09:35", "16:00")
    returns_per_check: int = 60  # 60 five-second steps = five minutes

    def __post_init__(self):
        if not 0 < self.zero_return_threshold <= 1:
            raise ValueError("zero_return_threshold must lie in (0, 1]")
        if _clock(self.session[0]) >= _clock(self.session[1]):
            raise ValueError("session open must precede close")


def _clock(text) -> dt.time:
    if isinstance(text, dt.time):
        return text
    parts = [int(p) for p in str(text).split(":")]
    return dt.time(*parts)


def parse_session(text: str) -> tuple:
    """``"09:35-16:00"`` -> ``("09:35", "16:00")``."""
    open_, _, close = text.partition("-")
    if not close:
        raise ValueError(f"session must look like HH:MM-HH:MM, got {text!r}")
    _clock(open_), _clock(close)
    return open_.strip(), close.strip()


def read_ticks(path: str) -> RawTickFile:
    """Read a ``timestamp,price`` CSV.

    Timestamps are epoch seconds when the column parses as numbers and
    ISO-8601 otherwise; epoch values are read as UTC and left naive.
    """
    df = pd.read_csv(path)
    if not {"timestamp", "price"} <= set(df.columns):
        raise ValueError(f"{path}: expected columns timestamp,price")
    ts = df["timestamp"]
    if pd.api.types.is_numeric_dtype(ts):
        stamps = pd.to_datetime(ts.astype(float), unit="s")
    else:
        stamps = pd.to_datetime(ts, format="ISO8601")
        if stamps.dt.tz is not None:
            stamps = stamps.dt.tz_localize(None)
    order = np.argsort(stamps.values, kind="stable")
    return RawTickFile(pd.DatetimeIndex(stamps.values[order]), df["price"].to_numpy()[order], path)


def resample(raw: RawTickFile, session=("09:35", "16:00"), step_seconds: int = 5):
    """Previous-tick log-prices on ``open, open + step, ..., close`` for every calendar day.

    Returns ``(grids, dropped)``; ``dropped`` maps a date to the reason it was skipped.
    Grid points before the first in-session tick take that tick's price and the
    day is flagged via ``DayGrid.leading_fill``.
    """
    t_open, t_close = _clock(session[0]), _clock(session[1])
    span = (dt.datetime.combine(dt.date.min, t_close) - dt.datetime.combine(dt.date.min, t_open)).seconds
    if span % step_seconds:
        raise ValueError("session length is not a multiple of the step")
    n_steps = span // step_seconds
    offsets = np.arange(n_steps + 1) * step_seconds

    ts = raw.timestamps
    logp = np.log(raw.prices)
    grids, dropped = [], {}
    for date in sorted(set(ts.date)):
        day0 = pd.Timestamp(dt.datetime.combine(date, t_open))
        close = pd.Timestamp(dt.datetime.combine(date, t_close))
        in_day = (ts.date == date) & (ts <= close)
        sec = (ts[in_day] - day0).total_seconds().to_numpy()
        lp = logp[in_day]
        in_session = sec >= 0
        if not in_session.any():
            dropped[str(date)] = "no ticks in session"
            continue
        idx = np.searchsorted(sec, offsets, side="right") - 1
        first = int(np.argmax(in_session))
        lead = idx < first
        # before the first in-session tick, take that tick; pre-open ticks are ignored
        idx = np.where(lead, first, idx)
        grids.append(DayGrid(str(date), lp[idx], int(in_session.sum()), bool(lead.any())))
    return grids, dropped


def zero_return_fraction(log_prices: np.ndarray, every: int = 60) -> float:
    coarse = np.asarray(log_prices)[::every]
    r = np.diff(coarse)
    return float(np.mean(r == 0.0)) if r.size else 1.0


def filter_days(grids, config: DayFilterConfig, step_seconds: int = 5):
    """Drop illiquid and excluded days. Returns ``(PricePath, log)``.

    ``log`` lists every input day once with ``kept`` and a ``reason``.
    """
    if not grids:
        raise RoughVolError("no days to filter")
    excluded = {str(d) for d in config.exclusion_dates}
    keep, log = [], []
    for g in grids:
        frac = zero_return_fraction(g.log_prices, config.returns_per_check)
        if g.date in excluded:
            log.append({"date": g.date, "kept": False, "reason": "excluded date",
                        "zero_fraction": frac})
        elif frac > config.zero_return_threshold:
            log.append({"date": g.date, "kept": False,
                        "reason": f"zero five-minute returns {frac:.3f} > {config.zero_return_threshold}",
                        "zero_fraction": frac})
        else:
            keep.append(g)
            log.append({"date": g.date, "kept": True, "reason": "", "zero_fraction": frac})
    if not keep:
        raise RoughVolError("every day was filtered out")
    delta_n = step_seconds / SECONDS_PER_TRADING_DAY / DAYS_PER_YEAR
    path = PricePath([TradingDay(g.date, g.log_prices) for g in keep], delta_n,
                     {"source": "ingest"})
    return path, log


def read_exclusion_file(path: str) -> list[str]:
    with open(path) as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


def ingest(raw: RawTickFile, config: DayFilterConfig, step_seconds: int = 5):
    """``resample`` then ``filter_days``; days dropped during resampling join the log."""
    grids, dropped = resample(raw, config.session, step_seconds)
    if not grids:
        raise RoughVolError("no day has ticks inside the session")
    path, log = filter_days(grids, config, step_seconds)
    log += [{"date": d, "kept": False, "reason": why, "zero_fraction": math.nan}
            for d, why in dropped.items()]
    log.sort(key=lambda r: r["date"])
    return path, log
