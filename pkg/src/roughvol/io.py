"""PricePath CSV files and JSON sidecars.

CSV columns are ``day,step,log_price`` with an optional ``latent_variance``.
Floats are written as shortest round-trip decimals (``repr``), so files are
byte-stable. A sidecar ``<file>.json`` carries ``delta_n`` and run metadata.
"""

from __future__ import annotations

import csv
import json
import os
from collections import OrderedDict

import numpy as np

from .core import DELTA_5S, PricePath, TradingDay, jsonable


def sidecar_path(csv_path: str) -> str:
    return csv_path + ".json"


def write_price_path(path: PricePath, csv_path: str, latent_variance: np.ndarray | None = None,
                     sidecar: dict | None = None) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["day", "step", "log_price"]
        if latent_variance is not None:
            header.append("latent_variance")
        w.writerow(header)
        for d, day in enumerate(path.days):
            for k, x in enumerate(day.log_prices):
                row = [day.date, k, repr(float(x))]
                if latent_variance is not None:
                    row.append(repr(float(latent_variance[d][k])))
                w.writerow(row)
    meta = {"delta_n": path.delta_n, "meta": path.meta}
    if sidecar:
        meta.update(sidecar)
    with open(sidecar_path(csv_path), "w") as fh:
        json.dump(jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_price_path(csv_path: str, delta_n: float | None = None, with_latent: bool = False):
    """Read a PricePath CSV; ``delta_n`` defaults to the sidecar value, else five seconds.

    With ``with_latent=True`` returns ``(path, latent)`` where ``latent`` is a list of
    per-day arrays or ``None`` when the column is absent.
    """
    days: "OrderedDict[str, list]" = OrderedDict()
    latent: "OrderedDict[str, list]" = OrderedDict()
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in ("day", "step", "log_price"):
            if col not in fields:
                raise ValueError(f"{csv_path}: missing column {col!r}")
        has_latent = "latent_variance" in fields
        for row in reader:
            days.setdefault(row["day"], []).append((int(row["step"]), float(row["log_price"])))
            if has_latent:
                latent.setdefault(row["day"], []).append((int(row["step"]), float(row["latent_variance"])))
    meta = {}
    side = sidecar_path(csv_path)
    if os.path.exists(side):
        with open(side) as fh:
            meta = json.load(fh)
    if delta_n is None:
        delta_n = float(meta.get("delta_n", DELTA_5S))
    trading_days = []
    for date, rows in days.items():
        rows.sort()
        trading_days.append(TradingDay(date, np.array([x for _, x in rows])))
    path = PricePath(trading_days, delta_n, meta.get("meta", {}))
    if not with_latent:
        return path
    lat = [np.array([v for _, v in sorted(latent[d])]) for d in days] if latent else None
    return path, lat
