"""Replication harness for size and power of the roughness test.

Each replication simulates independent seven-day blocks (five warm-up days, a
reference day and a product day), keeps the summands from each block's last
day, pools them and forms one statistic. Replication ``r`` block ``b`` always
draws from ``rng_stream(base_seed, r, b)``, so results do not depend on the
number of workers and scenarios share common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    EtaScheme,
    SameTimeOfDay,
    SimScenario,
    TuningSpec,
    jsonable,
    parse_eta_scheme,
    rng_stream,
    design_scenario,
)
from .roughtest import build_block_grid, compute_diff_panel, statistic_from_summands, summands
from .simulate import simulate_scenario

logger = logging.getLogger(__name__)

FRAK_L_GRID = (0.95, 0.75, 0.50)
DESIGN_LABELS = ("V1-J1", "V1-J2", "V2-J1", "V2-J2", "V3-J1", "V3-J2")


@dataclass
class McPlan:
    scenarios: list = field(default_factory=lambda: [(design_scenario(s), s) for s in DESIGN_LABELS])
    frak_L_grid: tuple = FRAK_L_GRID
    n_days: int = 28
    n_reps: int = 200
    alpha: float = 0.05
    base_seed: int = 0
    p_n: int = 60
    k_n: int = 48
    eta_scheme: EtaScheme = field(default_factory=SameTimeOfDay)

    def __post_init__(self):
        self.scenarios = [s if isinstance(s, tuple) else (s, s.label) for s in self.scenarios]
        days_per_block = {sc.grid.days_per_block for sc, _ in self.scenarios}
        for per in days_per_block:
            if self.n_days % per:
                raise ValueError(f"n_days={self.n_days} is not a multiple of the {per}-day block")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "McPlan":
        d = dict(d)
        scen = []
        for item in d.pop("scenarios", DESIGN_LABELS):
            if isinstance(item, str):
                scen.append((design_scenario(item), item.upper()))
            else:
                sc = SimScenario.from_dict(item)
                scen.append((sc, sc.label or f"custom{len(scen)}"))
        if "eta_scheme" in d and isinstance(d["eta_scheme"], str):
            d["eta_scheme"] = parse_eta_scheme(d["eta_scheme"])
        if "frak_L_grid" in d:
            d["frak_L_grid"] = tuple(float(x) for x in d["frak_L_grid"])
        return cls(scenarios=scen, **d)

    def to_dict(self) -> dict:
        return {
            "scenarios": [dict(sc.to_dict(), label=lab) for sc, lab in self.scenarios],
            "frak_L_grid": list(self.frak_L_grid),
            "n_days": self.n_days,
            "n_reps": self.n_reps,
            "alpha": self.alpha,
            "base_seed": self.base_seed,
            "p_n": self.p_n,
            "k_n": self.k_n,
            "eta_scheme": self.eta_scheme.name,
        }


@dataclass
class McReport:
    rows: list
    statistics: dict
    records: list
    plan: dict
    runtime: dict

    def rate(self, label: str, frak_L: float) -> float:
        for r in self.rows:
            if r["scenario"] == label and math.isclose(r["frak_L"], frak_L):
                return r["rejection_rate"]
        raise KeyError((label, frak_L))

    def row(self, label: str, frak_L: float) -> dict:
        for r in self.rows:
            if r["scenario"] == label and math.isclose(r["frak_L"], frak_L):
                return r
        raise KeyError((label, frak_L))

    def to_dict(self, include_records: bool = False) -> dict:
        d = {"rows": self.rows, "plan": self.plan, "runtime": self.runtime}
        if include_records:
            d["records"] = self.records
        return jsonable(d)

    def table_csv(self) -> str:
        """Rejection rates with one row per scenario and one column per target modulus."""
        grid = self.plan["frak_L_grid"]
        labels = list(dict.fromkeys(r["scenario"] for r in self.rows))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario"] + [f"L={g!r}" for g in grid])
        for lab in labels:
            w.writerow([lab] + [repr(self.rate(lab, g)) for g in grid])
        return buf.getvalue()


def _run_replication(task) -> dict:
    idx, label, scenario_dict, rep, plan_dict = task
    scenario = SimScenario.from_dict(scenario_dict)
    per = scenario.grid.days_per_block
    tunings = [TuningSpec(L, parse_eta_scheme(plan_dict["eta_scheme"])) for L in plan_dict["frak_L_grid"]]
    pooled = [[] for _ in tunings]
    dropped = [0 for _ in tunings]
    rec = {"scenario": label, "scenario_index": idx, "replication": rep}
    try:
        for b in range(plan_dict["n_days"] // per):
            out = simulate_scenario(scenario, per, rng_stream(plan_dict["base_seed"], rep, b))
            grid = build_block_grid(out.prices, plan_dict["p_n"], plan_dict["k_n"])
            for i, tuning in enumerate(tunings):
                diff = compute_diff_panel(out.prices, grid, tuning, last_day_only=True)
                prod, nd = summands(diff)
                pooled[i].append(prod)
                dropped[i] += nd
        results = []
        for i, tuning in enumerate(tunings):
            try:
                rpt = statistic_from_summands(np.concatenate(pooled[i]), (plan_dict["alpha"],), dropped[i])
                results.append({"frak_L": tuning.frak_L, "ok": True, "statistic": rpt.statistic,
                                "reject": rpt.reject_at[float(plan_dict["alpha"])],
                                "n_summands": rpt.n_summands, "dropped": dropped[i]})
            except Exception as e:  # recorded per replication, never silently
                results.append({"frak_L": tuning.frak_L, "ok": False, "error": repr(e),
                                "dropped": dropped[i]})
        rec["results"] = results
    except Exception as e:
        rec["results"] = [{"frak_L": t.frak_L, "ok": False, "error": repr(e), "dropped": 0}
                          for t in tunings]
    return rec


def _aggregate(records: list, plan: McPlan) -> tuple[list, dict]:
    rows, stats = [], {}
    for _, label in plan.scenarios:
        for L in plan.frak_L_grid:
            res = [r for rec in records if rec["scenario"] == label
                   for r in rec["results"] if math.isclose(r["frak_L"], L)]
            ok = [r for r in res if r["ok"]]
            failed = len(res) - len(ok)
            if failed:
                warnings.warn(f"{label} L={L}: {failed} replication(s) failed and were excluded",
                              RuntimeWarning)
            T = np.array([r["statistic"] for r in ok])
            n_rej = sum(r["reject"] for r in ok)
            stats[(label, L)] = T.tolist()
            rows.append({
                "scenario": label,
                "frak_L": L,
                "rejection_rate": n_rej / len(ok) if ok else math.nan,
                "n_rejections": int(n_rej),
                "n_reps": len(ok),
                "n_failed": failed,
                "mean_statistic": float(T.mean()) if T.size else math.nan,
                "sd_statistic": float(T.std(ddof=1)) if T.size > 1 else math.nan,
                "degenerate_summands": int(sum(r["dropped"] for r in res)),
            })
    return rows, stats


def run_plan(plan: McPlan, workers: int = 1) -> McReport:
    """Run every (scenario, replication) and aggregate rejection rates at ``plan.alpha``."""
    if plan.n_days * plan.n_reps * len(plan.scenarios) > 200 * 28 * 6 * 4:
        logger.warning("large Monte Carlo plan (%d days x %d reps x %d scenarios); expect a long run",
                       plan.n_days, plan.n_reps, len(plan.scenarios))
    settings = plan.to_dict()
    settings.pop("scenarios")
    tasks = [(i, lab, sc.to_dict(), r, settings)
             for i, (sc, lab) in enumerate(plan.scenarios) for r in range(plan.n_reps)]
    t0 = time.time()
    if workers <= 1:
        records = [_run_replication(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_run_replication, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    records.sort(key=lambda r: (r["scenario_index"], r["replication"]))
    rows, stats = _aggregate(records, plan)
    return McReport(rows, stats, records, plan.to_dict(),
                    {"seconds": time.time() - t0, "workers": workers, "tasks": len(tasks)})


def calibrate_noise(ratio: float, n_fine: int = 4620, n_coarse: int = 77,
                    days_per_year: int = 252) -> float:
    """Noise scale matching a median ratio of daily fine-to-coarse realized variances.

    Inverts ``ratio = (1/Y + 2 n_fine s2) / (1/Y + 2 n_coarse s2)`` for ``s2``,
    i.e. ``s2 = 0.5 (1/Y) (ratio - 1) / (n_fine - n_coarse ratio)``, and returns
    ``sqrt(s2)``. A ratio at or below one means no detectable noise and gives 0.
    """
    if ratio <= 1.0:
        logger.info("ratio %s <= 1: no noise signal, returning 0", ratio)
        return 0.0
    den = n_fine - n_coarse * ratio
    if den <= 0:
        raise ValueError(f"ratio {ratio} too large: n_fine - n_coarse * ratio = {den} <= 0")
    return math.sqrt(0.5 / days_per_year * (ratio - 1.0) / den)


def load_plan(path: str) -> McPlan:
    with open(path) as fh:
        return McPlan.from_dict(json.load(fh))
