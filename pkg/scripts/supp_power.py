"""Supplementary power runs for the H = 0.1 and H = 0.3 alternatives.

Each replication pools the final-day products of ``n_days / 7`` independent
seven-day blocks. Run 1 uses 252 simulated days (36 blocks); run 2 uses 1750
simulated days, i.e. 250 product days, one per block.

    python3 scripts/supp_power.py [run]
"""
import sys
import time

from roughvol.core import design_scenario
from roughvol.montecarlo import McPlan, run_plan

RUNS = {
    "1": (("V1-J1", "V3-J1"), 252, 100),
    "2": (("V1-J1", "V2-J1"), 1750, 20),
}

if __name__ == "__main__":
    labels, n_days, n_reps = RUNS[sys.argv[1] if len(sys.argv) > 1 else "1"]
    plan = McPlan(scenarios=[(design_scenario(l), l) for l in labels], frak_L_grid=(0.75,),
                  n_days=n_days, n_reps=n_reps, base_seed=20240601)
    t0 = time.time()
    rep = run_plan(plan, workers=1)
    for lab in labels:
        print(lab, rep.row(lab, 0.75))
    print("elapsed", round(time.time() - t0), "s")
