import json
import math

import pytest

from roughvol.core import GridSpec, LaggedBlocks, design_scenario
from roughvol.montecarlo import McPlan, McReport, calibrate_noise, load_plan, run_plan

SMALL = GridSpec(steps_per_day=1200, drop_first=0)


class TestCalibrateNoise:
    def test_reference_ratio(self):
        s = calibrate_noise(1.0548)
        assert f"{s * s:.2e}" == "2.40e-08"
        assert f"{s:.2e}" == "1.55e-04"

    def test_arithmetic(self):
        expected = 0.5 / 252 * 0.10 / (4620 - 77 * 1.10)
        assert calibrate_noise(1.10) ** 2 == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(4.374e-8, rel=1e-3)

    def test_no_noise(self):
        assert calibrate_noise(1.0) == 0.0
        assert calibrate_noise(0.9) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            calibrate_noise(4620 / 77)

    def test_inverts_forward_model(self):
        # expected daily RV at two frequencies under iid noise of variance s2
        s2 = 3e-8
        ratio = (1 / 252 + 2 * 4620 * s2) / (1 / 252 + 2 * 77 * s2)
        assert calibrate_noise(ratio) ** 2 == pytest.approx(s2, rel=1e-12)


class TestPlan:
    def test_defaults(self):
        plan = McPlan()
        assert [lab for _, lab in plan.scenarios] == ["V1-J1", "V1-J2", "V2-J1", "V2-J2", "V3-J1", "V3-J2"]
        assert plan.frak_L_grid == (0.95, 0.75, 0.50)
        assert (plan.n_days, plan.n_reps, plan.alpha) == (28, 200, 0.05)

    def test_validation(self):
        with pytest.raises(ValueError):
            McPlan(n_days=30)
        with pytest.raises(ValueError):
            McPlan(n_reps=0)

    def test_json_roundtrip(self, tmp_path):
        plan = McPlan(scenarios=[(design_scenario("V2-J1", grid=SMALL), "V2-J1")], n_reps=3,
                      eta_scheme=LaggedBlocks(3, 4), frak_L_grid=(0.75,))
        f = tmp_path / "plan.json"
        f.write_text(json.dumps(plan.to_dict()))
        back = load_plan(str(f))
        assert back.to_dict() == plan.to_dict()

    def test_labels(self):
        plan = McPlan.from_dict({"scenarios": ["v3-j2"], "n_reps": 2, "eta_scheme": "timeofday:5"})
        assert plan.scenarios[0][1] == "V3-J2"
        assert plan.scenarios[0][0] == design_scenario("V3-J2")


def small_plan(**kw):
    base = dict(scenarios=[(design_scenario("V3-J1", grid=SMALL), "V3-J1"),
                           (design_scenario("V1-J2", grid=SMALL), "V1-J2")],
                frak_L_grid=(0.95, 0.5), n_days=14, n_reps=3, base_seed=17, p_n=30, k_n=24)
    base.update(kw)
    return McPlan(**base)


def _comparable(report: McReport):
    return report.rows, report.statistics, report.records


class TestRunPlan:
    @pytest.fixture(scope="class")
    @staticmethod
    def report():
        return run_plan(small_plan())

    def test_binomial_consistency(self, report):
        for row in report.rows:
            assert row["rejection_rate"] == row["n_rejections"] / row["n_reps"]
            assert 0.0 <= row["rejection_rate"] <= 1.0
            assert row["n_reps"] + row["n_failed"] == 3

    def test_pooled_summands(self, report):
        # 2 blocks, one product day each, (40 / 2 - 1) pairs per day
        for rec in report.records:
            for r in rec["results"]:
                assert r["n_summands"] + r["dropped"] == 2 * 19

    def test_table_shape(self, report):
        lines = report.table_csv().splitlines()
        assert lines[0] == "scenario,L=0.95,L=0.5"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["V3-J1", "V1-J2"]
        assert report.rate("V1-J2", 0.5) == report.row("V1-J2", 0.5)["rejection_rate"]

    def test_reproducible(self, report):
        assert _comparable(run_plan(small_plan())) == _comparable(report)

    def test_worker_independence(self):
        plan = small_plan(n_reps=1)
        assert _comparable(run_plan(plan, workers=1)) == _comparable(run_plan(plan, workers=8))

    def test_failures_are_reported(self):
        plan = small_plan(n_reps=1, p_n=400, k_n=24)  # too few blocks per day
        with pytest.warns(RuntimeWarning, match="failed"):
            rep = run_plan(plan)
        row = rep.rows[0]
        assert row["n_failed"] == 1 and row["n_reps"] == 0 and math.isnan(row["rejection_rate"])
        assert "error" in rep.records[0]["results"][0]

    def test_json(self, report):
        d = json.loads(json.dumps(report.to_dict(include_records=True)))
        assert len(d["records"]) == 6 and d["plan"]["n_reps"] == 3
