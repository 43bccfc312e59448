import json
import math
import subprocess
import sys

import jsonschema
import pytest

from bisample.cli import main
from bisample.montecarlo import REPORT_SCHEMA


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestExact:
    def test_cuts(self, capsys):
        code, out, _ = run(capsys, "exact", "--theta", "1", "--cuts", "0,1,2")
        data = json.loads(out)
        assert code == 0
        assert data["mean_S"][1] == pytest.approx(1.73533, abs=1e-5)
        assert data["cov_S"][0][1] == pytest.approx(0.735326, abs=1e-6)

    def test_log_equal(self, capsys):
        code, out, _ = run(capsys, "exact", "--theta", "2", "--gamma", "1", "--p", "5")
        data = json.loads(out)
        assert data["correlation"] == pytest.approx(0.415037, abs=1e-6)
        assert data["theta_S_variance_limit"] == pytest.approx(2 * 0.4150374993 / math.log(2), rel=1e-5)

    def test_sizes(self, capsys):
        code, out, _ = run(capsys, "exact", "--theta", "1", "--sizes", "100,100")
        data = json.loads(out)
        assert data["fisher"]["EV"] == pytest.approx(math.log(201 / 101), rel=1e-5)
        assert data["fisher"]["asymptote"] == pytest.approx(math.log(2), rel=1e-5)

    @pytest.mark.parametrize("fmt", ["csv", "table"])
    def test_formats(self, capsys, fmt):
        code, out, _ = run(capsys, "exact", "--theta", "1", "--cuts", "0,1,2", "--format", fmt)
        assert code == 0 and "mean_S" in out

    def test_precision(self, capsys):
        _, out, _ = run(capsys, "exact", "--theta", "1", "--cuts", "0,1,2", "--precision", "3")
        assert json.loads(out)["mean_S"][1] == 1.74


class TestUsageErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            ["exact", "--cuts", "0,1"],
            ["exact", "--theta", "1"],
            ["exact", "--theta", "1", "--cuts", "0,1", "--sizes", "3,3"],
            ["exact", "--theta", "1", "--gamma", "1"],
            ["exact", "--theta", "-1", "--cuts", "0,1"],
            ["gaps", "--t", "0"],
            ["esf", "--n", "11"],
            ["esf", "--n", "0"],
            ["embed", "--l", "3,2"],
            ["embed", "--l", "2,9"],
            ["exact", "--theta", "1", "--cuts", "a,b"],
            ["nonsense"],
        ],
    )
    def test_exit_one(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            code = main(argv)
            raise SystemExit(code)
        assert exc.value.code == 1

    def test_bad_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("BISAMPLE_SEED", "abc")
        code, _, err = run(capsys, "simulate", "--theta", "1", "--cuts", "0,1", "--replicates", "10")
        assert code == 1 and "BISAMPLE_SEED" in err


class TestSimulate:
    def test_report(self, capsys, tmp_path):
        out_file = tmp_path / "r.json"
        code, _, _ = run(capsys, "simulate", "--theta", "2", "--cuts", "0,0.5,1", "--replicates", "2000",
                         "--seed", "3", "--output", str(out_file))
        data = json.loads(out_file.read_text())
        jsonschema.validate(data, REPORT_SCHEMA)
        assert code == (0 if data["all_passed"] else 2)
        assert "wall_time_s" not in data["metadata"]

    def test_guard_exit_two(self, capsys):
        code, _, err = run(capsys, "simulate", "--theta", "1", "--cuts", "0,50", "--replicates", "10")
        assert code == 2 and "exceeds" in err

    def test_config_and_override(self, capsys, tmp_path):
        ini = tmp_path / "e.ini"
        ini.write_text("[experiment]\ntheta = 2\ncuts = 0,0.5,1\nreplicates = 500\nseed = 1\n")
        _, out, _ = run(capsys, "simulate", "--config", str(ini))
        assert json.loads(out)["metadata"]["replicates"] == 500
        _, out, _ = run(capsys, "simulate", "--config", str(ini), "--replicates", "300", "--gamma", "1", "--p", "2")
        data = json.loads(out)
        assert data["metadata"]["replicates"] == 300
        assert data["extras"]["design"] == "log_equal"

    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("BISAMPLE_SEED", "17")
        _, out, _ = run(capsys, "simulate", "--theta", "1", "--cuts", "0,1", "--replicates", "50")
        assert json.loads(out)["metadata"]["seed"] == 17

    def test_sizes_route(self, capsys):
        _, out, _ = run(capsys, "simulate", "--theta", "1", "--sizes", "10,10", "--replicates", "500", "--format", "table")
        assert "EV" in out and "all_passed" in out

    def test_timing_flag(self, capsys):
        _, out, _ = run(capsys, "simulate", "--theta", "1", "--cuts", "0,1", "--replicates", "20", "--include-timing")
        assert "wall_time_s" in json.loads(out)["metadata"]

    def test_byte_identical_subprocess(self):
        argv = [sys.executable, "-m", "bisample", "simulate", "--theta", "2", "--cuts", "0,0.5,1",
                "--replicates", "3000", "--seed", "42"]
        first = subprocess.run(argv, capture_output=True, check=False)
        second = subprocess.run(argv, capture_output=True, check=False)
        assert first.returncode in (0, 2)
        assert first.stdout == second.stdout and len(first.stdout) > 0


class TestOtherCommands:
    def test_gaps_exact(self, capsys):
        code, out, _ = run(capsys, "gaps", "--t", "1")
        data = json.loads(out)
        assert code == 0
        assert data["exact"]["mean"] == pytest.approx(0.777505, abs=1e-6)
        assert len(data["density"]["s"]) == 10

    def test_gaps_mc(self, capsys):
        code, out, _ = run(capsys, "gaps", "--t", "1", "--mc", "3000", "--seed", "1")
        data = json.loads(out)
        jsonschema.validate(data["monte_carlo"], REPORT_SCHEMA)

    def test_esf(self, capsys):
        code, out, _ = run(capsys, "esf", "--n", "3", "--theta", "1")
        data = json.loads(out)
        assert data["pmf"]["3,0,0"] == pytest.approx(1 / 6, rel=1e-5)
        code, out, _ = run(capsys, "esf", "--n", "3", "--crp", "5000", "--conditioned", "5000",
                           "--x", "0.5", "--tv-threshold", "0.05")
        data = json.loads(out)
        assert "crp_chi_square" in data and data["conditioned"][0]["accepted"] == 5000

    def test_embed(self, capsys):
        code, out, _ = run(capsys, "embed", "--l", "1,3", "--replicates", "2000", "--seed", "4")
        data = json.loads(out)
        assert data["accepted"] == 2000 and "acceptance_rate" in data
        assert code == (0 if data["pass"] else 2)

    def test_embed_guard(self, capsys):
        code, _, _ = run(capsys, "embed", "--l", "8,8", "--cuts", "0,0.01,0.02", "--replicates", "10")
        assert code == 2


class TestReferenceInvocations:
    def test_exact_log_equal_unit(self, capsys):
        _, out, _ = run(capsys, "exact", "--theta", "1", "--gamma", "1", "--p", "3")
        data = json.loads(out)
        assert data["mean_S"] == pytest.approx([math.log(2)] * 3, rel=1e-5)
        assert data["correlation"] == pytest.approx(0.415037, abs=1e-6)
        assert data["EV"] == pytest.approx(math.log(1.5), rel=1e-5)

    def test_esf_pmf_two(self, capsys):
        _, out, _ = run(capsys, "esf", "--theta", "1", "--n", "2", "--pmf")
        assert json.loads(out)["pmf"] == {"2,0": 0.5, "0,1": 0.5}

    def test_gaps_labels(self, capsys):
        _, out, _ = run(capsys, "gaps", "--theta", "1", "--t", "1", "--exact")
        exact = json.loads(out)["exact"]
        assert set(exact) >= {"variance_mixture", "variance_stated_li3_over_t"}

    def test_harness_run(self, capsys):
        code, out, _ = run(capsys, "simulate", "--theta", "2", "--cuts", "0,0.5,1", "--replicates", "100000", "--seed", "7")
        data = json.loads(out)
        assert code == 0 and data["all_passed"]
        assert all(abs(r["z"]) <= 3 for r in data["targets"])

    def test_gaps_full_mc(self, capsys):
        _, out, _ = run(capsys, "gaps", "--t", "1", "--mc", "100000", "--seed", "3")
        mc = json.loads(out)["monte_carlo"]
        mean_row = next(r for r in mc["targets"] if r["name"] == "mean_W")
        assert abs(mean_row["z"]) <= 3

    def test_embed_reference(self, capsys):
        code, out, _ = run(capsys, "embed", "--theta", "1", "--l", "2,4", "--replicates", "10000")
        data = json.loads(out)
        assert code == 0 and data["pass"] and data["acceptance_rate"] > 0
