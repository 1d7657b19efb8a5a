# tests/test_trialkit.py
import json

import pytest

from trialkit import SCHEMA, main

EXAMPLE1_JSON = '{"p00": 0.0197, "p10": 0.6723, "p01": 0.0060, "p11": 0.3020, "s1": 0.93}'
EXAMPLE2_JSON = '{"p00": 0.57516, "p10": 0.13284, "p01": 0.07156, "p11": 0.22044, "s1": 0.734}'
TABLE5_JSON = '{"p00": 0.3, "p10": 0.1, "p01": 0.3, "p11": 0.3, "s1": 0.7}'


@pytest.fixture
def run(tmp_path, capsys):
    def _run(*argv):
        code = main([*argv, "--log-path", str(tmp_path / "trialkit.log")])
        out, err = capsys.readouterr()
        return code, out, err
    return _run


def _json(out):
    return json.loads(out)


class TestBounds:
    def test_example1_json(self, run):
        code, out, _ = run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "0.3010", "--format", "json")
        assert code == 0
        report = _json(out)
        assert report["schema"] == SCHEMA
        assert report["lower"] == pytest.approx(-0.0710, abs=1e-9)
        assert report["upper"] == pytest.approx(0.0257, abs=1e-9)
        assert report["verdict"] == "NotExcludable"

    def test_law_from_file(self, run, tmp_path):
        path = tmp_path / "law.json"
        path.write_text(EXAMPLE1_JSON)
        code, out, _ = run("bounds", "--law", str(path), "--gamma", "0.3010", "--format", "json")
        assert code == 0
        assert _json(out)["lower"] == pytest.approx(-0.0710, abs=1e-9)

    def test_table_output(self, run):
        code, out, _ = run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "0.3010")
        assert code == 0
        assert "=" * 70 in out
        assert "[-0.0710, 0.0257]" in out

    def test_nonstrong_model(self, run):
        law = '{"p00": 0.3, "p10": 0.3, "p01": 0.2, "p11": 0.2, "s1": 0.7}'
        code, out, _ = run("bounds", "--law", law, "--gamma", "0.9", "--model", "nonstrong", "--format", "json")
        assert code == 0
        report = _json(out)
        assert (report["lower"], report["upper"]) == pytest.approx((0.2, 0.4))

    def test_gamma_interval(self, run):
        code, out, _ = run("bounds", "--law", EXAMPLE1_JSON, "--gamma-lo", "0.2", "--gamma-hi", "0.3",
                           "--format", "json")
        assert code == 0
        assert _json(out)["gamma"]["form"] == "interval"

    def test_relative_risk(self, run):
        code, out, _ = run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "1.4388", "--scale", "crr",
                           "--format", "json")
        assert code == 0
        report = _json(out)
        assert report["scale"] == "crr"
        assert report["lower"] <= 0.9496 <= report["upper"]

    def test_relative_risk_needs_strong_model(self, run):
        code, _, err = run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "1.4388", "--scale", "crr",
                           "--model", "nonstrong")
        assert code == 2
        assert "error:" in err


class TestExitCodes:
    def test_gamma_out_of_range(self, run):
        code, _, err = run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "1.5")
        assert code == 2
        assert "--gamma" in err

    def test_missing_gamma(self, run):
        code, _, err = run("bounds", "--law", EXAMPLE1_JSON)
        assert code == 2
        assert "required" in err

    def test_missing_law(self, run):
        assert run("bounds", "--gamma", "0.3")[0] == 2

    def test_bad_json(self, run):
        code, _, err = run("bounds", "--law", "{p00:", "--gamma", "0.3")
        assert code == 2
        assert "--law" in err

    @pytest.mark.parametrize("law", [
        '{"p00": "x", "p10": 0.25, "p01": 0.25, "p11": 0.25, "s1": 0.5}',
        '{"p00": null, "p10": 0.25, "p01": 0.25, "p11": 0.25, "s1": 0.5}',
        '{"p00": 0.25, "p10": 0.25, "p01": 0.25, "p11": 0.25}',
    ])
    def test_malformed_law_is_a_usage_error(self, run, law):
        code, _, err = run("bounds", "--law", law, "--gamma", "0.1")
        assert code == 2
        assert "--law" in err

    @pytest.mark.parametrize("gamma_spec", ['[1]', '{"form": "point"}', '{"form": "interval", "lo": "x"}'])
    def test_malformed_gamma_spec_is_a_usage_error(self, run, gamma_spec):
        code, _, err = run("bounds", "--law", EXAMPLE1_JSON, "--gamma-spec", gamma_spec)
        assert code == 2
        assert "--gamma-spec" in err

    @pytest.mark.parametrize("config", ['[1]', '"grid"', '{"resolution": "x"}', '{"resolution": 1}'])
    def test_malformed_partition_config_is_a_usage_error(self, run, tmp_path, config):
        code, _, err = run("partition", "--config", config, "--out", str(tmp_path / "partition.csv"))
        assert code == 2
        assert "--config" in err
        assert not (tmp_path / "partition.csv").exists()

    @pytest.mark.parametrize("counts", ['[[1, 2], [3]]', '"abc"', '[[1, 2], [3, -4]]', '[1, 2, 3]'])
    def test_malformed_external_counts_is_a_usage_error(self, run, tmp_path, counts):
        control = tmp_path / "control.csv"
        treated = tmp_path / "treated.csv"
        control.write_text("s,y\n0,0\n0,1\n1,0\n1,1\n")
        treated.write_text("s\n0\n1\n")
        code, _, err = run("bootstrap", "--control", str(control), "--treated", str(treated),
                           "--gamma", "0.3", "--external-counts", counts, "--B", "5", "--workers", "1")
        assert code == 2
        assert "--external-counts" in err

    def test_conflicting_gamma_flags(self, run):
        assert run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "0.3", "--gamma-lo", "0.1")[0] == 2

    def test_not_normalized(self, run):
        law = '{"p00": 0.5, "p10": 0.5, "p01": 0.5, "p11": 0.5, "s1": 0.5}'
        assert run("bounds", "--law", law, "--gamma", "0.1")[0] == 3

    def test_renormalize_flag(self, run):
        law = '{"p00": 0.5, "p10": 0.5, "p01": 0.5, "p11": 0.5, "s1": 0.5}'
        assert run("bounds", "--law", law, "--gamma", "0.1", "--renormalize")[0] == 0

    def test_strict_infeasible(self, run):
        code, _, _ = run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "0.99", "--strict-feasibility")
        assert code == 4

    def test_infeasible_without_strict_reports_range(self, run):
        code, out, _ = run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "0.99", "--format", "json")
        assert code == 0
        assert _json(out)["schema"] == SCHEMA

    def test_log_file_written(self, run, tmp_path):
        run("bounds", "--law", EXAMPLE1_JSON, "--gamma", "0.3010")
        assert "bounds" in (tmp_path / "trialkit.log").read_text()


class TestCriteria:
    def test_both_models(self, run):
        code, out, _ = run("criteria", "--law", EXAMPLE2_JSON, "--gamma", "0.575", "--format", "json")
        assert code == 0
        verdicts = _json(out)["verdicts"]
        assert verdicts["strong"]["verdict"] == "Excluded"
        assert verdicts["strong"]["threshold"] == pytest.approx(0.48644, abs=1e-9)
        assert set(verdicts) == {"strong", "nonstrong"}

    def test_single_model(self, run):
        code, out, _ = run("criteria", "--law", EXAMPLE1_JSON, "--gamma", "0.3010", "--model", "strong",
                           "--format", "json")
        assert code == 0
        report = _json(out)
        assert report["verdict"] == "NotExcludable"
        assert report["attainable"] is False

    def test_table_output(self, run):
        code, out, _ = run("criteria", "--law", EXAMPLE2_JSON, "--gamma", "0.575")
        assert code == 0
        assert "strong verdict: Excluded" in out
        assert "exclusion needs gamma > 0.4864 (attainable)" in out


class TestOtherCommands:
    def test_examples(self, run):
        code, out, _ = run("examples", "--format", "json")
        assert code == 0
        report = _json(out)
        assert report["failed"] == 0
        assert report["disputed"] >= 1

    def test_examples_table(self, run):
        code, out, _ = run("examples")
        assert code == 0
        assert "Example1" in out

    def test_derive(self, run):
        code, out, _ = run("derive", "--system", "nonstrong-reduced", "--direction", "lower",
                           "--samples", "5000", "--workers", "1", "--format", "json")
        assert code == 0
        report = _json(out)
        assert report["count"] == len(report["expressions"]) == len(report["coefficients"])
        assert any("P(Y=1|T=0)" in e for e in report["expressions"])

    def test_witness(self, run):
        code, out, _ = run("witness", "--law", TABLE5_JSON, "--gamma", "0.2", "--format", "json")
        assert code == 0
        report = _json(out)
        assert report["found"] is True
        assert report["witness_ace_ty"] == pytest.approx(-0.4, abs=1e-9)
        assert sum(map(sum, report["witness"])) == pytest.approx(1.0)

    def test_no_witness_when_excluded(self, run):
        code, out, _ = run("witness", "--law", EXAMPLE2_JSON, "--gamma", "0.575", "--format", "json")
        assert code == 0
        assert _json(out)["found"] is False

    def test_partition(self, run, tmp_path):
        out_csv = tmp_path / "grid" / "partition.csv"
        code, out, _ = run("partition", "--resolution", "21", "--out", str(out_csv), "--format", "json")
        assert code == 0
        assert out_csv.exists()
        meta = json.loads((tmp_path / "grid" / "partition.meta.json").read_text())
        assert meta["config"]["resolution"] == 21
        assert _json(out)["metadata_path"].endswith("partition.meta.json")

    def test_bootstrap(self, run, tmp_path):
        control = tmp_path / "control.csv"
        treated = tmp_path / "treated.csv"
        control.write_text("s,y\n" + "0,0\n" * 20 + "0,1\n" * 30 + "1,0\n" * 10 + "1,1\n" * 40)
        treated.write_text("s\n" + "0\n" * 30 + "1\n" * 70)
        code, out, _ = run("bootstrap", "--control", str(control), "--treated", str(treated),
                           "--gamma", "0.3", "--B", "30", "--seed", "1", "--workers", "1",
                           "--format", "json")
        assert code == 0
        report = _json(out)
        assert report["B"] == 30
        region = report["uncertainty_region"]
        assert region["lo"] <= region["hi"]
        assert report["skipped_replicates"] == region["skipped_replicates"]

    def test_bootstrap_needs_trial_data(self, run):
        assert run("bootstrap", "--law", EXAMPLE1_JSON, "--gamma", "0.3")[0] == 2
