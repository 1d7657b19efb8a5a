# tests/test_stats_io.py
import numpy as np
import pytest

from closed_bounds import strong_bounds
from conftest import EXAMPLE1, EXAMPLE2
from errors import (AllReplicatesInfeasible, DegenerateArm, EmptyFile, MalformedRow,
                    UsageError)
from law import GammaSpec, Scale
from stats_io import (BootstrapConfig, ExternalStudy, GammaMode, Model, TrialCounts,
                      _replicate, bootstrap_region, counts_from_records, ingest,
                      read_control_csv, region_from_replicates, sample_trial,
                      write_records_csv)


def _counts_at(law, n=10_000):
    """Counts whose frequencies equal the law exactly (n = 10^4 and four-decimal cells)."""
    control = np.rint(np.array([[law.p00, law.p01], [law.p10, law.p11]]) * n).astype(int)
    s1 = int(round(law.s1_treated * n))
    return TrialCounts(control, [n - s1, s1])


@pytest.fixture
def example1_counts():
    return _counts_at(EXAMPLE1)


@pytest.fixture
def trial_files(tmp_path):
    control = tmp_path / "control.csv"
    treated = tmp_path / "treated.csv"
    control.write_text("s,y\n0,0\n0,1\n1,0\n1,1\n")
    treated.write_text("s\n0\n1\n")
    return control, treated


class TestIngest:
    def test_four_cells(self, trial_files):
        law, counts = ingest(*trial_files)
        assert law.cells == pytest.approx((0.25, 0.25, 0.25, 0.25))
        assert law.s1_treated == pytest.approx(0.5)
        assert counts.n_control == 4 and counts.n_treated == 2

    def test_header_order_is_respected(self, tmp_path):
        path = tmp_path / "control.csv"
        path.write_text("y,s\n1,0\n1,0\n0,1\n")
        records = read_control_csv(path)
        assert [(r.s, r.y) for r in records] == [(0, 1), (0, 1), (1, 0)]

    def test_malformed_row_reports_line(self, tmp_path, trial_files):
        path = tmp_path / "bad.csv"
        path.write_text("s,y\n0,1\n2,0\n")
        with pytest.raises(MalformedRow) as info:
            ingest(path, trial_files[1])
        assert info.value.line_no == 3
        assert f"{path}:3" in str(info.value)

    @pytest.mark.parametrize("text", ["s,y\n0,yes\n", "s,y\n0\n", "s,y\n0,1,1\n"])
    def test_non_binary_values(self, tmp_path, text):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(MalformedRow):
            read_control_csv(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "noheader.csv"
        path.write_text("0,1\n1,1\n")
        with pytest.raises(MalformedRow) as info:
            read_control_csv(path)
        assert info.value.line_no == 1

    @pytest.mark.parametrize("text", ["", "s,y\n"])
    def test_empty_file(self, tmp_path, text):
        path = tmp_path / "empty.csv"
        path.write_text(text)
        with pytest.raises(EmptyFile):
            read_control_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            read_control_csv(tmp_path / "nowhere.csv")

    def test_sampled_trial_survives_csv(self, tmp_path):
        rng = np.random.default_rng(60)
        control, treated = sample_trial(EXAMPLE1, 500, 300, rng)
        c_path = write_records_csv(control, tmp_path / "c.csv")
        t_path = write_records_csv(treated, tmp_path / "t.csv")
        _, counts = ingest(c_path, t_path)
        expected = counts_from_records(control, treated)
        assert np.array_equal(counts.control, expected.control)
        assert np.array_equal(counts.treated, expected.treated)


def test_empirical_law_concentrates():
    rng = np.random.default_rng(61)
    control, treated = sample_trial(EXAMPLE1, 100_000, 100_000, rng)
    law = counts_from_records(control, treated).law()
    assert np.allclose(law.cells, EXAMPLE1.cells, atol=0.01)
    assert law.s1_treated == pytest.approx(EXAMPLE1.s1_treated, abs=0.01)


def test_empty_arm_is_degenerate():
    with pytest.raises(DegenerateArm):
        TrialCounts([[1, 1], [1, 1]], [0, 0]).law()


class TestExternalStudy:
    def test_gamma_hat(self):
        study = ExternalStudy([[80, 20], [30, 70]])
        assert study.gamma_hat() == pytest.approx(0.5)
        assert study.gamma_hat(Scale.RELATIVE_RISK) == pytest.approx(3.5)

    def test_empty_arm(self):
        assert ExternalStudy([[0, 0], [30, 70]]).gamma_hat() is None

    @pytest.mark.parametrize("counts", [[[1, 2], [3, -4]], [1, 2, 3]])
    def test_invalid_counts(self, counts):
        with pytest.raises(ValueError):
            ExternalStudy(counts)


@pytest.mark.parametrize("kwargs", [
    {"replicates": 0},
    {"alpha": 1.0},
    {"alpha": 0.0},
    {"seed": -1},
    {"gamma_mode": GammaMode.RESAMPLED},
])
def test_bootstrap_config_validation(kwargs):
    with pytest.raises(UsageError):
        BootstrapConfig(**kwargs)


class TestBootstrap:
    def test_single_replicate(self, example1_counts):
        spec = GammaSpec.point(0.3010)
        region = bootstrap_region(example1_counts, spec, cfg=BootstrapConfig(replicates=1, seed=5), workers=1)
        lower, upper = _replicate(0, 5, example1_counts, spec, Model.STRONG, None)
        assert (region.lo, region.hi) == (lower, upper)
        assert region.sd_lower == 0.0 and region.skipped == 0

    def test_example1_region_covers_population_bounds(self, example1_counts):
        population = strong_bounds(EXAMPLE1, 0.3010)
        region = bootstrap_region(example1_counts, GammaSpec.point(0.3010),
                                  cfg=BootstrapConfig(replicates=1000, seed=42), workers=1)
        assert region.lo <= population.lower
        assert region.hi >= population.upper
        assert region.point_lower == pytest.approx(-0.0710, abs=1e-9)
        assert region.violations == []
        assert len(region.lowers) == 1000 - region.skipped

    def test_result_does_not_depend_on_workers(self, example1_counts):
        spec, cfg = GammaSpec.point(0.3010), BootstrapConfig(replicates=40, seed=7)
        one = bootstrap_region(example1_counts, spec, cfg=cfg, workers=1)
        two = bootstrap_region(example1_counts, spec, cfg=cfg, workers=2)
        assert np.array_equal(one.lowers, two.lowers)
        assert np.array_equal(one.uppers, two.uppers)
        assert (one.lo, one.hi) == (two.lo, two.hi)

    def test_smaller_alpha_gives_wider_region(self):
        rng = np.random.default_rng(62)
        lowers, uppers = rng.normal(-0.1, 0.02, 500), rng.normal(0.1, 0.02, 500)
        wide = region_from_replicates(lowers, uppers, 0.05)
        narrow = region_from_replicates(lowers, uppers, 0.5)
        assert wide[0] <= narrow[0] and narrow[1] <= wide[1]

    def test_edge_gamma_skips_some_replicates(self, example1_counts):
        edge = EXAMPLE1.p00 + EXAMPLE1.p11
        region = bootstrap_region(example1_counts, GammaSpec.point(edge),
                                  cfg=BootstrapConfig(replicates=200, seed=8), workers=1)
        assert 0 < region.skipped < 200
        assert region.to_dict()["skipped_replicates"] == region.skipped

    def test_all_replicates_infeasible(self, example1_counts):
        with pytest.raises(AllReplicatesInfeasible):
            bootstrap_region(example1_counts, GammaSpec.point(0.99),
                             cfg=BootstrapConfig(replicates=20, seed=9), workers=1)

    def test_nonstrong_model(self, example1_counts):
        region = bootstrap_region(example1_counts, GammaSpec.point(0.3010), Model.NONSTRONG,
                                  cfg=BootstrapConfig(replicates=50, seed=10), workers=1)
        strong = bootstrap_region(example1_counts, GammaSpec.point(0.3010), Model.STRONG,
                                  cfg=BootstrapConfig(replicates=50, seed=10), workers=1)
        assert region.lo <= strong.lo and strong.hi <= region.hi

    def test_sign_only_gamma(self, example1_counts):
        region = bootstrap_region(example1_counts, GammaSpec.sign_positive(),
                                  cfg=BootstrapConfig(replicates=50, seed=11), workers=1)
        assert region.lo <= 0.0 <= region.hi

    def test_relative_risk(self, example1_counts):
        spec = GammaSpec.point(1.4388, Scale.RELATIVE_RISK)
        region = bootstrap_region(example1_counts, spec, cfg=BootstrapConfig(replicates=20, seed=12), workers=1)
        assert region.lo <= region.hi
        assert region.point_lower <= 0.9496 <= region.point_upper

    def test_resampled_gamma(self):
        counts = _counts_at(EXAMPLE2)
        cfg = BootstrapConfig(replicates=50, seed=13, gamma_mode=GammaMode.RESAMPLED,
                              external=ExternalStudy([[80, 20], [30, 70]]))
        region = bootstrap_region(counts, GammaSpec.point(0.5), cfg=cfg, workers=1)
        fixed = strong_bounds(counts.law(), 0.5)
        assert region.point_lower == pytest.approx(fixed.lower)
        assert region.lo <= region.hi
        assert region.sd_lower > 0.0
