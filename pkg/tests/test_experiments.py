import csv
import io
import math

import numpy as np
import pytest

from qvar.estimator import exact_variation_shape, normalized_asymptotic_variance
from qvar.experiments import (StudyConfig, aggregated_mc_variances, aggregation_curve_study,
                              default_s_grid, drift_robustness_study, histogram_study, run_study,
                              variance_curve_study)
from qvar.models import model_from_dict
from qvar.seqalg import elementary

HIST_MODELS = [{"model": "exp", "C": 3.0}, {"model": "matern32", "C": 3.0},
               {"model": "matern52", "C": 3.0}]


def read_rows(table):
    text = "\n".join(ln for ln in table.to_csv().splitlines() if not ln.startswith("#"))
    return list(csv.DictReader(io.StringIO(text)))


def exact_cumulant_shape(desc, n):
    model = model_from_dict(desc)
    return exact_variation_shape(model, elementary(model.local_behavior().D + 1), n, 1 / n)


@pytest.fixture(scope="module")
def histogram():
    return histogram_study(StudyConfig("histogram", models=HIST_MODELS, n_values=[200], N=2000))


class TestStudyConfig:
    def test_full_restores_full_scale(self):
        assert StudyConfig("histogram", full=True).N == 10_000

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            StudyConfig.from_dict({"study": "histogram", "replicates": 3})

    def test_bad_values(self):
        with pytest.raises(ValueError):
            StudyConfig("histogram", N=0)
        with pytest.raises(ValueError):
            StudyConfig("variance-curve", s_grid=[0.5, 2.0])
        with pytest.raises(ValueError):
            StudyConfig("bootstrap")

    def test_round_trip(self):
        cfg = StudyConfig("drift-robustness", drift={"poly": [0, 5]}, n_values=[100, 400])
        assert StudyConfig.from_dict(cfg.to_dict()) == cfg

    def test_default_grid(self):
        g = default_s_grid()
        assert g[0] == 0.1 and g[-1] == 1.9 and len(g) == 19


class TestHistogram:
    def test_exponential_mean_and_variance(self, histogram):
        mean = histogram.column("mean", kind="summary", model="exp")[0]
        var = histogram.column("variance", kind="summary", model="exp")[0]
        assert abs(mean - 3.0) <= 0.1
        assert 0.8 <= var / (9 * 2 / 200) <= 1.2

    @pytest.mark.parametrize("name", ["exp", "matern32", "matern52"])
    def test_law(self, histogram, name):
        mean = histogram.column("mean", kind="summary", model=name)[0]
        var = histogram.column("variance", kind="summary", model=name)[0]
        tv = histogram.column("theory_variance", kind="summary", model=name)[0]
        assert abs(mean - 3.0) <= 0.1
        assert 0.8 <= var / tv <= 1.2

    def test_summary_recomputable(self, histogram):
        rows = read_rows(histogram)
        for name in ("exp", "matern32", "matern52"):
            c = np.array([float(r["C_hat"]) for r in rows if r["kind"] == "replicate" and r["model"] == name])
            summ = next(r for r in rows if r["kind"] == "summary" and r["model"] == name)
            assert c.size == 2000
            assert float(summ["mean"]) == pytest.approx(c.mean(), rel=1e-12)
            assert float(summ["variance"]) == pytest.approx(c.var(ddof=1), rel=1e-10)
            d = c - c.mean()
            assert float(summ["skewness"]) == pytest.approx(np.mean(d**3) / np.mean(d**2) ** 1.5, rel=1e-8)

    def test_theory_columns(self, histogram):
        for name, D in (("exp", 0), ("matern32", 1), ("matern52", 2)):
            s = histogram.column("s", kind="summary", model=name)[0]
            tv = histogram.column("theory_variance", kind="summary", model=name)[0]
            assert tv == pytest.approx(9 * normalized_asymptotic_variance(elementary(D + 1), D, s) / 200)

    @pytest.mark.parametrize("desc", HIST_MODELS, ids=lambda d: d["model"])
    def test_skewness_matches_exact(self, histogram, desc):
        # C_hat is an affine image of V, so they share skewness and kurtosis.
        skew, kurt = exact_cumulant_shape(desc, 200)
        name = model_from_dict(desc).name
        mc_skew = histogram.column("skewness", kind="summary", model=name)[0]
        mc_kurt = histogram.column("excess_kurtosis", kind="summary", model=name)[0]
        # Large-sample standard errors for Gaussian-like data: sqrt(6/N), sqrt(24/N).
        assert abs(mc_skew - skew) <= 4 * math.sqrt(6 / 2000)
        assert abs(mc_kurt - kurt) <= 4 * math.sqrt(24 / 2000)

    @pytest.mark.parametrize("name", ["exp", "matern32"])
    def test_normality_screen(self, histogram, name):
        assert abs(histogram.column("skewness", kind="summary", model=name)[0]) < 0.25
        assert abs(histogram.column("excess_kurtosis", kind="summary", model=name)[0]) < 0.5

    def test_matern52_skewness_above_screen(self):
        # The exact finite-sample skewness already exceeds the 0.25 screen at n = 200.
        skew, kurt = exact_cumulant_shape({"model": "matern52", "C": 3.0}, 200)
        assert skew > 0.25
        assert abs(kurt) < 0.5

    def test_single_replicate(self):
        t = histogram_study(StudyConfig("histogram", n_values=[50], N=1))
        assert len(t.column("C_hat", kind="replicate")) == 1
        assert math.isnan(t.column("variance", kind="summary")[0])
        assert "nan" in t.to_csv()

    def test_invalid_pairing_rejected(self):
        with pytest.raises(ValueError, match="elem1"):
            histogram_study(StudyConfig("histogram", models=[{"model": "matern32", "C": 3}],
                                        sequences=["elem1"], n_values=[50], N=2))

    def test_determinism(self, monkeypatch):
        cfg = StudyConfig("histogram", models=HIST_MODELS[:2], n_values=[64, 100], N=50, seed=9)
        first = histogram_study(cfg).to_csv()
        monkeypatch.setenv("QVAR_THREADS", "4")
        assert histogram_study(cfg).to_csv() == first
        other = StudyConfig("histogram", models=HIST_MODELS[:2], n_values=[64, 100], N=50, seed=10)
        assert histogram_study(other).to_csv() != first

    def test_comment_header(self, histogram):
        text = histogram.to_csv()
        assert text.startswith("# ")
        assert "kind,model,D,s,sequence" in text


class TestVarianceCurve:
    def test_efficiency_point(self):
        t = variance_curve_study(["elem1"], 0, [1.0])
        assert t.column("vtilde", sequence="elem1")[0] == pytest.approx(2.0, abs=1e-10)

    def test_lower_bound_and_order(self):
        grid = default_s_grid()
        t = variance_curve_study(["elem1", "elem2", "elem3", "daub2", "daub3"], 0, grid)
        assert all(v >= 2 - 1e-6 for v in t.column("vtilde"))
        for s in grid:
            assert t.column("vtilde", sequence="elem2", s=s)[0] <= t.column("vtilde", sequence="elem3", s=s)[0]
            assert t.column("vtilde", sequence="daub2", s=s)[0] <= t.column("vtilde", sequence="daub3", s=s)[0]

    def test_restricted_grid_for_low_order(self):
        t = variance_curve_study(["elem1"], 0, default_s_grid())
        assert max(t.column("s", sequence="elem1")) == 1.4

    def test_reference_rows(self):
        t = variance_curve_study(["elem2"], 1, [0.5, 1.0])
        assert t.column("vtilde", sequence="cramer-rao") == [2.0, 2.0]


class TestAggregationCurve:
    def test_dominance(self):
        sets = [["elem1", "seq123", "elem2", "daub2"], ["daub2", "elem2", "elem3", "elem4"]]
        t = aggregation_curve_study(sets, 0, default_s_grid())
        for row in t.rows:
            if row["sequence"] == "aggregated" and row["status"] != "invalid":
                indiv = [r["vtilde"] for r in t.rows if r["set"] == row["set"] and r["s"] == row["s"]
                         and r["sequence"] != "aggregated"]
                assert row["vtilde"] <= min(indiv) + 1e-12
                assert row["vtilde"] >= 2 - 1e-6

    def test_invalid_flagged(self):
        t = aggregation_curve_study([["elem1", "elem2"]], 0, [1.6])
        assert t.rows[0]["status"] == "invalid" and t.rows[0]["dropped"] == "elem1"

    def test_reduced_status(self):
        t = aggregation_curve_study([["elem1", "seq123", "elem2", "daub2"]], 0, [0.5])
        agg = [r for r in t.rows if r["sequence"] == "aggregated"][0]
        assert agg["status"] == "reduced" and agg["dropped"] == "elem2"
        assert agg["eigen_ratio"] < 1e-10

    def test_single_sequence_matches_variance_curve(self):
        grid = [0.3, 0.7, 1.2]
        agg = aggregation_curve_study([["daub3"]], 1, grid)
        cur = variance_curve_study(["daub3"], 1, grid)
        assert agg.column("vtilde", sequence="aggregated") == pytest.approx(cur.column("vtilde", sequence="daub3"), rel=1e-14)

    def test_run_study_dispatch(self):
        cfg = StudyConfig("aggregation-curve", sequence_sets=[["elem3", "elem4", "daub3"]], D=1, s_grid=[1.0])
        t = run_study(cfg)
        assert t.column("status", sequence="aggregated") == ["ok"]


class TestDrift:
    def test_affine_annihilated(self):
        cfg = StudyConfig("drift-robustness", sequences=["elem2"], drift={"poly": [0, 5]},
                          n_values=[100, 400], N=100)
        t = drift_robustness_study(cfg)
        assert max(t.column("max_rel_diff", kind="summary")) <= 1e-9
        assert t.column("exact_bias", kind="summary") == pytest.approx([0, 0], abs=1e-20)

    def test_cubic_bias_vanishes(self):
        cfg = StudyConfig("drift-robustness", sequences=["elem2"], drift={"poly": [0, 0, 0, 1]},
                          n_values=[100, 400], N=400)
        t = drift_robustness_study(cfg)
        exact = t.column("exact_bias", kind="summary")
        assert 0 < exact[1] < exact[0]
        mc = t.column("mean_bias", kind="summary")
        se = t.column("bias_se", kind="summary")
        for m, e, sd in zip(mc, exact, se):
            assert abs(m - e) <= 4 * sd

    def test_no_drift_matches_histogram(self):
        kw = dict(models=[{"model": "exp", "C": 3.0}], n_values=[80], N=30, seed=4)
        h = histogram_study(StudyConfig("histogram", **kw))
        d = drift_robustness_study(StudyConfig("drift-robustness", drift=None, **kw))
        assert d.column("C_hat", kind="replicate") == h.column("C_hat", kind="replicate")
        assert d.column("max_rel_diff", kind="summary") == [0.0]

    def test_sine_condition_columns(self):
        cfg = StudyConfig("drift-robustness", sequences=["elem2"], drift={"sine": {"amp": 0.1, "freq": 2.0}},
                          n_values=[100], N=20)
        row = [r for r in drift_robustness_study(cfg).rows if r["kind"] == "summary"][0]
        assert row["K"] > 0 and row["ratio"] == pytest.approx(row["K"] / row["scale"])


@pytest.mark.slow
def test_aggregated_mc_variance():
    out = aggregated_mc_variances({"model": "exp", "C": 3.0}, ["elem1", "seq123", "elem2", "daub2"],
                                  n=400, N=2000, seed=0)
    assert all(out["aggregated"] <= v + 1e-15 for k, v in out.items() if k != "aggregated")
