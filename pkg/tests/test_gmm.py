import warnings

import numpy as np
import pandas as pd
import pytest

from migrate_rum.exceptions import (
    DomainError,
    InsufficientPeriods,
    NotOveridentified,
    RankDeficient,
    SingularWeightMatrixWarning,
    SubsetNotFound,
)
from migrate_rum.gmm import GmmSpec, ar_test, build_instruments, diff_hansen, fit_system_gmm, hansen_j, hansen_j_strict
from simulations import gmm_panel, stacked_iv_oracle


def toy(n_units=4, periods=3, seed=0, extra=()):
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame({
        "unit": np.repeat(np.arange(n_units), periods),
        "year": np.tile(np.arange(2001, 2001 + periods), n_units),
        "x": rng.normal(size=n_units * periods),
        "y": rng.normal(size=n_units * periods),
    })
    for name in extra:
        frame[name] = rng.normal(size=len(frame))
    return frame


class TestInstrumentCounts:
    def test_hand_enumeration(self):
        # T=3, lags (2,2): the differenced row for period 3 takes x at period 1;
        # the level row for period 3 takes x2 - x1; plus the constant.
        spec = GmmSpec(endogenous=["x"], lag_range={"endogenous": (2, 2)}, fe=())
        inst = build_instruments(toy(), spec, ["x"])
        assert inst.labels == ["x:L2@2003", "D.x:L1@2003", "const"]
        with_time = build_instruments(toy(), GmmSpec(endogenous=["x"], lag_range={"endogenous": (2, 2)}), ["x"])
        assert with_time.count == 5

    def test_two_lags_four_periods(self):
        spec = GmmSpec(endogenous=["x"], fe=())
        inst = build_instruments(toy(periods=4), spec, ["x"])
        assert sorted(inst.labels) == sorted([
            "x:L2@2003", "x:L2@2004", "x:L3@2004", "D.x:L1@2003", "D.x:L1@2004", "const",
        ])

    @pytest.mark.parametrize("periods", [4, 6, 9])
    def test_collapse(self, periods):
        spec = GmmSpec(endogenous=["x"], collapse=True, fe=())
        collapsed = build_instruments(toy(periods=periods), spec, ["x"])
        assert collapsed.labels == ["x:L2", "x:L3", "D.x:L1", "const"]
        full = build_instruments(toy(periods=periods), GmmSpec(endogenous=["x"], fe=()), ["x"])
        assert collapsed.count <= full.count

    def test_exogenous_instruments_itself(self):
        frame = toy(periods=4, extra=("w",))
        inst = build_instruments(frame, GmmSpec(endogenous=["x"], exogenous=["w"], fe=()), ["x", "w"])
        col = inst.Z[:, :, inst.labels.index("w")]
        w = frame.pivot(index="unit", columns="year", values="w").to_numpy()
        np.testing.assert_allclose(col[:, :3], np.diff(w, axis=1))
        np.testing.assert_allclose(col[:, 3:], w)

    def test_equation_option(self):
        diff_only = build_instruments(toy(), GmmSpec(endogenous=["x"], lag_range={"endogenous": (2, 2)},
                                                     equation={"endogenous": "diff"}, fe=()), ["x"])
        assert diff_only.labels == ["x:L2@2003", "const"]
        with pytest.raises(ValueError):
            GmmSpec(equation={"endogenous": "sideways"})

    def test_insufficient_periods(self):
        with pytest.raises(InsufficientPeriods):
            build_instruments(toy(periods=2), GmmSpec(endogenous=["x"]), ["x"])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            GmmSpec(endogenous=["x"], exogenous=["x"])
        with pytest.raises(ValueError):
            GmmSpec(lag_range={"endogenous": (1, 2)})


class TestExactIdentification:
    @pytest.mark.parametrize("seed", range(5))
    def test_equals_iv(self, seed):
        frame = gmm_panel(seed, n_units=50, periods=3)
        spec = GmmSpec(endogenous=["x"], lag_range={"endogenous": (2, 2)}, equation={"endogenous": "diff"}, fe=())
        res = fit_system_gmm(frame, ["x"], spec)
        oracle = stacked_iv_oracle(frame, 2)
        np.testing.assert_allclose(res.coefficients[["x", "const"]].to_numpy(), oracle, atol=1e-8)
        assert hansen_j(res) == (0.0, 0, pytest.approx(np.nan, nan_ok=True))
        with pytest.raises(NotOveridentified):
            hansen_j_strict(res)

    def test_all_exogenous_is_stacked_ols(self):
        frame = gmm_panel(1, n_units=30, periods=4)
        res = fit_system_gmm(frame, ["x"], GmmSpec(exogenous=["x"], fe=()))
        wide_x = frame.pivot(index="unit", columns="year", values="x").to_numpy()
        wide_y = frame.pivot(index="unit", columns="year", values="y").to_numpy()
        X = np.vstack([
            np.column_stack([np.diff(wide_x, axis=1).ravel(), np.zeros(30 * 3)]),
            np.column_stack([wide_x.ravel(), np.ones(30 * 4)]),
        ])
        y = np.concatenate([np.diff(wide_y, axis=1).ravel(), wide_y.ravel()])
        np.testing.assert_allclose(res.coefficients.to_numpy(), np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-10)


class TestEstimation:
    def test_block_order_invariance(self):
        frame = gmm_panel(2, n_units=100, periods=5)
        frame["z"] = frame["x"] ** 2 / 4 + np.random.default_rng(2).normal(size=len(frame))
        a = fit_system_gmm(frame, ["x", "z"], GmmSpec(endogenous=["x", "z"]))
        b = fit_system_gmm(frame, ["z", "x"], GmmSpec(endogenous=["z", "x"]))
        for name in ("x", "z"):
            assert a.coefficients[name] == pytest.approx(b.coefficients[name], abs=1e-9)
        assert a.hansen[0] == pytest.approx(b.hansen[0], rel=1e-8)

    def test_df_reconciles(self):
        res = fit_system_gmm(gmm_panel(3, periods=5), ["x"], GmmSpec(endogenous=["x"]))
        assert res.df == res.n_instruments - res.n_params == res.hansen[1]
        assert res.n_obs == 200 * 5

    def test_windmeijer_inflates_two_step_se(self):
        wins = 0
        for seed in range(20):
            res = fit_system_gmm(gmm_panel(seed), ["x"], GmmSpec(endogenous=["x"]))
            corrected = np.sqrt(np.diag(res.cov_windmeijer))
            plain = np.sqrt(np.diag(res.cov_twostep))
            wins += bool(np.all(corrected >= plain))
        assert wins >= 18

    def test_beats_ols_on_average(self):
        frame = gmm_panel(4, n_units=500)
        res = fit_system_gmm(frame, ["x"], GmmSpec(endogenous=["x"]))
        ols = np.polyfit(frame["x"], frame["y"], 1)[0]
        assert abs(res.coefficients["x"] - 1.0) < abs(ols - 1.0)

    def test_invalid_instrument_rejected(self):
        # Lag one of an endogenous regressor is correlated with the differenced error.
        pvalues = []
        for seed in range(50):
            spec = GmmSpec(predetermined=["x"], lag_range={"predetermined": (1, 2)})
            pvalues.append(fit_system_gmm(gmm_panel(seed), ["x"], spec).hansen[2])
        assert np.median(pvalues) < 0.05

    def test_rank_deficient(self):
        frame = gmm_panel(5, n_units=30, periods=4)
        frame["w"] = 2 * frame["x"]
        with pytest.raises(RankDeficient):
            fit_system_gmm(frame, ["x", "w"], GmmSpec(exogenous=["x", "w"]))

    def test_cluster_must_be_constant(self):
        frame = gmm_panel(6, n_units=20, periods=4)
        frame["city"] = np.arange(len(frame)) % 3
        with pytest.raises(ValueError):
            fit_system_gmm(frame, ["x"], GmmSpec(endogenous=["x"], cluster="city"))

    def test_clustered_fit(self):
        frame = gmm_panel(7, n_units=120, periods=5)
        frame["city"] = frame["unit"] % 30
        res = fit_system_gmm(frame, ["x"], GmmSpec(endogenous=["x"], cluster="city"))
        assert res.n_clusters == 30 and res.n_units == 120


class TestDiffHansen:
    def fit(self, **kw):
        return fit_system_gmm(gmm_panel(8, periods=5), ["x"], GmmSpec(endogenous=["x"]), **kw)

    def test_empty_subset(self):
        assert diff_hansen(self.fit(), []) == 1.0

    def test_all_overidentifying_reduces_to_hansen(self):
        frame = gmm_panel(9, n_units=80, periods=3)
        res = fit_system_gmm(frame, ["x"], GmmSpec(endogenous=["x"], lag_range={"endogenous": (2, 2)}, fe=()))
        assert res.df == 1
        assert diff_hansen(res, "gmm_level:x") == pytest.approx(res.hansen[2], rel=1e-10)

    def test_unknown_subset(self):
        res = self.fit()
        with pytest.raises(SubsetNotFound):
            diff_hansen(res, "gmm:nothing")
        with pytest.raises(SubsetNotFound):
            diff_hansen(res, "bogus")

    def test_reported_in_result(self):
        res = self.fit(diff_hansen_subsets=("level", "iv", "gmm:x"))
        labels = [row[0] for row in res.diff_hansen]
        assert labels == ["level", "iv", "gmm:x"]
        level = res.diff_hansen[0]
        assert 0 <= level[2] <= 1 and level[3] == res.instrument_blocks["gmm_level:x"]
        # Removing every GMM-style instrument under-identifies x.
        assert np.isnan(res.diff_hansen[2][1])


class TestArTest:
    def test_orders(self):
        res = fit_system_gmm(gmm_panel(10, periods=5), ["x"], GmmSpec(endogenous=["x"]))
        assert set(res.ar_tests) == {1, 2}
        assert res.ar_tests[1] < 0.05
        with pytest.raises(InsufficientPeriods):
            ar_test(res, 3)
        with pytest.raises(ValueError):
            ar_test(res, 0)

    def test_zero_residuals(self):
        frame = gmm_panel(11, n_units=30, periods=5)
        frame["y"] = 2 * frame["x"] + 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingularWeightMatrixWarning)
            res = fit_system_gmm(frame, ["x"], GmmSpec(exogenous=["x"], fe=()), ar_orders=())
        with pytest.raises(DomainError):
            ar_test(res, 1)
