import numpy as np
import pytest
from scipy.special import logsumexp

from dgmeval import _rng
from dgmeval.errors import (
    DegenerateNeighborhood,
    DimensionMismatch,
    EmptyInput,
    MissingLabels,
    NoAdmissibleCells,
    TooFewTrainRows,
)
from dgmeval.memorization import (
    CtConfig,
    MemorizationConfig,
    MemorizationMatch,
    MogKde,
    _mann_whitney_z,
    auth_pct,
    calibrated_l2,
    ct_score,
    ct_score_full,
    fit_mog_kde,
    fls_metrics,
    memorization_ratio,
)

from conftest import make_set


class TestMemorizationConfig:
    def test_effective_k(self):
        assert MemorizationConfig(tau=1.0).effective_k == 50
        assert MemorizationConfig(tau=1.0, intra_class=True).effective_k == 3
        assert MemorizationConfig(tau=1.0, k=7, intra_class=True).effective_k == 7

    def test_validation(self):
        with pytest.raises(ValueError):
            MemorizationConfig(tau=0.0)
        with pytest.raises(ValueError):
            MemorizationConfig(tau=1.0, k=0)


class TestCalibratedL2:
    def test_hand_ratio(self):
        # train {0,2,4}: row 0's two calibration neighbors sit at 2 and 4,
        # so its denominator is (2+4)/2 = 3
        train = make_set([[0.0], [2.0], [4.0]])
        gen = make_set([[0.3], [0.9]])
        cfg = MemorizationConfig(tau=0.15, k=2)
        matches = calibrated_l2(gen, train, cfg)
        assert [m.train_index for m in matches] == [0, 0]
        assert matches[0].l == pytest.approx(0.1, rel=1e-6)
        assert matches[1].l == pytest.approx(0.3, rel=1e-6)
        assert [m.memorized for m in matches] == [True, False]
        assert [m.gen_index for m in matches] == [0, 1]

    def test_exact_copy_scores_zero(self, rng):
        train = make_set(rng.standard_normal((20, 3)))
        gen = make_set(train.data[4:5])
        matches = calibrated_l2(gen, train, MemorizationConfig(tau=0.5, k=5))
        assert matches[0].l == 0.0
        assert matches[0].train_index == 4
        assert matches[0].memorized

    def test_scale_invariance(self, rng):
        train = rng.standard_normal((30, 4))
        gen = rng.standard_normal((10, 4))
        cfg = MemorizationConfig(tau=1.0, k=6)
        base = calibrated_l2(make_set(gen), make_set(train), cfg)
        doubled = calibrated_l2(make_set(gen * 2.0), make_set(train * 2.0), cfg)
        assert [m.l for m in doubled] == [m.l for m in base]
        scaled = calibrated_l2(make_set(gen * 1.7), make_set(train * 1.7), cfg)
        np.testing.assert_allclose([m.l for m in scaled],
                                   [m.l for m in base], rtol=1e-5)

    def test_too_few_train_rows(self, rng):
        train = make_set(rng.standard_normal((10, 2)))
        gen = make_set(rng.standard_normal((3, 2)))
        with pytest.raises(TooFewTrainRows):
            calibrated_l2(gen, train, MemorizationConfig(tau=1.0))  # k = 50
        calibrated_l2(gen, train, MemorizationConfig(tau=1.0, k=9))

    def test_coincident_calibration_neighbors(self):
        train = make_set([[0.0], [0.0], [0.0], [5.0]])
        gen = make_set([[0.1]])
        with pytest.raises(DegenerateNeighborhood, match="train row 0"):
            calibrated_l2(gen, train, MemorizationConfig(tau=1.0, k=2))

    def test_intra_class_restricts_to_matching_label(self):
        train = make_set([[0.0], [1.0], [2.0], [3.0],
                          [10.0], [11.0], [12.0], [13.0]],
                         labels=[0, 0, 0, 0, 1, 1, 1, 1])
        gen = make_set([[0.2], [0.2]], labels=[0, 1])
        cfg = MemorizationConfig(tau=1.0, intra_class=True)  # k = 3
        matches = calibrated_l2(gen, train, cfg)
        assert matches[0].train_index == 0
        assert matches[0].l == pytest.approx(0.1, rel=1e-6)
        # same point, other label: matched against the class-1 rows only
        assert matches[1].train_index == 4
        assert matches[1].l == pytest.approx(9.8 / 2.0, rel=1e-6)

    def test_intra_class_needs_labels(self, rng):
        train = make_set(rng.standard_normal((8, 2)), labels=[0] * 8)
        gen = make_set(rng.standard_normal((2, 2)))
        with pytest.raises(MissingLabels):
            calibrated_l2(gen, train, MemorizationConfig(tau=1.0, intra_class=True))

    def test_intra_class_small_class(self):
        train = make_set([[0.0], [1.0], [2.0], [10.0]], labels=[0, 0, 0, 1])
        gen = make_set([[0.5]], labels=[1])
        with pytest.raises(TooFewTrainRows, match="class 1"):
            calibrated_l2(gen, train, MemorizationConfig(tau=1.0, intra_class=True))

    def test_ratio(self):
        matches = [MemorizationMatch(0, 0, 0.1, True),
                   MemorizationMatch(1, 3, 0.9, False),
                   MemorizationMatch(2, 2, 0.2, True)]
        assert memorization_ratio(matches) == pytest.approx(2 / 3)
        with pytest.raises(EmptyInput):
            memorization_ratio([])


class TestAuthPct:
    def test_point_between_distant_train_rows(self):
        train = make_set([[0.0], [10.0]])
        gen = make_set([[4.0], [0.5]])
        assert auth_pct(gen, train) == 0.0

    def test_far_points_are_authentic(self):
        train = make_set([[0.0], [1.0]])
        gen = make_set([[5.0], [-3.0]])
        assert auth_pct(gen, train) == 100.0

    def test_boundary_is_authentic(self):
        # landing exactly at the train row's own NN distance is not "closer"
        train = make_set([[0.0], [1.0]])
        gen = make_set([[2.0]])
        assert auth_pct(gen, train) == 100.0

    def test_exact_copy_is_inauthentic(self):
        train = make_set([[0.0], [3.0]])
        gen = make_set([[0.0]])
        assert auth_pct(gen, train) == 0.0

    def test_mixed(self):
        train = make_set([[0.0], [10.0]])
        gen = make_set([[0.5], [20.0]])
        assert auth_pct(gen, train) == 50.0

    def test_validation(self, rng):
        with pytest.raises(TooFewTrainRows):
            auth_pct(make_set([[1.0]]), make_set([[0.0]]))
        with pytest.raises(DimensionMismatch):
            auth_pct(make_set(rng.standard_normal((3, 2))),
                     make_set(rng.standard_normal((3, 3))))


class TestCtScore:
    def test_copying_drives_score_down(self, rng):
        train = make_set(rng.standard_normal((200, 2)))
        test = make_set(rng.standard_normal((200, 2)))
        copied = ct_score(train, train, test)
        assert copied < -5.0
        clean = ct_score(train, make_set(rng.standard_normal((200, 2))), test)
        assert abs(clean) < 4.0
        assert clean > copied

    def test_modified_swaps_roles_exactly(self, rng):
        train = make_set(rng.standard_normal((60, 3)))
        gen = make_set(rng.standard_normal((50, 3)))
        test = make_set(rng.standard_normal((55, 3)))
        assert ct_score(train, gen, test, modified=True) \
            == ct_score(gen, train, test)

    def test_cell_weights(self, rng):
        train = make_set(rng.standard_normal((80, 2)))
        gen = make_set(rng.standard_normal((70, 2)))
        test = make_set(rng.standard_normal((75, 2)))
        score, cells = ct_score_full(train, gen, test)
        assert sum(c["weight"] for c in cells) == pytest.approx(1.0)
        assert score == pytest.approx(
            sum(c["weight"] * c["z"] for c in cells), abs=1e-12)
        total_test = sum(c["n_test"] for c in cells)
        for c in cells:
            assert c["weight"] == pytest.approx(c["n_test"] / total_test)

    def test_weight_by_generated(self, rng):
        # cluster A holds copied rows, cluster B clean ones; the two
        # weightings put different mass on A's strongly negative cell
        a_train = rng.standard_normal((40, 2))
        b_train = rng.standard_normal((40, 2)) + 50.0
        train = make_set(np.vstack([a_train, b_train]))
        gen = make_set(np.vstack([a_train[:10],
                                  rng.standard_normal((30, 2)) + 50.0]))
        test = make_set(np.vstack([rng.standard_normal((30, 2)),
                                   rng.standard_normal((10, 2)) + 50.0]))
        cfg = CtConfig(cells=2)
        by_test = ct_score(train, gen, test, cfg)
        by_gen = ct_score(train, gen, test,
                          CtConfig(cells=2, weight_by="generated"))
        assert by_test < by_gen

    def test_no_admissible_cells(self, rng):
        train = make_set(rng.standard_normal((30, 2)))
        test = make_set(rng.standard_normal((30, 2)))
        gen = make_set(rng.standard_normal((1, 2)))
        with pytest.raises(NoAdmissibleCells):
            ct_score(train, gen, test)

    def test_deterministic(self, rng):
        train = make_set(rng.standard_normal((90, 4)))
        gen = make_set(rng.standard_normal((80, 4)))
        test = make_set(rng.standard_normal((85, 4)))
        assert ct_score(train, gen, test) == ct_score(train, gen, test)

    def test_high_dim_reduces_through_pca(self, rng):
        train = make_set(rng.standard_normal((80, 100)))
        gen = make_set(rng.standard_normal((70, 100)))
        test = make_set(rng.standard_normal((75, 100)))
        assert np.isfinite(ct_score(train, gen, test))

    def test_mann_whitney_hand_properties(self):
        a = np.array([1.0, 1.0, 1.0])
        assert _mann_whitney_z(a, a.copy()) == 0.0
        lo = np.arange(5, dtype=float)
        hi = lo + 10.0
        assert _mann_whitney_z(lo, hi) < 0 < _mann_whitney_z(hi, lo)
        assert _mann_whitney_z(lo, hi) == -_mann_whitney_z(hi, lo)

    def test_mann_whitney_null_calibration(self):
        # equal-distribution draws: z behaves like a standard normal
        zs = []
        for s in range(100):
            r = _rng.substream(s, "mwcal")
            a = _rng.standard_normal(r, 200)
            b = _rng.standard_normal(r, 200)
            zs.append(_mann_whitney_z(a, b))
        zs = np.array(zs)
        assert np.abs(zs).max() <= 3.0
        assert abs(zs.mean()) <= 0.35
        assert 0.8 <= zs.std() <= 1.25


class TestMogKde:
    def test_single_center_reaches_mle_variance(self):
        gen = make_set([[0.0]])
        train = make_set([[-1.0], [2.0]])
        kde = fit_mog_kde(gen, train)
        # isotropic MLE: sigma^2 = mean squared distance = 2.5
        assert kde.log_vars[0] == pytest.approx(np.log(2.5), abs=1e-3)

    def test_variance_floor_on_coincident_rows(self):
        kde = fit_mog_kde(make_set([[0.0]]), make_set([[0.0]]))
        assert kde.log_vars[0] == np.log(1e-8)

    def test_trace_never_decreases(self, rng):
        kde = fit_mog_kde(make_set(rng.standard_normal((30, 3))),
                          make_set(rng.standard_normal((40, 3))))
        assert np.all(np.diff(kde.trace) >= 0)
        assert len(kde.trace) == 51


class TestFlsMetrics:
    def test_matches_direct_evaluation(self, rng):
        gen = make_set(rng.standard_normal((12, 2)))
        train = make_set(rng.standard_normal((25, 2)))
        test = make_set(rng.standard_normal((18, 2)))
        kde = fit_mog_kde(gen, train)
        fls, _ = fls_metrics(kde, train, test, affine=(2.0, 1.0))

        X = test.data.astype(np.float64)
        d = X.shape[1]
        lp = np.empty((len(X), len(kde.centers)))
        for i, x in enumerate(X):
            for j, c in enumerate(kde.centers):
                var = np.exp(kde.log_vars[j])
                lp[i, j] = (-0.5 * d * np.log(2 * np.pi * var)
                            - np.dot(x - c, x - c) / (2 * var))
        want = np.mean(logsumexp(lp, axis=1) - np.log(len(kde.centers)))
        assert fls == pytest.approx(2.0 * (want / d) + 1.0, rel=1e-9)

    def test_identical_train_and_test_has_zero_pog(self, rng):
        train = make_set(rng.standard_normal((20, 2)))
        kde = fit_mog_kde(make_set(rng.standard_normal((10, 2))), train)
        _, pog = fls_metrics(kde, train, train)
        assert pog == 0.0

    def test_overfit_center_is_counted(self):
        kde = MogKde(centers=np.array([[0.0], [5.0]]),
                     log_vars=np.log([1e-2, 1e-2]))
        train = make_set([[0.0]])
        test = make_set([[5.0]])
        _, pog = fls_metrics(kde, train, test)
        assert pog == 50.0

    def test_affine_shifts_fls_only(self, rng):
        gen = make_set(rng.standard_normal((8, 2)))
        train = make_set(rng.standard_normal((15, 2)))
        test = make_set(rng.standard_normal((15, 2)))
        kde = fit_mog_kde(gen, train)
        base_fls, base_pog = fls_metrics(kde, train, test)
        fls, pog = fls_metrics(kde, train, test, affine=(3.0, -2.0))
        assert fls == pytest.approx(3.0 * base_fls - 2.0, rel=1e-12)
        assert pog == base_pog

    def test_dimension_checks(self, rng):
        with pytest.raises(DimensionMismatch):
            fit_mog_kde(make_set(rng.standard_normal((4, 2))),
                        make_set(rng.standard_normal((4, 3))))
        kde = fit_mog_kde(make_set(rng.standard_normal((4, 2))),
                          make_set(rng.standard_normal((4, 2))))
        with pytest.raises(DimensionMismatch):
            fls_metrics(kde, make_set(rng.standard_normal((4, 2))),
                        make_set(rng.standard_normal((4, 3))))
