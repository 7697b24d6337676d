import random

import numpy as np
import pytest

from reqimpact import ablation
from reqimpact.ablation import DetailFeatureRow, FEATURE_DETAILS


def row(indicators, target):
    return DetailFeatureRow(indicators=tuple(indicators), target=target)


def rows_with(setter, targets):
    """Rows whose indicators come from setter(i) and targets from the list."""
    return [row(setter(i), t) for i, t in enumerate(targets)]


def random_rows(rng, n):
    return [
        row([rng.randrange(2) for _ in FEATURE_DETAILS], rng.random()) for _ in range(n)
    ]


# Hand-traced oracle: 8 rows varying only details 3 and 5 (feature columns
# 1 and 3), two depth-1 trees, learning rate 0.1.
#
# Targets by (x3, x5): (0,0)->0.2,0.3  (0,1)->0.4,0.5  (1,0)->0.6,0.7  (1,1)->0.8,0.9
# Base prediction = mean = 0.55. Residual split on x3 gives group means
# -0.2/+0.2 (SSE decrease 0.32) versus -0.1/+0.1 on x5 (decrease 0.08), so
# tree 1 splits on x3 with leaves -0.2/+0.2. After shrinking by 0.1 the
# residual means become -0.18/+0.18 and tree 2 again splits on x3
# (decrease 0.2592 vs 0.08). Predictions: 0.55 -/+ 0.1*(0.2 + 0.18).
HAND_ROWS = [
    row((0, 0, 0, 0, 0, 0), 0.2),
    row((0, 0, 0, 0, 0, 0), 0.3),
    row((0, 0, 0, 1, 0, 0), 0.4),
    row((0, 0, 0, 1, 0, 0), 0.5),
    row((0, 1, 0, 0, 0, 0), 0.6),
    row((0, 1, 0, 0, 0, 0), 0.7),
    row((0, 1, 0, 1, 0, 0), 0.8),
    row((0, 1, 0, 1, 0, 0), 0.9),
]
HAND_EXPECTED = {0: 0.512, 1: 0.588}  # keyed by x3 indicator


class TestRowBuilders:
    def test_percentage_targets_scaled(self):
        rows = ablation.rows_from_prompt_scores({"P1": 74.5, "P2": 0.5})
        assert rows[0].target == pytest.approx(0.745)
        assert rows[1].target == pytest.approx(0.5)

    def test_indicator_layout_matches_detail_sets(self):
        rows = ablation.rows_from_prompt_scores({"P30": 0.7})
        # P30 holds details {1,2,5,6}: indicators for (1,3,4,5,6,7)
        assert rows[0].indicators == (1, 0, 0, 1, 1, 0)

    def test_unknown_prompt_rejected(self):
        with pytest.raises(ValueError):
            ablation.rows_from_prompt_scores({"P77": 0.5})

    def test_per_rationale_rows(self):
        rows = ablation.rows_from_rationale_scores(
            {"P1": {"C1": 0.4, "C2": 0.6}, "P2": {"C1": 0.8, "C2": 1.0}}
        )
        assert len(rows) == 4

    def test_non_binary_indicator_rejected(self):
        with pytest.raises(ValueError):
            row((0, 2, 0, 0, 0, 0), 0.5)


class TestFit:
    def test_constant_targets_predict_mean(self):
        rows = rows_with(lambda i: [i % 2, 0, 0, 0, 0, 0], [0.6] * 8)
        model = ablation.fit_gbdt(rows, n_estimators=5)
        X = np.array([r.indicators for r in rows], dtype=float)
        assert np.allclose(model.predict(X), 0.6)
        assert model.n_estimators == 5

    def test_perfectly_predictable_target_drives_mse_down(self):
        rows = rows_with(
            lambda i: [0, i % 2, 0, (i // 2) % 2, 0, 0],
            [1.0 if i % 2 else 0.0 for i in range(16)],
        )
        model = ablation.fit_gbdt(rows, n_estimators=60, max_depth=3)
        X = np.array([r.indicators for r in rows], dtype=float)
        y = np.array([r.target for r in rows])
        curve = model.staged_mse(X, y)
        assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))
        assert curve[-1] < 1e-4

    def test_hand_traced_two_tree_predictions(self):
        model = ablation.fit_gbdt(HAND_ROWS, n_estimators=2, learning_rate=0.1, max_depth=1)
        X = np.array([r.indicators for r in HAND_ROWS], dtype=float)
        predictions = model.predict(X)
        for r, pred in zip(HAND_ROWS, predictions):
            assert abs(pred - HAND_EXPECTED[r.indicators[1]]) <= 1e-12

    def test_row_order_does_not_change_the_model(self):
        rng = random.Random(13)
        rows = random_rows(rng, 24)
        shuffled = rows[:]
        rng.shuffle(shuffled)
        X = np.array([r.indicators for r in rows], dtype=float)
        a = ablation.fit_gbdt(rows, n_estimators=10).predict(X)
        b = ablation.fit_gbdt(shuffled, n_estimators=10).predict(X)
        assert np.allclose(a, b, atol=1e-12)

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError):
            ablation.fit_gbdt([row((0,) * 6, 0.5)])


class TestImportance:
    def test_single_informative_feature_takes_everything(self):
        rows = rows_with(
            lambda i: [0, i % 2, (i // 2) % 2, 0, 0, 0],
            [0.9 if i % 2 else 0.1 for i in range(16)],
        )
        model = ablation.fit_gbdt(rows, n_estimators=40)
        report = ablation.importance_report(rows, model)
        assert report.scores[3] >= 0.99

    def test_duplicate_features_resolved_by_lowest_index(self):
        # details 3 and 4 carry identical columns; ties must go to detail 3
        rows = rows_with(
            lambda i: [0, i % 2, i % 2, 0, 0, 0],
            [0.8 if i % 2 else 0.2 for i in range(12)],
        )
        model = ablation.fit_gbdt(rows, n_estimators=10)
        report = ablation.importance_report(rows, model)
        assert report.scores[3] >= 0.99
        assert report.scores[4] == 0.0
        assert report.scores[3] + report.scores[4] == pytest.approx(1.0)

    def test_hand_computed_importance_value(self):
        model = ablation.fit_gbdt(HAND_ROWS, n_estimators=2, learning_rate=0.1, max_depth=1)
        raw = ablation.feature_importance(model)
        # tree decreases are 0.32 and 0.2592 over a root of 8 samples
        assert raw[3] == pytest.approx((0.32 / 8 + 0.2592 / 8) / 2, abs=1e-12)
        assert all(raw[d] == 0.0 for d in FEATURE_DETAILS if d != 3)

    def test_normalized_scores_sum_to_one(self):
        rng = random.Random(17)
        for _ in range(20):
            rows = random_rows(rng, 20)
            model = ablation.fit_gbdt(rows, n_estimators=15)
            report = ablation.importance_report(rows, model)
            if not report.degenerate:
                assert sum(report.scores.values()) == pytest.approx(1.0, abs=1e-9)

    def test_constant_target_degenerate(self):
        rows = rows_with(lambda i: [i % 2, 0, 0, 0, 0, 0], [0.5] * 8)
        model = ablation.fit_gbdt(rows, n_estimators=5)
        report = ablation.importance_report(rows, model)
        assert report.degenerate
        assert all(v == 0.0 for v in report.scores.values())

    def test_unfitted_model_rejected(self):
        model = ablation.GbdtModel(base_prediction=0.5, learning_rate=0.1)
        with pytest.raises(ValueError):
            ablation.feature_importance(model)


class TestEffectSign:
    def test_positive_shift(self):
        rows = rows_with(
            lambda i: [0, 0, 0, 0, i % 2, 0],
            [0.5 + 0.1 * (i % 2) for i in range(10)],
        )
        assert ablation.effect_sign(rows, 6) == "+"

    def test_irrelevant_detail_ties_to_minus(self):
        rows = rows_with(lambda i: [0, 0, 0, 0, i % 2, 0], [0.5] * 10)
        assert ablation.effect_sign(rows, 6) == "-"

    def test_published_sign_pattern(self):
        # detail 6 helping (+) while detail 3 hurts (-), as in the reported
        # importance table for the benchmark corpus
        rng = random.Random(23)
        rows = []
        for _ in range(64):
            indicators = [rng.randrange(2) for _ in FEATURE_DETAILS]
            x3 = indicators[FEATURE_DETAILS.index(3)]
            x6 = indicators[FEATURE_DETAILS.index(6)]
            rows.append(row(indicators, 0.6 + 0.1 * x6 - 0.1 * x3))
        assert ablation.effect_sign(rows, 6) == "+"
        assert ablation.effect_sign(rows, 3) == "-"

    def test_one_sided_detail_rejected(self):
        rows = rows_with(lambda i: [1, 0, 0, 0, 0, 0], [0.4, 0.6])
        with pytest.raises(ValueError):
            ablation.effect_sign(rows, 1)


class TestElbow:
    def test_flat_curve_picks_smallest(self):
        rows = rows_with(lambda i: [i % 2, 0, 0, 0, 0, 0], [0.5] * 8)
        assert ablation.elbow_select(rows, [5, 10, 20]) == 5

    def test_decreasing_then_flat_picks_knee(self):
        rng = random.Random(29)
        rows = random_rows(rng, 40)
        grid = [1, 5, 10, 20, 40, 80]
        chosen = ablation.elbow_select(rows, grid)

        # brute force over the same staged curve
        model = ablation.fit_gbdt(rows, n_estimators=80)
        X = np.array([r.indicators for r in rows], dtype=float)
        y = np.array([r.target for r in rows])
        curve = model.staged_mse(X, y)
        best = min(curve[n] for n in grid)
        expected = min(n for n in grid if curve[n] <= best * (1 + 1e-6))
        assert chosen == expected

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            ablation.elbow_select([], [])


class TestRenderImportance:
    def test_markdown_table_shape(self):
        rows = rows_with(
            lambda i: [0, i % 2, 0, 0, (i // 2) % 2, 0],
            [0.2 + 0.6 * (i % 2) + 0.05 * ((i // 2) % 2) for i in range(16)],
        )
        model = ablation.fit_gbdt(rows, n_estimators=10)
        report = ablation.importance_report(rows, model)
        text = ablation.render_importance_report(report, "markdown")
        lines = text.strip().splitlines()
        assert lines[0] == "| D | S | E |"
        assert len(lines) == 2 + len(FEATURE_DETAILS)

    def test_csv_and_markdown_same_numbers(self):
        rows = rows_with(
            lambda i: [0, i % 2, 0, 0, 0, 0], [0.1 + 0.7 * (i % 2) for i in range(8)]
        )
        model = ablation.fit_gbdt(rows, n_estimators=5)
        report = ablation.importance_report(rows, model)
        csv_text = ablation.render_importance_report(report, "csv")
        md_text = ablation.render_importance_report(report, "markdown")
        assert "1.00" in csv_text and "1.00" in md_text
