import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slreval.checklist import Society
from slreval.metrics import (
    MetricError,
    ScoreMatrix,
    UndefinedMetricError,
    agent_vs_humans,
    agreement_pct,
    avg_pairwise_pearson,
    benchmark,
    icc_two_way,
    krippendorff_alpha,
    load_scores,
    mae,
    write_plot_data,
)

from conftest import FIXTURES


# --- independent oracles ------------------------------------------------------

def oracle_mae(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += abs(x - y)
    return total / len(a)


def oracle_icc(table):
    """Definitional ANOVA sums, written as explicit loops."""
    rows = [list(r) for r in table]
    n = len(rows)
    k = len(rows[0])
    grand = sum(sum(r) for r in rows) / (n * k)
    row_means = [sum(r) / k for r in rows]
    col_means = [sum(rows[i][j] for i in range(n)) / n for j in range(k)]
    ss_rows = k * sum((m - grand) ** 2 for m in row_means)
    ss_cols = n * sum((m - grand) ** 2 for m in col_means)
    ss_total = sum((rows[i][j] - grand) ** 2 for i in range(n) for j in range(k))
    ss_err = ss_total - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    single = (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)
    average = (msr - mse) / (msr + (msc - mse) / n)
    return single, average


def oracle_alpha(table):
    """Brute-force enumeration of all pairable value pairs (interval metric)."""
    units = []
    for u in range(len(table[0])):
        vals = [table[r][u] for r in range(len(table)) if table[r][u] is not None]
        if len(vals) >= 2:
            units.append(vals)
    n = sum(len(v) for v in units)
    observed = 0.0
    for vals in units:
        m = len(vals)
        for i in range(m):
            for j in range(m):
                if i != j:
                    observed += (vals[i] - vals[j]) ** 2 / (m - 1)
    observed /= n
    pooled = [v for vals in units for v in vals]
    expected = 0.0
    for i in range(len(pooled)):
        for j in range(len(pooled)):
            if i != j:
                expected += (pooled[i] - pooled[j]) ** 2
    expected /= n * (n - 1)
    if expected == 0:
        return None
    return 1.0 - observed / expected


def oracle_pearson_pair(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    sx = math.sqrt(sum((a - mx) ** 2 for a in x) / n)
    sy = math.sqrt(sum((b - my) ** 2 for b in y) / n)
    return cov / (sx * sy)


def random_matrix(rng, n_raters, n_units, missing=0.0):
    return [
        [
            None if rng.random() < missing else rng.randint(0, 5)
            for _ in range(n_units)
        ]
        for _ in range(n_raters)
    ]


# --- load_scores --------------------------------------------------------------

class TestLoadScores:
    def test_fixture_counts(self):
        matrix = load_scores(FIXTURES / "scores.csv")
        assert len(matrix.papers) == 5
        assert len(matrix.raters) == 4
        assert len(matrix.items) == 27
        assert len(matrix.scores) == 540

    def test_out_of_range_score(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("paper_id,rater_id,item_id,score\np1,r1,1,6\n")
        with pytest.raises(MetricError, match="row 2"):
            load_scores(path)

    def test_duplicate_row(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text(
            "paper_id,rater_id,item_id,score\np1,r1,1,3\np1,r1,1,4\n"
        )
        with pytest.raises(MetricError, match="duplicate"):
            load_scores(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(MetricError, match="header"):
            load_scores(path)


# --- mae / agreement ----------------------------------------------------------

class TestMae:
    def test_identity(self):
        assert mae([3, 4, 5], [3, 4, 5]) == 0.0

    def test_two_element(self):
        assert mae([5, 5], [4, 3]) == 1.5

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            mae([1, 2], [1])

    def test_random_vs_oracle(self):
        rng = random.Random(7)
        for _ in range(100):
            n = rng.randint(1, 30)
            a = [rng.uniform(0, 5) for _ in range(n)]
            b = [rng.uniform(0, 5) for _ in range(n)]
            assert mae(a, b) == pytest.approx(oracle_mae(a, b), abs=1e-12)

    @given(
        pairs=st.lists(
            st.tuples(st.floats(0, 5), st.floats(0, 5)), min_size=1, max_size=30
        ),
        shift=st.floats(-1, 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_translation_bound(self, pairs, shift):
        a = [p[0] for p in pairs]
        b = [p[1] for p in pairs]
        shifted = [min(5.0, max(0.0, x + shift)) for x in a]
        assert abs(mae(shifted, b) - mae(a, b)) <= abs(shift) + 1e-9


class TestAgreementPct:
    def test_paper_headline_value(self):
        assert agreement_pct(0.8) == 84.0

    def test_extremes(self):
        assert agreement_pct(0.0) == 100.0
        assert agreement_pct(5.0) == 0.0

    def test_out_of_range(self):
        with pytest.raises(MetricError):
            agreement_pct(-0.1)
        with pytest.raises(MetricError):
            agreement_pct(5.1)

    @given(st.floats(0, 5), st.floats(0, 5))
    @settings(max_examples=60, deadline=None)
    def test_affine_order_reversing(self, m1, m2):
        if m1 < m2:
            assert agreement_pct(m1) > agreement_pct(m2)


# --- agent_vs_humans ----------------------------------------------------------

def build_matrix(scores):
    papers = sorted({p for p, _, _ in scores})
    raters = []
    items = sorted({i for _, _, i in scores})
    table = {}
    for (p, r, i), s in scores.items():
        if r not in raters:
            raters.append(r)
        table[(p, r, i)] = float(s)
    return ScoreMatrix(tuple(papers), tuple(raters), tuple(items), table)


class TestAgentVsHumans:
    def test_identical_scores_full_agreement(self, registry):
        scores = {}
        for p in ("p1", "p2"):
            for i in range(1, 28):
                for r in ("h1", "h2", "agent"):
                    scores[(p, r, i)] = 3.0
        matrix = build_matrix(scores)
        for grouping in ("overall", "per_society", "per_paper"):
            results = agent_vs_humans(matrix, "agent", "mean", grouping, registry)
            for g in results.values():
                assert g.mae == 0.0
                assert g.agreement_pct == 100.0

    def test_methods_only_deviation(self, registry):
        methods_items = {
            it.item_id for it in registry.items if it.society is Society.METHODS
        }
        scores = {}
        for i in range(1, 28):
            scores[("p1", "h1", i)] = 3.0
            scores[("p1", "agent", i)] = 4.0 if i in methods_items else 3.0
        matrix = build_matrix(scores)
        results = agent_vs_humans(matrix, "agent", "mean", "per_society", registry)
        assert results["Methods"].mae == pytest.approx(1.0)
        assert results["Methods"].agreement_pct == pytest.approx(80.0)
        for name, g in results.items():
            if name != "Methods":
                assert g.agreement_pct == pytest.approx(100.0)

    def test_random_vs_group_oracle(self, registry):
        rng = random.Random(11)
        scores = {}
        papers = ("p1", "p2")
        for p in papers:
            for i in range(1, 28):
                for r in ("h1", "h2", "h3"):
                    scores[(p, r, i)] = rng.randint(0, 5)
                scores[(p, "agent", i)] = rng.randint(0, 5)
        matrix = build_matrix(scores)
        results = agent_vs_humans(matrix, "agent", "mean", "per_paper")
        for p in papers:
            diffs = []
            for i in range(1, 28):
                human_mean = sum(scores[(p, h, i)] for h in ("h1", "h2", "h3")) / 3
                diffs.append(abs(scores[(p, "agent", i)] - human_mean))
            assert results[p].mae == pytest.approx(sum(diffs) / len(diffs), abs=1e-12)

    def test_missing_human_scores_excluded(self, registry):
        scores = {("p1", "h1", 1): 3.0, ("p1", "agent", 1): 3.0,
                  ("p1", "agent", 2): 4.0}
        matrix = ScoreMatrix(("p1",), ("h1", "agent"), (1, 2), scores)
        results = agent_vs_humans(matrix, "agent", "mean", "overall")
        assert results["overall"].n_items == 1
        assert results["overall"].excluded == 1

    def test_median_aggregation(self):
        scores = {("p1", "h1", 1): 0.0, ("p1", "h2", 1): 1.0, ("p1", "h3", 1): 5.0,
                  ("p1", "agent", 1): 1.0}
        matrix = build_matrix(scores)
        by_median = agent_vs_humans(matrix, "agent", "median", "overall")
        assert by_median["overall"].mae == pytest.approx(0.0)
        by_mean = agent_vs_humans(matrix, "agent", "mean", "overall")
        assert by_mean["overall"].mae == pytest.approx(1.0)


# --- ICC ----------------------------------------------------------------------

class TestICC:
    def test_identical_raters_perfect(self):
        table = [[1, 1, 1], [3, 3, 3], [5, 5, 5], [2, 2, 2]]
        result = icc_two_way(table)
        assert result.icc_single == pytest.approx(1.0)
        assert result.icc_average == pytest.approx(1.0)

    def test_independent_shuffles_near_zero(self):
        rng = random.Random(3)
        base = [rng.randint(0, 5) for _ in range(200)]
        cols = []
        for _ in range(3):
            col = list(base)
            rng.shuffle(col)
            cols.append(col)
        table = list(zip(*cols))
        result = icc_two_way(table)
        assert abs(result.icc_single) < 0.15

    def test_random_vs_oracle(self):
        rng = random.Random(5)
        for _ in range(100):
            n = rng.randint(3, 6)
            k = rng.randint(2, 4)
            table = [[rng.uniform(0, 5) for _ in range(k)] for _ in range(n)]
            result = icc_two_way(table)
            single, average = oracle_icc(table)
            assert result.icc_single == pytest.approx(single, abs=1e-9)
            assert result.icc_average == pytest.approx(average, abs=1e-9)

    def test_missing_rows_dropped(self):
        table = [[1, 1], [2, 2], [3, np.nan], [4, 4]]
        result = icc_two_way(table)
        assert result.dropped_targets == 1

    def test_too_few_targets(self):
        with pytest.raises(MetricError):
            icc_two_way([[1, 2]])

    def test_zero_variance_undefined(self):
        with pytest.raises(UndefinedMetricError):
            icc_two_way([[2, 2], [2, 2], [2, 2]])


# --- Krippendorff alpha -------------------------------------------------------

class TestKrippendorffAlpha:
    def test_perfect_agreement(self):
        table = [[1, 2, 3, 4, 5], [1, 2, 3, 4, 5], [1, 2, 3, 4, 5]]
        assert krippendorff_alpha(table) == pytest.approx(1.0)

    def test_single_disagreement_matches_oracle(self):
        table = [[float(u % 6) for u in range(10)] for _ in range(3)]
        table[2][4] = (table[2][4] + 1) % 6
        assert krippendorff_alpha(table) == pytest.approx(oracle_alpha(table), abs=1e-9)

    def test_random_with_missing_vs_oracle(self):
        rng = random.Random(9)
        for _ in range(100):
            table = random_matrix(rng, rng.randint(2, 4), rng.randint(4, 12), missing=0.2)
            expected = oracle_alpha(table)
            if expected is None:
                with pytest.raises(MetricError):
                    krippendorff_alpha(table)
                continue
            try:
                got = krippendorff_alpha(table)
            except MetricError:
                assert expected is None
                continue
            assert got == pytest.approx(expected, abs=1e-9)

    def test_alpha_at_most_one(self):
        rng = random.Random(13)
        for _ in range(50):
            table = random_matrix(rng, 3, 10, missing=0.1)
            try:
                assert krippendorff_alpha(table) <= 1.0 + 1e-12
            except MetricError:
                pass

    def test_all_identical_undefined(self):
        with pytest.raises(UndefinedMetricError):
            krippendorff_alpha([[2, 2, 2], [2, 2, 2]])


# --- pairwise Pearson ---------------------------------------------------------

class TestAvgPairwisePearson:
    def test_identical_raters(self):
        table = [[1, 2, 3, 4]] * 3
        assert avg_pairwise_pearson(table).value == pytest.approx(1.0)

    def test_antisymmetry(self):
        assert avg_pairwise_pearson([[1, 2, 3], [3, 2, 1]]).value == pytest.approx(-1.0)

    def test_random_vs_oracle(self):
        rng = random.Random(17)
        for _ in range(100):
            n_raters = rng.randint(2, 4)
            n_units = 27
            table = [[rng.uniform(0, 5) for _ in range(n_units)] for _ in range(n_raters)]
            expected = []
            for i in range(n_raters):
                for j in range(i + 1, n_raters):
                    expected.append(oracle_pearson_pair(table[i], table[j]))
            got = avg_pairwise_pearson(table)
            assert got.value == pytest.approx(sum(expected) / len(expected), abs=1e-12)

    def test_degenerate_pairs_excluded(self):
        table = [[1, 1, 1, 1], [1, 2, 3, 4], [4, 3, 2, 1]]
        result = avg_pairwise_pearson(table)
        assert result.pairs_excluded == 2  # both pairs with the constant rater
        assert result.pairs_used == 1

    def test_no_valid_pair(self):
        with pytest.raises(MetricError):
            avg_pairwise_pearson([[1, 1], [2, 2]])


# --- benchmark composition ----------------------------------------------------

class TestBenchmark:
    def test_fixture_composes_components(self, registry):
        matrix = load_scores(FIXTURES / "scores.csv")
        report = benchmark(matrix, registry, "agent")
        overall = agent_vs_humans(matrix, "agent", "mean", "overall")["overall"]
        assert report.overall_mae == pytest.approx(overall.mae, abs=1e-12)
        assert report.overall_agreement_pct == pytest.approx(
            agreement_pct(overall.mae), abs=1e-12
        )
        assert set(report.per_society) == {s.value for s in Society}
        assert set(report.per_paper) == set(matrix.papers)
        assert report.human_raters == ("expert1", "expert2", "expert3")

    def test_reliability_over_humans_only(self, registry):
        matrix = load_scores(FIXTURES / "scores.csv")
        report = benchmark(matrix, registry, "agent")
        units = matrix.units
        human_table = [
            [matrix.get(p, r, i) for (p, i) in units]
            for r in ("expert1", "expert2", "expert3")
        ]
        assert report.reliability["krippendorff_alpha"] == pytest.approx(
            oracle_alpha(human_table), abs=1e-9
        )
        icc_table = [list(row) for row in zip(*human_table)]
        single, average = oracle_icc(icc_table)
        assert report.reliability["icc"]["icc_single"] == pytest.approx(single, abs=1e-9)
        assert report.reliability["icc"]["icc_average"] == pytest.approx(average, abs=1e-9)

    def test_all_identical_fixture(self, registry):
        scores = {}
        for p in ("p1", "p2", "p3"):
            for i in range(1, 28):
                value = float((i + len(p)) % 6)
                for r in ("h1", "h2", "h3", "agent"):
                    scores[(p, r, i)] = value
        matrix = build_matrix(scores)
        report = benchmark(matrix, registry, "agent")
        assert report.overall_agreement_pct == pytest.approx(100.0)
        assert report.reliability["krippendorff_alpha"] == pytest.approx(1.0)
        assert report.reliability["icc"]["icc_single"] == pytest.approx(1.0)
        assert report.reliability["avg_pairwise_pearson"]["value"] == pytest.approx(1.0)

    def test_permutation_invariance(self, registry):
        matrix = load_scores(FIXTURES / "scores.csv")
        report = benchmark(matrix, registry, "agent")
        shuffled = ScoreMatrix(
            papers=tuple(reversed(matrix.papers)),
            raters=("expert2", "expert3", "expert1", "agent"),
            items=matrix.items,
            scores=matrix.scores,
        )
        report2 = benchmark(shuffled, registry, "agent")
        assert report2.overall_mae == pytest.approx(report.overall_mae, abs=1e-12)
        assert report2.reliability["krippendorff_alpha"] == pytest.approx(
            report.reliability["krippendorff_alpha"], abs=1e-9
        )

    def test_plot_data_written(self, registry, tmp_path):
        matrix = load_scores(FIXTURES / "scores.csv")
        report = benchmark(matrix, registry, "agent")
        paths = write_plot_data(report, tmp_path)
        assert sorted(p.name for p in paths) == [
            "per_paper_mae.csv", "per_society_agreement.csv",
        ]
        lines = paths[0].read_text().strip().splitlines()
        assert lines[0] == "label,value"
        assert len(lines) == 6  # header + 5 papers
