import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import DATA
from mapsbench.analytics import (
    AccuracyMatrix,
    DegenerateMatrix,
    cliques,
    friedman,
    mean_ranks,
    nemenyi_cd,
    rank_block,
    rank_summary,
)
from mapsbench.analytics.studentized import Q_ALPHA


def matrix(rows, treatments=None):
    k = len(rows[0])
    treatments = treatments or [f"t{j}" for j in range(k)]
    return AccuracyMatrix.from_rows(treatments, [(f"b{i}", r) for i, r in enumerate(rows)])


def test_rank_block_average_ties():
    assert rank_block([0.9, 0.5, 0.9, 0.1]) == ([1.5, 3.0, 1.5, 4.0], [2])
    assert rank_block([0.2, 0.2, 0.2]) == ([2.0, 2.0, 2.0], [3])


def test_dominating_treatment_gives_the_maximal_statistic():
    m = matrix([[0.9, 0.5, 0.1]] * 10)
    assert friedman(m).statistic == pytest.approx(20.0)
    assert friedman(m).statistic_plain == pytest.approx(20.0)


def test_identical_columns_give_zero():
    fr = friedman(matrix([[0.5, 0.5], [0.7, 0.7]]))
    assert fr.statistic == 0 and fr.statistic_plain == 0 and fr.p_value == 1.0


@pytest.mark.parametrize("rows", [[[0.5, 0.4]], [[0.5], [0.4]]])
def test_degenerate_shapes(rows):
    with pytest.raises(DegenerateMatrix):
        friedman(matrix(rows))


def test_matrix_validation():
    with pytest.raises(ValueError):
        matrix([[0.5, 1.2], [0.1, 0.2]])
    with pytest.raises(ValueError):
        AccuracyMatrix(("a",), ("x", "y"), ((0.1,),))
    with pytest.raises(ValueError):
        AccuracyMatrix(("a",), ("x", "x"), ((0.1, 0.2),))


def test_csv_round_trip():
    m = AccuracyMatrix.from_csv(DATA / "accuracy_grid.csv")
    assert m.shape == (48, 5) and m.block_header == "model|dataset"
    assert AccuracyMatrix.from_csv_text(m.to_csv_text()) == m
    constant = sum(len(set(r)) == 1 for r in m.values)
    assert constant == 2
    assert m.drop_constant_blocks().shape == (46, 5)


def test_friedman_matches_scipy_on_accuracy_grid():
    m = AccuracyMatrix.from_csv(DATA / "accuracy_grid.csv")
    ref = stats.friedmanchisquare(*zip(*m.values))
    fr = friedman(m)
    assert fr.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert fr.p_value == pytest.approx(ref.pvalue, rel=1e-9)
    assert fr.statistic_plain < fr.statistic and fr.df == 4


rows_st = st.integers(2, 6).flatmap(
    lambda k: st.lists(st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 1.0]), min_size=k, max_size=k),
                       min_size=2, max_size=12)
)


@settings(max_examples=200)
@given(rows_st)
def test_friedman_matches_scipy(rows):
    assume(len(rows[0]) >= 3 and any(len(set(r)) > 1 for r in rows))
    ref = stats.friedmanchisquare(*zip(*rows))
    assert friedman(matrix(rows)).statistic == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)


@settings(max_examples=200)
@given(rows_st, st.lists(st.sampled_from(["sqrt", "square", "affine", "exp"]), min_size=12, max_size=12))
def test_friedman_invariant_under_monotone_block_transforms(rows, transforms):
    fns = {
        "sqrt": math.sqrt,
        "square": lambda x: x * x,
        "affine": lambda x: 0.3 * x + 0.1,
        "exp": lambda x: (math.exp(x) - 1) / (math.e - 1),
    }
    moved = [[fns[transforms[i]](v) for v in row] for i, row in enumerate(rows)]
    a, b = friedman(matrix(rows)), friedman(matrix(moved))
    assert a.statistic == pytest.approx(b.statistic) and a.statistic_plain == pytest.approx(b.statistic_plain)
    assert mean_ranks(matrix(rows)) == mean_ranks(matrix(moved))


@given(rows_st)
def test_mean_ranks_sum(rows):
    k = len(rows[0])
    assert math.fsum(r for _, r in mean_ranks(matrix(rows))) == pytest.approx(k * (k + 1) / 2)


def test_mean_ranks_simple_cases():
    assert mean_ranks(matrix([[0.1, 0.9, 0.5]])) == [("t1", 1.0), ("t2", 2.0), ("t0", 3.0)]
    assert mean_ranks(matrix([[0.3] * 4, [0.6] * 4])) == [(f"t{j}", 2.5) for j in range(4)]


def test_q_table_against_studentized_range():
    for alpha, table in Q_ALPHA.items():
        assert sorted(table) == list(range(2, 21))
        values = [table[k] for k in range(2, 21)]
        assert values == sorted(values) and len(set(values)) == len(values)
        for k, q in table.items():
            ref = stats.studentized_range.ppf(1 - alpha, k, math.inf) / math.sqrt(2)
            assert q == pytest.approx(ref, abs=2e-3), (alpha, k)


def test_nemenyi_cd_formula_and_monotonicity():
    assert nemenyi_cd(5, 48) == pytest.approx(2.728 * math.sqrt(30 / 288))
    for k in range(2, 20):
        assert nemenyi_cd(k + 1, 10) > nemenyi_cd(k, 10)
    for n in range(1, 50):
        assert nemenyi_cd(5, n + 1) < nemenyi_cd(5, n)
    for bad in [(1, 5), (21, 5)]:
        with pytest.raises(ValueError):
            nemenyi_cd(*bad)
    with pytest.raises(ValueError):
        nemenyi_cd(5, 5, alpha=0.01)


def test_cliques_are_maximal_runs():
    ranked = [("a", 1.0), ("b", 1.5), ("c", 2.6), ("d", 4.0)]
    assert cliques(ranked, 1.2) == [["a", "b"], ["b", "c"]]
    assert cliques(ranked, 10) == [["a", "b", "c", "d"]]
    assert cliques(ranked, 0.1) == []


def test_rank_summary_pairs():
    m = matrix([[0.9, 0.5, 0.1]] * 10, ["hi", "mid", "lo"])
    s = rank_summary(m)
    assert [t for t, _ in s.ranking] == ["hi", "mid", "lo"]
    assert s.cd == pytest.approx(2.343 * math.sqrt(12 / 60))
    # adjacent gaps of 1.0 sit just under the CD of about 1.048
    assert s.significant_pairs == [("hi", "lo")]
    assert s.groups == [["hi", "mid"], ["mid", "lo"]]
    d = s.to_dict()
    assert d["k_treatments"] == 3 and d["friedman"]["df"] == 2
