import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcq.errors import CorpusMismatchError, DataError
from pcq.heatmap.catalog import ClassCatalog
from pcq.services.evaluation import (
    EvalReport,
    ToleranceSpec,
    build_report,
    count_slack,
    eval_agg,
    eval_count_queries,
    eval_retrieval,
    load_report,
    q_error,
    render_table,
    report_frame,
    save_report,
    tolerance_thresholds,
)
from pcq.services.query import Operator, QueryCondition
from tests.helpers import corpus_from_counts

CAR3 = [QueryCondition(q="car", op=Operator.GE, ct=3)]


def test_tolerance_thresholds():
    truth = corpus_from_counts({"car": [10, 50, 3], "bus": [0, 3, 1]})
    assert tolerance_thresholds(truth, 0.1) == {"bus": 0, "car": 5}
    assert tolerance_thresholds(truth, ToleranceSpec(rate=0.0), ["car", "trailer"]) == {"car": 0, "trailer": 0}
    with pytest.raises(ValueError):
        ToleranceSpec(rate=1.5)


def test_retrieval_identity():
    truth = corpus_from_counts({"car": [0, 3, 7, 1]})
    m = eval_retrieval(truth, truth, CAR3)
    assert (m.accuracy, m.precision, m.recall) == (1.0, 1.0, 1.0)
    assert m.selectivity == 0.5


def test_retrieval_confusion_counts():
    truth = corpus_from_counts({"car": [5, 5, 0, 0]})
    pred = corpus_from_counts({"car": [5, 0, 5, 0]})
    m = eval_retrieval(pred, truth, CAR3, 0.0)
    assert (m.accuracy, m.precision, m.recall) == (0.5, 0.5, 0.5)


def test_retrieval_empty_selection_convention():
    truth = corpus_from_counts({"car": [0, 1, 2]})
    m = eval_retrieval(truth, truth, [QueryCondition(q="car", op=Operator.GE, ct=10)])
    assert (m.accuracy, m.precision, m.recall, m.selectivity) == (1.0, 1.0, 1.0, 0.0)


def test_retrieval_tolerance_forgives_small_errors():
    truth = corpus_from_counts({"car": [30, 2, 29, 0]})
    pred = corpus_from_counts({"car": [30, 2, 31, 0]})
    cond = [QueryCondition(q="car", op=Operator.GE, ct=30)]
    assert eval_retrieval(pred, truth, cond, 0.0).accuracy == 0.75
    assert eval_retrieval(pred, truth, cond, 0.1).accuracy == 1.0
    assert eval_retrieval(pred, truth, cond, {"car": 2}).accuracy == 1.0


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=25),
    st.integers(0, 20),
    st.floats(0.0, 0.5),
    st.floats(0.0, 0.4),
)
def test_retrieval_accuracy_is_monotone_in_tolerance(pairs, ct, low, extra):
    truth = corpus_from_counts({"car": [t for t, _ in pairs]})
    pred = corpus_from_counts({"car": [p for _, p in pairs]})
    cond = [QueryCondition(q="car", op=Operator.LE, ct=ct)]
    assert eval_retrieval(pred, truth, cond, low).accuracy <= eval_retrieval(pred, truth, cond, low + extra).accuracy


def test_misaligned_corpora_are_rejected():
    with pytest.raises(CorpusMismatchError):
        eval_retrieval(corpus_from_counts({"car": [1, 2]}), corpus_from_counts({"car": [1]}), CAR3)
    with pytest.raises(CorpusMismatchError):
        eval_agg(corpus_from_counts({"car": [1]}, prefix="a"), corpus_from_counts({"car": [1]}), [range(0, 1)])


def test_count_slack():
    assert 8 <= count_slack(100, 0.1)
    assert 15 > count_slack(100, 0.1)
    assert count_slack(100, 0.1) == 10
    assert count_slack(7, 0.1) == 1
    assert count_slack(0, 0.1) == 0


def test_count_queries_identity_and_determinism():
    rng = np.random.default_rng(4)
    truth = corpus_from_counts({"car": rng.integers(0, 10, 200).tolist(), "bus": rng.integers(0, 3, 200).tolist()})
    assert eval_count_queries(truth, truth, 300, 0.1, seed=1) == 1.0
    pred = corpus_from_counts({"car": rng.integers(0, 10, 200).tolist(), "bus": rng.integers(0, 3, 200).tolist()})
    first = eval_count_queries(pred, truth, 300, 0.1, seed=1)
    assert first == eval_count_queries(pred, truth, 300, 0.1, seed=1)
    assert 0.0 <= first < 1.0
    with pytest.raises(DataError):
        eval_count_queries(truth, truth, 0)


def test_q_error():
    assert q_error(12, 10) == pytest.approx(1.2)
    assert q_error(10, 12) == pytest.approx(1.2)
    assert q_error(0, 0) == 1.0
    assert q_error(3, 0) == 3.0


def test_agg_metrics():
    truth = corpus_from_counts({"car": [4, 6, 0]})
    pred = corpus_from_counts({"car": [5, 7, 0]})
    groups = [range(0, 2), range(2, 3)]
    assert eval_agg(truth, truth, groups).model_dump() == {"absolute": 0.0, "q_error": 1.0}
    m = eval_agg(pred, truth, groups)
    assert m.absolute == pytest.approx(1.0)
    assert m.q_error == pytest.approx((1.2 + 1.0) / 2)
    with pytest.raises(DataError):
        eval_agg(pred, truth, [])


def test_report_against_itself(catalog):
    rng = np.random.default_rng(12)
    truth = corpus_from_counts({name: rng.integers(0, 6, 120).tolist() for name in ("car", "pedestrian", "bus")})
    report = build_report(truth, truth, catalog, n_queries=200, n_groups=30, seed=5)
    for row in [*report.classes, report.overall]:
        assert (row.retrieval, row.count, row.agg_absolute, row.agg_q_error) == (1.0, 1.0, 0.0, 1.0)
    assert len(report.classes) == catalog.K


def test_report_table_and_json(catalog):
    truth = corpus_from_counts({"car": [3, 4, 5, 6]})
    pred = corpus_from_counts({"car": [3, 5, 5, 2]})
    report = build_report(
        pred, truth, catalog, n_queries=50, n_groups=5, len_min=1, len_max=3, seed=0,
        retrieve=CAR3, retrieve_text="retrieve car>=3",
    )
    table = render_table(report)
    assert "AGG (Q-error)" in table and "overall" in table and "retrieve car>=3" in table
    assert list(report_frame(report)["Class"])[-1] == "overall"
    assert EvalReport.model_validate_json(report.model_dump_json()) == report


def test_report_is_seed_deterministic():
    catalog = ClassCatalog.named("kitti")
    truth = corpus_from_counts({"car": [1, 2, 3, 4, 5, 6], "cyclist": [0, 1, 0, 1, 0, 1]})
    pred = corpus_from_counts({"car": [1, 3, 3, 2, 5, 9], "cyclist": [0, 0, 0, 1, 1, 1]})
    first = build_report(pred, truth, catalog, n_queries=40, n_groups=4, len_max=4, seed=9)
    assert build_report(pred, truth, catalog, n_queries=40, n_groups=4, len_max=4, seed=9) == first


def test_default_groups_fit_a_short_corpus():
    catalog = ClassCatalog.named("kitti")
    rng = np.random.default_rng(3)
    truth = corpus_from_counts({"car": rng.integers(0, 8, 30).tolist()})
    report = build_report(truth, truth, catalog, seed=1)
    assert report.overall.agg_absolute == 0.0 and report.overall.agg_q_error == 1.0


def test_saved_report_loads_back_and_bad_files_are_data_errors(tmp_path):
    catalog = ClassCatalog.named("kitti")
    truth = corpus_from_counts({"car": [1, 2, 3, 4]})
    report = build_report(truth, truth, catalog, n_queries=10, n_groups=2, len_max=4, seed=0)
    save_report(tmp_path / "report.json", report)
    assert load_report(tmp_path / "report.json") == report

    (tmp_path / "empty.json").write_text("{}")
    with pytest.raises(DataError, match="invalid"):
        load_report(tmp_path / "empty.json")
