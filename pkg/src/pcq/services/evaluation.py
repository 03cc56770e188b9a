"""
Accuracy of a predicted corpus against ground truth.

RETRIEVAL uses per-class absolute thresholds (max true count x rate),
COUNT uses a relative slack on the answer, AGG reports absolute difference
and Q-error over consecutive frame groups.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from sklearn.metrics import precision_score, recall_score

from pcq.config import DEFAULT_GROUP_LENGTH, DEFAULT_GROUPS, DEFAULT_QUERIES, DEFAULT_TOLERANCE
from pcq.errors import CorpusMismatchError, DataError, EmptyCorpusError
from pcq.heatmap.catalog import ClassCatalog
from pcq.services.query import Operator, QueryCondition, satisfied
from pcq.store.documents import FrameCorpus, consecutive_groups
from pcq.utils.rng import make_generator

logger = logging.getLogger(__name__)

RETRIEVAL_SAMPLES = 100
FLOAT_GUARD = 1e-9


class ToleranceSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    rate: float = Field(default=DEFAULT_TOLERANCE, ge=0.0, lt=1.0)


class RetrievalMetrics(BaseModel):
    accuracy: float = Field(ge=0.0, le=1.0)
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    selectivity: float = Field(ge=0.0, le=1.0)


class AggMetrics(BaseModel):
    absolute: float = Field(ge=0.0)
    q_error: float = Field(ge=1.0)


class ClassMetrics(BaseModel):
    name: str
    retrieval: float = Field(ge=0.0, le=1.0)
    count: float = Field(ge=0.0, le=1.0)
    agg_absolute: float = Field(ge=0.0)
    agg_q_error: float = Field(ge=1.0)
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    selectivity: float = Field(ge=0.0, le=1.0)


class EvalReport(BaseModel):
    tolerance: float
    frames: int
    seed: int
    classes: List[ClassMetrics]
    overall: ClassMetrics
    query: Optional[str] = None
    query_metrics: Optional[RetrievalMetrics] = None


def check_aligned(pred: FrameCorpus, truth: FrameCorpus) -> None:
    if pred.frame_ids != truth.frame_ids:
        raise CorpusMismatchError(
            f"predicted ({len(pred)} frames) and true ({len(truth)} frames) corpora "
            "do not share the same frame_id sequence"
        )


def tolerance_thresholds(
    truth: FrameCorpus, rate: Union[ToleranceSpec, float], classes: Optional[Sequence[str]] = None
) -> Dict[str, int]:
    """threshold_c = floor(max count_c x rate), derived from the true corpus."""
    if isinstance(rate, ToleranceSpec):
        rate = rate.rate
    if classes is None:
        classes = sorted({o.type for doc in truth for o in doc.objects})
    thresholds = {}
    for name in classes:
        counts = truth.counts_of(name)
        peak = int(counts.max()) if counts.size else 0
        thresholds[name] = math.floor(peak * rate + FLOAT_GUARD)
    return thresholds


def _thresholds_for(truth, conditions, tol) -> Dict[str, int]:
    if isinstance(tol, dict):
        return tol
    return tolerance_thresholds(truth, tol, [c.q for c in conditions])


def eval_retrieval(
    pred: FrameCorpus,
    truth: FrameCorpus,
    conditions: Sequence[QueryCondition],
    tol: Union[ToleranceSpec, float, Dict[str, int]] = DEFAULT_TOLERANCE,
) -> RetrievalMetrics:
    """
    A frame is correct when the exact predicted satisfaction equals the true one,
    or when every conditioned class is within its threshold of the true count.
    Precision and recall compare the exact selections; empty denominators give 1.0.
    """
    check_aligned(pred, truth)
    if len(truth) == 0:
        raise EmptyCorpusError("cannot evaluate retrieval on an empty corpus")

    thresholds = _thresholds_for(truth, conditions, tol)
    selected = satisfied(pred, conditions)
    relevant = satisfied(truth, conditions)

    within = np.ones(len(truth), dtype=bool)
    for cond in conditions:
        gap = np.abs(pred.counts_of(cond.q) - truth.counts_of(cond.q))
        within &= gap <= thresholds.get(cond.q, 0)
    correct = (selected == relevant) | within

    y_true, y_pred = relevant.astype(int), selected.astype(int)
    return RetrievalMetrics(
        accuracy=float(correct.mean()),
        precision=float(precision_score(y_true, y_pred, zero_division=1)),
        recall=float(recall_score(y_true, y_pred, zero_division=1)),
        selectivity=float(relevant.mean()),
    )


def random_conditions(
    truth: FrameCorpus, classes: Sequence[str], n: int, rng: np.random.Generator
) -> List[QueryCondition]:
    """Uniform class, operator and ct in [0, max true count]."""
    operators = list(Operator)
    peaks = {name: int(truth.counts_of(name).max(initial=0)) for name in classes}
    conditions = []
    for _ in range(n):
        name = classes[int(rng.integers(len(classes)))]
        op = operators[int(rng.integers(len(operators)))]
        conditions.append(QueryCondition(q=name, op=op, ct=int(rng.integers(0, peaks[name] + 1))))
    return conditions


def count_slack(truth_answer: int, rate: float) -> int:
    return math.ceil(rate * truth_answer - FLOAT_GUARD)


def eval_count_queries(
    pred: FrameCorpus,
    truth: FrameCorpus,
    n_queries: int,
    tol_rate: float = DEFAULT_TOLERANCE,
    seed: int = 0,
    classes: Optional[Sequence[str]] = None,
    groups: Optional[Sequence[range]] = None,
) -> float:
    """Fraction of seeded COUNT queries answered within ceil(rate x true answer).

    With ``groups``, query i runs over groups[i % len(groups)] instead of the whole corpus.
    """
    check_aligned(pred, truth)
    if n_queries <= 0:
        raise DataError("n_queries must be positive")
    if classes is None:
        classes = sorted({o.type for doc in truth for o in doc.objects})
    if not classes:
        return 1.0

    rng = make_generator(seed, 1)
    correct = 0
    for i, cond in enumerate(random_conditions(truth, classes, n_queries, rng)):
        window = groups[i % len(groups)] if groups else range(len(truth))
        t_mask = cond.op.holds(truth.counts_of(cond.q)[window.start : window.stop], cond.ct)
        p_mask = cond.op.holds(pred.counts_of(cond.q)[window.start : window.stop], cond.ct)
        t_answer, p_answer = int(t_mask.sum()), int(p_mask.sum())
        if abs(p_answer - t_answer) <= count_slack(t_answer, tol_rate):
            correct += 1
    return correct / n_queries


def q_error(pred_sum: float, true_sum: float) -> float:
    """max / max(min, 1); both zero gives 1."""
    if pred_sum == 0 and true_sum == 0:
        return 1.0
    return max(pred_sum, true_sum) / max(min(pred_sum, true_sum), 1)


def eval_agg(
    pred: FrameCorpus,
    truth: FrameCorpus,
    groups: Sequence[range],
    classes: Optional[Sequence[str]] = None,
) -> AggMetrics:
    check_aligned(pred, truth)
    if not groups:
        raise DataError("eval_agg needs at least one frame group")
    if classes is None:
        classes = sorted({o.type for doc in truth for o in doc.objects})
    if not classes:
        return AggMetrics(absolute=0.0, q_error=1.0)

    absolute, ratios = [], []
    for name in classes:
        p_counts, t_counts = pred.counts_of(name), truth.counts_of(name)
        for group in groups:
            s_p = int(p_counts[group.start : group.stop].sum())
            s_t = int(t_counts[group.start : group.stop].sum())
            absolute.append(abs(s_p - s_t))
            ratios.append(q_error(s_p, s_t))
    return AggMetrics(absolute=float(np.mean(absolute)), q_error=float(np.mean(ratios)))


def _retrieval_summary(pred, truth, conditions, rate) -> RetrievalMetrics:
    runs = [eval_retrieval(pred, truth, [cond], rate) for cond in conditions]
    return RetrievalMetrics(
        accuracy=float(np.mean([r.accuracy for r in runs])),
        precision=float(np.mean([r.precision for r in runs])),
        recall=float(np.mean([r.recall for r in runs])),
        selectivity=float(np.mean([r.selectivity for r in runs])),
    )


def _class_metrics(name, retrieval: RetrievalMetrics, count: float, agg: AggMetrics) -> ClassMetrics:
    return ClassMetrics(
        name=name,
        retrieval=retrieval.accuracy,
        count=count,
        agg_absolute=agg.absolute,
        agg_q_error=agg.q_error,
        precision=retrieval.precision,
        recall=retrieval.recall,
        selectivity=retrieval.selectivity,
    )


def build_report(
    pred: FrameCorpus,
    truth: FrameCorpus,
    catalog: ClassCatalog,
    tolerance: float = DEFAULT_TOLERANCE,
    n_queries: int = DEFAULT_QUERIES,
    n_groups: int = DEFAULT_GROUPS,
    len_min: int = DEFAULT_GROUP_LENGTH[0],
    len_max: int = DEFAULT_GROUP_LENGTH[1],
    seed: int = 0,
    retrieve: Optional[Sequence[QueryCondition]] = None,
    retrieve_text: Optional[str] = None,
) -> EvalReport:
    check_aligned(pred, truth)
    if len(truth) == 0:
        raise EmptyCorpusError("cannot evaluate an empty corpus")
    tol = ToleranceSpec(rate=tolerance)
    # group lengths shrink to fit short corpora
    len_max = min(len_max, len(truth))
    groups = consecutive_groups(len(truth), n_groups, min(len_min, len_max), len_max, seed)
    rng = make_generator(seed, 2)

    rows = []
    for name in catalog.classes:
        conditions = random_conditions(truth, [name], RETRIEVAL_SAMPLES, rng)
        rows.append(
            _class_metrics(
                name,
                _retrieval_summary(pred, truth, conditions, tol),
                eval_count_queries(pred, truth, n_queries, tol.rate, seed, [name], groups),
                eval_agg(pred, truth, groups, [name]),
            )
        )

    overall = ClassMetrics(
        name="overall",
        retrieval=float(np.mean([r.retrieval for r in rows])),
        count=eval_count_queries(pred, truth, n_queries, tol.rate, seed, list(catalog.classes), groups),
        agg_absolute=float(np.mean([r.agg_absolute for r in rows])),
        agg_q_error=float(np.mean([r.agg_q_error for r in rows])),
        precision=float(np.mean([r.precision for r in rows])),
        recall=float(np.mean([r.recall for r in rows])),
        selectivity=float(np.mean([r.selectivity for r in rows])),
    )

    query_metrics = eval_retrieval(pred, truth, retrieve, tol) if retrieve else None
    logger.info(
        "Evaluated %d frames at tolerance %.2f: retrieval %.3f, count %.3f, q-error %.3f",
        len(truth), tol.rate, overall.retrieval, overall.count, overall.agg_q_error,
    )
    return EvalReport(
        tolerance=tol.rate,
        frames=len(truth),
        seed=seed,
        classes=rows,
        overall=overall,
        query=retrieve_text,
        query_metrics=query_metrics,
    )


def save_report(path: Union[str, Path], report: EvalReport) -> None:
    Path(path).write_text(report.model_dump_json(indent=2), encoding="utf-8")


def load_report(path: Union[str, Path]) -> EvalReport:
    try:
        return EvalReport.model_validate_json(Path(path).read_bytes())
    except ValidationError as exc:
        raise DataError(f"report {path} is invalid: {exc}") from None


def report_frame(report: EvalReport) -> pd.DataFrame:
    columns = {
        "name": "Class",
        "retrieval": "RETRIEVAL",
        "count": "COUNT",
        "agg_absolute": "AGG (absolute)",
        "agg_q_error": "AGG (Q-error)",
        "precision": "Precision",
        "recall": "Recall",
    }
    records = [m.model_dump() for m in [*report.classes, report.overall]]
    return pd.DataFrame.from_records(records)[list(columns)].rename(columns=columns)


def render_table(report: EvalReport) -> str:
    table = report_frame(report).to_string(index=False, float_format=lambda v: f"{v:.3f}")
    header = f"tolerance {report.tolerance:g}, {report.frames} frames, seed {report.seed}"
    lines = [header, table]
    if report.query_metrics is not None:
        m = report.query_metrics
        lines.append(
            f"{report.query}: accuracy {m.accuracy:.3f}, precision {m.precision:.3f}, "
            f"recall {m.recall:.3f}, selectivity {m.selectivity:.3f}"
        )
    return "\n".join(lines)
