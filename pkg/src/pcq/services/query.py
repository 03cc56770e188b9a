"""
RETRIEVAL / COUNT / AGGREGATION queries over a frame corpus.

Text form (as used by the CLI):
    retrieve car>=3 pedestrian=0
    count car>=5
    agg sum car
    agg avg car
``>`` and ``<`` are accepted and rewritten over integer counts
(car>5 becomes car>=6).
"""

import logging
import re
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pcq.errors import DataError, EmptyCorpusError, QuerySyntaxError, UnknownClassError
from pcq.heatmap.catalog import ClassCatalog
from pcq.store.documents import FrameCorpus

logger = logging.getLogger(__name__)

FrameRange = Tuple[int, int]
Answer = Union[List[str], int, float]


class Operator(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="

    def holds(self, counts, ct: int):
        if self is Operator.LE:
            return counts <= ct
        if self is Operator.GE:
            return counts >= ct
        return counts == ct


class QueryCondition(BaseModel):
    model_config = ConfigDict(frozen=True)

    q: str
    op: Operator
    ct: int = Field(ge=0)

    def __str__(self) -> str:
        return f"{self.q}{self.op.value}{self.ct}"


class QueryKind(str, Enum):
    RETRIEVAL = "retrieve"
    COUNT = "count"
    AGG_SUM = "agg_sum"
    AGG_AVG = "agg_avg"


class QuerySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: QueryKind
    conditions: Tuple[QueryCondition, ...] = ()
    q: Optional[str] = None
    range: Optional[FrameRange] = None

    @model_validator(mode="after")
    def _arity(self) -> "QuerySpec":
        if self.kind is QueryKind.RETRIEVAL and not self.conditions:
            raise ValueError("retrieval needs at least one condition")
        if self.kind is QueryKind.COUNT and len(self.conditions) != 1:
            raise ValueError("count takes exactly one condition")
        if self.kind in (QueryKind.AGG_SUM, QueryKind.AGG_AVG) and (self.q is None or self.conditions):
            raise ValueError("aggregation takes a class name only")
        return self

    def class_names(self) -> List[str]:
        return [self.q] if self.q is not None else [c.q for c in self.conditions]


# ===============================
# TEXT FORM
# ===============================
CONDITION = re.compile(r"([A-Za-z_]\w*)\s*(<=|>=|==|=|<|>|≤|≥)\s*(\d+)")
OPERATOR_ALIASES = {"<=": "<=", "≤": "<=", ">=": ">=", "≥": ">=", "=": "=", "==": "="}


def parse_condition(name: str, symbol: str, number: str) -> QueryCondition:
    ct = int(number)
    if symbol == ">":
        return QueryCondition(q=name, op=Operator.GE, ct=ct + 1)
    if symbol == "<":
        if ct == 0:
            raise QuerySyntaxError(f"'{name}<0' can never hold")
        return QueryCondition(q=name, op=Operator.LE, ct=ct - 1)
    return QueryCondition(q=name, op=Operator(OPERATOR_ALIASES[symbol]), ct=ct)


def parse_conditions(text: str) -> Tuple[QueryCondition, ...]:
    conditions, cursor = [], 0
    for match in CONDITION.finditer(text):
        if text[cursor : match.start()].strip(" ,\t"):
            raise QuerySyntaxError(f"cannot parse '{text[cursor:match.start()].strip()}'")
        conditions.append(parse_condition(*match.groups()))
        cursor = match.end()
    if text[cursor:].strip(" ,\t"):
        raise QuerySyntaxError(f"cannot parse '{text[cursor:].strip()}'")
    return tuple(conditions)


def parse_query(text: str, frame_range: Optional[FrameRange] = None) -> QuerySpec:
    words = text.split(maxsplit=1)
    if not words:
        raise QuerySyntaxError("empty query")
    verb, rest = words[0].lower(), words[1] if len(words) > 1 else ""

    if verb in ("retrieve", "count"):
        conditions = parse_conditions(rest)
        kind = QueryKind.RETRIEVAL if verb == "retrieve" else QueryKind.COUNT
        if kind is QueryKind.RETRIEVAL and not conditions:
            raise QuerySyntaxError("retrieve needs at least one condition, e.g. 'retrieve car>=3'")
        if kind is QueryKind.COUNT and len(conditions) != 1:
            raise QuerySyntaxError("count takes exactly one condition, e.g. 'count car>=5'")
        return QuerySpec(kind=kind, conditions=conditions, range=frame_range)

    if verb == "agg":
        parts = rest.split()
        if len(parts) != 2 or parts[0].lower() not in ("sum", "avg"):
            raise QuerySyntaxError("aggregation form is 'agg sum CLASS' or 'agg avg CLASS'")
        kind = QueryKind.AGG_SUM if parts[0].lower() == "sum" else QueryKind.AGG_AVG
        return QuerySpec(kind=kind, q=parts[1], range=frame_range)

    raise QuerySyntaxError(f"unknown query verb '{verb}', expected retrieve, count or agg")


def parse_range(text: str) -> FrameRange:
    try:
        start, end = (int(v) for v in text.split(":"))
    except ValueError:
        raise QuerySyntaxError(f"range must look like start:end, got '{text}'") from None
    if not 0 <= start <= end:
        raise QuerySyntaxError(f"invalid range {start}:{end}")
    return start, end


# ===============================
# EXECUTION
# ===============================
def restrict(corpus: FrameCorpus, frame_range: Optional[FrameRange]) -> FrameCorpus:
    if frame_range is None:
        return corpus
    start, end = frame_range
    if not 0 <= start <= end <= len(corpus):
        raise DataError(f"range {start}:{end} outside a corpus of {len(corpus)} frames")
    return corpus[start:end]


def satisfied(corpus: FrameCorpus, conditions: Sequence[QueryCondition]) -> np.ndarray:
    """Boolean mask of frames meeting every condition."""
    mask = np.ones(len(corpus), dtype=bool)
    for cond in conditions:
        mask &= cond.op.holds(corpus.counts_of(cond.q), cond.ct)
    return mask


def retrieval(
    corpus: FrameCorpus, conditions: Sequence[QueryCondition], frame_range: Optional[FrameRange] = None
) -> List[str]:
    """Ids of matching frames, in corpus order."""
    corpus = restrict(corpus, frame_range)
    mask = satisfied(corpus, conditions)
    return [doc.frame_id for doc, hit in zip(corpus, mask) if hit]


def count_query(
    corpus: FrameCorpus, q: str, op: Union[Operator, str], ct: int, frame_range: Optional[FrameRange] = None
) -> int:
    condition = QueryCondition(q=q, op=Operator(op), ct=ct)
    return int(satisfied(restrict(corpus, frame_range), [condition]).sum())


def agg_sum(corpus: FrameCorpus, q: str, frame_range: Optional[FrameRange] = None) -> int:
    return int(restrict(corpus, frame_range).counts_of(q).sum())


def agg_avg(corpus: FrameCorpus, q: str, frame_range: Optional[FrameRange] = None) -> float:
    corpus = restrict(corpus, frame_range)
    if len(corpus) == 0:
        raise EmptyCorpusError("average over an empty corpus")
    return float(corpus.counts_of(q).sum()) / len(corpus)


def check_classes(spec: QuerySpec, catalog: ClassCatalog) -> None:
    for name in spec.class_names():
        if name not in catalog:
            raise UnknownClassError(f"Class '{name}' is not in catalog {list(catalog.classes)}")


def execute(corpus: FrameCorpus, spec: QuerySpec, catalog: Optional[ClassCatalog] = None) -> Answer:
    if catalog is not None:
        check_classes(spec, catalog)

    if spec.kind is QueryKind.RETRIEVAL:
        answer = retrieval(corpus, spec.conditions, spec.range)
        logger.info("retrieve %s -> %d frames", " ".join(map(str, spec.conditions)), len(answer))
        return answer
    if spec.kind is QueryKind.COUNT:
        cond = spec.conditions[0]
        answer = count_query(corpus, cond.q, cond.op, cond.ct, spec.range)
    elif spec.kind is QueryKind.AGG_SUM:
        answer = agg_sum(corpus, spec.q, spec.range)
    else:
        answer = agg_avg(corpus, spec.q, spec.range)
    logger.info("%s -> %s", spec.kind.value, answer)
    return answer
