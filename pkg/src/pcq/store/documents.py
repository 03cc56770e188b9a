"""
Per-frame count documents.

Field names follow the NoSQL frame record: frame_id, timestamp, vehicle_id,
objects[type, count, position[x, y]]. Counts are written as JSON numbers;
string counts such as "10" are accepted on load.
"""

import logging
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from pcq.counting.peaks import PeakSet
from pcq.errors import CorpusFormatError, DataError, UnknownClassError
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.types import FrameAnnotation
from pcq.utils.rng import make_generator

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_VEHICLE = "vehicle_00000000"
DEFAULT_START = datetime(2024, 4, 7, 15, 43, 2)


class Position(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    y: float


class ObjectEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    type: str
    count: int = Field(ge=0)
    position: List[Position] = Field(default_factory=list)

    @model_validator(mode="after")
    def _count_matches_positions(self) -> "ObjectEntry":
        if self.position and len(self.position) != self.count:
            raise ValueError(f"{self.type}: count {self.count} but {len(self.position)} positions")
        return self


class FrameDocument(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_id: str
    timestamp: str
    vehicle_id: str
    objects: List[ObjectEntry] = Field(default_factory=list)

    def count_of(self, class_name: str) -> int:
        return sum(o.count for o in self.objects if o.type == class_name)


class FrameCorpus:
    """Documents in temporal order with a cached (frames x classes) count matrix."""

    def __init__(self, documents: Iterable[FrameDocument]):
        self.documents = tuple(documents)
        self._columns: Dict[str, np.ndarray] = {}
        ids = [d.frame_id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise DataError("frame_id values must be unique within a corpus")

    def __len__(self) -> int:
        return len(self.documents)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return FrameCorpus(self.documents[index])
        return self.documents[index]

    def __iter__(self) -> Iterator[FrameDocument]:
        return iter(self.documents)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FrameCorpus) and self.documents == other.documents

    @property
    def frame_ids(self) -> List[str]:
        return [d.frame_id for d in self.documents]

    def counts_of(self, class_name: str) -> np.ndarray:
        """Per-frame count of one class; frames without the class count 0."""
        column = self._columns.get(class_name)
        if column is None:
            column = np.array([d.count_of(class_name) for d in self.documents], dtype=np.int64)
            self._columns[class_name] = column
        return column

    def count_matrix(self, catalog: ClassCatalog) -> np.ndarray:
        if not self.documents:
            return np.zeros((0, catalog.K), dtype=np.int64)
        return np.stack([self.counts_of(name) for name in catalog.classes], axis=1)

    def check_catalog(self, catalog: ClassCatalog) -> None:
        for doc in self.documents:
            for entry in doc.objects:
                if entry.type not in catalog:
                    raise UnknownClassError(f"{doc.frame_id}: class '{entry.type}' not in catalog")


def frame_timestamp(index: int, start: datetime = DEFAULT_START, period: float = 0.5) -> str:
    """Timestamp string with 10 fractional digits, e.g. 2024-04-07 15:43:02.5000000000."""
    moment = start + timedelta(seconds=index * period)
    return moment.strftime("%Y-%m-%d %H:%M:%S.") + f"{moment.microsecond:06d}0000"


def ingest(
    source: Union[FrameAnnotation, PeakSet],
    catalog: ClassCatalog,
    frame_id: str,
    timestamp: str,
    vehicle_id: str = DEFAULT_VEHICLE,
    cell_size: float = 1.0,
) -> FrameDocument:
    """Build a document from ground truth or from a counter's peaks; zero-count classes are omitted."""
    positions: List[List[Position]] = [[] for _ in catalog.classes]
    if isinstance(source, FrameAnnotation):
        for center in source.centers:
            positions[center.class_index].append(Position(x=center.x * cell_size, y=center.y * cell_size))
    else:
        for c, peaks in enumerate(source.channels):
            positions[c].extend(Position(x=p.x * cell_size, y=p.y * cell_size) for p in peaks)

    objects = [
        ObjectEntry(type=name, count=len(found), position=found)
        for name, found in zip(catalog.classes, positions)
        if found
    ]
    return FrameDocument(frame_id=frame_id, timestamp=timestamp, vehicle_id=vehicle_id, objects=objects)


def persist(corpus: Iterable[BaseModel], path: PathLike) -> int:
    written = 0
    with open(path, "w", encoding="utf-8") as f:
        for doc in corpus:
            f.write(doc.model_dump_json())
            f.write("\n")
            written += 1
    logger.info("Wrote %d records to %s", written, path)
    return written


def _lines(path: PathLike) -> Iterator[Tuple[int, str]]:
    """Non-blank lines with 1-based line numbers; bytes that are not UTF-8 are a format error."""
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusFormatError(line_number, f"not valid UTF-8 ({exc.reason} at byte {exc.start})") from None
            if line.strip():
                yield line_number, line


def load(path: PathLike) -> FrameCorpus:
    documents = []
    for line_number, line in _lines(path):
        try:
            documents.append(FrameDocument.model_validate_json(line))
        except ValidationError as exc:
            raise CorpusFormatError(line_number, _first_error(exc)) from None
    return FrameCorpus(documents)


def _first_error(exc: ValidationError) -> str:
    error = exc.errors()[0]
    where = ".".join(str(p) for p in error.get("loc", ()))
    return f"{where}: {error['msg']}" if where else error["msg"]


def consecutive_groups(
    corpus: Union[FrameCorpus, Sequence, int],
    n_groups: int,
    len_min: int,
    len_max: int,
    seed: int,
) -> List[range]:
    """Seeded ranges [start, start + length) with length uniform in [len_min, len_max]."""
    size = corpus if isinstance(corpus, int) else len(corpus)
    if not 1 <= len_min <= len_max:
        raise DataError(f"invalid group lengths [{len_min}, {len_max}]")
    if size < len_max:
        raise DataError(f"corpus of {size} frames is shorter than len_max={len_max}")

    rng = make_generator(seed)
    groups = []
    for _ in range(n_groups):
        length = int(rng.integers(len_min, len_max + 1))
        start = int(rng.integers(0, size - length + 1))
        groups.append(range(start, start + length))
    return groups


def read_annotations(path: PathLike) -> List[FrameAnnotation]:
    annotations = []
    for line_number, line in _lines(path):
        try:
            annotations.append(FrameAnnotation.model_validate_json(line))
        except ValidationError as exc:
            raise CorpusFormatError(line_number, _first_error(exc)) from None
    return annotations


def write_annotations(path: PathLike, annotations: Iterable[FrameAnnotation]) -> int:
    return persist(annotations, path)
