import logging
from collections import Counter
from typing import Iterable, List, Optional, Sequence, Union

from pcq.counting.partition import infer_with_overlap
from pcq.errors import CorpusMismatchError
from pcq.heatmap.catalog import ClassCatalog
from pcq.heatmap.types import FrameAnnotation, Heatmap
from pcq.models.predictor import CounterModel, SelectingCounter
from pcq.store.documents import DEFAULT_VEHICLE, FrameCorpus, frame_timestamp, ingest
from pcq.utils.parallel import map_ordered

logger = logging.getLogger(__name__)

Counter_ = Union[CounterModel, SelectingCounter]


def frame_ids(count: int, annotations: Optional[Sequence[FrameAnnotation]] = None) -> List[str]:
    if annotations is None:
        return [f"frame{i:06d}" for i in range(count)]
    if len(annotations) != count:
        raise CorpusMismatchError(f"{count} heatmaps but {len(annotations)} annotations")
    return [a.frame_id for a in annotations]


def run_inference(
    frames: Iterable[Heatmap],
    model: Counter_,
    catalog: ClassCatalog,
    annotations: Optional[Sequence[FrameAnnotation]] = None,
    vehicle_id: str = DEFAULT_VEHICLE,
) -> FrameCorpus:
    """Count every frame and turn the peaks into documents, in input order."""
    frames = list(frames)
    ids = frame_ids(len(frames), annotations)
    for hm in frames:
        if hm.channels != catalog.K:
            raise CorpusMismatchError(f"heatmap has {hm.channels} channels, catalog has {catalog.K}")

    def count(item):
        index, hm = item
        config = model.choose(hm)
        _, peaks = infer_with_overlap(hm, config)
        document = ingest(peaks, catalog, ids[index], frame_timestamp(index), vehicle_id)
        return document, config.label

    results = map_ordered(count, enumerate(frames))
    usage = Counter(label for _, label in results)
    logger.info("Counted %d frames with %r (configs used: %s)", len(frames), model, dict(usage))
    return FrameCorpus(document for document, _ in results)
