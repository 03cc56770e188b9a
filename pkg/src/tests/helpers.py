from typing import Dict, List, Sequence, Tuple

from pcq.heatmap.types import FrameAnnotation, ObjectCenter
from pcq.store.documents import FrameCorpus, FrameDocument, ObjectEntry, frame_timestamp


def annotation(
    centers: Sequence[Tuple[int, float, float, float]], width: int = 32, height: int = 32, frame_id: str = "f0"
) -> FrameAnnotation:
    """Centers given as (class_index, x, y, extent)."""
    return FrameAnnotation(
        frame_id=frame_id,
        width=width,
        height=height,
        centers=[ObjectCenter(class_index=c, x=x, y=y, extent=e) for c, x, y, e in centers],
    )


def corpus_from_counts(columns: Dict[str, List[int]], prefix: str = "frame") -> FrameCorpus:
    """Frame i holds columns[name][i] objects of each class, without positions."""
    n = len(next(iter(columns.values()))) if columns else 0
    documents = []
    for i in range(n):
        objects = [ObjectEntry(type=name, count=counts[i]) for name, counts in columns.items() if counts[i] > 0]
        documents.append(
            FrameDocument(frame_id=f"{prefix}{i:06d}", timestamp=frame_timestamp(i), vehicle_id="v", objects=objects)
        )
    return FrameCorpus(documents)
