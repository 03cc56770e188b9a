"""
PCQH heatmap files.

Record layout: magic b"PCQH", little-endian u32 channels, height, width, then
channel-major row-major little-endian f32 values. A frame stream is the
concatenation of records.
"""

from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, List, Union

import numpy as np

from pcq.errors import HeatmapFormatError
from pcq.heatmap.types import Heatmap

MAGIC = b"PCQH"
HEADER = np.dtype("<u4")
VALUE = np.dtype("<f4")

PathLike = Union[str, Path]


def encode_heatmap(hm: Heatmap) -> bytes:
    header = np.array([hm.channels, hm.height, hm.width], dtype=HEADER).tobytes()
    return MAGIC + header + hm.values.astype(VALUE).tobytes()


def _read_record(stream: BinaryIO, index: int):
    magic = stream.read(len(MAGIC))
    if not magic:
        return None
    if magic != MAGIC:
        raise HeatmapFormatError(f"record {index}: bad magic {magic!r}")

    raw = stream.read(3 * HEADER.itemsize)
    if len(raw) != 3 * HEADER.itemsize:
        raise HeatmapFormatError(f"record {index}: truncated header")
    channels, height, width = (int(v) for v in np.frombuffer(raw, dtype=HEADER))

    size = channels * height * width
    payload = stream.read(size * VALUE.itemsize)
    if len(payload) != size * VALUE.itemsize:
        raise HeatmapFormatError(f"record {index}: expected {size} values")
    values = np.frombuffer(payload, dtype=VALUE).reshape(channels, height, width)
    return Heatmap(values.astype(np.float64))


def write_heatmaps(path: PathLike, heatmaps: Iterable[Heatmap]) -> int:
    count = 0
    with open(path, "wb") as f:
        for hm in heatmaps:
            f.write(encode_heatmap(hm))
            count += 1
    return count


def iter_heatmaps(path: PathLike) -> Iterator[Heatmap]:
    with open(path, "rb") as f:
        index = 0
        while True:
            hm = _read_record(f, index)
            if hm is None:
                return
            yield hm
            index += 1


def read_heatmaps(path: PathLike) -> List[Heatmap]:
    return list(iter_heatmaps(path))


def write_heatmap(path: PathLike, hm: Heatmap) -> None:
    write_heatmaps(path, [hm])


def read_heatmap(path: PathLike) -> Heatmap:
    heatmaps = read_heatmaps(path)
    if len(heatmaps) != 1:
        raise HeatmapFormatError(f"{path}: expected one heatmap, found {len(heatmaps)}")
    return heatmaps[0]
