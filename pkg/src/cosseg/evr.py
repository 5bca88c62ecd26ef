"""Segment streams into consecutive N-packet windows and summarize each window.

A segment's vector is::

    [len_min, len_max, len_mean, len_std,
     iat_min, iat_max, iat_mean, iat_std,
     up_count, down_count, duration]

Standard deviations are population (ddof=0). The first packet of a segment
keeps its stream iat, i.e. the gap back to the previous segment.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import (
    FEATURE_NAMES,
    N_FEATURES,
    CosLabel,
    Direction,
    SegmentMatrix,
    SegmentVector,
    TrafficStream,
    check_label_set,
)


class InsufficientDataError(ValueError):
    def __init__(self, label: CosLabel, needed_packets: int, have_packets: int, needed_segments: int, have_segments: int):
        self.label = label
        self.needed_packets = needed_packets
        self.have_packets = have_packets
        self.shortfall = needed_packets - have_packets
        super().__init__(
            f"class {label.name!r}: needs {needed_packets} packets "
            f"({needed_segments} segments), has {have_packets} "
            f"({have_segments} complete segments)"
        )


def segment(stream: TrafficStream, n: int) -> list[range]:
    """Consecutive non-overlapping ``n``-packet index ranges; the partial tail is dropped."""
    if n < 1:
        raise ValueError(f"segment size must be >= 1, got {n}")
    return [range(i * n, (i + 1) * n) for i in range(len(stream) // n)]


def _stats_block(stream: TrafficStream, start: int, n: int, count: int) -> np.ndarray:
    stop = start + n * count
    lengths = stream.lengths[start:stop].astype(np.float64).reshape(count, n)
    iats = stream.iats[start:stop].reshape(count, n)
    up = (stream.directions[start:stop] == Direction.UP).reshape(count, n)
    ts = stream.timestamps[start:stop].reshape(count, n)
    out = np.empty((count, N_FEATURES), dtype=np.float64)
    out[:, 0] = lengths.min(axis=1)
    out[:, 1] = lengths.max(axis=1)
    out[:, 2] = lengths.mean(axis=1)
    out[:, 3] = lengths.std(axis=1)
    out[:, 4] = iats.min(axis=1)
    out[:, 5] = iats.max(axis=1)
    out[:, 6] = iats.mean(axis=1)
    out[:, 7] = iats.std(axis=1)
    out[:, 8] = up.sum(axis=1)
    out[:, 9] = n - out[:, 8]
    out[:, 10] = ts[:, -1] - ts[:, 0]
    # clamp rounding drift so mean stays inside [min, max]
    np.clip(out[:, 2], out[:, 0], out[:, 1], out=out[:, 2])
    np.clip(out[:, 6], out[:, 4], out[:, 5], out=out[:, 6])
    return out


def vectorize(stream: TrafficStream, rng: range) -> SegmentVector:
    if rng.step != 1:
        raise ValueError("segment range must be contiguous")
    if len(rng) < 1:
        raise ValueError("cannot vectorize an empty segment")
    if rng.start < 0 or rng.stop > len(stream):
        raise IndexError(f"range {rng} outside stream of {len(stream)} packets")
    return SegmentVector.from_array(_stats_block(stream, rng.start, len(rng), 1)[0])


def segment_features(stream: TrafficStream, n: int) -> np.ndarray:
    """All complete segments of ``stream`` as a ``(len // n, 11)`` array."""
    if n < 1:
        raise ValueError(f"segment size must be >= 1, got {n}")
    count = len(stream) // n
    if count == 0:
        return np.empty((0, N_FEATURES), dtype=np.float64)
    return _stats_block(stream, 0, n, count)


def group_by_class(
    streams: Iterable[TrafficStream], classes: Sequence[CosLabel] | None = None
) -> tuple[tuple[CosLabel, ...], dict[CosLabel, list[TrafficStream]]]:
    grouped: dict[CosLabel, list[TrafficStream]] = defaultdict(list)
    for s in streams:
        grouped[s.label].append(s)
    if classes is None:
        return (check_label_set(grouped) if grouped else ()), grouped
    classes = check_label_set(classes)
    unknown = set(grouped) - set(classes)
    if unknown:
        raise ValueError(f"streams carry labels outside the class list: {sorted(unknown)}")
    return classes, grouped


class SegmentCache:
    """Per-class segment arrays for one segment size, computed once.

    Multiple streams of one class contribute their segments in input order;
    segments never span two streams. Passing ``classes`` keeps ids of a wider
    label set (e.g. a model's) when only some classes have streams.
    """

    def __init__(self, streams: Sequence[TrafficStream], n: int, classes: Sequence[CosLabel] | None = None):
        self.n = n
        self.classes, grouped = group_by_class(streams, classes)
        self.provenance = tuple(s.source for s in streams)
        self.per_class: dict[CosLabel, np.ndarray] = {}
        self.packets: dict[CosLabel, int] = {}
        for label in self.classes:
            parts = [segment_features(s, n) for s in grouped[label]]
            self.per_class[label] = np.concatenate(parts) if parts else np.empty((0, N_FEATURES))
            self.packets[label] = sum(len(s) for s in grouped[label])

    def available(self, label: CosLabel) -> int:
        return len(self.per_class[label])

    def _assemble(self, slicer) -> SegmentMatrix:
        feats, labels = [], []
        for label in self.classes:
            block = slicer(self.per_class[label])
            feats.append(block)
            labels.append(np.full(len(block), label.id, dtype=np.int64))
        if not feats:
            return SegmentMatrix(np.empty((0, N_FEATURES)), [], (), self.n, self.provenance)
        return SegmentMatrix(
            np.concatenate(feats), np.concatenate(labels), self.classes, self.n, self.provenance
        )

    def head(self, s_t: int) -> SegmentMatrix:
        if s_t < 0:
            raise ValueError(f"segment count must be >= 0, got {s_t}")
        for label in self.classes:
            have = self.available(label)
            if have < s_t:
                raise InsufficientDataError(label, s_t * self.n, self.packets[label], s_t, have)
        return self._assemble(lambda block: block[:s_t])

    def tail(self, skip: int) -> SegmentMatrix:
        if skip < 0:
            raise ValueError(f"skip must be >= 0, got {skip}")
        return self._assemble(lambda block: block[skip:])


def evr(streams: Sequence[TrafficStream], s_t: int, n: int) -> SegmentMatrix:
    """First ``s_t`` segments of size ``n`` from every class, in stream order."""
    return SegmentCache(streams, n).head(s_t)


def evr_tail(
    streams: Sequence[TrafficStream], skip: int, n: int, classes: Sequence[CosLabel] | None = None
) -> SegmentMatrix:
    """Every complete segment after the first ``skip`` of each class."""
    return SegmentCache(streams, n, classes).tail(skip)


def matrix_csv_text(matrix: SegmentMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FEATURE_NAMES + ("label",))
    for x, y in zip(matrix.features.tolist(), matrix.labels.tolist()):
        writer.writerow([repr(v) for v in x] + [matrix.classes[y].name])
    return buf.getvalue()


def write_matrix_csv(matrix: SegmentMatrix, path: str | Path) -> None:
    Path(path).write_text(matrix_csv_text(matrix), encoding="utf-8")


def read_matrix_csv(path: str | Path, classes: Sequence[CosLabel] | None = None) -> SegmentMatrix:
    """Load a feature-matrix dump.

    Without ``classes``, ids are assigned by first appearance of each label
    name. The segment size is recovered from ``up_count + down_count``.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != FEATURE_NAMES + ("label",):
            raise ValueError(f"{path}: not a feature matrix (bad header)")
        names: dict[str, int] = {c.name: c.id for c in classes} if classes else {}
        feats, labels = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != N_FEATURES + 1:
                raise ValueError(f"{path}:{reader.line_num}: expected {N_FEATURES + 1} fields")
            name = row[-1]
            if name not in names:
                if classes:
                    raise ValueError(f"{path}:{reader.line_num}: unknown label {name!r}")
                names[name] = len(names)
            feats.append([float(v) for v in row[:-1]])
            labels.append(names[name])
    if not feats:
        raise ValueError(f"{path}: feature matrix has no rows")
    arr = np.array(feats, dtype=np.float64)
    sizes = np.unique(arr[:, 8] + arr[:, 9])
    if len(sizes) != 1:
        raise ValueError(f"{path}: rows mix segment sizes {sizes.tolist()}")
    label_set = tuple(classes) if classes else tuple(CosLabel(i, nm) for nm, i in names.items())
    return SegmentMatrix(arr, labels, label_set, int(sizes[0]), (str(path),))
