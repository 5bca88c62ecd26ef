"""Core domain types: packets, labelled streams, segment vectors and matrices.

Streams keep their packets column-wise in read-only numpy arrays; per-packet
``PacketRecord`` objects are materialized on demand.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

IAT_TOLERANCE = 1e-9

FEATURE_NAMES: tuple[str, ...] = (
    "len_min",
    "len_max",
    "len_mean",
    "len_std",
    "iat_min",
    "iat_max",
    "iat_mean",
    "iat_std",
    "up_count",
    "down_count",
    "duration",
)
N_FEATURES = len(FEATURE_NAMES)


class Direction(enum.IntEnum):
    UP = 0
    DOWN = 1

    @classmethod
    def parse(cls, token: str | int) -> "Direction":
        """Accept ``up``/``down`` (any case) or ``0``/``1``."""
        if isinstance(token, (int, np.integer)) and not isinstance(token, bool):
            return cls(int(token))
        text = str(token).strip().lower()
        if text in ("up", "0", "uplink"):
            return cls.UP
        if text in ("down", "1", "downlink"):
            return cls.DOWN
        raise ValueError(f"unknown direction token {token!r}")

    @property
    def token(self) -> str:
        return "up" if self is Direction.UP else "down"


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    length: int
    direction: Direction
    iat: float

    def __post_init__(self) -> None:
        if not self.timestamp >= 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")
        if self.length < 1:
            raise ValueError(f"packet length must be >= 1 byte, got {self.length}")
        if not self.iat >= 0:
            raise ValueError(f"iat must be non-negative, got {self.iat}")
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True, order=True)
class CosLabel:
    id: int
    name: str

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"label id must be >= 0, got {self.id}")
        if not self.name:
            raise ValueError("label name must be non-empty")


def check_label_set(labels: Iterable[CosLabel]) -> tuple[CosLabel, ...]:
    """Return the distinct labels sorted by id, checking dense ids and unique names."""
    distinct = sorted(set(labels))
    ids = [lab.id for lab in distinct]
    names = [lab.name for lab in distinct]
    if ids != list(range(len(distinct))):
        raise ValueError(f"label ids must be dense 0..K-1, got {ids}")
    if len(set(names)) != len(names):
        raise ValueError(f"label names must be unique, got {names}")
    return tuple(distinct)


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TrafficStream:
    """Time-ordered packets of one class-of-service capture.

    Use :meth:`from_timestamps` to derive the iat column; the raw constructor
    validates a caller-supplied one.
    """

    label: CosLabel
    timestamps: np.ndarray
    lengths: np.ndarray
    directions: np.ndarray
    iats: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        ts = _frozen(self.timestamps, np.float64)
        lengths = _frozen(self.lengths, np.int64)
        dirs = _frozen(self.directions, np.int8)
        iats = _frozen(self.iats, np.float64)
        n = len(ts)
        if not (len(lengths) == len(dirs) == len(iats) == n):
            raise ValueError("stream columns must have equal length")
        if n:
            if not np.all(np.isfinite(ts)) or ts[0] < 0:
                raise ValueError("timestamps must be finite and non-negative")
            if np.any(np.diff(ts) < 0):
                raise ValueError("timestamps must be non-decreasing")
            if np.any(lengths < 1):
                bad = int(np.argmax(lengths < 1))
                raise ValueError(f"packet {bad}: length must be >= 1 byte")
            if not np.all((dirs == 0) | (dirs == 1)):
                raise ValueError("directions must be 0 (up) or 1 (down)")
            if iats[0] != 0.0:
                raise ValueError("iat of the first packet must be 0")
            if np.any(iats < 0):
                raise ValueError("iat must be non-negative")
            err = np.abs(iats[1:] - np.diff(ts))
            if err.size and err.max() > IAT_TOLERANCE:
                bad = int(np.argmax(err)) + 1
                raise ValueError(f"packet {bad}: iat disagrees with timestamp delta")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "iats", iats)

    @classmethod
    def from_timestamps(
        cls,
        label: CosLabel,
        timestamps: Sequence[float] | np.ndarray,
        lengths: Sequence[int] | np.ndarray,
        directions: Sequence[int] | np.ndarray,
        source: str = "",
    ) -> "TrafficStream":
        ts = np.asarray(timestamps, dtype=np.float64)
        iats = np.zeros_like(ts)
        if ts.size > 1:
            iats[1:] = np.diff(ts)
        return cls(label, ts, lengths, directions, iats, source)

    @classmethod
    def from_packets(
        cls, label: CosLabel, packets: Iterable[PacketRecord], source: str = ""
    ) -> "TrafficStream":
        packets = list(packets)
        return cls(
            label,
            [p.timestamp for p in packets],
            [p.length for p in packets],
            [int(p.direction) for p in packets],
            [p.iat for p in packets],
            source,
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> PacketRecord:
        return PacketRecord(
            float(self.timestamps[i]),
            int(self.lengths[i]),
            Direction(int(self.directions[i])),
            float(self.iats[i]),
        )

    @property
    def packets(self) -> tuple[PacketRecord, ...]:
        return tuple(self[i] for i in range(len(self)))

    def __iter__(self) -> Iterator[PacketRecord]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrafficStream):
            return NotImplemented
        return (
            self.label == other.label
            and self.source == other.source
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.lengths, other.lengths)
            and np.array_equal(self.directions, other.directions)
            and np.array_equal(self.iats, other.iats)
        )

    __hash__ = None  # type: ignore[assignment]

    def relabel(self, label: CosLabel) -> "TrafficStream":
        return TrafficStream(
            label, self.timestamps, self.lengths, self.directions, self.iats, self.source
        )

    def to_dict(self) -> dict:
        return {
            "label": {"id": self.label.id, "name": self.label.name},
            "source": self.source,
            "timestamps": self.timestamps.tolist(),
            "lengths": self.lengths.tolist(),
            "directions": self.directions.tolist(),
            "iats": self.iats.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrafficStream":
        return cls(
            CosLabel(**data["label"]),
            data["timestamps"],
            data["lengths"],
            data["directions"],
            data["iats"],
            data.get("source", ""),
        )


# relative slack for mean-within-[min, max] checks; float summation may overshoot
_ORDER_SLACK = 1e-12


@dataclass(frozen=True)
class SegmentVector:
    """The 11 per-segment statistics used as classifier input."""

    len_min: float
    len_max: float
    len_mean: float
    len_std: float
    iat_min: float
    iat_max: float
    iat_mean: float
    iat_std: float
    up_count: float
    down_count: float
    duration: float

    def __post_init__(self) -> None:
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ValueError("segment features must be finite")
        for lo, mid, hi, tag in (
            (self.len_min, self.len_mean, self.len_max, "len"),
            (self.iat_min, self.iat_mean, self.iat_max, "iat"),
        ):
            slack = _ORDER_SLACK * max(abs(lo), abs(hi), 1.0)
            if not (lo - slack <= mid <= hi + slack) or lo > hi:
                raise ValueError(f"{tag}: expected min <= mean <= max, got {lo}, {mid}, {hi}")
        if self.len_std < 0 or self.iat_std < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.up_count < 0 or self.down_count < 0:
            raise ValueError("direction counts must be non-negative")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float] | np.ndarray) -> "SegmentVector":
        values = [float(v) for v in values]
        if len(values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {len(values)}")
        return cls(*values)

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FEATURE_NAMES}

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> "SegmentVector":
        return cls(**{name: float(data[name]) for name in FEATURE_NAMES})

    @property
    def packet_count(self) -> int:
        return int(round(self.up_count + self.down_count))


@dataclass(frozen=True, eq=False)
class SegmentMatrix:
    """Stacked segment vectors with their class ids.

    ``features`` is ``(rows, 11)``; ``labels`` holds class ids indexing ``classes``.
    """

    features: np.ndarray
    labels: np.ndarray
    classes: tuple[CosLabel, ...]
    n: int
    provenance: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        feats = np.array(self.features, dtype=np.float64, copy=True)
        if feats.size == 0:
            feats = feats.reshape(0, N_FEATURES)
        if feats.ndim != 2 or feats.shape[1] != N_FEATURES:
            raise ValueError(f"features must have shape (rows, {N_FEATURES}), got {feats.shape}")
        labels = _frozen(self.labels, np.int64)
        if len(labels) != len(feats):
            raise ValueError("features and labels differ in row count")
        classes = tuple(self.classes)
        if classes:
            check_label_set(classes)
        if labels.size and (labels.min() < 0 or labels.max() >= len(classes)):
            raise ValueError("label ids out of range of the class list")
        if self.n < 1:
            raise ValueError(f"segment size must be >= 1, got {self.n}")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def rows(self) -> list[tuple[SegmentVector, CosLabel]]:
        return [
            (SegmentVector.from_array(x), self.classes[int(y)])
            for x, y in zip(self.features, self.labels)
        ]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.classes))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SegmentMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and self.classes == other.classes
            and self.provenance == other.provenance
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "classes": [{"id": c.id, "name": c.name} for c in self.classes],
            "provenance": list(self.provenance),
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentMatrix":
        return cls(
            np.array(data["features"], dtype=np.float64).reshape(-1, N_FEATURES),
            data["labels"],
            tuple(CosLabel(**c) for c in data["classes"]),
            int(data["n"]),
            tuple(data.get("provenance", ())),
        )
