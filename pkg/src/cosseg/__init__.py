"""Segmented learning for class-of-service traffic classification."""

from .evr import evr, evr_tail, segment, vectorize
from .forest import ForestModel, feature_importance, load_model, predict, save_model, train_forest
from .metrics import confusion, per_class_metrics, report
from .model import (
    FEATURE_NAMES,
    CosLabel,
    Direction,
    PacketRecord,
    SegmentMatrix,
    SegmentVector,
    TrafficStream,
)
from .s2mc import SelectionConfig, SelectionResult, select

__all__ = [
    "FEATURE_NAMES",
    "CosLabel",
    "Direction",
    "ForestModel",
    "PacketRecord",
    "SegmentMatrix",
    "SegmentVector",
    "SelectionConfig",
    "SelectionResult",
    "TrafficStream",
    "confusion",
    "evr",
    "evr_tail",
    "feature_importance",
    "load_model",
    "per_class_metrics",
    "predict",
    "report",
    "save_model",
    "segment",
    "select",
    "train_forest",
    "vectorize",
]
