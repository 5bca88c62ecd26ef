"""Model and segment-size selection by grid search over (S_T, N).

Loop order is S_T ascending (outer) and N ascending (inner). The search stops
at the first cell whose test accuracy reaches the benchmark; if none does,
the best cell is returned with ``met_benchmark=False``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .evr import SegmentCache
from .forest import ForestModel, train_forest
from .metrics import MetricsReport, confusion, report
from .model import TrafficStream

log = logging.getLogger(__name__)

DEFAULT_POOL = (10, 20, 30, 40, 50)
MIN_POOL_VALUE = 10


@dataclass(frozen=True)
class SelectionConfig:
    s_t_pool: tuple[int, ...] = DEFAULT_POOL
    n_pool: tuple[int, ...] = DEFAULT_POOL
    benchmark_accuracy: float = 0.97
    n_trees: int = 10
    seed: int = 0
    full_grid: bool = False
    workers: int = 1
    dataset: str = ""

    def __post_init__(self) -> None:
        for name in ("s_t_pool", "n_pool"):
            pool = tuple(int(v) for v in getattr(self, name))
            if not pool:
                raise ValueError(f"{name} must not be empty")
            if list(pool) != sorted(set(pool)):
                raise ValueError(f"{name} must be strictly ascending, got {pool}")
            if pool[0] < MIN_POOL_VALUE:
                raise ValueError(f"{name} values must be >= {MIN_POOL_VALUE}, got {pool[0]}")
            object.__setattr__(self, name, pool)
        # values above 1 are accepted and simply never reached
        if not self.benchmark_accuracy > 0:
            raise ValueError(f"benchmark_accuracy must be positive, got {self.benchmark_accuracy}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def cell_seed(seed: int, s_t: int, n: int) -> int:
    """Seed for one grid cell; depends only on (seed, S_T, N)."""
    return int(np.random.SeedSequence([seed, s_t, n]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class CellResult:
    s_t: int
    n: int
    accuracy: float
    metrics: MetricsReport
    model: ForestModel
    test_segments: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.s_t, self.n)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    chosen_s_t: int
    chosen_n: int
    model: ForestModel
    met_benchmark: bool
    benchmark: float
    cells: tuple[CellResult, ...]
    skipped: tuple[tuple[int, int, str], ...] = field(default_factory=tuple)

    @property
    def grid(self) -> dict[tuple[int, int], float]:
        return {c.key: c.accuracy for c in self.cells}

    @property
    def chosen(self) -> CellResult:
        return next(c for c in self.cells if c.key == (self.chosen_s_t, self.chosen_n))

    @property
    def warnings(self) -> list[str]:
        return [f"skipped cell S_T={s}, N={n}: {why}" for s, n, why in self.skipped]

    def grid_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("s_t", "n", "accuracy", "f1_macro", "met_benchmark"))
        for c in self.cells:
            writer.writerow(
                (c.s_t, c.n, repr(c.accuracy), repr(c.metrics.macro_f1),
                 str(c.accuracy >= self.benchmark).lower())
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "chosen": {"s_t": self.chosen_s_t, "n": self.chosen_n},
            "met_benchmark": self.met_benchmark,
            "benchmark": self.benchmark,
            "cells": [
                {
                    "s_t": c.s_t,
                    "n": c.n,
                    "accuracy": c.accuracy,
                    "test_segments": c.test_segments,
                    "met_benchmark": c.accuracy >= self.benchmark,
                    "metrics": c.metrics.to_dict(),
                }
                for c in self.cells
            ],
            "skipped": [{"s_t": s, "n": n, "reason": why} for s, n, why in self.skipped],
        }

    def grid_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _feasibility(cache: SegmentCache, s_t: int) -> str | None:
    for label in cache.classes:
        have = cache.available(label)
        if have < s_t:
            return f"class {label.name!r} has {have} segments at N={cache.n}, needs {s_t} for training"
        if have == s_t:
            return f"class {label.name!r} has no test segments left at N={cache.n}"
    return None


def evaluate_cell(cache: SegmentCache, s_t: int, cfg: SelectionConfig) -> CellResult:
    train = cache.head(s_t)
    test = cache.tail(s_t)
    model = train_forest(
        train, cfg.n_trees, cell_seed(cfg.seed, s_t, cache.n), s_t=s_t, dataset=cfg.dataset
    )
    pred = model.predict_ids(test.features)
    metrics = report(confusion(test.labels, pred, model.classes))
    return CellResult(s_t, cache.n, metrics.overall_accuracy, metrics, model, len(test))


def _run_cell(args) -> CellResult:
    streams, s_t, n, cfg = args
    return evaluate_cell(SegmentCache(streams, n), s_t, cfg)


def select(streams: Sequence[TrafficStream], cfg: SelectionConfig = SelectionConfig()) -> SelectionResult:
    streams = list(streams)
    caches = {n: SegmentCache(streams, n) for n in cfg.n_pool}
    classes = caches[cfg.n_pool[0]].classes
    if len(classes) < 2:
        raise ValueError(f"need at least 2 classes, got {len(classes)}")

    order = [(s_t, n) for s_t in cfg.s_t_pool for n in cfg.n_pool]
    skipped = []
    feasible = []
    for s_t, n in order:
        why = _feasibility(caches[n], s_t)
        if why is None:
            feasible.append((s_t, n))
        else:
            skipped.append((s_t, n, why))
            log.warning("skipping S_T=%d N=%d: %s", s_t, n, why)
    if not feasible:
        raise ValueError("no feasible (S_T, N) cell: not enough packets for any configuration")

    cells: list[CellResult] = []
    if cfg.full_grid and cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            cells = list(pool.map(_run_cell, [(streams, s, n, cfg) for s, n in feasible]))
    else:
        for s_t, n in feasible:
            cell = evaluate_cell(caches[n], s_t, cfg)
            log.info("S_T=%d N=%d accuracy=%.4f", s_t, n, cell.accuracy)
            cells.append(cell)
            if not cfg.full_grid and cell.accuracy >= cfg.benchmark_accuracy:
                break

    hit = next((c for c in cells if c.accuracy >= cfg.benchmark_accuracy), None)
    if hit is None:
        # first maximum in loop order: ties go to smaller S_T, then smaller N
        hit = max(cells, key=lambda c: (c.accuracy, -c.s_t, -c.n))
        met = False
    else:
        met = True
    return SelectionResult(
        hit.s_t, hit.n, hit.model, met, cfg.benchmark_accuracy, tuple(cells), tuple(skipped)
    )
