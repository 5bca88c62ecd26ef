#!/usr/bin/env python3
"""Run the selection / cross-dataset protocol on user-supplied captures.

Each dataset is a directory with one sub-directory per class; every ``.pcap``
or ``.csv`` file inside a class directory is one stream of that class::

    dataset_one/
        video/   a.pcap  b.pcap
        voip/    call.csv
        ...

The script selects (S_T, N) on the first dataset, reports its tail-segment
metrics, then evaluates the same model on every segment of the second
dataset. Class directories must carry the same names in both datasets.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cosseg.evr import SegmentCache
from cosseg.forest import save_model
from cosseg.ingest import EndpointSpec, read_stream
from cosseg.metrics import confusion, report
from cosseg.model import CosLabel
from cosseg.s2mc import SelectionConfig, select

SUFFIXES = {".pcap", ".cap", ".csv"}


def load_dataset(root: Path, endpoint: EndpointSpec | None, classes=None):
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if classes is None:
        classes = tuple(CosLabel(i, d.name) for i, d in enumerate(dirs))
    by_name = {c.name: c for c in classes}
    streams = []
    for d in dirs:
        if d.name not in by_name:
            sys.exit(f"{root}: class {d.name!r} does not exist in the training dataset")
        for f in sorted(d.iterdir()):
            if f.suffix.lower() in SUFFIXES:
                streams.append(read_stream(f, by_name[d.name], endpoint))
    return classes, streams


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("train_dir", type=Path)
    ap.add_argument("test_dir", type=Path, nargs="?")
    ap.add_argument("--endpoint", help="client address/CIDR for pcap inputs")
    ap.add_argument("--benchmark", type=float, default=0.97)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--full-grid", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results_real"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    endpoint = EndpointSpec(args.endpoint) if args.endpoint else None
    args.out.mkdir(parents=True, exist_ok=True)

    classes, train = load_dataset(args.train_dir, endpoint)
    cfg = SelectionConfig(
        benchmark_accuracy=args.benchmark,
        seed=args.seed,
        full_grid=args.full_grid,
        workers=args.workers,
        dataset=args.train_dir.name,
    )
    result = select(train, cfg)
    for w in result.warnings:
        logging.warning(w)
    save_model(result.model, args.out / "model.json")
    (args.out / "grid.csv").write_text(result.grid_csv())
    (args.out / "grid.json").write_text(result.grid_json())
    print(f"selected S_T={result.chosen_s_t} N={result.chosen_n} met_benchmark={result.met_benchmark}")
    print(result.chosen.metrics.to_table())

    if args.test_dir:
        _, test = load_dataset(args.test_dir, endpoint, classes)
        m = SegmentCache(test, result.chosen_n, classes).tail(0)
        rep = report(confusion(m.labels, result.model.predict_ids(m.features), classes))
        (args.out / "report_cross.json").write_text(rep.to_json())
        print(f"cross-dataset ({args.test_dir.name}):")
        print(rep.to_table())


if __name__ == "__main__":
    main()
