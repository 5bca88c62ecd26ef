"""``cosseg`` command line: featurize, select, train, evaluate, classify, importance, synth.

Inputs are packet-log CSVs or pcaps, given as ``LABEL=PATH`` or plain ``PATH``
(label taken from ``--label`` or the file stem). Settings come from
``--config`` (TOML or JSON) with command-line flags taking precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import synthgen
from .evr import SegmentCache, evr, matrix_csv_text, read_matrix_csv, segment_features
from .forest import feature_importance, load_model, save_model, train_forest
from .ingest import EndpointSpec, read_stream
from .metrics import confusion, report
from .model import FEATURE_NAMES, CosLabel, TrafficStream
from .s2mc import SelectionConfig, select

log = logging.getLogger("cosseg")

SEED_ENV = "COSSEG_SEED"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # one line on stderr, exit 2
        sys.stderr.write(f"cosseg: error: usage: {message}\n")
        sys.exit(2)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_config(path: str) -> dict:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        doc = tomllib.loads(text)
    else:
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise CliError(f"{path}: config must be a table/object")
    out = {}
    for key, value in doc.items():
        key = key.replace("-", "_")
        if key in ("s_t_pool", "n_pool") and isinstance(value, str):
            value = _int_list(value)
        out[key] = value
    return out


# --- input handling ----------------------------------------------------------


def _split_input(spec: str, default_label: str | None) -> tuple[str, Path]:
    if "=" in spec and not Path(spec).exists():
        name, path = spec.split("=", 1)
        return name, Path(path)
    path = Path(spec)
    return default_label or path.stem, path


def _read_inputs(
    specs: Sequence[str],
    label: str | None,
    endpoint: str | None,
    classes: Sequence[CosLabel] | None = None,
) -> list[TrafficStream]:
    """Read every input; ids follow first appearance unless ``classes`` fixes them."""
    ep = EndpointSpec(endpoint) if endpoint else None
    by_name = {c.name: c for c in classes} if classes else {}
    streams = []
    for spec in specs:
        name, path = _split_input(spec, label)
        if not path.exists():
            raise CliError(f"input not found: {path}")
        if name not in by_name:
            if classes:
                known = ", ".join(c.name for c in classes)
                raise CliError(f"label {name!r} is not known to the model (known: {known})")
            by_name[name] = CosLabel(len(by_name), name)
        streams.append(read_stream(path, by_name[name], ep))
    return streams


def _write_text(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# --- commands ----------------------------------------------------------------


def cmd_featurize(args) -> int:
    streams = _read_inputs(args.inputs, args.label, args.endpoint)
    cache = SegmentCache(streams, args.n)
    matrix = cache.tail(0)
    _write_text(args.out, matrix_csv_text(matrix))
    log.info("wrote %d segments of %d packets", len(matrix), args.n)
    return 0


def cmd_select(args) -> int:
    streams = _read_inputs(args.inputs, args.label, args.endpoint)
    cfg = SelectionConfig(
        s_t_pool=tuple(args.s_t_pool),
        n_pool=tuple(args.n_pool),
        benchmark_accuracy=args.benchmark,
        n_trees=args.trees,
        seed=args.seed,
        full_grid=args.full_grid,
        workers=args.workers,
        dataset=args.dataset or "",
    )
    result = select(streams, cfg)
    for w in result.warnings:
        sys.stderr.write(f"cosseg: warning: {w}\n")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out / "model.json")
    (out / "grid.csv").write_text(result.grid_csv(), encoding="utf-8")
    (out / "grid.json").write_text(result.grid_json(), encoding="utf-8")
    summary = {
        "chosen_s_t": result.chosen_s_t,
        "chosen_n": result.chosen_n,
        "met_benchmark": result.met_benchmark,
        "accuracy": result.chosen.accuracy,
        "cells_evaluated": len(result.cells),
        "cells_skipped": len(result.skipped),
    }
    if args.format == "json":
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    elif args.format == "csv":
        sys.stdout.write(result.grid_csv())
    else:
        sys.stdout.write(
            f"chosen S_T={result.chosen_s_t} N={result.chosen_n} "
            f"accuracy={result.chosen.accuracy:.4f} met_benchmark={str(result.met_benchmark).lower()}\n"
        )
    return 0


def cmd_train(args) -> int:
    if len(args.inputs) == 1 and _looks_like_matrix(args.inputs[0]):
        matrix = read_matrix_csv(args.inputs[0])
        s_t = None
    else:
        if args.n is None or args.s_t is None:
            raise CliError("training from packet inputs needs --n and --s-t")
        streams = _read_inputs(args.inputs, args.label, args.endpoint)
        matrix = evr(streams, args.s_t, args.n)
        s_t = args.s_t
    model = train_forest(matrix, args.trees, args.seed, s_t=s_t, dataset=args.dataset or "")
    save_model(model, args.out)
    log.info("trained %d trees on %d segments", args.trees, len(matrix))
    return 0


def _looks_like_matrix(spec: str) -> bool:
    path = Path(spec)
    if not path.is_file() or path.suffix.lower() != ".csv":
        return False
    with path.open("r", encoding="utf-8-sig") as fh:
        first = fh.readline().strip()
    return first.startswith(FEATURE_NAMES[0])


def _model_n(model, override: int | None) -> int:
    n = override if override is not None else model.train_meta.n
    if n is None:
        raise CliError("model does not record its segment size; pass --n")
    return int(n)


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    n = _model_n(model, args.n)
    skip = args.skip if args.skip is not None else (model.train_meta.s_t or 0)
    streams = _read_inputs(args.inputs, args.label, args.endpoint, classes=model.classes)
    test = SegmentCache(streams, n, model.classes).tail(skip)
    if len(test) == 0:
        raise CliError(f"no segments to evaluate (segment size {n}, skipping {skip} per class)")
    rep = report(confusion(test.labels, model.predict_ids(test.features), model.classes))
    if args.format == "json":
        sys.stdout.write(rep.to_json())
    elif args.format == "csv":
        sys.stdout.write(rep.to_csv())
    else:
        sys.stdout.write(rep.to_table())
    return 0


def cmd_classify(args) -> int:
    model = load_model(args.model)
    n = _model_n(model, args.n)
    name, path = _split_input(args.input, args.label)
    if not path.exists():
        raise CliError(f"input not found: {path}")
    stream = read_stream(path, CosLabel(0, name or "unknown"), EndpointSpec(args.endpoint) if args.endpoint else None)
    feats = segment_features(stream, n)
    ids = model.predict_ids(feats) if len(feats) else np.empty(0, dtype=np.int64)
    labels = [model.classes[i].name for i in ids]
    if args.format == "json":
        sys.stdout.write(json.dumps([{"segment": i, "start": i * n, "label": lab} for i, lab in enumerate(labels)]) + "\n")
    elif args.format == "csv":
        sys.stdout.write("segment,start_packet,label\n")
        sys.stdout.writelines(f"{i},{i * n},{lab}\n" for i, lab in enumerate(labels))
    else:
        sys.stdout.writelines(f"{lab}\n" for lab in labels)
    return 0


def cmd_importance(args) -> int:
    model = load_model(args.model)
    values = feature_importance(model, scaled=args.scaled)
    names = FEATURE_NAMES
    if args.format == "json":
        sys.stdout.write(json.dumps(dict(zip(names, values.tolist())), indent=2) + "\n")
    elif args.format == "csv":
        sys.stdout.write("feature,importance\n")
        sys.stdout.writelines(f"{k},{v!r}\n" for k, v in zip(names, values.tolist()))
    else:
        width = max(len(k) for k in names)
        sys.stdout.writelines(f"{k.ljust(width)}  {v:.6f}\n" for k, v in zip(names, values.tolist()))
    return 0


def cmd_synth(args) -> int:
    profiles = synthgen.load_profiles(args.profiles) if args.profiles else synthgen.builtin_profiles()
    if args.profile == "all":
        chosen = list(profiles)
    else:
        chosen = [synthgen.get_profile(args.profile, profiles)]
    if args.packets < 1:
        raise CliError("--packets must be >= 1")
    out = Path(args.out)
    if len(chosen) > 1 or out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        targets = [out / f"{p.name}.csv" for p in chosen]
    else:
        targets = [out]
    for p, target in zip(chosen, targets):
        if args.jitter:
            p = synthgen.perturb(p, args.jitter, args.seed)
        child = int(np.random.SeedSequence([args.seed, p.label.id]).generate_state(1)[0])
        synthgen.write_csv(synthgen.generate(p, args.packets, child), target)
        log.info("wrote %s", target)
    return 0


# --- parser ------------------------------------------------------------------

FORMATS = ("table", "json", "csv")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="cosseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs: dict[str, argparse.ArgumentParser] = {}

    def common(p, inputs=True, seed=False):
        p.add_argument("--config", help="TOML or JSON file of default settings")
        if inputs:
            p.add_argument("--label", help="class name for unlabeled inputs")
            p.add_argument("--endpoint", help="client address or CIDR for pcap inputs")
        if seed:
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--format", choices=FORMATS, default="table")

    p = sub.add_parser("featurize", help="segment inputs and dump the feature matrix")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--n", type=int, required=False)
    p.add_argument("--out", default="-")
    common(p)
    p.set_defaults(func=cmd_featurize, required_keys=("n",))
    subs["featurize"] = p

    p = sub.add_parser("select", help="grid-search S_T and N, write model and grid report")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--benchmark", type=float, default=0.97)
    p.add_argument("--s-t-pool", type=_int_list, default=[10, 20, 30, 40, 50])
    p.add_argument("--n-pool", type=_int_list, default=[10, 20, 30, 40, 50])
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--full-grid", action="store_true", default=False)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dataset", default="")
    p.add_argument("--out-dir", required=False)
    common(p, seed=True)
    p.set_defaults(func=cmd_select, required_keys=("out_dir",))
    subs["select"] = p

    p = sub.add_parser("train", help="train a forest on fixed N and S_T (or a matrix CSV)")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--n", type=int)
    p.add_argument("--s-t", type=int)
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--dataset", default="")
    p.add_argument("--out", required=False)
    common(p, seed=True)
    p.set_defaults(func=cmd_train, required_keys=("out",))
    subs["train"] = p

    p = sub.add_parser("evaluate", help="classify tail segments and print per-class metrics")
    p.add_argument("model")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--n", type=int)
    p.add_argument("--skip", type=int, help="leading segments per class to skip (default: model S_T)")
    common(p)
    p.set_defaults(func=cmd_evaluate, required_keys=())
    subs["evaluate"] = p

    p = sub.add_parser("classify", help="label every segment of one input")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--n", type=int)
    common(p)
    p.set_defaults(func=cmd_classify, required_keys=())
    subs["classify"] = p

    p = sub.add_parser("importance", help="print per-feature importances")
    p.add_argument("model")
    p.add_argument("--scaled", action="store_true", help="divide by the largest importance")
    common(p, inputs=False)
    p.set_defaults(func=cmd_importance, required_keys=())
    subs["importance"] = p

    p = sub.add_parser("synth", help="write synthetic packet-log CSVs")
    p.add_argument("profile", help="profile name or 'all'")
    p.add_argument("--packets", type=int, default=3000)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--profiles", help="TOML/JSON profile definitions")
    p.add_argument("--out", required=False)
    common(p, inputs=False, seed=True)
    p.set_defaults(func=cmd_synth, required_keys=("out",))
    subs["synth"] = p
    return parser, subs


def main(argv: Sequence[str] | None = None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="cosseg: %(levelname)s: %(message)s",
            stream=sys.stderr,
        )
        if args.config:
            sub = subs[args.command]
            sub.set_defaults(**_load_config(args.config))
            args = parser.parse_args(argv)
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        missing = [k for k in args.required_keys if getattr(args, k, None) is None]
        if missing:
            flags = ", ".join("--" + k.replace("_", "-") for k in missing)
            parser.error(f"{args.command}: missing required setting(s) {flags}")
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # reported as one parsable line
        kind = type(exc).__name__
        message = " ".join(str(exc).split())
        sys.stderr.write(f"cosseg: error: {kind}: {message}\n")
        if logging.getLogger().isEnabledFor(logging.DEBUG):
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
