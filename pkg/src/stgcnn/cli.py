"""Command-line pipeline: synth -> graph -> train -> eval -> explain.

Every JSON output embeds the toolkit version and a hash of the effective
command configuration; CSV outputs carry the same information on a leading
``#`` comment line.  Files are written atomically and JSON keys are sorted,
so identical inputs and seeds reproduce identical bytes.

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import DatasetError, SplitPlan, load_dataset, make_split, vectorize_dataset
from .estimation import ConfigError, FeatureGraph, assemble, check_compatibility, estimate_graphs
from .explain import (
    aggregate_by_class,
    delta_sensitivity,
    importance_for_records,
    write_class_frequency_csv,
    write_delta_csv,
    write_importance_csv,
)
from .gcnn import FULL_GRID, ModelConfig, ModelParams, TrainingDiverged, expand_grid, predict_proba, train
from .metrics import EvalReport, aggregate_reports, confusion_at_half
from .st_graph import STAdjacency, normalize_adjacency
from .synthgen import SynthSpec, generate

logger = logging.getLogger("stgcnn")

GRIDS = {
    "smoke": {},
    "small": {"dropout": [0.0, 0.15], "learning_rate": [0.01, 0.05]},
    "full": FULL_GRID,
}
SWEEP = (0.6, 0.725, 0.85, 0.975)


# -- output helpers ---------------------------------------------------------


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj: dict, cfg_hash: str):
    doc = dict(obj)
    doc["meta"] = {"version": __version__, "config_hash": cfg_hash, **obj.get("meta", {})}
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _atomic_csv(path: Path, writer, *args, header: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp, *args, header=header)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    return json.loads(path.read_text())


_NOT_HASHED = ("func", "config", "verbose", "out", "out_dir", "graph_dir")
_INPUT_FILES = ("dataset", "spec", "checkpoint", "split")


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _effective(args: argparse.Namespace) -> dict:
    """Hashable view of a command's settings: output locations are ignored and
    input files are represented by their content digest, not their path."""
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_HASHED:
            continue
        if k in _INPUT_FILES and v is not None:
            v = _file_digest(v)
        elif k == "reports":
            v = [_file_digest(p) for p in v]
        cfg[k] = v
    return cfg


# -- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    spec_obj = read_json(args.spec) if args.spec else {}
    for key in ("P", "F_cont", "F_bin", "T", "missing_rate", "positive_fraction", "signal_strength", "seed"):
        val = getattr(args, key)
        if val is not None:
            spec_obj[key] = val
    try:
        spec = SynthSpec.from_json(spec_obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthetic spec: {exc}") from None
    dataset = generate(spec)
    doc = dataset.to_json()
    doc["meta"] = {"synth_spec": spec.to_json()}
    write_json(args.out, doc, config_hash(spec.to_json()))
    print(f"wrote {dataset.num_patients} patients to {args.out}")
    return 0


def _graph_report(graphs: list[FeatureGraph]) -> dict:
    per = [g.metrics() for g in graphs]
    return {
        "graphs": per,
        "mean_edge_density": float(np.mean([m["edge_density"] for m in per])),
        "mean_edge_entropy": float(np.mean([m["edge_entropy"] for m in per])),
    }


def cmd_graph(args) -> int:
    check_compatibility(args.method, args.repr)
    dataset = load_dataset(args.dataset)
    h = config_hash(_effective(args))
    out = Path(args.out_dir)

    split = make_split(dataset, args.test_fraction, args.folds, args.seed)
    train_set = dataset.subset(split.train_ids)
    graphs = estimate_graphs(train_set, args.method, args.repr, args.threshold, args.beta, args.target_edges)
    st = assemble(graphs, args.repr, dataset.schema.num_steps)

    report = {"method": args.method, "repr": args.repr, "threshold": args.threshold, **_graph_report(graphs)}
    if args.sweep:
        report["sweep"] = []
        for thr in args.sweep:
            gs = estimate_graphs(train_set, args.method, args.repr, thr, args.beta, args.target_edges)
            report["sweep"].append({"threshold": thr, **_graph_report(gs)})

    write_json(out / "split.json", split.to_json(), h)
    write_json(out / "graphs.json", {"method": args.method, "repr": args.repr, "graphs": [g.to_json() for g in graphs]}, h)
    write_json(out / "st_graph.json", st.to_json(), h)
    write_json(out / "graph_report.json", report, h)
    _atomic_write(out / "st_graph.dot", f"// stgcnn {__version__} config_hash={h}\n" + st.to_dot(dataset.schema.feature_names))
    print(f"{len(graphs)} feature graph(s), ST operator with {st.A.nnz} nonzeros -> {out}")
    return 0


def _base_config(args) -> ModelConfig:
    return ModelConfig(
        variant=args.variant,
        layers=args.layers,
        hidden=args.hidden,
        poly_order=args.poly_order,
        leaky_alpha=args.alpha,
        dropout=args.dropout,
        learning_rate=args.lr,
        lr_decay=args.lr_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def _grid(spec: str) -> dict:
    if spec in GRIDS:
        return GRIDS[spec]
    path = Path(spec)
    if path.suffix == ".json":
        return read_json(path)
    raise ConfigError(f"unknown grid {spec!r}; use one of {sorted(GRIDS)} or a JSON file")


def cmd_train(args) -> int:
    grid = _grid(args.grid)
    try:
        configs = expand_grid(_base_config(args), grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model configuration: {exc}") from None
    dataset = load_dataset(args.dataset)
    gdir = Path(args.graph_dir)
    st = STAdjacency.from_json(read_json(gdir / "st_graph.json"))
    split = SplitPlan.from_json(read_json(gdir / "split.json"))
    graphs_doc = read_json(gdir / "graphs.json")
    if st.F != dataset.schema.num_features or st.T != dataset.schema.num_steps:
        raise ConfigError("ST graph dimensions do not match the dataset")
    h = config_hash({**_effective(args), "graph_hash": read_json(gdir / "st_graph.json")["meta"]["config_hash"]})

    A_hat = normalize_adjacency(st)
    result = train(dataset, split, A_hat, configs)
    ckpt = {
        "model_config": result.config.to_json(),
        "params": result.params.to_json(),
        "st_graph": st.to_json(),
        "method": graphs_doc["method"],
        "repr": graphs_doc["repr"],
        "cv_scores": [None if not np.isfinite(s) else s for s in result.cv_scores],
        "candidates": [c.to_json() for c in configs],
        "feature_names": list(dataset.schema.feature_names),
    }
    out = Path(args.out_dir)
    write_json(out / "checkpoint.json", ckpt, h)
    lines = [f"# stgcnn {__version__} config_hash={h}", "config,fold,epoch,train_loss,val_auc"]
    for r in result.log:
        val = repr(r["val_auc"]) if "val_auc" in r else ""
        lines.append(f"{r['config']},{r['fold']},{r['epoch']},{r['train_loss']!r},{val}")
    _atomic_write(out / "train_log.csv", "\n".join(lines) + "\n")
    print(f"selected config {result.config} (CV AUC {max(result.cv_scores):.4f}) -> {out / 'checkpoint.json'}")
    return 0


def load_checkpoint(path) -> tuple[ModelConfig, ModelParams, STAdjacency, dict]:
    doc = read_json(path)
    return (
        ModelConfig.from_json(doc["model_config"]),
        ModelParams.from_json(doc["params"]),
        STAdjacency.from_json(doc["st_graph"]),
        doc,
    )


def _eval_ids(dataset, split_path):
    if split_path:
        return SplitPlan.from_json(read_json(split_path)).test_ids
    return dataset.ids


def cmd_eval(args) -> int:
    config, params, st, doc = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    test = dataset.subset(_eval_ids(dataset, args.split))
    A_hat = normalize_adjacency(st)
    scores = predict_proba(params, config, A_hat, vectorize_dataset(test))
    report = confusion_at_half(scores, test.labels)
    h = config_hash({**_effective(args), "checkpoint_hash": doc["meta"]["config_hash"]})
    write_json(args.out, {"report": report.to_json(), "n_patients": test.num_patients}, h)
    print(json.dumps(report.to_json(), sort_keys=True))
    return 0


def cmd_aggregate(args) -> int:
    reports = [EvalReport(**read_json(p)["report"]) for p in args.reports]
    agg = aggregate_reports(reports)
    write_json(args.out, {"aggregate": agg, "n_reports": len(reports)}, config_hash(_effective(args)))
    for key, v in agg.items():
        print(f"{key}: {100 * v['mean']:.2f} +/- {100 * v['std']:.2f}")
    return 0


def cmd_explain(args) -> int:
    config, params, st, doc = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    subset = dataset.subset(_eval_ids(dataset, args.split))
    A_hat = normalize_adjacency(st)
    h = config_hash({**_effective(args), "checkpoint_hash": doc["meta"]["config_hash"]})
    header = f"stgcnn {__version__} config_hash={h}"

    records = importance_for_records(params, config, A_hat, subset.records, args.top_fraction)
    table = aggregate_by_class(records, dataset.schema.num_features, dataset.schema.num_steps)
    delta = delta_sensitivity(params, config, A_hat, args.near_zero)
    out = Path(args.out_dir)
    schema = dataset.schema
    _atomic_csv(out / "importance.csv", write_importance_csv, records, schema, header=header)
    _atomic_csv(out / "class_frequency.csv", write_class_frequency_csv, table, schema, header=header)
    _atomic_csv(out / "delta_sensitivity.csv", write_delta_csv, delta, schema, header=header)
    print(f"explained {len(records)} patients ({table.top_k} nodes each) -> {out}")
    return 0


# -- parser -----------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stgcnn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file whose keys provide defaults for this command's flags")
        sp.set_defaults(func=func)
        return sp

    s = command("synth", cmd_synth, "generate a synthetic cohort")
    s.add_argument("--spec", help="synthetic spec JSON")
    s.add_argument("--out", required=True)
    for key, typ in (("P", int), ("F_cont", int), ("F_bin", int), ("T", int), ("missing_rate", float),
                     ("positive_fraction", float), ("signal_strength", float), ("seed", int)):
        s.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)

    g = command("graph", cmd_graph, "estimate feature graphs and build the ST operator")
    g.add_argument("--dataset", required=True)
    g.add_argument("--method", default="correlation")
    g.add_argument("--repr", default="stg")
    g.add_argument("--threshold", type=float, default=0.975)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--target-edges", type=int, default=None)
    g.add_argument("--sweep", type=_floats, default=None, help="extra thresholds to report, e.g. " + ",".join(map(str, SWEEP)))
    g.add_argument("--test-fraction", type=float, default=0.3)
    g.add_argument("--folds", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)

    t = command("train", cmd_train, "cross-validated grid search and refit")
    t.add_argument("--dataset", required=True)
    t.add_argument("--graph-dir", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--grid", default="small", help="smoke | small | full | path to JSON grid")
    d = ModelConfig()
    t.add_argument("--variant", default=d.variant, choices=("gcnn1", "gcnn2"))
    t.add_argument("--layers", type=int, default=d.layers)
    t.add_argument("--hidden", type=int, default=d.hidden)
    t.add_argument("--poly-order", type=int, default=d.poly_order)
    t.add_argument("--alpha", type=float, default=d.leaky_alpha)
    t.add_argument("--dropout", type=float, default=d.dropout)
    t.add_argument("--lr", type=float, default=d.learning_rate)
    t.add_argument("--lr-decay", type=float, default=d.lr_decay)
    t.add_argument("--epochs", type=int, default=d.epochs)
    t.add_argument("--batch-size", type=int, default=d.batch_size)
    t.add_argument("--seed", type=int, default=d.seed)

    e = command("eval", cmd_eval, "evaluate a checkpoint on the test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", help="split JSON; test ids are evaluated (default: every patient)")
    e.add_argument("--out", required=True)

    a = command("aggregate", cmd_aggregate, "mean +/- std over several eval reports")
    a.add_argument("reports", nargs="+")
    a.add_argument("--out", required=True)

    x = command("explain", cmd_explain, "importance and delta-sensitivity exports")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--dataset", required=True)
    x.add_argument("--split", help="split JSON; test ids are explained (default: every patient)")
    x.add_argument("--top-fraction", type=float, default=0.05)
    x.add_argument("--near-zero", type=float, default=0.05)
    x.add_argument("--out-dir", required=True)
    return p


def _apply_config_file(parser: argparse.ArgumentParser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        defaults = read_json(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise ConfigError(f"unknown keys in config file: {unknown}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except ConfigError as exc:
        print(f"stgcnn: config error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, FileNotFoundError, TrainingDiverged, ValueError, KeyError) as exc:
        print(f"stgcnn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
