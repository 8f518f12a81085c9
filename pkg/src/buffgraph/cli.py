"""Command-line entry point: ``buffgraph <command> [flags]``.

Every command writes its files into ``--out`` and prints a one-line JSON
summary. Flags may also come from a ``--config`` file of ``key=value``
lines (``#`` starts a comment); explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from buffgraph import heterophily, kernels, metrics, spectral, synth
from buffgraph.buffer import augment
from buffgraph.graph import (
    load_graph,
    load_split,
    make_imbalanced,
    save_split,
    split_random,
    write_graph,
)
from buffgraph.nn import load_checkpoint, save_checkpoint
from buffgraph.train import TrainConfig, evaluate, fit

COMMANDS = ("synth", "augment", "train", "eval", "spectral", "report-heterophily", "bench")

logger = logging.getLogger("buffgraph")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _optional_float(text: str):
    return None if text.lower() in ("", "none") else float(text)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--alpha", type=float, default=d.alpha, help="buffer feature mixup coefficient")
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="heterophily loss weight")
    p.add_argument("--margin", type=float, default=d.margin, help="heterophily loss margin")
    p.add_argument("--lr", type=float, default=d.lr, help="Adam learning rate")
    p.add_argument("--hidden", type=int, default=d.hidden, help="hidden width")
    p.add_argument("--num-hidden", type=int, default=d.num_hidden, help="number of hidden layers")
    p.add_argument("--dropout", type=float, default=d.dropout, help="dropout rate")
    p.add_argument("--max-epochs", type=int, default=d.max_epochs, help="main-stage epoch cap")
    p.add_argument("--patience", type=int, default=d.patience, help="early-stopping patience")
    p.add_argument("--pretrain-epochs", type=int, default=d.pretrain_epochs, help="vanilla pre-training epochs")
    p.add_argument("--recompute-interval", type=int, default=d.recompute_interval,
                   help="epochs between gate refreshes")
    p.add_argument("--loss-mode", choices=("plain", "reweight", "balanced"), default=d.loss_mode,
                   help="classification loss")
    p.add_argument("--fixed-gate", type=_optional_float, default=d.fixed_gate,
                   help="constant gate for every edge (none = score-driven gates)")
    p.add_argument("--seed", type=int, default=d.seed, help="random seed")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="buffgraph", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--config", type=Path, default=None, help="key=value config file")
        return p

    p = command("synth", "generate a planted-partition dataset directory")
    p.add_argument("--classes", type=int, default=None, help="number of classes (checked against --sizes)")
    p.add_argument("--sizes", type=_ints, default=[100, 100], help="comma-separated class sizes")
    p.add_argument("--p-in", type=float, default=0.05, help="intra-class edge probability")
    p.add_argument("--p-out", type=float, default=0.01, help="inter-class edge probability")
    p.add_argument("--feature-dim", type=int, default=16, help="feature dimension")
    p.add_argument("--mean-scale", type=float, default=1.0, help="class mean magnitude")
    p.add_argument("--noise", type=float, default=1.0, help="feature noise standard deviation")
    p.add_argument("--seed", type=int, default=0, help="random seed")

    p = command("augment", "write the buffer-augmented graph")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--alpha", type=float, default=0.5, help="buffer feature mixup coefficient")
    p.add_argument("--gates", type=Path, default=None, help="gates.csv to apply (default all 0.5)")

    p = command("train", "two-stage buffered training")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--masks", type=Path, default=None, help="masks.json to use instead of a random split")
    p.add_argument("--ratios", type=_floats, default=[0.6, 0.2, 0.2], help="train,val,test ratios")
    p.add_argument("--rho", type=float, default=1.0, help="train imbalance ratio (1 = natural)")
    _add_train_flags(p)

    p = command("eval", "evaluate a saved model")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--model", type=Path, required=True, help="model checkpoint")
    p.add_argument("--masks", type=Path, required=True, help="masks.json")
    p.add_argument("--gates", type=Path, default=None, help="gates.csv (omit for a plain GCN)")
    p.add_argument("--alpha", type=float, default=0.5, help="buffer feature mixup coefficient")
    p.add_argument("--mask", choices=("train", "val", "test"), default="test", help="mask to score")

    p = command("spectral", "Laplacian eigenvalue shift from buffer insertion")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--alpha", type=float, default=0.5, help="buffer feature mixup coefficient")
    p.add_argument("--gates", type=Path, default=None, help="gates.csv (overrides --gate)")
    p.add_argument("--gate", type=float, default=0.5, help="constant gate for every edge")

    p = command("report-heterophily", "class heterophily and size table")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")

    p = command("bench", "per-epoch wall time on growing synthetic graphs")
    p.add_argument("--sizes", type=_ints, default=[5000, 10000, 15000, 20000], help="node counts")
    p.add_argument("--epochs", type=int, default=20, help="timed epochs per size")
    p.add_argument("--hidden", type=int, default=64, help="hidden width")
    p.add_argument("--avg-degree", type=float, default=10.0, help="expected node degree")
    p.add_argument("--homophily", type=float, default=0.5, help="expected share of intra-class edges")
    p.add_argument("--feature-dim", type=int, default=32, help="feature dimension")
    p.add_argument("--backend", choices=("auto", "cython", "python"), default="auto",
                   help="kernel backend (auto = compiled when built)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    return parser


def read_config(path: Path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def _subparser(parser, name) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # locate --config before full parsing: required flags may live in the file
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    config_path = pre.parse_known_args(argv[1:])[0].config
    if not argv or argv[0] not in COMMANDS or config_path is None:
        return parser.parse_args(argv)
    args = argparse.Namespace(command=argv[0], config=config_path)
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    aliases = {"lambda": "lam"}
    defaults = {}
    for key, value in read_config(args.config).items():
        dest = aliases.get(key, key.replace("-", "_"))
        if dest not in actions:
            raise ConfigError(f"{args.config}: unknown key {key!r} for command {args.command}")
        action = actions[dest]
        converted = action.type(value) if action.type is not None else value
        if action.choices is not None and converted not in action.choices:
            raise ConfigError(f"{args.config}: {key} must be one of {list(action.choices)}")
        defaults[dest] = converted
    sub.set_defaults(**defaults)
    for action in sub._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


def _train_config(args) -> TrainConfig:
    return TrainConfig(**{k: getattr(args, k) for k in TrainConfig.field_names()})


def write_gates(path, aug) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["edge", "src", "tar", "gate"])
        for e, (u, v, g) in enumerate(zip(aug.src.tolist(), aug.dst.tolist(), aug.gates.tolist())):
            writer.writerow([e, u, v, repr(g)])


def read_gates(path, aug) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != aug.buffer_count:
        raise ValueError(f"{path}: {len(rows)} gates for {aug.buffer_count} edges")
    gates = np.empty(len(rows))
    for row in rows:
        e = int(row["edge"])
        if (int(row["src"]), int(row["tar"])) != (int(aug.src[e]), int(aug.dst[e])):
            raise ValueError(f"{path}: edge {e} endpoints do not match the dataset")
        gates[e] = float(row["gate"])
    return gates


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_synth(args) -> dict:
    if args.classes is not None and args.classes != len(args.sizes):
        raise ConfigError(f"--classes {args.classes} disagrees with {len(args.sizes)} --sizes")
    config = synth.SynthConfig(args.sizes, args.p_in, args.p_out, args.feature_dim,
                               args.mean_scale, args.noise, args.seed)
    graph = synth.write_dataset(config, args.out)
    return {"nodes": graph.num_nodes, "edges": graph.num_edges, "classes": graph.num_classes}


def cmd_augment(args) -> dict:
    graph = load_graph(args.data)
    aug = augment(graph, args.alpha)
    if args.gates is not None:
        aug.set_gates(read_gates(args.gates, aug))
    write_graph(aug.as_graph(), args.out)
    _write_json(args.out / "edge_map.json", aug.edge_map())
    write_gates(args.out / "gates.csv", aug)
    return {"nodes": aug.num_nodes, "buffers": aug.buffer_count, "links": 3 * aug.buffer_count}


def cmd_train(args) -> dict:
    config = _train_config(args)
    graph = load_graph(args.data)
    if args.masks is not None:
        split = load_split(args.masks)
    else:
        split = split_random(graph, args.ratios, seed=config.seed)
    if args.rho > 1:
        split = make_imbalanced(split, graph, args.rho, seed=config.seed)
    model, aug, log = fit(graph, split, config)
    out = args.out
    save_split(split, out / "masks.json")
    save_checkpoint(model, out / "best_model.bin")
    write_gates(out / "gates.csv", aug)
    log.write_csv(out / "train_log.csv")
    test = evaluate(model, aug, split, "test")
    val = evaluate(model, aug, split, "val")
    (out / "class_report.csv").write_text(metrics.class_report_csv(test))
    _write_json(out / "metrics.json", {
        "test": test.to_json(),
        "val": val.to_json(),
        "best_epoch": log.best_epoch,
        "epochs_run": len(log.records),
        "config": vars(config),
        "rho": args.rho,
    })
    return {"best_epoch": log.best_epoch, "test_acc": test.acc, "test_bacc": test.bacc,
            "test_f1": test.macro_f1}


def cmd_eval(args) -> dict:
    graph = load_graph(args.data)
    split = load_split(args.masks)
    model = load_checkpoint(args.model)
    target = graph
    if args.gates is not None:
        target = augment(graph, args.alpha)
        target.set_gates(read_gates(args.gates, target))
    report = evaluate(model, target, split, args.mask)
    _write_json(args.out / "metrics.json", report.to_json())
    (args.out / "class_report.csv").write_text(metrics.class_report_csv(report))
    return {"acc": report.acc, "bacc": report.bacc, "macro_f1": report.macro_f1}


def cmd_spectral(args) -> dict:
    graph = load_graph(args.data)
    gates = np.full(graph.num_edges, args.gate)
    if args.gates is not None:
        gates = read_gates(args.gates, augment(graph, args.alpha))
    report = spectral.eigenvalue_shift(graph, args.alpha, gates)
    (args.out / "spectrum_report.json").write_text(report.dumps() + "\n")
    return {"nodes": graph.num_nodes, "edges": graph.num_edges,
            "mean_delta": float(report.delta.mean()) if len(report.delta) else 0.0}


def cmd_report_heterophily(args) -> dict:
    graph = load_graph(args.data)
    scores = heterophily.class_scores(graph)
    sizes = np.bincount(graph.labels[graph.labels >= 0], minlength=graph.num_classes)
    order = sorted(range(graph.num_classes), key=lambda c: (-sizes[c], c))
    with open(args.out / "class_heterophily.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "size", "heterophily"])
        for c in order:
            writer.writerow([c, int(sizes[c]), repr(float(scores[c]))])
    return {"classes": graph.num_classes}


def bench_rows(sizes, epochs=20, hidden=64, avg_degree=10.0, homophily=0.5, feature_dim=32,
               seed=0, backend=None):
    """Mean per-epoch train and eval time of buffered training per graph size."""
    previous = kernels.set_backend(backend) if backend and backend != "auto" else None
    rows = []
    try:
        for n in sizes:
            shares = np.array([0.4, 0.4, 0.1, 0.1])
            class_sizes = np.maximum(np.round(shares * n).astype(int), 3)
            class_sizes[0] += n - class_sizes.sum()
            intra_pairs = sum(s * (s - 1) / 2 for s in class_sizes)
            inter_pairs = n * (n - 1) / 2 - intra_pairs
            n_edges = avg_degree * n / 2
            config = synth.SynthConfig(
                class_sizes.tolist(),
                p_in=min(1.0, homophily * n_edges / intra_pairs),
                p_out=min(1.0, (1 - homophily) * n_edges / inter_pairs),
                feature_dim=feature_dim, feature_noise=1.0, seed=seed,
            )
            graph = synth.generate(config)
            split = split_random(graph, seed=seed)
            tc = TrainConfig(hidden=hidden, max_epochs=epochs, patience=epochs, pretrain_epochs=0,
                             seed=seed)
            _, aug, log = fit(graph, split, tc)
            rows.append({
                "nodes": graph.num_nodes,
                "edges": graph.num_edges,
                "augmented_nodes": aug.num_nodes,
                "epochs": len(log.records),
                "train_epoch_s": float(np.mean([r.train_time for r in log.records])),
                "eval_epoch_s": float(np.mean([r.eval_time for r in log.records])),
            })
    finally:
        if previous is not None:
            kernels.set_backend(previous)
    return rows


def cmd_bench(args) -> dict:
    if list(args.sizes) != sorted(args.sizes):
        raise ConfigError("--sizes must be ascending")
    rows = bench_rows(args.sizes, args.epochs, args.hidden, args.avg_degree, args.homophily,
                      args.feature_dim, args.seed, args.backend)
    with open(args.out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return {"rows": len(rows), "backend": kernels.get_backend() if args.backend == "auto" else args.backend}


HANDLERS = {
    "synth": cmd_synth,
    "augment": cmd_augment,
    "train": cmd_train,
    "eval": cmd_eval,
    "spectral": cmd_spectral,
    "report-heterophily": cmd_report_heterophily,
    "bench": cmd_bench,
}


def _failing_module(exc: BaseException) -> str:
    module = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("buffgraph."):
            module = name.split(".", 1)[1]
    return module


def run(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error [cli]: {exc}", file=sys.stderr)
        return 2
    from threadpoolctl import threadpool_limits

    try:
        args.out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=max(1, kernels.num_threads())):
            summary = HANDLERS[args.command](args)
    except Exception as exc:  # surfaced as a diagnostic, not a traceback
        print(f"error [{_failing_module(exc)}]: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "out": str(args.out), **summary}, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
