"""Compare the compiled and pure-Python kernel backends.

Times each kernel on a synthetic graph, then one full training epoch of
the buffered model, under every available backend::

    python benchmarks/bench_kernels.py --nodes 20000 --degree 10 --width 64
"""
import argparse
import time

import numpy as np

from buffgraph import kernels
from buffgraph.buffer import augment, normalized_propagation_matrix
from buffgraph.graph import split_random
from buffgraph.synth import SynthConfig, generate
from buffgraph.train import TrainConfig, fit


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--nodes", type=int, default=20000)
    parser.add_argument("--degree", type=float, default=10.0)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=5)
    args = parser.parse_args()

    n = args.nodes
    p = args.degree / n
    graph = generate(SynthConfig([n // 2, n - n // 2], p_in=p, p_out=p, feature_dim=32, seed=0))
    aug = augment(graph)
    op = normalized_propagation_matrix(aug)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((op.n, args.width))
    src, dst = graph.edges()
    z = rng.standard_normal((graph.num_nodes, args.width))
    coef = rng.standard_normal(len(src))
    split = split_random(graph, seed=0)
    config = TrainConfig(hidden=args.width, pretrain_epochs=0, max_epochs=args.epochs,
                         patience=args.epochs)
    print(f"{graph.num_nodes} nodes, {graph.num_edges} edges, augmented operator "
          f"{op.n} rows / {op.nnz} entries, width {args.width}, threads {kernels.num_threads()}")

    results = {}
    for name in kernels.available_backends():
        previous = kernels.set_backend(name)
        try:
            row = {
                "spmm": best_of(lambda: op @ x, args.repeats),
                "edge_l1": best_of(lambda: kernels.edge_l1(z, src, dst), args.repeats),
                "edge_l1_backward": best_of(lambda: kernels.edge_l1_backward(z, src, dst, coef), args.repeats),
            }
            _, _, log = fit(graph, split, config)
            row["epoch"] = float(np.median([r.train_time + r.eval_time for r in log.records]))
        finally:
            kernels.set_backend(previous)
        results[name] = row

    names = list(results)
    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n in names)
          + ("     speedup" if len(names) == 2 else ""))
    for key in results[names[0]]:
        cells = "".join(f"{results[n][key] * 1e3:>10.2f}ms" for n in names)
        speedup = (f"{results['python'][key] / results['cython'][key]:>11.2f}x"
                   if len(names) == 2 else "")
        print(f"{key:<18}{cells}{speedup}")


if __name__ == "__main__":
    main()
