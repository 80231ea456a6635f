"""Compare the compiled rollout kernel with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--M 25] [--N 50] [--repeats 20]

Both backends are also checked for byte-identical output on every genome.
"""
import argparse
import time

import numpy as np

from empnca import kernels
from empnca.nca import N_PARAMS, Genome, new_seed_grid


def time_kernel(kernel, genomes, M, N, overwrite):
    seed = new_seed_grid(M)
    alive0, signal0 = seed.alive.astype(np.uint8), seed.signal
    outputs = []
    start = time.perf_counter()
    for g in genomes:
        outputs.append(kernel(g.weights, g.bias, alive0, signal0, N, overwrite, False))
    return (time.perf_counter() - start) / len(genomes), outputs


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--M", type=int, default=25)
    parser.add_argument("--N", type=int, default=50)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    genomes = [Genome.from_parameters(rng.uniform(-1, 1, N_PARAMS)) for _ in range(args.repeats)]
    print(f"active backend: {kernels.BACKEND}; M={args.M} N={args.N} genomes={args.repeats}")
    if kernels.BACKEND != "cython":
        print("compiled core not available; only the Python fallback can be timed")

    for overwrite in (True, False):
        rule = "overwrite_always" if overwrite else "literal_replicate"
        slow, slow_out = time_kernel(kernels.python_rollout_kernel, genomes, args.M, args.N, overwrite)
        line = f"{rule:>18}: python {slow * 1e3:9.3f} ms/rollout"
        if kernels.BACKEND == "cython":
            fast, fast_out = time_kernel(kernels.rollout_kernel, genomes, args.M, args.N, overwrite)
            same = all(a.tobytes() == b.tobytes() for fo, so in zip(fast_out, slow_out) for a, b in zip(fo, so))
            line += f" | cython {fast * 1e3:8.3f} ms/rollout | speedup {slow / fast:6.1f}x | identical={same}"
        print(line)


if __name__ == "__main__":
    main()
