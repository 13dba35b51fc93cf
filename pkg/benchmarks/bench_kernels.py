"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

from rcip import _kernels
from rcip.hallway import WorldConfig, generate_dataset
from rcip.dataset import PackedDataset


def cases():
    data = PackedDataset.from_records(generate_dataset(WorldConfig.preset("medium", seed=0), 2000))
    args = (data.logits, data.n_intents, data.amap, data.num_actions, data.true_intent)
    yield f"step_stats ({data.logits.shape[0]} steps)", lambda: _kernels.step_stats(*args, 1.0)
    for n in (400, 10_000, 100_000):
        yield f"binom_logcdf_table n={n}", lambda n=n: _kernels.binom_logcdf_table(n, 0.15)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _kernels.available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; timing the numpy backend only")
    previous = _kernels.backend_name()
    print(f"{'case':<34}" + "".join(f"{b:>14}" for b in backends) + ("    speedup" if len(backends) == 2 else ""))
    try:
        for name, fn in cases():
            times = []
            for b in backends:
                _kernels.use_backend(b)
                fn()  # warm-up
                number = 10
                times.append(min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number)
            row = f"{name:<34}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times)
            if len(times) == 2:
                row += f"{times[1] / times[0]:>10.1f}x"
            print(row)
    finally:
        _kernels.use_backend(previous)


if __name__ == "__main__":
    main()
