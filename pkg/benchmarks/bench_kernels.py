"""Time the compiled kernels against the pure numpy fallback.

Run from the repo root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 10,20,40 --points 50,100 --repeat 5
"""

import argparse
import time

import numpy as np

from testsim.kernels import backends


def transport_instance(rng, m, n):
    cost = rng.random((m, n))
    supply = rng.random(m) + 0.1
    demand = rng.random(n) + 0.1
    supply /= supply.sum()
    demand /= demand.sum()
    return cost, supply, demand


def distance_instance(rng, n):
    d = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    d[iu] = rng.random(len(iu[0]))
    return d + d.T


def best_of(repeat, fn, *args):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="10,20,40",
                    help="square transport sizes, comma separated")
    ap.add_argument("--points", default="50,100,200",
                    help="HAC point counts, comma separated")
    ap.add_argument("--batch", type=int, default=200,
                    help="transport instances per size")
    ap.add_argument("--repeat", type=int, default=3, help="best-of repeats")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    impls = backends()
    names = sorted(impls)
    print("backends:", ", ".join(names))
    if len(names) == 1:
        print("note: compiled extension not importable, timing fallback only")

    rng = np.random.default_rng(args.seed)
    header = f"{'kernel':<26}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}"
    print("\n" + header)
    print("-" * len(header))

    for m in (int(s) for s in args.sizes.split(",")):
        batch = [transport_instance(rng, m, m) for _ in range(args.batch)]

        def run_batch(impl):
            return [impl.transport_solve(c, s, d) for c, s, d in batch]

        times, results = {}, {}
        for name in names:
            times[name], results[name] = best_of(args.repeat, run_batch, impls[name])
        row = f"transport {m}x{m} x{args.batch:<5}"
        print(f"{row:<26}" + "".join(f"{times[n]:>11.4f}s" for n in names)
              + speedup(times, names))
        check_close(results, names, f"transport {m}x{m}")

    for n_pts in (int(s) for s in args.points.split(",")):
        dm = distance_instance(rng, n_pts)

        def run_hac(impl):
            return impl.hac_merges(dm.copy())

        times, results = {}, {}
        for name in names:
            times[name], results[name] = best_of(args.repeat, run_hac, impls[name])
        row = f"hac {n_pts} points"
        print(f"{row:<26}" + "".join(f"{times[n]:>11.4f}s" for n in names)
              + speedup(times, names))
        if len(names) == 2:
            a, b = results[names[0]], results[names[1]]
            same = all(np.array_equal(x, y) for x, y in zip(a, b))
            if not same:
                raise SystemExit(f"hac backends disagree at {n_pts} points")


def speedup(times, names):
    if len(names) != 2:
        return ""
    slow, fast = max(times.values()), min(times.values())
    return f"{slow / fast:>9.1f}x"


def check_close(results, names, label):
    if len(names) != 2:
        return
    a = np.array(results[names[0]])
    b = np.array(results[names[1]])
    worst = float(np.abs(a - b).max())
    if worst > 1e-9:
        raise SystemExit(f"{label}: backends disagree by {worst:.2e}")


if __name__ == "__main__":
    main()
