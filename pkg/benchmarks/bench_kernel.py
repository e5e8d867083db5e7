"""Events per second of the compiled event loop against the pure-Python one.

    python3 benchmarks/bench_kernel.py --trades 2000 --repeat 3
"""

import argparse
import time

from slipsim import kernel
from slipsim.model import ModelConfig, run_simulation


def best_time(config, backend, repeat):
    best, events = float("inf"), 0
    for _ in range(repeat):
        t0 = time.perf_counter()
        run = run_simulation(config, backend=backend)
        best = min(best, time.perf_counter() - t0)
        events = run.events
    return best, events


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trades", type=int, default=2000)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    config = ModelConfig(n_agents=args.n, n_trades=args.trades, warmup_trades=0, seed=args.seed)
    backends = [b for b in ("compiled", "python") if b in kernel.BACKENDS]
    rates = {}
    print(f"N={args.n}, {args.trades} trades, best of {args.repeat}")
    for b in backends:
        seconds, events = best_time(config, b, args.repeat)
        rates[b] = events / seconds
        print(f"{b:>9}: {seconds:8.3f} s  {events:>11} events  {rates[b]:14,.0f} events/s")
    if len(rates) == 2:
        print(f"  speedup: {rates['compiled'] / rates['python']:.1f}x")
    else:
        print("  compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
