"""Data-efficiency sweep on the standard synthetic benchmark.

    python scripts/run_sweep.py --seed 0 --out runs/sweep.json
"""

import argparse
import json
import logging
from pathlib import Path

from metaqa.experiments import efficiency_sweep
from metaqa.simulator import generate_benchmark, standard_benchmark
from metaqa.training import TrainConfig

SIZES = (1_000, 2_000, 5_000, 10_000, 20_000)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bench-seed", type=int, default=0)
    ap.add_argument("--sizes", type=int, nargs="+", default=list(SIZES))
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    splits = generate_benchmark(standard_benchmark(), seed=args.bench_seed)
    rows = efficiency_sweep(splits["train"], splits["test"], args.sizes, TrainConfig(seed=args.seed))
    for r in rows:
        print(f"{r.size:6d}  acc {r.selection_accuracy:.4f}  score {r.score:.4f}  steps {r.steps}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps([r.to_dict() for r in rows], indent=2) + "\n")


if __name__ == "__main__":
    main()
