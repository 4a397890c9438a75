"""Standard synthetic experiment: full model, ablations and baselines over seeds.

    python scripts/run_standard.py --seeds 0 1 2 3 4 --out runs/standard.json
"""

import argparse
import json
import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from metaqa.evaluation import evaluate, run_baseline
from metaqa.experiments import prefix_sample
from metaqa.simulator import generate_benchmark, standard_benchmark
from metaqa.training import TrainConfig, train

MINORITY = "film"


def run(seeds, train_size, bench_seed):
    splits = generate_benchmark(standard_benchmark(), seed=bench_seed)
    test = splits["test"]
    base = TrainConfig()
    variants = {
        "full": {},
        "no_conf_emb": {"disable_conf_emb": True},
        "no_agsen_loss": {"disable_agsen_loss": True},
        "router": {"alpha2": 0.0},
    }
    conf = run_baseline("conf_argmax", test)
    oracle = run_baseline("oracle", test)
    rows = []
    for seed in seeds:
        tr = prefix_sample(splits["train"], train_size, seed)
        row = {"seed": seed}
        for name, kw in variants.items():
            t0 = time.perf_counter()
            ckpt = train(tr, None, replace(base, seed=seed, **kw))
            if name == "router":
                rep = run_baseline("router_only", test, router=ckpt)
            else:
                rep = evaluate(ckpt, test)
            row[name] = {
                "acc": rep.selection_accuracy,
                "minority": rep.metrics.per_dataset[MINORITY].accuracy,
                "seconds": time.perf_counter() - t0,
            }
            logging.info("seed %d %s %.4f", seed, name, rep.selection_accuracy)
        rows.append(row)
    return {
        "conf_argmax": conf.selection_accuracy,
        "oracle": oracle.selection_accuracy,
        "runs": rows,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--train-size", type=int, default=10_000)
    ap.add_argument("--bench-seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    res = run(args.seeds, args.train_size, args.bench_seed)
    for name in ("full", "no_conf_emb", "no_agsen_loss", "router"):
        accs = [r[name]["acc"] for r in res["runs"]]
        mins = [r[name]["minority"] for r in res["runs"]]
        print(f"{name:14s} acc {np.mean(accs):.4f} ± {np.std(accs):.4f}   minority {np.mean(mins):.4f}")
    print(f"conf_argmax    acc {res['conf_argmax']:.4f}   oracle {res['oracle']:.4f}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(res, indent=2) + "\n")


if __name__ == "__main__":
    main()
