"""Command-line entry point: ``metaqa <subcommand> ...``.

Exit codes: 0 success, 1 usage/config error, 2 data/format error,
3 numeric failure (gradient check over tolerance, non-finite loss).
Logs go to stderr; results go to the files named by ``--out``/``--report``
(or to stdout as JSON when a report path is optional and omitted).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_predictions
from .errors import ConfigError, DataError, MetaQAError, NumericError
from .evaluation import STRATEGIES, evaluate, run_baseline
from .experiments import ToyCheckConfig, compare_runs, efficiency_sweep, prefix_sample, toy_gradcheck
from .simulator import BenchmarkSpec, generate_benchmark
from .training import TrainConfig, train

log = logging.getLogger("metaqa")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "METAQA_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# -- helpers ------------------------------------------------------------------


def _read_json(path: str | None, what: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{p}: expected a JSON object")
    return obj


def resolve_seed(flag: int | None, config: dict) -> int:
    """Flag, then config file, then $METAQA_SEED, then 0."""
    if flag is not None:
        return flag
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _split_path(data: str, split: str) -> Path:
    p = Path(data)
    if p.is_dir():
        p = p / f"{split}.jsonl"
    if not p.is_file():
        raise DataError(f"data file not found: {p}")
    return p


def _load(data: str, split: str) -> Dataset:
    return load_predictions(_split_path(data, split))


def _load_optional(data: str, split: str) -> Dataset | None:
    p = Path(data)
    if p.is_dir() and (p / f"{split}.jsonl").is_file():
        return load_predictions(p / f"{split}.jsonl")
    return None


def _csv(text: str | None) -> list[str]:
    return [t.strip() for t in (text or "").split(",") if t.strip()]


def _sizes(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv(text)]
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated integers, got {text!r}") from None


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")
    log.info("wrote %s", p)


def _train_config(args) -> TrainConfig:
    raw = _read_json(args.config, "train config")
    cfg = TrainConfig.from_dict({k: v for k, v in raw.items() if k != "seed"})
    overrides = {"seed": resolve_seed(args.seed, raw)}
    if getattr(args, "disable_conf_emb", False):
        overrides["disable_conf_emb"] = True
    if getattr(args, "disable_agsen_loss", False):
        overrides["disable_agsen_loss"] = True
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    return replace(cfg, **overrides)


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    raw = _read_json(args.spec, "benchmark spec")
    spec = BenchmarkSpec.from_dict(raw)
    seed = resolve_seed(args.seed, raw)
    splits = generate_benchmark(spec, seed=seed, out_dir=args.out)
    for name, ds in splits.items():
        log.info("%s: %d examples", name, len(ds))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _train_config(args)
    train_set = _load(args.data, "train")
    dev_set = _load_optional(args.data, "dev")
    if args.train_size is not None:
        train_set = prefix_sample(train_set, args.train_size, cfg.seed)
    log.info("training on %d examples (seed %d)", len(train_set), cfg.seed)
    ckpt = train(train_set, dev_set, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out)
    log.info("wrote %s after %d steps", out, ckpt.metadata["steps"])
    return EXIT_OK


def cmd_eval(args) -> int:
    test = _load(args.data, args.split)
    ckpt = load_checkpoint(args.ckpt)
    report = evaluate(ckpt, test, ablated=_csv(args.ablate), workers=args.workers)
    log.info("selection accuracy %.4f", report.selection_accuracy)
    _write_json(report.to_dict(include_timing=args.timing), args.report)
    return EXIT_OK


def cmd_ablate_sweep(args) -> int:
    test = _load(args.data, args.split)
    ckpt = load_checkpoint(args.ckpt)
    rows = {"none": evaluate(ckpt, test, workers=args.workers).to_dict()}
    for agent in ckpt.agents:
        rep = evaluate(ckpt, test, ablated=[agent], workers=args.workers)
        log.info("without %s: selection accuracy %.4f", agent, rep.selection_accuracy)
        rows[agent] = rep.to_dict()
    _write_json({"checkpoint": ckpt.digest(), "runs": rows}, args.report)
    return EXIT_OK


def cmd_baselines(args) -> int:
    test = _load(args.data, args.split)
    router = load_checkpoint(args.ckpt) if args.ckpt else None
    ablated = _csv(args.ablate)
    runs = [(s, 0) for s in STRATEGIES if s != "fixed_agent" and (s != "router_only" or router)]
    runs += [("fixed_agent", j) for j, a in enumerate(test.agents) if a not in ablated]
    out = {}
    for strategy, slot in runs:
        rep = run_baseline(strategy, test, router=router, slot=slot, ablated=ablated)
        log.info("%s: selection accuracy %.4f", rep.label, rep.selection_accuracy)
        out[rep.label] = rep.to_dict()
    _write_json(out, args.report)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    raw = _read_json(args.config, "gradcheck config")
    cfg = ToyCheckConfig.from_dict({**raw, "seed": resolve_seed(args.seed, raw)})
    report = toy_gradcheck(cfg)
    summary = report.summary()
    log.info("gradcheck: %s", summary)
    if args.report:
        _write_json({**summary, "worst": [e.__dict__ for e in report.worst(10)]}, args.report)
    if not report.passed:
        log.error("gradient check failed: max relative error %.3g > %.3g",
                  report.max_rel_error, cfg.tol)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _train_config(args)
    train_set = _load(args.data, "train")
    test = _load(args.data, args.split)
    rows = efficiency_sweep(train_set, test, _sizes(args.sizes), cfg)
    _write_json({"seed": cfg.seed, "rows": [r.to_dict() for r in rows]}, args.report)
    return EXIT_OK


def _score_of(path: str, metric: str) -> float:
    rep = _read_json(path, "report")
    node = rep
    for key in metric.split("."):
        if not isinstance(node, dict) or key not in node:
            raise DataError(f"{path}: report has no field {metric!r}")
        node = node[key]
    return float(node)


def cmd_compare(args) -> int:
    a = [_score_of(p, args.metric) for p in _csv(args.a)]
    b = [_score_of(p, args.metric) for p in _csv(args.b)]
    res = compare_runs(a, b, alpha=args.alpha)
    log.info("t=%.4f p=%.4g significant=%s", res.t, res.p, res.significant)
    _write_json({**res.to_dict(), "metric": args.metric, "a": a, "b": b}, args.report)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metaqa", description="Answer selection over multiple QA agents.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("simulate", cmd_simulate, "generate a synthetic benchmark")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)

    sp = add("train", cmd_train, "train a selector")
    sp.add_argument("--data", required=True, help="directory with train.jsonl (and dev.jsonl)")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--train-size", type=int, help="seeded sample of the training split")
    sp.add_argument("--disable-conf-emb", action="store_true")
    sp.add_argument("--disable-agsen-loss", action="store_true")

    for name, fn, help_ in (("eval", cmd_eval, "evaluate a checkpoint"),
                            ("ablate-sweep", cmd_ablate_sweep, "leave-one-agent-out evaluation")):
        sp = add(name, fn, help_)
        sp.add_argument("--ckpt", required=True)
        sp.add_argument("--data", required=True)
        sp.add_argument("--split", default="test")
        sp.add_argument("--report")
        sp.add_argument("--workers", type=int, default=1)
        if name == "eval":
            sp.add_argument("--ablate", help="comma-separated agent ids to null")
            sp.add_argument("--timing", action="store_true", help="include wall time in the report")

    sp = add("baselines", cmd_baselines, "run baseline selectors")
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--ckpt", help="router checkpoint for router_only")
    sp.add_argument("--ablate")
    sp.add_argument("--report")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of the joint loss")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--report")

    sp = add("sweep", cmd_sweep, "data-efficiency sweep over training sizes")
    sp.add_argument("--data", required=True)
    sp.add_argument("--sizes", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--report")

    sp = add("compare", cmd_compare, "Welch t-test between two groups of reports")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--metric", default="selection_accuracy", help="dotted path into the report")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--report")
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    if getattr(args, "workers", 1) < 1:
        log.error("--workers must be >= 1")
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except NumericError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except MetaQAError as exc:
        # remaining contract/assembly errors come from malformed inputs
        log.error("%s", exc)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
