"""Command-line runner: ``gvbridge <verb> [--config FILE] [--set key=value ...] [--out DIR]``.

Exit status: 0 ok, 2 bad config or input data, 3 training aborted,
4 some ablation runs failed, 5 gradient check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import RunConfig, load_config
from .data import write_csv
from .errors import ConfigError, DataError, DimensionError, TrainingAborted
from .gradcheck import DEFAULT_TOLERANCE, run_gradcheck
from .nn import load_checkpoint
from .stats import RunResult, aggregate_seeds, bridge_stats, export_features
from .trainer import MetricsRecord, build_model, evaluate, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_PARTIAL = 4
EXIT_GRADCHECK = 5

log = logging.getLogger("gvbridge")


def _parse_list(text: str | None, cast):
    if text is None:
        return None
    try:
        return tuple(cast(p.strip()) for p in text.split(",") if p.strip())
    except ValueError as e:
        raise ConfigError(f"bad list {text!r}: {e}") from None


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config, args.set)
    seeds = _parse_list(getattr(args, "seeds", None), int)
    variants = _parse_list(getattr(args, "variants", None), str)
    if seeds is not None:
        cfg = cfg.replace(**{"ablate.seeds": seeds})
    if variants is not None:
        cfg = cfg.replace(**{"ablate.variants": variants})
    return cfg.validate()


def _base_dir(args) -> Path:
    return Path(args.config).parent if args.config else Path(".")


def _write_echo(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config-echo.ini").write_text(cfg.to_ini())


def _print_record(rec: MetricsRecord) -> None:
    acc_t = "-" if rec.acc_target is None else f"{rec.acc_target:.4f}"
    log.info(
        "iter %5d  cls %.4f  adv %.4f  l_g %.5f  l_d %.5f  acc_s %.4f  acc_t %s",
        rec.iter, rec.l_cls, rec.l_adv, rec.l_g, rec.l_d, rec.acc_source, acc_t,
    )


def run_train(args) -> int:
    cfg = _resolve(args)
    out = Path(args.out)
    _write_echo(cfg, out)
    (source, target), eval_data = cfg.load_data(_base_dir(args))
    tc = cfg.train_config(metrics_path=str(out / "metrics.jsonl"), checkpoint_path=str(out / "checkpoint.json"))
    try:
        result = train(tc, source, target, on_record=_print_record, eval_data=eval_data)
    except TrainingAborted as e:
        (out / "abort.json").write_text(json.dumps(e.record, indent=2) + "\n")
        print(f"training aborted: {e}", file=sys.stderr)
        return EXIT_ABORT
    last = result.records[-1]
    print(f"done: {tc.variant} seed {tc.seed}, target accuracy {last.acc_target}, outputs in {out}")
    return EXIT_OK


def _load_trained(args, cfg: RunConfig):
    (source, target), (ev_s, ev_t) = cfg.load_data(_base_dir(args))
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(args.out) / "checkpoint.json"
    try:
        params, meta = load_checkpoint(ckpt)
    except OSError as e:
        raise ConfigError(f"cannot read checkpoint {ckpt}: {e.strerror or e}") from None
    trained_as = meta.get("variant")
    if trained_as is not None and trained_as != cfg["variant"]:
        log.info("checkpoint was trained as %s, not %s; using %s", trained_as, cfg["variant"], trained_as)
        cfg = cfg.replace(variant=trained_as)
    model = build_model(cfg.train_config(), source.dim, source.num_classes)
    try:
        model = model.load_parameters(params)
    except DimensionError as e:
        raise ConfigError(f"checkpoint {ckpt} does not match the configured model: {e}") from None
    return cfg, model, (ev_s, ev_t)


def run_eval(args) -> int:
    cfg = _resolve(args)
    cfg, model, (ev_s, ev_t) = _load_trained(args, cfg)
    variant = cfg.variant()
    acc_s, _ = evaluate(model, ev_s, variant)
    acc_t, _ = evaluate(model, ev_t, variant)
    out = Path(args.out)
    _write_echo(cfg, out)
    doc = {"variant": variant.name, "acc_source": acc_s, "acc_target": acc_t,
           "num_source": len(ev_s), "num_target": len(ev_t)}
    (out / "eval.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"source accuracy {acc_s}, target accuracy {acc_t}")
    return EXIT_OK


def run_stats(args) -> int:
    cfg = _resolve(args)
    cfg, model, (ev_s, ev_t) = _load_trained(args, cfg)
    variant = cfg.variant()
    out = Path(args.out)
    _write_echo(cfg, out)
    export_features(model, [ev_s, ev_t], variant, out / "features.csv")
    _, records = evaluate(model, ev_t, variant)
    if not ev_t.labeled:
        print("target data has no labels; wrote features.csv only")
        return EXIT_OK
    report = bridge_stats(records, key=args.key)
    (out / "bridge-stats.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    text = report.to_text()
    (out / "bridge-stats.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _ablation_run(values: dict, variant: str, seed: int, run_dir: str, base_dir: str) -> RunResult:
    cfg = RunConfig(values).replace(variant=variant, seed=seed)
    out = Path(run_dir)
    try:
        cfg.validate()
        _write_echo(cfg, out)
        (source, target), eval_data = cfg.load_data(base_dir)
        tc = cfg.train_config(metrics_path=str(out / "metrics.jsonl"), checkpoint_path=str(out / "checkpoint.json"))
        result = train(tc, source, target, eval_data=eval_data)
    except (TrainingAborted, ConfigError, DataError) as e:
        return RunResult(variant, seed, None, f"{type(e).__name__}: {e}")
    return RunResult(variant, seed, result.records[-1].acc_target)


def run_ablate(args) -> int:
    cfg = _resolve(args)
    out = Path(args.out)
    _write_echo(cfg, out)
    grid = [(v, s) for v in cfg["ablate.variants"] for s in cfg["ablate.seeds"]]
    jobs = [(cfg.values, v, s, str(out / "runs" / v / f"seed-{s}"), str(_base_dir(args))) for v, s in grid]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_ablation_run, *zip(*jobs)))
    else:
        results = []
        for job in jobs:
            results.append(_ablation_run(*job))
            log.info("%s seed %d: %s", job[1], job[2], results[-1].acc_target)
    report = aggregate_seeds(results)
    (out / "ablation-report.json").write_text(report.to_json())
    (out / "ablation-report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return EXIT_PARTIAL if report.failures else EXIT_OK


def run_gradcheck_cmd(args) -> int:
    report = run_gradcheck(seed=args.seed, corrupt=args.corrupt_param)
    print(f"worst relative error {report.worst:.3e} ({report.worst_param}), tolerance {DEFAULT_TOLERANCE:.0e}")
    if not report.passed:
        for path in report.offending:
            print(f"FAIL {path}: {report.errors[path]:.3e}")
        return EXIT_GRADCHECK
    return EXIT_OK


def run_gen_data(args) -> int:
    cfg = _resolve(args)
    if cfg["task"] == "csv":
        raise ConfigError("gen-data needs a synthetic task (clusters or moons)")
    out = Path(args.out)
    _write_echo(cfg.replace(standardize=False), out)
    (source, target), _ = cfg.replace(standardize=False, eval_split=0.0).load_data()
    write_csv(out / "source.csv", source)
    write_csv(out / "target.csv", target)
    print(f"wrote {len(source)} source and {len(target)} target rows to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gvbridge", description="Bridge-regularized adversarial domain adaptation.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="INI config file (defaults apply to anything it omits)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
        return p

    common(sub.add_parser("train", help="train one model"), "runs/train").set_defaults(func=run_train)
    for verb, func, text in (("eval", run_eval, "accuracy of a checkpoint"),
                             ("stats", run_stats, "bridge range vs. errors, feature export")):
        p = common(sub.add_parser(verb, help=text), "runs/train")
        p.add_argument("--checkpoint", help="checkpoint file (default OUT/checkpoint.json)")
        if verb == "stats":
            p.add_argument("--key", choices=("gamma", "sigma"), default="gamma", help="bridge to sort by")
        p.set_defaults(func=func)
    p = common(sub.add_parser("ablate", help="variant x seed grid"), "runs/ablate")
    p.add_argument("--seeds", help='comma-separated seeds, e.g. "1,2,3,4"')
    p.add_argument("--variants", help='comma-separated variants, e.g. "gvb-gd,baseline"')
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=run_ablate)
    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-param", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=run_gradcheck_cmd)
    common(sub.add_parser("gen-data", help="write the synthetic task as CSV"), "data").set_defaults(func=run_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
