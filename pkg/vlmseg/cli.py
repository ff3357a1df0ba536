"""`vlmseg` command line

    vlmseg gen-data --run-name demo
    vlmseg train --config run.cfg --set purify.tau_conf=0.7
    vlmseg ablate --seeds 0 1 2 --set vlm.normalization=raw
    vlmseg sweep --values 0.5 0.6 0.7 0.8 0.9

Exit status: 0 success, 1 usage or configuration error, 2 runtime error.
Outputs go to <out>/<run-name>/{config.effective, train_log.jsonl, checkpoints/, metrics/}.
"""
import argparse
import json
import logging
import shutil
import sys
from logging import getLogger
from pathlib import Path
from typing import List, Optional

from vlmseg.classes.enums import EvalModel, GridKind, SplitRole
from vlmseg.classes.grid import ConfidenceMap, LabelMap, ProbMap
from vlmseg.config import TrainerConfig, apply_overrides, describe_keys, dump_config, load_config
from vlmseg.env import DEFAULT_LABELED_RATIOS, DEFAULT_TAUS, PACKAGE_LOGGER_NAME
from vlmseg.errors import ConfigurationError, VlmSegError
from vlmseg.evalkit import (
    DEFAULT_VARIANTS,
    class_improvement,
    pseudo_quality_curve,
    result_rows,
    run_ablation,
    summarize,
    sweep_rows,
    sweep_values,
    write_csv,
    write_curve,
    write_reference,
)
from vlmseg.grid import argmax_labels, confidence
from vlmseg.grid_io import read_grid, write_grid
from vlmseg.oracle import IdentityRefiner, parse_response, rasterize
from vlmseg.pixelmodel import load_checkpoint, save_checkpoint
from vlmseg.scenegen import write_dataset
from vlmseg.trainer import TRAIN_LOG, evaluate_params, prepare_dataset, train
from vlmseg.vlmpp import purify, purify_stats_report

logger = getLogger("vlmseg")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this tool reserves 2 for runtime failures"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _keys_epilog() -> str:
    lines = ["config keys (default):"]
    lines += [f"  {key} = {default}" for key, default in describe_keys()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="shortcut for --set seed=N")
    common.add_argument("--out", default="out", help="output root (default: out)")
    common.add_argument("--run-name", default="run", help="run directory under --out (default: run)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = _Parser(
        prog="vlmseg",
        description="Semi-supervised segmentation with vision-language pseudo-label purification",
        epilog=_keys_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        return sub.add_parser(
            name,
            parents=[common],
            help=help_text,
            epilog=_keys_epilog(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )

    gen = add("gen-data", "generate a synthetic dataset directory")
    gen.add_argument("--dir", help="target directory (default: <out>/<run-name>/data)")

    add("train", "train and keep the best checkpoint")

    evaluate = add("evaluate", "score a saved checkpoint")
    evaluate.add_argument("--checkpoint", help="checkpoint directory (default: <run>/checkpoints/best)")
    evaluate.add_argument("--split", default="test", choices=[role.value for role in SplitRole])
    evaluate.add_argument("--model", choices=[model.value for model in EvalModel], help="default: train.eval_model")

    pur = add("purify", "purify one pseudo-label map against an oracle answer")
    pur.add_argument("--teacher-probs", help="H x W x K probability grid")
    pur.add_argument("--teacher-labels", help="H x W label grid (with --teacher-conf)")
    pur.add_argument("--teacher-conf", help="H x W confidence grid")
    pur.add_argument("--prediction", required=True, help="oracle answer JSON ({\"mentions\": [...]})")
    pur.add_argument("--image", required=True, help="scene image grid the answer refers to")
    pur.add_argument("--truth", help="optional ground-truth label grid for accuracy before/after")

    ablate = add("ablate", "train every variant for every seed")
    ablate.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ablate.add_argument(
        "--variant",
        action="append",
        default=[],
        metavar="NAME:KEY=VALUE[,KEY=VALUE]",
        help="replaces the default with/without purification pair",
    )

    sweep = add("sweep", "one training per value of a config key")
    sweep.add_argument("--param", default="purify.tau_conf")
    sweep.add_argument("--values", nargs="+", help="default: 0.5..0.9 for taus, 0.01 0.05 0.1 for labeled ratios")
    sweep.add_argument("--seeds", type=int, nargs="+", default=[0])

    report = add("report", "bundle metrics and configs of several runs")
    report.add_argument("--runs", nargs="+", required=True, help="run directories")
    report.add_argument("--dest", help="default: <out>/<run-name>")
    return parser


def resolve_config(args) -> TrainerConfig:
    cfg = load_config(args.config)
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return apply_overrides(cfg, overrides)


def _run_dir(args) -> Path:
    path = Path(args.out) / args.run_name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(document, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_gen_data(args, cfg: TrainerConfig) -> int:
    dataset = prepare_dataset(cfg)
    target = Path(args.dir) if args.dir else _run_dir(args) / "data"
    write_dataset(dataset, target)
    print(f"{len(dataset)} scenes written to {target}")
    return EXIT_OK


def cmd_train(args, cfg: TrainerConfig) -> int:
    run_dir = _run_dir(args)
    (run_dir / "config.effective").write_text(dump_config(cfg), encoding="utf-8")
    dataset = prepare_dataset(cfg)
    checkpoint, logs = train(dataset, cfg, log_path=run_dir / TRAIN_LOG)
    save_checkpoint(checkpoint, run_dir / "checkpoints" / "best")
    params = checkpoint.state.teacher if cfg.train.eval_model == EvalModel.TEACHER else checkpoint.state.student
    test_scenes = dataset.pool(SplitRole.TEST) or dataset.pool(SplitRole.VAL)
    test = evaluate_params(params, test_scenes, dataset.classes)
    metrics = run_dir / "metrics"
    _write_json(json.loads(test.json()), metrics / "test.json")
    if any(log.pseudo_label_miou is not None for log in logs):
        write_curve(pseudo_quality_curve(logs), metrics / "pseudo_quality.csv")
    write_csv(class_improvement(logs, dataset.classes), metrics / "class_improvement.csv")
    print(f"best epoch {checkpoint.epoch + 1}: val mIoU {checkpoint.val_miou:.4f}, test mIoU {test.miou:.4f}")
    return EXIT_OK


def cmd_evaluate(args, cfg: TrainerConfig) -> int:
    run_dir = _run_dir(args)
    path = Path(args.checkpoint) if args.checkpoint else run_dir / "checkpoints" / "best"
    checkpoint = load_checkpoint(path)
    dataset = prepare_dataset(cfg)
    model = EvalModel(args.model) if args.model else cfg.train.eval_model
    params = checkpoint.state.teacher if model == EvalModel.TEACHER else checkpoint.state.student
    report = evaluate_params(params, dataset.pool(SplitRole(args.split)), dataset.classes)
    _write_json(json.loads(report.json()), run_dir / "metrics" / f"evaluate.{args.split}.json")
    print(f"{args.split} mIoU {report.miou:.4f}, pixel accuracy {report.pixel_accuracy:.4f}")
    return EXIT_OK


def cmd_purify(args, cfg: TrainerConfig) -> int:
    if args.teacher_probs:
        probs = read_grid(args.teacher_probs, GridKind.PROB)
        assert isinstance(probs, ProbMap)
        labels, conf = argmax_labels(probs), confidence(probs)
    elif args.teacher_labels and args.teacher_conf:
        labels = read_grid(args.teacher_labels, GridKind.LABEL)
        conf = read_grid(args.teacher_conf, GridKind.CONFIDENCE)
        assert isinstance(labels, LabelMap) and isinstance(conf, ConfidenceMap)
    else:
        raise UsageError("purify needs --teacher-probs or both --teacher-labels and --teacher-conf")
    classes = cfg.data.class_set()
    image = read_grid(args.image, GridKind.ARRAY)
    payload = json.loads(Path(args.prediction).read_text(encoding="utf-8"))
    pred = parse_response(payload, classes, image.shape[0], image.shape[1])
    layer = rasterize(pred, IdentityRefiner(), classes, cfg.vlm.vlm_config(), image)
    batch = purify(labels, conf, layer, cfg.purify.purify_config(), classes.count)
    truth = read_grid(args.truth, GridKind.LABEL) if args.truth else None

    target = _run_dir(args) / "purify"
    target.mkdir(parents=True, exist_ok=True)
    write_grid(batch.labels, target / "purified.lbl.grd")
    write_grid(batch.conf, target / "purified.conf.grd")
    write_grid(batch.valid, target / "purified.valid.grd")
    _write_json(purify_stats_report(batch, truth), target / "stats.json")
    print(json.dumps(batch.stats.dict(), sort_keys=True))
    return EXIT_OK


def parse_variant(text: str):
    name, sep, body = text.partition(":")
    if not sep or not name:
        raise UsageError(f"variant {text!r} is not NAME:KEY=VALUE[,KEY=VALUE]")
    overrides = {}
    for item in filter(None, body.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"variant {text!r}: {item!r} is not KEY=VALUE")
        overrides[key.strip()] = value.strip()
    return name, overrides


def cmd_ablate(args, cfg: TrainerConfig) -> int:
    variants = [parse_variant(text) for text in args.variant] or DEFAULT_VARIANTS
    for _, overrides in variants:
        apply_overrides(cfg, overrides)
    run_dir = _run_dir(args)
    (run_dir / "config.effective").write_text(dump_config(cfg), encoding="utf-8")
    results = run_ablation(cfg, variants, args.seeds)
    metrics = run_dir / "metrics"
    write_csv(result_rows(results), metrics / "ablation.csv")
    write_csv(summarize(results), metrics / "ablation_summary.csv")
    classes = cfg.data.class_set()
    for result in results:
        if result.ok:
            tag = f"{result.variant}.seed{result.seed}"
            write_csv(class_improvement(result.logs, classes), metrics / f"class_improvement.{tag}.csv")
            if any(log.pseudo_label_miou is not None for log in result.logs):
                write_curve(pseudo_quality_curve(result.logs), metrics / f"pseudo_quality.{tag}.csv")
    write_reference(metrics / "reference.json", {"seeds": list(args.seeds)})
    for row in summarize(results):
        print(f"{row['variant']}: test mIoU {row['test_miou']} over {row['runs']} runs")
    failed = [result for result in results if not result.ok]
    return EXIT_RUNTIME if failed and len(failed) == len(results) else EXIT_OK


def cmd_sweep(args, cfg: TrainerConfig) -> int:
    values: List[object]
    if args.values:
        values = list(args.values)
    elif args.param == "purify.tau_conf":
        values = list(DEFAULT_TAUS)
    elif args.param == "train.labeled_ratio":
        values = list(DEFAULT_LABELED_RATIOS)
    else:
        raise UsageError(f"--values is required when sweeping {args.param}")
    for value in values:
        apply_overrides(cfg, {args.param: str(value)})
    run_dir = _run_dir(args)
    (run_dir / "config.effective").write_text(dump_config(cfg), encoding="utf-8")
    rows = sweep_values(cfg, args.param, values, args.seeds)
    metrics = run_dir / "metrics"
    write_csv(sweep_rows(rows), metrics / "sweep.csv")
    write_reference(metrics / "reference.json", {"param": args.param, "seeds": list(args.seeds)})
    for row in rows:
        print(f"{row.key} = {row.value}: test mIoU {row.test_miou}")
    return EXIT_OK


def cmd_report(args, cfg: TrainerConfig) -> int:
    dest = Path(args.dest) if args.dest else _run_dir(args)
    index = []
    for run in args.runs:
        source = Path(run)
        if not source.is_dir():
            raise ConfigurationError(f"run directory {source} does not exist")
        target = dest / source.name
        target.mkdir(parents=True, exist_ok=True)
        copied = []
        for name in ("config.effective", TRAIN_LOG):
            if (source / name).exists():
                shutil.copy2(source / name, target / name)
                copied.append(name)
        if (source / "metrics").is_dir():
            shutil.copytree(source / "metrics", target / "metrics", dirs_exist_ok=True)
            copied += [f"metrics/{path.name}" for path in sorted((source / "metrics").iterdir())]
        index.append({"run": source.name, "source": str(source), "files": copied})
    _write_json({"runs": index}, dest / "index.json")
    print(f"{len(index)} runs bundled into {dest}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "purify": cmd_purify,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def setup_logging(level: str) -> None:
    package_logger = logging.getLogger(PACKAGE_LOGGER_NAME)
    package_logger.setLevel(level)
    if not package_logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        package_logger.addHandler(handler)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:
        # --help
        return EXIT_OK if err.code in (0, None) else EXIT_USAGE
    setup_logging(args.log_level)
    try:
        cfg = resolve_config(args)
    except (ConfigurationError, OSError) as err:
        print(f"vlmseg: configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as err:
        print(f"vlmseg: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as err:
        print(f"vlmseg: configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (VlmSegError, OSError, ValueError) as err:
        print(f"vlmseg: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
