"""Command line entry point: ``mkdti {generate,train,cv,predict,ablate,sweep}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import RunConfig, load_config
from .exceptions import ConfigError, DataError, NumericalError
from .ingest import load_dataset, save_dataset, write_matrix
from .synth import generate
from .trainer import fit, load_checkpoint, save_checkpoint, write_training_log
from .validation import (ablate, ablation_selectors, cross_validate, sweep, write_curves,
                         write_cv_report, write_table)

logger = logging.getLogger("mkdti")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="fold-level worker processes")
    common.add_argument("--data", help="dataset directory (overrides data_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mkdti", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    sub.add_parser("train", parents=[common], help="fit on the full dataset")
    sub.add_parser("cv", parents=[common], help="k-fold cross-validation")
    p = sub.add_parser("predict", parents=[common], help="rank unknown pairs from a checkpoint")
    p.add_argument("--checkpoint", help="checkpoint written by 'train' (default OUT/checkpoint.npz)")
    p.add_argument("--top-n", type=int, dest="top_n")
    sub.add_parser("ablate", parents=[common], help="cross-validate each kernel selection")
    sub.add_parser("sweep", parents=[common], help="cross-validate a bandwidth x dimension grid")
    return parser


def resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.seed = args.seed
        config.synth = dataclasses.replace(config.synth, seed=args.seed)
    if args.out is not None:
        config.out_dir = args.out
    if args.workers is not None:
        config.workers = args.workers
    if args.data is not None:
        config.data_dir = args.data
    if config.workers < 1:
        raise ConfigError("workers must be at least 1")
    return config


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(config: RunConfig):
    if not config.data_dir:
        raise ConfigError("no dataset directory given (data_dir or --data)")
    if not Path(config.data_dir).is_dir():
        raise DataError(f"dataset directory not found: {config.data_dir}")
    return load_dataset(config.data_dir)


def cmd_generate(config: RunConfig, args) -> None:
    out = _out_dir(config)
    save_dataset(generate(config.synth), out)
    spec = yaml.safe_dump({"synth": dataclasses.asdict(config.synth)}, sort_keys=False)
    (out / "synth_spec.yaml").write_text(spec, encoding="utf-8")
    logger.info("wrote synthetic dataset to %s", out)


def cmd_train(config: RunConfig, args) -> None:
    ds = _dataset(config)
    out = _out_dir(config)
    kd, kt = ds.base_kernels()
    train_cfg = config.train_config()
    model, _, scores = fit(kd, kt, ds.Y, train_cfg)
    write_training_log(out / "train_log.tsv", model)
    cat = ds.catalog
    save_checkpoint(out / "checkpoint.npz", model, train_cfg,
                    extra={"Y": ds.Y, "scores": scores, "drug_ids": np.array(cat.drug_ids),
                           "target_ids": np.array(cat.target_ids),
                           "drug_similarity": kd, "target_similarity": kt})
    write_matrix(out / "predictions.tsv", scores, cat.drug_ids, cat.target_ids)
    logger.info("final loss %.6g after %d iterations", model.history[-1], len(model.history))


def rank_novel_pairs(Y, scores, top_n: int | None = None) -> list[tuple[int, int, float]]:
    """Unknown cells sorted by descending score; ties keep row-major order."""
    Y = np.asarray(Y)
    cells = np.argwhere(Y == 0)
    vals = scores[cells[:, 0], cells[:, 1]]
    order = np.lexsort((np.arange(len(cells)), -vals))
    if top_n is not None:
        order = order[:top_n]
    return [(int(cells[k, 0]), int(cells[k, 1]), float(vals[k])) for k in order]


def cmd_predict(config: RunConfig, args) -> None:
    out = _out_dir(config)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    if not ckpt.exists():
        raise DataError(f"checkpoint not found: {ckpt}")
    _, _, extra = load_checkpoint(ckpt)
    top_n = args.top_n if args.top_n is not None else config.predict.top_n
    if top_n < 0:
        raise ConfigError("top_n must be non-negative")
    drug_ids, target_ids = extra["drug_ids"].tolist(), extra["target_ids"].tolist()
    ranked = rank_novel_pairs(extra["Y"], extra["scores"], top_n)
    lines = [f"{drug_ids[i]}\t{target_ids[j]}\t{s!r}\n" for i, j, s in ranked]
    (out / "ranked_pairs.tsv").write_text("".join(lines), encoding="utf-8")
    sys.stdout.write("".join(lines))


def cmd_cv(config: RunConfig, args) -> None:
    ds = _dataset(config)
    out = _out_dir(config)
    kd, kt = ds.base_kernels()
    result = cross_validate(kd, kt, ds.Y, config.train_config(), config.eval.k, config.seed,
                            config.workers, keep_curves=True)
    write_cv_report(result, out / "cv_report.tsv", out / "cv_report.json")
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    write_curves(result, curves)
    for key, (mean, std) in result.summary().items():
        logger.info("%s %.4f +- %.4f", key, mean, std)


def cmd_ablate(config: RunConfig, args) -> None:
    ds = _dataset(config)
    out = _out_dir(config)
    kd, kt = ds.base_kernels()
    train_cfg = config.train_config()
    results = ablate(kd, kt, ds.Y, train_cfg, config.eval.k, config.seed, config.workers)
    rows = []
    for sel in ablation_selectors(train_cfg.gat.num_layers):
        s = results[sel].summary()
        rows.append({"selector": sel, "n_kernels": results[sel].n_kernels,
                     **{k: v[0] for k, v in s.items()}, **{f"{k}_std": v[1] for k, v in s.items()}})
    cols = ("selector", "n_kernels", "auc", "auc_std", "aupr", "aupr_std", "f1", "f1_std")
    write_table(rows, cols, out / "ablation.tsv", out / "ablation.json")


def cmd_sweep(config: RunConfig, args) -> None:
    ds = _dataset(config)
    out = _out_dir(config)
    kd, kt = ds.base_kernels()
    rows = sweep(kd, kt, ds.Y, config.train_config(), config.sweep.gammas, config.sweep.layer_dims,
                 config.eval.k, config.seed, config.workers)
    cols = ("gammas", "layer_dims", "auc", "auc_std", "aupr", "aupr_std", "f1", "f1_std")
    write_table(rows, cols, out / "sweep.tsv", out / "sweep.json")


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "cv": cmd_cv, "predict": cmd_predict,
            "ablate": cmd_ablate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        config = resolve_config(args)
        COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"mkdti: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"mkdti: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"mkdti: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
