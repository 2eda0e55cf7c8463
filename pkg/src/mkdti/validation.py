"""Cross-validation over known positives, kernel ablation and parameter sweeps."""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DataError
from .metrics import RankingMetrics, pr_points, ranking_metrics, roc_points
from .trainer import TrainConfig, fit

METRIC_KEYS = ("auc", "aupr", "f1")


@dataclass
class FoldSplit:
    folds: list  # one (m, 2) int array of held-out (drug, target) cells per fold
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)


def make_folds(Y, k: int = 5, seed: int = 0) -> FoldSplit:
    """Shuffle the positive cells and deal them round-robin into ``k`` folds."""
    cells = np.argwhere(np.asarray(Y) == 1)
    if k < 1 or len(cells) < k:
        raise DataError(f"need at least k={k} positive cells, found {len(cells)}")
    cells = cells[np.random.default_rng(seed).permutation(len(cells))]
    return FoldSplit([cells[i::k] for i in range(k)], seed)


def mask_train(Y, fold) -> np.ndarray:
    """Copy of ``Y`` with the fold's held-out cells zeroed."""
    Y = np.asarray(Y, dtype=np.float64)
    fold = np.asarray(fold, dtype=np.intp).reshape(-1, 2)
    if len(fold) and not (Y[fold[:, 0], fold[:, 1]] == 1).all():
        raise DataError("fold references a cell that is not a known positive")
    Y_train = Y.copy()
    Y_train[fold[:, 0], fold[:, 1]] = 0.0
    return Y_train


def evaluation_cells(Y, fold):
    """Scores are read at held-out positives (label 1) and all unknown cells (label 0)."""
    Y = np.asarray(Y)
    fold = np.asarray(fold, dtype=np.intp).reshape(-1, 2)
    mask = Y == 0
    mask[fold[:, 0], fold[:, 1]] = True
    labels = Y[mask].astype(int)
    return mask, labels


def evaluate_fold(Y, fold, Y_star) -> RankingMetrics:
    mask, labels = evaluation_cells(Y, fold)
    return ranking_metrics(np.asarray(Y_star)[mask], labels)


@dataclass
class CVResult:
    folds: list
    selector: str = "all"
    curves: list = field(default_factory=list)
    n_kernels: int = 0

    def summary(self) -> dict:
        out = {}
        for key in METRIC_KEYS:
            vals = np.array([getattr(m, key) for m in self.folds])
            out[key] = (float(vals.mean()), float(vals.std()))
        return out

    def records(self) -> list[dict]:
        recs = [{"fold": i, **m.as_dict()} for i, m in enumerate(self.folds)]
        recs.append({"fold": "mean", **{k: v[0] for k, v in self.summary().items()},
                     **{f"{k}_std": v[1] for k, v in self.summary().items()}})
        return recs


def _run_fold(args):
    base_drug, base_target, Y, fold, config = args
    Y_train = mask_train(Y, fold)
    held = np.asarray(fold).reshape(-1, 2)
    assert not Y_train[held[:, 0], held[:, 1]].any(), "held-out cell leaked into training"
    model, _, Y_star = fit(base_drug, base_target, Y_train, config)
    mask, labels = evaluation_cells(Y, fold)
    scores = Y_star[mask]
    return (ranking_metrics(scores, labels), (roc_points(scores, labels), pr_points(scores, labels)),
            model.n_kernels)


def cross_validate(base_drug, base_target, Y, config: TrainConfig, k: int = 5, seed: int = 0,
                   workers: int = 1, keep_curves: bool = False) -> CVResult:
    """k-fold CV over the positive cells; each fold trains from scratch on its own seed."""
    Y = np.asarray(Y, dtype=np.float64)
    split = make_folds(Y, k, seed)
    jobs = [(base_drug, base_target, Y, fold, replace(config, seed=config.seed + i))
            for i, fold in enumerate(split.folds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(job) for job in jobs]
    return CVResult([r[0] for r in results], config.kernel_selector,
                    [r[1] for r in results] if keep_curves else [], results[0][2])


def ablation_selectors(num_layers: int) -> list[str]:
    return ["base_only", *(f"layer:{l}" for l in range(1, num_layers + 1)), "all"]


def ablate(base_drug, base_target, Y, config: TrainConfig, k: int = 5, seed: int = 0,
           workers: int = 1) -> dict[str, CVResult]:
    """One cross-validation per kernel selection: base only, each single layer, all."""
    return {sel: cross_validate(base_drug, base_target, Y, replace(config, kernel_selector=sel),
                                k, seed, workers)
            for sel in ablation_selectors(config.gat.num_layers)}


def sweep(base_drug, base_target, Y, config: TrainConfig, gamma_grid, dims_grid, k: int = 5,
          seed: int = 0, workers: int = 1) -> list[dict]:
    """Cross-validate every (bandwidths, layer dims) combination; one record per cell."""
    records = []
    for gammas, dims in itertools.product(gamma_grid, dims_grid):
        gammas, dims = tuple(float(g) for g in gammas), tuple(int(d) for d in dims)
        cfg = replace(config, gat=replace(config.gat, layer_dims=dims, num_layers=len(dims)),
                      kernels=replace(config.kernels, gammas=gammas))
        summary = cross_validate(base_drug, base_target, Y, cfg, k, seed, workers).summary()
        records.append({"gammas": list(gammas), "layer_dims": list(dims),
                        **{key: v[0] for key, v in summary.items()},
                        **{f"{key}_std": v[1] for key, v in summary.items()}})
    return records


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("fold", "auc", "aupr", "f1", "threshold", "tp", "fp", "tn", "fn")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_cv_report(result: CVResult, tsv_path, json_path) -> None:
    recs = result.records()
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(REPORT_COLUMNS) + "\n")
        for r in recs:
            fh.write("\t".join(_fmt(r.get(c, "")) for c in REPORT_COLUMNS) + "\n")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"selector": result.selector, "records": recs}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_curves(result: CVResult, out_dir) -> None:
    from pathlib import Path
    out_dir = Path(out_dir)
    for i, ((fpr, tpr), (rec, prec)) in enumerate(result.curves):
        with open(out_dir / f"roc_fold{i}.tsv", "w", encoding="utf-8") as fh:
            fh.write("fpr\ttpr\n")
            fh.writelines(f"{a!r}\t{b!r}\n" for a, b in zip(fpr.tolist(), tpr.tolist()))
        with open(out_dir / f"pr_fold{i}.tsv", "w", encoding="utf-8") as fh:
            fh.write("recall\tprecision\n")
            fh.writelines(f"{a!r}\t{b!r}\n" for a, b in zip(rec.tolist(), prec.tolist()))


def write_table(rows: list[dict], columns, tsv_path, json_path=None) -> None:
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for r in rows:
            fh.write("\t".join(_fmt(r[c]) if not isinstance(r[c], list) else ",".join(map(_fmt, r[c]))
                               for c in columns) + "\n")
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
