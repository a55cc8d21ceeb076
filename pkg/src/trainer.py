"""Dataset labeling through baseline column generation, and the training loop."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from driver import ColumnGenerationDriver, extract_valid_edges
from gnn.features import GraphInputs, NormStats, featurize, prepare_inputs
from gnn.model import (
    Hyper, ModelParams, NonFiniteActivation, PredictionModel, backward, forward, init_params, loss,
)
from gnn.optim import Adam
from graph import TimeSpaceGraph, parse_instance
from label_store import LabelStore
from models import LabeledInstance, SolveMode, SolverConfig, TrainConfig
from reduce import recall_at
from ui.base_ui import BaseUI

LOG_COLUMNS = ["epoch", "train_loss", "val_loss", "val_auc", "val_recall"]
RECALL_THRESHOLD = 0.15

logger = logging.getLogger(__name__)


class EmptyDataset(Exception):
    """Raised when there is nothing to fit or train on."""


def load_instance(path: str) -> TimeSpaceGraph:
    return parse_instance(Path(path).read_bytes())


def label_instance(instance_path: str, out_dir: str,
                   cfg: Optional[SolverConfig] = None) -> Optional[LabeledInstance]:
    """Solve one instance in baseline mode and write its label file.

    Returns None when the integer cover needs artificial columns.
    """
    g = load_instance(instance_path)
    report, solution = ColumnGenerationDriver(cfg).run(g, SolveMode.BASELINE)
    if solution.uses_artificials:
        logger.warning(f"Skipping {instance_path}: integer cover uses artificial columns")
        return None
    labels = extract_valid_edges(g, solution)
    label_path = Path(out_dir) / f"{Path(instance_path).stem}.labels"
    LabelStore.write(label_path, instance_path, g.connection_edge_ids, labels.tolist())
    return LabeledInstance(
        instance_path=instance_path,
        label_path=str(label_path),
        edge_ids=list(g.connection_edge_ids),
        labels=labels.tolist(),
        lp_objective=report.lp_objective,
        ip_objective=report.ip_objective,
    )


def _label_job(job: Tuple[str, str, Optional[SolverConfig]]) -> Tuple[str, Optional[LabeledInstance], Optional[str]]:
    instance_path, out_dir, cfg = job
    try:
        return instance_path, label_instance(instance_path, out_dir, cfg), None
    except Exception as e:
        return instance_path, None, f"{type(e).__name__}: {e}"


def build_dataset(instances: Sequence[str], out_dir: str, workers: int = 1,
                  cfg: Optional[SolverConfig] = None) -> List[LabeledInstance]:
    """Label every instance; failures are logged and skipped.

    Writes one label file per instance plus `dataset.csv` in `out_dir`.
    """
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(str(path), str(out_dir), cfg) for path in instances]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_label_job, jobs))
    else:
        results = [_label_job(job) for job in jobs]

    dataset: List[LabeledInstance] = []
    for instance_path, item, error in results:
        if error:
            logger.error(f"Labeling {instance_path} failed: {error}")
        elif item is not None:
            dataset.append(item)
    LabelStore.write_index(Path(out_dir) / "dataset.csv", dataset)

    positives = sum(sum(item.labels) for item in dataset)
    total = sum(len(item.labels) for item in dataset)
    rate = positives / total if total else 0.0
    logger.info(f"Labeled {len(dataset)}/{len(jobs)} instances; positive edge rate {rate:.2%}")
    return dataset


def fit_norm_stats(graphs: Sequence[TimeSpaceGraph]) -> NormStats:
    if not graphs:
        raise EmptyDataset("cannot fit normalization statistics on an empty dataset")
    return NormStats.fit([featurize(g) for g in graphs])


def rank_auc(p: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve from average ranks; NaN if only one class is present."""
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = pd.Series(np.asarray(p, dtype=float)).rank(method="average").to_numpy()
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class Example:
    g: TimeSpaceGraph
    labels: np.ndarray
    inputs: Optional[GraphInputs] = None


def load_examples(dataset: Sequence[LabeledInstance]) -> List[Example]:
    examples = []
    for item in dataset:
        g = load_instance(item.instance_path)
        if list(g.connection_edge_ids) != list(item.edge_ids):
            raise ValueError(f"{item.label_path}: edge ids do not match the connection edges "
                             f"of {item.instance_path}")
        examples.append(Example(g, np.asarray(item.labels, dtype=float)))
    return examples


@dataclass
class TrainResult:
    model: PredictionModel
    log: pd.DataFrame
    best_epoch: int
    stopped_early: bool = False
    diverged: bool = False


def split_indices(n: int, val_fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    if val_fraction > 0 and n > 1:
        n_val = max(1, n_val)
    n_val = min(n_val, n - 1)
    return order[n_val:], order[:n_val]


def evaluate(params: ModelParams, examples: Sequence[Example], w_neg: float) -> Dict[str, float]:
    if not examples:
        return {"val_loss": float("nan"), "val_auc": float("nan"), "val_recall": float("nan")}
    losses, scores, labels = [], [], []
    for ex in examples:
        p, _ = forward(params, ex.inputs, train=False)
        losses.append(loss(p, ex.labels, w_neg))
        scores.append(p)
        labels.append(ex.labels)
    p_all, y_all = np.concatenate(scores), np.concatenate(labels)
    return {
        "val_loss": float(np.mean(losses)),
        "val_auc": rank_auc(p_all, y_all),
        "val_recall": recall_at(p_all, y_all, RECALL_THRESHOLD),
    }


def batch_gradients(params: ModelParams, batch: Sequence[Example],
                    w_neg: float) -> Tuple[Dict[str, np.ndarray], List[float]]:
    """Mean gradient over the graphs of one batch, with the per-graph losses."""
    total = {name: np.zeros_like(value) for name, value in params.tensors.items()}
    losses = []
    for ex in batch:
        p, cache = forward(params, ex.inputs, train=True)
        losses.append(loss(p, ex.labels, w_neg))
        for name, g in backward(params, cache, ex.labels, w_neg).items():
            total[name] += g
    return {name: g / len(batch) for name, g in total.items()}, losses


def train(dataset: Sequence[LabeledInstance], cfg: Optional[TrainConfig] = None,
          ui: Optional[BaseUI] = None, log_path: Optional[Path] = None) -> TrainResult:
    """Fit the edge classifier; the parameters with the best validation loss win.

    Raises:
        EmptyDataset: no labeled instances were given
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if not dataset:
        raise EmptyDataset("no labeled instances to train on")
    rng = np.random.default_rng(cfg.seed)
    examples = load_examples(dataset)
    stations = {ex.g.n_stations for ex in examples}
    if len(stations) != 1:
        raise ValueError(f"instances disagree on the number of stations: {sorted(stations)}")

    train_idx, val_idx = split_indices(len(examples), cfg.val_fraction, rng)
    norm_stats = fit_norm_stats([examples[i].g for i in train_idx])
    for ex in examples:
        ex.inputs = prepare_inputs(ex.g, norm_stats)
        if cfg.shuffle_labels:
            ex.labels = rng.permutation(ex.labels)
    train_set = [examples[i] for i in train_idx]
    val_set = [examples[i] for i in val_idx]
    logger.info(f"Training on {len(train_set)} graphs, validating on {len(val_set)}")

    hyper = Hyper.for_stations(stations.pop(), h_conv=cfg.h_conv, h_mlp=cfg.h_mlp,
                               l_conv=cfg.l_conv, l_mlp=cfg.l_mlp)
    params = init_params(hyper, seed=cfg.seed)
    adam = Adam(lr=cfg.lr)

    rows: List[Dict[str, float]] = []
    best_params, best_score, best_epoch = params.copy(), float("inf"), 0
    since_best = 0
    stopped_early = diverged = False

    for epoch in range(1, cfg.epochs + 1):
        last_good = params.copy()
        order = rng.permutation(len(train_set))
        epoch_losses: List[float] = []
        try:
            for start in range(0, len(order), cfg.batch_graphs):
                batch = [train_set[i] for i in order[start:start + cfg.batch_graphs]]
                grads, losses = batch_gradients(params, batch, cfg.w_neg)
                epoch_losses += losses
                adam.step(params.tensors, grads)
                if not params.all_finite():
                    raise NonFiniteActivation(f"parameters diverged in epoch {epoch}")
            metrics = evaluate(params, val_set, cfg.w_neg)
        except NonFiniteActivation as e:
            logger.error(f"{e}; keeping the last good parameters")
            diverged = True
            if best_epoch == 0:
                best_params, best_epoch = last_good, epoch - 1
            break

        row = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), **metrics}
        rows.append(row)
        logger.info(
            f"epoch {epoch}: train {row['train_loss']:.4f}, val {row['val_loss']:.4f}, "
            f"auc {row['val_auc']:.3f}, recall {row['val_recall']:.3f}"
        )
        if ui:
            ui.display_epoch(row)

        score = row["val_loss"] if val_set else row["train_loss"]
        if score < best_score:
            best_params, best_score, best_epoch = params.copy(), score, epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                logger.warning(f"No improvement for {cfg.patience} epochs; stopping at epoch {epoch}")
                stopped_early = True
                break

    log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    if log_path is not None:
        log.to_csv(log_path, index=False)
    metadata = {"best_epoch": best_epoch, "train_graphs": len(train_set), "val_graphs": len(val_set)}
    model = PredictionModel(best_params, norm_stats, metadata)
    return TrainResult(model, log, best_epoch, stopped_early, diverged)
