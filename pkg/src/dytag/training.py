"""Chronological mini-batch training, link/edge evaluation, ablations."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import autodiff as ad
from .autodiff import AdamConfig, Tape
from .encoders import EncoderConfig
from .fusion import LossConfig, bce_link_loss, cross_entropy, distribution_loss, instance_loss, total_loss
from .graph import DyTagDataset, NeighborIndex, SplitView, build_neighbor_index
from .metrics import auc, average_precision, weighted_precision
from .model import Model, VARIANTS
from .rng import RunRng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    iota: float
    seed: int = 0
    batch_size: int = 200
    max_epochs: int = 50
    patience: int = 5
    lr: float = 1e-5
    alpha: float = 0.2
    k_neighbors: int = 20
    L_behaviors: int = 20
    d_t: int = 100
    d_internal: int = 128
    d_struct: int = 768
    attn_heads: int = 2
    ffn_hidden: int = 512
    dropout: float = 0.1
    decoder_hidden: int = 512
    ablation_variant: str = "full"
    task: str = "link"

    def __post_init__(self):
        if self.batch_size <= 0 or self.max_epochs < 0 or self.patience < 0:
            raise ValueError("sizes must be positive (max_epochs/patience non-negative)")
        if self.ablation_variant not in VARIANTS:
            raise ValueError(f"unknown ablation variant {self.ablation_variant!r}")
        if self.task not in ("link", "edge_class"):
            raise ValueError(f"unknown task {self.task!r}")

    def encoder_config(self, dataset: DyTagDataset) -> EncoderConfig:
        return EncoderConfig(
            d_node_feat=dataset.node_features.cols,
            d_edge_feat=dataset.edge_features.cols,
            iota=self.iota, d_t=self.d_t, d_internal=self.d_internal,
            d_struct=self.d_struct, k_neighbors=self.k_neighbors,
            L_behaviors=self.L_behaviors, attn_heads=self.attn_heads,
            ffn_hidden=self.ffn_hidden, dropout=self.dropout)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    align_loss: float
    dev_auc: float


@dataclass
class MetricsReport:
    auc: float | None = None
    ap: float | None = None
    weighted_precision: float | None = None
    history: list[EpochStats] = field(default_factory=list)
    note: str = ""


def sample_negatives(dst_batch: np.ndarray, num_nodes: int,
                     rng: np.random.Generator) -> np.ndarray:
    """One uniform corrupted destination per event, never the true one."""
    if num_nodes < 2:
        raise ValueError("need at least 2 nodes to sample negatives")
    neg = rng.integers(0, num_nodes, size=len(dst_batch))
    clash = neg == dst_batch
    while clash.any():
        neg[clash] = rng.integers(0, num_nodes, size=int(clash.sum()))
        clash = neg == dst_batch
    return neg


def _batch_ranges(start: int, stop: int, size: int):
    for lo in range(start, stop, size):
        yield lo, min(lo + size, stop)


def _align_flags(variant: str) -> tuple[bool, bool]:
    use_dist = variant not in ("structural_only", "no_align_d", "no_align")
    use_inst = variant not in ("structural_only", "no_align_i", "no_align")
    return use_dist, use_inst


def _batch_losses(model: Model, dataset: DyTagDataset, index, lo: int, hi: int,
                  negs: np.ndarray, loss_cfg: LossConfig, task: str,
                  training: bool, step: int):
    """Forward one event batch; returns (total, task_loss, raw_align)."""
    srcs = dataset.srcs[lo:hi]
    dsts = dataset.dsts[lo:hi]
    ts = dataset.ts[lo:hi]
    src_tok = model.encode_batch(dataset, index, srcs, ts, "src", training, step)
    dst_tok = model.encode_batch(dataset, index, dsts, ts, "dst", training, step)
    if task == "link":
        neg_tok = model.encode_batch(dataset, index, negs, ts, "neg", training, step)
        pos_logits = model.link_logits(src_tok.Z, dst_tok.Z)
        neg_logits = model.link_logits(src_tok.Z, neg_tok.Z)
        task_loss = bce_link_loss(pos_logits, neg_logits)
    else:
        logits = model.edge_logits(src_tok.Z, dst_tok.Z)
        task_loss = cross_entropy(logits, dataset.labels[lo:hi])
    use_dist, use_inst = _align_flags(model.variant)
    dist = inst = None
    if use_dist:
        dist = distribution_loss(ad.concat_rows(src_tok.Ztau, dst_tok.Ztau),
                                 ad.concat_rows(src_tok.Zx, dst_tok.Zx))
    if use_inst:
        inst = instance_loss(ad.concat_rows(src_tok.Zpi, dst_tok.Zpi),
                             ad.concat_rows(src_tok.Zs, dst_tok.Zs))
    total = total_loss(task_loss, dist, inst, loss_cfg)
    raw_align = (dist.item() if dist is not None else 0.0) + \
                (inst.item() if inst is not None else 0.0)
    return total, task_loss, raw_align


def _score_range(model: Model, dataset: DyTagDataset, index, events_idx: np.ndarray,
                 batch_size: int, rng_maker) -> tuple[np.ndarray, np.ndarray]:
    """Score positives and 1:1 negatives for the given event indices."""
    scores, labels = [], []
    for b, (lo, hi) in enumerate(_batch_ranges(0, len(events_idx), batch_size)):
        idx = events_idx[lo:hi]
        srcs, dsts, ts = dataset.srcs[idx], dataset.dsts[idx], dataset.ts[idx]
        negs = sample_negatives(dsts, dataset.num_nodes, rng_maker(b))
        src_tok = model.encode_batch(dataset, index, srcs, ts, "eval_src")
        dst_tok = model.encode_batch(dataset, index, dsts, ts, "eval_dst")
        neg_tok = model.encode_batch(dataset, index, negs, ts, "eval_neg")
        pos = model.link_logits(src_tok.Z, dst_tok.Z).data[:, 0]
        neg = model.link_logits(src_tok.Z, neg_tok.Z).data[:, 0]
        scores.append(pos)
        labels.append(np.ones(len(pos), dtype=np.int64))
        scores.append(neg)
        labels.append(np.zeros(len(neg), dtype=np.int64))
    return np.concatenate(scores), np.concatenate(labels)


def evaluate_link(model: Model, dataset: DyTagDataset, split: SplitView,
                  mode: str, config: TrainConfig,
                  index: NeighborIndex | None = None,
                  rng_label: str = "neg/eval") -> MetricsReport:
    """Score test events (with 1:1 negatives) transductively or inductively."""
    if mode not in ("transductive", "inductive"):
        raise ValueError(f"unknown mode {mode!r}")
    if index is None:
        index = build_neighbor_index(dataset.events, dataset.num_nodes)
    lo, hi = split.test
    events_idx = np.arange(lo, hi)
    if mode == "inductive":
        inductive = split.inductive_nodes
        keep = [i for i in events_idx
                if dataset.srcs[i] in inductive or dataset.dsts[i] in inductive]
        events_idx = np.array(keep, dtype=np.int64)
        if len(events_idx) == 0:
            return MetricsReport(note="inductive set empty; metrics omitted")
    run_rng = RunRng(config.seed)
    scores, labels = _score_range(
        model, dataset, index, events_idx, config.batch_size,
        lambda b: run_rng.stream(f"{rng_label}/{mode}", b))
    return MetricsReport(auc=auc(scores, labels), ap=average_precision(scores, labels))


def _evaluate_edge_class(model: Model, dataset: DyTagDataset, index,
                         events_idx: np.ndarray, batch_size: int) -> float:
    preds, truth = [], []
    for lo, hi in _batch_ranges(0, len(events_idx), batch_size):
        idx = events_idx[lo:hi]
        srcs, dsts, ts = dataset.srcs[idx], dataset.dsts[idx], dataset.ts[idx]
        src_tok = model.encode_batch(dataset, index, srcs, ts, "eval_src")
        dst_tok = model.encode_batch(dataset, index, dsts, ts, "eval_dst")
        logits = model.edge_logits(src_tok.Z, dst_tok.Z).data
        preds.append(logits.argmax(axis=1))
        truth.append(dataset.labels[idx])
    return weighted_precision(np.concatenate(preds), np.concatenate(truth),
                              dataset.num_classes)


def evaluate_edge_class(model: Model, dataset: DyTagDataset, split: SplitView,
                        config: TrainConfig,
                        index: NeighborIndex | None = None) -> MetricsReport:
    if index is None:
        index = build_neighbor_index(dataset.events, dataset.num_nodes)
    events_idx = np.arange(*split.test)
    wp = _evaluate_edge_class(model, dataset, index, events_idx, config.batch_size)
    return MetricsReport(weighted_precision=wp)


def train(dataset: DyTagDataset, split: SplitView, config: TrainConfig,
          index: NeighborIndex | None = None) -> tuple[Model, MetricsReport]:
    """Train on chronological batches, selecting the best dev-AUC epoch.

    The per-epoch history records the mean task+align training loss, the
    raw (unweighted) alignment loss, and the dev metric. For the edge
    task the dev column holds weighted precision instead of AUC.
    """
    if index is None:
        index = build_neighbor_index(dataset.events, dataset.num_nodes)
    model = Model(config.encoder_config(dataset), seed=config.seed,
                  decoder_hidden=config.decoder_hidden,
                  num_classes=dataset.num_classes if config.task == "edge_class" else None,
                  variant=config.ablation_variant)
    params = model.params()
    adam = AdamConfig(lr=config.lr)
    loss_cfg = LossConfig(alpha=config.alpha)
    run_rng = RunRng(config.seed)
    report = MetricsReport()
    best_state = model.state_dict()
    best_dev = -np.inf
    stale = 0
    tr_lo, tr_hi = split.train
    for epoch in range(config.max_epochs):
        loss_sum = align_sum = 0.0
        n_batches = 0
        for b, (lo, hi) in enumerate(_batch_ranges(tr_lo, tr_hi, config.batch_size)):
            step = epoch * 1_000_000 + b
            negs = sample_negatives(dataset.dsts[lo:hi], dataset.num_nodes,
                                    run_rng.stream("neg/train", step))
            with Tape() as tape:
                total, task_loss, raw_align = _batch_losses(
                    model, dataset, index, lo, hi, negs, loss_cfg,
                    config.task, True, step)
            if not np.isfinite(total.data):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {b}: "
                    f"total={total.data!r} task={task_loss.data!r} align={raw_align!r}")
            tape.backward(total, params)
            ad.adam_step(params, adam)
            loss_sum += total.item()
            align_sum += raw_align
            n_batches += 1
        if config.task == "link":
            dev = evaluate_link(model, dataset,
                                SplitView(split.train, split.val, split.val,
                                          split.inductive_nodes),
                                "transductive", config, index, rng_label="neg/dev")
            dev_metric = dev.auc
        else:
            dev_metric = _evaluate_edge_class(
                model, dataset, index, np.arange(*split.val), config.batch_size)
        report.history.append(EpochStats(
            epoch=epoch, train_loss=loss_sum / max(1, n_batches),
            align_loss=align_sum / max(1, n_batches), dev_auc=dev_metric))
        log.info("epoch %d: loss=%.6f align=%.6f dev=%.6f",
                 epoch, report.history[-1].train_loss,
                 report.history[-1].align_loss, dev_metric)
        if dev_metric > best_dev:
            best_dev = dev_metric
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    model.load_state_dict(best_state)
    if report.history:
        if config.task == "link":
            report.auc = best_dev
        else:
            report.weighted_precision = best_dev
    return model, report


def run_ablation(dataset: DyTagDataset, split: SplitView, base_config: TrainConfig,
                 index: NeighborIndex | None = None) -> dict[str, MetricsReport]:
    """Train all seven variants with the same seed; report inductive metrics."""
    if index is None:
        index = build_neighbor_index(dataset.events, dataset.num_nodes)
    out: dict[str, MetricsReport] = {}
    for variant in VARIANTS:
        cfg = replace(base_config, ablation_variant=variant)
        model, _ = train(dataset, split, cfg, index)
        out[variant] = evaluate_link(model, dataset, split, "inductive", cfg, index)
        log.info("ablation %s: inductive auc=%s", variant, out[variant].auc)
    return out


def alpha_sweep(dataset: DyTagDataset, split: SplitView, base_config: TrainConfig,
                alphas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5),
                index: NeighborIndex | None = None) -> list[tuple[float, float]]:
    """Inductive AUC as a function of the alignment weight."""
    if index is None:
        index = build_neighbor_index(dataset.events, dataset.num_nodes)
    rows = []
    for a in alphas:
        cfg = replace(base_config, alpha=a)
        model, _ = train(dataset, split, cfg, index)
        rep = evaluate_link(model, dataset, split, "inductive", cfg, index)
        rows.append((a, rep.auc))
        log.info("alpha sweep %.2f: inductive auc=%s", a, rep.auc)
    return rows


# ---------------------------------------------------------------------------
# run artifacts


def history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_loss,align_loss,dev_auc"]
    for h in history:
        lines.append(f"{h.epoch},{float(h.train_loss)!r},{float(h.align_loss)!r},{float(h.dev_auc)!r}")
    return "\n".join(lines) + "\n"


def write_history(path, history: list[EpochStats]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(history_csv(history))


def write_report(path, report: MetricsReport, config_echo: dict,
                 seed: int, input_hashes: dict[str, str]) -> None:
    payload = {
        "metrics": {
            "auc": report.auc,
            "ap": report.ap,
            "weighted_precision": report.weighted_precision,
            "note": report.note,
        },
        "history": [asdict(h) for h in report.history],
        "config": config_echo,
        "seed": seed,
        "input_hashes": input_hashes,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def snapshot_params(model: Model) -> dict[str, np.ndarray]:
    return copy.deepcopy(model.state_dict())
