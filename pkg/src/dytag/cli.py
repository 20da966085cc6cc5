"""Command-line entry point for reproducible runs.

Exit codes: 0 success, 1 validation error (bad flags, bad config),
2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from .analysis import BatchSpec, export_modality_distributions
from .fusion import DiscreteJoint, mi_chain_check
from .graph import build_neighbor_index, chronological_split, load_dataset, save_dataset
from .model import Model, VARIANTS
from .rng import RunRng
from .synthetic import SynthConfig, generate
from .training import (TrainConfig, alpha_sweep, evaluate_link, run_ablation,
                       train, write_history, write_report)

DEFAULT_RATIOS = (0.7, 0.15, 0.15)
DATA_FILES = ("edges.csv", "node_feats.fbin", "edge_feats.fbin")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.exit(1, f"{self.prog}: error: {message}\n")


def _check_keys(section: str, given: dict, allowed: set[str]) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown key {section}.{key!r}")


def load_run_config(path) -> dict:
    """Strictly validated run configuration: {'train': {...}, 'synth': {...}}."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys("<top>", raw, {"train", "synth", "split_ratios"})
    train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
    synth_keys = {f.name for f in dataclasses.fields(SynthConfig)}
    _check_keys("train", raw.get("train", {}), train_keys)
    _check_keys("synth", raw.get("synth", {}), synth_keys)
    synth_section = dict(raw.get("synth", {}))
    if "rate_classes" in synth_section:
        synth_section["rate_classes"] = tuple(synth_section["rate_classes"])
    ratios = tuple(raw.get("split_ratios", DEFAULT_RATIOS))
    if len(ratios) != 3:
        raise ConfigError("split_ratios must have 3 entries")
    return {"train": dict(raw.get("train", {})), "synth": synth_section,
            "split_ratios": ratios}


def _train_config(cfg: dict, args) -> TrainConfig:
    section = dict(cfg["train"])
    if args.seed is not None:
        section["seed"] = args.seed
    if getattr(args, "variant", None):
        section["ablation_variant"] = args.variant
    if "iota" not in section:
        raise ConfigError("train.iota is required")
    try:
        return TrainConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train section: {exc}") from None


def _synth_config(cfg: dict, args) -> SynthConfig:
    section = dict(cfg["synth"])
    if args.seed is not None:
        section["seed"] = args.seed
    try:
        return SynthConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synth section: {exc}") from None


def _data_paths(data_dir) -> tuple[str, str, str]:
    return tuple(os.path.join(data_dir, name) for name in DATA_FILES)


def git_blob_hash(path) -> str:
    with open(path, "rb") as f:
        blob = f.read()
    return hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()


def _input_hashes(data_dir) -> dict[str, str]:
    return {name: git_blob_hash(os.path.join(data_dir, name))
            for name in DATA_FILES if os.path.exists(os.path.join(data_dir, name))}


def _config_echo(cfg: dict, tc: TrainConfig | None = None) -> dict:
    echo = {"synth": cfg["synth"], "split_ratios": list(cfg["split_ratios"])}
    echo["train"] = dataclasses.asdict(tc) if tc is not None else cfg["train"]
    return echo


def _load_split(args, cfg):
    dataset = load_dataset(*_data_paths(args.data))
    split = chronological_split(dataset, cfg["split_ratios"])
    return dataset, split


def cmd_gen_synth(args) -> int:
    cfg = load_run_config(args.config)
    synth = _synth_config(cfg, args)
    dataset, sidecar = generate(synth)
    os.makedirs(args.out, exist_ok=True)
    save_dataset(dataset, *_data_paths(args.out))
    with open(os.path.join(args.out, "ground_truth.json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(dataset)} events, {dataset.num_nodes} nodes to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    tc = _train_config(cfg, args)
    dataset, split = _load_split(args, cfg)
    model, report = train(dataset, split, tc)
    index = build_neighbor_index(dataset.events, dataset.num_nodes)
    if tc.task == "link":
        trans = evaluate_link(model, dataset, split, "transductive", tc, index)
        induc = evaluate_link(model, dataset, split, "inductive", tc, index)
        report.auc, report.ap = trans.auc, trans.ap
        final = {"transductive_auc": trans.auc, "transductive_ap": trans.ap,
                 "inductive_auc": induc.auc, "inductive_ap": induc.ap,
                 "note": induc.note}
    else:
        from .training import evaluate_edge_class
        test = evaluate_edge_class(model, dataset, split, tc, index)
        report.weighted_precision = test.weighted_precision
        final = {"weighted_precision": test.weighted_precision}
    os.makedirs(args.out, exist_ok=True)
    write_history(os.path.join(args.out, "history.csv"), report.history)
    report.note = json.dumps(final, sort_keys=True)
    write_report(os.path.join(args.out, "report.json"), report,
                 _config_echo(cfg, tc), tc.seed, _input_hashes(args.data))
    np.savez(os.path.join(args.out, "params.npz"), **model.state_dict())
    print(f"trained {tc.max_epochs}-epoch budget; final metrics: {final}")
    return 0


def _rebuild_model(args, cfg, tc, dataset) -> Model:
    model = Model(tc.encoder_config(dataset), seed=tc.seed,
                  decoder_hidden=tc.decoder_hidden,
                  num_classes=dataset.num_classes if tc.task == "edge_class" else None,
                  variant=tc.ablation_variant)
    with np.load(args.params) as st:
        model.load_state_dict({k: st[k] for k in st.files})
    return model


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    tc = _train_config(cfg, args)
    dataset, split = _load_split(args, cfg)
    model = _rebuild_model(args, cfg, tc, dataset)
    index = build_neighbor_index(dataset.events, dataset.num_nodes)
    trans = evaluate_link(model, dataset, split, "transductive", tc, index)
    induc = evaluate_link(model, dataset, split, "inductive", tc, index)
    final = {"transductive_auc": trans.auc, "transductive_ap": trans.ap,
             "inductive_auc": induc.auc, "inductive_ap": induc.ap,
             "note": induc.note}
    os.makedirs(args.out, exist_ok=True)
    trans.note = json.dumps(final, sort_keys=True)
    write_report(os.path.join(args.out, "report.json"), trans,
                 _config_echo(cfg, tc), tc.seed, _input_hashes(args.data))
    print(json.dumps(final, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    cfg = load_run_config(args.config)
    tc = _train_config(cfg, args)
    dataset, split = _load_split(args, cfg)
    table = run_ablation(dataset, split, tc)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "ablation.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("variant,inductive_auc\n")
        for variant in VARIANTS:
            f.write(f"{variant},{table[variant].auc!r}\n")
    print(f"wrote {path}")
    return 0


def cmd_alpha_sweep(args) -> int:
    cfg = load_run_config(args.config)
    tc = _train_config(cfg, args)
    dataset, split = _load_split(args, cfg)
    rows = alpha_sweep(dataset, split, tc)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "alpha_sweep.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("alpha,inductive_auc\n")
        for a, score in rows:
            f.write(f"{a!r},{score!r}\n")
    print(f"wrote {path}")
    return 0


def cmd_grad_check(args) -> int:
    from .synthetic import benchmark_config
    from .training import sample_negatives, _batch_losses
    from .fusion import LossConfig

    seed = args.seed if args.seed is not None else 7
    synth = SynthConfig(num_nodes=12, num_communities=3, num_events=40,
                        feat_dim=5, seed=seed)
    dataset, _ = generate(synth)
    index = build_neighbor_index(dataset.events, dataset.num_nodes)
    tc = benchmark_config(seed=seed, iota=20.0, d_t=4, d_internal=6, d_struct=8,
                          ffn_hidden=10, decoder_hidden=10, k_neighbors=3,
                          L_behaviors=3, dropout=0.0, batch_size=4)
    model = Model(tc.encoder_config(dataset), seed=seed, decoder_hidden=10)
    lo, hi = len(dataset) - 4, len(dataset)
    negs = sample_negatives(dataset.dsts[lo:hi], dataset.num_nodes,
                            RunRng(seed).stream("neg/check"))

    def loss_fn():
        total, _, _ = _batch_losses(model, dataset, index, lo, hi, negs,
                                    LossConfig(alpha=tc.alpha), "link", False, 0)
        return total

    err = ad.finite_diff_check(loss_fn, model.params(), epsilon=1e-6)
    print(f"max relative gradient error: {err:.3e}")
    if err >= 1e-5:
        raise RuntimeError(f"gradient check failed: {err:.3e} >= 1e-5")
    return 0


def cmd_mi_check(args) -> int:
    rng = RunRng(args.seed if args.seed is not None else 0).stream("mi")
    worst = 0.0
    for _ in range(args.trials):
        shape = (int(rng.integers(2, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 3)))
        table = rng.random(shape)
        table /= table.sum()
        lhs, rhs, _ = mi_chain_check(DiscreteJoint(table))
        worst = max(worst, abs(lhs - rhs))
    print(f"max |lhs - rhs| over {args.trials} joints: {worst:.3e}")
    if worst >= 1e-10:
        raise RuntimeError(f"chain-rule identity violated: {worst:.3e} >= 1e-10")
    return 0


def cmd_analyze_kde(args) -> int:
    cfg = load_run_config(args.config)
    tc = _train_config(cfg, args)
    dataset, split = _load_split(args, cfg)
    model = _rebuild_model(args, cfg, tc, dataset) if args.params else None
    spec = BatchSpec(start=split.test[0],
                     count=min(4 * tc.batch_size, split.test[1] - split.test[0]),
                     batch_size=tc.batch_size)
    paths = export_modality_distributions(model, dataset, spec, args.out, tc)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="dytag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, params=False, trials=False):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        if data:
            p.add_argument("--data", required=True, help="dataset directory")
        if params:
            p.add_argument("--params", default=None, help="trained params .npz")

    common(sub.add_parser("gen-synth", help="generate a synthetic dataset"))
    p = sub.add_parser("train", help="train and evaluate one configuration")
    common(p, data=True)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p = sub.add_parser("eval", help="evaluate saved parameters")
    common(p, data=True, params=True)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p = sub.add_parser("ablate", help="train every ablation variant")
    common(p, data=True)
    p = sub.add_parser("alpha-sweep", help="sweep the alignment weight")
    common(p, data=True)
    p = sub.add_parser("grad-check", help="full-model finite-difference check")
    p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("mi-check", help="information chain-rule identity check")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("analyze-kde", help="export modality KDE curves")
    common(p, data=True, params=True)
    return parser


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "alpha-sweep": cmd_alpha_sweep,
    "grad-check": cmd_grad_check,
    "mi-check": cmd_mi_check,
    "analyze-kde": cmd_analyze_kde,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
