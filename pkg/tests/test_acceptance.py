"""Acceptance gate: one test per criterion, each printing a PASS line
with the measured quantity. The synthetic end-to-end runs are shared
through session fixtures, so the expensive training happens once per
configuration.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""
import json
import os
import time

import numpy as np
import pytest

import dytag.autodiff as ad
from dytag.analysis import BatchSpec, kde_overlap, token_modality_values
from dytag.autodiff import Tape
from dytag.fusion import (DiscreteJoint, LossConfig, bce_link_loss,
                          distribution_loss, instance_loss, mi_chain_check)
from dytag.graph import (AuditingNeighborIndex, build_neighbor_index,
                         chronological_split, recent_behaviors,
                         recent_neighbors)
from dytag.metrics import auc, average_precision, spearman
from dytag.model import Model
from dytag.rng import RunRng
from dytag.synthetic import SynthConfig, benchmark_config, generate
from dytag.training import (_batch_losses, evaluate_link, history_csv,
                            sample_negatives, train)

SEED = 7


def report(line: str) -> None:
    print(f"\n[PASS] {line}")


# ---------------------------------------------------------------------------
# shared synthetic benchmark


@pytest.fixture(scope="session")
def benchmark():
    dataset, sidecar = generate(SynthConfig(seed=SEED))
    split = chronological_split(dataset, (0.7, 0.15, 0.15))
    index = build_neighbor_index(dataset.events, dataset.num_nodes)
    return dataset, split, index


@pytest.fixture(scope="session")
def full_run(benchmark):
    dataset, split, index = benchmark
    cfg = benchmark_config(seed=SEED)
    t0 = time.time()
    model, rep = train(dataset, split, cfg, index)
    elapsed = time.time() - t0
    inductive = evaluate_link(model, dataset, split, "inductive", cfg, index)
    return dict(model=model, report=rep, config=cfg, elapsed=elapsed,
                inductive=inductive)


def _variant_inductive(benchmark, variant):
    dataset, split, index = benchmark
    cfg = benchmark_config(seed=SEED, ablation_variant=variant)
    model, _ = train(dataset, split, cfg, index)
    return evaluate_link(model, dataset, split, "inductive", cfg, index).auc


@pytest.fixture(scope="session")
def variant_aucs(benchmark):
    return {v: _variant_inductive(benchmark, v)
            for v in ("structural_only", "no_textual", "no_temporal")}


# ---------------------------------------------------------------------------
# criterion: full-model gradient correctness


def test_full_model_gradient_check():
    t0 = time.time()
    synth = SynthConfig(num_nodes=12, num_communities=3, num_events=40,
                        feat_dim=5, seed=3)
    dataset, _ = generate(synth)
    index = build_neighbor_index(dataset.events, dataset.num_nodes)
    cfg = benchmark_config(seed=3, iota=20.0, d_t=4, d_internal=6, d_struct=8,
                           ffn_hidden=10, decoder_hidden=10, k_neighbors=3,
                           L_behaviors=3, dropout=0.0, batch_size=4)
    model = Model(cfg.encoder_config(dataset), seed=3, decoder_hidden=10)
    lo, hi = len(dataset) - 4, len(dataset)
    negs = sample_negatives(dataset.dsts[lo:hi], dataset.num_nodes,
                            RunRng(3).stream("neg/check"))

    def loss_fn():
        total, _, _ = _batch_losses(model, dataset, index, lo, hi, negs,
                                    LossConfig(alpha=0.2), "link", False, 0)
        return total

    err = ad.finite_diff_check(loss_fn, model.params(), epsilon=1e-6)
    elapsed = time.time() - t0
    assert err < 1e-5
    assert elapsed < 30.0
    report(f"gradient check: max relative error {err:.2e} < 1e-5 "
           f"in {elapsed:.1f}s (< 30s)")


# ---------------------------------------------------------------------------
# criterion: loss identities


def test_loss_identities():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((6, 5))
    d0 = distribution_loss(ad.constant(z), ad.constant(z)).item()
    assert abs(d0) <= 1e-12
    same = instance_loss(ad.constant(z), ad.constant(z)).item()
    opposite = instance_loss(ad.constant(z), ad.constant(-z)).item()
    orth = instance_loss(ad.constant(np.array([[1.0, 0.0], [0.0, 2.0]])),
                         ad.constant(np.array([[0.0, 3.0], [4.0, 0.0]]))).item()
    assert abs(same - 0.0) <= 1e-12
    assert abs(opposite - 2.0) <= 1e-12
    assert abs(orth - 1.0) <= 1e-12
    for a, b in ((z, rng.standard_normal((6, 5))),):
        val = instance_loss(ad.constant(a), ad.constant(b)).item()
        assert 0.0 <= val <= 2.0
    zeros = ad.constant(np.zeros((8, 1)))
    bce = bce_link_loss(zeros, zeros).item()
    assert abs(bce - np.log(2.0)) <= 1e-12
    report(f"loss identities: dist(Z,Z)={d0!r}, instance cases "
           f"({same:.0f},{opposite:.0f},{orth:.0f}), bce(0)=ln2±{abs(bce - np.log(2)):.1e}")


# ---------------------------------------------------------------------------
# criterion: information chain-rule identity


def test_information_identity():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        shape = (int(rng.integers(2, 4)), int(rng.integers(2, 4)),
                 int(rng.integers(2, 4)))
        table = rng.random(shape)
        table /= table.sum()
        lhs, rhs, _ = mi_chain_check(DiscreteJoint(table))  # relabeling checked inside
        worst = max(worst, abs(lhs - rhs))
    assert worst < 1e-10
    xor = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            xor[i, j, i ^ j] = 0.25
    lhs, rhs, cond = mi_chain_check(DiscreteJoint(xor))
    ln2 = np.log(2.0)
    assert abs((rhs - cond) - 0.0) <= 1e-12   # I(Zs;Y)
    assert abs(cond - ln2) <= 1e-12
    assert abs(lhs - ln2) <= 1e-12
    report(f"information identity: max |lhs-rhs| {worst:.1e} < 1e-10 over 50 joints; "
           f"XOR gives (0, ln2, ln2) exactly")


# ---------------------------------------------------------------------------
# criterion: metric oracles


def test_metric_oracles():
    rng = np.random.default_rng(2)
    worst_auc = worst_ap = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        scores = rng.integers(0, 6, size=n) / 5.0  # heavy ties
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        wins = sum(1.0 for p in pos for q in neg if p > q)
        ties = sum(1.0 for p in pos for q in neg if p == q)
        oracle_auc = (wins + 0.5 * ties) / (len(pos) * len(neg))
        worst_auc = max(worst_auc, abs(auc(scores, labels) - oracle_auc))
        order = sorted(range(n), key=lambda i: (-scores[i], i))
        found, precs = 0, []
        for rank, i in enumerate(order, start=1):
            if labels[i] == 1:
                found += 1
                precs.append(found / rank)
        worst_ap = max(worst_ap, abs(average_precision(scores, labels) -
                                     sum(precs) / len(precs)))
    assert worst_auc < 1e-12 and worst_ap < 1e-12
    assert auc(np.full(10, 0.3), np.arange(10) % 2) == 0.5
    report(f"metric oracles: 1000 random sets, max |auc err| {worst_auc:.1e}, "
           f"max |ap err| {worst_ap:.1e}; all-ties auc = 0.5")


# ---------------------------------------------------------------------------
# criterion: fusion boundary


def test_fusion_boundary_beta_zero(benchmark):
    dataset, split, index = benchmark
    cfg = benchmark_config(seed=SEED, ablation_variant="structural_only")
    model = Model(cfg.encoder_config(dataset), seed=SEED,
                  decoder_hidden=cfg.decoder_hidden, variant="structural_only")
    assert float(model.fusion.beta.data) == 0.0 and not model.fusion.beta.trainable
    lo = split.test[0]
    ids = dataset.srcs[lo:lo + 64]
    ts = dataset.ts[lo:lo + 64]
    tokens = model.encode_batch(dataset, index, ids, ts)
    assert tokens.Z.data.tobytes() == tokens.Zs.data.tobytes()
    report("fusion boundary: beta=0 embeddings bit-identical to structural tokens "
           f"({tokens.Z.data.size} entries)")


# ---------------------------------------------------------------------------
# criterion: neighbor/behavior oracles and leakage audit


def test_neighbor_queries_and_leakage(benchmark):
    rng = np.random.default_rng(3)
    from dytag.graph import DyTagDataset, FeatureTable, TemporalEvent
    ts = np.sort(rng.uniform(0, 50, 200))
    events = [TemporalEvent(int(rng.integers(0, 20)), int(rng.integers(0, 20)),
                            float(ts[i]), 0, i) for i in range(200)]
    index = build_neighbor_index(events, 20)
    raw = [(e.src, e.dst, e.t, e.edge_feat_row) for e in events]
    for q in range(1000):
        u = int(rng.integers(0, 20))
        t = float(rng.uniform(-1, 55))
        k = int(rng.integers(1, 9))
        oracle = sorted(((v, et, er) for (s, d, et, er) in raw
                         for (me, v) in ((s, d), (d, s)) if me == u and et < t),
                        key=lambda x: x[1])[-k:]
        assert recent_neighbors(index, u, t, k) == oracle
        iota = float(rng.uniform(0.5, 20))
        limit = int(rng.integers(1, 6))
        b_oracle = sorted(et for (s, d, et, er) in raw for me in (s, d)
                          if me == u and t - iota < et < t)[-limit:]
        got = recent_behaviors(index, u, t, iota, limit)
        assert np.allclose(got, b_oracle)

    dataset, split, full_index = benchmark
    audit = AuditingNeighborIndex(full_index)
    cfg = benchmark_config(seed=SEED)
    model = Model(cfg.encoder_config(dataset), seed=SEED,
                  decoder_hidden=cfg.decoder_hidden)
    evaluate_link(model, dataset, split, "transductive", cfg, index=audit)
    assert audit.queries > 0 and audit.violations == 0
    report(f"neighbor/behavior queries match brute force on 1000 queries; "
           f"leakage audit clean over {audit.queries} evaluation queries")


# ---------------------------------------------------------------------------
# criterion: end-to-end synthetic benchmark


def test_end_to_end_benchmark(full_run, variant_aucs):
    full_auc = full_run["inductive"].auc
    assert len(full_run["report"].history) <= 50
    assert full_run["elapsed"] < 600.0
    assert full_auc >= 0.90
    assert variant_aucs["structural_only"] <= full_auc - 0.03
    assert variant_aucs["no_textual"] <= full_auc
    assert variant_aucs["no_temporal"] <= full_auc
    report(f"end-to-end: full inductive AUC {full_auc:.4f} >= 0.90 in "
           f"{len(full_run['report'].history)} epochs / {full_run['elapsed']:.0f}s; "
           f"structural_only {variant_aucs['structural_only']:.4f} (gap >= 0.03), "
           f"no_textual {variant_aucs['no_textual']:.4f}, "
           f"no_temporal {variant_aucs['no_temporal']:.4f}")


# ---------------------------------------------------------------------------
# criterion: alignment dynamics


def test_alignment_dynamics(full_run, tmp_path):
    history = full_run["report"].history
    path = tmp_path / "history.csv"
    from dytag.training import write_history
    write_history(path, history)
    rows = [line.split(",") for line in
            path.read_text().strip().split("\n")[1:]]
    align = [float(r[2]) for r in rows]
    dev = [float(r[3]) for r in rows]
    rho = spearman(align, dev)
    assert rho < 0.0
    report(f"alignment dynamics: Spearman(align_loss, dev_auc) = {rho:.3f} < 0 "
           f"over {len(align)} epochs, from exported history.csv")


# ---------------------------------------------------------------------------
# criterion: token alignment


def test_token_alignment_overlap(full_run, benchmark):
    dataset, split, index = benchmark
    cfg = full_run["config"]
    spec = BatchSpec(start=split.test[0], count=2 * cfg.batch_size,
                     batch_size=cfg.batch_size)
    fresh = Model(cfg.encoder_config(dataset), seed=SEED,
                  decoder_hidden=cfg.decoder_hidden)
    pools0 = token_modality_values(fresh, dataset, spec, index)
    before = kde_overlap(pools0["temporal"], pools0["textual"])
    pools1 = token_modality_values(full_run["model"], dataset, spec, index)
    after = kde_overlap(pools1["temporal"], pools1["textual"])
    assert after > before
    report(f"token alignment: temporal/textual KDE overlap {before:.3f} at epoch 0 "
           f"-> {after:.3f} after training with alpha=0.2")


# ---------------------------------------------------------------------------
# criterion: alpha sweep


@pytest.fixture(scope="session")
def sweep_rows(benchmark):
    dataset, split, index = benchmark
    from dytag.training import alpha_sweep
    return alpha_sweep(dataset, split, benchmark_config(seed=SEED), index=index)


def test_alpha_sweep_robustness(sweep_rows, tmp_path):
    path = tmp_path / "alpha_sweep.csv"
    with open(path, "w") as f:
        f.write("alpha,inductive_auc\n")
        for a, score in sweep_rows:
            f.write(f"{a!r},{score!r}\n")
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 6
    low = {a: s for a, s in sweep_rows if a in (0.1, 0.2, 0.3)}
    spread = max(low.values()) - min(low.values())
    assert spread < 0.05
    report(f"alpha sweep: 5-row CSV written; inductive AUC spread over "
           f"alpha in {{0.1,0.2,0.3}} is {spread:.4f} < 0.05 "
           f"(values {sorted(low.items())})")


# ---------------------------------------------------------------------------
# criterion: determinism


def test_byte_identical_reruns(tmp_path):
    from dytag.cli import main
    cfg = {
        "train": {"iota": 2.0, "seed": SEED, "batch_size": 100, "max_epochs": 2,
                  "lr": 1e-3, "k_neighbors": 5, "L_behaviors": 5, "d_t": 8,
                  "d_internal": 8, "d_struct": 16, "ffn_hidden": 12,
                  "decoder_hidden": 12},
        "synth": {"num_nodes": 60, "num_communities": 4, "num_events": 600,
                  "feat_dim": 8, "seed": SEED},
    }
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg))
    data = str(tmp_path / "data")
    assert main(["gen-synth", "--config", str(cfg_path), "--out", data]) == 0
    blobs = []
    for name in ("r1", "r2"):
        out = str(tmp_path / name)
        assert main(["train", "--config", str(cfg_path), "--data", data,
                     "--out", out]) == 0
        blobs.append((open(os.path.join(out, "history.csv"), "rb").read(),
                      open(os.path.join(out, "report.json"), "rb").read()))
    assert blobs[0][0] == blobs[1][0]
    assert blobs[0][1] == blobs[1][1]
    report(f"determinism: two identical runs produced byte-identical history.csv "
           f"({len(blobs[0][0])} bytes) and report.json ({len(blobs[0][1])} bytes)")
