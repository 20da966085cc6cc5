"""Modality encoders: cosine time features, feed-forward and
self-attention layers, and the three token constructors (textual,
temporal, structural).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor
from .rng import RunRng


@dataclass
class EncoderConfig:
    d_node_feat: int
    d_edge_feat: int
    iota: float
    d_t: int = 100
    d_internal: int = 128
    d_struct: int = 768
    k_neighbors: int = 20
    L_behaviors: int = 20
    attn_heads: int = 2
    ffn_hidden: int = 512
    dropout: float = 0.1

    def __post_init__(self):
        for name in ("d_node_feat", "d_edge_feat", "d_t", "d_internal", "d_struct",
                     "k_neighbors", "L_behaviors", "attn_heads", "ffn_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.iota <= 0:
            raise ValueError("iota must be positive")
        if self.d_internal % self.attn_heads or self.d_struct % self.attn_heads:
            raise ValueError("token widths must be divisible by attn_heads")


@dataclass
class ModalityTokens:
    """Per-batch token matrices; Zpi and Z are filled by fusion."""
    Zx: Tensor
    Ztau: Tensor
    Zs: Tensor
    Zpi: Tensor | None = None
    Z: Tensor | None = None


class Initializer:
    """Glorot-uniform arrays from streams keyed by parameter name."""

    def __init__(self, run_rng: RunRng):
        self.run_rng = run_rng

    def dense(self, name: str, d_in: int, d_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (d_in + d_out))
        rng = self.run_rng.stream(f"init/{name}")
        return rng.uniform(-limit, limit, size=(d_in, d_out))


def _assert_finite(name: str, t: Tensor) -> None:
    if not np.isfinite(t.data).all():
        raise FloatingPointError(f"{name}: non-finite values in forward output")


class TimeEncoder:
    """phi(x)_i = cos(omega_i * x + b_i) with learnable omega, b.

    omega starts on a log-spaced grid of inverse timescales so the map
    resolves both short gaps and the full horizon before any training.
    """

    def __init__(self, name: str, d_t: int):
        self.d_t = d_t
        if d_t == 1:
            omega0 = np.array([1.0])
        else:
            omega0 = 10.0 ** np.linspace(1.0, -5.0, d_t)
        self.omega = Param(f"{name}.omega", omega0)
        self.b = Param(f"{name}.b", np.zeros(d_t))

    def encode(self, x: np.ndarray) -> Tensor:
        """Map an array of times/gaps (...,) to features (..., d_t)."""
        x = np.asarray(x, dtype=np.float64)[..., None]
        arg = ad.add(ad.mul(ad.constant(x), self.omega.value), self.b.value)
        return ad.cos(arg)

    def params(self) -> list[Param]:
        return [self.omega, self.b]


class FFNLayer:
    """Single dense layer: activation(x @ W + b)."""

    def __init__(self, name: str, d_in: int, d_out: int, init: Initializer,
                 activation: str = "relu"):
        if activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {activation!r}")
        self.W = Param(f"{name}.W", init.dense(name, d_in, d_out))
        self.b = Param(f"{name}.b", np.zeros(d_out))
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.add(ad.matmul(x, self.W.value), self.b.value)
        return ad.relu(out) if self.activation == "relu" else out

    def params(self) -> list[Param]:
        return [self.W, self.b]


class SelfAttentionBlock:
    """One attention + feed-forward block with two residual connections.

    Works on a single sequence (S, d) or a batch of sequences (B, S, d).
    `mask` marks valid key positions; masked keys get exactly zero
    weight and the weighted sum accumulates sequentially, so extra
    padding rows cannot change valid outputs even at the bit level.
    """

    def __init__(self, name: str, d_model: int, init: Initializer,
                 heads: int = 2, ffn_hidden: int = 512, dropout: float = 0.1):
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.dropout = dropout
        self.proj: list[tuple[Param, Param, Param, Param, Param, Param]] = []
        for h in range(heads):
            base = f"{name}.head{h}"
            self.proj.append((
                Param(f"{base}.Wq", init.dense(f"{base}.Wq", d_model, self.d_head)),
                Param(f"{base}.bq", np.zeros(self.d_head)),
                Param(f"{base}.Wk", init.dense(f"{base}.Wk", d_model, self.d_head)),
                Param(f"{base}.bk", np.zeros(self.d_head)),
                Param(f"{base}.Wv", init.dense(f"{base}.Wv", d_model, self.d_head)),
                Param(f"{base}.bv", np.zeros(self.d_head)),
            ))
        self.Wo = Param(f"{name}.Wo", init.dense(f"{name}.Wo", d_model, d_model))
        self.bo = Param(f"{name}.bo", np.zeros(d_model))
        self.W1 = Param(f"{name}.W1", init.dense(f"{name}.W1", d_model, ffn_hidden))
        self.b1 = Param(f"{name}.b1", np.zeros(ffn_hidden))
        self.W2 = Param(f"{name}.W2", init.dense(f"{name}.W2", ffn_hidden, d_model))
        self.b2 = Param(f"{name}.b2", np.zeros(d_model))

    def __call__(self, x: Tensor, mask: np.ndarray | None = None,
                 training: bool = False, drop_rng: np.random.Generator | None = None) -> Tensor:
        key_mask = None if mask is None else np.asarray(mask, dtype=bool)[..., None, :]
        head_outs = []
        for Wq, bq, Wk, bk, Wv, bv in self.proj:
            q = ad.add(ad.matmul(x, Wq.value), bq.value)
            k = ad.add(ad.matmul(x, Wk.value), bk.value)
            v = ad.add(ad.matmul(x, Wv.value), bv.value)
            scores = ad.cmul(ad.matmul(q, ad.transpose_last2(k)), 1.0 / np.sqrt(self.d_head))
            attn = ad.softmax_rows(scores, key_mask)
            attn = ad.dropout(attn, self.dropout, drop_rng, training)
            if mask is None:
                head_outs.append(ad.matmul(attn, v))
            else:
                head_outs.append(ad.seq_weighted_sum(attn, v))
        merged = head_outs[0]
        for h in head_outs[1:]:
            merged = ad.concat_cols(merged, h)
        attended = ad.add(ad.matmul(merged, self.Wo.value), self.bo.value)
        x1 = ad.add(x, attended)
        hidden = ad.relu(ad.add(ad.matmul(x1, self.W1.value), self.b1.value))
        hidden = ad.dropout(hidden, self.dropout, drop_rng, training)
        return ad.add(x1, ad.add(ad.matmul(hidden, self.W2.value), self.b2.value))

    def params(self) -> list[Param]:
        out = [p for group in self.proj for p in group]
        out += [self.Wo, self.bo, self.W1, self.b1, self.W2, self.b2]
        return out


class TextualEncoder:
    """Project node feature rows and attend across the batch."""

    def __init__(self, cfg: EncoderConfig, init: Initializer):
        self.ffn = FFNLayer("textual.ffn", cfg.d_node_feat, cfg.d_internal, init)
        self.sam = SelfAttentionBlock("textual.sam", cfg.d_internal, init,
                                      cfg.attn_heads, cfg.ffn_hidden, cfg.dropout)

    def __call__(self, node_rows: np.ndarray, training: bool = False,
                 drop_rng: np.random.Generator | None = None) -> Tensor:
        if node_rows.shape[0] == 0:
            raise ValueError("textual encoder needs a non-empty batch")
        out = self.sam(self.ffn(ad.constant(node_rows)), None, training, drop_rng)
        _assert_finite("textual tokens", out)
        return out

    def params(self) -> list[Param]:
        return self.ffn.params() + self.sam.params()


class TemporalEncoder:
    """Encode recent behavior timestamps per node, pool, attend over batch.

    Each behavior t' of node u at time t becomes [phi(t) || phi(t')];
    rows are zero-padded to the longest list with a validity mask, fed
    through a dense layer, mean-pooled over valid rows, and the pooled
    batch matrix goes through self-attention. A node with no behaviors
    contributes the single synthetic row [phi(t) || 0].
    """

    def __init__(self, cfg: EncoderConfig, time_enc: TimeEncoder, init: Initializer):
        self.time_enc = time_enc
        self.ffn = FFNLayer("temporal.ffn", 2 * cfg.d_t, cfg.d_internal, init)
        self.sam = SelfAttentionBlock("temporal.sam", cfg.d_internal, init,
                                      cfg.attn_heads, cfg.ffn_hidden, cfg.dropout)

    def pooled_rows(self, behavior_lists: list[np.ndarray],
                    t_batch: np.ndarray) -> Tensor:
        """Per-node pad -> dense -> masked-mean stage, before batch attention."""
        B = len(behavior_lists)
        L = max(1, max((len(b) for b in behavior_lists), default=0))
        t_mat = np.zeros((B, L))
        mask = np.zeros((B, L), dtype=bool)
        synthetic = np.zeros((B, L), dtype=bool)
        for i, beh in enumerate(behavior_lists):
            n = len(beh)
            if n:
                t_mat[i, :n] = beh
                mask[i, :n] = True
            else:
                mask[i, 0] = True
                synthetic[i, 0] = True
        phi_now = self.time_enc.encode(np.broadcast_to(t_batch[:, None], (B, L)))
        phi_beh = self.time_enc.encode(t_mat)
        # synthetic rows pair phi(t) with a zero vector, not phi(0)
        phi_beh = ad.mul(phi_beh, ad.constant(~synthetic[..., None]))
        rows = ad.concat_cols(phi_now, phi_beh)
        return ad.mean_rows_masked(self.ffn(rows), mask)

    def __call__(self, behavior_lists: list[np.ndarray], t_batch: np.ndarray,
                 training: bool = False,
                 drop_rng: np.random.Generator | None = None) -> Tensor:
        out = self.sam(self.pooled_rows(behavior_lists, t_batch), None,
                       training, drop_rng)
        _assert_finite("temporal tokens", out)
        return out

    def params(self) -> list[Param]:
        return self.ffn.params() + self.sam.params()


class StructuralEncoder:
    """Encode each node's recent neighbor sequence and pool it.

    Neighbor j of node u becomes [edge_feature_j || phi(dt_j)], is
    linearly projected to the structural width, attends within the
    node's own sequence, and valid rows are mean-pooled. A node with no
    history contributes the projection of a single all-zero row.
    """

    def __init__(self, cfg: EncoderConfig, time_enc: TimeEncoder, init: Initializer):
        self.time_enc = time_enc
        self.proj = FFNLayer("structural.proj", cfg.d_edge_feat + cfg.d_t,
                             cfg.d_struct, init, activation="identity")
        self.sam = SelfAttentionBlock("structural.sam", cfg.d_struct, init,
                                      cfg.attn_heads, cfg.ffn_hidden, cfg.dropout)

    def __call__(self, neighbor_lists: list[tuple[np.ndarray, np.ndarray]],
                 edge_features: np.ndarray, training: bool = False,
                 drop_rng: np.random.Generator | None = None) -> Tensor:
        B = len(neighbor_lists)
        K = max(1, max((len(rows) for rows, _ in neighbor_lists), default=0))
        d_e = edge_features.shape[1]
        feat = np.zeros((B, K, d_e))
        dt_mat = np.zeros((B, K))
        mask = np.zeros((B, K), dtype=bool)
        synthetic = np.zeros((B, K), dtype=bool)
        for i, (rows, dts) in enumerate(neighbor_lists):
            n = len(rows)
            if n:
                feat[i, :n] = edge_features[rows]
                dt_mat[i, :n] = dts
                mask[i, :n] = True
            else:
                mask[i, 0] = True
                synthetic[i, 0] = True
        phi_dt = self.time_enc.encode(dt_mat)
        phi_dt = ad.mul(phi_dt, ad.constant(~synthetic[..., None]))
        x = self.proj(ad.concat_cols(ad.constant(feat), phi_dt))
        attended = self.sam(x, mask, training, drop_rng)
        out = ad.mean_rows_masked(attended, mask)
        _assert_finite("structural tokens", out)
        return out

    def params(self) -> list[Param]:
        return self.proj.params() + self.sam.params()
