"""Token fusion, alignment and task losses, decoders, and the exact
discrete check of the information chain-rule identity behind the fusion
design.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor
from .encoders import FFNLayer, Initializer, ModalityTokens

log = logging.getLogger(__name__)


class FusionParams:
    """Learnable mixing scalars plus the internal-token projection."""

    def __init__(self, d_internal: int, d_struct: int, init: Initializer,
                 beta0: float = 1.0, gamma0: float = 1.0):
        if beta0 == 0.0:
            raise ValueError("beta must be initialized non-zero")
        self.beta = Param("fusion.beta", np.array(beta0))
        self.gamma = Param("fusion.gamma", np.array(gamma0))
        self.ffn_pi = FFNLayer("fusion.ffn_pi", d_internal, d_struct, init)

    def params(self) -> list[Param]:
        return [self.beta, self.gamma] + self.ffn_pi.params()


@dataclass
class LossConfig:
    alpha: float = 0.2

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


def fuse(tokens: ModalityTokens, params: FusionParams) -> ModalityTokens:
    """Fill Zpi = ffn_pi(Zx + gamma*Ztau) and Z = Zs + beta*Zpi."""
    if tokens.Zx.shape != tokens.Ztau.shape:
        raise ad.ShapeError(f"Zx {tokens.Zx.shape} vs Ztau {tokens.Ztau.shape}")
    tokens.Zpi = params.ffn_pi(ad.add(tokens.Zx, ad.scale(tokens.Ztau, params.gamma.value)))
    if tokens.Zpi.shape != tokens.Zs.shape:
        raise ad.ShapeError(f"Zpi {tokens.Zpi.shape} vs Zs {tokens.Zs.shape}")
    tokens.Z = ad.add(tokens.Zs, ad.scale(tokens.Zpi, params.beta.value))
    return tokens


def distribution_loss(ztau: Tensor, zx: Tensor) -> Tensor:
    """Squared distance between the batch means of the two token sets."""
    if ztau.shape != zx.shape:
        raise ad.ShapeError(f"shape mismatch: {ztau.shape} vs {zx.shape}")
    if ztau.shape[0] == 0:
        raise ValueError("distribution_loss: empty batch")
    diff = ad.sub(ad.mean_rows_masked(ztau), ad.mean_rows_masked(zx))
    return ad.tsum(ad.square(diff))


def instance_loss(zpi: Tensor, zs: Tensor) -> Tensor:
    """1 - mean rowwise cosine; zero-norm rows count as cosine 0."""
    if zpi.shape != zs.shape:
        raise ad.ShapeError(f"shape mismatch: {zpi.shape} vs {zs.shape}")
    norms_pi = np.sqrt((zpi.data ** 2).sum(axis=-1))
    norms_s = np.sqrt((zs.data ** 2).sum(axis=-1))
    n_zero = int(((norms_pi == 0) | (norms_s == 0)).sum())
    if n_zero:
        log.warning("instance_loss: %d zero-norm row(s) treated as cosine 0", n_zero)
    cos = ad.cosine_rows(zpi, zs)
    mean_cos = ad.cmul(ad.tsum(cos), 1.0 / zpi.shape[0])
    return ad.sub(ad.constant(1.0), mean_cos)


def bce_link_loss(pos_logits: Tensor, neg_logits: Tensor) -> Tensor:
    """Mean binary cross-entropy over 1:1 positive/negative logits.

    Uses softplus(x) - x*y, the log-sum-exp form, so saturated logits
    stay finite.
    """
    n_pos = pos_logits.data.size
    n_neg = neg_logits.data.size
    if n_pos == 0 or n_neg == 0:
        raise ValueError("bce_link_loss: empty input")
    if n_pos != n_neg:
        raise ValueError(f"bce_link_loss: {n_pos} positives vs {n_neg} negatives")
    pos_term = ad.tsum(ad.sub(ad.softplus(pos_logits), pos_logits))
    neg_term = ad.tsum(ad.softplus(neg_logits))
    return ad.cmul(ad.add(pos_term, neg_term), 1.0 / (n_pos + n_neg))


def total_loss(task_loss: Tensor, dist: Tensor | None, inst: Tensor | None,
               config: LossConfig) -> Tensor:
    """task + alpha * (distribution + instance); drop terms passed as None."""
    parts = [p for p in (dist, inst) if p is not None]
    if not parts or config.alpha == 0.0:
        return task_loss
    align = parts[0] if len(parts) == 1 else ad.add(parts[0], parts[1])
    return ad.add(task_loss, ad.cmul(align, config.alpha))


class LinkDecoder:
    """Order-sensitive 2-layer feed-forward on [z_u || z_v] -> one logit."""

    def __init__(self, d_embed: int, hidden: int, init: Initializer, name: str = "link_dec"):
        self.lin1 = FFNLayer(f"{name}.lin1", 2 * d_embed, hidden, init)
        self.lin2 = FFNLayer(f"{name}.lin2", hidden, 1, init, activation="identity")

    def __call__(self, z_u: Tensor, z_v: Tensor) -> Tensor:
        return self.lin2(self.lin1(ad.concat_cols(z_u, z_v)))

    def params(self) -> list[Param]:
        return self.lin1.params() + self.lin2.params()


class EdgeClassDecoder:
    """As LinkDecoder but with one logit per edge class."""

    def __init__(self, d_embed: int, hidden: int, num_classes: int,
                 init: Initializer, name: str = "edge_dec"):
        self.lin1 = FFNLayer(f"{name}.lin1", 2 * d_embed, hidden, init)
        self.lin2 = FFNLayer(f"{name}.lin2", hidden, num_classes, init, activation="identity")

    def __call__(self, z_u: Tensor, z_v: Tensor) -> Tensor:
        return self.lin2(self.lin1(ad.concat_cols(z_u, z_v)))

    def params(self) -> list[Param]:
        return self.lin1.params() + self.lin2.params()


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer class labels against logit rows."""
    return ad.cross_entropy_rows(logits, labels)


# ---------------------------------------------------------------------------
# exact mutual-information identity on finite joints


class DiscreteJoint:
    """Probability table over triples (zs, zpi, y) of finite supports."""

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 3:
            raise ValueError(f"joint must be 3-d (zs, zpi, y), got shape {table.shape}")
        if (table < 0).any():
            raise ValueError("joint has negative entries")
        if abs(table.sum() - 1.0) > 1e-12:
            raise ValueError(f"joint sums to {table.sum()!r}, not 1")
        self.table = table


def _mi_terms(p: np.ndarray, q: np.ndarray) -> float:
    """Sum of p*log(p/q) over cells with p > 0 (natural log)."""
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def _conditional_mi(p: np.ndarray) -> float:
    """I(Zpi; Y | Zs) for a (zs, zpi, y) table, by enumeration."""
    p_s = p.sum(axis=(1, 2))
    p_spi = p.sum(axis=2)
    p_sy = p.sum(axis=1)
    q = (p_spi[:, :, None] * p_sy[:, None, :]) / np.where(p_s > 0, p_s, 1.0)[:, None, None]
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def mi_chain_check(joint: DiscreteJoint) -> tuple[float, float, float]:
    """Return (I((Zs,Zpi);Y), I(Zs;Y) + I(Zpi;Y|Zs), I(Zpi;Y|Zs)) in nats.

    Also re-derives the conditional term after a bijective relabeling of
    the Zpi support and fails loudly if it moved: a relabeling is lossless,
    so the conditional information must not change.
    """
    p = joint.table
    p_y = p.sum(axis=(0, 1))
    p_spi = p.sum(axis=2)
    lhs = _mi_terms(p, p_spi[:, :, None] * p_y[None, None, :])
    p_sy = p.sum(axis=1)
    p_s = p.sum(axis=(1, 2))
    i_s_y = _mi_terms(p_sy, p_s[:, None] * p_y[None, :])
    cond = _conditional_mi(p)
    for perm in (np.arange(p.shape[1])[::-1], np.roll(np.arange(p.shape[1]), 1)):
        relabeled = _conditional_mi(p[:, perm, :])
        if abs(relabeled - cond) > 1e-12:
            raise RuntimeError(
                f"conditional information changed under relabeling: {cond!r} -> {relabeled!r}")
    return lhs, i_s_y + cond, cond
