"""Full link/edge model: shared time encoder, three modality encoders,
fusion, and task decoders, with ablation-variant wiring.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor
from .encoders import (EncoderConfig, Initializer, ModalityTokens,
                       StructuralEncoder, TemporalEncoder, TextualEncoder,
                       TimeEncoder)
from .fusion import EdgeClassDecoder, FusionParams, LinkDecoder, fuse
from .graph import DyTagDataset, NeighborIndex
from .rng import RunRng

VARIANTS = ("full", "no_temporal", "no_textual", "structural_only",
            "no_align_d", "no_align_i", "no_align")


class Model:
    """Owns every trainable parameter and the per-batch token pipeline."""

    def __init__(self, cfg: EncoderConfig, seed: int, decoder_hidden: int = 512,
                 num_classes: int | None = None, variant: str = "full"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.cfg = cfg
        self.variant = variant
        self.run_rng = RunRng(seed)
        init = Initializer(self.run_rng)
        self.time_enc = TimeEncoder("time", cfg.d_t)
        self.textual = TextualEncoder(cfg, init)
        self.temporal = TemporalEncoder(cfg, self.time_enc, init)
        self.structural = StructuralEncoder(cfg, self.time_enc, init)
        self.fusion = FusionParams(cfg.d_internal, cfg.d_struct, init)
        self.link_dec = LinkDecoder(cfg.d_struct, decoder_hidden, init)
        self.edge_dec = (EdgeClassDecoder(cfg.d_struct, decoder_hidden, num_classes, init)
                         if num_classes else None)
        if variant == "no_temporal":
            self.fusion.gamma.value.data[...] = 0.0
            self.fusion.gamma.trainable = False
        if variant == "structural_only":
            self.fusion.beta.value.data[...] = 0.0
            self.fusion.beta.trainable = False

    # -- parameter bookkeeping ------------------------------------------

    def params(self) -> list[Param]:
        out = self.time_enc.params() + self.textual.params() + self.temporal.params()
        out += self.structural.params() + self.fusion.params() + self.link_dec.params()
        if self.edge_dec is not None:
            out += self.edge_dec.params()
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.data.copy() for p in self.params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.params()}
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"parameter set mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, arr in state.items():
            p = params[name]
            if p.value.data.shape != arr.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.value.data.shape}")
            p.value.data[...] = arr

    # -- forward ---------------------------------------------------------

    def gather_inputs(self, index: NeighborIndex, node_ids: np.ndarray,
                      times: np.ndarray) -> tuple[list, list]:
        """Collect per-node neighbor sequences and behavior timestamps.

        Reads only strictly-before-t history through the index.
        """
        cfg = self.cfg
        neighbor_lists = []
        behavior_lists = []
        for u, t in zip(node_ids, times):
            ids, ntimes, erows = index.slice_before(int(u), float(t), cfg.k_neighbors)
            neighbor_lists.append((erows, t - ntimes))
            behavior_lists.append(index.times_in_window(
                int(u), float(t), cfg.iota, cfg.L_behaviors))
        return neighbor_lists, behavior_lists

    def encode_batch(self, dataset: DyTagDataset, index: NeighborIndex,
                     node_ids: np.ndarray, times: np.ndarray, tag: str = "batch",
                     training: bool = False, step: int = 0) -> ModalityTokens:
        """Build the fused token matrices for one batch node list."""
        cfg = self.cfg
        B = len(node_ids)
        neighbor_lists, behavior_lists = self.gather_inputs(index, node_ids, times)

        def drop_rng(site: str):
            if not training:
                return None
            return self.run_rng.stream(f"dropout/{tag}/{site}", step)

        if self.variant in ("no_textual", "structural_only"):
            zx = ad.constant(np.zeros((B, cfg.d_internal)))
        else:
            zx = self.textual(dataset.node_features.data[node_ids],
                              training, drop_rng("textual"))
        if self.variant in ("no_temporal", "structural_only"):
            ztau = ad.constant(np.zeros((B, cfg.d_internal)))
        else:
            ztau = self.temporal(behavior_lists, times, training, drop_rng("temporal"))
        zs = self.structural(neighbor_lists, dataset.edge_features.data,
                             training, drop_rng("structural"))
        tokens = ModalityTokens(Zx=zx, Ztau=ztau, Zs=zs)
        if self.variant == "structural_only":
            tokens.Zpi = ad.constant(np.zeros((B, cfg.d_struct)))
            tokens.Z = ad.add(tokens.Zs, ad.scale(tokens.Zpi, self.fusion.beta.value))
            return tokens
        return fuse(tokens, self.fusion)

    def link_logits(self, z_u: Tensor, z_v: Tensor) -> Tensor:
        return self.link_dec(z_u, z_v)

    def edge_logits(self, z_u: Tensor, z_v: Tensor) -> Tensor:
        if self.edge_dec is None:
            raise RuntimeError("model was built without an edge-class decoder")
        return self.edge_dec(z_u, z_v)
