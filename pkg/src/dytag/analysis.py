"""Kernel density estimates of modality value distributions, before and
after training, plus the CSV exports that downstream plotting consumes.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .encoders import TimeEncoder
from .graph import DyTagDataset, NeighborIndex, build_neighbor_index
from .model import Model
from .training import TrainConfig


@dataclass
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def _silverman(values: np.ndarray) -> float:
    n = len(values)
    sigma = values.std(ddof=1) if n > 1 else 0.0
    iqr = float(np.percentile(values, 75) - np.percentile(values, 25))
    h = 0.9 * min(sigma, iqr / 1.34) * n ** (-0.2)
    return max(h, 1e-6)


def _gauss_density(values: np.ndarray, grid: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros(len(grid))
    norm = 1.0 / (len(values) * h * np.sqrt(2.0 * np.pi))
    for lo in range(0, len(values), 4096):  # chunked: grid x n can be large
        chunk = values[lo:lo + 4096]
        z = (grid[:, None] - chunk[None, :]) / h
        out += np.exp(-0.5 * z * z).sum(axis=1)
    return out * norm


def kde(values, grid_points: int = 256) -> KdeCurve:
    """Gaussian KDE with Silverman bandwidth on an even grid.

    The grid spans [min - 3h, max + 3h], which keeps the trapezoidal
    integral of the density within a couple percent of 1.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(values) == 0:
        raise ValueError("kde: empty input")
    if not np.isfinite(values).all():
        raise ValueError("kde: non-finite input")
    if grid_points < 2:
        raise ValueError("kde: need at least 2 grid points")
    h = _silverman(values)
    grid = np.linspace(values.min() - 3 * h, values.max() + 3 * h, grid_points)
    return KdeCurve(grid=grid, density=_gauss_density(values, grid, h), bandwidth=h)


def kde_overlap(values_a, values_b, grid_points: int = 512) -> float:
    """Overlap coefficient: integral of min(f_a, f_b) on a shared grid."""
    a = np.asarray(values_a, dtype=np.float64).reshape(-1)
    b = np.asarray(values_b, dtype=np.float64).reshape(-1)
    ha, hb = _silverman(a), _silverman(b)
    pad = 3 * max(ha, hb)
    lo = min(a.min(), b.min()) - pad
    hi = max(a.max(), b.max()) + pad
    grid = np.linspace(lo, hi, grid_points)
    fa = _gauss_density(a, grid, ha)
    fb = _gauss_density(b, grid, hb)
    return float(np.trapezoid(np.minimum(fa, fb), grid))


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    span = values.max() - values.min()
    if span == 0.0:
        return np.zeros_like(values)
    return (values - values.min()) / span


@dataclass
class BatchSpec:
    """Which chronological event slice feeds the analysis batches."""
    start: int
    count: int
    batch_size: int = 200


def _batch_node_lists(dataset: DyTagDataset, spec: BatchSpec):
    stop = min(len(dataset), spec.start + spec.count)
    for lo in range(spec.start, stop, spec.batch_size):
        hi = min(lo + spec.batch_size, stop)
        ids = np.concatenate([dataset.srcs[lo:hi], dataset.dsts[lo:hi]])
        ts = np.concatenate([dataset.ts[lo:hi], dataset.ts[lo:hi]])
        yield ids, ts


def original_modality_values(dataset: DyTagDataset, spec: BatchSpec,
                             config: TrainConfig,
                             index: NeighborIndex | None = None) -> dict[str, np.ndarray]:
    """Flattened raw-feature scalars per modality, min-max normalized.

    Temporal and structural rows use the deterministic initial time
    encoding, so no trained parameters are involved.
    """
    if index is None:
        index = build_neighbor_index(dataset.events, dataset.num_nodes)
    time_enc = TimeEncoder("analysis.time", config.d_t)
    omega = time_enc.omega.value.data
    bias = time_enc.b.value.data
    textual, temporal, structural = [], [], []
    for ids, ts in _batch_node_lists(dataset, spec):
        textual.append(dataset.node_features.data[ids].reshape(-1))
        for u, t in zip(ids, ts):
            beh = index.times_in_window(int(u), float(t), config.iota, config.L_behaviors)
            if len(beh):
                now = np.cos(omega * t + bias)
                past = np.cos(omega[None, :] * beh[:, None] + bias)
                temporal.append(np.concatenate(
                    [np.tile(now, (len(beh), 1)), past], axis=1).reshape(-1))
            _, ntimes, erows = index.slice_before(int(u), float(t), config.k_neighbors)
            if len(erows):
                dts = t - ntimes
                phi = np.cos(omega[None, :] * dts[:, None] + bias)
                structural.append(np.concatenate(
                    [dataset.edge_features.data[erows], phi], axis=1).reshape(-1))
    out = {
        "textual": np.concatenate(textual),
        "temporal": np.concatenate(temporal) if temporal else np.zeros(1),
        "structural": np.concatenate(structural) if structural else np.zeros(1),
    }
    return {k: minmax_normalize(v) for k, v in out.items()}


def token_modality_values(model: Model, dataset: DyTagDataset, spec: BatchSpec,
                          index: NeighborIndex | None = None) -> dict[str, np.ndarray]:
    """Flattened learned-token scalars per modality, min-max normalized."""
    if index is None:
        index = build_neighbor_index(dataset.events, dataset.num_nodes)
    pools: dict[str, list[np.ndarray]] = {
        "textual": [], "temporal": [], "structural": [], "fused": []}
    for ids, ts in _batch_node_lists(dataset, spec):
        tokens = model.encode_batch(dataset, index, ids, ts)
        pools["textual"].append(tokens.Zx.data.reshape(-1))
        pools["temporal"].append(tokens.Ztau.data.reshape(-1))
        pools["structural"].append(tokens.Zs.data.reshape(-1))
        pools["fused"].append(tokens.Zpi.data.reshape(-1))
    return {k: minmax_normalize(np.concatenate(v)) for k, v in pools.items()}


def write_kde_csv(path, curve: KdeCurve) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("x,density\n")
        for x, d in zip(curve.grid, curve.density):
            f.write(f"{x!r},{d!r}\n")


def export_modality_distributions(model: Model | None, dataset: DyTagDataset,
                                  spec: BatchSpec, out_dir, config: TrainConfig,
                                  grid_points: int = 256) -> dict[str, str]:
    """Write one `kde_<modality>_<orig|token>.csv` per modality curve.

    With `model=None` the curves describe the raw input features; with a
    trained model they describe the learned tokens (plus the fused
    internal token, for the instance-alignment view).
    """
    os.makedirs(out_dir, exist_ok=True)
    if model is None:
        mode = "orig"
        pools = original_modality_values(dataset, spec, config)
    else:
        mode = "token"
        pools = token_modality_values(model, dataset, spec)
    paths = {}
    for name, values in pools.items():
        curve = kde(values, grid_points)
        path = os.path.join(out_dir, f"kde_{name}_{mode}.csv")
        write_kde_csv(path, curve)
        paths[name] = path
    return paths


def token_alignment_overlap(model: Model, dataset: DyTagDataset, spec: BatchSpec,
                            index: NeighborIndex | None = None) -> float:
    """KDE overlap between normalized temporal and textual token values."""
    pools = token_modality_values(model, dataset, spec, index)
    return kde_overlap(pools["temporal"], pools["textual"])
