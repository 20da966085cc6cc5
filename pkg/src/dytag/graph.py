"""Event-stream datasets: loading, validation, splitting, neighbor indexing.

A dataset is a time-sorted list of (src, dst, t, label, edge_feat_row)
events plus two dense feature tables standing in for precomputed text
embeddings of nodes and edges.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"DYTF"
FBIN_VERSION = 1


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries file path and row/offset."""


@dataclass(frozen=True)
class TemporalEvent:
    src: int
    dst: int
    t: float
    label: int
    edge_feat_row: int


class FeatureTable:
    """Dense row-major float64 matrix, one row per node or edge."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise DatasetFormatError(f"feature table must be 2-d, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise DatasetFormatError("feature table contains non-finite values")
        self.data = np.ascontiguousarray(data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


class DyTagDataset:
    """Validated, time-sorted event stream with node/edge feature tables."""

    def __init__(self, events: list[TemporalEvent], node_features: FeatureTable,
                 edge_features: FeatureTable, num_nodes: int | None = None):
        self.events = list(events)
        self.node_features = node_features
        self.edge_features = edge_features
        n_referenced = 1 + max((max(e.src, e.dst) for e in self.events), default=-1)
        self.num_nodes = max(n_referenced, node_features.rows) if num_nodes is None else num_nodes
        self.num_classes = 1 + max((e.label for e in self.events), default=-1)
        # column views used by the training loop
        self.srcs = np.array([e.src for e in self.events], dtype=np.int64)
        self.dsts = np.array([e.dst for e in self.events], dtype=np.int64)
        self.ts = np.array([e.t for e in self.events], dtype=np.float64)
        self.labels = np.array([e.label for e in self.events], dtype=np.int64)
        self.efeat_rows = np.array([e.edge_feat_row for e in self.events], dtype=np.int64)
        self.validate()

    def __len__(self) -> int:
        return len(self.events)

    def validate(self) -> None:
        if len(self.events) and not (self.ts[:-1] <= self.ts[1:]).all():
            raise DatasetFormatError("events are not sorted by timestamp")
        if not np.isfinite(self.ts).all():
            raise DatasetFormatError("non-finite timestamp")
        for name, col in (("src", self.srcs), ("dst", self.dsts)):
            if len(col) and (col.min() < 0 or col.max() >= self.num_nodes):
                raise DatasetFormatError(f"{name} node id out of range [0, {self.num_nodes})")
        if self.node_features.rows != self.num_nodes:
            raise DatasetFormatError(
                f"node feature table has {self.node_features.rows} rows, expected {self.num_nodes}")
        if len(self.efeat_rows):
            if self.efeat_rows.min() < 0 or self.efeat_rows.max() >= self.edge_features.rows:
                raise DatasetFormatError("feature row out of range")
        if len(self.labels) and self.labels.min() < 0:
            raise DatasetFormatError("label out of range")


@dataclass(frozen=True)
class SplitView:
    """Contiguous chronological train/val/test ranges as (start, stop)."""

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]
    inductive_nodes: frozenset[int] = field(default_factory=frozenset)


def chronological_split(dataset: DyTagDataset, ratios: tuple[float, float, float]) -> SplitView:
    """Floor-then-remainder split; remainder goes to test.

    Inductive nodes are those whose every occurrence (as src or dst)
    falls inside the test range.
    """
    r1, r2, r3 = ratios
    if min(r1, r2, r3) <= 0 or abs(r1 + r2 + r3 - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_train = int(np.floor(n * r1))
    n_val = int(np.floor(n * r2))
    boundary = n_train + n_val
    seen = np.zeros(dataset.num_nodes, dtype=bool)
    seen[dataset.srcs[:boundary]] = True
    seen[dataset.dsts[:boundary]] = True
    in_test = np.zeros(dataset.num_nodes, dtype=bool)
    in_test[dataset.srcs[boundary:]] = True
    in_test[dataset.dsts[boundary:]] = True
    inductive = frozenset(np.flatnonzero(in_test & ~seen).tolist())
    return SplitView(train=(0, n_train), val=(n_train, boundary),
                     test=(boundary, n), inductive_nodes=inductive)


class NeighborIndex:
    """Per-node time-sorted incidence lists built from undirected events.

    Immutable after construction; any number of readers is safe.
    """

    def __init__(self, num_nodes: int):
        self.num_nodes = num_nodes
        self.nbr: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * num_nodes
        self.time: list[np.ndarray] = [np.empty(0, dtype=np.float64)] * num_nodes
        self.efeat: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * num_nodes

    def slice_before(self, u: int, t: float, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Latest <=k incidences of u strictly before t, ascending by time."""
        if u < 0 or u >= self.num_nodes:
            return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64),
                    np.empty(0, dtype=np.int64))
        times = self.time[u]
        hi = int(np.searchsorted(times, t, side="left"))
        lo = max(0, hi - k)
        return self.nbr[u][lo:hi], times[lo:hi], self.efeat[u][lo:hi]

    def times_in_window(self, u: int, t: float, iota: float, limit: int,
                        include_query_time: bool = False) -> np.ndarray:
        """Latest <=limit incidence timestamps of u inside (t-iota, t).

        The event's own timestamp is excluded by default; pass
        include_query_time=True to use the closed right endpoint (t-iota, t].
        """
        if u < 0 or u >= self.num_nodes:
            return np.empty(0, dtype=np.float64)
        times = self.time[u]
        hi = int(np.searchsorted(times, t, side="right" if include_query_time else "left"))
        lo = int(np.searchsorted(times, t - iota, side="right"))
        lo = max(lo, hi - limit)
        return times[lo:hi]


def build_neighbor_index(events: list[TemporalEvent], num_nodes: int | None = None) -> NeighborIndex:
    """Index events as undirected incidences; inputs must be time-sorted."""
    if num_nodes is None:
        num_nodes = 1 + max((max(e.src, e.dst) for e in events), default=-1)
    idx = NeighborIndex(num_nodes)
    degree = np.zeros(num_nodes, dtype=np.int64)
    for e in events:
        degree[e.src] += 1
        degree[e.dst] += 1
    nbr = [np.empty(d, dtype=np.int64) for d in degree]
    tim = [np.empty(d, dtype=np.float64) for d in degree]
    eft = [np.empty(d, dtype=np.int64) for d in degree]
    fill = np.zeros(num_nodes, dtype=np.int64)
    # events arrive time-sorted, so each per-node list is sorted by construction
    for e in events:
        for u, v in ((e.src, e.dst), (e.dst, e.src)):
            i = fill[u]
            nbr[u][i] = v
            tim[u][i] = e.t
            eft[u][i] = e.edge_feat_row
            fill[u] = i + 1
    idx.nbr, idx.time, idx.efeat = nbr, tim, eft
    return idx


def recent_neighbors(index: NeighborIndex, u: int, t: float, k: int) -> list[tuple[int, float, int]]:
    """The k most recent neighbors of u strictly before t, ascending by time."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ids, times, rows = index.slice_before(u, t, k)
    return list(zip(ids.tolist(), times.tolist(), rows.tolist()))


def recent_behaviors(index: NeighborIndex, u: int, t: float, iota: float, limit: int,
                     include_query_time: bool = False) -> list[float]:
    """The most recent <=limit behavior timestamps of u inside (t-iota, t)."""
    if iota <= 0:
        raise ValueError(f"iota must be > 0, got {iota}")
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    return index.times_in_window(u, t, iota, limit, include_query_time).tolist()


class AuditingNeighborIndex:
    """Read-through wrapper that checks every answer predates its query.

    Used to certify that evaluation never consumes an event at or after
    the scored event's own timestamp.
    """

    def __init__(self, inner: NeighborIndex):
        self.inner = inner
        self.num_nodes = inner.num_nodes
        self.queries = 0
        self.violations = 0

    def _check(self, t: float, times: np.ndarray) -> None:
        self.queries += 1
        if times.size and times.max() >= t:
            self.violations += 1

    def slice_before(self, u, t, k):
        out = self.inner.slice_before(u, t, k)
        self._check(t, out[1])
        return out

    def times_in_window(self, u, t, iota, limit, include_query_time=False):
        out = self.inner.times_in_window(u, t, iota, limit, include_query_time)
        self._check(t, out)
        return out


# ---------------------------------------------------------------------------
# file formats

EDGES_HEADER = "src,dst,t,label,edge_feat_row"


def read_fbin(path) -> FeatureTable:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 24 or blob[:4] != MAGIC:
        raise DatasetFormatError(f"{path}: malformed header (bad magic)")
    version, = struct.unpack_from("<I", blob, 4)
    if version != FBIN_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    rows, cols = struct.unpack_from("<QQ", blob, 8)
    expected = 24 + rows * cols * 4
    if len(blob) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=24).reshape(rows, cols)
    if not np.isfinite(data).all():
        bad = int(np.flatnonzero(~np.isfinite(data).reshape(-1))[0])
        raise DatasetFormatError(f"{path}: non-finite value at row {bad // cols}")
    return FeatureTable(data.astype(np.float64))


def write_fbin(path, table: FeatureTable) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FBIN_VERSION))
        f.write(struct.pack("<QQ", table.rows, table.cols))
        f.write(np.ascontiguousarray(table.data, dtype="<f4").tobytes())


def read_edges_csv(path) -> list[TemporalEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != EDGES_HEADER:
            raise DatasetFormatError(f"{path}: malformed header {header!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise DatasetFormatError(f"{path}: row {lineno}: expected 5 fields, got {len(parts)}")
            try:
                src, dst = int(parts[0]), int(parts[1])
                t = float(parts[2])
                label, efr = int(parts[3]), int(parts[4])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: row {lineno}: {exc}") from None
            if not np.isfinite(t):
                raise DatasetFormatError(f"{path}: row {lineno}: non-finite timestamp")
            if src < 0 or dst < 0:
                raise DatasetFormatError(f"{path}: row {lineno}: negative node id")
            if label < 0:
                raise DatasetFormatError(f"{path}: row {lineno}: label out of range")
            if efr < 0:
                raise DatasetFormatError(f"{path}: row {lineno}: feature row out of range")
            events.append(TemporalEvent(src, dst, t, label, efr))
    return events


def write_edges_csv(path, events: list[TemporalEvent]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(EDGES_HEADER + "\n")
        for e in events:
            f.write(f"{e.src},{e.dst},{e.t!r},{e.label},{e.edge_feat_row}\n")


def load_dataset(edges_path, node_feat_path, edge_feat_path) -> DyTagDataset:
    """Load and validate a dataset; events are stably sorted by time."""
    events = read_edges_csv(edges_path)
    node_features = read_fbin(node_feat_path)
    edge_features = read_fbin(edge_feat_path)
    # range checks against the loaded tables, reported with file rows
    for i, e in enumerate(events):
        if max(e.src, e.dst) >= node_features.rows:
            raise DatasetFormatError(
                f"{edges_path}: row {i + 2}: node id {max(e.src, e.dst)} exceeds "
                f"feature table with {node_features.rows} rows")
        if e.edge_feat_row >= edge_features.rows:
            raise DatasetFormatError(
                f"{edges_path}: row {i + 2}: feature row out of range "
                f"({e.edge_feat_row} >= {edge_features.rows})")
    events.sort(key=lambda e: e.t)  # timsort is stable: ties keep file order
    return DyTagDataset(events, node_features, edge_features)


def save_dataset(dataset: DyTagDataset, edges_path, node_feat_path, edge_feat_path) -> None:
    write_edges_csv(edges_path, dataset.events)
    write_fbin(node_feat_path, dataset.node_features)
    write_fbin(edge_feat_path, dataset.edge_features)
