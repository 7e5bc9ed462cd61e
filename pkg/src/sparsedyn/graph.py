"""Dynamic graph data model: event streams, patches and their file formats.

Continuous streams are stored column-wise (numpy arrays) since real datasets
run to hundreds of thousands of events; :attr:`EventStream.events` gives the
row view as :class:`TemporalEvent` records.

A :class:`Patch` keeps its edges sparsely as ``{(u, v): weight}`` with
``u <= v``; dense adjacency matrices are built on demand.
"""
from __future__ import annotations

import gzip
import io
import itertools
import logging
import math
import os
import zlib
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError

log = logging.getLogger(__name__)

EDGE_ADD = "edge_add"
EDGE_REMOVE = "edge_remove"
_KIND_CODE = {EDGE_ADD: 1, EDGE_REMOVE: -1}
_KIND_NAME = {1: EDGE_ADD, -1: EDGE_REMOVE}
_KIND_TOKENS = {"add": 1, "edge_add": 1, "1": 1, "+1": 1,
                "remove": -1, "edge_remove": -1, "-1": -1}

DEFAULT_FEATURE_WIDTH = 32
PROVENANCES = ("ade", "ude", "snapshot")


def default_node_features(num_nodes: int, width: int = DEFAULT_FEATURE_WIDTH) -> np.ndarray:
    """Constant per-node vectors in [-1, 1), seeded from a hash of the node id."""
    out = np.empty((num_nodes, width))
    for u in range(num_nodes):
        rng = np.random.default_rng(zlib.crc32(f"node:{u}".encode()))
        out[u] = rng.uniform(-1.0, 1.0, size=width)
    return out


@dataclass(frozen=True)
class TemporalEvent:
    source: int
    target: int
    timestamp: float
    kind: str = EDGE_ADD
    edge_features: tuple = ()
    label: float = 0.0

    @property
    def is_self_loop(self) -> bool:
        return self.source == self.target


class EventStream:
    """Timestamp-sorted edge events plus per-node feature vectors."""

    def __init__(self, sources, targets, timestamps, kinds=None, labels=None,
                 edge_features=None, node_features=None, num_nodes: int | None = None,
                 feature_width: int = DEFAULT_FEATURE_WIDTH):
        src = np.asarray(sources, dtype=np.int64).reshape(-1)
        dst = np.asarray(targets, dtype=np.int64).reshape(-1)
        ts = np.asarray(timestamps, dtype=np.float64).reshape(-1)
        n = len(ts)
        if len(src) != n or len(dst) != n:
            raise ConfigError("sources, targets and timestamps must have equal length")
        kinds = np.ones(n, dtype=np.int8) if kinds is None else np.asarray(kinds, dtype=np.int8)
        labels = np.zeros(n) if labels is None else np.asarray(labels, dtype=np.float64)
        if edge_features is None:
            edge_features = np.zeros((n, 0))
        edge_features = np.asarray(edge_features, dtype=np.float64).reshape(n, -1)
        if n and (not np.all(np.isfinite(ts)) or ts.min() < 0):
            raise ConfigError("timestamps must be finite and non-negative")
        if n and (src.min() < 0 or dst.min() < 0):
            raise ConfigError("node ids must be non-negative")
        if not np.all(np.isin(kinds, (1, -1))):
            raise ConfigError("event kinds must be +1 (add) or -1 (remove)")

        self.reordered = int(np.count_nonzero(np.diff(ts) < 0)) if n > 1 else 0
        if self.reordered:
            log.warning("%d events out of timestamp order; sorting stream", self.reordered)
            order = np.argsort(ts, kind="stable")
            src, dst, ts = src[order], dst[order], ts[order]
            kinds, labels, edge_features = kinds[order], labels[order], edge_features[order]

        top = int(max(src.max(), dst.max())) + 1 if n else 0
        if num_nodes is None:
            num_nodes = top
        elif top > num_nodes:
            raise ConfigError(f"event endpoint {top - 1} not below num_nodes={num_nodes}")
        if node_features is None:
            node_features = default_node_features(num_nodes, feature_width)
        node_features = np.asarray(node_features, dtype=np.float64)
        if node_features.shape[0] != num_nodes:
            raise ConfigError(f"node_features has {node_features.shape[0]} rows, expected {num_nodes}")

        self.sources, self.targets, self.timestamps = src, dst, ts
        self.kinds, self.labels, self.edge_features = kinds, labels, edge_features
        self.node_features = node_features
        self.num_nodes = int(num_nodes)
        for arr in (src, dst, ts, kinds, labels, edge_features, node_features):
            arr.flags.writeable = False

    @classmethod
    def from_events(cls, events: Iterable[TemporalEvent], **kwargs) -> "EventStream":
        events = list(events)
        widths = {len(e.edge_features) for e in events}
        if len(widths) > 1:
            raise ConfigError("edge feature vectors must share one width")
        width = widths.pop() if widths else 0
        return cls([e.source for e in events], [e.target for e in events],
                   [e.timestamp for e in events],
                   kinds=[_KIND_CODE[e.kind] for e in events],
                   labels=[e.label for e in events],
                   edge_features=np.array([e.edge_features for e in events], dtype=float).reshape(len(events), width),
                   **kwargs)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def num_events(self) -> int:
        return len(self.timestamps)

    @property
    def time_span(self) -> tuple[float, float]:
        if not len(self):
            return (0.0, 0.0)
        return float(self.timestamps[0]), float(self.timestamps[-1])

    @property
    def feature_width(self) -> int:
        return self.node_features.shape[1]

    @property
    def self_loop_count(self) -> int:
        return int(np.count_nonzero(self.sources == self.targets))

    def event(self, i: int) -> TemporalEvent:
        return TemporalEvent(int(self.sources[i]), int(self.targets[i]), float(self.timestamps[i]),
                             _KIND_NAME[int(self.kinds[i])], tuple(self.edge_features[i].tolist()),
                             float(self.labels[i]))

    @property
    def events(self) -> list[TemporalEvent]:
        return [self.event(i) for i in range(len(self))]

    def __iter__(self) -> Iterator[TemporalEvent]:
        return (self.event(i) for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("sources", "targets", "timestamps", "kinds", "labels",
                                  "edge_features", "node_features")))

    def __repr__(self):
        return (f"EventStream(R={len(self)}, num_nodes={self.num_nodes}, "
                f"span={self.time_span})")


@dataclass(frozen=True, eq=False)
class Patch:
    """One temporal unit of an encoded sequence.

    ``time_span`` is half-open, except that the last patch of an encoded
    sequence also contains its right end (the stream's final timestamp).
    """
    index: int
    time_span: tuple[float, float]
    edges: Mapping[tuple[int, int], float]
    event_count: int
    active_nodes: tuple[int, ...]
    node_features: np.ndarray | None = None
    edge_feature_mean: float = 0.0

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_active(self) -> int:
        return len(self.active_nodes)

    @property
    def adjacency(self) -> np.ndarray:
        """Binary symmetric adjacency over ``active_nodes`` (local indices)."""
        return self.local_adjacency(weighted=False)

    def local_adjacency(self, weighted: bool = False) -> np.ndarray:
        pos = {u: i for i, u in enumerate(self.active_nodes)}
        a = np.zeros((len(pos), len(pos)))
        for (u, v), w in self.edges.items():
            a[pos[u], pos[v]] = a[pos[v], pos[u]] = w if weighted else 1.0
        return a

    def dense_adjacency(self, num_nodes: int, weighted: bool = False) -> np.ndarray:
        """Adjacency indexed by global node id."""
        a = np.zeros((num_nodes, num_nodes))
        if self.edges:
            keys = np.array(list(self.edges.keys()), dtype=np.int64)
            vals = np.array(list(self.edges.values()), dtype=float) if weighted else 1.0
            a[keys[:, 0], keys[:, 1]] = vals
            a[keys[:, 1], keys[:, 0]] = vals
        return a

    def neighbors(self) -> dict[int, list[int]]:
        """Sorted neighbour lists (self-loops excluded) for every active node."""
        nbrs: dict[int, set[int]] = {u: set() for u in self.active_nodes}
        for u, v in self.edges:
            if u != v:
                nbrs[u].add(v)
                nbrs[v].add(u)
        return {u: sorted(s) for u, s in nbrs.items()}

    def degrees(self) -> np.ndarray:
        nbrs = self.neighbors()
        return np.array([len(nbrs[u]) for u in self.active_nodes], dtype=np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Patch):
            return NotImplemented
        if (self.node_features is None) != (other.node_features is None):
            return False
        feats_equal = self.node_features is None or np.array_equal(self.node_features, other.node_features)
        return (self.index == other.index and tuple(self.time_span) == tuple(other.time_span)
                and dict(self.edges) == dict(other.edges) and self.event_count == other.event_count
                and tuple(self.active_nodes) == tuple(other.active_nodes) and feats_equal
                and self.edge_feature_mean == other.edge_feature_mean)


@dataclass(eq=False)
class PatchSequence:
    patches: list[Patch]
    provenance: str
    num_nodes: int
    node_features: np.ndarray

    def __post_init__(self):
        if not self.patches:
            raise ConfigError("a patch sequence needs at least one patch")
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self) -> Iterator[Patch]:
        return iter(self.patches)

    def __getitem__(self, i) -> Patch:
        return self.patches[i]

    @property
    def event_counts(self) -> np.ndarray:
        return np.array([p.event_count for p in self.patches], dtype=np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatchSequence):
            return NotImplemented
        return (self.provenance == other.provenance and self.num_nodes == other.num_nodes
                and np.array_equal(self.node_features, other.node_features)
                and self.patches == other.patches)


# ---------------------------------------------------------------- patch materialisation

def _carry_edges(carry_in) -> dict:
    if carry_in is None:
        return {}
    if isinstance(carry_in, Patch):
        return dict(carry_in.edges)
    if isinstance(carry_in, np.ndarray):
        us, vs = np.nonzero(np.triu(carry_in))
        return {(int(u), int(v)): float(carry_in[u, v]) for u, v in zip(us, vs)}
    return dict(carry_in)


def _replay(stream: EventStream, lo: int, hi: int, edges: dict) -> set[int]:
    touched: set[int] = set()
    src, dst, kinds = stream.sources, stream.targets, stream.kinds
    for i in range(lo, hi):
        u, v = int(src[i]), int(dst[i])
        key = (u, v) if u <= v else (v, u)
        touched.add(u)
        touched.add(v)
        if kinds[i] > 0:
            edges[key] = edges.get(key, 0) + 1
        else:
            edges.pop(key, None)
    return touched


def build_patch(stream: EventStream, lo: int, hi: int, carry_in=None, *, index: int = 0,
                time_span: tuple[float, float] | None = None) -> Patch:
    """Patch from the events with stream positions ``lo <= i < hi``.

    Multi-edges collapse to one entry whose weight counts the additions
    since the pair's last removal.
    """
    edges = _carry_edges(carry_in)
    touched = _replay(stream, lo, hi, edges)
    touched.update(itertools.chain.from_iterable(edges))
    active = tuple(sorted(touched))
    if time_span is None:
        ts = stream.timestamps
        time_span = (float(ts[lo]), float(ts[hi - 1])) if hi > lo else (0.0, 0.0)
    ef = stream.edge_features[lo:hi]
    edge_mean = float(ef.mean()) if ef.size else 0.0
    feats = stream.node_features[list(active)] if active else np.zeros((0, stream.feature_width))
    return Patch(index=index, time_span=(float(time_span[0]), float(time_span[1])), edges=edges,
                 event_count=hi - lo, active_nodes=active, node_features=feats,
                 edge_feature_mean=edge_mean)


def materialize_patch(stream: EventStream, window: tuple[float, float], carry_in=None, *,
                      index: int = 0, closed: bool = False) -> Patch:
    """Apply the events with ``start <= t < end`` (``<= end`` if closed) on top of ``carry_in``."""
    start, end = window
    ts = stream.timestamps
    lo = int(np.searchsorted(ts, start, side="left"))
    hi = int(np.searchsorted(ts, end, side="right" if closed else "left"))
    return build_patch(stream, lo, max(lo, hi), carry_in, index=index, time_span=(start, end))


def sequence_from_cuts(stream: EventStream, cuts: Sequence[int], spans: Sequence[tuple[float, float]],
                       provenance: str, carry_forward: bool = True) -> PatchSequence:
    """Build one patch per consecutive pair of event-index ``cuts``."""
    patches = []
    carry: dict = {}
    for i in range(len(cuts) - 1):
        p = build_patch(stream, cuts[i], cuts[i + 1], carry if carry_forward else None,
                        index=i, time_span=spans[i])
        patches.append(p)
        carry = p.edges
    return PatchSequence(patches, provenance, stream.num_nodes, stream.node_features)


def project(stream: EventStream) -> Patch:
    """The whole stream as a single patch."""
    return build_patch(stream, 0, len(stream), index=0, time_span=stream.time_span)


# ---------------------------------------------------------------- file formats

@dataclass
class ContinuousFormat:
    """How to read a continuous CSV (``src,dst,timestamp,label[,kind],f0..fk``).

    ``bipartite`` offsets target ids past the largest source id, as needed
    for user/item files where both sides are numbered from zero.
    """
    delimiter: str = ","
    bipartite: bool = False
    num_nodes: int | None = None
    feature_width: int = DEFAULT_FEATURE_WIDTH
    node_features_path: str | None = None


@dataclass
class DiscreteFormat:
    num_nodes: int | None = None
    feature_width: int = DEFAULT_FEATURE_WIDTH
    node_features_path: str | None = None


def _open_text(path, mode="rt"):
    path = os.fspath(path)
    if "r" in mode:
        with open(path, "rb") as fh:
            magic = fh.read(2)
        if magic == b"\x1f\x8b":
            return gzip.open(path, mode, encoding="utf-8")
        return open(path, mode, encoding="utf-8", newline="" if "w" in mode else None)
    if path.endswith(".gz"):
        raw = open(path, "wb")
        gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
        return _GzipText(gz, raw)
    return open(path, mode, encoding="utf-8", newline="\n")


class _GzipText(io.TextIOWrapper):
    def __init__(self, gz, raw):
        super().__init__(gz, encoding="utf-8", newline="\n")
        self._raw = raw

    def close(self):
        super().close()
        self._raw.close()


def _load_node_features(path, num_nodes):
    if path is None:
        return None
    feats = np.load(path)
    if feats.ndim != 2 or feats.shape[0] != num_nodes:
        raise ParseError(f"node feature file has shape {feats.shape}, expected ({num_nodes}, d)", path=path)
    return feats


def _int_token(tok: str) -> int:
    try:
        return int(tok)
    except ValueError:
        f = float(tok)
        if not f.is_integer():
            raise
        return int(f)


def load_continuous(path, fmt: ContinuousFormat | None = None) -> EventStream:
    fmt = fmt or ContinuousFormat()
    src, dst, ts, kinds, labels, feats = [], [], [], [], [], []
    width = None
    with _open_text(path) as fh:
        header = fh.readline()
        if not header.strip():
            raise ParseError("no events (file is empty)", path=path)
        columns = [c.strip().lower() for c in header.split(fmt.delimiter)]
        has_kind = len(columns) > 4 and columns[4] == "kind"
        first_feature = 5 if has_kind else 4
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(fmt.delimiter)
            if len(parts) < 3:
                raise ParseError(f"expected at least 3 columns, got {len(parts)}", lineno, path)
            try:
                u, v, t = _int_token(parts[0]), _int_token(parts[1]), float(parts[2])
                label = float(parts[3]) if len(parts) > 3 and parts[3].strip() else 0.0
                kind = _KIND_TOKENS[parts[4].strip().lower()] if has_kind else 1
                row = [float(x) for x in parts[first_feature:]]
            except (ValueError, KeyError) as exc:
                raise ParseError(f"malformed row ({exc})", lineno, path) from None
            if not math.isfinite(t) or t < 0:
                raise ParseError(f"timestamp {t} must be finite and non-negative", lineno, path)
            if u < 0 or v < 0:
                raise ParseError("negative node id", lineno, path)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} edge features, got {len(row)}", lineno, path)
            src.append(u)
            dst.append(v)
            ts.append(t)
            labels.append(label)
            kinds.append(kind)
            feats.append(row)
    if not ts:
        raise ParseError("no events", path=path)
    src_a, dst_a = np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)
    if fmt.bipartite:
        dst_a = dst_a + src_a.max() + 1
    top = int(max(src_a.max(), dst_a.max())) + 1
    num_nodes = fmt.num_nodes if fmt.num_nodes is not None else top
    if top > num_nodes:
        raise ParseError(f"node id {top - 1} out of range for num_nodes={num_nodes}", path=path)
    node_features = _load_node_features(fmt.node_features_path, num_nodes)
    return EventStream(src_a, dst_a, ts, kinds=kinds, labels=labels,
                       edge_features=np.array(feats, dtype=float).reshape(len(ts), width),
                       node_features=node_features, num_nodes=num_nodes,
                       feature_width=fmt.feature_width)


def write_continuous(stream: EventStream, path, node_features_path=None) -> None:
    """Write ``stream`` as CSV (gzip if ``path`` ends in ``.gz``).

    A ``kind`` column is emitted only when the stream contains removals.
    """
    has_kind = bool(np.any(stream.kinds < 0))
    k = stream.edge_features.shape[1]
    header = ["src", "dst", "timestamp", "label"] + (["kind"] if has_kind else [])
    header += [f"f{j}" for j in range(k)]
    with _open_text(path, "wt") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(stream)):
            row = [str(int(stream.sources[i])), str(int(stream.targets[i])),
                   repr(float(stream.timestamps[i])), repr(float(stream.labels[i]))]
            if has_kind:
                row.append("add" if stream.kinds[i] > 0 else "remove")
            row.extend(repr(float(x)) for x in stream.edge_features[i])
            fh.write(",".join(row) + "\n")
    if node_features_path is not None:
        np.save(node_features_path, stream.node_features)


def _parse_meta(tokens: Sequence[str], lineno, path) -> dict:
    meta = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(f"expected key=value, got {tok!r}", lineno, path)
        key, val = tok.split("=", 1)
        meta[key] = val
    return meta


def load_discrete(path, fmt: DiscreteFormat | None = None) -> PatchSequence:
    """Read snapshot blocks introduced by ``#snapshot <index> [key=value ...]`` lines.

    Each block line is ``src dst [weight]`` (whitespace or comma separated).
    Optional header lines: ``#nodes <n>``, ``#provenance <name>``. A
    ``#active u v ...`` line inside a block lists active nodes that have no
    edge in that block.
    """
    fmt = fmt or DiscreteFormat()
    num_nodes = fmt.num_nodes
    provenance = "snapshot"
    blocks: list[dict] = []
    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                tokens = line[1:].split()
                if not tokens:
                    continue
                key = tokens[0].rstrip(":").lower()
                if key == "snapshot":
                    meta = _parse_meta(tokens[2:], lineno, path)
                    blocks.append({"edges": {}, "lines": 0, "meta": meta, "active": set(), "line": lineno})
                elif key == "nodes" and len(tokens) > 1 and fmt.num_nodes is None:
                    num_nodes = int(tokens[1])
                elif key == "provenance" and len(tokens) > 1:
                    provenance = tokens[1]
                elif key == "active":
                    if not blocks:
                        raise ParseError("#active before the first #snapshot", lineno, path)
                    blocks[-1]["active"].update(int(t) for t in tokens[1:])
                continue
            if not blocks:
                raise ParseError("edge line before the first #snapshot delimiter", lineno, path)
            parts = line.replace(",", " ").split()
            if len(parts) not in (2, 3):
                raise ParseError(f"expected 'src dst [weight]', got {line!r}", lineno, path)
            try:
                u, v = _int_token(parts[0]), _int_token(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ParseError(f"malformed edge line {line!r}", lineno, path) from None
            if u < 0 or v < 0 or (num_nodes is not None and max(u, v) >= num_nodes):
                raise ParseError(f"node id out of range in {line!r} (num_nodes={num_nodes})", lineno, path)
            key2 = (u, v) if u <= v else (v, u)
            block = blocks[-1]
            block["edges"][key2] = block["edges"].get(key2, 0.0) + w
            block["lines"] += 1
    if not blocks:
        raise ParseError("no #snapshot blocks", path=path)
    top = 0
    for b in blocks:
        for u, v in b["edges"]:
            top = max(top, v + 1)
        if b["active"]:
            top = max(top, max(b["active"]) + 1)
    if num_nodes is None:
        num_nodes = top
    elif top > num_nodes:
        raise ParseError(f"node id {top - 1} out of range for num_nodes={num_nodes}", path=path)
    node_features = _load_node_features(fmt.node_features_path, num_nodes)
    if node_features is None:
        node_features = default_node_features(num_nodes, fmt.feature_width)

    patches = []
    for i, b in enumerate(blocks):
        if not b["edges"]:
            log.warning("snapshot block at line %d is empty", b["line"])
        meta = b["meta"]
        edges = {k: (int(w) if float(w).is_integer() else w) for k, w in b["edges"].items()}
        active = set(b["active"])
        for u, v in edges:
            active.update((u, v))
        active_t = tuple(sorted(active))
        span = (float(meta.get("start", i)), float(meta.get("end", i + 1)))
        patches.append(Patch(index=i, time_span=span, edges=edges,
                             event_count=int(meta.get("events", b["lines"])),
                             active_nodes=active_t,
                             node_features=node_features[list(active_t)] if active_t
                             else np.zeros((0, node_features.shape[1])),
                             edge_feature_mean=float(meta.get("edge_mean", 0.0))))
    return PatchSequence(patches, provenance, num_nodes, node_features)


def write_discrete(seq: PatchSequence, path, node_features_path=None) -> None:
    with _open_text(path, "wt") as fh:
        fh.write(f"#nodes {seq.num_nodes}\n")
        fh.write(f"#provenance {seq.provenance}\n")
        for p in seq.patches:
            fh.write(f"#snapshot {p.index} start={p.time_span[0]!r} end={p.time_span[1]!r} "
                     f"events={p.event_count} edge_mean={p.edge_feature_mean!r}\n")
            covered = {x for e in p.edges for x in e}
            extra = [u for u in p.active_nodes if u not in covered]
            if extra:
                fh.write("#active " + " ".join(map(str, extra)) + "\n")
            for (u, v), w in sorted(p.edges.items()):
                fh.write(f"{u} {v}\n" if w == 1 else f"{u} {v} {w!r}\n")
    if node_features_path is not None:
        np.save(node_features_path, seq.node_features)


def dataset_stats(data) -> dict:
    """Node, link and time-step (or duration) counts of a dataset."""
    if isinstance(data, EventStream):
        t0, t1 = data.time_span
        return {"nodes": data.num_nodes, "links": len(data), "duration": t1 - t0}
    links = sum(int(round(sum(p.edges.values()))) for p in data)
    return {"nodes": data.num_nodes, "links": links, "steps": len(data),
            "unique_links": len({e for p in data for e in p.edges})}


# ---------------------------------------------------------------- synthetic generator

@dataclass
class SynthConfig:
    """Dynamic stochastic block model with optionally bursty arrivals.

    Every event picks a node pair with probability proportional to
    ``intra_rate`` (same community) or ``inter_rate`` (different
    communities). Inter-arrival gaps are exponential at ``burstiness`` 0 and
    Pareto with shape ``1 + 1/burstiness`` otherwise; gaps are rescaled so
    the stream spans ``[0, horizon]``.
    """
    num_nodes: int = 64
    num_communities: int = 2
    intra_rate: float = 1.0
    inter_rate: float = 0.05
    burstiness: float = 0.0
    horizon: float = 1000.0
    num_events: int = 4000
    removal_rate: float = 0.0
    edge_feature_dim: int = 0
    feature_width: int = DEFAULT_FEATURE_WIDTH

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise ConfigError("num_nodes must be at least 2")
        if not 1 <= self.num_communities <= self.num_nodes:
            raise ConfigError("num_communities must lie in [1, num_nodes]")
        if self.intra_rate < 0 or self.inter_rate < 0 or self.intra_rate + self.inter_rate <= 0:
            raise ConfigError("intra_rate and inter_rate must be non-negative and not both zero")
        if self.num_communities == 1 and self.intra_rate <= 0:
            raise ConfigError("a single community needs intra_rate > 0")
        if self.burstiness < 0:
            raise ConfigError("burstiness must be non-negative")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.num_events < 1:
            raise ConfigError("num_events must be positive")
        if not 0 <= self.removal_rate < 1:
            raise ConfigError("removal_rate must lie in [0, 1)")
        if self.edge_feature_dim < 0 or self.feature_width < 1:
            raise ConfigError("feature widths must be non-negative (node width positive)")
        sizes = community_sizes(self)
        if self.intra_rate > 0 and sum(s * (s - 1) for s in sizes) == 0 and self.inter_rate <= 0:
            raise ConfigError("no node pairs can be drawn with these rates")

    def to_dict(self) -> dict:
        return asdict(self)


def community_sizes(cfg: SynthConfig) -> list[int]:
    base, extra = divmod(cfg.num_nodes, cfg.num_communities)
    return [base + (1 if c < extra else 0) for c in range(cfg.num_communities)]


def communities(cfg: SynthConfig) -> np.ndarray:
    """Community label of every node (contiguous blocks)."""
    return np.repeat(np.arange(cfg.num_communities), community_sizes(cfg))


def synthesize_stream(config: SynthConfig, seed: int) -> EventStream:
    config.validate()
    rng = np.random.default_rng(seed)
    sizes = np.array(community_sizes(config))
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    intra_pairs = sizes * (sizes - 1) / 2.0
    n_intra = intra_pairs.sum()
    n_inter = (sizes.sum() ** 2 - (sizes ** 2).sum()) / 2.0
    w_intra = config.intra_rate * n_intra
    w_inter = config.inter_rate * n_inter
    n = config.num_events

    is_intra = rng.random(n) < w_intra / (w_intra + w_inter)
    src = np.empty(n, dtype=np.int64)
    dst = np.empty(n, dtype=np.int64)

    k = int(is_intra.sum())
    if k:
        comm = rng.choice(len(sizes), size=k, p=intra_pairs / n_intra)
        a = rng.integers(0, sizes[comm])
        b = rng.integers(0, sizes[comm] - 1)
        b = np.where(b >= a, b + 1, b)
        src[is_intra] = offsets[comm] + a
        dst[is_intra] = offsets[comm] + b
    m = n - k
    if m:
        pair_w = np.outer(sizes, sizes).astype(float)
        np.fill_diagonal(pair_w, 0.0)
        flat = rng.choice(pair_w.size, size=m, p=(pair_w / pair_w.sum()).ravel())
        ca, cb = np.divmod(flat, len(sizes))
        src[~is_intra] = offsets[ca] + rng.integers(0, sizes[ca])
        dst[~is_intra] = offsets[cb] + rng.integers(0, sizes[cb])

    if config.burstiness == 0:
        gaps = rng.exponential(1.0, size=n)
    else:
        gaps = rng.pareto(1.0 + 1.0 / config.burstiness, size=n) + 1.0
    times = np.cumsum(gaps)
    times = times - times[0]
    if times[-1] > 0:
        times = times / times[-1] * config.horizon

    kinds = np.ones(n, dtype=np.int8)
    if config.removal_rate > 0:
        present: dict[tuple[int, int], int] = {}
        order: list[tuple[int, int]] = []
        drop = rng.random(n) < config.removal_rate
        for i in range(n):
            if drop[i] and order:
                j = int(rng.integers(len(order)))
                key = order[j]
                order[j] = order[-1]
                order.pop()
                del present[key]
                src[i], dst[i] = key
                kinds[i] = -1
                continue
            key = (min(src[i], dst[i]), max(src[i], dst[i]))
            if key not in present:
                present[key] = 1
                order.append(key)

    edge_features = rng.normal(size=(n, config.edge_feature_dim))
    return EventStream(src, dst, times, kinds=kinds, edge_features=edge_features,
                       num_nodes=config.num_nodes, feature_width=config.feature_width)
