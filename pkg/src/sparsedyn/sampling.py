"""Random-walk pair sampling and the link-prediction cross-entropy losses.

Random-number consumption is part of the contract (tests replay it).
Walks start from each non-isolated node in ascending id order,
``walks_per_node`` consecutive walks per node. All walks advance together:
step s draws one ``rng.integers(0, degrees)`` vector (one entry per walk)
indexing each walk's sorted neighbour list. Negatives are drawn afterwards
in rounds: slot k belongs to positive k // neg_per_pos; each round draws
``rng.integers(0, len(pool), size=pending)`` for the still-unfilled slots in
order and keeps candidates that are neither the anchor, a neighbour, nor
excluded. At most ``max_tries`` rounds run.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .graph import Patch
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class WalkSampleSet:
    positives: np.ndarray  # [P, 2]
    negatives: np.ndarray  # [M, 2]
    omega_n: float = 1.0
    source_patch: int = 0

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=np.int64).reshape(-1, 2)
        self.negatives = np.asarray(self.negatives, dtype=np.int64).reshape(-1, 2)

    def __eq__(self, other):
        if not isinstance(other, WalkSampleSet):
            return NotImplemented
        return (np.array_equal(self.positives, other.positives)
                and np.array_equal(self.negatives, other.negatives)
                and self.omega_n == other.omega_n and self.source_patch == other.source_patch)

    def to_json(self) -> str:
        return json.dumps({"source_patch": self.source_patch, "omega_n": self.omega_n,
                           "positives": self.positives.tolist(), "negatives": self.negatives.tolist()},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WalkSampleSet":
        d = json.loads(text)
        return cls(np.array(d["positives"]), np.array(d["negatives"]), d["omega_n"], d["source_patch"])


def _neighbor_lists(graph) -> dict[int, list[int]]:
    if isinstance(graph, Patch):
        return graph.neighbors()
    return {int(u): sorted(int(v) for v in vs if v != u) for u, vs in graph.items()}


def _pair_keys(pairs: np.ndarray, base: int) -> np.ndarray:
    return pairs[..., 0].astype(np.int64) * base + pairs[..., 1]


def sample_walks(graph, walk_len: int = 10, walks_per_node: int = 5, window: int = 3,
                 neg_per_pos: int = 1, seed=0, *, omega_n: float = 1.0, universe: Sequence[int] | None = None,
                 exclude=None, source_patch: int | None = None, max_tries: int = 100) -> WalkSampleSet:
    """Skip-gram positives from uniform random walks and uniform non-edge negatives.

    ``graph`` is a :class:`Patch` or a mapping node -> neighbours.
    ``universe`` (default: the graph's nodes) is the pool negatives are
    drawn from. Pairs in ``exclude`` (either orientation) are never emitted.
    """
    if walk_len < 2:
        raise ConfigError(f"walk_len must be at least 2, got {walk_len}")
    if window < 1 or walks_per_node < 1 or neg_per_pos < 0:
        raise ConfigError("window and walks_per_node must be positive, neg_per_pos non-negative")
    nbrs = _neighbor_lists(graph)
    if source_patch is None:
        source_patch = graph.index if isinstance(graph, Patch) else 0
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pool = np.array(sorted(nbrs) if universe is None else sorted({int(u) for u in universe}), dtype=np.int64)
    ids = [u for u in nbrs] + [v for vs in nbrs.values() for v in vs] + pool.tolist()
    base = max(ids, default=0) + 1

    banned = np.zeros(0, dtype=np.int64)
    if exclude is not None:
        ex = np.array([(int(u), int(v)) for u, v in exclude], dtype=np.int64).reshape(-1, 2)
        ex = ex[(ex >= 0).all(axis=1) & (ex < base).all(axis=1)]
        banned = np.unique(np.concatenate([_pair_keys(ex, base), _pair_keys(ex[:, ::-1], base)]))

    # compressed neighbour lists
    starts_nodes = np.array([u for u in sorted(nbrs) if nbrs[u]], dtype=np.int64)
    deg = np.zeros(base, dtype=np.int64)
    offset = np.zeros(base, dtype=np.int64)
    flat: list[int] = []
    for u in sorted(nbrs):
        offset[u] = len(flat)
        deg[u] = len(nbrs[u])
        flat.extend(nbrs[u])
    flat_arr = np.array(flat, dtype=np.int64)

    positives = np.zeros((0, 2), dtype=np.int64)
    if len(starts_nodes):
        walks = np.empty((len(starts_nodes) * walks_per_node, walk_len), dtype=np.int64)
        walks[:, 0] = np.repeat(starts_nodes, walks_per_node)
        for step in range(1, walk_len):
            cur = walks[:, step - 1]
            walks[:, step] = flat_arr[offset[cur] + rng.integers(0, deg[cur])]
        ij = np.array([(i, j) for i in range(walk_len) for j in range(i + 1, min(walk_len, i + 1 + window))])
        uv = np.stack([walks[:, ij[:, 0]], walks[:, ij[:, 1]]], axis=-1).reshape(-1, 2)
        keep = uv[:, 0] != uv[:, 1]
        if banned.size:
            keep &= ~np.isin(_pair_keys(uv, base), banned)
        uv = uv[keep]
        positives = np.stack([uv, uv[:, ::-1]], axis=1).reshape(-1, 2)
    else:
        log.warning("graph has no edges to walk on; no positive pairs sampled")

    negatives = np.zeros((0, 2), dtype=np.int64)
    if len(positives) and neg_per_pos > 0 and len(pool):
        edge_keys = np.array([u * base + v for u, vs in nbrs.items() for v in vs], dtype=np.int64)
        blocked = np.union1d(edge_keys, banned)
        anchors = np.repeat(positives[:, 0], neg_per_pos)
        usable = {}
        for u in np.unique(anchors):
            cand = _pair_keys(np.stack([np.full(len(pool), u), pool], axis=1), base)
            usable[int(u)] = bool(np.any((pool != u) & ~np.isin(cand, blocked)))
        ok_anchor = np.array([usable[int(u)] for u in anchors], dtype=bool)
        saturated = int(np.count_nonzero(~ok_anchor))
        slots = np.flatnonzero(ok_anchor)
        chosen = np.full(len(anchors), -1, dtype=np.int64)
        pending = slots
        for _ in range(max_tries):
            if not len(pending):
                break
            v = pool[rng.integers(0, len(pool), size=len(pending))]
            u = anchors[pending]
            good = (v != u) & ~np.isin(u * base + v, blocked)
            chosen[pending[good]] = v[good]
            pending = pending[~good]
        filled = chosen >= 0
        negatives = np.stack([anchors[filled], chosen[filled]], axis=1)
        if not len(negatives):
            log.warning("no non-edges available for negative sampling; negatives are empty")
        elif saturated:
            log.warning("%d anchors are adjacent to every node; no negatives drawn for them", saturated)
    return WalkSampleSet(positives, negatives, omega_n, source_patch)


def score(e_u, e_v) -> Tensor:
    """sigmoid(<e_u, e_v>)."""
    e_u, e_v = T.as_tensor(e_u), T.as_tensor(e_v)
    if e_u.shape != e_v.shape:
        raise DimensionError(f"embedding widths differ: {e_u.shape} vs {e_v.shape}")
    return T.sigmoid(T.tsum(e_u * e_v, axis=-1))


def _embedding_matrix(embeddings) -> Tensor:
    if isinstance(embeddings, Mapping):
        nodes = sorted(embeddings)
        if nodes != list(range(len(nodes))):
            raise ContractError("embedding mapping must cover nodes 0..n-1 without gaps")
        return T.stack([embeddings[u] for u in nodes])
    return T.as_tensor(embeddings)


def _pair_logits(emb: Tensor, pairs: np.ndarray) -> Tensor:
    n = emb.shape[0]
    if pairs.size and (pairs.max() >= n or pairs.min() < 0):
        bad = int(pairs[(pairs >= n) | (pairs < 0)][0])
        raise ContractError(f"no embedding for node {bad} (have {n})")
    if n * n <= len(pairs) * emb.shape[-1]:
        # small graphs: one Gram matrix is cheaper than gathering both endpoint rows
        gram = emb @ emb.T
        return gram[pairs[:, 0], pairs[:, 1]]
    return T.tsum(emb[pairs[:, 0]] * emb[pairs[:, 1]], axis=-1)


def pair_terms(embeddings, samples: WalkSampleSet) -> tuple[Tensor, int]:
    """Unreduced loss sum and the number of pairs it covers."""
    emb = _embedding_matrix(embeddings)
    total = Tensor(0.0)
    if len(samples.positives):
        # -log sigmoid(x) = softplus(-x)
        total = total + T.tsum(T.softplus(-_pair_logits(emb, samples.positives)))
    if len(samples.negatives):
        # -log(1 - sigmoid(x)) = softplus(x)
        total = total + samples.omega_n * T.tsum(T.softplus(_pair_logits(emb, samples.negatives)))
    return total, len(samples.positives) + len(samples.negatives)


def inductive_loss(embeddings, samples: WalkSampleSet, reduction: str = "mean") -> Tensor:
    """Binary cross-entropy over positive and omega_n-weighted negative pairs."""
    if reduction not in ("mean", "sum"):
        raise ConfigError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
    total, count = pair_terms(embeddings, samples)
    if reduction == "mean" and count:
        total = total * (1.0 / count)
    return total


def transductive_loss(per_patch_embeddings: Sequence, per_patch_samples: Sequence[WalkSampleSet],
                      reduction: str = "mean") -> Tensor:
    """Sum over patches of the per-patch cross-entropy."""
    if len(per_patch_embeddings) != len(per_patch_samples):
        raise ContractError(f"{len(per_patch_embeddings)} embedding sets but {len(per_patch_samples)} sample sets")
    if not per_patch_samples:
        raise ContractError("transductive loss needs at least one patch")
    terms = [inductive_loss(e, s, reduction) for e, s in zip(per_patch_embeddings, per_patch_samples)]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total
