"""Event-balanced encoding of a stream into patches.

``partition_by_events`` cuts the stream into N patches whose event counts
differ by at most one. ``search_N`` picks N on a candidate grid by
minimising

    L_A(N) = phi(sig(stream), mean_n sig(patch_n)) - tau * log(N)

where ``sig`` is the training-free :func:`signature` and ``phi`` is one minus
the Pearson correlation. ``literal_sign=True`` flips the size term to
``+ tau * log(N)``.

``partition_uniform`` is the equal-duration baseline.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .graph import EventStream, Patch, PatchSequence, sequence_from_cuts

log = logging.getLogger(__name__)

SIGNATURE_LENGTH = 13
DEGREE_BINS = 8
DEFAULT_GRID = tuple(range(2, 65, 2))
DEFAULT_TAU = 0.05
DEFAULT_EPSILON = 0.05


def balanced_cuts(R: int, N: int) -> list[int]:
    """Event-index boundaries of N near-equal chunks; the first R % N chunks get the extra event."""
    base, extra = divmod(R, N)
    cuts = [0]
    for i in range(N):
        cuts.append(cuts[-1] + base + (1 if i < extra else 0))
    return cuts


def partition_by_events(stream: EventStream, N: int, carry_forward: bool = True) -> PatchSequence:
    R = len(stream)
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ConfigError(f"number of patches must be a positive integer, got {N!r}")
    if N > R:
        raise ConfigError(f"cannot split {R} events into {N} patches")
    cuts = balanced_cuts(R, int(N))
    ts = stream.timestamps
    starts = [float(ts[c]) for c in cuts[:-1]]
    ends = starts[1:] + [float(ts[-1])]
    return sequence_from_cuts(stream, cuts, list(zip(starts, ends)), "ade", carry_forward)


def uniform_windows(stream: EventStream, interval: float) -> int:
    t0, t1 = stream.time_span
    span = t1 - t0
    if interval >= span:
        return 1
    return max(1, math.ceil(span / interval))


def partition_uniform(stream: EventStream, interval: float, carry_forward: bool = True) -> PatchSequence:
    """Equal-duration windows from the first timestamp; the last window is closed."""
    if not interval > 0:
        raise ConfigError(f"interval must be positive, got {interval}")
    if not len(stream):
        raise ConfigError("cannot partition an empty stream")
    t0, t1 = stream.time_span
    if interval >= t1 - t0:
        log.warning("interval %s covers the whole span %s; producing a single patch", interval, t1 - t0)
    n = uniform_windows(stream, interval)
    slot = np.minimum(((stream.timestamps - t0) // interval).astype(np.int64), n - 1)
    cuts = [0] + [int(np.searchsorted(slot, k, side="left")) for k in range(1, n)] + [len(stream)]
    spans = [(t0 + k * interval, min(t0 + (k + 1) * interval, t1) if k == n - 1 else t0 + (k + 1) * interval)
             for k in range(n)]
    return sequence_from_cuts(stream, cuts, spans, "ude", carry_forward)


def signature(patch: Patch) -> np.ndarray:
    """13-vector: [events, active nodes, mean degree, 8 log2 degree bins, node-feature mean, edge-feature mean].

    Bin 0 counts degree-0 nodes, bin b >= 1 counts degrees in [2^(b-1), 2^b),
    the last bin is open-ended.
    """
    sig = np.zeros(SIGNATURE_LENGTH)
    sig[0] = patch.event_count
    sig[1] = patch.num_active
    if patch.num_active:
        deg = patch.degrees()
        sig[2] = deg.mean()
        bins = np.where(deg > 0, np.floor(np.log2(np.maximum(deg, 1))).astype(np.int64) + 1, 0)
        np.add.at(sig, 3 + np.minimum(bins, DEGREE_BINS - 1), 1.0)
        if patch.node_features is not None and patch.node_features.size:
            sig[11] = patch.node_features.mean(axis=1).mean()
    sig[12] = patch.edge_feature_mean
    return sig


def pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    na, nb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def phi_distance(a, b) -> float:
    """1 - Pearson(a, b), in [0, 2]. Constant inputs: 0 if equal, else 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError(f"signature lengths differ: {a.shape} vs {b.shape}")
    r = pearson(a, b)
    if r is None:
        return 0.0 if np.array_equal(a, b) else 1.0
    return 1.0 - r


@dataclass
class AdeSearchResult:
    chosen_N: int
    cost_curve: list[tuple[int, float]]
    boundaries: list[float]
    epsilon_violations: int
    sequence: PatchSequence | None = field(default=None, repr=False)

    def curve_csv(self) -> str:
        lines = ["n,cost"] + [f"{n},{c!r}" for n, c in self.cost_curve]
        return "\n".join(lines) + "\n"


def ade_cost(stream_sig: np.ndarray, seq: PatchSequence, tau: float, literal_sign: bool = False) -> float:
    sigs = np.array([signature(p) for p in seq])
    quality = phi_distance(stream_sig, sigs.mean(axis=0))
    size = tau * math.log(len(seq))
    return quality + size if literal_sign else quality - size


def default_grid(R: int) -> list[int]:
    grid = [n for n in DEFAULT_GRID if n <= R]
    return grid or [R]


def epsilon_violations(seq: PatchSequence, epsilon: float) -> int:
    sigs = [signature(p) for p in seq]
    return sum(1 for a, b in itertools.combinations(sigs, 2) if phi_distance(a, b) > epsilon)


def search_N(stream: EventStream, tau: float = DEFAULT_TAU, epsilon: float = DEFAULT_EPSILON,
             grid: Sequence[int] | None = None, literal_sign: bool = False,
             carry_forward: bool = True) -> AdeSearchResult:
    """Grid search of the patch count; ties go to the smallest N."""
    R = len(stream)
    grid = default_grid(R) if grid is None else list(grid)
    if not grid:
        raise ConfigError("candidate grid is empty")
    bad = [n for n in grid if not 1 <= n <= R]
    if bad:
        raise ConfigError(f"grid candidates {bad} outside [1, {R}]")
    if tau < 0:
        raise ConfigError("tau must be non-negative")
    full_sig = signature(partition_by_events(stream, 1, carry_forward)[0])

    costs: dict[int, float] = {}
    seqs: dict[int, PatchSequence] = {}
    for n in sorted(set(int(n) for n in grid)):
        seq = partition_by_events(stream, n, carry_forward)
        costs[n] = ade_cost(full_sig, seq, tau, literal_sign)
        seqs[n] = seq
    best = min(costs, key=lambda n: (costs[n], n))
    chosen = seqs[best]
    return AdeSearchResult(
        chosen_N=best,
        cost_curve=sorted(costs.items()),
        boundaries=[p.time_span[0] for p in chosen.patches[1:]],
        epsilon_violations=epsilon_violations(chosen, epsilon),
        sequence=chosen,
    )


def distribution_stats(seq: PatchSequence) -> dict:
    counts = seq.event_counts.astype(float)
    m = counts.mean()
    std = counts.std()
    return {
        "provenance": seq.provenance,
        "patches": len(counts),
        "counts": [int(c) for c in counts],
        "min": int(counts.min()),
        "max": int(counts.max()),
        "mean": float(m),
        "std": float(std),
        "cv": float(std / m) if m > 0 else 0.0,
    }


def stats_records(seq: PatchSequence) -> list[str]:
    """One JSON record per patch: index, start, end, events, active_nodes, edges."""
    return [json.dumps({"index": p.index, "start": p.time_span[0], "end": p.time_span[1],
                        "events": p.event_count, "active_nodes": p.num_active,
                        "edges": p.num_edges}, sort_keys=True)
            for p in seq]
