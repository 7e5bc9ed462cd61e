"""Sparse temporal transformer over a per-node sequence of patch embeddings.

Each round t every patch state attends over its five-row context

    c_i(t) = [z_{i-1}(t-1); z_i(t-1); z_{i+1}(t-1); p_i; r(t-1)]

(missing neighbours are zero rows), with query z_i(t-1). All patches update
simultaneously from round t-1 values. The relay then attends over
[r(t-1); Z(t)] with query r(t-1). Both paths use per-head scaled dot-product
attention, concatenate the heads, apply ELU and layer normalisation.

Sequences of many nodes are processed as one batch: ``p`` has shape
[nodes, N, d]; unbatched [N, d] input is accepted everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor

CONTEXT_ROWS = 5


@dataclass
class SttParams:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    rq: Tensor
    rk: Tensor
    rv: Tensor
    patch_gain: Tensor
    patch_bias: Tensor
    relay_gain: Tensor
    relay_bias: Tensor
    heads: int
    rounds: int = 2

    @classmethod
    def init(cls, d: int, heads: int, rounds: int, rng) -> "SttParams":
        if heads < 1 or d % heads:
            raise ConfigError(f"state width {d} must be a positive multiple of heads={heads}")
        if rounds < 1:
            raise ConfigError(f"rounds must be at least 1, got {rounds}")
        mats = [T.xavier_init((d, d), rng) for _ in range(6)]
        return cls(*mats, T.parameter(np.ones(d)), T.parameter(np.zeros(d)),
                   T.parameter(np.ones(d)), T.parameter(np.zeros(d)), heads=heads, rounds=rounds)

    @property
    def d(self) -> int:
        return self.wq.shape[0]

    @property
    def d_head(self) -> int:
        return self.d // self.heads

    def parameters(self) -> dict[str, Tensor]:
        names = ("wq", "wk", "wv", "rq", "rk", "rv", "patch_gain", "patch_bias", "relay_gain", "relay_bias")
        return {f"stt.{n}": getattr(self, n) for n in names}


@dataclass
class SttState:
    z: Tensor            # [B, N, d]
    r: Tensor            # [B, d]
    t: int = 0
    beta: Tensor | None = field(default=None, repr=False)  # last patch attention [B, N, k, 1, 5]
    lam: Tensor | None = field(default=None, repr=False)   # last relay attention [B, k, 1, N+1]


@dataclass
class AttentionCounter:
    """Counts attention scores; ``head_rounds`` counts (sequence, head, round) units."""
    patch_scores: int = 0
    relay_scores: int = 0
    dense_scores: int = 0
    head_rounds: int = 0

    @property
    def sparse_scores(self) -> int:
        return self.patch_scores + self.relay_scores

    def per_head_round(self, dense: bool = False) -> float:
        total = self.dense_scores if dense else self.sparse_scores
        return total / self.head_rounds if self.head_rounds else 0.0


def _batched(p) -> tuple[Tensor, bool]:
    p = T.as_tensor(p)
    if p.ndim == 2:
        return p.reshape(1, *p.shape), True
    if p.ndim != 3:
        raise DimensionError(f"patch embeddings must be [N, d] or [B, N, d], got {p.shape}")
    return p, False


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, d = x.shape
    return x.reshape(*lead, heads, d // heads)


def init_state(p) -> SttState:
    """z(0) = p; relay r(0) = mean of the patch embeddings."""
    pb, _ = _batched(p)
    if pb.shape[1] == 0:
        raise ContractError("cannot run the temporal transformer on zero patches")
    return SttState(z=pb, r=T.mean(pb, axis=1), t=0)


def _contexts(state: SttState, p: Tensor, relay: bool) -> Tensor:
    z = state.z
    B, N, d = z.shape
    pad = Tensor(np.zeros((B, 1, d)))
    zpad = T.concat([pad, z, pad], axis=1)
    prev, nxt = zpad[:, :N], zpad[:, 2:]
    r = state.r.reshape(B, 1, d) + Tensor(np.zeros((B, N, d))) if relay else Tensor(np.zeros((B, N, d)))
    return T.stack([prev, z, nxt, p, r], axis=2)  # [B, N, 5, d]


def build_context(state: SttState, p, i: int) -> Tensor:
    """Context rows for patch ``i`` (0-based): [5, d], or [B, 5, d] for batched input."""
    pb, single = _batched(p)
    N = pb.shape[1]
    if not 0 <= i < N:
        raise ContractError(f"patch index {i} out of range for {N} patches")
    ctx = _contexts(state, pb, relay=True)[:, i]
    return ctx[0] if single else ctx


def _check(state: SttState, p: Tensor, params: SttParams):
    if state.z.shape != p.shape or p.shape[-1] != params.d:
        raise DimensionError(f"state {state.z.shape}, embeddings {p.shape}, params width {params.d}")


def patch_update(state: SttState, p, params: SttParams, *, relay: bool = True, training: bool = False,
                 dropout: float = 0.0, rng=None, counter: AttentionCounter | None = None) -> Tensor:
    pb, _ = _batched(p)
    _check(state, pb, params)
    B, N, d = pb.shape
    k, dh = params.heads, params.d_head
    ctx = _contexts(state, pb, relay)
    q = _split_heads(state.z @ params.wq, k).reshape(B, N, k, 1, dh)
    keys = _split_heads(ctx @ params.wk, k).transpose(0, 1, 3, 2, 4)    # [B, N, k, 5, dh]
    vals = _split_heads(ctx @ params.wv, k).transpose(0, 1, 3, 2, 4)
    scores = (q @ T.swapaxes(keys, -1, -2)) * (1.0 / math.sqrt(dh))    # [B, N, k, 1, 5]
    beta = T.softmax(scores, axis=-1)
    state.beta = beta
    if counter is not None:
        counter.patch_scores += scores.size
    mix = (beta @ vals).reshape(B, N, d)
    mix = T.dropout(mix, dropout, training, rng)
    return T.layer_norm(T.elu(mix), params.patch_gain, params.patch_bias)


def relay_update(state: SttState, z_new, params: SttParams, *, training: bool = False,
                 dropout: float = 0.0, rng=None, counter: AttentionCounter | None = None) -> Tensor:
    zb, _ = _batched(z_new)
    B, N, d = zb.shape
    if state.r.shape != (B, d) or d != params.d:
        raise DimensionError(f"relay {state.r.shape} does not match patch states {zb.shape}")
    k, dh = params.heads, params.d_head
    stackd = T.concat([state.r.reshape(B, 1, d), zb], axis=1)          # [B, N+1, d]
    q = _split_heads(state.r @ params.rq, k).reshape(B, k, 1, dh)
    keys = _split_heads(stackd @ params.rk, k).transpose(0, 2, 1, 3)   # [B, k, N+1, dh]
    vals = _split_heads(stackd @ params.rv, k).transpose(0, 2, 1, 3)
    scores = (q @ T.swapaxes(keys, -1, -2)) * (1.0 / math.sqrt(dh))    # [B, k, 1, N+1]
    lam = T.softmax(scores, axis=-1)
    state.lam = lam
    if counter is not None:
        counter.relay_scores += scores.size
    mix = (lam @ vals).reshape(B, d)
    mix = T.dropout(mix, dropout, training, rng)
    return T.layer_norm(T.elu(mix), params.relay_gain, params.relay_bias)


def run(p, params: SttParams, *, rounds: int | None = None, relay: bool = True, training: bool = False,
        dropout: float = 0.0, rng=None, counter: AttentionCounter | None = None) -> SttState:
    """Initialise and run the configured number of (patch, relay) rounds.

    ``relay=False`` ablates the relay path: the context's relay row is zero
    and the relay is never updated.
    """
    rounds = params.rounds if rounds is None else rounds
    if rounds < 1:
        raise ConfigError(f"rounds must be at least 1, got {rounds}")
    pb, single = _batched(p)
    state = init_state(pb)
    for _ in range(rounds):
        z_new = patch_update(state, pb, params, relay=relay, training=training,
                             dropout=dropout, rng=rng, counter=counter)
        if relay:
            r_new = relay_update(state, z_new, params, training=training,
                                 dropout=dropout, rng=rng, counter=counter)
        else:
            r_new = state.r
        state = SttState(z=z_new, r=r_new, t=state.t + 1, beta=state.beta, lam=state.lam)
        if counter is not None:
            counter.head_rounds += pb.shape[0] * params.heads
    if single:
        state.z = state.z[0]
        state.r = state.r[0]
    return state


def dense_run(p, params: SttParams, *, rounds: int | None = None,
              counter: AttentionCounter | None = None) -> Tensor:
    """Fully connected comparator used for timing and score counting only.

    Every patch state attends to all N states plus its own embedding (N+1
    candidates, N^2 + N scores per head per round). Returns the mean of the
    final states.
    """
    rounds = params.rounds if rounds is None else rounds
    pb, single = _batched(p)
    B, N, d = pb.shape
    k, dh = params.heads, params.d_head
    z = pb
    kp = _split_heads(pb @ params.wk, k).transpose(0, 2, 1, 3)   # [B, k, N, dh]
    vp = _split_heads(pb @ params.wv, k).transpose(0, 2, 1, 3)
    for _ in range(rounds):
        q = _split_heads(z @ params.wq, k).transpose(0, 2, 1, 3)
        kz = _split_heads(z @ params.wk, k).transpose(0, 2, 1, 3)
        vz = _split_heads(z @ params.wv, k).transpose(0, 2, 1, 3)
        s_zz = q @ T.swapaxes(kz, -1, -2)                          # [B, k, N, N]
        s_zp = T.tsum(q * kp, axis=-1, keepdims=True)              # [B, k, N, 1]
        scores = T.concat([s_zz, s_zp], axis=-1) * (1.0 / math.sqrt(dh))
        att = T.softmax(scores, axis=-1)
        if counter is not None:
            counter.dense_scores += scores.size
            counter.head_rounds += B * k
        mix = att[..., :N] @ vz + att[..., N:] * vp                 # [B, k, N, dh]
        z = T.layer_norm(T.elu(mix.transpose(0, 2, 1, 3).reshape(B, N, d)),
                         params.patch_gain, params.patch_bias)
    out = T.mean(z, axis=1)
    return out[0] if single else out
