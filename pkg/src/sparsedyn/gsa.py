"""Graph structural attention over one patch, plus patch-position embeddings.

For head h with projection W_h and attention vector a_h = [a_src; a_dst]:

    e_um   = ELU(A_um * (a_src . W_h x_u + a_dst . W_h x_m))
    alpha  = softmax of e over m in N(u) + {u}
    h_u    = GELU(sum_m alpha_um W_h x_m)

Heads are concatenated. Self-loops are always present; non-neighbours get
exactly zero attention. One parameter set serves every patch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .graph import Patch
from .tensor import Tensor


@dataclass
class GsaParams:
    weight: Tensor  # [d_in, heads * d_head], head h owns columns h*d_head:(h+1)*d_head
    attn: Tensor    # [heads, 2 * d_head], source half then neighbour half
    heads: int

    @classmethod
    def init(cls, d_in: int, d: int, heads: int, rng) -> "GsaParams":
        if heads < 1 or d % heads:
            raise ConfigError(f"output width {d} must be a positive multiple of heads={heads}")
        weight = T.xavier_init((d_in, d), rng)
        attn = T.xavier_init((heads, 2 * (d // heads)), rng)
        return cls(weight, attn, heads)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d(self) -> int:
        return self.weight.shape[1]

    @property
    def d_head(self) -> int:
        return self.d // self.heads

    def parameters(self) -> dict[str, Tensor]:
        return {"gsa.weight": self.weight, "gsa.attn": self.attn}


def with_self_loops(adjacency: np.ndarray) -> np.ndarray:
    a = np.array(adjacency, dtype=float)
    diag = np.diagonal(a).copy()
    np.fill_diagonal(a, np.where(diag != 0, diag, 1.0))
    return a


def _project(x: Tensor, params: GsaParams) -> Tensor:
    """Per-head projections W_h x, shape [heads, n, d_head]."""
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise DimensionError(f"node features {x.shape} do not match W_p input width {params.d_in}")
    n = x.shape[0]
    proj = x @ params.weight
    return proj.reshape(n, params.heads, params.d_head).transpose(1, 0, 2)


def _logits(a: np.ndarray, wx: Tensor, params: GsaParams) -> Tensor:
    dh = params.d_head
    a_src = params.attn[:, :dh].reshape(params.heads, dh, 1)
    a_dst = params.attn[:, dh:].reshape(params.heads, dh, 1)
    s_src = wx @ a_src                   # [heads, n, 1]
    s_dst = (wx @ a_dst).transpose(0, 2, 1)  # [heads, 1, n]
    return T.elu((s_src + s_dst) * a)


def attention_logits(adjacency: np.ndarray, features, params: GsaParams, head: int | None = None) -> Tensor:
    """Raw scores e_um for all pairs, shape [heads, n, n] (or [n, n] for one head).

    Entries at non-edges come out as ELU(0) = 0; masking to zero probability
    happens in :func:`attention_weights`.
    """
    a = with_self_loops(adjacency)
    e = _logits(a, _project(T.as_tensor(features), params), params)
    return e if head is None else e[head]


def attention_weights(adjacency: np.ndarray, features, params: GsaParams) -> Tensor:
    a = with_self_loops(adjacency)
    e = _logits(a, _project(T.as_tensor(features), params), params)
    return T.softmax(e, axis=-1, mask=a != 0)


def aggregate(adjacency: np.ndarray, features, params: GsaParams) -> Tensor:
    """Concatenated per-head GELU outputs, shape [n, heads * d_head]."""
    x = T.as_tensor(features)
    n = x.shape[0]
    a = with_self_loops(adjacency)
    wx = _project(x, params)
    alpha = T.softmax(_logits(a, wx, params), axis=-1, mask=a != 0)
    heads = T.gelu(alpha @ wx)            # [heads, n, d_head]
    return heads.transpose(1, 0, 2).reshape(n, params.d)


def aggregate_patch(patch: Patch, params: GsaParams, weighted: bool = False) -> Tensor:
    """:func:`aggregate` over a patch's active nodes (rows follow ``patch.active_nodes``)."""
    return aggregate(patch.local_adjacency(weighted), patch.node_features, params)


class PositionEmbedding:
    """Absolute patch-index embedding: fixed sinusoid or a learned table.

    Sinusoid layout interleaves sin (even slots) and cos (odd slots) with
    frequencies 10000^(-2i/d), so index 0 maps to [0, 1, 0, 1, ...].
    """

    def __init__(self, d: int, family: str = "sinusoidal", max_len: int = 512, rng=None):
        if family not in ("sinusoidal", "learned", "none"):
            raise ConfigError(f"unknown position embedding family {family!r}")
        self.d = d
        self.family = family
        self.table: Tensor | None = None
        if family == "learned":
            self.table = T.xavier_init((max_len, d), rng if rng is not None else 0)

    @staticmethod
    def sinusoid(index: int, d: int) -> np.ndarray:
        pe = np.zeros(d)
        slots = np.arange(0, d, 2)
        freq = np.exp(-math.log(10000.0) * slots / d)
        pe[0::2] = np.sin(index * freq)
        pe[1::2] = np.cos(index * freq[: d // 2])
        return pe

    def __call__(self, index: int) -> Tensor:
        if self.family == "learned":
            return self.table[index]
        if self.family == "none":
            return Tensor(np.zeros(self.d))
        return Tensor(self.sinusoid(index, self.d))

    def parameters(self) -> dict[str, Tensor]:
        return {"pe.table": self.table} if self.table is not None else {}


def add_position(h, patch_index: int, pe) -> Tensor:
    h = T.as_tensor(h)
    vec = pe(patch_index) if callable(pe) else T.as_tensor(pe)
    if vec.shape != (h.shape[-1],):
        raise DimensionError(f"position embedding width {vec.shape} does not match features {h.shape}")
    return h + vec
