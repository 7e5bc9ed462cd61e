"""The full encoder: per-patch structural attention feeding the temporal transformer."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import gsa, stt
from . import tensor as T
from .errors import ConfigError
from .tensor import Tensor


@dataclass
class ModelConfig:
    d_in: int = 32
    d: int = 64
    heads: int = 8
    rounds: int = 2
    gsa_layers: int = 1
    dropout: float = 0.3
    position_embedding: str = "sinusoidal"
    weighted_adjacency: bool = False
    concat_last: bool = False
    n_patches: int | None = None
    ade_tau: float = 0.05
    ade_epsilon: float = 0.05
    ade_grid: tuple[int, ...] | None = None
    ade_literal_sign: bool = False
    carry_forward: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        for name in ("d_in", "d", "heads", "rounds", "gsa_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.position_embedding not in ("sinusoidal", "learned", "none"):
            raise ConfigError(f"position_embedding must be sinusoidal, learned or none, "
                              f"got {self.position_embedding!r}")
        if self.n_patches is not None and self.n_patches < 1:
            raise ConfigError(f"n_patches must be positive, got {self.n_patches}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["ade_grid"] is not None:
            d["ade_grid"] = list(d["ade_grid"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("ade_grid") is not None:
            d["ade_grid"] = tuple(d["ade_grid"])
        return cls(**d)


class SparseDyn:
    def __init__(self, cfg: ModelConfig, max_patches: int = 512):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 0])
        self.gsa = [gsa.GsaParams.init(cfg.d_in if i == 0 else cfg.d, cfg.d, cfg.heads, rng)
                    for i in range(cfg.gsa_layers)]
        self.pe = gsa.PositionEmbedding(cfg.d, cfg.position_embedding, max_len=max_patches, rng=rng)
        self.stt = stt.SttParams.init(cfg.d, cfg.heads, cfg.rounds, rng)

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.gsa):
            out.update({f"{k}{i}": v for k, v in layer.parameters().items()})
        out.update(self.pe.parameters())
        out.update(self.stt.parameters())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ConfigError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            if p.shape != state[k].shape:
                raise ConfigError(f"parameter {k}: expected shape {p.shape}, got {state[k].shape}")
            p.data[...] = state[k]

    @property
    def embedding_width(self) -> int:
        return 2 * self.cfg.d if self.cfg.concat_last else self.cfg.d

    def structural(self, adjacency: np.ndarray, x, *, training=False, rng=None) -> Tensor:
        h = T.as_tensor(x)
        for layer in self.gsa:
            h = gsa.aggregate(adjacency, h, layer)
        return T.dropout(h, self.cfg.dropout, training, rng)

    def encode_patches(self, adjacencies: Sequence[np.ndarray], x, *, training=False, rng=None) -> Tensor:
        """Position-aware structural embeddings of every node on every patch: [n, N, d]."""
        per_patch = [gsa.add_position(self.structural(a, x, training=training, rng=rng), i, self.pe)
                     for i, a in enumerate(adjacencies)]
        return T.stack(per_patch, axis=1)

    def temporal(self, p: Tensor, *, training=False, rng=None, counter=None) -> Tensor:
        """Node embeddings (final relay, optionally joined with the last patch state)."""
        state = stt.run(p, self.stt, training=training, dropout=self.cfg.dropout, rng=rng, counter=counter)
        if self.cfg.concat_last:
            return T.concat([state.r, state.z[:, -1]], axis=-1)
        return state.r

    def embed(self, adjacencies: Sequence[np.ndarray], x, *, training=False, rng=None, counter=None) -> Tensor:
        return self.temporal(self.encode_patches(adjacencies, x, training=training, rng=rng),
                             training=training, rng=rng, counter=counter)

    def embed_prefixes(self, adjacencies: Sequence[np.ndarray], x, *, training=False, rng=None,
                       counter=None) -> list[Tensor]:
        """Embedding after each prefix 1..t of the patches (transductive protocol)."""
        p = self.encode_patches(adjacencies, x, training=training, rng=rng)
        return [self.temporal(p[:, : t + 1], training=training, rng=rng, counter=counter)
                for t in range(len(adjacencies))]
