"""Inductive and transductive link-prediction training, evaluation and timing.

Inductive: patches 1..T-1 are encoded; the last patch (the prediction graph)
supplies walk-sampled training pairs and held-out evaluation pairs, kept
disjoint. Transductive: a fraction of every patch's edges is masked out of
the model's input; embeddings for patch t come from the prefix 1..t and are
scored against that patch's held-out pairs.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import stt
from . import tensor as T
from .ade import partition_by_events, search_N
from .checkpoint import Checkpoint
from .errors import ConfigError, ContractError, ProtocolError
from .graph import EventStream, Patch, PatchSequence
from .model import ModelConfig, SparseDyn
from .sampling import WalkSampleSet, inductive_loss, sample_walks
from .tensor import Tensor

log = logging.getLogger(__name__)

PROTOCOLS = ("inductive", "transductive")


def _from_dict(cls, d: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class SamplerConfig:
    walk_len: int = 10
    walks_per_node: int = 5
    window: int = 3
    neg_per_pos: int = 1
    omega_n: float = 1.0
    reduction: str = "mean"

    def validate(self):
        if self.walk_len < 2:
            raise ConfigError(f"walk_len must be at least 2, got {self.walk_len}")
        if self.walks_per_node < 1 or self.window < 1:
            raise ConfigError("walks_per_node and window must be positive")
        if self.neg_per_pos < 0 or self.omega_n < 0:
            raise ConfigError("neg_per_pos and omega_n must be non-negative")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"reduction must be mean or sum, got {self.reduction!r}")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "sampler")


@dataclass
class TrainConfig:
    max_epochs: int = 200
    patience: int = 10
    pg_holdout: float = 0.5
    mask_fraction: float = 0.2
    strict_inductive: bool = True

    def validate(self):
        if self.max_epochs < 0 or self.patience < 1:
            raise ConfigError("max_epochs must be non-negative and patience positive")
        if not 0 < self.pg_holdout < 1:
            raise ConfigError(f"pg_holdout must lie in (0, 1), got {self.pg_holdout}")
        if not 0 < self.mask_fraction < 1:
            raise ConfigError(f"mask_fraction must lie in (0, 1), got {self.mask_fraction}")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "train")


# ---------------------------------------------------------------- metrics

def link_metrics(scores, labels) -> dict:
    """Accuracy at 0.5 and rank-statistic AUC (ties averaged).

    With a single class present the AUC is undefined; it is reported as 1.0
    when every prediction is on the correct side of 0.5, else 0.0, and
    ``single_class`` is set.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.size == 0:
        raise ContractError("cannot evaluate an empty pair list")
    acc = float(np.mean((scores >= 0.5) == (labels > 0.5)))
    n_pos = int(np.count_nonzero(labels > 0.5))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return {"accuracy": acc, "auc": 1.0 if acc == 1.0 else 0.0, "single_class": True}
    ranks = rankdata(scores)
    auc = (ranks[labels > 0.5].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return {"accuracy": acc, "auc": float(auc), "single_class": False}


def _pair_logits(emb: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", emb[pairs[:, 0]], emb[pairs[:, 1]])


def _bce(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.where(labels > 0.5, np.logaddexp(0, -logits), np.logaddexp(0, logits))))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class EvalReport:
    accuracy: float
    auc: float
    loss: float
    inference_seconds: float = 0.0
    attention_scores: int = 0
    num_pairs: int = 0
    single_class: bool = False
    per_patch: list = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0
    initial_accuracy: float | None = None
    initial_auc: float | None = None
    history: list = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("inference_seconds")
        return d

    def history_csv(self) -> str:
        rows = ["epoch,train_loss,val_loss,val_auc"]
        rows += [f"{h['epoch']},{h['train_loss']!r},{h['val_loss']!r},{h['val_auc']!r}" for h in self.history]
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------- data preparation

def prepare_sequence(data, cfg: ModelConfig) -> PatchSequence:
    """Encode an event stream (fixed N or cost search); pass a patch sequence through."""
    if isinstance(data, PatchSequence):
        return data
    if not isinstance(data, EventStream):
        raise ConfigError(f"expected EventStream or PatchSequence, got {type(data).__name__}")
    if cfg.n_patches is not None:
        return partition_by_events(data, cfg.n_patches, cfg.carry_forward)
    result = search_N(data, cfg.ade_tau, cfg.ade_epsilon, cfg.ade_grid, cfg.ade_literal_sign, cfg.carry_forward)
    log.info("ADE chose N=%d", result.chosen_N)
    return result.sequence


def _canonical_edges(patch: Patch) -> list[tuple[int, int]]:
    return sorted((u, v) for (u, v) in patch.edges if u != v)


def sample_non_edges(edges: set, nodes: Sequence[int], count: int, rng, exclude: set = frozenset()) -> np.ndarray:
    """Up to ``count`` distinct unordered non-edges among ``nodes``."""
    nodes = np.asarray(sorted(nodes), dtype=np.int64)
    chosen: list[tuple[int, int]] = []
    seen = set()
    if len(nodes) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    tries = 0
    while len(chosen) < count and tries < 100 * max(count, 1):
        tries += 1
        i, j = rng.integers(len(nodes), size=2)
        if i == j:
            continue
        u, v = int(min(nodes[i], nodes[j])), int(max(nodes[i], nodes[j]))
        if (u, v) in edges or (u, v) in exclude or (u, v) in seen:
            continue
        seen.add((u, v))
        chosen.append((u, v))
    if len(chosen) < count:
        log.warning("only %d of %d negative evaluation pairs could be drawn", len(chosen), count)
    return np.array(chosen, dtype=np.int64).reshape(-1, 2)


@dataclass
class EvalSplit:
    val_pairs: np.ndarray
    val_labels: np.ndarray
    test_pairs: np.ndarray
    test_labels: np.ndarray

    def pairs(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        return (self.val_pairs, self.val_labels) if split == "val" else (self.test_pairs, self.test_labels)

    def all_pairs(self) -> set:
        out = set()
        for u, v in np.concatenate([self.val_pairs, self.test_pairs]):
            out.add((int(u), int(v)))
            out.add((int(v), int(u)))
        return out


def _split_eval(pos: np.ndarray, neg: np.ndarray, rng) -> EvalSplit:
    pos = pos[rng.permutation(len(pos))]
    neg = neg[rng.permutation(len(neg))]
    hp, hn = len(pos) // 2, len(neg) // 2
    val = np.concatenate([pos[:hp], neg[:hn]])
    test = np.concatenate([pos[hp:], neg[hn:]])
    val_l = np.concatenate([np.ones(hp), np.zeros(hn)])
    test_l = np.concatenate([np.ones(len(pos) - hp), np.zeros(len(neg) - hn)])
    return EvalSplit(val.reshape(-1, 2), val_l, test.reshape(-1, 2), test_l)


def _holdout(patch: Patch, fraction: float, rng) -> tuple[list, EvalSplit]:
    """Hold out ``fraction`` of the patch's edges plus as many non-edges; returns remaining edges."""
    edges = _canonical_edges(patch)
    n_hold = int(round(fraction * len(edges)))
    order = rng.permutation(len(edges))
    held = np.array([edges[i] for i in order[:n_hold]], dtype=np.int64).reshape(-1, 2)
    kept = [edges[i] for i in sorted(order[n_hold:])]
    neg = sample_non_edges(set(patch.edges), patch.active_nodes, n_hold, rng)
    return kept, _split_eval(held, neg, rng)


def _neighbor_map(nodes: Sequence[int], edges: Sequence[tuple[int, int]]) -> dict[int, list[int]]:
    nbrs: dict[int, set] = {int(u): set() for u in nodes}
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    return {u: sorted(s) for u, s in nbrs.items()}


def _adjacency(num_nodes: int, edges: Sequence[tuple[int, int]], weights: dict | None = None) -> np.ndarray:
    a = np.zeros((num_nodes, num_nodes))
    for u, v in edges:
        w = 1.0 if weights is None else float(weights[(u, v)])
        a[u, v] = a[v, u] = w
    return a


# ---------------------------------------------------------------- protocols

class InductiveTask:
    protocol = "inductive"

    def __init__(self, seq: PatchSequence, model_cfg: ModelConfig, sampler: SamplerConfig, train: TrainConfig):
        if len(seq) < 2:
            raise ProtocolError("inductive link prediction needs at least 2 patches")
        if seq.node_features.shape[1] != model_cfg.d_in:
            raise ConfigError(f"d_in={model_cfg.d_in} but the data has {seq.node_features.shape[1]}-wide node features")
        self.seq, self.model_cfg, self.sampler, self.train = seq, model_cfg, sampler, train
        n = seq.num_nodes
        rng = np.random.default_rng([model_cfg.seed, 1])
        self.inputs = seq.patches[:-1]
        self.pg = seq.patches[-1]
        weighted = model_cfg.weighted_adjacency
        self.adjacencies = [p.dense_adjacency(n, weighted) for p in self.inputs]
        kept, self.split = _holdout(self.pg, train.pg_holdout, rng)
        self.walk_graph = _neighbor_map(self.pg.active_nodes, kept)
        self.pg_train_adjacency = _adjacency(n, kept, dict(self.pg.edges) if weighted else None)
        self.exclude = self.split.all_pairs()
        seen = np.zeros(n, dtype=bool)
        for p in self.inputs:
            seen[list(p.active_nodes)] = True
        self.unseen = ~seen
        self.x = Tensor(seq.node_features)

    def samples(self, epoch: int) -> WalkSampleSet:
        s = self.sampler
        return sample_walks(self.walk_graph, s.walk_len, s.walks_per_node, s.window, s.neg_per_pos,
                            np.random.default_rng([self.model_cfg.seed, 3, epoch]), omega_n=s.omega_n,
                            universe=self.pg.active_nodes, exclude=self.exclude,
                            source_patch=self.pg.index)

    def embeddings(self, model: SparseDyn, *, training=False, rng=None, counter=None) -> Tensor:
        emb = model.embed(self.adjacencies, self.x, training=training, rng=rng, counter=counter)
        if not self.train.strict_inductive and self.unseen.any():
            h = model.structural(self.pg_train_adjacency, self.x, training=training, rng=rng)
            fallback = h + model.pe(len(self.inputs))
            if model.cfg.concat_last:
                fallback = T.concat([fallback, fallback], axis=-1)
            m = self.unseen[:, None].astype(float)
            emb = emb * (1.0 - m) + fallback * m
        return emb

    def loss(self, model: SparseDyn, epoch: int, rng) -> Tensor:
        emb = self.embeddings(model, training=True, rng=rng)
        return inductive_loss(emb, self.samples(epoch), self.sampler.reduction)

    def score(self, model: SparseDyn, split: str = "test", pairs=None, labels=None, counter=None) -> dict:
        if pairs is None:
            pairs, labels = self.split.pairs(split)
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, pairs.shape[-1] if np.ndim(pairs) == 2 else 2)[:, :2]
        labels = np.asarray(labels, dtype=float)
        if len(pairs) == 0:
            raise ContractError("cannot evaluate an empty pair list")
        with T.no_grad():
            emb = self.embeddings(model, counter=counter).data
        logits = _pair_logits(emb, pairs)
        out = link_metrics(_sigmoid(logits), labels)
        out.update(loss=_bce(logits, labels), num_pairs=len(pairs), per_patch=[])
        return out


class TransductiveTask:
    protocol = "transductive"

    def __init__(self, seq: PatchSequence, model_cfg: ModelConfig, sampler: SamplerConfig, train: TrainConfig):
        if seq.node_features.shape[1] != model_cfg.d_in:
            raise ConfigError(f"d_in={model_cfg.d_in} but the data has {seq.node_features.shape[1]}-wide node features")
        self.seq, self.model_cfg, self.sampler, self.train = seq, model_cfg, sampler, train
        n = seq.num_nodes
        rng = np.random.default_rng([model_cfg.seed, 1])
        weighted = model_cfg.weighted_adjacency
        self.adjacencies, self.splits, self.walk_graphs, self.excludes = [], [], [], []
        for p in seq:
            kept, split = _holdout(p, train.mask_fraction, rng)
            self.adjacencies.append(_adjacency(n, kept, dict(p.edges) if weighted else None))
            self.splits.append(split)
            self.walk_graphs.append(_neighbor_map(p.active_nodes, kept))
            self.excludes.append(split.all_pairs())
        self.x = Tensor(seq.node_features)

    def samples(self, epoch: int) -> list[WalkSampleSet]:
        s = self.sampler
        return [sample_walks(g, s.walk_len, s.walks_per_node, s.window, s.neg_per_pos,
                             np.random.default_rng([self.model_cfg.seed, 3, epoch, t]), omega_n=s.omega_n,
                             universe=self.seq[t].active_nodes, exclude=self.excludes[t], source_patch=t)
                for t, g in enumerate(self.walk_graphs)]

    def embeddings(self, model: SparseDyn, *, training=False, rng=None, counter=None) -> list[Tensor]:
        return model.embed_prefixes(self.adjacencies, self.x, training=training, rng=rng, counter=counter)

    def loss(self, model: SparseDyn, epoch: int, rng) -> Tensor:
        embs = self.embeddings(model, training=True, rng=rng)
        total = None
        for emb, samples in zip(embs, self.samples(epoch)):
            if not len(samples.positives) and not len(samples.negatives):
                continue
            term = inductive_loss(emb, samples, self.sampler.reduction)
            total = term if total is None else total + term
        return total if total is not None else T.tsum(embs[0] * 0.0)

    def score(self, model: SparseDyn, split: str = "test", pairs=None, labels=None, counter=None) -> dict:
        with T.no_grad():
            embs = [e.data for e in self.embeddings(model, counter=counter)]
        if pairs is None:
            per_patch_pairs = [s.pairs(split) for s in self.splits]
        else:
            pairs = np.asarray(pairs, dtype=np.int64)
            labels = np.asarray(labels, dtype=float)
            if pairs.ndim != 2 or pairs.shape[1] != 3:
                raise ContractError("transductive evaluation pairs need a patch column (u, v, patch)")
            per_patch_pairs = [(pairs[pairs[:, 2] == t, :2], labels[pairs[:, 2] == t]) for t in range(len(embs))]
        if sum(len(p) for p, _ in per_patch_pairs) == 0:
            raise ContractError("cannot evaluate an empty pair list")
        rows = []
        for t, ((pp, ll), emb) in enumerate(zip(per_patch_pairs, embs)):
            if len(pp) == 0:
                rows.append({"patch": t, "num_pairs": 0, "accuracy": None, "auc": None, "loss": None})
                continue
            logits = _pair_logits(emb, pp)
            m = link_metrics(_sigmoid(logits), ll)
            rows.append({"patch": t, "num_pairs": len(pp), "accuracy": m["accuracy"], "auc": m["auc"],
                         "loss": _bce(logits, ll), "single_class": m["single_class"]})
        scored = [r for r in rows if r["num_pairs"]]
        return {"accuracy": float(np.mean([r["accuracy"] for r in scored])),
                "auc": float(np.mean([r["auc"] for r in scored])),
                "loss": float(np.mean([r["loss"] for r in scored])),
                "single_class": all(r["single_class"] for r in scored),
                "num_pairs": sum(r["num_pairs"] for r in scored),
                "per_patch": rows}


def make_task(seq: PatchSequence, protocol: str, model_cfg, sampler, train):
    if protocol == "inductive":
        return InductiveTask(seq, model_cfg, sampler, train)
    if protocol == "transductive":
        return TransductiveTask(seq, model_cfg, sampler, train)
    raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")


# ---------------------------------------------------------------- training

def _run_config(protocol, model_cfg, sampler, train) -> dict:
    return {"protocol": protocol, "model": model_cfg.to_dict(), "sampler": asdict(sampler), "train": asdict(train)}


def fit(data, protocol: str, model_cfg: ModelConfig | None = None, sampler: SamplerConfig | None = None,
        train: TrainConfig | None = None, on_epoch: Callable[[dict], None] | None = None):
    """Train with early stopping on validation loss; returns (Checkpoint, EvalReport).

    The returned parameters are those of the best validation epoch.
    """
    model_cfg = model_cfg or ModelConfig()
    sampler = sampler or SamplerConfig()
    train = train or TrainConfig()
    model_cfg.validate()
    sampler.validate()
    train.validate()
    seq = prepare_sequence(data, model_cfg)
    if isinstance(data, EventStream):
        model_cfg = ModelConfig.from_dict({**model_cfg.to_dict(), "n_patches": len(seq)})
    task = make_task(seq, protocol, model_cfg, sampler, train)
    model = SparseDyn(model_cfg, max_patches=max(512, len(seq) + 1))
    params = model.parameters()
    plist = list(params.values())
    adam = T.AdamState(lr=model_cfg.lr, beta1=model_cfg.beta1, beta2=model_cfg.beta2, eps=model_cfg.adam_eps)

    initial = task.score(model, "test")
    best_val = math.inf
    best_state = model.state_dict()
    best_epoch = 0
    wait = 0
    history = []
    epoch = 0
    for epoch in range(1, train.max_epochs + 1):
        rng = np.random.default_rng([model_cfg.seed, 2, epoch])
        for p in plist:
            p.grad = None
        loss = task.loss(model, epoch, rng)
        T.backward(loss)
        # unreachable parameters (e.g. unused position rows) simply get a zero update
        T.adam_step(plist, [p.grad if p.grad is not None else np.zeros_like(p.data) for p in plist], adam)
        val = task.score(model, "val")
        row = {"epoch": epoch, "train_loss": float(loss.data), "val_loss": val["loss"], "val_auc": val["auc"]}
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if val["loss"] < best_val:
            best_val, best_state, best_epoch, wait = val["loss"], model.state_dict(), epoch, 0
        else:
            wait += 1
            if wait >= train.patience:
                break
    model.load_state_dict(best_state)

    ckpt = Checkpoint(config=_run_config(protocol, model_cfg, sampler, train), params=model.state_dict(),
                      adam=adam, epoch=best_epoch,
                      rng_state={"seed": model_cfg.seed, "epochs_run": epoch})
    report = _report(task, model)
    report.epochs_run = epoch
    report.best_epoch = best_epoch
    report.initial_accuracy = initial["accuracy"]
    report.initial_auc = initial["auc"]
    report.history = history
    return ckpt, report


def _report(task, model, pairs=None, labels=None) -> EvalReport:
    counter = stt.AttentionCounter()
    start = time.perf_counter()
    out = task.score(model, "test", pairs, labels, counter=counter)
    elapsed = time.perf_counter() - start
    return EvalReport(accuracy=out["accuracy"], auc=out["auc"], loss=out["loss"],
                      inference_seconds=elapsed, attention_scores=counter.sparse_scores,
                      num_pairs=out["num_pairs"], single_class=out["single_class"],
                      per_patch=out["per_patch"])


def train_inductive(data, model_cfg=None, sampler=None, train=None, on_epoch=None):
    return fit(data, "inductive", model_cfg, sampler, train, on_epoch)


def train_transductive(data, model_cfg=None, sampler=None, train=None, on_epoch=None):
    return fit(data, "transductive", model_cfg, sampler, train, on_epoch)


def restore(ckpt: Checkpoint):
    """Model and configs recorded in a checkpoint."""
    cfg = ckpt.config
    model_cfg = ModelConfig.from_dict(cfg["model"])
    sampler = SamplerConfig.from_dict(cfg["sampler"])
    train = TrainConfig.from_dict(cfg["train"])
    model = SparseDyn(model_cfg, max_patches=ckpt.params["pe.table"].shape[0] if "pe.table" in ckpt.params else 512)
    model.load_state_dict(ckpt.params)
    return model, cfg["protocol"], model_cfg, sampler, train


def evaluate(ckpt: Checkpoint, data, pairs=None, labels=None) -> EvalReport:
    """Score ``pairs`` (default: the protocol's test split) with a checkpointed model.

    ``data`` must be the dataset the checkpoint was trained on; the
    evaluation split is re-derived from the recorded seed.
    """
    model, protocol, model_cfg, sampler, train = restore(ckpt)
    if pairs is not None:
        pairs = np.asarray(pairs)
        if pairs.size == 0:
            raise ContractError("cannot evaluate an empty pair list")
    task = make_task(prepare_sequence(data, model_cfg), protocol, model_cfg, sampler, train)
    return _report(task, model, pairs, labels)


# ---------------------------------------------------------------- timing

def score_counts(N: int) -> dict:
    """Closed-form attention scores per head per round."""
    return {"sparse": 6 * N + 1, "dense": N * N + N}


def timing_report(model: SparseDyn, data, comparators: Sequence[str] = ("sparse", "dense_oracle"),
                  repeats: int = 3) -> dict:
    """Wall-clock and attention-score counts of the temporal stage on identical inputs."""
    seq = data if isinstance(data, PatchSequence) else prepare_sequence(data, model.cfg)
    x = Tensor(seq.node_features)
    adjs = [p.dense_adjacency(seq.num_nodes, model.cfg.weighted_adjacency) for p in seq]
    with T.no_grad():
        p = model.encode_patches(adjs, x)
    out = {"N": len(seq), "nodes": seq.num_nodes, "heads": model.cfg.heads, "rounds": model.cfg.rounds}
    for name in comparators:
        counter = stt.AttentionCounter()
        best = math.inf
        for _ in range(max(1, repeats)):
            counter = stt.AttentionCounter()
            start = time.perf_counter()
            with T.no_grad():
                if name == "sparse":
                    stt.run(p, model.stt, counter=counter)
                elif name == "dense_oracle":
                    stt.dense_run(p, model.stt, counter=counter)
                else:
                    raise ConfigError(f"unknown comparator {name!r}")
            best = min(best, time.perf_counter() - start)
        dense = name == "dense_oracle"
        out[name] = {"seconds": best,
                     "scores": counter.dense_scores if dense else counter.sparse_scores,
                     "scores_per_head_round": counter.per_head_round(dense=dense)}
    if "sparse" in out and "dense_oracle" in out:
        out["score_ratio"] = out["dense_oracle"]["scores_per_head_round"] / out["sparse"]["scores_per_head_round"]
    return out
