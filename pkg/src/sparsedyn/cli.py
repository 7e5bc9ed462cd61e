"""Command-line entry point: ``sparsedyn {stats,encode,generate,train,eval,timing}``.

Exit codes: 0 success, 2 user or configuration error, 1 internal error.
Every tabular result is printed as a table and written as CSV under --out.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import ade
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_grid
from .errors import ContractError, SparseDynError
from .graph import (ContinuousFormat, DiscreteFormat, EventStream, SynthConfig, load_continuous,
                    load_discrete, synthesize_stream, write_continuous, write_discrete)
from .model import SparseDyn
from .train import evaluate, fit, prepare_sequence, restore, timing_report

log = logging.getLogger("sparsedyn")


class UserError(Exception):
    pass


# ---------------------------------------------------------------- output helpers

class Output:
    def __init__(self, out_dir: str, quiet: bool):
        self.dir = Path(out_dir)
        self.quiet = quiet

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / name

    def say(self, text: str = ""):
        if not self.quiet:
            print(text)

    def table(self, name: str, header: list[str], rows: list[list], title: str | None = None):
        """Print an aligned table and write the same rows to ``<name>.csv``."""
        with open(self.path(f"{name}.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        cells = [header] + [[_fmt(c) for c in r] for r in rows]
        widths = [max(len(str(r[i])) for r in cells) for i in range(len(header))]
        if title:
            self.say(title)
        for j, r in enumerate(cells):
            self.say("  ".join(str(c).rjust(wd) for c, wd in zip(r, widths)))
            if j == 0:
                self.say("  ".join("-" * wd for wd in widths))

    def echo_config(self, cfg: RunConfig):
        self.path("effective_config.ini").write_text(cfg.to_ini())


def _fmt(c):
    if isinstance(c, float):
        return f"{c:.4f}"
    return "" if c is None else str(c)


# ---------------------------------------------------------------- data helpers

def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UserError(f"input file not found: {p}")
    return p


def _load_data(cfg: RunConfig, synthetic: bool = False):
    if synthetic:
        return synthesize_stream(SynthConfig(), cfg.run.seed)
    d = cfg.data
    if not d.input:
        raise UserError("no input given (use --input, [data] input, or --synthetic)")
    path = _require_file(d.input)
    if d.format == "discrete":
        return load_discrete(path, DiscreteFormat(d.num_nodes, d.feature_width, d.node_features))
    return load_continuous(path, ContinuousFormat(d.delimiter, d.bipartite, d.num_nodes,
                                                  d.feature_width, d.node_features))


def _require_stream(data) -> EventStream:
    if not isinstance(data, EventStream):
        raise UserError("this command needs a continuous event stream, not a snapshot file")
    return data


# ---------------------------------------------------------------- subcommands

def cmd_stats(args, cfg: RunConfig, out: Output) -> int:
    stream = _require_stream(_load_data(cfg, args.synthetic))
    intervals = args.ude_interval or []
    ade_ns = list(args.ade_n or [])
    seqs = []
    for iv in intervals:
        seqs.append((f"interval={iv:g}", ade.partition_uniform(stream, iv, cfg.model.carry_forward)))
    if not ade_ns:
        ade_ns = [len(s) for _, s in seqs] or [8]
    for n in ade_ns:
        if not 1 <= n <= len(stream):
            raise UserError(f"--ade-n {n} outside [1, {len(stream)}]")
        seqs.append((f"N={n}", ade.partition_by_events(stream, n, cfg.model.carry_forward)))
    summary, counts = [], []
    for param, seq in seqs:
        s = ade.distribution_stats(seq)
        summary.append([s["provenance"], param, s["patches"], s["min"], s["max"], s["mean"], s["std"], s["cv"]])
        counts += [[s["provenance"], param, i, c] for i, c in enumerate(s["counts"])]
    out.table("stats_summary", ["encoding", "parameter", "patches", "min", "max", "mean", "std", "cv"],
              summary, title=f"{len(stream)} events, {stream.num_nodes} nodes")
    with open(out.path("patch_counts.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["encoding", "parameter", "patch", "events"])
        w.writerows(counts)
    return 0


def cmd_encode(args, cfg: RunConfig, out: Output) -> int:
    stream = _require_stream(_load_data(cfg, args.synthetic))
    m = cfg.model
    if m.n_patches is not None:
        if m.n_patches > len(stream):
            raise UserError(f"n_patches={m.n_patches} exceeds the {len(stream)} events")
        seq = ade.partition_by_events(stream, m.n_patches, m.carry_forward)
        out.say(f"fixed N={m.n_patches}")
    else:
        result = ade.search_N(stream, m.ade_tau, m.ade_epsilon, m.ade_grid, m.ade_literal_sign, m.carry_forward)
        seq = result.sequence
        out.table("cost_curve", ["n", "cost"], [[n, c] for n, c in result.cost_curve])
        out.say(f"chosen N={result.chosen_N} ({result.epsilon_violations} patch pairs exceed epsilon)")
    write_discrete(seq, out.path("patches.txt"))
    out.table("patches", ["patch", "start", "end", "events", "active_nodes", "edges"],
              [[p.index, p.time_span[0], p.time_span[1], p.event_count, p.num_active, p.num_edges] for p in seq])
    out.echo_config(cfg)
    return 0


def cmd_generate(args, cfg: RunConfig, out: Output) -> int:
    synth = SynthConfig(num_nodes=args.num_nodes, num_communities=args.communities,
                        intra_rate=args.intra_rate, inter_rate=args.inter_rate,
                        burstiness=args.burstiness, horizon=args.horizon, num_events=args.num_events,
                        removal_rate=args.removal_rate, edge_feature_dim=args.edge_features)
    stream = synthesize_stream(synth, cfg.run.seed)
    target = out.path(args.output)
    write_continuous(stream, target)
    manifest = {"generator": "dsbm", "seed": cfg.run.seed, "params": synth.to_dict(),
                "events": len(stream), "file": target.name}
    out.path("manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    out.say(f"wrote {len(stream)} events on {stream.num_nodes} nodes to {target}")
    return 0


def _report_tables(report, out: Output, prefix: str):
    out.table(f"{prefix}_metrics", ["metric", "value"],
              [["accuracy", report.accuracy], ["auc", report.auc], ["loss", report.loss],
               ["pairs", report.num_pairs], ["attention_scores", report.attention_scores],
               ["inference_seconds", report.inference_seconds]])
    if report.per_patch:
        out.table(f"{prefix}_per_patch", ["patch", "pairs", "accuracy", "auc", "loss"],
                  [[r["patch"], r["num_pairs"], r["accuracy"], r["auc"], r["loss"]] for r in report.per_patch])


def cmd_train(args, cfg: RunConfig, out: Output) -> int:
    data = _load_data(cfg, args.synthetic)
    ckpt, report = fit(data, cfg.run.protocol, cfg.model, cfg.sampler, cfg.train,
                       on_epoch=lambda r: log.info("epoch %(epoch)d train %(train_loss).4f val %(val_loss).4f", r))
    save_checkpoint(ckpt, out.path("checkpoint.ckpt"))
    out.path("report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    out.path("history.csv").write_text(report.history_csv())
    out.say(f"{cfg.run.protocol}: {report.epochs_run} epochs (best {report.best_epoch})")
    _report_tables(report, out, "train")
    out.echo_config(cfg)
    return 0


def cmd_eval(args, cfg: RunConfig, out: Output) -> int:
    ckpt = load_checkpoint(_require_file(args.checkpoint))
    data = _load_data(cfg, args.synthetic)
    pairs = labels = None
    if args.pairs:
        table = np.loadtxt(_require_file(args.pairs), delimiter=",", ndmin=2)
        if table.size == 0:
            raise ContractError("cannot evaluate an empty pair list")
        pairs, labels = table[:, :-1].astype(np.int64), table[:, -1]
    report = evaluate(ckpt, data, pairs, labels)
    out.path("eval.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    _report_tables(report, out, "eval")
    out.echo_config(cfg)
    return 0


def cmd_timing(args, cfg: RunConfig, out: Output) -> int:
    if args.checkpoint:
        model = restore(load_checkpoint(_require_file(args.checkpoint)))[0]
    else:
        model = SparseDyn(cfg.model)
    data = _load_data(cfg, args.synthetic)
    seq = prepare_sequence(data, cfg.model if cfg.model.n_patches else model.cfg)
    rep = timing_report(model, seq, repeats=args.repeats)
    rows = [[name, rep[name]["seconds"], rep[name]["scores"], rep[name]["scores_per_head_round"]]
            for name in ("sparse", "dense_oracle")]
    out.table("timing", ["comparator", "seconds", "scores", "scores_per_head_round"], rows,
              title=f"N={rep['N']} nodes={rep['nodes']} heads={rep['heads']} rounds={rep['rounds']}")
    out.say(f"dense/sparse score ratio: {rep['score_ratio']:.4f}")
    out.path("timing.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    out.echo_config(cfg)
    return 0


# ---------------------------------------------------------------- parser

def _global_flags(p: argparse.ArgumentParser):
    s = argparse.SUPPRESS
    p.add_argument("--config", default=s, help="INI configuration file")
    p.add_argument("--seed", type=int, default=s, help="random seed (overrides [run] seed)")
    p.add_argument("--out", default=s, help="output directory (default: out)")
    p.add_argument("--quiet", action="store_true", default=s, help="suppress table output")


def _data_flags(p: argparse.ArgumentParser):
    p.add_argument("--input", help="dataset path (continuous CSV or discrete snapshot file)")
    p.add_argument("--format", choices=["continuous", "discrete"])
    p.add_argument("--bipartite", action="store_true", default=None,
                   help="offset target ids past the sources (user/item files)")
    p.add_argument("--synthetic", action="store_true",
                   help="use the default synthetic stream generated with --seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsedyn", description="Dynamic-graph link prediction with structural and sparse temporal attention.")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="event-count statistics of uniform-time vs equal-event patches")
    _global_flags(p)
    _data_flags(p)
    p.add_argument("--ude-interval", type=float, action="append", help="uniform window length (repeatable)")
    p.add_argument("--ade-n", type=int, action="append", help="equal-event patch count (repeatable)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("encode", help="partition a stream into patches and write the snapshot file")
    _global_flags(p)
    _data_flags(p)
    p.add_argument("--n", type=int, help="fixed patch count (skips the search)")
    p.add_argument("--grid", help="search grid, lo:hi:step or comma list")
    p.add_argument("--tau", type=float)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("generate", help="write a synthetic community event stream")
    _global_flags(p)
    d = SynthConfig()
    p.add_argument("--num-nodes", type=int, default=d.num_nodes)
    p.add_argument("--communities", type=int, default=d.num_communities)
    p.add_argument("--intra-rate", type=float, default=d.intra_rate)
    p.add_argument("--inter-rate", type=float, default=d.inter_rate)
    p.add_argument("--burstiness", type=float, default=d.burstiness)
    p.add_argument("--horizon", type=float, default=d.horizon)
    p.add_argument("--num-events", type=int, default=d.num_events)
    p.add_argument("--removal-rate", type=float, default=d.removal_rate)
    p.add_argument("--edge-features", type=int, default=d.edge_feature_dim)
    p.add_argument("--output", default="stream.csv", help="file name inside --out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and evaluate a link-prediction model")
    _global_flags(p)
    _data_flags(p)
    p.add_argument("--protocol", choices=["inductive", "transductive"])
    p.add_argument("--n", type=int, help="fixed patch count")
    p.add_argument("--epochs", type=int, help="maximum epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--heads", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on its data")
    _global_flags(p)
    _data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", help="CSV of u,v[,patch],label rows (default: the protocol's test split)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("timing", help="compare sparse and dense temporal attention cost")
    _global_flags(p)
    _data_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--n", type=int, help="fixed patch count")
    p.add_argument("--heads", type=int)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_timing)
    return parser


_FLAG_KEYS = {
    "input": "data.input", "format": "data.format", "bipartite": "data.bipartite",
    "n": "model.n_patches", "grid": "model.ade_grid", "tau": "model.ade_tau", "epsilon": "model.ade_epsilon",
    "protocol": "run.protocol", "epochs": "train.max_epochs", "patience": "train.patience",
    "dropout": "model.dropout", "heads": "model.heads", "lr": "model.lr",
    "seed": "run.seed", "out": "run.out",
}


def _overrides(args) -> dict:
    out = {}
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is None:
            continue
        if flag == "grid":
            v = parse_grid(v)
        out[key] = v
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None), overrides=_overrides(args))
        return args.func(args, cfg, Output(cfg.run.out, quiet))
    except (SparseDynError, UserError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
