"""Command line: prepare, train, attack, defend, report."""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config_file
from .graph import (MalformedInputError, load_edge_list_dir, load_linqs_citation,
                    load_tu_dataset, write_edge_list)

log = logging.getLogger("ganattack")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------ data

def load_dataset(cfg: ExperimentConfig):
    path = cfg.dataset
    if not path:
        raise ConfigError("--dataset is required")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if cfg.format == "tu":
        if cfg.task != "graph":
            raise ConfigError("TU datasets are graph classification sets; use --task graph")
        name = cfg.tu_name or os.path.basename(os.path.normpath(path))
        if not cfg.tu_name and not os.path.exists(os.path.join(path, f"{name}_A.txt")):
            found = glob.glob(os.path.join(path, "*_A.txt"))
            if len(found) == 1:
                name = os.path.basename(found[0])[:-len("_A.txt")]
        return load_tu_dataset(path, name)
    if cfg.task == "graph":
        raise ConfigError("graph classification needs --format tu")
    if os.path.isdir(path):
        if os.path.exists(os.path.join(path, "edges.txt")):
            return load_edge_list_dir(path)
        content = glob.glob(os.path.join(path, "*.content"))
        cites = glob.glob(os.path.join(path, "*.cites"))
        if content and cites:
            return load_linqs_citation(content[0], cites[0])
        raise FileNotFoundError(os.path.join(path, "edges.txt"))
    from .graph import load_edge_list
    return load_edge_list(path)


# ------------------------------------------------------------ arguments

def _tristate(v):
    v = v.lower()
    if v not in ("on", "off", "auto"):
        raise argparse.ArgumentTypeError("expected on, off or auto")
    return {"on": True, "off": False, "auto": None}[v]


def _common(p):
    p.add_argument("--config", help="YAML experiment file; flags override it")
    p.add_argument("--task", choices=("node", "graph", "link"))
    p.add_argument("--dataset")
    p.add_argument("--format", choices=("edgelist", "tu"))
    p.add_argument("--tu-name", dest="tu_name")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--target-epochs", dest="target_epochs", type=int)
    p.add_argument("--out")


def _attack_flags(p):
    p.add_argument("--checkpoint")
    p.add_argument("--profile", choices=("B-GA", "D-GA", "S-GA", "custom"))
    p.add_argument("--strategy", choices=("structure", "attribute", "hybrid"))
    p.add_argument("--scale", choices=("direct", "indirect", "unlimited"))
    p.add_argument("-K", dest="K", type=int)
    p.add_argument("--k", dest="k", type=int, help="hop radius for indirect/unlimited scales")
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--max-targets", dest="max_targets", type=int)
    p.add_argument("--examples-per-target", dest="examples_per_target", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--budget-ratio", dest="budget_ratio", type=float)
    p.add_argument("--lambda-threshold", dest="lambda_threshold", type=float)
    p.add_argument("--smr-threshold", dest="smr_threshold", type=float)
    p.add_argument("--l2-threshold", dest="l2_threshold", type=float)
    p.add_argument("--ad-mode", dest="ad_mode", choices=("frozen_target", "trainable_surrogate"))
    p.add_argument("--augmentation", choices=("none", "random_other_class", "high_similarity"))
    p.add_argument("--generator-loss", dest="generator_loss", choices=("minimax", "nonsaturating"))
    p.add_argument("--project-budget", dest="project_budget", type=_tristate,
                   help="on/off/auto: trim over-budget candidates to their most decisive flips")
    p.add_argument("--jobs", type=int)
    p.add_argument("--dry-run", dest="dry_run", action="store_true")


def build_parser():
    p = _Parser(prog="ganattack", description="Generative adversarial attacks on graph models")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    pr = sub.add_parser("prepare", help="convert or synthesize datasets")
    pr.add_argument("source", choices=("linqs", "citation", "density", "two-block", "two-cluster"))
    pr.add_argument("--content")
    pr.add_argument("--cites")
    pr.add_argument("--nodes", type=int)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train and checkpoint a target model")
    _common(tr)

    at = sub.add_parser("attack", help="attack selected targets and write a report")
    _common(at)
    _attack_flags(at)

    de = sub.add_parser("defend", help="adversarial training harness")
    _common(de)
    _attack_flags(de)
    de.add_argument("--per-target", dest="n_per_target", type=int, default=10)

    rp = sub.add_parser("report", help="derive CSV artifacts from a results file")
    rp.add_argument("results")
    rp.add_argument("--kind", required=True)
    rp.add_argument("--out")
    rp.add_argument("--bins", type=int, default=20)
    return p


NON_CONFIG = {"command", "config", "dry_run", "n_per_target", "content", "cites", "source",
              "nodes", "results", "kind", "bins"}


def resolve_config(args) -> ExperimentConfig:
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, val in vars(args).items():
        if key in NON_CONFIG or val is None:
            continue
        values[key] = val
    return ExperimentConfig.from_dict(values)


# ------------------------------------------------------------ commands

def cmd_prepare(args) -> int:
    from . import synthetic
    if args.source == "linqs":
        if not (args.content and args.cites):
            raise ConfigError("prepare linqs needs --content and --cites")
        g = load_linqs_citation(args.content, args.cites)
        write_edge_list(g, args.out)
    elif args.source == "citation":
        write_edge_list(synthetic.citation_like_graph(n=args.nodes or 600, seed=args.seed), args.out)
    elif args.source == "two-block":
        write_edge_list(synthetic.two_block_graph(n=args.nodes or 1500, seed=args.seed), args.out)
    elif args.source == "two-cluster":
        write_edge_list(synthetic.two_cluster_graph(n=args.nodes or 20, seed=args.seed), args.out)
    else:
        write_tu(synthetic.density_graph_set(n_graphs=args.nodes or 400, seed=args.seed),
                 args.out, "DENSITY")
    print(json.dumps({"written": args.out}))
    return EXIT_OK


def write_tu(gs, directory, name):
    os.makedirs(directory, exist_ok=True)

    def path(s):
        return os.path.join(directory, f"{name}_{s}.txt")

    offset = 0
    with open(path("A"), "w", encoding="utf-8") as fa, \
            open(path("graph_indicator"), "w", encoding="utf-8") as fi, \
            open(path("node_labels"), "w", encoding="utf-8") as fl:
        for k, g in enumerate(gs.graphs):
            for i, j in g.edges():
                fa.write(f"{i + offset + 1}, {j + offset + 1}\n")
                fa.write(f"{j + offset + 1}, {i + offset + 1}\n")
            for i in range(g.n):
                fi.write(f"{k + 1}\n")
                fl.write(f"{int(np.argmax(g.attributes[i]))}\n")
            offset += g.n
    with open(path("graph_labels"), "w", encoding="utf-8") as fg:
        fg.write("".join(f"{int(y)}\n" for y in gs.graph_labels))


def _train_config(cfg):
    from .models import TrainConfig
    return TrainConfig(epochs=cfg.target_epochs, lr=cfg.target_lr, hidden=cfg.hidden,
                       seed=cfg.seed, embedding_dim=cfg.embedding_dim)


def cmd_train(args) -> int:
    from .evaluation import clean_quality, prepare_data, train_target
    from .models import save_checkpoint
    cfg = resolve_config(args)
    data = load_dataset(cfg)
    prep = prepare_data(cfg.task, data, cfg.split_ratios, cfg.seed)
    model = train_target(prep, _train_config(cfg))
    quality = clean_quality(prep, model)
    out = cfg.out if cfg.out != "results" else "model.ckpt"
    meta = {"task": cfg.task, "seed": cfg.seed, "split": list(cfg.split_ratios),
            "dataset": cfg.dataset, "format": cfg.format, "quality": quality}
    save_checkpoint(model, out, meta)
    print(json.dumps({"checkpoint": out, **quality}, sort_keys=True))
    return EXIT_OK


def _load_model_for(cfg):
    if not cfg.checkpoint:
        return None, cfg.seed
    from .models import load_checkpoint
    if not os.path.exists(cfg.checkpoint):
        raise FileNotFoundError(cfg.checkpoint)
    ck = load_checkpoint(cfg.checkpoint)
    if ck.model.task != cfg.task:
        raise ConfigError(f"checkpoint task {ck.model.task!r} does not match --task {cfg.task!r}")
    return ck.model, int(ck.metadata.get("seed", cfg.seed))


def cmd_attack(args) -> int:
    from .evaluation import run_experiment
    cfg = resolve_config(args)
    if args.dry_run:
        print(json.dumps({"dry_run": True, "config": cfg.to_dict()}, indent=2, sort_keys=True))
        return EXIT_OK
    data = load_dataset(cfg)
    model, data_seed = _load_model_for(cfg)
    report = run_experiment(cfg, data, model, data_seed=data_seed)
    print(json.dumps({"out": cfg.out, **report["metrics"]}, sort_keys=True))
    return EXIT_OK


def cmd_defend(args) -> int:
    from .evaluation import run_defense
    cfg = resolve_config(args)
    if cfg.task != "node":
        raise ConfigError("the defense harness supports --task node")
    if args.dry_run:
        print(json.dumps({"dry_run": True, "config": cfg.to_dict()}, indent=2, sort_keys=True))
        return EXIT_OK
    data = load_dataset(cfg)
    model, data_seed = _load_model_for(cfg)
    rep = run_defense(cfg, data, model, args.n_per_target, data_seed)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "defense.json"), "w", encoding="utf-8") as fh:
        json.dump({"config": cfg.to_dict(), "defense": rep.to_dict()}, fh, indent=2, sort_keys=True)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return EXIT_OK


REPORT_KINDS = ("metrics", "similarity-hist", "defense")


def _schema_error(path, what):
    raise ConfigError(f"{path}: schema violation at {what}")


def cmd_report(args) -> int:
    if args.kind not in REPORT_KINDS:
        raise UsageError(f"unknown report kind {args.kind!r}; expected one of {REPORT_KINDS}")
    if not os.path.exists(args.results):
        raise FileNotFoundError(args.results)
    with open(args.results, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.results}: not JSON ({exc})") from None
    base = os.path.dirname(os.path.abspath(args.results))
    if args.kind == "metrics":
        return _report_metrics(doc, args, base)
    if args.kind == "defense":
        return _report_defense(doc, args, base)
    return _report_similarity(doc, args, base)


def _report_metrics(doc, args, base):
    from .evaluation import metric_report
    if "records" not in doc or not isinstance(doc["records"], list):
        _schema_error(args.results, "records")
    for k, r in enumerate(doc["records"]):
        for key in ("success", "links_changed", "attrs_changed", "l2_attr"):
            if key not in r:
                _schema_error(args.results, f"records[{k}].{key}")
    m = metric_report(doc["records"]) if doc["records"] else None
    out = args.out or os.path.join(base, "metrics.csv")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("asr", "aml", "ama", "l2_mean", "attacked"))
        if m is not None:
            w.writerow((m.asr, m.aml, m.ama, m.l2_mean, m.attacked))
    print(json.dumps({"written": out}))
    return EXIT_OK


def _report_defense(doc, args, base):
    rows = doc.get("defense", {}).get("rows")
    if not isinstance(rows, list):
        _schema_error(args.results, "defense.rows")
    out = args.out or os.path.join(base, "defense.csv")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "clean_asr", "retrained_asr", "examples_used", "attacked_after",
                    "excluded_after"))
        for k, r in enumerate(rows):
            try:
                w.writerow((r["method"], r["clean_asr"], r["retrained_asr"], r["examples_used"],
                            r["attacked_after"], r["excluded_after"]))
            except KeyError as exc:
                _schema_error(args.results, f"defense.rows[{k}].{exc.args[0]}")
    print(json.dumps({"written": out}))
    return EXIT_OK


def _report_similarity(doc, args, base):
    """Linked/unlinked histogram from the embedded config; per-target shift from records."""
    from .evaluation import similarity_distribution
    if "config" not in doc or "records" not in doc:
        _schema_error(args.results, "config/records")
    cfg = ExperimentConfig.from_dict(doc["config"])
    written = []
    if cfg.task != "node":
        raise ConfigError("similarity histograms are defined for node classification reports")
    if cfg.dataset and cfg.checkpoint and os.path.exists(cfg.checkpoint):
        from .attacker import AttackContext
        from .models import load_checkpoint
        g = load_dataset(cfg)
        model = load_checkpoint(cfg.checkpoint).model
        ctx = AttackContext("node", model, g)
        h = similarity_distribution(g, ctx.embedding, "linked_vs_unlinked", args.bins, cfg.seed)
        out = args.out or os.path.join(base, "similarity_hist.csv")
        h.write_csv(out)
        written.append(out)
    before = [r["sim_before"] for r in doc["records"] if r.get("sim_before") is not None]
    after = [r["sim_after"] for r in doc["records"] if r.get("sim_after") is not None]
    h2 = similarity_distribution(None, None, "target_avg_before_after", args.bins,
                                 before=before, after=after)
    out2 = os.path.join(base, "similarity_shift.csv")
    h2.write_csv(out2)
    written.append(out2)
    print(json.dumps({"written": written}))
    return EXIT_OK


# ------------------------------------------------------------ entry

def _configure_logging():
    level = os.environ.get("GRAPHATTACKER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: prepare, train, attack, defend, report")
        handler = {"prepare": cmd_prepare, "train": cmd_train, "attack": cmd_attack,
                   "defend": cmd_defend, "report": cmd_report}[args.command]
        return handler(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "config", str(exc))
    except (FileNotFoundError, MalformedInputError) as exc:
        return _fail(EXIT_USAGE, "input", str(exc))
    except Exception as exc:  # runtime failure
        log.debug("runtime failure", exc_info=True)
        return _fail(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
