"""Command line entry point: ``gnnse <command> ...``."""
import argparse
import logging
import sys
from dataclasses import fields
from importlib.resources import files

import numpy as np

from .errors import DivergenceError, NumericError, ParseError, SingularityError, ValidationError
from .gnn.checkpoint import load_checkpoint, save_checkpoint
from .gnn.model import init_model
from .gnn.train import train
from .grid import load_network
from .measurements import build_jacobian, parse_measurements
from .pipeline import scenarios as sc
from .pipeline.config import Config, dump_config, load_config
from .pipeline.dataset import (dataset_graphs, file_digest, generate_dataset, read_dataset,
                               write_dataset)
from .placement import format_placement, greedy_place, load_placement, phasor_inventory
from .wls import solve_wls

log = logging.getLogger("gnnse")

METRICS_HEADER = ["graph", "excluded", "n_samples", "mse", "pearson"]
PEARSON_NOTE = "pearson pooled over all samples and variable nodes"


def bundled(name):
    return str(files("gnnse") / "data" / name)


def _network(path):
    return load_network(path or bundled("ieee30cdf.txt"))


def _placement(path, net):
    return load_placement(path or bundled("ieee30_pmu.txt"), net)


def _add_config_flags(p):
    p.add_argument("--config", help="YAML config file")
    for f in fields(Config):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="V",
                       help=f"override config key {f.name} (default {getattr(Config(), f.name)})")


def _config(args):
    over = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return load_config(args.config, **over)


# --------------------------------------------------------------------------- commands

def cmd_generate(args):
    cfg = _config(args)
    net = _network(cfg.network)
    pl = _placement(cfg.placement, net)
    count = args.count if args.count is not None else cfg.train_count
    ds = generate_dataset(net, pl, count, cfg.sigma, cfg.bounds, cfg.seed)
    write_dataset(args.out, ds)
    print(f"wrote {count} samples to {args.out}")


def cmd_place(args):
    net = _network(args.network)
    pl = greedy_place(net)
    with open(args.out, "w") as fh:
        fh.write(format_placement(pl))
    nv, ni = phasor_inventory(pl)
    print(f"{len(pl.pmu_buses)} PMUs, rank {pl.rank()} of {2 * net.n_bus}, "
          f"{nv} voltage and {ni} current phasors")


def cmd_solve(args):
    net = _network(args.network)
    with open(args.measurements) as fh:
        mset = parse_measurements(fh.read(), net)
    sol = solve_wls(*build_jacobian(mset))
    v = sol.state.complex
    rows = [[b.id, float(v[i].real), float(v[i].imag)] for i, b in enumerate(net.buses)]
    text = sc.write_csv(args.out, ["bus_id", "re", "im"], rows)
    if args.out is None:
        sys.stdout.write(text)


def cmd_train(args):
    cfg = _config(args)
    ds = read_dataset(args.dataset)
    val = read_dataset(args.val)
    if val.network.fingerprint() != ds.network.fingerprint():
        raise ValueError("training and validation sets use different networks")
    hyper = cfg.hyperparams()
    model = init_model(hyper, ds.network.n_bus, np.random.default_rng([cfg.seed, 0]))

    def progress(rec):
        log.info("epoch %d train %.4e val %.4e |g| %.3g (%.1fs)", rec.epoch, rec.train_loss,
                 rec.val_loss, rec.grad_norm, rec.seconds)

    res = train(model, dataset_graphs(ds, cfg.graph), dataset_graphs(val, cfg.graph), hyper,
                np.random.default_rng([cfg.seed, 1]), progress)
    meta = {"seed": cfg.seed, "dataset_sha256": file_digest(args.dataset),
            "val_sha256": file_digest(args.val), "best_epoch": res.best_epoch,
            "best_val": res.best_val, "train_count": len(ds)}
    save_checkpoint(args.checkpoint_out, res.model, cfg.graph, meta)
    if args.history_out:
        sc.write_csv(args.history_out, ["epoch", "train_loss", "val_loss", "grad_norm"],
                     [[r.epoch, r.train_loss, r.val_loss, r.grad_norm] for r in res.history])
    print(f"best epoch {res.best_epoch}, validation mse {res.best_val:.4e}")


def _bounds(test, extra):
    return sc.label_bounds(test, *[read_dataset(p) for p in extra or ()])


def cmd_evaluate(args):
    model, head = load_checkpoint(args.checkpoint)
    test = read_dataset(args.test)
    ev = sc.evaluate(model, test, head["graph"], exclude=args.exclude, seed=args.seed)
    m = ev.metrics
    text = sc.write_csv(args.out, METRICS_HEADER,
                        [[head["graph"], args.exclude, m.n_samples, m.mse, m.pearson]],
                        [PEARSON_NOTE])
    if args.out is None:
        sys.stdout.write(text)
    if args.dump_nodes:
        sc.write_csv(args.dump_nodes, sc.DUMP_HEADER,
                     sc.node_rows(test, ev, _bounds(test, args.bounds_data)))


def cmd_sweep(args):
    aug, ha = load_checkpoint(args.checkpoint_aug)
    plain, hp = load_checkpoint(args.checkpoint_plain)
    if ha["graph"] != "augmented" or hp["graph"] != "plain":
        raise ValueError("expected an augmented-graph and a plain-graph checkpoint")
    test = read_dataset(args.test)
    rows = sc.exclusion_sweep(aug, plain, test, args.seed, range(args.max_excluded + 1))
    text = sc.write_csv(args.out, sc.SWEEP_HEADER, rows, [sc.SWEEP_NOTE, f"exclusion seed {args.seed}"])
    if args.out is None:
        sys.stdout.write(text)


def cmd_pmu_fail(args):
    model, head = load_checkpoint(args.checkpoint)
    test = read_dataset(args.test)
    buses = [int(b) for b in args.buses.split(",")]
    res = sc.pmu_failure_scenario(model, test, buses, head["graph"], _bounds(test, args.bounds_data))
    m = res.metrics
    hits, _ = sc.top_error_hits(res.evaluation, res.marked)
    text = sc.write_csv(args.out, METRICS_HEADER,
                        [[head["graph"], len(res.removed), m.n_samples, m.mse, m.pearson]],
                        [PEARSON_NOTE, f"failed PMUs at buses {args.buses}, "
                         f"{len(res.removed)} phasors removed",
                         f"{hits} of the 10 nodes with largest mean absolute error are marked"])
    if args.out is None:
        sys.stdout.write(text)
    if args.dump_nodes:
        sc.write_csv(args.dump_nodes, sc.DUMP_HEADER, res.rows)


def cmd_sample_efficiency(args):
    cfg = _config(args)
    net = _network(cfg.network)
    pl = _placement(cfg.placement, net)

    def progress(rec):
        log.info("epoch %d val %.4e", rec.epoch, rec.val_loss)

    rows = sc.sample_efficiency(net, pl, cfg, progress)
    text = sc.write_csv(args.out, sc.SIZE_HEADER, rows, [PEARSON_NOTE])
    if args.out is None:
        sys.stdout.write(text)


def cmd_show_config(args):
    sys.stdout.write(dump_config(_config(args)))


# --------------------------------------------------------------------------- parser

def build_parser():
    ap = argparse.ArgumentParser(prog="gnnse", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a labelled dataset")
    p.add_argument("--count", type=int, help="sample count (default: config train_count)")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("place-pmus", help="greedy observability-driven PMU placement")
    p.add_argument("--network")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("solve-se", help="WLS state estimate from a measurement CSV")
    p.add_argument("--network")
    p.add_argument("--measurements", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--history-out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test-set metrics, optionally with random exclusions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--exclude", type=int, default=0, metavar="N")
    p.add_argument("--seed", type=int, default=0, help="exclusion seed")
    p.add_argument("--dump-nodes", metavar="CSV")
    p.add_argument("--bounds-data", nargs="*", help="extra datasets for the label bounds")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="exclusion sweep over both graph types")
    p.add_argument("--checkpoint-aug", required=True)
    p.add_argument("--checkpoint-plain", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-excluded", type=int, default=sc.SWEEP_MAX)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pmu-fail", help="evaluate with two neighbouring PMUs removed")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--buses", required=True, help="two adjacent PMU bus ids, e.g. 15,18")
    p.add_argument("--dump-nodes", metavar="CSV")
    p.add_argument("--bounds-data", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pmu_fail)

    p = sub.add_parser("sample-efficiency", help="train per training-set size, test on one set")
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sample_efficiency)

    p = sub.add_parser("show-config", help="print the effective config")
    _add_config_flags(p)
    p.set_defaults(func=cmd_show_config)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ParseError, ValidationError, DivergenceError, SingularityError, NumericError,
            ValueError, OSError) as exc:
        print(f"gnnse: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
