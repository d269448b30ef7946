"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 all Monte-Carlo
runs failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .decentral import GENERAL, IdentificationError, OmegaSpec, run_algorithm1
from .evaluation import (ExperimentConfig, eigen_compare, generate_data, monte_carlo,
                         similarity_fit, validation_vaf, decay_study, write_decay_csv)
from .gramian import decay_envelope, finite_time_gramian, observability_rank_check
from .lti import DataSet, GlobalModel
from .subspace import AUTO, SimConfig, spectrum_csv

EXIT_USAGE, EXIT_NUMERIC, EXIT_ALL_FAILED = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _variant(text):
    if text.lower() == GENERAL:
        return GENERAL
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid variant {text!r}") from None
    if v not in (1, 2, 3, 4, 5):
        raise argparse.ArgumentTypeError(f"variant must be 1..5 or general, got {v}")
    return v


def _order(text):
    return AUTO if text.lower() == AUTO else int(text)


def _common(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--N", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--snr", type=float, help="SNR in dB; 'inf' for noise-free")
    p.add_argument("--model", help="'benchmark' or path to a model JSON")


def _ident_flags(p):
    p.add_argument("--variant", type=_variant, action="append",
                   help="1..5 or general; repeatable")
    p.add_argument("--p", type=int)
    p.add_argument("--t", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--reg", type=float, help="ridge parameter")
    g.add_argument("--no-reg", action="store_true", help="disable regularisation")
    p.add_argument("--order", type=_order, help="local order or 'auto'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decentsid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("generate", help="write a model JSON and a data CSV")
    _common(p)

    p = sub.add_parser("gramian", help="rank, condition number and bandwidth report")
    _common(p)
    p.add_argument("--p", type=int, default=2)

    p = sub.add_parser("decay", help="block norms of one row of the Gramian inverse")
    _common(p)
    p.add_argument("--p", type=int, action="append", help="lifting depth; repeatable")
    p.add_argument("--row", type=int, default=50)

    p = sub.add_parser("identify", help="single identification run")
    _common(p)
    _ident_flags(p)
    p.add_argument("--data", help="data CSV (generated from the config if omitted)")
    p.add_argument("--val-data", help="validation data CSV")
    p.add_argument("--full", action="store_true", help="identify every subsystem separately")

    p = sub.add_parser("evaluate", help="compare an identified model with the truth")
    p.add_argument("--identified", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--data", help="validation data CSV")
    p.add_argument("--out")

    p = sub.add_parser("mc", help="Monte-Carlo experiment")
    _common(p)
    _ident_flags(p)
    p.add_argument("--runs", type=int)
    p.add_argument("--full", action="store_true", help="identify every subsystem separately")
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config).to_json() if getattr(args, "config", None) else {}
    mapping = {"seed": "master_seed", "out": "out_dir", "N": "N", "T": "T",
               "model": "model", "p": "p", "t": "t", "runs": "n_runs", "order": "order"}
    for arg, key in mapping.items():
        val = getattr(args, arg, None)
        if val is not None and not isinstance(val, list):
            cfg[key] = val
    if getattr(args, "snr", None) is not None:
        cfg["snr_db"] = None if np.isinf(args.snr) else args.snr
    if getattr(args, "variant", None):
        cfg["variants"] = args.variant
    if getattr(args, "no_reg", False):
        cfg["reg_values"] = [0.0]
    elif getattr(args, "reg", None) is not None:
        cfg["reg_values"] = [args.reg]
    if getattr(args, "full", False):
        cfg["share_model"] = False
    try:
        return ExperimentConfig.from_json(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = config_from_args(args)
    truth = cfg.truth()
    out = _out_dir(cfg)
    s_id, s_val = np.random.SeedSequence(cfg.master_seed).spawn(2)
    truth.save(out / "model.json")
    generate_data(truth, cfg.T, cfg.snr_db, s_id).to_csv(out / "data.csv")
    generate_data(truth, cfg.val_T or cfg.T, cfg.snr_db, s_val).to_csv(out / "val_data.csv")
    print(f"wrote {out / 'model.json'}, {out / 'data.csv'}, {out / 'val_data.csv'}")
    return 0


def cmd_gramian(args) -> int:
    cfg = config_from_args(args)
    truth = cfg.truth()
    rank = observability_rank_check(truth, args.p)
    report = {"N": truth.N, "n": truth.n, "p": args.p, "rank": rank.rank,
              "full_rank": rank.full, "nu_estimate": rank.nu_estimate}
    bundle = finite_time_gramian(truth, args.p)
    env = decay_envelope(bundle)
    report.update(kappa=bundle.kappa, block_bandwidth=bundle.J_banded.actual_bandwidth(),
                  g=bundle.g, c=env.c, lam=env.lam)
    print(json.dumps(report, indent=1))
    if cfg.out_dir:
        (_out_dir(cfg) / "gramian.json").write_text(json.dumps(report, indent=1))
    return 0


def cmd_decay(args) -> int:
    cfg = config_from_args(args)
    rows = decay_study(cfg.truth(), args.p or [2], args.row)
    path = _out_dir(cfg) / "decay.csv"
    write_decay_csv(rows, path)
    print(f"wrote {path}")
    return 0


def cmd_identify(args) -> int:
    cfg = config_from_args(args)
    out = _out_dir(cfg)
    if args.data:
        data = DataSet.from_csv(args.data)
    else:
        truth = cfg.truth()
        s_id, s_val = np.random.SeedSequence(cfg.master_seed).spawn(2)
        data = generate_data(truth, cfg.T, cfg.snr_db, s_id)
    val = DataSet.from_csv(args.val_data) if args.val_data else data
    spec = OmegaSpec(cfg.variants[0], cfg.p, cfg.t)
    sim = cfg.sim_config(cfg.reg_values[0])
    ident = run_algorithm1(data, spec, sim, share_model=cfg.share_model,
                           provenance={"master_seed": cfg.master_seed})
    v = validation_vaf(ident.model, val)
    ident.provenance["vaf_mean"] = float(v.mean())
    ident.provenance["vaf"] = [float(x) for x in v]
    (out / "identified.json").write_text(json.dumps(ident.to_json(), indent=1))
    for i, est in sorted(ident.states.items()):
        spectrum_csv(est.singular_values, out / f"spectrum_S{i}.csv")
    print(json.dumps({"vaf_mean": float(v.mean()), "vaf_min": float(v.min()),
                      "order": {str(i): e.order_used for i, e in ident.states.items()}}))
    return 0


def cmd_evaluate(args) -> int:
    raw = json.loads(Path(args.identified).read_text())
    ident = GlobalModel.from_json(raw)
    truth = GlobalModel.load(args.truth)
    fit = similarity_fit(ident, truth)
    k = min(1, truth.N - 1)
    eig = eigen_compare(ident.locals[k].A_ii, truth.locals[k].A_ii)
    report = {"similarity_residual_max": float(fit.residuals.max()),
              "similarity_residual_mean": float(fit.residuals.mean()),
              "singular_Q": fit.singular,
              "eigen_max_distance": eig.max_distance}
    if args.data:
        v = validation_vaf(ident, DataSet.from_csv(args.data))
        report.update(vaf_mean=float(v.mean()), vaf_min=float(v.min()))
    print(json.dumps(report, indent=1))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "evaluation.json").write_text(json.dumps(report, indent=1))
    return 0


def cmd_mc(args) -> int:
    cfg = config_from_args(args)
    report = monte_carlo(cfg)
    for row in report.table:
        print(f"variant {row['variant']:>7}  reg {row['regularization']:>7}  "
              f"mean VAF {row['mean_vaf']:6.2f}  failed {row['n_failed']}/{cfg.n_runs}")
    if all(r["status"] != "ok" for r in report.runs):
        return EXIT_ALL_FAILED
    return 0


COMMANDS = {"generate": cmd_generate, "gramian": cmd_gramian, "decay": cmd_decay,
            "identify": cmd_identify, "evaluate": cmd_evaluate, "mc": cmd_mc}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FileNotFoundError, KeyError) as exc:
        print(f"decentsid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, IdentificationError) as exc:
        print(f"decentsid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
