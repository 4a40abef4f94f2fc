"""Command line interface.

Subcommands:
  run        execute one simulation (TOML config plus flag overrides)
  calibrate  print the noise schedule implied by a privacy budget
  prep-data  generate synthetic CSVs or check mnist/adult files in place
  sweep      grid of runs over budgets, compression ratios and seeds

Exit codes: 0 success, 1 configuration problem, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import load_adult, load_mnist, save_csv, synth_generate
from .errors import ConfigError
from .privacy import PrivacySpec, SensitivityParams, epsilon_for_budget, noise_sigma, sensitivity, total_loss
from .simulation import RunConfig, run
from . import rng

log = logging.getLogger("fedpdm")

_CONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the config-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with RunConfig keys")
    g = p.add_argument_group("overrides")
    g.add_argument("--algorithm", choices=["dp-fedpdm", "bsdp-fedpdm"])
    g.add_argument("--dataset", choices=["synthetic", "mnist", "adult"])
    g.add_argument("--data-dir", dest="data_dir")
    g.add_argument("--seed", type=int)
    g.add_argument("--rounds", type=int)
    g.add_argument("--n-clients", dest="n_clients", type=int)
    g.add_argument("--clients-per-round", dest="clients_per_round", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--rho", type=float)
    g.add_argument("--eta0", type=float)
    g.add_argument("--nu", type=float)
    g.add_argument("--q-max", dest="q_max", type=int)
    g.add_argument("--clip-bound", dest="clip_bound", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--dp", action=argparse.BooleanOptionalAction)
    g.add_argument("--total-budget", dest="total_budget", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--c0", type=float)
    g.add_argument("--alpha-up", dest="alpha_up", type=float)
    g.add_argument("--alpha-down", dest="alpha_down", type=float)
    g.add_argument("--sparsifier", choices=["top", "rand"])
    g.add_argument("--count-index-bits", dest="count_index_bits",
                   action=argparse.BooleanOptionalAction)
    g.add_argument("--eval-every", dest="eval_every", type=int)
    g.add_argument("--partition-scheme", dest="partition_scheme",
                   choices=["iid", "one-class", "labels-per-client"])
    g.add_argument("--per-client-size", dest="per_client_size", type=int)
    g.add_argument("--labels-per-client", dest="labels_per_client", type=int)
    g.add_argument("--synth-classes", dest="synth_classes", type=int)
    g.add_argument("--synth-features", dest="synth_features", type=int)
    g.add_argument("--synth-test", dest="synth_test", type=int)
    g.add_argument("--synth-separation", dest="synth_separation", type=float)


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            table = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}")
    unknown = set(table) - set(_CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {sorted(unknown)}")
    return table


def _build_config(args: argparse.Namespace) -> RunConfig:
    merged = _load_config_file(args.config)
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc))


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    result = run(cfg, out_dir=args.output_dir)
    s = result.summary
    print(
        f"final accuracy {s['final_accuracy']:.4f}  P {s['final_p_measure']:.4g}  "
        f"uplink {s['uplink_bits']} bits  downlink {s['downlink_bits']} bits  "
        f"eps_max {s['eps_cum_max']:.4g}"
    )
    if args.output_dir is not None:
        print(f"wrote {Path(args.output_dir) / 'metrics.csv'}")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    q = args.q_max * args.batch_size / args.per_client_size
    spec = PrivacySpec(
        delta=args.delta,
        c0=args.c0,
        p=args.clients_per_round / args.n_clients,
        q=q,
    )
    eps_round = epsilon_for_budget(args.total_budget, spec, args.rounds)
    print(f"p = {spec.p:.6g}   q = {q:.6g}   per-round epsilon = {eps_round:.6g}")
    print("round   eta        sensitivity  sigma")
    for t in sorted({0, args.rounds // 2, args.rounds - 1}):
        eta_t = args.eta0 / math.sqrt(1.0 + t)
        s = sensitivity(SensitivityParams(args.rho, eta_t, args.q_max, args.clip_bound))
        sigma = noise_sigma(s, eps_round, args.delta)
        print(f"{t:5d}   {eta_t:.6f}   {s:.6g}   {sigma:.6g}")
    back = total_loss(eps_round, spec, args.rounds)
    print(f"total loss at T={args.rounds}: {back:.6g} (budget {args.total_budget:.6g})")
    return 0


def _cmd_prep_data(args: argparse.Namespace) -> int:
    if args.dataset == "synthetic":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        train, test = synth_generate(
            args.classes, args.features, args.train, args.test,
            args.separation, rng.stream(args.seed, rng.DATA_GEN),
        )
        save_csv(train, out / "train.csv")
        save_csv(test, out / "test.csv")
        print(f"wrote {out / 'train.csv'} ({len(train)} rows) and "
              f"{out / 'test.csv'} ({len(test)} rows)")
        return 0
    loader = load_mnist if args.dataset == "mnist" else load_adult
    try:
        train, test = loader(args.data_dir)
    except FileNotFoundError as exc:
        print(f"{exc}", file=sys.stderr)
        if args.dataset == "mnist":
            print("place train-images-idx3-ubyte[.gz], train-labels-idx1-ubyte[.gz], "
                  "t10k-images-idx3-ubyte[.gz], t10k-labels-idx1-ubyte[.gz] there",
                  file=sys.stderr)
        else:
            print("place adult.data and adult.test there", file=sys.stderr)
        return 1
    print(f"{args.dataset}: train {len(train)} x {train.features.shape[1]}, "
          f"test {len(test)} x {test.features.shape[1]}")
    return 0


def _parse_grid(text: str | None, cast) -> list | None:
    if text is None:
        return None
    try:
        return [cast(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise ConfigError(f"bad grid value: {exc}")


def _cmd_sweep(args: argparse.Namespace) -> int:
    base = _build_config(args)
    budgets = _parse_grid(args.budgets, float) or [base.total_budget if base.dp else 0.0]
    alpha_ups = _parse_grid(args.alpha_ups, float) or [base.alpha_up]
    alpha_downs = _parse_grid(args.alpha_downs, float) or [base.alpha_down]
    seeds = _parse_grid(args.seeds, int) or [base.seed]
    out_root = Path(args.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest = []
    for budget in budgets:
        for a_up in alpha_ups:
            for a_down in alpha_downs:
                for seed in seeds:
                    cell = replace(
                        base,
                        dp=budget > 0,
                        total_budget=budget if budget > 0 else base.total_budget,
                        alpha_up=a_up,
                        alpha_down=a_down,
                        seed=seed,
                    )
                    name = f"eps{budget:g}_aU{a_up:g}_aD{a_down:g}_seed{seed}"
                    result = run(cell, out_dir=out_root / name)
                    manifest.append({
                        "name": name,
                        "total_budget": budget,
                        "alpha_up": a_up,
                        "alpha_down": a_down,
                        "seed": seed,
                        "final_accuracy": result.summary["final_accuracy"],
                        "uplink_bits": result.summary["uplink_bits"],
                    })
                    log.info("sweep %s: accuracy %.4f", name,
                             result.summary["final_accuracy"])
    with open(out_root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"swept {len(manifest)} runs into {out_root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedpdm", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[], help="execute one simulation")
    _add_run_flags(p_run)
    p_run.add_argument("--output-dir", dest="output_dir", type=Path,
                       help="write metrics.csv, summary.json, model.npy here")
    p_run.set_defaults(func=_cmd_run)

    p_cal = sub.add_parser("calibrate", help="print the noise schedule for a budget")
    p_cal.add_argument("--total-budget", dest="total_budget", type=float, required=True)
    p_cal.add_argument("--delta", type=float, default=1e-4)
    p_cal.add_argument("--c0", type=float, default=1.0)
    p_cal.add_argument("--n-clients", dest="n_clients", type=int, default=100)
    p_cal.add_argument("--clients-per-round", dest="clients_per_round", type=int, default=30)
    p_cal.add_argument("--rounds", type=int, default=200)
    p_cal.add_argument("--batch-size", dest="batch_size", type=int, default=10)
    p_cal.add_argument("--per-client-size", dest="per_client_size", type=int, required=True)
    p_cal.add_argument("--q-max", dest="q_max", type=int, default=50)
    p_cal.add_argument("--rho", type=float, default=10.0)
    p_cal.add_argument("--eta0", type=float, required=True)
    p_cal.add_argument("--clip-bound", dest="clip_bound", type=float, default=1.0)
    p_cal.set_defaults(func=_cmd_calibrate)

    p_prep = sub.add_parser("prep-data", help="generate or verify datasets")
    p_prep.add_argument("--dataset", choices=["synthetic", "mnist", "adult"], required=True)
    p_prep.add_argument("--out", type=Path, default=Path("data/synthetic"),
                        help="output dir for synthetic CSVs")
    p_prep.add_argument("--data-dir", dest="data_dir", type=Path, default=Path("data"))
    p_prep.add_argument("--classes", type=int, default=2)
    p_prep.add_argument("--features", type=int, default=10)
    p_prep.add_argument("--train", type=int, default=60000)
    p_prep.add_argument("--test", type=int, default=2000)
    p_prep.add_argument("--separation", type=float, default=3.0)
    p_prep.add_argument("--seed", type=int, default=0)
    p_prep.set_defaults(func=_cmd_prep_data)

    p_sweep = sub.add_parser("sweep", help="grid of runs")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--output-dir", dest="output_dir", type=Path, required=True)
    p_sweep.add_argument("--budgets", help="comma list; 0 disables dp for that cell")
    p_sweep.add_argument("--alpha-ups", dest="alpha_ups", help="comma list")
    p_sweep.add_argument("--alpha-downs", dest="alpha_downs", help="comma list")
    p_sweep.add_argument("--seeds", help="comma list")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        log.exception("run failed: %s", exc)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
