"""``fa-precode`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .channel import (exponential_correlation_eigs, kronecker_statistics, random_unitary,
                      ray_statistics, statistics_to_dict)
from .complexity import addition_count, complete_count, cost_table, format_count
from .experiment import load_config, run_experiment, validate_asymptotics

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 2, 1


def _floats(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",") if x.strip()])


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out, ok = run_experiment(cfg, args.output)
    print(f"wrote {out}")
    return EXIT_OK if ok else EXIT_PARTIAL


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    out, ok = validate_asymptotics(cfg, args.output)
    print(f"wrote {out / 'validate.csv'}")
    return EXIT_OK if ok else EXIT_PARTIAL


def _cmd_complexity(args) -> int:
    if args.table:
        nss = [2, 4]
        print("N_t," + ",".join(f"N_s={n}" for n in nss) + ",N_s=N_t")
        for nt, cells, full in cost_table(args.m, [4, 8, 16, 32], nss):
            row = ["" if v is None else format_count(v) for v in cells]
            print(",".join([str(nt), *row, format_count(full)]))
        return EXIT_OK
    if args.nt is None or args.ns is None:
        print("complexity needs --nt and --ns (or --table)", file=sys.stderr)
        return EXIT_USAGE
    per = addition_count(args.m, args.nt, args.ns)
    full = complete_count(args.m, args.nt)
    print(f"per_group {per} ({format_count(per)})")
    print(f"complete {full} ({format_count(full)})")
    return EXIT_OK


def _cmd_gen_stats(args) -> int:
    if args.model == "kronecker":
        lr = (_floats(args.lambda_r) if args.lambda_r
              else exponential_correlation_eigs(args.nr, args.rho_r))
        lt = (_floats(args.lambda_t) if args.lambda_t
              else exponential_correlation_eigs(args.nt, args.rho_t))
        if args.bases == "identity":
            U_R, U_T = np.eye(lr.size), np.eye(lt.size)
        else:
            U_R = random_unitary(lr.size, [args.seed, 0])
            U_T = random_unitary(lt.size, [args.seed, 1])
        s = kronecker_statistics(lr, lt, U_R, U_T)
    else:
        if args.paths:
            with open(args.paths, encoding="utf-8") as fh:
                raw = json.load(fh)
            paths = [dict(p, c=complex(*p["c"]) if isinstance(p["c"], list) else complex(p["c"]))
                     for p in raw]
        else:
            rng = np.random.default_rng(args.seed)
            L = args.n_paths
            paths = []
            if args.los:
                paths.append({"c": np.sqrt(args.los_power), "d": float(rng.uniform(10, 100)),
                              "phi": float(rng.uniform(-np.pi / 2, np.pi / 2)),
                              "theta": float(rng.uniform(-np.pi / 2, np.pi / 2))})
            for _ in range(L):
                c = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2 * L)
                paths.append({"c": complex(c), "d": float(rng.uniform(10, 100)),
                              "phi": float(rng.uniform(-np.pi / 2, np.pi / 2)),
                              "theta": float(rng.uniform(-np.pi / 2, np.pi / 2))})
        s = ray_statistics(paths, args.lambda_c, args.nr, args.nt, los=args.los)
    text = json.dumps(statistics_to_dict(s), sort_keys=True, indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fa-precode", description="Finite-alphabet MIMO precoding under statistical CSI.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an SNR / Rice-factor sweep")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (overrides the config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="asymptotic vs Monte Carlo MI")
    p.add_argument("config")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("complexity", help="addition counts per iteration")
    p.add_argument("--m", type=int, required=True, help="constellation size")
    p.add_argument("--nt", type=int)
    p.add_argument("--ns", type=int)
    p.add_argument("--table", action="store_true", help="print N_t = 4..32 table")
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("gen-stats", help="write channel statistics JSON")
    p.add_argument("model", choices=["kronecker", "ray"])
    p.add_argument("--nr", type=int, default=4)
    p.add_argument("--nt", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.add_argument("--lambda-r", help="comma-separated receive eigenvalues")
    p.add_argument("--lambda-t", help="comma-separated transmit eigenvalues")
    p.add_argument("--rho-r", type=float, default=0.5)
    p.add_argument("--rho-t", type=float, default=0.5)
    p.add_argument("--bases", choices=["random", "identity"], default="random")
    p.add_argument("--paths", help="JSON list of {c, d, phi, theta}")
    p.add_argument("--n-paths", type=int, default=8)
    p.add_argument("--los", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--los-power", type=float, default=1.0)
    p.add_argument("--lambda-c", type=float, default=1.0)
    p.set_defaults(func=_cmd_gen_stats)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"fa-precode: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
