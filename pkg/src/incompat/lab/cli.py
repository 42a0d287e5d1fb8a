"""Command-line entry point: ``incompat-lab <subcommand> CONFIG --out DIR``."""
import argparse
import json
import os
import sys
import time

from threadpoolctl import threadpool_limits

from ..exceptions import ConfigError, DomainError, NumericalError
from ..fields import field_to_text
from .config import load_config
from .experiments import run_energy, run_energy_curvature, run_gamma_sweep, run_projection, run_rigidity
from .selftest import CORRUPTIONS, run_selftest

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _project(cfg):
    report, proj = run_projection(cfg)
    return report, {"u_star": proj.u_star, "h_par": proj.h_par, "h_perp": proj.h_perp}


RUNNERS = {
    "gamma": lambda cfg: (run_gamma_sweep(cfg), {}),
    "project": _project,
    "rigidity": lambda cfg: (run_rigidity(cfg), {}),
    "curvature": lambda cfg: (run_energy_curvature(cfg), {}),
    "energy": lambda cfg: (run_energy(cfg), {}),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="incompat-lab", description="Weak-incompatibility elasticity laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    st = sub.add_parser("selftest", help="run the built-in checks")
    st.add_argument("--out", help="also write the check table to DIR/selftest.txt")
    st.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    st.add_argument("--corrupt", choices=sorted(CORRUPTIONS), help=argparse.SUPPRESS)
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("config", help="JSON experiment configuration")
        p.add_argument("--out", help="output directory (default: the config's output_dir)")
        p.add_argument("--seed", type=int, help="override the experiment seed")
        p.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    return parser


def _selftest(args):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "selftest.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            code = run_selftest(_Tee(fh, sys.stdout), corrupt=args.corrupt)
    else:
        code = run_selftest(sys.stdout, corrupt=args.corrupt)
    return code


class _Tee:
    def __init__(self, *streams):
        self.streams = streams

    def write(self, text):
        for s in self.streams:
            s.write(text)


def _experiment(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    outdir = args.out or cfg.output_dir
    start = time.perf_counter()
    report, extra = RUNNERS[args.command](cfg)
    elapsed = time.perf_counter() - start
    paths = report.write(outdir)
    for key, fld in extra.items():
        path = os.path.join(outdir, f"{report.name}_{key}.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(field_to_text(fld))
        paths.append(path)
    # timing lives in a sidecar so the report files stay byte-reproducible
    with open(os.path.join(outdir, f"{report.name}_timing.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"wall_time_s": elapsed}, fh)
        fh.write("\n")
    for path in paths:
        print(path)
    for err in report.errors:
        print(f"error: {err}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_NUMERICAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=args.threads):
            if args.command == "selftest":
                return _selftest(args)
            return _experiment(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DomainError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
