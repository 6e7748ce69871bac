"""Command-line interface.

Subcommands: ``run`` executes a configured experiment and writes CSV, plot
data, and metadata into an output directory; ``plot`` rebuilds regret curves
from a stored run; ``truths`` dumps the built-in parameter table. Exit code 0
on success, 1 with a one-line diagnostic otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import environment, harness
from .errors import MvBanditError
from .sampling import NoiseKind


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    harness.run_to_directory(config, args.out, workers=args.workers)
    print(f"wrote {os.path.join(args.out, 'records.csv')}")
    return 0


def _curves_from_csv(run_dir: str) -> dict[str, np.ndarray]:
    config = harness.load_config(os.path.join(run_dir, "metadata.txt"))
    records = harness.read_csv(os.path.join(run_dir, "records.csv"))
    horizon = config.horizon
    sums = {tag: np.zeros(horizon) for tag in config.policies}
    counts = {tag: 0 for tag in config.policies}
    for rec in records:
        if rec.round == 0:
            continue
        sums[rec.policy][rec.round - 1] += rec.cum_regret
        if rec.round == 1:
            counts[rec.policy] += 1
    return {tag: sums[tag] / max(counts[tag], 1) for tag in config.policies}


def _cmd_plot(args) -> int:
    curves = _curves_from_csv(args.indir)
    ext = os.path.splitext(args.out)[1].lower()
    if ext in (".dat", ".txt"):
        harness.emit_plot_data(curves, args.out)
    else:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4.5))
        for tag, curve in curves.items():
            ax.plot(np.arange(1, curve.size + 1), curve, label=tag)
        ax.set_xlabel("round")
        ax.set_ylabel("mean cumulative regret")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.out)
        plt.close(fig)
    print(f"wrote {args.out}")
    return 0


def _cmd_truths(args) -> int:
    table = environment.format_truths(environment.builtin_truths(NoiseKind("gaussian")))
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvbandit",
                                     description="risk-averse contextual bandit simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="path to a key = value config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--workers", type=int, default=None,
                       help=f"parallel replications (default: ${harness.WORKERS_ENV_VAR} or 1)")
    p_run.set_defaults(func=_cmd_run)

    p_plot = sub.add_parser("plot", help="rebuild regret curves from a stored run")
    p_plot.add_argument("--in", dest="indir", required=True, help="run directory")
    p_plot.add_argument("--out", required=True,
                        help="output path (.svg/.png/.pdf figure, or .dat/.txt plot data)")
    p_plot.set_defaults(func=_cmd_plot)

    p_truths = sub.add_parser("truths", help="dump the built-in parameter table")
    p_truths.add_argument("--print", action="store_true", dest="do_print", default=True,
                          help="print the table (default)")
    p_truths.set_defaults(func=_cmd_truths)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MvBanditError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
