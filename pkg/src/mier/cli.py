"""Command-line interface.

Subcommands: gen-data, train, eval, verify, gradcheck, sample, report.
Every command is reproducible from its flags, config, and input files; all
randomness flows from the command's --seed. Exit status 0 on success, 1 on
any failure (one machine-parsable "CODE: message" line on stderr), and 2
when verify or gradcheck finds a violation.

The MIER_THREADS environment variable (default 1) caps internal numeric
parallelism; it is applied before the numeric backend loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

VERIFY_TOLERANCE = 1e-10


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int = 1):
        super().__init__(message)
        self.code = code
        self.status = status


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures routed through the error contract."""

    def error(self, message):
        raise CliError("E_USAGE", message)


def _apply_thread_cap() -> None:
    threads = os.environ.get("MIER_THREADS", "1")
    try:
        if int(threads) < 1:
            raise ValueError
    except ValueError:
        raise CliError("E_USAGE", f"MIER_THREADS must be a positive integer, "
                                  f"got {threads!r}") from None
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="mier",
        description=(
            "Semi-supervised VAE training with mutual-information and "
            "entropy regularization, plus exact verification oracles."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    gen = sub.add_parser("gen-data",
                         help="write a synthetic mixture dataset as CSV")
    gen.add_argument("--classes", type=int, default=4,
                     help="number of classes (default 4)")
    gen.add_argument("--per-class", type=int, default=250,
                     help="examples per class (default 250)")
    gen.add_argument("--dim", type=int, default=2,
                     help="feature dimension (default 2)")
    gen.add_argument("--separation", type=float, default=4.0,
                     help="center radius (default 4.0)")
    gen.add_argument("--noise", type=float, default=1.0,
                     help="within-class standard deviation (default 1.0)")
    gen.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    gen.add_argument("--out", required=True, help="output CSV path")

    tr = sub.add_parser("train",
                        help="train from a config JSON and a CSV dataset")
    tr.add_argument("--config", required=True,
                    help="JSON with model/objective/train sections")
    tr.add_argument("--train-data", required=True, help="training CSV")
    tr.add_argument("--test-data", default=None,
                    help="optional test CSV for per-epoch metrics")
    tr.add_argument("--labels-per-class", type=int, required=True,
                    help="labeled examples kept per class")
    tr.add_argument("--mier", choices=("on", "off"), default=None,
                    help="override the config's regularization switch")
    tr.add_argument("--seed", type=int, default=None,
                    help="override the config's seed")
    tr.add_argument("--out", required=True, help="output run directory")

    ev = sub.add_parser("eval",
                        help="evaluate a checkpoint on a test CSV")
    ev.add_argument("--checkpoint", required=True, help="checkpoint JSON")
    ev.add_argument("--test-data", required=True, help="test CSV")
    ev.add_argument("--z-samples", type=int, default=100,
                    help="latent draws per class for the bound (default 100)")

    ve = sub.add_parser("verify",
                        help="run the exact identity and equivalence suites")
    ve.add_argument("--trials", type=int, default=1000,
                    help="random worlds per identity (default 1000)")
    ve.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")

    gc = sub.add_parser("gradcheck",
                        help="finite-difference gradient verification")
    gc.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    gc.add_argument("--tolerance", type=float, default=1e-4,
                    help="max relative error allowed (default 1e-4)")

    sa = sub.add_parser("sample",
                        help="decode prior samples into a PGM grid")
    sa.add_argument("--checkpoint", required=True, help="checkpoint JSON")
    sa.add_argument("--per-class", type=int, default=8,
                    help="rows per class (default 8)")
    sa.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    sa.add_argument("--out", required=True, help="output PGM path")

    re = sub.add_parser("report",
                        help="merge metrics from runs into a comparison "
                             "table and figures")
    re.add_argument("run_dirs", nargs="+", help="run directories")
    re.add_argument("--out", default=".",
                    help="directory for comparison.csv and figures "
                         "(default: current directory)")

    return parser


def _cmd_gen_data(args) -> int:
    from .data import generate_gaussian_mixture, save_csv

    data = generate_gaussian_mixture(
        args.classes, args.per_class, args.dim, args.separation, args.noise,
        args.seed,
    )
    save_csv(data, args.out)
    print(f"wrote {len(data)} examples ({args.classes} classes, "
          f"dim {args.dim}) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from dataclasses import replace

    from .data import load_csv, split_labeled
    from .training import load_run_config, train

    model_config, _, train_config = load_run_config(args.config)
    if args.seed is not None:
        train_config = replace(train_config, seed=args.seed)
    if args.mier is not None:
        train_config = replace(train_config, mier_enabled=args.mier == "on")

    train_data = load_csv(args.train_data)
    if train_data.inputs.shape[1] != model_config.input_dim:
        raise CliError(
            "E_CONFIG",
            f"config input_dim {model_config.input_dim} does not match "
            f"{args.train_data} width {train_data.inputs.shape[1]}",
        )
    if train_data.num_classes > model_config.num_classes:
        raise CliError(
            "E_CONFIG",
            f"{args.train_data} holds labels up to "
            f"{train_data.num_classes - 1} but the model has only "
            f"{model_config.num_classes} classes",
        )
    test_data = load_csv(args.test_data) if args.test_data else None
    split = split_labeled(train_data, args.labels_per_class, train_config.seed)
    result = train(model_config, train_config, split, test_dataset=test_data,
                   out_dir=args.out)
    print(json.dumps(result.summary))
    return 0


def _cmd_eval(args) -> int:
    from .data import load_csv
    from .model import load_checkpoint
    from .training import evaluate

    checkpoint = load_checkpoint(args.checkpoint)
    test_data = load_csv(args.test_data)
    record = evaluate(checkpoint.params, test_data,
                      eval_z_samples=args.z_samples, seed=checkpoint.seed)
    print(json.dumps(record.to_json_dict()))
    return 0


def _print_summary_table(summaries, tolerance: float) -> bool:
    name_width = max(len(s.name) for s in summaries)
    print(f"{'identity'.ljust(name_width)}  {'trials':>7}  "
          f"{'max residual':>13}  status")
    all_pass = True
    for s in summaries:
        ok = s.passes(tolerance)
        all_pass = all_pass and ok
        print(f"{s.name.ljust(name_width)}  {s.trials:>7}  "
              f"{s.max_residual:>13.3e}  {'pass' if ok else 'FAIL'}")
    return all_pass


def _cmd_verify(args) -> int:
    from .objectives import run_objective_identity_trials
    from .oracle import run_identity_trials

    summaries = run_identity_trials(args.trials, args.seed)
    summaries += run_objective_identity_trials(
        batch_trials=max(1, args.trials // 5),
        form_trials=max(1, args.trials // 20),
        seed=args.seed,
    )
    all_pass = _print_summary_table(summaries, VERIFY_TOLERANCE)
    print(f"tolerance {VERIFY_TOLERANCE:.0e}: "
          f"{'all identities hold' if all_pass else 'violations found'}")
    return 0 if all_pass else 2


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    suites = run_gradcheck(args.seed)
    name_width = max(len(s.name) for s in suites)
    print(f"{'suite'.ljust(name_width)}  {'coords':>7}  "
          f"{'max rel err':>12}  status")
    all_pass = True
    for s in suites:
        ok = s.passes(args.tolerance)
        all_pass = all_pass and ok
        print(f"{s.name.ljust(name_width)}  {s.coordinates:>7}  "
              f"{s.max_error:>12.3e}  {'pass' if ok else 'FAIL'}")
    print(f"tolerance {args.tolerance:.0e}: "
          f"{'gradients verified' if all_pass else 'violations found'}")
    return 0 if all_pass else 2


def _cmd_sample(args) -> int:
    from .model import load_checkpoint
    from .training import generate_samples, write_pgm

    checkpoint = load_checkpoint(args.checkpoint)
    grid = generate_samples(checkpoint.params, args.per_class, args.seed)
    write_pgm(args.out, grid)
    print(f"wrote {grid.shape[0]}x{grid.shape[1]} sample grid to {args.out}")
    return 0


def _cmd_report(args) -> int:
    from .report import (
        build_comparison,
        discover_runs,
        format_table,
        render_figures,
        write_comparison_csv,
    )

    runs = discover_runs(args.run_dirs)
    rows = build_comparison(runs)
    print(format_table(rows))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(rows, out_dir / "comparison.csv")
    figures = render_figures(runs, out_dir)
    print(f"wrote {out_dir / 'comparison.csv'} and "
          f"{', '.join(str(p) for p in figures)}")
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "verify": _cmd_verify,
    "gradcheck": _cmd_gradcheck,
    "sample": _cmd_sample,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    try:
        _apply_thread_cap()
        args = build_parser().parse_args(argv)
        return _HANDLERS[args.command](args)
    except CliError as err:
        _fail(err.code, str(err))
        return err.status
    except FileNotFoundError as err:
        _fail("E_NOT_FOUND", str(err))
        return 1
    except json.JSONDecodeError as err:
        _fail("E_CONFIG", f"invalid JSON: {err}")
        return 1
    except (ValueError, KeyError) as err:
        code = getattr(err, "code", "E_INVALID")
        _fail(code, str(err))
        return 1
    except RuntimeError as err:
        _fail("E_RUNTIME", str(err))
        return 1
    return 0


def _fail(code: str, message: str) -> None:
    one_line = " ".join(str(message).split())
    print(f"{code}: {one_line}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
