"""Command-line entry point: ``beamforge <command> [options]``.

Commands: gen, train, eval, gradcheck, oracle-check, plot. The master seed
comes from ``--seed``, else the BEAMFORGE_SEED environment variable, else the
config file's ``seed`` key.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config, parse_snr_grid
from .core import FormatError

log = logging.getLogger("beamforge")


class CliError(Exception):
    pass


def _load_config(path) -> RunConfig:
    if path is None:
        return parse_config("")
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        return parse_config(p.read_text(encoding="utf-8"))
    except ConfigError as exc:
        raise CliError(f"{p}: {exc}") from None


def _seed(args, rc: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("BEAMFORGE_SEED")
    if env is not None:
        try:
            return int(env, 0)
        except ValueError:
            raise CliError(f"BEAMFORGE_SEED is not an integer: {env!r}") from None
    return rc.seed


def _need_file(path, what):
    if not Path(path).is_file():
        raise CliError(f"{what} not found: {path}")


def cmd_gen(args):
    from .dataset import generate_dataset, write_dataset
    rc = _load_config(args.config)
    count = args.count if args.count is not None else rc.dataset_count
    if count < 1:
        raise CliError("--count must be >= 1")
    ds = generate_dataset(rc.scenario, count, (rc.snr_min_db, rc.snr_max_db),
                          _seed(args, rc), threads=args.threads)
    write_dataset(ds, args.out)
    print(f"wrote {count} records to {args.out}")


def cmd_train(args):
    from .dataset import read_dataset
    from .training import train
    rc = _load_config(args.config)
    _need_file(args.data, "dataset file")
    ds = read_dataset(args.data, rc.scenario.los_gain_var, rc.scenario.nlos_gain_var)
    tcfg = dataclasses.replace(rc.training, seed=_seed(args, rc),
                               preset=args.preset or rc.training.preset)
    out = Path(args.out)
    best = Path(args.best) if args.best else out.with_name(out.stem + ".best" + out.suffix)
    res = train(tcfg, rc.scenario, ds, out_path=out, log_path=args.log, best_path=best,
                timing=args.wall_clock)
    last = res.rows[-1] if res.rows else None
    msg = f"final val loss {last.val_loss:.6f}" if last else "no epochs run"
    print(f"{msg}; best {res.best_val_loss:.6f}; wrote {out}, {best}, {args.log}")


def cmd_eval(args):
    from .evaluation import snr_sweep
    from .neuralnet import load_checkpoint
    rc = _load_config(args.config)
    _need_file(args.model, "model checkpoint")
    params = load_checkpoint(args.model)
    grid = parse_snr_grid(args.snr or rc.sweep_snr)
    trials = args.trials if args.trials is not None else rc.sweep_trials
    if trials < 1:
        raise CliError("--trials must be >= 1")
    report = snr_sweep(params, rc.scenario, grid, trials, _seed(args, rc),
                       threads=args.threads, use_abs=args.abs_sort or rc.sort_abs)
    report.to_csv(args.out)
    for r in report.rows:
        print(f"{r.snr_db:7.2f} dB  {r.method:6s}  acc {r.accuracy:.4f}  "
              f"SE {r.spectral_efficiency:.4f} bits/s/Hz")
    print(f"wrote {args.out}")


def cmd_gradcheck(args):
    from .selfcheck import gradient_check
    err = gradient_check(draws=args.draws, seed=args.seed if args.seed is not None else 0)
    print(f"max relative error {err:.3e}")
    return 0 if err < 1e-6 else 1


def cmd_oracle_check(args):
    from .selfcheck import beam_oracle_check
    agree, checked = beam_oracle_check(args.samples, args.n_antennas,
                                       seed=args.seed if args.seed is not None else 0)
    print(f"closed-form beam index agrees with codebook argmax in {agree}/{checked} "
          f"non-tie cases (N_A={args.n_antennas})")
    return 0 if agree == checked else 1


def cmd_plot(args):
    from .plotting import plot_loss, plot_sweep
    _need_file(args.input, "input CSV")
    (plot_loss if args.kind == "loss" else plot_sweep)(args.input, args.out)
    print(f"wrote {args.out}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="beamforge",
        description="Beam alignment simulator: data generation, training and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def seed(sp):
        sp.add_argument("--seed", type=lambda s: int(s, 0),
                        help="master seed (default: $BEAMFORGE_SEED, then config 'seed')")

    g = sub.add_parser("gen", help="generate an AMPB measurement dataset")
    g.add_argument("--config", help="key = value config file (defaults if omitted)")
    g.add_argument("--count", type=int, help="number of records (default: config dataset_count)")
    g.add_argument("--out", required=True, help="output .ampb path")
    seed(g)
    g.add_argument("--threads", type=int, default=1, help="worker threads; output is identical for any value")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the network; writes AMPN checkpoints and a CSV log")
    t.add_argument("--config", help="key = value config file (defaults if omitted)")
    t.add_argument("--data", required=True, help="input .ampb dataset")
    t.add_argument("--preset", choices=["nps1", "nps2"], help="network preset (default: config preset)")
    t.add_argument("--out", required=True, help="final checkpoint path (.ampn)")
    t.add_argument("--best", help="best-validation checkpoint path (default: <out>.best.ampn)")
    t.add_argument("--log", required=True, help="training log CSV path")
    t.add_argument("--wall-clock", action="store_true",
                   help="record elapsed seconds in the log (otherwise 0, keeping the log reproducible)")
    seed(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="SNR sweep of nn / genie / random beam selection")
    e.add_argument("--config", help="key = value config file (defaults if omitted)")
    e.add_argument("--model", required=True, help="trained .ampn checkpoint")
    e.add_argument("--snr", help="SNR grid lo:hi:step in dB (default: config sweep_snr)")
    e.add_argument("--trials", type=int, help="channel trials per SNR (default: config sweep_trials)")
    e.add_argument("--out", required=True, help="report CSV path")
    e.add_argument("--abs-sort", action="store_true",
                   help="rank beams by |logit| instead of logit value")
    seed(e)
    e.add_argument("--threads", type=int, default=1, help="worker threads; output is identical for any value")
    e.set_defaults(func=cmd_eval)

    gc = sub.add_parser("gradcheck", help="backprop vs finite differences on a toy network")
    gc.add_argument("--draws", type=int, default=20, help="random parameter draws (default 20)")
    gc.add_argument("--seed", type=int, help="seed for the parameter draws (default 0)")
    gc.set_defaults(func=cmd_gradcheck)

    oc = sub.add_parser("oracle-check", help="closed-form LOS beam index vs codebook argmax")
    oc.add_argument("--samples", type=int, default=100_000, help="random directions (default 100000)")
    oc.add_argument("--n-antennas", type=int, default=256, help="codebook size (default 256)")
    oc.add_argument("--seed", type=int, help="seed for the directions (default 0)")
    oc.set_defaults(func=cmd_oracle_check)

    pl = sub.add_parser("plot", help="render a log or report CSV as an SVG line chart")
    pl.add_argument("--in", dest="input", required=True, help="training log or report CSV")
    pl.add_argument("--kind", choices=["loss", "sweep"], required=True, help="chart type")
    pl.add_argument("--out", required=True, help="output .svg path")
    pl.set_defaults(func=cmd_plot)
    return p


def _join_snr(argv):
    # a grid such as "-10:10:5" starts with a dash and would otherwise parse as a flag
    out = []
    it = iter(argv)
    for a in it:
        if a == "--snr":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--snr={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(_join_snr(sys.argv[1:] if argv is None else argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("beamforge: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        rc = args.func(args)
    except (CliError, ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"beamforge {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
