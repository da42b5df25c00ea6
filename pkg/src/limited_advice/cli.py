"""Command line entry point: ``run``, ``sweep`` and ``validate``.

A JSON config file (``--config``) may set any flag by its long name with
dashes replaced by underscores, e.g. ``{"K": 10, "algo": "algo3",
"means": [0.4, 0.5], "exp3_tuning": "horizon"}``; flags given on the
command line take precedence.
"""

from __future__ import annotations

import argparse
import json
import sys

from .adversaries import AdversaryConfig
from .exceptions import ConfigurationError, OutputPathError, SequenceParseError
from .harness import ALGORITHMS, ExperimentConfig, run_experiment, run_sweep
from .protocol import GameConfig
from .validation import run_all

DEFAULTS = {
    "K": None, "p": 2, "m": None, "ic": False, "algo": "algo3", "T": 1024,
    "trials": 1, "seed": 0, "lam": None, "adversary": "bernoulli", "eps": None,
    "istar": 0, "means": None, "file": None, "value": 0.4, "delta": 0.05,
    "out": None, "checkpoints": None, "exp3_tuning": "horizon", "engine": "fast",
    "T_list": None, "m_list": None,
}


def _bool(text):
    low = str(text).lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _floats(text):
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _add_run_flags(sp):
    # defaults are None so that config-file values survive unless overridden
    sp.add_argument("--config", help="JSON file with flag values")
    sp.add_argument("--K", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--ic", type=_bool, metavar="{true,false}")
    sp.add_argument("--algo", choices=ALGORITHMS)
    sp.add_argument("--T", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--adversary", choices=("lower_bound", "bernoulli", "fixed", "constant"))
    sp.add_argument("--eps", type=float)
    sp.add_argument("--istar", type=int)
    sp.add_argument("--means", type=_floats, help="comma-separated expert means")
    sp.add_argument("--file", help="forecast/outcome file for --adversary fixed")
    sp.add_argument("--value", type=float, help="forecast of every expert for --adversary constant")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--out", help="output directory for regret.csv and summary.json")
    sp.add_argument("--checkpoints", type=_ints, help="comma-separated round counts")
    sp.add_argument("--exp3-tuning", dest="exp3_tuning", choices=("horizon", "doubling"))
    sp.add_argument("--engine", choices=("fast", "reference"))


def build_parser():
    parser = argparse.ArgumentParser(prog="limited-advice",
                                     description="Games with limited expert advice.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a seeded multi-trial experiment")
    _add_run_flags(run)
    sweep = sub.add_parser("sweep", help="run one experiment per (T, m) cell")
    _add_run_flags(sweep)
    sweep.add_argument("--T-list", dest="T_list", type=_ints)
    sweep.add_argument("--m-list", dest="m_list", type=_ints)
    val = sub.add_parser("validate", help="run the statistical validation suites")
    val.add_argument("--seed", type=int, default=0)
    return parser


def resolve_options(args):
    """Merge defaults, the config file and explicit flags (in that order)."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
        for key, value in data.items():
            key = {"lambda": "lam", "exp3-tuning": "exp3_tuning", "T-list": "T_list",
                   "m-list": "m_list"}.get(key, key.replace("-", "_"))
            if key not in opts:
                raise ConfigurationError(f"unknown config key {key!r}")
            opts[key] = value
    for key, value in vars(args).items():
        if key in opts and value is not None:
            opts[key] = value
    return opts


def experiment_from_options(opts):
    means = opts["means"]
    K = opts["K"]
    if K is None:
        if means is None:
            raise ConfigurationError("--K is required (or give --means)")
        K = len(means)
    algo = opts["algo"]
    m = opts["m"]
    p = opts["p"]
    if algo == "exp3":
        p = 1 if opts["p"] in (None, 2) else p
        m = 1 if m is None else m
    elif algo == "ewa":
        p = K if p in (None, 2) else p
        m = K if m is None else m
    elif algo == "algo4":
        m = 2 if m is None else m
    elif m is None:
        m = min(K, 4)
    game = GameConfig(K=K, p=p, m=m, ic=bool(opts["ic"]), T=int(opts["T"]), lam=opts["lam"])
    adversary = AdversaryConfig(
        kind=opts["adversary"], K=K, eps=opts["eps"], i_star=int(opts["istar"]),
        means=None if means is None else tuple(float(x) for x in means),
        file=opts["file"], value=float(opts["value"]))
    cps = opts["checkpoints"]
    return ExperimentConfig(
        game=game, adversary=adversary, algorithm=algo, trials=int(opts["trials"]),
        master_seed=int(opts["seed"]), delta=float(opts["delta"]),
        checkpoints=None if cps is None else tuple(int(c) for c in cps),
        out=opts["out"], exp3_tuning=opts["exp3_tuning"], engine=opts["engine"])


def _report(result, stream):
    cfg = result.config
    print(f"{cfg.algorithm} K={cfg.game.K} p={cfg.game.p} m={cfg.game.m} T={cfg.game.T} "
          f"trials={cfg.trials} lambda={result.lam}", file=stream)
    print("checkpoint,mean,stderr,median,quantile", file=stream)
    for k, c in enumerate(result.checkpoints):
        print(f"{int(c)},{result.mean[k]:.6g},{result.stderr[k]:.6g},"
              f"{result.median[k]:.6g},{result.quantile[k]:.6g}", file=stream)
    print(f"exponent={result.exponent}", file=stream)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            results = run_all(seed=args.seed)
            for r in results:
                print(r.line())
            return 0 if all(r.passed for r in results) else 1
        opts = resolve_options(args)
        config = experiment_from_options(opts)
        if args.command == "run":
            _report(run_experiment(config), sys.stdout)
        else:
            for (T, m), result in run_sweep(config, opts["T_list"], opts["m_list"]):
                print(f"# cell T={T} m={m}")
                _report(result, sys.stdout)
        return 0
    except (ConfigurationError, OutputPathError, SequenceParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
