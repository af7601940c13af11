"""Command-line experiment runner.

Exit codes: 0 success, 1 invariant failure, 2 configuration error,
3 divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from nesc import config, experiments
from nesc.config import ConfigError
from nesc.sim import IntegrationError

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

INJECTIONS = ("flip-dither-sign", "non-monotone")


def _overrides(args) -> dict:
    return config.load(args.config) if args.config else {}


def _out(args, overrides) -> Path:
    return Path(args.out or overrides.get("output.dir") or config.DEFAULTS["output.dir"])


def cmd_bilinear(args) -> int:
    ov = _overrides(args)
    res = experiments.run_bilinear(ov, _out(args, ov), args.seed)
    for s in res.summaries.values():
        print(s.line())
    # a spiralling baseline is the expected outcome, not a failed run
    return EXIT_DIVERGED if res.summaries["nesc"].diverged else EXIT_OK


def cmd_fixed_demand(args) -> int:
    ov = _overrides(args)
    sigmas = args.sigma or [float(ov.pop("noise.sigma", 0.0) or 0.0)]
    if len(sigmas) != 1:
        raise ConfigError("fixed-demand takes a single --sigma")
    res = experiments.run_fixed_demand(sigmas[0], ov, _out(args, ov), args.seed)
    print(res.summary.line())
    return EXIT_DIVERGED if res.summary.diverged else EXIT_OK


def cmd_noise_study(args) -> int:
    ov = _overrides(args)
    ov.pop("noise.sigma", None)
    sigmas = args.sigma or list(experiments.NOISE_SIGMAS)
    res = experiments.run_noise_study(sigmas, args.runs, ov, _out(args, ov), args.seed)
    for e in res.entries:
        print(e.line())
    print(f"elapsed {res.seconds:.1f} s")
    return EXIT_OK


def cmd_counterexample(args) -> int:
    ov = _overrides(args)
    try:
        rep = experiments.run_counterexample(args.u2, out=_out(args, ov))
    except RuntimeError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVARIANT
    print("\n".join(rep.lines()))
    return EXIT_OK


def cmd_validate(args) -> int:
    checks = experiments.run_validate(args.inject or ())
    print("check\tstatus\tvalue\tdetail")
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_INVARIANT


def cmd_run(args) -> int:
    """Single run of any controller, fully described by the config file."""
    ov = _overrides(args)
    cfg = config.resolve(ov)
    if args.seed is not None:
        cfg["solver.seed"] = args.seed
    run = experiments.build(cfg)
    traj = experiments.simulate(run)
    out = _out(args, ov)
    experiments.write_manifest(out, run.cfg)
    traj.to_csv(out / f"{cfg['game.name']}_{cfg['controller.name']}.csv")
    r = traj.channels["ne_residual"]
    print(f"{cfg['controller.name']} on {cfg['game.name']}: residual {r[0]:.4g} -> {r[-1]:.4g}"
          + (" DIVERGED" if traj.diverged else ""))
    return EXIT_DIVERGED if traj.diverged else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nesc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", type=Path, help="key = value config file layered over the preset")
        p.add_argument("--out", type=Path, help="output directory (default: output.dir, else ./out)")
        p.add_argument("--seed", type=int, help="master seed (dither frequencies, noise streams)")
        p.set_defaults(func=func)
        return p

    add("bilinear", cmd_bilinear, "NESC and both baselines on the bilinear game")
    p = add("fixed-demand", cmd_fixed_demand, "one run of the fixed-demand market")
    p.add_argument("--sigma", type=float, action="append", help="cost-measurement noise std")
    p = add("noise-study", cmd_noise_study, "Monte Carlo price histograms under measurement noise")
    p.add_argument("--sigma", type=float, action="append", help="noise level; repeat for several")
    p.add_argument("--runs", type=int, default=200, help="runs per noise level (default 200)")
    p = add("counterexample", cmd_counterexample, "Lyapunov increase of the projected flow")
    p.add_argument("--u2", type=float, default=1.0, help="second coordinate of the constructed state")
    p = add("validate", cmd_validate, "invariant suite; nonzero exit on any failure")
    p.add_argument("--inject", choices=INJECTIONS, action="append", help="negative-control fault")
    add("run", cmd_run, "single run of any controller from a config file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
