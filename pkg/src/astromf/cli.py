"""Command-line front end: ``astromf run | describe | postprocess``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import harness
from .config import ConfigError, load_config, parse_override, schema_help
from .oracles import make_problem

log = logging.getLogger("astromf")

_ALIASES = {"d": "dimension"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON run config (sections: problem, solver, experiment)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")
    p.add_argument("--seed", type=int, help="master seed (experiment.seed)")
    p.add_argument("--budget", type=float, help="budget per run (experiment.budget)")
    p.add_argument("--jobs", type=int, help="parallel workers (experiment.jobs)")
    p.add_argument("--out", help="output directory (experiment.out)")
    p.add_argument("--plots", action="store_true", default=None, help="also write PNG plots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="astromf", description="Multi-fidelity simulation optimization runs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)
    fmt = argparse.RawDescriptionHelpFormatter
    run = sub.add_parser("run", help="run solvers, post-evaluate and write results",
                         epilog="config keys:\n" + schema_help(), formatter_class=fmt)
    _common(run)
    post = sub.add_parser("postprocess", help="re-run post-evaluation on saved trajectories",
                          epilog="config keys:\n" + schema_help(), formatter_class=fmt)
    _common(post)
    post.add_argument("--trajectories", help="trajectories.csv to read (default: <out>/trajectories.csv)")
    desc = sub.add_parser("describe", help="print a problem's dimension, levels, costs and bounds")
    desc.add_argument("name", help="rosenbrock_mf | sscont")
    desc.add_argument("params", nargs="*", metavar="KEY=VALUE", help="problem parameters, e.g. d=10")
    return parser


def _spec(args):
    overrides = [parse_override(item) for item in args.overrides]
    for flag, key in (("seed", "seed"), ("budget", "budget"), ("jobs", "jobs"), ("out", "out"), ("plots", "plots")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append((f"experiment.{key}", value))
    return load_config(args.config, overrides)


def cmd_run(args) -> int:
    spec = _spec(args)
    art = harness.run_pipeline(spec)
    harness.export(spec.experiment["out"], art.trajectories, art.curves, art.profile, spec.experiment["plots"])
    (Path(spec.experiment["out"]) / "config.yaml").write_text(
        yaml.safe_dump(spec.as_dict(), sort_keys=True), encoding="utf-8")
    for line in harness.summary_lines(art):
        print(line)
    return 0


def cmd_postprocess(args) -> int:
    spec = _spec(args)
    out = Path(spec.experiment["out"])
    path = Path(args.trajectories) if args.trajectories else out / "trajectories.csv"
    if not path.is_file():
        raise ConfigError(f"trajectories file not found: {path}")
    trajs = harness.read_trajectories(path)
    problems = harness.instances(spec)
    missing = sorted({t.problem for t in trajs} - set(problems))
    if missing:
        raise ConfigError(f"trajectories reference problems not in the config: {missing}")
    curves, profile, refs = harness.evaluate_runs(spec, trajs, problems)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_curves(out / "curves.csv", curves)
    harness.write_profiles(out / "profiles.csv", profile)
    if spec.experiment["plots"]:
        harness.plot_results(out, curves, profile)
    for line in harness.summary_lines(harness.Artifacts(trajs, curves, profile, refs)):
        print(line)
    return 0


def cmd_describe(args) -> int:
    params = {}
    for item in args.params:
        key, value = parse_override(item)
        params[_ALIASES.get(key, key)] = value
    try:
        problem = make_problem(args.name, **params)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {args.name}: {exc}") from None
    print(problem.describe())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "postprocess": cmd_postprocess, "describe": cmd_describe}[args.verb]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
