"""Command line entry point: ``sdcaf run`` and ``sdcaf probe``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigurationError, ResourceError
from .harness import ExperimentConfig, run_experiment, sublinearity_probe

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_RESOURCE = 0, 2, 3, 4

log = logging.getLogger("sdcaf")


def _parse_scalar(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_spread(text: str) -> dict:
    """``dirichlet:alpha=0.5`` -> ``{"name": "dirichlet", "alpha": 0.5}``."""
    name, _, rest = text.partition(":")
    out = {"name": name}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"expected key=value in {text!r}", "spread")
        out[key] = _parse_scalar(value)
    return out


def parse_arms(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise ConfigurationError(f"expected comma separated means, got {text!r}", "arms") from None


def _param(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, float(value)


def _add_instance_args(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--algo", help="policy id, or comma separated ids")
    p.add_argument("--arms", help="comma separated Bernoulli means, e.g. 0.9,0.5,0.4")
    p.add_argument("--horizon", type=int)
    p.add_argument("--delay", type=int)
    p.add_argument("--spread", help="spread policy, e.g. uniform or dirichlet:alpha=0.5")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="policy override such as alg1.k=50 (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sdcaf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a replicated experiment, write traces and a summary")
    _add_instance_args(run)
    run.add_argument("--out-dir")
    run.add_argument("--stride", type=int)

    probe = sub.add_parser("probe", help="fit the regret growth exponent over several horizons")
    _add_instance_args(probe)
    probe.add_argument("--horizons", required=True, help="comma separated, strictly increasing")
    return parser


def load_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read {args.config}: {exc}", "config") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("top level must be an object", "config")
    if args.arms is not None:
        raw["arms"] = parse_arms(args.arms)
    if args.spread is not None:
        raw["spread"] = parse_spread(args.spread)
    for key in ("algo", "horizon", "delay", "replications", "seed", "workers"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    for key in ("out_dir", "stride"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if args.param:
        raw["overrides"] = {**raw.get("overrides", {}), **dict(args.param)}
    return raw


def _cmd_run(args):
    raw = load_config(args)
    raw.setdefault("out_dir", "sdcaf-out")
    config = ExperimentConfig.from_dict(raw)
    summary = run_experiment(config)
    for name, pol in summary["policies"].items():
        reg = pol["final_pseudo_regret"]
        status = pol.get("verification", {}).get("passed")
        print(f"{name}: pseudo-regret {reg['mean']:.3f} +/- {reg['std']:.3f}"
              + ("" if status is None else f", verification {'ok' if status else 'FAILED'}"))
    print(f"wrote {config.out_dir}/summary.json")
    return EXIT_OK if summary["passed"] else EXIT_VERIFY


def _cmd_probe(args):
    raw = load_config(args)
    raw.setdefault("horizon", 3)
    try:
        horizons = [int(h) for h in args.horizons.split(",") if h]
    except ValueError:
        raise ConfigurationError(f"bad horizons {args.horizons!r}", "horizons") from None
    config = ExperimentConfig.from_dict(raw)
    reports = []
    for name in config.algo:
        report = sublinearity_probe(name, config.instance, horizons, config.replications, config.seed,
                                    config.overrides, config.workers)
        reports.append(report.to_dict())
        print(f"{name}: exponent {report.exponent:.4f} ({'pass' if report.passed else 'FAIL'})")
    print(json.dumps(reports, indent=2))
    return EXIT_OK if all(r["passed"] for r in reports) else EXIT_VERIFY


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_probe(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
