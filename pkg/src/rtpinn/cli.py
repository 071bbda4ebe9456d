"""Command-line entry point: ``rtpinn {solve,invert,ensemble,oracles,bound}``.

Precedence of settings (later wins): built-in defaults, per-problem
defaults, the YAML config file, ``--set section.key=value`` overrides,
then the dedicated flags (``--problem``, ``--seed``, ``--out``,
``--iterations``). Relative output directories are placed under
``$RTPINN_OUTPUT_ROOT`` when that variable is set.

Exit codes: 0 success, 1 configuration error, 2 runtime failure. On
failure a JSON error record is printed to stderr (and written to
``error.json`` when the output directory is known).
"""

import argparse
import json
import logging
import os
import sys

import yaml

from .errors import ConfigurationError
from .experiments import (OUTPUT_ROOT_ENV, output_dir, resolve_config, run_bound, run_ensemble, run_forward,
                          run_inverse, write_json)
from .oracles import run_oracle_suite

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parse_value(text):
    return yaml.safe_load(text)


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot override inside non-mapping {key!r}")
    node[parts[-1]] = _parse_value(raw)
    return cfg


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config file must contain a mapping")
    return cfg


def build_parser():
    p = argparse.ArgumentParser(prog="rtpinn", description="PINN solver for radiative transfer problems")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, text in (("solve", "train a forward model"), ("invert", "reconstruct the absorption coefficient"),
                       ("ensemble", "hyperparameter ensemble training"), ("bound", "evaluate an error bound"),
                       ("oracles", "run the reference-value checks")):
        s = sub.add_parser(verb, help=text)
        if verb == "oracles":
            s.add_argument("--out", help="directory for oracles.json")
            continue
        s.add_argument("config", nargs="?", help="YAML configuration file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set loss.lam=0.1")
        if verb != "bound":
            s.add_argument("--problem")
            s.add_argument("--seed", type=int, help="network initialization seed")
            s.add_argument("--iterations", type=int, help="optimizer iteration budget")
            s.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
            s.add_argument("-v", "--verbose", action="store_true")
        s.add_argument("--out", help="output directory")
        if verb == "ensemble":
            s.add_argument("--jobs", type=int, default=1, help="parallel ensemble members")
    return p


def _resolved(args):
    cfg = load_config(args.config)
    for a in args.set:
        apply_override(cfg, a)
    if getattr(args, "problem", None):
        cfg["problem"] = args.problem
    if getattr(args, "seed", None) is not None:
        cfg.setdefault("network", {})["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        cfg.setdefault("optimizer", {})["max_iterations"] = args.iterations
    if args.out:
        cfg.setdefault("output", {})["dir"] = args.out
    return cfg


def _progress(row):
    if row["iteration"] % 100 == 0:
        print(f"iter {row['iteration']:6d}  J={row['J']:.6e}  E_T={row['E_T']:.6e}", flush=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    out_dir = None
    try:
        if args.verb == "oracles":
            results = run_oracle_suite()
            for r in results:
                flag = "PASS" if r["passed"] else "FAIL"
                print(f"{flag}  {r['name']}  value={r['value']:.12g}  expected={r['expected']:.12g}  [{r['kind']}]")
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                write_json(os.path.join(args.out, "oracles.json"), {"checks": results})
            return EXIT_OK if all(r["passed"] for r in results) else EXIT_RUNTIME

        cfg = _resolved(args)
        if args.verb == "bound":
            inputs = dict(cfg.get("bound", cfg))
            inputs.pop("output", None)
            report = run_bound(inputs)
            text = json.dumps(report, indent=2, sort_keys=True, default=str)
            print(text)
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                write_json(os.path.join(args.out, "bound.json"), report)
            return EXIT_OK

        resolved = resolve_config(cfg)
        if args.dry_run:
            print(yaml.safe_dump(resolved, sort_keys=True), end="")
            return EXIT_OK
        out_dir = output_dir(resolved)
        log = _progress if args.verbose else None
        if args.verb == "solve":
            summary = run_forward(resolved, log=log)
        elif args.verb == "invert":
            summary = run_inverse(resolved, log=log)
        else:
            summary = run_ensemble(resolved, jobs=args.jobs)
        print(json.dumps({k: v for k, v in summary.items()}, indent=2, sort_keys=True, default=str))
        return EXIT_OK
    except ConfigurationError as exc:
        _report_error("configuration", exc, out_dir)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 2
        _report_error("runtime", exc, out_dir)
        return EXIT_RUNTIME


def _report_error(kind, exc, out_dir):
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    if out_dir:
        try:
            with open(os.path.join(out_dir, "error.json"), "w") as fh:
                json.dump(record, fh, indent=2)
        except OSError:
            pass


if __name__ == "__main__":
    sys.exit(main())
