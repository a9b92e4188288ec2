import argparse
import json
import sys
from dataclasses import fields, replace


def parser(description, config):
    """Argument parser exposing every int/float field of `config` as a flag."""
    p = argparse.ArgumentParser(description=description)
    for f in fields(config):
        v = getattr(config, f.name)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            p.add_argument("--" + f.name.replace("_", "-"), type=type(v), default=v)
    p.add_argument("--json", help="also write the results here")
    p.add_argument("--quiet", action="store_true", help="no training log")
    return p


def configure(config, args):
    names = {f.name for f in fields(config)}
    return replace(config, **{k: v for k, v in vars(args).items() if k in names})


def report(results, args):
    clean = {k: v for k, v in results.items() if isinstance(v, (int, float))}
    for k, v in clean.items():
        print(f"{k:>24s}  {v:.4f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(clean, fh, indent=1, sort_keys=True)
    return clean


def printer(args):
    return None if args.quiet else (lambda e: print(json.dumps(e), file=sys.stderr, flush=True))
