"""``crtcover <experiment> --config path.json [--seed N] [--out dir] [--workers K]``"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .registry import get_experiment, registry
from .runner import encode, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crtcover", description="Random-walk cover times on random trees: experiments")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    sub.add_parser("list", help="print the experiment registry")
    for name in registry():
        p = sub.add_parser(name, help=get_experiment(name).description)
        p.add_argument("--config", type=Path, help="JSON config (registry defaults otherwise)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--workers", type=int,
                       help="worker processes (default: $CRTCOVER_WORKERS or 1)")
        p.add_argument("--smoke", action="store_true",
                       help="tiny preset for a quick end-to-end check")
    return parser


def _fail(kind: str, message: str, out: Path | None, code: int) -> int:
    report = encode({"status": "error", "error": kind, "message": message})
    print(report, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(report + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.experiment == "list":
        for name in registry():
            print(f"{name:26s} {get_experiment(name).description}")
        return 0
    out = args.out
    try:
        overrides = dict(get_experiment(args.experiment).smoke) if args.smoke else {}
        overrides["seed"] = args.seed
        if args.smoke and "params" in overrides:
            base = load_config(args.experiment, args.config)
            overrides["params"] = {**base.params, **overrides["params"]}
        cfg = load_config(args.experiment, args.config, **overrides)
    except ConfigError as exc:
        return _fail("invalid_config", str(exc), out, 2)
    try:
        result = run(cfg, out, args.workers)
    except Exception as exc:  # reported as JSON, never a bare traceback
        return _fail(type(exc).__name__, str(exc), out or (Path(cfg.out) if cfg.out else None), 1)
    print(json.dumps({"status": "ok", "experiment": cfg.experiment,
                      "out": str(result.out_dir), "records": len(result.records)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
