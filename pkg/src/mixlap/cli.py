"""Command line: ``mixlap run`` and ``mixlap export-matrix``.

Exit codes: 0 all non-advisory audits passed, 1 an audit failed (the report is
still written), 2 the configuration was rejected.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from mixlap.config import load_config
from mixlap.domain import build_grid
from mixlap.errors import ConfigError, MixlapError
from mixlap.operators import assemble

log = logging.getLogger("mixlap")


def _thread_limit():
    value = os.environ.get("MIXLAP_THREADS")
    if not value:
        return nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"MIXLAP_THREADS must be a positive integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def cmd_run(args) -> int:
    from mixlap.runner import run_experiment, write_outputs

    cfg = load_config(args.config, advisory=args.advisory)
    with _thread_limit():
        report, csv_text = run_experiment(cfg)
    out = write_outputs(report, csv_text, cfg, Path(args.config).resolve().parent)
    for name, audit in report["audits"].items():
        tag = "PASS" if audit["passed"] else ("FAIL (advisory)" if audit["advisory"] else "FAIL")
        print(f"{name:14s} {tag}")
    print(f"report written to {out}")
    return 0 if report["pass"] else 1


def export_matrix(config_path, which: str, out_path, advisory: bool = False) -> Path:
    cfg = load_config(config_path, advisory=advisory)
    grid = build_grid(cfg.domain_obj, cfg.h)
    asm = assemble(grid, cfg.s)
    if which == "loc":
        mat = asm.A_loc.tocoo()
    elif which == "frac":
        mat = sp.coo_matrix(np.asarray(asm.A_frac))
    else:
        raise ConfigError(f"--which must be 'loc' or 'frac', got {which!r}")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(out), mat, symmetry="symmetric", precision=17)
    # mmwrite appends .mtx when the name has no extension
    return out if out.exists() else out.with_name(out.name + ".mtx")


def cmd_export(args) -> int:
    with _thread_limit():
        out = export_matrix(args.config, args.which, args.out, advisory=args.advisory)
    print(f"matrix written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixlap", description="Mixed local-nonlocal solver and auditor")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the configured solves and audits")
    r.add_argument("config")
    r.add_argument("--advisory", action="store_true", help="permit s > 1/2 (results are advisory)")
    r.set_defaults(func=cmd_run)
    e = sub.add_parser("export-matrix", help="write an operator in MatrixMarket format")
    e.add_argument("config")
    e.add_argument("--which", choices=("loc", "frac"), required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--advisory", action="store_true")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MixlapError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
