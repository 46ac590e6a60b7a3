"""Command-line interface: ``copula-forge {fit,reduce,sample,density,var,compare}``.

Exit codes: 0 success, 2 input error, 3 domain error, 4 internal error.
Diagnostics go to stderr; data goes to stdout unless ``--output`` is set.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io_persistence as iop
from .bernstein_math import GridSpec
from .copula_models import BernsteinCopula, GaussianCopulaModel, ReferenceCopula
from .risk_engine import RiskReport, simulate_portfolio
from .skeleton import DivisibilityError, RankMatrix, adaptive_pipeline, check_admissible, empirical_skeleton

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_INTERNAL = 0, 2, 3, 4
DEFAULT_SEED = 42
COPULA_ALIASES = {
    "gaussian": "gaussian",
    "indep": "independence",
    "independence": "independence",
    "como": "comonotonic",
    "comonotonic": "comonotonic",
    "counter": "countermonotonic",
    "countermonotonic": "countermonotonic",
}


class InputError(Exception):
    pass


class DomainError(Exception):
    pass


def _err(msg: str):
    print(f"copula-forge: {msg}", file=sys.stderr)


def _positive_int(minimum: int):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {v}")
        return v

    return parse


def _grid(text):
    try:
        g = GridSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if any(s < 2 for s in g.sizes):
        raise argparse.ArgumentTypeError("grid sizes must be >= 2")
    return g


def _multiplier(text):
    if text == "auto":
        return None
    return _positive_int(1)(text)


def _existing(path: str | None) -> Path | None:
    if path is None:
        return None
    p = iop.resolve(path)
    if not p.exists():
        raise InputError(f"no such file: {path}")
    return p


def _emit(args, name: str, text: str):
    """Write ``text`` to ``--output/name`` or stdout."""
    if args.output is None:
        sys.stdout.write(text)
        return None
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    _err(f"wrote {path}")
    return path


def _load_ranks(args) -> RankMatrix:
    return iop.load_ranks(_existing(args.ranks), "raw" if args.raw else "ranks")


def cmd_fit(args) -> int:
    ranks = _load_ranks(args)
    sk = empirical_skeleton(ranks)
    _err(f"n={ranks.n} d={ranks.d} support={len(sk.points)}")
    _emit(args, "skeleton.json", iop.skeleton_to_text(sk))
    return EXIT_OK


def _ranks_from_skeleton(path: Path) -> RankMatrix:
    sk = iop.load_skeleton(path)
    n = sk.denominator
    if not (np.all(sk.counts == 1) and len(sk.points) == n and all(s == n for s in sk.grid.sizes)):
        raise DomainError("reduce needs an empirical skeleton (n unit-count points on an n^d grid)")
    order = np.argsort(sk.points[:, 0], kind="stable")
    return RankMatrix(sk.points[order].T + 1)


def cmd_reduce(args) -> int:
    ranks = _ranks_from_skeleton(_existing(args.skeleton)) if args.skeleton else _load_ranks(args)
    if args.grid.d != ranks.d:
        raise InputError(f"--grid has {args.grid.d} axes but the data has d={ranks.d}")
    sk = adaptive_pipeline(ranks, args.grid, args.multiplier)
    report = check_admissible(sk)
    _err(f"M={sk.provenance['multiplier']}")
    _err(f"support before={ranks.n} after={len(sk.points)}")
    _err("admissible: yes" if report.ok else f"admissible: NO ({report.first_violation})")
    _emit(args, "skeleton.json", iop.skeleton_to_text(sk))
    return EXIT_OK


def _sample_copula(args):
    if args.skeleton:
        return BernsteinCopula(iop.load_skeleton(_existing(args.skeleton)))
    kind = COPULA_ALIASES[args.copula]
    if kind == "gaussian":
        if args.rho is None:
            raise InputError("--copula gaussian needs --rho")
        if not -1 < args.rho < 1:
            raise DomainError("--rho must lie strictly between -1 and 1")
        corr = np.full((args.d, args.d), args.rho)
        np.fill_diagonal(corr, 1.0)
        try:
            return GaussianCopulaModel(corr)
        except ValueError as exc:
            raise DomainError(str(exc)) from None
    try:
        return ReferenceCopula(kind, args.d)
    except ValueError as exc:
        raise DomainError(str(exc)) from None


def cmd_sample(args) -> int:
    copula = _sample_copula(args)
    batch = copula.sample(args.n, args.seed if args.seed is not None else DEFAULT_SEED)
    buf = io.StringIO()
    buf.write(",".join(f"u_{j + 1}" for j in range(batch.d)) + "\n")
    for row in batch.values:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    _err(f"{batch.N} samples from {copula.label}, seed {batch.seed}")
    _emit(args, "samples.csv", buf.getvalue())
    return EXIT_OK


def cmd_density(args) -> int:
    sk = iop.load_skeleton(_existing(args.skeleton))
    copula = BernsteinCopula(sk)
    pts, vals = iop.density_grid(copula, args.resolution)
    buf = io.StringIO()
    buf.write(",".join([f"u_{j + 1}" for j in range(copula.d)] + ["value"]) + "\n")
    for p, v in zip(pts, vals):
        buf.write(",".join([repr(float(x)) for x in p] + [repr(float(v))]) + "\n")
    _emit(args, "density.csv", buf.getvalue())
    return EXIT_OK


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in label).strip("_") or "copula"


def _run_specs(args, path: Path) -> list[tuple[RiskReport, str | None]]:
    specs = iop.load_portfolio_config(path)
    if args.seed is not None:
        specs = [dataclasses.replace(s, seed=args.seed) for s in specs]
    out = []
    for spec in specs:
        report = simulate_portfolio(spec)
        hist_path = None
        if args.output is not None:
            Path(args.output).mkdir(parents=True, exist_ok=True)
            hist_path = str(iop.write_histogram(report.histogram, Path(args.output) / f"histogram_{_slug(spec.copula.label)}.csv"))
        out.append((report, hist_path))
    return out


def _report_dict(report: RiskReport, hist_path):
    doc = report.to_dict()
    doc["histogram_file"] = hist_path
    return doc


def _table(rows) -> str:
    lines = ["copula,var,tvar,var_bootstrap_se"]
    for report, _ in rows:
        lines.append(",".join([report.metadata["copula"], repr(report.var), repr(report.tvar), repr(report.var_se)]))
    return "\n".join(lines) + "\n"


def _summary(rows) -> str:
    width = max(len(r.metadata["copula"]) for r, _ in rows)
    alpha = rows[0][0].metadata["alpha"]
    lines = [f"{'copula':<{width}}  {'VaR_' + str(alpha):>14}  {'TVaR':>14}  {'SE(VaR)':>10}"]
    for r, _ in rows:
        flag = "  (low-resolution tail)" if r.tvar_low_resolution else ""
        lines.append(f"{r.metadata['copula']:<{width}}  {r.var:>14.4f}  {r.tvar:>14.4f}  {r.var_se:>10.4f}{flag}")
    return "\n".join(lines) + "\n"


def cmd_var(args) -> int:
    rows = _run_specs(args, _existing(args.config))
    if args.format == "csv":
        _emit(args, "var.csv", _table(rows))
    else:
        docs = [_report_dict(r, h) for r, h in rows]
        _emit(args, "report.json", json.dumps(docs if len(docs) > 1 else docs[0], indent=2) + "\n")
        _err(_summary(rows).rstrip())
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = []
    for cfg in args.configs:
        rows.extend(_run_specs(args, _existing(cfg)))
    if args.format == "report":
        _emit(args, "compare.txt", _summary(rows))
    else:
        _emit(args, "compare.csv", _table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand's defaults from clobbering flags given before it
    common.add_argument("--seed", type=_positive_int(0), default=argparse.SUPPRESS,
                        help=f"random seed (default {DEFAULT_SEED}, or the config's seed)")
    common.add_argument("--output", default=argparse.SUPPRESS, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "report"), default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="copula-forge", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="empirical skeleton from ranks")
    p.add_argument("--ranks", required=True)
    p.add_argument("--raw", action="store_true", help="input holds raw observations, not ranks")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reduce", parents=[common], help="adaptive skeleton on a smaller grid")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ranks")
    src.add_argument("--skeleton")
    p.add_argument("--raw", action="store_true")
    p.add_argument("--grid", type=_grid, required=True, help="comma-separated sizes, e.g. 10,10")
    p.add_argument("--multiplier", type=_multiplier, default=None, help="integer M or 'auto' (default)")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("sample", parents=[common], help="draw copula samples")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--skeleton")
    src.add_argument("--copula", choices=sorted(COPULA_ALIASES))
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--d", type=_positive_int(1), default=2, help="dimension for --copula (default 2)")
    p.add_argument("--n", type=_positive_int(1), required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("density", parents=[common], help="density on an interior grid")
    p.add_argument("--skeleton", required=True)
    p.add_argument("--resolution", type=_positive_int(2), required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("var", parents=[common], help="VaR/TVaR report from a portfolio config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_var)

    p = sub.add_parser("compare", parents=[common], help="combined VaR table over configs")
    p.add_argument("--configs", nargs="+", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("seed", None), ("output", None), ("format", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.format is None:
        args.format = "csv" if args.command == "compare" else "report"
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, IsADirectoryError, iop.FormatError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (DomainError, DivisibilityError, ValueError) as exc:
        _err(str(exc))
        return EXIT_DOMAIN
    except Exception as exc:  # pragma: no cover - last-resort guard
        _err(f"internal error: {exc!r}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
