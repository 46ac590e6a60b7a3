"""Rank tables, skeleton files, portfolio configs and tabular outputs.

Skeleton files are JSON with integer counts over an integer denominator.
All writers format deterministically (``repr`` floats, plain integers), so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import logging
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .bernstein_math import GridSpec
from .copula_models import BernsteinCopula, GaussianCopulaModel, ReferenceCopula, SampleBatch, fit_gaussian
from .risk_engine import Histogram, MarginalModel, PortfolioSpec, RiskReport
from .skeleton import (
    DiscreteSkeleton,
    RankMatrix,
    adaptive_pipeline,
    check_admissible,
    empirical_skeleton,
    ranks_from_data,
)

log = logging.getLogger(__name__)

SKELETON_FORMAT = "copula-forge-skeleton"
BUILTIN_PREFIX = "builtin:"
BUILTINS = {
    "windstorm_flood": "windstorm_flood_ranks.csv",
    "windstorm_flood_10x10": "windstorm_flood_10x10.json",
    "windstorm_flood_10x10_masses": "windstorm_flood_10x10_masses.csv",
    "windstorm_flood_lsq_10x10": "windstorm_flood_lsq_10x10.json",
    "windstorm_flood_lsq_10x10_masses": "windstorm_flood_lsq_10x10_masses.csv",
    "toy5": "toy5_ranks.csv",
    "toy5_3x4": "toy5_3x4.json",
    "default_portfolio": "default_portfolio.json",
    "comparison": "comparison.json",
}


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def data_path(name: str) -> Path:
    """Path of a bundled fixture, by short name (``"windstorm_flood"``) or file name."""
    fname = BUILTINS.get(name, name)
    path = Path(str(resources.files("copula_forge") / "data" / fname))
    if not path.exists():
        raise FileNotFoundError(f"no bundled fixture {name!r}")
    return path


def resolve(path, base: Path | None = None) -> Path:
    """Expand ``builtin:`` names; make relative paths relative to ``base``."""
    text = str(path)
    if text.startswith(BUILTIN_PREFIX):
        return data_path(text[len(BUILTIN_PREFIX):])
    p = Path(text)
    if base is not None and not p.is_absolute():
        p = base / p
    return p


def _fmt(x: float) -> str:
    return repr(float(x))


def load_ranks(path, mode: str = "ranks") -> RankMatrix:
    """Read a comma-separated table with a header of component names.

    ``mode="ranks"`` expects integer ranks with every column a permutation
    of 1..n; ``mode="raw"`` ranks real-valued observations per column.
    """
    if mode not in ("ranks", "raw"):
        raise ValueError("mode must be 'ranks' or 'raw'")
    path = resolve(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if len(rows) < 2:
        raise FormatError(f"{path}: empty rank table")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    d = len(header)
    table = []
    for lineno, row in enumerate(body, start=2):
        if len(row) != d:
            raise FormatError(f"{path}: row {lineno} has {len(row)} fields, expected {d}")
        try:
            table.append([int(v) if mode == "ranks" else float(v) for v in row])
        except ValueError:
            raise FormatError(f"{path}: row {lineno} has a non-numeric entry: {row}") from None
    data = np.array(table).T
    if mode == "raw":
        return ranks_from_data(data)
    n = data.shape[1]
    for name, col in zip(header, data):
        values, counts = np.unique(col, return_counts=True)
        if np.any(counts > 1):
            raise FormatError(f"{path}: column {name!r} repeats rank {int(values[counts > 1][0])}")
        if col.min() < 1 or col.max() > n:
            raise FormatError(f"{path}: column {name!r} has ranks outside 1..{n}")
    return RankMatrix(data)


def skeleton_to_text(sk: DiscreteSkeleton) -> str:
    lines = [
        "{",
        f'  "format": "{SKELETON_FORMAT}",',
        f'  "d": {sk.d},',
        f'  "grid": {json.dumps(list(sk.grid.sizes))},',
        f'  "denominator": {sk.denominator},',
        f'  "rounded": {json.dumps(sk.rounded)},',
    ]
    if sk.provenance:
        lines.append(f'  "provenance": {json.dumps(sk.provenance, sort_keys=True)},')
    pts = [f"    [{json.dumps([int(v) for v in p])}, {int(c)}]" for p, c in zip(sk.points, sk.counts)]
    lines.append('  "points": [')
    lines.append(",\n".join(pts))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def skeleton_from_text(text: str, source: str = "<string>") -> DiscreteSkeleton:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: not valid JSON: {exc}") from None
    if doc.get("format") != SKELETON_FORMAT:
        raise FormatError(f"{source}: not a skeleton file (format={doc.get('format')!r})")
    try:
        grid = GridSpec(tuple(doc["grid"]))
        if doc.get("d", grid.d) != grid.d:
            raise FormatError(f"{source}: d={doc['d']} does not match grid {grid.sizes}")
        points = [p[0] for p in doc["points"]]
        counts = [p[1] for p in doc["points"]]
        if any(len(p) != grid.d for p in points):
            raise FormatError(f"{source}: point dimension differs from grid dimension {grid.d}")
        sk = DiscreteSkeleton(
            grid,
            np.array(points, dtype=np.int64).reshape(-1, grid.d),
            counts,
            int(doc["denominator"]),
            rounded=bool(doc.get("rounded", False)),
            provenance=dict(doc.get("provenance", {})),
        )
    except FormatError:
        raise
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"{source}: missing or malformed field: {exc}") from None
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    return sk


def save_skeleton(sk: DiscreteSkeleton, path) -> Path:
    path = Path(path)
    path.write_text(skeleton_to_text(sk))
    return path


def load_skeleton(path) -> DiscreteSkeleton:
    """Read a skeleton file; an inadmissible skeleton is logged, not refused."""
    path = resolve(path)
    sk = skeleton_from_text(path.read_text(), str(path))
    report = check_admissible(sk)
    if not report.ok:
        level = logging.INFO if sk.rounded else logging.WARNING
        log.log(level, "%s: marginals deviate from uniform by up to %.2e%s", path,
                report.max_abs_deviation, " (rounded skeleton)" if sk.rounded else "")
    return sk


def load_mass_table(path) -> dict[tuple[int, int], float]:
    """Read a printed 2-d mass table (rows ``j``, columns ``i0..``) as {(i, j): mass}."""
    path = resolve(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    out = {}
    for row in body:
        j = int(row[0])
        for col, val in zip(header[1:], row[1:]):
            out[(int(col.lstrip("i")), j)] = float(val)
    return out


def _write_rows(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return path


def density_grid(copula, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Interior grid points ``(k + 0.5) / resolution`` (row-major) and densities."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axis = (np.arange(resolution) + 0.5) / resolution
    mesh = np.meshgrid(*([axis] * copula.d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return pts, np.atleast_1d(copula.pdf(pts))


def write_density_grid(copula, resolution: int, path) -> Path:
    pts, vals = density_grid(copula, resolution)
    header = [f"u_{j + 1}" for j in range(copula.d)] + ["value"]
    return _write_rows(path, header, ([_fmt(x) for x in p] + [_fmt(v)] for p, v in zip(pts, vals)))


def write_samples(batch: SampleBatch, path) -> Path:
    header = [f"u_{j + 1}" for j in range(batch.d)]
    return _write_rows(path, header, ([_fmt(x) for x in row] for row in batch.values))


def write_histogram(hist: Histogram, path) -> Path:
    rows = (
        [_fmt(lo), _fmt(hi), str(int(c))]
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)
    )
    return _write_rows(path, ["bin_left", "bin_right", "count"], rows)


def write_report(report: RiskReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return path


# ---- portfolio configuration -------------------------------------------------

def build_copula(entry: dict, base: Path | None = None):
    """Construct a copula from a config entry (see README for the schema)."""
    entry = dict(entry)
    kind = entry.pop("kind", None)
    label = entry.pop("label", None)
    if kind in ("bernstein", "empirical"):
        if "skeleton" in entry:
            sk = load_skeleton(resolve(entry["skeleton"], base))
        elif "ranks" in entry:
            ranks = load_ranks(resolve(entry["ranks"], base), entry.get("mode", "ranks"))
            if kind == "empirical" or "grid" not in entry:
                sk = empirical_skeleton(ranks)
            else:
                M = entry.get("multiplier", "auto")
                sk = adaptive_pipeline(ranks, GridSpec(tuple(entry["grid"])), None if M == "auto" else int(M))
        else:
            raise FormatError(f"{kind} copula needs 'skeleton' or 'ranks'")
        return BernsteinCopula(sk, label=label)
    if kind == "gaussian":
        if "correlation" in entry:
            model = GaussianCopulaModel(entry["correlation"])
        elif "rho" in entry:
            d = int(entry.get("d", 2))
            rho = float(entry["rho"])
            corr = np.full((d, d), rho)
            np.fill_diagonal(corr, 1.0)
            model = GaussianCopulaModel(corr)
        elif "ranks" in entry:
            model = fit_gaussian(load_ranks(resolve(entry["ranks"], base), entry.get("mode", "ranks")))
        else:
            raise FormatError("gaussian copula needs 'correlation', 'rho' or 'ranks'")
        model.label = label or "gaussian"
        return model
    if kind in ("independence", "comonotonic", "countermonotonic"):
        ref = ReferenceCopula(kind, int(entry.get("d", 2)))
        if label:
            ref.label = label
        return ref
    raise FormatError(f"unknown copula kind {kind!r}")


def _marginal(entry: dict) -> MarginalModel:
    entry = dict(entry)
    family = entry.pop("family", None)
    return MarginalModel(family, entry)


def load_portfolio_config(path) -> list[PortfolioSpec]:
    """Parse a portfolio config; a ``copulas`` list yields one spec per copula."""
    path = resolve(path)
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    base = Path(path).parent
    if "copulas" in doc:
        entries = doc["copulas"]
    elif "copula" in doc:
        entries = [doc["copula"]]
    else:
        raise FormatError(f"{path}: config needs 'copula' or 'copulas'")
    try:
        marginals = tuple(_marginal(m) for m in doc["marginals"])
    except KeyError:
        raise FormatError(f"{path}: config needs 'marginals'") from None
    common = {k: doc[k] for k in ("N", "seed", "alpha", "bins", "bootstrap") if k in doc}
    return [PortfolioSpec(build_copula(e, base), marginals, **common) for e in entries]
