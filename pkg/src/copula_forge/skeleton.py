"""Rank data, discrete skeletons, and the augmentation/reduction pipeline.

Skeleton masses are kept as integer counts over an integer denominator so
every marginal check is exact.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce as _fold

import numpy as np

from .bernstein_math import GridSpec


class TieWarning(UserWarning):
    """Raw data contained ties; ranks were assigned in index order."""


class DivisibilityError(ValueError):
    """A grid size does not divide ``n * M``."""

    def __init__(self, message: str, required_multiplier: int):
        super().__init__(message)
        self.required_multiplier = required_multiplier


def _frozen(a, dtype=np.int64) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_permutation_rows(ranks: np.ndarray, what: str):
    n = ranks.shape[1]
    expected = np.arange(1, n + 1)
    for i, row in enumerate(ranks):
        if not np.array_equal(np.sort(row), expected):
            values, counts = np.unique(row, return_counts=True)
            dup = values[counts > 1]
            detail = f"duplicate value {int(dup[0])}" if dup.size else "values outside 1..n"
            raise ValueError(f"{what} row {i} is not a permutation of 1..{n}: {detail}")


@dataclass(frozen=True, eq=False)
class RankMatrix:
    """Component-wise ranks, shape ``(d, n)``; row ``i`` is a permutation of 1..n."""

    ranks: np.ndarray
    ties: bool = False

    def __post_init__(self):
        ranks = _frozen(self.ranks)
        if ranks.ndim != 2 or ranks.shape[0] < 1:
            raise ValueError("ranks must be a 2-d array of shape (d, n)")
        _check_permutation_rows(ranks, "rank")
        object.__setattr__(self, "ranks", ranks)

    @property
    def d(self) -> int:
        return self.ranks.shape[0]

    @property
    def n(self) -> int:
        return self.ranks.shape[1]

    def __eq__(self, other):
        return isinstance(other, RankMatrix) and np.array_equal(self.ranks, other.ranks)


@dataclass(frozen=True, eq=False)
class PseudoRankMatrix:
    """Augmented ranks, shape ``(d, M*n)``."""

    pseudo_ranks: np.ndarray
    n: int
    multiplier: int

    def __post_init__(self):
        pr = _frozen(self.pseudo_ranks)
        if pr.shape[1] != self.n * self.multiplier:
            raise ValueError("pseudo-rank width must equal n * M")
        _check_permutation_rows(pr, "pseudo-rank")
        object.__setattr__(self, "pseudo_ranks", pr)

    @property
    def d(self) -> int:
        return self.pseudo_ranks.shape[0]


@dataclass(frozen=True, eq=False)
class DiscreteSkeleton:
    """Support points on a grid with masses ``counts / denominator``.

    ``points`` has shape ``(k, d)`` with 0-based level indices; rows are
    unique and sorted lexicographically. ``rounded`` marks skeletons read
    from decimal tables, whose marginals are only approximately uniform.
    """

    grid: GridSpec
    points: np.ndarray
    counts: np.ndarray
    denominator: int
    rounded: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.int64).reshape(-1, self.grid.d)
        counts = np.array(self.counts, dtype=np.int64).reshape(-1)
        if len(pts) != len(counts):
            raise ValueError("points and counts differ in length")
        if len(pts) == 0:
            raise ValueError("skeleton has no support points")
        if np.any(counts <= 0):
            raise ValueError("counts must be positive integers")
        if self.denominator <= 0 or int(counts.sum()) != self.denominator:
            raise ValueError(f"counts sum to {int(counts.sum())}, not the denominator {self.denominator}")
        sizes = np.array(self.grid.sizes)
        if np.any(pts < 0) or np.any(pts >= sizes):
            bad = pts[np.any((pts < 0) | (pts >= sizes), axis=1)][0]
            raise ValueError(f"point {tuple(int(v) for v in bad)} lies outside grid {self.grid.sizes}")
        order = np.lexsort(pts.T[::-1])
        pts, counts = pts[order], counts[order]
        if len(pts) > 1 and np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValueError("skeleton points must be unique")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "counts", _frozen(counts))
        object.__setattr__(self, "denominator", int(self.denominator))

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.denominator

    def mass_of(self, point) -> Fraction:
        hit = np.all(self.points == np.asarray(point), axis=1)
        if not hit.any():
            return Fraction(0)
        return Fraction(int(self.counts[hit][0]), self.denominator)

    def as_dict(self) -> dict[tuple[int, ...], Fraction]:
        return {
            tuple(int(v) for v in p): Fraction(int(c), self.denominator)
            for p, c in zip(self.points, self.counts)
        }

    def dense(self) -> np.ndarray:
        """Mass array of shape ``grid.sizes``."""
        out = np.zeros(self.grid.sizes)
        out[tuple(self.points.T)] = self.masses
        return out

    def __eq__(self, other):
        return (
            isinstance(other, DiscreteSkeleton)
            and self.grid == other.grid
            and self.as_dict() == other.as_dict()
        )


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    # marginal_counts[i][t] is the count mass on level t of axis i, over the denominator
    marginal_counts: tuple[tuple[int, ...], ...]
    denominator: int
    first_violation: tuple[int, int, Fraction] | None
    max_abs_deviation: float

    def marginal_masses(self, axis: int) -> list[Fraction]:
        return [Fraction(c, self.denominator) for c in self.marginal_counts[axis]]


def ranks_from_data(raw) -> RankMatrix:
    """Rank each row of a ``(d, n)`` array; ties go to the lower index first."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[None, :]
    if raw.ndim != 2:
        raise ValueError("raw data must have shape (d, n)")
    if raw.shape[1] < 2:
        raise ValueError("need at least two observations")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw data contains non-finite values")
    order = np.argsort(raw, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(raw.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, raw.shape[1] + 1)
    ties = any(np.unique(row).size < row.size for row in raw)
    if ties:
        warnings.warn("ties in raw data broken by observation index", TieWarning, stacklevel=2)
    return RankMatrix(ranks, ties=ties)


def empirical_skeleton(ranks: RankMatrix) -> DiscreteSkeleton:
    """Uniform mass 1/n on each observed rank vector (shifted to 0-based)."""
    grid = GridSpec((ranks.n,) * ranks.d)
    return DiscreteSkeleton(grid, ranks.ranks.T - 1, np.ones(ranks.n, dtype=np.int64), ranks.n)


def check_admissible(sk: DiscreteSkeleton) -> AdmissibilityReport:
    """Exact test that every axis marginal is discrete uniform."""
    marg = []
    first = None
    worst = 0.0
    D = sk.denominator
    for axis, n_i in enumerate(sk.grid.sizes):
        counts = np.bincount(sk.points[:, axis], weights=sk.counts, minlength=n_i).astype(np.int64)
        marg.append(tuple(int(c) for c in counts))
        for level, c in enumerate(counts):
            mass = Fraction(int(c), D)
            dev = abs(mass - Fraction(1, n_i))
            worst = max(worst, float(dev))
            if dev and first is None:
                first = (axis, level, mass)
    return AdmissibilityReport(first is None, tuple(marg), D, first, worst)


def choose_multiplier(n: int, grid: GridSpec) -> int:
    """Smallest ``M >= 1`` such that every grid size divides ``n * M``."""
    if n < 1:
        raise ValueError("n must be positive")
    # n_i | n*M  <=>  n_i / gcd(n_i, n) divides M
    return _fold(math.lcm, (s // math.gcd(s, n) for s in grid.sizes), 1)


def augment(ranks: RankMatrix, M: int, seed: int | None = None) -> PseudoRankMatrix:
    """Expand ranks 1..n to pseudo-ranks 1..M*n.

    Observation ``c`` (1-based) becomes the block of ``M`` pseudo-ranks
    ``r*M, r*M - 1, ..., r*M - M + 1`` in columns ``(c-1)*M + 1 .. c*M``.

    With ``seed`` given, the order of pseudo-ranks inside each block is
    shuffled independently per axis. Rows stay permutations, so a later
    reduction is still admissible, but its support generally differs from
    the unshuffled one.
    """
    if int(M) != M or M < 1:
        raise ValueError(f"multiplier must be a positive integer, got {M}")
    M = int(M)
    j = np.arange(1, M * ranks.n + 1)
    block = -(-j // M)  # ceil(j / M)
    pseudo = ranks.ranks[:, block - 1] * M + (block - 1) * M + 1 - j
    if seed is not None:
        rng = np.random.default_rng(seed)
        blocks = pseudo.reshape(ranks.d, ranks.n, M)
        pseudo = rng.permuted(blocks, axis=2).reshape(ranks.d, -1)
    return PseudoRankMatrix(pseudo, ranks.n, M)


def _require_divisible(n: int, M: int, grid: GridSpec):
    if any((n * M) % s for s in grid.sizes):
        need = choose_multiplier(n, grid)
        raise DivisibilityError(
            f"grid {grid.sizes} does not divide n*M = {n}*{M} = {n * M}; "
            f"smallest valid multiplier is M={need}",
            need,
        )


def reduce(pseudo: PseudoRankMatrix, grid: GridSpec) -> DiscreteSkeleton:
    """Rescale pseudo-ranks onto ``grid`` by ceiling and count multiplicities."""
    if grid.d != pseudo.d:
        raise ValueError(f"grid dimension {grid.d} != rank dimension {pseudo.d}")
    n, M = pseudo.n, pseudo.multiplier
    _require_divisible(n, M, grid)
    total = n * M
    sizes = np.array(grid.sizes, dtype=np.int64)[:, None]
    final = -(-(pseudo.pseudo_ranks * sizes) // total)  # ceil, integer arithmetic
    points, counts = np.unique(final.T - 1, axis=0, return_counts=True)
    return DiscreteSkeleton(grid, points, counts, total)


def adaptive_pipeline(
    ranks: RankMatrix, grid: GridSpec, M: int | None = None, seed: int | None = None
) -> DiscreteSkeleton:
    """Augment then reduce; picks the smallest valid multiplier when ``M`` is None."""
    if grid.d != ranks.d:
        raise ValueError(f"grid dimension {grid.d} != rank dimension {ranks.d}")
    if M is None:
        M = choose_multiplier(ranks.n, grid)
    _require_divisible(ranks.n, M, grid)
    sk = reduce(augment(ranks, M, seed=seed), grid)
    return DiscreteSkeleton(
        sk.grid, sk.points, sk.counts, sk.denominator, provenance={"multiplier": int(M)}
    )
