"""Bernstein copulas built on skeletons, plus Gaussian and reference copulas."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, ndtr, ndtri
from scipy.stats import multivariate_normal

from .bernstein_math import _beta_kernel_matrix
from .parallel import check_seed, open_uniform, run_chunked
from .skeleton import DiscreteSkeleton, RankMatrix, check_admissible

PD_FLOOR = 1e-9
REFERENCE_KINDS = ("independence", "comonotonic", "countermonotonic")


@dataclass(frozen=True, eq=False)
class SampleBatch:
    values: np.ndarray
    seed: int
    component_trace: np.ndarray | None = None
    source: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("sample values must be a 2-d array (N, d)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _as_points(u, d: int, open_interval: bool = False) -> tuple[np.ndarray, bool]:
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != d:
        raise ValueError(f"points have dimension {u.shape[1]}, expected {d}")
    if not np.all(np.isfinite(u)):
        raise ValueError("points must be finite")
    if open_interval:
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("points must lie strictly inside the unit cube")
    elif np.any((u < 0) | (u > 1)):
        raise ValueError("points lie outside the unit cube")
    return u, single


class BernsteinCopula:
    """Bernstein copula of an admissible skeleton.

    The density is the mixture over skeleton points ``s`` with weight
    ``mass(s)`` of the product kernels ``Beta(s_j + 1, n_j - s_j)``; the CDF
    is the same mixture of products of regularized incomplete beta functions.
    """

    def __init__(self, skeleton: DiscreteSkeleton, label: str | None = None):
        if any(n < 2 for n in skeleton.grid.sizes):
            raise ValueError("Bernstein copulas need grid sizes >= 2")
        report = check_admissible(skeleton)
        if not report.ok and not skeleton.rounded:
            axis, level, mass = report.first_violation
            raise ValueError(f"skeleton is not admissible: axis {axis} level {level} has mass {mass}")
        self.skeleton = skeleton
        self.admissibility = report
        self.label = label or "bernstein " + "x".join(str(n) for n in skeleton.grid.sizes)
        self._weights = skeleton.counts / skeleton.denominator
        self._cum_counts = np.cumsum(skeleton.counts)
        sizes = np.array(skeleton.grid.sizes)
        self._alpha = skeleton.points + 1.0
        self._beta = sizes - skeleton.points.astype(float)

    @property
    def d(self) -> int:
        return self.skeleton.d

    def _mixture(self, u: np.ndarray, axis_matrix) -> np.ndarray:
        prod = np.ones((u.shape[0], len(self._weights)))
        for j, n in enumerate(self.skeleton.grid.sizes):
            prod *= axis_matrix(u[:, j], n)[:, self.skeleton.points[:, j]]
        return prod @ self._weights

    def pdf(self, u):
        u, single = _as_points(u, self.d)
        out = self._mixture(u, _beta_kernel_matrix)
        return float(out[0]) if single else out

    def cdf(self, u):
        u, single = _as_points(u, self.d)

        def incomplete(x, n):
            i = np.arange(n)
            return betainc(i + 1.0, n - i, x[:, None])

        out = np.clip(self._mixture(u, incomplete), 0.0, 1.0)
        return float(out[0]) if single else out

    def sample(self, N: int, seed: int) -> SampleBatch:
        D = self.skeleton.denominator

        def draw(rng, size):
            # pick a point with probability count/D using exact integer weights
            ticket = rng.integers(0, D, size=size)
            comp = np.searchsorted(self._cum_counts, ticket, side="right")
            v = rng.beta(self._alpha[comp], self._beta[comp])
            return v, comp

        values, trace = run_chunked(N, seed, draw)
        return SampleBatch(values, check_seed(seed), trace, self.label)


def bernstein_cdf(c: BernsteinCopula, u):
    return c.cdf(u)


def bernstein_pdf(c: BernsteinCopula, u):
    return c.pdf(u)


def sample_bernstein(c: BernsteinCopula, N: int, seed: int) -> SampleBatch:
    return c.sample(N, seed)


def repair_correlation(corr: np.ndarray, floor: float = PD_FLOOR) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and rescale back to a unit diagonal."""
    corr = (corr + corr.T) / 2
    w, v = np.linalg.eigh(corr)
    if w.min() >= floor:
        return corr
    fixed = (v * np.maximum(w, floor)) @ v.T
    scale = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(scale, scale)
    np.fill_diagonal(fixed, 1.0)
    return fixed


class GaussianCopulaModel:
    def __init__(self, correlation, label: str = "gaussian"):
        corr = np.array(correlation, dtype=float)
        if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
            raise ValueError("correlation must be a square matrix")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise ValueError("correlation matrix must have a unit diagonal")
        try:
            self._chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise ValueError("correlation matrix is not positive definite") from None
        corr.setflags(write=False)
        self.correlation = corr
        self.label = label

    @property
    def d(self) -> int:
        return self.correlation.shape[0]

    def pdf(self, u):
        u, single = _as_points(u, self.d, open_interval=True)
        z = ndtri(u)
        log_joint = multivariate_normal(mean=np.zeros(self.d), cov=self.correlation).logpdf(z)
        log_indep = -0.5 * np.sum(z**2, axis=1) - 0.5 * self.d * np.log(2 * np.pi)
        out = np.exp(np.atleast_1d(log_joint) - log_indep)
        return float(out[0]) if single else out

    def sample(self, N: int, seed: int) -> SampleBatch:
        top = np.nextafter(1.0, 0.0)

        def draw(rng, size):
            z = rng.standard_normal((size, self.d)) @ self._chol.T
            return (np.clip(ndtr(z), 5e-324, top),)

        (values,) = run_chunked(N, seed, draw)
        return SampleBatch(values, check_seed(seed), None, self.label)


def normal_scores(ranks: RankMatrix) -> np.ndarray:
    """van der Waerden scores ``Phi^{-1}((r - 0.5) / n)``, shape (d, n)."""
    return ndtri((ranks.ranks - 0.5) / ranks.n)


def fit_gaussian(ranks: RankMatrix) -> GaussianCopulaModel:
    """Pearson correlation of the normal scores, repaired to be positive definite."""
    if ranks.n < 3:
        raise ValueError("need at least three observations to fit a Gaussian copula")
    scores = normal_scores(ranks)
    # rows of a valid rank matrix are permutations, so scores never degenerate for n >= 2
    if np.any(np.std(scores, axis=1) == 0):
        raise ValueError("degenerate (constant) score column")
    corr = np.atleast_2d(np.corrcoef(scores))
    return GaussianCopulaModel(repair_correlation(corr))


def gaussian_pdf(m: GaussianCopulaModel, u):
    return m.pdf(u)


def sample_gaussian(m: GaussianCopulaModel, N: int, seed: int) -> SampleBatch:
    return m.sample(N, seed)


class ReferenceCopula:
    """Independence, comonotonic or (bivariate) countermonotonic copula."""

    def __init__(self, kind: str, d: int):
        if kind not in REFERENCE_KINDS:
            raise ValueError(f"unknown reference copula {kind!r}; choose from {REFERENCE_KINDS}")
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if kind == "countermonotonic" and d != 2:
            raise ValueError("the countermonotonic copula exists only for d = 2")
        self.kind = kind
        self._d = d
        self.label = kind

    @property
    def d(self) -> int:
        return self._d

    def pdf(self, u):
        if self.kind != "independence":
            raise ValueError(f"the {self.kind} copula has no density")
        u, single = _as_points(u, self.d)
        out = np.ones(u.shape[0])
        return 1.0 if single else out

    def sample(self, N: int, seed: int) -> SampleBatch:
        d = self.d
        kind = self.kind

        def draw(rng, size):
            if kind == "independence":
                return (open_uniform(rng, (size, d)),)
            u = open_uniform(rng, (size, 1))
            if kind == "comonotonic":
                return (np.repeat(u, d, axis=1),)
            return (np.hstack([u, 1.0 - u]),)

        (values,) = run_chunked(N, seed, draw)
        return SampleBatch(values, check_seed(seed), None, self.label)


def sample_reference(kind: str, d: int, N: int, seed: int) -> SampleBatch:
    return ReferenceCopula(kind, d).sample(N, seed)
