"""Beta kernels, box differences and multivariate Bernstein polynomials.

Functions passed to this module take one positional argument per
coordinate, ``f(x1, ..., xd)``, and must broadcast over numpy arrays.
Wrap scalar-only callables with :func:`numpy.vectorize` first.
"""
from __future__ import annotations

import inspect
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import betaln, xlog1py, xlogy
from scipy.stats import binom

MONOTONE_TOL = -1e-12


@dataclass(frozen=True)
class GridSpec:
    """Per-axis grid sizes ``(n_1, ..., n_d)``."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 1:
            raise ValueError("grid needs at least one axis")
        if any(s < 1 for s in sizes):
            raise ValueError(f"grid sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def d(self) -> int:
        return len(self.sizes)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"10,10"`` style grid strings."""
        try:
            return cls(tuple(int(p) for p in text.split(",")))
        except ValueError as exc:
            raise ValueError(f"bad grid specification {text!r}: {exc}") from None

    def __iter__(self):
        return iter(self.sizes)

    def __len__(self):
        return len(self.sizes)


@dataclass(frozen=True)
class Hyperbox:
    """Half-open box ``(lower, upper]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(a) for a in self.lower)
        upper = tuple(float(b) for b in self.upper)
        if len(lower) != len(upper):
            raise ValueError("lower and upper corners differ in dimension")
        if any(not a < b for a, b in zip(lower, upper)):
            raise ValueError(f"need lower < upper on every axis: {lower} vs {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def d(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"beta parameters must be positive, got ({self.alpha}, {self.beta})")


@dataclass(frozen=True, eq=False)
class CoefficientTensor:
    """Dense array of cell coefficients, one entry per grid cell."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.sizes:
            raise ValueError(f"coefficient shape {values.shape} does not match grid {self.grid.sizes}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def beta_pdf(x, params: BetaParams):
    """Beta density with the ``0**0 == 1`` endpoint convention.

    Evaluated in log space so that large parameters (grids of ``10**4``
    levels) do not overflow. Negative exponents at an endpoint give ``inf``.
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("beta_pdf is defined on [0, 1]")
    a, b = params.alpha, params.beta
    with np.errstate(divide="ignore"):
        logp = xlogy(a - 1.0, x) + xlog1py(b - 1.0, -x) - betaln(a, b)
    out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def _beta_kernel_matrix(x: np.ndarray, n: int) -> np.ndarray:
    """Densities of Beta(i+1, n-i) for i = 0..n-1 at each x, shape (len(x), n)."""
    i = np.arange(n, dtype=float)
    a = i + 1.0
    b = n - i
    x = x[:, None]
    logp = xlogy(a - 1.0, x) + xlog1py(b - 1.0, -x) - betaln(a, b)
    return np.exp(logp)


def _arity(g: Callable) -> int | None:
    try:
        sig = inspect.signature(g)
    except (TypeError, ValueError):
        return None
    count = 0
    for p in sig.parameters.values():
        if p.kind == p.VAR_POSITIONAL:
            return None
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD) and p.default is p.empty:
            count += 1
    return count


def _check_arity(g: Callable, d: int):
    k = _arity(g)
    if k is not None and k != d:
        raise ValueError(f"function takes {k} coordinates but the domain has dimension {d}")


def delta_difference(g: Callable, box: Hyperbox) -> float:
    """Alternating-sign sum of ``g`` over the 2**d corners of ``box``.

    For a distribution function this is the probability of the box.
    """
    _check_arity(g, box.d)
    total = 0.0
    for eps in itertools.product((0, 1), repeat=box.d):
        corner = [a if e else b for e, a, b in zip(eps, box.lower, box.upper)]
        sign = -1.0 if sum(eps) % 2 else 1.0
        total += sign * float(g(*corner))
    return total


def _check_point(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"point has dimension {x.shape[-1]}, expected {d}")
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise ValueError("point lies outside the unit cube")
    return x


def _grid_values(f: Callable, sizes: Sequence[int]) -> np.ndarray:
    """f evaluated on the lattice {i_j / n_j : i_j = 0..n_j}, shape (n_1+1, ..., n_d+1)."""
    axes = [np.arange(n + 1) / n for n in sizes]
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = np.asarray(f(*mesh), dtype=float)
    return np.broadcast_to(vals, mesh[0].shape)


def bernstein_poly_eval(f: Callable, grid: GridSpec, x) -> float:
    """Multivariate Bernstein polynomial of ``f`` at the point ``x``."""
    _check_arity(f, grid.d)
    x = _check_point(x, grid.d)
    acc = _grid_values(f, grid.sizes)
    # contract the last axis first so the remaining axes keep their positions
    for j in reversed(range(grid.d)):
        n = grid.sizes[j]
        weights = binom.pmf(np.arange(n + 1), n, x[j])
        acc = acc @ weights
    return float(acc)


def delta_tensor(f: Callable, grid: GridSpec) -> CoefficientTensor:
    """Box differences of ``f`` over every cell of the grid."""
    _check_arity(f, grid.d)
    vals = _grid_values(f, grid.sizes)
    for axis in range(grid.d):
        vals = np.diff(vals, axis=axis)
    return CoefficientTensor(grid, vals)


def bernstein_density_eval(coeffs: CoefficientTensor, x):
    """Mixed partial derivative of the Bernstein polynomial, written as a
    combination of product beta densities weighted by ``coeffs``.

    ``x`` is one point (float result) or an ``(m, d)`` array (length-m result).
    """
    grid = coeffs.grid
    x = _check_point(x, grid.d)
    pts = np.atleast_2d(x)
    out = np.empty(len(pts))
    for k, pt in enumerate(pts):
        acc = np.asarray(coeffs.values)
        for j in reversed(range(grid.d)):
            acc = acc @ _beta_kernel_matrix(pt[j:j + 1], grid.sizes[j])[0]
        out[k] = acc
    return float(out[0]) if x.ndim == 1 else out


def is_d_monotone_on_grid(f: Callable, resolution: int, d: int | None = None):
    """Check non-negativity of ``f``'s box differences over a uniform grid.

    Returns ``(True, None)`` or ``(False, box)`` where ``box`` is the cell
    with the most negative difference.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if d is None:
        d = _arity(f)
        if d is None:
            raise ValueError("cannot infer dimension; pass d explicitly")
    grid = GridSpec((resolution,) * d)
    tensor = delta_tensor(f, grid).values
    worst = np.unravel_index(np.argmin(tensor), tensor.shape)
    if tensor[worst] >= MONOTONE_TOL:
        return True, None
    lower = tuple(i / resolution for i in worst)
    upper = tuple((i + 1) / resolution for i in worst)
    return False, Hyperbox(lower, upper)
