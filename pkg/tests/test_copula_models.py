import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import ndtri

from copula_forge.bernstein_math import GridSpec, Hyperbox, bernstein_poly_eval, delta_difference, delta_tensor
from copula_forge.copula_models import (
    BernsteinCopula,
    GaussianCopulaModel,
    ReferenceCopula,
    fit_gaussian,
    sample_reference,
)
from copula_forge.parallel import THREADS_ENV
from copula_forge.skeleton import DiscreteSkeleton, RankMatrix, adaptive_pipeline, empirical_skeleton


def skeleton_cdf(sk):
    """Distribution function F(i/n) = P(U_1 < i_1, ..., U_d < i_d) of the rescaled skeleton."""
    pts, masses = sk.points, sk.masses
    sizes = np.array(sk.grid.sizes)

    def F(*xs):
        xs = np.broadcast_arrays(*xs)
        out = np.zeros(xs[0].shape)
        for p, m in zip(pts, masses):
            below = np.ones(xs[0].shape, dtype=bool)
            for j in range(len(sizes)):
                # V_j = (U_j + 1) / n_j <= x_j
                below &= (p[j] + 1) / sizes[j] <= xs[j] + 1e-12
            out += m * below
        return out

    return F


def independence_skeleton(sizes):
    pts = list(np.ndindex(*sizes))
    return DiscreteSkeleton(GridSpec(sizes), pts, [1] * len(pts), len(pts))


def random_admissible(rng, d, max_grid=12, n=30):
    ranks = RankMatrix([rng.permutation(n) + 1 for _ in range(d)])
    grid = GridSpec(tuple(int(v) for v in rng.integers(2, max_grid + 1, size=d)))
    return adaptive_pipeline(ranks, grid)


def gauss_legendre_integral(fn, d, lo=None, hi=None, nodes=16):
    lo = np.zeros(d) if lo is None else np.asarray(lo, float)
    hi = np.ones(d) if hi is None else np.asarray(hi, float)
    x, w = np.polynomial.legendre.leggauss(nodes)
    axes = [(lo[j] + hi[j]) / 2 + (hi[j] - lo[j]) / 2 * x for j in range(d)]
    weights = [(hi[j] - lo[j]) / 2 * w for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    wmesh = np.ones_like(mesh[0])
    for j, wm in enumerate(np.meshgrid(*weights, indexing="ij")):
        wmesh = wmesh * wm
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return float(np.sum(fn(pts) * wmesh.ravel()))


class TestBernsteinCdf:
    def test_corners(self, published_10x10):
        c = BernsteinCopula(published_10x10)
        assert c.cdf((1, 1)) == pytest.approx(1.0, abs=1e-15)
        assert c.cdf((0, 0)) == 0.0

    @pytest.mark.parametrize("x", [0, 0.25, 0.5, 0.75, 1])
    def test_uniform_margins(self, published_3x4, x):
        c = BernsteinCopula(published_3x4)
        assert c.cdf((x, 1)) == pytest.approx(x, abs=1e-14)
        assert c.cdf((1, x)) == pytest.approx(x, abs=1e-14)

    def test_quadrature_of_density(self, toy5_ranks):
        c = BernsteinCopula(empirical_skeleton(toy5_ranks))
        val, _ = integrate.dblquad(lambda y, x: c.pdf((x, y)), 0, 0.5, 0, 0.5, epsabs=1e-12, epsrel=1e-12)
        assert c.cdf((0.5, 0.5)) == pytest.approx(val, abs=1e-8)

    def test_matches_raw_bernstein_sum(self, published_3x4, rng):
        c = BernsteinCopula(published_3x4)
        F = skeleton_cdf(published_3x4)
        for u in rng.random((30, 2)):
            assert c.cdf(u) == pytest.approx(bernstein_poly_eval(F, published_3x4.grid, u), abs=1e-12)

    @pytest.mark.parametrize("d", [2, 3])
    def test_marginal_uniformity_random_skeletons(self, rng, d):
        for _ in range(5):
            c = BernsteinCopula(random_admissible(rng, d))
            for k in range(d):
                u = np.ones((21, d))
                u[:, k] = np.linspace(0, 1, 21)
                np.testing.assert_allclose(c.cdf(u), u[:, k], atol=1e-10)

    def test_cdf_pdf_consistency(self, rng):
        c = BernsteinCopula(random_admissible(rng, 2, max_grid=8))
        for _ in range(10):
            a = rng.random(2) * 0.7
            b = a + 0.05 + rng.random(2) * (0.95 - a - 0.05)
            box_mass = delta_difference(lambda x, y: c.cdf((x, y)), Hyperbox(a, b))
            assert box_mass == pytest.approx(gauss_legendre_integral(c.pdf, 2, a, b), abs=1e-6)

    def test_delta_of_skeleton_cdf_recovers_masses(self, published_10x10, published_3x4):
        for sk in (published_10x10, published_3x4):
            t = delta_tensor(skeleton_cdf(sk), sk.grid)
            np.testing.assert_allclose(t.values, sk.dense(), atol=1e-12)

    def test_outside(self, published_3x4):
        with pytest.raises(ValueError):
            BernsteinCopula(published_3x4).cdf((0.5, 1.5))


class TestBernsteinPdf:
    @pytest.mark.parametrize("sizes", [(2, 2), (3, 5), (4, 2, 3)])
    def test_independence_skeleton_is_flat(self, sizes, rng):
        c = BernsteinCopula(independence_skeleton(sizes))
        np.testing.assert_allclose(c.pdf(rng.random((20, len(sizes)))), 1.0, atol=1e-12)

    def test_hand_expansion(self, toy5_ranks):
        c = BernsteinCopula(empirical_skeleton(toy5_ranks))
        r1, r2 = toy5_ranks.ranks
        expected = sum(0.2 * stats.beta.pdf(0.1, a, 6 - a) * stats.beta.pdf(0.9, b, 6 - b) for a, b in zip(r1, r2))
        assert c.pdf((0.1, 0.9)) == pytest.approx(expected, rel=1e-12)

    def test_maximum_near_heaviest_kernel(self, published_10x10):
        c = BernsteinCopula(published_10x10)
        g = np.linspace(0, 1, 201)
        X, Y = np.meshgrid(g, g, indexing="ij")
        vals = np.array([c.pdf((x, y)) for x, y in zip(X.ravel(), Y.ravel())])
        peak = np.array([X.ravel()[vals.argmax()], Y.ravel()[vals.argmax()]])
        modes = published_10x10.points / 9.0
        nearest = published_10x10.points[np.argmin(np.linalg.norm(modes - peak, axis=1))]
        assert tuple(nearest) == (9, 7)
        assert published_10x10.counts.max() == 12
        assert 0.9 <= peak[0] <= 1.0

    @pytest.mark.parametrize("d,max_grid", [(1, 12), (2, 12), (3, 6)])
    def test_normalization(self, rng, d, max_grid):
        for _ in range(3):
            c = BernsteinCopula(random_admissible(rng, d, max_grid))
            assert gauss_legendre_integral(c.pdf, d) == pytest.approx(1.0, abs=1e-8)

    def test_rejects_inadmissible(self):
        sk = DiscreteSkeleton(GridSpec((2, 2)), [(0, 0), (1, 0)], [1, 1], 2)
        with pytest.raises(ValueError, match="admissible"):
            BernsteinCopula(sk)


class TestBernsteinSampler:
    def test_single_corner_point_means(self):
        sk = DiscreteSkeleton(GridSpec((2, 2, 2)), [(0, 0, 0)], [1], 1)
        # not admissible, so bypass the copula check through a rounded skeleton
        sk = DiscreteSkeleton(sk.grid, sk.points, sk.counts, 1, rounded=True)
        batch = BernsteinCopula(sk).sample(100_000, 5)
        se = np.sqrt(1 / 18 / 100_000)  # Beta(1, 2) variance 1/18
        assert np.all(np.abs(batch.values.mean(axis=0) - 1 / 3) < 3 * se)

    def test_trace_frequencies(self, toy5_ranks):
        batch = BernsteinCopula(empirical_skeleton(toy5_ranks)).sample(100_000, 11)
        freq = np.bincount(batch.component_trace, minlength=5) / batch.N
        se = np.sqrt(0.2 * 0.8 / batch.N)
        assert np.all(np.abs(freq - 0.2) < 3 * se)

    def test_margins_uniform(self, windstorm_ranks):
        batch = BernsteinCopula(empirical_skeleton(windstorm_ranks)).sample(100_000, 42)
        for j in range(2):
            assert stats.kstest(batch.values[:, j], "uniform").pvalue > 0.01

    def test_trace_chi_square(self, published_10x10):
        batch = BernsteinCopula(published_10x10).sample(100_000, 42)
        observed = np.bincount(batch.component_trace, minlength=len(published_10x10.points))
        expected = published_10x10.masses * batch.N
        stat = np.sum((observed - expected) ** 2 / expected)
        assert stat < stats.chi2.ppf(0.999, len(expected) - 1)

    def test_component_draws_follow_kernels(self, published_3x4):
        c = BernsteinCopula(published_3x4)
        batch = c.sample(50_000, 9)
        pts = published_3x4.points
        for k in (0, 2):
            vals = batch.values[batch.component_trace == k, 0]
            a, b = pts[k, 0] + 1, 3 - pts[k, 0]
            assert stats.kstest(vals, "beta", args=(a, b)).pvalue > 0.001

    def test_deterministic_and_thread_independent(self, published_10x10, monkeypatch):
        c = BernsteinCopula(published_10x10)
        monkeypatch.setenv(THREADS_ENV, "1")
        a = c.sample(200_000, 123)
        monkeypatch.setenv(THREADS_ENV, "4")
        b = c.sample(200_000, 123)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.component_trace, b.component_trace)
        assert not np.array_equal(c.sample(1000, 124).values, a.values[:1000])

    def test_values_in_cube(self, published_3x4):
        v = BernsteinCopula(published_3x4).sample(10_000, 1).values
        assert np.all((v >= 0) & (v <= 1))


class TestGaussian:
    def test_fit_concordant(self):
        r = RankMatrix([np.arange(1, 21), np.arange(1, 21)])
        m = fit_gaussian(r)
        assert m.correlation[0, 1] == pytest.approx(1 - 1e-9, abs=1e-12)

    def test_fit_reversed(self):
        r = RankMatrix([np.arange(1, 21), np.arange(20, 0, -1)])
        assert fit_gaussian(r).correlation[0, 1] == pytest.approx(-(1 - 1e-9), abs=1e-12)

    def test_fit_windstorm_matches_manual_scores(self, windstorm_ranks):
        n = windstorm_ranks.n
        a = [float(ndtri((r - 0.5) / n)) for r in windstorm_ranks.ranks[0]]
        b = [float(ndtri((r - 0.5) / n)) for r in windstorm_ranks.ranks[1]]
        ma, mb = sum(a) / n, sum(b) / n
        cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
        rho = cov / (sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b)) ** 0.5
        fitted = fit_gaussian(windstorm_ranks).correlation[0, 1]
        assert 0 < fitted < 1
        assert fitted == pytest.approx(rho, abs=1e-12)

    def test_fit_needs_three(self):
        with pytest.raises(ValueError):
            fit_gaussian(RankMatrix([[1, 2], [2, 1]]))

    def test_pdf_identity(self, rng):
        m = GaussianCopulaModel(np.eye(3))
        np.testing.assert_allclose(m.pdf(rng.uniform(0.01, 0.99, (10, 3))), 1.0, rtol=1e-12)

    def test_pdf_center(self):
        m = GaussianCopulaModel([[1, 0.5], [0.5, 1]])
        assert m.pdf((0.5, 0.5)) == pytest.approx(1 / np.sqrt(0.75), rel=1e-12)

    def test_pdf_symmetry(self):
        m = GaussianCopulaModel([[1, -0.3], [-0.3, 1]])
        assert m.pdf((0.2, 0.7)) == pytest.approx(m.pdf((0.7, 0.2)), rel=1e-13)

    def test_pdf_boundary_rejected(self):
        with pytest.raises(ValueError):
            GaussianCopulaModel(np.eye(2)).pdf((0.0, 0.5))

    def test_invalid_matrices(self):
        with pytest.raises(ValueError):
            GaussianCopulaModel([[1, 0.2], [0.3, 1]])
        with pytest.raises(ValueError):
            GaussianCopulaModel([[1, 1.5], [1.5, 1]])

    def test_sample_independent(self):
        v = GaussianCopulaModel(np.eye(2)).sample(100_000, 3).values
        rho = stats.spearmanr(v[:, 0], v[:, 1]).statistic
        assert abs(rho) < 3 / np.sqrt(v.shape[0] - 1)
        assert np.all((v > 0) & (v < 1))

    def test_sample_correlation(self):
        v = GaussianCopulaModel([[1, 0.9], [0.9, 1]]).sample(100_000, 4).values
        z = ndtri(v)
        assert np.corrcoef(z.T)[0, 1] == pytest.approx(0.9, abs=0.01)

    def test_sample_reproducible(self):
        m = GaussianCopulaModel([[1, 0.4], [0.4, 1]])
        assert np.array_equal(m.sample(1000, 8).values, m.sample(1000, 8).values)


class TestReference:
    def test_comonotonic(self):
        v = sample_reference("comonotonic", 3, 10_000, 1).values
        assert np.all(v[:, 0] == v[:, 1]) and np.all(v[:, 1] == v[:, 2])

    def test_countermonotonic(self):
        v = sample_reference("countermonotonic", 2, 10_000, 1).values
        assert np.all(v[:, 0] + v[:, 1] == 1.0)

    def test_countermonotonic_needs_two(self):
        with pytest.raises(ValueError):
            sample_reference("countermonotonic", 3, 10, 1)

    def test_independence_open_interval(self):
        v = sample_reference("independence", 4, 100_000, 2).values
        assert np.all((v > 0) & (v < 1))
        assert stats.kstest(v[:, 3], "uniform").pvalue > 0.001

    def test_independence_density(self):
        assert ReferenceCopula("independence", 2).pdf((0.3, 0.4)) == 1.0
        with pytest.raises(ValueError):
            ReferenceCopula("comonotonic", 2).pdf((0.3, 0.4))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ReferenceCopula("clayton", 2)
