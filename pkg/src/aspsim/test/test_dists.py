import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from aspsim.dists import (
    DirichletParams,
    RngStream,
    dirichlet_density,
    dirichlet_moments,
    gamma_density,
    liouville_density,
    liouville_moments,
    sample_beta,
    sample_dirichlet,
    sample_gamma,
    sample_l1_symmetric,
    sample_liouville_dist,
    sample_simplex_uniform,
)
from aspsim.genlaw import GammaLaw, PointMass
from aspsim.util import DomainError, UnsupportedOperationError


class TestDists(unittest.TestCase):
    def test_DirichletParams(self):
        p = DirichletParams((0.5, 1.0, 2.5))
        self.assertEqual(p.dim, 3)
        self.assertAlmostEqual(p.total, 4.0)
        with self.assertRaises(DomainError):
            DirichletParams((1.0,))
        with self.assertRaises(DomainError):
            DirichletParams((1.0, -0.5))

    def test_RngStream(self):
        a = RngStream(7, 3).generator.random(5)
        b = RngStream(7, 3).generator.random(5)
        c = RngStream(7, 4).generator.random(5)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        np.testing.assert_array_equal(RngStream(7, 3).spawn(4).generator.random(5), c)
        with self.assertRaises(DomainError):
            RngStream(-1)

    def test_gamma_density(self):
        for x in (0.1, 1.0, 3.0):
            self.assertAlmostEqual(gamma_density(1.0, 2.0, x), x * math.exp(-x), places=14)
        self.assertEqual(gamma_density(1.0, 2.0, -1.0), 0.0)

    def test_sample_gamma_and_beta(self):
        rng = RngStream(11)
        N = 40_000
        g = sample_gamma(2.5, 2.0, rng, N)
        self.assertLess(abs(g.mean() - 5.0), 4.0 * math.sqrt(2.5 * 4.0 / N))
        b = sample_beta(2.0, 3.0, rng, N)
        sd = math.sqrt(2.0 * 3.0 / (25.0 * 6.0) / N)
        self.assertLess(abs(b.mean() - 0.4), 4.0 * sd)

    def test_sample_dirichlet(self):
        params = DirichletParams((0.5, 1.0, 2.0))
        N = 40_000
        d = sample_dirichlet(params, RngStream(5), N)
        self.assertEqual(d.shape, (N, 3))
        np.testing.assert_allclose(d.sum(axis=1), 1.0, atol=1e-12)
        mean, cov = dirichlet_moments(params)
        for i in range(3):
            self.assertLess(abs(d[:, i].mean() - mean[i]), 4.0 * math.sqrt(cov[i, i] / N))

    def test_sample_dirichlet_tiny_shape(self):
        d = sample_dirichlet(DirichletParams((1e-3, 1e-3, 1.0)), RngStream(2), 1000)
        self.assertTrue(np.all(np.isfinite(d)))
        np.testing.assert_allclose(d.sum(axis=1), 1.0, atol=1e-12)

    def test_dirichlet_density(self):
        flat = DirichletParams((1.0, 1.0, 1.0))
        self.assertAlmostEqual(dirichlet_density(flat, [0.2, 0.3]), 2.0, places=12)
        self.assertAlmostEqual(dirichlet_density(DirichletParams((2.0, 2.0)), [0.5]), 1.5, places=12)
        with self.assertRaises(DomainError):
            dirichlet_density(flat, [0.7, 0.7])
        with self.assertRaises(DomainError):
            dirichlet_density(flat, [0.5])

    def test_dirichlet_moments(self):
        mean, cov = dirichlet_moments(DirichletParams((1.0, 1.0)))
        np.testing.assert_allclose(mean, [0.5, 0.5])
        self.assertAlmostEqual(cov[0, 0], 1.0 / 12.0)
        self.assertAlmostEqual(cov[0, 1], -1.0 / 12.0)

    def test_simplex_and_l1(self):
        u = sample_simplex_uniform(4, RngStream(1), 100)
        np.testing.assert_allclose(u.sum(axis=1), 1.0, atol=1e-12)
        x = sample_l1_symmetric(PointMass(2.0), 3, RngStream(1), 100)
        np.testing.assert_allclose(x.sum(axis=1), 2.0, atol=1e-12)
        with self.assertRaises(DomainError):
            sample_simplex_uniform(1, RngStream(1))

    def test_liouville_gamma_factorises(self):
        # R ~ Gamma(a_1 + a_2) makes the coordinates independent Gamma(a_i)
        params = DirichletParams((1.0, 2.0))
        law = GammaLaw(3.0)
        for x in ([0.5, 1.0], [2.0, 0.3]):
            expected = stats.gamma.pdf(x[0], 1.0) * stats.gamma.pdf(x[1], 2.0)
            self.assertAlmostEqual(liouville_density(law, params, x), expected, places=12)
        with self.assertRaises(UnsupportedOperationError):
            liouville_density(PointMass(1.0), params, [0.5, 0.5])
        # unit-exponential norm with flat Dirichlet part
        self.assertAlmostEqual(
            liouville_density(GammaLaw(1.0), DirichletParams((1.0, 1.0)), [0.5, 0.5]), math.exp(-1.0), places=12
        )

    def test_liouville_moments(self):
        params = DirichletParams((1.0, 2.0))
        mean, var, cov = liouville_moments(3.0, 12.0, params)
        np.testing.assert_allclose(mean, [1.0, 2.0])
        np.testing.assert_allclose(var, [1.0, 2.0])
        self.assertAlmostEqual(cov[0, 1], 0.0, places=12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32), r=st.floats(min_value=0.1, max_value=10.0))
    def test_liouville_norm(self, seed, r):
        x = sample_liouville_dist(PointMass(r), DirichletParams((0.3, 1.0, 4.0)), RngStream(seed), 8)
        np.testing.assert_allclose(x.sum(axis=1), r, rtol=1e-12)
        self.assertTrue(np.all(x >= 0.0))


def run_test():
    unittest.main()


if __name__ == "__main__":
    run_test()
