import csv
import json
import math
import os
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from aspsim import procs
from aspsim.copula import EmpiricalSample, empirical_joint_survival, ks_two_sample
from aspsim.dists import RngStream
from aspsim.genlaw import FiniteMixture, GammaLaw, PointMass, conditional_norm_law, log_big_psi
from aspsim.procs import (
    MAX_STEPS,
    MultiPath,
    ProcessSpec,
    TimeGrid,
    asp_transition_density,
    conditional_moments,
    gamma_bridge_increment_cf,
    grb_transition_density,
    measure_change_density,
    norm_transition_density,
    sample_asp_split,
    sample_gamma_bridge,
    sample_gamma_bridge_ratio,
    sample_grb,
    sample_increment_representation,
    sample_liouville_split,
    sample_reference_gamma,
    sample_transition_stepping,
    simulate,
    terminal_transition_density,
    terminal_transition_measure,
    terminal_transition_mixed,
    uniform_map,
    write_paths_csv,
    write_paths_json,
)
from aspsim.specfun import integrate_singular, log_beta
from aspsim.util import DomainError, OutOfSupportError, UnsupportedOperationError

TWO_POINT = FiniteMixture([0.8, 1.2], [0.5, 0.5])

# two-sample KS at the 0.1% level
KS_K = 1.949


def ks_ok(a, b):
    res = ks_two_sample(a, b)
    return res.statistic <= KS_K * math.sqrt((len(a) + len(b)) / (len(a) * len(b)))


def gamma_bridge_density(m, T_end, s, x, t, y):
    a, b = m * (t - s), m * (T_end - t)
    return math.exp(
        (a - 1.0) * math.log(y - x) + (b - 1.0) * math.log(1.0 - y) - log_beta(a, b) - (a + b - 1.0) * math.log(1.0 - x)
    )


class TestTypes(unittest.TestCase):
    def test_ProcessSpec(self):
        spec = ProcessSpec.asp(3, PointMass(1.0))
        self.assertEqual(spec.dim, 3)
        self.assertEqual(spec.total_activity, 3.0)
        self.assertEqual(ProcessSpec.from_dict(spec.to_dict()), spec)
        liou = ProcessSpec.liouville((2.0, 0.5), TWO_POINT)
        self.assertEqual(liou.total_activity, 2.5)
        self.assertEqual(ProcessSpec.from_dict(liou.to_dict()), liou)
        with self.assertRaises(DomainError):
            ProcessSpec.asp(1, PointMass(1.0))
        with self.assertRaises(DomainError):
            ProcessSpec("asp", (1.0, 2.0), PointMass(1.0))
        with self.assertRaises(DomainError):
            ProcessSpec.liouville((1.0, -1.0), PointMass(1.0))

    def test_TimeGrid(self):
        grid = TimeGrid.uniform(4)
        self.assertEqual(grid.times, (0.0, 0.25, 0.5, 0.75, 1.0))
        self.assertEqual(grid.index(0.5), 2)
        self.assertEqual(TimeGrid.uniform(2, start=0.5).times, (0.5, 0.75, 1.0))
        with self.assertRaises(DomainError):
            grid.index(0.3)
        with self.assertRaises(DomainError):
            TimeGrid((0.0, 0.5, 0.9))
        with self.assertRaises(DomainError):
            TimeGrid((0.0, 0.5, 0.5, 1.0))
        with self.assertRaises(DomainError):
            TimeGrid.uniform(MAX_STEPS + 1)

    def test_MultiPath(self):
        grid = TimeGrid.uniform(2)
        paths = MultiPath(grid, np.array([[[0.0, 0.0], [0.1, 0.2], [0.3, 0.4]]]))
        np.testing.assert_allclose(paths.norm, [[0.0, 0.3, 0.7]])
        np.testing.assert_allclose(paths.at(1.0), [[0.3, 0.4]])
        both = MultiPath.concat([paths, paths])
        self.assertEqual(both.n_paths, 2)
        with self.assertRaises(DomainError):
            MultiPath(grid, np.zeros((1, 2, 2)))


class TestBridges(unittest.TestCase):
    def test_gamma_bridge_endpoints(self):
        out = sample_gamma_bridge(1.0, 1.0, TimeGrid.uniform(8), RngStream(1), 500)
        self.assertTrue(np.all(out[:, 0] == 0.0))
        self.assertTrue(np.all(out[:, -1] == 1.0))
        self.assertTrue(np.all(np.diff(out, axis=1) >= 0.0))
        single = sample_gamma_bridge(2.0, 3.0, np.array([0.0, 1.0, 3.0]), RngStream(1))
        self.assertEqual(single.shape, (3,))

    def test_gamma_bridge_beta_marginal(self):
        N = 20_000
        out = sample_gamma_bridge(1.0, 1.0, TimeGrid.uniform(4), RngStream(2), N)
        sigma = math.sqrt(0.25 * 0.75 / 2.0 / N)
        self.assertLess(abs(out[:, 1].mean() - 0.25), 4.0 * sigma)

    def test_bridge_constructions_agree(self):
        N = 4000
        grid = TimeGrid.uniform(4)
        seq = sample_gamma_bridge(1.5, 2.0, grid, RngStream(3), N)
        ratio = sample_gamma_bridge_ratio(1.5, 2.0, grid, RngStream(4), N)
        self.assertTrue(np.all(ratio[:, -1] == 1.0))
        for k in (1, 2, 3):
            self.assertTrue(ks_ok(seq[:, k], ratio[:, k]), k)

    def test_bridge_increments_are_dirichlet(self):
        N = 20_000
        out = sample_gamma_bridge(2.0, 1.0, TimeGrid((0.0, 0.2, 0.5, 1.0)), RngStream(5), N)
        inc = np.diff(out, axis=1)
        alpha = 2.0 * np.array([0.2, 0.3, 0.5])
        mean = alpha / alpha.sum()
        var = mean * (1.0 - mean) / (alpha.sum() + 1.0)
        for i in range(3):
            self.assertLess(abs(inc[:, i].mean() - mean[i]), 4.0 * math.sqrt(var[i] / N))

    def test_grb(self):
        out = sample_grb(PointMass(2.5), 1.0, 1.0, TimeGrid.uniform(4), RngStream(6), 10)
        np.testing.assert_array_equal(out[:, -1], 2.5)
        N = 20_000
        law = GammaLaw(2.0, 1.5)
        grb = sample_grb(law, 1.0, 2.0, TimeGrid.uniform(4), RngStream(7), N)
        # a gamma process with activity 1 and scale 1.5 on [0, 2]: mean 1.5 t, variance 2.25 t
        self.assertLess(abs(grb[:, 2].mean() - 1.5), 4.0 * math.sqrt(2.25 / N))

    def test_clamped_shapes(self):
        grid = TimeGrid.uniform(1000)
        procs._clamp_warned = False
        with self.assertLogs("aspsim.procs", level="WARNING"):
            out = sample_gamma_bridge(1e-4, 1.0, grid, RngStream(8), 4)
        self.assertTrue(np.all(np.isfinite(out)))
        self.assertTrue(np.all(out[:, -1] == 1.0))


class TestSamplers(unittest.TestCase):
    def test_paths_are_monotone(self):
        spec = ProcessSpec.asp(3, TWO_POINT)
        paths = sample_asp_split(spec, TimeGrid.uniform(5), RngStream(1), 200)
        self.assertTrue(np.all(paths.values[:, 0, :] == 0.0))
        self.assertTrue(np.all(np.diff(paths.values, axis=1) >= 0.0))
        terminal = paths.norm[:, -1]
        self.assertTrue(np.all(np.isclose(terminal, 0.8) | np.isclose(terminal, 1.2)))

    def test_point_mass_joint_survival(self):
        N = 4000
        paths = sample_asp_split(ProcessSpec.asp(2, PointMass(1.0)), TimeGrid.uniform(1), RngStream(2), N)
        est = empirical_joint_survival(EmpiricalSample(paths.values[:, -1, :]), [0.25, 0.25])
        self.assertLess(abs(est.value - 0.5), 4.0 * math.sqrt(0.25 / N))

    def test_gamma_law_independent_coordinates(self):
        N = 4000
        paths = sample_asp_split(ProcessSpec.asp(2, GammaLaw(2.0)), TimeGrid.uniform(4), RngStream(3), N)
        for i in range(2):
            self.assertLess(abs(paths.values[:, 2, i].mean() - 0.5), 4.0 * math.sqrt(0.5 / N))

    def test_liouville_split(self):
        N = 5000
        spec = ProcessSpec.liouville((2.0, 1.0), PointMass(1.0))
        paths = sample_liouville_split(spec, TimeGrid.uniform(2), RngStream(4), N)
        np.testing.assert_allclose(paths.norm[:, -1], 1.0, atol=1e-12)
        self.assertLess(abs(paths.values[:, -1, 0].mean() - 2.0 / 3.0), 4.0 * math.sqrt(1.0 / 18.0 / N))
        with self.assertRaises(DomainError):
            sample_liouville_split(ProcessSpec.asp(2, PointMass(1.0)), TimeGrid.uniform(2), RngStream(4))
        with self.assertRaises(DomainError):
            sample_asp_split(spec, TimeGrid.uniform(2), RngStream(4))

    def test_liouville_unit_activities_match_asp(self):
        N = 3000
        grid = TimeGrid.uniform(2)
        asp = sample_asp_split(ProcessSpec.asp(2, TWO_POINT), grid, RngStream(5), N)
        liou = sample_liouville_split(ProcessSpec.liouville((1.0, 1.0), TWO_POINT), grid, RngStream(6), N)
        self.assertTrue(ks_ok(asp.values[:, 1, 0], liou.values[:, 1, 0]))

    def test_stepping(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        grid = TimeGrid.uniform(4)
        paths = sample_transition_stepping(spec, grid, RngStream(7), 300)
        np.testing.assert_allclose(paths.norm[:, -1], 1.0, atol=1e-12)
        self.assertTrue(np.all(np.diff(paths.values, axis=1) >= 0.0))

    def test_stepping_matches_split(self):
        N = 2000
        spec = ProcessSpec.asp(2, TWO_POINT)
        grid = TimeGrid.uniform(4)
        split = sample_asp_split(spec, grid, RngStream(8), N)
        step = sample_transition_stepping(spec, grid, RngStream(9), N)
        for k in (1, 2, 4):
            self.assertTrue(ks_ok(split.values[:, k, 0], step.values[:, k, 0]), k)

    def test_increment_representation(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        inc = sample_increment_representation(spec, 0.0, [0.0, 0.0], TimeGrid.uniform(2), RngStream(10), 100)
        np.testing.assert_allclose(inc.norm[:, -1], 1.0, atol=1e-12)
        inc = sample_increment_representation(spec, 0.5, [0.2, 0.3], TimeGrid.uniform(2, start=0.5), RngStream(10), 100)
        np.testing.assert_allclose(inc.norm[:, -1], 0.5, atol=1e-12)
        self.assertTrue(np.all(inc.values[:, 0, :] == 0.0))
        with self.assertRaises(OutOfSupportError):
            sample_increment_representation(spec, 0.5, [0.6, 0.5], TimeGrid.uniform(2, start=0.5), RngStream(10))
        with self.assertRaises(DomainError):
            sample_increment_representation(spec, 0.5, [0.2, 0.3], TimeGrid.uniform(2), RngStream(10))

    def test_increment_representation_density_law(self):
        N = 4000
        # from the origin the terminal norm follows nu itself
        spec = ProcessSpec.asp(2, GammaLaw(2.0))
        inc = sample_increment_representation(spec, 0.0, [0.0, 0.0], TimeGrid.uniform(2), RngStream(13), N)
        res = stats.kstest(inc.norm[:, -1], stats.gamma(2.0).cdf)
        self.assertLess(res.statistic, KS_K / math.sqrt(N))
        # after an observed state, against the conditional terminal norm law
        spec = ProcessSpec.asp(3, GammaLaw(2.0))
        x = np.array([0.2, 0.1, 0.2])
        grid = TimeGrid.uniform(2, start=0.4)
        inc = sample_increment_representation(spec, 0.4, x, grid, RngStream(14), N)
        cond = conditional_norm_law(spec.law, 3.0, 0.4, 1.0, 0.5)
        table = np.linspace(0.5, 16.0, 400)
        cdf = np.array([cond.cdf(r) for r in table])
        res = stats.kstest(0.5 + inc.norm[:, -1], lambda r: np.interp(r, table, cdf))
        self.assertLess(res.statistic, KS_K / math.sqrt(N))

    def test_reference_gamma_change_of_measure(self):
        # E_Q[Psi_t(R_t) 1_A] = P[xi_t in A] for rectangles A
        N, t = 20000, 0.5
        spec = ProcessSpec.asp(3, PointMass(1.0))
        grid = TimeGrid.uniform(2)
        ref = sample_reference_gamma(spec, grid, RngStream(15), N).values[:, 1, :]
        asp = sample_asp_split(spec, grid, RngStream(16), N).values[:, 1, :]
        weight = np.exp(log_big_psi(spec.law, spec.total_activity, t, ref.sum(axis=1)))
        self.assertLess(abs(weight.mean() - 1.0), 4.0 * weight.std(ddof=1) / math.sqrt(N))
        for corner in ([0.2, 0.3, math.inf], [0.1, 0.5, 0.25], [math.inf, 0.15, math.inf]):
            q = weight * np.all(ref <= corner, axis=1)
            p = np.all(asp <= corner, axis=1).mean()
            sigma = math.sqrt(q.var(ddof=1) / N + p * (1.0 - p) / N)
            self.assertLess(abs(q.mean() - p), 4.0 * sigma, corner)

    def test_conditional_moments_by_simulation(self):
        N, s = 20000, 0.25
        spec = ProcessSpec.asp(2, TWO_POINT)
        x = np.array([0.1, 0.2])
        grid = TimeGrid.uniform(2, start=s)
        inc = sample_increment_representation(spec, s, x, grid, RngStream(17), N)
        for k, t in ((1, 0.625), (2, 1.0)):
            v = x + inc.values[:, k, :]
            mom = conditional_moments(spec, s, x, t)
            centred = v - v.mean(axis=0)
            for i in range(2):
                sd = v[:, i].std(ddof=1)
                self.assertLess(abs(v[:, i].mean() - mom.mean[i]), 4.0 * sd / math.sqrt(N), (t, i))
                sq = centred[:, i] ** 2
                self.assertLess(abs(sq.mean() - mom.var[i]), 4.0 * sq.std(ddof=1) / math.sqrt(N), (t, i))
            prod = centred[:, 0] * centred[:, 1]
            self.assertLess(abs(prod.mean() - mom.cov[0, 1]), 4.0 * prod.std(ddof=1) / math.sqrt(N), t)

    def test_reference_gamma(self):
        N = 4000
        paths = sample_reference_gamma(ProcessSpec.asp(2, PointMass(1.0)), TimeGrid.uniform(2), RngStream(11), N)
        self.assertLess(abs(paths.values[:, 1, 0].mean() - 0.5), 4.0 * math.sqrt(0.5 / N))

    def test_simulate_is_thread_independent(self):
        spec = ProcessSpec.asp(3, TWO_POINT)
        grid = TimeGrid.uniform(3)
        one = simulate(sample_asp_split, spec, grid, n_paths=300, seed=5, threads=1, block_size=64)
        four = simulate(sample_asp_split, spec, grid, n_paths=300, seed=5, threads=4, block_size=64)
        other = simulate(sample_asp_split, spec, grid, n_paths=300, seed=6, threads=1, block_size=64)
        self.assertEqual(one.n_paths, 300)
        np.testing.assert_array_equal(one.values, four.values)
        self.assertFalse(np.array_equal(one.values, other.values))
        with self.assertRaises(DomainError):
            simulate(sample_asp_split, spec, grid, n_paths=0, seed=5)


class TestDensities(unittest.TestCase):
    def test_grb_point_mass_is_gamma_bridge(self):
        for s, x, t, y in [(0.0, 0.0, 0.3, 0.2), (0.2, 0.1, 0.7, 0.5), (0.5, 0.6, 0.9, 0.95)]:
            expected = gamma_bridge_density(1.5, 1.0, s, x, t, y)
            got = grb_transition_density(PointMass(1.0), 1.5, 1.0, s, x, t, y)
            self.assertLess(abs(got / expected - 1.0), 1e-10)

    def test_grb_gamma_law_is_gamma_increment(self):
        for s, x, t, y in [(0.0, 0.0, 0.3, 0.2), (0.4, 0.5, 1.2, 1.7)]:
            expected = stats.gamma.pdf(y - x, 0.8 * (t - s))
            got = grb_transition_density(GammaLaw(1.6), 0.8, 2.0, s, x, t, y)
            self.assertLess(abs(got / expected - 1.0), 1e-10)

    def test_grb_terminal_atoms(self):
        self.assertAlmostEqual(grb_transition_density(TWO_POINT, 1.0, 1.0, 0.3, 0.9, 1.0, 1.2), 1.0)
        self.assertEqual(grb_transition_density(TWO_POINT, 1.0, 1.0, 0.3, 0.9, 1.0, 1.0), 0.0)
        self.assertEqual(grb_transition_density(TWO_POINT, 1.0, 1.0, 0.3, 0.5, 0.7, 0.4), 0.0)
        with self.assertRaises(OutOfSupportError):
            grb_transition_density(TWO_POINT, 1.0, 1.0, 0.3, 1.3, 0.7, 1.4)

    def test_norm_density_point_mass(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        for r in (0.1, 0.5, 0.9):
            self.assertAlmostEqual(norm_transition_density(spec, 0.0, 0.0, 0.5, r), 1.0, places=12)

    def test_asp_density_gamma_law(self):
        spec = ProcessSpec.asp(3, GammaLaw(3.0))
        x, y = np.array([0.1, 0.2, 0.3]), np.array([0.5, 0.4, 1.0])
        expected = float(np.prod(stats.gamma.pdf(y - x, 0.5)))
        self.assertAlmostEqual(asp_transition_density(spec, 0.2, x, 0.7, y) / expected, 1.0, places=10)
        z = np.array([0.9, 1.1, 0.6])
        expected = float(np.prod(stats.gamma.pdf(z - x, 0.8)))
        self.assertAlmostEqual(asp_transition_density(spec, 0.2, x, 1.0, z) / expected, 1.0, places=10)
        self.assertAlmostEqual(terminal_transition_density(spec, 0.2, x, z) / expected, 1.0, places=10)

    @settings(max_examples=30, deadline=None)
    @given(perm=st.permutations([0, 1, 2]))
    def test_asp_density_is_symmetric(self, perm):
        spec = ProcessSpec.asp(3, TWO_POINT)
        x, y = np.array([0.05, 0.1, 0.15]), np.array([0.2, 0.3, 0.25])
        base = asp_transition_density(spec, 0.2, x, 0.6, y)
        self.assertAlmostEqual(asp_transition_density(spec, 0.2, x[perm], 0.6, y[perm]), base, places=12)

    def test_asp_density_errors(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        with self.assertRaises(DomainError):
            asp_transition_density(spec, 0.2, [0.2, 0.1], 0.6, [0.1, 0.3])
        with self.assertRaises(OutOfSupportError):
            asp_transition_density(spec, 0.2, [0.1, 0.1], 0.6, [0.6, 0.5])
        with self.assertRaises(UnsupportedOperationError):
            terminal_transition_density(spec, 0.2, [0.1, 0.1], [0.3, 0.7])

    def test_asp_density_chapman_kolmogorov(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        s, t, u = 0.2, 0.5, 0.8
        x, z = np.array([0.1, 0.05]), np.array([0.3, 0.25])
        a, b = t - s, u - t

        def smooth(y1, y2):
            y = np.array([y1, y2])
            p = asp_transition_density(spec, s, x, t, y) * asp_transition_density(spec, t, y, u, z)
            return p / float(np.prod((y - x) ** (a - 1.0) * (z - y) ** (b - 1.0)))

        def inner(y1):
            return integrate_singular(lambda y2: smooth(y1, y2), x[1], z[1], a - 1.0, b - 1.0, tol=1e-9).value

        total = integrate_singular(inner, x[0], z[0], a - 1.0, b - 1.0, tol=1e-9).value
        self.assertLess(abs(total / asp_transition_density(spec, s, x, u, z) - 1.0), 1e-6)

    def test_asp_terminal_measure(self):
        spec = ProcessSpec.asp(3, PointMass(1.0))
        # uniform on the simplex: Dirichlet(1, 1, 1) has density 2
        self.assertAlmostEqual(asp_transition_density(spec, 0.0, np.zeros(3), 1.0, [0.2, 0.3, 0.5]), 2.0, places=12)
        self.assertEqual(asp_transition_density(spec, 0.0, np.zeros(3), 1.0, [0.2, 0.3, 0.4]), 0.0)
        # each slice of a two-point law carries its conditional atom weight
        spec = ProcessSpec.asp(2, TWO_POINT)
        s, x = 0.3, np.array([0.2, 0.1])
        measure = terminal_transition_measure(spec, s, x)
        cond = conditional_norm_law(TWO_POINT, 2.0, s, 1.0, 0.3)
        np.testing.assert_allclose(measure.weights, cond.atoms()[1], rtol=1e-12)
        a = 1.0 - s
        total = 0.0
        for norm, weight in zip(measure.norms, measure.weights):
            span = norm - 0.3

            def f(y1):
                y = np.array([y1, norm - y1])
                return asp_transition_density(spec, s, x, 1.0, y) / ((y1 - x[0]) * (y[1] - x[1])) ** (a - 1.0)

            mass = integrate_singular(f, x[0], x[0] + span, a - 1.0, a - 1.0).value
            self.assertAlmostEqual(mass, weight, places=8)
            total += mass
        self.assertAlmostEqual(total, 1.0, places=8)
        with self.assertRaises(UnsupportedOperationError):
            terminal_transition_measure(ProcessSpec.asp(2, GammaLaw(2.0)), 0.0, [0.0, 0.0])

    def test_terminal_mixed(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        # xi_1 is uniform on the segment, so its first coordinate has density 1
        self.assertAlmostEqual(terminal_transition_mixed(spec, 0.0, [0.0, 0.0], [0.3], (0.0, math.inf)), 1.0, places=12)
        gamma = ProcessSpec.asp(2, GammaLaw(2.0))
        got = terminal_transition_mixed(gamma, 0.5, [0.1, 0.2], [0.7], (0.0, math.inf))
        self.assertAlmostEqual(got / stats.gamma.pdf(0.6, 0.5), 1.0, places=8)

    def test_conditional_moments_point_mass(self):
        spec = ProcessSpec.asp(3, PointMass(2.0))
        x = np.array([0.1, 0.2, 0.2])
        mom = conditional_moments(spec, 0.25, x, 0.75)
        np.testing.assert_allclose(mom.mean, x + 1.0 / 3.0, rtol=1e-12)
        mom = conditional_moments(spec, 0.25, x, 1.0)
        np.testing.assert_allclose(mom.mean, x + 0.5, rtol=1e-12)
        np.testing.assert_allclose(np.diag(mom.cov), mom.var)

    def test_conditional_moments_gamma_law(self):
        spec = ProcessSpec.asp(2, GammaLaw(2.0))
        x = np.array([0.3, 0.4])
        mom = conditional_moments(spec, 0.2, x, 0.7)
        np.testing.assert_allclose(mom.mean, x + 0.5, atol=1e-6)
        np.testing.assert_allclose(mom.var, 0.5, atol=1e-6)
        self.assertAlmostEqual(mom.cov[0, 1], 0.0, places=6)

    def test_measure_change(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        self.assertEqual(measure_change_density(spec, 0.0, 0.7), 1.0)
        self.assertEqual(measure_change_density(ProcessSpec.asp(2, GammaLaw(2.0)), 0.6, 3.0), 1.0)
        with self.assertRaises(DomainError):
            measure_change_density(spec, 1.0, 0.5)
        with self.assertRaises(OutOfSupportError):
            measure_change_density(spec, 0.5, 1.5)

    def test_uniform_map(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        np.testing.assert_allclose(uniform_map(spec, 1.0, [0.3, 0.6]), [0.7, 0.4], atol=1e-14)
        np.testing.assert_allclose(uniform_map(spec, 0.5, [0.0, 0.0]), [1.0, 1.0])
        gamma = ProcessSpec.asp(2, GammaLaw(2.0))
        np.testing.assert_allclose(uniform_map(gamma, 1.0, [0.5, 1.5]), np.exp([-0.5, -1.5]), atol=1e-8)
        with self.assertRaises(DomainError):
            uniform_map(spec, 0.0, [0.1, 0.2])

    def test_uniform_map_is_uniform(self):
        N = 3000
        spec = ProcessSpec.asp(3, PointMass(1.0))
        paths = sample_asp_split(spec, TimeGrid.uniform(2), RngStream(12), N)
        u = uniform_map(spec, 0.5, paths.values[:, 1, :])
        res = stats.kstest(u[:, 0], "uniform")
        self.assertLessEqual(res.statistic, 1.949 / math.sqrt(N))

    def test_increment_cf(self):
        self.assertEqual(gamma_bridge_increment_cf(2.0, 1.5, 0.25, 0.2, 1.0, 0.0), 1.0)
        # increment is (1 - x) B with B ~ Beta(1.5, 1)
        lam, scale = 3.0, 0.8
        norm = math.exp(log_beta(1.5, 1.0))
        re = integrate_singular(lambda b: math.cos(lam * scale * b), 0.0, 1.0, 0.5, 0.0).value / norm
        im = integrate_singular(lambda b: math.sin(lam * scale * b), 0.0, 1.0, 0.5, 0.0).value / norm
        cf = gamma_bridge_increment_cf(2.0, 1.5, 0.25, 0.2, 1.0, lam)
        self.assertAlmostEqual(cf.real, re, places=10)
        self.assertAlmostEqual(cf.imag, im, places=10)


class TestWriters(unittest.TestCase):
    def setUp(self):
        self.paths = sample_asp_split(ProcessSpec.asp(2, PointMass(1.0)), TimeGrid.uniform(4), RngStream(1), 3)

    def test_csv_long(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "paths.csv")
            self.assertEqual(write_paths_csv(self.paths, target), [target])
            with open(target) as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["path_id", "t", "xi_1", "xi_2", "R"])
        self.assertEqual(len(rows), 1 + 3 * 5)
        self.assertAlmostEqual(float(rows[5][-1]), 1.0, places=12)

    def test_csv_wide(self):
        with tempfile.TemporaryDirectory() as tmp:
            written = write_paths_csv(self.paths, os.path.join(tmp, "out"), layout="wide")
            self.assertEqual([os.path.basename(w) for w in written], ["path_000000.csv", "path_000001.csv", "path_000002.csv"])
            with open(written[0]) as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["t", "xi_1", "xi_2", "R"])
        self.assertEqual(len(rows), 6)

    def test_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "paths.json")
            write_paths_json(self.paths, target)
            with open(target) as f:
                doc = json.load(f)
        self.assertEqual(len(doc["paths"]), 3)
        self.assertEqual(doc["grid"], [0.0, 0.25, 0.5, 0.75, 1.0])


def run_test():
    unittest.main()


if __name__ == "__main__":
    run_test()
