import cmath
import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import special

from aspsim.specfun import (
    QuadratureRule,
    integrate,
    integrate_singular,
    inv_reg_inc_beta,
    jacobi_rule,
    kummer_m,
    log_beta,
    log_gamma,
    reg_inc_beta,
)
from aspsim.util import DomainError, NumericError


class TestSpecfun(unittest.TestCase):
    def test_log_gamma(self):
        self.assertAlmostEqual(log_gamma(5.0), math.log(24.0), places=12)
        self.assertAlmostEqual(log_beta(2.0, 3.0), math.log(1.0 / 12.0), places=12)
        with self.assertRaises(DomainError):
            log_gamma(0.0)
        with self.assertRaises(DomainError):
            log_gamma(-1.5)

    def test_kummer_closed_forms(self):
        for z in (-20.0, -1.0, 0.0, 0.5, 10.0):
            self.assertAlmostEqual(kummer_m(1.0, 1.0, z) / math.exp(z), 1.0, places=12)
        self.assertAlmostEqual(kummer_m(1.0, 2.0, 2.0), (math.exp(2.0) - 1.0) / 2.0, places=12)

    def test_kummer_against_scipy(self):
        for a, b, z in [(0.5, 1.5, 3.0), (2.0, 3.5, -12.0), (3.0, 0.7, 25.0)]:
            ref = special.hyp1f1(a, b, z)
            self.assertLess(abs(kummer_m(a, b, z) - ref), 1e-10 * max(1.0, abs(ref)))

    def test_kummer_complex(self):
        value = kummer_m(1.0, 1.0, 2.0j)
        self.assertIsInstance(value, complex)
        self.assertAlmostEqual(abs(value - complex(math.cos(2.0), math.sin(2.0))), 0.0, places=12)

    def test_kummer_imaginary_axis(self):
        for y in (50.0, 120.0, 400.0, -300.0):
            z = 1j * y
            exact = (cmath.exp(z) - 1.0) / z
            self.assertLess(abs(kummer_m(1.0, 2.0, z) - exact), 1e-10 * abs(exact), msg=str(y))
            exact = 2.0 * (cmath.exp(z) - 1.0 - z) / z**2
            self.assertLess(abs(kummer_m(1.0, 3.0, z) - exact), 1e-10 * abs(exact), msg=str(y))

    def test_kummer_euler_integral(self):
        a, b = 0.4, 1.3
        for z in (60j, -25j, 3.0 + 40j):
            parts = [
                sp_integrate.quad(
                    lambda u, f=f: f(cmath.exp(z * u)),
                    0.0,
                    1.0,
                    weight="alg",
                    wvar=(a - 1.0, b - a - 1.0),
                    epsabs=1e-14,
                    epsrel=1e-12,
                    limit=2000,
                )[0]
                for f in (lambda w: w.real, lambda w: w.imag)
            ]
            ref = complex(*parts) / special.beta(a, b - a)
            self.assertLess(abs(kummer_m(a, b, z) - ref), 1e-8 * abs(ref), msg=str(z))

    def test_kummer_cancellation_raises(self):
        with self.assertRaises(NumericError) as ctx:
            kummer_m(3.0, 0.7, 12j, rtol=1e-300)
        self.assertIn("loss", ctx.exception.diagnostics)
        self.assertIn("asymptotic_err", ctx.exception.diagnostics)

    def test_kummer_domain(self):
        with self.assertRaises(DomainError):
            kummer_m(1.0, -2.0, 1.0)
        with self.assertRaises(DomainError):
            kummer_m(1.0, 1.0, 800.0)

    def test_reg_inc_beta(self):
        self.assertAlmostEqual(reg_inc_beta(0.5, 2.0, 2.0), 0.5, places=14)
        self.assertEqual(reg_inc_beta(0.0, 2.0, 3.0), 0.0)
        self.assertEqual(reg_inc_beta(1.0, 2.0, 3.0), 1.0)
        with self.assertRaises(DomainError):
            reg_inc_beta(1.5, 2.0, 2.0)
        with self.assertRaises(DomainError):
            reg_inc_beta(0.5, 0.0, 2.0)

    @settings(max_examples=60, deadline=None)
    @given(
        p=st.floats(min_value=1e-6, max_value=1.0 - 1e-6),
        a=st.floats(min_value=0.1, max_value=20.0),
        b=st.floats(min_value=0.1, max_value=20.0),
    )
    def test_inv_reg_inc_beta(self, p, a, b):
        z = inv_reg_inc_beta(p, a, b)
        self.assertTrue(0.0 <= z <= 1.0)
        self.assertLess(abs(special.betainc(a, b, z) - p), 1e-9)

    def test_integrate(self):
        res = integrate(lambda x: math.exp(-x))
        self.assertAlmostEqual(res.value, 1.0, places=10)
        rule = QuadratureRule.gauss_legendre(order=10, panels=4)
        self.assertAlmostEqual(integrate(lambda x: x**2, rule, 0.0, 1.0).value, 1.0 / 3.0, places=13)
        self.assertEqual(integrate(lambda x: 1.0, a=2.0, b=2.0).value, 0.0)

    def test_integrate_reports_error(self):
        rule = QuadratureRule.gauss_legendre(order=4, panels=2)
        with self.assertRaises(NumericError) as ctx:
            integrate(lambda x: 1.0 / x, rule, 0.0, 1.0)
        self.assertIn("abserr", ctx.exception.diagnostics)

    def test_integrate_singular(self):
        self.assertAlmostEqual(integrate_singular(lambda x: 1.0, 0.0, 1.0, -0.5, 0.0).value, 2.0, places=10)
        # Beta(1/2, 1/2) normaliser
        self.assertAlmostEqual(integrate_singular(lambda x: 1.0, 0.0, 1.0, -0.5, -0.5).value, math.pi, places=10)
        with self.assertRaises(DomainError):
            integrate_singular(lambda x: 1.0, 0.0, 1.0, -1.0, 0.0)

    def test_jacobi_rule(self):
        for beta in (-0.5, 0.0, 1.7):
            nodes, weights = jacobi_rule(12, beta)
            self.assertTrue(np.all((nodes > 0.0) & (nodes < 1.0)))
            self.assertAlmostEqual(float(weights.sum()), 1.0 / (beta + 1.0), places=12)
            self.assertAlmostEqual(float(np.dot(weights, nodes**2)), 1.0 / (beta + 3.0), places=12)

    def test_quadrature_rule_validation(self):
        with self.assertRaises(DomainError):
            QuadratureRule((0.5, 0.2), (0.5, 0.5), kind="fixed-grid")
        with self.assertRaises(DomainError):
            QuadratureRule((0.5,), (1.0,), kind="simpson")


def run_test():
    unittest.main()


if __name__ == "__main__":
    run_test()
