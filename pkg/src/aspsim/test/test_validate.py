import json
import os
import tempfile
import unittest

import numpy as np

from aspsim.genlaw import PointMass
from aspsim.procs import ProcessSpec
from aspsim.util import AspError, DomainError
from aspsim.validate import DEFAULT_TOLERANCES, SUITES, ValidationEngine, asp_density_mass_2d


class TestValidationEngine(unittest.TestCase):
    def setUp(self):
        self.engine = ValidationEngine(seed=1, scale=0.01)

    def test_suites(self):
        self.assertEqual(set(SUITES), set(DEFAULT_TOLERANCES))
        for name in SUITES:
            self.assertTrue(callable(getattr(self.engine, "suite_" + name)))

    def test_size(self):
        self.assertEqual(self.engine.size(100_000), 1000)
        self.assertEqual(self.engine.size(1000), 200)

    def test_deterministic_suites_pass(self):
        for result in self.engine.run(["williamson", "determinism", "normalization"]):
            self.assertIsNone(result.error)
            self.assertTrue(result.checks)
            self.assertTrue(result.passed, [c for c in result.checks if not c.passed])

    def test_statistical_suites_small_scale(self):
        statistical = [name for name in SUITES if name not in ("williamson", "determinism", "normalization")]
        loose = {}
        for name in statistical:
            keys = DEFAULT_TOLERANCES[name]
            loose[name] = {k: v for k, v in (("sigma", 5.0), ("ks", 2.3)) if k in keys}
        engine = ValidationEngine(seed=11, scale=0.02, tolerances=loose)
        for result in engine.run(statistical):
            self.assertIsNone(result.error, result.suite)
            self.assertTrue(result.checks, result.suite)
            self.assertTrue(result.passed, [c for c in result.checks if not c.passed])

    def test_tight_tolerance_fails(self):
        engine = ValidationEngine(tolerances={"williamson": {"sup": 1e-20}})
        (result,) = engine.run(["williamson"])
        self.assertFalse(result.passed)
        self.assertEqual(engine.tolerances["williamson"]["sup"], 1e-20)
        self.assertEqual(DEFAULT_TOLERANCES["williamson"]["sup"], 1e-6)

    def test_unknown_names(self):
        with self.assertRaises(DomainError):
            self.engine.run(["bogus"])
        with self.assertRaises(DomainError):
            ValidationEngine(tolerances={"bogus": {"sigma": 1.0}})

    def test_raising_suite(self):
        def broken(tol):
            raise DomainError("boom")

        self.engine.suite_williamson = broken
        with self.assertRaises(AspError):
            self.engine.run(["williamson"])
        (result,) = self.engine.run(["williamson"], ignore_error=True)
        self.assertFalse(result.passed)
        self.assertIn("boom", result.error)

    def test_report(self):
        results = self.engine.run(["williamson"])
        with tempfile.TemporaryDirectory() as tmp:
            target = os.path.join(tmp, "report.json")
            ValidationEngine.write_report(results, target)
            with open(target) as f:
                doc = json.load(f)
        self.assertTrue(doc["all_pass"])
        self.assertEqual(len(doc["checks"]), len(results[0].checks))
        self.assertEqual(
            set(doc["checks"][0]), {"suite", "name", "statistic", "threshold", "op", "pass"}
        )

    def test_density_mass_2d(self):
        spec = ProcessSpec.asp(2, PointMass(1.0))
        mass = asp_density_mass_2d(spec, 0.25, np.array([0.1, 0.15]), 0.75)
        self.assertLess(abs(mass - 1.0), 1e-6)
        # unequal activities and a kernel exponent below -1/2
        liouville = ProcessSpec.liouville((1.5, 0.5), PointMass(1.0))
        mass = asp_density_mass_2d(liouville, 0.1, np.array([0.2, 0.05]), 0.85)
        self.assertLess(abs(mass - 1.0), 1e-6)
        with self.assertRaises(DomainError):
            asp_density_mass_2d(ProcessSpec.asp(3, PointMass(1.0)), 0.0, np.zeros(3), 0.5)


def run_test():
    unittest.main()


if __name__ == "__main__":
    run_test()
