"""Archimedean copulas, the ASP terminal survival copula and empirical
dependence checks."""

import csv
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats

from aspsim.genlaw import ArchGenerator, marginal_survival, survival_inverse
from aspsim.procs import ProcessSpec
from aspsim.util import DomainError, InvalidGeneratorError, fmt_real

logger = logging.getLogger(__name__)

MIN_DRAWS = 100
KS_CRIT_1PCT = 1.628


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Draws of an n-dimensional random vector, one row per draw."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2 or d.shape[1] < 2:
            raise DomainError("an empirical sample is a (draws, dim >= 2) matrix")
        if d.shape[0] == 0:
            raise DomainError("the sample is empty")
        if not np.all(np.isfinite(d)):
            raise DomainError("the sample has non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def n_draws(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


class Estimate(NamedTuple):
    value: float
    stderr: float


class KSResult(NamedTuple):
    statistic: float
    critical: float
    pass_1pct: bool
    pvalue: float


def _check_u(u) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if u.size < 2 or np.any((u < 0.0) | (u > 1.0)):
        raise DomainError("u must be a vector in [0, 1]^n with n >= 2")
    return u


def copula_eval(gen: ArchGenerator, u) -> float:
    """C(u) = h(sum_i h^{-1}(u_i)), with h(inf) = 0."""
    u = _check_u(u)
    if np.any(u == 0.0):
        return 0.0
    if abs(gen(0.0) - 1.0) > 1e-10:
        raise InvalidGeneratorError("generator {} has h(0) != 1".format(gen.name))
    total = math.fsum(gen.inverse(float(v)) for v in u)
    return 0.0 if math.isinf(total) else gen(total)


def asp_terminal_copula(spec: ProcessSpec, u) -> float:
    """Survival copula of an ASP terminal value: F(sum_i F^{-1}(u_i)) with F the marginal survival."""
    if spec.kind != "asp":
        raise DomainError("the terminal Archimedean copula is defined for ASPs")
    u = _check_u(u)
    if u.size != spec.dim:
        raise DomainError("u must have {} coordinates".format(spec.dim))
    if np.any(u == 0.0):
        return 0.0
    total = math.fsum(survival_inverse(spec.law, spec.dim, float(v)) for v in u)
    return 0.0 if math.isinf(total) else marginal_survival(spec.law, spec.dim, total)


def n_increasing_check(gen: ArchGenerator, n: int, box: tuple) -> float:
    """C-volume of the box [a, b] by inclusion-exclusion over its 2^n corners."""
    a = np.asarray(box[0], dtype=float).ravel()
    b = np.asarray(box[1], dtype=float).ravel()
    if a.size != n or b.size != n or np.any(a > b):
        raise DomainError("box corners must be ordered vectors of length {}".format(n))
    volume = 0.0
    for pick in itertools.product((0, 1), repeat=n):
        corner = np.where(np.asarray(pick) == 1, b, a)
        sign = (-1) ** (n - sum(pick))
        volume += sign * copula_eval(gen, corner)
    return volume


def empirical_joint_survival(sample: EmpiricalSample, x) -> Estimate:
    """Fraction of draws strictly above x in every coordinate, with its binomial standard error."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != sample.dim:
        raise DomainError("x must have {} coordinates".format(sample.dim))
    p = float(np.mean(np.all(sample.data > x, axis=1)))
    return Estimate(p, math.sqrt(p * (1.0 - p) / sample.n_draws))


def empirical_copula(sample: EmpiricalSample, u, survival: bool = True) -> np.ndarray:
    """Rank-based empirical (survival) copula on a grid of u points.

    Pseudo-observations are rank/(N+1), or (N+1-rank)/(N+1) for the survival
    copula, so the estimate depends on the sample through its ranks only.
    The survival copula is estimated as the fraction of draws whose flipped
    pseudo-observations are <= u in every coordinate.  That is the usual
    empirical copula of the negated sample; reading the survival estimate as
    "draws with pseudo-observations > u" would count the complementary
    corner and is not what is computed here.

    Args:
        sample: The draws
        u: One point (dim,) or a grid (points, dim)
        survival: Estimate the survival copula

    Returns:
        Array (points,) of estimates, or a float for a single point
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    grid = np.atleast_2d(u)
    if grid.shape[1] != sample.dim:
        raise DomainError("u must have {} coordinates".format(sample.dim))
    N = sample.n_draws
    ranks = stats.rankdata(sample.data, axis=0)
    pseudo = (N + 1.0 - ranks) / (N + 1.0) if survival else ranks / (N + 1.0)
    out = np.array([np.mean(np.all(pseudo <= g, axis=1)) for g in grid])
    return float(out[0]) if single else out


def ks_statistic(sample_1d, cdf: Callable) -> KSResult:
    """One-sample Kolmogorov-Smirnov test against a CDF, critical value 1.628/sqrt(N)."""
    x = np.asarray(sample_1d, dtype=float).ravel()
    if x.size < MIN_DRAWS:
        raise DomainError("a KS test needs at least {} draws, got {}".format(MIN_DRAWS, x.size))
    res = stats.kstest(x, cdf)
    critical = KS_CRIT_1PCT / math.sqrt(x.size)
    return KSResult(float(res.statistic), critical, bool(res.statistic <= critical), float(res.pvalue))


def ks_two_sample(sample_a, sample_b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov test, critical value 1.628 sqrt((n+m)/(nm))."""
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if min(a.size, b.size) < MIN_DRAWS:
        raise DomainError("a KS test needs at least {} draws per sample".format(MIN_DRAWS))
    res = stats.ks_2samp(a, b)
    critical = KS_CRIT_1PCT * math.sqrt((a.size + b.size) / (a.size * b.size))
    return KSResult(float(res.statistic), critical, bool(res.statistic <= critical), float(res.pvalue))


def write_copula_csv(target: str, u_grid, values) -> None:
    """Write a (u_1, ..., u_n, C) table."""
    grid = np.atleast_2d(np.asarray(u_grid, dtype=float))
    with open(target, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["u_{}".format(i + 1) for i in range(grid.shape[1])] + ["C"])
        for row, c in zip(grid, np.ravel(values)):
            w.writerow([fmt_real(v) for v in row] + [fmt_real(c)])
