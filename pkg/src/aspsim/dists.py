"""Building-block distributions: gamma, beta, Dirichlet, simplex-uniform,
l1-norm symmetric and multivariate Liouville laws."""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Union

import numpy as np
from scipy import special

from aspsim.specfun import log_gamma
from aspsim.util import DomainError, check_positive

if TYPE_CHECKING:
    from aspsim.genlaw import GeneratingLaw

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12

Size = Optional[Union[int, tuple]]


@dataclass(frozen=True)
class DirichletParams:
    """Parameter vector of a Dirichlet law.

    Attributes:
        alpha: Positive reals, at least two of them
    """

    alpha: tuple

    def __post_init__(self) -> None:
        alpha = tuple(float(a) for a in np.ravel(self.alpha))
        if len(alpha) < 2:
            raise DomainError("a Dirichlet parameter vector needs length >= 2")
        if not all(np.isfinite(a) and a > 0.0 for a in alpha):
            raise DomainError("Dirichlet parameters must be positive, got {!r}".format(alpha))
        object.__setattr__(self, "alpha", alpha)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.alpha)

    @property
    def total(self) -> float:
        return float(sum(self.alpha))

    @property
    def dim(self) -> int:
        return len(self.alpha)


@dataclass
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_key)``.

    The underlying bit generator is Philox (counter based) seeded from
    ``SeedSequence([seed, stream_key])``, so equal keys replay the same draws
    and distinct keys give independent streams.  A stream is owned by one
    worker at a time; samplers advance it.
    """

    seed: int
    stream_key: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (0 <= int(self.seed) < 2**64 and 0 <= int(self.stream_key) < 2**64):
            raise DomainError("seed and stream_key must be unsigned 64-bit integers")
        ss = np.random.SeedSequence([int(self.seed), int(self.stream_key)])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, key: int) -> "RngStream":
        """Return a fresh stream sharing the seed with a different key."""
        return RngStream(self.seed, key)


def log_gamma_pdf(shape, x):
    """Log density of the unit-scale gamma law with the given shape; -inf for x <= 0."""
    shape = np.asarray(shape, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(x > 0.0, x, 1.0)
        out = special.xlogy(shape - 1.0, safe) - safe - special.gammaln(shape)
    out = np.where(x > 0.0, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def gamma_density(t: float, m: float, x):
    """Density f_t(x) of a gamma process with activity m at time t.

    f_t(x) = 1{x>0} x^{mt-1} e^{-x} / Γ(mt).
    """
    shape = check_positive("t", t) * check_positive("m", m)
    out = np.exp(log_gamma_pdf(shape, x))
    return float(out) if np.ndim(out) == 0 else out


def sample_log_gamma(shape, rng: RngStream, size: Size = None):
    """Draw log G for G ~ Gamma(shape, 1), valid down to tiny shapes.

    Shapes below one use G = G' U^{1/shape} with G' ~ Gamma(shape + 1), taken
    in log space so that draws which underflow in linear space stay finite.
    """
    shape = np.asarray(shape, dtype=float)
    if np.any(~(shape > 0.0)):
        raise DomainError("gamma shape must be positive")
    gen = rng.generator
    small = shape < 1.0
    g = gen.gamma(np.where(small, shape + 1.0, shape), size=size)
    out = np.log(g)
    if np.any(small):
        u = gen.random(size=np.shape(g))
        with np.errstate(divide="ignore"):
            out = out + np.where(small, np.log(u) / shape, 0.0)
    return out


def sample_gamma(shape: float, scale: float, rng: RngStream, size: Size = None):
    """Draw from Gamma(shape, scale); mean shape*scale, variance shape*scale^2."""
    check_positive("shape", shape)
    check_positive("scale", scale)
    return scale * rng.generator.gamma(shape, size=size)


def sample_beta(a, b, rng: RngStream, size: Size = None):
    """Draw Beta(a, b) as G_a / (G_a + G_b) from two gamma draws."""
    la = sample_log_gamma(a, rng, size)
    lb = sample_log_gamma(b, rng, np.shape(la) if size is None else size)
    return special.expit(la - lb)


def sample_dirichlet(params: DirichletParams, rng: RngStream, size: Size = None) -> np.ndarray:
    """Draw D = G/||G|| with independent G_i ~ Gamma(alpha_i, 1).

    Returns:
        Array of shape (n,) when size is None, otherwise (size, n)
    """
    alpha = params.array
    shape = alpha.shape if size is None else tuple(np.atleast_1d(size)) + alpha.shape
    lg = sample_log_gamma(np.broadcast_to(alpha, shape), rng, shape)
    d = np.exp(lg - special.logsumexp(lg, axis=-1, keepdims=True))
    return d / d.sum(axis=-1, keepdims=True)


def dirichlet_density(params: DirichletParams, x) -> float:
    """Density of (D_1, ..., D_{n-1}) at x; the last coordinate is 1 - sum(x).

    Raises:
        DomainError: If x has the wrong length, a negative entry, or sum(x) > 1 + 1e-12
    """
    alpha = params.array
    x = np.asarray(x, dtype=float).ravel()
    if x.size != alpha.size - 1:
        raise DomainError("expected {} coordinates, got {}".format(alpha.size - 1, x.size))
    if np.any(x < 0.0):
        raise DomainError("Dirichlet coordinates must be non-negative")
    last = 1.0 - x.sum()
    if last < -SIMPLEX_TOL:
        raise DomainError("coordinates sum to {:.15g} > 1".format(x.sum()))
    full = np.append(x, max(last, 0.0))
    with np.errstate(divide="ignore"):
        logp = log_gamma(params.total) - np.sum(special.gammaln(alpha)) + np.sum(special.xlogy(alpha - 1.0, full))
    return float(np.exp(logp))


def dirichlet_moments(params: DirichletParams) -> tuple:
    """Mean vector and covariance matrix of the Dirichlet law."""
    a = params.array
    s = params.total
    mean = a / s
    cov = -np.outer(a, a) / (s**2 * (s + 1.0))
    np.fill_diagonal(cov, a * (s - a) / (s**2 * (s + 1.0)))
    return mean, cov


def sample_simplex_uniform(n: int, rng: RngStream, size: Size = None) -> np.ndarray:
    """Uniform draw on the unit simplex as E/||E|| with i.i.d. exponentials."""
    if int(n) < 2:
        raise DomainError("simplex dimension must be >= 2")
    shape = (int(n),) if size is None else tuple(np.atleast_1d(size)) + (int(n),)
    e = rng.generator.standard_exponential(size=shape)
    return e / e.sum(axis=-1, keepdims=True)


def sample_l1_symmetric(law: "GeneratingLaw", n: int, rng: RngStream, size: Size = None) -> np.ndarray:
    """Draw X = R U with R ~ law independent of U uniform on the simplex."""
    r = np.asarray(law.sample(rng, size))
    u = sample_simplex_uniform(n, rng, size)
    return r[..., None] * u


def sample_liouville_dist(
    law: "GeneratingLaw", params: DirichletParams, rng: RngStream, size: Size = None
) -> np.ndarray:
    """Draw X = R D with R ~ law independent of D ~ Dirichlet(params)."""
    r = np.asarray(law.sample(rng, size))
    d = sample_dirichlet(params, rng, size)
    return r[..., None] * d


def liouville_density(law: "GeneratingLaw", params: DirichletParams, x) -> float:
    """Density of a multivariate Liouville law with generating density p.

    Raises:
        UnsupportedOperationError: If the law has no density
        DomainError: For negative coordinates or the zero vector
    """
    alpha = params.array
    x = np.asarray(x, dtype=float).ravel()
    if x.size != alpha.size:
        raise DomainError("expected {} coordinates, got {}".format(alpha.size, x.size))
    if np.any(x < 0.0):
        raise DomainError("Liouville coordinates must be non-negative")
    r = x.sum()
    if r <= 0.0:
        raise DomainError("the Liouville density is singular at the origin")
    logp = law.log_pdf(r)
    if logp == -np.inf:
        return 0.0
    with np.errstate(divide="ignore"):
        out = (
            log_gamma(params.total)
            + logp
            - (params.total - 1.0) * np.log(r)
            + np.sum(special.xlogy(alpha - 1.0, x) - special.gammaln(alpha))
        )
    return float(np.exp(out))


def liouville_moments(mu1: float, mu2: float, params: DirichletParams) -> tuple:
    """Mean, variance and covariance of X = R D given E[R] = mu1, E[R^2] = mu2.

    Returns:
        (mean, var, cov) with cov the full matrix (its diagonal equals var)
    """
    a = params.array
    s = params.total
    mean = mu1 * a / s
    cov = np.outer(a, a) / s * (mu2 / (s + 1.0) - mu1**2 / s)
    var = a / s * (mu2 * (a + 1.0) / (s + 1.0) - mu1**2 * a / s)
    np.fill_diagonal(cov, var)
    return mean, var, cov
