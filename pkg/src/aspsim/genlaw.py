"""Generating laws, Archimedean generators and the normalising kernels.

A generating law is the law of the terminal norm R of a process.  The
kernel

    psi_t(B; x) = int_B f_{T(1-t)}(z - x) / f_T(z) nu(dz)

and its total mass Psi_t(x) = psi_t([0, inf); x) drive every transition
density of the package.  All kernel work is done in log space:

    log Psi_t(x) = lgΓ(T) - lgΓ(c) + x + log int z^{1-T} (z - x)^{c-1} nu(dz),  c = T(1 - t)
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, ClassVar, Optional

import numpy as np
from scipy import interpolate, special

from aspsim.dists import RngStream, Size, log_gamma_pdf
from aspsim.specfun import DEFAULT_RULE, integrate, integrate_singular, jacobi_rule, log_gamma
from aspsim.util import (
    DomainError,
    InvalidGeneratorError,
    NumericError,
    OutOfSupportError,
    UnsupportedOperationError,
    check_positive,
)

logger = logging.getLogger(__name__)

TAIL_PROB = 1e-14
TABLE_MASS_TOL = 1e-8
WEIGHT_SUM_TOL = 1e-10
FD_STEP = 1e-5
SIGN_TOL = 1e-8
SIGN_GRID = 64
# trial points (and range for unbounded supports) used to scale kernel integrands
REF_POINTS = 64
REF_SPAN = 1e3
INVERSE_TOL = 1e-10
JACOBI_ORDER = 96
STEP_ORDER = 48
BISECT_ITERS = 52
# terminal inverse CDF cells, geometric in z - r_s down to PPF_FLOOR times the span
PPF_CELLS = 4096
PPF_FLOOR = 1e-12


class GeneratingLaw(ABC):
    """The law nu of a positive random variable R, the terminal norm.

    Subclasses are frozen dataclasses, hence hashable and safe to share
    between threads.
    """

    kind: ClassVar[str] = ""

    def atoms(self) -> Optional[tuple]:
        """(atoms, weights) arrays for purely atomic laws, None otherwise."""
        return None

    @property
    def has_density(self) -> bool:
        return False

    def log_pdf(self, x):
        raise UnsupportedOperationError("{} law has no density".format(self.kind or type(self).__name__))

    def pdf(self, x):
        out = np.exp(self.log_pdf(x))
        return float(out) if np.ndim(out) == 0 else out

    @abstractmethod
    def cdf(self, x):
        """P[R <= x]."""

    def sf(self, x):
        out = 1.0 - np.asarray(self.cdf(x))
        return float(out) if out.ndim == 0 else out

    @abstractmethod
    def support(self) -> tuple:
        """Smallest closed interval (lo, hi) carrying the law; hi may be inf."""

    @abstractmethod
    def ppf(self, u):
        """Generalised inverse inf{x: cdf(x) >= u}."""

    def upper(self) -> float:
        """A finite upper end for quadrature: hi, or the 1 - 1e-14 quantile."""
        hi = self.support()[1]
        return hi if math.isfinite(hi) else float(self.ppf(1.0 - TAIL_PROB))

    def sample(self, rng: RngStream, size: Size = None):
        return self.ppf(rng.generator.random(size))

    def mean(self) -> float:
        lo = self.support()[0]
        return lo + integrate(lambda r: float(self.sf(r)), DEFAULT_RULE, lo, self.support()[1]).value

    def second_moment(self) -> float:
        lo = self.support()[0]
        tail = integrate(lambda r: 2.0 * r * float(self.sf(r)), DEFAULT_RULE, lo, self.support()[1]).value
        return lo * lo + tail

    def to_dict(self) -> dict:
        raise UnsupportedOperationError("{} cannot be serialised".format(type(self).__name__))

    @staticmethod
    def from_dict(doc: dict) -> "GeneratingLaw":
        """Build a law from its JSON object; ``kind`` selects the variant."""
        if not isinstance(doc, dict) or "kind" not in doc:
            raise DomainError("a law must be an object with a 'kind' field")
        kinds = {cls.kind: cls for cls in (PointMass, FiniteMixture, GammaLaw, TabulatedDensity)}
        kind = doc["kind"]
        if kind not in kinds:
            raise DomainError("unknown law kind {!r}; expected one of {}".format(kind, sorted(kinds)))
        params = {k: v for k, v in doc.items() if k != "kind"}
        try:
            return kinds[kind](**params)
        except TypeError as e:
            raise DomainError("bad parameters for law kind {!r}: {}".format(kind, e)) from e


@dataclass(frozen=True)
class PointMass(GeneratingLaw):
    r: float
    kind: ClassVar[str] = "point"

    def __post_init__(self) -> None:
        object.__setattr__(self, "r", check_positive("r", self.r))

    def atoms(self) -> tuple:
        return np.array([self.r]), np.array([1.0])

    def cdf(self, x):
        out = np.where(np.asarray(x, dtype=float) >= self.r, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def support(self) -> tuple:
        return self.r, self.r

    def ppf(self, u):
        out = np.full(np.shape(u), self.r)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return self.r

    def second_moment(self) -> float:
        return self.r**2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "r": self.r}


@dataclass(frozen=True)
class FiniteMixture(GeneratingLaw):
    """A finite mixture of point masses, stored sorted by atom."""

    atoms_: tuple
    weights: tuple
    kind: ClassVar[str] = "mixture"

    def __init__(self, atoms, weights) -> None:
        z = np.asarray(atoms, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if z.size == 0 or z.size != w.size:
            raise DomainError("atoms and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(z)) or np.any(z <= 0.0):
            raise DomainError("mixture atoms must be positive")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise DomainError("mixture weights must be non-negative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise DomainError("mixture weights sum to {:.15g}, not 1".format(w.sum()))
        order = np.argsort(z, kind="stable")
        object.__setattr__(self, "atoms_", tuple(z[order]))
        object.__setattr__(self, "weights", tuple(w[order] / w.sum()))

    def atoms(self) -> tuple:
        return np.asarray(self.atoms_), np.asarray(self.weights)

    def cdf(self, x):
        z, w = self.atoms()
        cum = np.concatenate([[0.0], np.cumsum(w)])
        out = np.minimum(cum[np.searchsorted(z, np.asarray(x, dtype=float), side="right")], 1.0)
        return float(out) if out.ndim == 0 else out

    def support(self) -> tuple:
        return self.atoms_[0], self.atoms_[-1]

    def ppf(self, u):
        z, w = self.atoms()
        cum = np.cumsum(w)
        idx = np.minimum(np.searchsorted(cum, np.asarray(u, dtype=float), side="left"), z.size - 1)
        out = z[idx]
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        z, w = self.atoms()
        return float(np.dot(w, z))

    def second_moment(self) -> float:
        z, w = self.atoms()
        return float(np.dot(w, z * z))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "atoms": list(self.atoms_), "weights": list(self.weights)}


@dataclass(frozen=True)
class GammaLaw(GeneratingLaw):
    shape: float
    scale: float = 1.0
    kind: ClassVar[str] = "gamma"

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", check_positive("shape", self.shape))
        object.__setattr__(self, "scale", check_positive("scale", self.scale))

    @property
    def has_density(self) -> bool:
        return True

    def log_pdf(self, x):
        out = np.asarray(log_gamma_pdf(self.shape, np.asarray(x, dtype=float) / self.scale)) - math.log(self.scale)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        out = special.gammainc(self.shape, np.maximum(np.asarray(x, dtype=float), 0.0) / self.scale)
        return float(out) if np.ndim(out) == 0 else out

    def sf(self, x):
        out = special.gammaincc(self.shape, np.maximum(np.asarray(x, dtype=float), 0.0) / self.scale)
        return float(out) if np.ndim(out) == 0 else out

    def support(self) -> tuple:
        return 0.0, math.inf

    def ppf(self, u):
        out = self.scale * special.gammaincinv(self.shape, np.asarray(u, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, rng: RngStream, size: Size = None):
        return self.scale * rng.generator.gamma(self.shape, size=size)

    def mean(self) -> float:
        return self.shape * self.scale

    def second_moment(self) -> float:
        return self.shape * (self.shape + 1.0) * self.scale**2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class TabulatedDensity(GeneratingLaw):
    """A density given on a grid.

    The CDF is the monotone cubic (PCHIP) interpolant of the cumulative
    trapezoid integral; the density is its derivative, so it stays
    non-negative and integrates to exactly 1.
    """

    grid: tuple
    values: tuple
    kind: ClassVar[str] = "table"
    _cdf: Any = field(init=False, repr=False, compare=False)
    _inverse: Any = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        x = np.asarray(self.grid, dtype=float).ravel()
        p = np.asarray(self.values, dtype=float).ravel()
        if x.size < 2 or x.size != p.size:
            raise DomainError("grid and values must have equal length >= 2")
        if x[0] <= 0.0 or np.any(np.diff(x) <= 0.0) or not np.all(np.isfinite(x)):
            raise DomainError("table grid must be positive and strictly increasing")
        if np.any(p < 0.0) or not np.all(np.isfinite(p)):
            raise DomainError("table density values must be non-negative")
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(x))])
        if abs(cum[-1] - 1.0) > TABLE_MASS_TOL:
            raise DomainError("table density integrates to {:.12g}, not 1".format(cum[-1]))
        cum /= cum[-1]
        spline = interpolate.PchipInterpolator(x, cum, extrapolate=False)
        dense = np.linspace(x[0], x[-1], 16 * x.size)
        object.__setattr__(self, "grid", tuple(x))
        object.__setattr__(self, "values", tuple(p))
        object.__setattr__(self, "_cdf", spline)
        object.__setattr__(self, "_inverse", (np.maximum.accumulate(spline(dense)), dense))

    @classmethod
    def from_pdf(cls, grid, values) -> "TabulatedDensity":
        """Normalise unnormalised density values by their trapezoid mass."""
        x = np.asarray(grid, dtype=float)
        p = np.asarray(values, dtype=float)
        mass = float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(x)))
        return cls(tuple(x), tuple(p / check_positive("table mass", mass)))

    @property
    def has_density(self) -> bool:
        return True

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        d = np.nan_to_num(self._cdf.derivative()(x), nan=0.0)
        with np.errstate(divide="ignore"):
            out = np.log(np.maximum(d, 0.0))
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.grid[0], 0.0, np.where(x >= self.grid[-1], 1.0, np.nan_to_num(self._cdf(x))))
        return float(out) if out.ndim == 0 else out

    def support(self) -> tuple:
        return self.grid[0], self.grid[-1]

    def ppf(self, u):
        cs, xs = self._inverse
        out = np.interp(np.asarray(u, dtype=float), cs, xs)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": list(self.grid), "values": list(self.values)}


@dataclass(frozen=True)
class ArchGenerator:
    """An Archimedean generator h with inverse and one-sided derivatives.

    Attributes:
        h: Nonincreasing map [0, inf) -> [0, 1] with h(0) = 1
        h_inverse: Generalised inverse [0, 1] -> [0, inf]
        derivs: Optional analytic right derivatives ``derivs(k, x)``; finite
            differences with step max(1e-5, 1e-5 x) are used otherwise
        name: Label used in logs and reports
    """

    h: Callable[[float], float]
    h_inverse: Callable[[float], float]
    derivs: Optional[Callable[[int, float], float]] = None
    name: str = "custom"

    def __call__(self, x: float) -> float:
        return float(self.h(x))

    def inverse(self, u: float) -> float:
        return float(self.h_inverse(u))

    @property
    def zero_point(self) -> float:
        """inf{x: h(x) = 0}, possibly inf."""
        return self.inverse(0.0)

    def derivative(self, k: int, x: float, right: bool = False) -> float:
        """The k-th derivative at x; ``right`` asks for the right derivative."""
        if k == 0:
            return self(x)
        if self.derivs is not None:
            return float(self.derivs(k, x))
        step = max(FD_STEP, FD_STEP * x)
        j = np.arange(k + 1)
        coef = (-1.0) ** j * special.comb(k, j)
        if right or x < 0.5 * k * step:
            pts = x + (k - j) * step
        else:
            pts = x + (0.5 * k - j) * step
        return float(np.sum(coef * np.array([self(p) for p in pts])) / step**k)


def exponential_generator() -> ArchGenerator:
    """h(x) = e^{-x}: the independence generator, nu = Gamma(n, 1)."""
    return ArchGenerator(
        h=lambda x: math.exp(-x),
        h_inverse=lambda u: math.inf if u <= 0.0 else -math.log(u),
        derivs=lambda k, x: (-1.0) ** k * math.exp(-x),
        name="exp",
    )


def power_generator(k: float) -> ArchGenerator:
    """h(x) = (1 - x)_+^k, the generator of nu = delta_1 in dimension k + 1."""
    k = check_positive("k", k)

    def derivs(j: int, x: float) -> float:
        if x >= 1.0:
            return 0.0
        falling = float(np.prod(k - np.arange(j)))
        if falling == 0.0:
            return 0.0
        return (-1.0) ** j * falling * (1.0 - x) ** (k - j)

    return ArchGenerator(
        h=lambda x: max(1.0 - x, 0.0) ** k,
        h_inverse=lambda u: 1.0 - u ** (1.0 / k),
        derivs=derivs,
        name="power({:g})".format(k),
    )


def clayton_generator(theta: float) -> ArchGenerator:
    """h(x) = (1 + theta x)^{-1/theta}."""
    theta = check_positive("theta", theta)

    def derivs(j: int, x: float) -> float:
        falling = float(np.prod(-1.0 / theta - np.arange(j)))
        return falling * theta**j * (1.0 + theta * x) ** (-1.0 / theta - j)

    return ArchGenerator(
        h=lambda x: (1.0 + theta * x) ** (-1.0 / theta),
        h_inverse=lambda u: math.inf if u <= 0.0 else (u ** (-theta) - 1.0) / theta,
        derivs=derivs,
        name="clayton({:g})".format(theta),
    )


def survival_generator(law: GeneratingLaw, n: int) -> ArchGenerator:
    """The generator x -> marginal_survival(law, n, x) with analytic derivatives."""
    n = _check_dim(n)
    return ArchGenerator(
        h=lambda x: marginal_survival(law, n, x),
        h_inverse=lambda u: survival_inverse(law, n, u),
        derivs=lambda k, x: survival_derivative(law, n, k, x),
        name="survival({}, n={})".format(law.kind or type(law).__name__, n),
    )


def generator_from_dict(doc: dict) -> ArchGenerator:
    """Build a built-in generator from {"kind": "exp"|"power"|"clayton", ...}."""
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "exp":
        return exponential_generator()
    if kind == "power":
        return power_generator(doc.get("k", 1.0))
    if kind == "clayton":
        if "theta" not in doc:
            raise DomainError("clayton generator needs 'theta'")
        return clayton_generator(doc["theta"])
    raise DomainError("unknown generator kind {!r}".format(kind))


def _check_dim(n: int) -> int:
    if int(n) != n or n < 2:
        raise DomainError("dimension n must be an integer >= 2, got {!r}".format(n))
    return int(n)


def _power_integral(g: Callable[[float], float], x0: float, x1: float, p: float, tol: float) -> float:
    """int_{x0}^{x1} (z - x0)^{p-1} g(z) dz for a smooth g, x1 possibly inf.

    For p < 1 the end-point singularity is removed with v = (z - x0)^p.
    """
    if x1 <= x0:
        return 0.0
    if p >= 1.0:
        return integrate(lambda z: (z - x0) ** (p - 1.0) * g(z), DEFAULT_RULE, x0, x1, tol).value
    top = math.inf if math.isinf(x1) else (x1 - x0) ** p
    return integrate(lambda v: g(x0 + v ** (1.0 / p)), DEFAULT_RULE, 0.0, top, tol).value / p


def survival_derivative(law: GeneratingLaw, n: int, k: int, x: float) -> float:
    """k-th (right) derivative of the marginal survival function at x.

    F^{(k)}(x) = (n-1)!/(n-1-k)! (-1)^k int_{(x, inf)} r^{-k} (1 - x/r)^{n-1-k} nu(dr)
    """
    n = _check_dim(n)
    if not 0 <= k <= n - 1:
        raise DomainError("derivative order must lie in [0, n-1]")
    x = float(x)
    if x < 0.0:
        raise DomainError("survival argument must be non-negative")
    if k == 0 and x == 0.0:
        return 1.0
    p = n - 1 - k
    coef = (-1.0) ** k * float(np.prod(n - 1.0 - np.arange(k)))
    atoms = law.atoms()
    if atoms is not None:
        z, w = atoms
        above = z > x
        return coef * float(np.sum(w[above] * z[above] ** (-k) * (1.0 - x / z[above]) ** p))
    if isinstance(law, GammaLaw) and law.shape == n:
        return (-1.0 / law.scale) ** k * math.exp(-x / law.scale)
    lo, hi = law.support()
    if law.has_density:
        a = max(x, lo)
        if a >= hi:
            return 0.0
        f = lambda r: r ** (-k) * (1.0 - x / r) ** p * float(law.pdf(r))
        return coef * integrate(f, DEFAULT_RULE, a, hi, tol=1e-8).value
    if k > 0:
        raise UnsupportedOperationError("derivatives of a CDF-only law are not available")
    # integration by parts against the survival function of R
    f = lambda r: (n - 1.0) * x / (r * r) * (1.0 - x / r) ** (n - 2) * float(law.sf(r))
    return integrate(f, DEFAULT_RULE, x, max(hi, x), tol=1e-8).value


def marginal_survival(law: GeneratingLaw, n: int, x):
    """F(x) = int_x^inf (1 - x/r)^{n-1} nu(dr), the survival function of each marginal."""
    n = _check_dim(n)
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError("survival argument must be non-negative")
    atoms = law.atoms()
    if atoms is not None:
        z, w = atoms
        frac = np.clip(1.0 - arr[..., None] / z, 0.0, 1.0)
        out = np.sum(w * frac ** (n - 1), axis=-1)
    else:
        out = np.vectorize(lambda v: survival_derivative(law, n, 0, v), otypes=[float])(arr)
    out = np.where(arr == 0.0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def survival_inverse(law: GeneratingLaw, n: int, u: float) -> float:
    """inf{x >= 0: F(x) <= u} by bisection to 1e-10."""
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise DomainError("u must lie in [0, 1]")
    if u == 1.0:
        return 0.0
    surv = lambda v: marginal_survival(law, n, v)
    lo, hi = 0.0, law.support()[1]
    if math.isinf(hi):
        if u == 0.0:
            return math.inf
        hi = max(1.0, law.upper())
        while surv(hi) > u:
            lo, hi = hi, 2.0 * hi
    for _ in range(400):
        if hi - lo <= INVERSE_TOL * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if surv(mid) <= u:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class WilliamsonLaw(GeneratingLaw):
    """The generating law recovered from an n-monotone generator, as a CDF evaluator.

    nu([0, x]) = 1 - sum_{k<n-1} (-1)^k x^k h^{(k)}(x)/k!
                   - x^{n-1} max(0, (-1)^{n-1} h_+^{(n-1)}(x)) / (n-1)!

    The max wraps the signed top-order right derivative, so point masses come
    back exactly; read literally around h^{(n-1)} alone the n = 2 case of
    (1 - x)_+ would give 1 - h instead of the unit point mass.
    """

    generator: ArchGenerator
    n: int
    kind: ClassVar[str] = "williamson"

    def _cdf_scalar(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        gen, n = self.generator, self.n
        total = 0.0
        for k in range(n - 1):
            total += (-1.0) ** k * x**k * gen.derivative(k, x) / math.factorial(k)
        top = (-1.0) ** (n - 1) * gen.derivative(n - 1, x, right=True)
        total += x ** (n - 1) * max(0.0, top) / math.factorial(n - 1)
        return min(max(1.0 - total, 0.0), 1.0)

    def cdf(self, x):
        out = np.vectorize(self._cdf_scalar, otypes=[float])(np.asarray(x, dtype=float))
        return float(out) if out.ndim == 0 else out

    def support(self) -> tuple:
        return 0.0, self.generator.zero_point

    def ppf(self, u):
        def one(p: float) -> float:
            lo, hi = 0.0, self.support()[1]
            if math.isinf(hi):
                hi = 1.0
                while self._cdf_scalar(hi) < p:
                    lo, hi = hi, 2.0 * hi
            for _ in range(200):
                if hi - lo <= INVERSE_TOL * max(1.0, hi):
                    break
                mid = 0.5 * (lo + hi)
                if self._cdf_scalar(mid) >= p:
                    hi = mid
                else:
                    lo = mid
            return hi

        out = np.vectorize(one, otypes=[float])(np.asarray(u, dtype=float))
        return float(out) if out.ndim == 0 else out

    def upper(self) -> float:
        hi = self.support()[1]
        return hi if math.isfinite(hi) else float(self.ppf(1.0 - 1e-10))


def williamson_inverse(gen: ArchGenerator, n: int) -> WilliamsonLaw:
    """Recover nu from an n-monotone generator.

    On the test grid h must satisfy (-1)^k h^{(k)} >= 0 for k <= n-1 (right
    derivatives at the top order), and (-1)^{n-1} h^{(n-1)} must be
    nonincreasing, i.e. (-1)^{n-2} h^{(n-2)} is nonincreasing and convex.

    Raises:
        InvalidGeneratorError: If h(0) != 1 or one of the conditions above fails
    """
    n = _check_dim(n)
    if abs(gen(0.0) - 1.0) > 1e-10:
        raise InvalidGeneratorError("generator {} has h(0) = {:.15g}".format(gen.name, gen(0.0)))
    top = gen.zero_point
    top = 20.0 if math.isinf(top) else top
    prev = math.inf
    for x in np.linspace(0.0, top, SIGN_GRID, endpoint=False):
        for k in range(n):
            value = (-1.0) ** k * gen.derivative(k, float(x), right=(k == n - 1))
            if value < -SIGN_TOL:
                raise InvalidGeneratorError(
                    "generator {} is not {}-monotone: (-1)^{} h^({})({:.6g}) < 0".format(gen.name, n, k, k, x)
                )
        if value > prev + SIGN_TOL * max(1.0, abs(prev)):
            raise InvalidGeneratorError(
                "generator {} is not {}-monotone: (-1)^{} h^({}) increases at {:.6g}".format(
                    gen.name, n, n - 1, n - 1, x
                )
            )
        prev = value
    logger.debug("williamson inverse of %s, n=%d", gen.name, n)
    return WilliamsonLaw(gen, n)


@dataclass(frozen=True)
class KernelEval:
    t: float
    x: float
    total_activity: float
    law: GeneratingLaw
    value: float
    log_value: float


def _check_kernel_args(law: GeneratingLaw, total_activity: float, t: float) -> float:
    if isinstance(law, WilliamsonLaw):
        raise UnsupportedOperationError("kernels need an atomic law or a density")
    if not 0.0 <= t < 1.0:
        raise DomainError("kernel time must lie in [0, 1), got {!r}".format(t))
    return check_positive("total_activity", total_activity)


def _law_mass(law: GeneratingLaw, lo: float, hi: float) -> float:
    atoms = law.atoms()
    if atoms is not None:
        z, w = atoms
        return float(np.sum(w[(z >= lo) & (z <= hi)]))
    return float(law.cdf(hi) - law.cdf(lo))


def _log_psi_atomic(law: GeneratingLaw, A: float, t: float, x, lo_b: float = 0.0, hi_b: float = math.inf):
    z, w = law.atoms()
    c = A * (1.0 - t)
    x = np.asarray(x, dtype=float)
    diff = z - x[..., None]
    ok = (diff > 0.0) & (z >= lo_b) & (z <= hi_b)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(ok, np.log(w) + (1.0 - A) * np.log(z) + (c - 1.0) * np.log(np.where(ok, diff, 1.0)), -np.inf)
        lse = special.logsumexp(terms, axis=-1)
    return log_gamma(A) - log_gamma(c) + x + lse


def _log_psi_gamma(law: GammaLaw, A: float, t: float, x):
    """Closed form of log Psi for a gamma law via Tricomi's U."""
    c = A * (1.0 - t)
    k, theta = law.shape, law.scale
    x = np.asarray(x, dtype=float)
    if k == A:
        return x * (1.0 - 1.0 / theta) + (c - A) * math.log(theta) + 0.0 * x
    e = c + k - A
    with np.errstate(divide="ignore", invalid="ignore"):
        u = special.hyperu(c, e + 1.0, x / theta)
        out = log_gamma(A) + x - x / theta - log_gamma(k) - k * math.log(theta) + e * np.log(x) + np.log(u)
    at_zero = (
        log_gamma(A) - log_gamma(c) - log_gamma(k) - k * math.log(theta) + log_gamma(e) + e * math.log(theta)
        if e > 0.0
        else math.inf
    )
    out = np.where(x == 0.0, at_zero, out)
    bad = ~np.isfinite(out) & (x > 0.0)
    if np.any(bad):
        out = np.array(out, dtype=float)
        out[bad] = [_log_psi_quad(law, A, t, float(v), 0.0, math.inf) for v in x[bad]]
    return out


@lru_cache(maxsize=4096)
def _log_psi_quad(law: GeneratingLaw, A: float, t: float, x: float, lo_b: float, hi_b: float) -> float:
    c = A * (1.0 - t)
    lo, hi = law.support()
    a = max(x, lo, lo_b)
    b = min(hi, hi_b)
    if b <= a:
        return -math.inf

    def log_g(z: float) -> float:
        return float(law.log_pdf(z)) + (1.0 - A) * math.log(z) if z > 0.0 else -math.inf

    # scale by the largest log g on a trial grid so the integrand stays O(1)
    span = b - a if math.isfinite(b) else REF_SPAN * max(1.0, a)
    logs = [log_g(float(z)) for z in a + span * np.geomspace(1e-9, 1.0, REF_POINTS)]
    finite = [v for v in logs if math.isfinite(v)]
    ref = max(finite) if finite else 0.0

    def g(z: float) -> float:
        try:
            return math.exp(log_g(z) - ref)
        except OverflowError:
            raise NumericError(
                "kernel integrand overflows its reference scale",
                {"law": law.kind, "t": t, "x": x, "z": z, "ref": ref},
            ) from None

    if a > x:
        value = integrate(lambda z: (z - x) ** (c - 1.0) * g(z), DEFAULT_RULE, a, b, tol=math.inf).value
    else:
        value = _power_integral(g, x, b, c, tol=math.inf)
    if value <= 0.0:
        return -math.inf
    return log_gamma(A) - log_gamma(c) + x + ref + math.log(value)


def log_big_psi(law: GeneratingLaw, total_activity: float, t: float, x):
    """Vectorised log Psi_t(x); -inf where x is unreachable.

    At t = 0 the process sits at 0, so Psi_0 = nu([0, inf)) = 1 for every x.
    """
    A = _check_kernel_args(law, total_activity, t)
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError("kernel state must be non-negative")
    if t == 0.0:
        out = np.zeros_like(arr)
    elif law.atoms() is not None:
        out = _log_psi_atomic(law, A, t, arr)
    elif isinstance(law, GammaLaw):
        out = _log_psi_gamma(law, A, t, arr)
    else:
        out = np.vectorize(lambda v: _log_psi_quad(law, A, t, v, 0.0, math.inf), otypes=[float])(arr)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def psi_kernel(law: GeneratingLaw, total_activity: float, t: float, x: float, B: tuple = (0.0, math.inf)) -> float:
    """psi_t(B; x) for a closed interval B = (lo, hi); nu(B) at t = 0."""
    A = _check_kernel_args(law, total_activity, t)
    lo_b, hi_b = float(B[0]), float(B[1])
    if x < 0.0 or lo_b > hi_b or lo_b < 0.0:
        raise DomainError("need x >= 0 and 0 <= B[0] <= B[1]")
    if t == 0.0:
        return _law_mass(law, lo_b, hi_b)
    if law.atoms() is not None:
        return float(np.exp(_log_psi_atomic(law, A, t, float(x), lo_b, hi_b)))
    if lo_b == 0.0 and math.isinf(hi_b):
        return float(np.exp(log_big_psi(law, A, t, float(x))))
    return math.exp(_log_psi_quad(law, A, t, float(x), lo_b, hi_b))


def big_psi(law: GeneratingLaw, total_activity: float, t: float, x: float) -> KernelEval:
    """Psi_t(x) = psi_t([0, inf); x) as a KernelEval.

    Raises:
        OutOfSupportError: If x is beyond the support of the law
    """
    log_value = float(log_big_psi(law, total_activity, t, float(x)))
    if log_value == -math.inf:
        raise OutOfSupportError("state {!r} is unreachable at t={!r}".format(x, t))
    return KernelEval(float(t), float(x), float(total_activity), law, math.exp(log_value), log_value)


def kernel_moment(
    law: GeneratingLaw,
    total_activity: float,
    s: float,
    t: float,
    x: float,
    phi: Optional[Callable[[float], float]] = None,
    normalize: bool = True,
) -> float:
    """int phi(r) Psi_t(r) f_{T(t-s)}(r - x) dr, divided by Psi_s(x) when normalised.

    With phi = 1 and no normalisation this is the Chapman-Kolmogorov side of the
    identity int Psi_t(x + y) f_{T(t-s)}(y) dy = Psi_s(x).  Atomic laws are
    integrated atom by atom with algebraic end-point weights.
    """
    A = _check_kernel_args(law, total_activity, t)
    if not 0.0 <= s < t:
        raise DomainError("need 0 <= s < t < 1")
    phi = phi or (lambda r: 1.0)
    a = A * (t - s)
    c = A * (1.0 - t)
    atoms = law.atoms()
    if atoms is not None:
        z, w = atoms
        total = 0.0
        for zj, wj in zip(z, w):
            if zj <= x:
                continue
            inner = integrate_singular(phi, x, zj, a - 1.0, c - 1.0, tol=1e-8).value
            total += wj * zj ** (1.0 - A) * inner
        value = math.exp(log_gamma(A) - log_gamma(c) - log_gamma(a) + x) * total
    else:
        g = lambda r: phi(r) * math.exp(float(log_big_psi(law, A, t, r)) - (r - x) - log_gamma(a))
        value = _power_integral(g, x, law.support()[1], a, tol=1e-8)
    if normalize:
        value /= big_psi(law, A, s, x).value
    return value


def terminal_discretization(law: GeneratingLaw, total_activity: float, s: float, r_s, order: int = JACOBI_ORDER) -> tuple:
    """Atoms and weights of nu_s1(.; r_s) for each start in ``r_s``.

    Exact for atomic laws.  Densities are discretised with Gauss-Jacobi nodes
    for the (z - r_s)^{c-1} factor, or Gauss-Legendre when the support starts
    above r_s.

    Returns:
        (Z, W) arrays of shape (len(r_s), J); rows of W sum to 1

    Raises:
        OutOfSupportError: If some r_s is unreachable
    """
    A = check_positive("total_activity", total_activity)
    r_s = np.atleast_1d(np.asarray(r_s, dtype=float))
    c = A * (1.0 - s)
    atoms = law.atoms()
    with np.errstate(divide="ignore", invalid="ignore"):
        if atoms is not None:
            z, w = atoms
            Z = np.broadcast_to(z, (r_s.size, z.size))
            diff = Z - r_s[:, None]
            ok = diff > 0.0
            logw = np.where(ok, np.log(w) + (1.0 - A) * np.log(Z) + (c - 1.0) * np.log(np.where(ok, diff, 1.0)), -np.inf)
        else:
            if not law.has_density:
                raise UnsupportedOperationError("conditional norm laws need an atomic law or a density")
            lo, top = law.support()[0], law.upper()
            v, wj = jacobi_rule(order, c - 1.0)
            span = np.maximum(top - r_s, 0.0)
            Z = r_s[:, None] + span[:, None] * v
            logw = np.log(wj) + c * np.log(span)[:, None] + law.log_pdf(Z) + (1.0 - A) * np.log(Z)
            below = r_s < lo
            if np.any(below):
                y, wg = np.polynomial.legendre.leggauss(order)
                Zg = np.broadcast_to(lo + 0.5 * (top - lo) * (y + 1.0), Z.shape)
                logg = (
                    np.log(0.5 * (top - lo) * wg)
                    + (c - 1.0) * np.log(Zg - r_s[:, None])
                    + law.log_pdf(Zg)
                    + (1.0 - A) * np.log(Zg)
                )
                Z = np.where(below[:, None], Zg, Z)
                logw = np.where(below[:, None], logg, logw)
        logw = np.where(np.isnan(logw), -np.inf, logw)
        norm = special.logsumexp(logw, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        bad = r_s[~np.isfinite(norm[:, 0])]
        raise OutOfSupportError("norm state(s) {} unreachable".format(bad[:5]))
    return np.array(Z), np.exp(logw - norm)


def terminal_ppf(law: GeneratingLaw, total_activity: float, s: float, r_s, u) -> np.ndarray:
    """Inverse CDF of nu_s1(.; r_s) row by row, one table per distinct r_s.

    Densities are cut into cells geometric in w = z - r_s.  On each cell the
    (z - r_s)^{c-1} factor is integrated exactly and the rest of the density
    is taken at the cell's midpoint in w^c, so the CDF is piecewise linear in
    w^c and inverted by interpolation.
    """
    A = check_positive("total_activity", total_activity)
    r_s = np.atleast_1d(np.asarray(r_s, dtype=float))
    u = np.broadcast_to(np.asarray(u, dtype=float), r_s.shape)
    if law.atoms() is not None:
        Z, W = terminal_discretization(law, A, s, r_s)
        cum = np.cumsum(W, axis=1)
        idx = np.minimum((cum < u[:, None]).sum(axis=1), Z.shape[1] - 1)
        return Z[np.arange(r_s.size), idx]
    if not law.has_density:
        raise UnsupportedOperationError("conditional norm laws need an atomic law or a density")
    c = A * (1.0 - s)
    lo, top = law.support()[0], law.upper()
    out = np.empty_like(r_s)
    starts, which = np.unique(r_s, return_inverse=True)
    for i, x0 in enumerate(starts):
        rows = which == i
        span = top - x0
        if span <= 0.0:
            raise OutOfSupportError("norm state {!r} unreachable".format(x0))
        w = np.concatenate([[0.0], span * np.geomspace(PPF_FLOOR, 1.0, PPF_CELLS)])
        if lo > x0:
            w = np.unique(np.append(w, lo - x0))
        V = w**c
        mid = x0 + (0.5 * (V[1:] + V[:-1])) ** (1.0 / c)
        with np.errstate(divide="ignore", invalid="ignore"):
            logm = law.log_pdf(mid) + (1.0 - A) * np.log(mid) + np.log(np.diff(V))
        logm = np.where((mid >= lo) & ~np.isnan(logm), logm, -np.inf)
        if not np.any(np.isfinite(logm)):
            raise OutOfSupportError("norm state {!r} unreachable".format(x0))
        mass = np.exp(logm - np.max(logm))
        cum = np.concatenate([[0.0], np.cumsum(mass)])
        out[rows] = x0 + np.interp(u[rows] * cum[-1], cum, V) ** (1.0 / c)
    return out


def norm_step_ppf(law: GeneratingLaw, total_activity: float, s: float, t: float, r_s, u) -> np.ndarray:
    """Inverse CDF of nu_st(.; r_s) for t < 1, row by row.

    Given R_1 = z the step is r_s + (z - r_s) B with B ~ Beta(T(t-s), T(1-t)),
    so the CDF is the nu_s1 mixture sum_j W_j I_{(r - r_s)/(z_j - r_s)}[T(t-s), T(1-t)],
    inverted by vectorised bisection.
    """
    A = check_positive("total_activity", total_activity)
    r_s = np.atleast_1d(np.asarray(r_s, dtype=float))
    u = np.broadcast_to(np.asarray(u, dtype=float), r_s.shape)
    Z, W = terminal_discretization(law, A, s, r_s, order=STEP_ORDER)
    a, b = A * (t - s), A * (1.0 - t)
    span = np.where(W > 0.0, Z - r_s[:, None], 0.0)
    safe = np.where(span > 0.0, span, 1.0)
    lo = np.zeros_like(r_s)
    hi = span.max(axis=1)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        frac = np.clip(mid[:, None] / safe, 0.0, 1.0)
        below = np.sum(W * special.betainc(a, b, frac), axis=1) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return r_s + 0.5 * (lo + hi)


class ConditionalNormLaw:
    """The law nu_st(.; r_s) of R_t given R_s = r_s.

    For t < 1 it has the density Psi_t(r)/Psi_s(r_s) f_{T(t-s)}(r - r_s); at
    t = 1 it is the measure psi_s(dr; r_s)/Psi_s(r_s), a density only when nu
    has one.
    """

    def __init__(self, law: GeneratingLaw, total_activity: float, s: float, t: float, r_s: float) -> None:
        if not 0.0 <= s < t <= 1.0:
            raise DomainError("need 0 <= s < t <= 1, got s={!r}, t={!r}".format(s, t))
        self.law = law
        self.total_activity = check_positive("total_activity", total_activity)
        self.s, self.t, self.r_s = float(s), float(t), float(r_s)
        self.log_psi_s = big_psi(law, self.total_activity, self.s, self.r_s).log_value

    def atoms(self) -> Optional[tuple]:
        if self.t < 1.0 or self.law.atoms() is None:
            return None
        Z, W = terminal_discretization(self.law, self.total_activity, self.s, [self.r_s])
        keep = W[0] > 0.0
        return Z[0][keep], W[0][keep]

    def log_density(self, r):
        A, s, t = self.total_activity, self.s, self.t
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if t < 1.0:
                safe = np.maximum(r, 0.0)
                out = log_big_psi(self.law, A, t, safe) - self.log_psi_s + log_gamma_pdf(A * (t - s), r - self.r_s)
            else:
                if not self.law.has_density:
                    raise UnsupportedOperationError("the terminal conditional law of an atomic law is a measure")
                c = A * (1.0 - s)
                out = (
                    log_gamma(A)
                    - log_gamma(c)
                    + self.r_s
                    + self.law.log_pdf(r)
                    + (1.0 - A) * np.log(r)
                    + (c - 1.0) * np.log(r - self.r_s)
                    - self.log_psi_s
                )
        out = np.where(r > self.r_s, out, -np.inf)
        return float(out) if out.ndim == 0 else out

    def density(self, r):
        out = np.exp(self.log_density(r))
        return float(out) if np.ndim(out) == 0 else out

    def _discretized(self, order: int = JACOBI_ORDER) -> tuple:
        Z, W = terminal_discretization(self.law, self.total_activity, self.s, [self.r_s], order)
        return Z[0], W[0]

    def _terminal_kernel(self, z: float) -> float:
        """The t = 1 density with its (z - r_s)^{c-1} factor removed."""
        c = self.total_activity * (1.0 - self.s)
        if z <= self.r_s:
            return 0.0
        return math.exp(float(self.log_density(z)) - (c - 1.0) * math.log(z - self.r_s))

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        A, s, t = self.total_activity, self.s, self.t
        if t == 1.0 and self.law.atoms() is not None:
            Z, W = self._discretized()
            out = np.sum(W * (Z <= r[..., None]), axis=-1)
        elif t == 1.0:
            upto = lambda v: _power_integral(self._terminal_kernel, self.r_s, v, A * (1.0 - s), tol=1e-8)
            out = np.vectorize(upto, otypes=[float])(r)
        else:
            Z, W = self._discretized()
            span = np.maximum(Z - self.r_s, 1e-300)
            frac = np.clip((r[..., None] - self.r_s) / span, 0.0, 1.0)
            out = np.sum(W * special.betainc(A * (t - s), A * (1.0 - t), frac), axis=-1)
        out = np.clip(out, 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def terminal_mean(self) -> float:
        """E[R_1 | R_s = r_s]."""
        Z, W = self._discretized()
        return float(np.dot(W, Z))

    def terminal_increment_second_moment(self) -> float:
        """E[(R_1 - R_s)^2 | R_s = r_s]."""
        Z, W = self._discretized()
        return float(np.dot(W, (Z - self.r_s) ** 2))

    def mean(self) -> float:
        frac = (self.t - self.s) / (1.0 - self.s)
        return self.r_s + frac * (self.terminal_mean() - self.r_s)

    def increment_second_moment(self) -> float:
        A, s, t = self.total_activity, self.s, self.t
        factor = (t - s) * (1.0 + A * (t - s)) / ((1.0 - s) * (1.0 + A * (1.0 - s)))
        return factor * self.terminal_increment_second_moment()

    def total_mass(self) -> float:
        """Total mass by quadrature; 1 up to the quadrature error."""
        if self.t < 1.0:
            return kernel_moment(self.law, self.total_activity, self.s, self.t, self.r_s)
        atoms = self.atoms()
        if atoms is not None:
            return float(np.sum(atoms[1]))
        c = self.total_activity * (1.0 - self.s)
        return _power_integral(self._terminal_kernel, self.r_s, self.law.support()[1], c, tol=1e-8)

    def ppf(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        r_s = np.full(u.shape, self.r_s)
        if self.t == 1.0:
            return terminal_ppf(self.law, self.total_activity, self.s, r_s, u)
        return norm_step_ppf(self.law, self.total_activity, self.s, self.t, r_s, u)

    def sample(self, rng: RngStream, size: int = 1) -> np.ndarray:
        return self.ppf(rng.generator.random(size))


def conditional_norm_law(
    law: GeneratingLaw, total_activity: float, s: float, t: float, r_s: float
) -> ConditionalNormLaw:
    """The conditional law nu_st of R_t given R_s = r_s.

    Raises:
        OutOfSupportError: If r_s is unreachable at time s
    """
    return ConditionalNormLaw(law, total_activity, s, t, r_s)


__all__ = [
    "GeneratingLaw",
    "PointMass",
    "FiniteMixture",
    "GammaLaw",
    "TabulatedDensity",
    "WilliamsonLaw",
    "ArchGenerator",
    "KernelEval",
    "ConditionalNormLaw",
    "exponential_generator",
    "power_generator",
    "clayton_generator",
    "survival_generator",
    "generator_from_dict",
    "marginal_survival",
    "survival_derivative",
    "survival_inverse",
    "williamson_inverse",
    "psi_kernel",
    "big_psi",
    "log_big_psi",
    "kernel_moment",
    "conditional_norm_law",
    "terminal_discretization",
    "terminal_ppf",
    "norm_step_ppf",
]
