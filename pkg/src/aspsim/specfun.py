"""Special functions and quadrature used throughout aspsim.

Everything here is a pure function of its inputs.  Density work elsewhere in
the package is carried out in log space, so the gamma/beta helpers come in
log form.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, special

from aspsim.util import DomainError, NumericError

logger = logging.getLogger(__name__)

# Kummer series: stop after this many consecutive negligible terms, hard cap on terms.
KUMMER_REL_TOL = 1e-16
KUMMER_QUIET_TERMS = 3
KUMMER_MAX_TERMS = 10_000
KUMMER_RADIUS = 700.0
# Accuracy every Kummer evaluation route must reach; QUADPACK subdivisions for the Euler integral.
KUMMER_RTOL = 1e-10
KUMMER_QUAD_LIMIT = 2000

INV_BETA_TOL = 1e-10

Number = Union[float, complex]


@dataclass(frozen=True)
class QuadratureRule:
    """A quadrature rule on the reference interval [0, 1].

    ``fixed-grid`` rules integrate with the stored nodes/weights replicated over
    ``panels`` equal sub-intervals and estimate the error by halving the panels.
    ``adaptive-subdivision`` rules hand the integrand to QUADPACK with the stored
    tolerances; their nodes are the base panel used for sanity checks.

    Attributes:
        nodes: Abscissae on [0, 1], strictly increasing
        weights: Positive weights summing to 1
        kind: "fixed-grid" or "adaptive-subdivision"
        panels: Number of sub-intervals for fixed-grid integration
        epsabs: Absolute tolerance
        epsrel: Relative tolerance
        limit: Maximum number of subdivisions for adaptive integration
    """

    nodes: tuple
    weights: tuple
    kind: str = "adaptive-subdivision"
    panels: int = 1
    epsabs: float = 1e-11
    epsrel: float = 1e-11
    limit: int = 200

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if self.kind not in ("fixed-grid", "adaptive-subdivision"):
            raise DomainError("unknown quadrature kind {!r}".format(self.kind))
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise DomainError("nodes and weights must be 1-d of equal length")
        if np.any(np.diff(nodes) <= 0.0):
            raise DomainError("quadrature nodes must be strictly increasing")
        if np.any(weights <= 0.0):
            raise DomainError("quadrature weights must be positive")
        if self.panels < 1:
            raise DomainError("panels must be >= 1")

    @classmethod
    def gauss_legendre(cls, order: int = 20, panels: int = 8, **kw) -> "QuadratureRule":
        """Composite Gauss-Legendre rule with ``order`` nodes per panel."""
        x, w = np.polynomial.legendre.leggauss(order)
        return cls(tuple(0.5 * (x + 1.0)), tuple(0.5 * w), kind="fixed-grid", panels=panels, **kw)

    @classmethod
    def adaptive(cls, epsabs: float = 1e-11, epsrel: float = 1e-11, limit: int = 200) -> "QuadratureRule":
        x, w = np.polynomial.legendre.leggauss(21)
        return cls(
            tuple(0.5 * (x + 1.0)),
            tuple(0.5 * w),
            kind="adaptive-subdivision",
            epsabs=epsabs,
            epsrel=epsrel,
            limit=limit,
        )

    def _fixed(self, g: Callable, lo: float, hi: float, panels: int) -> float:
        nodes = np.asarray(self.nodes)
        weights = np.asarray(self.weights)
        edges = np.linspace(lo, hi, panels + 1)
        width = np.diff(edges)
        x = (edges[:-1, None] + width[:, None] * nodes[None, :]).ravel()
        fx = np.asarray(g(x), dtype=float).reshape(panels, nodes.size)
        return float(np.sum(width[:, None] * weights[None, :] * fx))


DEFAULT_RULE = QuadratureRule.adaptive()


class IntegrationResult(NamedTuple):
    value: float
    abserr: float


def log_gamma(x):
    """Return ln Γ(x) for x > 0.

    Args:
        x: Positive real (or array of them)

    Returns:
        ln Γ(x), a float for scalar input

    Raises:
        DomainError: If any x is non-positive or non-finite
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError("log_gamma requires finite x > 0, got {!r}".format(x))
    out = special.gammaln(arr)
    return float(out) if out.ndim == 0 else out


def log_beta(a, b):
    """Return ln B(a, b) = ln Γ(a) + ln Γ(b) - ln Γ(a+b)."""
    aa = np.asarray(a, dtype=float)
    bb = np.asarray(b, dtype=float)
    return log_gamma(aa) + log_gamma(bb) - log_gamma(aa + bb)


def _check_beta_params(a, b) -> None:
    if not (np.all(np.asarray(a) > 0) and np.all(np.asarray(b) > 0)):
        raise DomainError("beta parameters must be positive, got a={!r}, b={!r}".format(a, b))


def reg_inc_beta(z, a, b):
    """Regularized incomplete beta function I_z[a, b].

    scipy's ``betainc`` evaluates the continued fraction with the usual
    symmetry switch at z = a/(a+b).

    Raises:
        DomainError: If z is outside [0, 1] or a, b are not positive
    """
    zz = np.asarray(z, dtype=float)
    if np.any(~(zz >= 0.0)) or np.any(zz > 1.0):
        raise DomainError("reg_inc_beta requires 0 <= z <= 1, got {!r}".format(z))
    _check_beta_params(a, b)
    out = special.betainc(a, b, zz)
    return float(out) if np.ndim(out) == 0 else out


def inv_reg_inc_beta(p: float, a: float, b: float) -> float:
    """Return z with I_z[a, b] = p to within 1e-10.

    Starts from scipy's ``betaincinv`` and falls back to a bracketed Brent
    search on [0, 1] when the residual is too large.
    """
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise DomainError("inv_reg_inc_beta requires 0 <= p <= 1, got {!r}".format(p))
    _check_beta_params(a, b)
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    z = float(special.betaincinv(a, b, p))
    if math.isfinite(z) and abs(special.betainc(a, b, z) - p) <= INV_BETA_TOL:
        return z
    logger.debug("betaincinv residual too large for (p=%g, a=%g, b=%g); bracketing", p, a, b)
    return float(optimize.brentq(lambda u: special.betainc(a, b, u) - p, 0.0, 1.0, xtol=1e-15, rtol=4e-16))


def _kummer_series(a: float, b: float, zc: complex) -> tuple:
    term = 1.0 + 0.0j
    total = 1.0 + 0.0j
    biggest = 1.0
    quiet = 0
    for k in range(KUMMER_MAX_TERMS):
        term *= (a + k) / (b + k) * zc / (k + 1)
        total += term
        biggest = max(biggest, abs(term))
        if abs(term) <= KUMMER_REL_TOL * abs(total):
            quiet += 1
            if quiet >= KUMMER_QUIET_TERMS:
                return total, biggest
        else:
            quiet = 0
    raise NumericError(
        "Kummer series did not converge",
        {"a": a, "b": b, "z": zc, "terms": KUMMER_MAX_TERMS, "partial_sum": total, "last_term": term},
    )


def _divergent_sum(p: float, q: float, w: complex) -> tuple:
    """Sum (p)_s (q)_s / s! w^s up to its smallest term; return (sum, error bound)."""
    term = 1.0 + 0.0j
    total = 1.0 + 0.0j
    for s in range(KUMMER_MAX_TERMS):
        nxt = term * (p + s) * (q + s) / (s + 1) * w
        if nxt == 0.0:
            return total, 0.0
        if abs(nxt) >= abs(term):
            return total, abs(term)
        total += nxt
        term = nxt
        if abs(term) <= KUMMER_REL_TOL * abs(total):
            return total, abs(term)
    return total, abs(term)


def _kummer_asymptotic(a: float, b: float, zc: complex) -> tuple:
    # large-|z| expansion, valid for Re(z) >= 0 on either side of the real axis
    sign = 1.0 if zc.imag >= 0.0 else -1.0
    log_z = cmath.log(zc)
    first = special.gamma(b) * special.rgamma(b - a) * cmath.exp(sign * 1j * math.pi * a - a * log_z)
    second = special.gamma(b) * special.rgamma(a) * cmath.exp(zc + (a - b) * log_z)
    s1, e1 = _divergent_sum(a, a - b + 1.0, -1.0 / zc)
    s2, e2 = _divergent_sum(b - a, 1.0 - a, 1.0 / zc)
    return first * s1 + second * s2, abs(first) * e1 + abs(second) * e2


def _kummer_integral(a: float, b: float, zc: complex) -> tuple:
    # M = Γ(b)/(Γ(a)Γ(b-a)) ∫_0^1 e^{zu} u^{a-1} (1-u)^{b-a-1} du, scaled by e^{-Re z}
    shift = max(zc.real, 0.0)
    parts = []
    for pick in (lambda w: w.real, lambda w: w.imag):
        value, abserr = sp_integrate.quad(
            lambda u: pick(cmath.exp(zc * u - shift)),
            0.0,
            1.0,
            weight="alg",
            wvar=(a - 1.0, b - a - 1.0),
            epsabs=0.0,
            epsrel=1e-13,
            limit=KUMMER_QUAD_LIMIT,
        )
        parts.append((value, abserr))
    scale = math.exp(shift - log_beta(a, b - a))
    value = complex(parts[0][0], parts[1][0]) * scale
    return value, (parts[0][1] + parts[1][1]) * scale


def kummer_m(
    a: float, b: float, z: Number, radius: float = KUMMER_RADIUS, rtol: float = KUMMER_RTOL
) -> Number:
    """Kummer's confluent hypergeometric function M[a, b, z].

    For Re(z) < 0 the evaluation works on M[b-a, b, -z] times e^z (Kummer's
    transformation).  The power series is used while its cancellation loss,
    the largest term over the sum, keeps the rounding error below ``rtol``.
    Otherwise (large imaginary parts) the large-|z| expansion is summed up to
    its smallest term, and when that is not accurate enough and b > a the
    Euler integral is evaluated by QUADPACK.

    Args:
        a: Positive real
        b: Positive real (a non-positive integer is rejected)
        z: Real or complex argument with |z| <= radius
        radius: Largest supported modulus of z
        rtol: Relative accuracy every evaluation route must reach

    Returns:
        M[a, b, z], a float for real z and a complex for complex z

    Raises:
        DomainError: If b is a non-positive integer or |z| exceeds the radius
        NumericError: If no evaluation route reaches ``rtol``; the diagnostics
            carry the series loss and the error estimates of each route
    """
    if b <= 0 and float(b).is_integer():
        raise DomainError("kummer_m undefined for non-positive integer b={!r}".format(b))
    if a <= 0 or b <= 0:
        raise DomainError("kummer_m requires positive real a, b")
    is_complex = isinstance(z, complex) or np.iscomplexobj(z)
    zc = complex(z)
    if abs(zc) > radius:
        raise DomainError("|z|={:g} exceeds the configured radius {:g}".format(abs(zc), radius))
    prefactor = 1.0 + 0.0j
    if zc.real < 0.0:
        prefactor = cmath.exp(zc)
        a, zc = b - a, -zc

    total, biggest = _kummer_series(a, b, zc)
    loss = biggest / abs(total) if total != 0.0 else math.inf
    diagnostics = {"a": a, "b": b, "z": zc, "series_sum": total, "series_max_term": biggest, "loss": loss}
    value = None
    if loss * np.finfo(float).eps <= rtol:
        value = total
    else:
        approx, err = _kummer_asymptotic(a, b, zc)
        diagnostics.update(asymptotic=approx, asymptotic_err=err)
        if err <= rtol * abs(approx):
            value = approx
        elif b > a > 0.0:
            approx, err = _kummer_integral(a, b, zc)
            diagnostics.update(integral=approx, integral_err=err)
            if err <= rtol * abs(approx):
                value = approx
    if value is None:
        raise NumericError("Kummer function lost accuracy to cancellation", diagnostics)
    value = prefactor * value
    return value if is_complex else value.real


def integrate(
    f: Callable,
    rule: QuadratureRule = DEFAULT_RULE,
    a: float = 0.0,
    b: float = math.inf,
    tol: float = 1e-8,
) -> IntegrationResult:
    """Integrate f over [a, b], b possibly +inf.

    A semi-infinite range is mapped to [0, 1) by x = a + u/(1-u).  Fixed-grid
    rules need ``f`` to accept numpy arrays; adaptive rules call it on scalars.

    Args:
        f: Real-valued integrand, finite on (a, b)
        rule: Quadrature rule
        a: Lower limit
        b: Upper limit or math.inf
        tol: Largest acceptable absolute error estimate

    Returns:
        IntegrationResult(value, abserr)

    Raises:
        NumericError: If the error estimate exceeds tol; the estimate is attached
    """
    if b < a:
        raise DomainError("integrate requires a <= b")
    if b == a:
        return IntegrationResult(0.0, 0.0)
    if math.isinf(b):

        def g(u):
            u = np.asarray(u, dtype=float)
            x = a + u / (1.0 - u)
            out = np.asarray(f(x), dtype=float) / (1.0 - u) ** 2
            return out if out.ndim else float(out)

        lo, hi = 0.0, 1.0
    else:
        g, lo, hi = f, a, b

    if rule.kind == "fixed-grid":
        coarse = rule._fixed(g, lo, hi, rule.panels)
        value = rule._fixed(g, lo, hi, 2 * rule.panels)
        abserr = abs(value - coarse)
    else:
        value, abserr = sp_integrate.quad(
            g, lo, hi, epsabs=rule.epsabs, epsrel=rule.epsrel, limit=rule.limit
        )
    if not math.isfinite(value) or abserr > tol:
        raise NumericError(
            "quadrature error estimate {:.3g} above tolerance {:.3g}".format(abserr, tol),
            {"value": value, "abserr": abserr, "a": a, "b": b, "kind": rule.kind},
        )
    return IntegrationResult(float(value), float(abserr))


def integrate_singular(
    f: Callable[[float], float], a: float, b: float, alpha: float, beta: float, tol: float = 1e-8
) -> IntegrationResult:
    """Integrate f(x) (x-a)^alpha (b-x)^beta over a finite [a, b].

    The algebraic end-point factors are handled by QUADPACK's QAWS weight, so
    f only has to be smooth.  alpha, beta > -1.
    """
    if not (alpha > -1.0 and beta > -1.0):
        raise DomainError("end-point exponents must exceed -1")
    if b <= a:
        return IntegrationResult(0.0, 0.0)
    value, abserr = sp_integrate.quad(
        f, a, b, weight="alg", wvar=(alpha, beta), epsabs=1e-13, epsrel=1e-12, limit=200
    )
    if not math.isfinite(value) or abserr > tol:
        raise NumericError(
            "singular quadrature error estimate {:.3g} above tolerance".format(abserr),
            {"value": value, "abserr": abserr, "a": a, "b": b, "alpha": alpha, "beta": beta},
        )
    return IntegrationResult(float(value), float(abserr))


@lru_cache(maxsize=256)
def jacobi_rule(order: int, beta: float) -> tuple:
    """Gauss-Jacobi nodes/weights for the weight v^beta on [0, 1].

    Cached: the kernels call this once per (order, exponent) pair.
    """
    y, w = special.roots_jacobi(order, 0.0, beta)
    nodes = 0.5 * (y + 1.0)
    weights = w * 0.5 ** (beta + 1.0)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights
