"""Path samplers, transition densities, conditional moments, the measure
change and the uniform-marginal map of gamma bridges, gamma random bridges
(GRBs), Archimedean survival processes (ASPs) and Liouville processes.

Public APIs use process time in [0, 1]; master-process time [0, T] is
internal to the splitting samplers.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy import special
from tqdm import tqdm

from aspsim.dists import (
    DirichletParams,
    RngStream,
    dirichlet_density,
    log_gamma_pdf,
    sample_beta,
    sample_dirichlet,
    sample_log_gamma,
)
from aspsim.genlaw import (
    ConditionalNormLaw,
    GeneratingLaw,
    big_psi,
    log_big_psi,
    norm_step_ppf,
    psi_kernel,
    terminal_ppf,
)
from aspsim.specfun import integrate, kummer_m, log_gamma
from aspsim.util import DomainError, OutOfSupportError, UnsupportedOperationError, check_positive, fmt_real

logger = logging.getLogger(__name__)

MAX_STEPS = 10_000
MIN_BETA_SHAPE = 1e-3
BLOCK_SIZE = 4096
ATOM_RTOL = 1e-12

_clamp_warned = False


@dataclass(frozen=True)
class ProcessSpec:
    """An ASP (unit activities) or a Liouville process (activity vector m) with law nu."""

    kind: str
    m: tuple
    law: GeneratingLaw

    def __post_init__(self) -> None:
        if self.kind not in ("asp", "liouville"):
            raise DomainError("process kind must be 'asp' or 'liouville', got {!r}".format(self.kind))
        m = tuple(check_positive("activity", v) for v in np.ravel(self.m))
        if len(m) < 2:
            raise DomainError("a process needs dimension >= 2")
        if self.kind == "asp" and any(v != 1.0 for v in m):
            raise DomainError("an ASP has unit activities")
        object.__setattr__(self, "m", m)

    @classmethod
    def asp(cls, n: int, law: GeneratingLaw) -> "ProcessSpec":
        if int(n) != n or n < 2:
            raise DomainError("dimension n must be an integer >= 2")
        return cls("asp", (1.0,) * int(n), law)

    @classmethod
    def liouville(cls, m, law: GeneratingLaw) -> "ProcessSpec":
        return cls("liouville", tuple(m), law)

    @property
    def dim(self) -> int:
        return len(self.m)

    @property
    def activity(self) -> np.ndarray:
        return np.asarray(self.m)

    @property
    def total_activity(self) -> float:
        return float(sum(self.m))

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "law": self.law.to_dict()}
        if self.kind == "asp":
            doc["n"] = self.dim
        else:
            doc["m"] = list(self.m)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ProcessSpec":
        kind = doc.get("kind")
        law = GeneratingLaw.from_dict(doc.get("law"))
        if kind == "asp":
            return cls.asp(doc.get("n", 0), law)
        if kind == "liouville":
            return cls.liouville(doc.get("m", ()), law)
        raise DomainError("process kind must be 'asp' or 'liouville', got {!r}".format(kind))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times ending exactly at 1; a conditional grid may start at s > 0."""

    times: tuple

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float).ravel()
        if t.size < 2:
            raise DomainError("a time grid needs at least two points")
        if t.size - 1 > MAX_STEPS:
            raise DomainError("at most {} steps are allowed, got {}".format(MAX_STEPS, t.size - 1))
        if t[0] < 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0.0):
            raise DomainError("grid times must increase strictly from a start in [0, 1) to exactly 1")
        object.__setattr__(self, "times", tuple(t))

    @classmethod
    def uniform(cls, steps: int, start: float = 0.0) -> "TimeGrid":
        steps = int(steps)
        if not 1 <= steps <= MAX_STEPS:
            raise DomainError("steps must lie in [1, {}]".format(MAX_STEPS))
        t = np.linspace(start, 1.0, steps + 1)
        t[0], t[-1] = start, 1.0
        return cls(tuple(t))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.times)

    @property
    def start(self) -> float:
        return self.times[0]

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def index(self, t: float) -> int:
        """Position of the grid time t; DomainError if t is not on the grid."""
        hits = np.flatnonzero(np.isclose(self.array, t, rtol=0.0, atol=1e-12))
        if hits.size == 0:
            raise DomainError("time {!r} is not on the grid".format(t))
        return int(hits[0])


@dataclass(frozen=True, eq=False)
class MultiPath:
    """A batch of sampled paths.

    Attributes:
        grid: The time grid
        values: Array (paths, times, dim), every coordinate nondecreasing in time
        norm: Array (paths, times), the coordinate sums R_t
    """

    grid: TimeGrid
    values: np.ndarray
    norm: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[1] != len(self.grid.times):
            raise DomainError("path values must have shape (paths, {}, dim)".format(len(self.grid.times)))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "norm", v.sum(axis=-1))

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def at(self, t: float) -> np.ndarray:
        """State of every path at grid time t, shape (paths, dim)."""
        return self.values[:, self.grid.index(t), :]

    @classmethod
    def concat(cls, parts: list) -> "MultiPath":
        if not parts:
            raise DomainError("nothing to concatenate")
        return cls(parts[0].grid, np.concatenate([p.values for p in parts], axis=0))


class ConditionalMoments(NamedTuple):
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray


def _clamp_shape(shape):
    global _clamp_warned
    shape = np.asarray(shape, dtype=float)
    if np.any(shape < MIN_BETA_SHAPE):
        if not _clamp_warned:
            logger.warning("beta/gamma shapes below %g clamped; the time grid is too fine", MIN_BETA_SHAPE)
            _clamp_warned = True
        shape = np.maximum(shape, MIN_BETA_SHAPE)
    return shape


def _bridge_times(grid: Union[TimeGrid, np.ndarray], T_end: float) -> np.ndarray:
    if isinstance(grid, TimeGrid):
        return (grid.array - grid.start) / (1.0 - grid.start) * T_end
    t = np.asarray(grid, dtype=float)
    if t.size < 2 or t[0] != 0.0 or not np.isclose(t[-1], T_end, rtol=1e-14, atol=0.0) or np.any(np.diff(t) <= 0.0):
        raise DomainError("bridge times must increase strictly from 0 to T_end")
    return t


def sample_gamma_bridge(
    m: float, T_end: float, grid: Union[TimeGrid, np.ndarray], rng: RngStream, size: Optional[int] = None
) -> np.ndarray:
    """Sample gamma bridges on [0, T_end] by sequential beta splitting.

    The remaining distance 1 - x is multiplied at each step by an independent
    Beta(m(t - s), m(T_end - t)); the last value is pinned to exactly 1.  A
    TimeGrid is mapped linearly onto [0, T_end].

    Returns:
        Array (times,) when size is None, otherwise (size, times)
    """
    m = check_positive("m", m)
    T_end = check_positive("T_end", T_end)
    t = _bridge_times(grid, T_end)
    P = 1 if size is None else int(size)
    out = np.zeros((P, t.size))
    x = np.zeros(P)
    for k in range(1, t.size - 1):
        a = _clamp_shape(m * (t[k] - t[k - 1]))
        b = _clamp_shape(m * (T_end - t[k]))
        x = x + (1.0 - x) * sample_beta(a, b, rng, P)
        out[:, k] = x
    out[:, -1] = 1.0
    return out[0] if size is None else out


def sample_gamma_bridge_ratio(
    m: float, T_end: float, grid: Union[TimeGrid, np.ndarray], rng: RngStream, size: Optional[int] = None
) -> np.ndarray:
    """Sample gamma bridges as gamma_t / gamma_T of a raw gamma process.

    Increments are drawn in log space and accumulated with logaddexp, so
    tiny shapes do not underflow.
    """
    m = check_positive("m", m)
    T_end = check_positive("T_end", T_end)
    t = _bridge_times(grid, T_end)
    P = 1 if size is None else int(size)
    lg = sample_log_gamma(_clamp_shape(m * np.diff(t)), rng, (P, t.size - 1))
    cum = np.logaddexp.accumulate(lg, axis=1)
    out = np.concatenate([np.zeros((P, 1)), np.exp(cum - cum[:, -1:])], axis=1)
    out[:, -1] = 1.0
    return out[0] if size is None else out


def sample_grb(
    law: GeneratingLaw,
    m: float,
    T_end: float,
    grid: Union[TimeGrid, np.ndarray],
    rng: RngStream,
    size: Optional[int] = None,
) -> np.ndarray:
    """Sample a gamma random bridge R * gamma_{tT} with R ~ law."""
    P = 1 if size is None else int(size)
    r = np.atleast_1d(law.sample(rng, P))
    out = r[:, None] * sample_gamma_bridge(m, T_end, grid, rng, P)
    return out[0] if size is None else out


def _sample_split(spec: ProcessSpec, grid: TimeGrid, rng: RngStream, size: int) -> MultiPath:
    if grid.start != 0.0:
        raise DomainError("splitting samplers need a grid starting at 0")
    m = spec.activity
    cuts = np.concatenate([[0.0], np.cumsum(m)])
    pieces = [cuts[i] + m[i] * grid.array for i in range(spec.dim)]
    master = np.unique(np.concatenate(pieces))
    master[-1] = cuts[-1]
    idx = [np.searchsorted(master, p) for p in pieces]
    bridge = sample_gamma_bridge(1.0, cuts[-1], master, rng, size)
    r = np.atleast_1d(spec.law.sample(rng, size))
    gamma = r[:, None] * bridge
    values = np.stack([gamma[:, j] - gamma[:, j[:1]] for j in idx], axis=-1)
    return MultiPath(grid, values)


def sample_asp_split(spec: ProcessSpec, grid: TimeGrid, rng: RngStream, size: int = 1) -> MultiPath:
    """Sample an ASP by splitting a master GRB on [0, n] into unit-length pieces.

    xi^{(i)}_t = Gamma_{(i-1)+t} - Gamma_{i-1}.
    """
    if spec.kind != "asp":
        raise DomainError("sample_asp_split needs an ASP spec")
    return _sample_split(spec, grid, rng, size)


def sample_liouville_split(spec: ProcessSpec, grid: TimeGrid, rng: RngStream, size: int = 1) -> MultiPath:
    """Sample a Liouville process from a master GRB on [0, T] cut at u_i = u_{i-1} + m_i.

    xi^{(i)}_t = Gamma_{u_{i-1} + m_i t} - Gamma_{u_{i-1}}.
    """
    if spec.kind != "liouville":
        raise DomainError("sample_liouville_split needs a Liouville spec")
    return _sample_split(spec, grid, rng, size)


def sample_split(spec: ProcessSpec, grid: TimeGrid, rng: RngStream, size: int = 1) -> MultiPath:
    """The canonical sampler for either kind of process."""
    return _sample_split(spec, grid, rng, size)


def _start_state(spec: ProcessSpec, grid: TimeGrid, x_s) -> np.ndarray:
    if x_s is None:
        if grid.start != 0.0:
            raise DomainError("a grid starting at s > 0 needs a start state")
        return np.zeros(spec.dim)
    x = np.asarray(x_s, dtype=float).ravel()
    if x.size != spec.dim or np.any(x < 0.0):
        raise DomainError("start state must be a non-negative vector of length {}".format(spec.dim))
    return x


def sample_transition_stepping(
    spec: ProcessSpec, grid: TimeGrid, rng: RngStream, size: int = 1, x_s=None
) -> MultiPath:
    """Sample by stepping the Markov transition law along the grid.

    Each step draws R_t by inverse CDF of nu_st(.; R_s) and allocates the norm
    increment with an independent Dirichlet(m (t - s)) draw.  The returned
    paths are states and start at x_s (zero by default).
    """
    x0 = _start_state(spec, grid, x_s)
    T, m, law = spec.total_activity, spec.activity, spec.law
    big_psi(law, T, grid.start, float(x0.sum()))
    P = int(size)
    t = grid.array
    values = np.empty((P, t.size, spec.dim))
    values[:, 0, :] = x0
    r = np.full(P, x0.sum())
    for k in range(1, t.size):
        s, tk = t[k - 1], t[k]
        u = rng.generator.random(P)
        if k == t.size - 1:
            r_new = terminal_ppf(law, T, s, r, u)
        else:
            r_new = norm_step_ppf(law, T, s, tk, r, u)
        d = sample_dirichlet(DirichletParams(tuple(_clamp_shape(m * (tk - s)))), rng, P)
        values[:, k, :] = values[:, k - 1, :] + np.maximum(r_new - r, 0.0)[:, None] * d
        r = r_new
    return MultiPath(grid, values)


def sample_increment_representation(
    spec: ProcessSpec, s: float, x_s, grid: TimeGrid, rng: RngStream, size: int = 1
) -> MultiPath:
    """Sample the increment xi_t - xi_s after an observed state as R* D o gamma_t.

    R* ~ nu_s1(. + R_s) - R_s, D ~ Dirichlet((1 - s) m) and independent gamma
    bridges with activities m_i on [s, 1].

    Raises:
        OutOfSupportError: If x_s is unreachable
    """
    if not np.isclose(grid.start, s, rtol=0.0, atol=1e-12):
        raise DomainError("the grid must start at s={!r}".format(s))
    x = _start_state(spec, grid, x_s)
    T, m = spec.total_activity, spec.activity
    r_s = float(x.sum())
    big_psi(spec.law, T, s, r_s)
    P = int(size)
    r_star = terminal_ppf(spec.law, T, s, np.full(P, r_s), rng.generator.random(P)) - r_s
    d = sample_dirichlet(DirichletParams(tuple((1.0 - s) * m)), rng, P)
    bridges = np.stack([sample_gamma_bridge(mi, 1.0 - s, grid, rng, P) for mi in m], axis=-1)
    return MultiPath(grid, r_star[:, None, None] * d[:, None, :] * bridges)


def sample_reference_gamma(spec: ProcessSpec, grid: TimeGrid, rng: RngStream, size: int = 1) -> MultiPath:
    """n independent gamma processes with activities m: the reference measure."""
    P = int(size)
    dt = np.diff(grid.array)
    inc = rng.generator.gamma(np.outer(dt, spec.activity), size=(P, dt.size, spec.dim))
    values = np.concatenate([np.zeros((P, 1, spec.dim)), np.cumsum(inc, axis=1)], axis=1)
    return MultiPath(grid, values)


def simulate(
    sampler: Callable[..., MultiPath],
    *args,
    n_paths: int,
    seed: int,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
    progress: bool = False,
    **kwargs,
) -> MultiPath:
    """Run a sampler over fixed-size blocks of paths on a thread pool.

    Block b draws from RngStream(seed, b); blocks are reassembled in order, so
    the result depends on (seed, n_paths, block_size) but never on the number
    of threads.
    """
    n_paths = int(n_paths)
    if n_paths < 1:
        raise DomainError("n_paths must be positive")
    blocks = [(b, min(block_size, n_paths - lo)) for b, lo in enumerate(range(0, n_paths, block_size))]
    logger.info("simulating %d paths in %d blocks on %d threads", n_paths, len(blocks), threads)

    def run(block):
        key, count = block
        return sampler(*args, rng=RngStream(seed, key), size=count, **kwargs)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        parts = list(tqdm(pool.map(run, blocks), total=len(blocks), disable=not progress, desc="path blocks"))
    return MultiPath.concat(parts)


def grb_transition_density(law: GeneratingLaw, m: float, T_end: float, s: float, x: float, t: float, y: float) -> float:
    """Transition density of a GRB with activity m on [0, T_end].

    For t < T_end this is Psi_{t/T}(y)/Psi_{s/T}(x) f_{m(t-s)}(y - x) with total
    activity m T_end.  At t = T_end it is the measure psi(dy; x)/Psi(x): the atom
    weight at y for atomic laws, a density otherwise.

    Raises:
        OutOfSupportError: If x is unreachable at s
    """
    m = check_positive("m", m)
    T_end = check_positive("T_end", T_end)
    if not 0.0 <= s < t <= T_end:
        raise DomainError("need 0 <= s < t <= T_end")
    if x < 0.0:
        raise DomainError("x must be non-negative")
    A = m * T_end
    log_psi_s = float(log_big_psi(law, A, s / T_end, x))
    if log_psi_s == -math.inf:
        raise OutOfSupportError("state {!r} is unreachable at s={!r}".format(x, s))
    if y <= x:
        return 0.0
    if t < T_end:
        with np.errstate(divide="ignore"):
            lp = float(log_big_psi(law, A, t / T_end, y)) - log_psi_s + log_gamma_pdf(m * (t - s), y - x)
        return math.exp(lp)
    terminal = ConditionalNormLaw(law, A, s / T_end, 1.0, x)
    atoms = terminal.atoms()
    if atoms is not None:
        z, w = atoms
        hit = np.isclose(z, y, rtol=ATOM_RTOL, atol=0.0)
        return float(np.sum(w[hit]))
    return float(terminal.density(y))


def norm_transition_density(spec: ProcessSpec, s: float, x_norm: float, t: float, r: float) -> float:
    """Transition law of the norm process R_t, a GRB with activity T on [0, 1]."""
    return grb_transition_density(spec.law, spec.total_activity, 1.0, s, x_norm, t, r)


def _check_states(spec: ProcessSpec, x, y) -> tuple:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != spec.dim or y.size != spec.dim:
        raise DomainError("states must have length {}".format(spec.dim))
    if np.any(x < 0.0):
        raise DomainError("states must be non-negative")
    if np.any(y < x):
        raise DomainError("the target state decreases in some coordinate")
    return x, y


def asp_transition_density(spec: ProcessSpec, s: float, x, t: float, y) -> float:
    """Transition density Psi_t(|y|)/Psi_s(|x|) prod_i f_{m_i(t-s)}(y_i - x_i).

    At t = 1 the terminal form of terminal_transition_density is used.  For
    an atomic nu the terminal law is a measure on simplex slices; the value
    is then TerminalMeasure.density, the slice weight times the density of
    the first n-1 coordinates on the slice, and 0 off every slice.

    Raises:
        DomainError: For a componentwise decrease
        OutOfSupportError: If |x| is unreachable at s or |y| at t
    """
    if not 0.0 <= s < t <= 1.0:
        raise DomainError("need 0 <= s < t <= 1")
    x, y = _check_states(spec, x, y)
    if t == 1.0 and spec.law.atoms() is not None:
        return terminal_transition_measure(spec, s, x).density(y)
    if t == 1.0:
        return terminal_transition_density(spec, s, x, y)
    T = spec.total_activity
    log_s = big_psi(spec.law, T, s, float(x.sum())).log_value
    log_t = big_psi(spec.law, T, t, float(y.sum())).log_value
    with np.errstate(divide="ignore"):
        lp = log_t - log_s + float(np.sum(log_gamma_pdf(spec.activity * (t - s), y - x)))
    return math.exp(lp)


def terminal_transition_density(spec: ProcessSpec, s: float, x, z) -> float:
    """Density of xi_1 given xi_s = x for a law with density p:

    Γ(T) e^{|x|} p(|z|) / (Psi_s(|x|) |z|^{T-1}) prod_i (z_i - x_i)^{m_i(1-s)-1} / Γ(m_i(1-s))

    Raises:
        UnsupportedOperationError: For atomic laws (use terminal_transition_measure or terminal_transition_mixed)
    """
    if not spec.law.has_density:
        raise UnsupportedOperationError("the terminal transition of an atomic law is a measure")
    if not 0.0 <= s < 1.0:
        raise DomainError("need 0 <= s < 1")
    x, z = _check_states(spec, x, z)
    T, m = spec.total_activity, spec.activity
    rx, rz = float(x.sum()), float(z.sum())
    log_s = big_psi(spec.law, T, s, rx).log_value
    shapes = m * (1.0 - s)
    with np.errstate(divide="ignore"):
        lp = (
            log_gamma(T)
            + rx
            + float(spec.law.log_pdf(rz))
            - log_s
            - (T - 1.0) * math.log(rz)
            + float(np.sum(special.xlogy(shapes - 1.0, z - x) - special.gammaln(shapes)))
        )
    return math.exp(lp) if np.isfinite(lp) else 0.0


class TerminalMeasure(NamedTuple):
    """Law of xi_1 given xi_s = x for an atomic nu.

    It puts mass ``weights[j]`` on the simplex slice {z >= x, |z| = norms[j]},
    spread over it as x + (norms[j] - |x|) D with D ~ Dirichlet(``shapes``).
    """

    start: np.ndarray
    norms: np.ndarray
    weights: np.ndarray
    shapes: np.ndarray

    def density(self, z) -> float:
        """Slice weight times the density of (z_1, ..., z_{n-1}) on the slice through z.

        Zero when |z| matches no atom (relative tolerance 1e-12).
        """
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.start.size or np.any(z < self.start):
            raise DomainError("the target state must dominate the start state")
        hit = np.flatnonzero(np.isclose(self.norms, z.sum(), rtol=ATOM_RTOL, atol=0.0))
        if hit.size == 0:
            return 0.0
        j = int(hit[0])
        span = float(self.norms[j] - self.start.sum())
        frac = (z - self.start) / span
        # the tail coordinate is implied by the slice
        return float(self.weights[j] * dirichlet_density(DirichletParams(self.shapes), frac[:-1]) / span ** (z.size - 1))


def terminal_transition_measure(spec: ProcessSpec, s: float, x) -> TerminalMeasure:
    """The terminal law of xi_1 given xi_s = x as a TerminalMeasure.

    Raises:
        UnsupportedOperationError: If nu is not atomic
        OutOfSupportError: If |x| is unreachable at s
    """
    if spec.law.atoms() is None:
        raise UnsupportedOperationError("terminal measures are built for atomic laws; use terminal_transition_density")
    if not 0.0 <= s < 1.0:
        raise DomainError("need 0 <= s < 1")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.dim or np.any(x < 0.0):
        raise DomainError("the start state must be non-negative of length {}".format(spec.dim))
    z, w = ConditionalNormLaw(spec.law, spec.total_activity, s, 1.0, float(x.sum())).atoms()
    return TerminalMeasure(x, np.asarray(z, dtype=float), np.asarray(w, dtype=float), spec.activity * (1.0 - s))


def terminal_transition_mixed(spec: ProcessSpec, s: float, x, z_head, B: tuple) -> float:
    """Density in the first n-1 terminal coordinates times the probability of z_n in B.

    psi_tau(B + sum z_head; x_n + sum z_head) / Psi_s(|x|) prod_{i<n} f_{m_i(1-s)}(z_i - x_i)
    with kernel time tau = 1 - m_n (1 - s)/T.  Defined for atomic laws too.
    """
    if not 0.0 <= s < 1.0:
        raise DomainError("need 0 <= s < 1")
    x = np.asarray(x, dtype=float).ravel()
    head = np.asarray(z_head, dtype=float).ravel()
    if x.size != spec.dim or head.size != spec.dim - 1:
        raise DomainError("need a full start state and n-1 terminal coordinates")
    if np.any(head < x[:-1]):
        raise DomainError("the target state decreases in some coordinate")
    T, m = spec.total_activity, spec.activity
    tau = 1.0 - m[-1] * (1.0 - s) / T
    shift = float(head.sum())
    log_s = big_psi(spec.law, T, s, float(x.sum())).log_value
    mass = psi_kernel(spec.law, T, tau, x[-1] + shift, (B[0] + shift, B[1] + shift))
    if mass <= 0.0:
        return 0.0
    with np.errstate(divide="ignore"):
        lp = math.log(mass) - log_s + float(np.sum(log_gamma_pdf(m[:-1] * (1.0 - s), head - x[:-1])))
    return math.exp(lp)


def conditional_moments(spec: ProcessSpec, s: float, x, t: float) -> ConditionalMoments:
    """Mean, variance and covariance of xi_t given xi_s = x.

    mu_1 = (t-s)/(1-s) (E[R_1|R_s] - R_s)
    mu_2 = (t-s)(1+T(t-s)) / ((1-s)(1+T(1-s))) E[(R_1-R_s)^2|R_s]
    """
    if not 0.0 <= s < t <= 1.0:
        raise DomainError("need 0 <= s < t <= 1")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.dim or np.any(x < 0.0):
        raise DomainError("state must be a non-negative vector of length {}".format(spec.dim))
    T, m = spec.total_activity, spec.activity
    r_s = float(x.sum())
    terminal = ConditionalNormLaw(spec.law, T, s, 1.0, r_s)
    e1 = terminal.terminal_mean()
    e2 = terminal.terminal_increment_second_moment()
    if not (np.isfinite(e1) and np.isfinite(e2)):
        raise UnsupportedOperationError("the generating law has no finite second moment")
    dt = t - s
    mu1 = dt / (1.0 - s) * (e1 - r_s)
    mu2 = dt * (1.0 + T * dt) / ((1.0 - s) * (1.0 + T * (1.0 - s))) * e2
    w = m / T
    mean = x + w * mu1
    var = w * ((m * dt + 1.0) / (T * dt + 1.0) * mu2 - w * mu1**2)
    cov = np.outer(m, m) * dt / T * (mu2 / (T * dt + 1.0) - mu1**2 / (T * dt))
    np.fill_diagonal(cov, var)
    return ConditionalMoments(mean, var, cov)


def measure_change_density(spec: ProcessSpec, t: float, r_t: float) -> float:
    """dP/dQ on F_t, i.e. Psi_t(R_t), with Q making the coordinates independent gamma processes.

    Raises:
        OutOfSupportError: If r_t is unreachable
    """
    if not 0.0 <= t < 1.0:
        raise DomainError("the density process is defined for t in [0, 1)")
    return big_psi(spec.law, spec.total_activity, t, r_t).value


def uniform_map(spec: ProcessSpec, t: float, x) -> np.ndarray:
    """Map states to [0, 1]^n by the marginal survival functions at time t.

    F_t(x) = int_{(x, inf)} I_{1-x/y}[T - m_i t, m_i t] nu(dy)
    """
    if not 0.0 < t <= 1.0:
        raise DomainError("the uniform map is defined for t in (0, 1]")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim or np.any(x < 0.0):
        raise DomainError("states must be non-negative with {} coordinates".format(spec.dim))
    T, m = spec.total_activity, spec.activity
    a, b = T - m * t, m * t
    atoms = spec.law.atoms()
    if atoms is not None:
        z, w = atoms
        frac = np.clip(1.0 - x[..., None] / z, 0.0, 1.0)
        return np.sum(w * special.betainc(a[:, None], b[:, None], frac), axis=-1)
    hi = spec.law.support()[1]

    def one(xi: float, ai: float, bi: float) -> float:
        if xi == 0.0:
            return 1.0
        f = lambda y: float(special.betainc(ai, bi, 1.0 - xi / y)) * float(spec.law.pdf(y))
        lo = max(xi, spec.law.support()[0])
        return integrate(f, a=lo, b=hi).value if lo < hi else 0.0

    vec = np.vectorize(one, otypes=[float])
    return vec(x, np.broadcast_to(a, x.shape), np.broadcast_to(b, x.shape))


def gamma_bridge_increment_cf(m: float, T_end: float, s: float, x: float, t: float, lam: float) -> complex:
    """E[exp(i lam (gamma_t - gamma_s)) | gamma_s = x] = M[m(t-s), m(T-s), i(1-x) lam]."""
    m = check_positive("m", m)
    if not 0.0 <= s < t <= T_end:
        raise DomainError("need 0 <= s < t <= T_end")
    if not 0.0 <= x < 1.0:
        raise DomainError("bridge state must lie in [0, 1)")
    return complex(kummer_m(m * (t - s), m * (T_end - s), 1j * (1.0 - x) * lam))


def _path_header(dim: int) -> list:
    return ["t"] + ["xi_{}".format(i + 1) for i in range(dim)] + ["R"]


def write_paths_csv(paths: MultiPath, target: str, layout: str = "long") -> list:
    """Write paths as CSV, one row per grid time.

    ``long`` writes a single file with a leading path_id column; ``wide``
    writes target/path_<id>.csv per path.

    Returns:
        The files written
    """
    t = paths.grid.times
    if layout == "long":
        with open(target, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["path_id"] + _path_header(paths.dim))
            for p in range(paths.n_paths):
                for k, tk in enumerate(t):
                    w.writerow([p, fmt_real(tk)] + [fmt_real(v) for v in paths.values[p, k]] + [fmt_real(paths.norm[p, k])])
        return [target]
    if layout != "wide":
        raise DomainError("layout must be 'long' or 'wide'")
    os.makedirs(target, exist_ok=True)
    written = []
    for p in range(paths.n_paths):
        name = os.path.join(target, "path_{:06d}.csv".format(p))
        with open(name, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(_path_header(paths.dim))
            for k, tk in enumerate(t):
                w.writerow([fmt_real(tk)] + [fmt_real(v) for v in paths.values[p, k]] + [fmt_real(paths.norm[p, k])])
        written.append(name)
    return written


def write_paths_json(paths: MultiPath, target: str) -> list:
    doc = {
        "grid": list(paths.grid.times),
        "paths": [
            {"path_id": p, "values": paths.values[p].tolist(), "norm": paths.norm[p].tolist()}
            for p in range(paths.n_paths)
        ],
    }
    with open(target, "w") as f:
        json.dump(doc, f)
    return [target]
