"""Discrete-time path machinery: grids, compact path classes, causal maps.

Paths are stored on finite windows of a time grid containing t_0 = 0;
evaluation outside the stored window raises instead of zero-extending,
because silent extension would fake infinite-past semantics.

Beyond the data types, this module provides

* membership tests (with slack reports) for the five compact path classes,
* finite-memory causal maps assembled from encoder/decoder pairs,
  including the one-step SDE kernel map, the two-step adapted variant,
  and the truncated infinite-memory map,
* the per-class compression-rate formulas used to normalize errors
  outside a finite horizon,
* seeded Euler-Maruyama path simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import DomainError, OutOfWindowError, UnsupportedError
from .measures import DiscreteMeasure, PathMeasure
from .metrics import convergent_power_sum


# ---------------------------------------------------------------------------
# time grids and path windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing finite window of times containing t_0 = 0."""

    times: np.ndarray
    zero_index: int

    @property
    def delta_minus(self) -> float:
        return float(np.min(np.diff(self.times)))

    @property
    def delta_plus(self) -> float:
        return float(np.max(np.diff(self.times)))

    def time_at(self, n: int) -> float:
        i = n + self.zero_index
        if not 0 <= i < len(self.times):
            raise OutOfWindowError(f"index {n} outside stored window")
        return float(self.times[i])

    @property
    def index_range(self) -> tuple[int, int]:
        return -self.zero_index, len(self.times) - 1 - self.zero_index

    def to_json(self) -> dict:
        return {"times": self.times.tolist(), "zero_index": int(self.zero_index)}


def grid_validate(times) -> TimeGrid:
    """Validate a window: strictly increasing, finite, containing 0."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.size < 2:
        raise DomainError("grid window needs at least two times")
    if not np.all(np.isfinite(t)):
        raise DomainError("times must be finite")
    if np.any(np.diff(t) <= 0.0):
        raise DomainError("times must be strictly increasing")
    zeros = np.nonzero(t == 0.0)[0]
    if zeros.size != 1:
        raise DomainError("the window must contain t_0 = 0 exactly once")
    grid = TimeGrid(t, int(zeros[0]))
    grid.times.setflags(write=False)
    return grid


def uniform_grid(n_past: int, n_future: int, dt: float = 1.0) -> TimeGrid:
    return grid_validate(np.arange(-n_past, n_future + 1) * dt)


@dataclass
class PathWindow:
    """Values x_{t_a}, ..., x_{t_b} on a grid window with a <= 0 <= b."""

    grid: TimeGrid
    values: np.ndarray
    offset: int  # index a of the first stored value

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        lo, hi = self.grid.index_range
        if self.offset < lo or self.offset > 0:
            raise DomainError("window must start at an index a <= 0 inside the grid")
        last = self.offset + len(self.values) - 1
        if last > hi or last < 0:
            raise DomainError("window must reach an index b >= 0 inside the grid")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def first_index(self) -> int:
        return self.offset

    @property
    def last_index(self) -> int:
        return self.offset + len(self.values) - 1

    def at(self, n: int) -> np.ndarray:
        if not self.first_index <= n <= self.last_index:
            raise OutOfWindowError(f"index {n} outside window [{self.first_index}, {self.last_index}]")
        return self.values[n - self.offset]

    def segment(self, n_from: int, n_to: int) -> np.ndarray:
        if n_from < self.first_index or n_to > self.last_index:
            raise OutOfWindowError(
                f"segment [{n_from}, {n_to}] outside window "
                f"[{self.first_index}, {self.last_index}]"
            )
        return self.values[n_from - self.offset : n_to - self.offset + 1]

    def to_json(self) -> dict:
        return {
            "times": self.grid.times.tolist(),
            "values": self.values.tolist(),
            "offset": int(self.offset),
        }

    @staticmethod
    def from_json(obj: dict) -> "PathWindow":
        return PathWindow(grid_validate(obj["times"]), np.asarray(obj["values"], float),
                          int(obj["offset"]))


# ---------------------------------------------------------------------------
# compact sets in the state space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, float))
        hi = np.atleast_1d(np.asarray(self.upper, float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise DomainError("invalid box bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def distance(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, float))
        gap = np.maximum(np.maximum(self.lower - x, x - self.upper), 0.0)
        return float(np.linalg.norm(gap))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True)
class BallSet:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, float))
        if self.radius < 0:
            raise DomainError("radius must be nonnegative")
        object.__setattr__(self, "center", c)

    def distance(self, x) -> float:
        return max(0.0, float(np.linalg.norm(np.atleast_1d(x) - self.center)) - self.radius)

    def diameter(self) -> float:
        return 2.0 * self.radius


# ---------------------------------------------------------------------------
# path classes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KZ:
    """Paths confined to a fixed compact set at every time."""
    K: object

    tag: str = field(default="kz", init=False)


@dataclass(frozen=True)
class KInf:
    """Present in K and per-step increments with |dx|^p <= C |dt|."""
    K: object
    C: float
    p: float

    tag: str = field(default="kinf", init=False)

    def __post_init__(self):
        if self.C <= 0 or self.p <= 0:
            raise DomainError("C and p must be positive")


@dataclass(frozen=True)
class KAlpha:
    """Present in K and weighted p-variation summing below C.

    The weight exponent must satisfy alpha < 1 - p so that the induced
    compression-rate series converges (alpha / (p-1) < -1).
    """
    K: object
    C: float
    p: float
    alpha: float

    tag: str = field(default="kalpha", init=False)

    def __post_init__(self):
        if self.C <= 0 or self.p <= 1:
            raise DomainError("C must be positive and p > 1")
        if not self.alpha < 1 - self.p:
            raise DomainError("need alpha < 1 - p")


@dataclass(frozen=True)
class KW:
    """Within w(|i|) of the compact K at every index i; w nondecreasing."""
    K: object
    w: Callable[[int], float]

    tag: str = field(default="kw", init=False)


@dataclass(frozen=True)
class KExp:
    """Exponential-envelope class: |x_0| <= C_0 and, for n >= 1,
    |x_{t_n}| <= (C_star / sqrt(eps)) sqrt(C_n) exp(-n C_n delta_minus / 2)."""
    C0: float
    Cstar: float
    Cn: Callable[[int], float]
    eps: float
    delta_minus: float

    tag: str = field(default="kexp", init=False)

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise DomainError("eps must be in (0, 1]")
        if min(self.C0, self.Cstar, self.delta_minus) <= 0:
            raise DomainError("C0, Cstar, delta_minus must be positive")

    def envelope(self, n: int) -> float:
        if n == 0:
            return self.C0
        cn = float(self.Cn(n))
        return (self.Cstar / math.sqrt(self.eps)) * math.sqrt(cn) * math.exp(
            -n * cn * self.delta_minus / 2.0
        )


@dataclass
class MembershipReport:
    member: bool
    worst_slack: float
    worst_index: int | None
    slacks: list[tuple[int, float]]

    def to_rows(self):
        return [(int(i), float(s)) for i, s in self.slacks]


def path_membership(spec, path: PathWindow) -> MembershipReport:
    """Evaluate the class-defining inequalities over the stored window.

    Positive slack means the constraint holds with room; the report's
    worst entry localizes the binding (or violated) index.
    """
    slacks: list[tuple[int, float]] = []
    if isinstance(spec, KZ):
        for n in range(path.first_index, path.last_index + 1):
            slacks.append((n, -spec.K.distance(path.at(n))))
    elif isinstance(spec, KInf):
        slacks.append((0, -spec.K.distance(path.at(0))))
        for n in range(path.first_index + 1, path.last_index + 1):
            dx = float(np.linalg.norm(path.at(n) - path.at(n - 1)))
            dt = path.grid.time_at(n) - path.grid.time_at(n - 1)
            slacks.append((n, spec.C * abs(dt) - dx**spec.p))
    elif isinstance(spec, KAlpha):
        slacks.append((0, -spec.K.distance(path.at(0))))
        total = 0.0
        for n in range(path.first_index + 1, path.last_index + 1):
            dx = float(np.linalg.norm(path.at(n) - path.at(n - 1)))
            dt = path.grid.time_at(n) - path.grid.time_at(n - 1)
            total += dx**spec.p / (abs(dt) * max(1.0, abs(n)) ** spec.alpha)
        slacks.append((path.last_index, spec.C - total))
    elif isinstance(spec, KW):
        for n in range(path.first_index, path.last_index + 1):
            slacks.append((n, spec.w(abs(n)) - spec.K.distance(path.at(n))))
    elif isinstance(spec, KExp):
        for n in range(max(path.first_index, 0), path.last_index + 1):
            bound = spec.envelope(n)
            slacks.append((n, bound - float(np.linalg.norm(path.at(n)))))
    else:
        raise DomainError(f"unknown path class {type(spec).__name__}")
    worst_index, worst = min(slacks, key=lambda t: t[1])
    return MembershipReport(worst >= 0.0, float(worst), worst_index, slacks)


# ---------------------------------------------------------------------------
# causal maps of finite complexity
# ---------------------------------------------------------------------------

@dataclass
class FiniteComplexityMap:
    """Causal map factoring through a finite-memory encoder and a decoder.

    Output at index n is decoder(encoder(t_n, x_{t_{n-m}} .. x_{t_n})); the
    encoder sees exactly the last m+1 states, flattened in time order.
    """

    memory: int
    latent_dim: int
    alpha: float
    encoder: Callable[[float, np.ndarray], np.ndarray]
    decoder: Callable[[np.ndarray], object]
    time_homogeneous: bool = False
    meta: dict = field(default_factory=dict)

    def evaluate(self, path: PathWindow, n: int):
        window = path.segment(n - self.memory, n)
        t = path.grid.time_at(n)
        latent = np.atleast_1d(np.asarray(self.encoder(t, window), float))
        if latent.shape != (self.latent_dim,):
            raise DomainError(
                f"encoder produced shape {latent.shape}, expected ({self.latent_dim},)"
            )
        return self.decoder(latent)

    def latent(self, path: PathWindow, n: int) -> np.ndarray:
        window = path.segment(n - self.memory, n)
        return np.atleast_1d(np.asarray(self.encoder(path.grid.time_at(n), window), float))


def eval_finite_complexity(fc_map: FiniteComplexityMap, path: PathWindow, n: int):
    return fc_map.evaluate(path, n)


def gaussian_quantile_cloud(mean: np.ndarray, scale: np.ndarray, k: int) -> np.ndarray:
    """Push the k-per-dimension standard normal mid-quantile grid through
    the affine map u -> mean + scale @ u.

    Degenerate scale directions collapse the grid, so singular diffusion
    yields a lower-dimensional (possibly single-atom) cloud.
    """
    d = mean.shape[0]
    probs = (2.0 * np.arange(1, k + 1) - 1.0) / (2.0 * k)
    axis = norm.ppf(probs)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    u = np.stack([g.reshape(-1) for g in grids], axis=1)  # (k^d, d)
    return mean + u @ scale.T


def sde_kernel_map(mu: Callable, sigma: Callable, delta: float, nu: DiscreteMeasure,
                   k: int = 16) -> FiniteComplexityMap:
    """One-step transition-kernel map of a discrete-time SDE.

    Encoder: f(t, x) = (x + delta * mu(t, x), sqrt(delta) * sigma(t, x)).
    Decoder: the Gaussian N(mean, S S^T) discretized on the mid-quantile
    grid, convolved atomwise with the jump law nu.
    """
    if delta <= 0 or k < 1:
        raise DomainError("delta must be positive and k >= 1")
    d = nu.dim

    def encoder(t, window):
        x = window[-1]
        drift = np.atleast_1d(np.asarray(mu(t, x), float))
        diff = np.atleast_2d(np.asarray(sigma(t, x), float))
        return np.concatenate([x + delta * drift, math.sqrt(delta) * diff.reshape(-1)])

    def decoder(latent):
        mean = latent[:d]
        scale = latent[d:].reshape(d, d)
        cloud = gaussian_quantile_cloud(mean, scale, k)
        atoms = (cloud[:, None, :] + nu.atoms[None, :, :]).reshape(-1, d)
        weights = (np.full(len(cloud), 1.0 / len(cloud))[:, None] * nu.weights[None, :]).reshape(-1)
        return DiscreteMeasure(atoms, weights).merged()

    return FiniteComplexityMap(
        memory=0, latent_dim=d + d * d, alpha=1.0, encoder=encoder, decoder=decoder,
        time_homogeneous=False, meta={"kind": "sde_kernel", "delta": delta, "k": k},
    )


def sde_two_step_adapted(mu: Callable, sigma: Callable, m: int, first_points: int = 16,
                         cond_points: int = 16) -> FiniteComplexityMap:
    """Two-step conditional law of a scalar SDE as an adapted path measure.

    The latent vector packs (x + mu(t,x), sigma(t,x)) plus the second-step
    drift and diffusion evaluated at the m Gaussian quantile points of the
    first step.  The decoder lays a quantile grid over the first step and
    attaches, per quantile cell of the standardized first step, the
    conditional Gaussian held by that cell's latent parameters.
    """
    if m < 1:
        raise DomainError("need at least one quantile cell")
    qs = norm.ppf(np.arange(1, m + 1) / (m + 1.0))  # increasing quantiles

    def encoder(t, window):
        if window.shape[1] != 1:
            raise UnsupportedError("the two-step adapted map is scalar only")
        x = float(window[-1][0])
        mu0 = float(mu(t, x))
        s0 = float(sigma(t, x))
        t_next = t + 1.0
        mus = np.empty(m)
        sigmas = np.empty(m)
        for k_i in range(m):
            xq = x + mu0 + s0 * qs[k_i]
            mus[k_i] = float(mu(t_next, xq))
            sigmas[k_i] = float(sigma(t_next, xq))
        return np.concatenate([[x + mu0, s0], mus, sigmas])

    def decoder(latent):
        mu0, s0 = latent[0], latent[1]
        mus = latent[2 : 2 + m]
        sigmas = latent[2 + m :]
        if abs(s0) < 1e-300:
            first = np.array([mu0])
        else:
            probs = (2.0 * np.arange(1, first_points + 1) - 1.0) / (2.0 * first_points)
            first = mu0 + s0 * norm.ppf(probs)
        paths = []
        weights = []
        w1 = 1.0 / len(first)
        for x1 in first:
            z = (x1 - mu0) / s0 if abs(s0) >= 1e-300 else 0.0
            cell = int(np.searchsorted(qs, z, side="right"))  # 0..m
            k_eff = max(cell, 1)  # the lowest cell shares the first parameters
            m2, s2 = mus[k_eff - 1], sigmas[k_eff - 1]
            # the cell's conditional is N(m2, s2^2) as constructed, centered
            # at the drift parameter itself
            if abs(s2) < 1e-300:
                second = np.array([m2])
            else:
                pr = (2.0 * np.arange(1, cond_points + 1) - 1.0) / (2.0 * cond_points)
                second = m2 + s2 * norm.ppf(pr)
            for x2 in second:
                paths.append([x1, x2])
                weights.append(w1 / len(second))
        return PathMeasure.from_paths(np.asarray(paths)[:, :, None], np.asarray(weights))

    return FiniteComplexityMap(
        memory=0, latent_dim=2 + 2 * m, alpha=1.0, encoder=encoder, decoder=decoder,
        meta={"kind": "sde_two_step", "m": m},
    )


def infinite_memory_truncation(M: Callable, Sigma: Callable, kernel: Callable[[int], float],
                               eps: float, memory: int, tail_bound: float | None,
                               k: int = 16, dim: int = 1) -> FiniteComplexityMap:
    """Truncate an infinite-memory drift sum to the last ``memory`` states.

    ``kernel(n)`` gives the weight of the state n steps in the past
    (n <= 0 in map terms); the caller must certify the dropped tail
    sum_{n < -memory} |kernel(n)|, which bounds the truncation error of
    the drift (the state functional M maps into the unit cube).
    """
    if tail_bound is None:
        raise DomainError("a certified kernel tail bound is required")
    d = dim

    def encoder(t, window):
        x0 = window[-1]
        drift = np.zeros(d)
        for back in range(0, memory + 1):
            drift += kernel(-back) * np.atleast_1d(np.asarray(M(t, window[-1 - back]), float))
        sig = np.atleast_2d(np.asarray(Sigma(t, x0), float))
        return np.concatenate([x0 + drift, sig.reshape(-1)])

    def decoder(latent):
        mean = latent[:d]
        scale = latent[d:].reshape(d, d)
        cloud = gaussian_quantile_cloud(mean, scale, k)
        return DiscreteMeasure.uniform(cloud).merged()

    return FiniteComplexityMap(
        memory=memory, latent_dim=d + d * d, alpha=1.0, encoder=encoder, decoder=decoder,
        meta={"kind": "infinite_memory_truncation", "eps": eps, "tail_bound": tail_bound,
              "reported_output_bound": tail_bound * math.sqrt(d)},
    )


# ---------------------------------------------------------------------------
# compression rates
# ---------------------------------------------------------------------------

def holder_composition(L_rho: float, L_f: float, alpha: float, u: float) -> float:
    """omega_rho(omega_f(u)) with both moduli in Holder form L * x^alpha."""
    return L_rho * (L_f * u**alpha) ** alpha


def compression_rate(spec, n: int, eps: float, L_rho: float, L_f: float, alpha: float,
                     m_eps4: int, d: int, delta_plus: float, N_T: int,
                     diam_K: float | None = None, time_homogeneous: bool = False) -> float:
    """Required error normalizer at index n outside the horizon N_T.

    Equals 1 inside the horizon.  Outside, each path class contributes its
    own growth argument; the result is the clamped value
    max(1, (4/eps) * L_rho * L_f^alpha * (argument)^(alpha^2)).
    """
    if abs(n) <= N_T:
        return 1.0
    if eps <= 0 or L_rho <= 0 or L_f <= 0 or not 0 < alpha <= 1:
        raise DomainError("eps, Holder constants positive; alpha in (0, 1]")
    excess = (abs(n) - N_T) * delta_plus
    dm = d * m_eps4
    if isinstance(spec, KZ):
        diam = diam_K if diam_K is not None else spec.K.diameter()
        arg = (0.0 if time_homogeneous else excess) + (dm + 1) * diam
    elif isinstance(spec, KInf):
        arg = excess * (1.0 + (dm + 1) * spec.C ** (1.0 / spec.p)
                        * delta_plus ** ((1.0 - spec.p) / spec.p))
    elif isinstance(spec, KAlpha):
        exponent = spec.alpha / (spec.p - 1.0)
        if exponent >= -1.0:
            raise DomainError("weighted-variation series diverges: alpha/(p-1) >= -1")
        zsum = convergent_power_sum(exponent)
        arg = excess + (dm + 1) * spec.C ** (1.0 / spec.p) * delta_plus ** (1.0 / spec.p) \
            * (1.0 + 2.0 * zsum) ** ((spec.p - 1.0) / spec.p)
    elif isinstance(spec, KW):
        diam = diam_K if diam_K is not None else spec.K.diameter()
        arg = excess + dm * (diam + spec.w(abs(n)) + spec.w(N_T))
    elif isinstance(spec, KExp):
        if diam_K is None:
            raise DomainError("the exponential-envelope row needs an anchor diameter")
        w_n = max(spec.C0, spec.envelope(abs(n)))
        w_T = max(spec.C0, spec.envelope(N_T))
        arg = excess + dm * (diam_K + w_n + w_T)
    else:
        raise DomainError(f"unknown path class {type(spec).__name__}")
    return max(1.0, (4.0 / eps) * L_rho * L_f**alpha * arg ** (alpha * alpha))


def compression_rate_table(spec, params: dict, indices: Sequence[int]) -> list[tuple[int, float]]:
    return [(int(n), compression_rate(spec, int(n), **params)) for n in indices]


# ---------------------------------------------------------------------------
# Euler-Maruyama simulation
# ---------------------------------------------------------------------------

def euler_simulate(alpha_fn: Callable, beta_fn: Callable, x0_spec, grid: TimeGrid,
                   n_paths: int, seed: int, dim: int = 1) -> list[PathWindow]:
    """Seeded Euler-Maruyama paths over the full grid window.

    Each path uses an independent substream derived from (seed, path
    index), so results do not depend on scheduling order.  The initial
    state is placed at the leftmost grid time; x0_spec is a constant
    vector or {"kind": "gaussian", "mean": ..., "std": ...}.
    """
    lo, hi = grid.index_range
    times = grid.times
    out = []
    for i in range(n_paths):
        rng = np.random.default_rng([seed, i])
        if isinstance(x0_spec, dict):
            if x0_spec.get("kind") == "gaussian":
                x = np.asarray(x0_spec["mean"], float) + float(x0_spec["std"]) * rng.normal(size=dim)
            else:
                raise DomainError(f"unknown initial-state spec {x0_spec.get('kind')!r}")
        else:
            x = np.broadcast_to(np.asarray(x0_spec, float), (dim,)).copy()
        values = np.empty((len(times), dim))
        values[0] = x
        for j in range(1, len(times)):
            t_prev = times[j - 1]
            dt = times[j] - times[j - 1]
            drift = np.atleast_1d(np.asarray(alpha_fn(t_prev, values[j - 1]), float))
            diff = np.atleast_2d(np.asarray(beta_fn(t_prev, values[j - 1]), float))
            if diff.shape == (1, 1) and dim > 1:
                diff = np.eye(dim) * diff[0, 0]
            noise = rng.normal(size=diff.shape[1])
            values[j] = values[j - 1] + drift * dt + math.sqrt(dt) * diff @ noise
        out.append(PathWindow(grid, values, lo))
    return out


def fit_exponential_envelope(paths: list[PathWindow], eps: float,
                             safety: float = 1.000001) -> KExp:
    """Fit the exponential-envelope class constants from simulated moments.

    Per-step Chebyshev with a union bound over the window: the target
    envelope at step n is sqrt(second moment * steps / eps), which a
    fraction >= 1 - eps of paths satisfies simultaneously in expectation.
    The sequence constants C_n then solve the envelope equation on the
    increasing branch; C_star is sized to keep every equation solvable.
    The constants are reported as fitted values, not asserted bounds.
    """
    if not paths:
        raise DomainError("need at least one path")
    grid = paths[0].grid
    delta_minus = grid.delta_minus
    n_max = min(p.last_index for p in paths)
    steps = n_max + 1
    norms = np.array([
        [float(np.linalg.norm(p.at(n))) for n in range(0, n_max + 1)] for p in paths
    ])
    m2 = np.mean(norms**2, axis=0)
    # a tiny floor keeps the constants solvable for degenerate (all-zero) data
    targets = np.maximum(np.sqrt(m2 * steps / eps), 1e-9)
    c0 = max(float(targets[0]), float(norms[:, 0].max()) * safety, 1e-12)
    if n_max == 0:
        return KExp(C0=c0, Cstar=1.0, Cn=lambda n: 1.0, eps=eps, delta_minus=delta_minus)

    # g(c) = sqrt(c) exp(-n c delta_minus / 2) peaks at c = 1/(n delta_minus)
    def g(n, c):
        return math.sqrt(c) * math.exp(-n * c * delta_minus / 2.0)

    cstar = max(
        float(targets[n]) * math.sqrt(eps) / g(n, 1.0 / (n * delta_minus))
        for n in range(1, n_max + 1)
    ) * safety

    cn_values = {}
    for n in range(1, n_max + 1):
        want = float(targets[n]) * math.sqrt(eps) / cstar
        lo_c, hi_c = 0.0, 1.0 / (n * delta_minus)
        for _ in range(200):
            mid = 0.5 * (lo_c + hi_c)
            if g(n, mid) < want:
                lo_c = mid
            else:
                hi_c = mid
        cn_values[n] = 0.5 * (lo_c + hi_c)

    fallback = 1.0 / (max(cn_values) * delta_minus)
    return KExp(C0=c0, Cstar=cstar, Cn=lambda n: cn_values.get(n, fallback),
                eps=eps, delta_minus=delta_minus)
