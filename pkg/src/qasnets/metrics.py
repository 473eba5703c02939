"""Exact finite-support metric computations.

Everything here is a pure function of immutable values:

* Euclidean projections onto the probability simplex and onto boxes.
* Wasserstein-p between discrete measures, solved exactly -- in one
  dimension by the sorted quantile coupling, in general by the
  transportation linear program at a vertex solution.
* Adapted (bicausal) Wasserstein-p between path measures via backward
  dynamic programming on the conditional trees.
* Total variation on finite supports.
* The affine-invariant distance between nondegenerate Gaussians,
  sqrt(|m1-m2|^2 + |log(S1^-1/2 S2 S1^-1/2)|_F^2).
* Convergent power sums sum_k k^s for s < -1 with a certified tail bound.
* Exact one-dimensional Wasserstein-2 barycenters by quantile averaging.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, UnsupportedError
from .measures import DiscreteMeasure, GaussianMeasure, PathMeasure, validate_simplex_weight


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def project_simplex(u) -> np.ndarray:
    """Euclidean projection of u onto the probability simplex.

    Sort-and-threshold algorithm with a stable sort on index, so ties are
    broken deterministically across runs and thread counts.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1 or u.size < 1:
        raise DomainError("input must be a nonempty vector")
    if not np.all(np.isfinite(u)):
        raise DomainError("input must be finite")
    n = u.size
    order = np.argsort(-u, kind="stable")
    s = u[order]
    css = np.cumsum(s) - 1.0
    idx = np.arange(1, n + 1)
    cond = s - css / idx > 0.0
    rho = int(np.nonzero(cond)[0][-1]) + 1
    tau = css[rho - 1] / rho
    return np.maximum(u - tau, 0.0)


def project_cube(u, lower, upper) -> np.ndarray:
    """Componentwise clamp of u into the box [lower, upper]."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo = np.broadcast_to(np.asarray(lower, dtype=float), u.shape)
    hi = np.broadcast_to(np.asarray(upper, dtype=float), u.shape)
    if u.shape != lo.shape or u.shape != hi.shape:
        raise DomainError("dimension mismatch between point and bounds")
    if np.any(lo > hi):
        raise DomainError("lower bound exceeds upper bound")
    return np.minimum(np.maximum(lo, u), hi)


# ---------------------------------------------------------------------------
# Wasserstein-p
# ---------------------------------------------------------------------------

def _wasserstein_1d_pow(x, wx, y, wy, p: float) -> float:
    """Exact transport cost sum |x-y|^p under the monotone quantile coupling.

    Optimal on the line for every p >= 1 because |x-y|^p is convex.
    """
    ox = np.argsort(x, kind="stable")
    oy = np.argsort(y, kind="stable")
    x, wx = x[ox], wx[ox]
    y, wy = y[oy], wy[oy]
    i = j = 0
    ai, bj = wx[0], wy[0]
    cost = 0.0
    while True:
        m = min(ai, bj)
        cost += m * abs(x[i] - y[j]) ** p
        ai -= m
        bj -= m
        if ai <= 1e-17:
            i += 1
            if i == len(x):
                break
            ai = wx[i]
        if bj <= 1e-17:
            j += 1
            if j == len(y):
                break
            bj = wy[j]
    return cost


def transport_cost(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact optimum of the transportation LP min <cost, pi> over couplings.

    Solved by the HiGHS simplex family, which returns a vertex of the
    transportation polytope; the product coupling is always feasible, so an
    infeasible status signals an internal bug.
    """
    m, n = cost.shape
    c = cost.reshape(-1)
    # marginal constraints; the last one is redundant and dropped
    rows = []
    for i in range(m):
        r = np.zeros((m, n))
        r[i, :] = 1.0
        rows.append(r.reshape(-1))
    for j in range(n):
        r = np.zeros((m, n))
        r[:, j] = 1.0
        rows.append(r.reshape(-1))
    A_eq = np.array(rows[:-1])
    b_eq = np.concatenate([a, b])[:-1]
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP unexpectedly failed: {res.message}")
    return float(res.fun), res.x.reshape(m, n)


def wasserstein_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0) -> float:
    """Exact Wasserstein-p distance between discrete measures.

    Returns the optimal transport cost with ground cost |x-y|^p, raised to
    1/p.  Zero exactly when the merged weighted atom sets coincide.
    """
    if p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    if mu.dim != nu.dim:
        raise DomainError(f"dimension mismatch {mu.dim} != {nu.dim}")
    a = mu.merged()
    b = nu.merged()
    if a.equal_as_measure(b):
        return 0.0
    if mu.dim == 1:
        cost = _wasserstein_1d_pow(
            a.atoms[:, 0], np.array(a.weights), b.atoms[:, 0], np.array(b.weights), p
        )
        return cost ** (1.0 / p)
    diff = a.atoms[:, None, :] - b.atoms[None, :, :]
    cost = np.linalg.norm(diff, axis=2) ** p
    val, _ = transport_cost(np.array(a.weights), np.array(b.weights), cost)
    return max(val, 0.0) ** (1.0 / p)


# ---------------------------------------------------------------------------
# adapted Wasserstein-p
# ---------------------------------------------------------------------------

def adapted_wasserstein_p(mu: PathMeasure, nu: PathMeasure, p: float = 1.0) -> float:
    """Exact adapted (bicausal) Wasserstein-p distance between path measures.

    Backward dynamic programming on the conditional trees: at the final
    step the subproblem is a plain transport between conditional laws; at
    earlier steps the transport cost of matching values x_t, y_t adds the
    optimal value of the induced subtree pair.  The total cost accumulates
    sum_t |x_t - y_t|^p and is returned to the power 1/p.
    """
    if p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    if mu.horizon != nu.horizon:
        raise DomainError(f"horizon mismatch {mu.horizon} != {nu.horizon}")
    if mu.step_dim != nu.step_dim:
        raise DomainError(f"step dim mismatch {mu.step_dim} != {nu.step_dim}")
    if mu.equal_as_measure(nu):
        return 0.0
    T = mu.horizon
    memo: dict[tuple, float] = {}

    def value(node_a: tuple, node_b: tuple, depth: int) -> float:
        if depth == T:
            return 0.0
        key = (node_a, node_b, depth)
        if key in memo:
            return memo[key]
        ca = mu.children(node_a, depth)
        cb = nu.children(node_b, depth)
        wa = np.array([w for _, w, _ in ca])
        wb = np.array([w for _, w, _ in cb])
        cost = np.zeros((len(ca), len(cb)))
        for i, (va, _, child_a) in enumerate(ca):
            for j, (vb, _, child_b) in enumerate(cb):
                step = float(np.linalg.norm(va - vb)) ** p
                cost[i, j] = step + value(child_a, child_b, depth + 1)
        if len(ca) == 1 or len(cb) == 1:
            val = float(np.sum(cost * np.outer(wa, wb)))  # coupling forced
        else:
            val, _ = transport_cost(wa, wb, cost)
        memo[key] = val
        return val

    total = value(mu.root(), nu.root(), 0)
    return max(total, 0.0) ** (1.0 / p)


# ---------------------------------------------------------------------------
# total variation
# ---------------------------------------------------------------------------

def total_variation(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """l1 distance of weight vectors after aligning on the union of supports."""
    if mu.dim != nu.dim:
        raise DomainError(f"dimension mismatch {mu.dim} != {nu.dim}")
    a = mu.merged()
    b = nu.merged()
    wa: dict[tuple, float] = {tuple(x): w for x, w in zip(a.atoms, a.weights)}
    wb: dict[tuple, float] = {tuple(x): w for x, w in zip(b.atoms, b.weights)}
    support = set(wa) | set(wb)
    return float(sum(abs(wa.get(s, 0.0) - wb.get(s, 0.0)) for s in sorted(support)))


# ---------------------------------------------------------------------------
# Gaussian geometry
# ---------------------------------------------------------------------------

_EIG_CLAMP_REL = 1e-14


def _sym_eig(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues clamped below.

    Clamping at 1e-14 relative guards numerically semi-definite inputs
    while still rejecting truly non-SPD ones (those fail earlier, at
    ``GaussianMeasure`` construction).
    """
    sym = 0.5 * (mat + mat.T)
    evals, evecs = np.linalg.eigh(sym)
    floor = _EIG_CLAMP_REL * max(1.0, float(np.max(np.abs(evals))))
    if evals.min() <= 0.0:
        raise DomainError(f"matrix is not positive definite (min eig {evals.min():.3g})")
    return np.maximum(evals, floor), evecs


def spd_sqrt(mat: np.ndarray) -> np.ndarray:
    evals, evecs = _sym_eig(mat)
    return (evecs * np.sqrt(evals)) @ evecs.T


def spd_log(mat: np.ndarray) -> np.ndarray:
    evals, evecs = _sym_eig(mat)
    return (evecs * np.log(evals)) @ evecs.T


def sym_exp(mat: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (always SPD output)."""
    sym = 0.5 * (mat + mat.T)
    evals, evecs = np.linalg.eigh(sym)
    return (evecs * np.exp(evals)) @ evecs.T


def spd_distance(s1: np.ndarray, s2: np.ndarray) -> float:
    """Affine-invariant distance |log(S1^-1/2 S2 S1^-1/2)|_F between SPD matrices."""
    evals1, evecs1 = _sym_eig(np.asarray(s1, dtype=float))
    inv_sqrt1 = (evecs1 / np.sqrt(evals1)) @ evecs1.T
    middle = inv_sqrt1 @ np.asarray(s2, dtype=float) @ inv_sqrt1
    return float(np.linalg.norm(spd_log(middle), ord="fro"))


def gaussian_distance(a: GaussianMeasure, b: GaussianMeasure) -> float:
    """Distance between nondegenerate Gaussians combining mean shift and
    the affine-invariant covariance distance.

    d(N(m1,S1), N(m2,S2)) = sqrt(|m1-m2|^2 + |log(S1^-1/2 S2 S1^-1/2)|_F^2).
    Symmetric, zero iff the parameters coincide, and invariant under
    simultaneous congruence of the covariances by any invertible matrix
    combined with the matching rotation of the means.
    """
    if a.dim != b.dim:
        raise DomainError(f"dimension mismatch {a.dim} != {b.dim}")
    if a.mean.shape == b.mean.shape and np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0
    dm = float(np.linalg.norm(a.mean - b.mean))
    dc = spd_distance(a.cov, b.cov)
    return float(np.sqrt(dm * dm + dc * dc))


# ---------------------------------------------------------------------------
# convergent power sums
# ---------------------------------------------------------------------------

def convergent_power_sum(s: float, tol: float = 1e-9, max_terms: int = 20_000_000) -> float:
    """sum_{k>=1} k^s for s < -1, by partial sums with an integral tail bound.

    The tail sum_{k>n} k^s is bracketed by the integrals over [n+1, inf)
    and [n, inf); the midpoint of the bracket is added once its half-width
    is below ``tol``, so the absolute error is at most ``tol``.
    """
    if not np.isfinite(s) or s >= -1.0:
        raise DomainError(f"exponent must be < -1 for convergence, got {s}")
    total = 0.0
    n = 0
    block = 1024
    while True:
        k = np.arange(n + 1, n + block + 1, dtype=float)
        total += float(np.sum(k**s))
        n += block
        hi = n**(s + 1.0) / (-s - 1.0)
        lo = (n + 1.0) ** (s + 1.0) / (-s - 1.0)
        if 0.5 * (hi - lo) <= tol:
            return total + 0.5 * (hi + lo)
        if n >= max_terms:
            raise DomainError(
                f"power sum with s={s} needs more than {max_terms} terms for tol={tol}"
            )
        block = min(2 * block, 4_194_304)


# ---------------------------------------------------------------------------
# one-dimensional Wasserstein-2 barycenter
# ---------------------------------------------------------------------------

def wasserstein2_barycenter_1d(measures: list[DiscreteMeasure], weights) -> DiscreteMeasure:
    """Exact W2 barycenter of one-dimensional discrete measures.

    The barycenter's quantile function is the weighted average of the
    input quantile functions; on a common refinement of the cumulative
    breakpoints each quantile function is constant, so the average is a
    step function and the result is again finitely supported.
    """
    w = validate_simplex_weight(np.asarray(weights, dtype=float))
    if len(measures) != w.size:
        raise DomainError("measure count != weight count")
    for m in measures:
        if m.dim != 1:
            raise UnsupportedError("barycenters are only supported on the real line")
    merged = [m.merged() for m in measures]
    cuts = {0.0, 1.0}
    for m in merged:
        c = np.cumsum(m.weights)
        cuts.update(float(v) for v in c[:-1])
    grid = sorted(cuts)
    quantiles = []
    for m in merged:
        xs = m.atoms[:, 0]
        cum = np.cumsum(m.weights)
        quantiles.append((xs, cum))
    atoms = []
    masses = []
    for lo, hi in zip(grid[:-1], grid[1:]):
        u = 0.5 * (lo + hi)
        val = 0.0
        for (xs, cum), wn in zip(quantiles, w):
            idx = int(np.searchsorted(cum, u, side="left"))
            idx = min(idx, len(xs) - 1)
            val += wn * xs[idx]
        atoms.append([val])
        masses.append(hi - lo)
    out = DiscreteMeasure(np.array(atoms), np.array(masses) / np.sum(masses))
    return out.merged()
