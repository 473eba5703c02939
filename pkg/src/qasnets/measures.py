"""Finitely supported measures: the carriers for all transport computations.

Three value types live here:

* ``DiscreteMeasure`` -- atoms in R^d plus simplex weights.
* ``PathMeasure``     -- a discrete measure on R^(d*T) viewed as a law of a
  T-step path, together with the conditional tree obtained by grouping
  paths on exact prefix equality.
* ``GaussianMeasure`` -- a nondegenerate Gaussian N(m, S) on R^d.

All values are immutable after construction and safe to share across
threads.  Duplicate atoms are merged (weights summed) with exact
coordinate equality as the merge criterion, which makes "distance zero
iff equal" a testable statement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError

WEIGHT_SUM_TOL = 1e-12


def validate_simplex_weight(entries: np.ndarray, tol: float = WEIGHT_SUM_TOL) -> np.ndarray:
    """Check that ``entries`` is a point of the simplex and return it as an array.

    Entries must be nonnegative and sum to 1 within absolute tolerance
    ``tol``; the vector must be nonempty.
    """
    w = np.asarray(entries, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise DomainError("simplex weight must be a nonempty vector")
    if not np.all(np.isfinite(w)):
        raise DomainError("simplex weight entries must be finite")
    if np.any(w < -tol):
        raise DomainError(f"simplex weight entries must be nonnegative, got min {w.min()}")
    s = float(w.sum())
    if abs(s - 1.0) > max(tol, tol * w.size):
        raise DomainError(f"simplex weight entries must sum to 1, got {s!r}")
    return w


def _merge_rows(atoms: np.ndarray, weights: np.ndarray):
    """Sum weights of exactly-equal rows; rows ordered lexicographically."""
    order = np.lexsort(atoms.T[::-1])
    atoms = atoms[order]
    weights = weights[order]
    if len(atoms) > 1:
        new_group = np.any(atoms[1:] != atoms[:-1], axis=1)
        group = np.concatenate([[0], np.cumsum(new_group)])
    else:
        group = np.zeros(len(atoms), dtype=int)
    n_groups = int(group[-1]) + 1 if len(atoms) else 0
    firsts = np.searchsorted(group, np.arange(n_groups), side="left")
    out_atoms = atoms[firsts]
    out_weights = np.zeros(n_groups)
    np.add.at(out_weights, group, weights)
    return out_atoms, out_weights


@dataclass(frozen=True)
class DiscreteMeasure:
    """A finitely supported probability measure on R^d."""

    atoms: np.ndarray
    weights: np.ndarray
    dim: int = field(default=-1)

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = validate_simplex_weight(self.weights)
        if atoms.shape[0] != weights.shape[0]:
            raise DomainError(
                f"atom count {atoms.shape[0]} != weight count {weights.shape[0]}"
            )
        if not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be finite")
        dim = atoms.shape[1]
        if self.dim >= 0 and self.dim != dim:
            raise DomainError(f"declared dim {self.dim} != atom dim {dim}")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "dim", dim)

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def merged(self) -> "DiscreteMeasure":
        """Canonical form: duplicate atoms merged, support sorted."""
        a, w = _merge_rows(np.array(self.atoms), np.array(self.weights))
        return DiscreteMeasure(a, w)

    def equal_as_measure(self, other: "DiscreteMeasure") -> bool:
        """Exact equality as weighted atom sets after merging duplicates."""
        if self.dim != other.dim:
            return False
        a = self.merged()
        b = other.merged()
        return (
            a.atoms.shape == b.atoms.shape
            and np.array_equal(a.atoms, b.atoms)
            and np.array_equal(a.weights, b.weights)
        )

    @staticmethod
    def dirac(point) -> "DiscreteMeasure":
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return DiscreteMeasure(p.reshape(1, -1), np.array([1.0]))

    @staticmethod
    def uniform(atoms) -> "DiscreteMeasure":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        n = atoms.shape[0]
        return DiscreteMeasure(atoms, np.full(n, 1.0 / n))

    def to_json(self) -> dict:
        return {
            "dim": int(self.dim),
            "atoms": self.atoms.tolist(),
            "weights": self.weights.tolist(),
        }

    @staticmethod
    def from_json(obj: dict) -> "DiscreteMeasure":
        return DiscreteMeasure(
            np.asarray(obj["atoms"], dtype=float),
            np.asarray(obj["weights"], dtype=float),
            int(obj.get("dim", -1)),
        )


def mixture(components: list[DiscreteMeasure], mix_weights) -> DiscreteMeasure:
    """Convex combination sum_n w_n mu_n, duplicates merged."""
    w = validate_simplex_weight(np.asarray(mix_weights, dtype=float))
    if len(components) != w.size:
        raise DomainError("component count != mixing weight count")
    dims = {m.dim for m in components}
    if len(dims) != 1:
        raise DomainError(f"components have mixed dimensions {sorted(dims)}")
    atoms = np.concatenate([m.atoms for m in components], axis=0)
    weights = np.concatenate([wn * m.weights for wn, m in zip(w, components)])
    keep = weights > 0.0
    if not keep.all():
        atoms, weights = atoms[keep], weights[keep]
    a, ww = _merge_rows(atoms, weights)
    return DiscreteMeasure(a, ww)


class PathMeasure:
    """Law of a d-dimensional path over T steps, with its conditional tree.

    The measure is stored as a ``DiscreteMeasure`` on R^(d*T) whose atoms
    are the flattened paths (x_1, ..., x_T).  Conditional measures are
    obtained lazily by grouping paths on exact equality of their time-t
    prefixes; continuous samples must be pre-quantized onto a grid before
    this grouping is meaningful.
    """

    def __init__(self, base: DiscreteMeasure, horizon: int, step_dim: int):
        if horizon < 1 or step_dim < 1:
            raise DomainError("horizon and per-step dim must be >= 1")
        if base.dim != horizon * step_dim:
            raise DomainError(
                f"base dim {base.dim} != horizon*step_dim = {horizon * step_dim}"
            )
        self.base = base.merged()
        self.horizon = int(horizon)
        self.step_dim = int(step_dim)
        # paths[i, t, :] is the time-(t+1) location of atom i
        self._paths = np.array(self.base.atoms).reshape(len(self.base), horizon, step_dim)
        self._paths.setflags(write=False)
        self._children_cache: dict[tuple, list] = {}

    @property
    def paths(self) -> np.ndarray:
        return self._paths

    @property
    def weights(self) -> np.ndarray:
        return self.base.weights

    @staticmethod
    def from_paths(paths, weights=None, step_dim: int | None = None) -> "PathMeasure":
        paths = np.asarray(paths, dtype=float)
        if paths.ndim == 2:  # (n_paths, T) scalar steps
            paths = paths[:, :, None]
        n, T, d = paths.shape
        if step_dim is not None and step_dim != d:
            raise DomainError(f"declared step_dim {step_dim} != data step dim {d}")
        if weights is None:
            weights = np.full(n, 1.0 / n)
        base = DiscreteMeasure(paths.reshape(n, T * d), np.asarray(weights, dtype=float))
        return PathMeasure(base, T, d)

    def root(self) -> tuple:
        return tuple(range(len(self.base)))

    def children(self, node: tuple, depth: int) -> list[tuple[np.ndarray, float, tuple]]:
        """Split ``node`` (a tuple of path indices sharing a depth-``depth``
        prefix) by the next step value.

        Returns a list of (value, conditional weight, child node) triples; the
        conditional weights form a simplex weight at every node.
        """
        key = (node, depth)
        if key in self._children_cache:
            return self._children_cache[key]
        groups: dict[tuple, list[int]] = {}
        for i in node:
            v = tuple(self._paths[i, depth])
            groups.setdefault(v, []).append(i)
        total = float(self.weights[list(node)].sum())
        out = []
        for v in sorted(groups):
            idx = groups[v]
            w = float(self.weights[idx].sum()) / total
            out.append((np.array(v), w, tuple(idx)))
        self._children_cache[key] = out
        return out

    def marginal_check(self, tol: float = 0.0) -> bool:
        """Tree marginalization reconstructs the base measure exactly."""

        def collect(node, depth, mass, prefix):
            if depth == self.horizon:
                return [(tuple(np.concatenate(prefix)), mass)]
            out = []
            for v, w, child in self.children(node, depth):
                out.extend(collect(child, depth + 1, mass * w, prefix + [v]))
            return out

        leaves = dict(collect(self.root(), 0, 1.0, []))
        for atom, w in zip(self.base.atoms, self.base.weights):
            got = leaves.get(tuple(atom))
            if got is None or abs(got - w) > max(tol, 1e-12):
                return False
        return True

    def equal_as_measure(self, other: "PathMeasure") -> bool:
        return (
            self.horizon == other.horizon
            and self.step_dim == other.step_dim
            and self.base.equal_as_measure(other.base)
        )

    def to_json(self) -> dict:
        obj = self.base.to_json()
        obj["horizon"] = self.horizon
        return obj

    @staticmethod
    def from_json(obj: dict) -> "PathMeasure":
        base = DiscreteMeasure.from_json(obj)
        horizon = int(obj["horizon"])
        if base.dim % horizon != 0:
            raise DomainError("base dim not divisible by horizon")
        return PathMeasure(base, horizon, base.dim // horizon)


@dataclass(frozen=True)
class GaussianMeasure:
    """Nondegenerate Gaussian N(mean, cov) on R^d."""

    mean: np.ndarray
    cov: np.ndarray

    SYM_TOL = 1e-12
    MIN_EIG = 0.0  # strictly positive definite required

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise DomainError(f"covariance shape {cov.shape} incompatible with mean dim {d}")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise DomainError("Gaussian parameters must be finite")
        if np.max(np.abs(cov - cov.T)) > self.SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise DomainError("covariance must be symmetric")
        evals = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        if evals.min() <= self.MIN_EIG:
            raise DomainError(f"covariance must be positive definite, min eig {evals.min():.3g}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @staticmethod
    def from_json(obj: dict) -> "GaussianMeasure":
        return GaussianMeasure(np.asarray(obj["mean"], float), np.asarray(obj["cov"], float))


def measure_from_json(obj: dict) -> Any:
    """Dispatch on the optional "kind"/"horizon" keys of a serialized measure."""
    kind = obj.get("kind")
    if kind == "gaussian" or ("mean" in obj and "cov" in obj):
        return GaussianMeasure.from_json(obj)
    if kind == "path" or "horizon" in obj:
        return PathMeasure.from_json(obj)
    return DiscreteMeasure.from_json(obj)
