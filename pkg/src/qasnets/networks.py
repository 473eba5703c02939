"""Feedforward networks with trainable activations and a flat parameter codec.

A network of multi-index (d_0, ..., d_{J+1}) applies J activated affine
layers followed by a final affine map.  Its parameters live in a single
flat vector of length

    P([d]) = sum_{j=0}^{J} d_{j+1} (d_j + 3) - 2 d_{J+1},

decomposed bijectively into ((A_j, b_j, alpha_j) for j < J, (A, c)) where
each hidden unit carries a trainable activation parameter pair
alpha = (a1, a2):

* singular kind:   x -> a1 * max(x, a2 x) + (1 - a1) * floor(x)
* smooth kind:     x -> a1 * max(x, a2 x) + (1 - a1) * s(x), s smooth
  non-polynomial (caller contract; the default is the logistic sigmoid)
* classical kind:  x -> s(x) with alpha ignored (default: leaky ReLU)

alpha = (1, 0) everywhere gives the plain ReLU sub-family; alpha = (1, 1)
gives exact identity units, which is what makes depth padding lossless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import DomainError, FitFailure, UnsupportedError


# ---------------------------------------------------------------------------
# multi-index and parameter codec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiIndex:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise DomainError("multi-index needs at least input and output dims")
        if any(d < 1 for d in dims):
            raise DomainError("all layer widths must be >= 1")
        object.__setattr__(self, "dims", dims)

    @property
    def depth(self) -> int:  # number of activated layers J
        return len(self.dims) - 2

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    @property
    def width(self) -> int:
        return max(self.dims)


def param_count(md: MultiIndex) -> int:
    """P([d]) = sum_j d_{j+1}(d_j + 3) - 2 d_{J+1}."""
    dims = md.dims
    total = sum(dims[j + 1] * (dims[j] + 3) for j in range(len(dims) - 1))
    return total - 2 * dims[-1]


@dataclass
class LayerParams:
    weight: np.ndarray      # d_{j+1} x d_j
    bias: np.ndarray        # d_{j+1}
    alpha: np.ndarray | None  # d_{j+1} x 2, None for the final affine map


def decode_params(md: MultiIndex, theta: np.ndarray) -> list[LayerParams]:
    """Flat theta -> ((A_j, b_j, alpha_j))_{j<J} + final (A, c)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (param_count(md),):
        raise DomainError(f"theta length {theta.size} != P([d]) = {param_count(md)}")
    dims = md.dims
    layers = []
    pos = 0
    for j in range(len(dims) - 2):
        din, dout = dims[j], dims[j + 1]
        w = theta[pos : pos + dout * din].reshape(dout, din)
        pos += dout * din
        b = theta[pos : pos + dout]
        pos += dout
        a = theta[pos : pos + 2 * dout].reshape(dout, 2)
        pos += 2 * dout
        layers.append(LayerParams(w, b, a))
    din, dout = dims[-2], dims[-1]
    w = theta[pos : pos + dout * din].reshape(dout, din)
    pos += dout * din
    c = theta[pos : pos + dout]
    pos += dout
    assert pos == theta.size
    layers.append(LayerParams(w, c, None))
    return layers


def encode_params(md: MultiIndex, layers: list[LayerParams]) -> np.ndarray:
    chunks = []
    for lp in layers[:-1]:
        chunks.extend([lp.weight.reshape(-1), lp.bias, lp.alpha.reshape(-1)])
    chunks.extend([layers[-1].weight.reshape(-1), layers[-1].bias])
    theta = np.concatenate(chunks)
    if theta.size != param_count(md):
        raise DomainError("layer shapes inconsistent with the multi-index")
    return theta


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def _sigmoid_deriv(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _leaky_relu(x):
    return np.where(x >= 0.0, x, 0.01 * x)


def _leaky_relu_deriv(x):
    # differentiable everywhere except 0; the right derivative is used there
    return np.where(x >= 0.0, 1.0, 0.01)


@dataclass(frozen=True)
class ActivationSpec:
    """kind in {"singular", "smooth", "classical"} plus the base function.

    ``smooth`` requires a non-polynomial base function and ``classical`` a
    continuous non-affine one that is differentiable with nonzero
    derivative somewhere; neither property is machine-checkable for an
    arbitrary handle, so they are caller contracts.
    """

    kind: str
    base: Callable | None = None
    base_deriv: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("singular", "smooth", "classical"):
            raise DomainError(f"unknown activation kind {self.kind!r}")
        if self.kind == "singular":
            object.__setattr__(self, "name", self.name or "relu_step")
        elif self.base is None:
            if self.kind == "smooth":
                object.__setattr__(self, "base", _sigmoid)
                object.__setattr__(self, "base_deriv", _sigmoid_deriv)
                object.__setattr__(self, "name", self.name or "sigmoid")
            else:
                object.__setattr__(self, "base", _leaky_relu)
                object.__setattr__(self, "base_deriv", _leaky_relu_deriv)
                object.__setattr__(self, "name", self.name or "leaky_relu")

    @property
    def gradient_trainable(self) -> bool:
        return self.kind in ("smooth", "classical")

    def to_json(self) -> dict:
        return {"kind": self.kind, "name": self.name}

    @staticmethod
    def from_json(obj: dict) -> "ActivationSpec":
        kind = obj["kind"]
        name = obj.get("name", "")
        if kind == "smooth" and name not in ("", "sigmoid"):
            raise DomainError(f"unknown smooth base {name!r}")
        if kind == "classical" and name not in ("", "leaky_relu"):
            raise DomainError(f"unknown classical base {name!r}")
        return ActivationSpec(kind)


SINGULAR = ActivationSpec("singular")
SMOOTH_SIGMOID = ActivationSpec("smooth")
CLASSICAL_LEAKY = ActivationSpec("classical")


def activation_eval(spec: ActivationSpec, alpha, x):
    """Scalar or vector evaluation of sigma_alpha(x)."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if spec.kind == "classical":
        return spec.base(x)
    a1 = alpha[..., 0]
    a2 = alpha[..., 1]
    kink = np.maximum(x, a2 * x)
    if spec.kind == "singular":
        tail = np.floor(x)
    else:
        tail = spec.base(x)
    return a1 * kink + (1.0 - a1) * tail


def _activation_grads(spec: ActivationSpec, alpha, x):
    """(dy/dx, dy/da1, dy/da2) for the gradient-trainable kinds."""
    if spec.kind == "classical":
        return spec.base_deriv(x), np.zeros_like(x), np.zeros_like(x)
    a1 = alpha[..., 0]
    a2 = alpha[..., 1]
    take_x = x >= a2 * x  # max branch, ties resolved toward the x branch
    kink = np.where(take_x, x, a2 * x)
    dkink_dx = np.where(take_x, 1.0, a2)
    base = spec.base(x)
    dbase = spec.base_deriv(x)
    dy_dx = a1 * dkink_dx + (1.0 - a1) * dbase
    dy_da1 = kink - base
    dy_da2 = a1 * np.where(take_x, 0.0, x)
    return dy_dx, dy_da1, dy_da2


def forward(md: MultiIndex, spec: ActivationSpec, theta, x) -> np.ndarray:
    """Representation function: activated affine layers, then a final affine."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != md.in_dim:
        raise DomainError(f"input dim {x.shape[-1]} != d_0 = {md.in_dim}")
    layers = decode_params(md, theta)
    h = x
    for lp in layers[:-1]:
        z = h @ lp.weight.T + lp.bias
        h = activation_eval(spec, lp.alpha, z)
    out = h @ layers[-1].weight.T + layers[-1].bias
    return out


def zero_theta(md: MultiIndex) -> np.ndarray:
    return np.zeros(param_count(md))


def relu_theta(md: MultiIndex, rng=None, scale=0.5) -> np.ndarray:
    """Random theta in the ReLU sub-family: every alpha row is (1, 0)."""
    rng = rng or np.random.default_rng(0)
    layers = []
    dims = md.dims
    for j in range(len(dims) - 2):
        layers.append(LayerParams(
            rng.normal(scale=scale, size=(dims[j + 1], dims[j])),
            rng.normal(scale=scale, size=dims[j + 1]),
            np.tile([1.0, 0.0], (dims[j + 1], 1)),
        ))
    layers.append(LayerParams(
        rng.normal(scale=scale, size=(dims[-1], dims[-2])),
        rng.normal(scale=scale, size=dims[-1]),
        None,
    ))
    return encode_params(md, layers)


def network_to_json(md: MultiIndex, spec: ActivationSpec, theta) -> dict:
    """Bundle {dims, activation, theta}; floats survive bit-faithfully
    because JSON emits the shortest round-trip decimal form."""
    return {
        "dims": list(md.dims),
        "activation": spec.to_json(),
        "theta": np.asarray(theta, float).tolist(),
    }


def network_from_json(obj: dict) -> tuple[MultiIndex, ActivationSpec, np.ndarray]:
    md = MultiIndex(tuple(obj["dims"]))
    spec = ActivationSpec.from_json(obj["activation"])
    theta = np.asarray(obj["theta"], float)
    if theta.shape != (param_count(md),):
        raise DomainError("theta length inconsistent with dims")
    return md, spec, theta


# ---------------------------------------------------------------------------
# depth / width padding
# ---------------------------------------------------------------------------

def pad_identity_layer(md: MultiIndex, theta, position: int | None = None) -> tuple[MultiIndex, np.ndarray]:
    """Insert one exact identity layer (alpha = (1,1)) before the final map.

    The padded network computes the same function because units with
    alpha = (1,1) implement x -> max(x, x) = x exactly.
    """
    layers = decode_params(md, theta)
    j = len(layers) - 1 if position is None else position
    width = md.dims[len(layers) - 1] if position is None else md.dims[j]
    ident = LayerParams(np.eye(width), np.zeros(width), np.tile([1.0, 1.0], (width, 1)))
    new_layers = layers[:j] + [ident] + layers[j:]
    new_dims = md.dims[:j + 1] + (width,) + md.dims[j + 1:]
    md2 = MultiIndex(new_dims)
    return md2, encode_params(md2, new_layers)


def pad_width(md: MultiIndex, theta, target_dims: Iterable[int]) -> tuple[MultiIndex, np.ndarray]:
    """Grow hidden widths to ``target_dims`` by zero rows/columns.

    Input and output dims must match; extra hidden units get zero incoming
    and outgoing weights and alpha = (1, 0), so the function is unchanged.
    """
    target = tuple(int(d) for d in target_dims)
    if len(target) != len(md.dims) or target[0] != md.dims[0] or target[-1] != md.dims[-1]:
        raise DomainError("padding must preserve depth, input dim, and output dim")
    if any(t < d for t, d in zip(target, md.dims)):
        raise DomainError("target widths must dominate current widths")
    layers = decode_params(md, theta)
    out = []
    for j, lp in enumerate(layers):
        din, dout = target[j], target[j + 1]
        w = np.zeros((dout, din))
        w[: lp.weight.shape[0], : lp.weight.shape[1]] = lp.weight
        b = np.zeros(dout)
        b[: lp.bias.shape[0]] = lp.bias
        if lp.alpha is None:
            out.append(LayerParams(w, b, None))
        else:
            a = np.tile([1.0, 0.0], (dout, 1))
            a[: lp.alpha.shape[0]] = lp.alpha
            out.append(LayerParams(w, b, a))
    md2 = MultiIndex(target)
    return md2, encode_params(md2, out)


# ---------------------------------------------------------------------------
# gradient training
# ---------------------------------------------------------------------------

def _forward_with_cache(md, spec, layers, X):
    hs = [X]
    zs = []
    h = X
    for lp in layers[:-1]:
        z = h @ lp.weight.T + lp.bias
        zs.append(z)
        h = activation_eval(spec, lp.alpha, z)
        hs.append(h)
    out = h @ layers[-1].weight.T + layers[-1].bias
    return hs, zs, out


def loss_and_grad(md: MultiIndex, spec: ActivationSpec, theta, X, Y, loss: str = "squared"):
    """Mean loss over the batch and its analytic gradient in theta.

    ``squared`` is 0.5 * mean |out - y|^2; ``cross_entropy`` treats the
    outputs as logits against one-hot (or soft) targets.
    """
    if not spec.gradient_trainable:
        raise UnsupportedError(
            "singular activations are not gradient-trainable; use the "
            "constructive paths (nearest-center nets, memorization) instead"
        )
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    n = X.shape[0]
    layers = decode_params(md, theta)
    hs, zs, out = _forward_with_cache(md, spec, layers, X)
    if loss == "squared":
        diff = out - Y
        value = 0.5 * float(np.mean(np.sum(diff**2, axis=1)))
        dout = diff / n
    elif loss == "cross_entropy":
        shifted = out - out.max(axis=1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
        logp = shifted - logz
        value = -float(np.mean(np.sum(Y * logp, axis=1)))
        dout = (np.exp(logp) * Y.sum(axis=1, keepdims=True) - Y) / n
    else:
        raise DomainError(f"unknown loss {loss!r}")

    grads = [None] * len(layers)
    delta = dout  # n x d_out
    lp = layers[-1]
    grads[-1] = LayerParams(delta.T @ hs[-1], delta.sum(axis=0), None)
    dh = delta @ lp.weight
    for j in range(len(layers) - 2, -1, -1):
        lp = layers[j]
        dy_dx, dy_da1, dy_da2 = _activation_grads(spec, lp.alpha, zs[j])
        dz = dh * dy_dx
        galpha = np.stack([(dh * dy_da1).sum(axis=0), (dh * dy_da2).sum(axis=0)], axis=1)
        grads[j] = LayerParams(dz.T @ hs[j], dz.sum(axis=0), galpha)
        if j > 0:
            dh = dz @ lp.weight
    return value, encode_params(md, grads)


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 2000
    batch_size: int = 0      # 0 = full batch
    seed: int = 0
    target_loss: float = 0.0
    lr_decay: float = 1.0    # multiplicative per epoch (fixed schedule)
    init_scale: float = 0.5
    loss: str = "squared"
    train_alpha: bool = True


def init_theta(md: MultiIndex, spec: ActivationSpec, rng, scale=0.5) -> np.ndarray:
    layers = []
    dims = md.dims
    for j in range(len(dims) - 2):
        fan = math.sqrt(dims[j])
        layers.append(LayerParams(
            rng.normal(scale=scale / fan, size=(dims[j + 1], dims[j])),
            np.zeros(dims[j + 1]),
            np.tile([0.5, 0.0] if spec.kind == "smooth" else [1.0, 0.0], (dims[j + 1], 1)),
        ))
    layers.append(LayerParams(
        rng.normal(scale=scale / math.sqrt(dims[-2]), size=(dims[-1], dims[-2])),
        np.zeros(dims[-1]),
        None,
    ))
    return encode_params(md, layers)


def _alpha_mask(md: MultiIndex) -> np.ndarray:
    """Boolean mask of the alpha segments inside the flat theta."""
    mask = np.zeros(param_count(md), dtype=bool)
    dims = md.dims
    pos = 0
    for j in range(len(dims) - 2):
        pos += dims[j + 1] * dims[j] + dims[j + 1]
        mask[pos : pos + 2 * dims[j + 1]] = True
        pos += 2 * dims[j + 1]
    return mask


def train_regression(md: MultiIndex, spec: ActivationSpec, dataset, config: TrainConfig | None = None,
                     theta0=None):
    """Plain mini-batch gradient descent with a fixed step schedule.

    Deterministic given the seed.  Returns (theta, history of epoch losses).
    No adaptive optimizers: determinism and a minimal surface matter more
    here than convergence speed.
    """
    config = config or TrainConfig()
    if not spec.gradient_trainable:
        raise UnsupportedError(
            "singular activations are not gradient-trainable; use "
            "memorize_sequence or the constructive fit paths"
        )
    X = np.atleast_2d(np.asarray([p[0] for p in dataset], float))
    Y = np.atleast_2d(np.asarray([p[1] for p in dataset], float))
    if len(X) == 0:
        raise DomainError("dataset must be nonempty")
    rng = np.random.default_rng(config.seed)
    theta = init_theta(md, spec, rng, config.init_scale) if theta0 is None else np.array(theta0, float)
    freeze = ~_alpha_mask(md) if not config.train_alpha else None
    lr = config.lr
    history = []
    n = len(X)
    bs = config.batch_size if config.batch_size > 0 else n
    for epoch in range(config.epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            _, g = loss_and_grad(md, spec, theta, X[idx], Y[idx], config.loss)
            if freeze is not None:
                g = np.where(freeze, g, 0.0)
            theta = theta - lr * g
        lr *= config.lr_decay
        value, _ = loss_and_grad(md, spec, theta, X, Y, config.loss)
        history.append(value)
        if value <= config.target_loss:
            break
    return theta, history


# ---------------------------------------------------------------------------
# constructive memorization (the hypernetwork body)
# ---------------------------------------------------------------------------

def hypernetwork_size(P: int, n_horizon: int) -> int:
    """Smallest M with 2 * floor(M/2) * floor(M/(4P)) >= n_horizon."""
    if P < 1 or n_horizon < 1:
        raise DomainError("P and the horizon count must be >= 1")
    m = 1
    while 2 * (m // 2) * (m // (4 * P)) < n_horizon:
        m += 1
    return m


def memorize_sequence(pairs: list[tuple[np.ndarray, np.ndarray]], P: int, n_horizon: int,
                      seed: int = 0, max_tries: int = 64):
    """ReLU network of shape [P, M, M, P] interpolating v_n -> v_{n+1} exactly.

    Construction: project the keys through a random linear functional with
    pairwise-distinct images (resampling the functional on collisions),
    sort, and realize a piecewise-linear interpolant per output coordinate
    out of shared ReLU bumps; the second hidden layer passes the
    (nonnegative) features through unchanged, and everything is padded to
    width M.  When the key count exceeds the width formula's M (possible
    only for very small P), the width grows to fit the bumps.

    Returns (MultiIndex, theta, activation spec).
    """
    if not pairs:
        raise DomainError("need at least one pair")
    keys = np.atleast_2d(np.asarray([p[0] for p in pairs], float))
    vals = np.atleast_2d(np.asarray([p[1] for p in pairs], float))
    if keys.shape[1] != P or vals.shape[1] != P:
        raise DomainError(f"pairs must live in R^{P}")
    n = len(keys)
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(keys[i], keys[j]):
                raise DomainError(f"duplicate keys at positions {i} and {j}")
    M = max(hypernetwork_size(P, n_horizon), n, 2)
    rng = np.random.default_rng(seed)

    best = None
    for attempt in range(max_tries):
        a = rng.normal(size=P)
        a /= np.linalg.norm(a)
        s = keys @ a
        order = np.argsort(s, kind="stable")
        s_sorted = s[order]
        gaps = np.diff(s_sorted)
        if n > 1 and gaps.min() <= 1e-12 * max(1.0, np.abs(s_sorted).max()):
            continue
        v_sorted = vals[order]

        # shared bump features: relu(s - s_k), k = 0..n-2 (n-1 of them);
        # with one key the map is affine and needs no bumps
        n_bumps = max(n - 1, 1)
        w1 = np.zeros((M, P))
        b1 = np.zeros(M)
        for k in range(n_bumps):
            w1[k] = a
            b1[k] = -s_sorted[min(k, n - 2)] if n > 1 else 0.0
        # exact PL interpolation weights per output coordinate
        w_out = np.zeros((P, M))
        c_out = v_sorted[0].copy()
        if n > 1:
            slopes = (v_sorted[1:] - v_sorted[:-1]) / gaps[:, None]  # (n-1, P)
            betas = np.vstack([slopes[:1], slopes[1:] - slopes[:-1]])  # (n-1, P)
            w_out[:, : n - 1] = betas.T

        md = MultiIndex((P, M, M, P))
        layers = [
            LayerParams(w1, b1, np.tile([1.0, 0.0], (M, 1))),
            LayerParams(np.eye(M), np.zeros(M), np.tile([1.0, 0.0], (M, 1))),
            LayerParams(w_out, c_out, None),
        ]
        theta = encode_params(md, layers)

        out = forward(md, SINGULAR, theta, keys)
        residual = float(np.max(np.abs(out - vals)))
        if best is None or residual < best[0]:
            best = (residual, md, theta)
        if residual <= 1e-6:
            return md, theta, SINGULAR
    raise FitFailure(
        f"memorization residual {best[0]:.3g} above 1e-6 after {max_tries} projections",
        {"residual": best[0]},
    )
