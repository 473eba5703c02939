"""The static model: encoder network + geometric attention over fixed codes.

Besides evaluation, this module provides two fit procedures:

* ``fit_static_constructive`` builds a farthest-point net of the inputs,
  encodes the target's values at the net points, and realizes the
  input -> nearest-center assignment.  With singular activations the
  assignment network is constructed exactly (floor units implement the
  halfspace comparisons), so the model error at a net point is exactly
  the quantization error of the target value there.
* ``fit_static_end2end`` refines encoder logits by gradient descent on
  the output-space loss, differentiating through the simplex projection
  on its active set (ties resolved to the sorted-threshold branch).

The complexity calculators evaluate the model-size bound formulas row by
row; they are pure formula evaluations and bitwise reproducible.  The
unnamed absolute constant ``c`` appearing in them is always an explicit
input, never silently defaulted.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, UnsupportedError
from .networks import (
    ActivationSpec,
    LayerParams,
    MultiIndex,
    SINGULAR,
    TrainConfig,
    encode_params,
    forward,
    loss_and_grad,
    train_regression,
)
from .metrics import project_simplex
from .spaces import QasSpace, QuantizationCode


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------

@dataclass
class GeometricTransformer:
    space: QasSpace
    md: MultiIndex
    activation: ActivationSpec
    theta: np.ndarray
    codes: list[QuantizationCode]

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.md.out_dim != len(self.codes):
            raise DomainError(
                f"encoder output width {self.md.out_dim} != code count {len(self.codes)}"
            )
        qs = {c.q for c in self.codes}
        if len(qs) != 1:
            raise DomainError("codes must share a single quantization level")
        for c in self.codes:
            if c.z.size != self.space.code_length(c.q):
                raise DomainError("invalid code length for the space")

    @property
    def n_anchors(self) -> int:
        return len(self.codes)

    @property
    def level(self) -> int:
        return self.codes[0].q

    def logits(self, x) -> np.ndarray:
        return forward(self.md, self.activation, self.theta, x)

    def __call__(self, x):
        return self.space.attention(self.logits(x), self.codes)

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "dims": list(self.md.dims),
            "activation": self.activation.to_json(),
            "theta": self.theta.tolist(),
            "codes": [c.to_json() for c in self.codes],
        }

    @staticmethod
    def from_json(obj: dict) -> "GeometricTransformer":
        from .spaces import space_from_json

        return GeometricTransformer(
            space=space_from_json(obj["space"]),
            md=MultiIndex(tuple(obj["dims"])),
            activation=ActivationSpec.from_json(obj["activation"]),
            theta=np.asarray(obj["theta"], float),
            codes=[QuantizationCode.from_json(c) for c in obj["codes"]],
        )


def gt_eval(gt: GeometricTransformer, x):
    return gt(x)


# ---------------------------------------------------------------------------
# farthest-point nets
# ---------------------------------------------------------------------------

def farthest_point_net(points: np.ndarray, n_max: int) -> tuple[list[int], float]:
    """Greedy farthest-point traversal seeded at the lexicographically
    smallest point; reproducible without randomness.

    Returns (chosen indices, covering radius).  The chosen centers are
    automatically separated by at least the final covering radius, which
    keeps the separation >= radius/2 required of a proper net.
    """
    points = np.atleast_2d(np.asarray(points, float))
    n = len(points)
    seed = int(np.lexsort(points.T[::-1])[0])
    chosen = [seed]
    dist = np.linalg.norm(points - points[seed], axis=1)
    while len(chosen) < min(n_max, n) and dist.max() > 0.0:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return chosen, float(dist.max())


def nearest_center_labels(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center per point; ties go to the lowest index."""
    d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    return np.argmin(d, axis=1)  # argmin takes the first minimum


def exact_assignment_network(centers: np.ndarray, domain_points: np.ndarray) -> tuple[MultiIndex, np.ndarray]:
    """Singular-activation network emitting the one-hot of the nearest center.

    Layer 1 realizes every pairwise comparison "closer to c_i than to c_j"
    as a floor unit applied to a scaled halfspace functional (the scaling
    constant comes from the domain's extent, so inputs must stay inside
    the sampled region).  Layer 2 floors the normalized win count, which
    is 1 exactly when a center wins all comparisons.  At the centers
    themselves the output is exactly one-hot.
    """
    centers = np.atleast_2d(np.asarray(centers, float))
    k, d = centers.shape
    if k == 1:
        md = MultiIndex((d, 1, 1))
        layers = [
            LayerParams(np.zeros((1, d)), np.zeros(1), np.array([[1.0, 1.0]])),
            LayerParams(np.zeros((1, 1)), np.ones(1), None),
        ]
        return md, encode_params(md, layers)
    pairs = [(i, j) for i in range(k) for j in range(k) if i != j]
    w1 = np.zeros((len(pairs), d))
    b1 = np.zeros(len(pairs))
    pts = np.atleast_2d(np.asarray(domain_points, float))
    for row, (i, j) in enumerate(pairs):
        w = 2.0 * (centers[i] - centers[j])
        b = float(centers[j] @ centers[j] - centers[i] @ centers[i])
        vals = pts @ w + b
        scale = max(float(np.max(np.abs(vals))), np.linalg.norm(w) * 1e-9) * 1.25 + 1e-12
        w1[row] = w / scale
        b1[row] = b / scale + 1.0  # floor((g/scale) + 1) = [g >= 0] on the domain
    w2 = np.zeros((k, len(pairs)))
    for row, (i, j) in enumerate(pairs):
        w2[i, row] = 1.0 / (k - 1)
    # win counts are integers m scaled by 1/(k-1); the half-cell bias keeps
    # floor((2m+1)/(2(k-1))) robust to the summation's last-ulp error
    b2 = np.full(k, 0.5 / (k - 1))
    md = MultiIndex((d, len(pairs), k, k))
    layers = [
        LayerParams(w1, b1, np.tile([0.0, 0.0], (len(pairs), 1))),
        LayerParams(w2, b2, np.tile([0.0, 0.0], (k, 1))),
        LayerParams(np.eye(k), np.zeros(k), None),
    ]
    return md, encode_params(md, layers)


# ---------------------------------------------------------------------------
# fit reports
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    sup_error: float
    center_indices: list[int]
    covering_radius: float
    quantization_errors: list[float]
    classification_defect: float
    budget: dict
    wall_time: float
    error_bound: float | None = None
    final_loss: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "sup_error": self.sup_error,
            "center_indices": list(map(int, self.center_indices)),
            "covering_radius": self.covering_radius,
            "quantization_errors": [float(e) for e in self.quantization_errors],
            "classification_defect": self.classification_defect,
            "budget": self.budget,
            "wall_time": self.wall_time,
            "error_bound": self.error_bound,
            "final_loss": self.final_loss,
            **({"extras": self.extras} if self.extras else {}),
        }


def _sup_error(space, f, xs, gt):
    worst = 0.0
    for x in xs:
        worst = max(worst, space.distance(f(x), gt(x)))
    return worst


def fit_static_constructive(
    f: Callable,
    train_x,
    space: QasSpace,
    budget: dict,
    config: dict | None = None,
) -> tuple[GeometricTransformer, FitReport]:
    """Net-and-quantize fit of x -> f(x) in the output space.

    Steps: (i) a greedy farthest-point net of the training inputs of size
    at most N; (ii) codes for the target values at the net points at
    level q; (iii) an encoder that classifies inputs to the one-hot of
    their nearest center, built exactly for singular activations and
    trained on soft one-hot labels with squared loss otherwise.

    Config keys: activation ("singular"|"smooth"|"classical"), lipschitz
    and holder estimates for the reported bound (estimated from data when
    absent), train (TrainConfig fields) for the gradient path.
    """
    t0 = time.perf_counter()
    config = dict(config or {})
    xs = np.atleast_2d(np.asarray(train_x, float))
    if len(xs) == 0:
        raise DomainError("train_x must be nonempty")
    n_budget = int(budget["N"])
    q = int(budget["q"])
    if n_budget < 1 or q < 1:
        raise DomainError("budgets must be >= 1")

    idx, radius = farthest_point_net(xs, n_budget)
    centers = xs[idx]
    values = [f(x) for x in centers]
    codes = []
    qerrs = []
    for y in values:
        code, err = space.encode_point(y, q)
        codes.append(code)
        qerrs.append(err)

    act_kind = config.get("activation", "singular")
    if act_kind == "singular":
        spec = SINGULAR
        md, theta = exact_assignment_network(centers, xs)
    else:
        spec = ActivationSpec(act_kind)
        labels = nearest_center_labels(xs, centers)
        # amplified one-hot targets push the achieved logit gaps past the
        # simplex projection's saturation point, so the decoded weight sits
        # on (or near) the intended vertex
        amp = float(config.get("label_amplitude", 3.0))
        onehot = amp * np.eye(len(centers))[labels]
        hidden = int(config.get("hidden", max(8, 2 * len(centers))))
        md = MultiIndex((xs.shape[1], hidden, len(centers)))
        tcfg = {"lr": 0.2, "epochs": 1500, "seed": 0, "train_alpha": False}
        tcfg.update(config.get("train", {}))
        tc = TrainConfig(**tcfg)
        theta, _ = train_regression(md, spec, list(zip(xs, onehot)), tc)

    gt = GeometricTransformer(space, md, spec, theta, codes)

    # classification defect: distance between the model output and the
    # nearest-center code image it should have selected
    labels = nearest_center_labels(xs, centers)
    defect = 0.0
    for x, lab in zip(xs, labels):
        defect = max(defect, space.distance(gt(x), space.quantize(codes[lab])))

    sup = _sup_error(space, f, xs, gt)
    alpha = float(config.get("holder_exponent", 1.0))
    lip = config.get("lipschitz")
    if lip is None:
        lip = _estimate_lipschitz(space, f, xs, alpha)
    bound = lip * radius**alpha + max(qerrs) + defect
    report = FitReport(
        sup_error=sup,
        center_indices=[int(i) for i in idx],
        covering_radius=radius,
        quantization_errors=qerrs,
        classification_defect=defect,
        budget={"N": n_budget, "q": q},
        wall_time=time.perf_counter() - t0,
        error_bound=bound,
        extras={"lipschitz_estimate": float(lip), "holder_exponent": alpha},
    )
    return gt, report


def _estimate_lipschitz(space, f, xs, alpha, max_pairs=200):
    rng = np.random.default_rng(0)
    n = len(xs)
    if n < 2:
        return 0.0
    best = 0.0
    pairs = min(max_pairs, n * (n - 1) // 2)
    for _ in range(pairs):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        dx = float(np.linalg.norm(xs[i] - xs[j])) ** alpha
        if dx > 1e-12:
            best = max(best, space.distance(f(xs[i]), f(xs[j])) / dx)
    return best


# ---------------------------------------------------------------------------
# end-to-end gradient fit
# ---------------------------------------------------------------------------

def _simplex_projection_jacobian(u: np.ndarray) -> np.ndarray:
    """Jacobian of the sort-threshold projection at its active set.

    On the active set S the projection is w_i = u_i - (sum_S u - 1)/|S|,
    so the Jacobian is (I - 11^T/|S|) on S and zero elsewhere; at ties the
    sorted-threshold branch decides membership.
    """
    w = project_simplex(u)
    active = w > 0.0
    k = int(active.sum())
    J = np.zeros((u.size, u.size))
    scale = 1.0 / k
    for i in np.nonzero(active)[0]:
        for j in np.nonzero(active)[0]:
            J[i, j] = (1.0 if i == j else 0.0) - scale
    return J


def fit_static_end2end(
    f: Callable,
    train_x,
    space: QasSpace,
    budget: dict,
    config: dict | None = None,
) -> tuple[GeometricTransformer, FitReport]:
    """Gradient refinement of the encoder against the output-space loss.

    The loss is sum_x d_Y(f(x), gt(x))^p.  Gradients flow analytically
    through the network, analytically through the simplex projection on
    its active set, and by central finite differences through the mixing
    distance as a function of the simplex weights.  Requires a smooth or
    classical activation; codes stay fixed (they come from the
    constructive stage or from config["codes"]).
    """
    t0 = time.perf_counter()
    config = dict(config or {})
    act_kind = config.get("activation", "smooth")
    if act_kind == "singular":
        raise UnsupportedError("end-to-end gradient fitting needs a smooth or classical activation")
    spec = config.get("activation_spec") or ActivationSpec(act_kind)
    xs = np.atleast_2d(np.asarray(train_x, float))
    n_budget = int(budget["N"])
    q = int(budget["q"])

    codes = config.get("codes")
    tc = TrainConfig(**config.get("train", {}))
    warm_theta = None
    warm_md = None
    if codes is None:
        # constructive warm start: same activation kind, so the returned
        # classifier doubles as the initial encoder; the classifier gets its
        # own training budget, the "train" block only drives the refinement
        base_cfg = {k: v for k, v in config.items()
                    if k in ("holder_exponent", "lipschitz", "hidden", "label_amplitude")}
        base_cfg["activation"] = act_kind
        base_cfg["train"] = config.get(
            "warm_train", {"lr": 0.3, "epochs": 2000, "seed": tc.seed, "train_alpha": False}
        )
        gt0, _ = fit_static_constructive(f, xs, space, budget, base_cfg)
        codes = gt0.codes
        if config.get("warm_start", True):
            warm_theta, warm_md = gt0.theta, gt0.md
    points = [space.quantize(c) for c in codes]
    targets = [f(x) for x in xs]
    n_logits = len(codes)

    md = config.get("md") or warm_md or MultiIndex(
        (xs.shape[1], int(config.get("hidden", max(8, 2 * n_logits))), n_logits)
    )
    rng = np.random.default_rng(tc.seed)
    if config.get("theta0") is not None:
        theta = np.asarray(config["theta0"], float)
    elif warm_theta is not None and md.dims == (warm_md.dims if warm_md else None):
        theta = np.array(warm_theta)
    else:
        from .networks import init_theta

        theta = init_theta(md, spec, rng, tc.init_scale)

    p = float(config.get("loss_exponent", getattr(space, "p", 2.0)))
    h_fd = float(config.get("fd_step", 1e-5))
    lr = tc.lr
    history = []

    def sample_loss_and_logit_grad(x, y):
        u = forward(md, spec, theta, x)
        w = project_simplex(u)

        def dist_of_w(wv):
            mixed = space.mix(wv / wv.sum(), points)
            return space.distance(y, mixed) ** p

        base = dist_of_w(w)
        gw = np.zeros(n_logits)
        for i in range(n_logits):
            wp = w.copy()
            wp[i] += h_fd
            wm = np.maximum(w.copy(), 0.0)
            wm[i] = max(wm[i] - h_fd, 0.0)
            gw[i] = (dist_of_w(wp) - dist_of_w(wm)) / (h_fd + (w[i] - wm[i]))
        gu = _simplex_projection_jacobian(u).T @ gw
        return base, u, gu

    n = len(xs)
    epochs = tc.epochs if tc.epochs else 300
    best_theta, best_loss = np.array(theta), math.inf
    for epoch in range(epochs):
        total = 0.0
        grad = np.zeros_like(theta)
        for x, y in zip(xs, targets):
            val, u, gu = sample_loss_and_logit_grad(x, y)
            total += val
            # chain rule through the net: with the target u - gu, the
            # squared-loss gradient is exactly J_theta(u)^T gu
            _, gtheta = loss_and_grad(md, spec, theta, x[None], (u - gu)[None])
            grad += gtheta
        history.append(total / n)
        if history[-1] < best_loss:
            best_loss, best_theta = history[-1], np.array(theta)
        if best_loss <= tc.target_loss:
            break
        theta = theta - lr * grad / n
        lr *= tc.lr_decay
    # the final update can overshoot; keep the best-loss iterate
    theta = best_theta

    gt = GeometricTransformer(space, md, spec, theta, list(codes))
    sup = _sup_error(space, f, xs, gt)
    report = FitReport(
        sup_error=sup,
        center_indices=[],
        covering_radius=0.0,
        quantization_errors=[],
        classification_defect=0.0,
        budget={"N": n_budget, "q": q},
        wall_time=time.perf_counter() - t0,
        final_loss=best_loss if history else None,
        extras={"epochs_run": len(history)},
    )
    return gt, report


# ---------------------------------------------------------------------------
# complexity calculators
# ---------------------------------------------------------------------------

@dataclass
class ComplexityReport:
    activation: str
    depth: float
    width: float
    n_params: float
    ln_n_anchors: float | None = None
    n_anchors: float | None = None
    level_q: int | None = None
    implicit: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "activation": self.activation,
            "depth": self.depth,
            "width": self.width,
            "n_params": self.n_params,
            "ln_N": self.ln_n_anchors,
            "N": self.n_anchors,
            "q": self.level_q,
            "implicit": self.implicit,
            "inputs": self.inputs,
        }

    CSV_COLUMNS = ["activation", "depth", "width", "n_params", "ln_N", "N", "q"]

    def csv_row(self) -> list:
        return [self.activation, self.depth, self.width, self.n_params,
                self.ln_n_anchors, self.n_anchors, self.level_q]


def _plus_plus(x: float) -> float:
    return max(1.0, x)


def _solve_implicit_depth_parameter(eps: float, W: float, n: int, alpha: float,
                                    n_anchors: float | None = None) -> float:
    """Solve eps = sqrt(N') n^(alpha/2) W^(-sqrt(D)) (W^((1-alpha) sqrt(D)) + 2)
    for D (the sqrt(N') factor enters only in the transformer table).

    The right side is strictly decreasing in D, so bisection applies.
    """
    if W <= 1:
        raise DomainError("width parameter W must exceed 1")
    lead = (math.sqrt(n_anchors) if n_anchors is not None else 1.0) * n ** (alpha / 2.0)

    def rhs(D):
        r = math.sqrt(D)
        return lead * W ** (-r) * (W ** ((1 - alpha) * r) + 2.0)

    lo, hi = 1e-12, 1.0
    while rhs(hi) > eps and hi < 1e12:
        hi *= 2.0
    if rhs(hi) > eps:
        raise DomainError("implicit depth parameter out of range for these inputs")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rhs(mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi


def ln_anchor_count(alpha, L_f, diam, kappa, C_eta, c, eps_A) -> float:
    """ln(N) = ln(kappa) * ceil(alpha^-1 (log2 diam - log2(eps_A / 3 L_f)
    + log2(max(1, C_eta * 2 c ceil(1/alpha) log2(kappa)))))."""
    if min(alpha, L_f, diam, kappa, C_eta, eps_A) <= 0 or not 0 < alpha <= 1:
        raise DomainError("inputs must be positive with alpha in (0, 1]")
    log_kappa = math.log2(kappa)
    inner = (
        math.log2(diam)
        - math.log2(eps_A / (3.0 * L_f))
        + math.log2(_plus_plus(C_eta * 2.0 * c * math.ceil(1.0 / alpha) * log_kappa))
    )
    return math.log(kappa) * math.ceil(inner / alpha)


def complexity_static(activation: str, inputs: dict) -> ComplexityReport:
    """Model-size bounds of the static transformer, row by row.

    Required inputs: n, alpha, L_f, diam, kappa, C_eta, c, eps_A; plus W
    (singular), eps_tilde (smooth), or depth (classical).  ``q`` comes
    from a "modulus" callable applied to eps_Q, or directly.
    """
    n = int(inputs["n"])
    alpha = float(inputs["alpha"])
    ln_n = ln_anchor_count(alpha, inputs["L_f"], inputs["diam"], inputs["kappa"],
                           inputs["C_eta"], inputs["c"], inputs["eps_A"])
    N = max(1.0, math.ceil(math.exp(ln_n) - 1e-12))
    implicit = {}
    if activation == "singular":
        W = float(inputs["W"])
        D = inputs.get("D")
        if D is None:
            D = _solve_implicit_depth_parameter(inputs["eps_A"], W, n, alpha, n_anchors=N)
        implicit["D"] = D
        depth = (N - 1) * (1 + (2**6 * n * D + 3))
        width = n * (N - 2) + max(n, 5 * W + 13)
        params = ((11.0 / 4.0) * n**2 * (N - 1) ** 2 - 1) * (N - 1) \
            * max(n + 3, 5 * W + 16) ** 2 * (2**6 * n * D + 4)
    elif activation == "smooth":
        et = float(inputs["eps_tilde"])
        L_f = float(inputs["L_f"])
        grow = et ** (-2 * n / alpha) * L_f ** (2 * n / alpha) * (1 + n / 4) ** (2 * n / alpha)
        depth = (N - 1) * (1 + grow)
        width = n * (N - 1) + 3
        params = ((11.0 / 4.0) * n**2 * (N - 1) ** 2 - 1) * (N - 1) * (n + 6) ** 2 \
            * (grow**2 + 1)
    elif activation == "classical":
        depth = float(inputs["depth"])
        width = n + N + 1
        params = (N + n + 1) ** 2 * (depth + 1)
    else:
        raise DomainError(f"unknown activation kind {activation!r}")
    q = inputs.get("q")
    if q is None and "modulus" in inputs and "eps_Q" in inputs:
        q = inputs["modulus"](inputs["eps_Q"])
    return ComplexityReport(
        activation=activation, depth=float(depth), width=float(width),
        n_params=float(params), ln_n_anchors=ln_n, n_anchors=N,
        level_q=int(q) if q is not None else None, implicit=implicit,
        inputs={k: v for k, v in inputs.items() if not callable(v)},
    )


def encoder_constant(c: float, m: int, alpha: float, kappa: float, diam: float) -> float:
    """C_K = c sqrt(m) ceil(1/alpha) log2(kappa_K(1/5)) diam(K)^alpha."""
    if min(c, m, alpha, kappa, diam) <= 0:
        raise DomainError("inputs must be positive")
    return c * math.sqrt(m) * math.ceil(1.0 / alpha) * math.log2(kappa) * diam**alpha


def complexity_ffnn(activation: str, inputs: dict) -> ComplexityReport:
    """Model-size bounds for the feedforward encoder, plus the constant C_K."""
    n = int(inputs["n"])
    m = int(inputs["m"])
    alpha = float(inputs["alpha"])
    implicit = {}
    if activation == "singular":
        W = float(inputs["W"])
        D = inputs.get("D")
        if D is None:
            D = _solve_implicit_depth_parameter(inputs["eps"], W, n, alpha)
        implicit["D"] = D
        depth = m * (1 + (2**6 * n * D + 3))
        width = n * (m - 1) + max(n, 5 * W + 13)
        params = ((11.0 / 4.0) * n**2 * m**2 - 1) * m \
            * max(n + 3, 5 * W + 16) ** 2 * (2**6 * n * D + 4)
    elif activation == "smooth":
        et = float(inputs["eps_tilde"])
        L_f = float(inputs["L_f"])
        grow = et ** (-2 * n / alpha) * L_f ** (2 * n / alpha) * (1 + n / 4) ** (2 * n / alpha)
        depth = m * (1 + grow)
        width = n * m + 3
        params = ((11.0 / 4.0) * n**2 * m**2 - 1) * m * (n + 6) ** 2 * (grow**2 + 1)
    elif activation == "classical":
        depth = float(inputs["depth"])
        width = n + m + 2
        params = (n + m + 2) ** 2 * (depth + 1)
    else:
        raise DomainError(f"unknown activation kind {activation!r}")
    if all(k in inputs for k in ("c", "kappa", "diam")):
        implicit["C_K"] = encoder_constant(inputs["c"], m, alpha, inputs["kappa"], inputs["diam"])
    return ComplexityReport(
        activation=activation, depth=float(depth), width=float(width),
        n_params=float(params), implicit=implicit,
        inputs={k: v for k, v in inputs.items() if not callable(v)},
    )


# ---------------------------------------------------------------------------
# metric capacity estimation
# ---------------------------------------------------------------------------

def verify_packing(cloud: np.ndarray, center0: int, r: float, chosen: list[int], delta: float) -> bool:
    """Certify that the delta*r balls at the chosen points are pairwise
    disjoint as subsets of the cloud and contained in Ball(x0, r)."""
    d0 = np.linalg.norm(cloud - cloud[center0], axis=1)
    for a, i in enumerate(chosen):
        di = np.linalg.norm(cloud - cloud[i], axis=1)
        inside_i = di < delta * r
        if np.any(inside_i & (d0 >= r)):
            return False
        for j in chosen[a + 1:]:
            dj = np.linalg.norm(cloud - cloud[j], axis=1)
            if np.any(inside_i & (dj < delta * r)):
                return False
    return True


def metric_capacity_estimate(cloud, delta: float, trials: int = 200, seed: int = 0) -> int:
    """Certified lower bound of the packing capacity of a finite point set.

    Random-restart greedy search over centers x0 and radii r for the
    largest k such that k balls of radius delta*r centered at cloud
    points fit disjointly inside Ball(x0, r).  Every candidate packing is
    re-verified before being counted, so the estimate never exceeds the
    true supremum, and it is nondecreasing in the number of trials.
    """
    cloud = np.atleast_2d(np.asarray(cloud, float))
    if len(cloud) < 2:
        raise DomainError("need at least two points")
    if not 0 < delta <= 1:
        raise DomainError("delta must be in (0, 1]")
    rng = np.random.default_rng(seed)
    pd = np.linalg.norm(cloud[:, None] - cloud[None, :], axis=2)
    rmax = pd.max() * 1.5
    best = 0
    for _ in range(trials):
        c0 = int(rng.integers(0, len(cloud)))
        r = float(rng.uniform(pd[pd > 0].min() * 0.5, rmax))
        d0 = np.linalg.norm(cloud - cloud[c0], axis=1)
        inball = np.nonzero(d0 < r)[0]
        # greedy on cloud-subset disjointness: a candidate ball may neither
        # leak outside Ball(x0, r) nor share a cloud point with chosen balls
        chosen: list[int] = []
        covered = np.zeros(len(cloud), dtype=bool)
        for i in inball:
            members = np.linalg.norm(cloud - cloud[i], axis=1) < delta * r
            if np.any(members & (d0 >= r)):
                continue
            if not np.any(members & covered):
                chosen.append(int(i))
                covered |= members
        if len(chosen) > best and verify_packing(cloud, c0, r, chosen, delta):
            best = len(chosen)
    return best
