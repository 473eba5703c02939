"""Tests for the output-space variants: mixing, quantizers, attention."""

import numpy as np
import pytest

from qasnets.errors import DomainError, QuantizationSearchError
from qasnets.measures import DiscreteMeasure, GaussianMeasure, PathMeasure
from qasnets.metrics import wasserstein_p
from qasnets.spaces import (
    AdaptedEmpirical,
    ExponentialFamily,
    ForwardRateRkhs,
    GaussianSpd,
    LinearSchauder,
    QuantizationCode,
    WassersteinConvex,
    forward_rate_kernel,
    snap_to_grid,
    space_from_json,
)

RNG = np.random.default_rng


def w_space(d=1, p=1.0):
    return WassersteinConvex(d=d, p=p, q_exponent=p + 1)


def random_discrete(rng, d=1, max_atoms=3, scale=1.0):
    n = int(rng.integers(1, max_atoms + 1))
    return DiscreteMeasure(scale * rng.normal(size=(n, d)), rng.dirichlet(np.ones(n)))


def random_path_measure(rng, d=1, T=2, q_grid=4):
    n = int(rng.integers(1, 4))
    raw = rng.uniform(0, 1, size=(n, T, d))
    snapped = snap_to_grid(raw, q_grid, d, T)
    return PathMeasure.from_paths(snapped, rng.dirichlet(np.ones(n)))


def disjoint_path_measures(rng, count, d=1, T=2, q_grid=256):
    """Tuple of path measures whose supports share no time-1 atom.

    Convex mixing satisfies the deviation inequality with constant 1 on
    such generic tuples; tuples with colliding prefixes can violate it
    because the mixture blends conditional laws.
    """
    while True:
        measures = [random_path_measure(rng, d, T, q_grid) for _ in range(count)]
        roots = [set(tuple(p[0]) for p in m.paths) for m in measures]
        ok = all(
            roots[i].isdisjoint(roots[j])
            for i in range(count)
            for j in range(i + 1, count)
        )
        if ok:
            return measures


def random_gaussian(rng, d):
    a = rng.normal(size=(d, d)) * 0.4
    cov = a @ a.T + np.eye(d) * rng.uniform(0.5, 1.5)
    return GaussianMeasure(rng.normal(size=d), cov)


def random_code(space, rng, q):
    n = space.code_length(q)
    if isinstance(space, (WassersteinConvex, LinearSchauder)):
        return QuantizationCode(rng.normal(size=n), q)
    if isinstance(space, AdaptedEmpirical):
        return QuantizationCode(rng.uniform(0, 1, size=n), q)
    if isinstance(space, GaussianSpd):
        return QuantizationCode(rng.normal(size=n) * 0.5, q)
    return QuantizationCode(rng.normal(size=n), q)  # exponential family


ALL_SPACES = [
    w_space(1, 1.0),
    w_space(2, 2.0),
    AdaptedEmpirical(d=1, T=2, p=1.0),
    LinearSchauder(),
    ForwardRateRkhs(alpha=4.0),
    GaussianSpd(d=2),
    ExponentialFamily(d=3),
]


class TestAttentionIdentity:
    @pytest.mark.parametrize("space", ALL_SPACES, ids=lambda s: s.kind + str(getattr(s, "d", "")))
    def test_basis_logits_select_code(self, space):
        rng = RNG(101)
        for _ in range(25):
            n = int(rng.integers(2, 5))
            q = int(rng.integers(1, 4))
            codes = [random_code(space, rng, q) for _ in range(n)]
            i = int(rng.integers(0, n))
            u = np.zeros(n)
            u[i] = 1.0
            got = space.attention(u, codes)
            want = space.quantize(codes[i])
            assert space.distance(got, want) == 0.0

    def test_uniform_three_diracs(self):
        space = w_space(1, 1.0)
        codes = [QuantizationCode([float(v)], 1) for v in (0.0, 1.0, 2.0)]
        out = space.attention([0.5, 0.5, 0.5], codes)
        want = DiscreteMeasure(np.array([[0.0], [1.0], [2.0]]), np.full(3, 1 / 3))
        assert wasserstein_p(out, want, 1) == pytest.approx(0.0, abs=1e-12)

    def test_exponential_family_selects_projected_parameter(self):
        space = ExponentialFamily(d=2)
        z1, z2 = np.array([1.5, -0.2]), np.array([0.3, 0.4])
        out = space.attention([1.0, 0.0], [QuantizationCode(z1, 1), QuantizationCode(z2, 1)])
        np.testing.assert_array_equal(out, [1.0, 0.0])

    def test_exponential_family_output_in_cube(self):
        space = ExponentialFamily(d=3)
        rng = RNG(5)
        for _ in range(50):
            codes = [QuantizationCode(rng.normal(scale=3, size=3), 1) for _ in range(4)]
            out = space.attention(rng.normal(size=4), codes)
            assert np.all(out >= 0.0) and np.all(out <= 1.0)


class TestMixing:
    def test_vertex_exactness_returns_the_point(self):
        space = w_space(1)
        pts = [DiscreteMeasure.dirac(v) for v in (0.0, 1.0, 2.0)]
        out = space.mix([0.0, 0.0, 1.0], pts)
        assert out is pts[2]

    def test_wasserstein_convex_combination(self):
        space = w_space(1)
        out = space.mix([0.5, 0.5], [DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(2.0)])
        want = DiscreteMeasure(np.array([[0.0], [2.0]]), [0.5, 0.5])
        assert out.equal_as_measure(want)

    def test_gaussian_log_parameter_average(self):
        space = GaussianSpd(d=1)
        a = GaussianMeasure([0.0], [[1.0]])
        b = GaussianMeasure([0.0], [[np.exp(2.0)]])
        out = space.mix([0.5, 0.5], [a, b])
        assert out.mean[0] == pytest.approx(0.0)
        assert out.cov[0, 0] == pytest.approx(np.e, rel=1e-12)

    def test_mismatched_lengths(self):
        space = w_space(1)
        with pytest.raises(DomainError):
            space.mix([1.0], [DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(1.0)])


class TestSimplicialDefect:
    def _check_defects(self, space, sampler, n_cases=100, seed=7, tuple_sampler=None):
        rng = RNG(seed)
        worst = np.inf
        for _ in range(n_cases):
            n = int(rng.integers(2, 5))
            if tuple_sampler is not None:
                pts = tuple_sampler(rng, n)
            else:
                pts = [sampler(rng) for _ in range(n)]
            w = rng.dirichlet(np.ones(n))
            worst = min(worst, space.simplicial_defect(w, pts))
        assert worst >= -1e-9

    def test_wasserstein_p1(self):
        self._check_defects(w_space(1, 1.0), lambda rng: random_discrete(rng, 1))

    def test_wasserstein_p2_d2(self):
        self._check_defects(w_space(2, 2.0), lambda rng: random_discrete(rng, 2))

    def test_adapted(self):
        # generic position: mixing blends conditional laws when points share
        # time-1 atoms, and the constant-1 inequality can fail there
        self._check_defects(
            AdaptedEmpirical(d=1, T=2, p=1.0), None,
            tuple_sampler=lambda rng, n: disjoint_path_measures(rng, n),
        )

    def test_adapted_shared_prefix_counterexample_exists(self):
        # documents why the defect test needs generic tuples
        space = AdaptedEmpirical(d=1, T=2, p=1.0)
        rng = RNG(7)
        worst = np.inf
        for _ in range(100):
            n = int(rng.integers(2, 5))
            pts = [random_path_measure(rng, q_grid=4) for _ in range(n)]
            w = rng.dirichlet(np.ones(n))
            worst = min(worst, space.simplicial_defect(w, pts))
        assert worst < -1e-3

    def test_linear(self):
        self._check_defects(LinearSchauder(), lambda rng: rng.normal(size=int(rng.integers(1, 5))))

    def test_forward_rate(self):
        space = ForwardRateRkhs(alpha=4.5)
        self._check_defects(space, lambda rng: rng.normal(size=int(rng.integers(1, 5))))

    def test_gaussian_1d_tight(self):
        self._check_defects(GaussianSpd(d=1), lambda rng: random_gaussian(rng, 1))

    def test_gaussian_2d_declared(self):
        self._check_defects(GaussianSpd(d=2), lambda rng: random_gaussian(rng, 2))

    def test_exponential(self):
        self._check_defects(ExponentialFamily(d=2), lambda rng: rng.uniform(0, 1, size=2))

    def test_barycentric_mixer(self):
        space = WassersteinConvex(d=1, p=2.0, q_exponent=2.0, bounds=([-5.0], [5.0]),
                                  barycentric_mixing=True)
        assert space.mixing_constant == 2.0 and space.mixing_exponent == 2.0
        self._check_defects(space, lambda rng: random_discrete(rng, 1))

    def test_vertex_weight_defect_nonnegative(self):
        space = w_space(1)
        pts = [random_discrete(RNG(3), 1) for _ in range(3)]
        w = np.array([0.0, 1.0, 0.0])
        assert space.simplicial_defect(w, pts) >= 0.0


class TestQuantize:
    def test_wasserstein_two_atoms(self):
        space = w_space(1)
        out = space.quantize(QuantizationCode([0.0, 2.0], 2))
        assert out.equal_as_measure(DiscreteMeasure(np.array([[0.0], [2.0]]), [0.5, 0.5]))

    def test_adapted_snap(self):
        space = AdaptedEmpirical(d=1, T=1, p=1.0)
        out = space.quantize(QuantizationCode([0.3, 0.8, 0.3, 0.3], 4))
        # edge 1/2: 0.3 -> 0.25, 0.8 -> 0.75; duplicates merge
        atoms = sorted(v[0] for v in out.base.atoms)
        assert atoms == [0.25, 0.75]
        np.testing.assert_allclose(sorted(out.base.weights), [0.25, 0.75])

    def test_gaussian_zero_code_is_standard(self):
        space = GaussianSpd(d=1)
        out = space.quantize(QuantizationCode([0.0, 0.0], 1))
        assert out.mean[0] == 0.0 and out.cov[0, 0] == pytest.approx(1.0)

    def test_bad_code_length(self):
        with pytest.raises(DomainError):
            w_space(2).quantize(QuantizationCode([0.0, 1.0, 2.0], 2))

    def test_wasserstein_space_precondition(self):
        with pytest.raises(DomainError):
            WassersteinConvex(d=1, p=2.0, q_exponent=2.0)  # unbounded needs q > p
        WassersteinConvex(d=1, p=2.0, q_exponent=2.0, bounds=([0.0], [1.0]))


class TestEncode:
    def test_exactly_representable(self):
        space = w_space(1)
        y = DiscreteMeasure(np.array([[0.0], [2.0]]), [0.5, 0.5])
        code, err = space.encode_point(y, 2)
        assert err == 0.0

    def test_linear_truncation_exact_on_short_support(self):
        space = LinearSchauder()
        y = np.array([1.0, -2.0, 0.5])
        code, err = space.encode_point(y, 5)
        assert err == 0.0

    def test_gaussian_exact(self):
        space = GaussianSpd(d=2)
        y = random_gaussian(RNG(9), 2)
        code, err = space.encode_point(y, 1)
        assert err < 1e-10

    def test_truncated_normal_midquantiles_match_cdf_oracle(self):
        # fine discretization of N(0,1) on [-3,3], encoded at q=8
        from scipy.stats import truncnorm

        n_fine = 1200
        probs = (2 * np.arange(1, n_fine + 1) - 1) / (2 * n_fine)
        fine_atoms = truncnorm.ppf(probs, -3, 3)
        y = DiscreteMeasure.uniform(fine_atoms.reshape(-1, 1))
        space = w_space(1)
        code, err = space.encode_point(y, 8)
        # independent W1 oracle: integral of |F_mu - F_nu|
        xs = np.sort(np.concatenate([fine_atoms, code.z]))
        grid = np.linspace(xs[0] - 0.1, xs[-1] + 0.1, 20001)
        f_mu = np.searchsorted(np.sort(fine_atoms), grid, side="right") / n_fine
        f_nu = np.searchsorted(np.sort(code.z), grid, side="right") / 8
        w1_oracle = np.trapezoid(np.abs(f_mu - f_nu), grid)
        assert err == pytest.approx(w1_oracle, abs=2e-3)
        # mid-quantile atoms: the first one sits near the 1/16 quantile,
        # up to the fine discretization's own quantile granularity
        assert code.z[0] == pytest.approx(truncnorm.ppf(1 / 16, -3, 3), abs=5e-3)

    def test_adapted_replication_weights(self):
        space = AdaptedEmpirical(d=1, T=1, p=1.0)
        y = PathMeasure.from_paths(np.array([[0.25], [0.75]]), np.array([0.75, 0.25]))
        code, err = space.encode_point(y, 4)
        assert err == 0.0  # weights representable at q=4 and atoms on the grid


class TestModulus:
    def test_two_atom_sample_needs_q2(self):
        space = w_space(1)
        sample = [
            DiscreteMeasure(np.array([[0.0], [1.0]]), [0.5, 0.5]),
            DiscreteMeasure(np.array([[-1.0], [3.0]]), [0.5, 0.5]),
        ]
        assert space.quantization_modulus_estimate(sample, 1e-9) == 2

    def test_huge_eps_gives_q1(self):
        space = w_space(1)
        sample = [random_discrete(RNG(2), 1) for _ in range(5)]
        assert space.quantization_modulus_estimate(sample, 1e9) == 1

    def test_monotone_in_eps(self):
        space = w_space(1)
        rng = RNG(21)
        sample = [random_discrete(rng, 1, max_atoms=4, scale=2.0) for _ in range(6)]
        qs = [space.quantization_modulus_estimate(sample, eps) for eps in (0.5, 0.1, 0.02)]
        assert qs[0] <= qs[1] <= qs[2]

    def test_reencode_confirms(self):
        from scipy.stats import truncnorm

        probs = (2 * np.arange(1, 301) - 1) / 600
        sample = [
            DiscreteMeasure.uniform((truncnorm.ppf(probs, -3, 3) * s).reshape(-1, 1))
            for s in (0.5, 1.0)
        ]
        space = w_space(1)
        eps = 0.05
        q = space.quantization_modulus_estimate(sample, eps)
        for y in sample:
            _, err = space.encode_point(y, q)
            assert err < eps
        if q > 1:
            worst_prev = max(space.encode_point(y, q - 1)[1] for y in sample)
            assert worst_prev >= eps

    def test_search_cap(self):
        space = w_space(1)
        y = DiscreteMeasure(np.array([[0.0], [1.0], [2.5]]), [0.3, 0.3, 0.4])
        with pytest.raises(QuantizationSearchError) as exc:
            space.quantization_modulus_estimate([y], 1e-15, q_cap=4)
        assert exc.value.best_q >= 1


class TestForwardRateKernel:
    def test_zero_boundary(self):
        for t in (0.0, 0.5, 2.0, 10.0):
            assert forward_rate_kernel(4.0, 0.0, t) == pytest.approx(0.0)
            assert forward_rate_kernel(4.0, t, 0.0) == pytest.approx(0.0)

    def test_symmetry(self):
        rng = RNG(4)
        for _ in range(20):
            t, s = rng.uniform(0, 10, size=2)
            assert forward_rate_kernel(5.0, t, s) == forward_rate_kernel(5.0, s, t)

    def test_gram_psd(self):
        rng = RNG(8)
        for _ in range(20):
            knots = np.sort(rng.uniform(0, 20, size=int(rng.integers(2, 7))))
            g = np.array([[forward_rate_kernel(4.2, a, b) for b in knots] for a in knots])
            assert np.linalg.eigvalsh(g).min() >= -1e-10

    def test_matches_integral(self):
        from scipy.integrate import quad

        alpha = 4.0
        for t, s in [(1.0, 2.0), (0.3, 0.3), (5.0, 1.5)]:
            want, _ = quad(lambda u: (1 + u) ** (-alpha), 0, min(t, s))
            assert forward_rate_kernel(alpha, t, s) == pytest.approx(want, abs=1e-10)

    def test_curve_evaluation(self):
        space = ForwardRateRkhs(alpha=4.0, knots=[1.0, 2.0])
        vals = space.curve([1.0, 0.0], times=[0.0, 1.0])
        assert vals[0] == pytest.approx(0.0)
        assert vals[1] == pytest.approx(forward_rate_kernel(4.0, 1.0, 1.0))


class TestNesting:
    @pytest.mark.parametrize("space", ALL_SPACES, ids=lambda s: s.kind + str(getattr(s, "d", "")))
    def test_nested_code_has_identical_image(self, space):
        rng = RNG(55)
        for _ in range(10):
            q = int(rng.integers(1, 4))
            code = random_code(space, rng, q)
            nested = space.nest_code(code)
            assert nested.q > code.q
            assert space.distance(space.quantize(code), space.quantize(nested)) == 0.0


class TestSerialization:
    @pytest.mark.parametrize("space", ALL_SPACES, ids=lambda s: s.kind + str(getattr(s, "d", "")))
    def test_space_round_trip(self, space):
        import json

        s2 = space_from_json(json.loads(json.dumps(space.to_json())))
        assert s2.kind == space.kind

    def test_point_round_trips(self):
        rng = RNG(77)
        cases = [
            (w_space(2, 1.0), random_discrete(rng, 2)),
            (AdaptedEmpirical(d=1, T=2, p=1.0), random_path_measure(rng)),
            (GaussianSpd(d=2), random_gaussian(rng, 2)),
            (ExponentialFamily(d=2), rng.uniform(0, 1, 2)),
            (LinearSchauder(), rng.normal(size=3)),
        ]
        for space, y in cases:
            y2 = space.point_from_json(space.point_to_json(y))
            assert space.distance(y, y2) == pytest.approx(0.0, abs=1e-15)
