import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opineq.convex_core import (
    AffinePair,
    ConvexFunction,
    biconjugate_gap,
    conjugate,
    eps_subdifferential_witness,
    evaluate,
    gradient,
    restrict_to_real,
    sample_preset_1d,
    sample_preset_2d,
    subdifferential_interval,
)
from opineq.errors import (
    ConvexityError,
    DomainError,
    NonDifferentiableError,
    PreconditionError,
)
from opineq.extreal import ExtReal


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------

def brute_conjugate(x, v, duals):
    """O(n*m) direct sup over all finite nodes."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    finite = np.isfinite(v)
    x, v = x[finite], v[finite]
    return np.array([np.max(s * x - v) for s in duals])


def envelope_oracle(x, v):
    """Lower convex envelope at the nodes via the sorted-slope hull."""
    keep = []
    for i in range(len(x)):
        while len(keep) >= 2:
            i0, i1 = keep[-2], keep[-1]
            if (v[i1] - v[i0]) * (x[i] - x[i0]) >= (v[i] - v[i0]) * (x[i1] - x[i0]):
                keep.pop()
            else:
                break
        keep.append(i)
    return np.interp(x, x[keep], v[keep])


def brute_conjugate_2d(x, y, v, s1, s2):
    """Direct sup over all finite grid nodes for each dual pair."""
    X, Y = np.meshgrid(x, y, indexing="ij")
    finite = np.isfinite(v)
    px, py, pv = X[finite], Y[finite], v[finite]
    out = np.empty((len(s1), len(s2)))
    for i, a in enumerate(s1):
        for j, b in enumerate(s2):
            out[i, j] = np.max(a * px + b * py - pv)
    return out


def random_convex_pl(rng, n):
    """Random convex piecewise-linear samples: increasing slopes cumulated."""
    x = np.sort(rng.uniform(-3.0, 3.0, size=n))
    while np.any(np.diff(x) < 1e-3):
        x = np.sort(rng.uniform(-3.0, 3.0, size=n))
    slopes = np.sort(rng.uniform(-4.0, 4.0, size=n - 1))
    v = rng.uniform(-1.0, 1.0) + np.concatenate([[0.0], np.cumsum(slopes * np.diff(x))])
    return x, v


# ---------------------------------------------------------------------------
# ExtReal
# ---------------------------------------------------------------------------

class TestExtReal:
    def test_arithmetic(self):
        assert (ExtReal(2.0) + ExtReal(3.0)).value == 5.0
        assert (ExtReal(2.0) + ExtReal.pos_inf()).is_inf
        assert (ExtReal.pos_inf() + 7).is_inf

    def test_inf_minus_inf_rejected(self):
        with pytest.raises(PreconditionError):
            ExtReal.pos_inf() - ExtReal.pos_inf()

    def test_neg_inf_rejected(self):
        with pytest.raises(PreconditionError):
            ExtReal(float("-inf"))
        with pytest.raises(PreconditionError):
            ExtReal(1.0) - ExtReal.pos_inf()

    def test_comparisons(self):
        assert ExtReal.pos_inf() > ExtReal(1e300)
        assert ExtReal(1.0) <= ExtReal.pos_inf()
        assert ExtReal.pos_inf() == ExtReal.pos_inf()
        assert ExtReal(2.0) < 3.0

    def test_zero_times_inf_rejected(self):
        with pytest.raises(PreconditionError):
            ExtReal(0.0) * ExtReal.pos_inf()


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

class TestEvaluate:
    def test_quad_preset(self):
        phi = ConvexFunction.from_preset("quad")
        assert evaluate(phi, 2.0).value == pytest.approx(2.0)

    def test_indicator_outside(self):
        phi = ConvexFunction.from_preset("indicator:-1,1")
        assert evaluate(phi, 3.0).is_inf
        assert evaluate(phi, 0.25).value == 0.0

    def test_sampled_abs_node_exact(self):
        phi = sample_preset_1d(ConvexFunction.from_preset("abs"), -2, 2, 9)
        assert evaluate(phi, 0.5).value == pytest.approx(0.5, abs=1e-14)

    def test_outside_bbox(self):
        phi = sample_preset_1d(ConvexFunction.from_preset("abs"), -2, 2, 9)
        with pytest.raises(DomainError):
            evaluate(phi, 5.0)

    def test_envelope_between_nodes(self):
        phi = sample_preset_1d(ConvexFunction.from_preset("quad:1"), -1, 1, 5)
        # hull interpolation: chord of t^2 between 0 and 0.5 at 0.25
        assert float(evaluate(phi, 0.25)) == pytest.approx(0.125, abs=1e-14)


# ---------------------------------------------------------------------------
# conjugate
# ---------------------------------------------------------------------------

class TestConjugate:
    def test_quad_self_conjugate_sampled(self):
        quad = ConvexFunction.from_preset("quad")
        phi = sample_preset_1d(quad, -3, 3, 121)
        star = conjugate(phi)
        h = phi.grid_modulus()
        xs, _ = star._finite_nodes_1d()
        vals = np.array([float(evaluate(star, s)) for s in xs])
        exact = 0.5 * xs ** 2
        assert np.max(np.abs(vals - exact)) <= h

    def test_quad_closed_form(self):
        star = conjugate(ConvexFunction.from_preset("quad"))
        assert evaluate(star, 2.0).value == pytest.approx(2.0)

    def test_abs_dual_pair(self):
        star = conjugate(ConvexFunction.from_preset("abs"))
        assert evaluate(star, 0.5).value == 0.0
        assert evaluate(star, 1.0).value == 0.0
        assert evaluate(star, 1.5).is_inf

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        x, v = random_convex_pl(rng, 17)
        phi = ConvexFunction.from_samples_1d(x, v)
        star = conjugate(phi)
        duals = star.x
        oracle = brute_conjugate(x, v, duals)
        assert np.max(np.abs(star.values - oracle)) <= 1e-12

    def test_improper_rejected(self):
        with pytest.raises(PreconditionError):
            ConvexFunction.from_samples_1d([0.0, 1.0], [np.inf, np.inf])

    def test_single_finite_node_rejected(self):
        phi = ConvexFunction.from_samples_1d([0.0, 1.0], [1.0, np.inf])
        with pytest.raises(PreconditionError):
            conjugate(phi)

    def test_2d_factored_matches_brute_force(self):
        rng = np.random.default_rng(3)
        x = np.linspace(-1.5, 1.5, 9)
        y = np.linspace(-1.0, 2.0, 8)
        # random convex quadratic-ish surface: a x^2 + b y^2 + c(x+y)^2
        a, b, c = rng.uniform(0.2, 1.5, size=3)
        X, Y = np.meshgrid(x, y, indexing="ij")
        v = a * X ** 2 + b * Y ** 2 + c * (X + Y) ** 2
        phi = ConvexFunction.from_samples_2d(x, y, v)
        star = conjugate(phi)
        oracle = brute_conjugate_2d(x, y, v, star.x, star.y)
        assert np.max(np.abs(star.values - oracle)) <= 1e-12


class TestBiconjugateGap:
    def test_exp_sampled_201(self):
        phi = sample_preset_1d(ConvexFunction.from_preset("exp"), -3, 3, 201)
        assert biconjugate_gap(phi) <= 1e-6

    def test_affine_exact(self):
        phi = ConvexFunction.from_preset("affine:2,-1")
        assert biconjugate_gap(phi) == 0.0
        sampled = sample_preset_1d(phi, -2, 2, 41)
        assert biconjugate_gap(sampled) <= 1e-12

    def test_nonconvex_gap_equals_envelope_deviation(self):
        x = np.linspace(0.0, 3.0 * np.pi, 61)
        v = np.sin(x)
        phi = ConvexFunction.from_samples_1d(x, v, require_convex=False)
        gap = biconjugate_gap(phi)
        oracle = np.max(v - envelope_oracle(x, v))
        assert gap > 0.01
        assert gap == pytest.approx(oracle, abs=1e-10)

    def test_nonconvex_rejected_by_default(self):
        x = np.linspace(0.0, 3.0 * np.pi, 61)
        with pytest.raises(ConvexityError):
            ConvexFunction.from_samples_1d(x, np.sin(x))


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------

class TestWitness:
    def test_smooth_point(self):
        phi = ConvexFunction.from_preset("quad:1")
        w = eps_subdifferential_witness(phi, 1.0, 0.0)
        assert w.x_star == pytest.approx(2.0)
        assert w.t_star == pytest.approx(1.0)
        assert w(1.0) == pytest.approx(1.0)
        assert w.in_conjugate_epigraph(phi)

    def test_kink(self):
        phi = ConvexFunction.from_preset("abs")
        w = eps_subdifferential_witness(phi, 0.0, 0.0)
        assert -1.0 <= w.x_star <= 1.0
        assert w.t_star == pytest.approx(0.0, abs=1e-14)
        assert w.in_conjugate_epigraph(phi)

    def test_sampled_exp_slope(self):
        phi = sample_preset_1d(ConvexFunction.from_preset("exp"), -3, 3, 201)
        w = eps_subdifferential_witness(phi, 1.0, 1e-3)
        delta = 2.0 * math.exp(1.0) * phi.grid_modulus()
        assert math.exp(1.0) - delta <= w.x_star <= math.exp(1.0) + delta
        assert w.in_conjugate_epigraph(phi)

    def test_eps_zero_absent_is_none(self):
        # strictly above the envelope: no exact supporting line at that node
        x = np.array([0.0, 1.0, 2.0])
        v = np.array([0.0, 1.0, 0.0])
        phi = ConvexFunction.from_samples_1d(x, v, require_convex=False)
        assert eps_subdifferential_witness(phi, 1.0, 0.0) is None
        assert eps_subdifferential_witness(phi, 1.0, 1.5) is not None

    def test_infinite_point_rejected(self):
        phi = ConvexFunction.from_preset("indicator:-1,1")
        with pytest.raises(PreconditionError):
            eps_subdifferential_witness(phi, 2.0, 0.1)

    def test_empty_subdiff_needs_eps(self):
        phi = ConvexFunction.from_preset("xlogx")
        assert eps_subdifferential_witness(phi, 0.0, 0.0) is None
        w = eps_subdifferential_witness(phi, 0.0, 1e-6)
        assert w is not None
        assert w(0.0) >= -1e-6
        assert w.in_conjugate_epigraph(phi)


# ---------------------------------------------------------------------------
# gradient
# ---------------------------------------------------------------------------

class TestGradient:
    def test_quad(self):
        assert gradient(ConvexFunction.from_preset("quad:1"), 3.0) == pytest.approx(6.0)

    def test_sqmod(self):
        g = gradient(ConvexFunction.from_preset("sqmod2d"), 1 + 1j)
        assert g == pytest.approx(2 + 2j)

    def test_sampled_quartic_two_resolutions(self):
        quartic = ConvexFunction.from_preset("pow:1,4")
        for n in (401, 801):
            phi = sample_preset_1d(quartic, -1, 1, n)
            g = gradient(phi, 0.5)
            h = phi.grid_modulus()
            assert abs(g - 0.5) <= 2.0 * h

    def test_kink_detected(self):
        phi = sample_preset_1d(ConvexFunction.from_preset("abs"), -2, 2, 41)
        with pytest.raises(NonDifferentiableError):
            gradient(phi, 0.0)
        with pytest.raises(NonDifferentiableError):
            gradient(ConvexFunction.from_preset("abs"), 0.0)

    def test_gradient_vs_finite_differences_smooth_presets(self):
        for spec, pts in [("quad:1", (0.3, -1.2)), ("exp", (0.0, 1.1)),
                          ("cosh", (0.4, -0.9)), ("pow:1,4", (0.7, -0.6))]:
            phi = ConvexFunction.from_preset(spec)
            for z in pts:
                h = 1e-5
                fd = (phi.preset.evaluate(z + h) - phi.preset.evaluate(z - h)) / (2 * h)
                g = gradient(phi, z)
                assert abs(g - fd) <= 1e-4 * (1.0 + abs(g))


# ---------------------------------------------------------------------------
# restrict_to_real
# ---------------------------------------------------------------------------

class TestLift:
    def test_values(self):
        lifted = restrict_to_real(ConvexFunction.from_preset("quad:1"))
        assert evaluate(lifted, complex(1, 0)).value == pytest.approx(1.0)
        assert evaluate(lifted, complex(0, 1)).is_inf

    def test_conjugate_is_strip(self):
        lifted = restrict_to_real(ConvexFunction.from_preset("abs"))
        star = conjugate(lifted)
        assert evaluate(star, complex(0.5, 7.0)).value == 0.0
        assert evaluate(star, complex(1.0, -3.0)).value == 0.0
        assert evaluate(star, complex(1.5, 0.0)).is_inf

    def test_lifted_conjugate_matches_2d_grid_oracle(self):
        base = ConvexFunction.from_preset("abs")
        star = conjugate(restrict_to_real(base))
        # direct sup over a fine 2D grid of the lifted function
        xs = np.linspace(-2, 2, 161)
        for zs in (complex(0.3, 2.0), complex(-0.9, -1.0), complex(0.0, 0.5)):
            direct = np.max(zs.real * xs - np.abs(xs))
            got = evaluate(star, zs)
            assert float(got) == pytest.approx(direct, abs=1e-12)


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------

class TestInvariants:
    def test_fenchel_young_sampled(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x, v = random_convex_pl(rng, rng.integers(5, 30))
            phi = ConvexFunction.from_samples_1d(x, v)
            star = conjugate(phi)
            xs, vs = star._finite_nodes_1d()
            scale = (1 + np.max(np.abs(v))) * (1 + np.max(np.abs(vs)))
            gap = np.min(v[:, None] + vs[None, :] - x[:, None] * xs[None, :])
            assert gap >= -1e-10 * scale

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_fenchel_young_hypothesis(self, seed):
        rng = np.random.default_rng(seed)
        x, v = random_convex_pl(rng, int(rng.integers(5, 40)))
        phi = ConvexFunction.from_samples_1d(x, v)
        star = conjugate(phi)
        xs, vs = star._finite_nodes_1d()
        scale = (1 + np.max(np.abs(v))) * (1 + np.max(np.abs(vs)))
        gap = np.min(v[:, None] + vs[None, :] - x[:, None] * xs[None, :])
        assert gap >= -1e-10 * scale

    def test_order_reversing(self):
        rng = np.random.default_rng(5)
        x = np.sort(rng.uniform(-2, 2, size=15))
        _, v1 = random_convex_pl(rng, 15)
        phi = ConvexFunction.from_samples_1d(x, v1, require_convex=False)
        psi = ConvexFunction.from_samples_1d(x, v1 + rng.uniform(0.1, 1.0, size=15),
                                             require_convex=False)
        phs, pss = conjugate(phi), conjugate(psi)
        lo = max(phs.x[0], pss.x[0])
        hi = min(phs.x[-1], pss.x[-1])
        probes = np.linspace(lo, hi, 33)
        a = np.array([float(evaluate(phs, s)) for s in probes])
        b = np.array([float(evaluate(pss, s)) for s in probes])
        assert np.all(a >= b - 1e-10 * (1 + np.max(np.abs(a))))

    def test_double_conjugation_idempotent(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            x, v = random_convex_pl(rng, int(rng.integers(6, 25)))
            v = v + rng.normal(0, 0.3, size=len(v))  # possibly non-convex
            phi = ConvexFunction.from_samples_1d(x, v, require_convex=False)
            cc = conjugate(conjugate(phi))
            assert biconjugate_gap(cc) <= 1e-12

    def test_witness_membership_always(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            x, v = random_convex_pl(rng, int(rng.integers(5, 30)))
            phi = ConvexFunction.from_samples_1d(x, v)
            x0 = float(rng.choice(x))
            w = eps_subdifferential_witness(phi, x0, 1e-8)
            assert w.in_conjugate_epigraph(phi)


# ---------------------------------------------------------------------------
# subdifferential intervals (used by the eigenvalue example)
# ---------------------------------------------------------------------------

class TestSubdiffInterval:
    def test_presets(self):
        pos = ConvexFunction.from_preset("pospart")
        assert subdifferential_interval(pos, 0.0) == (0.0, 1.0)
        assert subdifferential_interval(pos, -1.0) == (0.0, 0.0)
        quad = ConvexFunction.from_preset("quad:1")
        assert subdifferential_interval(quad, 1.0) == (2.0, 2.0)
        ind = ConvexFunction.from_preset("indicator:-1,1")
        assert subdifferential_interval(ind, 2.0) is None
        lo, hi = subdifferential_interval(ind, 1.0)
        assert lo == 0.0 and hi == math.inf

    def test_sampled_boundary_one_sided(self):
        phi = sample_preset_1d(ConvexFunction.from_preset("quad:1"), 0, 1, 11)
        lo, hi = subdifferential_interval(phi, 0.0)
        assert lo == -math.inf
        assert hi == pytest.approx(0.1, abs=1e-12)  # first chord slope of t^2


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

class TestCsv:
    def test_two_column_with_inf(self, tmp_path):
        p = tmp_path / "fn.csv"
        p.write_text("-1,inf\n0,0.0\n1,1.0\n2,inf\n")
        phi = ConvexFunction.from_csv(p)
        assert evaluate(phi, 0.5).value == pytest.approx(0.5)
        assert evaluate(phi, -1.0).is_inf

    def test_three_column_grid(self, tmp_path):
        p = tmp_path / "fn2.csv"
        rows = []
        for a in (-1.0, 0.0, 1.0):
            for b in (-1.0, 0.0, 1.0):
                rows.append(f"{a},{b},{a * a + b * b}")
        p.write_text("\n".join(rows) + "\n")
        phi = ConvexFunction.from_csv(p)
        assert phi.dim == 2
        assert evaluate(phi, complex(1, 1)).value == pytest.approx(2.0)

    def test_incomplete_grid_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0,0,1\n0,1,2\n1,0,3\n")
        with pytest.raises(PreconditionError):
            ConvexFunction.from_csv(p)
