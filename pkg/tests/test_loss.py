import numpy as np
import pytest
from scipy.integrate import quad

from robustkde import LossSpec, phi, psi, q_fn, rho, select_hampel_params
from robustkde.exceptions import DataError

HAMPEL = LossSpec("hampel", a=1.0, b=2.0, c=4.0)
HUBER = LossSpec("huber", a=1.0)
QUAD = LossSpec("quadratic")
ABS = LossSpec("absolute")

ALL = [QUAD, ABS, HUBER, HAMPEL]


class TestPsi:
    def test_hampel_branches(self):
        assert psi(HAMPEL, 0.5) == 0.5            # linear branch
        assert psi(HAMPEL, 3.0) == 0.5            # 1 * (4-3)/(4-2)
        assert psi(HAMPEL, 5.0) == 0.0            # beyond c
        assert psi(HAMPEL, 1.5) == 1.0            # flat branch

    def test_quadratic_and_absolute(self):
        assert psi(QUAD, 2.5) == 2.5
        assert psi(ABS, 0.3) == 1.0
        assert psi(ABS, 0.0) == 0.0

    def test_huber(self):
        assert psi(HUBER, 0.5) == 0.5
        assert psi(HUBER, 7.0) == 1.0

    def test_negative_rejected(self):
        with pytest.raises(DataError):
            psi(HAMPEL, -0.1)


class TestPhi:
    def test_huber_limit_at_zero(self):
        assert phi(HUBER, 0.0) == 1.0

    def test_huber_above_threshold(self):
        assert phi(HUBER, 4.0) == 0.25

    def test_hampel_beyond_c(self):
        assert phi(HAMPEL, 8.0) == 0.0

    def test_quadratic_is_one(self):
        np.testing.assert_array_equal(phi(QUAD, np.array([0.0, 1.0, 9.0])), 1.0)

    def test_absolute_uses_floor(self):
        assert phi(ABS, 0.0, floor=1e-6) == 1e6
        assert phi(ABS, 2.0) == 0.5

    @pytest.mark.parametrize("spec", ALL)
    def test_psi_equals_phi_times_x(self, spec):
        x = np.linspace(1e-9, 6.0, 2001)
        np.testing.assert_allclose(psi(spec, x), phi(spec, x) * x, rtol=1e-12)

    @pytest.mark.parametrize("spec", [HUBER, HAMPEL])
    def test_phi_nonincreasing(self, spec):
        x = np.linspace(0.0, 8.0, 4001)
        v = phi(spec, x)
        assert np.all(np.diff(v) <= 1e-15)

    @pytest.mark.parametrize("spec", [QUAD, HUBER, HAMPEL])
    def test_phi_bounded_by_one(self, spec):
        x = np.linspace(0.0, 20.0, 2001)
        assert phi(spec, x).max() <= 1.0


class TestRho:
    def test_hampel_values(self):
        assert rho(HAMPEL, 0.0) == 0.0
        assert rho(HAMPEL, 1.0) == 0.5            # integral of t on [0,1]
        # constant past c: 0.5 + 1*(2-1) + 1*(4-2)/2 = 2.5
        assert rho(HAMPEL, 10.0) == rho(HAMPEL, 4.0) == 2.5

    def test_huber_values(self):
        assert rho(HUBER, 0.5) == 0.125
        assert rho(HUBER, 3.0) == pytest.approx(1.0 * 3.0 - 0.5)

    @pytest.mark.parametrize("spec", [HUBER, HAMPEL])
    def test_matches_quadrature_of_psi(self, spec):
        for x in (0.5, 1.3, 2.7, 3.6, 5.0):
            val, _ = quad(lambda t: psi(spec, t), 0.0, x, limit=200)
            assert rho(spec, x) == pytest.approx(val, rel=1e-9)

    @pytest.mark.parametrize("spec", ALL)
    def test_nondecreasing_and_continuous(self, spec):
        x = np.linspace(0.0, 8.0, 8001)
        v = rho(spec, x)
        assert np.all(np.diff(v) >= -1e-15)
        assert np.abs(np.diff(v)).max() < 0.01  # no jumps on this grid

    @pytest.mark.parametrize("spec", [QUAD, HUBER, HAMPEL])
    def test_rho_over_x_vanishes_at_zero(self, spec):
        for x in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
            assert rho(spec, x) / x <= x  # quadratic near 0, so ratio ~ x/2


class TestQ:
    def test_hampel_values(self):
        assert q_fn(HAMPEL, 0.5) == 0.0
        assert q_fn(HAMPEL, 1.5) == -1.0
        # third branch simplifies to -a c/(c-b) = -2
        assert q_fn(HAMPEL, 3.0) == -2.0
        assert q_fn(HAMPEL, 9.0) == 0.0

    def test_huber_values(self):
        assert q_fn(HUBER, 0.5) == 0.0
        assert q_fn(HUBER, 2.0) == -1.0

    def test_quadratic_zero(self):
        np.testing.assert_array_equal(q_fn(QUAD, np.array([0.1, 5.0])), 0.0)

    @pytest.mark.parametrize("spec", [QUAD, HUBER, HAMPEL])
    def test_matches_finite_difference_of_psi(self, spec):
        # q(x) = x psi'(x) - psi(x), central differences away from knots
        rng = np.random.default_rng(7)
        h = 1e-7
        knots = {1.0, 2.0, 4.0}
        for x in rng.uniform(0.05, 6.0, size=200):
            if min(abs(x - k) for k in knots) < 1e-3:
                continue
            dpsi = (psi(spec, x + h) - psi(spec, x - h)) / (2 * h)
            assert q_fn(spec, x) == pytest.approx(x * dpsi - psi(spec, x), abs=1e-6)

    @pytest.mark.parametrize("spec", [HUBER, HAMPEL])
    def test_psi_bounded_by_a(self, spec):
        x = np.linspace(0.0, 20.0, 2001)
        assert psi(spec, x).max() <= spec.a


class TestSelectHampelParams:
    def test_linear_interpolation_percentiles(self):
        a, b, c = select_hampel_params(np.arange(1.0, 101.0))
        assert (a, b, c) == pytest.approx((50.5, 75.25, 85.15))

    def test_degenerate_warns(self):
        with pytest.warns(RuntimeWarning):
            a, b, c = select_hampel_params(np.full(10, 3.0))
        assert a == b == c == 3.0

    def test_single_element(self):
        with pytest.warns(RuntimeWarning):
            assert select_hampel_params([3.0]) == (3.0, 3.0, 3.0)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            select_hampel_params([])


class TestSpecValidation:
    def test_hampel_ordering_enforced(self):
        with pytest.raises(DataError):
            LossSpec("hampel", a=2.0, b=1.0, c=4.0)
        with pytest.raises(DataError):
            LossSpec("hampel", a=1.0, b=4.0, c=4.0)

    def test_huber_needs_positive_a(self):
        with pytest.raises(DataError):
            LossSpec("huber", a=0.0)

    def test_parameterless_families_reject_thresholds(self):
        with pytest.raises(DataError):
            LossSpec("quadratic", a=1.0)

    def test_json_round_trip(self):
        for spec in (HAMPEL, HUBER, QUAD, ABS):
            assert LossSpec.from_json(spec.to_json()) == spec

    def test_json_fields(self):
        assert HAMPEL.to_dict() == {"family": "hampel", "a": 1.0, "b": 2.0, "c": 4.0}
