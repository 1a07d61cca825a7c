import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from combodose.models import (
    DEFAULT_WINDOW,
    DoseCombo,
    DoseWindow,
    EfficacyParams,
    ToxicityParamsClinical,
    ToxicityParamsNatural,
    build_mtd_curve,
    clinical_to_natural,
    destandardize,
    mtd_y_given_x,
    natural_to_clinical,
    prob_dlt,
    prob_dlt_clinical,
    prob_eff,
    standardize,
    std_normal_cdf,
    std_normal_quantile,
)

from oracles import normal_cdf, normal_quantile_bisect

SCENARIO1 = ToxicityParamsClinical(rho00=1e-7, rho10=0.3, rho01=0.3, alpha3=2.0)


def valid_clinical(draw_rho00, rho10, rho01, alpha3):
    return ToxicityParamsClinical(rho00=draw_rho00 * min(rho10, rho01),
                                  rho10=rho10, rho01=rho01, alpha3=alpha3)


clinical_params = st.builds(
    valid_clinical,
    st.floats(1e-6, 1 - 1e-6),
    st.floats(0.01, 0.99),
    st.floats(0.01, 0.99),
    st.floats(0.0, 10.0),
)


class TestNormalLink:
    def test_cdf_symmetry(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_quantile_symmetry(self):
        assert std_normal_quantile(0.5) == 0.0

    def test_quantile_975(self):
        # oracle: bisection on the erf series gives 1.959964...
        assert std_normal_quantile(0.975) == pytest.approx(1.959963985, abs=1e-6)

    def test_cdf_matches_erf_oracle(self):
        for t in np.linspace(-6, 6, 25):
            assert std_normal_cdf(t) == pytest.approx(normal_cdf(t), abs=1e-12)

    def test_round_trip(self):
        # Beyond |t| ~ 5.2 one ulp of rounding in p already moves t by more
        # than 1e-9 (dt = dp / pdf(t)), so the strict bound applies inside
        # that range and a conditioning-limited bound out to 6.
        for t in np.linspace(-5, 5, 41):
            assert abs(std_normal_quantile(std_normal_cdf(t)) - t) < 1e-9
        for t in np.linspace(-6, 6, 41):
            assert abs(std_normal_quantile(std_normal_cdf(t)) - t) < 5e-8

    def test_deep_tail(self):
        for p in (1e-10, 1e-7, 0.5, 1 - 1e-7):
            oracle = normal_quantile_bisect(p)
            assert std_normal_quantile(p) == pytest.approx(oracle, rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_domain(self, p):
        with pytest.raises(ValueError):
            std_normal_quantile(p)


class TestStandardization:
    def test_lower_boundary(self):
        assert standardize(50.0, 10.0, DEFAULT_WINDOW) == DoseCombo(0.0, 0.0)

    def test_upper_boundary(self):
        assert standardize(100.0, 25.0, DEFAULT_WINDOW) == DoseCombo(1.0, 1.0)

    def test_midpoint(self):
        assert standardize(75.0, 17.5, DEFAULT_WINDOW).x == pytest.approx(0.5)

    def test_round_trip(self):
        d = standardize(62.0, 13.0, DEFAULT_WINDOW)
        raw = destandardize(d, DEFAULT_WINDOW)
        assert raw[0] == pytest.approx(62.0, abs=1e-12)
        assert raw[1] == pytest.approx(13.0, abs=1e-12)

    def test_out_of_window(self):
        with pytest.raises(ValueError):
            standardize(49.0, 10.0, DEFAULT_WINDOW)
        with pytest.raises(ValueError):
            standardize(50.0, 26.0, DEFAULT_WINDOW)

    def test_window_invariants(self):
        with pytest.raises(ValueError):
            DoseWindow(100.0, 50.0, 10.0, 25.0)


class TestReparameterization:
    def test_unit_example(self):
        # rho00 = F(-1), rho10 = rho01 = 0.5 -> alpha = (-1, 1, 1)
        p = ToxicityParamsClinical(rho00=std_normal_cdf(-1.0), rho10=0.5,
                                   rho01=0.5, alpha3=0.0)
        nat = clinical_to_natural(p)
        assert nat.alpha0 == pytest.approx(-1.0, abs=1e-10)
        assert nat.alpha1 == pytest.approx(1.0, abs=1e-10)
        assert nat.alpha2 == pytest.approx(1.0, abs=1e-10)

    def test_scenario1_values(self):
        nat = clinical_to_natural(SCENARIO1)
        a0 = normal_quantile_bisect(1e-7)
        a1 = normal_quantile_bisect(0.3) - a0
        assert nat.alpha0 == pytest.approx(a0, abs=1e-8)
        assert nat.alpha1 == pytest.approx(a1, abs=1e-8)
        assert nat.alpha2 == pytest.approx(a1, abs=1e-8)

    def test_equal_rho_rejected(self):
        with pytest.raises(ValueError):
            ToxicityParamsClinical(rho00=0.3, rho10=0.3, rho01=0.5, alpha3=0.0)

    @settings(max_examples=200, deadline=None)
    @given(clinical_params)
    def test_round_trip(self, p):
        back = natural_to_clinical(clinical_to_natural(p))
        assert back.rho00 == pytest.approx(p.rho00, abs=1e-10)
        assert back.rho10 == pytest.approx(p.rho10, abs=1e-10)
        assert back.rho01 == pytest.approx(p.rho01, abs=1e-10)
        assert back.alpha3 == p.alpha3


class TestProbModels:
    def test_corner_identities(self):
        nat = clinical_to_natural(SCENARIO1)
        assert prob_dlt(nat, DoseCombo(0, 0)) == pytest.approx(1e-7, rel=1e-8)
        assert prob_dlt(nat, DoseCombo(1, 0)) == pytest.approx(0.3, abs=1e-12)
        assert prob_dlt(nat, DoseCombo(0, 1)) == pytest.approx(0.3, abs=1e-12)

    def test_scenario1_at_11(self):
        nat = clinical_to_natural(SCENARIO1)
        expected = normal_cdf(normal_quantile_bisect(0.3) * 2
                              - normal_quantile_bisect(1e-7) + 2.0)
        assert prob_dlt(nat, DoseCombo(1, 1)) == pytest.approx(expected, abs=1e-9)

    def test_eff_zero_betas(self):
        b = EfficacyParams(0, 0, 0, 0, 0, 0)
        for d in (DoseCombo(0, 0), DoseCombo(0.7, 0.3), DoseCombo(1, 1)):
            assert prob_eff(b, d) == 0.5

    def test_eff_table_corner(self):
        b = EfficacyParams(-5.51, 2.0, 4.3, 10.0, 0.0, 0.0)
        assert prob_eff(b, DoseCombo(0, 0)) == pytest.approx(normal_cdf(-5.51),
                                                             abs=1e-12)

    def test_eff_linear(self):
        b = EfficacyParams(0, 1, 1, 0, 0, 0)
        assert prob_eff(b, DoseCombo(1, 1)) == pytest.approx(normal_cdf(2.0),
                                                             abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(clinical_params, st.floats(0, 1), st.floats(0, 1),
           st.floats(0, 1), st.floats(0, 1))
    def test_dlt_monotonicity(self, p, x1, y1, dx, dy):
        nat = clinical_to_natural(p)
        x2 = min(1.0, x1 + dx)
        y2 = min(1.0, y1 + dy)
        assert prob_dlt(nat, DoseCombo(x1, y1)) <= prob_dlt(nat, DoseCombo(x2, y2)) + 1e-15

    def test_eff_monotonic_without_quadratics(self):
        b = EfficacyParams(-2.0, 1.5, 0.8, 2.0, 0.0, 0.0)
        rng = np.random.default_rng(1)
        for _ in range(50):
            x1, y1 = rng.random(2)
            x2 = min(1.0, x1 + rng.random() * 0.5)
            y2 = min(1.0, y1 + rng.random() * 0.5)
            assert prob_eff(b, DoseCombo(x1, y1)) <= prob_eff(b, DoseCombo(x2, y2)) + 1e-15


class TestMtdCurve:
    def test_y_at_zero_out_of_range(self):
        y, ok = mtd_y_given_x(SCENARIO1, 0.33, 0.0)
        expected = ((normal_quantile_bisect(0.33) - normal_quantile_bisect(1e-7))
                    / (normal_quantile_bisect(0.3) - normal_quantile_bisect(1e-7)))
        assert y == pytest.approx(expected, abs=1e-6)
        assert y > 1.0
        assert not ok

    def test_symmetric_fixed_point(self):
        # rho10 = rho01: the point with y = x solves prob_dlt = theta exactly
        curve = build_mtd_curve(SCENARIO1, 0.33, 4001)
        k = np.argmin(np.abs(curve.ys - curve.xs))
        x = float(curve.xs[k])
        y, ok = mtd_y_given_x(SCENARIO1, 0.33, x)
        assert ok
        assert prob_dlt_clinical(SCENARIO1, DoseCombo(x, y)) == pytest.approx(
            0.33, abs=1e-10)

    def test_defining_identity(self):
        for x in np.linspace(0.05, 0.95, 10):
            y, ok = mtd_y_given_x(SCENARIO1, 0.33, float(x))
            if ok:
                assert prob_dlt_clinical(SCENARIO1, DoseCombo(float(x), y)) \
                    == pytest.approx(0.33, abs=1e-10)

    def test_scenario1_domain(self):
        # y(0) > 1, so the domain excludes a neighborhood of x = 0; the
        # symmetric exit point sits at x ~ 1.018 > 1, so the curve reaches
        # x = 1 with a small positive y.
        curve = build_mtd_curve(SCENARIO1, 0.33, 201)
        lo, hi = curve.domain
        assert lo > 0.005
        assert hi == pytest.approx(1.0)
        assert 0.0 <= curve.ys[-1] < 0.05

    def test_supra_toxic_empty(self):
        p = ToxicityParamsClinical(rho00=0.5, rho10=0.7, rho01=0.7, alpha3=0.0)
        curve = build_mtd_curve(p, 0.33, 201)
        assert curve.is_empty
        assert curve.empty_reason == "supra_toxic"

    def test_sub_toxic_empty(self):
        p = ToxicityParamsClinical(rho00=1e-4, rho10=0.01, rho01=0.01, alpha3=0.0)
        curve = build_mtd_curve(p, 0.33, 201)
        assert curve.is_empty
        assert curve.empty_reason == "sub_toxic"

    @settings(max_examples=100, deadline=None)
    @given(clinical_params)
    def test_grid_identity_and_monotone(self, p):
        curve = build_mtd_curve(p, 0.33, 101)
        if curve.is_empty:
            return
        nat = clinical_to_natural(p)
        for x, y in curve.grid_points():
            assert abs(prob_dlt(nat, DoseCombo(float(x), float(y))) - 0.33) < 1e-9
        assert np.all(np.diff(curve.xs) > 0)
        assert np.all(np.diff(curve.ys) <= 1e-12)

    def test_grid_size_validation(self):
        with pytest.raises(ValueError):
            build_mtd_curve(SCENARIO1, 0.33, 1)


class TestEfficacyValidation:
    def test_negative_slope_rejected(self):
        with pytest.raises(ValueError):
            EfficacyParams(0, -1.0, 1.0, 1.0, 0, 0)

    def test_zero_interaction_allowed(self):
        EfficacyParams(-7.3, 6.17, 5.5, 0.0, 0.0, 0.0)

    def test_natural_params_validation(self):
        with pytest.raises(ValueError):
            ToxicityParamsNatural(0.0, 0.0, 1.0, 0.0)
