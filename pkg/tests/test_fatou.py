"""Fatou coordinates: parabolic charts, perturbed charts, renormalization step."""

import cmath
import math

import numpy as np
import pytest

from siegelab.cfrac import CFAngle, GOLDEN, PerturbationSpec
from siegelab.dynamics import QuadMap
from siegelab.errors import AlphaTooLarge, NonParabolic, PathExitsDomain
from siegelab.fatou import (
    ISModelMap,
    attracting_fatou,
    exp_project,
    exp_project_holo,
    horn_map,
    perturbed_fatou,
    postcritical_proximity,
    renorm_derivative_target,
    renorm_step_sample,
    repelling_fatou,
    straightening_integral_psi,
)

ALPHA_48 = CFAngle(0, (48,), (1,))


@pytest.fixture(scope="module")
def model_att():
    return attracting_fatou(ISModelMap())


@pytest.fixture(scope="module")
def model_rep(model_att):
    return repelling_fatou(ISModelMap(), model_att)


@pytest.fixture(scope="module")
def chart48():
    return perturbed_fatou(QuadMap(ALPHA_48))


class TestModelMap:
    def test_constants(self):
        M = ISModelMap()
        assert abs(M(-1 / 3) - (-4 / 27)) < 1e-15
        assert M(-1) == 0
        assert M(0) == 0
        assert abs(M.deriv(0) - 1) < 1e-15
        assert abs(M.R - math.exp(4 * math.pi)) < 1e-9

    def test_expansion(self):
        # P(z) = z + 2 z^2 + z^3 exactly
        for z in (0.1, 0.2j, -0.05 + 0.03j):
            assert abs(ISModelMap()(z) - (z + 2 * z * z + z**3)) < 1e-16


class TestAttracting:
    def test_abel_residual_grid(self, model_att):
        pts = [model_att.tau_inv(16 + 3 * j + 5j * k) for k in range(-4, 5) for j in range(11)]
        assert model_att.abel_residual(pts) < 1e-8

    def test_normalization_critical_value(self, model_att):
        assert abs(model_att.phi(-4 / 27) - 1.0) < 1e-10

    def test_equivariance_at_v(self, model_att):
        M = ISModelMap()
        assert abs(model_att.phi(M(M.v)) - 2.0) < 1e-9

    def test_works_for_parabolic_quadratic(self):
        att = attracting_fatou(QuadMap(0.0))
        assert abs(att.phi(-0.25) - 1.0) < 1e-10
        pts = [att.tau_inv(14 + 2 * j + 4j * k) for k in range(-2, 3) for j in range(5)]
        assert att.abel_residual(pts) < 1e-8

    def test_log_coefficient(self, model_att):
        # lift of the model cubic expands as w + 1 + (3/4)/w + ...
        assert abs(model_att.meta["a1"] - 0.75) < 1e-8


class TestRepelling:
    def test_abel_residual(self, model_rep):
        pts = [model_rep.tau_inv(-16 - 3 * j + 5j * k) for k in range(-4, 5) for j in range(11)]
        assert model_rep.abel_residual(pts) < 1e-8

    def test_difference_decays_upward(self, model_att, model_rep):
        # genuine horn-content comparison low, floor comparison high
        d2 = abs(model_att.phi_w(3.5j) - model_rep.phi_w(3.5j))
        d4 = abs(model_att.phi_w(7j) - model_rep.phi_w(7j))
        assert d4 < d2
        d20 = abs(model_att.phi_w(20j) - model_rep.phi_w(20j))
        d40 = abs(model_att.phi_w(40j) - model_rep.phi_w(40j))
        assert d40 < max(d20, 1e-9)

    def test_horn_periodicity(self, model_att, model_rep):
        h1 = horn_map(model_att, model_rep, -30 + 25j)
        h2 = horn_map(model_att, model_rep, -29 + 25j)
        assert abs(h2 - h1 - 1.0) < 1e-8


class TestPerturbed:
    def test_alpha_guard(self):
        with pytest.raises(AlphaTooLarge):
            perturbed_fatou(QuadMap(0.4))

    def test_lift_periodicity(self, chart48):
        per = 1.0 / chart48.alpha
        w = 11.3 + 2.1j
        assert abs(chart48.lift_F(w + per) - chart48.lift_F(w) - per) < 1e-10

    def test_lift_tends_to_translation(self, chart48):
        per = 1.0 / chart48.alpha
        devs = [abs(chart48.lift_F(0.4 * per + 1j * h) - (0.4 * per + 1j * h) - 1.0) for h in (5, 15, 30)]
        assert devs[0] > devs[1] > devs[2]

    def test_abel_residual_grid(self, chart48):
        assert chart48.abel_residual_grid(50) < 1e-7

    def test_strip_margin_measured(self, chart48):
        assert 0 < chart48.R_margin < 0.5 / chart48.alpha

    def test_bounded_argument_on_petal_image(self, chart48):
        # a branch of argument on the covering image has bounded range
        per = 1.0 / chart48.alpha
        args = []
        for xf in np.linspace(0.1, 0.9, 12):
            for h in (chart48.top_zone_height(), -chart48.bot_zone_height()):
                z = complex(chart48.tau_n(xf * per + 1j * h))
                args.append(cmath.phase(z / chart48.sigma))
        assert max(args) - min(args) < 2 * math.pi + 1.0

    def test_tau_injective_on_strip_window(self, chart48):
        per = 1.0 / chart48.alpha
        ws = [xf * per + 1j * h for xf in np.linspace(0.05, 0.95, 9) for h in (-6.0, 0.0, 6.0)]
        zs = [complex(chart48.tau_n(w)) for w in ws]
        for i in range(len(zs)):
            for j in range(i + 1, len(zs)):
                assert abs(zs[i] - zs[j]) > 1e-12

    def test_chart_image_covers_strip_ends(self, chart48):
        # chart values at the zone probes reach below R and above 1/alpha - R
        per = 1.0 / chart48.alpha
        h = chart48.top_zone_height()
        lo = chart48.phi_top(chart48.R_margin * 0.7 + 1j * h).real
        hi = chart48.phi_top((per - chart48.R_margin * 0.7) + 1j * h).real
        assert lo < chart48.R_margin
        assert hi > per - chart48.R_margin

    def test_normalize_at_records_offset(self, chart48):
        w = 0.4 / chart48.alpha + 1j * chart48.top_zone_height()
        before = chart48.phi(w)
        shift = chart48.normalize_at(w, 1.0)
        assert abs(chart48.phi(w) - 1.0) < 1e-12
        chart48.normalize_at(w, before)  # restore for other tests

    def test_seam_raises(self, chart48):
        # a macroscopic point outside both conjugacy zones has no chart value
        w = chart48.tau_inv(-0.3 + 0.22j, 0.0)
        with pytest.raises(PathExitsDomain):
            chart48.phi(w)


class TestPsi:
    def test_anchor_value(self, chart48):
        w_a, v_a = chart48.default_anchor()
        assert abs(straightening_integral_psi(chart48, w_a) - v_a) < 1e-12

    def test_additivity(self, chart48):
        # the quadrature defect decays like the lift's deviation from the
        # translation, so probe high in the strip for the 1e-6 regime
        h = chart48.top_zone_height() + 10.5 / (2 * math.pi * chart48.alpha)
        w = 0.4 / chart48.alpha + 1j * h
        p1 = straightening_integral_psi(chart48, w, check_paths=False)
        p2 = straightening_integral_psi(chart48, chart48.lift_F(w), check_paths=False)
        assert abs(p2 - p1 - 1.0) < 1e-6

    def test_straightens_displacement_field(self, chart48):
        # d psi / dw equals 1/(F(w)-w): finite-difference check
        w = 0.45 / chart48.alpha + 1j * (chart48.top_zone_height() + 0.2)
        h = 1e-5
        dpsi = (chart48.psi_quadrature(w + h) - chart48.psi_quadrature(w - h)) / (2 * h)
        assert abs(dpsi * chart48.zeta_n(w) - 1.0) < 1e-6

    def test_claim1_bounded_and_stable(self):
        sups = []
        for e in (48, 97):
            acf = CFAngle(0, (e,), (1,))
            ch = perturbed_fatou(QuadMap(acf))
            per = 1.0 / ch.alpha
            difs = []
            for xf in np.linspace(0.15, 0.85, 9):
                w = xf * per + 1j * (ch.top_zone_height() + 0.3)
                difs.append(abs(ch.psi_quadrature(w) - ch.phi_top(w)))
                w = xf * per - 1j * (ch.bot_zone_height() + 0.3)
                difs.append(abs(ch.psi_quadrature(w) - ch.phi_bot(w)))
            sups.append(float(max(difs)))
        assert sups[1] <= sups[0] * 1.05


class TestChartConsistency:
    @pytest.mark.slow
    def test_degenerates_to_attracting_chart(self):
        att = attracting_fatou(QuadMap(0.0))
        probes = [(-0.32 + 0.22j) + 0.02 * k for k in range(8)]
        devs = []
        for entries in ((40,), (80,), (160,)):
            acf = CFAngle(0, entries, (1,))
            ch = perturbed_fatou(QuadMap(acf))
            vals = [ch.phi_petal(z) for z in probes]
            ref = [att.phi(z) for z in probes]
            off = ref[0] - vals[0]
            devs.append(max(abs(v + off - r) for v, r in zip(vals, ref)))
        assert devs[0] > devs[1] > devs[2]


class TestExpProjection:
    def test_periodicity(self):
        w = 0.37 + 2.2j
        assert abs(exp_project(w + 1) - exp_project(w)) < 1e-15
        assert abs(exp_project_holo(w + 1) - exp_project_holo(w)) < 1e-15

    def test_decay_upward(self):
        assert abs(exp_project(0.2 + 30j)) < abs(exp_project(0.2 + 3j)) < 4 / 27 + 1e-12


class TestRenormStep:
    def test_derivative_argument(self, chart48):
        samp = renorm_step_sample(chart48)
        target = renorm_derivative_target(chart48.alpha)
        got = cmath.phase(samp.derivative_estimate)
        diff = abs((got - target + math.pi) % (2 * math.pi) - math.pi)
        assert diff < 1e-2
        assert abs(abs(samp.derivative_estimate) - 1.0) < 1e-6

    def test_return_counts_near_inverse_alpha(self, chart48):
        samp = renorm_step_sample(chart48)
        for k in samp.return_counts:
            assert abs(k - 1.0 / chart48.alpha) < 3

    def test_projection_representative_independent(self, chart48):
        # sampling from x0 and x0+1 yields the same projected multipliers
        s1 = renorm_step_sample(chart48, n_points=4, x0=0.37)
        s2 = renorm_step_sample(chart48, n_points=4, x0=1.37)
        r1 = sorted(np.angle(np.array(s1.ratios)))
        r2 = sorted(np.angle(np.array(s2.ratios)))
        assert np.allclose(r1, r2, atol=1e-9)


class TestPostcriticalProximity:
    @pytest.mark.slow
    def test_identity_perturbation_small(self):
        spec = PerturbationSpec(GOLDEN, 5, 1, 1)  # alpha_n = alpha
        d = postcritical_proximity(GOLDEN, spec, m=4000)
        # the postcritical set rides the boundary itself
        assert d < 0.01

    def test_single_point(self):
        spec = PerturbationSpec(GOLDEN, 5, 10**6, 1)
        from siegelab.linearization import SiegelDiskModel
        from siegelab.measure import hausdorff_semidistance

        model = SiegelDiskModel.build(GOLDEN)
        pm = QuadMap(spec.alpha_n)
        lam = complex(pm.lam)
        first = -lam * lam / 4
        d1 = postcritical_proximity(GOLDEN, spec, m=1, model=model)
        assert abs(d1 - hausdorff_semidistance(np.array([first]), model.boundary)) < 1e-14

    @pytest.mark.slow
    def test_trend(self):
        from siegelab.cfrac import default_A
        from siegelab.linearization import SiegelDiskModel

        model = SiegelDiskModel.build(GOLDEN)
        vals = []
        for n in (5, 6, 7):
            spec = PerturbationSpec(GOLDEN, n, default_A(GOLDEN, n), 1)
            vals.append(postcritical_proximity(GOLDEN, spec, m=20000, model=model))
        assert all(vals[i + 1] <= vals[i] * 1.10 for i in range(2))
