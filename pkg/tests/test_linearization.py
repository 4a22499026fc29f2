"""Linearizing series, radius estimators, Siegel models, avoidance sets."""

import numpy as np
import pytest
from mpmath import mp, mpf, workdps

from siegelab.cfrac import CFAngle, GOLDEN, SILVER
from siegelab.dynamics import QuadMap, escape_classify
from siegelab.errors import DivisorUnderflow
from siegelab.linearization import (
    SiegelDiskModel,
    SubdiskGate,
    conformal_radius,
    hadamard_radius,
    invariant_subdisk_boundary,
    l_set_membership,
    linearizer_coefficients,
    resolve_boundary_band,
    siegel_membership,
)

BOUNDED_TYPE_ANGLES = [GOLDEN, SILVER, CFAngle(0, (), (1, 2))]


@pytest.fixture(scope="module")
def golden_model():
    return SiegelDiskModel.build(GOLDEN, digits=40, J=300, boundary_samples=8192)


class TestCoefficients:
    def test_b2_formula(self):
        lin = linearizer_coefficients(GOLDEN, 20, digits=40)
        with workdps(50):
            expected = 1 / (lin.lam**2 - lin.lam)
            assert abs(lin.coeffs[2] - expected) < mpf(10) ** -45

    def test_conjugacy_residual(self):
        lin = linearizer_coefficients(GOLDEN, 200, digits=60)
        assert lin.conjugacy_residual(0.1) < 1e-30

    def test_residual_decreases_with_order(self):
        base = SiegelDiskModel.build(GOLDEN, digits=40, J=120).conformal_radius
        linj = linearizer_coefficients(GOLDEN, 120, digits=60)
        lin2j = linearizer_coefficients(GOLDEN, 240, digits=60)
        rj = linj.conjugacy_residual(base / 2)
        r2j = lin2j.conjugacy_residual(base / 2)
        assert r2j < rj

    def test_huge_first_entry_inflates_b2(self):
        lin_g = linearizer_coefficients(GOLDEN, 10, digits=40)
        lin_h = linearizer_coefficients(CFAngle(0, (10**6,), (1,)), 10, digits=40)
        assert abs(lin_h.coeffs[2]) > 1e4 * abs(lin_g.coeffs[2])

    def test_divisor_underflow(self):
        # a rational angle makes lam^j = lam exactly at j = q+1
        with pytest.raises((DivisorUnderflow, ZeroDivisionError)):
            linearizer_coefficients(0.5, 10, digits=30)

    def test_divisor_logs_recorded(self):
        lin = linearizer_coefficients(GOLDEN, 50, digits=40)
        assert len(lin.divisor_logs) == 49


class TestConformalRadius:
    def test_estimators_agree_for_golden(self):
        r_s, e_s = conformal_radius(GOLDEN, "series", J=2000)
        r_e, e_e = conformal_radius(GOLDEN, "explosion", k_max=8)
        assert abs(r_s - r_e) / r_s < 0.05

    @pytest.mark.parametrize("alpha", BOUNDED_TYPE_ANGLES, ids=["golden", "silver", "12"])
    def test_estimators_agree_within_bars(self, alpha):
        r_s, e_s = conformal_radius(alpha, "series", J=1500)
        r_e, e_e = conformal_radius(alpha, "explosion", k_max=8, q_cap=60)
        assert abs(r_s - r_e) <= 3 * (e_s + e_e)

    def test_deterministic_across_windows(self):
        r1, _ = hadamard_radius(GOLDEN, 1600)
        r2, _ = hadamard_radius(GOLDEN, 2400)
        assert abs(r1 - r2) / r1 < 0.01

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            conformal_radius(GOLDEN, "guesswork")


class TestSiegelModel:
    def test_boundary_through_critical_point(self, golden_model):
        m = golden_model
        omega = complex(m.map.critical_point)
        assert min(abs(m.boundary.vertices - omega)) < 1e-14

    def test_forward_invariance(self, golden_model):
        m = golden_model
        img = m.map.apply_np(m.boundary.vertices[::7])
        assert m.boundary.distance(img).max() <= 3 * m.boundary.max_gap

    def test_boundary_is_jordan(self, golden_model):
        # no self-intersection at sampling resolution (subsampled polyline)
        from siegelab.measure import Polyline

        sub = Polyline(golden_model.boundary.vertices[::4])
        assert not sub.self_intersects()

    def test_membership_center_and_far(self, golden_model):
        assert siegel_membership(golden_model, 0) == "inside"
        assert siegel_membership(golden_model, 10) == "outside"

    def test_membership_interior_image(self, golden_model):
        m = golden_model
        z = m.linearizer.eval_np(np.array([0.99 * m.conformal_radius * np.exp(1j * np.pi / 7)]))[0]
        verdict = siegel_membership(m, z)
        if verdict == "boundary-band":
            verdict = resolve_boundary_band(m, z, 100000)
        assert verdict == "inside"
        # cross-check by orbit boundedness
        assert not escape_classify(m.map, complex(z), 100000, 3.0).escaped

    def test_critical_point_in_band(self, golden_model):
        m = golden_model
        assert siegel_membership(m, complex(m.map.critical_point)) == "boundary-band"


class TestSubdisk:
    def test_small_rho_diameter(self, golden_model):
        rho = 0.02 * golden_model.conformal_radius
        poly, _ = invariant_subdisk_boundary(golden_model, rho)
        diam = np.abs(poly.vertices[:, None][::64] - poly.vertices[None, :][:, ::64]).max()
        assert diam <= 2.2 * rho

    def test_rho_equals_radius_gives_boundary(self, golden_model):
        poly, _ = invariant_subdisk_boundary(golden_model, golden_model.conformal_radius)
        assert poly is golden_model.boundary

    def test_forward_invariance_half_radius(self, golden_model):
        rho = golden_model.conformal_radius / 2
        poly, residual = invariant_subdisk_boundary(golden_model, rho)
        # the defect is dominated by the polygon sagitta, not the map
        assert residual < poly.max_gap**2 / rho

    def test_rejects_large_rho(self, golden_model):
        with pytest.raises(ValueError):
            invariant_subdisk_boundary(golden_model, 2 * golden_model.conformal_radius)

    def test_monotone_nesting(self, golden_model):
        r = golden_model.conformal_radius
        p1, _ = invariant_subdisk_boundary(golden_model, 0.3 * r)
        p2, _ = invariant_subdisk_boundary(golden_model, 0.6 * r)
        gate = SubdiskGate(p2)
        assert gate.contains(p1.vertices[::31]).all()


class TestLSet:
    def test_deep_subdisk_point(self, golden_model):
        r = golden_model.conformal_radius
        verdict, idx = l_set_membership(golden_model, r / 2, 0.001 + 0.001j, m_max=100)
        assert verdict == "entered-subdisk" and idx == 0

    def test_far_point_escapes(self, golden_model):
        verdict, idx = l_set_membership(golden_model, golden_model.conformal_radius / 2, 10.0, m_max=100)
        assert verdict == "escaped"

    def test_boundary_point_stays(self, golden_model):
        # a Siegel boundary sample never enters the open sub-disk
        z = complex(golden_model.boundary.vertices[123])
        verdict, _ = l_set_membership(
            golden_model, golden_model.conformal_radius / 2, z, m_max=10000
        )
        assert verdict == "in-L"
