import numpy as np
import pytest

from conftest import constant_field
from diagnostics import (DegradedBoundSpec, DiagnosticsBundle, Observable, RectangleQuery,
                         contour_strip_check, contour_strip_family, convergence_orders,
                         degraded_bound_check, degraded_family_check, dyadic_family_averages,
                         dyadic_intervals, exponential_space_envelope, exponential_time_envelope,
                         hull_confinement, linear_residual_suite, mixing_box_family, mixing_check,
                         power_balance_convergence, rectangle_average, rectangle_family,
                         residual_spacings, velocity_recovery_check, volume_proportion,
                         window_lattice)
from geometry import StateZ, lambda_segment
from scheme import FieldModel
from subsolution import BiotSavartBox, InvalidTime, OutsideMixingZone
from waves import CubeSpec, WaveAtom, solve_direction


@pytest.fixture
def one_atom_model(flat_base, params):
    """Flat field plus one half-amplitude atom on the cube of side 0.25 centred at (0, 0, 0.875)."""
    center = (0.0, 0.0, 0.875)
    zbar = lambda_segment(flat_base((0.0, 0.0), 0.875), params).zbar * 0.5
    atom = WaveAtom(CubeSpec(center, 0.25, 0), zbar, solve_direction(zbar, tol=1e-9), 8)
    return FieldModel(flat_base, params, [atom])


class TestEnvelopes:
    def test_constant_spec(self, flat_geometry):
        spec = DegradedBoundSpec.constant()
        query = RectangleQuery((0.0, 2.0), (-1.0, 1.0), 1.0)
        assert query.area(flat_geometry) == 4.0
        assert spec.bound(query, flat_geometry) == pytest.approx(0.25)

    def test_alpha_caps_small_areas(self, flat_geometry):
        spec = DegradedBoundSpec.constant(alpha=0.5)
        small = RectangleQuery((0.0, 0.25), (0.0, 1.0), 1.0)
        assert spec.bound(small, flat_geometry) == pytest.approx(0.25 ** 0.5 / 0.25)

    def test_exponential_envelopes(self):
        S = exponential_space_envelope(0.5)
        T = exponential_time_envelope(0.5)
        assert S(0.0) == 0.0 and T(0.0) == 0.0
        assert float(S(1.0)) == pytest.approx(0.5 * np.exp(-2.0))
        assert float(T(1.0)) == pytest.approx(0.5 * np.exp(-4.0))
        spec = DegradedBoundSpec.exponential(0.5, 0.5)
        assert float(spec.E(1.0, 1.0)) == 0.0
        assert float(spec.E(0.0, 1.0)) == pytest.approx(float(S(1.0) * T(1.0)))

    @pytest.mark.parametrize("kwargs", [
        {"alpha": 1.0},
        {"alpha": -0.1},
        {"S_func": lambda s: 2.0 * np.ones_like(s)},
        {"T_func": lambda t: 1.0 - np.asarray(t)},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            DegradedBoundSpec(**kwargs)

    def test_envelope_eps_validation(self):
        with pytest.raises(ValueError):
            exponential_space_envelope(0.0)
        with pytest.raises(ValueError):
            exponential_time_envelope(-1.0)


class TestRectangles:
    def test_query_validation(self):
        with pytest.raises(ValueError):
            RectangleQuery((1.0, 0.0), (0.0, 0.5), 1.0)
        with pytest.raises(OutsideMixingZone):
            RectangleQuery((0.0, 1.0), (0.5, 1.5), 1.0)
        with pytest.raises(InvalidTime):
            RectangleQuery((0.0, 1.0), (0.0, 0.5), 0.0)

    def test_dyadic_family_size(self):
        assert len(dyadic_intervals(0.0, 1.0, 3)) == 15
        family = rectangle_family((-1.0, 1.0), 0.8)
        assert len(family) == 225
        assert family[0].S_interval == (-1.0, 1.0) and family[0].L_interval == (-1.0, 1.0)

    @pytest.mark.parametrize("L", [(-1.0, 1.0), (0.0, 0.5), (-0.9, -0.7), (0.25, 1.0)])
    def test_flat_density_average_is_the_mean_coordinate(self, flat_base, L):
        query = RectangleQuery((-0.5, 0.75), L, 0.8)
        assert rectangle_average(flat_base, Observable.DENSITY, query) == pytest.approx(query.mid_L, abs=1e-12)
        np.testing.assert_allclose(rectangle_average(flat_base, "velocity", query), 0.0, atol=1e-15)
        assert rectangle_average(flat_base, Observable.POWER_BALANCE, query) == pytest.approx(0.0, abs=1e-15)

    def test_flat_field_meets_the_constant_bound(self, flat_base):
        report = degraded_bound_check(flat_base, DegradedBoundSpec.constant(), rectangle_family((-1, 1), 0.9, 2))
        assert report.passed
        assert report.queries == 49
        assert report.max_ratio < 1e-12
        assert report.to_dict()["passed"] is True

    def test_family_averages_match_direct_averages(self, flat_base):
        pairs = dyadic_family_averages(flat_base, (-1.0, 1.0), 0.9)
        assert len(pairs) == 225
        for query, average in pairs[::37]:
            assert average == pytest.approx(rectangle_average(flat_base, Observable.DENSITY, query), abs=1e-13)
        report = degraded_family_check(flat_base, DegradedBoundSpec.constant(), (-1.0, 1.0), 0.9)
        assert report.passed and report.queries == 225

    def test_pure_field_fails_the_bound(self, flat_geometry):
        pure = constant_field(flat_geometry, [1.0, 0.0, 1.0, 0.0, 0.5])
        query = RectangleQuery((0.0, 8.0), (-1.0, 0.0), 1.0)
        report = degraded_bound_check(pure, DegradedBoundSpec.constant(), [query])
        assert report.max_ratio == pytest.approx(1.5 * 8.0)
        assert not report.passed
        assert report.worst_query == query.as_tuple()


class TestMixing:
    def test_flat_field_mixes(self, flat_base, flat_geometry):
        boxes = mixing_box_family(flat_geometry, (-1.0, 1.0), 0.8)
        assert len(boxes) == 225
        report = mixing_check(flat_base, 0.8, boxes)
        assert report.passed
        assert report.to_dict()["boxes"] == 225

    def test_pure_field_does_not(self, flat_geometry):
        pure = constant_field(flat_geometry, [1.0, 0.0, 1.0, 0.0, 0.5])
        boxes = [(0.0, 0.5, -0.2, 0.2), (0.5, 1.0, 0.0, 0.3)]
        report = mixing_check(pure, 0.8, boxes)
        assert not report.passed
        assert [which for _, which in report.failures] == ["1-rho", "1-rho"]

    def test_volume_proportion(self, flat_base):
        vp = volume_proportion(flat_base, RectangleQuery((-1.0, 1.0), (0.0, 1.0), 0.8))
        assert vp.plus == pytest.approx(0.75)
        assert vp.minus == pytest.approx(0.25)
        assert vp.band_plus == pytest.approx(0.05, abs=0.03)
        assert vp.band_minus == 0.0
        assert set(vp.to_dict()) == {"plus", "minus", "band_plus", "band_minus"}


class TestResiduals:
    def test_orders(self):
        h = np.array([1e-2, 5e-3, 2.5e-3])
        norms = np.column_stack([h ** 2, np.zeros(3), 3.0 * h])
        orders = convergence_orders(h, norms)
        assert orders[0] == pytest.approx(2.0)
        assert orders[1] == np.inf
        assert orders[2] == pytest.approx(1.0)

    def test_lattice(self):
        P = window_lattice((-1, 1, -1, 1, 0.5, 1.0))
        assert P.shape == (75, 3)
        assert P[:, 2].min() == pytest.approx(0.625)
        dense = window_lattice((-1, 1, -1, 1, 0.5, 1.0), n=3, times=5)
        assert dense.shape == (45, 3)
        np.testing.assert_allclose(np.unique(dense[:, 2]), 0.5 + np.arange(1, 6) / 12.0)

    def test_flat_field_suite(self, flat_base):
        table = linear_residual_suite(flat_base, [(-0.5, 0.5, -0.25, 0.25, 0.75, 1.0)], (1e-2, 5e-3, 2.5e-3))
        assert table.orders[0] == np.inf
        assert table.orders[1] == np.inf
        assert table.orders[2] == pytest.approx(2.0, abs=0.1)
        assert table.to_dict()["orders"][:2] == ["inf", "inf"]

    def test_needs_three_spacings(self, flat_base):
        with pytest.raises(ValueError):
            linear_residual_suite(flat_base, [(-0.5, 0.5, -0.25, 0.25, 0.75, 1.0)], (1e-2, 5e-3))

    def test_perturbed_field_suite(self, flat_base, params, one_atom_model):
        spacings = residual_spacings(one_atom_model)
        assert spacings[0] < 1e-2
        table = linear_residual_suite(one_atom_model, [(-0.125, 0.125, -0.125, 0.125, 0.75, 1.0)],
                                      spacings, lattice_points=7)
        assert table.points == 147
        assert all(o >= 1.8 for o in table.orders)
        assert table.converged()
        assert table.to_dict()["converged"] is True

    def test_junction_mask(self, one_atom_model, flat_base, params):
        center = np.array([[0.0, 0.0, 0.875]])
        near = np.array([[-0.09375 + 2e-4, 0.0, 0.875]])
        assert one_atom_model.junction_clear(center, 1e-3)[0]
        assert not one_atom_model.junction_clear(near, 1e-3)[0]
        assert FieldModel(flat_base, params).junction_clear(near, 1e-3)[0]

    def test_no_clear_point_is_an_error(self, one_atom_model):
        with pytest.raises(ValueError, match="clear"):
            linear_residual_suite(one_atom_model, [(-0.125, 0.125, -0.125, 0.125, 0.75, 1.0)],
                                  (0.1, 0.05, 0.025))

    def test_subsolution_spacings_are_the_defaults(self, flat_base):
        assert residual_spacings(flat_base) == (1e-2, 5e-3, 2.5e-3)


class TestHullConfinement:
    WINDOW = (-0.5, 0.5, -0.4, 0.4, 0.5, 1.0)

    def test_flat_field_stays_inside(self, flat_base):
        report = hull_confinement(flat_base, self.WINDOW, 5.0, points=2000)
        assert report.points == 2000
        assert report.outside == 0
        assert report.passed
        assert report.worst_slack > -1e-12

    def test_pure_overshoot_is_outside(self, flat_geometry):
        field = constant_field(flat_geometry, [1.5, 0.0, 0.0, 0.0, 0.0])
        report = hull_confinement(field, self.WINDOW, 5.0, points=500)
        assert report.fraction_outside == 1.0
        assert not report.passed
        assert report.to_dict()["passed"] is False

    def test_sample_is_reproducible(self, one_atom_model):
        window = (-0.125, 0.125, -0.125, 0.125, 0.75, 1.0)
        a = hull_confinement(one_atom_model, window, 5.0, points=1000)
        b = hull_confinement(one_atom_model, window, 5.0, points=1000)
        assert a.to_dict() == b.to_dict()


class TestContourAndPower:
    def test_strips_leaving_the_zone_are_dropped(self):
        strips = contour_strip_family([1.0, 4.0, 16.0], 0.5, 0.5, 1.0)
        assert [s.L_interval for s in strips] == [(0.0, 1.0), (0.25, 0.75)]

    def test_flat_strips_have_no_gap(self, flat_base):
        rows = contour_strip_check(flat_base, DegradedBoundSpec.constant(), [4.0, 16.0], 0.5, 0.5, 1.0)
        assert [r.R for r in rows] == [4.0, 16.0]
        assert all(r.gap < 1e-13 for r in rows)

    def test_power_balance_report(self, flat_base, params):
        query = RectangleQuery((-0.05, 0.05), (-0.05, 0.05), 1.0)
        report = power_balance_convergence(flat_base, params, (0.0, 0.0, 1.0), 0.25, [8, 16, 32], query)
        assert report.k_values == [8, 16, 32]
        assert len(report.averages) == 3 and len(report.differences) == 2
        assert all(np.isfinite(report.averages))
        assert report.tolerance > 0.0

    def test_power_balance_converges(self, flat_base, params):
        query = RectangleQuery((-0.05, 0.05), (-0.05, 0.05), 1.0)
        report = power_balance_convergence(flat_base, params, (0.0, 0.0, 1.0), 0.25, [16, 32, 64], query)
        lam = lambda_segment(StateZ.zero(), params).lambda_max
        assert report.tolerance == pytest.approx(0.1 * lam ** 2 / 2.0)
        assert report.converged
        assert all(d <= report.tolerance for d in report.differences)
        assert report.base_average == pytest.approx(0.0, abs=1e-14)
        assert report.limit_gap <= report.tolerance
        assert report.to_dict()["converged"] is True

    def test_velocity_recovery(self, flat_base):
        box = BiotSavartBox(-4.0, 8.0, -2.0, 2.0, 32, 32)
        assert velocity_recovery_check(flat_base, box, 1.0) < 1e-12


class TestBundle:
    def test_summary(self):
        bundle = DiagnosticsBundle("abc")
        assert bundle.passed and bundle.worst_ratio == 0.0
        bundle.degraded_checks.append({"max_ratio": 0.5})
        bundle.mixing_checks.append({"passed": True})
        assert bundle.passed
        bundle.degraded_checks.append({"max_ratio": 1.5})
        assert not bundle.passed and bundle.worst_ratio == 1.5

        bundle.extra["replay"] = {"J": 1.0}
        payload = bundle.to_dict()
        assert payload["provenance"]["config_hash"] == "abc"
        assert payload["replay"] == {"J": 1.0}

    def test_hull_checks_gate_the_result(self):
        bundle = DiagnosticsBundle("abc")
        bundle.hull_checks.append({"passed": True, "fraction_outside": 0.0})
        assert bundle.passed
        bundle.hull_checks.append({"passed": False, "fraction_outside": 0.2})
        assert not bundle.passed
        assert bundle.to_dict()["hull_checks"][1]["fraction_outside"] == 0.2

    def test_residual_tables_are_reported_only(self):
        bundle = DiagnosticsBundle("abc")
        bundle.residual_tables.append({"orders": [0.5, 0.5, 0.5], "converged": False})
        assert bundle.passed
