import numpy as np
import pytest

from conftest import random_constraint_states, random_interior_states
from geometry import (CaseTag, DegenerateState, HullParams, HullStatus, StateZ, gauge_D,
                      gauge_D_array, gauge_G, gauge_H, hull_contains, hull_min_slack, hull_terms,
                      in_constraint_set, in_wave_cone, lambda_segment, lambda_segments)
from subsolution import flat_subsolution


class TestStateZ:
    def test_arithmetic(self):
        a = StateZ(0.5, (1.0, 2.0), (0.0, -1.0))
        b = StateZ(-0.25, (0.0, 1.0), (1.0, 1.0))
        np.testing.assert_allclose((a + b).as_array(), [0.25, 1.0, 3.0, 1.0, 0.0])
        np.testing.assert_allclose((a - b).as_array(), [0.75, 1.0, 1.0, -1.0, -2.0])
        np.testing.assert_allclose((2 * a).as_array(), (a * 2).as_array())
        np.testing.assert_allclose((-a).as_array(), -a.as_array())

    def test_array_round_trip(self):
        z = StateZ(0.1, (0.2, 0.3), (0.4, 0.5))
        assert StateZ.from_array(z.as_array()) == z

    def test_velocity(self):
        assert StateZ(0.5, (1.0, 1.5)).u == (0.5, 0.5)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            StateZ(np.nan)


class TestHull:
    def test_constraint_set_lies_on_the_boundary(self, rng, params):
        for z in random_constraint_states(rng, 50, params.M):
            state = StateZ.from_array(z)
            assert in_constraint_set(state, params)
            check = hull_contains(state, params)
            assert check.status is HullStatus.BOUNDARY
            assert check.inside

    def test_constraint_states_are_never_outside(self, rng, params):
        Z = random_constraint_states(rng, 10_000, params.M)
        assert np.all(hull_min_slack(Z, params.M) >= -1e-12)

    def test_interior_samples_are_strict(self, rng, params):
        Z = random_interior_states(rng, 200, params.M)
        for z in Z[:20]:
            assert hull_contains(StateZ.from_array(z), params).status is HullStatus.INSIDE_STRICT
        assert np.all(hull_min_slack(Z, params.M) > 0.05)

    def test_zero_is_inside(self, params):
        check = hull_contains(StateZ.zero(), params)
        assert check.status is HullStatus.INSIDE_STRICT
        assert check.binding == 2
        assert check.min_slack == pytest.approx(0.5)

    @pytest.mark.parametrize("z, binding", [
        (StateZ(1.5), 2),
        (StateZ(0.0, (6.0, 0.0)), 3),
        (StateZ(0.0, (0.0, 0.0), (2.0, 0.0)), 2),
    ])
    def test_outside(self, params, z, binding):
        check = hull_contains(z, params)
        assert check.status is HullStatus.OUTSIDE
        assert check.binding == binding
        assert not check.inside

    @pytest.mark.parametrize("c", [0.25, 0.5, 1.0, 1.5, 1.9])
    @pytest.mark.parametrize("lam", [-0.9, -0.3, 0.0, 0.6])
    def test_flat_subsolution_second_inequality(self, params, c, lam):
        z = flat_subsolution(c, ((0.3, lam * c * 2.0), 2.0))
        check = hull_contains(z, params)
        assert check.lhs[1] == pytest.approx(abs(1.0 - c) * (1.0 - lam ** 2) / 2.0, abs=1e-14)
        assert check.status is HullStatus.INSIDE_STRICT

    def test_terms_are_batched(self, rng, params):
        Z = random_interior_states(rng, 10, params.M).reshape(2, 5, 5)
        lhs, rhs, slacks = hull_terms(Z, params.M)
        assert lhs.shape == rhs.shape == slacks.shape == (2, 5, 5)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            HullParams(M=1.0)
        with pytest.raises(ValueError):
            HullParams(margin_delta=-0.1)


class TestGauge:
    def test_values(self):
        assert gauge_D(StateZ(0.6)) == pytest.approx(0.64)
        assert gauge_D(StateZ(1.2)) == 0.0
        np.testing.assert_allclose(gauge_D_array([0.0, 0.5, -1.0, 2.0]), [1.0, 0.75, 0.0, 0.0])
        np.testing.assert_allclose(gauge_G(StateZ(0.25)), [-0.5, 0, 0, 0, 0])

    def test_quadratic_along_any_direction(self, rng):
        for _ in range(20):
            z = StateZ.from_array(rng.uniform(-0.4, 0.4, 5))
            w = StateZ.from_array(rng.uniform(-0.4, 0.4, 5))
            assert gauge_D(z + w) + gauge_D(z - w) == pytest.approx(2 * gauge_D(z) - 2 * gauge_H(w))

    def test_wave_cone(self):
        assert in_wave_cone(StateZ(0.6, (0.0, 0.6), (3.0, -1.0)))
        assert in_wave_cone(StateZ(-0.5, (0.3, 0.4)))
        assert not in_wave_cone(StateZ(0.5, (0.0, 0.0)))


class TestSegments:
    def test_zero_state(self):
        seg = lambda_segment(StateZ.zero(), HullParams(M=5.0, margin_delta=0.0))
        np.testing.assert_allclose(seg.direction.as_array(), [1.0, 1.0, 0.0, 0.0, 0.0], atol=1e-14)
        assert seg.lambda_max == pytest.approx(np.sqrt(2.0) / 2.0, abs=1e-8)
        assert seg.case_tag is CaseTag.OMEGA_DOMINANT
        assert in_wave_cone(seg.zbar)

    def test_flux_along_x2(self):
        seg = lambda_segment(StateZ(0.0, (0.0, 0.0), (0.0, 0.25)), HullParams(M=5.0, margin_delta=0.0))
        assert seg.case_tag is CaseTag.OMEGA_DOMINANT
        np.testing.assert_allclose(seg.omega, (0.0, 0.5))
        np.testing.assert_allclose(seg.direction.as_array(), [1.0, 0.0, 1.0, 0.0, 0.0], atol=1e-14)
        assert seg.lambda_max > 0.0
        for sign in (1.0, -1.0):
            end = StateZ(0.0, (0.0, 0.0), (0.0, 0.25)) + seg.zbar * sign
            assert hull_contains(end, HullParams(M=5.0)).inside

    def test_segments_are_maximal(self, rng, params):
        Z = random_interior_states(rng, 10_000, params.M, min_slack=0.1)
        dirs, lam, margin, _, _ = lambda_segments(Z, params)
        step = 1.02 * lam[:, None] * dirs
        stretched = np.minimum(hull_min_slack(Z + step, params.M), hull_min_slack(Z - step, params.M))
        assert np.all(stretched < params.margin_delta)
        assert np.all(margin >= params.margin_delta - 1e-12)

    def test_directions_lie_in_the_cone(self, rng, params):
        Z = random_interior_states(rng, 1000, params.M, min_slack=0.1)
        dirs, lam, _, _, _ = lambda_segments(Z, params)
        for d, l in zip(dirs, lam):
            assert in_wave_cone(StateZ.from_array(l * d))

    def test_lambda_is_lower_semicontinuous(self, rng, params):
        Z = random_interior_states(rng, 1000, params.M, min_slack=0.1)
        dZ = rng.normal(size=Z.shape)
        dZ *= 1e-4 * rng.uniform(0.0, 1.0, (len(Z), 1)) / np.linalg.norm(dZ, axis=1, keepdims=True)
        _, lam, _, _, _ = lambda_segments(Z, params)
        _, lam_moved, _, _, _ = lambda_segments(Z + dZ, params)
        drop = lam - lam_moved - 10.0 * np.linalg.norm(dZ, axis=1)
        assert np.mean(drop <= 1e-8) >= 0.98

    def test_interior_states_get_a_segment_with_margin(self, rng, params):
        Z = random_interior_states(rng, 300, params.M, min_slack=0.1)
        dirs, lam, margin, branch, small_v = lambda_segments(Z, params)
        assert np.all(lam > 0.0)
        assert np.all(margin >= params.margin_delta - 1e-12)
        assert set(np.unique(branch)) <= {0, 1, 2}
        np.testing.assert_allclose(dirs[:, 0], 1.0)
        np.testing.assert_allclose(np.hypot(dirs[:, 1], dirs[:, 2]), 1.0)

        step = lam[:, None] * dirs
        assert np.all(hull_min_slack(Z + step, params.M) >= params.margin_delta - 1e-12)
        assert np.all(hull_min_slack(Z - step, params.M) >= params.margin_delta - 1e-12)

    def test_single_matches_batch(self, rng, params):
        z = random_interior_states(rng, 1, params.M, min_slack=0.1)[0]
        seg = lambda_segment(StateZ.from_array(z), params)
        dirs, lam, margin, _, small_v = lambda_segments(z[None, :], params)
        np.testing.assert_allclose(seg.direction.as_array(), dirs[0])
        assert seg.lambda_max == lam[0]
        assert seg.margin == margin[0]
        assert (seg.case_tag is CaseTag.SMALL_V) == bool(small_v[0])
        np.testing.assert_allclose(seg.zbar.as_array(), lam[0] * dirs[0])

    def test_flat_states_have_positive_segments(self, params):
        for lam in (-0.8, -0.2, 0.0, 0.5):
            z = flat_subsolution(1.0, ((0.0, lam), 1.0))
            seg = lambda_segment(z, params)
            assert seg.lambda_max > 0.0
            assert seg.margin >= params.margin_delta - 1e-12

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.0 - 1e-12])
    def test_degenerate(self, params, rho):
        with pytest.raises(DegenerateState):
            lambda_segment(StateZ(rho), params)
        with pytest.raises(DegenerateState):
            lambda_segments(np.array([[0.0, 0, 0, 0, 0], [rho, 0, 0, 0, 0]]), params)
