import numpy as np
import pytest

from conftest import random_cone_direction
from geometry import StateZ
from quadrature import gauss_panels
from waves import (DEFAULT_CUTOFF, DEFAULT_PROFILE, AtomTable, CubeSpec, CutoffSpec, NotInCone,
                   WaveAtom, WaveFrequency, atom_eval, atom_fields, atom_leading_part,
                   atom_linear_residual, atom_potentials, oscillation_average, oscillation_limit,
                   residual_lattice, smoothstep, solve_direction, symbol_matrix)

CUBE = CubeSpec((0.1, -0.2, 1.0), 0.5, 0)
ZBAR = StateZ(0.5, (0.3, 0.4), (0.2, -0.1))


def make_atom(k=4, zbar=ZBAR, cube=CUBE):
    return WaveAtom(cube, zbar, solve_direction(zbar), k)


class TestProfile:
    def test_antiderivatives(self):
        tau = np.linspace(0.0, 1.0, 11)
        h = 1e-6
        np.testing.assert_allclose((DEFAULT_PROFILE.H2(tau + h) - DEFAULT_PROFILE.H2(tau - h)) / (2 * h),
                                   DEFAULT_PROFILE.H1(tau), atol=1e-8)
        np.testing.assert_allclose((DEFAULT_PROFILE.H1(tau + h) - DEFAULT_PROFILE.H1(tau - h)) / (2 * h),
                                   DEFAULT_PROFILE.h(tau), atol=1e-8)
        np.testing.assert_allclose(DEFAULT_PROFILE.derivative(2, tau), DEFAULT_PROFILE.h(tau))

    def test_torus_moments(self):
        assert DEFAULT_PROFILE.torus_mean() == pytest.approx(0.0, abs=1e-14)
        assert DEFAULT_PROFILE.torus_mean(lambda w: w ** 2) == pytest.approx(DEFAULT_PROFILE.l2_norm_sq)

    def test_unknown_derivative(self):
        with pytest.raises(ValueError):
            DEFAULT_PROFILE.derivative(4, 0.0)


class TestCutoff:
    def test_smoothstep_ends(self):
        S, dS, ddS = smoothstep(np.array([0.0, 1.0]))
        np.testing.assert_allclose(S, [0.0, 1.0])
        np.testing.assert_allclose(dS, [0.0, 0.0])
        np.testing.assert_allclose(ddS, [0.0, 0.0])

    def test_chi_is_one_on_the_inner_part(self):
        u = np.linspace(0.125, 0.875, 31)
        chi, d1, d2 = DEFAULT_CUTOFF.chi(u)
        np.testing.assert_allclose(chi, 1.0)
        np.testing.assert_allclose(d1, 0.0, atol=1e-12)
        assert DEFAULT_CUTOFF.inner_fraction == 0.75

    def test_chi_vanishes_outside(self):
        chi, d1, d2 = DEFAULT_CUTOFF.chi(np.array([-0.5, 0.0, 1.0, 1.5]))
        np.testing.assert_array_equal(chi, 0.0)
        np.testing.assert_array_equal(d1, 0.0)

    def test_chi_is_symmetric(self):
        u = np.linspace(0.0, 1.0, 41)
        np.testing.assert_allclose(DEFAULT_CUTOFF.chi(u)[0], DEFAULT_CUTOFF.chi(1.0 - u)[0], atol=1e-14)

    def test_ramp_validation(self):
        with pytest.raises(ValueError):
            CutoffSpec(0.5)


class TestSolveDirection:
    def test_symbol_annihilates_cone_vectors(self, rng):
        for _ in range(100):
            zbar = random_cone_direction(rng)
            freq = solve_direction(zbar)
            assert not freq.null
            assert np.linalg.norm(symbol_matrix(freq) @ zbar.as_array()) <= 1e-12 * zbar.norm()
            assert np.hypot(*freq.zeta) == pytest.approx(1.0)

    def test_flux_only_direction(self):
        freq = solve_direction(StateZ(0.0, (0.0, 0.0), (0.3, 0.4)))
        assert freq.b_coeff == pytest.approx(0.5)
        assert freq.xi0 == 0.0
        np.testing.assert_allclose(freq.zeta, (0.8, -0.6))
        np.testing.assert_allclose(symbol_matrix(freq) @ np.array([0, 0, 0, 0.3, 0.4]), 0.0, atol=1e-15)

    def test_zero_is_null(self):
        assert solve_direction(StateZ.zero()).null

    def test_rejects_vectors_off_the_cone(self):
        with pytest.raises(NotInCone):
            solve_direction(StateZ(0.5))

    def test_frequency_validation(self):
        with pytest.raises(ValueError):
            WaveFrequency((1.0, 1.0), 0.0, 0.0)
        record = WaveFrequency((0.6, 0.8), -1.5, 0.25).as_record()
        assert WaveFrequency.from_record(record) == WaveFrequency((0.6, 0.8), -1.5, 0.25)


class TestAtoms:
    def test_validation(self):
        with pytest.raises(NotInCone):
            WaveAtom(CUBE, StateZ(0.5), solve_direction(ZBAR), 4)
        with pytest.raises(ValueError):
            make_atom(k=0)
        with pytest.raises(ValueError):
            CubeSpec((0, 0, 1), 0.5, 2)

    def test_geometry(self):
        atom = make_atom(k=8)
        assert atom.kappa == 16.0
        assert atom.wavelength == pytest.approx(1.0 / 16.0)
        assert not atom.is_null

    def test_support_is_the_cube(self, rng):
        atom = make_atom()
        outside = np.array(CUBE.center) + rng.uniform(0.26, 0.6, (50, 3)) * rng.choice([-1, 1], (50, 3))
        np.testing.assert_array_equal(atom_fields(atom, outside), 0.0)
        phi, varphi = atom_potentials(atom, outside)
        np.testing.assert_array_equal(phi, 0.0)
        np.testing.assert_array_equal(varphi, 0.0)

    def test_equals_leading_part_on_the_inner_cube(self, rng):
        atom = make_atom(k=6)
        X = np.array(CUBE.center) + rng.uniform(-0.37, 0.37, (200, 3)) * CUBE.side
        np.testing.assert_allclose(atom_fields(atom, X), atom_leading_part(atom, X), atol=1e-12)

    def test_corrections_decay_like_one_over_k(self, rng):
        X = np.array(CUBE.center) + rng.uniform(-0.5, 0.5, (20000, 3)) * CUBE.side
        gaps = []
        for k in (16, 32):
            atom = make_atom(k=k)
            gaps.append(np.max(np.abs(atom_fields(atom, X) - atom_leading_part(atom, X))))
        assert gaps[0] > 0.0
        assert gaps[1] < 0.7 * gaps[0]

    def test_space_time_mean_is_zero(self):
        atom = make_atom(k=4)
        # panel edges on the eighths of the cube, where the cutoff has its junctions
        axes = [gauss_panels(c - 0.5 * CUBE.side, c + 0.5 * CUBE.side, 32) for c in CUBE.center]
        (x1, w1), (x2, w2), (t, wt) = axes
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        W = np.outer(w1, w2).ravel()
        total = np.zeros(5)
        mass = np.zeros(5)
        for tn, wn in zip(t, wt):
            Z = atom_fields(atom, np.column_stack([X1.ravel(), X2.ravel(), np.full(X1.size, tn)]))
            total += wn * (W @ Z)
            mass += wn * (W @ np.abs(Z))
        assert np.all(mass[:3] > 0.0)
        live = mass > 0.0
        assert np.all(np.abs(total[live]) <= 1e-8 * mass[live])

    @pytest.mark.parametrize("side", [0.5, 0.25])
    def test_amplitude_bound(self, rng, side):
        U = rng.uniform(0.0, 1.0, (20000, 3))
        for k in (8, 16, 32, 64):
            cube = CubeSpec((0.1, -0.2, 1.0), side, 0)
            atom = make_atom(k=k, cube=cube)
            X = np.array(cube.center) + (U - 0.5) * side
            sup = np.max(np.abs(atom_fields(atom, X)[:, 0]))
            assert sup <= abs(ZBAR.rho) * (1.0 + 8.0 / k + 20.0 / k ** 2)

    def test_amplitude_excess_is_scale_free(self, rng):
        U = rng.uniform(0.0, 1.0, (5000, 3))
        sups = []
        for side in (0.5, 0.25):
            cube = CubeSpec((0.1, -0.2, 1.0), side, 0)
            X = np.array(cube.center) + (U - 0.5) * side
            sups.append(np.max(np.abs(atom_fields(make_atom(k=16, cube=cube), X)[:, 0])))
        assert sups[0] == pytest.approx(sups[1], rel=1e-9)

    def test_point_evaluation_matches_batch(self):
        atom = make_atom()
        z = atom_eval(atom, (0.15, -0.1), 1.05)
        np.testing.assert_allclose(z.as_array(), atom_fields(atom, [0.15, -0.1, 1.05])[0])

    def test_null_atom_is_zero(self):
        atom = WaveAtom(CUBE, StateZ.zero(), solve_direction(StateZ.zero()), 4)
        assert atom.is_null
        np.testing.assert_array_equal(atom_fields(atom, [[0.1, -0.2, 1.0]]), 0.0)
        assert atom_linear_residual(atom, 1e-3) == (0.0, 0.0, 0.0)

    def test_table_matches_single_atoms(self, rng):
        atoms = [make_atom(k=4), make_atom(k=8, zbar=StateZ(-0.3, (0.0, 0.3), (0.1, 0.1)))]
        table = AtomTable(atoms)
        X = np.array(CUBE.center) + rng.uniform(-0.5, 0.5, (40, 3)) * CUBE.side
        idx = np.repeat([0, 1], 20)
        expected = np.concatenate([atom_fields(atoms[0], X[:20]), atom_fields(atoms[1], X[20:])])
        np.testing.assert_allclose(table.evaluate(idx, X), expected)

    def test_table_rejects_mixed_cutoffs(self):
        a = make_atom()
        b = WaveAtom(CUBE, ZBAR, solve_direction(ZBAR), 4, CutoffSpec(0.25))
        with pytest.raises(ValueError):
            AtomTable([a, b])


def fitted_order(spacings, residuals):
    return np.polyfit(np.log(spacings), np.log(residuals), 1)[0]


class TestLinearResidual:
    SPACINGS = (1e-2, 5e-3, 2.5e-3)

    @pytest.mark.parametrize("path", ["fields", "potentials"])
    def test_residual_is_second_order(self, path):
        atom = make_atom(k=4)
        table = np.array([atom_linear_residual(atom, h, path) for h in self.SPACINGS])
        fitted = 0
        for row in table.T:
            if row.max() < 1e-10:
                continue
            assert fitted_order(self.SPACINGS, row) >= 1.8
            fitted += 1
        assert fitted >= 1

    def test_random_atoms_are_second_order(self, rng):
        for _ in range(100):
            zbar = random_cone_direction(rng)
            atom = WaveAtom(CUBE, zbar, solve_direction(zbar), int(rng.integers(2, 9)))
            h0 = min(0.015, 0.08 / (atom.kappa * max(1.0, np.max(np.abs(atom.freq.xi)))))
            spacings = (h0, h0 / 2.0, h0 / 4.0)
            table = np.array([atom_linear_residual(atom, h) for h in spacings])
            scale = 1e-10 * (1.0 + np.max(np.abs(atom_fields(atom, residual_lattice(atom, h0)))))
            for row in table.T:
                if row[0] > scale:
                    assert fitted_order(spacings, row) >= 1.8

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            atom_linear_residual(make_atom(), 0.0)
        with pytest.raises(ValueError):
            atom_linear_residual(make_atom(), 1e-3, path="symbols")


class TestOscillation:
    BOX = ((0.0, 1.0 / 3.0), (0.0, 1.0))
    FREQ = WaveFrequency((1.0, 0.0), 0.0, 0.0)

    @staticmethod
    def square(w):
        return w ** 2

    @staticmethod
    def one(X1, X2):
        return np.ones_like(X1)

    def test_limit(self):
        assert oscillation_limit(DEFAULT_PROFILE, self.square, self.one, self.BOX) == pytest.approx(1.0 / 6.0)

    @pytest.mark.parametrize("k", [1, 2, 4, 5, 7, 8, 16, 64])
    def test_gap_decays_like_one_over_k(self, k):
        avg = oscillation_average(DEFAULT_PROFILE, self.square, self.one, self.FREQ, k, 0.7, self.BOX)
        assert abs(avg - 1.0 / 6.0) == pytest.approx(np.sqrt(3.0) / 2.0 / (8.0 * np.pi * k), abs=1e-5)

    @pytest.mark.parametrize("k", [3, 6, 12])
    def test_commensurate_k_has_no_gap(self, k):
        avg = oscillation_average(DEFAULT_PROFILE, self.square, self.one, self.FREQ, k, 0.7, self.BOX)
        assert avg == pytest.approx(1.0 / 6.0, abs=1e-5)

    def test_rejects_k_zero(self):
        with pytest.raises(ValueError):
            oscillation_average(DEFAULT_PROFILE, self.square, self.one, self.FREQ, 0, 1.0)

    def test_travelling_wave_gap_is_uniform_in_t(self):
        xi0 = 0.37
        freq = WaveFrequency((1.0, 0.0), xi0, 0.0)
        envelopes = []
        for t in np.linspace(0.0, 5.0, 8):
            scaled = []
            for k in (8, 16, 32, 64):
                avg = oscillation_average(DEFAULT_PROFILE, self.square, self.one, freq, k, t, self.BOX)
                exact = 1.0 / 6.0 + (np.sin(4 * np.pi * k * (1.0 / 3.0 + xi0 * t))
                                     - np.sin(4 * np.pi * k * xi0 * t)) / (8 * np.pi * k)
                assert avg == pytest.approx(exact, abs=1e-5)
                assert abs(avg - 1.0 / 6.0) <= 1.0 / (4 * np.pi * k) + 1e-5
                scaled.append(k * abs(avg - 1.0 / 6.0))
            envelopes.append(max(scaled))
        assert max(envelopes) / min(envelopes) <= 3.0
