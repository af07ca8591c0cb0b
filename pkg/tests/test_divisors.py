import itertools

import numpy as np
import pytest

from qpnf.grids import TorusGrid
from qpnf import symbols as sym
from qpnf.divisors import (
    FrequencyVector,
    ResonanceReport,
    SmallDivisorError,
    check_diophantine,
    check_melnikov,
    average_phi,
    average_phi_x,
    invert_dx,
    invert_dx_field,
    invert_omega_dphi,
    invert_omega_dphi_field,
    invert_mixed,
    invert_mixed_field,
)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def dioph_oracle(omega, gamma, tau, L):
    """Frozen slow-loop scan."""
    best, wit = np.inf, None
    for ell in itertools.product(range(-L, L + 1), repeat=len(omega)):
        if all(v == 0 for v in ell):
            continue
        m = abs(sum(o * l for o, l in zip(omega, ell)))
        m *= np.sqrt(sum(l * l for l in ell)) ** tau / gamma
        if m < best:
            best, wit = m, ell
    return best, wit


def melnikov_oracle(omega, lam, gamma, tau, L, j_max):
    best, wit = np.inf, None
    for ell in itertools.product(range(-L, L + 1), repeat=len(omega)):
        for j in range(-j_max, j_max + 1):
            if all(v == 0 for v in ell) and j == 0:
                continue
            m = abs(sum(o * l for o, l in zip(omega, ell)) + lam * j)
            m *= (1 + sum(l * l for l in ell)) ** (tau / 2) / gamma
            if m < best:
                best, wit = m, (ell, j)
    return best, wit


class TestFrequencyVector:
    def test_valid(self):
        f = FrequencyVector(np.array([1.0, GOLDEN]), 0.05, 2.0)
        assert f.nu == 2

    def test_gamma_bounds(self):
        for g in (0.0, 1.0, -0.1, 2.0):
            with pytest.raises(ValueError):
                FrequencyVector(np.array([1.0, GOLDEN]), g, 2.0)

    def test_tau_bound(self):
        with pytest.raises(ValueError):
            FrequencyVector(np.array([1.0, GOLDEN]), 0.1, 0.9)


class TestChecks:
    def test_golden_diophantine_margin(self):
        freq = FrequencyVector(np.array([1.0, GOLDEN]), 0.05, 2.0)
        rep = check_diophantine(freq, L=60)
        assert rep.passed
        # worst mode is ell = (0, -1) by hand: margin = golden / gamma
        assert abs(rep.margin - GOLDEN / 0.05) < 1e-9
        assert rep.worst_ell in ((0, -1), (0, 1))

    def test_diophantine_matches_oracle(self):
        freq = FrequencyVector(np.array([0.7548, 0.443]), 0.05, 2.0)
        rep = check_diophantine(freq, L=8)
        want, wit = dioph_oracle(freq.omega, 0.05, 2.0, 8)
        assert abs(rep.margin - want) < 1e-12
        assert rep.worst_ell in (wit, tuple(-v for v in wit))

    def test_melnikov_matches_oracle(self):
        freq = FrequencyVector(np.array([GOLDEN, np.sqrt(2) - 1]), 0.01, 3.0)
        for lam in (1.0, 0.9934, 1.073):
            rep = check_melnikov(freq, lam, L=6, j_max=12)
            want, wit = melnikov_oracle(freq.omega, lam, 0.01, 3.0, 6, 12)
            assert abs(rep.margin - want) < 1e-12, lam

    def test_golden_melnikov_exact_resonance(self):
        # omega_1 = 1 with lambda = 1 has an exact resonance: the gate must
        # fail and name it
        freq = FrequencyVector(np.array([1.0, GOLDEN]), 0.05, 2.0)
        rep = check_melnikov(freq, 1.0, L=40, j_max=64)
        assert not rep.passed
        assert rep.margin < 1e-12
        # every exact resonance has ell = (-j, 0); accept any member
        ell, j = rep.worst_ell, rep.worst_j
        assert ell[0] == -j and ell[1] == 0 and j != 0
        assert "FAIL" in rep.describe()

    def test_two_irrational_pair_passes(self):
        freq = FrequencyVector(np.array([GOLDEN, np.sqrt(2) - 1]), 0.01, 3.0)
        rep = check_melnikov(freq, 1.0, L=60, j_max=128)
        assert rep.passed and rep.margin > 1.5
        rep_d = check_diophantine(freq, L=60)
        assert rep_d.passed and rep_d.margin > 1.5


class TestInverseDx:
    def test_cosine(self, grid_1d):
        g = grid_1d
        f = np.cos(3 * g.x)[None, :] * np.ones((g.n_phi, 1))
        u = invert_dx_field(g, f)
        assert np.abs(u - np.sin(3 * g.x) / 3.0).max() < 1e-12

    def test_mean_removed(self, grid_1d, rng):
        g = grid_1d
        f = rng.normal(size=(g.n_phi, g.n_x))
        u = invert_dx_field(g, f)
        assert abs(u.mean(axis=-1)).max() < 1e-13

    def test_symbol_version_preserves_profile(self, grid_small, rng):
        g = grid_small
        field = sym.random_field(g, rng, x_band=3)
        prof = sym.bracket_power(0.5)
        a = sym.SeparableSymbol(g, ((field, prof),), 0.5)
        u = invert_dx(a)
        fmean = field.mean(axis=-1, keepdims=True)
        want = invert_dx_field(g, field - fmean)[..., None] * prof(g.xi)
        assert np.abs(u.samples - want).max() < 1e-12


class TestInverseOmegaDphi:
    def test_forward_substitution(self, rng):
        g = TorusGrid(nu=2, n_phi=8, xi_max=8)
        freq = FrequencyVector(np.array([1.0, GOLDEN]), 0.1, 2.0)
        from qpnf.grids import omega_dot_dphi
        f = sym.random_field(g, rng, phi_band=2, x_band=2)
        u = invert_omega_dphi_field(g, f, freq.omega)
        back = omega_dot_dphi(g, u, freq.omega)
        target = f - f.mean(axis=(0, 1))
        assert np.abs(back - target).max() < 1e-11
        assert np.abs(u.mean(axis=(0, 1))).max() < 1e-13

    def test_resonant_mode_raises_with_witness(self):
        g = TorusGrid(nu=2, n_phi=8, xi_max=4)
        f = np.ones(g.phi_shape + (g.n_x,))
        with pytest.raises(SmallDivisorError) as ei:
            invert_omega_dphi_field(g, f, np.array([1.0, 0.5]))
        err = ei.value
        # omega . ell = 0 at ell = +-(1, -2); witness must name one of them
        assert err.j is None
        assert err.ell in ((1, -2), (-1, 2))
        assert err.value < 1e-14

    def test_symbol_version(self, grid_small, rng):
        freq = FrequencyVector(np.array([1.0, GOLDEN]), 0.1, 2.0)
        a = sym.random_symbol(grid_small, rng, order=0.5)
        u = invert_omega_dphi(a, freq)
        from qpnf.grids import omega_dot_dphi
        back = omega_dot_dphi(grid_small, u.samples, freq.omega)
        la = sym.to_lattice(a)
        target = la.samples - la.samples.mean(axis=(0, 1))
        assert np.abs(back - target).max() < 1e-11


class TestInverseMixed:
    def test_forward_substitution(self, rng):
        g = TorusGrid(nu=2, n_phi=8, xi_max=8)
        lam = 1.0 - 1e-7
        freq = FrequencyVector(np.array([GOLDEN, np.sqrt(2) - 1]), 0.01, 3.0)
        from qpnf.grids import omega_dot_dphi, dx
        f = sym.random_field(g, rng, phi_band=2, x_band=2)
        u = invert_mixed_field(g, f, freq.omega, lam)
        back = omega_dot_dphi(g, u, freq.omega) + lam * dx(g, u)
        target = f - f.mean()
        assert np.abs(back - target).max() < 1e-10

    def test_rational_resonance_raises(self):
        g = TorusGrid(nu=1, n_phi=8, xi_max=4)
        f = np.ones(g.phi_shape + (g.n_x,))
        with pytest.raises(SmallDivisorError) as ei:
            # omega = 1/2, lam = 1: divisor at (ell, j) = (2, -1) is zero
            invert_mixed_field(g, f, np.array([0.5]), 1.0)
        err = ei.value
        assert err.j is not None
        assert err.ell[0] * 0.5 + err.j * 1.0 == pytest.approx(0.0, abs=1e-14)

    def test_symbol_version_forward(self, grid_small, rng):
        lam = 0.97
        freq = FrequencyVector(np.array([GOLDEN, np.sqrt(2) - 1]), 0.01, 3.0)
        a = sym.random_symbol(grid_small, rng, order=0.0)
        u = invert_mixed(a, freq, lam)
        from qpnf.grids import omega_dot_dphi
        back = omega_dot_dphi(grid_small, u.samples, freq.omega)
        dxu = sym.x_derivative(u)
        back = back + lam * dxu.samples
        la = sym.to_lattice(a)
        target = la.samples - la.samples.mean(axis=(0, 1, 2))
        assert np.abs(back - target).max() < 1e-10


class TestAverages:
    def test_average_phi_idempotent(self, grid_small, rng):
        a = sym.random_symbol(grid_small, rng, order=0.5)
        m1 = average_phi(a)
        m2 = average_phi(m1)
        assert np.abs(m1.samples - m2.samples).max() < 1e-14

    def test_average_phi_x_profile(self, grid_small):
        g = grid_small
        prof = sym.bracket_power(0.5)
        a = sym.lattice_from_profile(g, prof)
        p = average_phi_x(a)
        assert np.abs(p - prof(g.xi)).max() < 1e-12

    def test_inverse_has_zero_average(self, grid_small, rng):
        freq = FrequencyVector(np.array([1.0, GOLDEN]), 0.1, 2.0)
        a = sym.random_symbol(grid_small, rng, order=0.0)
        u = invert_omega_dphi(a, freq)
        m = average_phi(u)
        assert np.abs(m.samples).max() < 1e-13


class TestAdjointCompatibility:
    """Averaging and inverse divisors commute with the exact adjoint."""

    def _defect(self, A, B):
        return np.abs(A - B).max()

    def test_average_phi_commutes_with_adjoint(self, grid_small, rng):
        a = sym.random_symbol(grid_small, rng, order=0.5)
        lhs = sym.to_matrix(average_phi(sym.adjoint_exact(a)))
        rhs_fam = sym.to_matrix(sym.adjoint_exact(average_phi(a)))
        assert self._defect(lhs, rhs_fam) < 1e-10

    def test_average_phi_x_real_for_self_adjoint(self, grid_small, rng):
        a0 = sym.random_symbol(grid_small, rng, order=0.5)
        M = sym.symmetrize(sym.to_matrix(a0))
        a = sym.from_matrix(grid_small, M, a0.order)
        p = average_phi_x(a)
        assert np.abs(p.imag).max() < 1e-12
        pstar = average_phi_x(sym.adjoint_exact(a))
        assert np.abs(p - pstar).max() < 1e-10

    def test_invert_dx_commutes_with_adjoint(self, grid_small, rng):
        a = sym.random_symbol(grid_small, rng, order=0.5)
        lhs = sym.to_matrix(invert_dx(sym.adjoint_exact(a)))
        rhs = sym.to_matrix(sym.adjoint_exact(invert_dx(a)))
        assert self._defect(lhs, rhs) < 1e-10

    def test_invert_omega_dphi_commutes_with_adjoint(self, grid_small, rng):
        freq = FrequencyVector(np.array([1.0, GOLDEN]), 0.1, 2.0)
        a = sym.random_symbol(grid_small, rng, order=0.5)
        lhs = sym.to_matrix(invert_omega_dphi(sym.adjoint_exact(a), freq))
        rhs = sym.to_matrix(sym.adjoint_exact(invert_omega_dphi(a, freq)))
        assert self._defect(lhs, rhs) < 1e-10

    def test_invert_mixed_commutes_with_adjoint(self, grid_small, rng):
        freq = FrequencyVector(np.array([GOLDEN, np.sqrt(2) - 1]), 0.01, 3.0)
        lam = 1.0 + 1e-7
        a = sym.random_symbol(grid_small, rng, order=0.5)
        lhs = sym.to_matrix(invert_mixed(sym.adjoint_exact(a), freq, lam))
        rhs = sym.to_matrix(sym.adjoint_exact(invert_mixed(a, freq, lam)))
        assert self._defect(lhs, rhs) < 1e-10
