import numpy as np
import pytest

from qpnf.grids import TorusGrid, FourierState, synthesize, analyze
from qpnf import symbols as sym
from conftest import quantize_oracle


def rand_state(grid, rng, decay=2.0):
    c = rng.normal(size=grid.n_band) + 1j * rng.normal(size=grid.n_band)
    return FourierState(grid, c * grid.bracket ** (-decay))


class TestCutoffs:
    def test_chi_plateaus_on_lattice(self):
        xi = np.arange(-40, 41)
        v = sym.chi(xi)
        assert v[40] == 0.0
        inner = np.abs(xi) >= 1
        assert np.all(v[inner] == 1.0)

    def test_chi_one_plateaus(self):
        xi = np.arange(-40, 41)
        v = sym.chi_one(xi)
        assert np.all(v[np.abs(xi) <= 1] == 0.0)
        assert np.all(v[np.abs(xi) >= 2] == 1.0)
        assert sym.chi_zero is sym.chi_one

    def test_transition_monotone(self):
        u = np.linspace(0.5, 1.0, 101)
        v = sym.chi(u)
        assert v[0] == 0.0 and v[-1] == 1.0
        assert np.all(np.diff(v) >= 0)
        assert 0.0 < sym.chi(0.75) < 1.0

    def test_half_masks_partition(self):
        xi = np.arange(-100, 101)
        plus = sym.HalfLineMask("plus")(xi)
        minus = sym.HalfLineMask("minus")(xi)
        assert np.all(plus + minus == 1.0)
        op = sym.HalfLineMask("one_plus")(xi)
        om = sym.HalfLineMask("one_minus")(xi)
        assert np.all(op * om == 0.0)
        assert op[100 + 2] == 1.0 and op[100 + 1] == 0.0 and op[100 - 3] == 0.0
        assert om[100 - 2] == 1.0 and om[100 - 1] == 0.0

    def test_projector_matrices(self, grid_small):
        P = sym.projector_matrix(grid_small, +1)
        M = sym.projector_matrix(grid_small, -1)
        eye = np.eye(grid_small.n_band)
        assert np.abs(P @ P - P).max() == 0.0
        assert np.abs(P + M - eye).max() == 0.0

    def test_smoothed_dx_identity_on_projectors(self, grid_small):
        # i |D| keeps d/dx behavior on each half band: i |xi| chi = i xi on xi >= 0
        g = grid_small
        absd = sym.absd_profile(1.0)(g.xi)
        plus = (g.xi >= 0).astype(float)
        minus = (g.xi < 0).astype(float)
        assert np.abs(1j * absd * plus - 1j * g.xi * plus).max() < 1e-15
        assert np.abs(1j * absd * minus + 1j * g.xi * minus).max() < 1e-15

    def test_hilbert_squares_to_minus_one(self, grid_small):
        h = sym.hilbert_profile()(grid_small.xi)
        outer = np.abs(grid_small.xi) >= 1
        assert np.abs(h[outer] ** 2 + 1.0).max() < 1e-15
        assert h[grid_small.xi_max] == 0.0


class TestProfiles:
    def test_bracket_power_values(self):
        xi = np.array([-3.0, 0.0, 5.0])
        p = sym.bracket_power(0.5)
        assert np.abs(p(xi) - (1 + xi**2) ** 0.25).max() < 1e-15
        assert p.order == 0.5

    def test_bracket_poly_derivative_vs_fd(self):
        p = sym.bracket_power(1.5)
        xi = np.linspace(2.0, 9.0, 17)
        h = 1e-6
        fd = (p(xi + h) - p(xi - h)) / (2 * h)
        assert np.abs(p(xi, deriv=1) - fd).max() < 1e-7

    def test_bracket_poly_second_derivative(self):
        p = sym.BracketPoly(((2.0, 1, 0.5),))  # 2 xi <xi>
        xi = np.linspace(1.0, 6.0, 11)
        h = 1e-4
        fd = (p(xi + h) - 2 * p(xi) + p(xi - h)) / h**2
        assert np.abs(p(xi, deriv=2) - fd).max() < 5e-6

    def test_abs_power_values_and_derivs(self):
        p = sym.absd_profile(0.5)
        xi = np.arange(-20, 21).astype(float)
        vals = p(xi)
        outer = np.abs(xi) >= 1
        assert np.abs(vals[outer] - np.abs(xi[outer]) ** 0.5).max() < 1e-15
        assert vals[20] == 0.0  # chi kills the core
        # falling factorial on the plateau
        xs = np.linspace(3.0, 12.0, 13)
        h = 1e-6
        fd = (p(xs + h) - p(xs - h)) / (2 * h)
        assert np.abs(p(xs, deriv=1) - fd).max() < 1e-7

    def test_abs_power_odd_sign(self):
        # |xi|^{M-1} sign(xi) with M = 1/2 appears in the space-direction divisor
        p = sym.AbsPowerChi(1.0, -0.5, odd=True, cutoff="chi_one")
        assert p(np.array([4.0]))[0] == pytest.approx(4.0**-0.5)
        assert p(np.array([-4.0]))[0] == pytest.approx(-(4.0**-0.5))
        assert p(np.array([1.0]))[0] == 0.0

    def test_singular_profile_requires_cutoff(self):
        with pytest.raises(ValueError):
            sym.AbsPowerChi(1.0, -1.0, cutoff="none")

    def test_profile_roundtrip_serialization(self):
        profs = [
            sym.bracket_power(0.75, coeff=2.0 - 1j),
            sym.absd_profile(0.5),
            sym.hilbert_profile(),
            sym.HalfLineMask("one_minus", coeff=0.5j),
        ]
        xi = np.arange(-8, 9).astype(float)
        for p in profs:
            q = sym.profile_from_dict(p.to_dict())
            assert np.abs(p(xi) - q(xi)).max() < 1e-15


class TestQuantization:
    def test_to_matrix_matches_quadrature_oracle(self, grid_small, rng):
        a = sym.random_symbol(grid_small, rng, order=0.5)
        idx = (2, 5)
        M = sym.to_matrix(a, idx)
        want = quantize_oracle(grid_small, sym.to_lattice(a).samples[idx])
        assert np.abs(M - want).max() < 1e-12

    def test_lattice_and_separable_agree(self, grid_small, rng):
        a = sym.random_symbol(grid_small, rng, order=1.0)
        la = sym.to_lattice(a)
        idx = (1, 3)
        assert np.abs(sym.to_matrix(a, idx) - sym.to_matrix(la, idx)).max() < 1e-12

    def test_family_quantization(self, rng):
        g = TorusGrid(nu=1, n_phi=4, xi_max=8)
        a = sym.random_symbol(g, rng, order=0.0)
        fam = sym.to_matrix(a)
        for i in range(g.n_phi):
            assert np.abs(fam[i] - sym.to_matrix(a, (i,))).max() < 1e-13

    def test_from_matrix_roundtrip(self, grid_small, rng):
        a = sym.to_lattice(sym.random_symbol(grid_small, rng, order=0.5, x_band=2))
        M = sym.to_matrix(a)
        b = sym.from_matrix(grid_small, M, a.order)
        # columns within the representable x-window agree exactly
        keep = np.abs(grid_small.xi) <= grid_small.xi_max - 3
        da = a.samples[..., keep] - b.samples[..., keep]
        assert np.abs(da).max() < 1e-12
        M2 = sym.to_matrix(b)
        assert np.abs(M - M2).max() < 1e-12

    def test_op_apply_equals_matrix_action(self, grid_small, rng):
        for _ in range(20):
            a = sym.random_symbol(grid_small, rng,
                                  order=float(rng.choice([-1.0, 0.0, 0.5, 1.0])))
            u = rand_state(grid_small, rng)
            idx = tuple(rng.integers(0, grid_small.n_phi, size=2))
            got = sym.op_apply(a, u, idx).coeffs
            want = sym.to_matrix(a, idx) @ u.coeffs
            scale = max(1.0, np.abs(want).max())
            assert np.abs(got - want).max() < 1e-12 * scale

    def test_mult_matrix_is_multiplication(self, grid_small, rng):
        g = grid_small
        f = sym.random_field(g, rng)
        u = rand_state(g, rng)
        idx = (0, 0)
        got = sym.mult_matrix(g, f, idx) @ u.coeffs
        want = analyze(g, f[idx] * synthesize(u)).coeffs
        assert np.abs(got - want).max() < 1e-12


class TestCalculus:
    def test_stencil_exact_on_quartics(self, grid_small):
        # the 5-point stencil differentiates polynomials of degree <= 4 exactly
        g = grid_small
        prof = sym.BracketPoly(((1.0, 0, 1.0),))  # (1 + xi^2)
        a = sym.lattice_from_profile(g, prof)
        d = sym.xi_derivative(a)
        lo, hi = d.xi_valid
        keep = (g.xi >= lo) & (g.xi <= hi)
        want = 2.0 * g.xi[keep]
        got = d.samples[0, 0, 0][keep] if g.nu == 2 else None
        got = d.samples[(0,) * g.nu + (0,)][keep]
        assert np.abs(got - want).max() < 1e-10

    def test_validity_window_shrinks(self, grid_small):
        a = sym.lattice_from_profile(grid_small, sym.bracket_power(1.0))
        d = sym.xi_derivative(a, power=2)
        assert d.xi_valid == (-grid_small.xi_max + 4, grid_small.xi_max - 4)

    def test_narrow_band_rejected(self):
        g = TorusGrid(nu=1, n_phi=4, xi_max=1)
        a = sym.lattice_from_profile(g, sym.bracket_power(1.0))
        with pytest.raises(ValueError):
            sym.xi_derivative(a)

    def test_compose_expansion_first_term(self, grid_small, rng):
        a = sym.random_symbol(grid_small, rng, order=0.0)
        b = sym.random_symbol(grid_small, rng, order=0.0)
        c = sym.compose_expansion(a, b, 1)
        want = sym.to_lattice(a).samples * sym.to_lattice(b).samples
        assert np.abs(c.samples - want).max() < 1e-12

    def test_compose_residual_decays_per_term(self, rng):
        # adding a term buys one extra power of decay in the off-expansion error
        g = TorusGrid(nu=1, n_phi=4, xi_max=64)
        win = (16, 32)
        for ma, mb in [(0.5, 0.5), (1.0, -1.0), (0.0, 1.0)]:
            a = sym.random_symbol(g, rng, order=ma)
            b = sym.random_symbol(g, rng, order=mb)
            AB = np.einsum("pij,pjk->pik", sym.to_matrix(a), sym.to_matrix(b))
            scale = np.abs(AB).max()
            slopes = []
            for n in (1, 2, 3):
                R = AB - sym.to_matrix(sym.compose_expansion(a, b, n))
                res = sym.from_matrix(g, R, ma + mb - n)
                amps = sym.amplitude_by_xi(res)
                if amps[g.xi_max // 4 + g.xi_max: g.xi_max // 2 + g.xi_max].max() \
                        < 1e-12 * scale:
                    slopes.append(-np.inf)  # residual at machine floor
                    continue
                slopes.append(sym.decay_slope(g, amps, win))
            for n, s in zip((1, 2, 3), slopes):
                assert s < ma + mb - n + 0.6, (ma, mb, n, s)
            gains = np.diff([s for s in slopes if np.isfinite(s)])
            assert np.all(gains < -0.4), (ma, mb, slopes)

    def test_adjoint_expansion_converges_to_transpose(self, rng):
        g = TorusGrid(nu=1, n_phi=4, xi_max=64)
        win = (16, 32)
        a = sym.random_symbol(g, rng, order=1.0)
        AH = np.conj(np.swapaxes(sym.to_matrix(a), -1, -2))
        slopes = []
        for n in (1, 2, 3):
            R = AH - sym.to_matrix(sym.adjoint_expansion(a, n))
            res = sym.from_matrix(g, R, a.order - n)
            slopes.append(sym.decay_slope(g, sym.amplitude_by_xi(res), win))
        for n, s in zip((1, 2, 3), slopes):
            assert s < a.order - n + 0.6, (n, slopes)

    def test_adjoint_exact_matches_transpose(self, grid_small, rng):
        a = sym.random_symbol(grid_small, rng, order=0.5)
        b = sym.adjoint_exact(a)
        M = sym.to_matrix(a)
        assert np.abs(sym.to_matrix(b) - np.conj(np.swapaxes(M, -1, -2))).max() < 1e-12

    def test_adjoint_of_self_adjoint_is_identity(self, grid_small, rng):
        f = sym.random_field(grid_small, rng)
        a = sym.SeparableSymbol(grid_small, ((f, sym.bracket_power(0.0)),), 0.0)
        b = sym.adjoint_exact(a)
        # inner columns only: edge columns cannot carry the full x-window
        keep = np.abs(grid_small.xi) <= grid_small.xi_max - 3
        da = b.samples[..., keep] - sym.to_lattice(a).samples[..., keep]
        assert np.abs(da).max() < 1e-12

    def test_commutator_vs_poisson_bracket(self, rng):
        # [A, B] should match Op(-i {a, b}) two orders below order(a) + order(b)
        g = TorusGrid(nu=1, n_phi=4, xi_max=64)
        win = (16, 32)
        a = sym.random_symbol(g, rng, order=1.0)
        b = sym.random_symbol(g, rng, order=0.5)
        A, B = sym.to_matrix(a), sym.to_matrix(b)
        comm = np.einsum("pij,pjk->pik", A, B) - np.einsum("pij,pjk->pik", B, A)
        pb = sym.poisson_bracket(a, b)
        R = comm - sym.to_matrix(sym.scale_symbol(pb, -1j))
        res = sym.from_matrix(g, R, a.order + b.order - 2)
        slope = sym.decay_slope(g, sym.amplitude_by_xi(res), win)
        assert slope < a.order + b.order - 2 + 0.6, slope


class TestDiagnostics:
    def test_defect_zero_for_real_multiplication(self, grid_small, rng):
        f = sym.random_field(grid_small, rng)
        a = sym.SeparableSymbol(grid_small, ((f, sym.const_profile()),), 0.0)
        assert sym.self_adjoint_defect(a) < 1e-14

    def test_defect_positive_then_symmetrized(self, grid_small, rng):
        f = sym.random_field(grid_small, rng)
        a = sym.SeparableSymbol(grid_small, ((f, sym.xi_poly([0.0, 1.0])),), 1.0)
        d = sym.self_adjoint_defect(a)
        assert d > 1e-6
        M = sym.to_matrix(a)
        assert sym.matrix_defect(sym.symmetrize(M)) < 1e-13

    def test_decay_slope_synthetic(self, grid_small):
        g = grid_small
        amps = g.bracket ** (-3.0)
        assert abs(sym.decay_slope(g, amps, (4, 8)) + 3.0) < 1e-8
        assert sym.decay_slope(g, np.zeros(g.n_band), (4, 8)) == -np.inf

    def test_offblock_coupling_diag_is_zero(self, grid_small):
        M = np.diag(np.ones(grid_small.n_band, dtype=complex))[None, None]
        M = np.broadcast_to(M, grid_small.phi_shape + M.shape[-2:])
        rs, c = sym.offblock_coupling(grid_small, M)
        assert np.all(c == 0.0)

    def test_offblock_coupling_detects_cross_entry(self, grid_small):
        g = grid_small
        M = np.zeros(g.phi_shape + (g.n_band, g.n_band), dtype=complex)
        i_row = g.xi_max + 5      # xi' = 5
        i_col = g.xi_max - 9      # xi = -9
        M[..., i_row, i_col] = 0.25
        rs, c = sym.offblock_coupling(g, M)
        assert c[np.where(rs == 9)[0][0]] == 0.25
