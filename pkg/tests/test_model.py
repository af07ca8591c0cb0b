"""Model parsing, assembly, hypothesis checks, and phase embedding."""

import copy

import numpy as np
import pytest

from qpnf.grids import TorusGrid
from qpnf import symbols as sym
from qpnf.model import (FieldSpec, ModelSpec, TrigTerm, assemble,
                        assemble_at_phi, check_hypotheses, rank1_direction,
                        reduction_setup)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

SUB = {
    "kind": "sublinear", "M": 0.5, "K": 1,
    "omega": [1.0, GOLDEN], "gamma": 0.1, "tau": 2.0,
    "grid": {"n_phi": 8, "xi_max": 16},
    "v": {"const": 2.0, "terms": [{"amp": 0.5, "ell": [1, 1], "j": 1}]},
    "w_alpha": 0.25,
    "w": {"const": 0.0, "terms": [{"amp": 0.1, "ell": [0, 0], "j": 1}]},
}


class TestFieldSpec:
    def test_sample_matches_closed_form(self):
        g = TorusGrid(nu=2, n_phi=8, xi_max=4)
        f = FieldSpec(2.0, (TrigTerm(0.5, (1, 1), 1),))
        mesh = g.phi_mesh()
        want = 2.0 + 0.5 * (np.cos(mesh[0] + mesh[1])[..., None]
                            * np.cos(g.x)[None, None, :])
        assert np.allclose(f.sample(g), want, atol=1e-14)

    def test_sample_at_matches_lattice_nodes(self):
        g = TorusGrid(nu=2, n_phi=8, xi_max=4)
        f = FieldSpec(1.0, (TrigTerm(0.3, (2, -1), 2, 0.4, 0.7),))
        full = f.sample(g)
        phi = np.array([g.phi_axis[3], g.phi_axis[6]])
        assert np.allclose(f.sample_at(g, phi), full[3, 6], atol=1e-13)

    def test_dict_roundtrip(self):
        f = FieldSpec(1.5, (TrigTerm(0.2, (1, 0), 3, 0.1, -0.2),))
        assert FieldSpec.from_dict(f.to_dict()) == f


class TestModelSpec:
    def test_roundtrip(self):
        m = ModelSpec.from_dict(SUB)
        assert m.kind == "sublinear" and m.M == 0.5 and m.K == 1
        assert m.nu == 2 and m.eps_gap == 0.25
        back = ModelSpec.from_dict(m.to_dict())
        assert back.v == m.v and back.w == m.w
        assert np.allclose(back.freq.omega, m.freq.omega)

    def test_extra_keys_survive(self):
        d = copy.deepcopy(SUB)
        d["evolve"] = {"s": 1.0, "dt": 0.01}
        m = ModelSpec.from_dict(d)
        assert m.to_dict()["evolve"] == {"s": 1.0, "dt": 0.01}

    def test_validation(self):
        bad = copy.deepcopy(SUB)
        bad["M"] = 1.0
        with pytest.raises(ValueError):
            ModelSpec.from_dict(bad)
        bad = copy.deepcopy(SUB)
        bad["kind"] = "linear"  # M = 0.5
        with pytest.raises(ValueError):
            ModelSpec.from_dict(bad)
        bad = copy.deepcopy(SUB)
        bad["w_alpha"] = 0.5
        with pytest.raises(ValueError):
            ModelSpec.from_dict(bad)
        bad = copy.deepcopy(SUB)
        bad["kind"] = "periodic"
        with pytest.raises(ValueError):
            ModelSpec.from_dict(bad)


class TestAssembly:
    def test_constant_model_is_diagonal(self):
        g = TorusGrid(nu=2, n_phi=8, xi_max=8)
        d = copy.deepcopy(SUB)
        d["v"] = {"const": 1.0, "terms": []}
        d["w"] = {"const": 0.0, "terms": []}
        d["grid"] = {"n_phi": 8, "xi_max": 8}
        m = ModelSpec.from_dict(d)
        M = assemble(g, m)
        want = np.diag(sym.absd_profile(0.5)(g.xi).real).astype(complex)
        assert np.max(np.abs(M - want[None, None])) < 1e-14

    def test_hermitian_exactly(self):
        m = ModelSpec.from_dict(SUB)
        M = assemble(m.grid(), m)
        assert sym.matrix_defect(M) < 1e-14

    def test_at_phi_matches_family_node(self):
        m = ModelSpec.from_dict(SUB)
        g = m.grid()
        fam = assemble(g, m)
        phi = np.array([g.phi_axis[5], g.phi_axis[2]])
        assert np.max(np.abs(assemble_at_phi(g, m, phi) - fam[5, 2])) < 1e-12

    def test_at_phi_continuous(self):
        # off-lattice point: still Hermitian, entries finite and smooth-sized
        m = ModelSpec.from_dict(SUB)
        g = m.grid()
        H = assemble_at_phi(g, m, np.array([0.123, 2.456]))
        assert np.max(np.abs(H - np.conj(H.T))) < 1e-14


class TestHypotheses:
    def test_good_model_passes(self):
        m = ModelSpec.from_dict(SUB)
        rep = check_hypotheses(m.grid(), m)
        assert rep.passed and rep.elliptic
        assert abs(rep.v_min - 1.5) < 1e-12
        assert abs(rep.v_max - 2.5) < 1e-12
        assert rep.hermitian_defect < 1e-14
        assert "ok" in rep.describe()

    def test_nonelliptic_fails(self):
        d = copy.deepcopy(SUB)
        d["v"] = {"const": 0.4, "terms": [{"amp": 0.5, "ell": [1, 1], "j": 1}]}
        m = ModelSpec.from_dict(d)
        rep = check_hypotheses(m.grid(), m)
        assert not rep.passed and not rep.elliptic


class TestEmbedding:
    def test_rank1_direction(self):
        m = ModelSpec.from_dict(SUB)
        assert rank1_direction(m) == (1, 1)

        d = copy.deepcopy(SUB)
        d["v"]["terms"] = [{"amp": 0.5, "ell": [1, 1], "j": 1},
                           {"amp": 0.1, "ell": [-2, -2], "j": 2}]
        assert rank1_direction(ModelSpec.from_dict(d)) == (1, 1)

        d = copy.deepcopy(SUB)
        d["v"] = {"const": 2.0,
                  "terms": [{"amp": 0.5, "ell": [1, 0], "j": 1},
                            {"amp": 0.1, "ell": [0, 1], "j": 1}]}
        assert rank1_direction(ModelSpec.from_dict(d)) is None

    def test_reduction_setup_embeds(self):
        m = ModelSpec.from_dict(SUB)
        setup = reduction_setup(m)
        assert setup.grid.nu == 1
        assert setup.grid.n_phi == 2 * m.n_phi
        assert abs(setup.freq.omega[0] - (1.0 + GOLDEN)) < 1e-14
        theta = setup.grid.phi_axis
        want = 2.0 + 0.5 * (np.cos(theta)[:, None]
                            * np.cos(setup.grid.x)[None, :])
        assert np.allclose(setup.v_field, want, atol=1e-14)
        assert setup.embedding["ell0"] == [1, 1]
        # perturbation came along, at its own order
        assert setup.w_symbol is not None
        assert setup.w_symbol.order == 0.25

    def test_full_rank_runs_unfolded(self):
        d = copy.deepcopy(SUB)
        d["v"] = {"const": 2.0,
                  "terms": [{"amp": 0.2, "ell": [1, 0], "j": 1},
                            {"amp": 0.2, "ell": [0, 1], "j": 1}]}
        m = ModelSpec.from_dict(d)
        setup = reduction_setup(m)
        assert setup.grid.nu == 2
        assert setup.embedding == {}
        assert np.allclose(setup.freq.omega, m.freq.omega)

    def test_negative_multiple_folds(self):
        d = copy.deepcopy(SUB)
        d["v"]["terms"] = [{"amp": 0.5, "ell": [1, 1], "j": 1},
                           {"amp": 0.05, "ell": [-1, -1], "j": 0}]
        m = ModelSpec.from_dict(d)
        setup = reduction_setup(m)
        theta = setup.grid.phi_axis
        want = (2.0 + 0.5 * np.cos(theta)[:, None]
                * np.cos(setup.grid.x)[None, :]
                + 0.05 * np.cos(-theta)[:, None] * np.ones(setup.grid.n_x))
        assert np.allclose(setup.v_field, want, atol=1e-14)
