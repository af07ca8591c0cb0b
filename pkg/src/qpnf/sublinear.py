"""Constructive normal form for sublinear dispersion orders 0 < M < 1.

Two preparatory conjugations straighten the principal part: an exponential
frame generated by alpha(phi, x) |D|^M chi removes its phase dependence, and a
weighted composition removes its x dependence, leaving lambda |D|^M chi. A
ladder of paired substeps then grinds the rest down: each time substep cancels
the phase-varying part of the current correction exactly through the frame's
derivative term, each space substep cancels the x-varying part of its phase
average through the commutator with lambda |D|^M, and the flat part joins the
Fourier multiplier mu(xi). Every full sweep lowers the xi-order of what is
left by at least eps_bar.
"""

from dataclasses import dataclass
from math import ceil

import numpy as np

from .grids import TorusGrid, dx, omega_dot_dphi, trig_interp_x
from .divisors import check_diophantine, invert_dx_field, invert_omega_dphi_field
from . import symbols as sym
from .flows import invert_diffeo
from .model import ModelSpec, ReductionSetup, reduction_setup
from .certificates import Certificate, StepRecord, step_apply


def eps_bar(M: float, eps_gap: float) -> float:
    """Order gained per sweep; capped by the commutator gain 1 - M."""
    gap = eps_gap if eps_gap > 0 else 1.0 - M
    return min(1.0 - M, gap)


def step_count(M: float, K: int, ebar: float) -> int:
    """Sweeps needed to push the remainder to xi-order -K, plus one spare."""
    return ceil((M + K) / ebar) + 1


def initial_matrix(grid: TorusGrid, setup: ReductionSetup, M: float) -> np.ndarray:
    """Symmetrized quantization of the model on the reduction grid."""
    terms = [(setup.v_field, sym.absd_profile(M))]
    if setup.w_symbol is not None:
        terms.extend(setup.w_symbol.terms)
    a = sym.SeparableSymbol(grid, tuple(terms), M)
    return sym.symmetrize(sym.to_matrix(a))


@dataclass
class SublinearReduction:
    model: ModelSpec
    setup: ReductionSetup
    lam: float
    mu: np.ndarray
    V0: np.ndarray
    V_final: np.ndarray
    records: list
    diagnostics: dict
    certificate: Certificate

    @property
    def normal_profile(self) -> np.ndarray:
        g = self.setup.grid
        return self.lam * sym.absd_profile(self.model.M)(g.xi).real + self.mu

    @property
    def remainder(self) -> np.ndarray:
        return self.V_final - np.diag(self.normal_profile.astype(complex))


def _space_generator(grid: TorusGrid, r: np.ndarray, lam: float, M: float):
    """sigma(x, xi) with 2 Re Op(sigma) cancelling r against lambda |D|^M.

    The Poisson bracket of sigma with lambda |xi|^M must return r, which fixes
    d_x sigma = r |xi|^(1-M) sgn(xi) / (2 lam M) away from the cutoff region.
    Returns sigma and the residual of that identity on the cutoff's support.
    """
    xi = grid.xi.astype(float)
    q = (np.abs(xi) ** (1.0 - M) * np.sign(xi) * sym.chi_one(xi).real
         / (2.0 * lam * M))
    prim = np.swapaxes(invert_dx_field(grid, np.swapaxes(r, -1, -2)), -1, -2)
    sigma = prim * q[None, :]
    safe = np.where(np.abs(xi) > 0.5, np.abs(xi), 1.0)
    back = np.where(np.abs(xi) > 0.5, safe ** (M - 1.0), 0.0) * np.sign(xi)
    lhs = dx(grid, np.swapaxes(sigma, -1, -2)) * (2.0 * lam * M * back[..., None])
    resid = np.max(np.abs(np.swapaxes(lhs, -1, -2) - sym.chi_one(xi).real * r))
    return sigma, float(resid)


def reduce_sublinear(model: ModelSpec, n_steps: int = None,
                     slope_window=None) -> SublinearReduction:
    """Run the full reduction and package it as a replayable certificate."""
    if model.kind != "sublinear":
        raise ValueError(f"model kind is {model.kind!r}, expected 'sublinear'")
    gate = check_diophantine(model.freq)
    if not gate.passed:
        raise ValueError("frequency fails the nonresonance gate:\n"
                         + gate.describe())

    setup = reduction_setup(model)
    g, M, K = setup.grid, model.M, model.K
    om = setup.freq.omega
    phi_axes = tuple(range(g.nu))
    ebar = eps_bar(M, model.eps_gap)
    N = step_count(M, K, ebar) if n_steps is None else n_steps

    vbar = setup.v_field.mean(axis=phi_axes)
    if vbar.min() <= 0.0:
        raise ValueError("phase-averaged coefficient must stay positive")

    V0 = initial_matrix(g, setup, M)
    V = V0
    records = []
    eq = {}

    # top time step: remove the phase dependence of the principal coefficient
    rhs = 0.5 * (np.broadcast_to(vbar, g.phi_shape + (g.n_x,)) - setup.v_field)
    alpha_t = invert_omega_dphi_field(g, rhs, om)
    eq["top_time"] = float(np.max(np.abs(
        omega_dot_dphi(g, alpha_t, om) - rhs)))
    rec = StepRecord("exp", "top-time", symbol=sym.SeparableSymbol(
        g, ((alpha_t, sym.absd_profile(M)),), M))
    V = step_apply(g, V, rec, om)
    records.append(rec)

    # top space step: straighten the x dependence by a weighted composition.
    # lambda is pinned by requiring the inverse displacement slope to have
    # zero mean, and the forward displacement comes from inverting it.
    root = vbar ** (-1.0 / M)
    lam = float(root.mean()) ** (-M)
    beta_tilde = invert_dx_field(g, lam ** (1.0 / M) * root - 1.0)
    beta = invert_diffeo(g, beta_tilde)
    straightened = (trig_interp_x(g, vbar[None, :], (g.x + beta)[None, :])[0]
                    * (1.0 + dx(g, beta)) ** (-M))
    eq["top_space"] = float(np.max(np.abs(straightened - lam)))
    rec = StepRecord("compose", "top-space",
                     alpha=np.broadcast_to(beta, g.phi_shape + (g.n_x,)).copy())
    V = step_apply(g, V, rec, om)
    records.append(rec)

    lam_prof = lam * sym.absd_profile(M)(g.xi).real
    mu = np.zeros(g.n_band)
    sup_history = []
    eq["step_time"] = 0.0
    eq["step_space"] = 0.0

    for n in range(N):
        m_ord = M - (n + 1) * ebar
        w = sym.from_matrix(g, V, m_ord).samples - (lam_prof + mu)
        sup_history.append(float(np.max(np.abs(w))))

        # time substep: the derivative term of the frame eats the
        # phase-varying part of w exactly
        wbar = w.mean(axis=phi_axes)
        rhs = 0.5 * (np.broadcast_to(wbar, w.shape) - w)
        g1 = invert_omega_dphi_field(g, rhs, om)
        eq["step_time"] = max(eq["step_time"], float(np.max(np.abs(
            omega_dot_dphi(g, g1, om) - rhs))))
        rec = StepRecord("exp", f"time-{n}",
                         symbol=sym.LatticeSymbol(g, g1, m_ord))
        V = step_apply(g, V, rec, om)
        records.append(rec)

        # absorb the flat part into the multiplier, then kill the x variation
        w2 = sym.from_matrix(g, V, m_ord).samples - (lam_prof + mu)
        prof = w2.mean(axis=phi_axes + (g.nu,))
        mu = mu + prof.real
        r = w2.mean(axis=phi_axes) - prof[None, :]
        sigma, resid = _space_generator(g, r, lam, M)
        eq["step_space"] = max(eq["step_space"], resid)
        rec = StepRecord("exp", f"space-{n}", symbol=sym.LatticeSymbol(
            g, np.broadcast_to(sigma, w.shape).copy(), m_ord + 1.0 - M))
        V = step_apply(g, V, rec, om)
        records.append(rec)

    normal_prof = lam_prof + mu
    R = V - np.diag(normal_prof.astype(complex))
    r_sym = sym.from_matrix(g, R, -float(K))
    amps = sym.amplitude_by_xi(r_sym)
    slope = sym.decay_slope(g, amps, slope_window)

    diagnostics = {
        "eq_residuals": eq,
        "eps_bar": ebar,
        "n_steps": N,
        "lam": lam,
        "remainder_sup_history": sup_history,
        "remainder_sup": float(np.max(np.abs(R))),
        "remainder_slope": float(slope),
        "hermitian_defect": sym.matrix_defect(V),
        "gate_margin": gate.margin,
    }
    cert = Certificate(kind="sublinear", config=model.to_dict(), grid=g,
                       omega=om, lam=lam, mu=mu, steps=records,
                       diagnostics=diagnostics, embedding=setup.embedding)
    return SublinearReduction(model, setup, lam, mu, V0, V, records,
                              diagnostics, cert)
