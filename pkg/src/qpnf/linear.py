"""Constructive normal form at the linear dispersion order M = 1.

At order one the space and time derivatives compete at equal strength, so the
top order cannot be flattened by averaging: each spectral half line carries
its own transport problem, whose solution straightens the principal
coefficient to a constant lambda along characteristics. The two composition
frames are glued across the half lines by the sharp projectors, a pairing
that inverts only modulo smoothing tails, so every step logs a frame defect
instead of assuming unitarity. Lower orders then descend by exponential
sweeps whose generators solve the mixed divisor equation

    omega . d_phi q - lambda_pm sign(xi) d_x q = rhs

on each half line. Those divisors are controlled precisely by the second
Melnikov conditions at lambda_pm, which are checked after the top step since
the multipliers are themselves outputs. The flat part of every sweep joins a
pair of Fourier multiplier tables mu_pm, one per half line.
"""

from dataclasses import dataclass
from math import ceil

import numpy as np

from .grids import TorusGrid, dx, omega_dot_dphi
from .divisors import (FrequencyVector, check_diophantine, check_melnikov,
                       invert_mixed)
from . import symbols as sym
from .flows import invert_diffeo, pushforward, split_conjugate
from .model import ModelSpec, ReductionSetup, reduction_setup
from .certificates import (Certificate, StepRecord, exp_generator,
                           step_frames)
from .sublinear import initial_matrix
from .transport import solve_transport


def eps_bar_linear(eps_gap: float) -> float:
    """Order gained per sweep; at order one the mixed divisors gain a full order."""
    gap = eps_gap if eps_gap > 0 else 1.0
    return min(1.0, gap)


def step_count_linear(K: int, ebar: float) -> int:
    """Sweeps needed to push the remainder to xi-order -K, plus one spare."""
    return ceil((K + 1) / ebar) + 1


class MelnikovRefusal(ValueError):
    """A computed multiplier lands on a resonance.

    Carries the failing reports and the partial step ledger so the caller can
    inspect how far the reduction got.
    """

    def __init__(self, reports: dict, records: list):
        self.reports = reports
        self.records = records
        lines = ["computed multipliers fail the melnikov gate:"]
        for branch, rep in reports.items():
            lines.append(f"  {branch}: {rep.describe()}")
        super().__init__("\n".join(lines))


def melnikov_gate(freq: FrequencyVector, lam_plus: float, lam_minus: float,
                  L: int = 60, j_max: int = 128, records: list = None) -> dict:
    """Second Melnikov scans at the two computed multipliers.

    Returns the pair of reports when both pass and raises MelnikovRefusal
    naming the resonant (ell, j) otherwise. The scan always runs on the full
    original frequency vector, even when the reduction itself is folded onto
    a single fast angle, because the evolution phase moves on the full torus.
    """
    reports = {"plus": check_melnikov(freq, lam_plus, L=L, j_max=j_max),
               "minus": check_melnikov(freq, lam_minus, L=L, j_max=j_max)}
    if not (reports["plus"].passed and reports["minus"].passed):
        raise MelnikovRefusal(reports, list(records or ()))
    return reports


def reduce_top_linear(grid: TorusGrid, freq: FrequencyVector,
                      v_field: np.ndarray):
    """Straighten the principal coefficient by transport on both half lines.

    The plus branch solves the transport equation with negated omega, the
    minus branch with omega as given; the straightened coefficients are
    lam_pm = m + c_pm. The forward displacements of both branches are packed
    into a single glued composition record. Returns (record, transports).
    """
    m = float(v_field.mean())
    p = v_field - m
    trans = {"plus": solve_transport(grid, freq, m, p, sign=-1),
             "minus": solve_transport(grid, freq, m, p, sign=+1)}
    alpha_p = invert_diffeo(grid, trans["plus"].alpha)
    alpha_m = invert_diffeo(grid, trans["minus"].alpha)
    rec = StepRecord("split-compose", "top-transport",
                     alpha=alpha_p, alpha_minus=alpha_m)
    return rec, trans


def lower_step_linear(grid: TorusGrid, w: np.ndarray, lam_plus: float,
                      lam_minus: float, omega: np.ndarray, order: float,
                      name: str):
    """One glued exponential sweep against the remainder symbol w.

    The flat part of w goes to the caller as the multiplier increment; the
    rest is targeted per half line by generators solving the mixed divisor
    equation with the branch multiplier, cut off by chi_one on the trapped
    central columns. Stored symbols are symmetrized through the exact
    adjoint, (q + q*)/2, so the recorded frame generator Op(g) + Op(g)^H
    equals Op(q) + Op(q)^H on the nose.

    Returns (record, mu_increment, residual, mu_imag) where residual is the
    sup defect of the divisor identity against the halved right hand side.
    """
    phi_axes = tuple(range(grid.nu))
    flat = w.mean(axis=phi_axes + (grid.nu,))
    mu_imag = float(np.max(np.abs(flat.imag))) if np.iscomplexobj(flat) else 0.0
    rhs = 0.5 * (np.broadcast_to(flat, w.shape) - w)
    rhs_sym = sym.LatticeSymbol(grid, rhs, order)
    xi = grid.xi
    chi1 = sym.chi_one(xi).real
    cut_p = chi1 * (xi > 0)
    cut_m = chi1 * (xi < 0)
    sgn = np.sign(xi.astype(float))
    gens = {}
    resid = 0.0
    for branch, lam in (("plus", lam_plus), ("minus", lam_minus)):
        qp = invert_mixed(rhs_sym, omega, -lam).samples * cut_p
        qm = invert_mixed(rhs_sym, omega, +lam).samples * cut_m
        q = sym.LatticeSymbol(grid, qp + qm, order)
        # the cutoffs are xi multipliers, so they commute with both divisor
        # fields and the masked identity must hold on every column
        dxq = np.swapaxes(dx(grid, np.swapaxes(q.samples, -1, -2)), -1, -2)
        lhs = omega_dot_dphi(grid, q.samples, omega) - lam * sgn * dxq
        resid = max(resid, float(np.max(np.abs(lhs - chi1 * rhs))))
        gens[branch] = sym.scale_symbol(
            sym.symbol_sum(q, sym.adjoint_exact(q)), 0.5)
    rec = StepRecord("split-exp", name, symbol=gens["plus"],
                     symbol_minus=gens["minus"])
    return rec, flat.real, resid, mu_imag


@dataclass
class LinearReduction:
    model: ModelSpec
    setup: ReductionSetup
    lam: dict
    mu: dict
    V0: np.ndarray
    V_final: np.ndarray
    records: list
    transports: dict
    reports: dict
    diagnostics: dict
    certificate: Certificate

    @property
    def normal_profile(self) -> np.ndarray:
        g = self.setup.grid
        absd = sym.absd_profile(1.0)(g.xi).real
        lam_signed = np.where(g.xi >= 0, self.lam["plus"], self.lam["minus"])
        return lam_signed * absd + self.mu["plus"] + self.mu["minus"]

    @property
    def remainder(self) -> np.ndarray:
        return self.V_final - np.diag(self.normal_profile.astype(complex))


def _report_dict(rep) -> dict:
    return {"passed": rep.passed, "margin": rep.margin,
            "worst_ell": list(rep.worst_ell), "worst_j": rep.worst_j,
            "scan_bound": rep.scan_bound, "j_bound": rep.j_bound}


def reduce_linear(model: ModelSpec, n_steps: int = None,
                  slope_window=None) -> LinearReduction:
    """Run the order-one reduction and package it as a replayable certificate."""
    if model.kind != "linear":
        raise ValueError(f"model kind is {model.kind!r}, expected 'linear'")
    gate = check_diophantine(model.freq)
    if not gate.passed:
        raise ValueError("frequency fails the nonresonance gate:\n"
                         + gate.describe())

    setup = reduction_setup(model)
    g, K = setup.grid, model.K
    om = setup.freq.omega
    ebar = eps_bar_linear(model.eps_gap)
    N = step_count_linear(K, ebar) if n_steps is None else n_steps

    V0 = initial_matrix(g, setup, 1.0)
    V = V0
    records = []
    eq = {}
    eye = np.eye(g.n_band)
    xi = g.xi
    # Hermitian defect per half-line block, measured on the inner band:
    # truncating the basis at |xi| = xi_max clips the composition frames where
    # the order-one symbol is largest, and that clipping noise lives in the
    # outer half of the band.  The full-block figure is kept as a diagnostic.
    inner = np.abs(xi) <= g.xi_max // 2
    idx_p = np.where((xi >= 0) & inner)[0]
    idx_m = np.where((xi < 0) & inner)[0]
    idx_p_full = np.where(xi >= 0)[0]
    idx_m_full = np.where(xi < 0)[0]
    block_defect = {"plus": 0.0, "minus": 0.0}
    block_defect_full = {"plus": 0.0, "minus": 0.0}

    def track_blocks(M):
        for branch, idx, idx_full in (("plus", idx_p, idx_p_full),
                                      ("minus", idx_m, idx_m_full)):
            blk = M[..., idx[:, None], idx[None, :]]
            block_defect[branch] = max(block_defect[branch],
                                       sym.matrix_defect(blk))
            full = M[..., idx_full[:, None], idx_full[None, :]]
            block_defect_full[branch] = max(block_defect_full[branch],
                                            sym.matrix_defect(full))

    rec, trans = reduce_top_linear(g, setup.freq, setup.v_field)
    eq["top_plus"] = trans["plus"].residual
    eq["top_minus"] = trans["minus"].residual
    lam_p, lam_m = trans["plus"].lam, trans["minus"].lam
    F, Finv = step_frames(g, rec)
    frame_defects = [float(np.max(np.abs(F @ Finv - eye)))]
    V = pushforward(g, V, F, Finv, om)
    records.append(rec)
    track_blocks(V)

    reports = melnikov_gate(model.freq, lam_p, lam_m, records=records)

    mask_p = (xi >= 0).astype(float)
    mask_m = 1.0 - mask_p
    lam_prof = np.where(xi >= 0, lam_p, lam_m) * sym.absd_profile(1.0)(xi).real
    mu_p = np.zeros(g.n_band)
    mu_m = np.zeros(g.n_band)
    sup_history = []
    eq["step"] = 0.0
    mu_imag = 0.0

    for n in range(N):
        m_ord = 1.0 - (n + 1) * ebar
        w = sym.from_matrix(g, V, m_ord).samples - (lam_prof + mu_p + mu_m)
        sup_history.append(float(np.max(np.abs(w))))
        rec, flat, resid, im = lower_step_linear(
            g, w, lam_p, lam_m, om, m_ord, f"sweep-{n}")
        eq["step"] = max(eq["step"], resid)
        mu_imag = max(mu_imag, im)
        mu_p = mu_p + flat * mask_p
        mu_m = mu_m + flat * mask_m
        V, _, _, defect = split_conjugate(
            g, V, exp_generator(g, rec.symbol),
            exp_generator(g, rec.symbol_minus), om)
        frame_defects.append(defect)
        records.append(rec)
        track_blocks(V)

    normal_prof = lam_prof + mu_p + mu_m
    R = V - np.diag(normal_prof.astype(complex))
    amps = sym.amplitude_by_xi(sym.from_matrix(g, R, -float(K)))
    slope = sym.decay_slope(g, amps, slope_window)
    ob_slope = sym.coupling_slope(g, V, slope_window)

    lam = {"plus": lam_p, "minus": lam_m}
    mu = {"plus": mu_p, "minus": mu_m}
    diagnostics = {
        "eq_residuals": eq,
        "eps_bar": ebar,
        "n_steps": N,
        "m_shift": trans["plus"].m,
        "lam": dict(lam),
        "c": {b: t.c for b, t in trans.items()},
        "transport_iterations": {b: t.iterations for b, t in trans.items()},
        "remainder_sup_history": sup_history,
        "remainder_sup": float(np.max(np.abs(R))),
        "remainder_slope": float(slope),
        "offblock_slope": float(ob_slope),
        "frame_defects": frame_defects,
        "block_defect": dict(block_defect),
        "block_defect_full": dict(block_defect_full),
        "mu_imag": mu_imag,
        "gate_margin": gate.margin,
        "melnikov": {b: _report_dict(r) for b, r in reports.items()},
    }
    cert = Certificate(kind="linear", config=model.to_dict(), grid=g,
                       omega=om, lam=lam, mu=mu, steps=records,
                       diagnostics=diagnostics, embedding=setup.embedding)
    return LinearReduction(model, setup, lam, mu, V0, V, records, trans,
                           reports, diagnostics, cert)
