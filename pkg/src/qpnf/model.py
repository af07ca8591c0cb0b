"""Model specification and operator assembly.

A model is a positive elliptic coefficient field V(phi, x) carrying the
dispersive weight |xi|^M, plus a lower-order perturbation W with its own
weight. Both fields are finite trigonometric polynomials, so they can be
evaluated in closed form at any phase point. Quantization is symmetrized,
which makes the assembled operator Hermitian exactly instead of up to one
order down.
"""

from dataclasses import dataclass, field as dc_field
from math import gcd

import numpy as np

from .grids import TorusGrid
from .divisors import FrequencyVector
from . import symbols as sym


# -- trig polynomial fields ------------------------------------------------------

@dataclass(frozen=True)
class TrigTerm:
    """amp * cos(ell . phi + phase_phi) * cos(j x + phase_x)."""

    amp: float
    ell: tuple
    j: int
    phase_phi: float = 0.0
    phase_x: float = 0.0

    def to_dict(self) -> dict:
        return {"amp": self.amp, "ell": list(self.ell), "j": self.j,
                "phase_phi": self.phase_phi, "phase_x": self.phase_x}

    @classmethod
    def from_dict(cls, d: dict) -> "TrigTerm":
        return cls(float(d["amp"]), tuple(int(v) for v in d["ell"]),
                   int(d["j"]), float(d.get("phase_phi", 0.0)),
                   float(d.get("phase_x", 0.0)))


@dataclass(frozen=True)
class FieldSpec:
    const: float = 0.0
    terms: tuple = ()

    def to_dict(self) -> dict:
        return {"const": self.const, "terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        return cls(float(d.get("const", 0.0)),
                   tuple(TrigTerm.from_dict(t) for t in d.get("terms", ())))

    def sample(self, grid: TorusGrid) -> np.ndarray:
        """Field on the (phi..., x) lattice."""
        out = np.full(grid.phi_shape + (grid.n_x,), self.const, dtype=float)
        mesh = grid.phi_mesh()
        for t in self.terms:
            ph = sum(l * m for l, m in zip(t.ell, mesh))
            out += (t.amp * np.cos(ph + t.phase_phi)[..., None]
                    * np.cos(t.j * grid.x + t.phase_x)[None, :])
        return out

    def sample_at(self, grid: TorusGrid, phi: np.ndarray) -> np.ndarray:
        """Field over x at one continuous phase point."""
        out = np.full(grid.n_x, self.const, dtype=float)
        for t in self.terms:
            ph = float(np.dot(t.ell, phi))
            out += t.amp * np.cos(ph + t.phase_phi) * np.cos(t.j * grid.x + t.phase_x)
        return out

    def phi_modes_used(self):
        return [t.ell for t in self.terms if any(t.ell)]


# -- model -----------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    kind: str
    M: float
    K: int
    freq: FrequencyVector
    n_phi: int
    xi_max: int
    v: FieldSpec
    w_alpha: float
    w: FieldSpec
    eps_gap: float
    extra: dict = dc_field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        kind = d["kind"]
        if kind not in ("sublinear", "linear"):
            raise ValueError(f"unknown model kind {kind!r}")
        M = float(d["M"])
        if kind == "sublinear" and not 0.0 < M < 1.0:
            raise ValueError("sublinear branch needs 0 < M < 1")
        if kind == "linear" and M != 1.0:
            raise ValueError("linear branch needs M = 1")
        freq = FrequencyVector(np.asarray(d["omega"], dtype=float),
                               float(d["gamma"]), float(d["tau"]))
        v = FieldSpec.from_dict(d["v"])
        w = FieldSpec.from_dict(d.get("w", {}))
        w_alpha = float(d.get("w_alpha", 0.0))
        if (w.terms or w.const) and w_alpha >= M:
            raise ValueError("perturbation must sit strictly below order M")
        eps_gap = float(d.get("eps_gap", M - w_alpha))
        g = d["grid"]
        extra = {k: d[k] for k in d
                 if k not in ("kind", "M", "K", "omega", "gamma", "tau", "v",
                              "w", "w_alpha", "eps_gap", "grid")}
        return cls(kind, M, int(d.get("K", 1)), freq, int(g["n_phi"]),
                   int(g["xi_max"]), v, w_alpha, w, eps_gap, extra)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "M": self.M, "K": self.K,
             "omega": [float(w) for w in self.freq.omega],
             "gamma": self.freq.gamma, "tau": self.freq.tau,
             "grid": {"n_phi": self.n_phi, "xi_max": self.xi_max},
             "v": self.v.to_dict(), "w_alpha": self.w_alpha,
             "w": self.w.to_dict(), "eps_gap": self.eps_gap}
        d.update(self.extra)
        return d

    @property
    def nu(self) -> int:
        return self.freq.nu

    def grid(self) -> TorusGrid:
        return TorusGrid(nu=self.nu, n_phi=self.n_phi, xi_max=self.xi_max)


# -- assembly ---------------------------------------------------------------------

def _symbol_terms(grid: TorusGrid, model: ModelSpec):
    terms = [(model.v.sample(grid), sym.absd_profile(model.M))]
    if model.w.terms or model.w.const:
        terms.append((model.w.sample(grid), sym.absd_profile(model.w_alpha)))
    return terms


def assemble(grid: TorusGrid, model: ModelSpec) -> np.ndarray:
    """Hermitian matrix family of the model on the phi lattice."""
    a = sym.SeparableSymbol(grid, tuple(_symbol_terms(grid, model)), model.M)
    return sym.symmetrize(sym.to_matrix(a))


def assemble_at_phi(grid: TorusGrid, model: ModelSpec,
                    phi: np.ndarray) -> np.ndarray:
    """Hermitian matrix of the model at one continuous phase point."""
    samples = (model.v.sample_at(grid, phi)[:, None]
               * sym.absd_profile(model.M)(grid.xi)[None, :])
    if model.w.terms or model.w.const:
        samples = samples + (model.w.sample_at(grid, phi)[:, None]
                             * sym.absd_profile(model.w_alpha)(grid.xi)[None, :])
    M = sym.quantize_samples(grid, samples.astype(complex))
    return 0.5 * (M + np.conj(M.T))


# -- hypothesis checks -------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    elliptic: bool
    v_min: float
    v_max: float
    hermitian_defect: float
    order_gap: float
    passed: bool

    def describe(self) -> str:
        lines = [
            f"ellipticity: min V = {self.v_min:.6g}, max V = {self.v_max:.6g} "
            f"[{'ok' if self.elliptic else 'FAIL'}]",
            f"hermitian defect of assembly: {self.hermitian_defect:.3e}",
            f"perturbation order gap: {self.order_gap:.6g} "
            f"[{'ok' if self.order_gap > 0 else 'FAIL'}]",
            f"hypotheses: {'ok' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines)


def check_hypotheses(grid: TorusGrid, model: ModelSpec) -> HypothesisReport:
    vf = model.v.sample(grid)
    v_min, v_max = float(vf.min()), float(vf.max())
    elliptic = v_min > 0.0
    defect = sym.matrix_defect(assemble(grid, model))
    gap = model.eps_gap
    return HypothesisReport(elliptic, v_min, v_max, defect, gap,
                            elliptic and gap > 0.0 and defect < 1e-12)


# -- rank-1 phase embedding ---------------------------------------------------------

def _primitive(ell):
    g = 0
    for v in ell:
        g = gcd(g, abs(int(v)))
    if g == 0:
        return None
    reduced = tuple(int(v) // g for v in ell)
    for v in reduced:
        if v > 0:
            return reduced
        if v < 0:
            return tuple(-u for u in reduced)
    return reduced


@dataclass(frozen=True)
class ReductionSetup:
    """Grid and frequency data the reduction actually runs on."""

    grid: TorusGrid
    freq: FrequencyVector
    v_field: np.ndarray
    w_symbol: object
    embedding: dict


def rank1_direction(model: ModelSpec):
    """Primitive ell0 if every phi mode of the model is a multiple of it."""
    used = model.v.phi_modes_used() + model.w.phi_modes_used()
    if not used:
        return None
    base = _primitive(used[0])
    for ell in used:
        p = _primitive(ell)
        if p != base:
            return None
    return base


def _embed_field(spec: FieldSpec, ell0, grid: TorusGrid) -> np.ndarray:
    """Sample a rank-1 field on the single-angle grid, theta = ell0 . phi."""
    out = np.full(grid.phi_shape + (grid.n_x,), spec.const, dtype=float)
    theta = grid.phi_axis
    for t in spec.terms:
        if any(t.ell):
            m = _multiple(t.ell, ell0)
        else:
            m = 0
        out += (t.amp * np.cos(m * theta + t.phase_phi)[:, None]
                * np.cos(t.j * grid.x + t.phase_x)[None, :])
    return out


def _multiple(ell, ell0) -> int:
    for a, b in zip(ell, ell0):
        if b != 0:
            m = a // b
            break
    if tuple(m * v for v in ell0) != tuple(ell):
        m = -m
    if tuple(m * v for v in ell0) != tuple(ell):
        raise ValueError(f"{ell} is not a multiple of {ell0}")
    return m


def reduction_setup(model: ModelSpec) -> ReductionSetup:
    """Grid, frequency and fields for the reduction.

    Models whose phase dependence lives on one lattice line are folded onto a
    single fast angle theta = ell0 . phi with omega_eff = omega . ell0; the
    theta grid is oversampled by 2 so products stay resolved. Everything else
    runs on the full nu-torus.
    """
    # Conjugated matrices carry x-differences up to 2 xi_max; sampling at
    # 4 xi_max + 2 keeps matrix-to-symbol extraction alias-free throughout.
    n_x = 4 * model.xi_max + 2
    ell0 = rank1_direction(model)
    if ell0 is not None and model.nu > 1:
        n_theta = 2 * model.n_phi
        grid = TorusGrid(nu=1, n_phi=n_theta, xi_max=model.xi_max, n_x=n_x)
        omega_eff = float(np.dot(model.freq.omega, ell0))
        freq = FrequencyVector(np.array([omega_eff]), model.freq.gamma,
                               model.freq.tau)
        v_field = _embed_field(model.v, ell0, grid)
        w_field = _embed_field(model.w, ell0, grid)
        embedding = {"ell0": list(ell0), "omega_eff": omega_eff,
                     "n_theta": n_theta}
        w_sym = sym.SeparableSymbol(
            grid, ((w_field, sym.absd_profile(model.w_alpha)),),
            model.w_alpha) if (model.w.terms or model.w.const) else None
        return ReductionSetup(grid, freq, v_field, w_sym, embedding)
    grid = TorusGrid(nu=model.nu, n_phi=model.n_phi, xi_max=model.xi_max,
                     n_x=n_x)
    w_sym = sym.SeparableSymbol(
        grid, ((model.w.sample(grid), sym.absd_profile(model.w_alpha)),),
        model.w_alpha) if (model.w.terms or model.w.const) else None
    return ReductionSetup(grid, model.freq, model.v.sample(grid), w_sym, {})
