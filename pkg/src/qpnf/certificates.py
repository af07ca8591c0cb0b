"""Serializable reduction certificates.

A reduction run is captured as a step ledger: each conjugation is stored by the
data that rebuilds it (a generator symbol for exponential frames, a forward
displacement for weighted compositions), never by its matrices. Arrays are
stored as sparse Fourier modes with a relative threshold, so certificates stay
small and replay is deterministic to roundoff.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .grids import TorusGrid, eval_at_phi
from . import symbols as sym
from .flows import (composition_map, exp_conjugate, exp_unitary, glue_frames,
                    invert_diffeo, pushforward, split_conjugate,
                    weighted_composition)

SPARSE_THRESHOLD = 1e-14
FORMAT_TAG = "qpnf-cert-1"


# -- canonical JSON and hashing -------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def config_hash(obj) -> str:
    """sha256 of the canonical JSON form; stable across dict ordering."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


# -- sparse array codec ----------------------------------------------------------

def encode_modes(arr: np.ndarray, mode_axes: tuple,
                 threshold: float = SPARSE_THRESHOLD) -> dict:
    """Sparse Fourier-mode form of an array.

    mode_axes are transformed; remaining axes stay pointwise (the xi axis of
    symbol samples is smooth but not periodic, so it is kept dense). Entries
    below threshold * max are dropped.
    """
    arr = np.asarray(arr)
    real = not np.iscomplexobj(arr)
    n = 1
    for a in mode_axes:
        n *= arr.shape[a]
    modes = np.fft.fftn(arr, axes=mode_axes) / n
    flat = modes.ravel()
    mx = np.abs(flat).max()
    if mx == 0.0:
        keep = np.zeros(0, dtype=int)
    else:
        keep = np.nonzero(np.abs(flat) > threshold * mx)[0]
    vals = flat[keep]
    return {
        "shape": [int(s) for s in arr.shape],
        "mode_axes": [int(a) for a in mode_axes],
        "real": real,
        "idx": keep.tolist(),
        "re": vals.real.tolist(),
        "im": vals.imag.tolist(),
    }


def decode_modes(d: dict) -> np.ndarray:
    shape = tuple(d["shape"])
    mode_axes = tuple(d["mode_axes"])
    modes = np.zeros(shape, dtype=complex)
    flat = modes.ravel()
    idx = np.asarray(d["idx"], dtype=int)
    if idx.size:
        flat[idx] = np.asarray(d["re"]) + 1j * np.asarray(d["im"])
    modes = flat.reshape(shape)
    n = 1
    for a in mode_axes:
        n *= shape[a]
    arr = np.fft.ifftn(modes, axes=mode_axes) * n
    return arr.real if d["real"] else arr


def encode_field(field_arr: np.ndarray) -> dict:
    """Field on the (phi..., x) lattice: all axes are mode axes."""
    return encode_modes(field_arr, tuple(range(np.asarray(field_arr).ndim)))


def encode_symbol(a) -> dict:
    if isinstance(a, sym.SeparableSymbol):
        return {"type": "separable", "order": a.order,
                "terms": [{"field": encode_field(f), "profile": p.to_dict()}
                          for f, p in a.terms]}
    mode_axes = tuple(range(a.samples.ndim - 1))
    return {"type": "lattice", "order": a.order,
            "samples": encode_modes(a.samples, mode_axes)}


def decode_symbol(grid: TorusGrid, d: dict):
    if d["type"] == "separable":
        terms = tuple((decode_modes(t["field"]),
                       sym.profile_from_dict(t["profile"]))
                      for t in d["terms"])
        return sym.SeparableSymbol(grid, terms, d["order"])
    return sym.LatticeSymbol(grid, decode_modes(d["samples"]), d["order"])


# -- step ledger -----------------------------------------------------------------

@dataclass
class StepRecord:
    """One conjugation of the reduction chain.

    kind "exp": frame Phi = exp(i G), G = Op(g) + Op(g)^H for the stored
    symbol g. kind "compose": weighted composition of the stored forward
    displacement; the inverse frame is rebuilt by inverting the diffeo.

    The split kinds carry one payload per half line and rebuild the frame
    glued across the sign of the frequency: "split-compose" stores the
    forward displacements of both branches, "split-exp" both generator
    symbols. The plus payload lives in symbol/alpha, the minus payload in
    the _minus twin.
    """

    kind: str
    name: str
    symbol: object = None
    alpha: np.ndarray = None
    branch: str = ""
    symbol_minus: object = None
    alpha_minus: np.ndarray = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name, "branch": self.branch}
        if self.kind == "exp":
            d["symbol"] = encode_symbol(self.symbol)
        elif self.kind == "compose":
            d["alpha"] = encode_field(self.alpha)
        elif self.kind == "split-exp":
            d["symbol"] = encode_symbol(self.symbol)
            d["symbol_minus"] = encode_symbol(self.symbol_minus)
        elif self.kind == "split-compose":
            d["alpha"] = encode_field(self.alpha)
            d["alpha_minus"] = encode_field(self.alpha_minus)
        else:
            raise ValueError(f"unknown step kind {self.kind!r}")
        return d

    @classmethod
    def from_dict(cls, grid: TorusGrid, d: dict) -> "StepRecord":
        kind = d["kind"]
        if kind == "exp":
            return cls("exp", d["name"], symbol=decode_symbol(grid, d["symbol"]),
                       branch=d.get("branch", ""))
        if kind == "compose":
            return cls("compose", d["name"], alpha=decode_modes(d["alpha"]),
                       branch=d.get("branch", ""))
        if kind == "split-exp":
            return cls("split-exp", d["name"],
                       symbol=decode_symbol(grid, d["symbol"]),
                       symbol_minus=decode_symbol(grid, d["symbol_minus"]),
                       branch=d.get("branch", ""))
        if kind == "split-compose":
            return cls("split-compose", d["name"],
                       alpha=decode_modes(d["alpha"]),
                       alpha_minus=decode_modes(d["alpha_minus"]),
                       branch=d.get("branch", ""))
        raise ValueError(f"unknown step kind {kind!r}")


def exp_generator(grid: TorusGrid, g) -> np.ndarray:
    """Hermitian generator Op(g) + Op(g)^H of an exponential frame."""
    M = sym.to_matrix(g)
    return M + np.conj(np.swapaxes(M, -1, -2))


def step_apply(grid: TorusGrid, V: np.ndarray, rec: StepRecord,
               omega: np.ndarray) -> np.ndarray:
    """Push V through one recorded frame, derivative term included."""
    if rec.kind == "exp":
        G = exp_generator(grid, rec.symbol)
        Vn, _ = exp_conjugate(grid, V, G, omega)
        return Vn
    if rec.kind == "compose":
        cm = composition_map(grid, rec.alpha)
        return pushforward(grid, V, cm.forward, cm.inverse, omega)
    if rec.kind == "split-exp":
        Vn, *_ = split_conjugate(grid, V, exp_generator(grid, rec.symbol),
                                 exp_generator(grid, rec.symbol_minus), omega)
        return Vn
    F, Finv = step_frames(grid, rec)
    return pushforward(grid, V, F, Finv, omega)


def step_frames(grid: TorusGrid, rec: StepRecord):
    """(forward, inverse) frame families of a recorded step on the phi lattice."""
    if rec.kind == "exp":
        Phi = exp_unitary(exp_generator(grid, rec.symbol))
        return Phi, np.conj(np.swapaxes(Phi, -1, -2))
    if rec.kind == "compose":
        cm = composition_map(grid, rec.alpha)
        return cm.forward, cm.inverse
    if rec.kind == "split-exp":
        Phi_p = exp_unitary(exp_generator(grid, rec.symbol))
        Phi_m = exp_unitary(exp_generator(grid, rec.symbol_minus))
        return glue_frames(grid, Phi_p, np.conj(np.swapaxes(Phi_p, -1, -2)),
                           Phi_m, np.conj(np.swapaxes(Phi_m, -1, -2)))
    cmp_ = composition_map(grid, rec.alpha)
    cmm = composition_map(grid, rec.alpha_minus)
    return glue_frames(grid, cmp_.forward, cmp_.inverse,
                       cmm.forward, cmm.inverse)


def _point_exp_frame(grid: TorusGrid, g, phi: np.ndarray) -> np.ndarray:
    la = sym.to_lattice(g)
    samples = eval_at_phi(grid, la.samples, phi)
    M = sym.quantize_samples(grid, samples)
    return exp_unitary(M + np.conj(M.T))


def _point_compose_frames(grid: TorusGrid, alpha: np.ndarray, phi: np.ndarray):
    a_phi = eval_at_phi(grid, alpha, phi)
    fwd = weighted_composition(grid, a_phi)
    inv = weighted_composition(grid, invert_diffeo(grid, a_phi))
    return fwd, inv


def step_frames_at_phi(grid: TorusGrid, rec: StepRecord, phi: np.ndarray):
    """(forward, inverse) frames of one step at an arbitrary phase point.

    Exact because every stored object is band limited on the phi lattice.
    """
    if rec.kind == "exp":
        Phi = _point_exp_frame(grid, rec.symbol, phi)
        return Phi, np.conj(Phi.T)
    if rec.kind == "compose":
        return _point_compose_frames(grid, rec.alpha, phi)
    if rec.kind == "split-exp":
        Phi_p = _point_exp_frame(grid, rec.symbol, phi)
        Phi_m = _point_exp_frame(grid, rec.symbol_minus, phi)
        return glue_frames(grid, Phi_p, np.conj(Phi_p.T),
                           Phi_m, np.conj(Phi_m.T))
    fwd_p, inv_p = _point_compose_frames(grid, rec.alpha, phi)
    fwd_m, inv_m = _point_compose_frames(grid, rec.alpha_minus, phi)
    return glue_frames(grid, fwd_p, inv_p, fwd_m, inv_m)


def chain_at_phi(cert, phi: np.ndarray):
    """Accumulated (forward, inverse) conjugation frames at one phase point.

    forward maps the original variable to the reduced one, v = F u; folded
    certificates are evaluated at the fast angle theta = ell0 . phi.
    """
    g = cert.grid
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if cert.embedding:
        ell0 = np.asarray(cert.embedding["ell0"], dtype=float)
        phi = np.array([float(np.dot(ell0, phi))])
    F = np.eye(g.n_band, dtype=complex)
    Finv = np.eye(g.n_band, dtype=complex)
    for rec in cert.steps:
        f, fi = step_frames_at_phi(g, rec, phi)
        F = f @ F
        Finv = Finv @ fi
    return F, Finv


# -- certificates ----------------------------------------------------------------

@dataclass
class Certificate:
    """Everything needed to rebuild and check one reduction run."""

    kind: str
    config: dict
    grid: TorusGrid
    omega: np.ndarray
    lam: object
    mu: object
    steps: list
    diagnostics: dict = field(default_factory=dict)
    embedding: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        if isinstance(self.lam, dict):
            lam = {k: float(v) for k, v in self.lam.items()}
        else:
            lam = float(self.lam)
        if isinstance(self.mu, dict):
            mu = {k: np.asarray(v).real.tolist() for k, v in self.mu.items()}
        else:
            mu = np.asarray(self.mu).real.tolist()
        return {
            "format": FORMAT_TAG,
            "kind": self.kind,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "grid": {"nu": self.grid.nu, "n_phi": self.grid.n_phi,
                     "xi_max": self.grid.xi_max, "n_x": self.grid.n_x},
            "omega": [float(w) for w in np.atleast_1d(self.omega)],
            "lam": lam,
            "mu": mu,
            "steps": [s.to_dict() for s in self.steps],
            "diagnostics": self.diagnostics,
            "embedding": self.embedding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        if d.get("format") != FORMAT_TAG:
            raise ValueError(f"unrecognized certificate format {d.get('format')!r}")
        gd = d["grid"]
        grid = TorusGrid(nu=gd["nu"], n_phi=gd["n_phi"], xi_max=gd["xi_max"],
                         n_x=gd["n_x"])
        mu = d["mu"]
        if isinstance(mu, dict):
            mu = {k: np.asarray(v) for k, v in mu.items()}
        else:
            mu = np.asarray(mu)
        steps = [StepRecord.from_dict(grid, s) for s in d["steps"]]
        return cls(d["kind"], d["config"], grid, np.asarray(d["omega"]),
                   d["lam"], mu, steps, d.get("diagnostics", {}),
                   d.get("embedding", {}))


def save_certificate(path: str, cert: Certificate) -> None:
    with open(path, "w") as fh:
        json.dump(cert.to_dict(), fh)


def load_certificate(path: str) -> Certificate:
    with open(path) as fh:
        return Certificate.from_dict(json.load(fh))


def replay(cert: Certificate, V0: np.ndarray) -> np.ndarray:
    """Reapply the recorded chain to V0 (single-chain certificates)."""
    V = V0
    for rec in cert.steps:
        V = step_apply(cert.grid, V, rec, cert.omega)
    return V
