"""Symbols a(phi, x, xi) and their quantization on the banded torus grid.

A symbol acts on states by Op(a)u(x) = sum_xi a(phi, x, xi) u_hat(xi) e^{i xi x};
its matrix over the band is M[xi', xi] = a_hat(phi, xi' - xi, xi) where the hat
is the x-Fourier coefficient. Two storage forms are used:

  SeparableSymbol: sum of field(phi, x) (x) profile(xi) terms. Inputs and
      constructed generators live here; xi-derivatives are analytic.
  LatticeSymbol: dense samples over (phi grid, x grid, xi band). Everything
      extracted from matrices lives here; xi-derivatives use a centered
      5-point stencil (validity window shrinks accordingly).

Smooth cutoffs use a fixed bump-integral step. Transition bands ((1/2, 1) for
chi, (3/2, 2) for chi_one) contain no integers, so every lattice evaluation is
an exact plateau value, and xi-derivatives of cutoff factors are identically 0
at every lattice point. Half-line masks are sharp on the lattice:
chi_plus + chi_minus = 1 at every integer xi.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grids import TWO_PI, TorusGrid, FourierState, analyze

# -- smooth step --------------------------------------------------------------

_STEP_NODES = 8193


@lru_cache(maxsize=1)
def _step_table():
    """Cumulative Simpson integral of the standard bump, normalized to [0, 1]."""
    t = np.linspace(-1.0, 1.0, _STEP_NODES)
    inner = np.zeros_like(t)
    mask = np.abs(t) < 1.0
    inner[mask] = np.exp(-1.0 / (1.0 - t[mask] ** 2))
    h = t[1] - t[0]
    cum = np.zeros_like(t)
    # composite Simpson over node pairs, half-panel rule for the odd nodes
    f0, f1, f2 = inner[:-2:2], inner[1:-1:2], inner[2::2]
    left = h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2)
    right = h / 12.0 * (-f0 + 8.0 * f1 + 5.0 * f2)
    csum = np.concatenate(([0.0], np.cumsum(left + right)))
    cum[0::2] = csum
    cum[1::2] = csum[:-1] + left
    cum /= cum[-1]
    return t, cum


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, bump integral between."""
    t, cum = _step_table()
    u = np.asarray(u, dtype=float)
    return np.interp(2.0 * u - 1.0, t, cum, left=0.0, right=1.0)


def chi(xi: np.ndarray) -> np.ndarray:
    """Even cutoff: 0 for |xi| <= 1/2, 1 for |xi| >= 1."""
    return smooth_step(2.0 * (np.abs(np.asarray(xi, dtype=float)) - 0.5))


def chi_one(xi: np.ndarray) -> np.ndarray:
    """Even cutoff vanishing on a wider core: 0 for |xi| <= 3/2, 1 for |xi| >= 2."""
    return smooth_step(2.0 * (np.abs(np.asarray(xi, dtype=float)) - 1.5))


# chi_zero and chi_one share plateaus; the two names exist because the two
# reduction branches introduce them independently.
chi_zero = chi_one


# -- xi profiles --------------------------------------------------------------

class Profile:
    """Closed-form profile p(xi) with analytic derivatives where needed."""

    order: float

    def __call__(self, xi, deriv: int = 0) -> np.ndarray:
        raise NotImplementedError

    def derivative(self) -> "Profile":
        raise NotImplementedError

    def scaled(self, c: complex) -> "Profile":
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class BracketPoly(Profile):
    """sum over terms c * xi^p * (1 + xi^2)^q; closed under d/dxi.

    Covers constants, powers of xi, and bracket powers <xi>^m = (1+xi^2)^{m/2}.
    """

    terms: tuple  # of (c complex, p int >= 0, q float)

    @property
    def order(self) -> float:
        if not self.terms:
            return -np.inf
        return max(p + 2.0 * q for _, p, q in self.terms)

    def __call__(self, xi, deriv: int = 0):
        prof = self
        for _ in range(deriv):
            prof = prof.derivative()
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape, dtype=complex)
        base = 1.0 + xi * xi
        for c, p, q in prof.terms:
            out += c * xi**p * base**q
        return out

    def derivative(self) -> "BracketPoly":
        terms = []
        for c, p, q in self.terms:
            if p > 0:
                terms.append((c * p, p - 1, q))
            if q != 0.0:
                terms.append((2.0 * c * q, p + 1, q - 1.0))
        return BracketPoly(tuple(terms))

    def scaled(self, c: complex) -> "BracketPoly":
        return BracketPoly(tuple((c * t[0], t[1], t[2]) for t in self.terms))

    def to_dict(self) -> dict:
        return {
            "kind": "bracket_poly",
            "terms": [[complex(c).real, complex(c).imag, int(p), float(q)]
                      for c, p, q in self.terms],
        }


def bracket_power(m: float, coeff: complex = 1.0) -> BracketPoly:
    """<xi>^m."""
    return BracketPoly(((coeff, 0, m / 2.0),))


def const_profile(c: complex = 1.0) -> BracketPoly:
    return BracketPoly(((c, 0, 0.0),))


def xi_poly(coeffs) -> BracketPoly:
    """Polynomial sum_k coeffs[k] xi^k."""
    return BracketPoly(tuple((c, k, 0.0) for k, c in enumerate(coeffs) if c != 0))


_CUT_FUNS = {"none": lambda xi: 1.0, "chi": chi, "chi_one": chi_one}


@dataclass(frozen=True)
class AbsPowerChi(Profile):
    """coeff * |xi|^alpha * sign(xi)^odd * cutoff(xi).

    Derivatives use the falling-factorial rule on the |xi|-power and treat the
    cutoff factor as locally constant; exact on cutoff plateaus, hence at every
    integer xi. Negative alpha or an odd sign factor requires a cutoff so the
    core |xi| <= 1/2 evaluates to an exact 0.
    """

    coeff: complex
    alpha: float
    odd: bool = False
    cutoff: str = "chi"

    def __post_init__(self):
        if self.cutoff not in _CUT_FUNS:
            raise ValueError(f"unknown cutoff tag {self.cutoff!r}")
        if self.cutoff == "none" and (self.alpha < 0 or self.odd):
            raise ValueError("singular profile at xi = 0 requires a cutoff")

    @property
    def order(self) -> float:
        return self.alpha

    def __call__(self, xi, deriv: int = 0):
        xi = np.asarray(xi, dtype=float)
        c = self.coeff
        a = self.alpha
        for _ in range(deriv):
            c, a = c * a, a - 1.0
        odd = self.odd ^ (deriv % 2 == 1)
        az = np.abs(xi)
        pos = az > 0
        mag = np.zeros(xi.shape, dtype=float)
        mag[pos] = az[pos] ** a
        if a == 0.0:
            mag[~pos] = 1.0 if deriv == 0 else 0.0
        out = c * mag
        if odd:
            out = out * np.sign(xi)
        cut = _CUT_FUNS[self.cutoff](xi)
        return np.asarray(out * cut, dtype=complex)

    def derivative(self) -> Profile:
        if self.alpha == 0.0:
            return BracketPoly(())
        return AbsPowerChi(self.coeff * self.alpha, self.alpha - 1.0,
                           not self.odd, self.cutoff)

    def scaled(self, c: complex) -> "AbsPowerChi":
        return AbsPowerChi(self.coeff * c, self.alpha, self.odd, self.cutoff)

    def to_dict(self) -> dict:
        return {
            "kind": "abs_power_chi",
            "coeff": [complex(self.coeff).real, complex(self.coeff).imag],
            "alpha": self.alpha,
            "odd": bool(self.odd),
            "cutoff": self.cutoff,
        }


@dataclass(frozen=True)
class HalfLineMask(Profile):
    """Sharp or cutoff half-line masks on the lattice.

    kind "plus": 1 for xi >= 0; "minus": 1 for xi < 0 (so plus + minus = 1 at
    every integer). kind "one_plus"/"one_minus": chi_one times the open
    half-line, i.e. 1 exactly for xi >= 2 / xi <= -2 on the lattice.
    """

    kind: str
    coeff: complex = 1.0

    def __post_init__(self):
        if self.kind not in ("plus", "minus", "one_plus", "one_minus"):
            raise ValueError(f"unknown mask kind {self.kind!r}")

    @property
    def order(self) -> float:
        return 0.0

    def __call__(self, xi, deriv: int = 0):
        xi = np.asarray(xi, dtype=float)
        if deriv > 0:
            return np.zeros(xi.shape, dtype=complex)
        if self.kind == "plus":
            v = (xi >= 0).astype(float)
        elif self.kind == "minus":
            v = (xi < 0).astype(float)
        elif self.kind == "one_plus":
            v = chi_one(xi) * (xi > 0)
        else:
            v = chi_one(xi) * (xi < 0)
        return np.asarray(self.coeff * v, dtype=complex)

    def derivative(self) -> Profile:
        return BracketPoly(())

    def scaled(self, c: complex) -> "HalfLineMask":
        return HalfLineMask(self.kind, self.coeff * c)

    def to_dict(self) -> dict:
        return {"kind": "half_line",
                "half": self.kind,
                "coeff": [complex(self.coeff).real, complex(self.coeff).imag]}


def profile_from_dict(d: dict) -> Profile:
    kind = d["kind"]
    if kind == "bracket_poly":
        return BracketPoly(tuple((complex(re, im), int(p), float(q))
                                 for re, im, p, q in d["terms"]))
    if kind == "abs_power_chi":
        re, im = d["coeff"]
        return AbsPowerChi(complex(re, im), float(d["alpha"]),
                           bool(d["odd"]), d["cutoff"])
    if kind == "half_line":
        re, im = d["coeff"]
        return HalfLineMask(d["half"], complex(re, im))
    raise ValueError(f"unknown profile kind {kind!r}")


def absd_profile(alpha: float, coeff: complex = 1.0) -> AbsPowerChi:
    """Symbol of |D|^alpha = Op(|xi|^alpha chi(xi))."""
    return AbsPowerChi(coeff, alpha, odd=False, cutoff="chi")


def hilbert_profile() -> AbsPowerChi:
    """Symbol of the smoothed Hilbert transform, -i sign(xi) chi(xi)."""
    return AbsPowerChi(-1j, 0.0, odd=True, cutoff="chi")


# -- symbol containers --------------------------------------------------------

@dataclass(frozen=True)
class SeparableSymbol:
    """Finite sum of field(phi, x) (x) profile(xi) terms."""

    grid: TorusGrid
    terms: tuple  # of (ndarray phi_shape + (n_x,), Profile)
    order: float = None  # type: ignore[assignment]

    def __post_init__(self):
        want = self.grid.phi_shape + (self.grid.n_x,)
        for f, p in self.terms:
            if np.asarray(f).shape != want:
                raise ValueError(
                    f"field has shape {np.asarray(f).shape}, expected {want}"
                )
        if self.order is None:
            o = max((p.order for _, p in self.terms), default=-np.inf)
            object.__setattr__(self, "order", o)

    @property
    def xi_valid(self):
        g = self.grid
        return (-g.xi_max, g.xi_max)


@dataclass(frozen=True)
class LatticeSymbol:
    """Dense samples a[phi..., x, xi] over the grid and band."""

    grid: TorusGrid
    samples: np.ndarray
    order: float
    xi_valid: tuple = None  # type: ignore[assignment]

    def __post_init__(self):
        want = self.grid.phi_shape + (self.grid.n_x, self.grid.n_band)
        s = np.asarray(self.samples, dtype=complex)
        if s.shape != want:
            raise ValueError(f"samples have shape {s.shape}, expected {want}")
        object.__setattr__(self, "samples", s)
        if self.xi_valid is None:
            object.__setattr__(self, "xi_valid", (-self.grid.xi_max, self.grid.xi_max))


Symbol = (SeparableSymbol, LatticeSymbol)


def to_lattice(a) -> LatticeSymbol:
    if isinstance(a, LatticeSymbol):
        return a
    g = a.grid
    out = np.zeros(g.phi_shape + (g.n_x, g.n_band), dtype=complex)
    for f, p in a.terms:
        out += np.asarray(f)[..., :, None] * p(g.xi)[None, :]
    return LatticeSymbol(g, out, a.order)


def lattice_from_profile(grid: TorusGrid, prof: Profile) -> LatticeSymbol:
    out = np.broadcast_to(prof(grid.xi)[None, :],
                          grid.phi_shape + (grid.n_x, grid.n_band)).copy()
    return LatticeSymbol(grid, out, prof.order)


# -- quantization -------------------------------------------------------------

def _phase_matrix(grid: TorusGrid) -> np.ndarray:
    return np.exp(1j * grid.x[:, None] * grid.xi[None, :])


def to_matrix(a, phi_idx=None) -> np.ndarray:
    """Band matrix M[xi', xi] = a_hat(phi, xi' - xi, xi) at one phi node.

    phi_idx is a tuple of length nu indexing the phi grid; None quantizes the
    whole family at once (leading axes = phi grid).
    """
    g = a.grid
    if isinstance(a, SeparableSymbol):
        shape = (() if phi_idx is not None else g.phi_shape) + (g.n_band, g.n_band)
        M = np.zeros(shape, dtype=complex)
        for f, p in a.terms:
            fsl = f[tuple(phi_idx)] if phi_idx is not None else f
            fhat = np.fft.fft(fsl, axis=-1) / g.n_x
            T = fhat[..., g.gather_index]
            M += T * p(g.xi)[None, :]
        return M
    samples = a.samples[tuple(phi_idx)] if phi_idx is not None else a.samples
    return quantize_samples(g, samples)


def quantize_samples(grid: TorusGrid, samples: np.ndarray) -> np.ndarray:
    """Band matrix from bare symbol samples with shape (..., n_x, n_band)."""
    rows = np.arange(grid.n_band)[None, :]
    ahat = np.fft.fft(samples, axis=-2) / grid.n_x
    return ahat[..., grid.gather_index, rows]


def from_matrix(grid: TorusGrid, M: np.ndarray, order: float) -> LatticeSymbol:
    """Symbol samples from a band matrix (family); inverse of to_matrix.

    Each column xi keeps the x-mode window the band supports,
    xi' - xi in [-xi_max - xi, xi_max - xi]; that window is what any band
    operator can carry, so the round trip through to_matrix is exact.
    """
    M = np.asarray(M, dtype=complex)
    want = grid.phi_shape + (grid.n_band, grid.n_band)
    single = M.shape == (grid.n_band, grid.n_band)
    if not single and M.shape != want:
        raise ValueError(f"matrix family has shape {M.shape}, expected {want}")
    fam = M[None] if single else M
    lead = fam.shape[:-2]
    ahat = np.zeros(lead + (grid.n_x, grid.n_band), dtype=complex)
    rows = np.arange(grid.n_band)[None, :]
    ahat[..., grid.gather_index, rows] = fam
    samples = np.fft.ifft(ahat, axis=-2) * grid.n_x
    if single:
        samples = np.broadcast_to(samples[0],
                                  grid.phi_shape + (grid.n_x, grid.n_band)).copy()
    return LatticeSymbol(grid, samples, order)


def op_apply(a, state: FourierState, phi_idx) -> FourierState:
    """Apply Op(a) at one phi node directly from samples.

    Matches the to_matrix action to machine precision: both implement the same
    modular gather of x modes.
    """
    g = a.grid
    E = _phase_matrix(g)
    if isinstance(a, SeparableSymbol):
        w = np.zeros(g.n_x, dtype=complex)
        for f, p in a.terms:
            fx = f[tuple(phi_idx)]
            w += fx * (E @ (p(g.xi) * state.coeffs))
    else:
        w = np.einsum("xk,xk->x", a.samples[tuple(phi_idx)], E * state.coeffs[None, :])
    return analyze(g, w)


def mult_matrix(grid: TorusGrid, field: np.ndarray, phi_idx=None) -> np.ndarray:
    """Matrix of multiplication by field(phi, x) (an order-0 symbol)."""
    fsl = field[tuple(phi_idx)] if phi_idx is not None else field
    fhat = np.fft.fft(fsl, axis=-1) / grid.n_x
    return fhat[..., grid.gather_index]


def diag_matrix(grid: TorusGrid, prof: Profile) -> np.ndarray:
    return np.diag(prof(grid.xi))


def projector_matrix(grid: TorusGrid, side: int) -> np.ndarray:
    """Sharp half-line projector: side +1 keeps xi >= 0, side -1 keeps xi < 0."""
    mask = (grid.xi >= 0) if side > 0 else (grid.xi < 0)
    return np.diag(mask.astype(complex))


# -- calculus -----------------------------------------------------------------

def x_derivative(a, power: int = 1):
    """Spectral d/dx, preserving representation kind."""
    if isinstance(a, SeparableSymbol):
        g = a.grid
        terms = []
        for f, p in a.terms:
            modes = np.fft.fft(f, axis=-1) * (1j * g.x_modes) ** power
            df = np.fft.ifft(modes, axis=-1)
            terms.append((df.real if np.isrealobj(f) else df, p))
        return SeparableSymbol(g, tuple(terms), a.order)
    g = a.grid
    modes = np.fft.fft(a.samples, axis=-2)
    modes *= ((1j * g.x_modes) ** power)[:, None]
    return LatticeSymbol(g, np.fft.ifft(modes, axis=-2), a.order, a.xi_valid)


_FD5 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def xi_derivative(a, power: int = 1):
    """d/dxi: analytic on separable profiles, 5-point stencil on lattice data.

    Each stencil application shrinks the validity window by 2; edge entries
    are zero-filled and excluded from xi_valid.
    """
    if isinstance(a, SeparableSymbol):
        terms = a.terms
        for _ in range(power):
            terms = tuple((f, p.derivative()) for f, p in terms)
        order = max((p.order for _, p in terms), default=-np.inf)
        return SeparableSymbol(a.grid, terms, order)
    g = a.grid
    s = a.samples
    lo, hi = a.xi_valid
    for _ in range(power):
        if g.n_band < 5:
            raise ValueError("xi band too narrow for the 5-point stencil")
        d = np.zeros_like(s)
        core = sum(c * s[..., 2 + k - 2: g.n_band - 2 + k - 2]
                   for k, c in enumerate(_FD5) if c != 0.0)
        d[..., 2:-2] = core
        s = d
        lo, hi = lo + 2, hi - 2
    if lo > hi:
        raise ValueError("xi validity window exhausted by stencil applications")
    return LatticeSymbol(g, s, a.order - power, (lo, hi))


def lattice_mul(a, b) -> LatticeSymbol:
    la, lb = to_lattice(a), to_lattice(b)
    lo = max(la.xi_valid[0], lb.xi_valid[0])
    hi = min(la.xi_valid[1], lb.xi_valid[1])
    return LatticeSymbol(la.grid, la.samples * lb.samples, la.order + lb.order, (lo, hi))


def symbol_sum(*syms) -> LatticeSymbol:
    ls = [to_lattice(s) for s in syms]
    g = ls[0].grid
    out = sum(s.samples for s in ls)
    lo = max(s.xi_valid[0] for s in ls)
    hi = min(s.xi_valid[1] for s in ls)
    return LatticeSymbol(g, out, max(s.order for s in ls), (lo, hi))


def scale_symbol(a, c: complex):
    if isinstance(a, SeparableSymbol):
        return SeparableSymbol(a.grid, tuple((f, p.scaled(c)) for f, p in a.terms), a.order)
    return LatticeSymbol(a.grid, c * a.samples, a.order, a.xi_valid)


def compose_expansion(a, b, n_terms: int) -> LatticeSymbol:
    """Asymptotic symbol of Op(a) Op(b):

        sum_{beta < n_terms} (1 / (i^beta beta!)) d_xi^beta a . d_x^beta b

    The neglected part has order order(a) + order(b) - n_terms.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    out = None
    fact = 1.0
    for beta in range(n_terms):
        if beta > 0:
            fact *= beta
        coef = (-1j) ** beta / fact
        term = lattice_mul(
            xi_derivative(a, beta) if beta else a,
            x_derivative(b, beta) if beta else b,
        )
        term = scale_symbol(term, coef)
        out = term if out is None else symbol_sum(out, term)
    return LatticeSymbol(out.grid, out.samples, a.order + b.order, out.xi_valid)


def adjoint_expansion(a, n_terms: int) -> LatticeSymbol:
    """Asymptotic symbol of Op(a)^*:

        sum_{alpha < n_terms} (1 / (i^alpha alpha!)) conj(d_x^alpha d_xi^alpha a)
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    out = None
    fact = 1.0
    for alpha in range(n_terms):
        if alpha > 0:
            fact *= alpha
        coef = (-1j) ** alpha / fact
        term = a
        if alpha:
            term = xi_derivative(term, alpha)
            term = x_derivative(term, alpha)
        tl = to_lattice(term)
        tl = LatticeSymbol(tl.grid, coef * np.conj(tl.samples), tl.order, tl.xi_valid)
        out = tl if out is None else symbol_sum(out, tl)
    return LatticeSymbol(out.grid, out.samples, a.order, out.xi_valid)


def adjoint_exact(a) -> LatticeSymbol:
    """Exact adjoint symbol via the matrix route: Op(a*) = Op(a)^H."""
    g = a.grid
    M = to_matrix(a)
    MH = np.conj(np.swapaxes(M, -1, -2))
    return from_matrix(g, MH, a.order)


def poisson_bracket(a, b) -> LatticeSymbol:
    """{a, b} = d_xi a d_x b - d_x a d_xi b; order(a) + order(b) - 1."""
    t1 = lattice_mul(xi_derivative(a), x_derivative(b))
    t2 = lattice_mul(x_derivative(a), xi_derivative(b))
    s = t1.samples - t2.samples
    lo = max(t1.xi_valid[0], t2.xi_valid[0])
    hi = min(t1.xi_valid[1], t2.xi_valid[1])
    return LatticeSymbol(t1.grid, s, a.order + b.order - 1.0, (lo, hi))


# -- diagnostics --------------------------------------------------------------

def self_adjoint_defect(a) -> float:
    """max over the phi grid of the largest entry of M(phi) - M(phi)^H."""
    g = a.grid
    worst = 0.0
    for idx in np.ndindex(g.phi_shape):
        M = to_matrix(a, idx)
        worst = max(worst, float(np.abs(M - M.conj().T).max()))
    return worst


def matrix_defect(M_family: np.ndarray) -> float:
    MH = np.conj(np.swapaxes(M_family, -1, -2))
    return float(np.abs(M_family - MH).max())


def symmetrize(M_family: np.ndarray) -> np.ndarray:
    return 0.5 * (M_family + np.conj(np.swapaxes(M_family, -1, -2)))


def amplitude_by_xi(a) -> np.ndarray:
    """max over (phi, x) of |a| per xi column."""
    la = to_lattice(a)
    flat = la.samples.reshape(-1, la.grid.n_band)
    return np.abs(flat).max(axis=0)


def decay_slope(grid: TorusGrid, amps: np.ndarray, window=None) -> float:
    """LSQ slope of log max-amplitude against log <xi> over a symmetric window.

    Columns +r and -r are combined by max. Amplitudes at machine zero are
    clipped; an all-zero window reports -inf (faster than any power).
    """
    if window is None:
        window = (grid.xi_max // 4, grid.xi_max // 2)
    lo, hi = window
    rs = np.arange(lo, hi + 1)
    c = grid.xi_max
    vals = np.maximum(amps[c + rs], amps[c - rs])
    if np.all(vals < 1e-250):
        return -np.inf
    vals = np.clip(vals, 1e-250, None)
    lx = np.log(np.sqrt(1.0 + rs.astype(float) ** 2))
    ly = np.log(vals)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    sol, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(sol[0])


def offblock_coupling(grid: TorusGrid, M_family: np.ndarray):
    """Coupling profile between the xi >= 0 and xi < 0 blocks of a matrix family.

    c(r) = max |M[xi', xi]| over entries with sign(xi') != sign(xi) and
    max(|xi'|, |xi|) = r (xi = 0 counts as the plus block). Returns (r, c).
    """
    fam = M_family.reshape(-1, grid.n_band, grid.n_band)
    absM = np.abs(fam).max(axis=0)
    xi = grid.xi
    plus_r = xi[:, None] >= 0
    plus_c = xi[None, :] >= 0
    off = plus_r ^ plus_c
    rad = np.maximum(np.abs(xi)[:, None], np.abs(xi)[None, :])
    rs = np.arange(1, grid.xi_max + 1)
    c = np.zeros(rs.shape)
    for i, r in enumerate(rs):
        sel = off & (rad == r)
        c[i] = absM[sel].max() if sel.any() else 0.0
    return rs, c


def coupling_slope(grid: TorusGrid, M_family: np.ndarray, window=None) -> float:
    rs, c = offblock_coupling(grid, M_family)
    if window is None:
        window = (grid.xi_max // 4, grid.xi_max // 2)
    lo, hi = window
    sel = (rs >= lo) & (rs <= hi)
    vals = c[sel]
    if np.all(vals < 1e-250):
        return -np.inf
    vals = np.clip(vals, 1e-250, None)
    lx = np.log(np.sqrt(1.0 + rs[sel].astype(float) ** 2))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    sol, *_ = np.linalg.lstsq(A, np.log(vals), rcond=None)
    return float(sol[0])


# -- random symbols for tests -------------------------------------------------

def random_field(grid: TorusGrid, rng: np.random.Generator,
                 phi_band: int = 1, x_band: int = 2) -> np.ndarray:
    """Real random trig polynomial on T^nu x T with the given mode budgets."""
    mesh = grid.phi_mesh()
    x = grid.x
    out = np.zeros(grid.phi_shape + (grid.n_x,))
    n_terms = 3
    for _ in range(n_terms):
        ell = rng.integers(-phi_band, phi_band + 1, size=grid.nu)
        j = int(rng.integers(0, x_band + 1))
        amp = float(rng.normal()) / n_terms
        ph_p = float(rng.uniform(0, TWO_PI))
        ph_x = float(rng.uniform(0, TWO_PI))
        phase = sum(int(l) * m for l, m in zip(ell, mesh))
        out += amp * np.cos(phase + ph_p)[..., None] * np.cos(j * x + ph_x)[None, :]
    return out


def random_symbol(grid: TorusGrid, rng: np.random.Generator, order: float,
                  phi_band: int = 1, x_band: int = 2,
                  rich: bool = True) -> SeparableSymbol:
    """Random band-limited symbol of the given order.

    With rich=True the profile is <xi>^m + xi <xi>^{m-1} / 2, which has
    non-vanishing xi-derivatives of every order; a plain bracket power at
    m = 0 would be xi-constant and degenerate for expansion tests.
    """
    f = random_field(grid, rng, phi_band, x_band)
    if rich:
        prof = BracketPoly(((1.0, 0, order / 2.0),
                            (0.5, 1, (order - 1.0) / 2.0)))
    else:
        prof = bracket_power(order)
    return SeparableSymbol(grid, ((f, prof),), order)
