"""Resonance checks and inverse divisors for quasi-periodic averaging.

All inversions act in Fourier space on fields or lattice symbols, return the
minimal-norm solution (the kernel component is set exactly to zero), and fail
with a structured SmallDivisorError naming the offending mode when a divisor
falls below the hard floor.

check_diophantine weights |omega . ell| by the Euclidean |ell|^tau;
check_melnikov weights |omega . ell + lambda j| by <ell>^tau. A margin >= 1
means the constant gamma is honest for every scanned mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import TorusGrid
from .symbols import LatticeSymbol, SeparableSymbol, to_lattice

DIVISOR_FLOOR = 1e-14


class SmallDivisorError(ValueError):
    """A divisor below the hard floor; carries the resonant mode."""

    def __init__(self, ell, j, value):
        self.ell = tuple(int(v) for v in np.atleast_1d(ell))
        self.j = None if j is None else int(j)
        self.value = float(value)
        mode = f"ell = {self.ell}" if self.j is None else f"(ell, j) = ({self.ell}, {self.j})"
        super().__init__(f"divisor {value:.3e} below floor {DIVISOR_FLOOR:.0e} at {mode}")


@dataclass(frozen=True)
class FrequencyVector:
    """Frequency data (omega, gamma, tau) with the admissibility box enforced."""

    omega: np.ndarray
    gamma: float
    tau: float

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "omega", om)
        if om.ndim != 1 or om.size < 1:
            raise ValueError("omega must be a nonempty vector")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.tau > om.size - 1:
            raise ValueError(f"tau must exceed nu - 1 = {om.size - 1}, got {self.tau}")

    @property
    def nu(self) -> int:
        return self.omega.size


@dataclass(frozen=True)
class ResonanceReport:
    """Outcome of a lattice scan: worst margin and where it occurs."""

    passed: bool
    margin: float
    worst_ell: tuple
    worst_j: int | None
    scan_bound: int
    j_bound: int | None = None

    def describe(self) -> str:
        where = f"ell = {self.worst_ell}"
        if self.worst_j is not None:
            where += f", j = {self.worst_j}"
        verdict = "pass" if self.passed else "FAIL"
        return f"{verdict}: margin {self.margin:.4f} at {where} (|ell| <= {self.scan_bound})"


def _ell_lattice(nu: int, L: int):
    r = np.arange(-L, L + 1)
    mesh = np.meshgrid(*([r] * nu), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def check_diophantine(freq: FrequencyVector, L: int = 60) -> ResonanceReport:
    """min over 0 < |ell|_inf <= L of |omega . ell| |ell|^tau / gamma."""
    ell = _ell_lattice(freq.nu, L)
    nonzero = np.any(ell != 0, axis=1)
    ell = ell[nonzero]
    od = np.abs(ell @ freq.omega)
    norm = np.sqrt((ell**2).sum(axis=1).astype(float))
    margin = od * norm**freq.tau / freq.gamma
    k = int(margin.argmin())
    return ResonanceReport(
        passed=bool(margin[k] >= 1.0),
        margin=float(margin[k]),
        worst_ell=tuple(int(v) for v in ell[k]),
        worst_j=None,
        scan_bound=L,
    )


def check_melnikov(freq: FrequencyVector, lam: float, L: int = 60,
                   j_max: int = 128) -> ResonanceReport:
    """min over (ell, j) != 0, |ell|_inf <= L, |j| <= j_max of
    |omega . ell + lambda j| <ell>^tau / gamma.

    For fixed ell the objective is piecewise linear in j with its minimum at
    the integers nearest -omega.ell/lambda, so scanning those (plus j = 0) is
    exact.
    """
    if lam == 0.0:
        raise ValueError("lambda must be nonzero")
    ell = _ell_lattice(freq.nu, L)
    od = ell @ freq.omega
    base = (1.0 + (ell**2).sum(axis=1).astype(float)) ** (freq.tau / 2.0) / freq.gamma
    zero_ell = np.all(ell == 0, axis=1)
    j_near = np.rint(-od / lam)
    best = np.inf
    wit = (None, None)
    for dj in (-1.0, 0.0, 1.0, None):
        j = np.zeros_like(od) if dj is None else np.clip(j_near + dj, -j_max, j_max)
        m = np.abs(od + lam * j) * base
        m[zero_ell & (j == 0)] = np.inf
        k = int(m.argmin())
        if m[k] < best:
            best, wit = float(m[k]), (ell[k], int(j[k]))
    return ResonanceReport(
        passed=bool(best >= 1.0),
        margin=best,
        worst_ell=tuple(int(v) for v in wit[0]),
        worst_j=wit[1],
        scan_bound=L,
        j_bound=j_max,
    )


# -- averages -----------------------------------------------------------------

def average_phi(a):
    """<a>_phi: mean over the slow angles, keeping (x, xi) dependence."""
    if isinstance(a, (SeparableSymbol, LatticeSymbol)):
        la = to_lattice(a)
        axes = tuple(range(la.grid.nu))
        m = la.samples.mean(axis=axes)
        out = np.broadcast_to(m, la.grid.phi_shape + m.shape).copy()
        return LatticeSymbol(la.grid, out, la.order, la.xi_valid)
    axes = tuple(range(np.asarray(a).ndim - 1))
    return np.asarray(a).mean(axis=axes)


def average_phi_x(a):
    """<a>_{phi,x}: mean over slow angles and x; returns the xi profile array."""
    la = to_lattice(a)
    axes = tuple(range(la.samples.ndim - 1))
    return la.samples.mean(axis=axes)


def field_average_phi(grid: TorusGrid, field: np.ndarray) -> np.ndarray:
    return field.mean(axis=tuple(range(grid.nu)))


# -- inverse divisors ---------------------------------------------------------

def _divide_modes(modes: np.ndarray, div: np.ndarray, kernel_mask: np.ndarray,
                  witness):
    """Divide mode array by div, zeroing the kernel component exactly.

    Any non-kernel divisor below the hard floor is an error regardless of the
    data in that bin: admissibility of the frequency data is not allowed to
    depend on what happens to be zero in this particular field.
    """
    bad = (np.abs(div) < DIVISOR_FLOOR) & ~kernel_mask
    if np.any(bad):
        idx = tuple(np.argwhere(bad)[0])
        ell, j, val = witness(idx)
        raise SmallDivisorError(ell, j, val)
    safe = np.where(kernel_mask, 1.0, div)
    out = modes / safe
    return np.where(kernel_mask, 0.0, out)


def invert_dx_field(grid: TorusGrid, field: np.ndarray) -> np.ndarray:
    """Minimal-norm solution of d_x u = field (x mean removed, mean of u = 0).

    The Nyquist bin is part of the derivative's kernel on an even grid and is
    zeroed along with the mean; the field should be resolved there.
    """
    modes = np.fft.fft(field, axis=-1)
    k = grid.x_deriv_modes.astype(float)
    div = (1j * k).reshape((1,) * (field.ndim - 1) + (grid.n_x,))
    kernel = (k == 0).reshape(div.shape)
    out = np.where(kernel, 0.0, modes / np.where(kernel, 1.0, div))
    res = np.fft.ifft(out, axis=-1)
    return res.real if np.isrealobj(field) else res


def invert_dx(a) -> LatticeSymbol:
    la = to_lattice(a)
    samples = np.swapaxes(la.samples, -1, -2)
    samples = invert_dx_field(la.grid, samples)
    return LatticeSymbol(la.grid, np.swapaxes(samples, -1, -2),
                         la.order, la.xi_valid)


def _omega_phi_divisor(grid: TorusGrid, omega: np.ndarray, extra_dims: int):
    """omega . ell over phi bins (derivative convention) plus the structural
    kernel mask of bins the real operator cannot see (mean and Nyquist)."""
    dmesh = grid.phi_deriv_mesh()
    od = sum(float(w) * m for w, m in zip(omega, dmesh))
    dead = np.ones(grid.phi_shape, dtype=bool)
    for m in dmesh:
        dead &= (m == 0)
    shape = grid.phi_shape + (1,) * extra_dims
    return od.reshape(shape), dead.reshape(shape), grid.phi_mode_mesh()


def invert_omega_dphi_field(grid: TorusGrid, field: np.ndarray,
                            omega: np.ndarray) -> np.ndarray:
    """Solve omega . d_phi u = field with <u>_phi = 0; error on resonant modes."""
    omega = np.asarray(omega, dtype=float)
    nphi_axes = tuple(range(grid.nu))
    modes = np.fft.fftn(field, axes=nphi_axes)
    extra = field.ndim - grid.nu
    od, kernel, mesh = _omega_phi_divisor(grid, omega, extra)
    div = 1j * od

    def witness(idx):
        ell = tuple(int(mesh[a][idx[: grid.nu]]) for a in range(grid.nu))
        return ell, None, np.abs(div[idx[: grid.nu] + (0,) * extra])

    out = _divide_modes(modes, div, kernel, witness)
    res = np.fft.ifftn(out, axes=nphi_axes)
    return res.real if np.isrealobj(field) else res


def invert_omega_dphi(a, freq_or_omega) -> LatticeSymbol:
    omega = getattr(freq_or_omega, "omega", freq_or_omega)
    la = to_lattice(a)
    out = invert_omega_dphi_field(la.grid, la.samples, omega)
    return LatticeSymbol(la.grid, out, la.order, la.xi_valid)


def invert_mixed_field(grid: TorusGrid, field: np.ndarray, omega: np.ndarray,
                       lam: float) -> np.ndarray:
    """Solve (omega . d_phi + lam d_x) u = field, joint mean removed."""
    omega = np.asarray(omega, dtype=float)
    axes = tuple(range(grid.nu)) + (field.ndim - 1,)
    # phi axes lead, x is the last axis; anything between is carried along
    modes = np.fft.fftn(field, axes=axes)
    extra = field.ndim - grid.nu - 1
    od, phi_dead, mesh = _omega_phi_divisor(grid, omega, extra + 1)
    kx = grid.x_deriv_modes.astype(float).reshape(
        (1,) * (field.ndim - 1) + (grid.n_x,))
    div = 1j * (od + lam * kx)
    kernel = phi_dead & (kx == 0)

    def witness(idx):
        ell = tuple(int(mesh[a][idx[: grid.nu]]) for a in range(grid.nu))
        j = int(grid.x_modes[idx[-1]])
        full = idx[: grid.nu] + (0,) * extra + (idx[-1],)
        return ell, j, np.abs(div[full])

    out = _divide_modes(modes, div, kernel, witness)
    res = np.fft.ifftn(out, axes=axes)
    return res.real if np.isrealobj(field) else res


def invert_mixed(a, freq_or_omega, lam: float) -> LatticeSymbol:
    omega = getattr(freq_or_omega, "omega", freq_or_omega)
    la = to_lattice(a)
    samples = np.swapaxes(la.samples, -1, -2)  # put x last
    out = invert_mixed_field(la.grid, samples, omega, lam)
    return LatticeSymbol(la.grid, np.swapaxes(out, -1, -2), la.order, la.xi_valid)
