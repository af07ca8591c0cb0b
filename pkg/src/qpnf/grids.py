"""Spectral bookkeeping on the product torus.

Fields live on T^nu x T: nu slow angles phi sampled on a uniform tensor grid
(n_phi points per angle) and one fast angle x sampled on n_x points. States on
the x-circle are kept as Fourier coefficient vectors over the centered band
|xi| <= xi_max, index i <-> xi = i - xi_max.

Conventions:
  u(x) = sum_xi  u_hat(xi) e^{i xi x}
  analyze  : x samples -> band coefficients (exact for band-limited data)
  synthesize: band coefficients -> x samples
  <xi> = (1 + xi^2)^{1/2}
  sobolev_norm(u, s) = ( sum <xi>^{2s} |u_hat(xi)|^2 )^{1/2}
  l2_inner(u, v) = 2 pi sum u_hat(xi) conj(v_hat(xi))

The x band constraint n_x >= 2 xi_max + 2 makes the quantization gather
(xi' - xi) mod n_x injective on stored x modes, which several exactness
guarantees downstream rely on.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGrid:
    """Discretization of T^nu x T with an x-frequency band |xi| <= xi_max."""

    nu: int
    n_phi: int
    xi_max: int
    n_x: int = 0

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError(f"nu must be >= 1, got {self.nu}")
        if self.n_phi < 4:
            raise ValueError(f"n_phi must be >= 4, got {self.n_phi}")
        if self.xi_max < 1:
            raise ValueError(f"xi_max must be >= 1, got {self.xi_max}")
        if self.n_x == 0:
            object.__setattr__(self, "n_x", 2 * self.xi_max + 2)
        if self.n_x < 2 * self.xi_max + 2:
            raise ValueError(
                f"n_x = {self.n_x} too small for band xi_max = {self.xi_max}; "
                f"need n_x >= {2 * self.xi_max + 2}"
            )

    @property
    def n_band(self) -> int:
        return 2 * self.xi_max + 1

    @cached_property
    def xi(self) -> np.ndarray:
        return np.arange(-self.xi_max, self.xi_max + 1)

    @cached_property
    def bracket(self) -> np.ndarray:
        """<xi> on the band."""
        return np.sqrt(1.0 + self.xi.astype(float) ** 2)

    @cached_property
    def x(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_x) / self.n_x

    @cached_property
    def phi_axis(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_phi) / self.n_phi

    @property
    def phi_shape(self) -> tuple:
        return (self.n_phi,) * self.nu

    @cached_property
    def x_modes(self) -> np.ndarray:
        """Integer x-mode numbers in FFT bin order."""
        return np.rint(np.fft.fftfreq(self.n_x) * self.n_x).astype(int)

    @cached_property
    def phi_modes(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.n_phi) * self.n_phi).astype(int)

    @cached_property
    def x_deriv_modes(self) -> np.ndarray:
        """x modes with the Nyquist bin zeroed.

        An even grid's Nyquist bin has no negation partner, so any odd
        multiplier there breaks conjugate symmetry and leaks imaginary parts
        into real fields. Differentiating the real trig interpolant gives zero
        at that bin, and every spectral derivative here follows suit.
        """
        k = self.x_modes.copy()
        if self.n_x % 2 == 0:
            k[self.n_x // 2] = 0
        return k

    @cached_property
    def phi_deriv_modes(self) -> np.ndarray:
        m = self.phi_modes.copy()
        if self.n_phi % 2 == 0:
            m[self.n_phi // 2] = 0
        return m

    @cached_property
    def gather_index(self) -> np.ndarray:
        """(xi' - xi) mod n_x lookup used by matrix assembly, shape (n_band, n_band)."""
        d = self.xi[:, None] - self.xi[None, :]
        return np.mod(d, self.n_x)

    def phi_mesh(self) -> list:
        """Meshed phi coordinate arrays (one per slow angle), shape phi_shape each."""
        return np.meshgrid(*([self.phi_axis] * self.nu), indexing="ij")

    def phi_mode_mesh(self) -> list:
        return np.meshgrid(*([self.phi_modes] * self.nu), indexing="ij")

    def phi_deriv_mesh(self) -> list:
        return np.meshgrid(*([self.phi_deriv_modes] * self.nu), indexing="ij")


@dataclass(frozen=True)
class FourierState:
    """A state on the x-circle as a centered coefficient band."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n_band,):
            raise ValueError(
                f"coefficient vector has shape {c.shape}, expected ({self.grid.n_band},)"
            )
        object.__setattr__(self, "coeffs", c)

    def copy(self) -> "FourierState":
        return FourierState(self.grid, self.coeffs.copy())


# -- core transforms ---------------------------------------------------------

def x_to_modes(grid: TorusGrid, samples: np.ndarray) -> np.ndarray:
    """Full x-mode coefficients (FFT bin order) of samples along the last axis."""
    return np.fft.fft(samples, axis=-1) / grid.n_x


def modes_to_x(grid: TorusGrid, modes: np.ndarray) -> np.ndarray:
    return np.fft.ifft(modes, axis=-1) * grid.n_x


def band_select(grid: TorusGrid, modes: np.ndarray) -> np.ndarray:
    """Pick the centered band out of full FFT-ordered x modes (last axis)."""
    return np.take(modes, np.mod(grid.xi, grid.n_x), axis=-1)


def band_embed(grid: TorusGrid, band: np.ndarray) -> np.ndarray:
    """Embed a centered band into full FFT-ordered x-mode bins (last axis)."""
    out_shape = band.shape[:-1] + (grid.n_x,)
    out = np.zeros(out_shape, dtype=complex)
    out[..., np.mod(grid.xi, grid.n_x)] = band
    return out


def analyze(grid: TorusGrid, samples: np.ndarray) -> FourierState:
    """Band coefficients of x samples. Exact when samples are band-limited."""
    samples = np.asarray(samples)
    if samples.shape != (grid.n_x,):
        raise ValueError(
            f"sample vector has shape {samples.shape}, expected ({grid.n_x},)"
        )
    return FourierState(grid, band_select(grid, x_to_modes(grid, samples)))


def synthesize(state: FourierState) -> np.ndarray:
    """x samples of a band coefficient vector on the grid nodes."""
    return modes_to_x(state.grid, band_embed(state.grid, state.coeffs))


def sobolev_norm(state: FourierState, s: float) -> float:
    w = state.grid.bracket ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(state.coeffs) ** 2)))


def l2_inner(u: FourierState, v: FourierState) -> complex:
    if u.grid is not v.grid and u.grid != v.grid:
        raise ValueError("states live on different grids")
    return complex(TWO_PI * np.sum(u.coeffs * np.conj(v.coeffs)))


# -- derivatives and interpolation -------------------------------------------

def dx(grid: TorusGrid, field: np.ndarray, power: int = 1) -> np.ndarray:
    """Spectral d/dx (last axis) of a sampled field; real input gives real output."""
    modes = np.fft.fft(field, axis=-1)
    modes *= (1j * grid.x_deriv_modes) ** power
    out = np.fft.ifft(modes, axis=-1)
    return out.real if np.isrealobj(field) else out


def phi_fft(grid: TorusGrid, field: np.ndarray) -> np.ndarray:
    """Forward FFT over the nu leading phi axes, normalized to mode coefficients."""
    axes = tuple(range(grid.nu))
    return np.fft.fftn(field, axes=axes) / (grid.n_phi ** grid.nu)


def phi_ifft(grid: TorusGrid, modes: np.ndarray) -> np.ndarray:
    axes = tuple(range(grid.nu))
    return np.fft.ifftn(modes, axes=axes) * (grid.n_phi ** grid.nu)


def omega_dot_dphi(grid: TorusGrid, field: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Directional derivative omega . d_phi of a field sampled on the phi grid."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (grid.nu,):
        raise ValueError(f"omega has shape {omega.shape}, expected ({grid.nu},)")
    modes = np.fft.fftn(field, axes=tuple(range(grid.nu)))
    mult = np.zeros(grid.phi_shape, dtype=float)
    for a, mm in enumerate(grid.phi_deriv_mesh()):
        mult = mult + omega[a] * mm
    shape = grid.phi_shape + (1,) * (field.ndim - grid.nu)
    modes *= 1j * mult.reshape(shape)
    out = np.fft.ifftn(modes, axes=tuple(range(grid.nu)))
    # ifftn over leading axes leaves the batch axis fastest-varying; downstream
    # stacked matmuls fall off the BLAS path on that layout, so repack here.
    return np.ascontiguousarray(out.real if np.isrealobj(field) else out)


def trig_interp_x(grid: TorusGrid, field: np.ndarray, x_eval: np.ndarray) -> np.ndarray:
    """Evaluate the trig interpolant of field (last axis = x) at arbitrary points.

    x_eval has shape field.shape[:-1] + (P,): one batch of evaluation points per
    leading index. Evaluation is the exact mode sum, so it is aliasing-free for
    anything the grid can represent.
    """
    field = np.asarray(field)
    modes = np.fft.fft(field, axis=-1) / grid.n_x
    x_eval = np.asarray(x_eval, dtype=float)
    if x_eval.shape[:-1] != field.shape[:-1]:
        raise ValueError(
            f"x_eval leading shape {x_eval.shape[:-1]} does not match field "
            f"leading shape {field.shape[:-1]}"
        )
    phase = np.exp(1j * x_eval[..., None] * grid.x_modes)
    # Nyquist bin of an even grid is split symmetrically to keep real fields real.
    if grid.n_x % 2 == 0:
        k = grid.n_x // 2
        phase[..., k] = np.cos(k * x_eval)
    out = np.einsum("...k,...pk->...p", modes, phase)
    return out.real if np.isrealobj(field) else out


def eval_at_phi(grid: TorusGrid, field: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Evaluate the phi-trig interpolant of field (leading nu axes) at one point.

    Exact for anything the phi grid represents; used to move lattice-built
    objects to arbitrary phase points.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.nu,):
        raise ValueError(f"phi has shape {phi.shape}, expected ({grid.nu},)")
    out = np.fft.fftn(field, axes=tuple(range(grid.nu))) / (grid.n_phi ** grid.nu)
    for a in range(grid.nu):
        w = np.exp(1j * phi[a] * grid.phi_modes)
        if grid.n_phi % 2 == 0:
            w[grid.n_phi // 2] = np.cos((grid.n_phi // 2) * phi[a])
        out = np.tensordot(w, out, axes=(0, 0))
    return out.real if np.isrealobj(field) else out
