"""Quasi-periodic transport equation on T^nu x T.

Solves omega . d_phi alpha + (m + p) d_x alpha + p = c for the pair (alpha, c)
by a fixed point on the constant-coefficient inverse. The constant c is forced
each sweep so the right hand side stays in the range of the inverse, and the
correction m + c is the straightened coefficient the caller is after.
"""

from dataclasses import dataclass

import numpy as np

from .grids import TorusGrid, dx, omega_dot_dphi
from .divisors import FrequencyVector, invert_mixed_field

# Contraction is only guaranteed well inside the perturbative regime; this is
# the largest forcing-to-loss ratio the solver accepts.
DEFAULT_SMALLNESS = 0.05


@dataclass(frozen=True)
class TransportResult:
    """Solution of the straightening equation for one branch."""

    alpha: np.ndarray
    c: float
    m: float
    sign: int
    residual: float
    iterations: int

    @property
    def lam(self) -> float:
        """Straightened coefficient m + c."""
        return self.m + self.c


def transport_residual(grid: TorusGrid, omega: np.ndarray, m: float,
                       p: np.ndarray, alpha: np.ndarray, c: float) -> float:
    r = omega_dot_dphi(grid, alpha, omega) + (m + p) * dx(grid, alpha) + p - c
    return float(np.abs(r).max())


def solve_transport(grid: TorusGrid, freq: FrequencyVector, m: float,
                    p: np.ndarray, sign: int = 1,
                    smallness: float = DEFAULT_SMALLNESS,
                    tol: float = 1e-12, max_iter: int = 200) -> TransportResult:
    """Solve omega.d_phi alpha + (m + p) d_x alpha + p = c, omega = sign * freq.omega.

    p is the full perturbation field (amplitude included) on the phi-x lattice.
    Refuses outside 1/2 < |m| < 2 or when max|p| / gamma exceeds the smallness
    threshold; raises on stagnation. The returned alpha has zero joint mean.
    """
    if not 0.5 < abs(m) < 2.0:
        raise ValueError(f"drift m = {m} outside the admissible band (1/2, 2)")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    p = np.asarray(p, dtype=float)
    if p.shape != grid.phi_shape + (grid.n_x,):
        raise ValueError(f"p has shape {p.shape}, expected a phi-x field")
    load = np.abs(p).max() / freq.gamma
    # operating exactly at the threshold is allowed; only roundoff above it is
    if load > smallness * (1.0 + 1e-9):
        raise ValueError(
            f"forcing-to-loss ratio {load:.3e} exceeds smallness threshold "
            f"{smallness:.3e}; the fixed point is not guaranteed to contract")
    omega = sign * freq.omega

    alpha = np.zeros_like(p)
    c = 0.0
    residual = transport_residual(grid, omega, m, p, alpha, c)
    for it in range(1, max_iter + 1):
        drive = p + p * dx(grid, alpha)
        c = float(drive.mean())
        alpha = invert_mixed_field(grid, c - drive, omega, m)
        residual = transport_residual(grid, omega, m, p, alpha, c)
        if residual < tol:
            return TransportResult(alpha, c, m, sign, residual, it)
    raise RuntimeError(
        f"transport fixed point stalled at residual {residual:.3e} "
        f"after {max_iter} sweeps")
