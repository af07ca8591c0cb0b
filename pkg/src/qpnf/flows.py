"""Conjugation frames: weighted compositions of x-diffeomorphisms and
exponentials of Hermitian generators.

Weighted compositions are quantized exactly through their plane-wave action.
Exponential frames go through one Hermitian eigendecomposition per phi node,
and the derivative term a phi-dependent frame drags into a quasi-periodic
conjugation is assembled in that eigenbasis, which keeps it exactly Hermitian.
"""

from dataclasses import dataclass

import numpy as np

from .grids import TorusGrid, dx, omega_dot_dphi, trig_interp_x
from . import symbols as sym


# -- diffeomorphisms of the x circle ------------------------------------------

def invert_diffeo(grid: TorusGrid, alpha: np.ndarray, tol: float = 1e-12,
                  max_iter: int = 50) -> np.ndarray:
    """Displacement of the inverse of x -> x + alpha(..., x) on each fiber.

    Returns beta with beta(y) + alpha(y + beta(y)) = 0, so that y -> y + beta(y)
    undoes the map. Newton from beta = -alpha; evaluations off the lattice go
    through the trig interpolant, so the only error is the stopping tolerance.
    """
    alpha = np.asarray(alpha, dtype=float)
    alpha_x = dx(grid, alpha)
    if (1.0 + alpha_x).min() <= 0.0:
        raise ValueError("not a diffeomorphism: 1 + d_x alpha reaches zero")
    y = np.broadcast_to(grid.x, alpha.shape)
    beta = -alpha.copy()
    for _ in range(max_iter):
        g = beta + trig_interp_x(grid, alpha, y + beta)
        if np.abs(g).max() < tol:
            return beta
        gp = 1.0 + trig_interp_x(grid, alpha_x, y + beta)
        beta = beta - g / gp
    raise RuntimeError(
        f"diffeo inversion stalled at residual {np.abs(g).max():.3e}")


def weighted_composition(grid: TorusGrid, alpha: np.ndarray) -> np.ndarray:
    """Band matrix family of u -> sqrt(1 + alpha_x) u(x + alpha).

    Columns are the analyzed images of the plane waves, i.e. the exact action
    of the map followed by projection onto the band. The map is an isometry of
    the circle's L2 before truncation, and its inverse frame is the weighted
    composition of invert_diffeo(alpha).
    """
    alpha = np.asarray(alpha, dtype=float)
    w = np.sqrt(1.0 + dx(grid, alpha))
    arg = np.broadcast_to(grid.x, alpha.shape) + alpha
    cols = w[..., None] * np.exp(1j * arg[..., None] * grid.xi)
    modes = np.fft.fft(cols, axis=-2) / grid.n_x
    return np.take(modes, np.mod(grid.xi, grid.n_x), axis=-2)


@dataclass(frozen=True)
class CompositionMap:
    """A weighted composition frame together with its inverse frame."""

    grid: TorusGrid
    alpha: np.ndarray
    alpha_inv: np.ndarray
    forward: np.ndarray
    inverse: np.ndarray


def composition_map(grid: TorusGrid, alpha: np.ndarray,
                    tol: float = 1e-12) -> CompositionMap:
    alpha = np.asarray(alpha, dtype=float)
    alpha_inv = invert_diffeo(grid, alpha, tol=tol)
    return CompositionMap(grid, alpha, alpha_inv,
                          weighted_composition(grid, alpha),
                          weighted_composition(grid, alpha_inv))


def egorov_principal(a: sym.SeparableSymbol, alpha: np.ndarray) -> sym.LatticeSymbol:
    """Leading symbol v(x + alpha, xi / (1 + alpha_x)) of the conjugated operator.

    Exact evaluation for separable v: the field moves by the diffeomorphism and
    the profile is read at the stretched frequency. The true conjugation differs
    from this by one order less in xi.
    """
    g = a.grid
    alpha = np.asarray(alpha, dtype=float)
    stretch = 1.0 / (1.0 + dx(g, alpha))
    pts = np.broadcast_to(g.x, alpha.shape) + alpha
    xi_eval = stretch[..., None] * g.xi
    out = np.zeros(g.phi_shape + (g.n_x, g.n_band), dtype=complex)
    for f, p in a.terms:
        out += trig_interp_x(g, f, pts)[..., None] * p(xi_eval)
    return sym.LatticeSymbol(g, out, a.order)


# -- transport flow (oracle for the weighted composition) ----------------------

def transport_generator(grid: TorusGrid, beta: np.ndarray, tau: float) -> np.ndarray:
    """Generator b d_x + (d_x b)/2 at flow time tau, b = beta / (1 + tau beta_x).

    Realized as the symmetrized product (B D + D B)/2 with B the multiplication
    matrix and D = diag(i xi): B is Hermitian and D anti-Hermitian, so the
    result is skew exactly, aliasing included.
    """
    beta = np.asarray(beta, dtype=float)
    b = beta / (1.0 + tau * dx(grid, beta))
    B = sym.mult_matrix(grid, b)
    D = 1j * grid.xi
    return 0.5 * (B * D[None, :] + D[:, None] * B)


def integrate_flow(gen, n_band: int, n_steps: int, tau_end: float = 1.0,
                   lead_shape: tuple = ()) -> np.ndarray:
    """RK4 flow of F' = gen(tau) F from the identity. Oracle grade, not fast."""
    F = np.broadcast_to(np.eye(n_band, dtype=complex),
                        lead_shape + (n_band, n_band)).copy()
    h = tau_end / n_steps
    for k in range(n_steps):
        t = k * h
        a1 = gen(t)
        a2 = gen(t + 0.5 * h)
        a3 = gen(t + h)
        k1 = a1 @ F
        k2 = a2 @ (F + 0.5 * h * k1)
        k3 = a2 @ (F + 0.5 * h * k2)
        k4 = a3 @ (F + h * k3)
        F = F + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return F


# -- exponential frames --------------------------------------------------------

def phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z, continued through z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-6
    zs = np.where(small, 1.0, z)
    out = (np.exp(zs) - 1.0) / zs
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, out)


def flush_tiny(arr: np.ndarray, rel: float = 1e-100) -> np.ndarray:
    """Zero entries below rel * max |arr|.

    Conjugation chains grow exponentially decaying tails whose far entries sink
    into the subnormal range, and subnormal arithmetic is slow enough on common
    hardware to dominate the run. Entries this far below scale carry no
    information at working precision, so they are cut exactly.
    """
    mx = np.max(np.abs(arr))
    if mx == 0.0:
        return arr
    return np.where(np.abs(arr) < rel * mx, 0.0, arr)


def exp_unitary(G: np.ndarray) -> np.ndarray:
    """exp(i G) for a Hermitian matrix family, one eigh per node."""
    lam, Q = np.linalg.eigh(G)
    QH = np.conj(np.swapaxes(Q, -1, -2))
    return (Q * np.exp(1j * lam)[..., None, :]) @ QH


def exp_conjugate(grid: TorusGrid, V: np.ndarray, G: np.ndarray,
                  omega: np.ndarray):
    """Push V through the frame Phi = exp(i G): returns (V_new, Phi).

    V_new = Phi V Phi^H + i Phi omega.d_phi(Phi^H). The derivative term is
    evaluated in the eigenbasis of G through the divided-difference function
    phi1, which is exact pointwise in phi (only omega.d_phi G is spectral) and
    exactly Hermitian.
    """
    if G.ndim == grid.nu + 2:
        head = G[(0,) * grid.nu]
        if np.array_equal(G, np.broadcast_to(head, G.shape)):
            # phase-independent generator: one eigh, no derivative term
            Phi = flush_tiny(exp_unitary(head))
            PhiH = np.conj(Phi.T)
            return flush_tiny(Phi @ V @ PhiH), np.broadcast_to(Phi, G.shape)
    lam, Q = np.linalg.eigh(G)
    Q = flush_tiny(Q)
    QH = np.conj(np.swapaxes(Q, -1, -2))
    Phi = flush_tiny((Q * np.exp(1j * lam)[..., None, :]) @ QH)
    Gdot = flush_tiny(omega_dot_dphi(grid, G, omega))
    delta = lam[..., :, None] - lam[..., None, :]
    core = flush_tiny(QH @ Gdot @ Q) * phi1(1j * delta)
    drift = Q @ core @ QH
    PhiH = np.conj(np.swapaxes(Phi, -1, -2))
    return flush_tiny(Phi @ V @ PhiH + drift), Phi


def pushforward(grid: TorusGrid, V: np.ndarray, F: np.ndarray,
                Finv: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """V -> F V Finv + i F (omega.d_phi Finv) for a phi-dependent frame.

    The derivative of the inverse frame is taken spectrally over the phi grid,
    so the frame entries must be well resolved there.
    """
    dFinv = omega_dot_dphi(grid, Finv, omega)
    return flush_tiny(F @ V @ Finv + 1j * (F @ dFinv))


def exp_family_derivative(grid: TorusGrid, G: np.ndarray, omega: np.ndarray):
    """Phi = exp(i G) together with omega.d_phi(Phi^H), both exact pointwise.

    The derivative of the inverse frame is the Daleckii-Krein divided
    difference of exp(-i .) applied to omega.d_phi G in the eigenbasis of G:

        d[i, j] = -i exp(-i lam_j) phi1(-i (lam_i - lam_j)),

    which keeps the pair consistent to machine precision instead of the grid
    resolution a spectral derivative of Phi^H itself would give.
    """
    lam, Q = np.linalg.eigh(G)
    Q = flush_tiny(Q)
    QH = np.conj(np.swapaxes(Q, -1, -2))
    Phi = flush_tiny((Q * np.exp(1j * lam)[..., None, :]) @ QH)
    Gdot = flush_tiny(omega_dot_dphi(grid, G, omega))
    delta = lam[..., :, None] - lam[..., None, :]
    dd = -1j * np.exp(-1j * lam)[..., None, :] * phi1(-1j * delta)
    core = flush_tiny(QH @ Gdot @ Q) * dd
    Dinv = flush_tiny(Q @ core @ QH)
    return Phi, Dinv


def glue_frames(grid: TorusGrid, fwd_plus: np.ndarray, inv_plus: np.ndarray,
                fwd_minus: np.ndarray, inv_minus: np.ndarray):
    """Glue two frame families along the sign of the frequency.

    F = P+ F+ + P- F- selects branch output by a row mask; the candidate
    inverse Finv = F+^{-1} P+ + F-^{-1} P- selects branch input by a column
    mask (xi = 0 rides the plus block). F Finv = 1 only up to a smoothing
    remainder, so callers track the defect rather than assume unitarity.
    """
    xi = grid.xi
    mask_p = (xi >= 0).astype(float)
    mask_m = 1.0 - mask_p
    F = mask_p[:, None] * fwd_plus + mask_m[:, None] * fwd_minus
    Finv = inv_plus * mask_p + inv_minus * mask_m
    return F, Finv


def split_conjugate(grid: TorusGrid, V: np.ndarray, G_plus: np.ndarray,
                    G_minus: np.ndarray, omega: np.ndarray):
    """Conjugate V by the glued frame of exp(i G+) and exp(i G-).

    Returns (V_new, F, Finv, defect) with V_new = F V Finv + i F Dtot, where
    Dtot is the column-masked glue of the per-branch derivatives of the
    inverse exponentials, and defect = max |F Finv - 1|.
    """
    Phi_p, Dinv_p = exp_family_derivative(grid, G_plus, omega)
    Phi_m, Dinv_m = exp_family_derivative(grid, G_minus, omega)
    PhiH_p = np.conj(np.swapaxes(Phi_p, -1, -2))
    PhiH_m = np.conj(np.swapaxes(Phi_m, -1, -2))
    F, Finv = glue_frames(grid, Phi_p, PhiH_p, Phi_m, PhiH_m)
    _, Dtot = glue_frames(grid, Phi_p, Dinv_p, Phi_m, Dinv_m)
    V_new = flush_tiny(F @ V @ Finv + 1j * (F @ Dtot))
    eye = np.eye(grid.n_band)
    defect = float(np.max(np.abs(F @ Finv - eye)))
    return V_new, F, Finv, defect
