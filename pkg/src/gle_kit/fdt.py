"""Fluctuation-dissipation machinery.

Solves ``G G* = D Sigma + Sigma D*`` for the white-noise amplitude, checks
the spectral feasibility condition, and constructs the colored-noise
density phi by spectral factorization,

    phi_hat(w) = (D Sigma + Sigma D* + gamma_Sigma_hat(w))^{1/2} P* - G,

where P is the orthogonal polar factor of G*. The inverse transform of
phi_hat is the real tabulated density used for noise synthesis.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FactorizationError, InfeasibilityError
from .kernels import gamma_sigma_fourier, gamma_sigma_values
from .linalg import min_eigenvalue, polar_orthogonal_factor, spectral_norms, sqrtm_psd
from .transforms import (
    dual_time_grid,
    frequency_grid,
    interp_matrix_series,
    inverse_transform,
    matrix_correlation,
)

KAPPA_SAME = "same"
KAPPA_INDEPENDENT = "independent"


@dataclass(frozen=True)
class ForceModel:
    """Fluctuating-force specification F = F0 + G dW/dt.

    ``phi`` is tabulated on a uniform symmetric grid (odd length, zero lag
    at the center) and treated as zero outside it. ``kappa`` states whether
    the Brownian motion driving F0 is the same one as in the white term or
    an independent copy.
    """
    G: np.ndarray
    times: np.ndarray
    phi: np.ndarray
    kappa: str = KAPPA_SAME

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        times = np.asarray(self.times, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None, None]
        if self.kappa not in (KAPPA_SAME, KAPPA_INDEPENDENT):
            raise ValueError("kappa must be 'same' or 'independent'")
        if times.ndim != 1 or times.size != phi.shape[0]:
            raise ValueError("times and phi lengths differ")
        if times.size % 2 != 1:
            raise ValueError("phi grid must have odd length (symmetric about 0)")
        dt = np.diff(times)
        if times.size > 1:
            if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
                raise ValueError("phi grid must be uniform")
            if abs(times[0] + times[-1]) > 1e-9 * dt[0]:
                raise ValueError("phi grid must be symmetric about 0")
        if phi.shape[1] != phi.shape[2] or phi.shape[1] != G.shape[0]:
            raise ValueError("phi and G dimensions differ")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite (square integrable on its grid)")
        G.setflags(write=False)
        times.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self):
        return self.G.shape[0]

    @property
    def dt(self):
        if self.times.size < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    @property
    def half_width(self):
        """Support radius T_phi of the tabulated density."""
        return float(self.times[-1])

    @property
    def is_zero_phi(self):
        return not np.any(self.phi)

    def phi_at(self, lags):
        """phi linearly interpolated at arbitrary lags, zero outside."""
        return interp_matrix_series(self.times, self.phi, lags)

    @classmethod
    def white(cls, G, kappa=KAPPA_SAME):
        """Pure white-noise force (phi identically zero)."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        d = G.shape[0]
        return cls(G=G, times=np.array([0.0]), phi=np.zeros((1, d, d)), kappa=kappa)

    @classmethod
    def from_callable(cls, G, func, dt, t_max, kappa=KAPPA_SAME):
        """Tabulate ``phi(t) = func(t)`` on the symmetric grid [-t_max, t_max]."""
        K = int(round(t_max / dt))
        times = (np.arange(2 * K + 1) - K) * dt
        G = np.atleast_2d(np.asarray(G, dtype=float))
        d = G.shape[0]
        vals = np.empty((times.size, d, d))
        for i, t in enumerate(times):
            vals[i] = np.atleast_2d(np.asarray(func(t), dtype=float))
        return cls(G=G, times=times, phi=vals, kappa=kappa)


def drift_covariance_product(D, cov):
    """D Sigma + Sigma D*, the matrix the white-noise amplitude must square to."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    return D @ cov.sigma + cov.sigma @ D.T


def solve_lyapunov_G(D, cov):
    """Canonical white-noise amplitude G = (D Sigma + Sigma D*)^{1/2}.

    Raises
    ------
    InfeasibilityError
        If ``D Sigma + Sigma D*`` is indefinite: no stationary solution
        with this covariance exists.
    """
    M = drift_covariance_product(D, cov)
    M = 0.5 * (M + M.T)
    scale = 1.0 + np.linalg.norm(M, 2)
    if min_eigenvalue(M) < -1e-10 * scale:
        raise InfeasibilityError(
            "D Sigma + Sigma D* is indefinite; no stationary solution with "
            "this covariance exists")
    return sqrtm_psd(M)


class SpectralConditionResult(NamedTuple):
    feasible: bool
    min_eig: float


def check_spectral_condition(D, cov, kernel, omega_grid):
    """Feasibility of the fluctuation-dissipation relation on a grid.

    Returns the minimum eigenvalue of ``gamma_Sigma_hat(w) + D Sigma +
    Sigma D*`` over the grid; the relation has an admissible square-
    integrable density iff this is nonnegative.
    """
    omegas = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    M = drift_covariance_product(D, cov)
    ghat = gamma_sigma_fourier(kernel, cov, omegas)
    w = np.linalg.eigvalsh(ghat + 0.5 * (M + M.T))
    mn = float(w.min())
    g0 = gamma_sigma_fourier(kernel, cov, np.array([0.0]))[0]
    tol = 1e-10 * (1.0 + np.linalg.norm(g0 + M, 2))
    return SpectralConditionResult(bool(mn >= -tol), mn)


def factorization_grid(kernel, cov, D, t_support=50.0, freq_drop=1e-6,
                       tail_tol=2.5e-4, max_log2_n=20):
    """Default frequency grid for the spectral factorization.

    ``omega_max`` is doubled until (a) ``||gamma_Sigma_hat|| < freq_drop *
    ||gamma_Sigma_hat(0)||`` at the cutoff and (b) the last-octave integral
    of the projected density magnitude ``||S^{1/2} - S(inf)^{1/2}||`` is
    below ``pi * tail_tol``, which bounds the truncation error of the
    inverse transform. The number of points is the smallest power of two
    whose dual time grid spans at least ``t_support``.
    """
    M = drift_covariance_product(D, cov)
    M = 0.5 * (M + M.T)
    g0 = np.linalg.norm(gamma_sigma_fourier(kernel, cov, np.array([0.0]))[0], 2)
    root_m = sqrtm_psd(M)

    def phihat_norm(omegas):
        ghat = gamma_sigma_fourier(kernel, cov, omegas)
        root = sqrtm_psd(_clip_psd(ghat + M))
        return spectral_norms(root - root_m)

    omega_max = 64.0
    while omega_max < 2.0 ** 15:
        edge = np.linalg.norm(
            gamma_sigma_fourier(kernel, cov, np.array([omega_max]))[0], 2)
        probe = np.linspace(omega_max / 2.0, omega_max, 129)
        tail = np.trapezoid(phihat_norm(probe), probe)
        if edge < freq_drop * max(g0, 1e-300) and tail < np.pi * tail_tol:
            break
        omega_max *= 2.0
    dtp = np.pi / omega_max
    n = 4
    while (n // 2) * dtp < t_support and n < 2 ** max_log2_n:
        n *= 2
    return frequency_grid(omega_max, n)


def _clip_psd(stack, rel_tol=1e-10):
    """Clip tiny negative eigenvalues of a Hermitian stack to zero."""
    w, q = np.linalg.eigh(stack)
    scale = np.max(np.abs(w)) if w.size else 1.0
    if np.min(w) < -rel_tol * max(scale, 1.0):
        raise InfeasibilityError(
            "spectral condition violated: gamma_Sigma_hat + D Sigma + Sigma D* "
            f"has eigenvalue {np.min(w):.3e}")
    w = np.clip(w, 0.0, None)
    out = (q * w[..., None, :]) @ np.conjugate(np.swapaxes(q, -1, -2))
    return out


def spectral_factorize_phi(D, cov, kernel, G, omega_grid=None, *,
                           t_support=50.0, vainikko_tol=1e-8,
                           kappa=KAPPA_SAME):
    """Construct the density phi of the fluctuation-dissipation relation.

    Computes phi_hat on the frequency grid via Hermitian PSD square roots
    and the polar factor of G*, verifies the spectral-norm bound
    ``||phi_hat(w)|| <= (4/pi) ||gamma_Sigma_hat(w)||^{1/2}``, and inverse
    transforms to a real tabulated density.

    Raises
    ------
    InfeasibilityError
        If the spectral condition fails on the grid.
    FactorizationError
        If the norm bound is violated (grid/branch inconsistency) or the
        inverse transform is not real to tolerance.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if omega_grid is None:
        omega_grid = factorization_grid(kernel, cov, D, t_support=t_support)
    omegas = np.asarray(omega_grid, dtype=float)

    M = drift_covariance_product(D, cov)
    M = 0.5 * (M + M.T)
    ghat = gamma_sigma_fourier(kernel, cov, omegas)
    S = _clip_psd(ghat + M)
    root = sqrtm_psd(S)
    P = polar_orthogonal_factor(G.T)
    phihat = root @ P.T.conj() - G

    bound = (4.0 / np.pi) * np.sqrt(spectral_norms(ghat))
    excess = spectral_norms(phihat) - bound
    scale = 1.0 + float(np.max(bound))
    if np.max(excess) > vainikko_tol * scale:
        raise FactorizationError(
            f"factorized density violates the norm bound by {np.max(excess):.3e}")

    times, phi_c = inverse_transform(omegas, phihat)
    re = np.ascontiguousarray(phi_c.real)
    im_max = float(np.max(np.abs(phi_c.imag)))
    re_max = float(np.max(np.abs(re)))
    if im_max > 1e-6 * max(re_max, 1e-300):
        raise FactorizationError(
            f"inverse transform not real: max imaginary part {im_max:.3e}")
    # drop the unpaired leftmost sample so the grid is symmetric about 0
    return ForceModel(G=G, times=times[1:], phi=re[1:], kappa=kappa)


def chi_of(model, lag_grid):
    """Effective colored autocorrelation chi of the force.

    ``chi = phi (*) reversed-phi*`` for independent Brownian motions, plus
    the cross terms ``phi G* + G reversed-phi*`` when they coincide.
    Returned on ``lag_grid`` (linear interpolation from the phi grid).
    """
    from .stats import CorrelationTable

    lag_grid = np.atleast_1d(np.asarray(lag_grid, dtype=float))
    lags, vals = chi_on_native_grid(model)
    out = interp_matrix_series(lags, vals, lag_grid)
    return CorrelationTable(lags=lag_grid, values=out, kind="theoretical")


def chi_on_native_grid(model):
    """chi evaluated exactly on the phi table's own lag grid (internal)."""
    d = model.dim
    if model.times.size < 2:
        lags = model.times.copy() if model.times.size else np.array([0.0])
        return lags, np.zeros((lags.size, d, d))
    lags, conv = matrix_correlation(model.times, model.phi, model.times, model.phi)
    conv = conv.real
    if model.kappa == KAPPA_SAME:
        phi_f = interp_matrix_series(model.times, model.phi, lags)
        phi_r = interp_matrix_series(model.times, model.phi, -lags)
        conv = conv + phi_f @ model.G.T + model.G @ np.swapaxes(phi_r, -1, -2)
    return lags, conv


def fdr_residual(model, kernel, cov, lag_grid):
    """Sup-norm residual of the fluctuation-dissipation relation.

    ``max_t || chi(t) - gamma_Sigma(t) ||_2`` over the lag grid; zero (up
    to quadrature error) exactly when the force renders the initial-value
    solution stationary with covariance Sigma.
    """
    lag_grid = np.atleast_1d(np.asarray(lag_grid, dtype=float))
    chi = chi_of(model, lag_grid)
    target = gamma_sigma_values(kernel, cov, lag_grid)
    return float(np.max(np.linalg.norm(chi.values - target, 2, axis=(1, 2))))
