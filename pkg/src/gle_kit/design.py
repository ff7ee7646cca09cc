"""Inverse design of a colored force from a target autocorrelation.

With no instantaneous drift (D = 0) the stationary solution's spectral
density factors through the one-sided resolvent transform r0_hat(w) =
(i w I + L gamma(i w))^{-1}. Given an admissible target psi, the density

    phi_hat(w) = (i w I + L gamma(i w)) psi_hat(w)^{1/2}

drives the stationary solution whose autocorrelation is exactly psi.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InfeasibilityError, TargetError
from .fdt import KAPPA_INDEPENDENT, ForceModel
from .kernels import laplace_transform
from .linalg import spectral_norms, sqrtm_psd, symmetrize
from .resolvent import paley_wiener_check
from .simulate import default_paley_wiener_grid
from .transforms import (
    dual_time_grid,
    forward_transform,
    interp_matrix_series,
    inverse_transform,
)


@dataclass(frozen=True)
class TargetAutocorrelation:
    """Tabulated target autocorrelation psi on a symmetric lag grid.

    ``smoothness_ok`` is a heuristic flag: the transform's omega^3-weighted
    magnitude must attain its maximum in the resolved lower half of the
    frequency band, consistent with three square-integrable derivatives.
    """
    times: np.ndarray
    values: np.ndarray
    smoothness_ok: bool = field(default=True)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values[:, None, None]
        values = np.ascontiguousarray(values, dtype=float)
        if times.ndim != 1 or times.size != values.shape[0]:
            raise ValueError("times and values lengths differ")
        if times.size < 3 or times.size % 2 != 1:
            raise ValueError("grid must be symmetric about 0 with odd length")
        dt = np.diff(times)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid must be uniform")
        if abs(times[0] + times[-1]) > 1e-9 * dt[0]:
            raise ValueError("grid must be symmetric about 0")
        sym_err = np.max(np.abs(values[::-1] - np.swapaxes(values, -1, -2)))
        scale = np.max(np.abs(values)) or 1.0
        if sym_err > 1e-8 * scale:
            raise TargetError(
                f"target violates psi(-t) = psi(t)^T by {sym_err:.3e}")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def at(self, lags):
        return interp_matrix_series(self.times, self.values, lags)


def _target_spectrum(target, omega_grid):
    """psi_hat on the dual grid of ``omega_grid`` (Hermitian, clipped PSD).

    The positive-type tolerance is 1e-5 relative to the largest spectral
    value: truncating a decaying target at its table edge leaves ripples
    of the order of the discarded tail, which must not be mistaken for
    indefiniteness.
    """
    omegas = np.asarray(omega_grid, dtype=float)
    tgrid = dual_time_grid(omegas)
    samples = target.at(tgrid)
    _, psihat = forward_transform(tgrid, samples)
    psihat = symmetrize(psihat)
    w = np.linalg.eigvalsh(psihat)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    if float(w.min()) < -1e-5 * scale:
        raise TargetError(
            f"target is not of positive type: eigenvalue {w.min():.3e}")
    return psihat


def check_smoothness(target, omega_grid):
    """Heuristic decay check consistent with three weak derivatives in L2."""
    omegas = np.asarray(omega_grid, dtype=float)
    psihat = _target_spectrum(target, omegas)
    q = spectral_norms(psihat) * (1.0 + np.abs(omegas) ** 3)
    half = np.abs(omegas) <= 0.5 * np.max(np.abs(omegas))
    return bool(np.max(q[~half]) <= np.max(q[half]))


def design_force_for_target(target, kernel, omega_grid):
    """Construct the G = 0 force whose stationary response matches psi.

    Raises
    ------
    InfeasibilityError
        If the Paley-Wiener diagnostic rejects the kernel (r not in L1).
    TargetError
        If psi_hat is indefinite beyond tolerance, or the constructed
        density magnitude does not decay on the grid (a rough target,
        outside the smoothness hypothesis).
    """
    omegas = np.asarray(omega_grid, dtype=float)
    report = paley_wiener_check(np.zeros((kernel.dim, kernel.dim)), kernel,
                                default_paley_wiener_grid())
    if not report.verdict:
        raise InfeasibilityError(
            "Paley-Wiener diagnostic failed for this kernel; the design "
            "formula requires an integrable resolvent")
    d = kernel.dim
    psihat = _target_spectrum(target, omegas)
    psihat = _clip(psihat)
    root = sqrtm_psd(psihat)
    L = laplace_transform(kernel, 1j * omegas)
    Ainv = 1j * omegas[:, None, None] * np.eye(d) + L     # = r0_hat(w)^{-1}
    phihat = Ainv @ root

    # gate out the numerical noise floor of psi_hat: frequencies carrying
    # less than 1e-6 of the peak spectral magnitude contribute O(1e-4) to
    # psi but would be amplified by the w factor in phi_hat
    psi_mag = spectral_norms(psihat)
    phihat[psi_mag <= 1e-6 * float(psi_mag.max())] = 0.0

    mags = spectral_norms(phihat)
    wmax = np.max(np.abs(omegas))
    top = np.abs(omegas) > 0.75 * wmax
    mid = (np.abs(omegas) > 0.25 * wmax) & (np.abs(omegas) <= 0.5 * wmax)
    top_mass = float(np.trapezoid(mags[top]))
    mid_mass = float(np.trapezoid(mags[mid]))
    if top_mass > max(0.85 * mid_mass, 1e-12 * float(mags.max() or 1.0)):
        raise TargetError(
            "constructed density magnitude does not decay on the grid; the "
            "target looks too rough for a square-integrable density")

    times, phi_c = inverse_transform(omegas, phihat)
    re = np.ascontiguousarray(phi_c.real)
    im_max = float(np.max(np.abs(phi_c.imag)))
    if im_max > 1e-6 * max(float(np.max(np.abs(re))), 1e-300):
        raise TargetError(f"inverse transform not real (max imag {im_max:.3e})")
    return ForceModel(G=np.zeros((d, d)), times=times[1:], phi=re[1:],
                      kappa=KAPPA_INDEPENDENT)


def _clip(psihat):
    w, q = np.linalg.eigh(psihat)
    w = np.clip(w, 0.0, None)
    return (q * w[..., None, :]) @ np.conjugate(np.swapaxes(q, -1, -2))


def design_grid_identity_residual(target, kernel, model, omega_grid):
    """Max relative residual of r0_hat phi_hat phi_hat* r0_hat* = psi_hat."""
    omegas = np.asarray(omega_grid, dtype=float)
    d = kernel.dim
    psihat = _clip(_target_spectrum(target, omegas))
    L = laplace_transform(kernel, 1j * omegas)
    A = 1j * omegas[:, None, None] * np.eye(d) + L
    r0 = np.linalg.inv(A)
    tgrid = dual_time_grid(omegas)
    _, phihat = forward_transform(tgrid, model.phi_at(tgrid))
    lhs = r0 @ phihat @ np.conjugate(np.swapaxes(phihat, -1, -2)) \
        @ np.conjugate(np.swapaxes(r0, -1, -2))
    scale = max(float(np.max(spectral_norms(psihat))), 1e-300)
    return float(np.max(spectral_norms(lhs - psihat)) / scale)


def verify_design(model, kernel, target, lag_grid, *, dt=None, horizon=None):
    """Sup-norm mismatch between the designed response and the target.

    Solves the resolvent, evaluates the stationary autocorrelation of the
    designed force by quadrature, and returns
    ``max_t || C(t) - psi(t) ||_2`` over the lag grid.
    """
    from .fdt import chi_of
    from .resolvent import solve_resolvent
    from .stats import stationary_autocorrelation

    lag_grid = np.atleast_1d(np.asarray(lag_grid, dtype=float))
    if np.any(lag_grid < 0):
        raise ValueError("lag grid must be nonnegative")
    if dt is None:
        dt = max(model.dt, 1e-3)
    if horizon is None:
        horizon = float(2 * target.times[-1] + 20.0)
    d = kernel.dim
    res = solve_resolvent(np.zeros((d, d)), kernel, dt, horizon)
    span = res.horizon + float(lag_grid.max()) + model.half_width
    n_chi = int(np.ceil(span / model.dt))
    chi_lags = (np.arange(2 * n_chi + 1) - n_chi) * model.dt
    chi = chi_of(model, chi_lags)
    table, _ = stationary_autocorrelation(res, model.G, chi, lag_grid)
    mismatch = table.values - target.at(lag_grid)
    return float(np.max(np.linalg.norm(mismatch, 2, axis=(1, 2))))
