"""Matrix-valued memory kernels and their Fourier/Laplace transforms.

A kernel is either a Prony (exponential-polynomial) sum

    gamma(t) = sum_k A_k t^{p_k} e^{-lambda_k t},   t >= 0,

with closed-form transforms, or a table of matrices on a uniform grid,
transformed by trapezoidal quadrature and treated as zero beyond its grid.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import gammaincc

from .linalg import min_eigenvalue, symmetrize


@dataclass(frozen=True)
class PronyTerm:
    """One exponential-polynomial term ``A t^p e^{-lam t}``."""
    A: np.ndarray
    lam: float
    p: int = 0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("prony coefficient A must be square")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        if not self.lam > 0:
            raise ValueError("prony decay rate must be positive")
        if self.p < 0 or int(self.p) != self.p:
            raise ValueError("prony polynomial degree must be a nonnegative integer")
        object.__setattr__(self, "p", int(self.p))


@dataclass(frozen=True)
class MemoryKernel:
    """Memory kernel in Prony or tabulated form.

    Use the constructors :meth:`prony`, :meth:`tabulated` or :meth:`zero`.
    """
    dim: int
    terms: Optional[Tuple[PronyTerm, ...]] = None
    table_dt: Optional[float] = None
    table_values: Optional[np.ndarray] = None

    @classmethod
    def prony(cls, terms, dim=None):
        terms = tuple(t if isinstance(t, PronyTerm) else PronyTerm(*t) for t in terms)
        if dim is None:
            if not terms:
                raise ValueError("dim is required for an empty prony kernel")
            dim = terms[0].A.shape[0]
        for t in terms:
            if t.A.shape[0] != dim:
                raise ValueError("all prony terms must share the kernel dimension")
        return cls(dim=int(dim), terms=terms)

    @classmethod
    def zero(cls, dim):
        return cls.prony((), dim=dim)

    @classmethod
    def tabulated(cls, dt, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError("tabulated values must have shape (n, d, d)")
        if values.shape[0] < 1:
            raise ValueError("tabulated kernel needs at least one value")
        if not dt > 0:
            raise ValueError("tabulated grid spacing must be positive")
        values = values.copy()
        values.setflags(write=False)
        kern = cls(dim=values.shape[1], table_dt=float(dt), table_values=values)
        tail = np.linalg.norm(values[-1], 2)
        head = np.linalg.norm(values[0], 2)
        if tail > 1e-6 * head and head > 0:
            warnings.warn(
                "tabulated kernel does not decay to <= 1e-6 of gamma(0) within "
                "its grid; it is treated as zero beyond the grid",
                stacklevel=2,
            )
        return kern

    @property
    def is_prony(self):
        return self.terms is not None

    @property
    def is_zero(self):
        if self.is_prony:
            return all(not np.any(t.A) for t in self.terms)
        return not np.any(self.table_values)

    @property
    def table_horizon(self):
        if self.is_prony:
            raise ValueError("prony kernel has no table horizon")
        return self.table_dt * (self.table_values.shape[0] - 1)


def eval_kernel(kernel, t):
    """Evaluate gamma(t) for t >= 0.

    Accepts scalars or arrays; returns shape (d, d) or (n, d, d). Tabulated
    kernels are linearly interpolated and reject t beyond their grid.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("kernel evaluation requires t >= 0")
    d = kernel.dim
    if kernel.is_prony:
        out = np.zeros((t_arr.size, d, d))
        for term in kernel.terms:
            out += np.power(t_arr, term.p)[:, None, None] * \
                np.exp(-term.lam * t_arr)[:, None, None] * term.A
    else:
        if np.any(t_arr > kernel.table_horizon * (1 + 1e-12) + 1e-300):
            raise ValueError("t beyond the tabulated kernel grid")
        grid = np.arange(kernel.table_values.shape[0]) * kernel.table_dt
        from .transforms import interp_matrix_series
        out = interp_matrix_series(grid, kernel.table_values, t_arr)
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return out[0]
    return out


def eval_kernel_zero_extended(kernel, t):
    """gamma(t) with zero extension beyond a tabulated grid (internal use)."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if kernel.is_prony:
        return eval_kernel(kernel, t_arr)
    out = np.zeros((t_arr.size, kernel.dim, kernel.dim))
    inside = t_arr <= kernel.table_horizon
    if np.any(inside):
        out[inside] = eval_kernel(kernel, t_arr[inside])
    return out


def laplace_transform(kernel, zeta):
    """Laplace transform L gamma(zeta) = int_0^inf e^{-zeta t} gamma(t) dt.

    Requires Re zeta >= 0. ``zeta`` may be a scalar or an array; the result
    has shape (d, d) or (n, d, d) accordingly. Prony kernels use the closed
    form ``A p! / (zeta + lam)^{p+1}``; tabulated kernels use trapezoidal
    quadrature on their grid.
    """
    z = np.atleast_1d(np.asarray(zeta, dtype=complex))
    if np.any(z.real < -1e-300):
        raise ValueError("laplace transform requires Re(zeta) >= 0")
    d = kernel.dim
    if kernel.is_prony:
        out = np.zeros((z.size, d, d), dtype=complex)
        for term in kernel.terms:
            out += (math.factorial(term.p) / (z + term.lam) ** (term.p + 1))[:, None, None] * term.A
    else:
        vals = kernel.table_values
        n = vals.shape[0]
        tg = np.arange(n) * kernel.table_dt
        w = np.full(n, kernel.table_dt)
        w[0] = w[-1] = 0.5 * kernel.table_dt
        out = np.zeros((z.size, d, d), dtype=complex)
        block = max(1, int(2**22 // max(n, 1)))
        for s in range(0, z.size, block):
            ez = np.exp(-np.outer(z[s:s + block], tg)) * w
            out[s:s + block] = np.einsum("zn,nij->zij", ez, vals)
    if np.isscalar(zeta) or np.asarray(zeta).ndim == 0:
        return out[0]
    return out


def gamma_sigma_values(kernel, cov, times):
    """Two-sided extension gamma_Sigma on a grid of (possibly negative) lags.

    gamma(t) Sigma for t > 0, Sigma gamma(-t)^T for t < 0, and the symmetric
    average at t = 0. Tabulated kernels are zero beyond their grid.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sigma = cov.sigma
    out = np.zeros((times.size, kernel.dim, kernel.dim))
    g_abs = eval_kernel_zero_extended(kernel, np.abs(times))
    pos = times > 0
    neg = times < 0
    zero = ~pos & ~neg
    out[pos] = g_abs[pos] @ sigma
    out[neg] = sigma @ np.swapaxes(g_abs[neg], -1, -2)
    if np.any(zero):
        g0 = g_abs[zero]
        out[zero] = 0.5 * (g0 @ sigma + sigma @ np.swapaxes(g0, -1, -2))
    return out


def gamma_sigma_fourier(kernel, cov, omega_grid):
    """Fourier transform of gamma_Sigma on a frequency grid.

    Returns a stack of Hermitian matrices, symmetrized exactly so that
    ``M == M.conj().T`` holds elementwise. Uses ``L gamma(i w) Sigma +
    Sigma (L gamma(i w))^*``, the closed form of the two-sided transform.
    """
    omegas = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    sigma = cov.sigma
    H = laplace_transform(kernel, 1j * omegas)
    M = H @ sigma
    out = M + np.conjugate(np.swapaxes(M, -1, -2))
    out = symmetrize(out)
    if np.isscalar(omega_grid) or np.asarray(omega_grid).ndim == 0:
        return out[0]
    return out


class PositiveTypeResult(NamedTuple):
    is_positive: bool
    margin: float


def is_positive_type(kernel, cov, omega_grid):
    """Check whether gamma_Sigma is a function of positive type on a grid.

    Returns the verdict together with the smallest eigenvalue of
    ``gamma_Sigma_hat`` found on the grid. The tolerance is relative to the
    zero-frequency norm to absorb eigensolver roundoff.
    """
    omegas = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if omegas.size == 0:
        raise ValueError("omega_grid must be nonempty")
    ghat = gamma_sigma_fourier(kernel, cov, omegas)
    margin = min_eigenvalue(ghat)
    g0 = gamma_sigma_fourier(kernel, cov, np.array([0.0]))[0]
    tol = 1e-10 * (1.0 + np.linalg.norm(g0, 2))
    return PositiveTypeResult(bool(margin >= -tol), margin)


def kernel_l1_norm(kernel, resolution=2048):
    """Numerical int_0^inf ||gamma(t)||_2 dt (upper-envelope based horizon)."""
    T = kernel_tail_time(kernel, 1e-12)
    tg = np.linspace(0.0, T, resolution)
    vals = eval_kernel_zero_extended(kernel, tg)
    return float(np.trapezoid(np.linalg.norm(vals, 2, axis=(1, 2)), tg))


def kernel_tail_time(kernel, rel_tol=1e-8):
    """Smallest T with int_T^inf ||gamma|| < rel_tol * int_0^inf ||gamma||.

    For Prony kernels the bound uses the triangle inequality termwise with
    incomplete-gamma tails; tabulated kernels use their grid (zero beyond).
    """
    if kernel.is_zero:
        return 0.0
    if not kernel.is_prony:
        dtg = kernel.table_dt
        norms = np.linalg.norm(kernel.table_values, 2, axis=(1, 2))
        total = np.sum(norms) * dtg
        csum = np.cumsum(norms[::-1])[::-1] * dtg
        idx = np.nonzero(csum < rel_tol * total)[0]
        return float((idx[0] if idx.size else norms.size - 1) * dtg)

    weights = [(np.linalg.norm(t.A, 2), t.lam, t.p) for t in kernel.terms]
    total = sum(a * math.factorial(p) / lam ** (p + 1) for a, lam, p in weights if a > 0)
    if total == 0.0:
        return 0.0

    def tail(T):
        return sum(
            a * math.factorial(p) / lam ** (p + 1) * gammaincc(p + 1, lam * T)
            for a, lam, p in weights if a > 0
        )

    T = 1.0
    while tail(T) >= rel_tol * total:
        T *= 2.0
        if T > 1e9:
            break
    lo, hi = T / 2.0, T
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if tail(mid) < rel_tol * total:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class CovarianceSpec:
    """Prescribed stationary covariance Sigma (symmetric positive definite)."""
    sigma: np.ndarray
    beta_m: Optional[float] = None

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape[0] != sigma.shape[1]:
            raise ValueError("sigma must be square")
        scale = np.linalg.norm(sigma, 2)
        if np.linalg.norm(sigma - sigma.T, 2) > 1e-10 * max(scale, 1.0):
            raise ValueError("sigma must be symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if min_eigenvalue(sigma) <= 0:
            raise ValueError("sigma must be positive definite")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        if self.beta_m is not None and not self.beta_m > 0:
            raise ValueError("beta_m must be positive")

    @classmethod
    def equipartition(cls, dim, beta_m):
        """Sigma = I / (beta m), the thermal-equilibrium covariance."""
        if not beta_m > 0:
            raise ValueError("beta_m must be positive")
        return cls(sigma=np.eye(dim) / beta_m, beta_m=float(beta_m))

    @property
    def dim(self):
        return self.sigma.shape[0]
