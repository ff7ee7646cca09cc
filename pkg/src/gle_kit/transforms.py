"""Uniform-grid Fourier и convolution helpers.

Conventions used everywhere in this package:

    fhat(w) = int e^{-i w t} f(t) dt
    f(t)    = (1/2 pi) int e^{+i w t} fhat(w) dw

Frequency grids are uniform and symmetric with an even number of points,
``w_j = (j - N/2) dw``; the dual time grid is ``t_k = (k - N/2) dtp`` with
``dtp = pi / w_max = 2 pi / (N dw)``.
"""

import numpy as np
from scipy.signal import fftconvolve


def frequency_grid(omega_max, n_omega):
    """Symmetric uniform frequency grid with n_omega (even) points."""
    n_omega = int(n_omega)
    if n_omega < 4 or n_omega % 2:
        raise ValueError("n_omega must be an even integer >= 4")
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    dw = 2.0 * omega_max / n_omega
    return (np.arange(n_omega) - n_omega // 2) * dw


def dual_time_grid(omegas):
    """Time grid paired with a symmetric frequency grid by FFT duality."""
    omegas = np.asarray(omegas)
    n = omegas.size
    dw = omegas[1] - omegas[0]
    dtp = 2.0 * np.pi / (n * dw)
    return (np.arange(n) - n // 2) * dtp


def _check_symmetric_grid(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or n % 2:
        raise ValueError("grid must have an even number (>= 4) of points")
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
        raise ValueError("grid must be uniform")
    if abs(x[n // 2]) > 1e-9 * dx[0]:
        raise ValueError("grid must be symmetric about 0 (x[n/2] == 0)")
    return x, float(dx[0])


def inverse_transform(omegas, fhat):
    """Inverse transform of samples on a symmetric frequency grid.

    Parameters
    ----------
    omegas : ndarray, shape (n,)
        Symmetric uniform grid, n even.
    fhat : ndarray, shape (n, ...)
        Samples of the transform; trailing dimensions are carried along.

    Returns
    -------
    times, f : ndarray
        Dual time grid and complex time-domain samples (n, ...).
    """
    omegas, dw = _check_symmetric_grid(omegas)
    fhat = np.asarray(fhat)
    n = omegas.size
    t = dual_time_grid(omegas)
    k = np.arange(n)
    sign = np.where(k % 2 == 0, 1.0, -1.0)          # (-1)^j phase factors
    phase = sign.reshape((n,) + (1,) * (fhat.ndim - 1))
    const = np.exp(1j * np.pi * (n / 2.0))
    f = dw / (2.0 * np.pi) * n * np.fft.ifft(fhat * phase, axis=0)
    f = f * phase * const
    return t, f


def forward_transform(times, f):
    """Forward transform of samples on a symmetric time grid.

    Inverse of :func:`inverse_transform` on matching dual grids.
    """
    times, dtp = _check_symmetric_grid(times)
    f = np.asarray(f)
    n = times.size
    dw = 2.0 * np.pi / (n * dtp)
    omegas = (np.arange(n) - n // 2) * dw
    k = np.arange(n)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    phase = sign.reshape((n,) + (1,) * (f.ndim - 1))
    const = np.exp(-1j * np.pi * (n / 2.0))
    fhat = dtp * np.fft.fft(f * phase, axis=0) * phase * const
    return omegas, fhat


def matrix_convolve(ta, a, tb, b):
    """Discrete convolution of two matrix-valued series, (a * b)(t).

    ``a`` has shape (ma, d, d) on uniform times ``ta``; likewise ``b``.
    Returns ``(tc, c)`` with ``c[n] = dt * sum_m a[m] @ b[n - m]`` and
    ``tc = ta[0] + tb[0] + arange(ma + mb - 1) * dt``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    dt = float(ta[1] - ta[0])
    ma, d = a.shape[0], a.shape[1]
    mb = b.shape[0]
    out_dtype = np.result_type(a.dtype, b.dtype, float)
    out = np.zeros((ma + mb - 1, d, d), dtype=out_dtype)
    for i in range(d):
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc = acc + fftconvolve(a[:, i, j], b[:, j, k])
            out[:, i, k] = acc
    tc = ta[0] + tb[0] + np.arange(ma + mb - 1) * dt
    return tc, dt * out


def matrix_correlation(ta, a, tb, b):
    """Correlation R(t) = dt * sum_m a[m] @ b[m - l]^H at lag t = l dt.

    This is the discrete counterpart of ``int a(tau) b(tau - t)^* dtau``,
    the building block of force autocorrelations. Returns ``(lags, R)``.
    """
    b = np.asarray(b)
    brev = np.conjugate(np.swapaxes(b[::-1], -1, -2))
    tc, c = matrix_convolve(ta, np.asarray(a), tb, brev)
    mb = b.shape[0]
    lags = (np.arange(c.shape[0]) - (mb - 1)) * (ta[1] - ta[0]) + (ta[0] - tb[0])
    return lags, c


def interp_matrix_series(lags, values, x):
    """Linear interpolation of a matrix-valued series, zero outside the grid."""
    lags = np.asarray(lags, dtype=float)
    values = np.asarray(values)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = values.shape[1]
    out = np.zeros((x.size, d, d), dtype=values.dtype)
    for i in range(d):
        for j in range(d):
            re = np.interp(x, lags, values[:, i, j].real, left=0.0, right=0.0)
            if np.iscomplexobj(values):
                im = np.interp(x, lags, values[:, i, j].imag, left=0.0, right=0.0)
                out[:, i, j] = re + 1j * im
            else:
                out[:, i, j] = re
    return out
