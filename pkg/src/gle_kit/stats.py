"""Correlation estimators and closed-form covariance formulas.

The theoretical formulas are the quadrature counterparts of the stationary
and initial-value autocorrelation identities; they serve as oracles for
the Monte Carlo estimators (and vice versa).
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.signal import fftconvolve

from .errors import EstimationError, HorizonError
from .kernels import eval_kernel_zero_extended, gamma_sigma_values
from .transforms import interp_matrix_series


@dataclass(frozen=True)
class CorrelationTable:
    """Matrix-valued correlation function on a lag grid."""
    lags: np.ndarray
    values: np.ndarray                 # (n, d, d)
    kind: str = "theoretical"          # 'estimated' or 'theoretical'
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float)
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values[:, None, None]
        if lags.ndim != 1 or values.shape[0] != lags.size:
            raise ValueError("lags and values lengths differ")
        if lags.size > 1 and not np.all(np.diff(lags) > 0):
            raise ValueError("lags must be strictly increasing")
        if self.kind not in ("estimated", "theoretical"):
            raise ValueError("kind must be 'estimated' or 'theoretical'")
        if (self.stderr is not None) != (self.kind == "estimated"):
            raise ValueError("stderr must be present exactly for estimated tables")
        lags.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            stderr = np.asarray(self.stderr, dtype=float)
            if stderr.shape != values.shape:
                raise ValueError("stderr shape must match values")
            stderr.setflags(write=False)
            object.__setattr__(self, "stderr", stderr)

    @property
    def dim(self):
        return self.values.shape[1]

    def at(self, lags):
        """Linear interpolation (zero outside the tabulated range)."""
        return interp_matrix_series(self.lags, self.values, lags)


def _lag_steps(lag_grid, dt):
    lag_grid = np.atleast_1d(np.asarray(lag_grid, dtype=float))
    steps = np.round(lag_grid / dt).astype(int)
    if np.max(np.abs(steps * dt - lag_grid)) > 1e-6 * dt:
        raise ValueError("lags must be multiples of the ensemble dt")
    return lag_grid, steps


def estimate_autocorrelation(ens, lag_grid, t_ref=None):
    """Empirical autocorrelation of an ensemble on a lag grid.

    Stationary-mode ensembles average over all admissible time origins and
    paths; initial-value ensembles fix the reference time ``t_ref``.
    Standard errors come from the path-to-path scatter of the per-path
    estimates.
    """
    if ens.n_paths < 2:
        raise EstimationError("autocorrelation estimation needs >= 2 paths")
    lag_grid, steps = _lag_steps(lag_grid, ens.dt)
    order = np.argsort(lag_grid)
    V = ens.V
    N = ens.n_steps
    d = ens.dim
    P = ens.n_paths
    vals = np.empty((lag_grid.size, d, d))
    errs = np.empty((lag_grid.size, d, d))

    if ens.mode == "stationary":
        for k in range(steps.size):
            ell = steps[k]
            s0, s1 = max(0, -ell), N - max(0, ell)
            if s1 < s0:
                raise ValueError(f"lag {lag_grid[k]} exceeds the window")
            a = V[:, s0 + ell:s1 + ell + 1, :]
            b = V[:, s0:s1 + 1, :]
            per_path = np.einsum("psi,psj->pij", a, b) / (s1 - s0 + 1)
            vals[k] = per_path.mean(axis=0)
            errs[k] = per_path.std(axis=0, ddof=1) / np.sqrt(P)
    else:
        if t_ref is None:
            t_ref = 0.0
        i_ref = int(round(t_ref / ens.dt))
        if abs(i_ref * ens.dt - t_ref) > 1e-6 * ens.dt:
            raise ValueError("t_ref must be a multiple of the ensemble dt")
        for k in range(steps.size):
            i2 = i_ref + steps[k]
            if not (0 <= i2 <= N and 0 <= i_ref <= N):
                raise ValueError(f"lag {lag_grid[k]} exceeds the window")
            per_path = np.einsum("pi,pj->pij", V[:, i2, :], V[:, i_ref, :])
            vals[k] = per_path.mean(axis=0)
            errs[k] = per_path.std(axis=0, ddof=1) / np.sqrt(P)

    return CorrelationTable(lags=lag_grid[order], values=vals[order],
                            kind="estimated", stderr=errs[order])


def _mat_conv_full(a, b):
    """Full discrete convolution of matrix stacks: c[n] = sum_m a[m] @ b[n-m]."""
    na, d = a.shape[0], a.shape[1]
    nb = b.shape[0]
    out = np.zeros((na + nb - 1, d, d))
    for i in range(d):
        for k in range(d):
            acc = 0.0
            for j in range(d):
                acc = acc + fftconvolve(a[:, i, j], b[:, j, k])
            out[:, i, k] = acc
    return out


def _trapezoid_weights(n, dt):
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _snap_index(t, dt, name="t"):
    i = int(round(t / dt))
    if abs(i * dt - t) > 1e-6 * max(dt, abs(t)):
        raise ValueError(f"{name} must be a multiple of the resolvent dt")
    return i


class StationaryCovariance(NamedTuple):
    value: np.ndarray
    tail_bound: float


def _chi_on_dt_grid(chi, dt, lo, hi):
    """chi resampled at l*dt for integer l in [lo, hi], zero outside."""
    lags = np.arange(lo, hi + 1) * dt
    return chi.at(lags)


def theoretical_cov_stationary(res, G, chi, t, *, max_tail=None):
    """Stationary autocorrelation at lag t by truncated quadrature.

    ``C(t) = int_0^inf r(t+s) G G* r(s)* ds + iint r(s) chi(t+s'-s) r(s')*``
    with both integrals truncated at the resolvent horizon. Returns the
    matrix together with an extrapolated bound on the discarded tail.
    """
    table, bound = stationary_autocorrelation(res, G, chi, [t], max_tail=max_tail)
    return StationaryCovariance(table.values[0], bound)


def stationary_autocorrelation(res, G, chi, lags, *, max_tail=None):
    """Vectorized form of :func:`theoretical_cov_stationary` over lags."""
    dt = res.dt
    N = res.n_steps
    d = res.dim
    G = np.atleast_2d(np.asarray(G, dtype=float))
    GG = G @ G.T
    idx = [_snap_index(t, dt, "lag") for t in np.atleast_1d(lags)]
    if min(idx) < 0 or max(idx) > N:
        raise HorizonError("lags must lie within the resolvent horizon")
    it_max = max(idx)
    r = res.values
    w = _trapezoid_weights(N, dt)
    rw = r * w[:, None, None]

    X = _chi_on_dt_grid(chi, dt, -N, N + it_max)         # index l + N
    conv = _mat_conv_full(rw, X)                          # conv[n] = sum_m rw[m] X[n-m]

    out = np.empty((len(idx), d, d))
    for k, it in enumerate(idx):
        wt = _trapezoid_weights(N - it, dt)
        term1 = np.einsum("j,jab,jcb->ac", wt, r[it:], r[: N - it + 1] @ GG.T)
        # inner[j] = sum_m rw[m] X[it + j - m] = conv[it + j + N]
        inner = conv[it + N: it + N + N + 1]
        term2 = np.einsum("jab,jcb->ac", inner * w[:, None, None], r)
        out[k] = term1 + term2

    sup_chi = float(np.max(np.linalg.norm(X, 2, axis=(1, 2)))) if X.size else 0.0
    tail_r = res.extrapolated_tail_l1()
    full_r = res.l1_norm() + tail_r
    sup_r = float(np.max(res.norms()))
    bound = (np.linalg.norm(GG, 2) * sup_r * tail_r
             + sup_chi * 2.0 * tail_r * full_r)
    if max_tail is not None and bound > max_tail:
        raise HorizonError(
            f"quadrature tail bound {bound:.3e} exceeds max_tail {max_tail:.3e}")
    table = CorrelationTable(lags=np.asarray(idx, dtype=float) * dt,
                             values=out, kind="theoretical")
    return table, float(bound)


def theoretical_cov_stationary_alt(res, cov, G, chi, kernel, t, *, max_tail=None):
    """Alternative (anchored) stationary autocorrelation representation.

    ``C(t) = r(t) Sigma + int_0^inf r(t+s)(GG* - D Sigma - Sigma D*) r(s)*
    + iint r(s)(chi - gamma_Sigma)(t+s'-s) r(s')*``; agreement with the
    direct representation is a consistency check on both quadratures.
    """
    dt = res.dt
    N = res.n_steps
    G = np.atleast_2d(np.asarray(G, dtype=float))
    GG = G @ G.T
    it = _snap_index(t, dt, "lag")
    if not 0 <= it <= N:
        raise HorizonError("lag must lie within the resolvent horizon")
    r = res.values
    sigma = cov.sigma
    # derive M = D Sigma + Sigma D* from the resolvent's own derivative at 0:
    # r'(0) = -D, so M = -(derivs[0] @ sigma + sigma @ derivs[0].T)
    D = -res.derivs[0]
    M = D @ sigma + sigma @ D.T

    w = _trapezoid_weights(N, dt)
    wt = _trapezoid_weights(N - it, dt)
    term1 = np.einsum("j,jab,jcb->ac", wt, r[it:], r[: N - it + 1] @ (GG - M).T)

    lag_idx = np.arange(-N, N + it + 1)
    X = chi.at(lag_idx * dt) - gamma_sigma_values(kernel, cov, lag_idx * dt)
    rw = r * w[:, None, None]
    conv = _mat_conv_full(rw, X)
    inner = conv[it + N: it + N + N + 1]
    term2 = np.einsum("jab,jcb->ac", inner * w[:, None, None], r)

    sup_x = float(np.max(np.linalg.norm(X, 2, axis=(1, 2)))) if X.size else 0.0
    tail_r = res.extrapolated_tail_l1()
    full_r = res.l1_norm() + tail_r
    sup_r = float(np.max(res.norms()))
    bound = (np.linalg.norm(GG - M, 2) * sup_r * tail_r
             + sup_x * 2.0 * tail_r * full_r)
    if max_tail is not None and bound > max_tail:
        raise HorizonError(
            f"quadrature tail bound {bound:.3e} exceeds max_tail {max_tail:.3e}")
    return StationaryCovariance(r[it] @ sigma + term1 + term2, float(bound))


def theoretical_cov_ivp(res, cov, G, chi, kernel, s, t):
    """E(V(s+t) V(s)*) for the initial-value solution, by quadrature.

    Evaluates ``r(t) Sigma + int_0^s r(t+u)(GG* - D Sigma - Sigma D*) r(u)*
    du + iint r(a)(chi - gamma_Sigma)(t-a+b) r(b)* da db`` on the grid.
    When the fluctuation-dissipation relation holds the correction terms
    vanish and the result is r(t) Sigma for every s: this is the
    nonstationarity oracle.
    """
    dt = res.dt
    N = res.n_steps
    G = np.atleast_2d(np.asarray(G, dtype=float))
    GG = G @ G.T
    i_s = _snap_index(s, dt, "s")
    i_t = _snap_index(t, dt, "t")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if i_s + i_t > N:
        raise HorizonError("s + t exceeds the resolvent horizon")
    r = res.values
    sigma = cov.sigma
    D = -res.derivs[0]
    M = D @ sigma + sigma @ D.T

    ws = _trapezoid_weights(i_s, dt) if i_s > 0 else np.zeros(1)
    term1 = np.einsum("j,jab,jcb->ac", ws, r[i_t:i_t + i_s + 1],
                      r[: i_s + 1] @ (GG - M).T) if i_s > 0 else 0.0

    if i_s > 0:
        na = i_s + i_t
        wa = _trapezoid_weights(na, dt)
        lag_idx = np.arange(-i_s, i_t + i_s + 1)          # t - a + b range
        X = chi.at(lag_idx * dt) - gamma_sigma_values(kernel, cov, lag_idx * dt)
        rw = r[: na + 1] * wa[:, None, None]
        conv = _mat_conv_full(rw, X)                      # conv[n] = sum_a rw[a] X[n - a]
        # inner[b] = sum_a rw[a] X[i_t + b - a] = conv[i_t + b + i_s]
        inner = conv[i_t + i_s: i_t + 2 * i_s + 1]
        term2 = np.einsum("jab,jcb->ac", inner * ws[:, None, None], r[: i_s + 1])
    else:
        term2 = 0.0
    return r[i_t] @ sigma + term1 + term2


def cross_correlation_theory(res, chi, G, t):
    """E(V_inf(s+t) F(s)*) for the stationary solution, t != 0.

    ``int_0^inf r(u) chi(t-u) du`` plus the white-noise jump ``r(t) G G*``
    for positive lags. The formula excludes t = 0, where the two one-sided
    limits differ by the jump; see :func:`cross_correlation_zero_limits`.
    """
    if t == 0:
        raise ValueError("the cross-correlation formula excludes t = 0")
    dt = res.dt
    N = res.n_steps
    G = np.atleast_2d(np.asarray(G, dtype=float))
    i_t = _snap_index(t, dt, "t")
    r = res.values
    w = _trapezoid_weights(N, dt)
    X = chi.at((i_t - np.arange(N + 1)) * dt)
    out = np.einsum("m,mab,mbc->ac", w, r, X)
    if t > 0:
        if i_t > N:
            raise HorizonError("t exceeds the resolvent horizon")
        out = out + r[i_t] @ (G @ G.T)
    return out


def cross_correlation_zero_limits(res, chi, G):
    """One-sided t -> 0 limits (from below, from above) of the cross term."""
    dt = res.dt
    N = res.n_steps
    G = np.atleast_2d(np.asarray(G, dtype=float))
    w = _trapezoid_weights(N, dt)
    X = chi.at(-np.arange(N + 1) * dt)
    below = np.einsum("m,mab,mbc->ac", w, res.values, X)
    return below, below + (G @ G.T)


def kubo_cross_correlation(res, kernel, cov, t):
    """E(F(t) V(0)*) = int_0^inf gamma(t+u) Sigma r(u)* du for t > 0."""
    if not t > 0:
        raise ValueError("the force-velocity display requires t > 0")
    dt = res.dt
    N = res.n_steps
    w = _trapezoid_weights(N, dt)
    gam = eval_kernel_zero_extended(kernel, t + np.arange(N + 1) * dt)
    return np.einsum("m,mab,bc,mdc->ad", w, gam, cov.sigma, res.values)


def estimate_cross_correlation(ens, lag_grid):
    """Empirical velocity-force cross-correlation from stored noise records.

    The colored part pairs V with F0 samples; the white part is estimated
    against Brownian increments as ``E(V(s+t) dW_s*) G* / dt``.
    """
    if ens.noise is None:
        raise EstimationError("the ensemble was run without store_noise=True")
    if ens.n_paths < 2:
        raise EstimationError("cross-correlation estimation needs >= 2 paths")
    lag_grid, steps = _lag_steps(lag_grid, ens.dt)
    order = np.argsort(lag_grid)
    V = ens.V
    F0 = ens.noise.F0
    dW = ens.noise.dW
    G = ens.force.G
    N = ens.n_steps
    d = ens.dim
    P = ens.n_paths
    vals = np.empty((lag_grid.size, d, d))
    errs = np.empty((lag_grid.size, d, d))
    for k in range(steps.size):
        ell = steps[k]
        s0 = max(0, -ell)
        s1 = min(N - 1 - max(0, ell), N - 1)
        if s1 < s0:
            raise ValueError(f"lag {lag_grid[k]} exceeds the window")
        a = V[:, s0 + ell:s1 + ell + 1, :]
        per_path = np.einsum("psi,psj->pij", a, F0[:, s0:s1 + 1, :])
        per_path = per_path + np.einsum(
            "psi,psj->pij", a, dW[:, s0:s1 + 1, :]) @ G.T / ens.dt
        per_path /= (s1 - s0 + 1)
        vals[k] = per_path.mean(axis=0)
        errs[k] = per_path.std(axis=0, ddof=1) / np.sqrt(P)
    return CorrelationTable(lags=lag_grid[order], values=vals[order],
                            kind="estimated", stderr=errs[order])


class EquipartitionResult(NamedTuple):
    deviation: float
    z_scores: np.ndarray
    covariance: np.ndarray
    stderr: np.ndarray


def equipartition_check(ens, beta_m):
    """Deviation of the ensemble covariance from the thermal value I/(beta m)."""
    table = estimate_autocorrelation(ens, [0.0])
    c0 = table.values[0]
    se = table.stderr[0]
    target = np.eye(ens.dim) / beta_m
    dev = float(np.linalg.norm(c0 - target, 2))
    z = (c0 - target) / np.where(se > 0, se, np.inf)
    return EquipartitionResult(deviation=dev, z_scores=z, covariance=c0, stderr=se)


class WindowTestResult(NamedTuple):
    max_abs_z: float
    z_scores: np.ndarray
    flagged: bool
    first: np.ndarray
    second: np.ndarray


def stationarity_window_test(ens, threshold=4.0):
    """Compare same-time covariance over two disjoint time windows.

    For a stationary ensemble the two window estimates agree within
    statistical error; a covariance drift between windows flags a
    fluctuation-dissipation violation.
    """
    if ens.n_paths < 2:
        raise EstimationError("window test needs >= 2 paths")
    V = ens.V
    N = ens.n_steps
    half = (N + 1) // 2
    a = np.einsum("psi,psj->pij", V[:, :half], V[:, :half]) / half
    b = np.einsum("psi,psj->pij", V[:, half:], V[:, half:]) / (N + 1 - half)
    diff = a - b
    mean = diff.mean(axis=0)
    se = diff.std(axis=0, ddof=1) / np.sqrt(ens.n_paths)
    z = mean / np.where(se > 0, se, np.inf)
    mz = float(np.max(np.abs(z)))
    return WindowTestResult(max_abs_z=mz, z_scores=z, flagged=bool(mz > threshold),
                            first=a.mean(axis=0), second=b.mean(axis=0))
