"""Stochastic integration of the memory equation.

Marches V_{n+1} = V_n - dt (D V + memory sum) + F0 dt + G dW with the
instantaneous drift and the memory endpoint treated implicitly, exactly
as the resolvent solver does (trapezoid in the smooth part, Euler-Maruyama
in the white noise). Paths are independent streams; the memory sum runs
over a truncated history window through a BLAS matrix product.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cholesky, lu_factor, lu_solve
from scipy.signal import fftconvolve

from .errors import EstimationError, InfeasibilityError
from .kernels import eval_kernel_zero_extended, kernel_tail_time
from .noise import ForceBatch, aux_generator, sample_force_batch
from .resolvent import paley_wiener_check, solve_resolvent

CHUNK = 1024            # fixed so the batch decomposition never changes results
MEMORY_TAIL_RTOL = 1e-8  # history window keeps all but this fraction of ||gamma||


def _worker_count():
    env = os.environ.get("GLE_KIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Ensemble of sample paths on a shared uniform grid."""
    dt: float
    n_steps: int
    n_paths: int
    V: np.ndarray                      # (n_paths, n_steps + 1, d)
    mode: str                          # 'ivp' or 'stationary'
    init_cov: Optional[np.ndarray]
    burn_in: int                       # steps discarded before t = 0
    seed: int
    stream_offset: int
    force: object                      # the ForceModel that drove the paths
    noise: Optional[ForceBatch] = None  # window-aligned records when stored
    memory_window: int = 0             # history length used by the integrator

    @property
    def dim(self):
        return self.V.shape[2]

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


def _memory_weights(kernel, dt, n_steps):
    """Truncated trapezoid weights dt*gamma(k dt), k = 0..L."""
    if kernel.is_zero:
        return None, 0
    t_mem = kernel_tail_time(kernel, MEMORY_TAIL_RTOL)
    L = int(min(n_steps, max(1, int(np.ceil(t_mem / dt)))))
    w = eval_kernel_zero_extended(kernel, np.arange(L + 1) * dt) * dt
    return w, L


def _march_chunk(D, w, L, dt, G, V0, F0, dW):
    """Integrate one chunk of paths; V0 (d,P), F0 (P,n+1,d), dW (P,n,d)."""
    d = D.shape[0]
    P = V0.shape[1]
    n = dW.shape[1]
    Fc = np.ascontiguousarray(F0.transpose(1, 2, 0))     # (n+1, d, P)
    Wc = np.ascontiguousarray(dW.transpose(1, 2, 0))     # (n, d, P)

    if w is None:
        A = np.eye(d) + 0.5 * dt * D
    else:
        A = np.eye(d) + 0.5 * dt * D + 0.25 * dt * w[0]
    lu = lu_factor(A)

    V = np.empty((n + 1, d, P))
    V[0] = V0
    g_prev = -(D @ V[0])
    if w is not None:
        Wdesc = np.ascontiguousarray(
            w[::-1][:-1].transpose(1, 0, 2).reshape(d, L * d))
        half_w0 = 0.5 * w[0]
    for i in range(n):
        if w is not None:
            lo = max(1, i + 1 - L)
            nwin = i + 1 - lo
            if nwin > 0:
                hist = V[lo:i + 1].reshape(nwin * d, P)
                J = Wdesc[:, (L - nwin) * d:] @ hist
            else:
                J = np.zeros((d, P))
            if i + 1 <= L:
                J += 0.5 * (w[i + 1] @ V[0])
        rhs = V[i] + 0.5 * dt * (g_prev - (J if w is not None else 0.0))
        rhs += Fc[i] * dt + G @ Wc[i]
        V[i + 1] = lu_solve(lu, rhs)
        if w is not None:
            g_prev = -(D @ V[i + 1]) - (J + half_w0 @ V[i + 1])
        else:
            g_prev = -(D @ V[i + 1])
    return V


def _draw_initials(cov_init, v0, d, seed, stream_ids):
    P = len(stream_ids)
    if v0 is not None:
        v0 = np.asarray(v0, dtype=float)
        if v0.ndim == 1:
            return np.tile(v0[:, None], (1, P))
        return np.ascontiguousarray(v0.T)
    if cov_init is None:
        return np.zeros((d, P))
    chol = cholesky(cov_init.sigma, lower=True)
    out = np.empty((d, P))
    for p, sid in enumerate(stream_ids):
        z = aux_generator(seed, sid).normal(size=d)
        out[:, p] = chol @ z
    return out


def _run_ensemble(D, kernel, force, cov_init, dt, n_steps, n_paths, seed, *,
                  v0=None, pre_roll=None, store_noise=False, stream_offset=0):
    D = np.atleast_2d(np.asarray(D, dtype=float))
    d = D.shape[0]
    w, L = _memory_weights(kernel, dt, n_steps)
    if pre_roll is None:
        pre_roll = int(np.ceil(force.half_width / dt - 1e-9)) if not force.is_zero_phi else 0
    if v0 is not None:
        v0 = np.asarray(v0, dtype=float)

    V_out = np.empty((n_paths, n_steps + 1, d))
    F0_out = np.empty((n_paths, n_steps + 1, d)) if store_noise else None
    dW_out = np.empty((n_paths, n_steps, d)) if store_noise else None

    def run_chunk(p0):
        p1 = min(p0 + CHUNK, n_paths)
        ids = [stream_offset + p for p in range(p0, p1)]
        batch = sample_force_batch(force, dt, n_steps, pre_roll, seed, ids)
        v0_chunk = v0[p0:p1] if (v0 is not None and v0.ndim == 2) else v0
        V0 = _draw_initials(cov_init, v0_chunk, d, seed, ids)
        V = _march_chunk(D, w, L, dt, force.G, V0, batch.F0, batch.dW)
        V_out[p0:p1] = V.transpose(2, 0, 1)
        if store_noise:
            F0_out[p0:p1] = batch.F0
            dW_out[p0:p1] = batch.dW

    starts = list(range(0, n_paths, CHUNK))
    workers = min(_worker_count(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_chunk, starts))
    else:
        for p0 in starts:
            run_chunk(p0)

    noise = None
    if store_noise:
        noise = ForceBatch(dW=dW_out, dW_tilde=None, F0=F0_out)
    return V_out, noise, L


def integrate_ivp(D, kernel, force, cov_init, dt, n_steps, n_paths, seed, *,
                  v0=None, pre_roll=None, store_noise=False, stream_offset=0):
    """Integrate the initial-value problem for an ensemble of paths.

    Each path draws V0 ~ N(0, cov_init) (or uses ``v0`` verbatim when
    given), independent of its force realization, and marches the
    semi-implicit scheme. Deterministic in (seed, stream_offset).

    Parameters
    ----------
    cov_init : CovarianceSpec or None
        Law of the initial condition; None means V0 = 0.
    v0 : array or None
        Deterministic initial condition override, shape (d,) or (paths, d).
    """
    V, noise, L = _run_ensemble(
        D, kernel, force, cov_init, dt, n_steps, n_paths, seed,
        v0=v0, pre_roll=pre_roll, store_noise=store_noise,
        stream_offset=stream_offset)
    return TrajectoryEnsemble(
        dt=float(dt), n_steps=int(n_steps), n_paths=int(n_paths), V=V,
        mode="ivp", init_cov=None if cov_init is None else cov_init.sigma,
        burn_in=0, seed=int(seed), stream_offset=int(stream_offset),
        force=force, noise=noise, memory_window=L)


def stationary_burn_in_steps(res, dt, rel_tol=1e-3):
    """Burn-in length from the resolvent tail.

    Smallest T_b with int_{T_b}^{H} ||r|| dt < rel_tol * int_0^H ||r|| dt,
    converted to steps of the simulation grid.
    """
    nrm = res.norms()
    seg = 0.5 * (nrm[1:] + nrm[:-1]) * res.dt
    total = float(seg.sum())
    if total == 0.0:
        return 0
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    idx = int(np.argmax(tail < rel_tol * total))
    return int(np.ceil(idx * res.dt / dt))


def default_paley_wiener_grid(omega_max=64.0, n=2049):
    """Symmetric diagnostic grid including omega = 0."""
    return np.linspace(-omega_max, omega_max, n)


def integrate_stationary(D, kernel, force, dt, n_steps, n_paths, burn_in, seed, *,
                         cov=None, pre_roll=None, store_noise=False,
                         stream_offset=0, skip_paley_wiener=False):
    """Approximate the infinite-horizon stationary solution by burn-in.

    Runs the initial-value integrator from V0 = 0 for ``burn_in`` extra
    steps and discards them, which converges to the stationary solution in
    mean square. Refuses to run when the Paley-Wiener diagnostic flags a
    non-integrable resolvent.
    """
    if not skip_paley_wiener:
        report = paley_wiener_check(D, kernel, default_paley_wiener_grid(), cov=cov)
        if not report.verdict:
            raise InfeasibilityError(
                "Paley-Wiener diagnostic failed (min singular value "
                f"{report.tier2_min_singular:.3e}); the resolvent is unlikely "
                "to be integrable and no stationary burn-in exists")
    if burn_in is None:
        res = solve_resolvent(D, kernel, max(dt, n_steps * dt / 8192),
                              max(10.0, 2 * n_steps * dt))
        burn_in = stationary_burn_in_steps(res, dt)
    burn_in = int(burn_in)
    total = n_steps + burn_in
    V, noise, L = _run_ensemble(
        D, kernel, force, None, dt, total, n_paths, seed,
        pre_roll=pre_roll, store_noise=store_noise, stream_offset=stream_offset)
    V_kept = np.ascontiguousarray(V[:, burn_in:, :])
    del V
    if noise is not None:
        noise = ForceBatch(dW=np.ascontiguousarray(noise.dW[:, burn_in:]),
                           dW_tilde=None,
                           F0=np.ascontiguousarray(noise.F0[:, burn_in:]))
    return TrajectoryEnsemble(
        dt=float(dt), n_steps=int(n_steps), n_paths=int(n_paths), V=V_kept,
        mode="stationary", init_cov=None, burn_in=burn_in, seed=int(seed),
        stream_offset=int(stream_offset), force=force, noise=noise,
        memory_window=L)


def pathwise_reconstruct(res, V0, noise, G):
    """Reconstruct one path from the resolvent and a noise realization.

    ``V(t_n) = r(t_n) V0 + sum_{m<n} r(t_n - t_m) (F0(t_m) dt + G dW_m)``,
    the discrete counterpart of the solution formula; integrators are
    checked against it on shared noise draws.
    """
    if abs(res.dt - noise.dt) > 1e-12 * res.dt:
        raise ValueError("resolvent and noise grids do not match")
    n = noise.n_steps
    if res.n_steps < n:
        raise ValueError("resolvent horizon shorter than the noise window")
    d = res.dim
    G = np.atleast_2d(np.asarray(G, dtype=float))
    V0 = np.asarray(V0, dtype=float).reshape(d)
    q = noise.F0[:n] * res.dt + noise.dW @ G.T          # (n, d)
    r = res.values[: n + 1]
    conv = np.zeros((n + 1, d))
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc = acc + fftconvolve(r[:, i, j], q[:, j])[: n + 1]
        conv[:, i] = acc
    out = r @ V0 + conv
    out[:n] -= q                     # left-point sum excludes m = n
    return out


class GapEstimate(NamedTuple):
    t: float
    gap: float
    stderr: float


def convergence_to_stationary(D, kernel, force, cov_init, t_checkpoints,
                              n_paths, seed, dt, *, pre_steps=None):
    """Mean-square gap between paired initial-value and pre-rolled paths.

    Both arms share the same force realization on the observation window;
    the first starts at V0 ~ N(0, cov_init) at t = 0, the second starts at
    zero ``pre_steps`` earlier, long enough to be effectively stationary
    by t = 0. Returns one (t, gap, stderr) triple per checkpoint.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    d = D.shape[0]
    t_checkpoints = sorted(float(t) for t in t_checkpoints)
    n_steps = int(round(max(t_checkpoints) / dt))
    if pre_steps is None:
        res = solve_resolvent(D, kernel, max(dt, n_steps * dt / 8192),
                              max(10.0, 2 * n_steps * dt))
        pre_steps = stationary_burn_in_steps(res, dt)
    pre_steps = int(pre_steps)
    total = pre_steps + n_steps
    w, L = _memory_weights(kernel, dt, total)
    pre_roll = int(np.ceil(force.half_width / dt - 1e-9)) if not force.is_zero_phi else 0
    idx = [int(round(t / dt)) for t in t_checkpoints]

    sq = np.empty((n_paths, len(idx)))
    for p0 in range(0, n_paths, CHUNK):
        p1 = min(p0 + CHUNK, n_paths)
        ids = list(range(p0, p1))
        batch = sample_force_batch(force, dt, total, pre_roll, seed, ids)
        VB = _march_chunk(D, w, L, dt, force.G,
                          np.zeros((d, p1 - p0)), batch.F0, batch.dW)
        V0A = _draw_initials(cov_init, None, d, seed, ids)
        VA = _march_chunk(D, w, L, dt, force.G, V0A,
                          batch.F0[:, pre_steps:], batch.dW[:, pre_steps:])
        for k, i in enumerate(idx):
            diff = VA[i] - VB[pre_steps + i]
            sq[p0:p1, k] = np.sum(diff * diff, axis=0)
    gaps = sq.mean(axis=0)
    if n_paths < 2:
        raise EstimationError("convergence gap needs at least two paths")
    errs = sq.std(axis=0, ddof=1) / np.sqrt(n_paths)
    return [GapEstimate(t=t_checkpoints[k], gap=float(gaps[k]), stderr=float(errs[k]))
            for k in range(len(idx))]
