"""Sample paths of the fluctuating force F = F0 + G dW/dt.

F0 is the moving average of Brownian increments against the density phi,
evaluated by a left-point Riemann sum over the phi support. Streams are
counter-based (Philox keyed by seed and stream id), so ensemble paths are
reproducible and independent of generation order.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError
from .fdt import KAPPA_SAME


def _stream_children(seed, stream_id):
    """Three independent child seeds per (seed, stream): W, W-tilde, aux."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return ss.spawn(3)


def _generator(seed_seq):
    return np.random.Generator(np.random.Philox(seed_seq))


def aux_generator(seed, stream_id):
    """Generator for per-path auxiliary draws (initial conditions)."""
    return _generator(_stream_children(seed, stream_id)[2])


@dataclass(frozen=True)
class NoiseRealization:
    """One force realization on a simulation window of n_steps steps."""
    dt: float
    dW: np.ndarray         # (n_steps, d) Brownian increments of W
    dW_tilde: np.ndarray   # identical object to dW when kappa == 'same'
    F0: np.ndarray         # (n_steps + 1, d) colored-force samples
    seed: int
    stream_id: int

    @property
    def n_steps(self):
        return self.dW.shape[0]

    @property
    def dim(self):
        return self.dW.shape[1]


def _phi_window(model, dt):
    """phi resampled at lags k dt, k = -K..K, with K covering the support."""
    if model.is_zero_phi:
        return np.zeros((1, model.dim, model.dim)), 0
    K = int(np.ceil(model.half_width / dt - 1e-9))
    lags = (np.arange(2 * K + 1) - K) * dt
    return model.phi_at(lags), K


def sample_force(model, dt, n_steps, pre_roll, seed, stream_id=0):
    """Draw one realization of the force on an n_steps window.

    ``pre_roll`` extra increments precede t = 0 so F0(0) already sees a
    full history window; the grid is also extended past the window end
    because the density is two-sided. Deterministic in (seed, stream_id).
    """
    out = sample_force_batch(model, dt, n_steps, pre_roll, seed, [stream_id])
    dW = np.ascontiguousarray(out.dW[0])
    if out.dW_tilde is out.dW:
        dW_tilde = dW
    else:
        dW_tilde = np.ascontiguousarray(out.dW_tilde[0])
    return NoiseRealization(dt=float(dt), dW=dW, dW_tilde=dW_tilde,
                            F0=out.F0[0], seed=int(seed), stream_id=int(stream_id))


class ForceBatch(NamedTuple):
    dW: np.ndarray        # (paths, n_steps, d)
    dW_tilde: np.ndarray  # same object as dW when kappa == 'same'
    F0: np.ndarray        # (paths, n_steps + 1, d)


def sample_force_batch(model, dt, n_steps, pre_roll, seed, stream_ids):
    """Vectorized force synthesis for a batch of stream ids.

    Each path's increments come from its own counter-based stream, so the
    batch decomposition never changes the numbers.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    pre_roll = int(pre_roll)
    if pre_roll < 0:
        raise ValueError("pre_roll must be nonnegative")
    d = model.dim
    phi_w, K = _phi_window(model, dt)
    if pre_roll * dt < model.half_width - 1e-9 * dt and not model.is_zero_phi:
        raise ConfigError([
            f"/pre_roll: pre_roll*dt = {pre_roll * dt:g} is shorter than the "
            f"phi support {model.half_width:g}"])
    stream_ids = list(stream_ids)
    P = len(stream_ids)
    n_ext = pre_roll + n_steps + K + 1
    same = model.kappa == KAPPA_SAME

    dW_ext = np.empty((P, n_ext, d))
    dWt_ext = dW_ext if same else np.empty((P, n_ext, d))
    root_dt = np.sqrt(dt)
    for p, sid in enumerate(stream_ids):
        ch_w, ch_wt, _ = _stream_children(seed, sid)
        dW_ext[p] = _generator(ch_w).normal(0.0, root_dt, size=(n_ext, d))
        if not same:
            dWt_ext[p] = _generator(ch_wt).normal(0.0, root_dt, size=(n_ext, d))

    if model.is_zero_phi:
        F0 = np.zeros((P, n_steps + 1, d))
    else:
        # F0(t_n) = sum_q phi((q-K) dt) dW~[pre_roll + n - q + K]
        #         = conv(phi_window, dW~)[pre_roll + n + K]
        F0 = np.zeros((P, n_steps + 1, d))
        lo = pre_roll + K
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc = acc + fftconvolve(
                    dWt_ext[:, :, j], phi_w[None, :, i, j], axes=1)
            F0[:, :, i] = acc[:, lo:lo + n_steps + 1]

    dW = np.ascontiguousarray(dW_ext[:, pre_roll:pre_roll + n_steps])
    if same:
        dWt = dW
    else:
        dWt = np.ascontiguousarray(dWt_ext[:, pre_roll:pre_roll + n_steps])
    return ForceBatch(dW=dW, dW_tilde=dWt, F0=F0)


@dataclass(frozen=True)
class ForceCorrelation:
    """Labeled components of the force autocorrelation.

    ``colored`` is the moving-average part C_F0 = phi (*) reversed-phi*;
    ``cross`` holds the phi-white cross terms (None unless the Brownian
    motions coincide); ``white_weight`` is the G G* delta-distribution
    weight, reported separately because it is not a function.
    """
    colored: "CorrelationTable"
    cross: Optional["CorrelationTable"]
    white_weight: np.ndarray


def force_autocorrelation_theory(model, lag_grid):
    """Closed-form force autocorrelation components on a lag grid."""
    from .fdt import chi_on_native_grid, ForceModel
    from .stats import CorrelationTable
    from .transforms import interp_matrix_series, matrix_correlation

    lag_grid = np.atleast_1d(np.asarray(lag_grid, dtype=float))
    d = model.dim
    if model.is_zero_phi:
        zeros = np.zeros((lag_grid.size, d, d))
        colored = CorrelationTable(lags=lag_grid, values=zeros, kind="theoretical")
        cross_tab = None
        if model.kappa == KAPPA_SAME:
            cross_tab = CorrelationTable(lags=lag_grid, values=zeros.copy(),
                                         kind="theoretical")
        return ForceCorrelation(colored=colored, cross=cross_tab,
                                white_weight=model.G @ model.G.T)

    lags, conv = matrix_correlation(model.times, model.phi, model.times, model.phi)
    colored = CorrelationTable(
        lags=lag_grid,
        values=interp_matrix_series(lags, conv.real, lag_grid),
        kind="theoretical")
    cross_tab = None
    if model.kappa == KAPPA_SAME:
        phi_f = model.phi_at(lag_grid)
        phi_r = model.phi_at(-lag_grid)
        cross = phi_f @ model.G.T + model.G @ np.swapaxes(phi_r, -1, -2)
        cross_tab = CorrelationTable(lags=lag_grid, values=cross, kind="theoretical")
    return ForceCorrelation(colored=colored, cross=cross_tab,
                            white_weight=model.G @ model.G.T)
