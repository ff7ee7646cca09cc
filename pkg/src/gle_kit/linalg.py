"""Small dense linear-algebra helpers used throughout the package."""

import numpy as np


def sqrtm_psd(mats, clip_tol=0.0):
    """Hermitian square root of a PSD matrix (or stack of matrices).

    Eigenvalues below zero are clipped to zero; the caller is responsible
    for checking definiteness beforehand if clipping is not acceptable.

    Parameters
    ----------
    mats : ndarray, shape (..., d, d)
        Hermitian positive semidefinite matrix or stack thereof.
    clip_tol : float
        Eigenvalues in [-clip_tol, 0) are treated as roundoff and clipped.

    Returns
    -------
    ndarray, shape (..., d, d)
        The unique Hermitian PSD square root (same dtype class as input).
    """
    mats = np.asarray(mats)
    w, q = np.linalg.eigh(mats)
    w = np.clip(w, 0.0, None)
    root = (q * np.sqrt(w)[..., None, :]) @ np.conjugate(np.swapaxes(q, -1, -2))
    if np.isrealobj(mats):
        root = root.real
    return root


def symmetrize(mats):
    """(M + M*)/2 for a matrix or stack of matrices."""
    mats = np.asarray(mats)
    return 0.5 * (mats + np.conjugate(np.swapaxes(mats, -1, -2)))


def min_eigenvalue(mats):
    """Smallest eigenvalue over a stack of Hermitian matrices."""
    w = np.linalg.eigvalsh(np.asarray(mats))
    return float(w.min())


def spectral_norms(mats):
    """2-norm of each matrix in a stack, shape (...,)."""
    return np.linalg.norm(np.asarray(mats), ord=2, axis=(-2, -1))


def polar_orthogonal_factor(mat, sym_tol=1e-12):
    """Orthogonal factor P of the polar decomposition ``mat = P H``.

    For a symmetric PSD input the factor is the identity; singular inputs
    get the factor completed orthogonally from the SVD.
    """
    mat = np.asarray(mat, dtype=float)
    d = mat.shape[0]
    scale = np.linalg.norm(mat)
    if scale == 0.0:
        return np.eye(d)
    if np.linalg.norm(mat - mat.T) <= sym_tol * scale:
        w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        if w.min() >= -sym_tol * scale:
            return np.eye(d)
    u, _, vh = np.linalg.svd(mat)
    return u @ vh
