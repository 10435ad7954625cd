"""Numpy implementation of the covariance sweep kernels.

Serves as the reference semantics for the compiled backend and as the
fallback when the extension is not built.  All inputs are complex128;
``sigma`` is Hermitian.
"""

import numpy as np


def quadforms(sigma, rows):
    """Quadratic and squared forms of candidate rows against a covariance.

    For each row r_j of ``rows`` returns

        q_j = Re(r_j sigma r_j^H)
        s_j = r_j sigma^2 r_j^H = || r_j sigma ||^2

    Parameters
    ----------
    sigma : (n, n) complex Hermitian ndarray
    rows : (m, n) complex ndarray

    Returns
    -------
    (q, s) : pair of (m,) float ndarrays
    """
    w = rows @ sigma
    q = np.einsum("ij,ij->i", w, rows.conj()).real
    s = np.einsum("ij,ij->i", w, w.conj()).real
    return q, s


def rank_one_downdate(sigma, row, precision):
    """Absorb one precision-weighted row into ``sigma`` in place.

    Applies the Sherman-Morrison update of the covariance for a new rank-one
    information term ``precision * row^H row``:

        sigma -= (sigma row^H)(row sigma) * precision / (1 + precision * q)

    with q = row sigma row^H.  Returns q (useful for metric bookkeeping).
    """
    u = sigma @ row.conj()
    q = float(np.real(row @ u))
    scale = precision / (1.0 + precision * q)
    sigma -= scale * np.outer(u, u.conj())
    return q
