"""Shared synthetic data builders used across the test suite.

Everything here is seeded through the package Rng so tests are bit-stable.
"""

import numpy as np

from rsddl.dataio import make_dataset
from rsddl.numerics import Activation, ActivationKind, Rng, normalize_columns
from rsddl.greedy import Architecture


def dct_basis(n):
    """Orthonormal DCT-II basis, columns are basis vectors."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * j + 1) * k / (2 * n))
    c[0] *= np.sqrt(1.0 / n)
    c[1:] *= np.sqrt(2.0 / n)
    return c.T


def coherence(d):
    g = np.abs(d.T @ d)
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def low_coherence_frame(m, n_total, rng):
    """Random frame with certified coherence < 0.5.

    Identity plus DCT columns has pairwise |inner products| strictly below
    0.5; a random rotation and random column signs leave them unchanged
    while randomizing the frame itself.
    """
    extra = n_total - m
    cols = rng.permutation(m)[:extra]
    frame = np.hstack([np.eye(m), dct_basis(m)[:, cols]])
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    signs = np.where(rng.random(n_total) < 0.5, -1.0, 1.0)
    return (q @ frame) * signs


def planted_sparse_signal(d, s, rng):
    """(support, coefficients, signal) with coefficient magnitudes in [0.5, 1.5]."""
    sup = np.sort(rng.permutation(d.shape[1])[:s])
    coef = np.where(rng.random(s) < 0.5, -1.0, 1.0) * (0.5 + rng.random(s))
    return sup, coef, d[:, sup] @ coef


def planted_row_sparse(d, n_rows, n_cols, rng):
    """(row support, codes, signals) with a shared row support."""
    rows = np.sort(rng.permutation(d.shape[1])[:n_rows])
    z = np.zeros((d.shape[1], n_cols))
    z[rows, :] = np.where(rng.random((n_rows, n_cols)) < 0.5, -1.0, 1.0) * (
        0.5 + rng.random((n_rows, n_cols))
    )
    return rows, z, d @ z


def planted_dictionary_data(seed=11, ncols=20, n_supports=4):
    """Data exactly factorizable as a 10x15 unit-column dictionary times
    3-sparse codes drawn from a few distinct supports."""
    rng = Rng(seed)
    d0 = rng.standard_normal((10, 15))
    d0, _ = normalize_columns(d0)
    sups = [np.sort(rng.permutation(15)[:3]) for _ in range(n_supports)]
    z0 = np.zeros((15, ncols))
    for j in range(ncols):
        sup = sups[j % n_supports]
        z0[sup, j] = np.where(rng.random(3) < 0.5, -1.0, 1.0) * (1.0 + rng.random(3))
    return d0, z0, d0 @ z0


def two_class_deep_factor_data(seed=97, noise=0.05, coef=2.0, ncols=40):
    """2-class, 20-dim data generated by a 3-layer tanh stack with one
    deep row per class; the model family the joint trainer optimizes over."""
    rng = Rng(seed)
    d1, _ = normalize_columns(rng.standard_normal((20, 16)))
    d2, _ = normalize_columns(rng.standard_normal((16, 8)))
    d3, _ = normalize_columns(rng.standard_normal((8, 4)))
    z = np.zeros((4, ncols))
    labels = np.zeros(ncols, dtype=np.int64)
    half = ncols // 2
    signs = rng.random((ncols,))
    mags = rng.random((ncols,))
    for j in range(ncols):
        c = 1 if j < half else 2
        row = 0 if c == 1 else 1
        z[row, j] = coef * (1.0 + mags[j]) * (1.0 if signs[j] < 0.5 else -1.0)
        labels[j] = c
    x = d1 @ np.tanh(d2 @ np.tanh(d3 @ z)) + noise * rng.standard_normal((20, ncols))
    return make_dataset(x, labels)


def two_class_mixture_data(seed=6, dim=8, s_para=1.0, s_cross=0.1, n_train=200, n_test=200):
    """Two-class Gaussian mixture separable at distance 4 sigma.

    Class means sit on orthogonal positive directions; each class's noise has
    sd ``s_para`` along its own mean direction and ``s_cross`` across.  The
    mean distance equals exactly 4x the noise sd along the discriminant
    direction.  Returns (train dataset, test features, test labels).
    """
    rng = Rng(seed)
    u = np.zeros(dim)
    v = np.zeros(dim)
    hd = dim // 2
    u[:hd] = np.abs(rng.standard_normal(hd))
    u /= np.linalg.norm(u)
    v[hd:] = np.abs(rng.standard_normal(dim - hd))
    v /= np.linalg.norm(v)
    sigma_d = np.sqrt((s_para**2 + s_cross**2) / 2.0)
    half = 4.0 * sigma_d / np.sqrt(2.0)
    m1 = u * half
    m2 = v * half

    def draw(n):
        xs, ys = [], []
        for c, m, axis in ((1, m1, u), (2, m2, v)):
            eps = rng.standard_normal((dim, n))
            par = axis[:, None] * (axis @ eps)
            eps = s_para * par + s_cross * (eps - par)
            xs.append(m[:, None] + eps)
            ys.extend([c] * n)
        return np.hstack(xs), np.array(ys, dtype=np.int64)

    xtr, ytr = draw(n_train)
    xte, yte = draw(n_test)
    return make_dataset(xtr, ytr), xte, yte


MIXTURE_ARCH = Architecture((6, 4, 2), activation=Activation(ActivationKind.IDENTITY))
DEEP_ARCH = Architecture((16, 8, 4))
