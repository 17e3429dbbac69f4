"""Dense matrix kernels, elementwise activations, and the deterministic RNG.

Matrices are plain 2-D float64 numpy arrays with samples stored as columns.
Everything in this module is a pure function of its inputs; arrays are treated
as immutable once built and every routine returns fresh arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "NumericsWarning",
    "as_matrix",
    "as_vector",
    "normalize_columns",
    "pinv",
    "ridge_solve",
    "pca_fit",
    "ActivationKind",
    "Activation",
    "Rng",
]


class NumericsWarning(UserWarning):
    """Diagnostics channel for degenerate solve paths (fallbacks, rank loss)."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a nonempty 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Validate ``a`` as a nonempty finite float64 vector (flattened to 1-D)."""
    v = np.asarray(a, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return v


def normalize_columns(d: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Scale the columns of ``d`` to unit l2 norm.

    Returns ``(normalized, scales)`` where ``scales`` holds the original column
    norms.  Columns with norm below ``tol`` are left untouched and get scale
    1.0, so dead atoms stay detectable by the caller.
    """
    d = np.array(d, dtype=np.float64)
    norms = np.linalg.norm(d, axis=0)
    alive = norms > tol
    d[:, alive] /= norms[alive]
    return d, np.where(alive, norms, 1.0)


def pinv(a: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``rel_tol`` times the largest singular value are
    treated as exactly zero, which keeps the inverse finite for rank-deficient
    inputs (e.g. dictionaries with zeroed entries).
    """
    a = as_matrix(a, "A")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must be in (0, 1), got {rel_tol}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = rel_tol * s[0]  # s is sorted descending
    keep = s > cutoff
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def ridge_solve(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """Minimize ``||B - A X||_F^2 + alpha ||X||_F^2`` over X.

    Solved through the normal equations ``(A'A + alpha I) X = A'B``.  When
    ``alpha == 0`` and the system is singular, falls back to the
    pseudo-inverse path (minimum-norm solution) and reports it through a
    :class:`NumericsWarning`.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"row mismatch: A has {a.shape[0]}, B has {b.shape[0]}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    gram = a.T @ a + alpha * np.eye(a.shape[1])
    try:
        np.linalg.cholesky(gram)  # cheap positive-definiteness probe
        return np.linalg.solve(gram, a.T @ b)
    except np.linalg.LinAlgError:
        warnings.warn(
            "singular normal equations; using pseudo-inverse fallback",
            NumericsWarning,
            stacklevel=2,
        )
        return pinv(a) @ b


def pca_fit(x: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Fit a d-component PCA to the columns of ``x``.

    Returns ``(mean, basis)``: ``mean`` is the column mean (rows x 1) and
    ``basis`` has ``d`` orthonormal columns ordered by descending explained
    variance.  Projection of a sample is ``basis.T @ (sample - mean)``.

    If ``d`` exceeds the rank of the centered data, the extra columns are
    orthonormal complement vectors (warned through :class:`NumericsWarning`).
    Each basis column is sign-normalized so its first nonzero entry is
    positive, making the fit reproducible.
    """
    x = as_matrix(x, "X")
    if not 1 <= d <= min(x.shape):
        raise ValueError(f"d must be in [1, min(rows, cols)] = [1, {min(x.shape)}], got {d}")
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s[0] > 0 else 0
    if rank < d:
        warnings.warn(
            f"requested {d} components but data rank is {rank}; "
            "padding with orthonormal complement vectors",
            NumericsWarning,
            stacklevel=2,
        )
    basis = u[:, :d].copy()
    for j in range(d):
        nz = np.nonzero(np.abs(basis[:, j]) > 1e-12)[0]
        if nz.size and basis[nz[0], j] < 0:
            basis[:, j] = -basis[:, j]
    return mean, basis


class ActivationKind(Enum):
    TANH = "tanh"
    IDENTITY = "identity"


@dataclass(frozen=True)
class Activation:
    """Elementwise activation with a total (clamped) inverse.

    ``clamp_eps`` guards the tanh inverse: inputs are clipped into
    ``(-1 + clamp_eps, 1 - clamp_eps)`` before ``arctanh`` so the inverse is
    defined even at saturation.  The identity activation never clamps.
    """

    kind: ActivationKind = ActivationKind.TANH
    clamp_eps: float = 1e-6

    def __post_init__(self):
        if self.clamp_eps <= 0:
            raise ValueError(f"clamp_eps must be > 0, got {self.clamp_eps}")

    def forward(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        if self.kind is ActivationKind.TANH:
            return np.tanh(m)
        return m.copy()

    def inverse(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        if self.kind is ActivationKind.TANH:
            clipped = np.clip(m, -1.0 + self.clamp_eps, 1.0 - self.clamp_eps)
            return np.arctanh(clipped)
        return m.copy()


def _fnv1a(data: bytes) -> int:
    # FNV-1a, 64-bit: simple, documented, platform-independent.
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class Rng:
    """Deterministic random stream with reproducible named substreams.

    Backed by the Philox4x64-10 counter-based bit generator keyed by
    ``(seed, stream_tag)``, so the same seed yields the same bit stream on
    every platform.  ``substream(*tags)`` derives an independent child stream
    whose tag is the FNV-1a 64-bit hash of the parent tag and the stringified
    tags; draws from one substream never affect another, which is what makes
    per-iteration, per-target randomness order-independent.

    A single Rng instance is single-owner: never share one across threads.
    """

    def __init__(self, seed: int, _tag: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._tag = _tag & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self._tag], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, *tags) -> "Rng":
        label = "/".join(str(t) for t in tags)
        tag = _fnv1a(self._tag.to_bytes(8, "little") + label.encode("utf-8"))
        return Rng(self.seed, _tag=tag)

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def random(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
