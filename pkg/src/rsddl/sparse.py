"""Sparse-recovery primitives: hard thresholding, OMP, SOMP, reverse shrinkage.

The l0-style penalties of the training objective are realized as hard
sparsity budgets (s nonzeros per column, s nonzero rows per class block) and
solved by greedy pursuit.  Dictionaries passed to :func:`omp` / :func:`somp`
must have unit-norm columns; :func:`omp_columns` / :func:`somp_rows` wrap them
for dictionaries with arbitrary column scaling (including dead atoms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_matrix, as_vector

__all__ = [
    "SparsityBudget",
    "hard_threshold_per_column",
    "omp",
    "somp",
    "omp_columns",
    "somp_rows",
    "prox_push",
]

DEFAULT_RESIDUAL_TOL = 1e-7

# Columns with l2 norm at or below this are considered dead atoms.
_DEAD_COLUMN_TOL = 1e-12


@dataclass(frozen=True)
class SparsityBudget:
    """Hard sparsity budgets: nonzeros per coefficient column and nonzero
    rows per class block."""

    per_column_s: int
    row_s: int

    def __post_init__(self):
        if self.per_column_s < 1:
            raise ValueError(f"per_column_s must be >= 1, got {self.per_column_s}")
        if self.row_s < 1:
            raise ValueError(f"row_s must be >= 1, got {self.row_s}")

    def validate_for(self, n_atoms: int) -> None:
        if self.per_column_s > n_atoms:
            raise ValueError(f"per_column_s={self.per_column_s} exceeds atom count {n_atoms}")
        if self.row_s > n_atoms:
            raise ValueError(f"row_s={self.row_s} exceeds atom count {n_atoms}")


def hard_threshold_per_column(m: np.ndarray, s: int) -> np.ndarray:
    """Keep the s largest-magnitude entries of each column, zero the rest.

    Ties are broken toward the smaller row index.
    """
    m = as_matrix(m, "M")
    if not 1 <= s <= m.shape[0]:
        raise ValueError(f"s must be in [1, {m.shape[0]}], got {s}")
    out = np.zeros_like(m)
    for j in range(m.shape[1]):
        # stable sort on -|x|: equal magnitudes keep ascending row order
        order = np.argsort(-np.abs(m[:, j]), kind="stable")
        keep = order[:s]
        out[keep, j] = m[keep, j]
    return out


def _check_pursuit_dictionary(d: np.ndarray) -> None:
    norms = np.linalg.norm(d, axis=0)
    if np.any(norms <= _DEAD_COLUMN_TOL):
        dead = int(np.argmax(norms <= _DEAD_COLUMN_TOL))
        raise ValueError(f"dictionary column {dead} has zero norm")


def omp(d: np.ndarray, x: np.ndarray, s: int, residual_tol: float = DEFAULT_RESIDUAL_TOL) -> np.ndarray:
    """Orthogonal matching pursuit for a single signal.

    Grows the support greedily by the largest |d_i' r| correlation (ties to
    the smaller atom index), refits the coefficients by least squares on the
    support after every selection, and stops early once the residual norm
    drops to ``residual_tol``.  ``d`` must have unit-norm columns.
    """
    d = as_matrix(d, "D")
    x = as_vector(x, "x")
    if x.size != d.shape[0]:
        raise ValueError(f"signal length {x.size} != dictionary rows {d.shape[0]}")
    if not 1 <= s <= d.shape[1]:
        raise ValueError(f"s must be in [1, {d.shape[1]}], got {s}")
    _check_pursuit_dictionary(d)

    support: list[int] = []
    residual = x.copy()
    coef = np.zeros(0)
    for _ in range(s):
        if np.linalg.norm(residual) <= residual_tol:
            break
        corr = np.abs(d.T @ residual)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        sub = d[:, support]
        coef, *_ = np.linalg.lstsq(sub, x, rcond=None)
        residual = x - sub @ coef
    z = np.zeros(d.shape[1])
    if support:
        z[support] = coef
    return z


def somp(d: np.ndarray, y: np.ndarray, s: int, residual_tol: float = DEFAULT_RESIDUAL_TOL) -> np.ndarray:
    """Simultaneous OMP: one shared row support for all columns of ``y``.

    Rows are selected by the largest l2 norm of the corresponding row of
    ``D'R`` and the coefficients on the support are refit jointly by least
    squares.  On a single column this reduces exactly to :func:`omp`.
    """
    d = as_matrix(d, "D")
    y = as_matrix(y, "Y")
    if y.shape[0] != d.shape[0]:
        raise ValueError(f"signal rows {y.shape[0]} != dictionary rows {d.shape[0]}")
    if not 1 <= s <= d.shape[1]:
        raise ValueError(f"s must be in [1, {d.shape[1]}], got {s}")
    _check_pursuit_dictionary(d)

    support: list[int] = []
    residual = y.copy()
    coef = np.zeros((0, y.shape[1]))
    for _ in range(s):
        if np.linalg.norm(residual) <= residual_tol:
            break
        corr = np.linalg.norm(d.T @ residual, axis=1)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        sub = d[:, support]
        coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
        residual = y - sub @ coef
    z = np.zeros((d.shape[1], y.shape[1]))
    if support:
        z[support, :] = coef
    return z


def _unit_column_view(d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.linalg.norm(d, axis=0)
    alive = norms > _DEAD_COLUMN_TOL
    dn = d[:, alive] / norms[alive]
    return dn, norms, alive


def omp_columns(
    d: np.ndarray, y: np.ndarray, s: int, residual_tol: float = DEFAULT_RESIDUAL_TOL
) -> np.ndarray:
    """Per-column OMP against a dictionary with arbitrary column scaling.

    Normalizes the columns, skips dead (zero) atoms, and rescales the
    coefficients back so that ``d @ result`` approximates ``y``.
    """
    d = as_matrix(d, "D")
    y = as_matrix(y, "Y")
    dn, norms, alive = _unit_column_view(d)
    if dn.shape[1] == 0:
        raise ValueError("dictionary has no usable (nonzero) columns")
    s_eff = min(s, dn.shape[1])
    z = np.zeros((d.shape[1], y.shape[1]))
    for j in range(y.shape[1]):
        sub = omp(dn, y[:, j], s_eff, residual_tol)
        z[alive, j] = sub / norms[alive]
    return z


def somp_rows(
    d: np.ndarray, y: np.ndarray, s: int, residual_tol: float = DEFAULT_RESIDUAL_TOL
) -> np.ndarray:
    """Row-sparse SOMP against a dictionary with arbitrary column scaling."""
    d = as_matrix(d, "D")
    y = as_matrix(y, "Y")
    dn, norms, alive = _unit_column_view(d)
    if dn.shape[1] == 0:
        raise ValueError("dictionary has no usable (nonzero) columns")
    s_eff = min(s, dn.shape[1])
    zsub = somp(dn, y, s_eff, residual_tol)
    z = np.zeros((d.shape[1], y.shape[1]))
    z[alive, :] = zsub / norms[alive, None]
    return z


def prox_push(v, mu: float, gamma: float) -> np.ndarray:
    """Reverse-shrinkage proximal map: push small magnitudes up to mu/(2 gamma).

    Elementwise: entries with ``|v| > mu/(2 gamma)`` pass through unchanged;
    all others become ``sign(v) * mu/(2 gamma)`` with ``sign(0) = +1``.  The
    operator is idempotent and never maps a magnitude below the threshold.
    """
    if mu <= 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    v = np.asarray(v, dtype=np.float64)
    thr = mu / (2.0 * gamma)
    sign = np.where(v >= 0, 1.0, -1.0)
    return np.where(thr < np.abs(v), v, sign * thr)
