"""Test-time sparse encoding and support-based classification.

A test sample is encoded by the same split scheme used in training: OMP on
the deepest layer, closed-form least squares on the two proxy layers, and the
printed relaxation updates, iterated ``test_iters`` times.  Classification is
nearest-training-sample with either the count of differing coordinates (l0)
or the sum of absolute differences (l1) as the distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .joint import DEFAULT_SUPPORT_TOL, Model, TrainConfig, resolve_budget, solve_P4, solve_P5
from .numerics import as_matrix, as_vector, pinv
from .sparse import omp_columns

__all__ = [
    "EncodedFeature",
    "Prediction",
    "encode_test",
    "class_support",
    "classify_l0",
    "classify_l1",
    "predict_batch",
    "format_prediction_lines",
]


@dataclass
class EncodedFeature:
    """Deepest-layer code of one sample plus its binary support and the
    composed reconstruction residual."""

    z: np.ndarray
    support: np.ndarray
    reconstruction_residual: float


@dataclass
class Prediction:
    """Predicted label with per-class minimum distances (sorted by class id)."""

    label: int
    per_class_score: list[tuple[int, float]]
    rule: str

    @property
    def distance(self) -> float:
        return min(score for _, score in self.per_class_score)


def encode_test(
    model: Model,
    x: np.ndarray,
    cfg: TrainConfig | None = None,
    support_tol: float = DEFAULT_SUPPORT_TOL,
) -> EncodedFeature:
    """Encode one sample through the learned dictionaries.

    Runs ``test_iters`` rounds of {OMP on the deepest layer, closed-form
    solves for the two proxy codes, relaxation updates}, with the relaxation
    vectors initialized to ones (the training-side convention) and the codes
    warm-started through the pseudo-inverse chain.
    """
    if cfg is None:
        cfg = model.config
    if len(model.dictionaries) != 3:
        raise ValueError(
            f"test encoding needs a 3-layer model, got {len(model.dictionaries)} layers"
        )
    d1, d2, d3 = model.dictionaries
    x = as_vector(x, "x")
    if x.size != d1.shape[0]:
        raise ValueError(f"sample length {x.size} != D1 rows {d1.shape[0]}")
    budget = resolve_budget(cfg, model.architecture)
    act = model.architecture.activation
    xcol = x.reshape(-1, 1)

    z1 = pinv(d1) @ xcol
    z2 = pinv(d2) @ act.inverse(z1)
    z = omp_columns(d3, act.inverse(z2), budget.per_column_s)
    b1 = np.ones_like(z1)
    b2 = np.ones_like(z2)
    for _ in range(cfg.test_iters):
        z = omp_columns(d3, act.inverse(z2 - b2), budget.per_column_s)
        z1 = solve_P4(xcol, d1, d2, z2, b1, cfg.eta1, act)
        z2 = solve_P5(z1, b1, d2, d3, z, b2, cfg.eta1, cfg.eta2, act)
        b1 = z1 - act.forward(d2 @ z2) - b1
        b2 = z2 - act.forward(d3 @ z) - b2

    zvec = z.reshape(-1)
    recon = d1 @ act.forward(d2 @ act.forward(d3 @ z))
    residual = float(np.linalg.norm(xcol - recon))
    support = (np.abs(zvec) > support_tol).astype(np.uint8)
    return EncodedFeature(z=zvec, support=support, reconstruction_residual=residual)


def class_support(zc: np.ndarray, support_tol: float = DEFAULT_SUPPORT_TOL) -> np.ndarray:
    """Binary row-usage vector of a class block: 1 where the row is nonzero."""
    zc = as_matrix(zc, "Zc")
    row_norms = np.linalg.norm(zc, axis=1)
    return (row_norms > support_tol).astype(np.uint8)


def _classify(model: Model, z: np.ndarray, rule: str, support_tol: float) -> Prediction:
    diffs = model.features - z[:, None]
    if rule == "l0":
        distances = np.sum(np.abs(diffs) > support_tol, axis=0).astype(np.float64)
    elif rule == "l1":
        distances = np.sum(np.abs(diffs), axis=0)
    else:
        raise ValueError(f"unknown rule {rule!r} (expected 'l0' or 'l1')")
    scores: list[tuple[int, float]] = []
    for c in range(1, model.num_classes + 1):
        cols = model.class_columns(c)
        scores.append((c, float(distances[cols].min())))
    best = min(score for _, score in scores)
    label = next(c for c, score in scores if score == best)  # smallest class id wins ties
    return Prediction(label=label, per_class_score=scores, rule=rule)


def classify_l0(model: Model, f: EncodedFeature, support_tol: float = DEFAULT_SUPPORT_TOL) -> Prediction:
    """Nearest training feature by count of differing coordinates.

    A coordinate counts as differing when |z_test - z_train| exceeds
    ``support_tol``.
    """
    return _classify(model, f.z, "l0", support_tol)


def classify_l1(model: Model, f: EncodedFeature, support_tol: float = DEFAULT_SUPPORT_TOL) -> Prediction:
    """Nearest training feature by sum of absolute coordinate differences."""
    return _classify(model, f.z, "l1", support_tol)


def predict_batch(
    model: Model,
    x: np.ndarray,
    rule: str = "l0",
    cfg: TrainConfig | None = None,
    support_tol: float = DEFAULT_SUPPORT_TOL,
) -> list[Prediction]:
    """Encode and classify every column of ``x``."""
    x = as_matrix(x, "X")
    if rule not in ("l0", "l1"):
        raise ValueError(f"unknown rule {rule!r} (expected 'l0' or 'l1')")
    preds = []
    for j in range(x.shape[1]):
        feature = encode_test(model, x[:, j], cfg=cfg, support_tol=support_tol)
        if rule == "l0":
            preds.append(classify_l0(model, feature, support_tol))
        else:
            preds.append(classify_l1(model, feature, support_tol))
    return preds


def format_prediction_lines(predictions: list[Prediction]) -> str:
    """Batch output: one tab-separated line per sample —
    index, predicted label, rule, winning distance."""
    lines = [
        "%d\t%d\t%s\t%.17g" % (i, p.label, p.rule, p.distance)
        for i, p in enumerate(predictions)
    ]
    return "\n".join(lines) + ("\n" if lines else "")
