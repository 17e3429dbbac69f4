"""Joint training of all dictionary layers with class-row-sparse, support-diverse codes.

The trainer alternates over six sub-problems of an augmented Lagrangian:
closed-form least squares for the dictionaries (P1-P3) and the two proxy
coefficient layers (P4-P5), and an inner per-class ADMM (P6) that couples a
row-sparse SOMP step with a reverse-shrinkage push driving the supports of
different classes apart.  Relaxation variables follow the printed update rule
``B <- residual - B`` (an involution around the residual); the conventional
additive rule is available behind ``TrainConfig.conventional_bregman``.

Optional stochastic regularization: DropOut zeroes entries of the
intermediate coefficient layers after the coefficient solves and before the
dictionary solves of the same sweep; DropConnect zeroes dictionary entries
after the dictionary solves.  Neither perturbs the final iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .greedy import Architecture, compose_reconstruction, layerwise_factorize
from .numerics import Activation, Rng, as_matrix, normalize_columns, pinv
from .sparse import DEFAULT_RESIDUAL_TOL, SparsityBudget, prox_push, somp_rows

if TYPE_CHECKING:  # pragma: no cover
    from .dataio import Dataset

__all__ = [
    "DropMode",
    "TrainConfig",
    "JointState",
    "Model",
    "FitReport",
    "IterationRecord",
    "TrainingDivergedError",
    "resolve_budget",
    "build_model",
    "joint_train",
    "solve_P1",
    "solve_P2",
    "solve_P3",
    "solve_P4",
    "solve_P5",
    "solve_P6_class",
    "bregman_update",
    "apply_dropout",
    "apply_dropconnect",
    "objective_value",
    "class_mean_matrix",
]

DEFAULT_SUPPORT_TOL = 1e-8
DIVERGENCE_LIMIT = 1e12


class TrainingDivergedError(RuntimeError):
    """Raised when the training objective blows past the divergence guard."""


class DropMode(Enum):
    NONE = "none"
    DROPOUT = "out"
    DROPCONNECT = "connect"


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs.

    Defaults: layer-coupling weights eta1 = eta2 = 1, inner ADMM weight
    gamma = 0.1, diversity weight mu = 0.5, sparsity weight lambda = 0.1
    (used when reporting the objective; the sparsity itself is enforced as a
    hard budget), and DropConnect at a 10% rate.  ``lambda_budget=None``
    derives the budget from the architecture: ceil(0.2 x deepest atom count)
    for both the per-column and row budgets.
    """

    lambda_budget: SparsityBudget | None = None
    lambda_weight: float = 0.1
    mu: float = 0.5
    eta1: float = 1.0
    eta2: float = 1.0
    gamma: float = 0.1
    outer_iters: int = 15
    inner_iters: int = 5
    test_iters: int = 10
    drop_mode: DropMode = DropMode.DROPCONNECT
    drop_rate: float = 0.10
    seed: int = 0
    conventional_bregman: bool = False

    def __post_init__(self):
        if self.lambda_weight < 0:
            raise ValueError(f"lambda_weight must be >= 0, got {self.lambda_weight}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError(f"eta1 and eta2 must be > 0, got {self.eta1}, {self.eta2}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if min(self.outer_iters, self.inner_iters, self.test_iters) < 1:
            raise ValueError("iteration counts must all be >= 1")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError(f"drop_rate must be in [0, 1), got {self.drop_rate}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


def resolve_budget(cfg: TrainConfig, arch: Architecture) -> SparsityBudget:
    """Effective sparsity budget: explicit config value or the 20% default."""
    if cfg.lambda_budget is not None:
        budget = cfg.lambda_budget
    else:
        s = max(1, math.ceil(0.2 * arch.feature_dim))
        budget = SparsityBudget(per_column_s=s, row_s=s)
    budget.validate_for(arch.feature_dim)
    return budget


@dataclass
class JointState:
    """Mutable optimization state threaded through the sub-problem solvers.

    ``p`` and ``c_relax`` hold one matrix per ordered class pair (c, k != c),
    shaped like class c's coefficient block.  ``class_means`` is the snapshot
    taken at the start of the current outer iteration.
    """

    x: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    z: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    p: dict[tuple[int, int], np.ndarray]
    c_relax: dict[tuple[int, int], np.ndarray]
    class_cols: dict[int, np.ndarray]
    class_means: np.ndarray
    activation: Activation


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    feas1: float
    feas2: float
    support_sizes: dict[int, int]


@dataclass
class FitReport:
    """Per-run training diagnostics; not part of the persisted model.

    ``lines`` is the exact run-log text, one string per record.
    """

    initial_objective: float
    initial_feas1: float
    initial_feas2: float
    greedy_reconstruction: float
    iterations: list[IterationRecord] = field(default_factory=list)
    joint_reconstruction: float = float("nan")
    lines: list[str] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.iterations[-1].objective

    @property
    def final_feas1(self) -> float:
        return self.iterations[-1].feas1

    @property
    def final_feas2(self) -> float:
        return self.iterations[-1].feas2

    def render(self) -> str:
        return "\n".join(self.lines) + "\n" if self.lines else ""


@dataclass
class Model:
    """Trained classifier state: dictionaries, stored codes, class summaries."""

    dictionaries: list[np.ndarray]
    architecture: Architecture
    features: np.ndarray
    labels: np.ndarray
    class_means: np.ndarray
    class_supports: np.ndarray
    config: TrainConfig
    fit_report: FitReport | None = None

    @property
    def num_classes(self) -> int:
        return self.class_supports.shape[0]

    def class_columns(self, c: int) -> np.ndarray:
        return np.where(self.labels == c)[0]


def class_mean_matrix(z: np.ndarray, class_cols: dict[int, np.ndarray], n_classes: int) -> np.ndarray:
    """Per-class mean of the deepest codes, one column per class id 1..C."""
    means = np.zeros((z.shape[0], n_classes))
    for c in range(1, n_classes + 1):
        means[:, c - 1] = z[:, class_cols[c]].mean(axis=1)
    return means


def _row_support_count(block: np.ndarray) -> int:
    return int(np.sum(np.any(block != 0.0, axis=1)))


def objective_value(
    x: np.ndarray,
    dicts: list[np.ndarray],
    z: np.ndarray,
    class_cols: dict[int, np.ndarray],
    lambda_weight: float,
    mu: float,
    act: Activation,
) -> float:
    """Training objective with the sparsity terms evaluated as exact counts:

    ``||X - D1 phi(D2 phi(D3 Z))||_F^2 + lambda * sum_c rowcount(Z_c)
    - mu * sum_c sum_{k != c} nnz(mean_k - Z_c)``
    """
    recon = x - compose_reconstruction(dicts, z, act)
    value = float(np.sum(recon * recon))
    n_classes = len(class_cols)
    means = class_mean_matrix(z, class_cols, n_classes)
    for c in range(1, n_classes + 1):
        block = z[:, class_cols[c]]
        value += lambda_weight * _row_support_count(block)
        for k in range(1, n_classes + 1):
            if k == c:
                continue
            diff = means[:, k - 1][:, None] - block
            value -= mu * int(np.count_nonzero(diff))
    return value


def _restore_dead_columns(d: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
    """Replace all-zero columns (atoms with no active coefficients) with the
    previous unit-norm atoms so the dictionary keeps unit columns."""
    if prev is None:
        return d
    dead = np.linalg.norm(d, axis=0) <= 1e-12
    if np.any(dead):
        d = d.copy()
        d[:, dead] = prev[:, dead]
    return d


def solve_P1(x: np.ndarray, z1: np.ndarray, prev: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares dictionary fit ``D1 = X pinv(Z1)``.

    Columns are renormalized to unit norm with the scales folded into Z1, so
    the product D1 Z1 is unchanged.  Columns that come back all-zero (dead
    atoms) are restored from ``prev`` when given.  Returns
    ``(D1, Z1_rescaled)``.
    """
    d1 = x @ pinv(z1)
    d1, scales = normalize_columns(d1)
    return _restore_dead_columns(d1, prev), z1 * scales[:, None]


def solve_P2(
    z1: np.ndarray, b1: np.ndarray, z2: np.ndarray, act: Activation, prev: np.ndarray | None = None
) -> np.ndarray:
    """Dictionary fit for the second layer: ``D2 = phi^-1(Z1 - B1) pinv(Z2)``,
    columns renormalized to unit norm.

    The scales are NOT folded into Z2: coupled with the relaxation updates,
    folding acts as a geometric scale pump on the coefficient chain (the next
    coefficient sweep refits Z2 against the unit-norm dictionary anyway).
    """
    d2 = act.inverse(z1 - b1) @ pinv(z2)
    d2, _ = normalize_columns(d2)
    return _restore_dead_columns(d2, prev)


def solve_P3(
    z2: np.ndarray, b2: np.ndarray, z: np.ndarray, act: Activation, prev: np.ndarray | None = None
) -> np.ndarray:
    """Dictionary fit for the deepest layer: ``D3 = phi^-1(Z2 - B2) pinv(Z)``,
    columns renormalized (scales not folded; see :func:`solve_P2`)."""
    d3 = act.inverse(z2 - b2) @ pinv(z)
    d3, _ = normalize_columns(d3)
    return _restore_dead_columns(d3, prev)


def solve_P4(
    x: np.ndarray,
    d1: np.ndarray,
    d2: np.ndarray,
    z2: np.ndarray,
    b1: np.ndarray,
    eta1: float,
    act: Activation,
) -> np.ndarray:
    """Stationary point of ``||X - D1 Z1||^2 + eta1 ||Z1 - phi(D2 Z2) - B1||^2``."""
    target = act.forward(d2 @ z2) + b1
    lhs = d1.T @ d1 + eta1 * np.eye(d1.shape[1])
    return np.linalg.solve(lhs, d1.T @ x + eta1 * target)


def solve_P5(
    z1: np.ndarray,
    b1: np.ndarray,
    d2: np.ndarray,
    d3: np.ndarray,
    z: np.ndarray,
    b2: np.ndarray,
    eta1: float,
    eta2: float,
    act: Activation,
) -> np.ndarray:
    """Stationary point of
    ``eta1 ||phi^-1(Z1 - B1) - D2 Z2||^2 + eta2 ||Z2 - phi(D3 Z) - B2||^2``."""
    lhs = eta1 * (d2.T @ d2) + eta2 * np.eye(d2.shape[1])
    rhs = eta1 * (d2.T @ act.inverse(z1 - b1)) + eta2 * (act.forward(d3 @ z) + b2)
    return np.linalg.solve(lhs, rhs)


def solve_P6_class(
    z2c: np.ndarray,
    b2c: np.ndarray,
    d3: np.ndarray,
    competitor_means: dict[int, np.ndarray],
    row_s: int,
    mu: float,
    gamma: float,
    eta2: float,
    inner_iters: int,
    p: dict[int, np.ndarray],
    c_relax: dict[int, np.ndarray],
    act: Activation,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
) -> np.ndarray:
    """Inner per-class ADMM for the row-sparse, support-diverse code block.

    Alternates row-sparse SOMP on the stacked system
    ``[sqrt(eta2) D3 ; sqrt(gamma) I per competitor]`` against the stacked
    targets ``[sqrt(eta2) phi^-1(Z2c - B2c) ; sqrt(gamma) (mean_k + C - P)]``,
    the reverse-shrinkage update of each P, and the relaxation update of each
    C.  ``p`` and ``c_relax`` (keyed by competitor class id) are updated in
    place.  With ``mu == 0`` or no competitors this is plain SOMP on the data
    term.
    """
    target_top = act.inverse(z2c - b2c)
    competitors = sorted(competitor_means)
    if mu == 0 or not competitors:
        return somp_rows(d3, target_top, row_s, residual_tol)

    a3 = d3.shape[1]
    sq_eta2 = math.sqrt(eta2)
    sq_gamma = math.sqrt(gamma)
    eye = sq_gamma * np.eye(a3)
    stacked_d = np.vstack([sq_eta2 * d3] + [eye] * len(competitors))
    z_c = np.zeros((a3, z2c.shape[1]))
    for _ in range(inner_iters):
        targets = [sq_eta2 * target_top]
        for k in competitors:
            zbar = competitor_means[k][:, None]
            targets.append(sq_gamma * (zbar + c_relax[k] - p[k]))
        z_c = somp_rows(stacked_d, np.vstack(targets), row_s, residual_tol)
        for k in competitors:
            zbar = competitor_means[k][:, None]
            p[k] = prox_push(zbar - z_c + c_relax[k], mu, gamma)
        for k in competitors:
            zbar = competitor_means[k][:, None]
            c_relax[k] = p[k] - (zbar - z_c) - c_relax[k]
    return z_c


def bregman_update(state: JointState, conventional: bool = False) -> JointState:
    """Relaxation-variable sweep.

    Printed rule (default): ``B <- residual - B`` for B1, B2 and every C;
    conventional rule: ``B <- B - residual``.  Uses the class-mean snapshot
    held in the state.
    """
    act = state.activation
    r1 = state.z1 - act.forward(state.d2 @ state.z2)
    r2 = state.z2 - act.forward(state.d3 @ state.z)
    if conventional:
        state.b1 = state.b1 - r1
        state.b2 = state.b2 - r2
    else:
        state.b1 = r1 - state.b1
        state.b2 = r2 - state.b2
    for (c, k), p_ck in state.p.items():
        zbar = state.class_means[:, k - 1][:, None]
        resid = p_ck - (zbar - state.z[:, state.class_cols[c]])
        if conventional:
            state.c_relax[(c, k)] = state.c_relax[(c, k)] - resid
        else:
            state.c_relax[(c, k)] = resid - state.c_relax[(c, k)]
    return state


def apply_dropout(state: JointState, rate: float, rng: Rng) -> JointState:
    """Zero a Bernoulli(rate) mask of the intermediate coefficients Z1 and Z2.

    The deepest codes Z are never dropped: they are already sparse by
    construction and dropping them would destroy the class supports.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return state
    mask1 = rng.substream("Z1").random(state.z1.shape) < rate
    mask2 = rng.substream("Z2").random(state.z2.shape) < rate
    state.z1 = np.where(mask1, 0.0, state.z1)
    state.z2 = np.where(mask2, 0.0, state.z2)
    return state


def apply_dropconnect(state: JointState, rate: float, rng: Rng) -> JointState:
    """Zero a Bernoulli(rate) mask of the entries of every dictionary."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return state
    for name in ("d1", "d2", "d3"):
        d = getattr(state, name)
        mask = rng.substream(name.upper()).random(d.shape) < rate
        setattr(state, name, np.where(mask, 0.0, d))
    return state


def _feasibility(state: JointState) -> tuple[float, float]:
    act = state.activation
    f1 = float(np.linalg.norm(state.z1 - act.forward(state.d2 @ state.z2)))
    f2 = float(np.linalg.norm(state.z2 - act.forward(state.d3 @ state.z)))
    return f1, f2


def _format_record(rec: IterationRecord) -> str:
    supports = ",".join(f"{c}:{n}" for c, n in sorted(rec.support_sizes.items()))
    return "iter=%d objective=%.17g feas1=%.17g feas2=%.17g supports=%s" % (
        rec.iteration,
        rec.objective,
        rec.feas1,
        rec.feas2,
        supports,
    )


def _emit(report: FitReport, log, line: str) -> None:
    report.lines.append(line)
    if log is not None:
        log.write(line + "\n")


def build_model(
    dicts: list[np.ndarray],
    arch: Architecture,
    features: np.ndarray,
    labels,
    num_classes: int,
    cfg: TrainConfig,
    fit_report: FitReport | None = None,
    support_tol: float = DEFAULT_SUPPORT_TOL,
) -> Model:
    """Package dictionaries and deepest codes into a classification model."""
    labels = np.asarray(labels, dtype=np.int64).copy()
    features = np.asarray(features, dtype=np.float64).copy()
    class_cols = {c: np.where(labels == c)[0] for c in range(1, num_classes + 1)}
    for c, cols in class_cols.items():
        if cols.size == 0:
            raise ValueError(f"class {c} has no samples")
    a = features.shape[0]
    supports = np.zeros((num_classes, a), dtype=np.uint8)
    for c in range(1, num_classes + 1):
        row_norms = np.linalg.norm(features[:, class_cols[c]], axis=1)
        supports[c - 1] = (row_norms > support_tol).astype(np.uint8)
    return Model(
        dictionaries=[d.copy() for d in dicts],
        architecture=arch,
        features=features,
        labels=labels,
        class_means=class_mean_matrix(features, class_cols, num_classes),
        class_supports=supports,
        config=cfg,
        fit_report=fit_report,
    )


def joint_train(data: "Dataset", arch: Architecture, cfg: TrainConfig | None = None, log=None) -> Model:
    """Train all layers jointly on a labeled dataset.

    ``data`` provides features as columns plus per-column class labels
    (contiguous ids starting at 1, every class nonempty).  The architecture
    must have exactly three layers.  ``log``, when given, is a text stream
    receiving one record per outer iteration (objective, both feasibility
    residuals, per-class support sizes) bracketed by the greedy and joint
    composed reconstruction errors.

    Training is deterministic: identical (data, arch, cfg) produce a
    bit-identical model.
    """
    if cfg is None:
        cfg = TrainConfig()
    if arch.depth != 3:
        raise ValueError(f"joint trainer supports exactly 3 layers, got {arch.depth}")
    x = as_matrix(data.x, "X")
    n_classes = data.num_classes
    class_cols = {c: np.asarray(data.class_index[c], dtype=np.int64) for c in range(1, n_classes + 1)}
    for c, cols in class_cols.items():
        if cols.size == 0:
            raise ValueError(f"class {c} has no samples")
    budget = resolve_budget(cfg, arch)
    act = arch.activation
    rng = Rng(cfg.seed)

    # warm start from the greedy pipeline (same per-layer effort as the outer
    # loop); the deepest codes are recoded row-sparse per class so the initial
    # iterate lives in the same constraint class the trainer optimizes over
    dicts, codes = layerwise_factorize(x, arch, budget.per_column_s, cfg.outer_iters, rng.substream("init"))
    deep_target = act.inverse(codes[1])
    z_init = np.zeros_like(codes[2])
    for c in range(1, n_classes + 1):
        cols = class_cols[c]
        z_init[:, cols] = somp_rows(dicts[2], deep_target[:, cols], budget.row_s)
    state = JointState(
        x=x,
        d1=dicts[0],
        d2=dicts[1],
        d3=dicts[2],
        z1=codes[0].copy(),
        z2=codes[1].copy(),
        z=z_init,
        b1=np.ones_like(codes[0]),
        b2=np.ones_like(codes[1]),
        p={},
        c_relax={},
        class_cols=class_cols,
        class_means=class_mean_matrix(z_init, class_cols, n_classes),
        activation=act,
    )
    a3 = arch.feature_dim
    for c in range(1, n_classes + 1):
        n_c = class_cols[c].size
        for k in range(1, n_classes + 1):
            if k != c:
                state.p[(c, k)] = np.ones((a3, n_c))
                state.c_relax[(c, k)] = np.ones((a3, n_c))

    greedy_recon = float(np.linalg.norm(x - compose_reconstruction(dicts, state.z, act)))
    init_feas1, init_feas2 = _feasibility(state)
    init_obj = objective_value(x, dicts, state.z, class_cols, cfg.lambda_weight, cfg.mu, act)
    report = FitReport(
        initial_objective=init_obj,
        initial_feas1=init_feas1,
        initial_feas2=init_feas2,
        greedy_reconstruction=greedy_recon,
    )
    _emit(report, log, f"greedy_recon={greedy_recon:.17g}")
    _emit(report, log, "init objective=%.17g feas1=%.17g feas2=%.17g" % (init_obj, init_feas1, init_feas2))

    # last clean (pre-drop) dictionaries, used to restore dead atoms
    prev_d1, prev_d2, prev_d3 = state.d1, state.d2, state.d3

    for it in range(cfg.outer_iters):
        final_iter = it == cfg.outer_iters - 1
        state.class_means = class_mean_matrix(state.z, class_cols, n_classes)

        # coefficient sweeps
        state.z1 = solve_P4(x, state.d1, state.d2, state.z2, state.b1, cfg.eta1, act)
        state.z2 = solve_P5(state.z1, state.b1, state.d2, state.d3, state.z, state.b2, cfg.eta1, cfg.eta2, act)
        for c in range(1, n_classes + 1):
            cols = class_cols[c]
            competitor_means = {
                k: state.class_means[:, k - 1] for k in range(1, n_classes + 1) if k != c
            }
            p_c = {k: state.p[(c, k)] for k in competitor_means}
            c_c = {k: state.c_relax[(c, k)] for k in competitor_means}
            z_c = solve_P6_class(
                state.z2[:, cols],
                state.b2[:, cols],
                state.d3,
                competitor_means,
                budget.row_s,
                cfg.mu,
                cfg.gamma,
                cfg.eta2,
                cfg.inner_iters,
                p_c,
                c_c,
                act,
            )
            state.z[:, cols] = z_c
            for k in competitor_means:
                state.p[(c, k)] = p_c[k]
                state.c_relax[(c, k)] = c_c[k]

        # coefficients perturbed before the dictionaries see them
        if cfg.drop_mode is DropMode.DROPOUT and not final_iter:
            apply_dropout(state, cfg.drop_rate, rng.substream("drop", it))

        # dictionary sweeps
        state.d1, state.z1 = solve_P1(x, state.z1, prev=prev_d1)
        state.d2 = solve_P2(state.z1, state.b1, state.z2, act, prev=prev_d2)
        state.d3 = solve_P3(state.z2, state.b2, state.z, act, prev=prev_d3)
        prev_d1, prev_d2, prev_d3 = state.d1, state.d2, state.d3
        if cfg.drop_mode is DropMode.DROPCONNECT and not final_iter:
            apply_dropconnect(state, cfg.drop_rate, rng.substream("drop", it))

        bregman_update(state, conventional=cfg.conventional_bregman)

        obj = objective_value(
            x, [state.d1, state.d2, state.d3], state.z, class_cols, cfg.lambda_weight, cfg.mu, act
        )
        if obj > DIVERGENCE_LIMIT:
            raise TrainingDivergedError(
                f"objective {obj:.3e} exceeded {DIVERGENCE_LIMIT:.0e} at iteration {it + 1}"
            )
        feas1, feas2 = _feasibility(state)
        supports = {c: _row_support_count(state.z[:, class_cols[c]]) for c in class_cols}
        rec = IterationRecord(iteration=it + 1, objective=obj, feas1=feas1, feas2=feas2, support_sizes=supports)
        report.iterations.append(rec)
        _emit(report, log, _format_record(rec))

    final_dicts = [state.d1, state.d2, state.d3]
    joint_recon = float(np.linalg.norm(x - compose_reconstruction(final_dicts, state.z, act)))
    report.joint_reconstruction = joint_recon
    if cfg.drop_mode is not DropMode.NONE:
        _emit(
            report,
            log,
            f"drop_mode={cfg.drop_mode.value} drop_rate={cfg.drop_rate:.17g} "
            "final_iteration_unperturbed=1",
        )
    _emit(report, log, f"joint_recon={joint_recon:.17g}")

    return build_model(
        final_dicts,
        arch,
        state.z,
        data.labels,
        n_classes,
        cfg,
        fit_report=report,
    )
