"""Dataset ingestion, spatial-spectral feature extraction, splits, persistence.

File formats (all little-endian, documented so external data can be converted):

* matrix CSV: one sample per row, comma-separated reals (transposed to
  columns internally); label list: one integer class id per line.
* cube file: text header ``RSHSI1 <height> <width> <bands>`` followed by
  height*width*bands float32 values in scanline (row, column, band) order.
* ground-truth raster: text header ``RSGT1 <height> <width>`` followed by
  height*width int32 class ids (0 = unlabeled), row-major.
* model file: versioned text format with magic ``RSDDL1``; header lines for
  architecture, activation and config, then each matrix as a ``matrix <name>
  <rows> <cols>`` line followed by rows of 17-significant-digit decimals.
  Saving, loading and saving again reproduces the file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .greedy import Architecture
from .joint import DropMode, Model, TrainConfig, resolve_budget
from .numerics import Activation, ActivationKind, Rng, as_matrix, pca_fit
from .sparse import SparsityBudget

__all__ = [
    "DataFormatError",
    "Dataset",
    "HsiCube",
    "PcaProjection",
    "make_dataset",
    "load_matrix_csv",
    "save_matrix_csv",
    "load_labels",
    "save_labels",
    "load_cube",
    "save_cube",
    "extract_spatial_spectral",
    "split_per_class",
    "save_model",
    "load_model",
    "save_pca",
    "load_pca",
]

MODEL_MAGIC = "RSDDL1"
MODEL_VERSION = 1
CUBE_MAGIC = "RSHSI1"
GT_MAGIC = "RSGT1"
PCA_MAGIC = "RSPCA1"


class DataFormatError(ValueError):
    """Malformed input file (message carries the offending location)."""


@dataclass
class Dataset:
    """Feature matrix (samples as columns) with per-column class labels.

    Class ids are contiguous integers starting at 1; ``class_index`` maps
    every id to its column indices and partitions the columns.  Individual
    classes may be empty only when ``num_classes`` was fixed externally
    (e.g. the test side of a split).
    """

    x: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_index: dict[int, np.ndarray]

    @property
    def n_samples(self) -> int:
        return self.x.shape[1]

    @property
    def dim(self) -> int:
        return self.x.shape[0]


def make_dataset(x, labels, num_classes: int | None = None) -> Dataset:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    if x.size and not np.all(np.isfinite(x)):
        raise ValueError("features contain NaN or Inf entries")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size != x.shape[1]:
        raise ValueError(f"{labels.size} labels for {x.shape[1]} samples")
    if labels.size and labels.min() < 1:
        raise ValueError("class ids must start at 1")
    if num_classes is None:
        num_classes = int(labels.max()) if labels.size else 0
        present = set(labels.tolist())
        missing = [c for c in range(1, num_classes + 1) if c not in present]
        if missing:
            raise ValueError(f"class ids must be contiguous from 1; missing {missing}")
    elif labels.size and labels.max() > num_classes:
        raise ValueError(f"label {labels.max()} exceeds num_classes={num_classes}")
    class_index = {c: np.where(labels == c)[0] for c in range(1, num_classes + 1)}
    return Dataset(x=x, labels=labels, num_classes=num_classes, class_index=class_index)


# ---------------------------------------------------------------------------
# CSV matrices and label lists

def load_matrix_csv(path) -> np.ndarray:
    """Read a samples-as-rows CSV and return the samples-as-columns matrix."""
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                values = [float(cell) for cell in cells]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric cell") from None
            if any(not np.isfinite(v) for v in values):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            if rows and len(values) != len(rows[0]):
                raise DataFormatError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    return np.array(rows, dtype=np.float64).T


def save_matrix_csv(x: np.ndarray, path) -> None:
    """Write a samples-as-columns matrix as a samples-as-rows CSV."""
    x = as_matrix(x, "X")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for j in range(x.shape[1]):
            fh.write(",".join("%.17g" % v for v in x[:, j]) + "\n")


def load_labels(path) -> np.ndarray:
    """Read one integer class id per line."""
    labels: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: not an integer label") from None
    if not labels:
        raise DataFormatError(f"{path}: empty file")
    return np.array(labels, dtype=np.int64)


def save_labels(labels, path) -> None:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


# ---------------------------------------------------------------------------
# Hyperspectral cubes

@dataclass
class HsiCube:
    """Image cube (height x width x bands) with a per-pixel ground truth
    raster where 0 marks unlabeled pixels."""

    values: np.ndarray
    ground_truth: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError(f"cube values must be 3-D, got shape {self.values.shape}")
        if self.ground_truth.shape != self.values.shape[:2]:
            raise ValueError("ground truth shape must match cube height x width")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]


def _read_header(fh, magic: str, n_dims: int, path) -> tuple[int, ...]:
    header = fh.readline().decode("ascii", errors="replace").strip()
    parts = header.split()
    if len(parts) != n_dims + 1 or parts[0] != magic:
        raise DataFormatError(f"{path}: bad header (expected '{magic} <dims>')")
    try:
        dims = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise DataFormatError(f"{path}: non-integer dimension in header") from None
    if any(d < 1 for d in dims):
        raise DataFormatError(f"{path}: dimensions must be positive")
    return dims


def save_cube(cube: HsiCube, cube_path, gt_path) -> None:
    with open(cube_path, "wb") as fh:
        fh.write(f"{CUBE_MAGIC} {cube.height} {cube.width} {cube.bands}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(cube.values, dtype="<f4").tobytes())
    with open(gt_path, "wb") as fh:
        fh.write(f"{GT_MAGIC} {cube.height} {cube.width}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(cube.ground_truth, dtype="<i4").tobytes())


def load_cube(cube_path, gt_path) -> HsiCube:
    with open(cube_path, "rb") as fh:
        h, w, b = _read_header(fh, CUBE_MAGIC, 3, cube_path)
        payload = fh.read()
    expected = h * w * b * 4
    if len(payload) != expected:
        raise DataFormatError(f"{cube_path}: expected {expected} payload bytes, got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(h, w, b)
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"{cube_path}: non-finite values in cube")
    with open(gt_path, "rb") as fh:
        gh, gw = _read_header(fh, GT_MAGIC, 2, gt_path)
        gt_payload = fh.read()
    if (gh, gw) != (h, w):
        raise DataFormatError(f"{gt_path}: ground truth dims {gh}x{gw} != cube dims {h}x{w}")
    if len(gt_payload) != gh * gw * 4:
        raise DataFormatError(f"{gt_path}: expected {gh * gw * 4} payload bytes, got {len(gt_payload)}")
    gt = np.frombuffer(gt_payload, dtype="<i4").astype(np.int64).reshape(gh, gw)
    if gt.min() < 0:
        raise DataFormatError(f"{gt_path}: negative class ids")
    return HsiCube(values=values, ground_truth=gt)


# ---------------------------------------------------------------------------
# Spatial-spectral feature extraction

@dataclass
class PcaProjection:
    """Stored projection statistics so test features use training statistics."""

    mean: np.ndarray
    basis: np.ndarray

    def project(self, raw: np.ndarray) -> np.ndarray:
        return self.basis.T @ (raw - self.mean)


def extract_spatial_spectral(
    cube: HsiCube,
    window: int = 4,
    d: int = 200,
    train_mask: np.ndarray | None = None,
) -> tuple[Dataset, PcaProjection]:
    """Per labeled pixel: flatten the window x window x bands neighborhood and
    project it onto the top PCA directions.

    Even windows have no center pixel, so the target sits at position
    ceil(window/2) along each axis (e.g. position (2, 2), 1-indexed, of a 4x4
    window); borders are mirror-padded.  Pixels are traversed in row-major
    order.  PCA is fit on the pixels selected by ``train_mask`` (all labeled
    pixels when None) and ``d`` is clipped to the available dimension.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window > min(cube.height, cube.width):
        raise ValueError(
            f"window {window} larger than image {cube.height}x{cube.width}"
        )
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    lead = (window - 1) // 2
    trail = window - 1 - lead
    padded = np.pad(cube.values, ((lead, trail), (lead, trail), (0, 0)), mode="symmetric")

    labeled = np.argwhere(cube.ground_truth > 0)  # row-major order
    if labeled.size == 0:
        raise ValueError("no labeled pixels in ground truth")
    raw_dim = window * window * cube.bands
    raw = np.empty((raw_dim, labeled.shape[0]))
    labels = np.empty(labeled.shape[0], dtype=np.int64)
    fit_cols = []
    for i, (r, c) in enumerate(labeled):
        raw[:, i] = padded[r : r + window, c : c + window, :].reshape(-1)
        labels[i] = cube.ground_truth[r, c]
        if train_mask is None or train_mask[r, c]:
            fit_cols.append(i)
    if not fit_cols:
        raise ValueError("train_mask selects no labeled pixels")

    fit = raw[:, fit_cols]
    d_eff = min(d, raw_dim, fit.shape[1])
    mean, basis = pca_fit(fit, d_eff)
    projection = PcaProjection(mean=mean, basis=basis)
    features = projection.project(raw)
    return make_dataset(features, labels), projection


# ---------------------------------------------------------------------------
# Splits

def split_per_class(ds: Dataset, counts: dict[int, int], rng: Rng) -> tuple[Dataset, Dataset]:
    """Seeded uniform sampling without replacement per class.

    ``counts[c]`` columns of class c go to the training set; everything else
    becomes test.  Classes absent from ``counts`` contribute no training
    samples.  Column order within each side follows the original dataset.
    """
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in range(1, ds.num_classes + 1):
        cols = ds.class_index[c]
        n = int(counts.get(c, 0))
        if n < 0:
            raise ValueError(f"negative count for class {c}")
        if n > cols.size:
            raise ValueError(f"class {c} has {cols.size} samples, requested {n}")
        perm = rng.permutation(cols.size)
        train_idx.append(np.sort(cols[perm[:n]]))
        test_idx.append(np.sort(cols[perm[n:]]))
    train_cols = np.sort(np.concatenate(train_idx)) if train_idx else np.array([], dtype=np.int64)
    test_cols = np.sort(np.concatenate(test_idx)) if test_idx else np.array([], dtype=np.int64)
    train = make_dataset(ds.x[:, train_cols], ds.labels[train_cols], num_classes=ds.num_classes)
    test = make_dataset(ds.x[:, test_cols], ds.labels[test_cols], num_classes=ds.num_classes)
    return train, test


# ---------------------------------------------------------------------------
# Model persistence

def _format_row(row: np.ndarray, as_int: bool) -> str:
    if as_int:
        return " ".join("%d" % v for v in row)
    return " ".join("%.17g" % v for v in row)


def _render_matrix(name: str, m: np.ndarray, as_int: bool = False) -> list[str]:
    lines = [f"matrix {name} {m.shape[0]} {m.shape[1]}"]
    lines.extend(_format_row(m[i], as_int) for i in range(m.shape[0]))
    return lines


def _render_config(cfg: TrainConfig, budget: SparsityBudget) -> str:
    fields = [
        ("lambda_weight", "%.17g" % cfg.lambda_weight),
        ("mu", "%.17g" % cfg.mu),
        ("eta1", "%.17g" % cfg.eta1),
        ("eta2", "%.17g" % cfg.eta2),
        ("gamma", "%.17g" % cfg.gamma),
        ("per_column_s", "%d" % budget.per_column_s),
        ("row_s", "%d" % budget.row_s),
        ("outer_iters", "%d" % cfg.outer_iters),
        ("inner_iters", "%d" % cfg.inner_iters),
        ("test_iters", "%d" % cfg.test_iters),
        ("drop_mode", cfg.drop_mode.value),
        ("drop_rate", "%.17g" % cfg.drop_rate),
        ("seed", "%d" % cfg.seed),
        ("conventional_bregman", "%d" % int(cfg.conventional_bregman)),
    ]
    return "config " + " ".join(f"{k}={v}" for k, v in fields)


def save_model(model: Model, path) -> None:
    """Write the model in the versioned text format (17-digit decimals)."""
    arch = model.architecture
    budget = resolve_budget(model.config, arch)
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        "arch " + ",".join(str(a) for a in arch.atoms_per_layer),
        f"activation {arch.activation.kind.value} %.17g" % arch.activation.clamp_eps,
        _render_config(model.config, budget),
        f"classes {model.num_classes}",
        f"labels {model.labels.size}",
        " ".join(str(int(v)) for v in model.labels),
    ]
    for i, d in enumerate(model.dictionaries, 1):
        lines.extend(_render_matrix(f"D{i}", d))
    lines.extend(_render_matrix("Z", model.features))
    lines.extend(_render_matrix("class_means", model.class_means))
    lines.extend(_render_matrix("class_supports", model.class_supports, as_int=True))
    lines.append("end")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


class _ModelReader:
    def __init__(self, path):
        self.path = path
        with open(path, "r", encoding="ascii") as fh:
            self.lines = fh.read().split("\n")
        self.pos = 0

    def fail(self, msg: str):
        raise DataFormatError(f"{self.path}:{self.pos}: {msg}")

    def next_line(self) -> str:
        if self.pos >= len(self.lines):
            raise DataFormatError(f"{self.path}: truncated file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect_matrix(self, name: str) -> np.ndarray:
        header = self.next_line().split()
        if len(header) != 4 or header[0] != "matrix" or header[1] != name:
            self.fail(f"expected 'matrix {name} <rows> <cols>'")
        try:
            rows, cols = int(header[2]), int(header[3])
        except ValueError:
            self.fail("non-integer matrix dims")
        if rows < 1 or cols < 1:
            self.fail("matrix dims must be positive")
        out = np.empty((rows, cols))
        for i in range(rows):
            cells = self.next_line().split()
            if len(cells) != cols:
                self.fail(f"matrix {name} row {i}: expected {cols} values, got {len(cells)}")
            try:
                out[i] = [float(cell) for cell in cells]
            except ValueError:
                self.fail(f"matrix {name} row {i}: non-numeric value")
        if not np.all(np.isfinite(out)):
            self.fail(f"matrix {name}: non-finite entries")
        return out


def _parse_config(line: str, path: str) -> TrainConfig:
    if not line.startswith("config "):
        raise DataFormatError(f"{path}: missing config line")
    pairs = {}
    for token in line[len("config "):].split():
        if "=" not in token:
            raise DataFormatError(f"{path}: malformed config token {token!r}")
        k, v = token.split("=", 1)
        pairs[k] = v
    try:
        return TrainConfig(
            lambda_budget=SparsityBudget(
                per_column_s=int(pairs["per_column_s"]), row_s=int(pairs["row_s"])
            ),
            lambda_weight=float(pairs["lambda_weight"]),
            mu=float(pairs["mu"]),
            eta1=float(pairs["eta1"]),
            eta2=float(pairs["eta2"]),
            gamma=float(pairs["gamma"]),
            outer_iters=int(pairs["outer_iters"]),
            inner_iters=int(pairs["inner_iters"]),
            test_iters=int(pairs["test_iters"]),
            drop_mode=DropMode(pairs["drop_mode"]),
            drop_rate=float(pairs["drop_rate"]),
            seed=int(pairs["seed"]),
            conventional_bregman=bool(int(pairs["conventional_bregman"])),
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad config line ({exc})") from None


def load_model(path) -> Model:
    """Load a model file, validating magic, version and the shape chain."""
    reader = _ModelReader(path)
    magic = reader.next_line().split()
    if len(magic) != 2 or magic[0] != MODEL_MAGIC:
        raise DataFormatError(f"{path}: bad magic (expected {MODEL_MAGIC})")
    if magic[1] != str(MODEL_VERSION):
        raise DataFormatError(f"{path}: unsupported version {magic[1]}")

    arch_line = reader.next_line()
    if not arch_line.startswith("arch "):
        raise DataFormatError(f"{path}: missing arch line")
    try:
        atoms = tuple(int(a) for a in arch_line[len("arch "):].split(","))
    except ValueError:
        raise DataFormatError(f"{path}: bad arch line") from None

    act_parts = reader.next_line().split()
    if len(act_parts) != 3 or act_parts[0] != "activation":
        raise DataFormatError(f"{path}: missing activation line")
    try:
        activation = Activation(kind=ActivationKind(act_parts[1]), clamp_eps=float(act_parts[2]))
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad activation line ({exc})") from None
    arch = Architecture(atoms_per_layer=atoms, activation=activation)

    cfg = _parse_config(reader.next_line(), str(path))

    classes_parts = reader.next_line().split()
    if len(classes_parts) != 2 or classes_parts[0] != "classes":
        raise DataFormatError(f"{path}: missing classes line")
    n_classes = int(classes_parts[1])
    labels_parts = reader.next_line().split()
    if len(labels_parts) != 2 or labels_parts[0] != "labels":
        raise DataFormatError(f"{path}: missing labels line")
    n_labels = int(labels_parts[1])
    label_cells = reader.next_line().split()
    if len(label_cells) != n_labels:
        raise DataFormatError(f"{path}: expected {n_labels} labels, got {len(label_cells)}")
    try:
        labels = np.array([int(cell) for cell in label_cells], dtype=np.int64)
    except ValueError:
        raise DataFormatError(f"{path}: non-integer label") from None
    if n_labels and (labels.min() < 1 or labels.max() > n_classes):
        raise DataFormatError(f"{path}: label outside 1..{n_classes}")

    dicts = [reader.expect_matrix(f"D{i}") for i in range(1, arch.depth + 1)]
    features = reader.expect_matrix("Z")
    class_means = reader.expect_matrix("class_means")
    class_supports = reader.expect_matrix("class_supports").astype(np.uint8)
    if reader.next_line() != "end":
        raise DataFormatError(f"{path}: missing end marker")
    for extra in reader.lines[reader.pos:]:
        if extra.strip():
            raise DataFormatError(f"{path}: trailing content after end marker")

    # shape chain
    for i, d in enumerate(dicts):
        if d.shape[1] != arch.atoms_per_layer[i]:
            raise DataFormatError(f"{path}: D{i + 1} has {d.shape[1]} atoms, arch says {arch.atoms_per_layer[i]}")
        if i > 0 and d.shape[0] != arch.atoms_per_layer[i - 1]:
            raise DataFormatError(f"{path}: D{i + 1} rows break the layer chain")
    if features.shape[0] != arch.feature_dim:
        raise DataFormatError(f"{path}: Z rows {features.shape[0]} != deepest atom count {arch.feature_dim}")
    if features.shape[1] != n_labels:
        raise DataFormatError(f"{path}: Z has {features.shape[1]} columns for {n_labels} labels")
    if class_means.shape != (arch.feature_dim, n_classes):
        raise DataFormatError(f"{path}: class_means shape {class_means.shape} invalid")
    if class_supports.shape != (n_classes, arch.feature_dim):
        raise DataFormatError(f"{path}: class_supports shape {class_supports.shape} invalid")

    return Model(
        dictionaries=dicts,
        architecture=arch,
        features=features,
        labels=labels,
        class_means=class_means,
        class_supports=class_supports,
        config=cfg,
        fit_report=None,
    )


# ---------------------------------------------------------------------------
# PCA statistics persistence (so test features use training statistics)

def save_pca(projection: PcaProjection, path) -> None:
    lines = [f"{PCA_MAGIC} 1"]
    lines.extend(_render_matrix("mean", projection.mean))
    lines.extend(_render_matrix("basis", projection.basis))
    lines.append("end")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pca(path) -> PcaProjection:
    reader = _ModelReader(path)
    magic = reader.next_line().split()
    if len(magic) != 2 or magic[0] != PCA_MAGIC:
        raise DataFormatError(f"{path}: bad magic (expected {PCA_MAGIC})")
    mean = reader.expect_matrix("mean")
    basis = reader.expect_matrix("basis")
    if reader.next_line() != "end":
        raise DataFormatError(f"{path}: missing end marker")
    if basis.shape[0] != mean.shape[0]:
        raise DataFormatError(f"{path}: basis rows != mean rows")
    return PcaProjection(mean=mean, basis=basis)
