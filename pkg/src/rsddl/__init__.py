"""Row-sparse discriminative deep dictionary learning.

Trains a stack of dictionaries jointly so that every class's deepest codes
share one sparse row support and different classes' supports are pushed
apart; classifies by nearest stored code under l0 (count of differing
coordinates) or l1 distance.
"""

from .greedy import Architecture, GreedyModel, dict_learn, greedy_encode, greedy_train
from .inference import (
    EncodedFeature,
    Prediction,
    class_support,
    classify_l0,
    classify_l1,
    encode_test,
    predict_batch,
)
from .joint import (
    DropMode,
    FitReport,
    Model,
    TrainConfig,
    TrainingDivergedError,
    joint_train,
)
from .metrics import average_accuracy, confusion_matrix, kappa, mcnemar_z, overall_accuracy
from .numerics import Activation, ActivationKind, Rng
from .sparse import SparsityBudget, hard_threshold_per_column, omp, prox_push, somp
from .dataio import (
    DataFormatError,
    Dataset,
    HsiCube,
    extract_spatial_spectral,
    load_model,
    make_dataset,
    save_model,
    split_per_class,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "ActivationKind",
    "Architecture",
    "DataFormatError",
    "Dataset",
    "DropMode",
    "EncodedFeature",
    "FitReport",
    "GreedyModel",
    "HsiCube",
    "Model",
    "Prediction",
    "Rng",
    "SparsityBudget",
    "TrainConfig",
    "TrainingDivergedError",
    "average_accuracy",
    "class_support",
    "classify_l0",
    "classify_l1",
    "confusion_matrix",
    "dict_learn",
    "encode_test",
    "extract_spatial_spectral",
    "greedy_encode",
    "greedy_train",
    "hard_threshold_per_column",
    "joint_train",
    "kappa",
    "load_model",
    "make_dataset",
    "mcnemar_z",
    "omp",
    "overall_accuracy",
    "predict_batch",
    "prox_push",
    "save_model",
    "somp",
    "split_per_class",
]
