import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rsddl.joint import DropMode, TrainConfig, joint_train
from util import DEEP_ARCH, MIXTURE_ARCH, two_class_deep_factor_data, two_class_mixture_data


@pytest.fixture(scope="session")
def deep_factor_model():
    """Joint model trained on the 2-class deep-factor dataset (drop off)."""
    data = two_class_deep_factor_data()
    cfg = TrainConfig(drop_mode=DropMode.NONE, seed=7)
    return data, joint_train(data, DEEP_ARCH, cfg)


@pytest.fixture(scope="session")
def mixture_bundle():
    """Mixture dataset plus models trained with each drop mode."""
    train, xte, yte = two_class_mixture_data()
    models = {}
    for mode, rate in ((DropMode.NONE, 0.0), (DropMode.DROPCONNECT, 0.10), (DropMode.DROPOUT, 0.15)):
        cfg = TrainConfig(drop_mode=mode, drop_rate=rate, seed=7)
        models[mode] = joint_train(train, MIXTURE_ARCH, cfg)
    return {"train": train, "x_test": xte, "y_test": yte, "models": models}
