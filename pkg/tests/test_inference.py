import numpy as np
import pytest

from rsddl.greedy import Architecture, compose_reconstruction
from rsddl.inference import (
    EncodedFeature,
    class_support,
    classify_l0,
    classify_l1,
    encode_test,
    format_prediction_lines,
    predict_batch,
)
from rsddl.joint import TrainConfig, build_model, resolve_budget
from rsddl.numerics import Activation, ActivationKind, Rng
from util import two_class_deep_factor_data


# the two class blocks of the worked support-extraction example
CLASS1 = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.5, 0.7, 0.4],
        [0.0, 0.0, 0.0],
        [0.3, 0.2, 0.2],
        [0.0, 0.0, 0.0],
    ]
)
CLASS2 = np.array(
    [
        [1.1, 0.5, 0.9, 1.2],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.1, 0.6, 0.4, 0.5],
        [0.0, 0.0, 0.0, 0.0],
        [0.2, 0.4, 0.4, 0.2],
    ]
)


def toy_model():
    """Model storing the worked-example features (7 samples, 6 rows)."""
    features = np.hstack([CLASS1, CLASS2])
    labels = [1, 1, 1, 2, 2, 2, 2]
    arch = Architecture((6, 6, 6), activation=Activation(ActivationKind.IDENTITY))
    dicts = [np.eye(6), np.eye(6), np.eye(6)]
    return build_model(dicts, arch, features, labels, 2, TrainConfig(seed=0))


class TestClassSupport:
    def test_first_block(self):
        assert class_support(CLASS1).tolist() == [0, 0, 1, 0, 1, 0]

    def test_second_block(self):
        assert class_support(CLASS2).tolist() == [1, 0, 0, 1, 0, 1]

    def test_all_zero(self):
        assert class_support(np.zeros((4, 3))).tolist() == [0, 0, 0, 0]


class TestClassifyL0:
    def test_hand_counted_distances(self):
        model = toy_model()
        test_z = np.array([0.0, 0.0, 0.4, 0.0, 0.1, 0.0])
        # vs class-1 sample (0,0,0.5,0,0.3,0): rows 2 and 4 differ -> 2
        diffs1 = np.count_nonzero(np.abs(test_z - CLASS1[:, 0]) > 1e-8)
        assert diffs1 == 2
        # vs class-2 sample (1.1,0,0,0.1,0,0.2): 5 coordinates differ
        diffs2 = np.count_nonzero(np.abs(test_z - CLASS2[:, 0]) > 1e-8)
        assert diffs2 == 5
        pred = classify_l0(model, EncodedFeature(test_z, (test_z != 0).astype(np.uint8), 0.0))
        assert pred.label == 1
        scores = dict(pred.per_class_score)
        assert scores[1] == 1.0  # nearest class-1 sample (0,0,0.4,0,0.2,0) differs on one row
        assert scores[2] == 5.0

    def test_exact_training_feature_distance_zero(self):
        model = toy_model()
        z = CLASS2[:, 1].copy()
        pred = classify_l0(model, EncodedFeature(z, (z != 0).astype(np.uint8), 0.0))
        assert pred.label == 2
        assert pred.distance == 0.0

    def test_tie_breaks_to_smaller_class(self):
        features = np.array([[1.0, 0.0], [0.0, 1.0]])
        arch = Architecture((2, 2, 2), activation=Activation(ActivationKind.IDENTITY))
        model = build_model([np.eye(2)] * 3, arch, features, [1, 2], 2, TrainConfig(seed=0))
        z = np.array([2.0, 2.0])  # distance 2 to both stored features
        pred = classify_l0(model, EncodedFeature(z, np.ones(2, dtype=np.uint8), 0.0))
        assert pred.label == 1

    def test_equals_support_hamming_for_disjoint_supports(self):
        # with generic (never equal) nonzero values, the coordinate-difference
        # count is the support Hamming distance plus the support overlap; for
        # disjoint supports the two coincide exactly
        rng = Rng(31)
        for _ in range(20):
            sup = rng.permutation(8)
            a = np.zeros(8)
            b = np.zeros(8)
            a[sup[:3]] = 1.0 + rng.random(3)
            b[sup[3:6]] = 1.0 + rng.random(3)
            l0 = int(np.sum(np.abs(a - b) > 1e-8))
            hamming = int(np.sum((np.abs(a) > 1e-8) != (np.abs(b) > 1e-8)))
            assert l0 == hamming == 6

    def test_hamming_plus_overlap_identity(self):
        rng = Rng(32)
        for _ in range(20):
            a = np.zeros(10)
            b = np.zeros(10)
            a[rng.permutation(10)[:4]] = 1.0 + rng.random(4)
            b[rng.permutation(10)[:4]] = 2.5 + rng.random(4)  # never equal to a's values
            sa = np.abs(a) > 1e-8
            sb = np.abs(b) > 1e-8
            l0 = int(np.sum(np.abs(a - b) > 1e-8))
            assert l0 == int(np.sum(sa != sb)) + int(np.sum(sa & sb))


class TestClassifyL1:
    def test_hand_summed_distances(self):
        model = toy_model()
        test_z = np.array([0.0, 0.0, 0.4, 0.0, 0.1, 0.0])
        assert np.isclose(np.sum(np.abs(test_z - CLASS1[:, 0])), 0.3)
        assert np.isclose(np.sum(np.abs(test_z - CLASS2[:, 0])), 1.9)
        pred = classify_l1(model, EncodedFeature(test_z, (test_z != 0).astype(np.uint8), 0.0))
        assert pred.label == 1

    def test_identical_zero_distance(self):
        model = toy_model()
        z = CLASS1[:, 2].copy()
        pred = classify_l1(model, EncodedFeature(z, (z != 0).astype(np.uint8), 0.0))
        assert pred.distance == 0.0

    def test_scaling_invariance_of_argmin(self):
        model = toy_model()
        z = np.array([0.0, 0.0, 0.4, 0.0, 0.1, 0.0])
        pred = classify_l1(model, EncodedFeature(z, (z != 0).astype(np.uint8), 0.0))
        scaled = toy_model()
        scaled.features = scaled.features * 3.0
        pred_scaled = classify_l1(scaled, EncodedFeature(z * 3.0, (z != 0).astype(np.uint8), 0.0))
        assert pred.label == pred_scaled.label

    def test_permutation_equivariance(self):
        model = toy_model()
        z = np.array([0.0, 0.0, 0.4, 0.0, 0.1, 0.0])
        base = classify_l1(model, EncodedFeature(z, (z != 0).astype(np.uint8), 0.0))
        perm = Rng(5).permutation(7)
        shuffled = toy_model()
        shuffled.features = shuffled.features[:, perm]
        shuffled.labels = shuffled.labels[perm]
        pred = classify_l1(shuffled, EncodedFeature(z, (z != 0).astype(np.uint8), 0.0))
        assert pred.label == base.label
        assert pred.per_class_score == base.per_class_score


class TestEncodeTest:
    def test_deterministic(self, deep_factor_model):
        data, model = deep_factor_model
        a = encode_test(model, data.x[:, 0])
        b = encode_test(model, data.x[:, 0])
        assert np.array_equal(a.z, b.z)
        assert a.reconstruction_residual == b.reconstruction_residual

    def test_support_size_within_budget(self, deep_factor_model):
        data, model = deep_factor_model
        budget = resolve_budget(model.config, model.architecture)
        for j in range(0, data.n_samples, 5):
            f = encode_test(model, data.x[:, j])
            assert int(f.support.sum()) <= budget.per_column_s
            assert np.array_equal(f.support, (np.abs(f.z) > 1e-8).astype(np.uint8))

    def test_training_columns_within_twice_training_residual(self, mixture_bundle):
        from rsddl.joint import DropMode

        train = mixture_bundle["train"]
        model = mixture_bundle["models"][DropMode.NONE]
        recon = compose_reconstruction(model.dictionaries, model.features, model.architecture.activation)
        col_res = np.linalg.norm(train.x - recon, axis=0)
        for j in range(0, train.n_samples, 4):
            f = encode_test(model, train.x[:, j])
            assert f.reconstruction_residual <= 2.0 * max(col_res[j], 1e-12)

    def test_training_columns_typical_ratio_tanh_model(self, deep_factor_model):
        # relaxations restart at ones for test encoding, so individual tanh
        # columns can drift past 2x; the bulk stays close to training quality
        data, model = deep_factor_model
        recon = compose_reconstruction(model.dictionaries, model.features, model.architecture.activation)
        col_res = np.linalg.norm(data.x - recon, axis=0)
        ratios = []
        for j in range(data.n_samples):
            f = encode_test(model, data.x[:, j])
            ratios.append(f.reconstruction_residual / max(col_res[j], 1e-12))
        assert np.median(ratios) <= 2.0
        assert np.mean(np.asarray(ratios) <= 2.0) >= 0.8

    def test_full_budget_never_worse_on_deep_fit(self, deep_factor_model):
        # relaxed-constraint property: on a fixed deep-layer target, the
        # exhaustive budget's pursuit residual is minimal over all budgets
        from rsddl.numerics import pinv
        from rsddl.sparse import omp_columns

        data, model = deep_factor_model
        d1, d2, d3 = model.dictionaries
        act = model.architecture.activation
        a3 = model.architecture.feature_dim
        for j in (0, 7, 21):
            x = data.x[:, [j]]
            z1 = pinv(d1) @ x
            z2 = pinv(d2) @ act.inverse(z1)
            target = act.inverse(z2 - np.ones_like(z2))
            residuals = [
                np.linalg.norm(target - d3 @ omp_columns(d3, target, s)) for s in range(1, a3 + 1)
            ]
            assert all(residuals[-1] <= r + 1e-9 for r in residuals)

    def test_dimension_mismatch(self, deep_factor_model):
        _, model = deep_factor_model
        with pytest.raises(ValueError):
            encode_test(model, np.ones(3))

    def test_requires_three_layers(self):
        arch = Architecture((2, 2), activation=Activation(ActivationKind.IDENTITY))
        from rsddl.joint import Model

        model = Model(
            dictionaries=[np.eye(2), np.eye(2)],
            architecture=arch,
            features=np.eye(2),
            labels=np.array([1, 2]),
            class_means=np.eye(2),
            class_supports=np.eye(2, dtype=np.uint8),
            config=TrainConfig(seed=0),
        )
        with pytest.raises(ValueError):
            encode_test(model, np.ones(2))


class TestBatch:
    def test_predict_batch_and_format(self, deep_factor_model):
        data, model = deep_factor_model
        preds = predict_batch(model, data.x[:, :4], rule="l1")
        assert len(preds) == 4
        text = format_prediction_lines(preds)
        lines = text.strip().split("\n")
        assert len(lines) == 4
        first = lines[0].split("\t")
        assert first[0] == "0"
        assert first[2] == "l1"
        float(first[3])  # distance parses

    def test_unknown_rule(self, deep_factor_model):
        data, model = deep_factor_model
        with pytest.raises(ValueError):
            predict_batch(model, data.x[:, :2], rule="l2")
