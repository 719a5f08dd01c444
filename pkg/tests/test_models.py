import numpy as np
import pytest

from cavkdd import models
from cavkdd.errors import CompatibilityError, ShapeError
from cavkdd.layers import softmax, softmax_crossentropy
from cavkdd.tensor import Tensor, gradcheck


def closed_form_lengths(f):
    first_conv = f - 2
    first_pool = first_conv // 4
    second_conv = first_pool - 2
    second_pool = second_conv // 4
    return first_conv, first_pool, second_conv, second_pool


def test_hybrid_shape_arithmetic_f118():
    assert models.conv_block_lengths(118) == [118, 116, 29, 27, 6]
    model = models.build_cnn_lstm(118, seed=0)
    x = np.zeros((2, 118), dtype=np.float32)
    logits = model.forward(x, mode="train")
    assert logits.shape == (2, 3)


def test_minimum_legal_f39():
    assert models.conv_block_lengths(39) == [39, 37, 9, 7, 1]
    models.build_cnn_lstm(39)  # must not raise


def test_f20_underflows_with_computed_length():
    with pytest.raises(ShapeError, match="length"):
        models.build_cnn_lstm(20)


def test_shape_formula_property_f39_to_256():
    for f in range(39, 257):
        lengths = models.conv_block_lengths(f)
        assert tuple(lengths[1:]) == closed_form_lengths(f)
        model = models.build_cnn_lstm(f, seed=1)
        logits = model.forward(np.zeros((2, f), dtype=np.float32))
        assert logits.shape == (2, 3)


def test_dnn_parameter_count_closed_form():
    model = models.build_dnn(118)
    expected = 118 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3
    assert model.param_count() == expected == 11971
    assert model.descriptor.param_count == expected


def test_cnn_flatten_length_f118():
    model = models.build_cnn(118)
    head = dict(model.layers)["head"]
    assert head.in_features == 6 * 64 == 384


def test_lstm_baseline_shapes_on_tiny_input():
    model = models.build_lstm(1)
    logits = model.forward(np.zeros((4, 1), dtype=np.float32))
    assert logits.shape == (4, 3)


def test_forward_width_mismatch_names_lengths():
    model = models.build_dnn(10)
    with pytest.raises(CompatibilityError, match="10"):
        model.forward(np.zeros((2, 7), dtype=np.float32))


def test_fresh_model_probabilities_finite_and_stochastic():
    rng = np.random.default_rng(21)
    for kind in models.MODEL_KINDS:
        f = 43 if kind in ("cnn", "cnn_lstm") else 9
        model = models.build_model(kind, f, seed=5)
        x = rng.normal(size=(6, f)).astype(np.float32)
        logits = model.forward(x, mode="train")
        assert np.isfinite(logits.data).all()
        probs = softmax(logits.data)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_infer_mode_is_pure_and_bitwise_repeatable(feature_matrices):
    train, _ = feature_matrices
    f = train.values.shape[1]
    model = models.build_cnn_lstm(f, seed=3)
    x = train.values[:32]
    model.forward(x, mode="train")  # seed running stats
    first = model.forward(x, mode="infer").data
    second = model.forward(x, mode="infer").data
    assert np.array_equal(first, second)


def test_identical_rows_get_identical_logits():
    model = models.build_cnn_lstm(43, seed=7)
    rng = np.random.default_rng(22)
    row = rng.normal(size=(1, 43)).astype(np.float32)
    batch = np.vstack([row, row, row])
    logits = model.forward(batch, mode="infer").data
    assert np.array_equal(logits[0], logits[1])
    assert np.array_equal(logits[0], logits[2])


def test_batch_permutation_permutes_logits():
    model = models.build_cnn_lstm(43, seed=7)
    rng = np.random.default_rng(23)
    x = rng.normal(size=(8, 43)).astype(np.float32)
    perm = rng.permutation(8)
    direct = model.forward(x, mode="infer").data
    permuted = model.forward(x[perm], mode="infer").data
    assert np.array_equal(direct[perm], permuted)


def test_descriptor_roundtrip():
    model = models.build_cnn_lstm(118, seed=0)
    d = model.descriptor
    assert models.ArchitectureDescriptor.from_dict(d.to_dict()) == d


def test_builders_deterministic_per_seed():
    a = models.build_cnn_lstm(43, seed=9)
    b = models.build_cnn_lstm(43, seed=9)
    for (name_a, pa), (name_b, pb) in zip(a.parameters().items(),
                                          b.parameters().items()):
        assert name_a == name_b
        assert np.array_equal(pa.data, pb.data)


def test_end_to_end_gradcheck_each_architecture():
    rng = np.random.default_rng(24)
    feature_lengths = {"dnn": 10, "lstm": 10, "cnn": 43, "cnn_lstm": 43}
    for kind in models.MODEL_KINDS:
        f = feature_lengths[kind]
        model = models.build_model(kind, f, seed=31, dtype=np.float64)
        onehot = np.eye(3)[rng.integers(0, 3, size=4)]

        def loss_of(t, model=model, onehot=onehot):
            return softmax_crossentropy(model.forward(t, mode="train"), onehot)[0]

        err = gradcheck(loss_of, Tensor(rng.normal(size=(4, f))))
        assert err < 1e-4, f"{kind}: {err}"


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown model kind"):
        models.build_model("transformer", 10)
