"""Windowing grid, the four per-window features, and the feature scaler."""

import math

import numpy as np
import pytest

from emgait import features
from emgait.errors import (
    EmptyInput,
    NotFitted,
    ShapeMismatch,
    SignalTooShort,
)
from emgait.features import (
    FEATURE_NAMES,
    WINDOW_LEN,
    WINDOW_STRIDE,
    FeatureMatrix,
    FeatureScaler,
    WindowTensor,
    ZcThresholds,
    compute_thresholds,
    concat_features,
    concat_windows,
    extract_features,
    mad,
    make_windows,
    mav,
    std_dev,
    zc,
)
from emgait.labeling import LabelStream


def _stream(valid, labels=None):
    valid = np.asarray(valid, dtype=bool)
    if labels is None:
        labels = np.zeros(len(valid), dtype=np.int8)
    return LabelStream(labels=np.asarray(labels, dtype=np.int8),
                       gait_percent=np.zeros(len(valid)),
                       valid_mask=valid, rate_hz=500.0)


def _signal(n, seed=0):
    return np.random.default_rng(seed).standard_normal((n, 5))


class TestWindowGrid:
    @pytest.mark.parametrize("length,expected", [
        (40, 1),
        (56, 2),
        (104, 5),
        (10000, 623),
    ])
    def test_count_all_valid(self, length, expected):
        tensor = make_windows(_signal(length), _stream(np.ones(length)), "s")
        assert len(tensor) == expected
        assert expected == (length - 40) // 16 + 1

    def test_window_contents_and_stride(self):
        x = _signal(104, seed=2)
        tensor = make_windows(x, _stream(np.ones(104)), "s")
        for i in range(5):
            start = 16 * i
            assert np.array_equal(tensor.data[i], x[start:start + 40])
        assert tensor.window_len_samples == WINDOW_LEN
        assert tensor.stride_samples == WINDOW_STRIDE
        assert np.array_equal(tensor.data[1][:24], tensor.data[0][16:])

    def test_all_invalid_gives_zero_windows(self):
        tensor = make_windows(_signal(100), _stream(np.zeros(100)), "s")
        assert len(tensor) == 0
        assert tensor.data.shape == (0, 40, 5)

    def test_grid_restarts_per_valid_run(self):
        # runs of 60 and 45 valid samples -> 2 + 1 windows anchored at the
        # run starts, never crossing the gap
        valid = np.zeros(120, dtype=bool)
        valid[5:65] = True
        valid[70:115] = True
        x = _signal(120, seed=3)
        tensor = make_windows(x, _stream(valid), "s")
        assert len(tensor) == 3
        assert np.array_equal(tensor.data[0], x[5:45])
        assert np.array_equal(tensor.data[1], x[21:61])
        assert np.array_equal(tensor.data[2], x[70:110])

    def test_run_shorter_than_window_skipped(self):
        valid = np.zeros(100, dtype=bool)
        valid[0:39] = True
        valid[50:95] = True
        tensor = make_windows(_signal(100), _stream(valid), "s")
        assert len(tensor) == 1

    def test_center_label(self):
        labels = np.zeros(60, dtype=np.int8)
        labels[20] = 1  # center of the first window (start 0 + 20)
        tensor = make_windows(_signal(60), _stream(np.ones(60), labels), "s")
        assert tensor.labels[0] == 1
        assert tensor.labels[1] == 0  # second window centers at 36

    def test_majority_label(self):
        labels = np.zeros(40, dtype=np.int8)
        labels[:21] = 1
        tensor = make_windows(_signal(40), _stream(np.ones(40), labels), "s",
                              label_mode="majority")
        assert tensor.labels[0] == 1
        labels[:21] = 0
        labels[:20] = 1  # exact tie goes to the lower label
        tensor = make_windows(_signal(40), _stream(np.ones(40), labels), "s",
                              label_mode="majority")
        assert tensor.labels[0] == 0

    def test_too_short_and_shape_errors(self):
        with pytest.raises(SignalTooShort):
            make_windows(_signal(39), _stream(np.ones(39)), "s")
        with pytest.raises(ShapeMismatch):
            make_windows(_signal(50)[:, :4], _stream(np.ones(50)), "s")
        with pytest.raises(ShapeMismatch):
            make_windows(_signal(50), _stream(np.ones(49)), "s")
        with pytest.raises(ValueError):
            make_windows(_signal(50), _stream(np.ones(50)), "s",
                         label_mode="first")

    def test_subject_id_propagates(self):
        tensor = make_windows(_signal(72), _stream(np.ones(72)), "subj9")
        assert set(tensor.subject_ids) == {"subj9"}


class TestScalarFeatures:
    def test_zc_examples(self):
        alternating = np.resize([1.0, -1.0], 40)
        assert zc(alternating, 0.0) == 39
        assert zc(np.abs(_signal(40)[:, 0]) + 0.1, 0.0) == 0
        assert zc(alternating, 3.0) == 0  # |delta| = 2 below threshold
        assert zc(alternating, 2.0) == 39  # boundary: |delta| >= theta

    def test_zc_rejects_negative_theta(self):
        with pytest.raises(ValueError):
            zc(np.ones(40), -0.1)

    def test_zc_literal_mode(self):
        alternating = np.resize([1.0, -1.0], 40)
        # literal half-sum of sgn terms: 39 sign changes -> -19.5
        assert zc(alternating, 0.0, literal=True) == -19.5
        assert zc(alternating, 3.0, literal=True) == 0.0
        assert zc(np.ones(40), 0.0, literal=True) == 19.5

    def test_zc_scale_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            w = rng.standard_normal(40)
            theta = 0.03 * np.mean(np.abs(w))
            for scale in (0.5, 2.0, 117.0):
                assert zc(scale * w, scale * theta) == zc(w, theta)

    def test_mav_examples(self):
        assert mav(np.zeros(40)) == 0.0
        assert mav(np.array([-2.0, 2.0])) == 2.0

    def test_std_examples(self):
        assert std_dev(np.full(40, 3.7)) == 0.0
        assert std_dev(np.array([0.0, 2.0])) == 1.0

    def test_mad_examples(self):
        assert mad(np.full(40, -1.2)) == 0.0
        assert mad(np.array([0.0, 2.0])) == 1.0

    def test_mad_never_exceeds_std(self):
        rng = np.random.default_rng(11)
        windows = rng.standard_normal((10_000, 40))
        sd = np.std(windows, axis=1)
        m = np.mean(windows, axis=1)
        md = np.mean(np.abs(windows - m[:, None]), axis=1)
        assert np.all(md <= sd + 1e-12)
        for w in windows[:100]:
            assert mad(w) <= std_dev(w) + 1e-12


class TestThresholds:
    def test_plus_minus_one_channel(self):
        signs = np.resize([1.0, -1.0], 200)
        samples = np.tile(signs[:, None], (1, 5))
        thr = compute_thresholds(samples)
        assert np.allclose(thr.theta, 0.03)

    def test_zero_channel(self):
        samples = np.zeros((100, 5))
        samples[:, 0] = 1.0
        thr = compute_thresholds(samples)
        assert thr.theta[0] == pytest.approx(0.03)
        assert np.all(thr.theta[1:] == 0.0)

    def test_mask_restricts_the_mean(self):
        samples = np.ones((10, 5))
        samples[5:] = 9.0
        mask = np.zeros(10, dtype=bool)
        mask[:5] = True
        thr = compute_thresholds(samples, mask)
        assert np.allclose(thr.theta, 0.03)

    def test_empty_selection(self):
        thr = compute_thresholds(np.ones((10, 5)), np.zeros(10, dtype=bool))
        assert np.all(thr.theta == 0.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ZcThresholds(theta=np.array([0.1, -0.1, 0.0, 0.0, 0.0]))
        with pytest.raises(ShapeMismatch):
            ZcThresholds(theta=np.zeros(4))


def _oracle_features(tensor, theta, literal=False):
    """Straight-line loop recomputation of every feature from its formula."""
    rows = []
    for w in tensor.data:
        row = []
        for c in range(5):
            x = [float(v) for v in w[:, c]]
            n = len(x)
            if literal:
                cnt = 0.5 * sum(
                    float(np.sign(x[i] * x[i + 1]))
                    * (1.0 if abs(x[i] - x[i + 1]) >= theta[c] else 0.0)
                    for i in range(n - 1)
                )
            else:
                cnt = sum(
                    1 for i in range(n - 1)
                    if x[i] * x[i + 1] < 0 and abs(x[i] - x[i + 1]) >= theta[c]
                )
            mean = sum(x) / n
            row.append(float(cnt))
            row.append(sum(abs(v) for v in x) / n)
            row.append(math.sqrt(sum((v - mean) ** 2 for v in x) / n))
            row.append(sum(abs(v - mean) for v in x) / n)
        rows.append(row)
    return np.asarray(rows)


class TestExtractFeatures:
    def test_zero_tensor_row(self):
        tensor = WindowTensor(data=np.zeros((1, 40, 5)),
                              labels=np.zeros(1, dtype=np.int8),
                              subject_ids=np.array(["s"]))
        out = extract_features(tensor, ZcThresholds(np.zeros(5)))
        assert out.X.shape == (1, 20)
        assert np.all(out.X == 0.0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(21)
        tensor = WindowTensor(data=rng.standard_normal((64, 40, 5)),
                              labels=rng.integers(0, 2, 64).astype(np.int8),
                              subject_ids=np.array(["s"] * 64))
        theta = 0.03 * np.mean(np.abs(rng.standard_normal((500, 5))), axis=0)
        thresholds = ZcThresholds(theta)
        got = extract_features(tensor, thresholds)
        want = _oracle_features(tensor, theta)
        assert np.allclose(got.X, want, atol=1e-12)
        assert got.feature_names == FEATURE_NAMES
        assert np.array_equal(got.labels, tensor.labels)
        assert np.array_equal(got.subject_ids, tensor.subject_ids)

    def test_literal_mode_matches_loop_oracle(self):
        rng = np.random.default_rng(22)
        tensor = WindowTensor(data=rng.standard_normal((16, 40, 5)),
                              labels=np.zeros(16, dtype=np.int8),
                              subject_ids=np.array(["s"] * 16))
        theta = np.full(5, 0.05)
        got = extract_features(tensor, ZcThresholds(theta), zc_literal=True)
        want = _oracle_features(tensor, theta, literal=True)
        assert np.allclose(got.X, want, atol=1e-12)

    def test_column_order_is_channel_major(self):
        assert FEATURE_NAMES[:4] == ("VL_ZC", "VL_MAV", "VL_SD", "VL_MAD")
        assert FEATURE_NAMES[4] == "BF_ZC"
        assert len(FEATURE_NAMES) == 20
        # perturb one channel only; exactly its 4 columns move
        rng = np.random.default_rng(8)
        base = rng.standard_normal((4, 40, 5))
        bumped = base.copy()
        bumped[:, :, 2] *= 3.0
        thr = ZcThresholds(np.zeros(5))
        ids = np.array(["s"] * 4)
        a = extract_features(WindowTensor(base, np.zeros(4, np.int8), ids), thr)
        b = extract_features(WindowTensor(bumped, np.zeros(4, np.int8), ids), thr)
        moved = np.any(a.X != b.X, axis=0)
        assert set(np.flatnonzero(moved)) <= {8, 9, 10, 11}
        assert moved[9] and moved[10] and moved[11]

    def test_empty_tensor_rejected(self):
        tensor = WindowTensor(data=np.zeros((0, 40, 5)),
                              labels=np.zeros(0, dtype=np.int8),
                              subject_ids=np.zeros(0, dtype=str))
        with pytest.raises(EmptyInput):
            extract_features(tensor, ZcThresholds(np.zeros(5)))

    def test_zc_range_bounds(self):
        rng = np.random.default_rng(31)
        tensor = WindowTensor(data=rng.standard_normal((200, 40, 5)),
                              labels=np.zeros(200, dtype=np.int8),
                              subject_ids=np.array(["s"] * 200))
        out = extract_features(tensor, ZcThresholds(np.full(5, 0.01)))
        zc_cols = out.X[:, 0::4]
        assert np.all(zc_cols >= 0) and np.all(zc_cols <= 39)
        assert np.all(out.X[:, 1::4] >= 0)  # MAV


class TestScaler:
    def test_fit_set_is_standardized(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((300, 20)) * 4.0 + 2.0
        out = FeatureScaler().fit_transform(X)
        assert np.all(np.abs(np.mean(out, axis=0)) < 1e-9)
        assert np.allclose(np.std(out, axis=0), 1.0, atol=1e-9)

    def test_constant_column_maps_to_zero(self):
        X = np.ones((50, 3))
        X[:, 1] = np.arange(50)
        out = FeatureScaler().fit_transform(X)
        assert np.all(out[:, 0] == 0.0)
        assert np.all(out[:, 2] == 0.0)
        assert np.std(out[:, 1]) == pytest.approx(1.0)

    def test_held_out_rows_finite(self):
        rng = np.random.default_rng(15)
        scaler = FeatureScaler().fit(rng.standard_normal((100, 20)))
        out = scaler.transform(rng.standard_normal((30, 20)) + 5.0)
        assert np.all(np.isfinite(out))
        assert abs(np.mean(out)) > 1.0  # shifted data does not re-center

    def test_not_fitted(self):
        with pytest.raises(NotFitted):
            FeatureScaler().transform(np.ones((2, 3)))
        with pytest.raises(NotFitted):
            FeatureScaler().to_dict()

    def test_dict_round_trip(self):
        rng = np.random.default_rng(16)
        X = rng.standard_normal((40, 6))
        scaler = FeatureScaler().fit(X)
        clone = FeatureScaler.from_dict(scaler.to_dict())
        assert np.array_equal(clone.transform(X), scaler.transform(X))

    def test_column_mismatch(self):
        scaler = FeatureScaler().fit(np.ones((5, 4)))
        with pytest.raises(ShapeMismatch):
            scaler.transform(np.ones((5, 3)))


class TestConcat:
    def test_concat_windows(self):
        a = make_windows(_signal(56, 1), _stream(np.ones(56)), "a")
        b = make_windows(_signal(40, 2), _stream(np.ones(40)), "b")
        merged = concat_windows([a, b])
        assert len(merged) == 3
        assert list(merged.subject_ids) == ["a", "a", "b"]
        with pytest.raises(EmptyInput):
            concat_windows([])

    def test_concat_features(self):
        rng = np.random.default_rng(6)
        parts = [
            FeatureMatrix(rng.standard_normal((2, 20)),
                          np.zeros(2, np.int8), np.array(["a", "a"])),
            FeatureMatrix(rng.standard_normal((1, 20)),
                          np.ones(1, np.int8), np.array(["b"])),
        ]
        merged = concat_features(parts)
        assert merged.X.shape == (3, 20)
        assert list(merged.labels) == [0, 0, 1]
        with pytest.raises(EmptyInput):
            concat_features([])
