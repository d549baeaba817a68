import numpy as np
import pytest

from stgcnn.data_model import FeatureKind
from stgcnn.synthgen import SynthSpec, generate


def test_default_shape_and_kinds():
    spec = SynthSpec(P=50)
    ds = generate(spec)
    assert ds.X.shape == (50, 20, 8)
    assert ds.schema.feature_kinds[:15] == (FeatureKind.CONTINUOUS,) * 15
    assert ds.schema.feature_kinds[15:] == (FeatureKind.BINARY,) * 5
    assert ds.ids[0] == "p00" and len(set(ds.ids)) == 50


def test_no_missingness():
    assert not np.isnan(generate(SynthSpec(P=30, missing_rate=0.0)).X).any()


def test_missing_rate_close_to_target():
    X = generate(SynthSpec(P=400, missing_rate=0.2, seed=1)).X
    n = X.size
    assert abs(np.isnan(X).mean() - 0.2) < 3 * np.sqrt(0.2 * 0.8 / n)


def test_seed_determinism():
    a, b = generate(SynthSpec(P=40, seed=3)), generate(SynthSpec(P=40, seed=3))
    np.testing.assert_array_equal(np.nan_to_num(a.X, nan=-9), np.nan_to_num(b.X, nan=-9))
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.labels, generate(SynthSpec(P=40, seed=4)).labels)


def test_planted_shift_visible_in_class_means():
    spec = SynthSpec(P=600, missing_rate=0.0, seed=2)
    ds = generate(spec)
    pos, neg = ds.X[ds.labels == 1], ds.X[ds.labels == 0]
    for f, t in spec.signal_pairs:
        assert pos[:, f, t].mean() - neg[:, f, t].mean() == pytest.approx(3.0, abs=0.4)
    # an unplanted cell stays centred in both classes
    assert abs(pos[:, 1, 0].mean() - neg[:, 1, 0].mean()) < 0.4


def test_binary_signal_raises_positive_rate():
    spec = SynthSpec(P=800, missing_rate=0.0, signal_pairs=((17, 3),), seed=5)
    ds = generate(spec)
    rate_pos = ds.X[ds.labels == 1, 17, 3].mean()
    rate_neg = ds.X[ds.labels == 0, 17, 3].mean()
    assert rate_pos > 0.9 and abs(rate_neg - 0.3) < 0.08


def test_zero_strength_leaves_classes_alike():
    ds = generate(SynthSpec(P=600, missing_rate=0.0, signal_strength=0.0, seed=2))
    diff = np.abs(ds.X[ds.labels == 1].mean(0) - ds.X[ds.labels == 0].mean(0))
    assert diff.max() < 0.4


def test_invalid_spec():
    with pytest.raises(ValueError):
        SynthSpec(missing_rate=1.0)
    with pytest.raises(ValueError):
        SynthSpec(signal_pairs=((25, 0),))
    with pytest.raises(ValueError):
        SynthSpec(signal_strength=-1)


def test_spec_json_roundtrip():
    spec = SynthSpec(P=10, signal_pairs=((1, 2),))
    assert SynthSpec.from_json(spec.to_json()) == spec
