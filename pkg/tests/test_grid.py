import numpy as np
import pytest

from vlmseg.classes.grid import ClassSet, ConfidenceMap, LabelMap, PixelMask, ProbMap
from vlmseg.errors import ConfigurationError, GridShapeError
from vlmseg.grid import argmax_labels, check_same_hw, check_tau, confidence, low_confidence_mask


def test_argmax_ties_go_to_lowest_index():
    probs = ProbMap(data=np.full((2, 2, 4), 0.25))
    assert np.all(argmax_labels(probs).data == 0)

    data = np.zeros((1, 2, 3))
    data[0, 0] = [0.2, 0.4, 0.4]
    data[0, 1] = [0.1, 0.1, 0.8]
    assert argmax_labels(ProbMap(data=data)).data.tolist() == [[1, 2]]


def test_confidence_is_max_probability():
    data = np.array([[[0.2, 0.8], [0.5, 0.5]]])
    assert confidence(ProbMap(data=data)).data.tolist() == [[0.8, 0.5]]


def test_low_confidence_is_strict():
    conf = ConfidenceMap(data=np.array([[0.69, 0.7, 0.71]]))
    assert low_confidence_mask(conf, 0.7, 4).data.tolist() == [[True, False, False]]


def test_tau_range_depends_on_class_count():
    assert check_tau(0.5, 4) == 0.5
    with pytest.raises(ConfigurationError, match=r"\(1/K, 1\]"):
        check_tau(0.25, 4)
    with pytest.raises(ConfigurationError):
        check_tau(1.5, 4)
    with pytest.raises(ConfigurationError):
        low_confidence_mask(ConfidenceMap(data=np.ones((2, 2))), 0.4, 2)


def test_prob_map_invariants():
    with pytest.raises(ValueError):
        ProbMap(data=np.full((2, 2, 3), 0.5))
    with pytest.raises(ValueError):
        ProbMap(data=np.ones((2, 2)))
    probs = ProbMap(data=np.full((2, 2, 2), 0.5))
    assert probs.num_classes == 2
    assert not probs.data.flags.writeable


def test_label_map_checks_range():
    assert LabelMap(data=[[0, 1], [2, 3]], num_classes=4).data.dtype == np.uint8
    with pytest.raises(ValueError):
        LabelMap(data=[[0, 4]], num_classes=4)
    with pytest.raises(ValueError):
        LabelMap(data=[[-1, 0]])


def test_confidence_map_is_positive():
    with pytest.raises(ValueError):
        ConfidenceMap(data=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ConfidenceMap(data=np.full((2, 2), 1.5))


def test_class_set_lookup_and_presets():
    classes = ClassSet(names=["Road", "water"])
    assert classes.index_of("ROAD") == 0
    assert classes.index_of(" water ") == 1
    assert classes.index_of("roads") is None
    with pytest.raises(ValueError):
        ClassSet(names=["road", "ROAD"])
    with pytest.raises(ValueError):
        ClassSet(names=[])

    potsdam = ClassSet.preset("potsdam")
    assert potsdam.count == 6
    assert potsdam.names[potsdam.excluded[0]] == "clutter"
    assert ClassSet.preset("synthetic", 5).count == 5
    with pytest.raises(KeyError):
        ClassSet.preset("cityscapes")


def test_same_hw_check():
    mask = PixelMask.full(2, 3)
    check_same_hw(mask, LabelMap(data=np.zeros((2, 3), dtype=np.uint8)))
    with pytest.raises(GridShapeError):
        check_same_hw(mask, PixelMask.full(3, 2))


def _random_probs(rng, shape=(8, 8, 4)):
    # small integer weights make ties common
    weights = rng.integers(1, 4, size=shape).astype(np.float64)
    return ProbMap(data=weights / weights.sum(axis=2, keepdims=True))


def test_argmax_and_confidence_match_a_pixel_loop():
    rng = np.random.default_rng(12)
    ties = 0
    for _ in range(50):
        probs = _random_probs(rng)
        labels, conf = argmax_labels(probs), confidence(probs)
        for y in range(8):
            for x in range(8):
                column = list(probs.data[y, x])
                best = max(column)
                first = column.index(best)
                ties += column.count(best) > 1
                assert labels.data[y, x] == first
                assert conf.data[y, x] == best
                assert probs.data[y, x, labels.data[y, x]] == conf.data[y, x]
    assert ties > 0


def test_low_confidence_mask_grows_with_tau():
    rng = np.random.default_rng(13)
    conf = confidence(_random_probs(rng))
    taus = [0.3, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0]
    masks = [low_confidence_mask(conf, tau, 4).data for tau in taus]
    for smaller, larger in zip(masks, masks[1:]):
        assert np.all(smaller <= larger)
    for tau, mask in zip(taus, masks):
        assert np.array_equal(mask, conf.data < tau)

    # pixels sitting exactly on the threshold are confident
    values = np.unique(conf.data)
    for tau in values[values > 0.25]:
        mask = low_confidence_mask(conf, float(tau), 4).data
        assert not mask[conf.data == tau].any()
        assert mask[conf.data < tau].all()
