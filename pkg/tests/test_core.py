import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sprefine.core import (Instance, InstanceSet, LabelMap, SuperpixelFeatures, SuperpixelMap,
                           as_tensor, broadcast_labels, validate_partition)

from oracles import is_valid_partition


def test_valid_two_by_two():
    ok, problems = validate_partition(SuperpixelMap([[0, 0], [1, 1]], 2))
    assert ok and problems == []


def test_gap_in_ids_reports_empty_id():
    ok, problems = validate_partition(SuperpixelMap([[0, 0], [2, 2]], 3))
    assert not ok
    assert problems[0] == "id 1 empty"


def test_corner_pixels_disconnected():
    ids = np.ones((3, 3), dtype=int)
    ids[0, 0] = ids[2, 2] = 0
    ok, problems = validate_partition(SuperpixelMap(ids, 2))
    assert not ok
    assert problems[0].startswith("id 0 disconnected")


def test_id_beyond_count_and_negative_ids():
    assert not validate_partition(SuperpixelMap([[0, 3]], 2))[0]
    ok, problems = validate_partition(SuperpixelMap([[0, -1]], 1))
    assert not ok and "negative" in problems[0]


@settings(max_examples=200, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.integers(0, 3)))
def test_partition_verdict_matches_flood_fill(ids):
    count = int(ids.max()) + 1
    assert validate_partition(SuperpixelMap(ids, count))[0] == is_valid_partition(ids, count)


def test_maps_are_read_only():
    sp = SuperpixelMap([[0, 1]], 2)
    with pytest.raises(ValueError):
        sp.ids[0, 0] = 1


def test_label_map_rejects_out_of_range():
    with pytest.raises(ValueError):
        LabelMap([[0, 3]], 3)
    assert LabelMap([[0, 2]], 3).shape == (1, 2)


def test_instance_requires_pixels_and_score_range():
    with pytest.raises(ValueError):
        Instance(np.zeros((2, 2), bool), 0, 0.5)
    with pytest.raises(ValueError):
        Instance(np.ones((2, 2), bool), 0, 1.5)
    with pytest.raises(ValueError):
        InstanceSet([Instance(np.ones((2, 2)), 0), Instance(np.ones((3, 3)), 0)])


def test_superpixel_features_shape_checks():
    spf = SuperpixelFeatures([[1.0], [2.0]], [[0, 0], [1, 1]], [1, 3], (2, 2))
    assert spf.count == 2 and spf.dim == 1
    assert spf.diagonal == pytest.approx(np.sqrt(8))
    with pytest.raises(ValueError):
        SuperpixelFeatures([[1.0]], [[0, 0], [1, 1]], [1, 3], (2, 2))


def test_as_tensor_promotes_and_rejects_nan():
    assert as_tensor(np.zeros((2, 3))).shape == (1, 2, 3)
    with pytest.raises(ValueError):
        as_tensor(np.full((1, 1, 1), np.nan))
    with pytest.raises(ValueError):
        as_tensor(np.zeros(4))


def test_broadcast_labels():
    lm = broadcast_labels(SuperpixelMap([[0, 0], [1, 1]], 2), [2, 5], 6)
    np.testing.assert_array_equal(lm.labels, [[2, 2], [5, 5]])
