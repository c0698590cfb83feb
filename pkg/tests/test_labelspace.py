"""Power-set label codec: exhaustive and randomized round trips."""
import numpy as np
import pytest

from polyaed.labelspace import (
    DEFAULT_CATEGORIES,
    CategorySet,
    TaskDecomposition,
    class_count,
    decode_group,
    decode_predictions,
    encode_group,
    encode_targets,
    equal_split,
)


def test_default_category_table():
    cats = CategorySet()
    assert len(cats) == 16
    assert cats.names[0] == "alarms & sirens"
    assert cats.names[-1] == "thunder"
    assert cats.index("dog barking") == 7


def test_unknown_category_rejected():
    with pytest.raises(ValueError, match="unknown category"):
        CategorySet().index("dinosaur")


def test_duplicate_names_rejected():
    with pytest.raises(ValueError, match="unique"):
        CategorySet(("a", "a"))


class TestEqualSplit:
    def test_sixteen_singletons(self):
        d = equal_split(16, 16)
        assert d.num_tasks == 16
        assert all(len(g) == 1 for g in d.groups)
        assert class_count(d) == [2] * 16

    def test_two_groups_of_eight(self):
        d = equal_split(16, 2)
        assert d.groups[0] == tuple(range(8))
        assert d.groups[1] == tuple(range(8, 16))
        assert class_count(d) == [256, 256]

    def test_divisibility_enforced(self):
        with pytest.raises(ValueError, match="equally"):
            equal_split(16, 3)

    def test_class_counts_for_all_paper_splits(self):
        assert class_count(equal_split(16, 2)) == [256, 256]
        assert class_count(equal_split(16, 4)) == [16, 16, 16, 16]
        assert class_count(equal_split(16, 8)) == [4] * 8
        assert class_count(equal_split(16, 16)) == [2] * 16

    def test_undecomposed_class_count(self):
        single = TaskDecomposition(groups=(tuple(range(16)),))
        assert class_count(single) == [65536]


class TestDecompositionInvariants:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="more than one group"):
            TaskDecomposition(groups=((0, 1), (1, 2)), num_categories=3)

    def test_missing_category_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            TaskDecomposition(groups=((0,), (2,)), num_categories=3)

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            TaskDecomposition(groups=((0, 1), ()), num_categories=2)

    def test_explicit_uneven_partition_allowed(self):
        d = TaskDecomposition(groups=((0, 1, 2), (3,)), num_categories=4)
        assert class_count(d) == [8, 2]

    def test_class_counts_multiply_to_power_of_total(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            y = int(rng.integers(2, 12))
            cuts = sorted(rng.choice(np.arange(1, y), size=int(rng.integers(0, min(3, y - 1))), replace=False))
            groups, start = [], 0
            for c in list(cuts) + [y]:
                groups.append(tuple(range(start, c)))
                start = c
            d = TaskDecomposition(groups=tuple(groups), num_categories=y)
            assert int(np.prod(class_count(d), dtype=object)) == 2**y


class TestGroupCodec:
    def test_empty_set_is_class_zero(self):
        assert encode_group(set(), (0, 1, 2, 3)) == 0
        assert decode_group(0, (0, 1, 2, 3)) == set()

    def test_full_group_is_top_class(self):
        group = (4, 5, 6, 7)
        assert encode_group(set(group), group) == 15
        assert decode_group(15, group) == set(group)

    def test_documented_bit_order(self):
        # group (as, bc, bs, bus) = indices (0, 1, 2, 3); active {bc, bus}
        group = (0, 1, 2, 3)
        assert encode_group({1, 3}, group) == 10
        assert decode_group(10, group) == {1, 3}

    def test_non_members_ignored(self):
        assert encode_group({0, 9}, (0, 1)) == 1

    def test_out_of_range_index_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            decode_group(4, (0, 1))

    def test_exhaustive_roundtrip_eight_members(self):
        group = tuple(range(8))
        for idx in range(256):
            assert encode_group(decode_group(idx, group), group) == idx

    def test_exhaustive_roundtrip_all_small_groups(self):
        for size in range(1, 9):
            group = tuple(range(3, 3 + size))
            for idx in range(1 << size):
                assert encode_group(decode_group(idx, group), group) == idx


class TestMatrixCodec:
    def test_all_zero_labels(self):
        d = equal_split(16, 4)
        labels = np.zeros((5, 16), dtype=np.int64)
        np.testing.assert_array_equal(encode_targets(labels, d), np.zeros((5, 4)))

    def test_single_active_category_hits_one_group(self):
        d = equal_split(16, 4)
        labels = np.zeros((16, 16), dtype=np.int64)
        labels[np.arange(16), np.arange(16)] = 1
        enc = encode_targets(labels, d)
        assert ((enc != 0).sum(axis=1) == 1).all()

    def test_singleton_groups_expose_bits_directly(self):
        d = equal_split(16, 16)
        idx = np.zeros((1, 16), dtype=np.int64)
        idx[0, 5] = 1
        dec = decode_predictions(idx, d)
        expected = np.zeros((1, 16), dtype=np.int64)
        expected[0, 5] = 1
        np.testing.assert_array_equal(dec, expected)

    def test_non_binary_labels_rejected(self):
        d = equal_split(4, 2)
        with pytest.raises(ValueError, match="binary"):
            encode_targets(np.full((2, 4), 2), d)

    def test_out_of_range_prediction_rejected(self):
        d = equal_split(4, 2)
        with pytest.raises(ValueError, match="out of range"):
            decode_predictions(np.array([[4, 0]]), d)

    def test_roundtrip_thousand_random_matrices(self):
        rng = np.random.default_rng(1)
        d = equal_split(16, 4)
        for _ in range(1000):
            labels = rng.integers(0, 2, size=(int(rng.integers(1, 40)), 16))
            np.testing.assert_array_equal(
                decode_predictions(encode_targets(labels, d), d), labels
            )

    def test_roundtrip_under_uneven_partition(self):
        rng = np.random.default_rng(2)
        d = TaskDecomposition(groups=((2, 0), (1, 4, 3)), num_categories=5)
        for _ in range(200):
            labels = rng.integers(0, 2, size=(10, 5))
            np.testing.assert_array_equal(
                decode_predictions(encode_targets(labels, d), d), labels
            )


def test_table_order_is_contiguous_in_equal_split():
    d = equal_split(len(DEFAULT_CATEGORIES), 8)
    flat = [i for g in d.groups for i in g]
    assert flat == list(range(16))
