"""Corpus generation, annotation files, and label rasterization."""
import os

import numpy as np
import pytest
from reference import max_concurrency_naive

from polyaed.datasets import (
    RECIPES,
    Annotation,
    CorpusSpec,
    dense_indices,
    generate_corpus,
    load_annotations,
    max_concurrency,
    prepare_corpus,
    rasterize_labels,
    read_corpus_meta,
    render_event,
    write_annotations,
)
from polyaed.features import FeatureConfig
from polyaed.labelspace import DEFAULT_CATEGORIES, CategorySet

SMALL = CorpusSpec(
    seed=7,
    categories=DEFAULT_CATEGORIES[:3],  # longest template 5 s
    train_recordings=2,
    val_recordings=1,
    test_recordings=1,
    duration_s=10.0,
    events_per_recording=5,
    max_polyphony=3,
)


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in sorted(files):
            path = os.path.join(dirpath, f)
            out[os.path.relpath(path, root)] = open(path, "rb").read()
    return out


class TestSpecValidation:
    def test_polyphony_range(self):
        with pytest.raises(ValueError, match=r"\[1, 6\]"):
            CorpusSpec(max_polyphony=7)

    def test_duration_must_exceed_templates(self):
        with pytest.raises(ValueError, match="longest"):
            CorpusSpec(duration_s=5.0)

    def test_unknown_category_has_no_recipe(self):
        with pytest.raises(ValueError, match="recipe"):
            CorpusSpec(categories=("dinosaur",))

    def test_every_default_category_has_a_recipe(self):
        assert set(DEFAULT_CATEGORIES) == set(RECIPES)


class TestGeneration:
    def test_same_seed_gives_identical_tree(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_corpus(SMALL, a)
        generate_corpus(SMALL, b)
        ta, tb = tree_bytes(a), tree_bytes(b)
        assert ta.keys() == tb.keys()
        for key in ta:
            assert ta[key] == tb[key], key

    def test_split_counts_follow_spec(self, tmp_path):
        names = generate_corpus(SMALL, tmp_path / "c")
        assert {k: len(v) for k, v in names.items()} == {"train": 2, "val": 1, "test": 1}

    def test_polyphony_cap_respected(self, tmp_path):
        spec = CorpusSpec(
            seed=11,
            # short templates keep the draw feasible while the cap still binds
            categories=("bird singing", "cat meowing", "glass smash", "gun shot"),
            train_recordings=3,
            val_recordings=1,
            test_recordings=1,
            duration_s=15.0,
            events_per_recording=10,
            max_polyphony=2,
        )
        generate_corpus(spec, tmp_path / "c")
        cats = CategorySet(spec.categories)
        for split in ("train", "val", "test"):
            split_dir = tmp_path / "c" / split
            for txt in sorted(split_dir.glob("*.txt")):
                anns = load_annotations(txt, cats)
                intervals = [(a.onset, a.offset) for a in anns]
                assert max_concurrency_naive(intervals) <= 2
                assert max_concurrency(anns) == max_concurrency_naive(intervals)

    def test_zero_events_gives_silence_and_empty_annotations(self, tmp_path):
        spec = CorpusSpec(
            seed=3,
            categories=DEFAULT_CATEGORIES[:3],
            train_recordings=1,
            val_recordings=1,
            test_recordings=1,
            duration_s=10.0,
            events_per_recording=0,
            max_polyphony=1,
        )
        generate_corpus(spec, tmp_path / "c")
        from polyaed.features import read_wav

        w, _ = read_wav(tmp_path / "c" / "train" / "rec000.wav")
        assert not w.any()
        assert load_annotations(tmp_path / "c" / "train" / "rec000.txt", CategorySet(spec.categories)) == []

    def test_unsatisfiable_polyphony_fails(self, tmp_path):
        spec = CorpusSpec(
            seed=5,
            categories=("gun shot",),  # 0.3-0.8 s events
            train_recordings=1,
            val_recordings=0,
            test_recordings=0,
            duration_s=1.0,
            events_per_recording=12,
            max_polyphony=1,
        )
        with pytest.raises(ValueError, match="polyphony"):
            generate_corpus(spec, tmp_path / "c")

    def test_annotations_roundtrip_losslessly(self, tmp_path):
        generate_corpus(SMALL, tmp_path / "c")
        cats = CategorySet(SMALL.categories)
        path = tmp_path / "c" / "train" / "rec000.txt"
        original = load_annotations(path, cats)
        assert original, "expected events in the generated recording"
        copy = tmp_path / "copy.txt"
        write_annotations(copy, original)
        assert load_annotations(copy, cats) == original

    def test_meta_echoes_spec(self, tmp_path):
        generate_corpus(SMALL, tmp_path / "c")
        meta = read_corpus_meta(tmp_path / "c")
        assert meta["seed"] == "7"
        assert meta["max_polyphony"] == "3"
        assert meta["categories"].split(", ") == list(SMALL.categories)

    def test_event_renderers_are_deterministic(self):
        for category in DEFAULT_CATEGORIES:
            a = render_event(np.random.default_rng(1), category, 1.5)
            b = render_event(np.random.default_rng(1), category, 1.5)
            np.testing.assert_array_equal(a, b)
            assert np.abs(a).max() <= 1.0 + 1e-9


class TestAnnotations:
    def test_space_and_tab_variants(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("0.00 1.50 dog barking\n2.0\t3.0\train\n")
        cats = CategorySet(DEFAULT_CATEGORIES)
        anns = load_annotations(path, cats)
        assert anns == [
            Annotation(0.0, 1.5, "dog barking"),
            Annotation(2.0, 3.0, "rain"),
        ]

    def test_reversed_times_error_names_line(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("0.0 1.0 rain\n2.0 1.0 rain\n")
        with pytest.raises(ValueError, match=":2:"):
            load_annotations(path, CategorySet(DEFAULT_CATEGORIES))

    def test_unknown_category_error(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("0.0 1.0 dinosaur\n")
        with pytest.raises(ValueError, match="unknown category"):
            load_annotations(path, CategorySet(DEFAULT_CATEGORIES))

    def test_malformed_line_error(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("0.0 rain\n")
        with pytest.raises(ValueError, match="expected 'onset offset label'"):
            load_annotations(path, CategorySet(DEFAULT_CATEGORIES))

    def test_sorted_by_onset(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("5.0 6.0 rain\n1.0 2.0 bus\n")
        anns = load_annotations(path, CategorySet(DEFAULT_CATEGORIES))
        assert [a.onset for a in anns] == [1.0, 5.0]

    def test_negative_onset_rejected(self):
        with pytest.raises(ValueError, match="onset"):
            Annotation(-0.5, 1.0, "rain")


class TestRasterize:
    CATS = CategorySet(("a", "b", "c"))

    def test_frame_center_rule(self):
        # centers at 0.02, 0.04, ...; event [0, 0.1) covers the first four
        labels = rasterize_labels([Annotation(0.0, 0.1, "a")], 10, self.CATS)
        np.testing.assert_array_equal(labels[:, 0], [1, 1, 1, 1, 0, 0, 0, 0, 0, 0])

    def test_empty_annotations_all_zero(self):
        labels = rasterize_labels([], 8, self.CATS)
        assert not labels.any()

    def test_overlapping_events_share_frames(self):
        anns = [Annotation(0.0, 0.2, "a"), Annotation(0.05, 0.2, "b")]
        labels = rasterize_labels(anns, 10, self.CATS)
        degree = labels.sum(axis=1)
        assert degree.max() == 2
        assert labels[4, 0] == 1 and labels[4, 1] == 1

    def test_extension_is_monotone(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            onset = round(float(rng.uniform(0.0, 1.0)), 3)
            offset = round(onset + float(rng.uniform(0.05, 1.0)), 3)
            wider = round(offset + float(rng.uniform(0.001, 0.5)), 3)
            base = rasterize_labels([Annotation(onset, offset, "b")], 120, self.CATS)
            extended = rasterize_labels([Annotation(onset, wider, "b")], 120, self.CATS)
            assert (extended[:, 1] >= base[:, 1]).all()

    def test_exact_boundary_inclusion(self):
        # onset exactly at a frame center includes it, offset excludes
        labels = rasterize_labels([Annotation(0.04, 0.08, "c")], 6, self.CATS)
        np.testing.assert_array_equal(labels[:, 2], [0, 1, 1, 0, 0, 0])


class TestFramesToAnnotations:
    CATS = CategorySet(("a", "b", "c"))

    def test_roundtrip_through_rasterization(self):
        from polyaed.datasets import frames_to_annotations

        rng = np.random.default_rng(13)
        for _ in range(100):
            pred = (rng.random((60, 3)) < 0.3).astype(np.int64)
            anns = frames_to_annotations(pred, self.CATS)
            np.testing.assert_array_equal(rasterize_labels(anns, 60, self.CATS), pred)

    def test_all_inactive_gives_no_events(self):
        from polyaed.datasets import frames_to_annotations

        assert frames_to_annotations(np.zeros((10, 3), dtype=int), self.CATS) == []

    def test_run_of_five_frames(self):
        from polyaed.datasets import frames_to_annotations

        pred = np.zeros((10, 3), dtype=int)
        pred[0:5, 1] = 1
        anns = frames_to_annotations(pred, self.CATS)
        assert anns == [Annotation(0.01, 0.11, "b")]


class TestPreparedCorpus:
    @pytest.fixture(scope="class")
    @staticmethod
    def corpus(tmp_path_factory):
        root = tmp_path_factory.mktemp("corpus")
        generate_corpus(SMALL, root)
        return prepare_corpus(root, FeatureConfig(segment_frames=64))

    def test_labels_align_with_frames(self, corpus):
        for split, recs in corpus.splits.items():
            assert recs, split
            for rec in recs:
                assert rec.values.shape[0] == rec.labels.shape[0]
                assert rec.labels.shape[1] == 3

    def test_training_statistics_standardize_training_split(self, corpus):
        pooled = np.vstack([r.values for r in corpus.splits["train"]])
        np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=1e-9)

    def test_dense_indices_counts(self, corpus):
        recs = corpus.splits["train"]
        index = dense_indices(recs, 64)
        expected = sum(r.values.shape[0] - 64 + 1 for r in recs)
        assert len(index) == expected
        rec, off = index[5]
        np.testing.assert_array_equal(rec.values[off : off + 64], index[5][0].values[off : off + 64])

    def test_short_recordings_skipped_with_warning(self, corpus):
        recs = corpus.splits["train"]
        with pytest.warns(UserWarning, match="skipped"):
            index = dense_indices(recs, 10_000)
        assert index == []

    def test_missing_meta_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="corpus.meta"):
            prepare_corpus(tmp_path)
