"""Dataset plumbing tests: generation determinism, round trips, validation errors."""

import json
from pathlib import Path

import numpy as np
import pytest

from mmsent.data import (
    DatasetError,
    generate_synthetic,
    load_dataset,
    nearest_centroid_accuracy,
)


def read_bytes(directory):
    root = Path(directory)
    return (root / "manifest.json").read_bytes(), (root / "records.jsonl").read_bytes()


class TestGenerateSynthetic:
    def test_zero_noise_collapses_classes_to_centroids(self, tmp_path):
        _, records = generate_synthetic(tmp_path, classes=3, per_class=4, seed=1, image_noise=0.0)
        by_label = {}
        for rec in records:
            by_label.setdefault(rec.label, []).append(rec.image)
        for images in by_label.values():
            for img in images[1:]:
                assert np.array_equal(img, images[0])

    def test_same_seed_same_bytes(self, tmp_path):
        generate_synthetic(tmp_path / "a", classes=3, per_class=5, seed=42)
        generate_synthetic(tmp_path / "b", classes=3, per_class=5, seed=42)
        assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")
        generate_synthetic(tmp_path / "c", classes=3, per_class=5, seed=43)
        assert read_bytes(tmp_path / "a") != read_bytes(tmp_path / "c")

    def test_default_noise_is_separable_for_nearest_centroid(self, tmp_path):
        manifest, records = generate_synthetic(tmp_path, classes=3, per_class=30, seed=42)
        assert nearest_centroid_accuracy(records, manifest.classes) >= 0.9

    def test_per_class_minimum(self, tmp_path):
        with pytest.raises(DatasetError):
            generate_synthetic(tmp_path, per_class=3)

    def test_records_carry_class_token_and_content_ids(self, tmp_path):
        manifest, records = generate_synthetic(tmp_path, classes=2, per_class=4, seed=0)
        for rec in records:
            assert rec.tokens[0] == 0
            assert all(2 <= t < manifest.vocab_size for t in rec.tokens[1:])


class TestLoadDataset:
    def test_round_trip_is_bit_exact(self, tmp_path):
        manifest, records = generate_synthetic(tmp_path, classes=3, per_class=4, seed=7)
        loaded_manifest, loaded = load_dataset(tmp_path)
        assert loaded_manifest == manifest
        assert len(loaded) == len(records)
        for a, b in zip(records, loaded):
            assert a.id == b.id and a.label == b.label and a.tokens == b.tokens
            assert np.array_equal(a.image, b.image)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="no manifest"):
            load_dataset(tmp_path)

    def test_truncated_record_names_its_id(self, tmp_path):
        generate_synthetic(tmp_path, classes=2, per_class=4, seed=1)
        records_path = tmp_path / "records.jsonl"
        lines = records_path.read_text().splitlines()
        obj = json.loads(lines[2])
        obj["image"] = obj["image"][:-5]
        lines[2] = json.dumps(obj)
        records_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="record 2"):
            load_dataset(tmp_path)

    def test_label_out_of_range_names_id(self, tmp_path):
        generate_synthetic(tmp_path, classes=2, per_class=4, seed=2)
        records_path = tmp_path / "records.jsonl"
        lines = records_path.read_text().splitlines()
        obj = json.loads(lines[5])
        obj["label"] = 9
        lines[5] = json.dumps(obj)
        records_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="record 5"):
            load_dataset(tmp_path)

    def test_non_finite_value_rejected(self, tmp_path):
        generate_synthetic(tmp_path, classes=2, per_class=4, seed=3)
        records_path = tmp_path / "records.jsonl"
        lines = records_path.read_text().splitlines()
        obj = json.loads(lines[0])
        obj["image"][0] = float("nan")
        lines[0] = json.dumps(obj)
        records_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError, match="non-finite"):
            load_dataset(tmp_path)

    def test_count_mismatch_rejected(self, tmp_path):
        generate_synthetic(tmp_path, classes=2, per_class=4, seed=4)
        records_path = tmp_path / "records.jsonl"
        lines = records_path.read_text().splitlines()
        records_path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DatasetError, match="declares 8"):
            load_dataset(tmp_path)

    def test_bad_manifest_version(self, tmp_path):
        generate_synthetic(tmp_path, classes=2, per_class=4, seed=5)
        manifest_path = tmp_path / "manifest.json"
        raw = json.loads(manifest_path.read_text())
        raw["version"] = 99
        manifest_path.write_text(json.dumps(raw))
        with pytest.raises(DatasetError, match="version"):
            load_dataset(tmp_path)
