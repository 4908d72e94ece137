"""Dataset plumbing: class-conditioned synthetic generation and file I/O.

A dataset directory holds a human-readable ``manifest.json`` plus
``records.jsonl`` with one sample per line. Floats are serialized at
full round-trip precision, so generate -> load reproduces values
bit-exactly and diffs stay readable.

The synthetic recipe draws, per class, a peaked token-frequency profile
and a Gaussian image-feature centroid; samples scatter around them with
controlled noise, which keeps classes separable at low noise (checked
by the nearest-centroid probe).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mmsent.text import CLS_ID

MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.jsonl"
DATASET_VERSION = 1
FIRST_CONTENT_ID = 2  # 0 = class token, 1 = mask token


class DatasetError(ValueError):
    """A dataset file is missing, malformed, or inconsistent with its manifest."""


@dataclass
class SampleRecord:
    """One labeled multimodal example."""

    id: int
    label: int
    tokens: list[int]
    image: np.ndarray  # (channels, height, width)


@dataclass
class DatasetManifest:
    version: int
    kind: str
    count: int
    classes: int
    channels: int
    height: int
    width: int
    seq_len: int
    vocab_size: int
    seed: int
    image_noise: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def generate_synthetic(
    out_dir,
    classes: int = 3,
    per_class: int = 30,
    seed: int = 42,
    channels: int = 8,
    height: int = 4,
    width: int = 4,
    seq_len: int = 12,
    vocab_size: int = 256,
    image_noise: float = 0.3,
    token_concentration: float = 0.05,
) -> tuple[DatasetManifest, list[SampleRecord]]:
    """Write a seeded synthetic dataset and return what was written."""
    if per_class < 4:
        raise DatasetError(f"per_class must be >= 4, got {per_class}")
    if min(classes, channels, height, width, seq_len) < 1 or classes < 2:
        raise DatasetError("invalid dims: need classes >= 2 and positive extents")
    if vocab_size <= FIRST_CONTENT_ID:
        raise DatasetError(f"vocab_size must exceed {FIRST_CONTENT_ID} reserved ids")
    if image_noise < 0:
        raise DatasetError(f"image_noise must be non-negative, got {image_noise}")

    rng = np.random.default_rng(seed)
    content_vocab = vocab_size - FIRST_CONTENT_ID
    profiles = [rng.dirichlet(np.full(content_vocab, token_concentration)) for _ in range(classes)]
    centroids = [rng.normal(0.0, 1.0, (channels, height, width)) for _ in range(classes)]

    records: list[SampleRecord] = []
    idx = 0
    for label in range(classes):
        for _ in range(per_class):
            content = rng.choice(content_vocab, size=seq_len - 1, p=profiles[label]) + FIRST_CONTENT_ID
            image = centroids[label] + image_noise * rng.normal(0.0, 1.0, (channels, height, width))
            records.append(SampleRecord(id=idx, label=label, tokens=[CLS_ID] + content.tolist(), image=image))
            idx += 1

    manifest = DatasetManifest(
        version=DATASET_VERSION, kind="synthetic", count=len(records), classes=classes,
        channels=channels, height=height, width=width, seq_len=seq_len,
        vocab_size=vocab_size, seed=seed, image_noise=image_noise,
    )
    write_dataset(out_dir, manifest, records)
    return manifest, records


def write_dataset(out_dir, manifest: DatasetManifest, records: list[SampleRecord]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    lines = []
    for rec in records:
        lines.append(json.dumps({
            "id": rec.id,
            "label": rec.label,
            "tokens": rec.tokens,
            "image": [float(v) for v in rec.image.reshape(-1)],
        }))
    (out / RECORDS_NAME).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> tuple[DatasetManifest, list[SampleRecord]]:
    """Read and validate a dataset directory; violations name the record id."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise DatasetError(f"no manifest at {manifest_path}")
    try:
        raw = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise DatasetError(f"manifest {manifest_path} is not valid JSON: {err}")
    try:
        manifest = DatasetManifest(**raw)
    except TypeError as err:
        raise DatasetError(f"manifest {manifest_path} has wrong fields: {err}")
    if manifest.version != DATASET_VERSION:
        raise DatasetError(f"manifest version {manifest.version} unsupported (expected {DATASET_VERSION})")

    records_path = root / RECORDS_NAME
    if not records_path.exists():
        raise DatasetError(f"no records file at {records_path}")

    flat_len = manifest.channels * manifest.height * manifest.width
    records: list[SampleRecord] = []
    for lineno, line in enumerate(records_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise DatasetError(f"records line {lineno} is not valid JSON")
        rec_id = obj.get("id", f"<line {lineno}>")
        for key in ("id", "label", "tokens", "image"):
            if key not in obj:
                raise DatasetError(f"record {rec_id}: missing field {key!r}")
        if not 0 <= obj["label"] < manifest.classes:
            raise DatasetError(f"record {rec_id}: label {obj['label']} not below {manifest.classes} classes")
        tokens = obj["tokens"]
        if not tokens or tokens[0] != CLS_ID:
            raise DatasetError(f"record {rec_id}: position 0 must be the class token id {CLS_ID}")
        if any(not 0 <= t < manifest.vocab_size for t in tokens):
            raise DatasetError(f"record {rec_id}: token id out of vocab range {manifest.vocab_size}")
        if len(tokens) != manifest.seq_len:
            raise DatasetError(f"record {rec_id}: {len(tokens)} tokens, manifest says {manifest.seq_len}")
        image = np.asarray(obj["image"], dtype=np.float64)
        if image.size != flat_len:
            raise DatasetError(
                f"record {rec_id}: image has {image.size} values, manifest dims need {flat_len}"
            )
        if not np.all(np.isfinite(image)):
            raise DatasetError(f"record {rec_id}: image contains non-finite values")
        records.append(SampleRecord(
            id=int(obj["id"]), label=int(obj["label"]), tokens=[int(t) for t in tokens],
            image=image.reshape(manifest.channels, manifest.height, manifest.width),
        ))
    if len(records) != manifest.count:
        raise DatasetError(f"manifest declares {manifest.count} records, file holds {len(records)}")
    return manifest, records


def nearest_centroid_accuracy(records: list[SampleRecord], classes: int) -> float:
    """Learnability probe: classify raw image features by nearest class centroid."""
    if not records:
        raise DatasetError("cannot probe an empty dataset")
    feats = np.stack([r.image.reshape(-1) for r in records])
    labels = np.array([r.label for r in records])
    centroids = np.stack([feats[labels == k].mean(axis=0) for k in range(classes)])
    dists = ((feats[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float((dists.argmin(axis=1) == labels).mean())


def save_report(report_dict: dict, path) -> None:
    """Write a canonical, byte-stable JSON report."""
    Path(path).write_bytes(report_json_bytes(report_dict))


def report_json_bytes(report_dict: dict) -> bytes:
    return (json.dumps(report_dict, indent=2, sort_keys=True) + "\n").encode()


__all__ = [
    "DatasetError", "DatasetManifest", "SampleRecord", "generate_synthetic",
    "write_dataset", "load_dataset", "nearest_centroid_accuracy",
    "save_report", "report_json_bytes",
]
